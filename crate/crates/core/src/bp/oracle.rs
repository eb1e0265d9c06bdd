//! Exhaustive enumeration of all derivations, for checking BP on tiny grammars.

use std::collections::HashMap;

use crate::bp::NodeMarginals;
use crate::error::{Error, Result};
use crate::noise::BeliefField;
use crate::rhm::{RuleSet, Symbol};

/// Guard on `v * m^(internal nodes)`.
pub const ORACLE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone)]
pub struct ExactPosterior {
    pub marginals: NodeMarginals,
    /// Posterior probability of every leaf string with nonzero weight.
    pub leaf_strings: HashMap<Vec<Symbol>, f64>,
    pub derivations: usize,
}

/// Posterior over derivations with a uniform class prior, weighting each
/// derivation by the product of the leaf beliefs at its leaf string.
pub fn brute_force_posterior(ruleset: &RuleSet, beliefs: &BeliefField) -> Result<ExactPosterior> {
    let p = ruleset.params();
    let (v, s, m, depth) = (p.v() as usize, p.s() as usize, p.m() as usize, p.depth() as usize);
    let internal = p.internal_nodes();
    let count = v as f64 * (m as f64).powf(internal as f64);
    if count > ORACLE_LIMIT {
        return Err(Error::TooLarge { derivations: count, limit: ORACLE_LIMIT });
    }
    if beliefs.rows() != p.layer_size(0) || beliefs.v() != v {
        return Err(Error::Shape("belief field does not match the grammar".into()));
    }
    let internal = internal as usize;

    let mut acc: Vec<Vec<f64>> = (0..=depth).map(|l| vec![0.0; p.layer_size(l as u32) * v]).collect();
    let mut leaf_strings: HashMap<Vec<Symbol>, f64> = HashMap::new();
    let mut total = 0.0;
    let mut derivations = 0usize;
    let mut choice = vec![0usize; internal];
    let mut values: Vec<Vec<Symbol>> = vec![Vec::new(); depth + 1];

    for class in 0..v as Symbol {
        choice.iter_mut().for_each(|c| *c = 0);
        loop {
            // expand top-down, consuming choices in layer-major, left-to-right order
            values[depth] = vec![class];
            let mut next = 0;
            for layer in (1..=depth).rev() {
                let table = ruleset.table(layer as u32);
                let mut kids = Vec::with_capacity(values[layer].len() * s);
                for &y in &values[layer] {
                    kids.extend_from_slice(table.tuple(y as usize * m + choice[next]));
                    next += 1;
                }
                values[layer - 1] = kids;
            }
            let weight: f64 = values[0].iter().enumerate().map(|(i, &x)| beliefs.row(i)[x as usize]).product::<f64>()
                / v as f64;
            derivations += 1;
            if weight > 0.0 {
                total += weight;
                for (l, vals) in values.iter().enumerate() {
                    for (j, &x) in vals.iter().enumerate() {
                        acc[l][j * v + x as usize] += weight;
                    }
                }
                *leaf_strings.entry(values[0].clone()).or_insert(0.0) += weight;
            }
            if !advance(&mut choice, m) {
                break;
            }
        }
    }
    if total <= 0.0 {
        return Err(Error::DegenerateMessage { layer: depth, node: 0 });
    }
    acc.iter_mut().flatten().for_each(|x| *x /= total);
    leaf_strings.values_mut().for_each(|x| *x /= total);
    Ok(ExactPosterior { marginals: NodeMarginals::from_layers(v, acc), leaf_strings, derivations })
}

/// Mixed-radix increment; false once every digit has wrapped.
fn advance(digits: &mut [usize], base: usize) -> bool {
    for d in digits.iter_mut() {
        *d += 1;
        if *d < base {
            return true;
        }
        *d = 0;
    }
    false
}
