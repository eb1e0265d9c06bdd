//! Ancestral sampling from the exact posterior over derivations.
//!
//! Nodes are visited top-down, left to right. Each one is drawn from its
//! marginal conditioned on every node already drawn, then clamped. Clamping a
//! node leaves the upward messages untouched, and once a parent is clamped
//! only its unsampled children see a changed downward message. That message
//! is recomputed from the parent's `m` productions, with the already-clamped
//! siblings restricted to their drawn values.

use rand::Rng;

use crate::bp::{normalize, FactorTree, UpwardMessages};
use crate::error::{Error, Result};
use crate::noise::BeliefField;
use crate::rhm::{SampleTree, Symbol};

/// Upward messages for a fixed evidence, reusable across many draws.
pub struct PosteriorSampler<'t, 'a> {
    tree: &'t FactorTree<'a>,
    up: UpwardMessages,
    root: Vec<f64>,
}

impl<'t, 'a> PosteriorSampler<'t, 'a> {
    pub fn new(tree: &'t FactorTree<'a>, beliefs: &BeliefField, root_prior: &[f64]) -> Result<Self> {
        let up = tree.upward_pass(beliefs)?;
        let depth = tree.params().depth() as usize;
        let mut root: Vec<f64> = up.root().iter().zip(root_prior).map(|(a, b)| a * b).collect();
        normalize(&mut root).ok_or(Error::DegenerateMessage { layer: depth, node: 0 })?;
        Ok(PosteriorSampler { tree, up, root })
    }

    /// Posterior marginal of the class.
    pub fn root_marginal(&self) -> &[f64] {
        &self.root
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<SampleTree> {
        let p = self.tree.params();
        let (v, s, m, depth) = (p.v() as usize, p.s() as usize, p.m() as usize, p.depth() as usize);
        let mut values: Vec<Vec<Symbol>> = vec![Vec::new(); depth + 1];
        let mut choices: Vec<Vec<u32>> = vec![Vec::new(); depth];
        values[depth] = vec![draw(&self.root, rng) as Symbol];

        let mut weights = vec![0.0; v];
        let mut live = vec![true; m];
        for layer in (1..=depth).rev() {
            let table = self.tree.table(layer as u32);
            let mut kids = Vec::with_capacity(values[layer].len() * s);
            let mut picks = Vec::with_capacity(values[layer].len());
            for (j, &y) in values[layer].iter().enumerate() {
                let first = y as usize * m;
                live.iter_mut().for_each(|l| *l = true);
                for k in 0..s {
                    weights.iter_mut().for_each(|w| *w = 0.0);
                    for (r, alive) in live.iter().enumerate() {
                        if !alive {
                            continue;
                        }
                        let tuple = table.tuple(first + r);
                        let mut w = 1.0;
                        for (k2, &x) in tuple.iter().enumerate().skip(k) {
                            w *= self.up.up(layer - 1, j * s + k2)[x as usize];
                        }
                        weights[tuple[k] as usize] += w;
                    }
                    normalize(&mut weights).ok_or(Error::DegenerateMessage { layer: layer - 1, node: j * s + k })?;
                    let x = draw(&weights, rng) as Symbol;
                    for (r, alive) in live.iter_mut().enumerate() {
                        *alive = *alive && table.tuple(first + r)[k] == x;
                    }
                    kids.push(x);
                }
                let rule = live.iter().position(|&a| a).expect("clamped tuple is a production");
                picks.push(rule as u32);
            }
            values[layer - 1] = kids;
            choices[layer - 1] = picks;
        }
        Ok(SampleTree::new(values, choices))
    }
}

/// One posterior draw with a uniform class prior.
pub fn posterior_sample<R: Rng + ?Sized>(tree: &FactorTree, beliefs: &BeliefField, rng: &mut R) -> Result<SampleTree> {
    let v = tree.params().v() as usize;
    PosteriorSampler::new(tree, beliefs, &vec![1.0 / v as f64; v])?.sample(rng)
}

/// Inverse-CDF draw from a normalized vector.
fn draw<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = k;
            if u < acc {
                return k;
            }
        }
    }
    last
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::epsilon_beliefs;
    use crate::rhm::{RhmParams, RuleSet};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn clean_evidence_returns_the_original_tree() {
        let p = RhmParams::new(6, 2, 3, 4).unwrap();
        let rs = RuleSet::from_seed(p, 2);
        let tree = FactorTree::new(&rs);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for class in 0..6 {
            let truth = rs.generate(class, &mut rng);
            let beliefs = epsilon_beliefs(truth.leaves(), 6, 0.0);
            for _ in 0..5 {
                assert_eq!(posterior_sample(&tree, &beliefs, &mut rng).unwrap(), truth);
            }
        }
    }

    #[test]
    fn samples_are_grammatical() {
        let p = RhmParams::new(8, 3, 4, 3).unwrap();
        let rs = RuleSet::from_seed(p, 12);
        let tree = FactorTree::new(&rs);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let truth = rs.generate(3, &mut rng);
        let sampler = PosteriorSampler::new(&tree, &epsilon_beliefs(truth.leaves(), 8, 0.6), &[0.125; 8]).unwrap();
        for _ in 0..200 {
            let x = sampler.sample(&mut rng).unwrap();
            assert!(rs.is_consistent(&x));
            for (l, picks) in x.rule_choices().iter().enumerate() {
                let table = rs.table(l as u32 + 1);
                for (j, &r) in picks.iter().enumerate() {
                    let y = x.layer(l + 1)[j] as usize;
                    assert_eq!(table.tuple(y * 4 + r as usize), &x.layer(l)[j * 3..j * 3 + 3]);
                }
            }
        }
    }

    #[test]
    fn draw_skips_zero_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(draw(&[0.0, 1.0, 0.0], &mut rng), 1);
        }
    }
}
