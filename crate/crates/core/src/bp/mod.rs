//! Exact sum-product message passing on the grammar tree.
//!
//! Messages live in linear space and are renormalized at every node. Factor
//! sums iterate over the `m v` productions of a layer rather than over all
//! `v^(s+1)` assignments, so one factor costs `O(m v s)`.
//!
//! Node `j` of layer `l` has children `j*s .. j*s + s` in layer `l - 1`.

mod oracle;
mod sampler;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::BeliefField;
use crate::rhm::{RhmParams, RuleSet, RuleTable, SampleTree, Symbol};

pub use oracle::{brute_force_posterior, ExactPosterior, ORACLE_LIMIT};
pub use sampler::{posterior_sample, PosteriorSampler};

/// Factor graph view of a grammar: forward tables plus the inverse map from
/// a child tuple to the unique rule producing it.
#[derive(Debug, Clone)]
pub struct FactorTree<'a> {
    ruleset: &'a RuleSet,
    inverse: Vec<HashMap<Vec<Symbol>, usize>>,
}

impl<'a> FactorTree<'a> {
    pub fn new(ruleset: &'a RuleSet) -> Self {
        let inverse = ruleset
            .tables()
            .iter()
            .map(|t| t.rules().enumerate().map(|(r, (_, tuple))| (tuple.to_vec(), r)).collect())
            .collect();
        FactorTree { ruleset, inverse }
    }

    pub fn params(&self) -> &RhmParams {
        self.ruleset.params()
    }

    pub fn ruleset(&self) -> &RuleSet {
        self.ruleset
    }

    /// Rule index at layer `layer` (`1..=L`) whose production is `tuple`.
    pub fn rule_for(&self, layer: u32, tuple: &[Symbol]) -> Option<usize> {
        self.inverse[layer as usize - 1].get(tuple).copied()
    }

    pub fn table(&self, layer: u32) -> &RuleTable {
        self.ruleset.table(layer)
    }

    fn dims(&self) -> (usize, usize, usize) {
        let p = self.params();
        (p.v() as usize, p.s() as usize, p.depth() as usize)
    }

    /// Upward pass from the leaf beliefs to the root.
    pub fn upward_pass(&self, beliefs: &BeliefField) -> Result<UpwardMessages> {
        let (v, s, depth) = self.dims();
        let leaves = self.params().layer_size(0);
        if beliefs.v() != v || beliefs.rows() != leaves {
            return Err(Error::Shape(format!(
                "beliefs are {}x{}, expected {leaves}x{v}",
                beliefs.rows(),
                beliefs.v()
            )));
        }
        let mut up = Vec::with_capacity(depth + 1);
        up.push(beliefs.as_slice().to_vec());
        for layer in 1..=depth {
            let table = self.table(layer as u32);
            let below = &up[layer - 1];
            let n = below.len() / v / s;
            let mut msgs = vec![0.0; n * v];
            for (j, out) in msgs.chunks_exact_mut(v).enumerate() {
                let kids = &below[j * s * v..(j + 1) * s * v];
                for (y, tuple) in table.rules() {
                    let mut prod = 1.0;
                    for (k, &x) in tuple.iter().enumerate() {
                        prod *= kids[k * v + x as usize];
                    }
                    out[y as usize] += prod;
                }
                normalize(out).ok_or(Error::DegenerateMessage { layer, node: j })?;
            }
            up.push(msgs);
        }
        Ok(UpwardMessages { v, up })
    }

    /// Downward pass given the upward messages and a prior on the root.
    pub fn downward_pass(&self, up: UpwardMessages, root_prior: &[f64]) -> Result<MessageSet> {
        let (v, s, depth) = self.dims();
        if root_prior.len() != v {
            return Err(Error::Shape(format!("root prior has {} entries, expected {v}", root_prior.len())));
        }
        let mut prior = root_prior.to_vec();
        normalize(&mut prior).ok_or(Error::DegenerateMessage { layer: depth, node: 0 })?;
        let mut down: Vec<Vec<f64>> = vec![Vec::new(); depth + 1];
        down[depth] = prior.clone();
        for layer in (1..=depth).rev() {
            let table = self.table(layer as u32);
            let above = &down[layer];
            let below_up = &up.up[layer - 1];
            let mut msgs = vec![0.0; below_up.len()];
            for j in 0..above.len() / v {
                let parent = &above[j * v..(j + 1) * v];
                let kids_up = &below_up[j * s * v..(j + 1) * s * v];
                let out = &mut msgs[j * s * v..(j + 1) * s * v];
                for (y, tuple) in table.rules() {
                    let w = parent[y as usize];
                    if w == 0.0 {
                        continue;
                    }
                    for k in 0..s {
                        let mut prod = w;
                        for (k2, &x) in tuple.iter().enumerate() {
                            if k2 != k {
                                prod *= kids_up[k2 * v + x as usize];
                            }
                        }
                        out[k * v + tuple[k] as usize] += prod;
                    }
                }
                for (k, child) in out.chunks_exact_mut(v).enumerate() {
                    normalize(child).ok_or(Error::DegenerateMessage { layer: layer - 1, node: j * s + k })?;
                }
            }
            down[layer - 1] = msgs;
        }
        Ok(MessageSet { v, up: up.up, down, root_prior: prior })
    }

    /// Upward then downward pass with a uniform prior on the class.
    pub fn run(&self, beliefs: &BeliefField) -> Result<MessageSet> {
        let v = self.params().v() as usize;
        self.downward_pass(self.upward_pass(beliefs)?, &vec![1.0 / v as f64; v])
    }
}

/// Normalizes in place; `None` if the vector has no mass.
pub(crate) fn normalize(xs: &mut [f64]) -> Option<()> {
    let z: f64 = xs.iter().sum();
    if z > 0.0 && z.is_finite() {
        xs.iter_mut().for_each(|x| *x /= z);
        Some(())
    } else {
        None
    }
}

/// Upward messages only, `up[l]` flat over the nodes of layer `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct UpwardMessages {
    v: usize,
    up: Vec<Vec<f64>>,
}

impl UpwardMessages {
    pub fn up(&self, layer: usize, node: usize) -> &[f64] {
        &self.up[layer][node * self.v..(node + 1) * self.v]
    }

    pub fn root(&self) -> &[f64] {
        self.up.last().expect("at least one layer")
    }
}

/// Upward and downward messages at every node.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageSet {
    v: usize,
    up: Vec<Vec<f64>>,
    down: Vec<Vec<f64>>,
    root_prior: Vec<f64>,
}

impl MessageSet {
    pub fn v(&self) -> usize {
        self.v
    }
    pub fn depth(&self) -> usize {
        self.up.len() - 1
    }
    pub fn layer_size(&self, layer: usize) -> usize {
        self.up[layer].len() / self.v
    }
    pub fn up(&self, layer: usize, node: usize) -> &[f64] {
        &self.up[layer][node * self.v..(node + 1) * self.v]
    }
    pub fn down(&self, layer: usize, node: usize) -> &[f64] {
        &self.down[layer][node * self.v..(node + 1) * self.v]
    }
    pub fn root_prior(&self) -> &[f64] {
        &self.root_prior
    }

    /// Node marginals, `up ⊙ down` normalized. At the leaves `up` is the
    /// leaf belief itself.
    pub fn marginals(&self) -> Result<NodeMarginals> {
        let v = self.v;
        let mut layers = Vec::with_capacity(self.up.len());
        for (layer, (up, down)) in self.up.iter().zip(&self.down).enumerate() {
            let mut m: Vec<f64> = up.iter().zip(down).map(|(a, b)| a * b).collect();
            for (node, row) in m.chunks_exact_mut(v).enumerate() {
                normalize(row).ok_or(Error::DegenerateMessage { layer, node })?;
            }
            layers.push(m);
        }
        Ok(NodeMarginals { v, layers })
    }
}

/// Posterior marginal of every variable, `layers[l]` flat over nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeMarginals {
    v: usize,
    layers: Vec<Vec<f64>>,
}

impl NodeMarginals {
    pub fn from_layers(v: usize, layers: Vec<Vec<f64>>) -> Self {
        NodeMarginals { v, layers }
    }

    pub fn v(&self) -> usize {
        self.v
    }
    pub fn depth(&self) -> usize {
        self.layers.len() - 1
    }
    pub fn layer_size(&self, layer: usize) -> usize {
        self.layers[layer].len() / self.v
    }
    pub fn node(&self, layer: usize, node: usize) -> &[f64] {
        &self.layers[layer][node * self.v..(node + 1) * self.v]
    }
    pub fn layer(&self, layer: usize) -> &[f64] {
        &self.layers[layer]
    }

    pub fn max_abs_diff(&self, other: &NodeMarginals) -> f64 {
        self.layers
            .iter()
            .flatten()
            .zip(other.layers.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Per-layer reconstruction statistics against the clean tree.
    pub fn profile(&self, truth: &SampleTree) -> MarginalProfile {
        let layers = self
            .layers
            .iter()
            .enumerate()
            .map(|(l, marg)| LayerStats::measure(self.v, marg, truth.layer(l)))
            .collect();
        MarginalProfile { layers }
    }
}

/// Reconstruction statistics of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerStats {
    /// Mean marginal mass on the true symbol.
    pub mean_true_marginal: f64,
    /// Mean of the largest marginal entry.
    pub mean_max_marginal: f64,
    /// Fraction of nodes whose argmax (lowest index on ties) is the true symbol.
    pub frac_argmax_correct: f64,
    /// Nodes whose largest entry is shared by several symbols.
    pub argmax_ties: usize,
}

impl LayerStats {
    fn measure(v: usize, marginals: &[f64], truth: &[Symbol]) -> Self {
        let n = truth.len();
        assert_eq!(marginals.len(), n * v);
        let (mut tru, mut max, mut hits, mut ties) = (0.0, 0.0, 0usize, 0usize);
        for (row, &x) in marginals.chunks_exact(v).zip(truth) {
            let best = crate::noise::argmax(row);
            tru += row[x as usize];
            max += row[best];
            hits += usize::from(best == x as usize);
            ties += usize::from(row.iter().filter(|&&p| p == row[best]).count() > 1);
        }
        LayerStats {
            mean_true_marginal: tru / n as f64,
            mean_max_marginal: max / n as f64,
            frac_argmax_correct: hits as f64 / n as f64,
            argmax_ties: ties,
        }
    }
}

/// Statistics for layers `0..=L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalProfile {
    pub layers: Vec<LayerStats>,
}

impl MarginalProfile {
    pub fn class(&self) -> &LayerStats {
        self.layers.last().expect("non-empty profile")
    }
}

/// Full pipeline for one realization: BP, marginals, statistics.
pub fn reconstruction_profile(tree: &FactorTree, beliefs: &BeliefField, truth: &SampleTree) -> Result<MarginalProfile> {
    Ok(tree.run(beliefs)?.marginals()?.profile(truth))
}
