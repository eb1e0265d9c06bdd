//! The Random Hierarchy Model: parameters, grammar instances and data generation.
//!
//! Symbols are stored 0-based (`0..v`) everywhere in the Rust API. The JSON
//! documents written by [`RuleSet::to_json`] and [`SampleTree::to_json`] use
//! 1-based symbols.

use std::collections::HashSet;

use num_bigint::BigUint;
use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Symbol = u32;

/// Largest admissible number of leaves, `s^L <= 2^40`.
pub const MAX_LEAVES: u64 = 1 << 40;

/// Tuple spaces up to this size are sampled by a partial shuffle of the full
/// enumeration; larger ones by rejection against a hash set.
pub const SHUFFLE_LIMIT: u64 = 1 << 20;

pub const RULESET_JSON_VERSION: u32 = 1;

/// Model parameters `(v, s, m, L)` together with the derived leaf count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RhmParams {
    v: u32,
    s: u32,
    m: u32,
    depth: u32,
    leaves: u64,
    tuples: u64,
}

impl RhmParams {
    pub fn new(v: u32, s: u32, m: u32, depth: u32) -> Result<Self> {
        if v < 1 || m < 1 || depth < 1 {
            return Err(Error::InvalidParams(format!(
                "v, m and L must be >= 1 (got v={v}, m={m}, L={depth})"
            )));
        }
        if s < 2 {
            return Err(Error::InvalidParams(format!("s must be >= 2 (got s={s})")));
        }
        let tuples = (v as u64)
            .checked_pow(s)
            .ok_or_else(|| Error::InvalidParams(format!("v^s = {v}^{s} overflows u64")))?;
        let mv = m as u64 * v as u64;
        if mv > tuples {
            return Err(Error::InvalidParams(format!(
                "m*v <= v^s violated: m*v = {mv} > v^s = {tuples}"
            )));
        }
        let leaves = (s as u64)
            .checked_pow(depth)
            .filter(|&d| d <= MAX_LEAVES)
            .ok_or_else(|| {
                Error::InvalidParams(format!("s^L <= 2^40 violated: s={s}, L={depth}"))
            })?;
        Ok(RhmParams { v, s, m, depth, leaves, tuples })
    }

    pub fn v(&self) -> u32 {
        self.v
    }
    pub fn s(&self) -> u32 {
        self.s
    }
    pub fn m(&self) -> u32 {
        self.m
    }
    /// Tree depth `L`.
    pub fn depth(&self) -> u32 {
        self.depth
    }
    /// Number of leaves `d = s^L`.
    pub fn d(&self) -> u64 {
        self.leaves
    }
    /// Size of the tuple space `v^s`.
    pub fn tuple_space(&self) -> u64 {
        self.tuples
    }

    /// Number of nodes at layer `layer` (layer 0 = leaves, layer L = root).
    pub fn layer_size(&self, layer: u32) -> usize {
        (self.s as usize).pow(self.depth - layer)
    }

    /// Number of internal (non-leaf) nodes, `(d - 1) / (s - 1)`.
    pub fn internal_nodes(&self) -> u64 {
        (self.leaves - 1) / (self.s as u64 - 1)
    }

    /// Fraction of child tuples used by the grammar, `(m v - 1) / (v^s - 1)`.
    ///
    /// Undefined for `v = 1`, where it is taken to be 1.
    pub fn f_exact_ratio(&self) -> Ratio<u64> {
        if self.tuples == 1 {
            return Ratio::from_integer(1);
        }
        Ratio::new(self.m as u64 * self.v as u64 - 1, self.tuples - 1)
    }

    /// `m / v^(s-1)`.
    pub fn f_approx_ratio(&self) -> Ratio<u64> {
        Ratio::new(self.m as u64, self.tuples / self.v as u64)
    }

    pub fn f_exact(&self) -> f64 {
        ratio_f64(self.f_exact_ratio())
    }

    pub fn f_approx(&self) -> f64 {
        ratio_f64(self.f_approx_ratio())
    }
}

fn ratio_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Production table of one layer: `m` child tuples for every parent symbol,
/// stored flat in parent-major order. Rule `r` has parent `r / m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleTable {
    s: usize,
    m: usize,
    children: Vec<Symbol>,
}

impl RuleTable {
    pub fn n_rules(&self) -> usize {
        self.children.len() / self.s
    }

    pub fn parent(&self, rule: usize) -> Symbol {
        (rule / self.m) as Symbol
    }

    pub fn tuple(&self, rule: usize) -> &[Symbol] {
        &self.children[rule * self.s..(rule + 1) * self.s]
    }

    /// The `m` productions of `parent`.
    pub fn productions(&self, parent: Symbol) -> impl Iterator<Item = &[Symbol]> {
        let start = parent as usize * self.m;
        (start..start + self.m).map(move |r| self.tuple(r))
    }

    /// Rules as `(parent, tuple)` pairs in storage order.
    pub fn rules(&self) -> impl Iterator<Item = (Symbol, &[Symbol])> {
        self.children
            .chunks_exact(self.s)
            .enumerate()
            .map(move |(r, t)| ((r / self.m) as Symbol, t))
    }
}

/// One grammar instance: `L` independently sampled rule tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleSet {
    params: RhmParams,
    /// `layers[l - 1]` maps layer-`l` symbols to tuples of layer `l - 1`.
    layers: Vec<RuleTable>,
    seed: u64,
}

impl RuleSet {
    /// Samples a grammar from a generator seeded with `seed`.
    pub fn from_seed(params: RhmParams, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::sample(params, &mut rng, seed)
    }

    /// Samples every layer's `m v` tuples uniformly without replacement from
    /// the `v^s` possible ones and deals them to parents in parent-major order.
    /// `seed` is recorded for provenance only.
    pub fn sample<R: Rng + ?Sized>(params: RhmParams, rng: &mut R, seed: u64) -> Self {
        let s = params.s as usize;
        let m = params.m as usize;
        let layers = (0..params.depth)
            .map(|_| {
                let codes = sample_tuple_codes(params.tuples, params.m as u64 * params.v as u64, rng);
                let mut children = Vec::with_capacity(codes.len() * s);
                for code in codes {
                    children.extend(decode_tuple(code, params.v, s));
                }
                RuleTable { s, m, children }
            })
            .collect();
        RuleSet { params, layers, seed }
    }

    /// Builds a grammar from explicit tables, `tables[l - 1][parent]` being the
    /// list of productions of `parent` at layer `l`.
    pub fn from_tables(params: RhmParams, tables: Vec<Vec<Vec<Vec<Symbol>>>>, seed: u64) -> Result<Self> {
        let (v, s, m) = (params.v as usize, params.s as usize, params.m as usize);
        if tables.len() != params.depth as usize {
            return Err(Error::InvalidRuleSet(format!(
                "expected {} layers, got {}",
                params.depth,
                tables.len()
            )));
        }
        let mut layers = Vec::with_capacity(tables.len());
        for (li, table) in tables.into_iter().enumerate() {
            if table.len() != v {
                return Err(Error::InvalidRuleSet(format!(
                    "layer {}: expected {v} parents, got {}",
                    li + 1,
                    table.len()
                )));
            }
            let mut children = Vec::with_capacity(v * m * s);
            let mut seen = HashSet::with_capacity(v * m);
            for (parent, prods) in table.into_iter().enumerate() {
                if prods.len() != m {
                    return Err(Error::InvalidRuleSet(format!(
                        "layer {}: parent {} has {} productions, expected {m}",
                        li + 1,
                        parent + 1,
                        prods.len()
                    )));
                }
                for tuple in prods {
                    if tuple.len() != s || tuple.iter().any(|&x| x as usize >= v) {
                        return Err(Error::InvalidRuleSet(format!(
                            "layer {}: malformed tuple {tuple:?}",
                            li + 1
                        )));
                    }
                    if !seen.insert(tuple.clone()) {
                        return Err(Error::InvalidRuleSet(format!(
                            "layer {}: tuple {tuple:?} produced by two rules",
                            li + 1
                        )));
                    }
                    children.extend(tuple);
                }
            }
            layers.push(RuleTable { s, m, children });
        }
        Ok(RuleSet { params, layers, seed })
    }

    pub fn params(&self) -> &RhmParams {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Rule table producing layer `layer - 1` from layer `layer` (`1..=L`).
    pub fn table(&self, layer: u32) -> &RuleTable {
        &self.layers[layer as usize - 1]
    }

    pub fn tables(&self) -> &[RuleTable] {
        &self.layers
    }

    /// Draws one datum of class `class`, expanding every node with a
    /// production chosen uniformly among its `m` options.
    pub fn generate<R: Rng + ?Sized>(&self, class: Symbol, rng: &mut R) -> SampleTree {
        let p = &self.params;
        assert!(class < p.v, "class {class} out of range 0..{}", p.v);
        let s = p.s as usize;
        let depth = p.depth as usize;
        let mut values = vec![Vec::new(); depth + 1];
        let mut choices = vec![Vec::new(); depth];
        values[depth] = vec![class];
        for layer in (1..=depth).rev() {
            let table = &self.layers[layer - 1];
            let parents = std::mem::take(&mut values[layer]);
            let mut kids = Vec::with_capacity(parents.len() * s);
            let mut picks = Vec::with_capacity(parents.len());
            for &y in &parents {
                let k = rng.random_range(0..p.m);
                kids.extend_from_slice(table.tuple(y as usize * p.m as usize + k as usize));
                picks.push(k);
            }
            values[layer] = parents;
            values[layer - 1] = kids;
            choices[layer - 1] = picks;
        }
        SampleTree { values, rule_choices: choices }
    }

    /// Checks that every parent/children group of `tree` is a production.
    pub fn is_consistent(&self, tree: &SampleTree) -> bool {
        let p = &self.params;
        let s = p.s as usize;
        if tree.values.len() != p.depth as usize + 1 {
            return false;
        }
        for layer in 0..=p.depth {
            if tree.values[layer as usize].len() != p.layer_size(layer) {
                return false;
            }
        }
        (1..=p.depth).all(|layer| {
            let table = self.table(layer);
            let kids = &tree.values[layer as usize - 1];
            tree.values[layer as usize].iter().enumerate().all(|(j, &y)| {
                let group = &kids[j * s..(j + 1) * s];
                table.productions(y).any(|t| t == group)
            })
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        let layers: Vec<_> = self
            .layers
            .iter()
            .map(|t| {
                let parents: Vec<Vec<Vec<Symbol>>> = (0..self.params.v)
                    .map(|y| t.productions(y).map(|tu| tu.iter().map(|x| x + 1).collect()).collect())
                    .collect();
                serde_json::json!({ "parent": parents })
            })
            .collect();
        serde_json::json!({
            "version": RULESET_JSON_VERSION,
            "v": self.params.v,
            "s": self.params.s,
            "m": self.params.m,
            "L": self.params.depth,
            "seed": self.seed,
            "layers": layers,
        })
    }

    pub fn from_json(doc: &serde_json::Value) -> Result<Self> {
        #[derive(Deserialize)]
        struct Layer {
            parent: Vec<Vec<Vec<Symbol>>>,
        }
        #[derive(Deserialize)]
        struct Doc {
            version: u32,
            v: u32,
            s: u32,
            m: u32,
            #[serde(rename = "L")]
            depth: u32,
            seed: u64,
            layers: Vec<Layer>,
        }
        let doc: Doc = serde_json::from_value(doc.clone())
            .map_err(|e| Error::InvalidRuleSet(format!("malformed document: {e}")))?;
        if doc.version != RULESET_JSON_VERSION {
            return Err(Error::InvalidRuleSet(format!("unsupported version {}", doc.version)));
        }
        let params = RhmParams::new(doc.v, doc.s, doc.m, doc.depth)?;
        let mut tables = Vec::with_capacity(doc.layers.len());
        for layer in doc.layers {
            let mut table = layer.parent;
            for tuple in table.iter_mut().flatten() {
                for x in tuple.iter_mut() {
                    *x = x.checked_sub(1).ok_or_else(|| {
                        Error::InvalidRuleSet("symbols are 1-based".to_string())
                    })?;
                }
            }
            tables.push(table);
        }
        Self::from_tables(params, tables, doc.seed)
    }
}

fn sample_tuple_codes<R: Rng + ?Sized>(space: u64, amount: u64, rng: &mut R) -> Vec<u64> {
    if space <= SHUFFLE_LIMIT {
        let mut all: Vec<u64> = (0..space).collect();
        let (chosen, _) = all.partial_shuffle(rng, amount as usize);
        chosen.to_vec()
    } else {
        let mut seen = HashSet::with_capacity(amount as usize);
        let mut out = Vec::with_capacity(amount as usize);
        while (out.len() as u64) < amount {
            let code = rng.random_range(0..space);
            if seen.insert(code) {
                out.push(code);
            }
        }
        out
    }
}

/// Base-`v` digits of `code`, most significant first.
fn decode_tuple(mut code: u64, v: u32, s: usize) -> Vec<Symbol> {
    let mut out = vec![0; s];
    for slot in out.iter_mut().rev() {
        *slot = (code % v as u64) as Symbol;
        code /= v as u64;
    }
    out
}

/// All variables of one datum: `values[l]` holds the `s^(L-l)` symbols of layer `l`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SampleTree {
    values: Vec<Vec<Symbol>>,
    /// `rule_choices[l - 1][j]` is the production index used at node `j` of layer `l`.
    rule_choices: Vec<Vec<u32>>,
}

impl SampleTree {
    pub fn new(values: Vec<Vec<Symbol>>, rule_choices: Vec<Vec<u32>>) -> Self {
        SampleTree { values, rule_choices }
    }

    pub fn class(&self) -> Symbol {
        self.values.last().expect("non-empty tree")[0]
    }

    pub fn leaves(&self) -> &[Symbol] {
        &self.values[0]
    }

    pub fn layer(&self, layer: usize) -> &[Symbol] {
        &self.values[layer]
    }

    pub fn layers(&self) -> &[Vec<Symbol>] {
        &self.values
    }

    pub fn rule_choices(&self) -> &[Vec<u32>] {
        &self.rule_choices
    }

    pub fn depth(&self) -> usize {
        self.values.len() - 1
    }

    pub fn to_json(&self) -> serde_json::Value {
        let one = |xs: &[Symbol]| xs.iter().map(|x| x + 1).collect::<Vec<_>>();
        serde_json::json!({
            "class": self.class() + 1,
            "leaves": one(self.leaves()),
            "layers": self.values.iter().map(|l| one(l)).collect::<Vec<_>>(),
        })
    }
}

/// Row-major `d x v` one-hot encoding of the leaves.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafEncoding {
    v: usize,
    data: Vec<f64>,
}

impl LeafEncoding {
    pub fn encode(sample: &SampleTree, v: u32) -> Self {
        let v = v as usize;
        let mut data = vec![0.0; sample.leaves().len() * v];
        for (i, &x) in sample.leaves().iter().enumerate() {
            data[i * v + x as usize] = 1.0;
        }
        LeafEncoding { v, data }
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.v
    }

    pub fn v(&self) -> usize {
        self.v
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.v..(i + 1) * self.v]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Index of the 1 in every row.
    pub fn decode(&self) -> Vec<Symbol> {
        (0..self.rows())
            .map(|i| self.row(i).iter().position(|&x| x == 1.0).expect("one-hot row") as Symbol)
            .collect()
    }
}

/// Number of distinct data per class, `m^((d - 1)/(s - 1))`.
pub fn count_data_per_class(params: &RhmParams) -> Result<BigUint> {
    let exponent = u32::try_from(params.internal_nodes()).map_err(|_| Error::TooLarge {
        derivations: params.internal_nodes() as f64,
        limit: u32::MAX as f64,
    })?;
    Ok(BigUint::from(params.m).pow(exponent))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> RhmParams {
        RhmParams::new(3, 2, 2, 2).unwrap()
    }

    #[test]
    fn derived_quantities() {
        let p = RhmParams::new(32, 2, 8, 10).unwrap();
        assert_eq!(p.d(), 1024);
        assert_eq!(p.f_approx_ratio(), Ratio::new(1, 4));
        assert_eq!(p.f_exact_ratio(), Ratio::new(255, 1023));

        let p = tiny();
        assert_eq!(p.d(), 4);
        assert_eq!(p.f_exact_ratio(), Ratio::new(5, 8));
    }

    #[test]
    fn rejects_too_many_rules() {
        let err = RhmParams::new(2, 2, 4, 1).unwrap_err();
        assert!(matches!(err, Error::InvalidParams(ref msg) if msg.contains("m*v")), "{err}");
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(RhmParams::new(3, 1, 1, 2).is_err());
        assert!(RhmParams::new(0, 2, 1, 2).is_err());
        assert!(RhmParams::new(3, 2, 1, 0).is_err());
        // 2^41 leaves
        assert!(RhmParams::new(2, 2, 1, 41).is_err());
        assert!(RhmParams::new(2, 2, 1, 40).is_ok());
    }

    #[test]
    fn sampling_is_deterministic_and_distinct() {
        let a = RuleSet::from_seed(tiny(), 7);
        let b = RuleSet::from_seed(tiny(), 7);
        assert_eq!(a, b);
        for table in a.tables() {
            let set: HashSet<_> = table.rules().map(|(_, t)| t.to_vec()).collect();
            assert_eq!(set.len(), 6);
            for y in 0..3 {
                assert_eq!(table.productions(y).count(), 2);
            }
        }
    }

    #[test]
    fn rejection_path_for_large_tuple_spaces() {
        // v^s = 2^21 > SHUFFLE_LIMIT
        let p = RhmParams::new(128, 3, 4, 1).unwrap();
        let rs = RuleSet::from_seed(p, 3);
        let set: HashSet<_> = rs.table(1).rules().map(|(_, t)| t.to_vec()).collect();
        assert_eq!(set.len(), 128 * 4);
        assert_eq!(rs, RuleSet::from_seed(p, 3));
    }

    #[test]
    fn production_frequencies_are_uniform() {
        let p = RhmParams::new(2, 2, 1, 1).unwrap();
        let mut counts = [0usize; 4];
        let n = 10_000;
        for seed in 0..n {
            let rs = RuleSet::from_seed(p, seed);
            let t = rs.table(1).tuple(0);
            counts[(t[0] * 2 + t[1]) as usize] += 1;
        }
        for c in counts {
            let freq = c as f64 / n as f64;
            assert!((freq - 0.25).abs() < 0.02, "{counts:?}");
        }
    }

    #[test]
    fn single_production_grammar_is_deterministic() {
        let p = RhmParams::new(4, 2, 1, 3).unwrap();
        let rs = RuleSet::from_seed(p, 11);
        for class in 0..4 {
            let a = rs.generate(class, &mut ChaCha8Rng::seed_from_u64(1));
            let b = rs.generate(class, &mut ChaCha8Rng::seed_from_u64(2));
            assert_eq!(a, b);
        }
    }

    #[test]
    fn generated_trees_are_consistent() {
        let p = RhmParams::new(8, 3, 4, 3).unwrap();
        let rs = RuleSet::from_seed(p, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let class = rng.random_range(0..8);
            let tree = rs.generate(class, &mut rng);
            assert!(rs.is_consistent(&tree));
            assert_eq!(tree.class(), class);
            assert_eq!(tree.leaves().len(), 27);
            for (l, ch) in tree.rule_choices().iter().enumerate() {
                assert_eq!(ch.len(), p.layer_size(l as u32 + 1));
            }
        }
    }

    #[test]
    fn reachable_strings_partition_by_class() {
        let rs = RuleSet::from_seed(tiny(), 21);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut per_class: Vec<HashSet<Vec<Symbol>>> = vec![HashSet::new(); 3];
        for class in 0..3 {
            for _ in 0..2000 {
                per_class[class as usize].insert(rs.generate(class, &mut rng).leaves().to_vec());
            }
        }
        for set in &per_class {
            assert_eq!(set.len(), 8);
        }
        for a in 0..3 {
            for b in a + 1..3 {
                assert!(per_class[a].is_disjoint(&per_class[b]));
            }
        }
    }

    #[test]
    fn onehot_rows() {
        let p = RhmParams::new(2, 2, 1, 1).unwrap();
        let tree = SampleTree::new(vec![vec![0, 1], vec![0]], vec![vec![0]]);
        let enc = LeafEncoding::encode(&tree, p.v());
        assert_eq!(enc.row(0), &[1.0, 0.0]);
        assert_eq!(enc.row(1), &[0.0, 1.0]);
        assert_eq!(enc.decode(), vec![0, 1]);
    }

    #[test]
    fn data_counts() {
        assert_eq!(count_data_per_class(&tiny()).unwrap(), BigUint::from(8u32));
        let p = RhmParams::new(5, 2, 1, 4).unwrap();
        assert_eq!(count_data_per_class(&p).unwrap(), BigUint::from(1u32));
        let p = RhmParams::new(32, 2, 8, 10).unwrap();
        assert_eq!(count_data_per_class(&p).unwrap(), BigUint::from(8u32).pow(1023));
    }

    #[test]
    fn json_round_trip() {
        let rs = RuleSet::from_seed(RhmParams::new(4, 2, 3, 3).unwrap(), 99);
        let doc = rs.to_json();
        assert_eq!(doc["version"], 1);
        assert_eq!(doc["L"], 3);
        assert_eq!(RuleSet::from_json(&doc).unwrap(), rs);
    }

    #[test]
    fn from_tables_rejects_shared_productions() {
        let p = RhmParams::new(2, 2, 1, 1).unwrap();
        let err = RuleSet::from_tables(p, vec![vec![vec![vec![0, 1]], vec![vec![0, 1]]]], 0);
        assert!(err.is_err());
    }
}
