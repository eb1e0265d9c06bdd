//! Leaf-belief initializations for message passing.
//!
//! Two corruption processes are supported: the continuous-time Gaussian
//! diffusion of the one-hot leaves (inverted exactly with Bayes' rule under a
//! uniform prior), and the ε-process where each leaf keeps its true symbol
//! with belief `1 - ε + ε/v` and spreads the rest uniformly.

use std::io::{self, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::format::fmt_real;
use crate::rhm::{LeafEncoding, Symbol};

/// Continuous schedule with `alpha_bar(t) = exp(-2t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSchedule {
    pub t_max: f64,
}

impl Default for DiffusionSchedule {
    fn default() -> Self {
        DiffusionSchedule { t_max: 5.0 }
    }
}

impl DiffusionSchedule {
    pub fn alpha_bar(&self, t: f64) -> f64 {
        (-2.0 * t).exp()
    }

    /// Inverse temperature of the Bayes posterior, `sqrt(alpha_bar) / (1 - alpha_bar)`.
    /// Infinite at `t = 0`.
    pub fn inverse_delta(&self, t: f64) -> f64 {
        let ab = self.alpha_bar(t);
        ab.sqrt() / -(-2.0 * t).exp_m1()
    }

    /// `Delta_t = (1 - alpha_bar) / sqrt(alpha_bar)`.
    pub fn delta(&self, t: f64) -> f64 {
        1.0 / self.inverse_delta(t)
    }
}

/// Diffused one-hot rows `x(t)`, row-major `d x v`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyLeaves {
    v: usize,
    t: f64,
    data: Vec<f64>,
}

impl NoisyLeaves {
    pub fn t(&self) -> f64 {
        self.t
    }
    pub fn v(&self) -> usize {
        self.v
    }
    pub fn rows(&self) -> usize {
        self.data.len() / self.v
    }
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.v..(i + 1) * self.v]
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn from_raw(v: usize, t: f64, data: Vec<f64>) -> Self {
        assert_eq!(data.len() % v, 0);
        NoisyLeaves { v, t, data }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        write_rows_csv(out, self.v, &self.data)
    }
}

/// `x(t) = sqrt(alpha_bar) x(0) + sqrt(1 - alpha_bar) eta`, eta i.i.d. standard normal.
pub fn diffuse_leaves<R: Rng + ?Sized>(
    encoding: &LeafEncoding,
    t: f64,
    schedule: &DiffusionSchedule,
    rng: &mut R,
) -> NoisyLeaves {
    let eta: Vec<f64> = (0..encoding.as_slice().len()).map(|_| rng.sample(StandardNormal)).collect();
    diffuse_with_noise(encoding, t, schedule, &eta)
}

/// Same as [`diffuse_leaves`] with the Gaussian noise supplied by the caller,
/// so one noise realization can be followed across several times.
pub fn diffuse_with_noise(
    encoding: &LeafEncoding,
    t: f64,
    schedule: &DiffusionSchedule,
    eta: &[f64],
) -> NoisyLeaves {
    assert_eq!(eta.len(), encoding.as_slice().len());
    let ab = schedule.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (-(-2.0 * t).exp_m1()).sqrt());
    let data = encoding
        .as_slice()
        .iter()
        .zip(eta)
        .map(|(&x0, &n)| if t == 0.0 { x0 } else { a * x0 + b * n })
        .collect();
    NoisyLeaves { v: encoding.v(), t, data }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BeliefOrigin {
    Diffusion { t: f64 },
    Epsilon { eps: f64 },
    Custom,
}

/// Per-leaf probability vectors used to start the upward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefField {
    v: usize,
    data: Vec<f64>,
    origin: BeliefOrigin,
}

impl BeliefField {
    /// Wraps raw rows, normalizing each one. Panics on negative or all-zero rows.
    pub fn from_rows(v: usize, mut data: Vec<f64>) -> Self {
        assert!(v > 0 && data.len().is_multiple_of(v), "data length must be a multiple of v");
        for row in data.chunks_exact_mut(v) {
            assert!(row.iter().all(|&x| x >= 0.0), "negative belief");
            let z: f64 = row.iter().sum();
            assert!(z > 0.0, "all-zero belief row");
            row.iter_mut().for_each(|x| *x /= z);
        }
        BeliefField { v, data, origin: BeliefOrigin::Custom }
    }

    pub fn v(&self) -> usize {
        self.v
    }
    pub fn rows(&self) -> usize {
        self.data.len() / self.v
    }
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.v..(i + 1) * self.v]
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
    pub fn origin(&self) -> BeliefOrigin {
        self.origin
    }

    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        write_rows_csv(out, self.v, &self.data)
    }
}

fn write_rows_csv<W: Write>(mut out: W, v: usize, data: &[f64]) -> io::Result<()> {
    write!(out, "leaf")?;
    for k in 1..=v {
        write!(out, ",b{k}")?;
    }
    writeln!(out)?;
    for (i, row) in data.chunks_exact(v).enumerate() {
        write!(out, "{}", i + 1)?;
        for &x in row {
            write!(out, ",{}", fmt_real(x))?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Exact posterior `p(x(0) = e_k | x(t))` for every leaf, a softmax of the
/// row at inverse temperature `1/Delta_t`. At `t = 0` the limit is the
/// one-hot vector at the row's argmax (lowest index on ties).
pub fn bayes_leaf_beliefs(noisy: &NoisyLeaves, schedule: &DiffusionSchedule) -> BeliefField {
    let v = noisy.v;
    let t = noisy.t;
    let mut data = vec![0.0; noisy.data.len()];
    if t == 0.0 {
        for (row, out) in noisy.data.chunks_exact(v).zip(data.chunks_exact_mut(v)) {
            out[argmax(row)] = 1.0;
        }
    } else {
        let beta = schedule.inverse_delta(t);
        for (row, out) in noisy.data.chunks_exact(v).zip(data.chunks_exact_mut(v)) {
            softmax_into(row, beta, out);
        }
    }
    BeliefField { v, data, origin: BeliefOrigin::Diffusion { t } }
}

fn softmax_into(row: &[f64], beta: f64, out: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (o, &x) in out.iter_mut().zip(row) {
        *o = (beta * (x - max)).exp();
        z += *o;
    }
    out.iter_mut().for_each(|o| *o /= z);
}

/// First index of the largest entry.
pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in row.iter().enumerate().skip(1) {
        if x > row[best] {
            best = k;
        }
    }
    best
}

/// ε-process beliefs: `1 - ε + ε/v` on the true leaf symbol, `ε/v` elsewhere.
pub fn epsilon_beliefs(leaves: &[Symbol], v: u32, eps: f64) -> BeliefField {
    assert!((0.0..=1.0).contains(&eps), "eps must lie in [0, 1]");
    let v = v as usize;
    let off = eps / v as f64;
    let on = 1.0 - eps + off;
    let mut data = vec![off; leaves.len() * v];
    for (i, &x) in leaves.iter().enumerate() {
        data[i * v + x as usize] = on;
    }
    BeliefField { v, data, origin: BeliefOrigin::Epsilon { eps } }
}

/// Effective noise level `ε = v <ν>`, where `<ν>` is the mean belief on the
/// wrong symbols pooled over all leaves of all given realizations.
pub fn effective_epsilon<'a, I>(realizations: I) -> f64
where
    I: IntoIterator<Item = (&'a BeliefField, &'a [Symbol])>,
{
    let mut wrong_mass = 0.0;
    let mut wrong_entries = 0usize;
    let mut v = 0usize;
    for (field, truth) in realizations {
        assert_eq!(field.rows(), truth.len(), "one true symbol per leaf");
        v = field.v;
        for (row, &x) in field.data.chunks_exact(field.v).zip(truth) {
            wrong_mass += 1.0 - row[x as usize];
            wrong_entries += field.v - 1;
        }
    }
    if wrong_entries == 0 {
        return 0.0;
    }
    (v as f64 * wrong_mass / wrong_entries as f64).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rhm::SampleTree;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn encoding(leaves: Vec<Symbol>, v: u32) -> LeafEncoding {
        let tree = SampleTree::new(vec![leaves, vec![0]], vec![]);
        LeafEncoding::encode(&tree, v)
    }

    #[test]
    fn schedule_shape() {
        let s = DiffusionSchedule::default();
        assert_eq!(s.alpha_bar(0.0), 1.0);
        assert!(s.alpha_bar(1.0) < s.alpha_bar(0.5));
        assert!(s.alpha_bar(50.0) > 0.0);
        assert!(s.inverse_delta(0.0).is_infinite());
    }

    #[test]
    fn zero_time_is_identity() {
        let enc = encoding(vec![0, 2, 1], 3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = diffuse_leaves(&enc, 0.0, &DiffusionSchedule::default(), &mut rng);
        assert_eq!(x.as_slice(), enc.as_slice());
    }

    #[test]
    fn diffusion_moments() {
        let enc = encoding(vec![1], 2);
        let sched = DiffusionSchedule::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 10_000;
        // alpha_bar = 0.5
        let t = 2f64.ln() / 2.0;
        assert!((sched.alpha_bar(t) - 0.5).abs() < 1e-15);
        let draws: Vec<f64> = (0..n).map(|_| diffuse_leaves(&enc, t, &sched, &mut rng).row(0)[1]).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 0.5f64.sqrt()).abs() < 3.0 * (0.5f64 / n as f64).sqrt());
        // sd of the sample variance ~ var * sqrt(2/n)
        assert!((var - 0.5).abs() < 3.0 * 0.5 * (2.0 / n as f64).sqrt(), "{var}");

        let late: Vec<f64> = (0..n).map(|_| diffuse_leaves(&enc, 30.0, &sched, &mut rng).row(0)[1]).collect();
        let mean = late.iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn bayes_hand_value() {
        // inverse temperature 2 (Delta = 0.5): find t with (1-a)/sqrt(a) = 0.5
        let sched = DiffusionSchedule::default();
        let a: f64 = ((-0.5 + (0.25f64 + 4.0).sqrt()) / 2.0).powi(2);
        let t = -a.ln() / 2.0;
        assert!((sched.delta(t) - 0.5).abs() < 1e-12);
        let noisy = NoisyLeaves::from_raw(2, t, vec![0.6, 0.1]);
        let b = bayes_leaf_beliefs(&noisy, &sched);
        // logit gap 0.5 / Delta = 1
        assert!((b.row(0)[0] - 0.7310585786300049).abs() < 1e-12);
        assert!((b.row(0)[1] - 0.2689414213699951).abs() < 1e-12);
    }

    #[test]
    fn bayes_limits() {
        let sched = DiffusionSchedule::default();
        let noisy = NoisyLeaves::from_raw(3, 0.0, vec![0.2, 0.7, 0.7]);
        assert_eq!(bayes_leaf_beliefs(&noisy, &sched).row(0), &[0.0, 1.0, 0.0]);

        let noisy = NoisyLeaves::from_raw(3, 40.0, vec![0.2, -1.7, 2.5]);
        for &b in bayes_leaf_beliefs(&noisy, &sched).row(0) {
            assert!((b - 1.0 / 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn epsilon_values() {
        let b = epsilon_beliefs(&[3, 0], 32, 0.5);
        assert_eq!(b.row(0)[3], 0.515625);
        assert_eq!(b.row(0)[0], 0.015625);
        assert_eq!(epsilon_beliefs(&[1], 4, 0.0).row(0), &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(epsilon_beliefs(&[1], 4, 1.0).row(0), &[0.25; 4]);
    }

    #[test]
    fn effective_epsilon_self_consistent() {
        let truth = vec![0, 5, 7, 2];
        let b = epsilon_beliefs(&truth, 8, 0.3);
        assert!((effective_epsilon([(&b, truth.as_slice())]) - 0.3).abs() < 1e-12);

        let enc = encoding(truth.clone(), 8);
        let sched = DiffusionSchedule::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let clean = bayes_leaf_beliefs(&diffuse_leaves(&enc, 0.0, &sched, &mut rng), &sched);
        assert_eq!(effective_epsilon([(&clean, truth.as_slice())]), 0.0);
    }

    #[test]
    fn csv_layout() {
        let b = epsilon_beliefs(&[1], 2, 0.0);
        let mut buf = Vec::new();
        b.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("leaf,b1,b2"));
        assert_eq!(lines.next(), Some("1,0.0000000000000000e0,1.0000000000000000e0"));
    }

    proptest! {
        #[test]
        fn beliefs_are_probability_vectors(xs in prop::collection::vec(-5.0f64..5.0, 12), t in 0.0f64..6.0) {
            let sched = DiffusionSchedule::default();
            let b = bayes_leaf_beliefs(&NoisyLeaves::from_raw(4, t, xs), &sched);
            for i in 0..b.rows() {
                let z: f64 = b.row(i).iter().sum();
                prop_assert!((z - 1.0).abs() < 1e-12);
                prop_assert!(b.row(i).iter().all(|&x| x >= 0.0));
            }
        }

        #[test]
        fn softmax_shift_invariance(xs in prop::collection::vec(-3.0f64..3.0, 6), c in -10.0f64..10.0, t in 0.05f64..4.0) {
            let sched = DiffusionSchedule::default();
            let a = bayes_leaf_beliefs(&NoisyLeaves::from_raw(6, t, xs.clone()), &sched);
            let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
            let b = bayes_leaf_beliefs(&NoisyLeaves::from_raw(6, t, shifted), &sched);
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
