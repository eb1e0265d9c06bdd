//! Parallel sweeps behind every experiment kind.
//!
//! Every function here is deterministic in its seed: per-trial work runs in
//! parallel but results are gathered in trial order and reduced sequentially,
//! so the thread count never changes a bit of the output.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bp::{brute_force_posterior, FactorTree, LayerStats, MarginalProfile};
use crate::error::Result;
use crate::gaussian::{mode_flip_rate, DiscreteSchedule, FlipEstimate, MixtureParams};
use crate::harness::config::GaussianSpec;
use crate::harness::realization;
use crate::meanfield::{MeanField, MeanFieldState};
use crate::noise::{bayes_leaf_beliefs, diffuse_leaves, effective_epsilon, epsilon_beliefs, DiffusionSchedule};
use crate::rhm::{LeafEncoding, RhmParams};
use crate::seed::{stream_rng, value_key, Domain};
use rand::Rng;

/// One `(grid value, layer)` point of a reconstruction curve, averaged over
/// realizations (nodes pooled within a realization first).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub layer: usize,
    pub mean_true_marginal: f64,
    pub mean_max_marginal: f64,
    pub frac_argmax_correct: f64,
    pub argmax_ties: usize,
    pub n_real: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub x: f64,
    pub trial: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveSweep {
    /// Sorted by grid value, then layer.
    pub points: Vec<CurvePoint>,
    pub failures: Vec<CellFailure>,
    pub depth: usize,
}

impl CurveSweep {
    /// Curve of one layer over the grid, as `(x, stats)`.
    pub fn layer(&self, layer: usize) -> Vec<CurvePoint> {
        self.points.iter().filter(|p| p.layer == layer).copied().collect()
    }
}

fn aggregate(grid: &[f64], depth: usize, per_trial: Vec<Vec<Result<MarginalProfile>>>) -> CurveSweep {
    let mut points = Vec::with_capacity(grid.len() * (depth + 1));
    let mut failures = Vec::new();
    for (k, &x) in grid.iter().enumerate() {
        let mut ok: Vec<&MarginalProfile> = Vec::with_capacity(per_trial.len());
        for (trial, cells) in per_trial.iter().enumerate() {
            match &cells[k] {
                Ok(p) => ok.push(p),
                Err(e) => failures.push(CellFailure { x, trial, error: e.to_string() }),
            }
        }
        let n = ok.len();
        for layer in 0..=depth {
            let mean = |f: fn(&LayerStats) -> f64| {
                if n == 0 {
                    f64::NAN
                } else {
                    ok.iter().map(|p| f(&p.layers[layer])).sum::<f64>() / n as f64
                }
            };
            points.push(CurvePoint {
                x,
                layer,
                mean_true_marginal: mean(|s| s.mean_true_marginal),
                mean_max_marginal: mean(|s| s.mean_max_marginal),
                frac_argmax_correct: mean(|s| s.frac_argmax_correct),
                argmax_ties: ok.iter().map(|p| p.layers[layer].argmax_ties).sum(),
                n_real: n,
            });
        }
    }
    CurveSweep { points, failures, depth }
}

/// BP reconstruction under the ε-process. Trial `k` uses the grammar and
/// datum of [`realization`]`(params, seed, k)` for every ε.
pub fn denoise_eps(params: &RhmParams, eps_grid: &[f64], trials: usize, seed: u64) -> CurveSweep {
    let v = params.v();
    let per_trial = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let (rs, sample) = realization(params, seed, trial as u64);
            let tree = FactorTree::new(&rs);
            eps_grid
                .iter()
                .map(|&eps| {
                    let beliefs = epsilon_beliefs(sample.leaves(), v, eps);
                    Ok(tree.run(&beliefs)?.marginals()?.profile(&sample))
                })
                .collect()
        })
        .collect();
    aggregate(eps_grid, params.depth() as usize, per_trial)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSweep {
    pub curves: CurveSweep,
    /// Effective ε at every grid time, pooled over the same realizations.
    pub eps_eff: Vec<f64>,
}

/// BP reconstruction after diffusing the leaves to each grid time. The noise
/// of trial `k` at time `t` comes from the stream `(seed, t, k)`.
pub fn denoise_time(params: &RhmParams, t_grid: &[f64], trials: usize, seed: u64) -> TimeSweep {
    let sched = DiffusionSchedule::default();
    let per_trial: Vec<Vec<(Result<MarginalProfile>, f64)>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let (rs, sample) = realization(params, seed, trial as u64);
            let tree = FactorTree::new(&rs);
            let enc = LeafEncoding::encode(&sample, params.v());
            t_grid
                .iter()
                .map(|&t| {
                    let mut rng = stream_rng(seed, value_key(Domain::Noise, t), trial as u64);
                    let beliefs = bayes_leaf_beliefs(&diffuse_leaves(&enc, t, &sched, &mut rng), &sched);
                    let eps = effective_epsilon([(&beliefs, sample.leaves())]);
                    let profile = tree.run(&beliefs).and_then(|m| m.marginals()).map(|m| m.profile(&sample));
                    (profile, eps)
                })
                .collect()
        })
        .collect();
    // equal leaf counts per realization: the mean of per-realization values is the pooled mean
    let eps_eff = (0..t_grid.len())
        .map(|k| per_trial.iter().map(|t| t[k].1).sum::<f64>() / trials as f64)
        .collect();
    let profiles = per_trial.into_iter().map(|cells| cells.into_iter().map(|(p, _)| p).collect()).collect();
    TimeSweep { curves: aggregate(t_grid, params.depth() as usize, profiles), eps_eff }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsMapPoint {
    pub t: f64,
    pub eps_eff: f64,
    pub n_real: usize,
}

/// Effective ε(t) pooled over `realizations` diffused data.
pub fn eps_map(params: &RhmParams, t_grid: &[f64], realizations: usize, seed: u64) -> Vec<EpsMapPoint> {
    let sched = DiffusionSchedule::default();
    let per_real: Vec<Vec<f64>> = (0..realizations)
        .into_par_iter()
        .map(|trial| {
            let (_, sample) = realization(params, seed, trial as u64);
            let enc = LeafEncoding::encode(&sample, params.v());
            t_grid
                .iter()
                .map(|&t| {
                    let mut rng = stream_rng(seed, value_key(Domain::Noise, t), trial as u64);
                    let beliefs = bayes_leaf_beliefs(&diffuse_leaves(&enc, t, &sched, &mut rng), &sched);
                    effective_epsilon([(&beliefs, sample.leaves())])
                })
                .collect()
        })
        .collect();
    t_grid
        .iter()
        .enumerate()
        .map(|(k, &t)| EpsMapPoint {
            t,
            eps_eff: per_real.iter().map(|r| r[k]).sum::<f64>() / realizations as f64,
            n_real: realizations,
        })
        .collect()
}

pub fn meanfield_profiles(params: &RhmParams, eps_grid: &[f64]) -> Vec<MeanFieldState> {
    let mf = MeanField::new(params);
    eps_grid.iter().map(|&eps| mf.iterate_profiles(eps, params.depth() as usize)).collect()
}

pub fn gaussian_flip(spec: &GaussianSpec, trials: usize, seed: u64) -> Result<Vec<FlipEstimate>> {
    let mixture = MixtureParams::ones(spec.d, spec.sigma)?;
    let schedule = DiscreteSchedule::linear(spec.steps, spec.beta_start, spec.beta_end)?;
    let mut out = Vec::new();
    let mut last = None;
    for &frac in spec.t_fracs.values() {
        let t = (frac * spec.steps as f64).round() as usize;
        // distinct fractions can round to the same step
        if last == Some(t) {
            continue;
        }
        last = Some(t);
        out.push(mode_flip_rate(t, &mixture, &schedule, trials, seed));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub trial: usize,
    pub eps: f64,
    pub max_abs_deviation: f64,
}

/// BP against exhaustive enumeration on `trials` random (grammar, datum, ε).
pub fn oracle_check(params: &RhmParams, trials: usize, seed: u64) -> Result<Vec<OracleRow>> {
    (0..trials)
        .into_par_iter()
        .map(|trial| {
            let (rs, sample) = realization(params, seed, trial as u64);
            let mut rng = stream_rng(seed, Domain::Oracle as u64, trial as u64);
            let eps: f64 = rng.random_range(0.0..=1.0);
            let beliefs = epsilon_beliefs(sample.leaves(), params.v(), eps);
            let exact = brute_force_posterior(&rs, &beliefs)?;
            let bp = FactorTree::new(&rs).run(&beliefs)?.marginals()?;
            Ok(OracleRow { trial, eps, max_abs_deviation: bp.max_abs_diff(&exact.marginals) })
        })
        .collect()
}
