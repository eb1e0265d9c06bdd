//! Class-inference phase diagram: theory against exact BP on sampled grammars.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bp::FactorTree;
use crate::error::Result;
use crate::harness::realization;
use crate::meanfield::MeanField;
use crate::noise::epsilon_beliefs;
use crate::rhm::RhmParams;

/// Slack on the inference criterion, so that rounding at `ε = 1` (where both
/// sides equal `1/v`) is not read as inference.
pub const VERDICT_SLACK: f64 = 1e-9;

/// Inference holds when the class belief beats the leaf initialization
/// `1 - ε + ε/v`. At `ε = 0` both equal 1 under perfect reconstruction, which
/// counts as inference.
pub fn inference_verdict(class_p: f64, eps: f64, v: f64) -> bool {
    if eps == 0.0 {
        return class_p >= 1.0 - VERDICT_SLACK;
    }
    class_p > 1.0 - eps + eps / v + VERDICT_SLACK
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagramConfig {
    pub v: u32,
    pub s: u32,
    pub depth: u32,
    pub m_list: Vec<u32>,
    pub eps_grid: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
}

/// One `(sf, ε)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseCell {
    /// `s * m / v^(s-1)`.
    pub sf: f64,
    pub m: u32,
    pub eps: f64,
    pub theory_class_p: f64,
    /// Class-layer largest marginal averaged over realizations.
    pub bp_class_p: f64,
    pub inference_theory: bool,
    pub inference_bp: bool,
    pub trials: usize,
    pub seed: u64,
}

/// Cells ordered by `(m, ε)` as given in the config.
pub fn phase_diagram(cfg: &PhaseDiagramConfig) -> Result<Vec<PhaseCell>> {
    let mut cells = Vec::with_capacity(cfg.m_list.len() * cfg.eps_grid.len());
    for &m in &cfg.m_list {
        let params = RhmParams::new(cfg.v, cfg.s, m, cfg.depth)?;
        let mf = MeanField::new(&params);
        let per_trial: Vec<Vec<f64>> = (0..cfg.trials)
            .into_par_iter()
            .map(|trial| {
                let (rs, sample) = realization(&params, cfg.seed, trial as u64);
                let tree = FactorTree::new(&rs);
                cfg.eps_grid
                    .iter()
                    .map(|&eps| {
                        let beliefs = epsilon_beliefs(sample.leaves(), cfg.v, eps);
                        let msgs = tree.run(&beliefs)?;
                        Ok(msgs.marginals()?.profile(&sample).class().mean_max_marginal)
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        let sf = params.s() as f64 * params.f_approx();
        for (k, &eps) in cfg.eps_grid.iter().enumerate() {
            let bp = per_trial.iter().map(|t| t[k]).sum::<f64>() / cfg.trials as f64;
            let theory = mf.class_belief(eps, cfg.depth as usize);
            cells.push(PhaseCell {
                sf,
                m,
                eps,
                theory_class_p: theory,
                bp_class_p: bp,
                inference_theory: inference_verdict(theory, eps, mf.v),
                inference_bp: inference_verdict(bp, eps, mf.v),
                trials: cfg.trials,
                seed: cfg.seed,
            });
        }
    }
    Ok(cells)
}
