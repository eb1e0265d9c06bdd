//! Seeded, parallel experiment sweeps and their table output.

pub mod cli;
pub mod config;
pub mod sweeps;
pub mod table;

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::meanfield::{iteration_map, phase_diagram, MeanField, PhaseDiagramConfig};
use crate::rhm::{RhmParams, RuleSet, SampleTree};
use crate::seed::{int_key, stream_rng, stream_seed, Domain};
use rand::Rng;

pub use config::{ExperimentConfig, ExperimentSpec, Grid, GaussianSpec, ModelSpec, OutputFormat};
pub use table::{Cell, Table};

/// Bumped whenever a table layout or a seeding rule changes.
pub const ARTIFACT_VERSION: u32 = 1;

/// Grammar and datum of trial `trial`: the grammar comes from the stream
/// `(master, ruleset, trial)`, the class and derivation from `(master, sample, trial)`.
pub fn realization(params: &RhmParams, master: u64, trial: u64) -> (RuleSet, SampleTree) {
    let rs = RuleSet::from_seed(*params, stream_seed(master, int_key(Domain::Ruleset, 0), trial));
    let mut rng = stream_rng(master, int_key(Domain::Sample, 0), trial);
    let class = rng.random_range(0..params.v());
    let sample = rs.generate(class, &mut rng);
    (rs, sample)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Counters {
    pub argmax_ties: usize,
    pub failed_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultEnvelope {
    pub artifact_version: u32,
    pub experiment: &'static str,
    pub config: ExperimentConfig,
    pub table: Table,
    pub counters: Counters,
    pub failures: Vec<String>,
    /// Left out of every serialized form so reruns stay byte-identical.
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl ResultEnvelope {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("envelope serializes");
        s.push('\n');
        s
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Csv => self.table.to_csv(),
            OutputFormat::Json => self.to_json(),
        }
    }
}

fn model(spec: &ModelSpec) -> Result<RhmParams> {
    RhmParams::new(spec.v, spec.s, spec.m, spec.depth)
}

const CURVE_HEADER: [&str; 7] =
    ["eps_or_t", "layer", "mean_true_marginal", "mean_max_marginal", "frac_argmax_correct", "n_real", "seed"];

fn curve_table(sweep: &sweeps::CurveSweep, seed: u64, counters: &mut Counters, failures: &mut Vec<String>) -> Table {
    let mut t = Table::new(&CURVE_HEADER);
    for p in &sweep.points {
        counters.argmax_ties += p.argmax_ties;
        t.push(vec![
            p.x.into(),
            p.layer.into(),
            p.mean_true_marginal.into(),
            p.mean_max_marginal.into(),
            p.frac_argmax_correct.into(),
            p.n_real.into(),
            seed.into(),
        ]);
    }
    counters.failed_cells += sweep.failures.len();
    failures.extend(sweep.failures.iter().map(|f| format!("x={} trial={}: {}", f.x, f.trial, f.error)));
    t
}

/// Runs one experiment on a pool of `config.workers` threads.
pub fn run(config: &ExperimentConfig) -> Result<ResultEnvelope> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let start = Instant::now();
    let (table, counters, failures) = pool.install(|| dispatch(config))?;
    Ok(ResultEnvelope {
        artifact_version: ARTIFACT_VERSION,
        experiment: config.spec.name(),
        config: config.clone(),
        table,
        counters,
        failures,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

fn dispatch(config: &ExperimentConfig) -> Result<(Table, Counters, Vec<String>)> {
    let (trials, seed) = (config.trials, config.seed);
    let mut counters = Counters::default();
    let mut failures = Vec::new();
    let table = match &config.spec {
        ExperimentSpec::DenoiseEps { model: spec, eps_grid } => {
            let sweep = sweeps::denoise_eps(&model(spec)?, eps_grid.values(), trials, seed);
            curve_table(&sweep, seed, &mut counters, &mut failures)
        }
        ExperimentSpec::DenoiseTime { model: spec, t_grid } => {
            let sweep = sweeps::denoise_time(&model(spec)?, t_grid.values(), trials, seed);
            curve_table(&sweep.curves, seed, &mut counters, &mut failures)
        }
        ExperimentSpec::EpsMap { model: spec, t_grid } => {
            let mut t = Table::new(&["t", "eps_eff", "n_real", "seed"]);
            for p in sweeps::eps_map(&model(spec)?, t_grid.values(), trials, seed) {
                t.push(vec![p.t.into(), p.eps_eff.into(), p.n_real.into(), seed.into()]);
            }
            t
        }
        ExperimentSpec::MeanfieldProfile { model: spec, eps_grid } => {
            let mut t = Table::new(&["eps", "layer", "p_up", "p_down", "p"]);
            for st in sweeps::meanfield_profiles(&model(spec)?, eps_grid.values()) {
                for l in 0..st.p.len() {
                    t.push(vec![st.eps.into(), l.into(), st.p_up[l].into(), st.p_down[l].into(), st.p[l].into()]);
                }
            }
            t
        }
        ExperimentSpec::IterationMap { model: spec, points } => {
            let mf = MeanField::new(&model(spec)?);
            let mut t = Table::new(&["p", "F(p)"]);
            for (p, fp) in iteration_map(&mf, *points) {
                t.push(vec![p.into(), fp.into()]);
            }
            t
        }
        ExperimentSpec::PhaseDiagram { v, s, depth, m_list, eps_grid } => {
            let cfg = PhaseDiagramConfig {
                v: *v,
                s: *s,
                depth: *depth,
                m_list: m_list.clone(),
                eps_grid: eps_grid.values().to_vec(),
                trials,
                seed,
            };
            let mut t = Table::new(&[
                "sf",
                "m",
                "eps",
                "theory_class_p",
                "bp_class_p",
                "inference_theory",
                "inference_bp",
                "trials",
                "seed",
            ]);
            for c in phase_diagram(&cfg)? {
                t.push(vec![
                    c.sf.into(),
                    c.m.into(),
                    c.eps.into(),
                    c.theory_class_p.into(),
                    c.bp_class_p.into(),
                    c.inference_theory.into(),
                    c.inference_bp.into(),
                    c.trials.into(),
                    c.seed.into(),
                ]);
            }
            t
        }
        ExperimentSpec::GaussianFlip(g) => {
            let mut t = Table::new(&["t_over_T", "flip_rate", "ci_low", "ci_high", "n_trials", "seed"]);
            for e in sweeps::gaussian_flip(g, trials, seed)? {
                t.push(vec![
                    e.t_over_t_max.into(),
                    e.rate.into(),
                    e.ci_low.into(),
                    e.ci_high.into(),
                    e.n_trials.into(),
                    seed.into(),
                ]);
            }
            t
        }
        ExperimentSpec::OracleCheck { model: spec } => {
            let mut t = Table::new(&["trial", "eps", "max_abs_deviation", "seed"]);
            for r in sweeps::oracle_check(&model(spec)?, trials, seed)? {
                t.push(vec![r.trial.into(), r.eps.into(), r.max_abs_deviation.into(), seed.into()]);
            }
            t
        }
    };
    Ok((table, counters, failures))
}
