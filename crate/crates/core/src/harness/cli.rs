//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};

use crate::harness::config::{
    ExperimentConfig, ExperimentSpec, GaussianSpec, Grid, LinearGridArg, ModelSpec, OutputFormat, TimeGridArg,
};
use crate::harness::run;

#[derive(Debug, Parser)]
#[command(name = "rhm-lab", version, about = "Random Hierarchy Model denoising experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// BP layer curves under the ε-process
    DenoiseEps {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        eps: EpsGridArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// BP layer curves after diffusing the one-hot leaves to each time
    DenoiseTime {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        time: TimeGridArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Mean-field upward, downward and combined profiles
    MeanfieldProfile {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        eps: EpsGridArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Class-inference phase diagram over a list of m
    PhaseDiagram {
        /// Vocabulary size
        #[arg(long)]
        v: u32,
        /// Branching factor
        #[arg(long)]
        s: u32,
        /// Rules per symbol, comma separated or repeated
        #[arg(long, required = true, num_args = 1.., value_delimiter = ',')]
        m: Vec<u32>,
        /// Depth
        #[arg(long = "L")]
        depth: u32,
        #[command(flatten)]
        eps: EpsGridArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// The upward mean-field map p -> F(p) on [1/v, 1]
    IterationMap {
        #[command(flatten)]
        model: ModelArgs,
        /// Number of evenly spaced points
        #[arg(long, default_value_t = 201)]
        points: usize,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Effective ε(t) of diffused leaves
    EpsMap {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        time: TimeGridArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Mode-flip rate of a two-mode Gaussian mixture under exact diffusion inversion
    GaussianFlip {
        /// Dimension
        #[arg(long, default_value_t = 1024)]
        d: usize,
        /// Standard deviation of each mode
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// Number of diffusion steps
        #[arg(long = "T", default_value_t = 1000)]
        steps: usize,
        /// First β of the linear schedule
        #[arg(long, default_value_t = 1e-4)]
        beta_start: f64,
        /// Last β of the linear schedule
        #[arg(long, default_value_t = 0.02)]
        beta_end: f64,
        /// Inversion times as fractions of T, a:b:step
        #[arg(long, default_value = "0:1:0.1")]
        t_fracs: LinearGridArg,
        #[command(flatten)]
        run: RunArgs,
    },
    /// BP marginals against exhaustive enumeration on small instances
    OracleCheck {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Vocabulary size
    #[arg(long)]
    pub v: u32,
    /// Branching factor
    #[arg(long)]
    pub s: u32,
    /// Rules per symbol
    #[arg(long)]
    pub m: u32,
    /// Depth
    #[arg(long = "L")]
    pub depth: u32,
}

impl From<ModelArgs> for ModelSpec {
    fn from(a: ModelArgs) -> Self {
        ModelSpec { v: a.v, s: a.s, m: a.m, depth: a.depth }
    }
}

#[derive(Debug, Args)]
pub struct EpsGridArgs {
    /// Noise grid a:b:step, inclusive
    #[arg(long, default_value = "0:1:0.05")]
    pub eps_grid: LinearGridArg,
}

#[derive(Debug, Args)]
pub struct TimeGridArgs {
    /// Time grid: `geometric a:b:n`, `a:b:n` or `linear a:b:step`
    #[arg(long, num_args = 1..=2, default_values = ["geometric", "0.01:5:40"])]
    pub t_grid: Vec<String>,
}

impl TimeGridArgs {
    fn grid(&self) -> Result<Grid, String> {
        let joined = self.t_grid.join(":");
        joined.parse::<TimeGridArg>().map(|g| g.0).map_err(|e| format!("invalid --t-grid '{}': {e}", self.t_grid.join(" ")))
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Master seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Realizations (or Monte-Carlo trials) per grid point
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    /// Worker threads; never affects the output
    #[arg(long, env = "RHM_LAB_WORKERS")]
    pub workers: Option<usize>,
    /// Output file; standard output when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn finish(spec: ExperimentSpec, run: RunArgs) -> Result<ExperimentConfig, clap::Error> {
    let cfg = ExperimentConfig {
        spec,
        trials: run.trials,
        seed: run.seed,
        workers: run.workers.unwrap_or_else(default_workers),
        out: run.out,
        format: run.format,
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn usage(msg: String) -> clap::Error {
    Cli::command().error(ErrorKind::ValueValidation, msg)
}

/// Parses and validates a full argument vector (program name first).
pub fn cli_parse<I, T>(argv: I) -> Result<ExperimentConfig, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv)?;
    match cli.command {
        Command::DenoiseEps { model, eps, run } => {
            finish(ExperimentSpec::DenoiseEps { model: model.into(), eps_grid: eps.eps_grid.0 }, run)
        }
        Command::DenoiseTime { model, time, run } => {
            finish(ExperimentSpec::DenoiseTime { model: model.into(), t_grid: time.grid().map_err(usage)? }, run)
        }
        Command::MeanfieldProfile { model, eps, run } => {
            finish(ExperimentSpec::MeanfieldProfile { model: model.into(), eps_grid: eps.eps_grid.0 }, run)
        }
        Command::PhaseDiagram { v, s, m, depth, eps, run } => {
            finish(ExperimentSpec::PhaseDiagram { v, s, depth, m_list: m, eps_grid: eps.eps_grid.0 }, run)
        }
        Command::IterationMap { model, points, run } => {
            finish(ExperimentSpec::IterationMap { model: model.into(), points }, run)
        }
        Command::EpsMap { model, time, run } => {
            finish(ExperimentSpec::EpsMap { model: model.into(), t_grid: time.grid().map_err(usage)? }, run)
        }
        Command::GaussianFlip { d, sigma, steps, beta_start, beta_end, t_fracs, run } => finish(
            ExperimentSpec::GaussianFlip(GaussianSpec { d, sigma, steps, beta_start, beta_end, t_fracs: t_fracs.0 }),
            run,
        ),
        Command::OracleCheck { model, run } => finish(ExperimentSpec::OracleCheck { model: model.into() }, run),
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARTIAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Full program: parse, run, write. Returns the process exit code.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cfg = match cli_parse(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let env = match run(&cfg) {
        Ok(env) => env,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let text = env.render(cfg.format);
    let written = match &cfg.out {
        Some(path) => std::fs::write(path, text.as_bytes()),
        None => std::io::stdout().lock().write_all(text.as_bytes()),
    };
    if let Err(e) = written {
        eprintln!("error: cannot write output: {e}");
        return EXIT_PARTIAL;
    }
    eprintln!(
        "{}: {} rows in {:.2}s ({} workers, {} ties, {} failed cells)",
        env.experiment,
        env.table.rows.len(),
        env.wall_time_s,
        cfg.workers,
        env.counters.argmax_ties,
        env.counters.failed_cells
    );
    for f in &env.failures {
        eprintln!("failed: {f}");
    }
    if env.counters.failed_cells > 0 {
        EXIT_PARTIAL
    } else {
        EXIT_OK
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(s: &str) -> Vec<String> {
        std::iter::once("rhm-lab").chain(s.split_whitespace()).map(String::from).collect()
    }

    #[test]
    fn parses_the_reference_invocation() {
        let cfg =
            cli_parse(argv("denoise-eps --v 32 --s 2 --m 8 --L 10 --eps-grid 0:1:0.05 --trials 20 --seed 1 --out fig5.csv"))
                .unwrap();
        assert_eq!(cfg.trials, 20);
        assert_eq!(cfg.seed, 1);
        assert_eq!(cfg.out.as_deref(), Some(std::path::Path::new("fig5.csv")));
        match cfg.spec {
            ExperimentSpec::DenoiseEps { model, eps_grid } => {
                assert_eq!(model, ModelSpec { v: 32, s: 2, m: 8, depth: 10 });
                assert_eq!(eps_grid.values().len(), 21);
            }
            other => panic!("wrong kind {other:?}"),
        }
    }

    #[test]
    fn usage_errors() {
        let e = cli_parse(argv("denoise-eps --s 2 --m 8 --L 10")).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let e = cli_parse(argv("denoise-eps --v 32 --s 2 --m 8 --L 10 --eps-grid 1:0:0.1")).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let e = cli_parse(argv("denoise-eps --v 32 --s 2 --m 8 --L 10 --trials 0")).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let e = cli_parse(argv("eps-map --v 32 --s 2 --m 8 --L 10 --t-grid geometric 5:0.01:4")).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn time_grid_forms() {
        for form in ["--t-grid geometric 0.01:5:40", "--t-grid 0.01:5:40", "--t-grid geometric:0.01:5:40", ""] {
            let cfg = cli_parse(argv(&format!("eps-map --v 8 --s 2 --m 2 --L 3 {form}"))).unwrap();
            match cfg.spec {
                ExperimentSpec::EpsMap { t_grid, .. } => assert_eq!(t_grid.values().len(), 40),
                other => panic!("wrong kind {other:?}"),
            }
        }
        let cfg = cli_parse(argv("denoise-time --v 8 --s 2 --m 2 --L 3 --t-grid linear 0:1:0.5")).unwrap();
        match cfg.spec {
            ExperimentSpec::DenoiseTime { t_grid, .. } => assert_eq!(t_grid.values(), &[0.0, 0.5, 1.0]),
            other => panic!("wrong kind {other:?}"),
        }
    }

    #[test]
    fn phase_diagram_m_list() {
        let cfg = cli_parse(argv("phase-diagram --v 32 --s 2 --L 10 --m 4,8,16 --workers 2")).unwrap();
        assert_eq!(cfg.workers, 2);
        match cfg.spec {
            ExperimentSpec::PhaseDiagram { m_list, .. } => assert_eq!(m_list, vec![4, 8, 16]),
            other => panic!("wrong kind {other:?}"),
        }
    }

    #[test]
    fn help_documents_flags() {
        let help = Cli::command().find_subcommand_mut("denoise-eps").unwrap().render_long_help().to_string();
        for flag in ["--v", "--s", "--m", "--L", "--seed", "--eps-grid", "--trials", "--workers", "--out", "--format"] {
            assert!(help.contains(flag), "{flag} missing from help");
        }
    }

    #[test]
    fn cli_is_consistent() {
        Cli::command().debug_assert();
    }
}
