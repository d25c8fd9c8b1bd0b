use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use percolab::harness::{run_experiment, ExperimentConfig};
use percolab::Error;

/// Monte Carlo experiments for critical site percolation on the
/// triangular lattice.
#[derive(Debug, Parser)]
#[command(name = "percolab", version)]
struct Cli {
    #[command(subcommand)]
    kind: Kind,
    /// TOML experiment config; its kind must match the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    samples: Option<u64>,
    /// Output prefix for `<out>.csv` and `<out>.manifest.json`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, env = "PERCOLAB_WORKERS")]
    workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Kind {
    /// Horizontal crossing of the rhombus.
    Crossing,
    /// Crossing of the marked equilateral triangle.
    Cardy,
    /// Arm events over a list of outer radii.
    Arms,
    /// One-arm proxy of the percolation probability.
    Theta,
    /// Truncated mean cluster size.
    Chi,
    /// Correlation length scan.
    Corrlen,
    /// Driving-function statistics of half-plane explorations.
    ExploreDriving,
    /// Sharp-threshold window of torus closed windings.
    TorusWindow,
    /// Scaling-relation table above criticality.
    ScalingTable,
    /// Russo's formula on the rhombus crossing.
    Russo,
    /// Exponential decay of the one-arm probability below criticality.
    ExpDecay,
    /// Runs the kind named in `--config`.
    Run,
}

impl Kind {
    fn name(self) -> Option<&'static str> {
        Some(match self {
            Kind::Crossing => "crossing",
            Kind::Cardy => "cardy",
            Kind::Arms => "arms",
            Kind::Theta => "theta",
            Kind::Chi => "chi",
            Kind::Corrlen => "corrlen",
            Kind::ExploreDriving => "explore-driving",
            Kind::TorusWindow => "torus-window",
            Kind::ScalingTable => "scaling-table",
            Kind::Russo => "russo",
            Kind::ExpDecay => "exp-decay",
            Kind::Run => return None,
        })
    }
}

fn config(cli: &Cli) -> percolab::Result<ExperimentConfig> {
    let mut cfg = match (&cli.config, cli.kind.name()) {
        (Some(path), want) => {
            let cfg = ExperimentConfig::load(path)?;
            if let Some(want) = want.filter(|w| *w != cfg.experiment.kind()) {
                return Err(Error::Config(format!(
                    "`experiment.kind`: config runs `{}` but the subcommand is `{want}`",
                    cfg.experiment.kind()
                )));
            }
            cfg
        }
        (None, Some(kind)) => ExperimentConfig::default_for(kind)?,
        (None, None) => return Err(Error::Config("`run` needs --config".into())),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(n) = cli.samples {
        cfg.samples = n;
    }
    if let Some(o) = &cli.out {
        cfg.out = Some(o.clone());
    }
    if cli.workers.is_some() {
        cfg.workers = cli.workers;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("percolab: {e}");
            return ExitCode::from(2);
        }
    };
    match run_experiment(&cfg) {
        Ok(r) => {
            println!("{}", r.csv.display());
            println!("{}", r.manifest.display());
            ExitCode::SUCCESS
        }
        Err(e @ (Error::Config(_) | Error::Parse(_))) => {
            eprintln!("percolab: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("percolab: {e}");
            ExitCode::from(3)
        }
    }
}
