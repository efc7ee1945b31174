use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use mvx_cli::config::{load_config, ExperimentConfig, Kind};
use mvx_cli::distances::{distances, load_ensemble, DistanceOptions};
use mvx_cli::experiments::{run_experiment, write_outputs};

#[derive(Parser)]
#[command(
    name = "mvx",
    version,
    about = "Switching McKean-Vlasov particle experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment on a builtin model.
    Run {
        kind: Option<Kind>,
        model: Option<String>,
        #[command(flatten)]
        opts: SimArgs,
        /// Picard rounds.
        #[arg(long)]
        rounds: Option<usize>,
    },
    /// Audit the drift and contraction hypotheses of a builtin model.
    Verify {
        model: Option<String>,
        #[command(flatten)]
        opts: SimArgs,
    },
    /// Distances between two ensemble CSV files (`x_1..x_d,regime`).
    Distances {
        a: PathBuf,
        b: PathBuf,
        /// Coupled cost: `abs` or `square`.
        #[arg(long, default_value = "abs")]
        vhat: String,
        /// Also report W_2 after truncation at this radius.
        #[arg(long)]
        trunc: Option<f64>,
        /// Also report the binned weighted total variation.
        #[arg(long)]
        bin_width: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct SimArgs {
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<f64>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    /// Horizon.
    #[arg(short = 'T', long = "horizon")]
    horizon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// `thinning` or `first-order`.
    #[arg(long)]
    switch_mode: Option<String>,
    /// `default`, `none` or `symmetric`.
    #[arg(long)]
    switching: Option<String>,
    /// Coefficient truncation radius; 0 disables it (example2 defaults to 20).
    #[arg(long)]
    trunc: Option<f64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
}

impl SimArgs {
    fn build(
        self,
        kind: Option<Kind>,
        model: Option<String>,
        rounds: Option<usize>,
    ) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => load_config(path)?,
            None => {
                if kind.is_none() {
                    anyhow::bail!("give <kind> <model> or --config");
                }
                ExperimentConfig::default()
            }
        };
        let from_file = self.config.is_some();
        if let Some(k) = kind {
            if from_file && k != cfg.experiment.kind {
                // kind-dependent defaults must be recomputed
                cfg.sim.horizon = None;
                cfg.model.switching = None;
                cfg.experiment.init = None;
                cfg.experiment.init_regime = None;
                cfg.experiment.init2 = None;
                cfg.experiment.init2_regime = None;
                cfg.experiment.fit_window = None;
                cfg.experiment.slope_tol = None;
            }
            cfg.experiment.kind = k;
        }
        if let Some(m) = model {
            cfg.model.name = m;
        }
        let horizon_given = self.horizon.is_some();
        macro_rules! set {
            ($field:expr, $value:expr) => {
                if let Some(v) = $value {
                    $field = v;
                }
            };
        }
        set!(cfg.model.beta, self.beta);
        set!(cfg.sim.particles, self.particles);
        set!(cfg.sim.dt, self.dt);
        set!(cfg.sim.seed, self.seed);
        set!(cfg.sim.switch_mode, self.switch_mode);
        set!(cfg.sim.threads, self.threads);
        set!(cfg.output.dir, self.out);
        set!(cfg.experiment.rounds, rounds);
        if self.switching.is_some() {
            cfg.model.switching = self.switching;
        }
        if self.trunc.is_some() {
            cfg.sim.truncation = self.trunc;
        }
        if horizon_given {
            cfg.sim.horizon = self.horizon;
            cfg.experiment.fit_window = None;
        }
        cfg.resolve()?;
        Ok(cfg)
    }
}

fn run(cfg: ExperimentConfig) -> Result<bool> {
    let start = Instant::now();
    let outcome = run_experiment(&cfg)?;
    let dir = write_outputs(&cfg, &outcome, start.elapsed().as_secs_f64())?;
    print!("{}", outcome.report);
    for (k, v) in &outcome.results {
        println!("{k}={v}");
    }
    println!("output: {}", dir.display());
    Ok(outcome.pass() || !cfg.experiment.assert)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            kind,
            model,
            opts,
            rounds,
        } => opts.build(kind, model, rounds).and_then(run),
        Command::Verify { model, opts } => {
            opts.build(Some(Kind::Verify), model, None).and_then(run)
        }
        Command::Distances {
            a,
            b,
            vhat,
            trunc,
            bin_width,
            seed,
        } => (|| {
            let (mu, nu) = (load_ensemble(&a)?, load_ensemble(&b)?);
            let opts = DistanceOptions {
                vhat,
                truncation: trunc,
                bin_width,
                seed,
            };
            print!("{}", distances(&mu, &nu, &opts)?);
            Ok(true)
        })(),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("mvx: an embedded check failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("mvx: error: {e:#}");
            ExitCode::from(2)
        }
    }
}
