use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use logifold_cli::commands::{
    self, BundleOptions, EntropyOptions, Outcome, RouteOptions, SimulateOptions, SweepOptions,
};
use logifold_cli::{CliError, Status};
use logifold_core::cores::default_grid;
use logifold_core::laws::LawScope;

#[derive(Debug, Parser)]
#[command(name = "logifold", version)]
#[command(about = "Entropy, cores and routing for ensembles of partial-domain classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct BundleArgs {
    /// Bundle directory containing manifest.toml.
    #[arg(long)]
    bundle: PathBuf,

    /// Replace hard zeros in predictions by this floor before any computation.
    #[arg(long)]
    epsilon_floor: Option<f64>,
}

impl From<BundleArgs> for BundleOptions {
    fn from(a: BundleArgs) -> Self {
        BundleOptions {
            bundle: a.bundle,
            epsilon_floor: a.epsilon_floor,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load a bundle and list every violation
    Validate {
        /// Bundle directory containing manifest.toml
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pointwise, total and pairwise entropies of a bundle
    Entropy {
        #[command(flatten)]
        bundle: BundleArgs,
        /// Count uncovered samples with entropy 1 in the headline total.
        #[arg(long)]
        include_complement: bool,
        /// Fail with `no-labels` when the bundle has no truth labels.
        #[arg(long)]
        truth: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Core coverage and accuracy over a threshold grid
    Sweep {
        #[command(flatten)]
        bundle: BundleArgs,
        /// `lo:hi:step` or a comma-separated list; default 0:1.4:0.01.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long, default_value_t = 0.95)]
        target_accuracy: f64,
        /// Also evaluate this single threshold.
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Route samples through the bundle's generations
    Route {
        #[command(flatten)]
        bundle: BundleArgs,
        /// Thresholds of the first generations, comma-separated.
        #[arg(long, value_delimiter = ',')]
        tau: Vec<f64>,
        #[arg(long)]
        grid: Option<String>,
        #[arg(long, default_value_t = 0.95)]
        target_accuracy: f64,
        #[arg(long, default_value_t = 0.2)]
        trigger_delta: f64,
        /// File of sample ids to route, one per line.
        #[arg(long)]
        batch: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the learning process and the two-environment scenario
    Simulate {
        /// TOML file with `[scenario]` and `[learning]` tables.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Artifact directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        union_with_clean: Option<bool>,
        #[arg(long)]
        trigger_delta: Option<f64>,
        #[arg(long)]
        target_accuracy: Option<f64>,
        #[arg(long)]
        grid: Option<String>,
    },
    /// Randomized checks of the conservation, strictness and core laws
    VerifyLaws {
        #[arg(long, value_enum, default_value_t = Scope::All)]
        scope: Scope,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Scope {
    All,
    Conservation,
    Strictness,
    Cores,
    Gradient,
    Gibbs,
}

impl From<Scope> for LawScope {
    fn from(s: Scope) -> Self {
        match s {
            Scope::All => LawScope::All,
            Scope::Conservation => LawScope::Conservation,
            Scope::Strictness => LawScope::Strictness,
            Scope::Cores => LawScope::Cores,
            Scope::Gradient => LawScope::Gradient,
            Scope::Gibbs => LawScope::Gibbs,
        }
    }
}

fn grid(spec: Option<&str>) -> Result<Vec<f64>, CliError> {
    spec.map_or_else(|| Ok(default_grid()), commands::parse_grid)
}

fn run(command: Command) -> Result<(Outcome, Option<PathBuf>), CliError> {
    Ok(match command {
        Command::Validate { bundle, out } => (commands::cmd_validate(&bundle)?, out),
        Command::Entropy {
            bundle,
            include_complement,
            truth,
            out,
        } => {
            let opts = EntropyOptions {
                bundle: bundle.into(),
                include_complement,
                require_truth: truth,
            };
            (commands::cmd_entropy(&opts)?, out)
        }
        Command::Sweep {
            bundle,
            grid: spec,
            target_accuracy,
            tau,
            out,
        } => {
            let opts = SweepOptions {
                bundle: bundle.into(),
                grid: grid(spec.as_deref())?,
                target_accuracy,
                tau,
            };
            (commands::cmd_sweep(&opts)?, out)
        }
        Command::Route {
            bundle,
            tau,
            grid: spec,
            target_accuracy,
            trigger_delta,
            batch,
            out,
        } => {
            let opts = RouteOptions {
                bundle: bundle.into(),
                taus: tau,
                grid: grid(spec.as_deref())?,
                target_accuracy,
                trigger_delta,
                batch,
            };
            (commands::cmd_route(&opts)?, out)
        }
        Command::Simulate {
            config,
            out,
            seed,
            union_with_clean,
            trigger_delta,
            target_accuracy,
            grid: spec,
        } => {
            let opts = SimulateOptions {
                config,
                seed,
                union_with_clean,
                trigger_delta,
                target_accuracy,
                grid: spec.as_deref().map(commands::parse_grid).transpose()?,
                out,
            };
            (commands::cmd_simulate(&opts)?, None)
        }
        Command::VerifyLaws {
            scope,
            seed,
            trials,
            out,
        } => (commands::cmd_verify_laws(scope.into(), seed, trials)?, out),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::new().parse_filters("warn").format_timestamp(None).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(Status::Validation.code()),
            };
        }
    };
    let (outcome, out) = match run(cli.command) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.status().code());
        }
    };
    let json = outcome.report.to_json();
    match out {
        Some(path) => {
            if let Err(e) = fs::write(&path, &json) {
                eprintln!("error: {}", CliError::io(&path, e));
                return ExitCode::from(Status::Io.code());
            }
        }
        None => print!("{json}"),
    }
    ExitCode::from(outcome.status.code())
}
