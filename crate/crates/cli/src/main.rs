use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use simplex_obs_cli::commands::{self, CommutatorArgs};
use simplex_obs_cli::config::{Overrides, RunConfig, SimplexChoice, SEED_ENV};
use simplex_obs_cli::{CliError, CliResult, EXIT_OK, EXIT_THRESHOLD};

#[derive(Parser)]
#[command(name = "simplex-obs", version, about = "Boundary observability experiments for the wave equation on simplices")]
struct Cli {
    /// Worker threads for assembly and T-sweeps (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Refinement levels
    #[arg(long)]
    levels: Option<u32>,
    /// Time step as a fraction of the CFL limit, in (0, 1]
    #[arg(long)]
    dt_factor: Option<f64>,
    /// Observed face (face j is opposite vertex j)
    #[arg(long)]
    face: Option<usize>,
    /// Overrides the config seed and OBS_SEED.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self, csv: Option<PathBuf>, json: Option<PathBuf>) -> CliResult<RunConfig> {
        let mut config = RunConfig::load(&self.config)?;
        let flags = Overrides { levels: self.levels, dt_factor: self.dt_factor, face: self.face, seed: self.seed, csv, json };
        let env = std::env::var(SEED_ENV).ok();
        config.apply_overrides(&flags, env.as_deref())?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sweep the horizon list and compare measured face flux with the prediction.
    VerifyTheorem {
        #[command(flatten)]
        config: ConfigArgs,
        /// CSV report path (printed to stdout when neither output is set).
        #[arg(long)]
        csv: Option<PathBuf>,
        /// JSON summary path.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Check [P, x·∇] = 2P exactly, or print the canonical form of an expression.
    CheckCommutator {
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 2)]
        min_dim: usize,
        #[arg(long, default_value_t = 5)]
        max_dim: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Operator expression such as "[-d1^2, x1 d1]".
        #[arg(long)]
        expr: Option<String>,
    },
    /// Volume, determinant, faces and predicted flux rates of a simplex.
    Geometry {
        /// Preset (standard-n, order-n), inline JSON, or a JSON file.
        simplex: String,
        /// Monte-Carlo volume check with this many samples.
        #[arg(long)]
        mc: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
    /// Single run with a per-step energy and flux ledger.
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Final time (default: last entry of t_list).
        #[arg(long)]
        horizon: Option<f64>,
        /// Ledger CSV path (printed to stdout otherwise).
        #[arg(long)]
        ledger: Option<PathBuf>,
    },
    /// Refined mesh as JSON.
    MeshDump {
        simplex: String,
        #[arg(long)]
        levels: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn write_out(path: Option<&PathBuf>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|source| CliError::Io { path: p.clone(), source }),
        None => {
            let _ = std::io::stdout().write_all(text.as_bytes());
            Ok(())
        }
    }
}

fn run(cli: Cli) -> CliResult<i32> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    match cli.command {
        Command::VerifyTheorem { config, csv, json } => {
            let config = config.load(csv, json)?;
            let outcome = commands::verify_theorem(&config)?;
            if config.outputs.csv.is_none() && config.outputs.json.is_none() {
                write_out(None, &outcome.csv)?;
            }
            let s = &outcome.summary;
            eprintln!("remainder slope {:.4}, dt {:.6} (dt_max {:.6})", s.slope, s.dt, s.dt_max);
            for c in &s.checks {
                eprintln!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.value);
            }
            Ok(if s.passed { EXIT_OK } else { EXIT_THRESHOLD })
        }
        Command::CheckCommutator { count, min_dim, max_dim, seed, expr } => {
            let outcome = commands::check_commutator(&CommutatorArgs { count, min_dim, max_dim, seed, expr })?;
            write_out(None, &outcome.output)?;
            Ok(if outcome.passed { EXIT_OK } else { EXIT_THRESHOLD })
        }
        Command::Geometry { simplex, mc, seed, json } => {
            let s = SimplexChoice::from_arg(&simplex)?.build()?;
            let report = commands::geometry_report(&s, mc.map(|n| (n, seed)))?;
            let text = if json { commands::geometry_json(&report)? } else { report.to_table() };
            write_out(None, &text)?;
            Ok(EXIT_OK)
        }
        Command::Simulate { config, horizon, ledger } => {
            let config = config.load(None, None)?;
            let outcome = commands::simulate(&config, horizon, ledger.as_ref())?;
            if ledger.is_none() {
                write_out(None, &outcome.ledger_csv)?;
            }
            eprint!("{}", commands::simulate_summary_json(&outcome.summary)?);
            Ok(EXIT_OK)
        }
        Command::MeshDump { simplex, levels, out } => {
            let text = commands::mesh_dump(&SimplexChoice::from_arg(&simplex)?, levels)?;
            write_out(out.as_ref(), &text)?;
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
