use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use irs_antijam::experiments::{self, ExperimentSpec};
use irs_antijam::oracles;
use irs_antijam::scenario::{validate_config, ConfigFile, SystemConfig};

#[derive(Parser, Debug)]
#[command(name = "irs-antijam", version, about = "Robust UAV uplink design with an IRS against a jammer of uncertain location")]
struct Cli {
    /// Overrides the random seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Conic solver tolerance.
    #[arg(long, global = true, env = "IRS_ANTIJAM_TOL")]
    tol: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimizes one configuration and writes the design.
    Solve {
        config: PathBuf,
        /// Output directory; defaults to `<config stem>.out`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Runs an experiment spec file or a preset (`fig2`, `fig3`, `fig4`).
    Sweep {
        spec: String,
        /// Overrides the output directory of the spec.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Checks one optimization block against a brute-force reference.
    Verify {
        config: PathBuf,
        #[arg(long, value_enum)]
        oracle: OracleKind,
        /// Phase levels per element for the phase oracle.
        #[arg(long, default_value_t = 16)]
        levels: usize,
        /// Grid points per axis for the trajectory oracle.
        #[arg(long, default_value_t = 25)]
        grid: usize,
    },
    /// Writes plot-ready series from a sweep output directory.
    Export {
        results_dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OracleKind {
    Phase,
    Jammer,
    Trajectory,
}

impl Cli {
    fn apply(&self, file: &mut ConfigFile) -> Result<()> {
        if let Some(seed) = self.seed {
            file.seed = seed;
        }
        if let Some(tol) = self.tol {
            if !(tol.is_finite() && tol > 0.0) {
                bail!("solver tolerance must be positive, got {tol}");
            }
            file.solver_tol = tol;
        }
        Ok(())
    }

    fn config(&self, path: &Path) -> Result<SystemConfig> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut file = ConfigFile::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
        self.apply(&mut file)?;
        let cfg = file.into_config();
        let viol = validate_config(&cfg);
        if !viol.is_empty() {
            let msg: Vec<String> = viol.iter().map(|v| v.to_string()).collect();
            bail!("{}: {}", path.display(), msg.join("; "));
        }
        Ok(cfg)
    }
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Solve { config, out } => {
            let cfg = cli.config(config)?;
            let dir = out.clone().unwrap_or_else(|| config.with_extension("out"));
            let start = Instant::now();
            let (outcome, summary) = experiments::solve(&cfg)?;
            experiments::write_solution(&dir, &outcome, &summary, start.elapsed().as_secs_f64())?;
            log::info!("wrote {}", dir.display());
            print_json(&summary)?;
            Ok(summary.failure.is_none())
        }
        Command::Sweep { spec, out } => {
            let path = Path::new(spec);
            let mut spec = if path.exists() {
                ExperimentSpec::from_file(path)?
            } else {
                experiments::preset(spec).with_context(|| format!("{spec} is neither a file nor a preset"))?
            };
            let mut base = spec.base_file();
            cli.apply(&mut base)?;
            spec.base = Some(base);
            if let Some(out) = out {
                spec.output_dir = out.clone();
            }
            let table = experiments::run_sweep(&spec, cli.jobs)?;
            let failed = table.rows.iter().filter(|r| r.status.starts_with("error")).count();
            log::info!("{} cells, {failed} failed, results in {}", table.rows.len(), spec.output_dir.display());
            Ok(failed == 0)
        }
        Command::Verify { config, oracle, levels, grid } => {
            let cfg = cli.config(config)?;
            let passed = match oracle {
                OracleKind::Phase => {
                    let checks = oracles::verify_phase(&cfg, *levels)?;
                    print_json(&checks)?;
                    checks.iter().all(|c| c.passed)
                }
                OracleKind::Jammer => {
                    let check = oracles::verify_jammer(&cfg)?;
                    print_json(&check)?;
                    check.passed
                }
                OracleKind::Trajectory => {
                    let check = oracles::verify_trajectory(&cfg, *grid)?;
                    print_json(&check)?;
                    check.passed
                }
            };
            Ok(passed)
        }
        Command::Export { results_dir, out } => {
            let table = experiments::load_results(results_dir)?;
            let dir = out.as_deref().unwrap_or(results_dir);
            for p in experiments::export_plotdata(&table, dir)? {
                println!("{}", p.display());
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = rayon_threads(cli.jobs) {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn rayon_threads(jobs: usize) -> Result<()> {
    irs_antijam::set_worker_threads(jobs.max(1)).context("configuring worker threads")
}
