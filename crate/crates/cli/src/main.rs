use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use vawt_cli::commands::{self, RunOptions};
use vawt_cli::experiment::{self, ExperimentConfig};
use vawt_core::{OracleKind, StlFormat};

#[derive(Parser)]
#[command(name = "vawt", version, about = "Evolve voxel wind-turbine prototypes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compare GA-only and surrogate runs on the reference target genome.
    ReproduceTarget {
        #[arg(long, default_value_t = 20)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.99)]
        threshold: f64,
        #[arg(long, default_value_t = 10_000)]
        budget: u64,
        /// JSON report path; the per-run CSV is written next to it.
        #[arg(long, default_value = "target-report.json")]
        out: PathBuf,
    },
    /// Run one campaign against a computed oracle.
    Run {
        /// Campaign config JSON; defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        oracle: Option<ComputedOracle>,
        #[arg(long)]
        z_mode: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        budget: Option<u64>,
        /// Directory for history.csv and events.jsonl.
        #[arg(long, default_value = "run")]
        out: PathBuf,
    },
    /// Write the STL for a genome literal such as "[2,2,3,4,5,8,13,20,34,40]"
    /// or for a genome hash found in a service data directory.
    ExportStl {
        genome: String,
        #[arg(long, default_value_t = 50)]
        smooth: u32,
        #[arg(long)]
        ascii: bool,
        #[arg(long, env = vawt_service::DATA_DIR_ENV)]
        data_dir: Option<PathBuf>,
        #[arg(long, default_value = "design.stl")]
        out: PathBuf,
    },
    /// Start the campaign service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, env = vawt_service::DATA_DIR_ENV, default_value = "data")]
        data_dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ComputedOracle {
    Target,
    Proxy,
}

impl From<ComputedOracle> for OracleKind {
    fn from(o: ComputedOracle) -> Self {
        match o {
            ComputedOracle::Target => OracleKind::Target,
            ComputedOracle::Proxy => OracleKind::Proxy,
        }
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::ReproduceTarget { runs, seed, threshold, budget, out } => {
            reproduce_target(ExperimentConfig { runs, seed, threshold, budget }, out)
        }
        Command::Run { config, oracle, z_mode, seed, budget, out } => {
            let opts = RunOptions { config, oracle: oracle.map(Into::into), z_mode, seed, budget };
            match commands::run(&opts, &out) {
                Ok(summary) => {
                    let c = &summary.campaign;
                    println!(
                        "{} evaluations, generation {}, best fitness {}",
                        c.evaluations(),
                        c.generation(),
                        c.best_fitness().unwrap_or(f64::NAN)
                    );
                    if let Some(n) = c.evaluations_to_threshold() {
                        println!("threshold reached after {n} evaluations");
                    }
                    println!("wrote {} and {}", summary.history_csv.display(), summary.events.display());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::ExportStl { genome, smooth, ascii, data_dir, out } => {
            let format = if ascii { StlFormat::Ascii } else { StlFormat::Binary };
            let result = commands::resolve_genome(&genome, data_dir.as_deref())
                .and_then(|g| commands::export_stl(&g, smooth, format, &out));
            match result {
                Ok(summary) => {
                    println!("triangles: {}", summary.triangles);
                    println!("volume: {:.3} mm3", summary.volume_mm3);
                    println!("wrote {}", out.display());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Serve { port, data_dir } => serve(port, data_dir),
    }
}

fn fail(e: commands::CommandError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code())
}

fn reproduce_target(cfg: ExperimentConfig, out: PathBuf) -> ExitCode {
    let writable = match out.parent().filter(|p| !p.as_os_str().is_empty()) {
        Some(parent) => std::fs::create_dir_all(parent),
        None => Ok(()),
    }
    .and_then(|()| std::fs::OpenOptions::new().create(true).append(true).open(&out).map(drop));
    if let Err(e) = writable {
        eprintln!("error: cannot write {}: {e}", out.display());
        return ExitCode::from(2);
    }
    let report = match experiment::run_experiment(&cfg) {
        Ok(report) => report,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let csv = match experiment::write_report(&report, &out) {
        Ok(csv) => csv,
        Err(e) => {
            eprintln!("error: cannot write report: {e}");
            return ExitCode::from(2);
        }
    };
    for (label, summary) in [("ga-only", report.ga_only), ("surrogate", report.surrogate)] {
        if let Some(s) = summary {
            println!("{label:>10}: M = {:.1}, SD = {:.1}, N = {}", s.mean, s.sd, s.n);
        }
    }
    if let Some(w) = report.welch {
        println!("welch: t({:.2}) = {:.3}, p = {:.5}", w.df, w.t, w.p);
    }
    let r = report.reference_welch;
    println!("reference welch: t({:.2}) = {:.3}, p = {:.5}", r.df, r.t, r.p);
    for check in &report.checks {
        println!("[{}] {}: {}", if check.pass { "PASS" } else { "FAIL" }, check.name, check.detail);
    }
    println!("wrote {} and {}", out.display(), csv.display());
    if report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn serve(port: u16, data_dir: PathBuf) -> ExitCode {
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    runtime.block_on(async move {
        let listener = match tokio::net::TcpListener::bind(("0.0.0.0", port)).await {
            Ok(listener) => listener,
            Err(e) => {
                eprintln!("error: cannot listen on port {port}: {e}");
                return ExitCode::from(2);
            }
        };
        let state = match vawt_service::AppState::open(&data_dir) {
            Ok(state) => state,
            Err(e) => {
                eprintln!("error: cannot open data dir {}: {e}", data_dir.display());
                return ExitCode::from(2);
            }
        };
        println!(
            "listening on {} (data in {})",
            listener.local_addr().map(|a| a.to_string()).unwrap_or_default(),
            data_dir.display()
        );
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
            println!("shutting down");
        };
        match vawt_service::serve(listener, state, shutdown).await {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        }
    })
}
