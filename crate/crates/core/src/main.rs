use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use diqkd::commands::{self, crossing, Table};
use diqkd::config::{Overrides, RunConfig, ScanSpec};
use diqkd::Error;

/// Environment variable holding the worker-thread count.
const WORKERS_ENV: &str = "DIQKD_WORKERS";

#[derive(Parser)]
#[command(
    name = "diqkd",
    version,
    about = "Key rates for heralded single-photon DIQKD"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimized CHSH score against eta_tilde_L (CSV)
    ChshScan(Common),
    /// eta_L where the asymptotic key rate vanishes (JSON)
    Threshold(Common),
    /// Key bits per second against distance (CSV)
    RateVsDistance(Common),
    /// Asymptotic rate and key threshold for several T (CSV)
    TScan(Common),
    /// Finite-size key length (JSON)
    FiniteKeylen(Common),
}

#[derive(Args)]
struct Common {
    /// JSON configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scan axis, VAR:MIN:MAX:STEPS or VAR=V1,V2,...
    #[arg(long)]
    scan: Option<String>,
    /// Output file; printed to stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Block sizes, comma separated
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<f64>>,
    /// Add the asymptotic rate to distance scans
    #[arg(long)]
    asymptotic: bool,
}

impl Common {
    fn load(&self) -> diqkd::Result<RunConfig> {
        let base = match &self.config {
            Some(path) => RunConfig::from_path(path)?,
            None => RunConfig::default(),
        };
        let scan = self
            .scan
            .as_deref()
            .map(str::parse::<ScanSpec>)
            .transpose()?;
        let cfg = base.apply(Overrides {
            scan,
            output: self.out.clone(),
            seed: self.seed,
            n: self.n.clone(),
            asymptotic: self.asymptotic,
        });
        cfg.validate()?;
        Ok(cfg)
    }
}

fn emit(cfg: &RunConfig, text: &str) -> diqkd::Result<()> {
    match &cfg.output {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

fn emit_table(cfg: &RunConfig, table: &Table) -> diqkd::Result<()> {
    emit(cfg, &table.to_csv())
}

fn run(command: Command) -> diqkd::Result<()> {
    match command {
        Command::ChshScan(c) => {
            let cfg = c.load()?;
            let table = commands::chsh_scan(&cfg)?;
            emit_table(&cfg, &table)?;
            let xs: Vec<f64> = table.rows.iter().filter_map(|r| r[0].as_f64()).collect();
            let ys: Vec<f64> = table.rows.iter().filter_map(|r| r[1].as_f64()).collect();
            if cfg.output.is_some() {
                match crossing(&xs, &ys, 2.0) {
                    Some(x) => println!("S crosses 2 at eta_tilde_L ~ {x:.4}"),
                    None => println!("S does not cross 2 on this grid"),
                }
            }
        }
        Command::Threshold(c) => {
            let cfg = c.load()?;
            let out = commands::threshold(&cfg)?;
            emit(&cfg, &json(&out))?;
            if cfg.output.is_some() {
                println!(
                    "key threshold eta_L = {:.4} (S = {:.4})",
                    out.report.eta_l_threshold, out.report.s_at_threshold
                );
            }
        }
        Command::RateVsDistance(c) => {
            let cfg = c.load()?;
            let table = commands::rate_vs_distance(&cfg)?;
            emit_table(&cfg, &table)?;
            if cfg.output.is_some() {
                println!("{} rows written", table.rows.len());
            }
        }
        Command::TScan(c) => {
            let cfg = c.load()?;
            let table = commands::t_scan(&cfg)?;
            emit_table(&cfg, &table)?;
            if cfg.output.is_some() {
                println!("{} rows written", table.rows.len());
            }
        }
        Command::FiniteKeylen(c) => {
            let cfg = c.load()?;
            let out = commands::finite_keylen(&cfg)?;
            emit(&cfg, &json(&out))?;
            if cfg.output.is_some() {
                for r in &out.results {
                    println!(
                        "n = {:e}: ell = {:.6e} bits, ell/n = {:.6}",
                        r.n, r.ell, r.ell_per_n
                    );
                }
            }
        }
    }
    Ok(())
}

fn init_workers() -> Result<(), String> {
    let Ok(v) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| format!("{WORKERS_ENV} must be a positive integer, got `{v}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_workers() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
