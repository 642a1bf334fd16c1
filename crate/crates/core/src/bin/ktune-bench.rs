use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use serde::de::DeserializeOwned;

use ktune::harness::{self, BackendKind, RunConfig};
use ktune::space::KernelKind;
use ktune::explorer::Mode;

/// Runs a tuned kernel benchmark and writes a JSON report.
#[derive(Debug, Parser)]
#[command(name = "ktune-bench", version)]
struct Cli {
    /// TOML file with RunConfig fields; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// distance | lintra
    #[arg(long, value_parser = parse_name::<KernelKind>)]
    kernel: Option<KernelKind>,
    /// sisd_only | simd_only | both
    #[arg(long, value_parser = parse_name::<Mode>)]
    mode: Option<Mode>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    bands: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    budget_pct: Option<f64>,
    #[arg(long)]
    invest_pct: Option<f64>,
    #[arg(long)]
    wake_ms: Option<f64>,
    /// native | synthetic
    #[arg(long, value_parser = parse_name::<BackendKind>)]
    backend: Option<BackendKind>,
    #[arg(long)]
    seed: Option<u64>,
    /// JSON report path.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Exploration trace CSV path.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    disable_tuner: bool,
    /// Defaults file written by --preprofile.
    #[arg(long)]
    defaults_from: Option<PathBuf>,
    /// Sweep the phase-two options offline and write the winner here.
    #[arg(long, value_name = "PATH")]
    preprofile: Option<PathBuf>,
    #[arg(long)]
    repeat: Option<usize>,
}

fn parse_name<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn config(cli: &Cli) -> Result<RunConfig, harness::HarnessError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    macro_rules! set {
        ($($f:ident),*) => { $(if let Some(v) = cli.$f.clone() { cfg.$f = v; })* };
    }
    set!(kernel, mode, dim, points, bands, width, rows, budget_pct, invest_pct, wake_ms, backend, seed, repeat);
    if cli.report.is_some() {
        cfg.report = cli.report.clone();
    }
    if cli.trace.is_some() {
        cfg.trace = cli.trace.clone();
    }
    if cli.defaults_from.is_some() {
        cfg.defaults_from = cli.defaults_from.clone();
    }
    cfg.disable_tuner |= cli.disable_tuner;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = config(&cli).and_then(|cfg| {
        if let Some(path) = &cli.preprofile {
            let d = harness::preprofile(&cfg)?;
            harness::save_defaults(path, d)?;
            println!("defaults: IS={} SM={} pldStride={} -> {}", d.sched_instr as u8, d.stack_min as u8, d.pld_stride, path.display());
            return Ok(());
        }
        let (report, _) = harness::run(&cfg)?;
        for (i, r) in report.runs.iter().enumerate() {
            println!(
                "run {i}: {:.3} ms, {} calls, explored {}/{}, overhead {:.3} %, swaps {}, final {}",
                r.run_time.as_secs_f64() * 1e3,
                r.kernel_calls,
                r.explored,
                r.exploration_limit,
                r.overhead_pct,
                r.swaps.len(),
                r.final_point.map_or("reference".to_string(), |p| p.to_string()),
            );
        }
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ktune-bench: {e}");
            ExitCode::FAILURE
        }
    }
}
