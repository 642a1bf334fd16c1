// The clustering driver on real kernels: a tuned run against an untuned
// one, with the JSON report and exploration trace written to a temp dir.
//
// `cargo run --release --example distance_autotune -- 128` picks the
// dimension.

use std::error::Error;

use ktune::harness::{self, RunConfig};
use ktune::reporting::speedup;

pub fn run_example_with(dim: usize, passes: usize) -> Result<(), Box<dyn Error>> {
    let dir = std::env::temp_dir().join("ktune-distance");
    std::fs::create_dir_all(&dir)?;
    let cfg = RunConfig {
        dim,
        passes: Some(passes),
        report: Some(dir.join("report.json")),
        trace: Some(dir.join("trace.csv")),
        ..RunConfig::default()
    };
    let (report, _) = harness::run(&cfg)?;
    let tuned = &report.runs[0];
    let (plain, _) = harness::run(&RunConfig {
        disable_tuner: true,
        report: None,
        trace: None,
        ..cfg.clone()
    })?;
    let plain = &plain.runs[0];

    println!("dimension {dim}, {} kernel calls", tuned.kernel_calls);
    println!("  untuned {:?}", plain.run_time);
    println!("  tuned   {:?} (speedup {:.2})", tuned.run_time, speedup(plain.run_time, tuned.run_time));
    println!(
        "  explored {} of {} explorable, overhead {:?} ({:.3} %), tuning window {:.0} % of kernel life",
        tuned.explored,
        tuned.explorable_versions,
        tuned.overhead_total,
        tuned.overhead_pct,
        tuned.duration_to_kernel_life * 100.0
    );
    for s in &tuned.swaps {
        println!("  epoch {} at {:?}: {} at {:?}/call", s.epoch, s.at, s.point, s.score.per_call);
    }
    println!("  report and trace in {}", dir.display());
    Ok(())
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    run_example_with(32, 10)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    let dim = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(32);
    run_example_with(dim, 100)
}
