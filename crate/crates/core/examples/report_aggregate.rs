// Repeated runs over several surfaces: averaged best parameters,
// normalized for plotting, and best-so-far convergence curves.

use std::error::Error;
use std::sync::Arc;

use ktune::clock::SimClock;
use ktune::reporting::{best_parameter_averages, speedup, write_convergence_csv, write_normalized_csv};
use ktune::space::leftover_count;
use ktune::synthetic::{make_separable_surface, Holes};
use ktune::tuner::{simulate, SyntheticBackend, TunerConfig};
use ktune::{KernelKind, KernelShape, RegisterBudget, TuningSpace};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let space = TuningSpace::default();
    let budget = RegisterBudget::for_kind(KernelKind::Distance);
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for dim in [32usize, 64, 128] {
        let shape = KernelShape::distance(dim);
        let mut finals = Vec::new();
        let mut speedups = Vec::new();
        for seed in 0..8 {
            let surface = make_separable_surface(seed, &space).with_holes(Holes::Registers(budget));
            let backend = SyntheticBackend::new(surface, Arc::new(SimClock::new()), move |p| leftover_count(p, &shape));
            let (r, tuner) = simulate(&space, TunerConfig::default(), backend, 10_000_000)?;
            finals.extend(r.active);
            speedups.push(speedup(r.reference_elapsed, r.elapsed));
            curves.push(tuner.explorer().trace().iter().map(|t| t.score.map(|s| s.per_call)).collect::<Vec<_>>());
        }
        let avg = best_parameter_averages(&finals)?;
        let mean_speedup = speedups.iter().sum::<f64>() / speedups.len() as f64;
        println!(
            "dim {dim:>3}: mean speedup {mean_speedup:.2}, hotUF {:.2} coldUF {:.2} vectLen {:.2} pldStride {:.1} IS {:.2} SM {:.2} VE {:.2}",
            avg.hot_uf, avg.cold_uf, avg.vect_len, avg.pld_stride, avg.sched_instr, avg.stack_min, avg.vectorize
        );
        rows.push((format!("dim{dim}"), avg));
    }

    let mut csv = Vec::new();
    write_normalized_csv(&mut csv, &space, &rows)?;
    print!("\n{}", String::from_utf8(csv)?);
    let mut conv = Vec::new();
    write_convergence_csv(&mut conv, &curves)?;
    println!("\nconvergence: {} rows", String::from_utf8(conv)?.lines().count() - 1);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
