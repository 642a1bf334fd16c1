// The two-phase search on deterministic cost surfaces: how close a short
// run gets to the exhaustive optimum, with and without a cross term.

use std::error::Error;
use std::sync::Arc;

use ktune::clock::SimClock;
use ktune::space::leftover_count;
use ktune::synthetic::{make_separable_surface, Holes};
use ktune::tuner::{simulate, SyntheticBackend, TunerConfig};
use ktune::{KernelKind, KernelShape, RegisterBudget, TuningSpace};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let space = TuningSpace::default();
    let shape = KernelShape::distance(128);
    let budget = RegisterBudget::for_kind(KernelKind::Distance);
    println!("seed  limit  cross  explored  best/optimum  run speedup");
    for seed in [3u64, 11] {
        for cross in [0.0, 20_000.0] {
            for limit in [40, 80, 400] {
                let mut surface = make_separable_surface(seed, &space).with_holes(Holes::Registers(budget));
                if cross > 0.0 {
                    surface = surface.with_cross_term(cross);
                }
                let optimum = surface.cost(&surface.optimum.unwrap())?;
                let backend = SyntheticBackend::new(surface.clone(), Arc::new(SimClock::new()), move |p| {
                    leftover_count(p, &shape)
                });
                let cfg = TunerConfig { limit, ..TunerConfig::default() };
                let (r, _) = simulate(&space, cfg, backend, 20_000_000)?;
                let best = surface.cost(&r.best.unwrap())?;
                println!(
                    "{seed:>4}  {limit:>5}  {:>5}  {:>8}  {:>12.3}  {:>11.3}",
                    cross > 0.0,
                    r.explored,
                    best.as_secs_f64() / optimum.as_secs_f64(),
                    r.reference_elapsed.as_secs_f64() / r.elapsed.as_secs_f64(),
                );
            }
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
