// Scoring kernels: the grouped-minimum filter on training data, and the
// mean over a real-data trial.

use std::error::Error;
use std::time::Duration;

use ktune::clock::MonotonicClock;
use ktune::evaluator::{better, filtered_score, measure_real, measure_training, DistanceTraining, MeasureConfig};
use ktune::variantgen::{DistanceGenerator, KernelGenerator};
use ktune::TuningPoint;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let samples = [5u64, 3, 4, 6, 7, 2, 9, 8, 7, 6, 4, 4, 5, 6, 9].map(Duration::from_nanos);
    println!("groups of five, best of each, worst of those: {:?}", filtered_score(&samples, 5, 3)?);
    println!("mean of a trial: {:?}", measure_real(&samples)?.per_call);

    let generator = DistanceGenerator::new(64);
    let clock = MonotonicClock::new();
    let cfg = MeasureConfig::default();
    let mut training = DistanceTraining::new(64);
    let reference = measure_training(&*generator.reference(), &mut training, &clock, &cfg)?;
    println!("\nreference: {:?}/call over {} invocations", reference.per_call, cfg.invocations());

    let p = TuningPoint { hot_uf: 2, cold_uf: 2, vect_len: 2, vectorize: true, ..TuningPoint::SCALAR };
    let v = generator.generate(&p)?;
    let repeats: Vec<Duration> = (0..5)
        .map(|_| measure_training(&*v.kernel, &mut training, &clock, &cfg).map(|s| s.per_call))
        .collect::<Result<_, _>>()?;
    let lo = repeats.iter().min().unwrap().as_secs_f64();
    let hi = repeats.iter().max().unwrap().as_secs_f64();
    println!("{p}: {repeats:?}");
    println!("  spread across repeats {:.1} %", (hi - lo) / lo * 100.0);
    let score = measure_training(&*v.kernel, &mut training, &clock, &cfg)?;
    println!("  replaces the reference: {}", better(&score, &reference));
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
