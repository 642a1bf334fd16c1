// Replacing the active kernel while another thread keeps calling it, and
// borrowing a few real calls to time a candidate.

use std::error::Error;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use ktune::clock::{Clock, MonotonicClock};
use ktune::dispatcher::Dispatcher;
use ktune::evaluator::measure_real;
use ktune::variantgen::{DistanceGenerator, KernelGenerator};
use ktune::TuningPoint;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let dim = 64;
    let generator = DistanceGenerator::new(dim);
    let clock: Arc<dyn Clock> = Arc::new(MonotonicClock::new());
    let slot = Dispatcher::new(generator.reference(), clock);
    let stop = AtomicBool::new(false);
    let a: Vec<f32> = (0..dim).map(|i| i as f32 / dim as f32).collect();
    let b = vec![0.25f32; dim];
    let want = generator.reference().eval(&a, &b);

    std::thread::scope(|s| -> Result<(), Box<dyn Error>> {
        let app = s.spawn(|| {
            let mut worst = 0.0f32;
            while !stop.load(Ordering::Relaxed) {
                let got = slot.invoke(|k| k.eval(&a, &b));
                worst = worst.max(((got - want) / want).abs());
            }
            worst
        });

        let candidate = generator
            .generate(&TuningPoint { hot_uf: 2, cold_uf: 2, vect_len: 2, vectorize: true, ..TuningPoint::SCALAR })?
            .kernel;
        slot.begin_trial(candidate.clone(), 32)?;
        while !slot.trial_progress().is_some_and(|p| p.is_complete()) {
            std::thread::sleep(Duration::from_micros(50));
        }
        let trial = measure_real(&slot.finish_trial()?)?;
        println!("trial on live calls: {:?}/call over {} calls", trial.per_call, trial.samples);

        let epoch = slot.install(candidate);
        println!("installed, epoch {epoch}");
        std::thread::sleep(Duration::from_millis(20));
        stop.store(true, Ordering::Relaxed);
        let worst = app.join().expect("app thread");
        println!("{} calls served, worst relative error {worst:.1e}", slot.call_count());
        Ok(())
    })
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
