// When the tuner may spend time: a fixed share of elapsed time, plus a
// share of what faster kernels have already saved.

use std::error::Error;
use std::time::Duration;

use ktune::governor::{estimate_gains, record_overhead, should_regenerate, GainsLedger, OverheadKind, OverheadLedger, Policy};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let policy = Policy::new(0.01, 0.10, Duration::from_millis(10))?;
    let ms = Duration::from_millis;
    let us = Duration::from_micros;

    let mut overhead = OverheadLedger::default();
    let mut gains = GainsLedger::new(us(10), 0);
    let candidate = ms(2);

    for (elapsed, calls) in [(ms(100), 10_000u64), (ms(300), 30_000), (ms(1_000), 100_000)] {
        gains.observe(calls);
        let g = estimate_gains(&gains);
        let go = should_regenerate(&policy, &overhead, g, elapsed, candidate);
        println!(
            "t={elapsed:?}: spent {:?}, allowance {:?}, next candidate {candidate:?} -> {}",
            overhead.total(),
            policy.allowance(elapsed, g),
            if go { "regenerate" } else { "wait" }
        );
        if go {
            record_overhead(&mut overhead, OverheadKind::Generation, us(300));
            record_overhead(&mut overhead, OverheadKind::Evaluation, us(1_700));
        }
    }

    // A kernel at 8 us/call instead of 10 saves 2 us on every later call,
    // and a tenth of that becomes extra allowance.
    gains.switch(us(8), 100_000);
    gains.observe(600_000);
    let g = estimate_gains(&gains);
    println!("\nafter 500k calls at 8 us: gains {g:?}, allowance at 6 s {:?}", policy.allowance(ms(6_000), g));
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
