// Instantiating kernel variants at tuning points and checking them
// against the reference kernels.

use std::error::Error;

use ktune::variantgen::{DistanceGenerator, KernelGenerator, LintraGenerator};
use ktune::TuningPoint;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let dim = 128;
    let generator = DistanceGenerator::new(dim);
    let reference = generator.reference();
    let a: Vec<f32> = (0..dim).map(|i| (i as f32 * 0.37).sin()).collect();
    let b: Vec<f32> = (0..dim).map(|i| (i as f32 * 0.11).cos()).collect();
    let want = reference.eval(&a, &b);

    let points = [
        TuningPoint::SCALAR,
        TuningPoint { hot_uf: 2, cold_uf: 4, vect_len: 2, ..TuningPoint::SCALAR },
        TuningPoint { hot_uf: 2, cold_uf: 2, vect_len: 1, vectorize: true, pld_stride: 64, ..TuningPoint::SCALAR },
        TuningPoint { hot_uf: 1, cold_uf: 7, vect_len: 3, vectorize: true, sched_instr: true, ..TuningPoint::SCALAR },
    ];
    for p in points {
        let v = generator.generate(&p)?;
        let got = v.kernel.eval(&a, &b);
        println!(
            "{p}\n  {:?} body, {} trips, leftover {}, {} register slots, prefetch {:?}, generated in {:?}\n  result {got} (reference {want}, rel err {:.1e})",
            v.meta.body,
            v.meta.trip_count,
            v.meta.leftover,
            v.meta.register_slots_used,
            v.meta.prefetch,
            v.generation_time,
            ((got - want) / want).abs(),
        );
    }

    // A hole: too many live registers.
    let hole = TuningPoint { hot_uf: 4, vect_len: 4, ..TuningPoint::SCALAR };
    match generator.generate(&hole) {
        Ok(_) => println!("unexpectedly generated {hole}"),
        Err(e) => println!("\n{e}"),
    }

    let lintra = LintraGenerator::new(3, 100);
    let row: Vec<f32> = (0..300).map(|i| i as f32).collect();
    let (mul, add) = ([2.0, 0.5, 1.0], [1.0, 0.0, -1.0]);
    let mut expect = vec![0.0; 300];
    lintra.reference().apply(&row, &mul, &add, &mut expect);
    let v = lintra.generate(&TuningPoint { hot_uf: 3, cold_uf: 2, vect_len: 1, vectorize: true, ..TuningPoint::SCALAR })?;
    let mut out = vec![0.0; 300];
    v.kernel.apply(&row, &mul, &add, &mut out);
    println!("lintra variant bit-identical to reference: {}", out == expect);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
