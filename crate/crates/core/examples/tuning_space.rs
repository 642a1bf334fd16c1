// The seven-parameter space, its size, and how a point maps onto a
// specialized loop for one kernel shape.

use std::error::Error;

use ktune::space::{elements_per_iteration, leftover_count, structural_case, trip_count, space_size};
use ktune::{KernelKind, KernelShape, Param, ParameterDomain, RegisterBudget, TuningPoint, TuningSpace};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let space = TuningSpace::default();
    println!("default space: {} points", space_size(&space));
    for d in space.domains() {
        println!("  {:<9} {} values, {}..={}", d.param().name(), d.len(), d.min(), d.max());
    }

    let budget = RegisterBudget::for_kind(KernelKind::Distance);
    let feasible = space.points().filter(|p| ktune::variantgen::is_feasible(p, &budget)).count();
    println!("feasible under a {}-slot register file: {feasible}", budget.total_slots);

    let shape = KernelShape::distance(32);
    println!("\ndistance kernel, dimension 32:");
    for (hot, cold, vect, ve) in [(1, 1, 1, false), (2, 4, 1, false), (1, 3, 2, false), (4, 2, 2, true), (2, 8, 2, true)] {
        let p = TuningPoint {
            hot_uf: hot,
            cold_uf: cold,
            vect_len: vect,
            vectorize: ve,
            ..TuningPoint::SCALAR
        };
        println!(
            "  {p}: {} elements/iteration, {} trips, leftover {}, {:?}",
            elements_per_iteration(&p, &shape),
            trip_count(&p, &shape),
            leftover_count(&p, &shape),
            structural_case(&p, &shape),
        );
    }

    // Domains are configuration: a power-of-two coldUF shrinks the space.
    let small = space.with_domain(ParameterDomain::new(Param::ColdUf, vec![1, 2, 4, 8, 16, 32, 64])?);
    println!("\nwith coldUF in powers of two: {} points", space_size(&small));
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
