macro_rules! example {
    ($name:ident, $file:literal) => {
        #[allow(dead_code)]
        mod $name {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", $file));
        }
    };
}

example!(tuning_space, "tuning_space.rs");
example!(generate_variants, "generate_variants.rs");
example!(filtered_measurement, "filtered_measurement.rs");
example!(governor_budget, "governor_budget.rs");
example!(hot_swap, "hot_swap.rs");
example!(synthetic_search, "synthetic_search.rs");
example!(distance_autotune, "distance_autotune.rs");
example!(lintra_autotune, "lintra_autotune.rs");
example!(report_aggregate, "report_aggregate.rs");

#[test]
fn examples_run() {
    tuning_space::run_example().unwrap();
    generate_variants::run_example().unwrap();
    filtered_measurement::run_example().unwrap();
    governor_budget::run_example().unwrap();
    hot_swap::run_example().unwrap();
    synthetic_search::run_example().unwrap();
    report_aggregate::run_example().unwrap();
}

#[test]
fn driver_examples_run() {
    distance_autotune::run_example().unwrap();
    lintra_autotune::run_example().unwrap();
}
