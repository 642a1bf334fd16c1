// The image driver: write an input image, transform it row by row
// through the tuner, and compare the output file with a naive transform.

use std::error::Error;

use ktune::harness::{self, band_factors, lintra_oracle, BackendKind, RunConfig};
use ktune::image::Image;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let dir = std::env::temp_dir().join("ktune-lintra");
    std::fs::create_dir_all(&dir)?;
    let input_path = dir.join("input.ktim");
    let output_path = dir.join("output.ktim");
    let input = Image::random(640, 480, 3, 5);
    input.save(&input_path)?;

    for backend in [BackendKind::Native, BackendKind::Synthetic] {
        let cfg = RunConfig {
            kernel: ktune::KernelKind::Lintra,
            backend,
            input: Some(input_path.clone()),
            output: Some(output_path.clone()),
            passes: Some(200),
            ..RunConfig::default()
        };
        let (report, _) = harness::run(&cfg)?;
        let r = &report.runs[0];
        let out = Image::load(&output_path)?;
        let want = lintra_oracle(&input, &band_factors(&cfg.mul, 3), &band_factors(&cfg.add, 3));
        println!(
            "{backend:?}: {} calls in {:?}, explored {}, {} swaps, final {}, output matches oracle: {}",
            r.kernel_calls,
            r.run_time,
            r.explored,
            r.swaps.len(),
            r.final_point.map_or("reference".into(), |p| p.to_string()),
            out == want,
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
