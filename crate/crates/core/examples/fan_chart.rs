//! Spread of the bootstrap cdf across realisations.

use bootdiag::experiments::{fan_chart, linspace, FAN_LEVELS};
use bootdiag::models::ScenarioSpec;
use bootdiag::probkernel::SeedSpec;

fn main() {
    let grid = linspace(-2.0, 2.0, 9);
    for spec in [ScenarioSpec::iv_strong(1000, 1, 0.9), ScenarioSpec::iv_weak(1000, 1, 0.9, 0.0)] {
        let data = fan_chart(&spec, 200, 2000, &grid, &SeedSpec::new(4)).unwrap();
        println!("{}  levels {FAN_LEVELS:?}", spec.label());
        for (x, band) in data.x.iter().zip(&data.bands) {
            let cells: Vec<String> = band.iter().map(|v| format!("{v:.3}")).collect();
            println!("  {x:+.1}  {}", cells.join(" "));
        }
        println!("  80% width at 0: {:.3}", data.width_80(0.0));
    }
}
