//! Every discrepancy measure on one sample.

use bootdiag::discrepancy::{evaluate, DiscrepancyMeasure, SortedSample};
use bootdiag::probkernel::{sample_std_normal, SeedSpec};

fn main() {
    let draws = sample_std_normal(&SeedSpec::new(7), 50);
    let shifted: Vec<f64> = draws.iter().map(|x| 1.5 * x + 0.3).collect();
    for (label, v) in [("N(0,1)", draws), ("N(0.3, 2.25)", shifted)] {
        let s = SortedSample::new(v).unwrap();
        println!("{label}");
        for text in ["ks", "sks+", "sks-", "cvm", "ad", "moment", "interval:-1,1", "point:0"] {
            let measure: DiscrepancyMeasure = text.parse().unwrap();
            println!("  {text:>14}  {:.5}", evaluate(&s, measure).unwrap().value);
        }
    }
}
