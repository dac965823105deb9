//! Kolmogorov cdf and quantiles, checked against a small simulation.

use bootdiag::discrepancy::{ks_distance, SortedSample};
use bootdiag::probkernel::{kolmogorov_cdf, kolmogorov_quantile, sample_std_normal, SeedSpec};

fn main() {
    for p in [0.5, 0.9, 0.95, 0.99, 0.999] {
        let q = kolmogorov_quantile(p).unwrap();
        println!("H^-1({p}) = {q:.6}   H(q) = {:.6}", kolmogorov_cdf(q).get());
    }

    let m = 2000;
    let seed = SeedSpec::new(3);
    let mut stats: Vec<f64> = (0..2000)
        .map(|i| {
            let s = SortedSample::new(sample_std_normal(&seed.child(i), m)).unwrap();
            (m as f64).sqrt() * ks_distance(&s).value
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    println!("simulated 95th percentile of sqrt(m) KS: {:.4}", stats[1899]);
}
