//! Diagnostic on a pool of externally produced draws.

use bootdiag::cli::{run_external, ExternalDrawPool};
use bootdiag::diagnostics::{default_alpha_grid, DiagnosticConfig};
use bootdiag::discrepancy::DiscrepancyMeasure;
use bootdiag::probkernel::{sample_std_normal, SeedSpec};
use rand_distr::{Distribution, StudentT};

fn main() {
    let mut rng = SeedSpec::new(9).rng();
    let t3 = StudentT::new(3.0).unwrap();
    let heavy: Vec<f64> = (0..10_000).map(|_| t3.sample(&mut rng)).collect();
    let normal = sample_std_normal(&SeedSpec::new(10), 10_000);
    let config = DiagnosticConfig::new(20, DiscrepancyMeasure::Ks);
    for (label, draws) in [("t(3)", heavy), ("N(0,1)", normal)] {
        let pool = ExternalDrawPool::new(label, draws).unwrap();
        let result = run_external(&pool, 20, 500, &config, &SeedSpec::new(11), false, &default_alpha_grid()).unwrap();
        println!(
            "{label:>7}: pi_hat(0.01) = {:.3}  pi_hat(0.05) = {:.3}  pi_hat(0.10) = {:.3}",
            result.profile.at(0.01),
            result.profile.at(0.05),
            result.profile.at(0.10)
        );
    }
}
