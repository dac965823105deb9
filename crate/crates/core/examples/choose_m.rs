//! Choosing m and reading a rejection profile.

use bootdiag::diagnostics::{choose_m, default_alpha_grid, rejection_profile, DiagnosticConfig, MRule};
use bootdiag::discrepancy::DiscrepancyMeasure;
use bootdiag::experiments::band_diagnostic;
use bootdiag::models::{simulate, DeltaRegime, ScenarioSpec};
use bootdiag::probkernel::SeedSpec;

fn main() {
    for n in [100, 1000, 10_000, 100_000] {
        let log = choose_m(n, MRule::default()).unwrap();
        let power = choose_m(n, MRule::PowerRule { gamma: 0.5 }).unwrap();
        println!("n = {n:>6}: log rule m = {:>3}, sqrt rule m = {:>3}", log.m, power.m);
    }

    let n = 1000;
    let m = choose_m(n, MRule::default()).unwrap().m;
    let config = DiagnosticConfig::new(m, DiscrepancyMeasure::Ks);
    for spec in [
        ScenarioSpec::delta_method(n, DeltaRegime::Regular(1.0)),
        ScenarioSpec::delta_method(n, DeltaRegime::NearSingular(0.0)),
    ] {
        let fitted = simulate(&spec, &SeedSpec::new(1)).unwrap();
        let profile = rejection_profile(&fitted, &SeedSpec::new(2), 1000, &config, &default_alpha_grid()).unwrap();
        let band = band_diagnostic(&profile).unwrap();
        println!(
            "{:<32} pi_hat(0.05) = {:.3}  band {:.3} (p {:.3})",
            spec.label(),
            profile.at(0.05),
            band.statistic,
            band.p_value
        );
    }
}
