//! Conditioning on the diagnostic against conditioning on a first-stage F
//! pretest.

use bootdiag::diagnostics::DiagnosticConfig;
use bootdiag::discrepancy::DiscrepancyMeasure;
use bootdiag::experiments::{first_stage_pretest, post_test_bias, ExperimentPlan, PostStatistic};
use bootdiag::models::ScenarioSpec;
use bootdiag::probkernel::{kolmogorov_quantile, SeedSpec};

fn main() {
    let config = DiagnosticConfig::new(20, DiscrepancyMeasure::Ks);
    let strong = ExperimentPlan::new(vec![ScenarioSpec::iv_strong(1000, 3, 0.9)], config.clone(), 1000, SeedSpec::new(1));
    let t = kolmogorov_quantile(0.95).unwrap();
    let report = post_test_bias(&strong, PostStatistic::IvTStat, t).unwrap();
    println!(
        "diagnostic:  kept {}/{}  to Phi {:.4}  to unconditional {:.4}",
        report.kept(),
        report.total(),
        report.distance_to_normal,
        report.distance_to_unconditional
    );

    let weak = ExperimentPlan::new(vec![ScenarioSpec::iv_weak(1000, 1, 0.9, 4.0)], config, 1000, SeedSpec::new(2));
    let report = first_stage_pretest(&weak, 10.0).unwrap();
    println!(
        "F > 10:      kept {}/{}  to Phi {:.4}  to unconditional {:.4}",
        report.kept(),
        report.total(),
        report.distance_to_normal,
        report.distance_to_unconditional
    );
}
