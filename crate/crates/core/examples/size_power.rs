//! Rejection rates across scenarios and m.

use bootdiag::diagnostics::DiagnosticConfig;
use bootdiag::discrepancy::DiscrepancyMeasure;
use bootdiag::experiments::{size_power_csv, size_power_table, ExperimentPlan};
use bootdiag::models::{Ar1Regime, ScenarioSpec};
use bootdiag::probkernel::SeedSpec;

fn main() {
    for m in [10, 20, 50] {
        let scenarios = vec![
            ScenarioSpec::ar1(1000, Ar1Regime::Stationary(0.5)),
            ScenarioSpec::ar1(1000, Ar1Regime::LocalToUnity(0.0)),
        ];
        let config = DiagnosticConfig::new(m, DiscrepancyMeasure::Ks);
        let plan = ExperimentPlan::new(scenarios, config, 200, SeedSpec::new(11));
        let rows = size_power_table(&plan).unwrap();
        print!("{}", size_power_csv(&rows, &plan.alphas));
    }
}
