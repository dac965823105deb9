//! Simulated reference tables and p-values for the non-KS measures.

use bootdiag::diagnostics::{test_draws, DiagnosticConfig, ReferencePolicy, ReferenceTable, TableSpec};
use bootdiag::discrepancy::DiscrepancyMeasure;
use bootdiag::probkernel::{sample_std_normal, SeedSpec};

fn main() {
    let seed = SeedSpec::new(0x5EED);
    for text in ["cvm", "ad", "interval:-1,1"] {
        let measure: DiscrepancyMeasure = text.parse().unwrap();
        let table = ReferenceTable::build(measure, 1000, 20_000, seed.clone()).unwrap();
        println!(
            "{text:>14}: q90 {:.4}  q95 {:.4}  q99 {:.4}",
            table.quantile(0.90).unwrap(),
            table.quantile(0.95).unwrap(),
            table.quantile(0.99).unwrap()
        );
    }

    let policy = ReferencePolicy {
        tables: TableSpec { m_ref: 1000, replications: 20_000, seed },
        build_missing: true,
    };
    let config = DiagnosticConfig::new(50, DiscrepancyMeasure::Cvm).with_reference(policy);
    let out = test_draws(sample_std_normal(&SeedSpec::new(1), 50), &config).unwrap();
    println!("cvm test on 50 normal draws: T* = {:.4}  p = {:.3}", out.t_star, out.p_value.get());
}
