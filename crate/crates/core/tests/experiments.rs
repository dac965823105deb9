use bootdiag::diagnostics::{default_alpha_grid, rejection_profile, DiagnosticConfig, RejectionProfile};
use bootdiag::discrepancy::DiscrepancyMeasure;
use bootdiag::experiments::*;
use bootdiag::models::*;
use bootdiag::probkernel::{kolmogorov_quantile, SeedSpec};

fn ks(m: usize) -> DiagnosticConfig {
    DiagnosticConfig::new(m, DiscrepancyMeasure::Ks)
}

fn rate(scenario: ScenarioSpec, m: usize, r: usize, seed: u64) -> (f64, f64) {
    let plan = ExperimentPlan::new(vec![scenario], ks(m), r, SeedSpec::new(seed));
    let rows = size_power_table(&plan).unwrap();
    assert_eq!(rows[0].status, RowStatus::Ok);
    rows[0].rate_at(0.05)
}

#[test]
fn iv_strong_size() {
    let (r, se) = rate(ScenarioSpec::iv_strong(1000, 3, 0.9), 20, 1000, 31);
    assert!(within_tolerance(r, 0.05, 0.03, se), "{r}");
}

#[test]
fn iv_weak_power() {
    let (r, _) = rate(ScenarioSpec::iv_weak(1000, 3, 0.9, 0.0), 20, 1000, 32);
    assert!(r >= 0.8, "{r}");
}

#[test]
fn ar1_power_exceeds_size() {
    let (power, _) = rate(ScenarioSpec::ar1(1000, Ar1Regime::LocalToUnity(0.0)), 20, 500, 33);
    let (size, _) = rate(ScenarioSpec::ar1(1000, Ar1Regime::Stationary(0.5)), 20, 500, 34);
    assert!(power > size);
    assert!(power - size >= 0.5, "power {power}, size {size}");
}

#[test]
fn boundary_power_grows_with_m() {
    let mut last: Option<(f64, f64)> = None;
    for m in [10, 20, 50] {
        let (r, se) = rate(ScenarioSpec::boundary(1000, BoundaryRegime::NearBoundary(0.0)), m, 500, 35);
        if let Some((prev, prev_se)) = last {
            assert!(r >= prev - 2.0 * (se * se + prev_se * prev_se).sqrt(), "m = {m}: {r} < {prev}");
        }
        last = Some((r, se));
    }
}

#[test]
fn size_power_rows_are_reproducible() {
    let scenarios = vec![
        ScenarioSpec::heavy_tail(200, HeavyTailRegime::FiniteVariance(Innovation::StudentT(5.0))),
        ScenarioSpec::heavy_tail(200, HeavyTailRegime::Stable(1.5)),
    ];
    let plan = ExperimentPlan::new(scenarios, ks(20), 100, SeedSpec::new(5));
    let a = with_workers(1, || size_power_table(&plan)).unwrap().unwrap();
    let b = with_workers(4, || size_power_table(&plan)).unwrap().unwrap();
    assert_eq!(a, b);
    assert_eq!(size_power_csv(&a, &plan.alphas), size_power_csv(&b, &plan.alphas));
    for row in &a {
        assert_eq!(row.datasets, 100);
        for (rate, se) in row.rates.iter().zip(&row.se) {
            assert!((0.0..=1.0).contains(rate));
            assert_eq!(*se, binomial_se(*rate, row.datasets));
        }
    }
}

#[test]
fn mixed_families_are_rejected() {
    let plan = ExperimentPlan::new(
        vec![ScenarioSpec::iv_strong(100, 1, 0.5), ScenarioSpec::ar1(100, Ar1Regime::Stationary(0.5))],
        ks(20),
        10,
        SeedSpec::new(1),
    );
    assert!(plan.validate().is_err());
    let empty = ExperimentPlan::new(vec![ScenarioSpec::iv_strong(100, 1, 0.5)], ks(20), 0, SeedSpec::new(1));
    assert!(empty.validate().is_err());
}

#[test]
fn post_test_report_partitions_datasets() {
    let plan = ExperimentPlan::new(vec![ScenarioSpec::iv_strong(400, 1, 0.9)], ks(20), 400, SeedSpec::new(6));
    let t = kolmogorov_quantile(0.95).unwrap();
    let report = post_test_bias(&plan, PostStatistic::IvTStat, t).unwrap();
    assert_eq!(report.total(), 400);
    assert!(report.kept() <= 400 && report.kept() > 300);
    assert!(report.conditional.windows(2).all(|w| w[0] <= w[1]));
    assert!(post_test_bias(&plan, PostStatistic::Ar1TStat, t).is_err());
    assert!(matches!(
        post_test_bias(&plan, PostStatistic::IvTStat, -1.0),
        Err(bootdiag::Error::EmptyConditioning)
    ));
    let csv = post_test_csv(&report);
    assert!(csv.lines().count() >= 2);
}

#[test]
fn first_stage_pretest_distorts() {
    let plan = ExperimentPlan::new(vec![ScenarioSpec::iv_weak(1000, 1, 0.9, 4.0)], ks(20), 4000, SeedSpec::new(7));
    let report = first_stage_pretest(&plan, 10.0).unwrap();
    assert!(report.kept() > 100 && report.kept() < 4000);
    assert!(report.distance_to_normal > 0.035, "{}", report.distance_to_normal);
}

#[test]
fn fan_chart_concentration() {
    let grid = linspace(-3.0, 3.0, 61);
    let strong = fan_chart(&ScenarioSpec::iv_strong(1000, 1, 0.9), 200, 2000, &grid, &SeedSpec::new(8)).unwrap();
    assert!(strong.width_80(0.0) <= 0.06, "{}", strong.width_80(0.0));
    let weak = fan_chart(&ScenarioSpec::iv_weak(1000, 1, 0.9, 0.0), 200, 2000, &grid, &SeedSpec::new(9)).unwrap();
    assert!(weak.width_80(0.0) > 4.0 * strong.width_80(0.0));
    for data in [&strong, &weak] {
        for band in &data.bands {
            assert!(band.windows(2).all(|w| w[0] <= w[1]));
        }
        for j in 0..FAN_LEVELS.len() {
            assert!(data.bands.windows(2).all(|w| w[0][j] <= w[1][j]));
        }
    }
    let csv = fan_chart_csv(&strong);
    assert_eq!(csv.lines().next().unwrap(), "x,q01,q10,q25,q50,q75,q90,q99");
    assert_eq!(csv.lines().count(), 62);
    assert!(fan_chart(&ScenarioSpec::iv_strong(100, 1, 0.9), 99, 2000, &grid, &SeedSpec::new(1)).is_err());
    assert!(fan_chart(&ScenarioSpec::iv_strong(100, 1, 0.9), 100, 999, &grid, &SeedSpec::new(1)).is_err());
}

#[test]
fn weak_fan_width_example() {
    let grid = linspace(-3.0, 3.0, 61);
    let weak = fan_chart(&ScenarioSpec::iv_weak(1000, 1, 0.9, 0.0), 200, 2000, &grid, &SeedSpec::new(9)).unwrap();
    assert!(weak.width_80(0.0) >= 0.3, "{}", weak.width_80(0.0));
}

/// `P(u / (l + v) <= 0)` for standard normals `(u, v)` with correlation
/// `rho`, by quadrature over `v`.
fn sign_mismatch(l: f64, rho: f64) -> f64 {
    let s = (1.0 - rho * rho).sqrt();
    let phi = |x: f64| 0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2);
    let density = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    // Given v, u <= 0 has probability Phi(-rho v / s).
    let steps = 200_000;
    let h = 20.0 / steps as f64;
    (0..steps)
        .map(|i| {
            let v = -10.0 + (i as f64 + 0.5) * h;
            let below = phi(-rho * v / s);
            let p = if l + v > 0.0 { below } else { 1.0 - below };
            p * density(v) * h
        })
        .sum()
}

#[test]
fn weak_fan_width_matches_exact_law() {
    // With k = 1 and lambda = 0, G_n(0) = g(|l|) with l ~ N(0, 1) and g
    // increasing, so its 10% and 90% quantiles are g at the |N(0,1)|
    // quantiles 0.1257 and 1.6449.
    let q10 = bootdiag::probkernel::std_normal_quantile(0.55).unwrap();
    let q90 = bootdiag::probkernel::std_normal_quantile(0.95).unwrap();
    let exact = sign_mismatch(q90, 0.9) - sign_mismatch(q10, 0.9);
    assert!((exact - 0.3013).abs() < 1e-3, "{exact}");
    let grid = [0.0];
    // The law of G_n(0) does not depend on n here, so a small n keeps this quick.
    let weak = fan_chart(&ScenarioSpec::iv_weak(200, 1, 0.9, 0.0), 1000, 2000, &grid, &SeedSpec::new(19)).unwrap();
    assert!((weak.width_80(0.0) - exact).abs() < 0.02, "{} vs {exact}", weak.width_80(0.0));
}

#[test]
fn band_statistic_zero_on_exact_profile() {
    let p: Vec<f64> = (1..=100).map(|i| i as f64 / 100.0).collect();
    let alphas: Vec<f64> = (1..100).map(|j| j as f64 / 100.0).collect();
    let profile = RejectionProfile::from_p_values(&p, &alphas, 20, 0).unwrap();
    let band = band_diagnostic(&profile).unwrap();
    assert_eq!(band.statistic, 0.0);
    assert_eq!(band.p_value, 1.0);
    let short = RejectionProfile::from_p_values(&p[..50], &alphas, 20, 0).unwrap();
    assert!(band_diagnostic(&short).is_err());
}

#[test]
fn band_statistic_diverges_under_boundary() {
    let spec = ScenarioSpec::boundary(400, BoundaryRegime::NearBoundary(0.0));
    let config = ks(50);
    let mut medians = Vec::new();
    for k in [100, 400, 1600] {
        let mut stats: Vec<f64> = (0..9)
            .map(|rep| {
                let fitted = simulate(&spec, &SeedSpec::with_path(40, vec![rep])).unwrap();
                let profile =
                    rejection_profile(&fitted, &SeedSpec::with_path(41, vec![rep]), k, &config, &default_alpha_grid())
                        .unwrap();
                band_diagnostic(&profile).unwrap().statistic
            })
            .collect();
        stats.sort_by(f64::total_cmp);
        medians.push(stats[4]);
    }
    assert!(medians[0] < medians[1] && medians[1] < medians[2], "{medians:?}");
}

#[test]
fn quantile_helpers() {
    assert_eq!(linspace(0.0, 1.0, 3), vec![0.0, 0.5, 1.0]);
    assert_eq!(linspace(2.0, 5.0, 1), vec![2.0]);
    assert!(linspace(0.0, 1.0, 0).is_empty());
    let v = [1.0, 2.0, 3.0, 4.0];
    assert_eq!(quantile_sorted(&v, 0.0), 1.0);
    assert_eq!(quantile_sorted(&v, 1.0), 4.0);
    assert_eq!(quantile_sorted(&v, 0.5), 2.5);
}

#[test]
fn empty_size_power_csv_has_header() {
    let csv = size_power_csv(&[], &[0.05]);
    assert_eq!(csv.lines().count(), 1);
    assert!(csv.starts_with("scenario,n,m,measure,datasets,degenerate,status,rate_0.05,se_0.05"));
}
