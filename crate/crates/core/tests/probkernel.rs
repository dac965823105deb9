mod common;

use bootdiag::discrepancy::{two_sample_ks, SortedSample};
use bootdiag::probkernel::*;

#[test]
fn phi_at_196_matches_quadrature() {
    let oracle = 0.5 + common::simpson(common::density, 0.0, 1.96, 20_000);
    let value = std_normal_cdf(1.96).get();
    assert!((value - oracle).abs() < 1e-15, "{value} vs {oracle}");
    assert!((value - 0.975_002_104_851_780).abs() < 1e-14);
    assert_eq!(std_normal_cdf(0.0).get(), 0.5);
    assert!((std_normal_cdf(40.0).get() - 1.0).abs() <= 1e-15);
}

#[test]
fn normal_quantile_round_trips() {
    let p = std_normal_cdf(1.96).get();
    assert!((std_normal_quantile(p).unwrap() - 1.96).abs() < 1e-9);
    let z = std_normal_quantile(1e-6).unwrap();
    assert!(z < 0.0);
    assert!((std_normal_cdf(z).get() - 1e-6).abs() < 1e-12);
    assert_eq!(std_normal_quantile(0.5).unwrap(), 0.0);
    assert!(std_normal_quantile(0.0).is_err());
    assert!(std_normal_quantile(1.0).is_err());
}

#[test]
fn kolmogorov_reference_points() {
    assert_eq!(kolmogorov_cdf(0.0).get(), 0.0);
    assert!((kolmogorov_cdf(10.0).get() - 1.0).abs() <= 1e-15);
    assert!((kolmogorov_cdf(1.358).get() - 0.95).abs() < 5e-4);
    assert!((kolmogorov_quantile(0.95).unwrap() - 1.358).abs() < 1e-3);
    let med = kolmogorov_quantile(0.5).unwrap();
    assert!((kolmogorov_cdf(med).get() - 0.5).abs() < 1e-10);
    let tiny = kolmogorov_quantile(1e-300).unwrap();
    assert!(tiny > 0.0 && tiny < kolmogorov_quantile(1e-10).unwrap());
}

#[test]
fn kolmogorov_quantile_inverts_cdf() {
    let mut t = 0.3;
    while t <= 2.5 {
        let back = kolmogorov_quantile(kolmogorov_cdf(t).get()).unwrap();
        assert!((back - t).abs() < 1e-8, "t = {t}: {back}");
        t += 0.01;
    }
}

#[test]
fn cdfs_are_monotone_on_dense_grids() {
    let mut last_phi = 0.0;
    let mut last_h = 0.0;
    for i in 0..20_000 {
        let x = -10.0 + 20.0 * i as f64 / 19_999.0;
        let p = std_normal_cdf(x).get();
        assert!(p >= last_phi);
        last_phi = p;
        let t = 3.0 * i as f64 / 19_999.0;
        let h = kolmogorov_cdf(t).get();
        assert!(h >= last_h, "H not monotone at {t}");
        last_h = h;
    }
}

#[test]
fn normal_sampler_moments_and_determinism() {
    let seed = SeedSpec::with_path(17, vec![1, 2]);
    assert!(sample_std_normal(&seed, 0).is_empty());
    let z = sample_std_normal(&seed, 1_000_000);
    let n = z.len() as f64;
    let mean = z.iter().sum::<f64>() / n;
    let var = z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    assert!(mean.abs() < 4e-3, "{mean}");
    assert!((var - 1.0).abs() < 1e-2, "{var}");
    assert_eq!(z[..1000], sample_std_normal(&seed, 1000)[..]);
}

#[test]
fn sibling_streams_are_uncorrelated() {
    let a = sample_std_normal(&SeedSpec::with_path(5, vec![0]), 1_000_000);
    let b = sample_std_normal(&SeedSpec::with_path(5, vec![1]), 1_000_000);
    let n = a.len() as f64;
    let corr = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / n;
    assert!(corr.abs() < 4.0 / n.sqrt(), "{corr}");
}

#[test]
fn stable_two_is_scaled_normal() {
    let two = TailIndex::new(2.0).unwrap();
    let seed = SeedSpec::new(99);
    assert!(sample_symmetric_stable(&seed, two, 0).is_empty());
    let s = sample_symmetric_stable(&seed, two, 1_000_000);
    let n = s.len() as f64;
    let var = s.iter().map(|x| x * x).sum::<f64>() / n;
    assert!((var - 2.0).abs() < 0.04, "{var}");
    let z: Vec<f64> = sample_std_normal(&SeedSpec::new(100), 1_000_000)
        .into_iter()
        .map(|x| x * std::f64::consts::SQRT_2)
        .collect();
    let d = two_sample_ks(&SortedSample::new(s).unwrap(), &SortedSample::new(z).unwrap());
    assert!(d < 0.003, "{d}");
}

#[test]
fn stable_tail_slope() {
    let alpha = TailIndex::new(1.5).unwrap();
    let mut s: Vec<f64> = sample_symmetric_stable(&SeedSpec::new(7), alpha, 1_000_000)
        .into_iter()
        .map(f64::abs)
        .collect();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let xs: Vec<f64> = (0..=10).map(|i| 10.0 * 10f64.powf(i as f64 / 10.0)).collect();
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .map(|&x| {
            let above = s.len() - s.partition_point(|&v| v <= x);
            (x.ln(), (above as f64 / n).ln())
        })
        .collect();
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!((slope + 1.5).abs() < 0.1, "slope {slope}");
}

#[test]
fn rademacher_support_and_mean() {
    assert!(sample_rademacher(&SeedSpec::new(1), 0).is_empty());
    let r = sample_rademacher(&SeedSpec::new(1), 1_000_000);
    assert!(r.iter().all(|&x| x == 1.0 || x == -1.0));
    let mean = r.iter().sum::<f64>() / r.len() as f64;
    assert!(mean.abs() < 4e-3);
}
