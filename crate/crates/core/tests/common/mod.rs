//! Brute-force oracles shared by the integration tests and the acceptance
//! suite. Nothing here calls the library's discrepancy code.
#![allow(dead_code)]

use statrs::function::erf::erfc;

/// Gaussian cdf through statrs, independent of the library's `libm` path.
/// statrs `erfc` is good to about 1e-10, which bounds oracle precision.
pub fn phi(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn density(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Composite Simpson rule with `panels` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut s = f(a) + f(b);
    for i in 1..panels {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (1..=n)
        .map(|i| {
            let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// Edf by linear scan.
pub fn edf(draws: &[f64], x: f64) -> f64 {
    draws.iter().filter(|&&d| d <= x).count() as f64 / draws.len() as f64
}

/// Edf left limit by linear scan.
pub fn edf_left(draws: &[f64], x: f64) -> f64 {
    draws.iter().filter(|&&d| d < x).count() as f64 / draws.len() as f64
}

/// `sup |G - Phi|` over `[lo, hi]` on a uniform grid refined by each draw
/// and a point just left of it.
pub fn sup_on_grid(draws: &[f64], lo: f64, hi: f64, points: usize) -> f64 {
    let mut xs: Vec<f64> = (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect();
    xs.push(lo);
    xs.push(hi);
    for &d in draws {
        xs.push(d);
        xs.push(d - 1e-10 * d.abs().max(1.0));
    }
    xs.retain(|x| *x >= lo && *x <= hi);
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    xs.iter()
        .map(|&x| {
            let g = sorted.partition_point(|&d| d <= x) as f64 / sorted.len() as f64;
            (g - phi(x)).abs()
        })
        .fold(0.0, f64::max)
}

/// `sup |G - Phi|` over the whole line.
pub fn ks_oracle(draws: &[f64]) -> f64 {
    let lo = draws.iter().cloned().fold(f64::INFINITY, f64::min) - 6.0;
    let hi = draws.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 6.0;
    // Tails beyond the grid contribute at most Phi(lo) and 1 - Phi(hi).
    sup_on_grid(draws, lo, hi, 20_001).max(phi(lo)).max(1.0 - phi(hi))
}

/// Integral over `x` of `(G(x) - Phi(x))^2 w(Phi(x), 1 - Phi(x)) phi(x)`,
/// Gauss-Legendre on pieces of width at most 0.25 between the draws, over
/// `[-30, 30]`. Upper-tail complements keep the far right accurate.
fn weighted_l2(draws: &[f64], weight: impl Fn(f64, f64) -> f64) -> f64 {
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    let mut cuts = vec![-30.0, 30.0];
    cuts.extend(&sorted);
    cuts.sort_by(f64::total_cmp);
    let rule = gauss_legendre(24);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let level = sorted.partition_point(|&d| d <= a) as f64 / m;
        let pieces = ((b - a) / 0.25).ceil() as usize;
        let h = (b - a) / pieces as f64;
        for p in 0..pieces {
            let mid = a + (p as f64 + 0.5) * h;
            total += rule
                .iter()
                .map(|&(t, wt)| {
                    let x = mid + 0.5 * h * t;
                    let (lower, upper) = (phi(x), phi(-x));
                    let gap = if level > 0.5 { upper - (1.0 - level) } else { level - lower };
                    wt * gap * gap * weight(lower, upper) * density(x)
                })
                .sum::<f64>()
                * 0.5
                * h;
        }
    }
    total
}

/// `sqrt( int (G - Phi)^2 dPhi )`.
pub fn cvm_oracle(draws: &[f64]) -> f64 {
    weighted_l2(draws, |_, _| 1.0).sqrt()
}

/// `sqrt( int (G - Phi)^2 / (Phi (1 - Phi)) dPhi )`.
pub fn ad_oracle(draws: &[f64]) -> f64 {
    weighted_l2(draws, |lower, upper| 1.0 / (lower * upper)).sqrt()
}

/// `sup |G - Phi|` over `[a, b]` (finite endpoints).
pub fn interval_oracle(draws: &[f64], a: f64, b: f64) -> f64 {
    sup_on_grid(draws, a, b, 20_001)
}

pub fn point_oracle(draws: &[f64], x: f64) -> f64 {
    (edf(draws, x) - phi(x)).abs()
}

/// Two-sided one-sample KS p-value of `values` against `U[0, 1]`, using
/// the asymptotic Kolmogorov law (statrs-free alternating series).
pub fn uniformity_p_value(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let d = v
        .iter()
        .enumerate()
        .map(|(i, &u)| ((i + 1) as f64 / n - u).max(u - i as f64 / n))
        .fold(0.0, f64::max);
    let t = n.sqrt() * d;
    let mut s = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * t * t).exp();
        s += if k % 2 == 1 { term } else { -term };
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Random samples with mixed sizes, shifts, scales and ties.
pub fn random_samples(count: usize, seed: u64) -> Vec<Vec<f64>> {
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let m = rng.random_range(1..=200);
            let shift: f64 = rng.random_range(-1.0..1.0);
            let scale: f64 = rng.random_range(0.5..2.0);
            let mut v: Vec<f64> = (0..m)
                .map(|_| shift + scale * rng.sample::<f64, _>(StandardNormal))
                .collect();
            if i % 10 == 0 && m > 3 {
                v[1] = v[0];
                v[2] = v[0];
            }
            v
        })
        .collect()
}
