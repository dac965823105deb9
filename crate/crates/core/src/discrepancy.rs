//! Empirical distribution functions and their distance to the Gaussian cdf.
//!
//! Every supremum here is computed on the exact candidate set: the edf is
//! a step function, so `sup |G - F|` over an interval is attained at an
//! endpoint or at one of the two one-sided limits of a jump. The integral
//! norms use the classical sorted-sample identities.
//!
//! The algorithms are written once against a [`ReferenceCdf`] so the same
//! code scores Gaussian draws against `Phi` and, when building null tables,
//! uniform draws against the identity.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probkernel::{phi, phi_upper, Prob};

/// Non-empty, ascending sample of finite draws.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedSample {
    draws: Vec<f64>,
}

impl SortedSample {
    /// Sorts `draws` and validates them.
    pub fn new(mut draws: Vec<f64>) -> Result<Self> {
        check_finite(&draws)?;
        draws.sort_unstable_by(f64::total_cmp);
        Ok(SortedSample { draws })
    }

    /// Wraps draws that are already non-decreasing.
    pub fn from_sorted(draws: Vec<f64>) -> Result<Self> {
        check_finite(&draws)?;
        if let Some(i) = draws.windows(2).position(|w| w[0] > w[1]) {
            return Err(Error::InvalidSample(format!(
                "draws decrease at position {}",
                i + 1
            )));
        }
        Ok(SortedSample { draws })
    }

    pub fn draws(&self) -> &[f64] {
        &self.draws
    }

    /// Number of draws `m`.
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.draws
    }
}

fn check_finite(draws: &[f64]) -> Result<()> {
    if draws.is_empty() {
        return Err(Error::InvalidSample("sample is empty".into()));
    }
    if let Some(i) = draws.iter().position(|x| !x.is_finite()) {
        return Err(Error::InvalidSample(format!(
            "draw {} at position {i} is not finite",
            draws[i]
        )));
    }
    Ok(())
}

/// Closed interval with possibly infinite endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    lower: f64,
    upper: f64,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        let ok = !lower.is_nan()
            && !upper.is_nan()
            && lower <= upper
            && lower != f64::INFINITY
            && upper != f64::NEG_INFINITY;
        if ok {
            Ok(Interval { lower, upper })
        } else {
            Err(Error::InvalidArgument(format!(
                "interval [{lower}, {upper}] is empty"
            )))
        }
    }

    pub fn real_line() -> Self {
        Interval {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        }
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }
}

/// Symmetric positive-definite 2x2 weight matrix `[[a, b], [b, d]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Omega {
    a: f64,
    b: f64,
    d: f64,
}

impl Omega {
    pub fn new(a: f64, b: f64, d: f64) -> Result<Self> {
        let det = a * d - b * b;
        if a.is_finite() && b.is_finite() && d.is_finite() && a > 0.0 && det > 0.0 {
            Ok(Omega { a, b, d })
        } else {
            Err(Error::SingularOmega)
        }
    }

    /// `diag(15, 96)`: asymptotic covariance of `(Z^3, Z^4 - 3)` for
    /// standard normal `Z`.
    pub fn gaussian_moments() -> Self {
        Omega {
            a: 15.0,
            b: 0.0,
            d: 96.0,
        }
    }

    pub fn entries(&self) -> [f64; 3] {
        [self.a, self.b, self.d]
    }

    /// `v' Omega^{-1} v`.
    pub fn quadratic_form(&self, v: [f64; 2]) -> f64 {
        let det = self.a * self.d - self.b * self.b;
        (self.d * v[0] * v[0] - 2.0 * self.b * v[0] * v[1] + self.a * v[1] * v[1]) / det
    }
}

impl Default for Omega {
    fn default() -> Self {
        Omega::gaussian_moments()
    }
}

/// Norm or seminorm used to measure `G - Phi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DiscrepancyMeasure {
    Ks,
    SignedKsPlus,
    SignedKsMinus,
    Cvm,
    Ad,
    IntervalSup(Interval),
    PointAbs(f64),
    MomentBased(Omega),
}

impl DiscrepancyMeasure {
    /// Whether the diagnostic statistic scales by `sqrt(m)`; the moment
    /// measure is a quadratic form and scales by `m`.
    pub fn is_norm_type(&self) -> bool {
        !matches!(self, DiscrepancyMeasure::MomentBased(_))
    }
}

impl fmt::Display for DiscrepancyMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiscrepancyMeasure::Ks => write!(f, "ks"),
            DiscrepancyMeasure::SignedKsPlus => write!(f, "sks+"),
            DiscrepancyMeasure::SignedKsMinus => write!(f, "sks-"),
            DiscrepancyMeasure::Cvm => write!(f, "cvm"),
            DiscrepancyMeasure::Ad => write!(f, "ad"),
            DiscrepancyMeasure::IntervalSup(a) => {
                write!(f, "interval:{},{}", fmt_bound(a.lower), fmt_bound(a.upper))
            }
            DiscrepancyMeasure::PointAbs(x) => write!(f, "point:{x}"),
            DiscrepancyMeasure::MomentBased(o) if *o == Omega::gaussian_moments() => {
                write!(f, "moment")
            }
            DiscrepancyMeasure::MomentBased(o) => write!(f, "moment:{},{},{}", o.a, o.b, o.d),
        }
    }
}

fn fmt_bound(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x}")
    }
}

fn parse_bound(s: &str) -> Option<f64> {
    match s.trim() {
        "inf" | "+inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        other => other.parse().ok(),
    }
}

impl FromStr for DiscrepancyMeasure {
    type Err = Error;

    /// Parses `ks|cvm|ad|sks+|sks-|interval:a,b|point:x|moment[:a,b,d]`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("unknown measure `{s}`"));
        let (head, tail) = match s.split_once(':') {
            Some((h, t)) => (h.trim(), Some(t)),
            None => (s.trim(), None),
        };
        let nums = |t: &str| -> Result<Vec<f64>> {
            t.split(',').map(|v| parse_bound(v).ok_or_else(bad)).collect()
        };
        match (head, tail) {
            ("ks", None) => Ok(DiscrepancyMeasure::Ks),
            ("sks+", None) => Ok(DiscrepancyMeasure::SignedKsPlus),
            ("sks-", None) => Ok(DiscrepancyMeasure::SignedKsMinus),
            ("cvm", None) => Ok(DiscrepancyMeasure::Cvm),
            ("ad", None) => Ok(DiscrepancyMeasure::Ad),
            ("moment", None) => Ok(DiscrepancyMeasure::MomentBased(Omega::default())),
            ("moment", Some(t)) => match nums(t)?[..] {
                [a, b, d] => Ok(DiscrepancyMeasure::MomentBased(Omega::new(a, b, d)?)),
                _ => Err(bad()),
            },
            ("interval", Some(t)) => match nums(t)?[..] {
                [a, b] => Ok(DiscrepancyMeasure::IntervalSup(Interval::new(a, b)?)),
                _ => Err(bad()),
            },
            ("point", Some(t)) => match nums(t)?[..] {
                [x] if x.is_finite() => Ok(DiscrepancyMeasure::PointAbs(x)),
                _ => Err(bad()),
            },
            _ => Err(bad()),
        }
    }
}

/// A realised discrepancy `||G - Phi||`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discrepancy {
    pub value: f64,
    pub measure: DiscrepancyMeasure,
}

/// Continuous reference cdf the edf is compared against.
pub(crate) trait ReferenceCdf {
    fn cdf(&self, x: f64) -> f64;
    /// `1 - cdf(x)`, accurate in the upper tail.
    fn sf(&self, x: f64) -> f64;
}

pub(crate) struct Gaussian;

impl ReferenceCdf for Gaussian {
    #[inline]
    fn cdf(&self, x: f64) -> f64 {
        phi(x)
    }
    #[inline]
    fn sf(&self, x: f64) -> f64 {
        phi_upper(x)
    }
}

/// Identity cdf on `[0, 1]`.
pub(crate) struct Uniform01;

impl ReferenceCdf for Uniform01 {
    #[inline]
    fn cdf(&self, x: f64) -> f64 {
        x.clamp(0.0, 1.0)
    }
    #[inline]
    fn sf(&self, x: f64) -> f64 {
        1.0 - x.clamp(0.0, 1.0)
    }
}

/// Number of draws `<= u`.
fn count_le(draws: &[f64], u: f64) -> usize {
    draws.partition_point(|&x| x <= u)
}

/// Right-continuous edf `#(draws <= u) / m`.
pub fn edf_at(sample: &SortedSample, u: f64) -> Prob {
    Prob::saturating(count_le(&sample.draws, u) as f64 / sample.len() as f64)
}

/// `(sup (G - F), sup (F - G))`, each floored at zero.
pub(crate) fn one_sided_with<R: ReferenceCdf>(draws: &[f64], reference: &R) -> (f64, f64) {
    let m = draws.len() as f64;
    let mut plus = 0.0_f64;
    let mut minus = 0.0_f64;
    for (i, &x) in draws.iter().enumerate() {
        let f = reference.cdf(x);
        plus = plus.max((i + 1) as f64 / m - f);
        minus = minus.max(f - i as f64 / m);
    }
    (plus, minus)
}

pub(crate) fn interval_sup_with<R: ReferenceCdf>(
    draws: &[f64],
    interval: Interval,
    reference: &R,
) -> f64 {
    let m = draws.len() as f64;
    let (a, b) = (interval.lower, interval.upper);
    let mut best = 0.0_f64;
    for end in [a, b] {
        if end.is_finite() {
            let g = count_le(draws, end) as f64 / m;
            best = best.max((g - reference.cdf(end)).abs());
        }
    }
    // Jumps in (a, b]: both the left limit and the value at the jump.
    let start = draws.partition_point(|&x| x <= a);
    let stop = draws.partition_point(|&x| x <= b);
    for (offset, &x) in draws[start..stop].iter().enumerate() {
        let i = start + offset;
        let f = reference.cdf(x);
        best = best
            .max(((i + 1) as f64 / m - f).abs())
            .max((i as f64 / m - f).abs());
    }
    best
}

/// Squared `L2(dF)` distance, `omega^2`.
pub(crate) fn cvm_sq_with<R: ReferenceCdf>(draws: &[f64], reference: &R) -> f64 {
    let m = draws.len() as f64;
    let sum: f64 = draws
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let d = reference.cdf(x) - (2 * i + 1) as f64 / (2.0 * m);
            d * d
        })
        .sum();
    (sum + 1.0 / (12.0 * m)) / m
}

/// Squared weighted `L2` distance with weight `1 / (F (1 - F))`, i.e. the
/// Anderson-Darling `A^2 / m`.
pub(crate) fn ad_sq_with<R: ReferenceCdf>(draws: &[f64], reference: &R) -> Result<f64> {
    let m = draws.len();
    let mut log_cdf = Vec::with_capacity(m);
    let mut log_sf = Vec::with_capacity(m);
    for (index, &x) in draws.iter().enumerate() {
        let p = reference.cdf(x);
        if p <= 0.0 || p >= 1.0 {
            return Err(Error::DegenerateTail { index, value: x });
        }
        log_cdf.push(p.ln());
        log_sf.push(reference.sf(x).ln());
    }
    let mf = m as f64;
    let sum: f64 = (0..m)
        .map(|i| (2 * i + 1) as f64 * (log_cdf[i] + log_sf[m - 1 - i]))
        .sum();
    Ok((-1.0 - sum / (mf * mf)).max(0.0))
}

pub fn ks_distance(sample: &SortedSample) -> Discrepancy {
    let (plus, minus) = one_sided_with(&sample.draws, &Gaussian);
    Discrepancy {
        value: plus.max(minus),
        measure: DiscrepancyMeasure::Ks,
    }
}

/// Which one-sided Kolmogorov statistic to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `sup (G - Phi)`
    Plus,
    /// `sup (Phi - G)`
    Minus,
}

pub fn signed_ks(sample: &SortedSample, side: Side) -> Discrepancy {
    let (plus, minus) = one_sided_with(&sample.draws, &Gaussian);
    match side {
        Side::Plus => Discrepancy {
            value: plus,
            measure: DiscrepancyMeasure::SignedKsPlus,
        },
        Side::Minus => Discrepancy {
            value: minus,
            measure: DiscrepancyMeasure::SignedKsMinus,
        },
    }
}

pub fn cvm_distance(sample: &SortedSample) -> Discrepancy {
    Discrepancy {
        value: cvm_sq_with(&sample.draws, &Gaussian).sqrt(),
        measure: DiscrepancyMeasure::Cvm,
    }
}

pub fn ad_distance(sample: &SortedSample) -> Result<Discrepancy> {
    Ok(Discrepancy {
        value: ad_sq_with(&sample.draws, &Gaussian)?.sqrt(),
        measure: DiscrepancyMeasure::Ad,
    })
}

pub fn interval_sup(sample: &SortedSample, interval: Interval) -> Discrepancy {
    Discrepancy {
        value: interval_sup_with(&sample.draws, interval, &Gaussian),
        measure: DiscrepancyMeasure::IntervalSup(interval),
    }
}

pub fn point_abs(sample: &SortedSample, x: f64) -> Discrepancy {
    Discrepancy {
        value: (edf_at(sample, x).get() - phi(x)).abs(),
        measure: DiscrepancyMeasure::PointAbs(x),
    }
}

/// `v = (mean x^3, mean x^4 - 3)`.
pub fn moment_vector(draws: &[f64]) -> [f64; 2] {
    let m = draws.len() as f64;
    let (s3, s4) = draws.iter().fold((0.0, 0.0), |(s3, s4), &x| {
        let x2 = x * x;
        (s3 + x2 * x, s4 + x2 * x2)
    });
    [s3 / m, s4 / m - 3.0]
}

/// Quadratic form `v' Omega^{-1} v` of the third/fourth moment gap.
pub fn moment_discrepancy(sample: &SortedSample, omega: Omega) -> Discrepancy {
    Discrepancy {
        value: omega.quadratic_form(moment_vector(&sample.draws)),
        measure: DiscrepancyMeasure::MomentBased(omega),
    }
}

/// Dispatches on `measure`.
pub fn evaluate(sample: &SortedSample, measure: DiscrepancyMeasure) -> Result<Discrepancy> {
    Ok(match measure {
        DiscrepancyMeasure::Ks => ks_distance(sample),
        DiscrepancyMeasure::SignedKsPlus => signed_ks(sample, Side::Plus),
        DiscrepancyMeasure::SignedKsMinus => signed_ks(sample, Side::Minus),
        DiscrepancyMeasure::Cvm => cvm_distance(sample),
        DiscrepancyMeasure::Ad => ad_distance(sample)?,
        DiscrepancyMeasure::IntervalSup(a) => interval_sup(sample, a),
        DiscrepancyMeasure::PointAbs(x) => point_abs(sample, x),
        DiscrepancyMeasure::MomentBased(o) => moment_discrepancy(sample, o),
    })
}

/// Exact `sup |G_m - F|` against a right-continuous cdf `F` that is
/// continuous except at the listed `atoms`. `cdf_left` returns `F(x-)`.
pub fn sup_distance_to<F, L>(sample: &SortedSample, cdf: F, cdf_left: L, atoms: &[f64]) -> f64
where
    F: Fn(f64) -> f64,
    L: Fn(f64) -> f64,
{
    let draws = &sample.draws;
    let m = draws.len() as f64;
    let mut best = 0.0_f64;
    let mut i = 0;
    while i < draws.len() {
        let x = draws[i];
        let end = i + draws[i..].partition_point(|&y| y <= x);
        best = best
            .max((end as f64 / m - cdf(x)).abs())
            .max((i as f64 / m - cdf_left(x)).abs());
        i = end;
    }
    for &a in atoms {
        let g = count_le(draws, a) as f64 / m;
        let g_left = draws.partition_point(|&x| x < a) as f64 / m;
        best = best.max((g - cdf(a)).abs()).max((g_left - cdf_left(a)).abs());
    }
    best
}

/// Two-sample Kolmogorov-Smirnov distance `sup |G_a - G_b|`.
pub fn two_sample_ks(a: &SortedSample, b: &SortedSample) -> f64 {
    let (xa, xb) = (&a.draws, &b.draws);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut best = 0.0_f64;
    while i < xa.len() && j < xb.len() {
        let t = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= t {
            i += 1;
        }
        while j < xb.len() && xb[j] <= t {
            j += 1;
        }
        best = best.max((i as f64 / na - j as f64 / nb).abs());
    }
    best
}
