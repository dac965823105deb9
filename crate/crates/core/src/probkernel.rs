//! Probability kernels shared by every other module.
//!
//! Gaussian and Kolmogorov distribution functions, a hierarchical seeding
//! scheme and the samplers built on top of it. Everything here is a pure
//! function of its inputs: a [`SeedSpec`] fully determines the stream it
//! produces, no matter which thread asks for it or in which order.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf;

use crate::error::{Error, Result};

/// Random number generator behind every stream.
pub type StreamRng = ChaCha8Rng;

/// A probability in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Prob(f64);

impl Prob {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Prob(value))
        } else {
            Err(Error::Domain(format!("{value} is not a probability")))
        }
    }

    /// Clamps into `[0, 1]`; NaN maps to 0.
    pub(crate) fn saturating(value: f64) -> Self {
        if value.is_nan() {
            Prob(0.0)
        } else {
            Prob(value.clamp(0.0, 1.0))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl From<Prob> for f64 {
    fn from(p: Prob) -> f64 {
        p.0
    }
}

/// Tail index of a symmetric stable law; `2` is the Gaussian case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailIndex(f64);

impl TailIndex {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 1.0 && alpha <= 2.0 {
            Ok(TailIndex(alpha))
        } else {
            Err(Error::Domain(format!(
                "stable tail index must lie in (1, 2], got {alpha}"
            )))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Standard normal cdf.
pub fn std_normal_cdf(x: f64) -> Prob {
    Prob::saturating(phi(x))
}

/// Raw Gaussian cdf used on hot paths.
#[inline]
pub(crate) fn phi(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Gaussian survival function `1 - Phi(x)` without cancellation.
#[inline]
pub(crate) fn phi_upper(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

#[inline]
pub(crate) fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Inverse of [`std_normal_cdf`] on the open unit interval.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "normal quantile needs 0 < p < 1, got {p}"
        )));
    }
    let mut x = -SQRT_2 * erf::erfc_inv(2.0 * p);
    // Newton polish; work in the tail where the residual is representable.
    for _ in 0..3 {
        let residual = if x < 0.0 {
            phi(x) - p
        } else {
            (1.0 - p) - phi_upper(x)
        };
        let density = std_normal_pdf(x);
        if density <= 0.0 || residual == 0.0 {
            break;
        }
        x -= residual / density;
    }
    Ok(x)
}

const SERIES_FLOOR: f64 = 1e-16;

/// Cdf of the Kolmogorov distribution, the law of the supremum of the
/// absolute Brownian bridge.
///
/// For `t >= 1` the alternating series `1 - 2 sum (-1)^(k-1) exp(-2 k^2 t^2)`
/// is summed until the next term drops below `1e-16`. Below `1` the same
/// function is evaluated through its Jacobi-theta dual
/// `sqrt(2 pi)/t sum exp(-(2k-1)^2 pi^2 / (8 t^2))`, which converges quickly
/// exactly where the alternating form does not.
pub fn kolmogorov_cdf(t: f64) -> Prob {
    if t.is_nan() || t <= 0.0 {
        return Prob(0.0);
    }
    if t < 1.0 {
        let scale = (2.0 * PI).sqrt() / t;
        let base = PI * PI / (8.0 * t * t);
        let mut sum = 0.0;
        let mut k = 1u32;
        loop {
            let odd = f64::from(2 * k - 1);
            let term = (-odd * odd * base).exp();
            sum += term;
            if scale * term < SERIES_FLOOR || k > 1000 {
                break;
            }
            k += 1;
        }
        return Prob::saturating(scale * sum);
    }
    let mut sum = 0.0;
    let mut k = 1u32;
    loop {
        let kf = f64::from(k);
        let term = (-2.0 * kf * kf * t * t).exp();
        if term < SERIES_FLOOR {
            break;
        }
        sum += if k % 2 == 1 { term } else { -term };
        k += 1;
    }
    Prob::saturating(1.0 - 2.0 * sum)
}

/// Quantile of the Kolmogorov distribution by bisection.
pub fn kolmogorov_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "Kolmogorov quantile needs 0 < p < 1, got {p}"
        )));
    }
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    while kolmogorov_cdf(hi).get() < p {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if kolmogorov_cdf(mid).get() < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Master seed plus a hierarchical path naming one independent stream.
///
/// Identical `(master_seed, stream_path)` pairs yield bit-identical
/// streams; sibling paths yield independent ones. Streams are ChaCha8
/// keyed by a SplitMix64 digest of the pair, so a stream never depends on
/// how many draws other streams consumed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    master_seed: u64,
    stream_path: Vec<u64>,
}

impl SeedSpec {
    pub fn new(master_seed: u64) -> Self {
        SeedSpec {
            master_seed,
            stream_path: Vec::new(),
        }
    }

    pub fn with_path(master_seed: u64, stream_path: impl Into<Vec<u64>>) -> Self {
        SeedSpec {
            master_seed,
            stream_path: stream_path.into(),
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_path(&self) -> &[u64] {
        &self.stream_path
    }

    /// The sub-stream one level below this one.
    pub fn child(&self, index: u64) -> SeedSpec {
        let mut stream_path = Vec::with_capacity(self.stream_path.len() + 1);
        stream_path.extend_from_slice(&self.stream_path);
        stream_path.push(index);
        SeedSpec {
            master_seed: self.master_seed,
            stream_path,
        }
    }

    /// Appends several levels at once.
    pub fn descend(&self, indices: &[u64]) -> SeedSpec {
        let mut stream_path = self.stream_path.clone();
        stream_path.extend_from_slice(indices);
        SeedSpec {
            master_seed: self.master_seed,
            stream_path,
        }
    }

    pub fn rng(&self) -> StreamRng {
        let mut h = splitmix64(self.master_seed);
        for (depth, &node) in self.stream_path.iter().enumerate() {
            let salt = splitmix64((depth as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03));
            h = splitmix64(h ^ splitmix64(node ^ salt));
        }
        h = splitmix64(h ^ self.stream_path.len() as u64);
        let mut key = [0u8; 32];
        for (i, chunk) in key.chunks_exact_mut(8).enumerate() {
            let word = splitmix64(h.wrapping_add((i as u64 + 1).wrapping_mul(GOLDEN_GAMMA)));
            chunk.copy_from_slice(&word.to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finaliser.
pub(crate) fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Order-sensitive digest of a slice of reals (bit patterns, not values).
pub(crate) fn digest_f64s(state: u64, values: &[f64]) -> u64 {
    values
        .iter()
        .fold(splitmix64(state ^ values.len() as u64), |h, v| {
            splitmix64(h ^ v.to_bits())
        })
}

pub fn sample_std_normal(seed: &SeedSpec, count: usize) -> Vec<f64> {
    let mut rng = seed.rng();
    (0..count).map(|_| rng.sample(StandardNormal)).collect()
}

/// One symmetric alpha-stable variate (scale 1, location 0) by the
/// Chambers-Mallows-Stuck construction from a uniform angle and a unit
/// exponential.
pub fn stable_variate<R: Rng + ?Sized>(rng: &mut R, alpha: TailIndex) -> f64 {
    let a = alpha.get();
    let u: f64 = rng.sample(Open01);
    let angle = PI * (u - 0.5);
    let w: f64 = rng.sample(Exp1);
    (a * angle).sin() / angle.cos().powf(1.0 / a)
        * (((1.0 - a) * angle).cos() / w).powf((1.0 - a) / a)
}

pub fn sample_symmetric_stable(seed: &SeedSpec, alpha: TailIndex, count: usize) -> Vec<f64> {
    let mut rng = seed.rng();
    (0..count).map(|_| stable_variate(&mut rng, alpha)).collect()
}

#[inline]
pub(crate) fn rademacher<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

pub fn sample_rademacher(seed: &SeedSpec, count: usize) -> Vec<f64> {
    let mut rng = seed.rng();
    (0..count).map(|_| rademacher(&mut rng)).collect()
}
