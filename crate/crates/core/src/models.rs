//! Data-generating scenarios and their bootstrap schemes.
//!
//! Each [`ScenarioSpec`] variant simulates a data set, fits the estimator
//! and then serves conditionally i.i.d. bootstrap statistics through
//! [`DrawSource`]. Draw `i` of a [`BootstrapDrawStream`] is generated from
//! its own sub-stream `seed/i`, so a stream can be consumed sequentially or
//! as a parallel map over indices with identical results.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::discrepancy::{Discrepancy, DiscrepancyMeasure};
use crate::error::{Error, Result};
use crate::probkernel::{
    digest_f64s, phi, rademacher, splitmix64, stable_variate, Prob, SeedSpec, StreamRng,
    TailIndex,
};

/// Stream-path tag for the fixed IV instrument design.
pub const DESIGN_STREAM: u64 = 0x1D_E516;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum IvStrength {
    /// Fixed first-stage coefficients `pi`.
    Strong(Vec<f64>),
    /// Drifting coefficients `pi = lambda / sqrt(n)`.
    Weak(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IvScheme {
    ParametricGaussian,
    NonparametricIid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Ar1Regime {
    Stationary(f64),
    /// `alpha = 1 + c / n`.
    LocalToUnity(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ar1Scheme {
    RecursiveParametricGaussian,
    /// Recursive rebuild with innovations resampled from the centred residuals.
    RecursiveResidual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BoundaryRegime {
    Interior(f64),
    /// `theta0 = c / sqrt(n)`.
    NearBoundary(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Innovation {
    Gaussian,
    StudentT(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HeavyTailRegime {
    FiniteVariance(Innovation),
    Stable(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeavyTailScheme {
    IidResample,
    WildRademacher,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DeltaRegime {
    /// Mean `theta0` with `g'(theta0) = 2 theta0 != 0`.
    Regular(f64),
    /// `g'(theta0) = c / sqrt(n)`, i.e. `theta0 = c / (2 sqrt(n))`.
    NearSingular(f64),
}

/// One model configuration. `g(theta) = theta^2` in the delta-method case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScenarioSpec {
    Iv {
        n: usize,
        k: usize,
        rho_uv: f64,
        beta: f64,
        strength: IvStrength,
        scheme: IvScheme,
    },
    Ar1 {
        n: usize,
        regime: Ar1Regime,
        y0: f64,
        scheme: Ar1Scheme,
    },
    Boundary {
        n: usize,
        regime: BoundaryRegime,
    },
    HeavyTail {
        n: usize,
        regime: HeavyTailRegime,
        scheme: HeavyTailScheme,
    },
    DeltaMethod {
        n: usize,
        regime: DeltaRegime,
    },
}

fn unit_vector(k: usize, norm: f64) -> Vec<f64> {
    let mut v = vec![0.0; k];
    if k > 0 {
        v[0] = norm;
    }
    v
}

impl ScenarioSpec {
    /// Strong instruments with `pi = e1`.
    pub fn iv_strong(n: usize, k: usize, rho_uv: f64) -> Self {
        ScenarioSpec::Iv {
            n,
            k,
            rho_uv,
            beta: 0.0,
            strength: IvStrength::Strong(unit_vector(k, 1.0)),
            scheme: IvScheme::ParametricGaussian,
        }
    }

    /// Weak instruments with `lambda = lambda_norm * e1`.
    pub fn iv_weak(n: usize, k: usize, rho_uv: f64, lambda_norm: f64) -> Self {
        ScenarioSpec::Iv {
            n,
            k,
            rho_uv,
            beta: 0.0,
            strength: IvStrength::Weak(unit_vector(k, lambda_norm)),
            scheme: IvScheme::ParametricGaussian,
        }
    }

    pub fn ar1(n: usize, regime: Ar1Regime) -> Self {
        ScenarioSpec::Ar1 {
            n,
            regime,
            y0: 0.0,
            scheme: Ar1Scheme::RecursiveParametricGaussian,
        }
    }

    pub fn boundary(n: usize, regime: BoundaryRegime) -> Self {
        ScenarioSpec::Boundary { n, regime }
    }

    pub fn heavy_tail(n: usize, regime: HeavyTailRegime) -> Self {
        ScenarioSpec::HeavyTail {
            n,
            regime,
            scheme: HeavyTailScheme::IidResample,
        }
    }

    pub fn delta_method(n: usize, regime: DeltaRegime) -> Self {
        ScenarioSpec::DeltaMethod { n, regime }
    }

    pub fn n(&self) -> usize {
        match *self {
            ScenarioSpec::Iv { n, .. }
            | ScenarioSpec::Ar1 { n, .. }
            | ScenarioSpec::Boundary { n, .. }
            | ScenarioSpec::HeavyTail { n, .. }
            | ScenarioSpec::DeltaMethod { n, .. } => n,
        }
    }

    /// Variant family name.
    pub fn family(&self) -> &'static str {
        match self {
            ScenarioSpec::Iv { .. } => "iv",
            ScenarioSpec::Ar1 { .. } => "ar1",
            ScenarioSpec::Boundary { .. } => "boundary",
            ScenarioSpec::HeavyTail { .. } => "heavytail",
            ScenarioSpec::DeltaMethod { .. } => "delta",
        }
    }

    /// Short human-readable description used in tables.
    pub fn label(&self) -> String {
        match self {
            ScenarioSpec::Iv {
                k,
                rho_uv,
                strength,
                scheme,
                ..
            } => {
                let (kind, v) = match strength {
                    IvStrength::Strong(pi) => ("strong", pi),
                    IvStrength::Weak(l) => ("weak", l),
                };
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                let boot = match scheme {
                    IvScheme::ParametricGaussian => "param",
                    IvScheme::NonparametricIid => "iid",
                };
                format!("iv-{kind} k={k} norm={norm} rho={rho_uv} {boot}")
            }
            ScenarioSpec::Ar1 { regime, .. } => match regime {
                Ar1Regime::Stationary(a) => format!("ar1 alpha0={a}"),
                Ar1Regime::LocalToUnity(c) => format!("ar1 c={c}"),
            },
            ScenarioSpec::Boundary { regime, .. } => match regime {
                BoundaryRegime::Interior(t) => format!("boundary theta0={t}"),
                BoundaryRegime::NearBoundary(c) => format!("boundary c={c}"),
            },
            ScenarioSpec::HeavyTail { regime, scheme, .. } => {
                let boot = match scheme {
                    HeavyTailScheme::IidResample => "iid",
                    HeavyTailScheme::WildRademacher => "wild",
                };
                match regime {
                    HeavyTailRegime::FiniteVariance(Innovation::Gaussian) => {
                        format!("heavytail gaussian {boot}")
                    }
                    HeavyTailRegime::FiniteVariance(Innovation::StudentT(df)) => {
                        format!("heavytail t({df}) {boot}")
                    }
                    HeavyTailRegime::Stable(a) => format!("heavytail stable({a}) {boot}"),
                }
            }
            ScenarioSpec::DeltaMethod { regime, .. } => match regime {
                DeltaRegime::Regular(t) => format!("delta theta0={t}"),
                DeltaRegime::NearSingular(c) => format!("delta c={c}"),
            },
        }
    }

    /// The population first-stage coefficients, `lambda / sqrt(n)` under weak
    /// instruments. `None` outside the IV family.
    pub fn first_stage_pi(&self) -> Option<Vec<f64>> {
        match self {
            ScenarioSpec::Iv { n, strength, .. } => Some(match strength {
                IvStrength::Strong(p) => p.clone(),
                IvStrength::Weak(l) => l.iter().map(|v| v / (*n as f64).sqrt()).collect(),
            }),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidArgument(msg));
        if self.n() < 8 {
            return fail(format!("sample size n = {} is below 8", self.n()));
        }
        match self {
            ScenarioSpec::Iv {
                k,
                rho_uv,
                beta,
                strength,
                ..
            } => {
                if *k == 0 || *k > self.n() {
                    return fail(format!("instrument count k = {k} must be in 1..=n"));
                }
                if !(*rho_uv > 0.0 && *rho_uv < 1.0) {
                    return fail(format!("rho_uv = {rho_uv} must lie in (0, 1)"));
                }
                if !beta.is_finite() {
                    return fail("beta must be finite".into());
                }
                let v = match strength {
                    IvStrength::Strong(pi) => {
                        if pi.iter().all(|&p| p == 0.0) {
                            return fail("strong instruments need pi != 0".into());
                        }
                        pi
                    }
                    IvStrength::Weak(l) => l,
                };
                if v.len() != *k || v.iter().any(|x| !x.is_finite()) {
                    return fail(format!("first-stage vector must have {k} finite entries"));
                }
            }
            ScenarioSpec::Ar1 { regime, y0, .. } => {
                match regime {
                    Ar1Regime::Stationary(a) if !(a.abs() < 1.0) => {
                        return fail(format!("stationary alpha0 = {a} needs |alpha0| < 1"))
                    }
                    Ar1Regime::LocalToUnity(c) if !c.is_finite() => {
                        return fail("local-to-unity c must be finite".into())
                    }
                    _ => {}
                }
                if !y0.is_finite() {
                    return fail("y0 must be finite".into());
                }
            }
            ScenarioSpec::Boundary { regime, .. } => match regime {
                BoundaryRegime::Interior(t) if !(*t > 0.0 && t.is_finite()) => {
                    return fail(format!("interior theta0 = {t} must be positive"))
                }
                BoundaryRegime::NearBoundary(c) if !(*c >= 0.0 && c.is_finite()) => {
                    return fail(format!("near-boundary c = {c} must be non-negative"))
                }
                _ => {}
            },
            ScenarioSpec::HeavyTail { regime, .. } => match regime {
                HeavyTailRegime::FiniteVariance(Innovation::StudentT(df)) if !(*df > 4.0) => {
                    return fail(format!("Student-t innovations need df > 4, got {df}"))
                }
                HeavyTailRegime::Stable(a) if !(*a > 1.0 && *a < 2.0) => {
                    return fail(format!("stable tail index {a} must lie in (1, 2)"))
                }
                _ => {}
            },
            ScenarioSpec::DeltaMethod { regime, .. } => match regime {
                DeltaRegime::Regular(t) if !(*t != 0.0 && t.is_finite()) => {
                    return fail("regular delta method needs theta0 != 0".into())
                }
                DeltaRegime::NearSingular(c) if !(*c >= 0.0 && c.is_finite()) => {
                    return fail(format!("near-singular c = {c} must be non-negative"))
                }
                _ => {}
            },
        }
        Ok(())
    }
}

/// Fixed instruments: `n x k`, row-major, with `Z'Z / n = I_k`.
#[derive(Debug, Clone)]
pub struct IvDesign {
    n: usize,
    k: usize,
    z: Vec<f64>,
}

impl IvDesign {
    /// Draws a Gaussian matrix from `seed` and orthonormalises its columns.
    pub fn generate(n: usize, k: usize, seed: &SeedSpec) -> Result<Self> {
        let mut rng = seed.rng();
        let mut cols: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        // Modified Gram-Schmidt, two sweeps.
        for _ in 0..2 {
            for j in 0..k {
                for l in 0..j {
                    let (done, rest) = cols.split_at_mut(j);
                    let proj: f64 = done[l].iter().zip(&rest[0]).map(|(a, b)| a * b).sum();
                    for (c, q) in rest[0].iter_mut().zip(&done[l]) {
                        *c -= proj * q;
                    }
                }
                let norm = cols[j].iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm == 0.0 {
                    return Err(Error::DegenerateFit("instrument design is rank deficient".into()));
                }
                cols[j].iter_mut().for_each(|x| *x /= norm);
            }
        }
        let scale = (n as f64).sqrt();
        let mut z = vec![0.0; n * k];
        for (j, col) in cols.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                z[i * k + j] = v * scale;
            }
        }
        Ok(IvDesign { n, k, z })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.z[i * self.k..(i + 1) * self.k]
    }

    /// `S_zz = Z'Z / n`, row-major `k x k`.
    pub fn s_zz(&self) -> Vec<f64> {
        let k = self.k;
        let mut s = vec![0.0; k * k];
        for i in 0..self.n {
            let r = self.row(i);
            for a in 0..k {
                for b in 0..k {
                    s[a * k + b] += r[a] * r[b];
                }
            }
        }
        s.iter_mut().for_each(|v| *v /= self.n as f64);
        s
    }

    /// `(S_zx, S_zy)` for regressors `x` and outcomes `y`.
    fn cross_moments(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let k = self.k;
        let mut szx = vec![0.0; k];
        let mut szy = vec![0.0; k];
        for i in 0..self.n {
            let r = self.row(i);
            for j in 0..k {
                szx[j] += r[j] * x[i];
                szy[j] += r[j] * y[i];
            }
        }
        let nf = self.n as f64;
        szx.iter_mut().for_each(|v| *v /= nf);
        szy.iter_mut().for_each(|v| *v /= nf);
        (szx, szy)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// 2SLS `(S_xz S_zy) / (S_xz S_zx)`.
fn two_sls(szx: &[f64], szy: &[f64]) -> Result<f64> {
    let denom = dot(szx, szx);
    if denom == 0.0 {
        return Err(Error::DegenerateFit("first-stage cross moment is exactly zero".into()));
    }
    Ok(dot(szx, szy) / denom)
}

#[derive(Debug, Clone)]
pub struct IvFit {
    pub beta_hat: f64,
    pub pi_hat: Vec<f64>,
    /// `(pi_hat' pi_hat)^{-1/2}`.
    pub omega_hat: f64,
    /// Conventional first-stage F statistic.
    pub first_stage_f: f64,
    design: Arc<IvDesign>,
    fitted_x: Vec<f64>,
    resid_u: Vec<f64>,
    resid_v: Vec<f64>,
}

impl IvFit {
    pub fn design(&self) -> &IvDesign {
        &self.design
    }
}

#[derive(Debug, Clone)]
pub struct Ar1Fit {
    pub alpha_hat: f64,
    pub sigma_hat: f64,
    pub se: f64,
    y0: f64,
    residuals: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BoundaryFit {
    pub theta_hat: f64,
    pub mean: f64,
}

#[derive(Debug, Clone)]
pub struct HeavyTailFit {
    pub theta_hat: f64,
    pub sigma_hat: f64,
    centered: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DeltaFit {
    pub theta_hat: f64,
    pub sigma_hat: f64,
    pub tau_hat: f64,
}

#[derive(Debug, Clone)]
pub enum Fit {
    Iv(IvFit),
    Ar1(Ar1Fit),
    Boundary(BoundaryFit),
    HeavyTail(HeavyTailFit),
    DeltaMethod(DeltaFit),
}

/// Simulated data summarised by its estimates, plus what the bootstrap
/// needs to regenerate data.
#[derive(Debug, Clone)]
pub struct FittedModel {
    spec: ScenarioSpec,
    digest: u64,
    fit: Fit,
}

/// Anything that can produce one conditionally i.i.d. bootstrap statistic
/// from a fresh random stream.
pub trait DrawSource: Sync {
    fn draw(&self, rng: &mut StreamRng) -> Result<f64>;

    /// Identifies the conditioning data; seeds standardisation pre-passes.
    fn digest(&self) -> u64;
}

/// Draws exact `N(0, 1)` variates: a model whose bootstrap is valid by
/// construction.
#[derive(Debug, Clone, Copy, Default)]
pub struct StandardNormalSource;

impl DrawSource for StandardNormalSource {
    fn draw(&self, rng: &mut StreamRng) -> Result<f64> {
        Ok(rng.sample(StandardNormal))
    }

    fn digest(&self) -> u64 {
        0x5747_4E4F_524D
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// `(1/n) sum (v - mean)^2`.
fn pop_variance(v: &[f64], centre: f64) -> f64 {
    v.iter().map(|x| (x - centre) * (x - centre)).sum::<f64>() / v.len() as f64
}

fn theta_boundary(n: usize, regime: BoundaryRegime) -> f64 {
    match regime {
        BoundaryRegime::Interior(t) => t,
        BoundaryRegime::NearBoundary(c) => c / (n as f64).sqrt(),
    }
}

fn theta_delta(n: usize, regime: DeltaRegime) -> f64 {
    match regime {
        DeltaRegime::Regular(t) => t,
        DeltaRegime::NearSingular(c) => c / (2.0 * (n as f64).sqrt()),
    }
}

fn ar1_alpha(n: usize, regime: Ar1Regime) -> f64 {
    match regime {
        Ar1Regime::Stationary(a) => a,
        Ar1Regime::LocalToUnity(c) => 1.0 + c / n as f64,
    }
}

/// Least squares on `y_t = alpha y_{t-1} + e_t`; `path[0]` is `y_0`.
/// Returns `(alpha_hat, sigma_hat, se, residuals)`.
fn ar1_least_squares(path: &[f64]) -> Result<(f64, f64, f64, Vec<f64>)> {
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for w in path.windows(2) {
        sxy += w[1] * w[0];
        sxx += w[0] * w[0];
    }
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("autoregressive regressor is identically zero".into()));
    }
    let alpha = sxy / sxx;
    let resid: Vec<f64> = path.windows(2).map(|w| w[1] - alpha * w[0]).collect();
    let sigma = pop_variance(&resid, mean(&resid)).sqrt();
    if sigma == 0.0 {
        return Err(Error::DegenerateFit("autoregressive residuals are identically zero".into()));
    }
    Ok((alpha, sigma, sigma / sxx.sqrt(), resid))
}

/// Generates a data set for `spec` and fits it.
///
/// IV instruments come from the sub-stream `(master_seed, [DESIGN_STREAM])`
/// so every replication sharing a master seed shares the design.
pub fn simulate(spec: &ScenarioSpec, seed: &SeedSpec) -> Result<FittedModel> {
    spec.validate()?;
    let mut rng = seed.rng();
    let n = spec.n();
    let nf = n as f64;
    let (fit, digest) = match spec {
        ScenarioSpec::Iv {
            k,
            rho_uv,
            beta,
            ..
        } => {
            let design = Arc::new(IvDesign::generate(
                n,
                *k,
                &SeedSpec::with_path(seed.master_seed(), vec![DESIGN_STREAM]),
            )?);
            let pi = spec.first_stage_pi().expect("iv scenario");
            let tail = (1.0 - rho_uv * rho_uv).sqrt();
            let mut x = Vec::with_capacity(n);
            let mut y = Vec::with_capacity(n);
            for i in 0..n {
                let e1: f64 = rng.sample(StandardNormal);
                let e2: f64 = rng.sample(StandardNormal);
                let (u, v) = (e1, rho_uv * e1 + tail * e2);
                let xi = dot(design.row(i), &pi) + v;
                x.push(xi);
                y.push(beta * xi + u);
            }
            let (pi_hat, szy) = design.cross_moments(&x, &y);
            let beta_hat = two_sls(&pi_hat, &szy)?;
            let fitted_x: Vec<f64> = (0..n).map(|i| dot(design.row(i), &pi_hat)).collect();
            let mut resid_u: Vec<f64> = (0..n).map(|i| y[i] - beta_hat * x[i]).collect();
            let mut resid_v: Vec<f64> = (0..n).map(|i| x[i] - fitted_x[i]).collect();
            let pp = dot(&pi_hat, &pi_hat);
            let dof = (n - k).max(1) as f64;
            let sigma_v2 = resid_v.iter().map(|v| v * v).sum::<f64>() / dof;
            let first_stage_f = nf * pp / (*k as f64 * sigma_v2);
            let (mu, mv) = (mean(&resid_u), mean(&resid_v));
            resid_u.iter_mut().for_each(|v| *v -= mu);
            resid_v.iter_mut().for_each(|v| *v -= mv);
            let digest = digest_f64s(digest_f64s(1, &x), &y);
            (
                Fit::Iv(IvFit {
                    beta_hat,
                    omega_hat: pp.sqrt().recip(),
                    pi_hat,
                    first_stage_f,
                    design,
                    fitted_x,
                    resid_u,
                    resid_v,
                }),
                digest,
            )
        }
        ScenarioSpec::Ar1 { regime, y0, .. } => {
            let alpha0 = ar1_alpha(n, *regime);
            let mut path = Vec::with_capacity(n + 1);
            path.push(*y0);
            for t in 0..n {
                let e: f64 = rng.sample(StandardNormal);
                path.push(alpha0 * path[t] + e);
            }
            let (alpha_hat, sigma_hat, se, mut residuals) = ar1_least_squares(&path)?;
            let mu = mean(&residuals);
            residuals.iter_mut().for_each(|v| *v -= mu);
            (
                Fit::Ar1(Ar1Fit {
                    alpha_hat,
                    sigma_hat,
                    se,
                    y0: *y0,
                    residuals,
                }),
                digest_f64s(2, &path),
            )
        }
        ScenarioSpec::Boundary { regime, .. } => {
            let theta0 = theta_boundary(n, *regime);
            let y: Vec<f64> = (0..n)
                .map(|_| theta0 + rng.sample::<f64, _>(StandardNormal))
                .collect();
            let ybar = mean(&y);
            (
                Fit::Boundary(BoundaryFit {
                    theta_hat: ybar.max(0.0),
                    mean: ybar,
                }),
                digest_f64s(3, &y),
            )
        }
        ScenarioSpec::HeavyTail { regime, .. } => {
            let y: Vec<f64> = match regime {
                HeavyTailRegime::FiniteVariance(Innovation::Gaussian) => {
                    (0..n).map(|_| rng.sample(StandardNormal)).collect()
                }
                HeavyTailRegime::FiniteVariance(Innovation::StudentT(df)) => {
                    let t = StudentT::new(*df)
                        .map_err(|e| Error::InvalidArgument(format!("Student-t: {e}")))?;
                    (0..n).map(|_| rng.sample(t)).collect()
                }
                HeavyTailRegime::Stable(a) => {
                    let alpha = TailIndex::new(*a)?;
                    (0..n).map(|_| stable_variate(&mut rng, alpha)).collect()
                }
            };
            let theta_hat = mean(&y);
            let sigma_hat = pop_variance(&y, theta_hat).sqrt();
            if sigma_hat == 0.0 {
                return Err(Error::DegenerateFit("location data are constant".into()));
            }
            let digest = digest_f64s(4, &y);
            (
                Fit::HeavyTail(HeavyTailFit {
                    theta_hat,
                    sigma_hat,
                    centered: y.iter().map(|v| v - theta_hat).collect(),
                }),
                digest,
            )
        }
        ScenarioSpec::DeltaMethod { regime, .. } => {
            let theta0 = theta_delta(n, *regime);
            let y: Vec<f64> = (0..n)
                .map(|_| theta0 + rng.sample::<f64, _>(StandardNormal))
                .collect();
            let theta_hat = mean(&y);
            let sigma_hat = pop_variance(&y, theta_hat).sqrt();
            if sigma_hat == 0.0 {
                return Err(Error::DegenerateFit("delta-method data are constant".into()));
            }
            (
                Fit::DeltaMethod(DeltaFit {
                    theta_hat,
                    sigma_hat,
                    tau_hat: theta_hat * theta_hat,
                }),
                digest_f64s(5, &y),
            )
        }
    };
    Ok(FittedModel {
        spec: spec.clone(),
        digest: splitmix64(digest),
        fit,
    })
}

impl FittedModel {
    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    pub fn fit(&self) -> &Fit {
        &self.fit
    }

    /// The original statistic `T_n` at the true parameters in the spec.
    ///
    /// IV uses the estimated `omega_hat`, so the statistic is the usual
    /// 2SLS t-ratio; the location model studentises by `sigma_hat`.
    pub fn original_statistic(&self) -> Result<f64> {
        let n = self.spec.n();
        let rn = (n as f64).sqrt();
        match (&self.spec, &self.fit) {
            (ScenarioSpec::Iv { beta, .. }, Fit::Iv(f)) => Ok(rn * (f.beta_hat - beta) / f.omega_hat),
            (ScenarioSpec::Ar1 { regime, .. }, Fit::Ar1(f)) => {
                Ok((f.alpha_hat - ar1_alpha(n, *regime)) / f.se)
            }
            (ScenarioSpec::Boundary { regime, .. }, Fit::Boundary(f)) => {
                Ok(rn * (f.theta_hat - theta_boundary(n, *regime)))
            }
            (ScenarioSpec::HeavyTail { .. }, Fit::HeavyTail(f)) => Ok(rn * f.theta_hat / f.sigma_hat),
            (ScenarioSpec::DeltaMethod { regime, .. }, Fit::DeltaMethod(f)) => {
                let theta0 = theta_delta(n, *regime);
                Ok(rn * (f.tau_hat - theta0 * theta0))
            }
            _ => unreachable!("fit variant always matches its spec"),
        }
    }

    /// Opens a bootstrap stream over this fit.
    pub fn stream(&self, seed: SeedSpec) -> BootstrapDrawStream<'_> {
        BootstrapDrawStream::new(self, seed)
    }

    fn draw_iv<R: Rng>(&self, f: &IvFit, rng: &mut R) -> Result<f64> {
        let ScenarioSpec::Iv { rho_uv, scheme, .. } = &self.spec else {
            unreachable!()
        };
        let design = &f.design;
        let n = design.n;
        let k = design.k;
        let tail = (1.0 - rho_uv * rho_uv).sqrt();
        let mut szx = vec![0.0; k];
        let mut szy = vec![0.0; k];
        for i in 0..n {
            let (u, v) = match scheme {
                IvScheme::ParametricGaussian => {
                    let e1: f64 = rng.sample(StandardNormal);
                    let e2: f64 = rng.sample(StandardNormal);
                    (e1, rho_uv * e1 + tail * e2)
                }
                IvScheme::NonparametricIid => {
                    let j = rng.random_range(0..n);
                    (f.resid_u[j], f.resid_v[j])
                }
            };
            let x = f.fitted_x[i] + v;
            let y = f.beta_hat * x + u;
            let r = design.row(i);
            for j in 0..k {
                szx[j] += r[j] * x;
                szy[j] += r[j] * y;
            }
        }
        let beta_star = two_sls(&szx, &szy)?;
        Ok((n as f64).sqrt() * (beta_star - f.beta_hat) / f.omega_hat)
    }

    fn draw_ar1<R: Rng>(&self, f: &Ar1Fit, rng: &mut R) -> Result<f64> {
        let ScenarioSpec::Ar1 { n, scheme, .. } = &self.spec else {
            unreachable!()
        };
        let mut path = Vec::with_capacity(n + 1);
        path.push(f.y0);
        for t in 0..*n {
            let e = match scheme {
                Ar1Scheme::RecursiveParametricGaussian => rng.sample(StandardNormal),
                Ar1Scheme::RecursiveResidual => f.residuals[rng.random_range(0..*n)],
            };
            path.push(f.alpha_hat * path[t] + e);
        }
        let (alpha_star, _, se_star, _) = ar1_least_squares(&path)?;
        Ok((alpha_star - f.alpha_hat) / se_star)
    }
}

impl DrawSource for FittedModel {
    fn draw(&self, rng: &mut StreamRng) -> Result<f64> {
        let n = self.spec.n();
        let rn = (n as f64).sqrt();
        match &self.fit {
            Fit::Iv(f) => self.draw_iv(f, rng),
            Fit::Ar1(f) => self.draw_ar1(f, rng),
            Fit::Boundary(f) => {
                let z: f64 = rng.sample(StandardNormal);
                let ybar_star = f.theta_hat + z / rn;
                Ok((-rn * f.theta_hat).max(rn * (ybar_star - f.theta_hat)))
            }
            Fit::HeavyTail(f) => {
                let ScenarioSpec::HeavyTail { scheme, .. } = &self.spec else {
                    unreachable!()
                };
                // theta* - theta_hat, accumulated on the centred data.
                let shift = match scheme {
                    HeavyTailScheme::IidResample => {
                        (0..n).map(|_| f.centered[rng.random_range(0..n)]).sum::<f64>()
                    }
                    HeavyTailScheme::WildRademacher => {
                        f.centered.iter().map(|&e| e * rademacher(rng)).sum::<f64>()
                    }
                } / n as f64;
                Ok(rn * shift / f.sigma_hat)
            }
            Fit::DeltaMethod(f) => {
                let slope = 2.0 * f.theta_hat;
                if slope == 0.0 {
                    return Err(Error::DegenerateFit("g'(theta_hat) is exactly zero".into()));
                }
                let z: f64 = rng.sample(StandardNormal);
                let theta_star = f.theta_hat + f.sigma_hat * z / rn;
                Ok(rn * (theta_star * theta_star - f.tau_hat) / (slope * f.sigma_hat))
            }
        }
    }

    fn digest(&self) -> u64 {
        self.digest
    }
}

/// Conditional cdf of the boundary bootstrap statistic,
/// `Phi(x) 1{x >= -sqrt(n) theta_hat}`.
pub fn boundary_closed_form_cdf(fitted: &FittedModel, x: f64) -> Result<Prob> {
    let f = boundary_fit(fitted)?;
    let cut = -(fitted.spec.n() as f64).sqrt() * f.theta_hat;
    Ok(if x < cut {
        Prob::saturating(0.0)
    } else {
        Prob::saturating(phi(x))
    })
}

/// Kolmogorov distance of the closed-form boundary cdf to `Phi`,
/// `Phi(-sqrt(n) theta_hat)`.
pub fn boundary_closed_form_d(fitted: &FittedModel) -> Result<Discrepancy> {
    let f = boundary_fit(fitted)?;
    Ok(Discrepancy {
        value: phi(-(fitted.spec.n() as f64).sqrt() * f.theta_hat),
        measure: DiscrepancyMeasure::Ks,
    })
}

fn boundary_fit(fitted: &FittedModel) -> Result<&BoundaryFit> {
    match &fitted.fit {
        Fit::Boundary(f) => Ok(f),
        _ => Err(Error::InvalidArgument(format!(
            "closed-form cdf exists only for the boundary scenario, not `{}`",
            fitted.spec.family()
        ))),
    }
}

/// Sequential view over a draw source. Draw `i` uses sub-stream `seed/i`.
pub struct BootstrapDrawStream<'a> {
    source: &'a dyn DrawSource,
    seed: SeedSpec,
    next_index: u64,
}

impl<'a> BootstrapDrawStream<'a> {
    pub fn new(source: &'a dyn DrawSource, seed: SeedSpec) -> Self {
        BootstrapDrawStream {
            source,
            seed,
            next_index: 0,
        }
    }

    pub fn source(&self) -> &'a dyn DrawSource {
        self.source
    }

    pub fn seed(&self) -> &SeedSpec {
        &self.seed
    }

    pub fn draw_at(&self, index: u64) -> Result<f64> {
        let mut rng = self.seed.child(index).rng();
        self.source.draw(&mut rng)
    }

    pub fn next_draw(&mut self) -> Result<f64> {
        let value = self.draw_at(self.next_index)?;
        self.next_index += 1;
        Ok(value)
    }

    pub fn take_draws(&mut self, count: usize) -> Result<Vec<f64>> {
        (0..count).map(|_| self.next_draw()).collect()
    }
}

impl Iterator for BootstrapDrawStream<'_> {
    type Item = Result<f64>;

    fn next(&mut self) -> Option<Self::Item> {
        Some(self.next_draw())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_invalid_specs() {
        assert!(ScenarioSpec::boundary(4, BoundaryRegime::Interior(1.0)).validate().is_err());
        assert!(ScenarioSpec::iv_strong(100, 2, 1.0).validate().is_err());
        assert!(ScenarioSpec::ar1(100, Ar1Regime::Stationary(1.0)).validate().is_err());
        assert!(ScenarioSpec::heavy_tail(100, HeavyTailRegime::Stable(2.0)).validate().is_err());
        assert!(ScenarioSpec::heavy_tail(
            100,
            HeavyTailRegime::FiniteVariance(Innovation::StudentT(3.0))
        )
        .validate()
        .is_err());
        assert!(ScenarioSpec::delta_method(100, DeltaRegime::Regular(0.0)).validate().is_err());
        let bad_len = ScenarioSpec::Iv {
            n: 100,
            k: 2,
            rho_uv: 0.5,
            beta: 0.0,
            strength: IvStrength::Weak(vec![0.0]),
            scheme: IvScheme::ParametricGaussian,
        };
        assert!(bad_len.validate().is_err());
    }

    #[test]
    fn boundary_statistic_is_zero_at_the_truth() {
        // theta_hat = ybar = theta0 gives T_n = 0.
        let spec = ScenarioSpec::boundary(100, BoundaryRegime::Interior(0.5));
        let fitted = FittedModel {
            spec,
            digest: 0,
            fit: Fit::Boundary(BoundaryFit {
                theta_hat: 0.5,
                mean: 0.5,
            }),
        };
        assert_eq!(fitted.original_statistic().unwrap(), 0.0);
    }

    #[test]
    fn closed_form_boundary_values() {
        let make = |theta_hat: f64| FittedModel {
            spec: ScenarioSpec::boundary(100, BoundaryRegime::NearBoundary(0.0)),
            digest: 0,
            fit: Fit::Boundary(BoundaryFit {
                theta_hat,
                mean: theta_hat,
            }),
        };
        let at_zero = make(0.0);
        assert_eq!(boundary_closed_form_cdf(&at_zero, 0.0).unwrap().get(), 0.5);
        assert_eq!(boundary_closed_form_cdf(&at_zero, -0.1).unwrap().get(), 0.0);
        assert!((boundary_closed_form_cdf(&at_zero, 50.0).unwrap().get() - 1.0).abs() < 1e-15);
        assert_eq!(boundary_closed_form_d(&at_zero).unwrap().value, 0.5);
        // sqrt(n) theta_hat = 3
        let d = boundary_closed_form_d(&make(0.3)).unwrap().value;
        assert!((d - 1.349_898_031_630_094_5e-3).abs() < 1e-15, "{d}");
        let mut last = 1.0;
        for t in [0.0, 0.05, 0.1, 0.2, 0.4] {
            let d = boundary_closed_form_d(&make(t)).unwrap().value;
            assert!(d <= last);
            last = d;
        }
    }

    #[test]
    fn closed_form_needs_boundary_fit() {
        let spec = ScenarioSpec::delta_method(50, DeltaRegime::Regular(1.0));
        let fitted = simulate(&spec, &SeedSpec::new(1)).unwrap();
        assert!(boundary_closed_form_cdf(&fitted, 0.0).is_err());
    }

    #[test]
    fn delta_draw_with_flat_slope_is_degenerate() {
        let fitted = FittedModel {
            spec: ScenarioSpec::delta_method(50, DeltaRegime::NearSingular(0.0)),
            digest: 0,
            fit: Fit::DeltaMethod(DeltaFit {
                theta_hat: 0.0,
                sigma_hat: 1.0,
                tau_hat: 0.0,
            }),
        };
        let mut stream = fitted.stream(SeedSpec::new(0));
        assert!(matches!(stream.next_draw(), Err(Error::DegenerateFit(_))));
    }

    #[test]
    fn iv_statistic_matches_omega_identity() {
        let spec = ScenarioSpec::iv_strong(200, 2, 0.5);
        let fitted = simulate(&spec, &SeedSpec::new(11)).unwrap();
        let Fit::Iv(f) = fitted.fit() else { panic!() };
        let direct = (200f64).sqrt() * f.beta_hat * dot(&f.pi_hat, &f.pi_hat).sqrt();
        assert!((fitted.original_statistic().unwrap() - direct).abs() < 1e-12);
    }
}
