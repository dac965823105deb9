//! Monte Carlo studies built on the diagnostic: size and power tables,
//! post-test bias, fan charts of the bootstrap cdf and the band statistic of
//! a rejection profile.
//!
//! Dataset `r` of scenario `s` is simulated from `seed/s/r/0` and
//! bootstrapped from `seed/s/r/1`. Work is a parallel map over datasets with
//! an order-preserving collect, so results do not depend on the number of
//! worker threads.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{prepass, rejection_profile, run_test_with, DiagnosticConfig, RejectionProfile};
use crate::discrepancy::{ks_distance, two_sample_ks, SortedSample};
use crate::error::{Error, Result};
use crate::models::{simulate, BootstrapDrawStream, Fit, FittedModel, ScenarioSpec};
use crate::probkernel::{kolmogorov_cdf, SeedSpec};

/// Runs `f` on a dedicated pool of `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Err(Error::config("workers", "worker count must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))?;
    Ok(pool.install(f))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReportKind {
    SizePower,
    PostTest,
    FanChart,
    Band,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub scenarios: Vec<ScenarioSpec>,
    pub diagnostic: DiagnosticConfig,
    /// Tests per dataset.
    pub k: usize,
    /// Independent datasets per scenario.
    pub r: usize,
    pub seed: SeedSpec,
    /// Levels reported in size/power rows.
    pub alphas: Vec<f64>,
    pub outputs: Vec<ReportKind>,
}

impl ExperimentPlan {
    pub fn new(scenarios: Vec<ScenarioSpec>, diagnostic: DiagnosticConfig, r: usize, seed: SeedSpec) -> Self {
        ExperimentPlan {
            scenarios,
            diagnostic,
            k: 1,
            r,
            seed,
            alphas: vec![0.01, 0.05, 0.10],
            outputs: vec![ReportKind::SizePower],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r == 0 {
            return Err(Error::config("plan.R", "need at least one dataset"));
        }
        if self.k == 0 {
            return Err(Error::config("plan.K", "need at least one test per dataset"));
        }
        let Some(first) = self.scenarios.first() else {
            return Err(Error::config("scenario", "the scenario grid is empty"));
        };
        if self.scenarios.iter().any(|s| s.family() != first.family()) {
            return Err(Error::config(
                "scenario",
                "all scenarios of one table must share a family",
            ));
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return Err(Error::config("plan.alphas", "levels must lie in (0, 1)"));
        }
        for s in &self.scenarios {
            s.validate()?;
        }
        self.diagnostic.validate()
    }

    fn data_seed(&self, scenario: usize, rep: usize) -> SeedSpec {
        self.seed.descend(&[scenario as u64, rep as u64, 0])
    }

    fn boot_seed(&self, scenario: usize, rep: usize) -> SeedSpec {
        self.seed.descend(&[scenario as u64, rep as u64, 1])
    }
}

/// `|observed - target| <= max(tolerance, 3 se)`.
pub fn within_tolerance(observed: f64, target: f64, tolerance: f64, se: f64) -> bool {
    (observed - target).abs() <= tolerance.max(3.0 * se)
}

/// `sqrt(p (1 - p) / r)`.
pub fn binomial_se(rate: f64, r: usize) -> f64 {
    (rate * (1.0 - rate) / r as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowStatus {
    Ok,
    /// More than 1% of the datasets were degenerate.
    TooManyDegenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizePowerRow {
    pub label: String,
    pub n: usize,
    pub m: usize,
    pub measure: String,
    pub alphas: Vec<f64>,
    pub rates: Vec<f64>,
    pub se: Vec<f64>,
    /// Datasets that contributed.
    pub datasets: usize,
    pub degenerate: usize,
    pub status: RowStatus,
}

impl SizePowerRow {
    /// Rate at the reported level nearest `alpha`.
    pub fn rate_at(&self, alpha: f64) -> (f64, f64) {
        let i = self
            .alphas
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - alpha).abs().total_cmp(&(b.1 - alpha).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        (self.rates[i], self.se[i])
    }
}

fn is_degenerate(e: &Error) -> bool {
    matches!(e, Error::DegenerateFit(_) | Error::DegenerateTail { .. })
}

/// Per-dataset rejection fractions at each level; `None` when degenerate.
fn dataset_rates(plan: &ExperimentPlan, s: usize, rep: usize) -> Result<Option<Vec<f64>>> {
    let spec = &plan.scenarios[s];
    let fitted = match simulate(spec, &plan.data_seed(s, rep)) {
        Ok(f) => f,
        Err(e) if is_degenerate(&e) => return Ok(None),
        Err(e) => return Err(e),
    };
    let boot = plan.boot_seed(s, rep);
    let result = if plan.k == 1 {
        prepass(&fitted, plan.diagnostic.standardization, plan.diagnostic.prepass_m).and_then(|st| {
            let mut stream = BootstrapDrawStream::new(&fitted, boot);
            let out = run_test_with(&mut stream, &plan.diagnostic, &st)?;
            Ok(plan
                .alphas
                .iter()
                .map(|&a| if out.rejects(a) { 1.0 } else { 0.0 })
                .collect())
        })
    } else {
        rejection_profile(&fitted, &boot, plan.k, &plan.diagnostic, &plan.alphas).map(|p| p.pi_hat)
    };
    match result {
        Ok(v) => Ok(Some(v)),
        Err(e) if is_degenerate(&e) => Ok(None),
        Err(e) => Err(e),
    }
}

/// One row per scenario: rejection rates over `R` datasets. With `K > 1`
/// each dataset contributes its rejection fraction over `K` tests.
pub fn size_power_table(plan: &ExperimentPlan) -> Result<Vec<SizePowerRow>> {
    plan.validate()?;
    let mut rows = Vec::with_capacity(plan.scenarios.len());
    for (s, spec) in plan.scenarios.iter().enumerate() {
        let per_dataset: Vec<Option<Vec<f64>>> = (0..plan.r)
            .into_par_iter()
            .map(|rep| dataset_rates(plan, s, rep))
            .collect::<Result<_>>()?;
        let mut sums = vec![0.0; plan.alphas.len()];
        let mut datasets = 0;
        for v in per_dataset.iter().flatten() {
            datasets += 1;
            for (acc, x) in sums.iter_mut().zip(v) {
                *acc += x;
            }
        }
        let degenerate = plan.r - datasets;
        let rates: Vec<f64> = sums
            .iter()
            .map(|s| if datasets > 0 { s / datasets as f64 } else { f64::NAN })
            .collect();
        let se = rates.iter().map(|&p| binomial_se(p, datasets.max(1))).collect();
        let status = if degenerate as f64 > 0.01 * plan.r as f64 {
            RowStatus::TooManyDegenerate
        } else {
            RowStatus::Ok
        };
        rows.push(SizePowerRow {
            label: spec.label(),
            n: spec.n(),
            m: plan.diagnostic.m,
            measure: plan.diagnostic.measure.to_string(),
            alphas: plan.alphas.clone(),
            rates,
            se,
            datasets,
            degenerate,
            status,
        });
    }
    Ok(rows)
}

/// The statistic whose distribution is checked after the diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PostStatistic {
    /// 2SLS t-ratio for the true `beta`.
    IvTStat,
    /// OLS t-ratio for the true autoregressive coefficient.
    Ar1TStat,
    /// Studentised mean.
    MeanTStat,
}

impl PostStatistic {
    fn matches(&self, spec: &ScenarioSpec) -> bool {
        matches!(
            (self, spec),
            (PostStatistic::IvTStat, ScenarioSpec::Iv { .. })
                | (PostStatistic::Ar1TStat, ScenarioSpec::Ar1 { .. })
                | (PostStatistic::MeanTStat, ScenarioSpec::HeavyTail { .. })
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostTestReport {
    /// Description of the conditioning event.
    pub conditioning: String,
    pub threshold: f64,
    /// Sorted post-test statistics of the kept datasets.
    pub conditional: Vec<f64>,
    /// Sorted statistics of all datasets.
    pub unconditional: Vec<f64>,
    /// `sup |F_cond - Phi|`
    pub distance_to_normal: f64,
    /// `sup |F_cond - F_all|`
    pub distance_to_unconditional: f64,
    pub degenerate: usize,
}

impl PostTestReport {
    pub fn kept(&self) -> usize {
        self.conditional.len()
    }

    pub fn total(&self) -> usize {
        self.unconditional.len()
    }
}

fn conditional_report(
    conditioning: String,
    threshold: f64,
    pairs: Vec<Option<(f64, bool)>>,
) -> Result<PostTestReport> {
    let degenerate = pairs.iter().filter(|p| p.is_none()).count();
    let all: Vec<(f64, bool)> = pairs.into_iter().flatten().collect();
    let kept: Vec<f64> = all.iter().filter(|p| p.1).map(|p| p.0).collect();
    if kept.is_empty() {
        return Err(Error::EmptyConditioning);
    }
    let conditional = SortedSample::new(kept)?;
    let unconditional = SortedSample::new(all.iter().map(|p| p.0).collect())?;
    Ok(PostTestReport {
        conditioning,
        threshold,
        distance_to_normal: ks_distance(&conditional).value,
        distance_to_unconditional: two_sample_ks(&conditional, &unconditional),
        conditional: conditional.into_inner(),
        unconditional: unconditional.into_inner(),
        degenerate,
    })
}

fn single_scenario(plan: &ExperimentPlan) -> Result<&ScenarioSpec> {
    plan.validate()?;
    if plan.scenarios.len() != 1 {
        return Err(Error::config("scenario", "post-test studies take exactly one scenario"));
    }
    Ok(&plan.scenarios[0])
}

/// Distribution of `post_statistic` over datasets whose diagnostic does not
/// reject, i.e. `T* <= t_threshold`.
pub fn post_test_bias(plan: &ExperimentPlan, post_statistic: PostStatistic, t_threshold: f64) -> Result<PostTestReport> {
    let spec = single_scenario(plan)?;
    if !post_statistic.matches(spec) {
        return Err(Error::config(
            "plan.post_statistic",
            format!("{post_statistic:?} does not apply to the {} scenario", spec.family()),
        ));
    }
    let pairs: Vec<Option<(f64, bool)>> = (0..plan.r)
        .into_par_iter()
        .map(|rep| -> Result<Option<(f64, bool)>> {
            let outcome = simulate(spec, &plan.data_seed(0, rep)).and_then(|fitted| {
                let rho = fitted.original_statistic()?;
                let st = prepass(&fitted, plan.diagnostic.standardization, plan.diagnostic.prepass_m)?;
                let mut stream = BootstrapDrawStream::new(&fitted, plan.boot_seed(0, rep));
                let out = run_test_with(&mut stream, &plan.diagnostic, &st)?;
                Ok((rho, out.t_star <= t_threshold))
            });
            match outcome {
                Ok(p) => Ok(Some(p)),
                Err(e) if is_degenerate(&e) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    conditional_report(format!("diagnostic T* <= {t_threshold}"), t_threshold, pairs)
}

/// The conventional contrast: IV t-ratios kept only when the first-stage F
/// statistic exceeds `f_threshold`.
pub fn first_stage_pretest(plan: &ExperimentPlan, f_threshold: f64) -> Result<PostTestReport> {
    let spec = single_scenario(plan)?;
    if !matches!(spec, ScenarioSpec::Iv { .. }) {
        return Err(Error::config("scenario", "the first-stage pretest needs the IV scenario"));
    }
    let pairs: Vec<Option<(f64, bool)>> = (0..plan.r)
        .into_par_iter()
        .map(|rep| -> Result<Option<(f64, bool)>> {
            match simulate(spec, &plan.data_seed(0, rep)) {
                Ok(fitted) => {
                    let Fit::Iv(fit) = fitted.fit() else { unreachable!() };
                    Ok(Some((fitted.original_statistic()?, fit.first_stage_f > f_threshold)))
                }
                Err(e) if is_degenerate(&e) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    conditional_report(format!("first-stage F > {f_threshold}"), f_threshold, pairs)
}

pub const FAN_LEVELS: [f64; 7] = [0.01, 0.10, 0.25, 0.50, 0.75, 0.90, 0.99];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FanChartData {
    pub x: Vec<f64>,
    /// `bands[i][j]`: level `FAN_LEVELS[j]` quantile of the realised cdfs
    /// at `x[i]`.
    pub bands: Vec<[f64; 7]>,
    /// Realisations.
    pub m: usize,
    /// Draws per realisation.
    pub b: usize,
}

impl FanChartData {
    /// `q90 - q10` at the grid point nearest `x`.
    pub fn width_80(&self, x: f64) -> f64 {
        let i = self
            .x
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - x).abs().total_cmp(&(b.1 - x).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        self.bands[i][5] - self.bands[i][1]
    }
}

/// Evenly spaced grid of `points` values over `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..points)
            .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
            .collect(),
    }
}

/// Linear interpolation between order statistics at position `p (n - 1)`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Quantile bands of `m_real` independent bootstrap cdfs, each estimated
/// from `b` draws, on `x_grid`.
pub fn fan_chart(scenario: &ScenarioSpec, m_real: usize, b: usize, x_grid: &[f64], seed: &SeedSpec) -> Result<FanChartData> {
    if m_real < 100 {
        return Err(Error::config("plan.M", "a fan chart needs at least 100 realisations"));
    }
    if b < 1_000 {
        return Err(Error::config("plan.B", "a fan chart needs at least 1000 draws per realisation"));
    }
    if x_grid.is_empty() || x_grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::config("plan.x_grid", "grid must be non-empty and finite"));
    }
    let mut grid = x_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let curves: Vec<Vec<f64>> = (0..m_real as u64)
        .into_par_iter()
        .map(|j| -> Result<Vec<f64>> {
            let fitted: FittedModel = simulate(scenario, &seed.descend(&[j, 0]))?;
            let mut stream = BootstrapDrawStream::new(&fitted, seed.descend(&[j, 1]));
            let sample = SortedSample::new(stream.take_draws(b)?)?;
            Ok(grid
                .iter()
                .map(|&x| sample.draws().partition_point(|&v| v <= x) as f64 / b as f64)
                .collect())
        })
        .collect::<Result<_>>()?;
    let bands = (0..grid.len())
        .map(|i| {
            let mut column: Vec<f64> = curves.iter().map(|c| c[i]).collect();
            column.sort_by(f64::total_cmp);
            FAN_LEVELS.map(|p| quantile_sorted(&column, p))
        })
        .collect();
    Ok(FanChartData {
        x: grid,
        bands,
        m: m_real,
        b,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandDiagnostic {
    /// `sqrt(K) sup |pi_hat - alpha|`
    pub statistic: f64,
    /// `1 - H(statistic)`, descriptive only.
    pub p_value: f64,
}

pub fn band_diagnostic(profile: &RejectionProfile) -> Result<BandDiagnostic> {
    if profile.k < 100 {
        return Err(Error::InvalidArgument(format!(
            "band diagnostic needs K >= 100, got {}",
            profile.k
        )));
    }
    Ok(BandDiagnostic {
        statistic: profile.uniform_band_stat,
        p_value: 1.0 - kolmogorov_cdf(profile.uniform_band_stat).get(),
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One line per row; rates and standard errors per level.
pub fn size_power_csv(rows: &[SizePowerRow], alphas: &[f64]) -> String {
    let mut out = String::from("scenario,n,m,measure,datasets,degenerate,status");
    for a in alphas {
        let _ = write!(out, ",rate_{a},se_{a}");
    }
    out.push('\n');
    for row in rows {
        let status = match row.status {
            RowStatus::Ok => "ok",
            RowStatus::TooManyDegenerate => "degenerate",
        };
        let _ = write!(
            out,
            "{},{},{},{},{},{},{}",
            csv_field(&row.label),
            row.n,
            row.m,
            csv_field(&row.measure),
            row.datasets,
            row.degenerate,
            status
        );
        for (r, s) in row.rates.iter().zip(&row.se) {
            let _ = write!(out, ",{r},{s}");
        }
        out.push('\n');
    }
    out
}

pub fn fan_chart_csv(data: &FanChartData) -> String {
    let mut out = String::from("x,q01,q10,q25,q50,q75,q90,q99\n");
    for (x, band) in data.x.iter().zip(&data.bands) {
        let _ = write!(out, "{x}");
        for q in band {
            let _ = write!(out, ",{q}");
        }
        out.push('\n');
    }
    out
}

pub fn profile_csv(profile: &RejectionProfile) -> String {
    let mut out = String::from("alpha,pi_hat\n");
    for (a, p) in profile.alphas.iter().zip(&profile.pi_hat) {
        let _ = writeln!(out, "{a},{p}");
    }
    out
}

pub fn post_test_csv(report: &PostTestReport) -> String {
    format!(
        "conditioning,threshold,kept,total,degenerate,distance_to_normal,distance_to_unconditional\n{},{},{},{},{},{},{}\n",
        csv_field(&report.conditioning),
        report.threshold,
        report.kept(),
        report.total(),
        report.degenerate,
        report.distance_to_normal,
        report.distance_to_unconditional
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrepancy::DiscrepancyMeasure;
    use crate::models::BoundaryRegime;

    #[test]
    fn exact_profile_has_zero_band() {
        let alphas = vec![0.2, 0.4, 0.6, 0.8];
        let p: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        let prof = RejectionProfile::from_p_values(&p, &alphas, 10, 0).unwrap();
        let band = band_diagnostic(&prof).unwrap();
        assert!(band.statistic < 1e-12, "{}", band.statistic);
        let short = RejectionProfile::from_p_values(&p[..50], &alphas, 10, 0).unwrap();
        assert!(band_diagnostic(&short).is_err());
    }

    #[test]
    fn interpolated_quantiles() {
        let v = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(quantile_sorted(&v, 0.5), 1.5);
        assert_eq!(quantile_sorted(&v, 1.0), 3.0);
        assert_eq!(quantile_sorted(&[7.0], 0.3), 7.0);
    }

    #[test]
    fn plan_rejects_mixed_families() {
        let plan = ExperimentPlan::new(
            vec![
                ScenarioSpec::boundary(100, BoundaryRegime::Interior(1.0)),
                ScenarioSpec::iv_strong(100, 1, 0.5),
            ],
            DiagnosticConfig::new(10, DiscrepancyMeasure::Ks),
            10,
            SeedSpec::new(1),
        );
        assert!(plan.validate().is_err());
    }

    #[test]
    fn empty_table_has_header_only() {
        let csv = size_power_csv(&[], &[0.05]);
        assert_eq!(csv, "scenario,n,m,measure,datasets,degenerate,status,rate_0.05,se_0.05\n");
    }

    #[test]
    fn tolerance_rule() {
        assert!(within_tolerance(0.07, 0.05, 0.03, 0.001));
        assert!(!within_tolerance(0.09, 0.05, 0.03, 0.001));
        assert!(within_tolerance(0.09, 0.05, 0.03, 0.014));
    }
}
