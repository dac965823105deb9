//! The diagnostic test: `m` bootstrap draws, a discrepancy to `Phi`, its
//! scaled statistic and a p-value from the matching null law.
//!
//! Reference laws:
//!
//! * `ks` uses the Kolmogorov series, `sks+`/`sks-` the exact one-sided
//!   limit `exp(-2 t^2)`.
//! * `cvm`, `ad`, `interval` and `point` use simulated tables of the
//!   scaled statistic on `m_ref` uniforms. The statistic is invariant under
//!   `Phi`, so interval and point tables are keyed by the `Phi`-image of
//!   their endpoints.
//! * `moment` uses a finite-`m` table of `m v' Omega^{-1} v` on normals
//!   with `m_ref = m`.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discrepancy::{
    ad_sq_with, cvm_sq_with, evaluate, interval_sup_with, moment_vector, one_sided_with,
    sup_distance_to, Discrepancy, DiscrepancyMeasure, Interval, SortedSample, Uniform01,
};
use crate::error::{Error, Result};
use crate::models::{DrawSource, FittedModel, Fit, BootstrapDrawStream};
use crate::probkernel::{kolmogorov_cdf, phi, Prob, SeedSpec};

/// Seed of the shipped reference tables.
pub const TABLE_SEED: u64 = 0x5EED_7AB1;
pub const DEFAULT_TABLE_M_REF: usize = 10_000;
pub const DEFAULT_TABLE_REPS: usize = 200_000;
/// Environment variable naming a directory for persisted tables.
pub const CACHE_DIR_ENV: &str = "BOOTDIAG_CACHE_DIR";
const TABLE_FORMAT: u32 = 1;
const PREPASS_STREAM: u64 = 0x9E_9A55;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Standardization {
    None,
    /// `T / sigma_hat`
    ScaleOnly,
    /// `(T - mu_hat) / sigma_hat`
    LocationScale,
}

/// Size and seed of the simulated reference tables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableSpec {
    pub m_ref: usize,
    pub replications: usize,
    pub seed: SeedSpec,
}

impl Default for TableSpec {
    fn default() -> Self {
        TableSpec {
            m_ref: DEFAULT_TABLE_M_REF,
            replications: DEFAULT_TABLE_REPS,
            seed: SeedSpec::new(TABLE_SEED),
        }
    }
}

/// Where simulated p-values come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferencePolicy {
    pub tables: TableSpec,
    /// Build a missing table on demand instead of failing.
    pub build_missing: bool,
}

impl Default for ReferencePolicy {
    fn default() -> Self {
        ReferencePolicy {
            tables: TableSpec::default(),
            build_missing: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticConfig {
    pub m: usize,
    pub measure: DiscrepancyMeasure,
    pub standardization: Standardization,
    pub prepass_m: usize,
    pub level_alpha: f64,
    pub reference: ReferencePolicy,
}

/// `max(10^4, 100 m)`.
pub fn default_prepass(m: usize) -> usize {
    (100 * m).max(10_000)
}

impl DiagnosticConfig {
    pub fn new(m: usize, measure: DiscrepancyMeasure) -> Self {
        DiagnosticConfig {
            m,
            measure,
            standardization: Standardization::None,
            prepass_m: default_prepass(m),
            level_alpha: 0.05,
            reference: ReferencePolicy::default(),
        }
    }

    pub fn with_standardization(mut self, standardization: Standardization) -> Self {
        self.standardization = standardization;
        self
    }

    pub fn with_reference(mut self, reference: ReferencePolicy) -> Self {
        self.reference = reference;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidArgument("draw count m must be at least 1".into()));
        }
        if !(self.level_alpha > 0.0 && self.level_alpha < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "level alpha {} must lie in (0, 1)",
                self.level_alpha
            )));
        }
        if self.standardization != Standardization::None && self.prepass_m < 10 * self.m {
            return Err(Error::InvalidArgument(format!(
                "prepass M = {} must be at least 10 m = {}",
                self.prepass_m,
                10 * self.m
            )));
        }
        if matches!(
            self.measure,
            DiscrepancyMeasure::Cvm
                | DiscrepancyMeasure::Ad
                | DiscrepancyMeasure::IntervalSup(_)
                | DiscrepancyMeasure::PointAbs(_)
        ) {
            check_table_size(self.reference.tables.m_ref, self.reference.tables.replications)?;
        }
        Ok(())
    }
}

fn check_table_size(m_ref: usize, reps: usize) -> Result<()> {
    if m_ref < 1_000 {
        return Err(Error::InvalidArgument(format!(
            "reference tables need m_ref >= 1000, got {m_ref}"
        )));
    }
    if reps < 10_000 {
        return Err(Error::InvalidArgument(format!(
            "reference tables need at least 10^4 replications, got {reps}"
        )));
    }
    Ok(())
}

/// Null law a p-value was read from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReferenceLaw {
    KolmogorovSeries,
    OneSidedExact,
    SimulatedTable(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticOutcome {
    pub m: usize,
    pub d_star: Discrepancy,
    /// `sqrt(m) d` for norm-type measures, `m d` for the moment measure.
    pub t_star: f64,
    pub p_value: Prob,
    pub reference: ReferenceLaw,
}

impl DiagnosticOutcome {
    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value.get() <= alpha
    }
}

/// Frozen location and scale from a prepass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Standardizer {
    pub kind: Standardization,
    pub mu_hat: f64,
    pub sigma_hat: f64,
}

impl Standardizer {
    pub fn identity() -> Self {
        Standardizer {
            kind: Standardization::None,
            mu_hat: 0.0,
            sigma_hat: 1.0,
        }
    }

    /// Mean and `1/M` standard deviation of `draws`.
    pub fn from_draws(kind: Standardization, draws: &[f64]) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::InvalidSample("empty prepass".into()));
        }
        let n = draws.len() as f64;
        let mu_hat = draws.iter().sum::<f64>() / n;
        let var = draws.iter().map(|x| (x - mu_hat) * (x - mu_hat)).sum::<f64>() / n;
        let sigma_hat = var.sqrt();
        if !(sigma_hat > 0.0 && sigma_hat.is_finite()) {
            return Err(Error::DegenerateFit(format!(
                "prepass standard deviation is {sigma_hat}"
            )));
        }
        Ok(Standardizer {
            kind,
            mu_hat,
            sigma_hat,
        })
    }

    pub fn apply(&self, t: f64) -> f64 {
        match self.kind {
            Standardization::None => t,
            Standardization::ScaleOnly => t / self.sigma_hat,
            Standardization::LocationScale => (t - self.mu_hat) / self.sigma_hat,
        }
    }
}

/// Estimates the standardisers from `prepass_m` draws on a stream seeded by
/// the source digest, so every test on one source shares them.
pub fn prepass(source: &dyn DrawSource, kind: Standardization, prepass_m: usize) -> Result<Standardizer> {
    if kind == Standardization::None {
        return Ok(Standardizer::identity());
    }
    let seed = SeedSpec::with_path(source.digest(), vec![PREPASS_STREAM]);
    let draws: Vec<f64> = (0..prepass_m as u64)
        .into_par_iter()
        .map(|i| source.draw(&mut seed.child(i).rng()))
        .collect::<Result<_>>()?;
    Standardizer::from_draws(kind, &draws)
}

/// Draws `config.m` statistics from `stream` and tests them.
pub fn run_test(stream: &mut BootstrapDrawStream<'_>, config: &DiagnosticConfig) -> Result<DiagnosticOutcome> {
    config.validate()?;
    let standardizer = prepass(stream.source(), config.standardization, config.prepass_m)?;
    run_test_with(stream, config, &standardizer)
}

/// [`run_test`] with precomputed standardisers.
pub fn run_test_with(
    stream: &mut BootstrapDrawStream<'_>,
    config: &DiagnosticConfig,
    standardizer: &Standardizer,
) -> Result<DiagnosticOutcome> {
    let draws: Vec<f64> = stream
        .take_draws(config.m)?
        .into_iter()
        .map(|t| standardizer.apply(t))
        .collect();
    test_draws(draws, config)
}

/// Tests already-standardised draws; `draws.len()` overrides `config.m`.
pub fn test_draws(draws: Vec<f64>, config: &DiagnosticConfig) -> Result<DiagnosticOutcome> {
    let m = draws.len();
    let sample = SortedSample::new(draws)?;
    let d_star = evaluate(&sample, config.measure)?;
    let t_star = if config.measure.is_norm_type() {
        (m as f64).sqrt() * d_star.value
    } else {
        m as f64 * d_star.value
    };
    let (p_value, reference) = p_value(&config.measure, t_star, m, &config.reference)?;
    Ok(DiagnosticOutcome {
        m,
        d_star,
        t_star,
        p_value,
        reference,
    })
}

/// p-value of the scaled statistic `t_star` under the null law of `measure`.
pub fn p_value(
    measure: &DiscrepancyMeasure,
    t_star: f64,
    m: usize,
    policy: &ReferencePolicy,
) -> Result<(Prob, ReferenceLaw)> {
    match measure {
        DiscrepancyMeasure::Ks => Ok((
            Prob::saturating(1.0 - kolmogorov_cdf(t_star).get()),
            ReferenceLaw::KolmogorovSeries,
        )),
        DiscrepancyMeasure::SignedKsPlus | DiscrepancyMeasure::SignedKsMinus => Ok((
            Prob::saturating((-2.0 * t_star * t_star).exp().min(1.0)),
            ReferenceLaw::OneSidedExact,
        )),
        _ => {
            let table = reference_table(measure, m, policy)?;
            Ok((table.upper_tail(t_star), ReferenceLaw::SimulatedTable(table.id())))
        }
    }
}

/// Canonical table key.
#[derive(Debug, Clone, Copy, PartialEq)]
enum TableKind {
    Ks,
    SignedKsPlus,
    SignedKsMinus,
    Cvm,
    Ad,
    /// `sup |W(u)|` over `u` in `[lo, hi]`.
    IntervalImage(f64, f64),
    PointImage(f64),
    Moment(crate::discrepancy::Omega),
}

impl fmt::Display for TableKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TableKind::Ks => write!(f, "ks"),
            TableKind::SignedKsPlus => write!(f, "sks+"),
            TableKind::SignedKsMinus => write!(f, "sks-"),
            TableKind::Cvm => write!(f, "cvm"),
            TableKind::Ad => write!(f, "ad"),
            TableKind::IntervalImage(lo, hi) => write!(f, "interval-image:{lo},{hi}"),
            TableKind::PointImage(u) => write!(f, "point-image:{u}"),
            TableKind::Moment(o) => {
                let [a, b, d] = o.entries();
                write!(f, "moment:{a},{b},{d}")
            }
        }
    }
}

fn table_kind(measure: &DiscrepancyMeasure) -> TableKind {
    match measure {
        DiscrepancyMeasure::Ks => TableKind::Ks,
        DiscrepancyMeasure::SignedKsPlus => TableKind::SignedKsPlus,
        DiscrepancyMeasure::SignedKsMinus => TableKind::SignedKsMinus,
        DiscrepancyMeasure::Cvm => TableKind::Cvm,
        DiscrepancyMeasure::Ad => TableKind::Ad,
        DiscrepancyMeasure::IntervalSup(a) => TableKind::IntervalImage(phi(a.lower()), phi(a.upper())),
        DiscrepancyMeasure::PointAbs(x) => TableKind::PointImage(phi(*x)),
        DiscrepancyMeasure::MomentBased(o) => TableKind::Moment(*o),
    }
}

/// Sorted simulated null sample of one scaled statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTable {
    measure: DiscrepancyMeasure,
    key: String,
    m_ref: usize,
    replications: usize,
    seed: SeedSpec,
    values: Vec<f64>,
}

/// `m` sorted uniforms from exponential spacings.
fn sorted_uniforms(rng: &mut impl Rng, m: usize, out: &mut Vec<f64>) {
    out.clear();
    let mut total = 0.0;
    for _ in 0..m {
        let e: f64 = rng.sample(Exp1);
        total += e;
        out.push(total);
    }
    let e: f64 = rng.sample(Exp1);
    total += e;
    out.iter_mut().for_each(|v| *v /= total);
}

impl ReferenceTable {
    /// Simulates `reps` scaled null statistics. Replication `r` uses the
    /// sub-stream `seed/r`, so the table is reproducible from its header.
    pub fn build(measure: DiscrepancyMeasure, m_ref: usize, reps: usize, seed: SeedSpec) -> Result<Self> {
        let kind = table_kind(&measure);
        if matches!(kind, TableKind::Moment(_)) {
            if m_ref == 0 || reps < 10_000 {
                return Err(Error::InvalidArgument(format!(
                    "moment tables need m >= 1 and at least 10^4 replications, got m = {m_ref}, reps = {reps}"
                )));
            }
        } else {
            check_table_size(m_ref, reps)?;
        }
        let root = (m_ref as f64).sqrt();
        let mut values: Vec<f64> = (0..reps as u64)
            .into_par_iter()
            .map_init(
                || Vec::with_capacity(m_ref),
                |buf, r| -> Result<f64> {
                    let mut rng = seed.child(r).rng();
                    if let TableKind::Moment(omega) = kind {
                        buf.clear();
                        buf.extend((0..m_ref).map(|_| rng.sample::<f64, _>(StandardNormal)));
                        return Ok(m_ref as f64 * omega.quadratic_form(moment_vector(buf)));
                    }
                    sorted_uniforms(&mut rng, m_ref, buf);
                    let d = match kind {
                        TableKind::Ks => {
                            let (p, q) = one_sided_with(buf, &Uniform01);
                            p.max(q)
                        }
                        TableKind::SignedKsPlus => one_sided_with(buf, &Uniform01).0,
                        TableKind::SignedKsMinus => one_sided_with(buf, &Uniform01).1,
                        TableKind::Cvm => cvm_sq_with(buf, &Uniform01).sqrt(),
                        TableKind::Ad => ad_sq_with(buf, &Uniform01)?.sqrt(),
                        TableKind::IntervalImage(lo, hi) => {
                            interval_sup_with(buf, Interval::new(lo, hi)?, &Uniform01)
                        }
                        TableKind::PointImage(u) => {
                            let g = buf.partition_point(|&x| x <= u) as f64 / m_ref as f64;
                            (g - u).abs()
                        }
                        TableKind::Moment(_) => unreachable!(),
                    };
                    Ok(root * d)
                },
            )
            .collect::<Result<_>>()?;
        values.sort_by(f64::total_cmp);
        Ok(ReferenceTable {
            measure,
            key: kind.to_string(),
            m_ref,
            replications: reps,
            seed,
            values,
        })
    }

    pub fn measure(&self) -> DiscrepancyMeasure {
        self.measure
    }

    pub fn m_ref(&self) -> usize {
        self.m_ref
    }

    pub fn replications(&self) -> usize {
        self.replications
    }

    pub fn seed(&self) -> &SeedSpec {
        &self.seed
    }

    /// Sorted null statistics.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Identifier: canonical key, size and seed.
    pub fn id(&self) -> String {
        table_id(&self.key, self.m_ref, self.replications, &self.seed)
    }

    /// Fraction of the table strictly above `t`, i.e. `1 - edf(t)`.
    pub fn upper_tail(&self, t: f64) -> Prob {
        let below = self.values.partition_point(|&v| v <= t);
        Prob::saturating((self.values.len() - below) as f64 / self.values.len() as f64)
    }

    /// Empirical quantile `v[ceil(p R) - 1]`; non-decreasing in `p`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::Domain(format!("table quantile needs 0 < p <= 1, got {p}")));
        }
        let idx = ((p * self.values.len() as f64).ceil() as usize).clamp(1, self.values.len());
        Ok(self.values[idx - 1])
    }

    fn file_name(&self) -> String {
        table_file_name(&self.id())
    }

    /// Writes the header and one value per line; values round-trip exactly.
    pub fn write_to(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let path_text: Vec<String> = self.seed.stream_path().iter().map(u64::to_string).collect();
        let header = format!(
            "# bootdiag reference table\nformat={TABLE_FORMAT}\nmeasure={}\nkey={}\nm_ref={}\nreplications={}\nseed={}\nseed_path={}\n",
            self.measure,
            self.key,
            self.m_ref,
            self.replications,
            self.seed.master_seed(),
            path_text.join(",")
        );
        let mut body = header;
        for v in &self.values {
            body.push_str(&format!("{v}\n"));
        }
        w.write_all(body.as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn read_from(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let bad = |msg: String| Error::config(path.display().to_string(), msg);
        let mut header: HashMap<String, String> = HashMap::new();
        let mut values = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some((k, v)) = line.split_once('=') {
                header.insert(k.to_string(), v.to_string());
            } else {
                let v: f64 = line
                    .parse()
                    .map_err(|_| bad(format!("line {}: `{line}` is not a number", lineno + 1)))?;
                values.push(v);
            }
        }
        let get = |k: &str| header.get(k).cloned().ok_or_else(|| bad(format!("missing `{k}`")));
        let num = |k: &str| -> Result<u64> {
            get(k)?.parse().map_err(|_| bad(format!("`{k}` is not an integer")))
        };
        if num("format")? != u64::from(TABLE_FORMAT) {
            return Err(bad("unsupported table format".into()));
        }
        let measure: DiscrepancyMeasure = get("measure")?.parse()?;
        let seed_path = get("seed_path")?;
        let path_vec: Vec<u64> = if seed_path.is_empty() {
            Vec::new()
        } else {
            seed_path
                .split(',')
                .map(|s| s.parse().map_err(|_| bad("bad seed_path".into())))
                .collect::<Result<_>>()?
        };
        let replications = num("replications")? as usize;
        if values.len() != replications {
            return Err(bad(format!(
                "header promises {replications} values, file has {}",
                values.len()
            )));
        }
        Ok(ReferenceTable {
            measure,
            key: get("key")?,
            m_ref: num("m_ref")? as usize,
            replications,
            seed: SeedSpec::with_path(num("seed")?, path_vec),
            values,
        })
    }
}

fn table_id(key: &str, m_ref: usize, reps: usize, seed: &SeedSpec) -> String {
    let path: Vec<String> = seed.stream_path().iter().map(u64::to_string).collect();
    format!("{key}|m{m_ref}|r{reps}|s{}/{}", seed.master_seed(), path.join("."))
}

fn table_file_name(id: &str) -> String {
    let safe: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect();
    format!("{safe}.tbl")
}

type Slot = Arc<Mutex<Option<Arc<ReferenceTable>>>>;

fn table_cache() -> &'static Mutex<HashMap<String, Slot>> {
    static CACHE: OnceLock<Mutex<HashMap<String, Slot>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn cache_dir() -> Option<PathBuf> {
    std::env::var_os(CACHE_DIR_ENV).map(PathBuf::from)
}

/// Table for `measure` under `policy`: memory, then `BOOTDIAG_CACHE_DIR`,
/// then a fresh build when `policy.build_missing`. The moment measure uses
/// `m_ref = m`.
pub fn reference_table(
    measure: &DiscrepancyMeasure,
    m: usize,
    policy: &ReferencePolicy,
) -> Result<Arc<ReferenceTable>> {
    let kind = table_kind(measure);
    let spec = &policy.tables;
    let m_ref = if matches!(kind, TableKind::Moment(_)) { m } else { spec.m_ref };
    let id = table_id(&kind.to_string(), m_ref, spec.replications, &spec.seed);
    let slot = {
        let mut map = table_cache().lock().unwrap_or_else(|e| e.into_inner());
        map.entry(id.clone()).or_default().clone()
    };
    // Only the per-table slot is held while building.
    let mut guard = slot.lock().unwrap_or_else(|e| e.into_inner());
    if let Some(table) = guard.as_ref() {
        return Ok(table.clone());
    }
    let dir = cache_dir();
    if let Some(dir) = &dir {
        let path = dir.join(table_file_name(&id));
        if path.exists() {
            let table = Arc::new(ReferenceTable::read_from(&path)?);
            *guard = Some(table.clone());
            return Ok(table);
        }
    }
    if !policy.build_missing {
        return Err(Error::MissingReferenceTable(id));
    }
    let table = Arc::new(ReferenceTable::build(
        *measure,
        m_ref,
        spec.replications,
        spec.seed.clone(),
    )?);
    if let Some(dir) = &dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        table.write_to(&dir.join(table.file_name()))?;
    }
    *guard = Some(table.clone());
    Ok(table)
}

/// Builds and persists a table into `dir`; returns the file written.
pub fn build_reference_table_file(
    measure: DiscrepancyMeasure,
    m_ref: usize,
    reps: usize,
    seed: SeedSpec,
    dir: &Path,
) -> Result<PathBuf> {
    let table = ReferenceTable::build(measure, m_ref, reps, seed)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(table.file_name());
    table.write_to(&path)?;
    Ok(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MRule {
    /// `max(10, ceil(ln n) * scale)`
    LogRule { scale: usize },
    /// `max(10, ceil(n^gamma))`
    PowerRule { gamma: f64 },
}

impl Default for MRule {
    fn default() -> Self {
        MRule::LogRule { scale: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MChoice {
    pub m: usize,
    /// The rate exponent must exceed this for `m / n^{2 alpha} -> 0`.
    pub alpha_lower_bound: f64,
}

pub fn choose_m(n: usize, rule: MRule) -> Result<MChoice> {
    if n < 8 {
        return Err(Error::InvalidArgument(format!("choose_m needs n >= 8, got {n}")));
    }
    match rule {
        MRule::LogRule { scale } => Ok(MChoice {
            m: ((n as f64).ln().ceil() as usize * scale).max(10),
            alpha_lower_bound: 0.0,
        }),
        MRule::PowerRule { gamma } => {
            if !(gamma > 0.0 && gamma < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "power rule needs 0 < gamma < 1, got {gamma}"
                )));
            }
            // Guard against n^0.5 landing a hair above an integer.
            let raw = (n as f64).powf(gamma);
            let m = if (raw - raw.round()).abs() < 1e-9 { raw.round() } else { raw.ceil() };
            Ok(MChoice {
                m: (m as usize).max(10),
                alpha_lower_bound: gamma / 2.0,
            })
        }
    }
}

/// 99 points from 0.001 to 0.10 plus 0.05.
pub fn default_alpha_grid() -> Vec<f64> {
    let mut grid: Vec<f64> = (0..99).map(|i| 0.001 + 0.099 * i as f64 / 98.0).collect();
    grid.push(0.05);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionProfile {
    pub alphas: Vec<f64>,
    pub pi_hat: Vec<f64>,
    /// Number of completed tests.
    pub k: usize,
    pub m: usize,
    /// `sqrt(K) max |pi_hat - alpha|` over the grid.
    pub uniform_band_stat: f64,
    /// Tests abandoned because a draw was degenerate.
    pub degenerate: usize,
}

impl RejectionProfile {
    pub fn from_p_values(p_values: &[f64], alphas: &[f64], m: usize, degenerate: usize) -> Result<Self> {
        if p_values.is_empty() {
            return Err(Error::DegenerateFit(format!(
                "all {degenerate} tests of the profile were degenerate"
            )));
        }
        if alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return Err(Error::InvalidArgument("alpha grid must lie in (0, 1)".into()));
        }
        let mut sorted = p_values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let k = sorted.len();
        let pi_hat: Vec<f64> = alphas
            .iter()
            .map(|&a| sorted.partition_point(|&p| p <= a) as f64 / k as f64)
            .collect();
        let sup = alphas
            .iter()
            .zip(&pi_hat)
            .map(|(a, p)| (p - a).abs())
            .fold(0.0, f64::max);
        Ok(RejectionProfile {
            alphas: alphas.to_vec(),
            pi_hat,
            k,
            m,
            uniform_band_stat: (k as f64).sqrt() * sup,
            degenerate,
        })
    }

    /// `pi_hat` at the grid point nearest `alpha`.
    pub fn at(&self, alpha: f64) -> f64 {
        let i = self
            .alphas
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - alpha).abs().total_cmp(&(b.1 - alpha).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        self.pi_hat[i]
    }
}

/// Runs `k` tests on one source; test `j` reads stream `seed/j`.
pub fn rejection_profile(
    source: &dyn DrawSource,
    seed: &SeedSpec,
    k: usize,
    config: &DiagnosticConfig,
    alphas: &[f64],
) -> Result<RejectionProfile> {
    if k == 0 {
        return Err(Error::InvalidArgument("a profile needs at least one test".into()));
    }
    config.validate()?;
    let standardizer = prepass(source, config.standardization, config.prepass_m)?;
    if !matches!(
        config.measure,
        DiscrepancyMeasure::Ks | DiscrepancyMeasure::SignedKsPlus | DiscrepancyMeasure::SignedKsMinus
    ) {
        reference_table(&config.measure, config.m, &config.reference)?;
    }
    let outcomes: Vec<Result<f64>> = (0..k as u64)
        .into_par_iter()
        .map(|j| {
            let mut stream = BootstrapDrawStream::new(source, seed.child(j));
            run_test_with(&mut stream, config, &standardizer).map(|o| o.p_value.get())
        })
        .collect();
    let mut p_values = Vec::with_capacity(k);
    let mut degenerate = 0;
    for outcome in outcomes {
        match outcome {
            Ok(p) => p_values.push(p),
            Err(Error::DegenerateFit(_)) | Err(Error::DegenerateTail { .. }) => degenerate += 1,
            Err(e) => return Err(e),
        }
    }
    RejectionProfile::from_p_values(&p_values, alphas, config.m, degenerate)
}

/// `T = Z + a` split of the KS diagnostic for a model with a closed-form
/// bootstrap cdf `G_n`: `Z = sqrt(m) ||G*_m - G_n||`, and by the triangle
/// inequality `|a| <= sqrt(m) ||G_n - Phi||`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryDecomposition {
    pub t_star: f64,
    pub z_star: f64,
    pub a_star: f64,
    /// `sqrt(m) Phi(-sqrt(n) theta_hat)`.
    pub bound: f64,
}

impl BoundaryDecomposition {
    pub fn within_bound(&self) -> bool {
        self.a_star.abs() <= self.bound * (1.0 + 1e-12) + 1e-12
    }
}

/// Draws `m` boundary bootstrap statistics from `seed` and decomposes the
/// KS diagnostic against the closed-form cdf.
pub fn boundary_decomposition(fitted: &FittedModel, seed: SeedSpec, m: usize) -> Result<BoundaryDecomposition> {
    let Fit::Boundary(fit) = fitted.fit() else {
        return Err(Error::InvalidArgument(
            "the decomposition needs the boundary scenario".into(),
        ));
    };
    if m == 0 {
        return Err(Error::InvalidArgument("m must be at least 1".into()));
    }
    let cut = -(fitted.spec().n() as f64).sqrt() * fit.theta_hat;
    let mut stream = BootstrapDrawStream::new(fitted, seed);
    let sample = SortedSample::new(stream.take_draws(m)?)?;
    let root = (m as f64).sqrt();
    let t_star = root * evaluate(&sample, DiscrepancyMeasure::Ks)?.value;
    let z_star = root
        * sup_distance_to(
            &sample,
            |x| if x >= cut { phi(x) } else { 0.0 },
            |x| if x > cut { phi(x) } else { 0.0 },
            &[cut],
        );
    Ok(BoundaryDecomposition {
        t_star,
        z_star,
        a_star: t_star - z_star,
        bound: root * phi(cut),
    })
}
