//! Command-line front end.
//!
//! Configuration is a flat text file of `key = value` (or `key: value`)
//! lines; `#` starts a comment. Flags override file keys and the manifest
//! records which ones did. Keys:
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `command` | required | `simulate`, `diagnose`, `size-power`, `fan-chart`, `posttest`, `external`, `build-tables` |
//! | `seed` | `1` | master seed |
//! | `workers` | available cores | worker threads |
//! | `out` | `bootdiag-out` | output directory |
//! | `input` | none | external draw pool (single-column CSV) |
//! | `scenario` | `boundary` | `iv`, `ar1`, `boundary`, `heavytail`, `delta` |
//! | `scenario.n` | `1000` | sample size; comma list gives a grid |
//! | `scenario.regime` | per family | `strong`/`weak`, `stationary`/`local`, `interior`/`near`, `gaussian`/`t`/`stable`, `regular`/`near` |
//! | `scenario.param` | per regime | `|pi|`/`|lambda|`, `alpha0`/`c`, `theta0`/`c`, `df`/tail index, `theta0`/`c`; comma list gives a grid |
//! | `scenario.k` | `3` | IV instruments |
//! | `scenario.rho_uv` | `0.9` | IV endogeneity |
//! | `scenario.beta` | `0` | IV structural coefficient |
//! | `scenario.y0` | `0` | AR(1) start value |
//! | `scenario.scheme` | `parametric` | `parametric`, `residual`, `iid`, `wild` |
//! | `diagnostic.m` | `20` | draws per test |
//! | `diagnostic.measure` | `ks` | `ks|cvm|ad|sks+|sks-|interval:a,b|point:x|moment[:a,b,d]` |
//! | `diagnostic.standardization` | `none` | `none`, `scale`, `location-scale` |
//! | `diagnostic.prepass_m` | `max(10^4, 100 m)` | prepass draws |
//! | `diagnostic.level_alpha` | `0.05` | nominal level |
//! | `diagnostic.table_m_ref` | `10000` | reference table sample size |
//! | `diagnostic.table_reps` | `200000` | reference table replications |
//! | `diagnostic.table_seed` | shipped seed | reference table seed |
//! | `plan.R` | `500` | datasets |
//! | `plan.K` | `1` | tests per dataset (`external`: blocks, default 500) |
//! | `plan.alphas` | `0.01,0.05,0.1` | reported levels |
//! | `plan.M` | `200` | fan-chart realisations |
//! | `plan.B` | `2000` | fan-chart draws per realisation |
//! | `plan.x_grid` | `-3,3,61` | fan-chart grid `lo,hi,points` |
//! | `plan.threshold` | `kolmogorov_quantile(0.95)` | post-test threshold on `T*` |
//! | `plan.f_threshold` | `10` | first-stage F pretest threshold |
//! | `plan.with_replacement` | `false` | external blocks drawn with replacement |
//!
//! Aliases: `n`, `m`, `measure`, `level_alpha`, `R`, `K`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::diagnostics::{
    build_reference_table_file, default_prepass, prepass, run_test_with, test_draws,
    DiagnosticConfig, DiagnosticOutcome, ReferenceLaw, ReferencePolicy, RejectionProfile,
    Standardization, TableSpec, TABLE_SEED,
};
use crate::discrepancy::DiscrepancyMeasure;
use crate::error::{Error, Result};
use crate::experiments::{
    fan_chart, fan_chart_csv, first_stage_pretest, linspace, post_test_bias, profile_csv,
    size_power_csv, size_power_table, with_workers, ExperimentPlan, PostStatistic,
    PostTestReport,
};
use crate::models::{
    simulate, Ar1Regime, Ar1Scheme, BootstrapDrawStream, BoundaryRegime, DeltaRegime, Fit,
    HeavyTailRegime, HeavyTailScheme, Innovation, IvScheme, IvStrength, ScenarioSpec,
};
use crate::probkernel::{kolmogorov_quantile, SeedSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Diagnose,
    SizePower,
    FanChart,
    Posttest,
    External,
    BuildTables,
}

impl Command {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "simulate" => Command::Simulate,
            "diagnose" => Command::Diagnose,
            "size-power" => Command::SizePower,
            "fan-chart" => Command::FanChart,
            "posttest" => Command::Posttest,
            "external" => Command::External,
            "build-tables" => Command::BuildTables,
            other => return Err(Error::config("command", format!("unknown command `{other}`"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Diagnose => "diagnose",
            Command::SizePower => "size-power",
            Command::FanChart => "fan-chart",
            Command::Posttest => "posttest",
            Command::External => "external",
            Command::BuildTables => "build-tables",
        }
    }
}

const KEYS: &[&str] = &[
    "command",
    "seed",
    "workers",
    "out",
    "input",
    "scenario",
    "scenario.n",
    "scenario.regime",
    "scenario.param",
    "scenario.k",
    "scenario.rho_uv",
    "scenario.beta",
    "scenario.y0",
    "scenario.scheme",
    "diagnostic.m",
    "diagnostic.measure",
    "diagnostic.standardization",
    "diagnostic.prepass_m",
    "diagnostic.level_alpha",
    "diagnostic.table_m_ref",
    "diagnostic.table_reps",
    "diagnostic.table_seed",
    "plan.R",
    "plan.K",
    "plan.alphas",
    "plan.M",
    "plan.B",
    "plan.x_grid",
    "plan.threshold",
    "plan.f_threshold",
    "plan.with_replacement",
];

fn canonical_key(key: &str) -> Result<&'static str> {
    let resolved = match key {
        "n" => "scenario.n",
        "m" => "diagnostic.m",
        "measure" => "diagnostic.measure",
        "level_alpha" => "diagnostic.level_alpha",
        "R" => "plan.R",
        "K" => "plan.K",
        other => other,
    };
    KEYS.iter()
        .find(|k| **k == resolved)
        .copied()
        .ok_or_else(|| Error::config(key, "unknown key"))
}

/// Parses the flat config text into canonical `key -> value` pairs.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = split_pair(line).ok_or_else(|| {
            Error::config(format!("line {}", lineno + 1), format!("expected `key = value`, got `{line}`"))
        })?;
        let key = canonical_key(key)?;
        if map.insert(key.to_string(), value.to_string()).is_some() {
            return Err(Error::config(key, format!("set twice (line {})", lineno + 1)));
        }
    }
    Ok(map)
}

fn split_pair(line: &str) -> Option<(&str, &str)> {
    let (k, v) = line.split_once('=').or_else(|| line.split_once(':'))?;
    let (k, v) = (k.trim(), v.trim());
    (!k.is_empty()).then_some((k, v))
}

/// Experiment sizes and command-specific knobs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanSettings {
    pub r: usize,
    pub k: usize,
    pub alphas: Vec<f64>,
    pub fan_m: usize,
    pub fan_b: usize,
    pub x_grid: Vec<f64>,
    pub threshold: f64,
    pub f_threshold: f64,
    pub with_replacement: bool,
}

/// Fully validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub scenarios: Vec<ScenarioSpec>,
    pub diagnostic: DiagnosticConfig,
    pub plan: PlanSettings,
    pub master_seed: u64,
    pub workers: usize,
    pub out: PathBuf,
    pub input: Option<PathBuf>,
    /// Resolved canonical keys, including defaults applied.
    pub entries: BTreeMap<String, String>,
    /// File keys replaced by flags.
    pub overridden: Vec<String>,
}

struct Values<'a> {
    map: &'a BTreeMap<String, String>,
}

impl Values<'_> {
    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::config(key, format!("cannot parse `{v}`"))),
        }
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.raw(key)
            .map(|v| {
                v.split(',')
                    .map(|x| {
                        x.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::config(key, format!("cannot parse `{x}`")))
                    })
                    .collect()
            })
            .transpose()
    }
}

fn positive(key: &str, v: usize) -> Result<usize> {
    if v == 0 {
        Err(Error::config(key, "must be at least 1"))
    } else {
        Ok(v)
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn build_scenarios(v: &Values<'_>) -> Result<Vec<ScenarioSpec>> {
    let family = v.raw("scenario").unwrap_or("boundary");
    let ns: Vec<usize> = match v.raw("scenario.n") {
        None => vec![1000],
        Some(text) => text
            .split(',')
            .map(|x| {
                x.trim()
                    .parse()
                    .map_err(|_| Error::config("scenario.n", format!("cannot parse `{x}`")))
            })
            .collect::<Result<_>>()?,
    };
    let regime = v.raw("scenario.regime");
    let scheme = v.raw("scenario.scheme").unwrap_or("parametric");
    let bad_scheme = || Error::config("scenario.scheme", format!("`{scheme}` does not apply to `{family}`"));
    let bad_regime = |r: &str| Error::config("scenario.regime", format!("`{r}` does not apply to `{family}`"));
    let default_param = match (family, regime) {
        ("iv", Some("weak")) | ("ar1", Some("local")) | ("boundary", None | Some("near")) => 0.0,
        ("delta", Some("near")) => 0.0,
        ("heavytail", Some("t")) => 5.0,
        ("heavytail", None | Some("stable")) => 1.5,
        ("ar1", None | Some("stationary")) => 0.5,
        _ => 1.0,
    };
    let params = v.list("scenario.param")?.unwrap_or_else(|| vec![default_param]);
    let mut out = Vec::new();
    for &n in &ns {
        for &p in &params {
            let spec = match family {
                "iv" => {
                    let k = v.parse("scenario.k", 3usize)?;
                    let mut e1 = vec![0.0; k];
                    if k > 0 {
                        e1[0] = p;
                    }
                    ScenarioSpec::Iv {
                        n,
                        k,
                        rho_uv: v.parse("scenario.rho_uv", 0.9)?,
                        beta: v.parse("scenario.beta", 0.0)?,
                        strength: match regime.unwrap_or("strong") {
                            "strong" => IvStrength::Strong(e1),
                            "weak" => IvStrength::Weak(e1),
                            r => return Err(bad_regime(r)),
                        },
                        scheme: match scheme {
                            "parametric" => IvScheme::ParametricGaussian,
                            "iid" => IvScheme::NonparametricIid,
                            _ => return Err(bad_scheme()),
                        },
                    }
                }
                "ar1" => ScenarioSpec::Ar1 {
                    n,
                    regime: match regime.unwrap_or("stationary") {
                        "stationary" => Ar1Regime::Stationary(p),
                        "local" => Ar1Regime::LocalToUnity(p),
                        r => return Err(bad_regime(r)),
                    },
                    y0: v.parse("scenario.y0", 0.0)?,
                    scheme: match scheme {
                        "parametric" => Ar1Scheme::RecursiveParametricGaussian,
                        "residual" => Ar1Scheme::RecursiveResidual,
                        _ => return Err(bad_scheme()),
                    },
                },
                "boundary" => ScenarioSpec::Boundary {
                    n,
                    regime: match regime.unwrap_or("near") {
                        "interior" => BoundaryRegime::Interior(p),
                        "near" => BoundaryRegime::NearBoundary(p),
                        r => return Err(bad_regime(r)),
                    },
                },
                "heavytail" => ScenarioSpec::HeavyTail {
                    n,
                    regime: match regime.unwrap_or("stable") {
                        "gaussian" => HeavyTailRegime::FiniteVariance(Innovation::Gaussian),
                        "t" => HeavyTailRegime::FiniteVariance(Innovation::StudentT(p)),
                        "stable" => HeavyTailRegime::Stable(p),
                        r => return Err(bad_regime(r)),
                    },
                    scheme: match scheme {
                        "parametric" | "iid" => HeavyTailScheme::IidResample,
                        "wild" => HeavyTailScheme::WildRademacher,
                        _ => return Err(bad_scheme()),
                    },
                },
                "delta" => ScenarioSpec::DeltaMethod {
                    n,
                    regime: match regime.unwrap_or("regular") {
                        "regular" => DeltaRegime::Regular(p),
                        "near" => DeltaRegime::NearSingular(p),
                        r => return Err(bad_regime(r)),
                    },
                },
                other => return Err(Error::config("scenario", format!("unknown scenario `{other}`"))),
            };
            spec.validate().map_err(|e| Error::config("scenario", e.to_string()))?;
            out.push(spec);
        }
    }
    Ok(out)
}

fn build_diagnostic(v: &Values<'_>) -> Result<DiagnosticConfig> {
    let m = positive("diagnostic.m", v.parse("diagnostic.m", 20usize)?)?;
    let measure: DiscrepancyMeasure = match v.raw("diagnostic.measure") {
        None => DiscrepancyMeasure::Ks,
        Some(text) => text
            .parse()
            .map_err(|e: Error| Error::config("diagnostic.measure", e.to_string()))?,
    };
    let standardization = match v.raw("diagnostic.standardization").unwrap_or("none") {
        "none" => Standardization::None,
        "scale" => Standardization::ScaleOnly,
        "location-scale" => Standardization::LocationScale,
        other => {
            return Err(Error::config(
                "diagnostic.standardization",
                format!("unknown standardization `{other}`"),
            ))
        }
    };
    let level_alpha: f64 = v.parse("diagnostic.level_alpha", 0.05)?;
    if !(level_alpha > 0.0 && level_alpha < 1.0) {
        return Err(Error::config("diagnostic.level_alpha", format!("level_alpha = {level_alpha} must lie in (0, 1)")));
    }
    let prepass_m = v.parse("diagnostic.prepass_m", default_prepass(m))?;
    if standardization != Standardization::None && prepass_m < 10 * m {
        return Err(Error::config("diagnostic.prepass_m", format!("prepass_m = {prepass_m} must be at least 10 m = {}", 10 * m)));
    }
    let config = DiagnosticConfig {
        m,
        measure,
        standardization,
        prepass_m,
        level_alpha,
        reference: ReferencePolicy {
            tables: TableSpec {
                m_ref: v.parse("diagnostic.table_m_ref", TableSpec::default().m_ref)?,
                replications: v.parse("diagnostic.table_reps", TableSpec::default().replications)?,
                seed: SeedSpec::new(v.parse("diagnostic.table_seed", TABLE_SEED)?),
            },
            build_missing: true,
        },
    };
    config
        .validate()
        .map_err(|e| Error::config("diagnostic", e.to_string()))?;
    Ok(config)
}

fn build_plan(v: &Values<'_>, command: Command) -> Result<PlanSettings> {
    let default_k = if command == Command::External { 500 } else { 1 };
    let alphas = v.list("plan.alphas")?.unwrap_or_else(|| vec![0.01, 0.05, 0.10]);
    if alphas.is_empty() || alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
        return Err(Error::config("plan.alphas", "levels must lie in (0, 1)"));
    }
    let x_grid = match v.list("plan.x_grid")? {
        None => linspace(-3.0, 3.0, 61),
        Some(spec) => match spec[..] {
            [lo, hi, points] if lo < hi && points >= 2.0 && points.fract() == 0.0 => {
                linspace(lo, hi, points as usize)
            }
            _ => return Err(Error::config("plan.x_grid", "expected `lo,hi,points` with lo < hi")),
        },
    };
    Ok(PlanSettings {
        r: positive("plan.R", v.parse("plan.R", 500usize)?)?,
        k: positive("plan.K", v.parse("plan.K", default_k)?)?,
        alphas,
        fan_m: v.parse("plan.M", 200usize)?,
        fan_b: v.parse("plan.B", 2000usize)?,
        x_grid,
        threshold: v.parse("plan.threshold", kolmogorov_quantile(0.95)?)?,
        f_threshold: v.parse("plan.f_threshold", 10.0)?,
        with_replacement: v.parse("plan.with_replacement", false)?,
    })
}

/// Validates file keys overlaid with flag keys; flags win.
pub fn parse_config(file: Option<&str>, flags: &[(String, String)]) -> Result<RunConfig> {
    let mut map = match file {
        Some(text) => parse_config_text(text)?,
        None => BTreeMap::new(),
    };
    let mut overridden = Vec::new();
    for (key, value) in flags {
        let key = canonical_key(key)?;
        if let Some(old) = map.insert(key.to_string(), value.clone()) {
            if old != *value && !overridden.iter().any(|k| k == key) {
                overridden.push(key.to_string());
            }
        }
    }
    let v = Values { map: &map };
    let command = Command::parse(
        v.raw("command")
            .ok_or_else(|| Error::config("command", "no command given"))?,
    )?;
    let scenarios = match command {
        Command::External | Command::BuildTables => Vec::new(),
        _ => build_scenarios(&v)?,
    };
    let diagnostic = build_diagnostic(&v)?;
    let plan = build_plan(&v, command)?;
    let workers = positive("workers", v.parse("workers", default_workers())?)?;
    let input = v.raw("input").map(PathBuf::from);
    if command == Command::External && input.is_none() {
        return Err(Error::config("input", "the external command needs an input pool"));
    }
    let mut entries = map.clone();
    entries.insert("seed".into(), v.parse("seed", 1u64)?.to_string());
    entries.insert("diagnostic.m".into(), diagnostic.m.to_string());
    entries.insert("diagnostic.measure".into(), diagnostic.measure.to_string());
    Ok(RunConfig {
        command,
        scenarios,
        diagnostic,
        plan,
        master_seed: v.parse("seed", 1u64)?,
        workers,
        out: PathBuf::from(v.raw("out").unwrap_or("bootdiag-out")),
        input,
        entries,
        overridden,
    })
}

/// A precomputed bootstrap sample, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalDrawPool {
    pub label: String,
    pub draws: Vec<f64>,
}

impl ExternalDrawPool {
    pub fn new(label: impl Into<String>, draws: Vec<f64>) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::InvalidSample("the draw pool is empty".into()));
        }
        if let Some(i) = draws.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidSample(format!("draw {} is not finite", i + 1)));
        }
        Ok(ExternalDrawPool {
            label: label.into(),
            draws,
        })
    }

    /// Single-column CSV; a non-numeric first line is a header.
    pub fn parse_csv(label: impl Into<String>, text: &str) -> Result<Self> {
        let mut draws = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let field = raw.trim().trim_end_matches(',').trim();
            if field.is_empty() {
                continue;
            }
            if field.contains(',') {
                return Err(Error::InvalidSample(format!("line {}: expected one column", i + 1)));
            }
            match field.parse::<f64>() {
                Ok(x) if x.is_finite() => draws.push(x),
                Ok(_) => {
                    return Err(Error::InvalidSample(format!(
                        "line {}: non-finite draw `{field}`",
                        i + 1
                    )))
                }
                Err(_) if i == 0 => {}
                Err(_) => {
                    return Err(Error::InvalidSample(format!(
                        "line {}: `{field}` is not a number",
                        i + 1
                    )))
                }
            }
        }
        ExternalDrawPool::new(label, draws)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(path.display().to_string(), &text)
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct ExternalResult {
    pub profile: RejectionProfile,
    pub outcomes: Vec<DiagnosticOutcome>,
    /// Pool indices feeding each block.
    pub blocks: Vec<Vec<usize>>,
}

/// Runs `k` tests of `m` draws each on the standardised pool.
///
/// The pool is standardised by its own mean and `1/B` standard deviation,
/// then a seeded permutation is cut into `k` disjoint blocks. With
/// `with_replacement` each block instead draws `m` indices uniformly.
pub fn run_external(
    pool: &ExternalDrawPool,
    m: usize,
    k: usize,
    config: &DiagnosticConfig,
    seed: &SeedSpec,
    with_replacement: bool,
    alphas: &[f64],
) -> Result<ExternalResult> {
    if m == 0 || k == 0 {
        return Err(Error::config("plan.K", "m and K must be at least 1"));
    }
    let b = pool.len();
    if !with_replacement && k * m > b {
        return Err(Error::config(
            "plan.K",
            format!("K m = {} exceeds the pool size B = {b}; enable plan.with_replacement", k * m),
        ));
    }
    let standardizer = crate::diagnostics::Standardizer::from_draws(Standardization::LocationScale, &pool.draws)?;
    let z: Vec<f64> = pool.draws.iter().map(|&x| standardizer.apply(x)).collect();
    let blocks: Vec<Vec<usize>> = if with_replacement {
        (0..k as u64)
            .map(|j| {
                let mut rng = seed.child(j).rng();
                (0..m).map(|_| rng.random_range(0..b)).collect()
            })
            .collect()
    } else {
        let mut order: Vec<usize> = (0..b).collect();
        order.shuffle(&mut seed.rng());
        order.chunks(m).take(k).map(<[usize]>::to_vec).collect()
    };
    let mut test_config = config.clone();
    test_config.m = m;
    test_config.standardization = Standardization::None;
    let outcomes: Vec<DiagnosticOutcome> = blocks
        .par_iter()
        .map(|idx| test_draws(idx.iter().map(|&i| z[i]).collect(), &test_config))
        .collect::<Result<_>>()?;
    let p: Vec<f64> = outcomes.iter().map(|o| o.p_value.get()).collect();
    let profile = RejectionProfile::from_p_values(&p, alphas, m, 0)?;
    Ok(ExternalResult {
        profile,
        outcomes,
        blocks,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub version: String,
    pub command: Command,
    pub config: BTreeMap<String, String>,
    pub overridden_by_flags: Vec<String>,
    pub master_seed: u64,
    pub workers: usize,
    pub wall_time_secs: f64,
    pub with_replacement: bool,
    pub outputs: Vec<OutputFile>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes each `(file name, content)` into `config.out` plus
/// `manifest.json`, and returns the manifest.
pub fn emit_results(outputs: &[(String, String)], config: &RunConfig, wall_time_secs: f64) -> Result<Manifest> {
    let dir = &config.out;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::with_capacity(outputs.len());
    for (name, content) in outputs {
        let path = dir.join(name);
        fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
        files.push(OutputFile {
            file: name.clone(),
            sha256: sha256_hex(content.as_bytes()),
            bytes: content.len(),
        });
    }
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: config.command,
        config: config.entries.clone(),
        overridden_by_flags: config.overridden.clone(),
        master_seed: config.master_seed,
        workers: config.workers,
        wall_time_secs,
        with_replacement: config.plan.with_replacement,
        outputs: files,
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

fn reference_name(r: &ReferenceLaw) -> String {
    match r {
        ReferenceLaw::KolmogorovSeries => "kolmogorov".into(),
        ReferenceLaw::OneSidedExact => "one-sided".into(),
        ReferenceLaw::SimulatedTable(id) => format!("table:{id}"),
    }
}

fn outcomes_csv(outcomes: &[DiagnosticOutcome]) -> String {
    let mut out = String::from("test,m,measure,d_star,t_star,p_value,reference\n");
    for (i, o) in outcomes.iter().enumerate() {
        out.push_str(&format!(
            "{i},{},\"{}\",{},{},{},\"{}\"\n",
            o.m,
            o.d_star.measure,
            o.d_star.value,
            o.t_star,
            o.p_value.get(),
            reference_name(&o.reference)
        ));
    }
    out
}

fn posttest_rows(reports: &[PostTestReport]) -> String {
    let mut out = String::from(
        "conditioning,threshold,kept,total,degenerate,distance_to_normal,distance_to_unconditional\n",
    );
    for r in reports {
        out.push_str(&format!(
            "\"{}\",{},{},{},{},{},{}\n",
            r.conditioning,
            r.threshold,
            r.kept(),
            r.total(),
            r.degenerate,
            r.distance_to_normal,
            r.distance_to_unconditional
        ));
    }
    out
}

fn plan_for(config: &RunConfig) -> ExperimentPlan {
    let mut plan = ExperimentPlan::new(
        config.scenarios.clone(),
        config.diagnostic.clone(),
        config.plan.r,
        SeedSpec::new(config.master_seed),
    );
    plan.k = config.plan.k;
    plan.alphas = config.plan.alphas.clone();
    plan
}

fn simulate_csv(config: &RunConfig) -> Result<String> {
    let seed = SeedSpec::new(config.master_seed);
    let mut out = String::from("scenario,replication,statistic,estimate,first_stage_f,status\n");
    for (s, spec) in config.scenarios.iter().enumerate() {
        let rows: Vec<String> = (0..config.plan.r as u64)
            .into_par_iter()
            .map(|r| -> Result<String> {
                let label = spec.label();
                match simulate(spec, &seed.descend(&[s as u64, r, 0])) {
                    Ok(f) => {
                        let (est, fstat) = match f.fit() {
                            Fit::Iv(x) => (x.beta_hat, format!("{}", x.first_stage_f)),
                            Fit::Ar1(x) => (x.alpha_hat, String::new()),
                            Fit::Boundary(x) => (x.theta_hat, String::new()),
                            Fit::HeavyTail(x) => (x.theta_hat, String::new()),
                            Fit::DeltaMethod(x) => (x.tau_hat, String::new()),
                        };
                        Ok(format!("\"{label}\",{r},{},{est},{fstat},ok\n", f.original_statistic()?))
                    }
                    Err(Error::DegenerateFit(_)) => Ok(format!("\"{label}\",{r},,,,degenerate\n")),
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<_>>()?;
        rows.iter().for_each(|r| out.push_str(r));
    }
    Ok(out)
}

/// Executes `config` and returns the output files.
pub fn execute(config: &RunConfig) -> Result<Vec<(String, String)>> {
    let seed = SeedSpec::new(config.master_seed);
    match config.command {
        Command::Simulate => Ok(vec![("simulate.csv".into(), simulate_csv(config)?)]),
        Command::Diagnose => {
            let spec = &config.scenarios[0];
            let fitted = simulate(spec, &seed.descend(&[0, 0, 0]))?;
            let dc = &config.diagnostic;
            let st = prepass(&fitted, dc.standardization, dc.prepass_m)?;
            let boot = seed.descend(&[0, 0, 1]);
            let outcomes: Vec<DiagnosticOutcome> = (0..config.plan.k as u64)
                .into_par_iter()
                .map(|j| run_test_with(&mut BootstrapDrawStream::new(&fitted, boot.child(j)), dc, &st))
                .collect::<Result<_>>()?;
            let mut files = vec![("diagnose.csv".to_string(), outcomes_csv(&outcomes))];
            if outcomes.len() > 1 {
                let p: Vec<f64> = outcomes.iter().map(|o| o.p_value.get()).collect();
                let profile = RejectionProfile::from_p_values(&p, &config.plan.alphas, dc.m, 0)?;
                files.push(("profile.csv".into(), profile_csv(&profile)));
            }
            Ok(files)
        }
        Command::SizePower => {
            let rows = size_power_table(&plan_for(config))?;
            Ok(vec![("size_power.csv".into(), size_power_csv(&rows, &config.plan.alphas))])
        }
        Command::FanChart => {
            let data = fan_chart(
                &config.scenarios[0],
                config.plan.fan_m,
                config.plan.fan_b,
                &config.plan.x_grid,
                &seed,
            )?;
            Ok(vec![("fan_chart.csv".into(), fan_chart_csv(&data))])
        }
        Command::Posttest => {
            let mut plan = plan_for(config);
            plan.scenarios.truncate(1);
            let stat = match plan.scenarios[0] {
                ScenarioSpec::Iv { .. } => PostStatistic::IvTStat,
                ScenarioSpec::Ar1 { .. } => PostStatistic::Ar1TStat,
                ScenarioSpec::HeavyTail { .. } => PostStatistic::MeanTStat,
                _ => {
                    return Err(Error::config(
                        "scenario",
                        "posttest needs an iv, ar1 or heavytail scenario",
                    ))
                }
            };
            let mut reports = vec![post_test_bias(&plan, stat, config.plan.threshold)?];
            if stat == PostStatistic::IvTStat {
                reports.push(first_stage_pretest(&plan, config.plan.f_threshold)?);
            }
            Ok(vec![("posttest.csv".into(), posttest_rows(&reports))])
        }
        Command::External => {
            let path = config.input.as_ref().expect("validated");
            let pool = ExternalDrawPool::read_csv(path)?;
            let result = run_external(
                &pool,
                config.diagnostic.m,
                config.plan.k,
                &config.diagnostic,
                &seed,
                config.plan.with_replacement,
                &config.plan.alphas,
            )?;
            Ok(vec![
                ("external_tests.csv".into(), outcomes_csv(&result.outcomes)),
                ("profile.csv".into(), profile_csv(&result.profile)),
            ])
        }
        Command::BuildTables => {
            let tables = &config.diagnostic.reference.tables;
            let m_ref = match config.diagnostic.measure {
                DiscrepancyMeasure::MomentBased(_) => config.diagnostic.m,
                _ => tables.m_ref,
            };
            let path = build_reference_table_file(
                config.diagnostic.measure,
                m_ref,
                tables.replications,
                tables.seed.clone(),
                &config.out,
            )?;
            let name = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            Ok(vec![(name, text)])
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "bootdiag", version, about = "Bootstrap diagnostics for asymptotic normality")]
struct Args {
    /// simulate | diagnose | size-power | fan-chart | posttest | external | build-tables
    command: Option<String>,
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    m: Option<String>,
    /// ks | cvm | ad | sks+ | sks- | interval:a,b | point:x | moment
    #[arg(long)]
    measure: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    workers: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// External draw pool (single-column CSV).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Any config key, e.g. `--set scenario=iv`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn args_to_config(args: Args) -> Result<RunConfig> {
    let file = match &args.config {
        Some(path) => Some(fs::read_to_string(path).map_err(|e| Error::io(path, e))?),
        None => None,
    };
    let mut flags: Vec<(String, String)> = Vec::new();
    for item in &args.set {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| Error::config(item.as_str(), "expected --set key=value"))?;
        flags.push((k.trim().to_string(), v.trim().to_string()));
    }
    let named = [
        ("command", args.command),
        ("scenario.n", args.n),
        ("diagnostic.m", args.m),
        ("diagnostic.measure", args.measure),
        ("seed", args.seed),
        ("workers", args.workers),
        ("out", args.out.map(|p| p.display().to_string())),
        ("input", args.input.map(|p| p.display().to_string())),
    ];
    for (k, v) in named {
        if let Some(v) = v {
            flags.push((k.to_string(), v));
        }
    }
    parse_config(file.as_deref(), &flags)
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let started = Instant::now();
    let outcome = args_to_config(args).and_then(|config| {
        let files = with_workers(config.workers, || execute(&config))??;
        emit_results(&files, &config, started.elapsed().as_secs_f64())
    });
    match outcome {
        Ok(manifest) => {
            for f in &manifest.outputs {
                println!("{}  {}", f.sha256, f.file);
            }
            0
        }
        Err(e) => {
            eprintln!("bootdiag: {e}");
            e.exit_code()
        }
    }
}
