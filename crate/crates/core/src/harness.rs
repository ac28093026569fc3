//! Experiment orchestration: configurations, empirical CDFs, KS distances
//! against exact or limiting laws, and report files.
//!
//! A run is described by an [`ExperimentConfig`] (read from JSON) and
//! produces a [`ComparisonReport`]. Reports are written as pretty JSON with
//! the wall-clock timestamp as the only non-reproducible line; tables go to a
//! CSV file next to it.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::airylim::{cdf_limit, LimitOptions, LimitProcess, PointConfig};
use crate::dynamics::{burke_check, dkw_band, evolve_skorokhod, rescaled_samples, scaled_index, SampleOptions, ScaledSample, SupRule};
use crate::error::{Error, Result};
use crate::finitet::{finite_t_cdf_with, FiniteOptions, FiniteTimeKernelSpec};
use crate::paths::{make_initial_condition, sample_paths, Flavor, HeightVector, TimeGrid};

/// Smallest sample accepted by [`ecdf`].
pub const MIN_SAMPLES: usize = 10;
/// Spacing of the tabulation grid of an exact CDF, in units of s.
pub const CDF_GRID_STEP: f64 = 0.04;
/// Upper bound on the number of tabulation points.
pub const CDF_GRID_MAX: usize = 400;
/// Slack allowed in the monotone sweep comparison.
pub const SWEEP_SLACK: f64 = 1e-9;
/// Number of levels in each attractiveness coupling.
pub const COUPLING_LEVELS: i64 = 24;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// What a run compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// ECDF of simulated rescaled positions against the finite-time CDF.
    McVsFiniteT,
    /// ECDF of simulated rescaled positions against a limit law.
    McVsLimit,
    /// Finite-time CDFs against a limit law along a sweep of times.
    FiniteTVsLimit,
    /// Pathwise and distributional properties of the dynamics.
    PropertySuite,
}

impl ExperimentKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "mc-vs-finite-t" => Ok(ExperimentKind::McVsFiniteT),
            "mc-vs-limit" => Ok(ExperimentKind::McVsLimit),
            "finite-t-vs-limit" => Ok(ExperimentKind::FiniteTVsLimit),
            "property-suite" => Ok(ExperimentKind::PropertySuite),
            other => Err(Error::Config(format!("unknown experiment kind '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::McVsFiniteT => "mc-vs-finite-t",
            ExperimentKind::McVsLimit => "mc-vs-limit",
            ExperimentKind::FiniteTVsLimit => "finite-t-vs-limit",
            ExperimentKind::PropertySuite => "property-suite",
        }
    }
}

/// A single time or a sweep of times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Times {
    One(f64),
    Many(Vec<f64>),
}

impl Times {
    pub fn list(&self) -> Vec<f64> {
        match self {
            Times::One(t) => vec![*t],
            Times::Many(v) => v.clone(),
        }
    }
}

/// A run description. Field names are the JSON keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub flavor: Option<String>,
    /// Limit process for the limit kinds; `burke` or `attractiveness` for
    /// the property suite.
    #[serde(default)]
    pub process: Option<String>,
    #[serde(default)]
    pub t: Option<Times>,
    #[serde(default)]
    pub r: Vec<f64>,
    #[serde(default)]
    pub theta: Vec<f64>,
    /// Levels of the deterministic comparisons.
    #[serde(default)]
    pub s: Vec<f64>,
    /// Unscaled levels of a joint event, paired with `n_indices`.
    #[serde(default)]
    pub a: Vec<f64>,
    #[serde(default)]
    pub n_indices: Vec<i64>,
    #[serde(default)]
    pub samples: Option<usize>,
    pub seed: u64,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub order: Option<usize>,
    #[serde(default)]
    pub lcut: Option<f64>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

/// SHA-256 (hex) of the crate version followed by the compact JSON of `v`.
pub fn hash_json<T: Serialize>(v: &T) -> String {
    let mut h = Sha256::new();
    h.update(env!("CARGO_PKG_VERSION").as_bytes());
    h.update(serde_json::to_string(v).expect("value serializes").as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn positive(name: &str, v: Option<f64>) -> Result<()> {
    match v {
        Some(x) if !(x > 0.0) || !x.is_finite() => Err(Error::Config(format!("{name} must be positive, got {x}"))),
        _ => Ok(()),
    }
}

impl ExperimentConfig {
    /// Minimal configuration of a given kind; every other field is unset.
    pub fn new(kind: ExperimentKind, seed: u64) -> Self {
        Self {
            kind,
            flavor: None,
            process: None,
            t: None,
            r: Vec::new(),
            theta: Vec::new(),
            s: Vec::new(),
            a: Vec::new(),
            n_indices: Vec::new(),
            samples: None,
            seed,
            dt: None,
            order: None,
            lcut: None,
            delta: None,
            lambda: None,
            rho: None,
            out: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        for t in self.t.iter().flat_map(|t| t.list()) {
            positive("t", Some(t))?;
        }
        if matches!(&self.t, Some(Times::Many(v)) if v.is_empty()) {
            return Err(Error::Config("t sweep is empty".into()));
        }
        positive("dt", self.dt)?;
        positive("lcut", self.lcut)?;
        positive("delta", self.delta)?;
        positive("lambda", self.lambda)?;
        if let Some(rho) = self.rho {
            if !(rho >= 0.0) || !rho.is_finite() {
                return Err(Error::Config(format!("rho must be non-negative, got {rho}")));
            }
        }
        if self.samples == Some(0) {
            return Err(Error::Config("samples must be positive".into()));
        }
        if self.order == Some(0) {
            return Err(Error::Config("order must be positive".into()));
        }
        if self.r.iter().chain(&self.s).chain(&self.a).chain(&self.theta).any(|v| !v.is_finite()) {
            return Err(Error::Config("coordinates must be finite".into()));
        }
        if self.theta.iter().any(|&th| th < 0.0) {
            return Err(Error::Config("theta must be non-negative".into()));
        }
        if !self.theta.is_empty() && self.theta.len() != self.r.len() {
            return Err(Error::Config(format!("{} values of theta against {} values of r", self.theta.len(), self.r.len())));
        }
        if self.n_indices.len() != self.a.len() {
            return Err(Error::Config(format!("{} indices against {} levels", self.n_indices.len(), self.a.len())));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form and the crate version.
    pub fn meta_hash(&self) -> String {
        hash_json(self)
    }

    fn flavor(&self) -> Result<Flavor> {
        let name = self.flavor.as_deref().ok_or_else(|| Error::Config(format!("{} needs a flavor", self.kind.name())))?;
        Flavor::parse(name, self.lambda, self.rho)
    }

    fn limit_process(&self) -> Result<LimitProcess> {
        let name = self.process.as_deref().ok_or_else(|| Error::Config(format!("{} needs a process", self.kind.name())))?;
        LimitProcess::parse(name, self.delta)
    }

    fn single_t(&self) -> Result<f64> {
        match &self.t {
            Some(Times::One(t)) => Ok(*t),
            Some(Times::Many(v)) if v.len() == 1 => Ok(v[0]),
            Some(_) => Err(Error::Config(format!("{} takes a single t", self.kind.name()))),
            None => Err(Error::Config(format!("{} needs t", self.kind.name()))),
        }
    }

    fn samples(&self) -> Result<usize> {
        self.samples.ok_or_else(|| Error::Config(format!("{} needs samples", self.kind.name())))
    }

    fn theta_list(&self) -> Vec<f64> {
        if self.theta.is_empty() {
            vec![0.0; self.r.len()]
        } else {
            self.theta.clone()
        }
    }

    fn finite_options(&self) -> FiniteOptions {
        let d = FiniteOptions::default();
        FiniteOptions { order: self.order.unwrap_or(d.order), lcut: self.lcut.unwrap_or(d.lcut) }
    }

    fn limit_options(&self) -> LimitOptions {
        let d = LimitOptions::default();
        LimitOptions { order: self.order.unwrap_or(d.order), lcut: self.lcut.unwrap_or(d.lcut) }
    }

    fn sample_options(&self) -> SampleOptions {
        SampleOptions { dt: self.dt, sup_rule: MC_SUP_RULE, ..SampleOptions::default() }
    }
}

/// Supremum rule of every simulation run by the harness.
pub const MC_SUP_RULE: SupRule = SupRule::Bridge;

// ---------------------------------------------------------------------------
// Empirical CDFs and KS distances
// ---------------------------------------------------------------------------

/// Sorted sample with an optional evaluation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EcdfTable {
    values: Vec<f64>,
    grid: Vec<f64>,
}

/// Builds the empirical CDF of `samples`.
pub fn ecdf(samples: &[f64]) -> Result<EcdfTable> {
    if samples.is_empty() {
        return Err(Error::Domain("empty sample".into()));
    }
    if samples.len() < MIN_SAMPLES {
        return Err(Error::Domain(format!("need at least {MIN_SAMPLES} samples, got {}", samples.len())));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("sample value".into()));
    }
    let mut values = samples.to_vec();
    values.sort_by(|a, b| a.total_cmp(b));
    Ok(EcdfTable { values, grid: Vec::new() })
}

impl EcdfTable {
    /// Attaches an evaluation grid (sorted on the way in).
    pub fn with_grid(mut self, grid: &[f64]) -> Result<Self> {
        if grid.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("grid point".into()));
        }
        self.grid = grid.to_vec();
        self.grid.sort_by(|a, b| a.total_cmp(b));
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// F_n(x) = #{v ≤ x}/n.
    pub fn eval(&self, x: f64) -> f64 {
        self.values.partition_point(|&v| v <= x) as f64 / self.n() as f64
    }

    /// F_n(x⁻) = #{v < x}/n.
    pub fn eval_left(&self, x: f64) -> f64 {
        self.values.partition_point(|&v| v < x) as f64 / self.n() as f64
    }

    /// (x, F_n(x)) on the attached grid.
    pub fn table(&self) -> Vec<(f64, f64)> {
        self.grid.iter().map(|&x| (x, self.eval(x))).collect()
    }
}

/// sup_x |F_n(x) - F(x)| evaluated on both sides of every sample point and
/// at every point of `grid` and of the table's own grid. `cdf` must be
/// continuous at the sample points for the left-side value to be exact.
pub fn ks_distance<F>(ecdf: &EcdfTable, mut cdf: F, grid: &[f64]) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut d = 0.0f64;
    let vals = &ecdf.values;
    let n = vals.len() as f64;
    let mut i = 0;
    while i < vals.len() {
        let x = vals[i];
        let mut j = i;
        while j < vals.len() && vals[j] == x {
            j += 1;
        }
        let f = checked(cdf(x)?, x)?;
        d = d.max((f - i as f64 / n).abs()).max((j as f64 / n - f).abs());
        i = j;
    }
    for &x in grid.iter().chain(&ecdf.grid) {
        let f = checked(cdf(x)?, x)?;
        d = d.max((ecdf.eval(x) - f).abs()).max((ecdf.eval_left(x) - f).abs());
    }
    Ok(d)
}

fn checked(f: f64, x: f64) -> Result<f64> {
    if !f.is_finite() {
        return Err(Error::NonFinite(format!("cdf at {x}")));
    }
    Ok(f)
}

/// A CDF tabulated on an increasing grid and interpolated linearly.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedCdf {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl TabulatedCdf {
    /// Tabulates `cdf` on an even grid covering [lo, hi]; evaluations run in
    /// parallel and are collected in grid order.
    pub fn build<F>(lo: f64, hi: f64, cdf: F) -> Result<Self>
    where
        F: Fn(f64) -> Result<f64> + Sync,
    {
        if !(hi > lo) {
            return Err(Error::Domain(format!("empty tabulation range [{lo}, {hi}]")));
        }
        let count = (((hi - lo) / CDF_GRID_STEP).ceil() as usize).clamp(2, CDF_GRID_MAX);
        let h = (hi - lo) / count as f64;
        let grid: Vec<f64> = (0..=count).map(|k| lo + k as f64 * h).collect();
        let values = grid.par_iter().map(|&x| cdf(x)).collect::<Result<Vec<f64>>>()?;
        Ok(Self { grid, values })
    }

    /// Linear interpolation, constant beyond the end points.
    pub fn eval(&self, x: f64) -> f64 {
        let g = &self.grid;
        if x <= g[0] {
            return self.values[0];
        }
        if x >= g[g.len() - 1] {
            return self.values[g.len() - 1];
        }
        let k = g.partition_point(|&v| v <= x) - 1;
        let w = (x - g[k]) / (g[k + 1] - g[k]);
        self.values[k] * (1.0 - w) + self.values[k + 1] * w
    }
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// One line of a report: a statistic, the bound it is held to, and whether
/// it met it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub statistic: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Everything needed to repeat a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportMetadata {
    pub config: ExperimentConfig,
    pub version: String,
    pub meta_hash: String,
    pub seed: u64,
    pub sup_rule: Option<SupRule>,
    pub dt: Option<f64>,
    pub finite_order: Option<usize>,
    pub finite_lcut: Option<f64>,
    pub limit_order: Option<usize>,
    pub limit_lcut: Option<f64>,
    /// Kernel specifications (contours, conjugation) of every finite-time
    /// evaluation.
    pub kernels: Vec<FiniteTimeKernelSpec>,
    /// How the exact CDF was evaluated at sample points.
    pub cdf_evaluation: Option<String>,
}

/// Outcome of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub kind: ExperimentKind,
    /// Largest KS distance over the rows of an MC comparison.
    pub ks: Option<f64>,
    /// DKW 99% band of the MC comparisons.
    pub band: Option<f64>,
    pub pass: bool,
    pub rows: Vec<ReportRow>,
    pub metadata: ReportMetadata,
    /// Seconds since the Unix epoch at which the report was assembled.
    pub timestamp: u64,
    #[serde(skip)]
    pub table: CdfTable,
    #[serde(skip)]
    pub samples: Vec<ScaledSample>,
}

/// CDF values with their coordinates, written as CSV with columns
/// `coords…, value, order, meta_hash`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CdfTable {
    pub coords: Vec<String>,
    pub rows: Vec<(Vec<f64>, f64)>,
    pub order: usize,
    pub meta_hash: String,
}

impl CdfTable {
    pub fn new(coords: &[&str], order: usize, meta_hash: &str) -> Self {
        Self { coords: coords.iter().map(|c| c.to_string()).collect(), rows: Vec::new(), order, meta_hash: meta_hash.into() }
    }

    pub fn push(&mut self, coords: Vec<f64>, value: f64) {
        debug_assert_eq!(coords.len(), self.coords.len());
        self.rows.push((coords, value));
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
        let mut head = self.coords.clone();
        head.extend(["value", "order", "meta_hash"].map(String::from));
        w.write_record(&head).map_err(csv_error)?;
        for (c, v) in &self.rows {
            let mut rec: Vec<String> = c.iter().map(|x| x.to_string()).collect();
            rec.push(v.to_string());
            rec.push(self.order.to_string());
            rec.push(self.meta_hash.clone());
            w.write_record(&rec).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Writes samples as CSV with columns replica, r, theta, value.
pub fn write_samples_csv(samples: &[ScaledSample], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    for s in samples {
        w.serialize(s).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

impl ComparisonReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Report bytes with the timestamp line removed.
    pub fn reproducible_json(&self) -> String {
        strip_timestamp(&self.to_json())
    }

    /// Writes the JSON report to `path`, the CDF table to `path` with
    /// extension `csv`, and samples (if any) to `<stem>.samples.csv`.
    pub fn write(&self, path: &Path) -> Result<Vec<PathBuf>> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_json().as_bytes())?;
        f.write_all(b"\n")?;
        let mut written = vec![path.to_path_buf()];
        if !self.table.rows.is_empty() {
            let p = path.with_extension("csv");
            self.table.write_csv(&p)?;
            written.push(p);
        }
        if !self.samples.is_empty() {
            let p = path.with_extension("samples.csv");
            write_samples_csv(&self.samples, &p)?;
            written.push(p);
        }
        Ok(written)
    }
}

/// Drops the line carrying the timestamp field from a JSON report.
pub fn strip_timestamp(json: &str) -> String {
    json.lines().filter(|l| !l.trim_start().starts_with("\"timestamp\"")).collect::<Vec<_>>().join("\n")
}

fn now() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn base_metadata(cfg: &ExperimentConfig) -> ReportMetadata {
    ReportMetadata {
        config: cfg.clone(),
        version: env!("CARGO_PKG_VERSION").into(),
        meta_hash: cfg.meta_hash(),
        seed: cfg.seed,
        sup_rule: None,
        dt: None,
        finite_order: None,
        finite_lcut: None,
        limit_order: None,
        limit_lcut: None,
        kernels: Vec::new(),
        cdf_evaluation: None,
    }
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

/// Runs a configuration and writes its report when `out` is set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ComparisonReport> {
    cfg.validate()?;
    let report = match cfg.kind {
        ExperimentKind::McVsFiniteT => run_mc(cfg, Target::Finite)?,
        ExperimentKind::McVsLimit => run_mc(cfg, Target::Limit)?,
        ExperimentKind::FiniteTVsLimit => run_sweep(cfg)?,
        ExperimentKind::PropertySuite => run_properties(cfg)?,
    };
    if let Some(out) = &cfg.out {
        report.write(out)?;
    }
    Ok(report)
}

#[derive(Clone, Copy, PartialEq)]
enum Target {
    Finite,
    Limit,
}

fn mc_samples(cfg: &ExperimentConfig, flavor: Flavor, t: f64, r: &[f64], theta: &[f64]) -> Result<Vec<ScaledSample>> {
    let rows = rescaled_samples(flavor, t, r, theta, cfg.samples()?, cfg.seed, cfg.sample_options())?;
    Ok(rows.into_iter().flatten().collect())
}

fn run_mc(cfg: &ExperimentConfig, target: Target) -> Result<ComparisonReport> {
    let flavor = cfg.flavor()?;
    let t = cfg.single_t()?;
    let mut meta = base_metadata(cfg);
    meta.sup_rule = Some(MC_SUP_RULE);
    meta.dt = Some(cfg.dt.unwrap_or(1e-3 * t));
    let spec = FiniteTimeKernelSpec::new(flavor, t)?;
    let fopts = cfg.finite_options();
    let lopts = cfg.limit_options();
    let process = if target == Target::Limit { Some(cfg.limit_process()?) } else { None };
    match target {
        Target::Finite => {
            meta.finite_order = Some(fopts.order);
            meta.finite_lcut = Some(fopts.lcut);
            meta.kernels.push(spec);
        }
        Target::Limit => {
            meta.limit_order = Some(lopts.order);
            meta.limit_lcut = Some(lopts.lcut);
        }
    }
    let order = if target == Target::Finite { fopts.order } else { lopts.order };
    if !cfg.n_indices.is_empty() {
        if target == Target::Limit {
            return Err(Error::Config("mc-vs-limit compares rescaled coordinates; use r".into()));
        }
        return run_joint(cfg, flavor, t, &spec, fopts, meta);
    }
    if cfg.r.is_empty() {
        return Err(Error::Config("mc comparisons need r (or n_indices with a)".into()));
    }
    let theta = cfg.theta_list();
    let samples = mc_samples(cfg, flavor, t, &cfg.r, &theta)?;
    let n = cfg.samples()?;
    let band = dkw_band(n);
    let t13 = t.cbrt();
    let mut table = CdfTable::new(&["r", "theta", "s"], order, &meta.meta_hash);
    let mut rows = Vec::new();
    for (k, (&r, &th)) in cfg.r.iter().zip(&theta).enumerate() {
        let xs: Vec<f64> = samples.iter().skip(k).step_by(cfg.r.len()).map(|s| s.value).collect();
        let e = ecdf(&xs)?;
        let lo = e.values()[0] - 0.5;
        let hi = e.values()[n - 1] + 0.5;
        let idx = scaled_index(t, r, th);
        let exact = TabulatedCdf::build(lo, hi, |s| match process {
            None => {
                let a = 2.0 * t + 2.0 * th + 2.0 * r * t13 * t13 + t13 * s;
                finite_t_cdf_with(&spec, &[idx], &[a], fopts)
            }
            Some(p) => cdf_limit(p, &PointConfig::one(r, s), lopts),
        })
        .map_err(|e| provenance(e, &format!("r={r}, theta={th}")))?;
        for (x, v) in exact.grid.iter().zip(&exact.values) {
            table.push(vec![r, th, *x], *v);
        }
        let ks = ks_distance(&e, |x| Ok(exact.eval(x)), &exact.grid)?;
        rows.push(ReportRow { label: format!("r={r}, theta={th}, n_index={idx}"), statistic: ks, bound: band, pass: ks <= band });
    }
    meta.cdf_evaluation = Some(format!("tabulated with step <= {CDF_GRID_STEP} and linearly interpolated"));
    let ks = rows.iter().map(|r| r.statistic).fold(0.0, f64::max);
    Ok(ComparisonReport {
        kind: cfg.kind,
        ks: Some(ks),
        band: Some(band),
        pass: rows.iter().all(|r| r.pass),
        rows,
        metadata: meta,
        timestamp: now(),
        table,
        samples,
    })
}

fn provenance(e: Error, at: &str) -> Error {
    match e {
        Error::Domain(m) => Error::Domain(format!("{m} [{at}]")),
        Error::Contour(m) => Error::Contour(format!("{m} [{at}]")),
        other => other,
    }
}

/// Joint event {x_{n_k}(t) ≤ a_k for all k}: the MC frequency against the
/// exact probability, held to the DKW band of a single probability.
fn run_joint(
    cfg: &ExperimentConfig,
    flavor: Flavor,
    t: f64,
    spec: &FiniteTimeKernelSpec,
    fopts: FiniteOptions,
    meta: ReportMetadata,
) -> Result<ComparisonReport> {
    let t23 = t.powf(2.0 / 3.0);
    let r: Vec<f64> = cfg.n_indices.iter().map(|&n| (n as f64 + 0.5 - t) / (2.0 * t23)).collect();
    for (&n, &rk) in cfg.n_indices.iter().zip(&r) {
        if scaled_index(t, rk, 0.0) != n {
            return Err(Error::Config(format!("index {n} cannot be reached at t={t}")));
        }
    }
    let theta = vec![0.0; r.len()];
    let samples = mc_samples(cfg, flavor, t, &r, &theta)?;
    let n = cfg.samples()?;
    let t13 = t.cbrt();
    let hits = samples
        .chunks(r.len())
        .filter(|rep| rep.iter().zip(&cfg.a).all(|(s, &a)| 2.0 * t + 2.0 * s.r * t23 + t13 * s.value <= a))
        .count();
    let freq = hits as f64 / n as f64;
    let exact = finite_t_cdf_with(spec, &cfg.n_indices, &cfg.a, fopts)?;
    let band = dkw_band(n);
    let dist = (freq - exact).abs();
    let mut cols: Vec<String> = Vec::new();
    for k in 1..=r.len() {
        cols.push(format!("n_{k}"));
        cols.push(format!("a_{k}"));
    }
    let col_refs: Vec<&str> = cols.iter().map(|c| c.as_str()).collect();
    let mut table = CdfTable::new(&col_refs, fopts.order, &meta.meta_hash);
    table.push(cfg.n_indices.iter().zip(&cfg.a).flat_map(|(&n, &a)| [n as f64, a]).collect(), exact);
    let row = ReportRow { label: format!("joint event, frequency {freq}, exact {exact}"), statistic: dist, bound: band, pass: dist <= band };
    Ok(ComparisonReport {
        kind: cfg.kind,
        ks: Some(dist),
        band: Some(band),
        pass: row.pass,
        rows: vec![row],
        metadata: meta,
        timestamp: now(),
        table,
        samples,
    })
}

/// Sup distance between finite-time and limit one-point CDFs over the (r, s)
/// grid, for every t of the sweep. Passes when the distances do not grow.
fn run_sweep(cfg: &ExperimentConfig) -> Result<ComparisonReport> {
    let flavor = cfg.flavor()?;
    let process = cfg.limit_process()?;
    let ts = cfg.t.as_ref().ok_or_else(|| Error::Config("finite-t-vs-limit needs t".into()))?.list();
    if cfg.r.is_empty() || cfg.s.is_empty() {
        return Err(Error::Config("finite-t-vs-limit needs r and s".into()));
    }
    let fopts = cfg.finite_options();
    let lopts = cfg.limit_options();
    let mut meta = base_metadata(cfg);
    meta.finite_order = Some(fopts.order);
    meta.finite_lcut = Some(fopts.lcut);
    meta.limit_order = Some(lopts.order);
    meta.limit_lcut = Some(lopts.lcut);
    let mut table = CdfTable::new(&["t", "r", "s"], fopts.order, &meta.meta_hash);
    let mut limit = Vec::new();
    for &r in &cfg.r {
        for &s in &cfg.s {
            let v = cdf_limit(process, &PointConfig::one(r, s), lopts)?;
            table.push(vec![f64::INFINITY, r, s], v);
            limit.push((r, s, v));
        }
    }
    let mut rows: Vec<ReportRow> = Vec::new();
    let mut prev = f64::INFINITY;
    for &t in &ts {
        let spec = FiniteTimeKernelSpec::new(flavor, t)?;
        meta.kernels.push(spec);
        let t13 = t.cbrt();
        let mut dist = 0.0f64;
        for &(r, s, lv) in &limit {
            let a = 2.0 * t + 2.0 * r * t13 * t13 + t13 * s;
            let n = scaled_index(t, r, 0.0);
            let v = finite_t_cdf_with(&spec, &[n], &[a], fopts).map_err(|e| provenance(e, &format!("t={t}, r={r}, s={s}")))?;
            table.push(vec![t, r, s], v);
            dist = dist.max((v - lv).abs());
        }
        let bound = prev + SWEEP_SLACK;
        rows.push(ReportRow { label: format!("t={t}"), statistic: dist, bound, pass: dist <= bound });
        prev = dist;
    }
    Ok(ComparisonReport {
        kind: cfg.kind,
        ks: None,
        band: None,
        pass: rows.iter().all(|r| r.pass),
        rows,
        metadata: meta,
        timestamp: now(),
        table,
        samples: Vec::new(),
    })
}

fn run_properties(cfg: &ExperimentConfig) -> Result<ComparisonReport> {
    let mut meta = base_metadata(cfg);
    let rows = match cfg.process.as_deref().unwrap_or("burke") {
        "burke" => {
            let rho = cfg.rho.unwrap_or(1.0);
            let t = cfg.single_t()?;
            meta.sup_rule = Some(MC_SUP_RULE);
            meta.dt = Some(1e-3 * t);
            let b = burke_check(cfg.seed, rho, t, cfg.samples()?, MC_SUP_RULE)?;
            let rel = |x: f64, y: f64| ((x - y) / y).abs();
            vec![
                ReportRow {
                    label: format!("mean sup(B(s) - {rho} s) = {}, target {}", b.sup_mean, b.sup_target),
                    statistic: rel(b.sup_mean, b.sup_target),
                    bound: 0.05,
                    pass: b.sup_pass,
                },
                ReportRow {
                    label: format!("variance of x_0(t) - zeta_0 - rho t = {}, target {}", b.variance, b.variance_target),
                    statistic: rel(b.variance, b.variance_target),
                    bound: 0.05,
                    pass: b.variance_pass,
                },
                ReportRow { label: "KS of gap x_1 - x_0 against Exp(rho)".into(), statistic: b.gap_ks, bound: b.gap_band, pass: b.gap_pass },
            ]
        }
        "attractiveness" => {
            let t = cfg.single_t()?;
            let dt = cfg.dt.unwrap_or(1e-3 * t);
            meta.sup_rule = Some(SupRule::Grid);
            meta.dt = Some(dt);
            attractiveness_rows(cfg.seed, t, dt, cfg.samples()?)?
        }
        other => return Err(Error::Config(format!("unknown property '{other}' (burke or attractiveness)"))),
    };
    Ok(ComparisonReport {
        kind: cfg.kind,
        ks: None,
        band: None,
        pass: rows.iter().all(|r| r.pass),
        rows,
        metadata: meta,
        timestamp: now(),
        table: CdfTable::default(),
        samples: Vec::new(),
    })
}

/// Flavor pairs sharing an index window. Half-line flavors are simulated
/// on their own window; the two-sided ones on a common symmetric window
/// whose leftmost particle moves freely.
fn coupling_groups() -> Vec<(Vec<Flavor>, (i64, i64))> {
    vec![
        (vec![Flavor::Packed, Flavor::HalfFlat], (1, COUPLING_LEVELS)),
        (vec![Flavor::HalfStat { lambda: 1.0 }, Flavor::HalfStat { lambda: 0.5 }], (0, COUPLING_LEVELS - 1)),
        (
            vec![Flavor::Flat, Flavor::Stat { lambda: 1.0, rho: 1.0 }, Flavor::StatFlat { rho: 1.0 }],
            (-COUPLING_LEVELS / 2, COUPLING_LEVELS / 2 - 1),
        ),
    ]
}

/// Runs every flavor pair of [`coupling_groups`] (including a flavor with
/// itself) `pairs` times on shared noise and counts violations of
/// sup|x^a - x^b| ≤ sup|ζ^a - ζ^b|. Each initial datum is additionally
/// shifted by a U(-1/2, 1/2) offset plus a non-decreasing sequence with
/// U(0, 1/5) increments, so that equal flavors differ and order is kept.
pub fn attractiveness_rows(seed: u64, t: f64, dt: f64, pairs: usize) -> Result<Vec<ReportRow>> {
    let grid = TimeGrid::with_dt(t, dt)?;
    let mut rows = Vec::new();
    for (flavors, range) in coupling_groups() {
        for i in 0..flavors.len() {
            for j in i..flavors.len() {
                let (fa, fb) = (flavors[i], flavors[j]);
                let worst = (0..pairs)
                    .into_par_iter()
                    .map(|k| coupling_excess(seed, k as u64, fa, fb, range, grid))
                    .collect::<Result<Vec<f64>>>()?;
                let violations = worst.iter().filter(|&&e| e > 0.0).count();
                let excess = worst.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                rows.push(ReportRow {
                    label: format!("{} vs {}: {violations} violations in {pairs} pairs", fa.name(), fb.name()),
                    statistic: violations as f64,
                    bound: 0.0,
                    pass: violations == 0 && excess.is_finite(),
                });
            }
        }
    }
    Ok(rows)
}

fn perturbed(flavor: Flavor, range: (i64, i64), seed: u64, rng: &mut ChaCha8Rng) -> Result<HeightVector> {
    let ic = make_initial_condition(flavor, range, seed)?;
    let mut shift = rng.gen_range(-0.5..0.5);
    let zeta = ic
        .zeta
        .iter()
        .map(|z| {
            shift += rng.gen_range(0.0..0.2);
            z + shift
        })
        .collect();
    HeightVector::custom(ic.n_min, zeta)
}

/// sup|x^a - x^b| - sup|ζ^a - ζ^b| up to rounding; positive means a violation.
fn coupling_excess(seed: u64, k: u64, fa: Flavor, fb: Flavor, range: (i64, i64), grid: TimeGrid) -> Result<f64> {
    let base = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k);
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    let a = perturbed(fa, range, base ^ 0xA, &mut rng)?;
    let b = perturbed(fb, range, base ^ 0xB, &mut rng)?;
    let paths = sample_paths(base, grid, range)?;
    let xa = evolve_skorokhod(&a, &paths, None)?;
    let xb = evolve_skorokhod(&b, &paths, None)?;
    let gap0 = a.zeta.iter().zip(&b.zeta).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let mut gap = 0.0f64;
    let mut scale = 1.0f64;
    for n in range.0..=range.1 {
        for (x, y) in xa.path(n).iter().zip(xb.path(n)) {
            gap = gap.max((x - y).abs());
            scale = scale.max(x.abs()).max(y.abs());
        }
    }
    Ok(gap - gap0 - 1e-12 * scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Uniform};

    fn normal_cdf(x: f64) -> f64 {
        0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
    }

    #[test]
    fn ecdf_steps_are_right_continuous() {
        let e = ecdf(&[3.0, 1.0, 2.0, 2.0, 5.0, 4.0, 6.0, 7.0, 8.0, 9.0]).unwrap();
        assert_eq!(e.n(), 10);
        assert_eq!(e.eval(2.0), 0.3);
        assert_eq!(e.eval_left(2.0), 0.1);
        assert_eq!(e.eval(0.0), 0.0);
        assert_eq!(e.eval(9.0), 1.0);
        let e = e.with_grid(&[0.5, 9.5, 2.5]).unwrap();
        assert_eq!(e.table(), vec![(0.5, 0.0), (2.5, 0.3), (9.5, 1.0)]);
    }

    #[test]
    fn ecdf_rejects_empty_short_and_nan_samples() {
        assert!(matches!(ecdf(&[]), Err(Error::Domain(_))));
        assert!(matches!(ecdf(&[1.0; 9]), Err(Error::Domain(_))));
        let mut v = vec![0.0; 20];
        v[3] = f64::NAN;
        assert!(matches!(ecdf(&v), Err(Error::NonFinite(_))));
    }

    #[test]
    fn inverse_cdf_samples_fit_within_one_over_n() {
        for n in [10usize, 100, 1000] {
            let xs: Vec<f64> = (1..=n).map(|k| (k as f64 - 0.5) / n as f64).map(|u| 2.0 * u - 1.0).collect();
            let e = ecdf(&xs).unwrap();
            let grid: Vec<f64> = (0..=40).map(|k| -1.2 + 0.06 * k as f64).collect();
            let ks = ks_distance(&e, |x| Ok(((x + 1.0) / 2.0).clamp(0.0, 1.0)), &grid).unwrap();
            assert!(ks <= 1.0 / n as f64 + 1e-15, "n={n} ks={ks}");
        }
    }

    #[test]
    fn uniform_samples_stay_inside_the_band() {
        let band = dkw_band(100);
        assert!((band - 0.16276).abs() < 1e-5);
        let mut fails = 0;
        for seed in 0..200u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let xs: Vec<f64> = Uniform::new(0.0, 1.0).sample_iter(&mut rng).take(100).collect();
            let ks = ks_distance(&ecdf(&xs).unwrap(), |x| Ok(x.clamp(0.0, 1.0)), &[]).unwrap();
            if ks > band {
                fails += 1;
            }
        }
        assert!(fails <= 2, "{fails} of 200 seeds outside the band");
    }

    #[test]
    fn constant_sample_distance_is_the_larger_jump_side() {
        for c in [-1.0, 0.0, 0.7] {
            let e = ecdf(&[c; 25]).unwrap();
            let ks = ks_distance(&e, |x| Ok(normal_cdf(x)), &[-3.0, 3.0]).unwrap();
            let want = normal_cdf(c).max(1.0 - normal_cdf(c));
            assert!((ks - want).abs() < 1e-15, "c={c} ks={ks} want={want}");
        }
    }

    #[test]
    fn grid_points_catch_gaps_between_samples() {
        let xs: Vec<f64> = (0..10).map(|k| k as f64 / 100.0).collect();
        let e = ecdf(&xs).unwrap();
        let f = |x: f64| Ok(((x + 1.0) / 2.0).clamp(0.0, 1.0));
        let without = ks_distance(&e, f, &[]).unwrap();
        let with = ks_distance(&e, f, &[-1.0]).unwrap();
        assert!((with - without).abs() < 1e-12);
        let e2 = ecdf(&xs).unwrap();
        let g = |x: f64| Ok(if x < 0.5 { 0.0 } else { 1.0 });
        assert_eq!(ks_distance(&e2, g, &[0.5]).unwrap(), 1.0);
    }

    #[test]
    fn tabulated_cdf_interpolates_within_curvature_bound() {
        let tab = TabulatedCdf::build(-4.0, 4.0, |x| Ok(normal_cdf(x))).unwrap();
        assert!(tab.grid.len() <= CDF_GRID_MAX + 1);
        for k in 0..=800 {
            let x = -4.0 + 0.01 * k as f64;
            assert!((tab.eval(x) - normal_cdf(x)).abs() < 1e-4, "x={x}");
        }
        assert_eq!(tab.eval(-10.0), tab.values[0]);
        assert!(TabulatedCdf::build(1.0, 1.0, |_| Ok(0.5)).is_err());
    }

    #[test]
    fn config_reads_every_key_and_rejects_unknown_ones() {
        let text = r#"{"kind":"mc-vs-finite-t","flavor":"stat","process":null,"t":25,"r":[0],"theta":[0],
            "s":[],"a":[],"n_indices":[],"samples":100,"seed":7,"dt":0.05,"order":40,"lcut":8,
            "delta":null,"lambda":1,"rho":0.5,"out":null}"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(cfg.kind, ExperimentKind::McVsFiniteT);
        assert_eq!(cfg.t, Some(Times::One(25.0)));
        assert_eq!(cfg.flavor().unwrap(), Flavor::Stat { lambda: 1.0, rho: 0.5 });
        let sweep = ExperimentConfig::from_json(r#"{"kind":"finite-t-vs-limit","t":[25,100],"seed":1}"#).unwrap();
        assert_eq!(sweep.t.unwrap().list(), vec![25.0, 100.0]);
        assert!(ExperimentConfig::from_json(r#"{"kind":"mc-vs-limit","seed":1,"bogus":2}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"kind":"mc-vs-limit"}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"kind":"mc-vs-limit","seed":1,"t":-1}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"kind":"mc-vs-limit","seed":1,"dt":0}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"kind":"mc-vs-limit","seed":1,"samples":0}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"kind":"mc-vs-limit","seed":1,"r":[0,1],"theta":[0]}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"kind":"mc-vs-limit","seed":1,"n_indices":[3]}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"kind":"nope","seed":1}"#).is_err());
    }

    #[test]
    fn meta_hash_tracks_every_field() {
        let a = ExperimentConfig::new(ExperimentKind::McVsLimit, 3);
        let mut b = a.clone();
        assert_eq!(a.meta_hash(), b.meta_hash());
        b.seed = 4;
        assert_ne!(a.meta_hash(), b.meta_hash());
        assert_eq!(a.meta_hash().len(), 64);
    }

    #[test]
    fn missing_fields_are_reported() {
        let cfg = ExperimentConfig::new(ExperimentKind::McVsFiniteT, 1);
        assert!(matches!(run_experiment(&cfg), Err(Error::Config(_))));
        let mut cfg = ExperimentConfig::new(ExperimentKind::PropertySuite, 1);
        cfg.process = Some("gravity".into());
        assert!(matches!(run_experiment(&cfg), Err(Error::Config(_))));
    }

    fn small_mc() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(ExperimentKind::McVsFiniteT, 11);
        cfg.flavor = Some("packed".into());
        cfg.t = Some(Times::One(4.0));
        cfg.r = vec![0.0];
        cfg.samples = Some(400);
        cfg.dt = Some(0.01);
        cfg.order = Some(30);
        cfg
    }

    #[test]
    fn small_mc_run_is_reproducible_and_passes() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_mc();
        cfg.out = Some(dir.path().join("a.json"));
        let first = run_experiment(&cfg).unwrap();
        assert!(first.pass, "{:?}", first.rows);
        let second = run_experiment(&cfg).unwrap();
        assert_eq!(first.reproducible_json(), second.reproducible_json());
        let text = std::fs::read_to_string(dir.path().join("a.json")).unwrap();
        assert_eq!(text.lines().filter(|l| l.contains("timestamp")).count(), 1);
        let csv = std::fs::read_to_string(dir.path().join("a.csv")).unwrap();
        assert!(csv.starts_with("r,theta,s,value,order,meta_hash\n"));
        let samples = std::fs::read_to_string(dir.path().join("a.samples.csv")).unwrap();
        assert!(samples.starts_with("replica,r,theta,value\n"));
        assert_eq!(samples.lines().count(), 401);
    }

    #[test]
    fn joint_event_matches_exact_probability() {
        let mut cfg = small_mc();
        cfg.r.clear();
        cfg.n_indices = vec![2, 4];
        cfg.a = vec![2.5, 5.0];
        let rep = run_experiment(&cfg).unwrap();
        assert!(rep.pass, "{:?}", rep.rows);
        assert_eq!(rep.table.coords, vec!["n_1", "a_1", "n_2", "a_2"]);
    }

    #[test]
    fn attractiveness_holds_on_short_runs() {
        let rows = attractiveness_rows(5, 1.0, 0.01, 4).unwrap();
        assert_eq!(rows.len(), 3 + 3 + 6);
        assert!(rows.iter().all(|r| r.pass), "{rows:?}");
    }

    #[test]
    fn strip_timestamp_removes_only_that_line() {
        let s = "{\n  \"a\": 1,\n  \"timestamp\": 5\n}";
        assert_eq!(strip_timestamp(s), "{\n  \"a\": 1,\n}");
    }
}
