//! One-sided reflected Brownian motions.
//!
//! Particle n is reflected off particle n-1 from the right:
//! x_n(t) = max(ζ_n + B_n(t), sup_{s≤t}(x_{n-1}(s) - B_n(s)) + B_n(t)).
//! The sweep evaluates this level by level on a uniform grid. The same values
//! are available through the last-passage representation, which is used as an
//! independent check.

use crate::error::{Error, Result};
use crate::paths::{
    fill_bridge_uniforms, fill_path, make_initial_condition_replica, BrownianPaths, Flavor, HeightVector, StreamId, TimeGrid,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// E[sup of a continuous Brownian step] minus E[sup over its end points],
/// per unit of σ√dt, in the small-step limit: -ζ(1/2)/√(2π).
pub const SUP_SHIFT: f64 = 0.582_597_157_939_010_6;

/// How the running supremum of a grid path is turned into an estimate of the
/// continuous supremum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SupRule {
    /// Maximum over grid points only.
    #[default]
    Grid,
    /// Grid maximum plus SUP_SHIFT·√(2dt) for every supremum over a
    /// non-degenerate interval. The difference x_{n-1} - B_n has variance
    /// 2dt per step.
    Corrected,
    /// On every step the maximum of a Brownian bridge between the grid
    /// values is drawn exactly, (a + b + √((a - b)² - 2σ²dt ln U))/2 with
    /// σ² = 2 for x_{n-1} - B_n. The uniforms come from their own counter
    /// stream, so the Brownian paths are those of the other rules.
    Bridge,
}

impl SupRule {
    fn shift(self, dt: f64) -> f64 {
        match self {
            SupRule::Grid | SupRule::Bridge => 0.0,
            SupRule::Corrected => SUP_SHIFT * (2.0 * dt).sqrt(),
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "grid" => Ok(SupRule::Grid),
            "corrected" => Ok(SupRule::Corrected),
            "bridge" => Ok(SupRule::Bridge),
            other => Err(Error::Config(format!("unknown sup rule '{other}'"))),
        }
    }
}

/// Largest value of a Brownian bridge from `a` to `b` whose variance over
/// the step is `var`, given a uniform `u` on (0, 1].
pub fn bridge_max(a: f64, b: f64, var: f64, u: f64) -> f64 {
    0.5 * (a + b + ((a - b) * (a - b) - 2.0 * var * u.ln()).sqrt())
}

/// One level of the sweep. `prev` is x_{n-1} on the grid (None for a free
/// leftmost particle), `b` is B_n, and `out` receives x_n. `bridge` holds
/// the uniforms of the bridge rule.
#[allow(clippy::too_many_arguments)]
fn sweep_level(
    prev: Option<&[f64]>,
    b: &[f64],
    zeta: f64,
    drift: f64,
    dt: f64,
    shift: f64,
    bridge: Option<&[f64]>,
    out: &mut [f64],
) {
    match prev {
        None => {
            for (j, (o, &bj)) in out.iter_mut().zip(b).enumerate() {
                *o = zeta + bj + drift * j as f64 * dt;
            }
        }
        Some(prev) => {
            let mut running = f64::NEG_INFINITY;
            for j in 0..out.len() {
                let d = prev[j] - b[j];
                let top = match bridge {
                    Some(u) if j > 0 => bridge_max(prev[j - 1] - b[j - 1], d, 2.0 * dt, u[j]),
                    _ => d,
                };
                running = running.max(top);
                let reflected = if j == 0 { running } else { running + shift };
                // The supremum includes s = t, so x_n ≥ x_{n-1}; the last max
                // keeps that exact under rounding of (x - b) + b.
                out[j] = (zeta + b[j]).max(reflected + b[j]).max(prev[j]);
            }
        }
    }
}

/// Fills `buf` with the bridge uniforms of level `n` and returns true under
/// the bridge rule; returns false otherwise.
fn level_uniforms(rule: SupRule, stream: StreamId, n: i64, grid: &TimeGrid, buf: &mut Vec<f64>) -> bool {
    if rule != SupRule::Bridge {
        return false;
    }
    buf.resize(grid.n_steps + 1, 0.0);
    fill_bridge_uniforms(stream, n, grid, buf);
    true
}

/// Positions x_n(t_j) for n in [n_min, n_max] and every grid time.
#[derive(Debug, Clone)]
pub struct TrajectorySet {
    pub n_min: i64,
    pub n_max: i64,
    pub grid: TimeGrid,
    pub sup_rule: SupRule,
    /// Number of sites left of the origin used by a truncated system, or 0.
    pub truncation_m: usize,
    values: Vec<f64>,
}

impl TrajectorySet {
    /// x_n on the grid.
    pub fn path(&self, n: i64) -> &[f64] {
        assert!(n >= self.n_min && n <= self.n_max, "index {n} outside [{}, {}]", self.n_min, self.n_max);
        let s = self.grid.n_steps + 1;
        let k = (n - self.n_min) as usize;
        &self.values[k * s..(k + 1) * s]
    }

    /// x_n at a grid time.
    pub fn position(&self, n: i64, t: f64) -> Result<f64> {
        if n < self.n_min || n > self.n_max {
            return Err(Error::IndexUnderflow(format!("index {n} outside [{}, {}]", self.n_min, self.n_max)));
        }
        let j = self.grid.index_of(t)?;
        Ok(self.path(n)[j])
    }

    /// Writes the trajectories as CSV with columns n, t, x.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        writeln!(w, "n,t,x")?;
        for n in self.n_min..=self.n_max {
            for (j, x) in self.path(n).iter().enumerate() {
                writeln!(w, "{n},{},{x}", self.grid.time(j))?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn check_window(ic: &HeightVector, paths: &BrownianPaths) -> Result<()> {
    if ic.n_min != paths.n_min || ic.n_max != paths.n_max {
        return Err(Error::RangeMismatch(format!(
            "initial data on [{}, {}] but paths on [{}, {}]",
            ic.n_min, ic.n_max, paths.n_min, paths.n_max
        )));
    }
    if ic.zeta.iter().any(|z| !z.is_finite()) {
        return Err(Error::NonFinite("initial positions".into()));
    }
    Ok(())
}

/// Runs the sweep with the grid supremum. The leftmost particle moves freely,
/// with drift `leftmost_drift` if given.
pub fn evolve_skorokhod(ic: &HeightVector, paths: &BrownianPaths, leftmost_drift: Option<f64>) -> Result<TrajectorySet> {
    evolve_skorokhod_with(ic, paths, leftmost_drift, SupRule::Grid)
}

/// Runs the sweep with a chosen supremum rule.
pub fn evolve_skorokhod_with(
    ic: &HeightVector,
    paths: &BrownianPaths,
    leftmost_drift: Option<f64>,
    rule: SupRule,
) -> Result<TrajectorySet> {
    check_window(ic, paths)?;
    let grid = paths.grid;
    let stride = grid.n_steps + 1;
    let dt = grid.dt();
    let shift = rule.shift(dt);
    let mut values = vec![0.0; ic.len() * stride];
    let mut u = Vec::new();
    for (k, n) in (ic.n_min..=ic.n_max).enumerate() {
        let (done, rest) = values.split_at_mut(k * stride);
        let prev = if k == 0 { None } else { Some(&done[(k - 1) * stride..]) };
        let bridge = level_uniforms(rule, paths.stream, n, &grid, &mut u).then_some(u.as_slice());
        sweep_level(prev, paths.path(n), ic.get(n), leftmost_drift.unwrap_or(0.0), dt, shift, bridge, &mut rest[..stride]);
    }
    Ok(TrajectorySet { n_min: ic.n_min, n_max: ic.n_max, grid, sup_rule: rule, truncation_m: 0, values })
}

/// x_n(t) from the last-passage formula max_k (ζ_k + Y_{k,n}(t)), where
/// Y_{k,n} is the maximal Brownian weight over up-right paths from (k, 0)
/// to (n, t). Each starting level is handled separately; the leftmost
/// particle carries the drift if one is given.
pub fn variational_value(
    ic: &HeightVector,
    paths: &BrownianPaths,
    k_min: i64,
    n: i64,
    t: f64,
    leftmost_drift: Option<f64>,
    rule: SupRule,
) -> Result<f64> {
    check_window(ic, paths)?;
    if k_min < ic.n_min || n > ic.n_max || k_min > n {
        return Err(Error::RangeMismatch(format!("levels [{k_min}, {n}] not inside [{}, {}]", ic.n_min, ic.n_max)));
    }
    let grid = paths.grid;
    let jt = grid.index_of(t)?;
    let dt = grid.dt();
    let shift = rule.shift(dt);
    let mut best = f64::NEG_INFINITY;
    let mut h = vec![0.0; jt + 1];
    for k in k_min..=n {
        let bk = paths.path(k);
        let drift = if k == k_min { leftmost_drift.unwrap_or(0.0) } else { 0.0 };
        for j in 0..=jt {
            h[j] = bk[j] + drift * grid.time(j);
        }
        for i in k + 1..=n {
            let bi = paths.path(i);
            let mut running = f64::NEG_INFINITY;
            for j in 0..=jt {
                running = running.max(h[j] - bi[j]);
                h[j] = running + bi[j] + if j == 0 { 0.0 } else { shift };
            }
        }
        best = best.max(ic.get(k) + h[jt]);
    }
    Ok(best)
}

/// Outcome of a left-truncated evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncationResult {
    pub value: f64,
    pub m_used: usize,
    pub converged: bool,
}

/// Streams levels lo..=hi without storing them and returns the values at the
/// requested (index, grid position) targets.
#[allow(clippy::too_many_arguments)]
fn stream_levels(
    zeta: &HeightVector,
    stream: StreamId,
    grid: &TimeGrid,
    lo: i64,
    hi: i64,
    drift: f64,
    rule: SupRule,
    targets: &[(i64, usize)],
) -> Vec<f64> {
    let stride = grid.n_steps + 1;
    let dt = grid.dt();
    let shift = rule.shift(dt);
    let mut b = vec![0.0; stride];
    let mut prev = vec![0.0; stride];
    let mut cur = vec![0.0; stride];
    let mut out = vec![f64::NAN; targets.len()];
    let mut u = Vec::new();
    for n in lo..=hi {
        fill_path(stream, n, grid, &mut b);
        let p = if n == lo { None } else { Some(prev.as_slice()) };
        let bridge = level_uniforms(rule, stream, n, grid, &mut u).then_some(u.as_slice());
        sweep_level(p, &b, zeta.get(n), if n == lo { drift } else { 0.0 }, dt, shift, bridge, &mut cur);
        for (o, &(tn, tj)) in out.iter_mut().zip(targets) {
            if tn == n {
                *o = cur[tj];
            }
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    out
}

const TRUNCATION_START: usize = 8;
/// Largest number of sites left of the origin tried by the doubling loop.
pub const TRUNCATION_MAX: usize = 1 << 16;

fn truncated_targets(
    flavor: Flavor,
    stream: StreamId,
    grid: &TimeGrid,
    targets: &[(i64, usize)],
    tol: f64,
    rule: SupRule,
) -> Result<(Vec<f64>, usize, bool)> {
    let hi = targets.iter().map(|t| t.0).max().unwrap_or(0).max(0);
    let mut m = TRUNCATION_START;
    let mut last: Option<Vec<f64>> = None;
    let mut quiet = 0;
    loop {
        let lo = -(m as i64);
        let zeta = make_initial_condition_replica(flavor, (lo, hi), stream)?;
        let vals = stream_levels(&zeta, stream, grid, lo, hi, 0.0, rule, targets);
        if let Some(prev) = &last {
            let diff = vals.iter().zip(prev).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            quiet = if diff < tol { quiet + 1 } else { 0 };
        }
        if quiet >= 2 {
            return Ok((vals, m, true));
        }
        if m >= TRUNCATION_MAX {
            return Ok((vals, m, false));
        }
        last = Some(vals);
        m *= 2;
    }
}

fn is_two_sided(flavor: &Flavor) -> bool {
    matches!(flavor, Flavor::Flat | Flavor::Stat { .. } | Flavor::StatFlat { .. })
}

/// x_n(t) for a flavor whose indices run to -∞, by truncating at -M and
/// doubling M from 8 until two successive changes are below `tol`.
/// One-sided flavors are evaluated directly and report m_used = 0.
pub fn evolve_truncated_infinite(
    flavor: Flavor,
    stream: StreamId,
    grid: TimeGrid,
    n: i64,
    t: f64,
    tol: f64,
    rule: SupRule,
) -> Result<TruncationResult> {
    flavor.validate()?;
    let j = grid.index_of(t)?;
    if !is_two_sided(&flavor) {
        let lo = flavor.min_index().unwrap_or(1);
        if n < lo {
            return Err(Error::IndexUnderflow(format!("{} starts at index {lo}, got {n}", flavor.name())));
        }
        let zeta = make_initial_condition_replica(flavor, (lo, n), stream)?;
        let v = stream_levels(&zeta, stream, &grid, lo, n, 0.0, rule, &[(n, j)]);
        return Ok(TruncationResult { value: v[0], m_used: 0, converged: true });
    }
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    let (vals, m, converged) = truncated_targets(flavor, stream, &grid, &[(n, j)], tol, rule)?;
    Ok(TruncationResult { value: vals[0], m_used: m, converged })
}

/// Where the maximizing last-passage path to (n, t) leaves the boundary line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExitPointRecord {
    pub n: i64,
    pub t: f64,
    pub z: f64,
}

/// Exit time from the drifted boundary particle at index `ic.n_min`.
/// Z = 0 when the maximizer starts from initial data above the boundary.
/// Ties are broken toward the earliest time.
pub fn exit_point(
    ic: &HeightVector,
    paths: &BrownianPaths,
    rho: f64,
    n: i64,
    t: f64,
    rule: SupRule,
) -> Result<ExitPointRecord> {
    check_window(ic, paths)?;
    if n <= ic.n_min || n > ic.n_max {
        return Err(Error::RangeMismatch(format!("index {n} must lie in ({}, {}]", ic.n_min, ic.n_max)));
    }
    let grid = paths.grid;
    let jt = grid.index_of(t)?;
    let dt = grid.dt();
    let shift = rule.shift(dt);
    let b0 = paths.path(ic.n_min);
    let mut x: Vec<f64> = (0..=jt).map(|j| ic.get(ic.n_min) + b0[j] + rho * grid.time(j)).collect();
    let mut exit: Vec<f64> = (0..=jt).map(|j| grid.time(j)).collect();
    let mut next_x = vec![0.0; jt + 1];
    let mut next_exit = vec![0.0; jt + 1];
    let mut u = Vec::new();
    for i in ic.n_min + 1..=n {
        let bi = paths.path(i);
        let zeta = ic.get(i);
        let bridge = level_uniforms(rule, paths.stream, i, &grid, &mut u);
        let mut running = f64::NEG_INFINITY;
        let mut arg_exit = 0.0;
        for j in 0..=jt {
            let d = x[j] - bi[j];
            let cand = if bridge && j > 0 { bridge_max(x[j - 1] - bi[j - 1], d, 2.0 * dt, u[j]) } else { d };
            if cand > running {
                running = cand;
                arg_exit = exit[j];
            }
            let reflected = running + if j == 0 { 0.0 } else { shift };
            if zeta >= reflected {
                next_x[j] = zeta + bi[j];
                next_exit[j] = 0.0;
            } else {
                next_x[j] = reflected + bi[j];
                next_exit[j] = arg_exit;
            }
        }
        std::mem::swap(&mut x, &mut next_x);
        std::mem::swap(&mut exit, &mut next_exit);
    }
    Ok(ExitPointRecord { n, t, z: exit[jt] })
}

/// One rescaled observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledSample {
    pub replica: u64,
    pub r: f64,
    pub theta: f64,
    pub value: f64,
}

/// Options for sampling rescaled positions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleOptions {
    /// Grid step; defaults to 10⁻³·t.
    pub dt: Option<f64>,
    pub sup_rule: SupRule,
    /// Convergence tolerance of the truncation loop for flat data.
    pub truncation_tol: f64,
}

impl Default for SampleOptions {
    fn default() -> Self {
        Self { dt: None, sup_rule: SupRule::Grid, truncation_tol: 1e-9 }
    }
}

/// Integer part with a guard against representation error just below an
/// integer: values within 1e-9 (relative) under an integer round up to it.
pub fn index_floor(x: f64) -> i64 {
    let r = x.round();
    if r > x && r - x <= 1e-9 * x.abs().max(1.0) {
        r as i64
    } else {
        x.floor() as i64
    }
}

/// Particle index ⌊t + 2 r t^{2/3} + θ⌋ used by the rescaling.
pub fn scaled_index(t: f64, r: f64, theta: f64) -> i64 {
    index_floor(t + 2.0 * r * t.powf(2.0 / 3.0) + theta)
}

/// The rescaled value (x_n(t+θ) - 2t - 2θ - 2 r t^{2/3}) / t^{1/3}.
pub fn rescale(x: f64, t: f64, r: f64, theta: f64) -> f64 {
    (x - 2.0 * t - 2.0 * theta - 2.0 * r * t.powf(2.0 / 3.0)) / t.powf(1.0 / 3.0)
}

/// Samples rescaled positions for each (r, θ) pair. Replica i uses the
/// streams keyed by (seed, i) and replicas run in parallel; the output is
/// ordered by replica and then by target.
pub fn rescaled_samples(
    flavor: Flavor,
    t: f64,
    r_list: &[f64],
    theta_list: &[f64],
    n_samples: usize,
    seed: u64,
    opts: SampleOptions,
) -> Result<Vec<Vec<ScaledSample>>> {
    flavor.validate()?;
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("t must be positive, got {t}")));
    }
    if r_list.len() != theta_list.len() || r_list.is_empty() {
        return Err(Error::RangeMismatch(format!(
            "{} values of r against {} values of theta",
            r_list.len(),
            theta_list.len()
        )));
    }
    if theta_list.iter().any(|&th| th < 0.0 || !th.is_finite()) {
        return Err(Error::Domain("theta must be non-negative".into()));
    }
    let dt_req = opts.dt.unwrap_or(t * 1e-3);
    let base = TimeGrid::with_dt(t, dt_req)?;
    let dt = base.dt();
    let theta_max = theta_list.iter().cloned().fold(0.0, f64::max);
    let steps_extra = index_floor(theta_max / dt).max(0) as usize;
    let grid = TimeGrid::new(t + steps_extra as f64 * dt, base.n_steps + steps_extra)?;
    let mut targets = Vec::with_capacity(r_list.len());
    for (&r, &th) in r_list.iter().zip(theta_list) {
        let n = scaled_index(t, r, th);
        let j = base.n_steps as f64 + th / dt;
        if (j - j.round()).abs() > 1e-6 || j.round() as usize > grid.n_steps {
            return Err(Error::OffGrid(t + th));
        }
        targets.push((n, j.round() as usize));
    }
    let lo = match flavor {
        Flavor::Stat { .. } | Flavor::StatFlat { .. } => flavor.boundary().map(|b| b.0),
        Flavor::Flat => None,
        _ => flavor.min_index(),
    };
    if let Some(lo) = lo {
        if let Some(&(n, _)) = targets.iter().find(|(n, _)| *n < lo) {
            return Err(Error::IndexUnderflow(format!("{} starts at index {lo}, rescaling asks for {n}", flavor.name())));
        }
    }
    let hi = targets.iter().map(|t| t.0).max().unwrap_or(0);
    let replica = |i: usize| -> Result<Vec<ScaledSample>> {
        let stream = StreamId { seed, replica: i as u64 };
        let vals = match (flavor, lo) {
            (Flavor::Flat, _) | (_, None) => {
                let (v, _, converged) =
                    truncated_targets(flavor, stream, &grid, &targets, opts.truncation_tol, opts.sup_rule)?;
                if !converged {
                    return Err(Error::Domain(format!("truncation did not converge for replica {i}")));
                }
                v
            }
            (_, Some(lo)) => {
                let zeta = boundary_ic(flavor, lo, hi, stream)?;
                let drift = flavor.boundary().map(|b| b.1).unwrap_or(0.0);
                stream_levels(&zeta, stream, &grid, lo, hi, drift, opts.sup_rule, &targets)
            }
        };
        Ok(r_list
            .iter()
            .zip(theta_list)
            .zip(vals)
            .map(|((&r, &theta), x)| ScaledSample {
                replica: i as u64,
                r,
                theta,
                value: rescale(x, t, r, theta),
            })
            .collect())
    };
    (0..n_samples).into_par_iter().map(replica).collect()
}

/// Initial data of the half-infinite representation. For the stationary
/// flavors the boundary particle sits at its anchor (0 for stat, 1 for
/// stat-flat) and the data to its right is the usual one.
fn boundary_ic(flavor: Flavor, lo: i64, hi: i64, stream: StreamId) -> Result<HeightVector> {
    make_initial_condition_replica(flavor, (lo, hi.max(lo)), stream)
}

/// Summary of the stationarity diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BurkeReport {
    pub sup_mean: f64,
    pub sup_target: f64,
    pub sup_pass: bool,
    pub variance: f64,
    pub variance_target: f64,
    pub variance_pass: bool,
    pub gap_ks: f64,
    pub gap_band: f64,
    pub gap_pass: bool,
}

impl BurkeReport {
    pub fn pass(&self) -> bool {
        self.sup_pass && self.variance_pass && self.gap_pass
    }
}

/// Two-sided DKW band at confidence 99%.
pub fn dkw_band(n: usize) -> f64 {
    ((2.0f64 / 0.01).ln() / (2.0 * n as f64)).sqrt()
}

/// Checks three stationarity facts with λ = ρ:
/// the mean of sup_{s≤50}(B(s) - ρ s) against 1/(2ρ),
/// the variance of x_0(t) - ζ_0 - ρ t in the two-sided system against t,
/// and the law of the gap x_1(t) - x_0(t) against Exp(ρ).
pub fn burke_check(seed: u64, rho: f64, t: f64, n_samples: usize, rule: SupRule) -> Result<BurkeReport> {
    if !(rho > 0.0) {
        return Err(Error::Domain(format!("rho must be positive, got {rho}")));
    }
    if n_samples < 2 {
        return Err(Error::Domain("need at least two samples".into()));
    }
    let flavor = Flavor::Stat { lambda: rho, rho };
    let sup_grid = TimeGrid::new(50.0, 50_000)?;
    let grid = TimeGrid::default_for(t)?;
    let stats: Vec<(f64, f64, f64)> = (0..n_samples)
        .into_par_iter()
        .map(|i| -> Result<(f64, f64, f64)> {
            let stream = StreamId { seed, replica: i as u64 };
            let mut b = vec![0.0; sup_grid.n_steps + 1];
            let sup_stream = StreamId { seed: seed ^ 0x5u64.rotate_left(60), replica: i as u64 };
            fill_path(sup_stream, 0, &sup_grid, &mut b);
            let mut sup = 0.0f64;
            let mut u = Vec::new();
            let bridge = level_uniforms(rule, sup_stream, 0, &sup_grid, &mut u);
            for (j, bj) in b.iter().enumerate() {
                let d = bj - rho * sup_grid.time(j);
                let top = if bridge && j > 0 {
                    bridge_max(b[j - 1] - rho * sup_grid.time(j - 1), d, sup_grid.dt(), u[j])
                } else {
                    d
                };
                sup = sup.max(top);
            }
            if rule == SupRule::Corrected {
                sup += SUP_SHIFT * sup_grid.dt().sqrt();
            }
            let (v, _, _) = truncated_targets(flavor, stream, &grid, &[(0, grid.n_steps)], 1e-9, rule)?;
            let zeta = make_initial_condition_replica(flavor, (0, 1), stream)?;
            let g = stream_levels(&zeta, stream, &grid, 0, 1, rho, rule, &[(0, grid.n_steps), (1, grid.n_steps)]);
            Ok((sup, v[0] - rho * t, g[1] - g[0]))
        })
        .collect::<Result<_>>()?;
    let n = n_samples as f64;
    let sup_mean = stats.iter().map(|s| s.0).sum::<f64>() / n;
    let mean_d = stats.iter().map(|s| s.1).sum::<f64>() / n;
    let variance = stats.iter().map(|s| (s.1 - mean_d).powi(2)).sum::<f64>() / (n - 1.0);
    let mut gaps: Vec<f64> = stats.iter().map(|s| s.2).collect();
    gaps.sort_by(|a, b| a.total_cmp(b));
    let mut ks = 0.0f64;
    for (k, g) in gaps.iter().enumerate() {
        let f = 1.0 - (-rho * g).exp();
        ks = ks.max((f - k as f64 / n).abs()).max(((k + 1) as f64 / n - f).abs());
    }
    let sup_target = 0.5 / rho;
    let band = dkw_band(n_samples);
    Ok(BurkeReport {
        sup_mean,
        sup_target,
        sup_pass: ((sup_mean - sup_target) / sup_target).abs() <= 0.05,
        variance,
        variance_target: t,
        variance_pass: ((variance - t) / t).abs() <= 0.05,
        gap_ks: ks,
        gap_band: band,
        gap_pass: ks <= band,
    })
}
