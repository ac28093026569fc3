//! Kernels of the Airy-type limit processes and their finite-dimensional
//! distributions.
//!
//! Every integral over (0, ∞) of Airy products is discretized on a composite
//! Gauss–Legendre rule whose length is chosen from the decay of the
//! integrand. Products that combine a huge exponential prefactor with a tiny
//! Airy value are formed in log space, so the kernels can be evaluated at
//! the far nodes of the semi-infinite map without overflow.
//!
//! Each process is discretized after a conjugation x ↦ e^{-κx} that makes its
//! rank-one parts decay on the domain. The determinant does not depend on κ.

use crate::error::{Error, Result};
use crate::fredholm::{MultiPointDomain, Nystrom, DEFAULT_LCUT, DEFAULT_ORDER};
use crate::quad;
use crate::specfun::{airy_ai, airy_kernel, ln_airy_ai};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// The limit processes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "process", rename_all = "kebab-case")]
pub enum LimitProcess {
    /// Airy₂ with the extended kernel; the event is A₂(r) ≤ s + r².
    Airy2,
    /// Airy₂ in the unshifted form; the event is A₂(r) ≤ s.
    Airy2Prime,
    Airy1,
    /// Event A₂→₁(r) ≤ s + r²·1{r ≤ 0}.
    Airy2To1,
    Airy2ToBm,
    AiryBmTo1,
    FiniteStep { delta: f64 },
    AiryStat,
}

impl LimitProcess {
    /// Parses a CLI name.
    pub fn parse(name: &str, delta: Option<f64>) -> Result<Self> {
        let p = match name {
            "airy2" => LimitProcess::Airy2,
            "airy2prime" => LimitProcess::Airy2Prime,
            "airy1" => LimitProcess::Airy1,
            "airy2to1" => LimitProcess::Airy2To1,
            "airy2tobm" => LimitProcess::Airy2ToBm,
            "airybmto1" => LimitProcess::AiryBmTo1,
            "finite-step" => LimitProcess::FiniteStep {
                delta: delta.ok_or_else(|| Error::Config("finite-step needs --delta".into()))?,
            },
            "airy-stat" => LimitProcess::AiryStat,
            other => return Err(Error::Config(format!("unknown process '{other}'"))),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn name(&self) -> &'static str {
        match self {
            LimitProcess::Airy2 => "airy2",
            LimitProcess::Airy2Prime => "airy2prime",
            LimitProcess::Airy1 => "airy1",
            LimitProcess::Airy2To1 => "airy2to1",
            LimitProcess::Airy2ToBm => "airy2tobm",
            LimitProcess::AiryBmTo1 => "airybmto1",
            LimitProcess::FiniteStep { .. } => "finite-step",
            LimitProcess::AiryStat => "airy-stat",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let LimitProcess::FiniteStep { delta } = *self {
            if !(delta > 0.0) || !delta.is_finite() {
                return Err(Error::Domain(format!("delta must be positive, got {delta}")));
            }
        }
        Ok(())
    }

    /// Upper bound on the process value described by the kernel coordinate s
    /// at time r.
    pub fn event_level(&self, r: f64, s: f64) -> f64 {
        match self {
            LimitProcess::Airy2 => s + r * r,
            LimitProcess::Airy2To1 if r <= 0.0 => s + r * r,
            _ => s,
        }
    }
}

/// Points (r_k, s_k) with strictly increasing r.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointConfig {
    pub r: Vec<f64>,
    pub s: Vec<f64>,
}

impl PointConfig {
    pub fn new(r: Vec<f64>, s: Vec<f64>) -> Result<Self> {
        if r.is_empty() || r.len() != s.len() {
            return Err(Error::RangeMismatch(format!("{} times against {} levels", r.len(), s.len())));
        }
        if r.iter().chain(&s).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("point configuration".into()));
        }
        if r.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Domain("times must be strictly increasing".into()));
        }
        Ok(Self { r, s })
    }

    pub fn one(r: f64, s: f64) -> Self {
        Self { r: vec![r], s: vec![s] }
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    fn shifted(&self, h: f64) -> Vec<(f64, f64)> {
        self.r.iter().zip(&self.s).map(|(&r, &s)| (r, s + h)).collect()
    }
}

/// Quadrature settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitOptions {
    pub order: usize,
    pub lcut: f64,
}

impl Default for LimitOptions {
    fn default() -> Self {
        Self { order: DEFAULT_ORDER, lcut: DEFAULT_LCUT }
    }
}

/// Step of the central differences in s.
pub const DERIVATIVE_STEP: f64 = 1e-4;
/// Allowed disagreement between the steps h and h/2.
pub const DERIVATIVE_TOL: f64 = 1e-6;

const PANEL: f64 = 0.5;
const PANEL_ORDER: usize = 16;
const TAIL_BUDGET: f64 = 40.0;
/// Largest weighted kernel entry accepted before the determinant is refused.
const MAX_ENTRY: f64 = 1e8;

/// v·e^{log} without intermediate overflow.
pub(crate) fn mul_exp(v: f64, log: f64) -> f64 {
    if v == 0.0 || log == f64::NEG_INFINITY {
        return 0.0;
    }
    v.signum() * (v.abs().ln() + log).exp()
}

/// Upper bound of ln|Ai(z)|.
fn ai_log_bound(z: f64) -> f64 {
    if z > 0.0 {
        -2.0 / 3.0 * z.powf(1.5)
    } else {
        0.0
    }
}

/// Length beyond which an integrand with log-magnitude bound `lmag` is
/// negligible relative to its peak.
fn extent<F: Fn(f64) -> f64>(lmag: F) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut q = 0.0;
    loop {
        let v = lmag(q);
        if v > peak {
            peak = v;
        } else if v < peak - TAIL_BUDGET && q >= 1.0 {
            return q;
        }
        q += PANEL;
        if q > 4000.0 {
            return q;
        }
    }
}

fn x_rule(len: f64) -> (Vec<f64>, Vec<f64>) {
    let panels = (len / PANEL).ceil().max(1.0) as usize;
    quad::composite(0.0, panels as f64 * PANEL, panels, PANEL_ORDER)
}

/// ∫₀^∞ q^p Ai(a + q) e^{cq} dq.
fn ai_exp_moment(a: f64, c: f64, p: i32) -> f64 {
    let len = extent(|q| ai_log_bound(a + q) + c * q + p as f64 * (1.0 + q).ln());
    let (qs, ws) = x_rule(len);
    qs.iter().zip(&ws).map(|(&q, &w)| w * q.powi(p) * airy_ai(a + q) * (c * q).exp()).sum()
}

/// ∫₀^∞ Ai(a + q) e^{cq} dq.
fn ai_exp_int(a: f64, c: f64) -> f64 {
    ai_exp_moment(a, c, 0)
}

/// ∫₀^∞ Ai(a - q) e^{-cq} dq for c > 0.
fn ai_exp_int_rev(a: f64, c: f64) -> f64 {
    let len = extent(|q| ai_log_bound(a - q) - c * q);
    let (qs, ws) = x_rule(len);
    qs.iter().zip(&ws).map(|(&q, &w)| w * airy_ai(a - q) * (-c * q).exp()).sum()
}

/// Matrix with rows rescaled by their largest entry, stored with the log scale.
pub(crate) struct Scaled {
    m: DMatrix<f64>,
    scale: Vec<f64>,
}

pub(crate) fn scaled<F: Fn(usize, usize) -> (f64, f64)>(rows: usize, cols: usize, f: F) -> Scaled {
    let mut m = DMatrix::zeros(rows, cols);
    let mut scale = vec![f64::NEG_INFINITY; rows];
    let mut buf = vec![(0.0, 0.0); cols];
    for a in 0..rows {
        let mut mx = f64::NEG_INFINITY;
        for (k, b) in buf.iter_mut().enumerate() {
            *b = f(a, k);
            if b.0 != 0.0 && b.1 > mx {
                mx = b.1;
            }
        }
        scale[a] = mx;
        if mx.is_finite() {
            for (k, b) in buf.iter().enumerate() {
                if b.0 != 0.0 {
                    m[(a, k)] = b.0 * (b.1 - mx).exp();
                }
            }
        }
    }
    Scaled { m, scale }
}

/// Entry (a, b) = ∑_k L(a, k) R(b, k).
pub(crate) fn combine(l: &Scaled, r: &Scaled) -> DMatrix<f64> {
    let s = &l.m * r.m.transpose();
    DMatrix::from_fn(l.m.nrows(), r.m.nrows(), |a, b| mul_exp(s[(a, b)], l.scale[a] + r.scale[b]))
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Two blocks of nodes with their times and the conjugation rate κ: every
/// entry is multiplied by e^{-κx + κy}.
#[derive(Clone, Copy)]
struct Blk<'a> {
    ri: f64,
    xs: &'a [f64],
    rj: f64,
    ys: &'a [f64],
    ki: f64,
    kj: f64,
}

impl Blk<'_> {
    fn zeros(&self) -> DMatrix<f64> {
        DMatrix::zeros(self.xs.len(), self.ys.len())
    }

    fn pointwise<F: Fn(f64, f64) -> f64>(&self, f: F) -> DMatrix<f64> {
        DMatrix::from_fn(self.xs.len(), self.ys.len(), |a, b| f(self.xs[a], self.ys[b]))
    }
}

/// -V_{ri,rj}·1{ri < rj}.
fn v_part(b: Blk) -> DMatrix<f64> {
    if !(b.ri < b.rj) {
        return b.zeros();
    }
    let tau = b.rj - b.ri;
    let norm = (4.0 * PI * tau).sqrt();
    b.pointwise(|x, y| -(-(y - x).powi(2) / (4.0 * tau) - b.ki * x + b.kj * y).exp() / norm)
}

/// K_{ri,rj} in the conjugated Airy-integral form.
fn k_part(b: Blk) -> DMatrix<f64> {
    let (ri, rj, ki, kj) = (b.ri, b.rj, b.ki, b.kj);
    if ri == rj {
        let r2 = ri * ri;
        return b.pointwise(|x, y| mul_exp(airy_kernel(r2 + x, r2 + y), (ri + ki) * (y - x)));
    }
    let g = rj - ri;
    let (ai, aj) = (ri * ri + min_of(b.xs), rj * rj + min_of(b.ys));
    let len = extent(|q| ai_log_bound(ai + q) + ai_log_bound(aj + q) + g * q);
    let (qs, ws) = x_rule(len);
    let l = scaled(b.xs.len(), qs.len(), |a, k| {
        let x = b.xs[a];
        let (s, v) = ln_airy_ai(ri * ri + x + qs[k]);
        (s, v - 2.0 / 3.0 * ri.powi(3) - ri * x - ki * x)
    });
    let r = scaled(b.ys.len(), qs.len(), |c, k| {
        let y = b.ys[c];
        let (s, v) = ln_airy_ai(rj * rj + y + qs[k]);
        (s, v + 2.0 / 3.0 * rj.powi(3) + rj * y + kj * y + ws[k].ln() + g * qs[k])
    });
    combine(&l, &r)
}

/// K'_{A2}: the unshifted Airy₂ kernel.
fn kprime_part(b: Blk) -> DMatrix<f64> {
    let (ki, kj) = (b.ki, b.kj);
    if b.ri == b.rj {
        return b.pointwise(|x, y| mul_exp(airy_kernel(x, y), ki * (y - x)));
    }
    let c = b.rj - b.ri;
    let amin = min_of(b.xs).min(min_of(b.ys));
    let len = extent(|q| 2.0 * ai_log_bound(amin + q) + c * q);
    let (qs, ws) = x_rule(len);
    let l = scaled(b.xs.len(), qs.len(), |a, k| {
        let (s, v) = ln_airy_ai(b.xs[a] + qs[k]);
        (s, v - ki * b.xs[a])
    });
    let r = scaled(b.ys.len(), qs.len(), |e, k| {
        let (s, v) = ln_airy_ai(b.ys[e] + qs[k]);
        (s, v + kj * b.ys[e] + ws[k].ln() + c * qs[k])
    });
    let mut m = combine(&l, &r);
    if c > 0.0 {
        // ∫_ℝ e^{cx} Ai(x+q) Ai(y+q) dq in closed form
        let norm = (4.0 * PI * c).sqrt();
        m -= b.pointwise(|x, y| {
            (c.powi(3) / 12.0 - (x + y) * c / 2.0 - (x - y).powi(2) / (4.0 * c) - ki * x + kj * y).exp() / norm
        });
    }
    m
}

/// Ai(x + y + Δ²) e^{Δ(x+y) + (2/3)Δ³}, Δ = rj - ri.
fn a1_part(b: Blk) -> DMatrix<f64> {
    let d = b.rj - b.ri;
    b.pointwise(|x, y| {
        let (s, v) = ln_airy_ai(x + y + d * d);
        s * (v + d * (x + y) + 2.0 / 3.0 * d.powi(3) - b.ki * x + b.kj * y).exp()
    })
}

/// The second term of the Airy₂→₁ kernel.
fn a21_part(b: Blk) -> DMatrix<f64> {
    let (ri, rj, ki, kj) = (b.ri, b.rj, b.ki, b.kj);
    let aj = rj * rj + min_of(b.ys);
    let len = extent(|q| ai_log_bound(aj + q) + (ri + rj) * q);
    let (qs, ws) = x_rule(len);
    let l = scaled(b.xs.len(), qs.len(), |a, k| {
        let x = b.xs[a];
        let (s, v) = ln_airy_ai(ri * ri + x - qs[k]);
        (s, v - 2.0 / 3.0 * ri.powi(3) - ri * x - ki * x)
    });
    let r = scaled(b.ys.len(), qs.len(), |c, k| {
        let y = b.ys[c];
        let (s, v) = ln_airy_ai(rj * rj + y + qs[k]);
        (s, v + 2.0 / 3.0 * rj.powi(3) + rj * y + kj * y + ws[k].ln() + (ri + rj) * qs[k])
    });
    combine(&l, &r)
}

fn rank_one(u: Vec<f64>, v: Vec<f64>) -> DMatrix<f64> {
    DVector::from_vec(u) * DVector::from_vec(v).transpose()
}

/// f_r(x)·e^{-κx} of the finite-step kernel.
fn fs_f(r: f64, x: f64, kappa: f64) -> f64 {
    (-kappa * x).exp() - mul_exp(ai_exp_int(r * r + x, -r), -2.0 / 3.0 * r.powi(3) - r * x - kappa * x)
}

/// g_r(y)·e^{κy} of the finite-step kernel. For δ + r ≥ 1 the residue term is
/// folded into an integral over (-∞, 0), which avoids e^{δ³/3}.
fn fs_g(r: f64, y: f64, delta: f64, kappa: f64) -> f64 {
    let c = delta + r;
    let pre = 2.0 / 3.0 * r.powi(3) + r * y + kappa * y;
    if c >= 1.0 {
        mul_exp(ai_exp_int_rev(r * r + y, c), pre)
    } else {
        (delta.powi(3) / 3.0 + r * delta * delta - y * delta + kappa * y).exp() - mul_exp(ai_exp_int(r * r + y, c), pre)
    }
}

/// Conjugation rate of every time block. Kernels built on the h-ratio form
/// get κ_k = c - r_k, which removes their e^{r(y-x)} growth. The finite-step
/// rates must stay inside (0, δ), where its rank-one part decays.
fn conjugation(process: &LimitProcess, r: &[f64]) -> Vec<f64> {
    let rmax = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let rmin = r.iter().cloned().fold(f64::INFINITY, f64::min);
    let base = match *process {
        LimitProcess::Airy2ToBm => return vec![rmax.max(0.0) + 0.5; r.len()],
        LimitProcess::Airy2Prime | LimitProcess::Airy1 | LimitProcess::AiryStat => return vec![0.0; r.len()],
        LimitProcess::Airy2 | LimitProcess::Airy2To1 => rmax.max(0.0),
        LimitProcess::AiryBmTo1 => rmin - 0.5,
        LimitProcess::FiniteStep { delta } => return vec![finite_step_rate(delta); r.len()],
    };
    r.iter().map(|&rk| base - rk).collect()
}

/// Decay rate left on the finite-step rank-one part.
fn finite_step_rate(delta: f64) -> f64 {
    (0.5 * delta).min(0.5)
}

/// Map scale used for a process: the finite-step rank-one part decays only
/// like e^{-κx}.
fn effective_lcut(process: &LimitProcess, lcut: f64) -> f64 {
    match *process {
        LimitProcess::FiniteStep { delta } => lcut.max(2.0 / finite_step_rate(delta)),
        _ => lcut,
    }
}

fn block(process: &LimitProcess, b: Blk) -> Result<DMatrix<f64>> {
    let m = match *process {
        LimitProcess::Airy2 => v_part(b) + k_part(b),
        LimitProcess::Airy2Prime => kprime_part(b),
        LimitProcess::Airy1 => v_part(b) + a1_part(b),
        LimitProcess::Airy2To1 => v_part(b) + k_part(b) + a21_part(b),
        LimitProcess::Airy2ToBm => {
            let (ri, ki, kj) = (b.ri, b.ki, b.kj);
            let u = b
                .xs
                .iter()
                .map(|&x| (-ri.powi(3) / 3.0 + (ri - ki) * x).exp() - mul_exp(ai_exp_int(x, -ri), -ki * x))
                .collect();
            let v = b
                .ys
                .iter()
                .map(|&y| {
                    let (s, l) = ln_airy_ai(y);
                    s * (l + kj * y).exp()
                })
                .collect();
            kprime_part(b) + rank_one(u, v)
        }
        LimitProcess::AiryBmTo1 => {
            let (ri, rj, ki, kj) = (b.ri, b.rj, b.ki, b.kj);
            let u = b
                .xs
                .iter()
                .map(|&x| {
                    let (s, l) = ln_airy_ai(x + ri * ri);
                    s * (l - 2.0 / 3.0 * ri.powi(3) - ri * x - ki * x).exp()
                })
                .collect();
            let v = b
                .ys
                .iter()
                .map(|&y| {
                    (kj * y).exp()
                        - 2.0
                            * mul_exp(ai_exp_int(rj * rj + y, rj), 2.0 / 3.0 * rj.powi(3) + rj * y + kj * y)
                })
                .collect();
            v_part(b) + k_part(b) + a21_part(b) + rank_one(u, v)
        }
        LimitProcess::FiniteStep { delta } => {
            let u = b.xs.iter().map(|&x| delta * fs_f(b.ri, x, b.ki)).collect();
            let v = b.ys.iter().map(|&y| fs_g(b.rj, y, delta, b.kj)).collect();
            v_part(b) + k_part(b) + rank_one(u, v)
        }
        LimitProcess::AiryStat => {
            return Err(Error::Domain("airy-stat has no extended kernel; use cdf_airy_stat".into()));
        }
    };
    Ok(m)
}

/// The extended kernel of `process` at (r1, s1; r2, s2), without conjugation.
pub fn kernel_eval(process: LimitProcess, r1: f64, s1: f64, r2: f64, s2: f64) -> Result<f64> {
    process.validate()?;
    if ![r1, s1, r2, s2].iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("kernel arguments".into()));
    }
    let m = block(&process, Blk { ri: r1, xs: &[s1], rj: r2, ys: &[s2], ki: 0.0, kj: 0.0 })?;
    Ok(m[(0, 0)])
}

fn clip(v: f64) -> f64 {
    if !(-1e-6..=1.0 + 1e-6).contains(&v) {
        eprintln!("warning: probability {v} outside [0, 1] beyond tolerance; clipped");
    }
    v.clamp(0.0, 1.0)
}

fn determinant(process: &LimitProcess, cfg: &PointConfig, opts: LimitOptions, h: f64) -> Result<f64> {
    let points = cfg.shifted(h);
    let domain = MultiPointDomain::new(&points, opts.order, effective_lcut(process, opts.lcut))?;
    let kappa = conjugation(process, &cfg.r);
    let ny = Nystrom::assemble_blocks(&domain, |bi, bj, xs, ys| {
        block(process, Blk { ri: points[bi].0, xs, rj: points[bj].0, ys, ki: kappa[bi], kj: kappa[bj] })
    })?;
    let scale = ny.matrix.amax();
    if scale > MAX_ENTRY {
        return Err(Error::Domain(format!("{} discretization badly scaled: entry of size {scale:e}", process.name())));
    }
    Ok(ny.det())
}

/// Σ_i d/ds_i of `f` by central differences, checked by Richardson.
fn derivative_sum<F: Fn(f64) -> Result<f64>>(f: F) -> Result<f64> {
    let (d, gap) = quad::central_derivative(f, DERIVATIVE_STEP)?;
    if !(gap <= DERIVATIVE_TOL) {
        return Err(Error::Derivative(gap));
    }
    Ok(d)
}

/// P(∩_k {process(r_k) ≤ event_level(r_k, s_k)}).
pub fn cdf_limit(process: LimitProcess, cfg: &PointConfig, opts: LimitOptions) -> Result<f64> {
    process.validate()?;
    let cfg = PointConfig::new(cfg.r.clone(), cfg.s.clone())?;
    match process {
        LimitProcess::AiryStat => cdf_airy_stat(&cfg, opts),
        LimitProcess::FiniteStep { delta } => {
            let det = |h| determinant(&process, &cfg, opts, h);
            let d = derivative_sum(det)?;
            Ok(clip(det(0.0)? + d / delta))
        }
        _ => Ok(clip(determinant(&process, &cfg, opts, 0.0)?)),
    }
}

/// Grid on which the Airy_stat operators act: breakpoints at every s_k and
/// panels of unit length at most.
fn stat_grid(s: &[f64], order: usize) -> (Vec<f64>, Vec<f64>, [usize; 2]) {
    let per_panel = ((16 * order) as f64 / DEFAULT_ORDER as f64).round().max(8.0) as usize;
    let smin = min_of(s);
    let smax = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let hi = (smax + 15.0).max(20.0);
    let mut cuts: Vec<f64> = s.to_vec();
    if s.len() > 1 {
        cuts.push((smin - 12.0).min(-20.0));
    }
    cuts.push(hi);
    cuts.sort_by(|a, b| a.total_cmp(b));
    cuts.dedup();
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for w in cuts.windows(2) {
        let panels = (w[1] - w[0]).ceil().max(1.0) as usize;
        let h = (w[1] - w[0]) / panels as f64;
        for k in 0..panels {
            quad::push_panel(w[0] + k as f64 * h, w[0] + (k + 1) as f64 * h, per_panel, &mut nodes, &mut weights);
        }
    }
    let n = nodes.len();
    (nodes, weights, [per_panel, n])
}

/// G·det for the Airy_stat formula at levels s + h.
fn stat_product(cfg: &PointConfig, opts: LimitOptions, h: f64) -> Result<f64> {
    let (g, det) = stat_parts(cfg, opts, h)?;
    Ok(g * det)
}

/// Returns (G_m, det(1 - 𝒫K)) at levels s + h.
fn stat_parts(cfg: &PointConfig, opts: LimitOptions, h: f64) -> Result<(f64, f64)> {
    let m = cfg.len();
    let r = &cfg.r;
    let s: Vec<f64> = cfg.s.iter().map(|v| v + h).collect();
    let (xs, ws, [per_panel, n]) = stat_grid(&s, opts.order);
    let above = |k: usize| DVector::from_iterator(n, xs.iter().map(|&x| if x >= s[k] { 1.0 } else { 0.0 }));
    let below = |k: usize| DVector::from_iterator(n, xs.iter().map(|&x| if x < s[k] { 1.0 } else { 0.0 }));
    let weight_cols = |mut a: DMatrix<f64>| {
        for (j, w) in ws.iter().enumerate() {
            a.column_mut(j).scale_mut(*w);
        }
        a
    };
    let r1 = r[0];
    let kern = |rk: f64| weight_cols(k_part(Blk { ri: rk, xs: &xs, rj: r1, ys: &xs, ki: 0.0, kj: 0.0 }));
    let fstar = |rk: f64| {
        DVector::from_iterator(
            n,
            xs.iter().map(|&x| -mul_exp(ai_exp_int(rk * rk + x, -rk), -2.0 / 3.0 * rk.powi(3) - rk * x)),
        )
    };
    let e1 = above(0);
    let mut pk = DMatrix::from_diagonal(&e1) * kern(r1);
    let mut pf = fstar(r1).component_mul(&e1);
    let mut p_one = DVector::zeros(n);
    if m > 1 {
        let heat = |ra: f64, rb: f64| {
            let tau = rb - ra;
            let norm = (4.0 * PI * tau).sqrt();
            weight_cols(DMatrix::from_fn(n, n, |a, b| (-(xs[b] - xs[a]).powi(2) / (4.0 * tau)).exp() / norm))
        };
        let mut chain = DMatrix::from_diagonal(&below(0)) * heat(r[0], r[1]);
        for k in 1..m {
            let ek = above(k);
            let chain_e = &chain * DMatrix::from_diagonal(&ek);
            pk += &chain_e * kern(r[k]);
            pf += &chain_e * fstar(r[k]);
            p_one += &chain_e * DVector::from_element(n, 1.0);
            if k + 1 < m {
                chain = chain * DMatrix::from_diagonal(&below(k)) * heat(r[k], r[k + 1]);
            }
        }
    }
    if pk.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("airy-stat operator".into()));
    }
    let rhs = &pf + &pk * &e1 + &p_one;
    let a = DMatrix::identity(n, n) - &pk;
    let lu = a.clone().lu();
    let det = lu.determinant();
    let u = lu.solve(&rhs).ok_or(Error::Singular(f64::INFINITY))?;
    let resid = (&a * &u - &rhs).norm();
    if !(resid <= 1e-10 * rhs.norm().max(1.0)) {
        return Err(Error::Singular(resid));
    }
    let edge: f64 = (0..per_panel).chain(n - per_panel..n).map(|i| ws[i] * u[i].abs()).sum();
    let edge = if m == 1 { (n - per_panel..n).map(|i| ws[i] * u[i].abs()).sum() } else { edge };
    if edge > 1e-8 {
        return Err(Error::Domain(format!("airy-stat grid truncation: boundary mass {edge:e}")));
    }
    let g: f64 = xs
        .iter()
        .zip(&ws)
        .zip(u.iter())
        .map(|((&x, &w), &ui)| w * ui * (1.0 - mul_exp(ai_exp_int(r1 * r1 + x, r1), 2.0 / 3.0 * r1.powi(3) + r1 * x)))
        .sum();
    let big_r = s[0] + mul_exp(ai_exp_moment(r1 * r1 + s[0], r1, 1), 2.0 / 3.0 * r1.powi(3) + r1 * s[0]);
    Ok((big_r - g, det))
}

/// P(∩_k {A_stat(r_k) ≤ s_k}) as Σ_i d/ds_i (G_m · det(1 - 𝒫K)).
pub fn cdf_airy_stat(cfg: &PointConfig, opts: LimitOptions) -> Result<f64> {
    let cfg = PointConfig::new(cfg.r.clone(), cfg.s.clone())?;
    let d = derivative_sum(|h| stat_product(&cfg, opts, h))?;
    Ok(clip(d))
}

/// Airy_stat determinant det(1 - 𝒫K), equal to the Airy₂ m-point function
/// with shifted levels.
pub fn airy_stat_determinant(cfg: &PointConfig, opts: LimitOptions) -> Result<f64> {
    let cfg = PointConfig::new(cfg.r.clone(), cfg.s.clone())?;
    Ok(stat_parts(&cfg, opts, 0.0)?.1)
}

/// GUE Tracy–Widom distribution function.
pub fn f_gue(s: f64) -> Result<f64> {
    cdf_limit(LimitProcess::Airy2Prime, &PointConfig::one(0.0, s), LimitOptions::default())
}

/// F_GOE(2s), the one-point law of Airy₁.
pub fn f_goe_2s(s: f64) -> Result<f64> {
    cdf_limit(LimitProcess::Airy1, &PointConfig::one(0.0, s), LimitOptions::default())
}

/// Baik–Rains distribution function.
pub fn baik_rains(s: f64) -> Result<f64> {
    cdf_airy_stat(&PointConfig::one(0.0, s), LimitOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    /// Points and weights (dW or dZ included) of a two-ray contour through
    /// `vertex` leaving at angles ±θ, oriented from the lower ray to the upper.
    fn wedge(vertex: f64, theta: f64, upward: bool) -> Vec<(Complex64, Complex64)> {
        let (ts, ws) = quad::composite(0.0, 10.0, 40, 16);
        let mut out = Vec::new();
        for sgn in [-1.0, 1.0] {
            let dir = Complex64::from_polar(1.0, sgn * theta);
            for (&t, &w) in ts.iter().zip(&ws) {
                // lower ray is traversed inward, upper ray outward
                let o = if upward { sgn } else { -sgn };
                out.push((vertex + dir * t, dir * w * o));
            }
        }
        out
    }

    /// Double contour integral of the extended kernel, without the heat part.
    fn contour_k(r1: f64, s1: f64, r2: f64, s2: f64, two_to_one: bool) -> f64 {
        let ws = wedge(-1.0, 2.0 * PI / 3.0, false);
        let zs = wedge(if two_to_one { 2.0 } else { 1.0 }, PI / 3.0, true);
        let mut total = Complex64::new(0.0, 0.0);
        for &(w, dw) in &ws {
            let fw = (-(w * w * w / 3.0 + r1 * w * w - s1 * w)).exp() * dw;
            for &(z, dz) in &zs {
                let fz = (z * z * z / 3.0 + r2 * z * z - s2 * z).exp() * dz;
                let core = if two_to_one { 2.0 * z / ((z - w) * (z + w)) } else { 1.0 / (z - w) };
                total += fw * fz * core;
            }
        }
        (-total / (2.0 * PI * Complex64::i()).powi(2)).re
    }

    fn one(p: LimitProcess, r: f64, s: f64) -> f64 {
        cdf_limit(p, &PointConfig::one(r, s), LimitOptions::default()).unwrap()
    }

    #[test]
    fn airy2_kernel_at_equal_times_is_airy_kernel() {
        for (a, b) in [(0.3, -1.2), (-2.0, 1.5), (0.0, 0.0)] {
            let k = kernel_eval(LimitProcess::Airy2, 0.0, a, 0.0, b).unwrap();
            let kt = kernel_eval(LimitProcess::Airy2, 0.0, b, 0.0, a).unwrap();
            assert!((k - airy_kernel(a, b)).abs() < 1e-13);
            assert!((k - kt).abs() < 1e-12);
        }
    }

    #[test]
    fn airy1_kernel_at_equal_times() {
        for (a, b) in [(0.3, -1.2), (-2.0, 1.5)] {
            let k = kernel_eval(LimitProcess::Airy1, 0.0, a, 0.0, b).unwrap();
            assert!((k - airy_ai(a + b)).abs() < 1e-14);
        }
    }

    #[test]
    fn airy_integral_kernel_matches_plain_quadrature() {
        for (r1, s1, r2, s2) in [(-0.5, 0.3, 0.7, -1.0), (1.0, -2.0, -0.4, 0.5), (2.0, 1.0, 2.5, -0.5)] {
            let k = kernel_eval(LimitProcess::Airy2, r1, s1, r2, s2).unwrap() + if r1 < r2 {
                crate::specfun::heat_kernel(r1, r2, s1, s2).unwrap()
            } else {
                0.0
            };
            let pre = (2.0 / 3.0 * (r2 * r2 * r2 - r1 * r1 * r1) + r2 * s2 - r1 * s1).exp();
            let direct = quad::integrate(
                |x| ((r2 - r1) * x).exp() * airy_ai(r1 * r1 + s1 + x) * airy_ai(r2 * r2 + s2 + x),
                0.0,
                40.0,
                200,
                20,
            );
            assert!((k - pre * direct).abs() < 1e-11 * (1.0 + k.abs()), "{k} {}", pre * direct);
        }
    }

    #[test]
    fn airy_integral_kernel_matches_contour_form() {
        let pts = [
            (-0.8, 0.4, 0.3, -0.6),
            (0.5, -1.1, 1.2, 0.2),
            (1.3, 0.7, -0.2, 0.1),
            (-1.5, 2.0, -1.0, 1.0),
            (0.0, -0.5, 0.9, -1.4),
            (0.2, 0.2, 0.2, -0.3),
            (-0.3, -2.0, 0.6, 1.5),
            (1.7, -0.9, 2.1, -0.4),
            (-2.0, 1.2, 0.0, -1.0),
            (0.9, 0.0, -0.9, 0.0),
        ];
        for (r1, s1, r2, s2) in pts {
            let k = kernel_eval(LimitProcess::Airy2, r1, s1, r2, s2).unwrap()
                + if r1 < r2 { crate::specfun::heat_kernel(r1, r2, s1, s2).unwrap() } else { 0.0 };
            let c = contour_k(r1, s1, r2, s2, false);
            assert!((k - c).abs() < 1e-9, "K at {r1} {s1} {r2} {s2}: {k} vs {c}");
            let k21 = kernel_eval(LimitProcess::Airy2To1, r1, s1, r2, s2).unwrap()
                + if r1 < r2 { crate::specfun::heat_kernel(r1, r2, s1, s2).unwrap() } else { 0.0 };
            let c21 = contour_k(r1, s1, r2, s2, true);
            assert!((k21 - c21).abs() < 1e-8, "K21 at {r1} {s1} {r2} {s2}: {k21} vs {c21}");
        }
    }

    #[test]
    fn f_gue_is_stable_and_increasing() {
        let d = |order| {
            cdf_limit(LimitProcess::Airy2Prime, &PointConfig::one(0.0, 0.0), LimitOptions { order, lcut: DEFAULT_LCUT })
                .unwrap()
        };
        assert!((d(60) - d(120)).abs() < 1e-8);
        assert!((d(60) - 0.969372828355).abs() < 1e-8);
        let mut prev = 0.0;
        for k in 0..=32 {
            let v = f_gue(-5.0 + 0.25 * k as f64).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn f_goe_is_stable_under_order_doubling() {
        let d = |order| {
            cdf_limit(LimitProcess::Airy1, &PointConfig::one(0.0, 0.0), LimitOptions { order, lcut: DEFAULT_LCUT })
                .unwrap()
        };
        assert!((d(60) - d(120)).abs() < 1e-8);
        // F_GOE(0) from the order-doubling study
        assert!((d(120) - 0.831908066202).abs() < 1e-8, "{}", d(120));
    }

    #[test]
    fn airy2_representations_agree() {
        for &(r, s) in &[(0.0, -1.0), (0.7, 0.5), (-1.2, -2.0)] {
            let a = one(LimitProcess::Airy2, r, s);
            let b = one(LimitProcess::Airy2Prime, r, s + r * r);
            assert!((a - b).abs() < 1e-6);
        }
        let cfg = PointConfig::new(vec![-0.4, 0.6], vec![-1.0, -0.5]).unwrap();
        let cfgp = PointConfig::new(vec![-0.4, 0.6], vec![-1.0 + 0.16, -0.5 + 0.36]).unwrap();
        let a = cdf_limit(LimitProcess::Airy2, &cfg, LimitOptions::default()).unwrap();
        let b = cdf_limit(LimitProcess::Airy2Prime, &cfgp, LimitOptions::default()).unwrap();
        assert!((a - b).abs() < 1e-6, "{a} {b}");
    }

    #[test]
    fn airy2_to_bm_at_zero_is_goe_squared() {
        for s in [-1.0, 0.0, 1.0] {
            let a = one(LimitProcess::Airy2ToBm, 0.0, s);
            let g = f_goe_2s(s / 2.0).unwrap();
            assert!((a - g * g).abs() < 1e-5, "{a} vs {}", g * g);
        }
    }

    #[test]
    fn right_tails_reach_one() {
        for p in [
            LimitProcess::Airy2,
            LimitProcess::Airy1,
            LimitProcess::Airy2To1,
            LimitProcess::Airy2ToBm,
            LimitProcess::AiryBmTo1,
            LimitProcess::FiniteStep { delta: 1.0 },
            LimitProcess::AiryStat,
        ] {
            let v = one(p, 0.0, 10.0);
            assert!(v >= 1.0 - 1e-3, "{} {v}", p.name());
        }
    }

    #[test]
    fn parse_and_validate() {
        assert!(LimitProcess::parse("finite-step", None).is_err());
        assert!(LimitProcess::parse("finite-step", Some(-1.0)).is_err());
        assert_eq!(LimitProcess::parse("airy1", None).unwrap(), LimitProcess::Airy1);
        assert!(PointConfig::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(kernel_eval(LimitProcess::AiryStat, 0.0, 0.0, 0.0, 0.0).is_err());
    }

    const ALL_KERNEL: [LimitProcess; 7] = [
        LimitProcess::Airy2,
        LimitProcess::Airy2Prime,
        LimitProcess::Airy1,
        LimitProcess::Airy2To1,
        LimitProcess::Airy2ToBm,
        LimitProcess::AiryBmTo1,
        LimitProcess::FiniteStep { delta: 1.0 },
    ];

    #[test]
    fn two_point_marginalizes() {
        for p in ALL_KERNEL {
            let cfg = PointConfig::new(vec![-0.3, 0.4], vec![0.2, 10.0]).unwrap();
            let m2 = cdf_limit(p, &cfg, LimitOptions::default()).unwrap();
            let m1 = one(p, -0.3, 0.2);
            assert!((m2 - m1).abs() < 1e-5, "{} {m2} {m1}", p.name());
        }
    }

    #[test]
    fn monotone_in_each_level() {
        let grid = [-2.0, -1.0, 0.0, 1.0, 2.0];
        for p in ALL_KERNEL {
            for k in 0..2 {
                let mut prev = -1.0;
                for &v in &grid {
                    let mut s = vec![0.0, 0.5];
                    s[k] = v;
                    let cfg = PointConfig::new(vec![-0.2, 0.3], s).unwrap();
                    let c = cdf_limit(p, &cfg, LimitOptions::default()).unwrap();
                    assert!(c >= prev - 1e-9, "{} coordinate {k} at {v}", p.name());
                    prev = c;
                }
            }
        }
    }

    #[test]
    fn airy2_to_1_crossover_limits() {
        for x in [-2.0, -1.0, 0.0, 1.0] {
            let right = one(LimitProcess::Airy2To1, 3.0, x);
            let a1 = f_goe_2s(x / 2f64.cbrt()).unwrap();
            assert!((right - a1).abs() < 1e-3, "r=3 level {x}: {right} {a1}");
            let bm_right = one(LimitProcess::AiryBmTo1, 3.0, x);
            assert!((bm_right - a1).abs() < 1e-3, "BM->1 at r=3 level {x}: {bm_right} {a1}");
        }
        let gue = f_gue(-2.0).unwrap();
        let gaps: Vec<f64> = [-1.0, -2.0, -3.0, -4.0]
            .iter()
            .map(|&r: &f64| (one(LimitProcess::Airy2To1, r, -2.0 - r * r) - gue).abs())
            .collect();
        assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    }

    #[test]
    fn badly_scaled_discretization_is_an_error() {
        let cfg = PointConfig::one(3.0, -11.0);
        assert!(cdf_limit(LimitProcess::Airy2To1, &cfg, LimitOptions::default()).is_err());
    }

    #[test]
    fn finite_step_kernel_approaches_airy2_to_bm() {
        for (s1, s2) in [(0.0, 0.0), (-1.0, 0.5), (1.0, -0.5)] {
            let target = kernel_eval(LimitProcess::Airy2ToBm, 0.0, s1, 0.0, s2).unwrap();
            let gaps: Vec<f64> = [4.0, 8.0, 10.0, 16.0]
                .iter()
                .map(|&d| (kernel_eval(LimitProcess::FiniteStep { delta: d }, 0.0, s1, 0.0, s2).unwrap() - target).abs())
                .collect();
            assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
            assert!(gaps[2] < 0.05, "{gaps:?}");
        }
    }

    #[test]
    fn finite_step_interpolates_between_limits() {
        for s in [-1.0, 0.0, 1.0] {
            let stat = baik_rains(s).unwrap();
            let small: Vec<f64> = [0.5, 0.25, 0.125]
                .iter()
                .map(|&d| (one(LimitProcess::FiniteStep { delta: d }, 0.0, s) - stat).abs())
                .collect();
            assert!(small.windows(2).all(|w| w[1] < w[0]), "{small:?}");
            let r = 0.5;
            let bm = one(LimitProcess::Airy2ToBm, r, s + r * r);
            let large: Vec<f64> = [4.0, 8.0, 16.0]
                .iter()
                .map(|&d| (one(LimitProcess::FiniteStep { delta: d }, r, s) - bm).abs())
                .collect();
            assert!(large.windows(2).all(|w| w[1] < w[0]), "{large:?}");
        }
    }

    #[test]
    fn baik_rains_has_mean_zero() {
        let (xs, ws) = quad::composite(0.0, 8.0, 8, 8);
        let mean: f64 = xs
            .iter()
            .zip(&ws)
            .map(|(&x, &w)| w * ((1.0 - baik_rains(x).unwrap()) - baik_rains(-x).unwrap()))
            .sum();
        assert!(mean.abs() <= 0.02, "mean {mean}");
    }

    #[test]
    fn airy_stat_marginalizes_and_tails() {
        let opts = LimitOptions::default();
        assert!(baik_rains(8.0).unwrap() >= 1.0 - 1e-3);
        let one_point = cdf_airy_stat(&PointConfig::one(0.0, 0.0), opts).unwrap();
        let later = cdf_airy_stat(&PointConfig::new(vec![0.0, 0.5], vec![0.0, 30.0]).unwrap(), opts).unwrap();
        assert!((later - one_point).abs() < 1e-5);
        let earlier = cdf_airy_stat(&PointConfig::new(vec![-0.5, 0.0], vec![30.0, 0.0]).unwrap(), opts).unwrap();
        assert!((earlier - one_point).abs() < 1e-5);
    }

    #[test]
    fn mul_exp_avoids_overflow() {
        assert_eq!(mul_exp(0.0, 1e4), 0.0);
        assert!((mul_exp(-2.0, 800.0 - 2f64.ln() - 799.0) + 1f64.exp()).abs() < 1e-12);
    }
}
