//! Exact finite-time distributions.
//!
//! Points are addressed in scaled coordinates: index n = t + 2t^{2/3}r and
//! position ξ = 2t + 2t^{2/3}r + t^{1/3}s. Kernels are returned in the
//! rescaled form t^{1/3}e^{ξ1-ξ2}K(n1,ξ1;n2,ξ2), whose entries stay of order
//! one near the edge, and the Fredholm determinants are discretized in s.
//!
//! For integer indices the one-variable contour integrals behind the packed,
//! stationary and half-stationary kernels are residues or Gaussian integrals
//! with closed forms in Hermite polynomials:
//!
//! * A(n,ξ) = (2πi)⁻¹∫ e^{tw²/2+ξw}(-w)^n dw = t^{-n/2} He_n(ξ/√t) p_t(ξ),
//! * B(n,ξ) = (2πi)⁻¹∮ e^{-tz²/2-ξz}(-z)^{-n} dz = -t^{(n-1)/2} He_{n-1}(ξ/√t)/(n-1)!,
//!
//! where p_t is the centred Gaussian density of variance t. The double
//! integrals reduce to products of these under a one-dimensional integral
//! over (0, ∞). Every quantity is carried as (sign, ln|value|) until the
//! final products, so nothing overflows at large t.

use crate::airylim::{combine, mul_exp, scaled};
use crate::error::{Error, Result};
use crate::fredholm::{MultiPointDomain, Nystrom, QuadratureRule, DEFAULT_LCUT, DEFAULT_ORDER};
use crate::paths::Flavor;
use crate::quad;
use crate::specfun::lambert_w0;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{E, PI};

const PANEL: f64 = 0.5;
const PANEL_ORDER: usize = 16;
const TAIL_BUDGET: f64 = 40.0;
/// Relative size below which a contour integrand is dropped (about 1e-18).
const CONTOUR_BUDGET: f64 = 41.5;
/// Smallest admissible distance between a quadrature node and a pole.
pub const POLE_MARGIN: f64 = 1e-3;
/// Largest weighted kernel entry accepted before the determinant is refused.
const MAX_ENTRY: f64 = 1e8;
/// Smallest λ - ρ accepted by the stationary formula.
pub const STAT_GAP_FLOOR: f64 = 0.05;
/// Step of the derivative prefactor, in units of s (t^{1/3}·1e-4 in a).
pub const DERIVATIVE_STEP: f64 = 1e-4;
/// Allowed disagreement between the steps h and h/2.
pub const DERIVATIVE_TOL: f64 = 1e-4;
/// Largest system handled by the transition density.
pub const MAX_DENSITY_N: usize = 4;

/// (sign, ln|value|); sign is 0 for an exact zero.
type Sl = (f64, f64);

const ZERO: Sl = (0.0, f64::NEG_INFINITY);

fn sl(v: f64, log_scale: f64) -> Sl {
    if v == 0.0 {
        ZERO
    } else {
        (v.signum(), v.abs().ln() + log_scale)
    }
}

fn sl_value(a: Sl) -> f64 {
    if a.0 == 0.0 {
        0.0
    } else {
        a.0 * a.1.exp()
    }
}


fn sl_sum(terms: &[Sl]) -> Sl {
    let peak = terms.iter().filter(|a| a.0 != 0.0).map(|a| a.1).fold(f64::NEG_INFINITY, f64::max);
    if !peak.is_finite() {
        return ZERO;
    }
    let v: f64 = terms.iter().filter(|a| a.0 != 0.0).map(|a| a.0 * (a.1 - peak).exp()).sum();
    sl(v, peak)
}

fn parity(n: i64) -> f64 {
    if n.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// ln n!.
pub(crate) fn ln_fact(n: usize) -> f64 {
    if n < 32 {
        return (2..=n).map(|k| (k as f64).ln()).sum();
    }
    let x = n as f64 + 1.0;
    let x2 = x * x;
    (x - 0.5) * x.ln() - x + 0.5 * (2.0 * PI).ln() + 1.0 / (12.0 * x) - 1.0 / (360.0 * x * x2)
        + 1.0 / (1260.0 * x * x2 * x2)
        - 1.0 / (1680.0 * x * x2 * x2 * x2)
}

/// (He_{n-1}(x), He_n(x)) for the probabilists' Hermite polynomials.
fn ln_hermite_pair(n: usize, x: f64) -> (Sl, Sl) {
    if n == 0 {
        return (ZERO, (1.0, 0.0));
    }
    let (mut a, mut b) = (1.0f64, x);
    let mut ls = 0.0;
    for k in 1..n {
        let c = x * b - k as f64 * a;
        a = b;
        b = c;
        let m = a.abs().max(b.abs());
        if m > 1e100 {
            a /= m;
            b /= m;
            ls += m.ln();
        }
    }
    (sl(a, ls), sl(b, ls))
}

fn ln_gauss(t: f64, x: f64) -> f64 {
    -x * x / (2.0 * t) - 0.5 * (2.0 * PI * t).ln()
}

/// [z^m] e^{-tz²/2 - xz} = (-√t)^m He_m(x/√t)/m!, together with the m-1 coefficient.
fn ln_coef_pair(t: f64, m: i64, x: f64) -> (Sl, Sl) {
    if m < 0 {
        return (ZERO, ZERO);
    }
    let (hm1, hm) = ln_hermite_pair(m as usize, x / t.sqrt());
    let lt = 0.5 * t.ln();
    let cm = (parity(m) * hm.0, m as f64 * lt + hm.1 - ln_fact(m as usize));
    let cm1 = if m == 0 {
        ZERO
    } else {
        (parity(m - 1) * hm1.0, (m - 1) as f64 * lt + hm1.1 - ln_fact(m as usize - 1))
    };
    (cm, cm1)
}

/// J_m(x) = (2πi)⁻¹∫_{iℝ-1} e^{tw²/2+xw} w^m dw: the m-th derivative of
/// p_t for m ≥ 0 and (-1)^j times the j-fold tail integral of p_t for m = -j.
fn ln_j(t: f64, m: i64, x: f64) -> Sl {
    if m >= 0 {
        let (_, h) = ln_hermite_pair(m as usize, x / t.sqrt());
        (parity(m) * h.0, -0.5 * m as f64 * t.ln() + h.1 + ln_gauss(t, x))
    } else {
        let j = (-m) as usize;
        (parity(m), ln_repeated_tail(t, j, x))
    }
}

/// ln ∫₀^∞ u^{j-1}/(j-1)! p_t(x+u) du for j ≥ 1 (a log-concave integrand).
fn ln_repeated_tail(t: f64, j: usize, x: f64) -> f64 {
    let jm = (j - 1) as f64;
    let lf = ln_fact(j - 1);
    let f = |u: f64| {
        if j > 1 && u <= 0.0 {
            f64::NEG_INFINITY
        } else {
            let pw = if j > 1 { jm * u.ln() } else { 0.0 };
            pw - lf + ln_gauss(t, x + u)
        }
    };
    let ustar = if j == 1 { (-x).max(0.0) } else { 0.5 * (-x + (x * x + 4.0 * jm * t).sqrt()) };
    let curv = if j == 1 { 1.0 / t } else { jm / (ustar * ustar) + 1.0 / t };
    let sigma = 1.0 / curv.sqrt();
    let lo = (ustar - 14.0 * sigma).max(0.0);
    let hi = ustar + 14.0 * sigma;
    let (us, ws) = quad::composite(lo, hi, 28, PANEL_ORDER);
    let peak = f(ustar);
    let sum: f64 = us.iter().zip(&ws).map(|(&u, &w)| w * (f(u) - peak).exp()).sum();
    peak + sum.ln()
}

/// Scaled coordinates (r, s) of the point (n, ξ) at time t.
pub fn to_scaled(t: f64, n: f64, xi: f64) -> (f64, f64) {
    let r = (n - t) / (2.0 * t.powf(2.0 / 3.0));
    let s = (xi - t - n) / t.cbrt();
    (r, s)
}

/// (n, ξ) of the scaled point (r, s) at time t.
pub fn from_scaled(t: f64, r: f64, s: f64) -> (f64, f64) {
    let n = t + 2.0 * t.powf(2.0 / 3.0) * r;
    (n, t + n + t.cbrt() * s)
}

// ---------------------------------------------------------------------------
// Contours
// ---------------------------------------------------------------------------

/// Shape of an integration contour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ContourFamily {
    /// The line c + iℝ, traversed upward.
    Vertical { c: f64 },
    /// Two rays from `vertex` at angles ±`angle`, from ∞e^{-i·angle} to ∞e^{i·angle}.
    Wedge { vertex: f64, angle: f64 },
    /// Counter-clockwise circle.
    Circle { center: f64, radius: f64 },
    /// Image of a wedge under z ↦ L₀(ze^z).
    LambertImage { vertex: f64, angle: f64 },
}

/// An integration contour with its quadrature resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourSpec {
    pub family: ContourFamily,
    /// Nodes per panel (per circle for circles).
    pub order: usize,
}

/// A quadrature node: point z and weight dz (orientation included).
pub type Node = (Complex64, Complex64);

impl ContourSpec {
    /// Nodes with panels of width `panel` reaching out to `reach` (ray
    /// length for wedges, half height for lines). Circles ignore both.
    pub fn nodes(&self, panel: f64, reach: f64) -> Result<Vec<Node>> {
        if self.order == 0 {
            return Err(Error::Domain("contour order must be positive".into()));
        }
        let panels = (reach / panel).ceil().max(1.0) as usize;
        let len = panels as f64 * panel;
        match self.family {
            ContourFamily::Vertical { c } => {
                let (ys, ws) = quad::composite(-len, len, 2 * panels, self.order);
                Ok(ys.iter().zip(&ws).map(|(&y, &w)| (Complex64::new(c, y), Complex64::new(0.0, w))).collect())
            }
            ContourFamily::Wedge { vertex, angle } | ContourFamily::LambertImage { vertex, angle } => {
                let (rs, ws) = quad::composite(0.0, len, panels, self.order);
                let lower = Complex64::from_polar(1.0, -angle);
                let upper = Complex64::from_polar(1.0, angle);
                let v = Complex64::new(vertex, 0.0);
                let mut out = Vec::with_capacity(2 * rs.len());
                for (&r, &w) in rs.iter().zip(&ws).rev() {
                    out.push((v + lower * r, -lower * w));
                }
                for (&r, &w) in rs.iter().zip(&ws) {
                    out.push((v + upper * r, upper * w));
                }
                if let ContourFamily::LambertImage { .. } = self.family {
                    return lambert_image(&out);
                }
                Ok(out)
            }
            ContourFamily::Circle { center, radius } => {
                if !(radius > 0.0) {
                    return Err(Error::Domain(format!("circle radius must be positive, got {radius}")));
                }
                let m = self.order;
                let h = 2.0 * PI / m as f64;
                Ok((0..m)
                    .map(|k| {
                        let e = Complex64::from_polar(1.0, k as f64 * h);
                        (Complex64::new(center, 0.0) + radius * e, Complex64::new(0.0, radius * h) * e)
                    })
                    .collect())
            }
        }
    }
}

/// Refuses node sets that come closer than POLE_MARGIN to any pole.
pub fn check_poles(nodes: &[Node], poles: &[Complex64]) -> Result<()> {
    for &(z, _) in nodes {
        for &p in poles {
            if (z - p).norm() < POLE_MARGIN {
                return Err(Error::Contour(format!("node {z} within {POLE_MARGIN} of pole {p}")));
            }
        }
    }
    Ok(())
}

/// Maps wedge nodes z to φ = L₀(ze^z) with dφ = φ(1+z)/(z(1+φ)) dz,
/// checking that ze^z never crosses the cut (-∞, -1/e) between nodes.
fn lambert_image(nodes: &[Node]) -> Result<Vec<Node>> {
    let phis = lambert_along(nodes)?;
    Ok(nodes
        .iter()
        .zip(&phis)
        .map(|(&(z, dz), &p)| (p, p * (1.0 + z) / (z * (1.0 + p)) * dz))
        .collect())
}

/// L₀(ze^z) at every node, with the nodewise continuity check.
fn lambert_along(nodes: &[Node]) -> Result<Vec<Complex64>> {
    let mut out = Vec::with_capacity(nodes.len());
    let mut prev: Option<Complex64> = None;
    for &(z, _) in nodes {
        let u = z * z.exp();
        if let Some(p) = prev {
            if (p.im > 0.0) != (u.im > 0.0) || u.im == 0.0 {
                let w = if u.im != p.im { p.im / (p.im - u.im) } else { 0.0 };
                let cross = p.re + w * (u.re - p.re);
                if cross < -1.0 / E {
                    return Err(Error::Contour(format!(
                        "Lambert continuity break: ze^z crosses the cut at {cross:.6} near z = {z}"
                    )));
                }
            }
        }
        prev = Some(u);
        out.push(lambert_w0(u)?);
    }
    for w in out.windows(2) {
        if (w[1] - w[0]).norm() > 0.5 {
            return Err(Error::Contour(format!("Lambert continuity break between {} and {}", w[0], w[1])));
        }
    }
    Ok(out)
}

/// Ray length beyond which exp(`lmag`) stays `budget` below its running peak
/// for three consecutive steps.
fn reach<F: Fn(f64) -> f64>(lmag: F, step: f64, budget: f64, min: f64) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut quiet = 0;
    let mut q = 0.0;
    loop {
        let v = lmag(q);
        if v > peak {
            peak = v;
        }
        if v < peak - budget || v == f64::NEG_INFINITY {
            quiet += 1;
        } else {
            quiet = 0;
        }
        if (quiet >= 3 && q >= min) || q > 4000.0 {
            return q;
        }
        q += step;
    }
}

fn x_rule(len: f64) -> (Vec<f64>, Vec<f64>) {
    let panels = (len / PANEL).ceil().max(1.0) as usize;
    quad::composite(0.0, panels as f64 * PANEL, panels, PANEL_ORDER)
}

// ---------------------------------------------------------------------------
// α_t and β_t
// ---------------------------------------------------------------------------

/// (ω + ln(1-ω), ω + ω²/2 + ln(1-ω)) without cancellation near ω = 0.
fn log_tails(w: Complex64) -> (Complex64, Complex64) {
    if w.norm() < 0.3 {
        let mut l3 = Complex64::new(0.0, 0.0);
        let mut p = w * w * w;
        for k in 3..64 {
            l3 -= p / k as f64;
            p *= w;
        }
        (l3 - w * w / 2.0, l3)
    } else {
        let l = (Complex64::new(1.0, 0.0) - w).ln();
        (w + l, w + w * w / 2.0 + l)
    }
}

/// Exponent of α_t at w = -1 + ω: t(w²-1)/2 + ξ(w+1) + n ln(-w).
fn alpha_exponent(t: f64, r: f64, s: f64, w: Complex64) -> Complex64 {
    let (l2, l3) = log_tails(w);
    t * l3 + 2.0 * t.powf(2.0 / 3.0) * r * l2 + t.cbrt() * s * w
}

/// α_t(r, s) and β_t(r, s) by contour quadrature. α runs over the wedge
/// through -1 at angle 2π/3, β over the wedge through -1 at angle π/5 opening
/// to the right (clockwise around 0). Both are written in ω = w + 1 and
/// sampled in u = t^{1/3}ω, where the integrands have a t-independent shape.
pub fn alpha_beta(t: f64, r: f64, s: f64) -> Result<(f64, f64)> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("t must be positive, got {t}")));
    }
    if !(r.is_finite() && s.is_finite()) {
        return Err(Error::NonFinite(format!("alpha_beta at r={r}, s={s}")));
    }
    let n = t + 2.0 * t.powf(2.0 / 3.0) * r;
    if n < 0.0 {
        return Err(Error::Domain(format!("index t + 2t^(2/3)r = {n} is negative")));
    }
    let a = wedge_integral(t, ALPHA_ANGLE, &[], |w| alpha_exponent(t, r, s, w))?;
    let b = -wedge_integral(t, BETA_ANGLE, &[], |w| -alpha_exponent(t, r, s, w))?;
    Ok((a, b))
}

/// Size (as a logarithm) of a residue term beyond which the real-line
/// formulas lose digits and the loop integrals are used instead.
const CANCELLATION_LOG: f64 = 3.0;
const ALPHA_ANGLE: f64 = 2.0 * PI / 3.0;
const BETA_ANGLE: f64 = PI / 5.0;

/// (2πi)⁻¹ ∫ exp(g(ω)) du over the wedge u = t^{1/3}ω from ∞e^{-iθ} to ∞e^{iθ};
/// `poles` are extra singular points in the u-plane.
fn wedge_integral<G: Fn(Complex64) -> Complex64>(t: f64, angle: f64, poles: &[f64], g: G) -> Result<f64> {
    let t13 = t.cbrt();
    let dir = Complex64::from_polar(1.0, angle);
    let lmag = |u: f64| g(dir * u / t13).re;
    let len = reach(lmag, PANEL, CONTOUR_BUDGET, 2.0);
    let spec = ContourSpec { family: ContourFamily::Wedge { vertex: 0.0, angle }, order: PANEL_ORDER };
    let nodes = spec.nodes(PANEL, len)?;
    // w = 0 sits at ω = 1, i.e. u = t^{1/3}.
    let mut all = vec![Complex64::new(t13, 0.0)];
    all.extend(poles.iter().map(|&p| Complex64::new(p, 0.0)));
    check_poles(&nodes, &all)?;
    let vals: Vec<Complex64> = nodes.iter().map(|&(u, _)| g(u / t13)).collect();
    let peak = vals.iter().map(|v| v.re).fold(f64::NEG_INFINITY, f64::max);
    let mut acc = Complex64::new(0.0, 0.0);
    let mut mass = 0.0;
    for ((_, du), v) in nodes.iter().zip(&vals) {
        let term = du * (v - peak).exp();
        mass += term.norm();
        acc += term;
    }
    let z = acc / Complex64::new(0.0, 2.0 * PI);
    let re = mul_exp(z.re, peak);
    let im = mul_exp(z.im, peak);
    let floor = mul_exp(1e-6 * mass / (2.0 * PI), peak);
    if !(im.abs() <= 1e-9 * (re.abs() + floor)) {
        return Err(Error::Contour(format!("imaginary residue {im:e} against value {re:e}")));
    }
    if !re.is_finite() {
        return Err(Error::NonFinite(format!("wedge integral at angle {angle}")));
    }
    Ok(re)
}

/// α_t at an integer index in closed form, as (sign, log).
fn ln_alpha(t: f64, n: i64, xi: f64) -> Sl {
    if n < 0 {
        return ZERO;
    }
    let (_, h) = ln_hermite_pair(n as usize, xi / t.sqrt());
    (h.0, t.ln() / 3.0 + xi - 0.5 * t - 0.5 * n as f64 * t.ln() + h.1 + ln_gauss(t, xi))
}

/// β_t at an integer index in closed form, as (sign, log).
fn ln_beta(t: f64, n: i64, xi: f64) -> Sl {
    if n <= 0 {
        return ZERO;
    }
    let (c, _) = ln_coef_pair(t, n - 1, xi);
    (parity(n) * c.0, t.ln() / 3.0 + 0.5 * t - xi + c.1)
}

/// α_t(r, s) for integer index n = t + 2t^{2/3}r, from the Hermite form.
pub fn alpha_hermite(t: f64, n: i64, s: f64) -> f64 {
    sl_value(ln_alpha(t, n, t + n as f64 + t.cbrt() * s))
}

/// β_t(r, s) for integer index n = t + 2t^{2/3}r, from the Hermite form.
pub fn beta_hermite(t: f64, n: i64, s: f64) -> f64 {
    sl_value(ln_beta(t, n, t + n as f64 + t.cbrt() * s))
}

// ---------------------------------------------------------------------------
// Kernels
// ---------------------------------------------------------------------------

/// Everything needed to evaluate one finite-time kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiniteTimeKernelSpec {
    pub flavor: Flavor,
    pub t: f64,
    /// Offset ε of the line iℝ - ε in the stationary kernels, ε = min(λ, 1)/2.
    /// The Hermite reduction makes the kernels independent of it; it is kept
    /// as provenance.
    pub epsilon: f64,
    /// Contour of the flat kernel.
    pub flat_contour: ContourSpec,
    /// Conjugation rate κ in units of s: the determinant is evaluated for
    /// e^{-κ s1} K(s1, s2) e^{κ s2}.
    pub kappa: f64,
}

impl FiniteTimeKernelSpec {
    pub fn new(flavor: Flavor, t: f64) -> Result<Self> {
        flavor.validate()?;
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Domain(format!("t must be positive and finite, got {t}")));
        }
        let t13 = t.cbrt();
        let mut epsilon = 0.5;
        let kappa = match flavor {
            Flavor::Packed | Flavor::HalfFlat | Flavor::Flat => 0.0,
            Flavor::Stat { lambda, rho } => {
                if !(rho > 0.0) {
                    return Err(Error::Domain(format!("stat kernel needs rho > 0, got {rho}")));
                }
                if !(lambda - rho >= STAT_GAP_FLOOR) {
                    return Err(Error::Domain(format!(
                        "stat kernel needs lambda - rho >= {STAT_GAP_FLOOR}, got {}; use the finite-step limit",
                        lambda - rho
                    )));
                }
                epsilon = lambda.min(1.0) / 2.0;
                window_rate((1.0 - lambda) * t13, (1.0 - rho) * t13)
            }
            Flavor::HalfStat { lambda } => {
                epsilon = lambda.min(1.0) / 2.0;
                window_rate((1.0 - lambda) * t13, t13)
            }
            Flavor::StatFlat { rho } => {
                if !(rho > 0.0) {
                    return Err(Error::Domain(format!("stat-flat kernel needs rho > 0, got {rho}")));
                }
                let hi = (1.0 - rho) * t13;
                if hi > 1.0 {
                    0.5
                } else {
                    hi - 0.5
                }
            }
        };
        let flat_contour = ContourSpec {
            family: ContourFamily::Wedge { vertex: -1.0 - (0.2f64).min(1.0 / t13), angle: 3.0 * PI / 5.0 },
            order: PANEL_ORDER,
        };
        Ok(Self { flavor, t, epsilon, flat_contour, kappa })
    }

    /// Smallest decay rate in s of the conjugated kernel, which sets the
    /// scale of the semi-infinite map.
    fn decay_rate(&self) -> f64 {
        let t13 = self.t.cbrt();
        match self.flavor {
            Flavor::Stat { lambda, rho } => {
                (self.kappa - (1.0 - lambda) * t13).min((1.0 - rho) * t13 - self.kappa).min(t13 - self.kappa)
            }
            Flavor::HalfStat { lambda } => (self.kappa - (1.0 - lambda) * t13).min(t13 - self.kappa),
            Flavor::StatFlat { rho } => ((1.0 - rho) * t13 - self.kappa).min(t13 - self.kappa),
            _ => f64::INFINITY,
        }
    }

    /// Minimal index admitted by the flavor's formula.
    pub fn min_index(&self) -> Option<i64> {
        match self.flavor {
            Flavor::Packed | Flavor::HalfFlat | Flavor::StatFlat { .. } => Some(1),
            Flavor::Stat { .. } | Flavor::HalfStat { .. } => Some(0),
            Flavor::Flat => None,
        }
    }

    fn check_index(&self, n: i64) -> Result<()> {
        match self.min_index() {
            Some(m) if n < m => Err(Error::IndexUnderflow(format!(
                "{} kernel needs indices >= {m}, got {n}",
                self.flavor.name()
            ))),
            _ => Ok(()),
        }
    }

    fn xi(&self, n: i64, s: f64) -> f64 {
        self.t + n as f64 + self.t.cbrt() * s
    }

    fn s_of(&self, n: i64, xi: f64) -> f64 {
        (xi - self.t - n as f64) / self.t.cbrt()
    }

    /// Conjugation rate of the block at index n. Packed blocks are conjugated
    /// at the rate (1 - √(n/t))t^{1/3}, so that both factors of K₀ decay in s
    /// also away from the edge; other flavors use the spec's κ.
    fn point_rate(&self, n: i64) -> f64 {
        match self.flavor {
            Flavor::Packed => self.kappa + (1.0 - (n as f64 / self.t).sqrt()) * self.t.cbrt(),
            _ => self.kappa,
        }
    }

    /// Conjugated rescaled kernel between two node sets (in s).
    fn block(&self, n1: i64, s1: &[f64], n2: i64, s2: &[f64]) -> Result<DMatrix<f64>> {
        let mut m = self.smooth_block(n1, s1, n2, s2)?;
        if n2 > n1 {
            m += self.phi_part(n1, s1, self.point_rate(n1), n2, s2, self.point_rate(n2));
        }
        Ok(m)
    }

    /// Whether the φ term between n1 < n2 jumps (or kinks) on ξ1 = ξ2.
    fn phi_has_cut(&self, n1: i64) -> bool {
        !matches!((self.flavor, n1), (Flavor::Stat { .. }, 0))
    }

    /// The kernel without its φ term.
    fn smooth_block(&self, n1: i64, s1: &[f64], n2: i64, s2: &[f64]) -> Result<DMatrix<f64>> {
        let k = self.kappa;
        let (k1, k2) = (self.point_rate(n1), self.point_rate(n2));
        let mut m = DMatrix::zeros(s1.len(), s2.len());
        match self.flavor {
            Flavor::Packed => m += self.k0_part(n1, s1, k1, n2, s2, k2),
            Flavor::Stat { lambda, rho } => {
                m += self.k0_part(n1, s1, k, n2, s2, k);
                let f = self.f_part(n1, s1, lambda, k)?;
                let g = self.g_part(n2, s2, rho, k)?;
                m += (lambda - rho) * &f * g.transpose();
            }
            Flavor::HalfStat { lambda } => {
                m += self.k0_part(n1, s1, k, n2, s2, k);
                let f = self.f_part(n1, s1, lambda, k)?;
                let g = nalgebra::DVector::from_iterator(
                    s2.len(),
                    s2.iter().map(|&s| {
                        let b = ln_beta(self.t, n2 + 1, self.xi(n2, s));
                        -mul_exp(b.0, b.1 + k * s)
                    }),
                );
                m += lambda * &f * g.transpose();
            }
            Flavor::HalfFlat => m += self.k1_part(n1, s1, n2, s2),
            Flavor::StatFlat { rho } => {
                m += self.k1_part(n1, s1, n2, s2);
                m += self.stat_flat_part(n1, s1, n2, s2, rho)?;
            }
            Flavor::Flat => m += self.flat_part(n1, s1, n2, s2)?,
        }
        Ok(m)
    }

    /// -t^{1/3}e^{ξ1-ξ2}φ_{n1,n2}(ξ1,ξ2)·e^{-κ(s1-s2)} for n2 > n1.
    fn phi_part(&self, n1: i64, s1: &[f64], k1: f64, n2: i64, s2: &[f64], k2: f64) -> DMatrix<f64> {
        let t = self.t;
        let lt = t.ln() / 3.0;
        if let (Flavor::Stat { rho, .. }, 0) = (self.flavor, n1) {
            return DMatrix::from_fn(s1.len(), s2.len(), |a, b| {
                let (x1, x2) = (self.xi(n1, s1[a]), self.xi(n2, s2[b]));
                -(lt + x1 - x2 - n2 as f64 * rho.ln() + rho * x2 - k1 * s1[a] + k2 * s2[b]).exp()
            });
        }
        let m = (n2 - n1 - 1) as usize;
        let lf = ln_fact(m);
        DMatrix::from_fn(s1.len(), s2.len(), |a, b| {
            let (x1, x2) = (self.xi(n1, s1[a]), self.xi(n2, s2[b]));
            if x1 > x2 {
                return 0.0;
            }
            let d = x2 - x1;
            let pw = if m == 0 { 0.0 } else if d > 0.0 { m as f64 * d.ln() } else { return 0.0 };
            -(lt - d + pw - lf - k1 * s1[a] + k2 * s2[b]).exp()
        })
    }

    /// -∫₀^∞ α(n1, s1+x) β(n2, s2+x) dx, conjugated.
    fn k0_part(&self, n1: i64, s1: &[f64], k1: f64, n2: i64, s2: &[f64], k2: f64) -> DMatrix<f64> {
        let t = self.t;
        if n2 <= 0 {
            return DMatrix::zeros(s1.len(), s2.len());
        }
        let (m1, m2) = (min_of(s1), min_of(s2));
        let len = reach(
            |x| ln_alpha(t, n1, self.xi(n1, m1 + x)).1 + ln_beta(t, n2, self.xi(n2, m2 + x)).1,
            PANEL,
            TAIL_BUDGET,
            2.0,
        );
        let (xs, ws) = x_rule(len);
        let l = scaled(s1.len(), xs.len(), |a, q| {
            let v = ln_alpha(t, n1, self.xi(n1, s1[a] + xs[q]));
            (v.0, v.1 + ws[q].ln() - k1 * s1[a])
        });
        let r = scaled(s2.len(), xs.len(), |b, q| {
            let v = ln_beta(t, n2, self.xi(n2, s2[b] + xs[q]));
            (v.0, v.1 + k2 * s2[b])
        });
        -combine(&l, &r)
    }

    /// e^{ξ-t/2}𝒻(n, ξ)·e^{-κs} with 𝒻 = e^{tλ²/2-ξλ}λ^n - ∫₀^∞ e^{λy}A(n, ξ+y) dy.
    /// Where the first term exceeds e^3 the two terms nearly cancel; 𝒻 is then
    /// the single integral (2πi)⁻¹∫ e^{tw²/2+ξw}(-w)^n/(w+λ) dw over the
    /// steepest-descent wedge of α_t, which has the pole -λ on its left.
    fn f_part(&self, n: i64, s: &[f64], lambda: f64, kappa: f64) -> Result<nalgebra::DVector<f64>> {
        let t = self.t;
        let t13 = t.cbrt();
        let lo = (1.0 - lambda) * t13;
        let r = to_scaled(t, n as f64, 0.0).0;
        let c = -lo;
        let m = min_of(s);
        let len = reach(|x| ln_alpha(t, n, self.xi(n, m + x)).1 + c * x, PANEL, TAIL_BUDGET, 2.0);
        let (xs, ws) = x_rule(len);
        let mut out = nalgebra::DVector::zeros(s.len());
        for (i, &sa) in s.iter().enumerate() {
            let xi = self.xi(n, sa);
            let head = t * (lambda * lambda - 1.0) / 2.0 + xi * (1.0 - lambda) + n as f64 * lambda.ln();
            out[i] = if head > CANCELLATION_LOG && lo <= -1.0 {
                self.f_loop(r, sa, lambda, kappa)?
            } else {
                let tail: f64 = xs
                    .iter()
                    .zip(&ws)
                    .map(|(&x, &w)| {
                        let v = ln_alpha(t, n, self.xi(n, sa + x));
                        w * sl_value((v.0, v.1 + c * x - kappa * sa))
                    })
                    .sum();
                (head - kappa * sa).exp() - tail
            };
        }
        Ok(out)
    }

    /// t^{1/3}e^{t/2-ξ}ℊ(n, ξ)·e^{κs} with ℊ = e^{-tρ²/2+ξρ}ρ^{-n} + ∫₀^∞ e^{-ρy}B(n, ξ+y) dy.
    /// Where the first term exceeds e^3 it is evaluated instead as the loop
    /// integral (2πi)⁻¹∮ e^{-tz²/2-ξz}(-z)^{-n}/(z+ρ) dz around 0 and -ρ on the wedge of β_t.
    fn g_part(&self, n: i64, s: &[f64], rho: f64, kappa: f64) -> Result<nalgebra::DVector<f64>> {
        let t = self.t;
        let t13 = t.cbrt();
        let hi = (1.0 - rho) * t13;
        let lt = t.ln() / 3.0;
        let r = to_scaled(t, n as f64, 0.0).0;
        let c = hi;
        let m = min_of(s);
        let len = reach(|x| ln_beta(t, n, self.xi(n, m + x)).1 + c * x, PANEL, TAIL_BUDGET, 2.0);
        let (xs, ws) = x_rule(len);
        let mut out = nalgebra::DVector::zeros(s.len());
        for (i, &sb) in s.iter().enumerate() {
            let xi = self.xi(n, sb);
            let head = lt + t * (1.0 - rho * rho) / 2.0 - xi * (1.0 - rho) - n as f64 * rho.ln();
            out[i] = if head > CANCELLATION_LOG && hi >= 1.0 {
                self.g_loop(r, sb, rho, kappa)?
            } else {
                let tail: f64 = xs
                    .iter()
                    .zip(&ws)
                    .map(|(&x, &w)| {
                        let v = ln_beta(t, n, self.xi(n, sb + x));
                        w * sl_value((v.0, v.1 + lt + c * x + kappa * sb))
                    })
                    .sum();
                (head + kappa * sb).exp() + tail
            };
        }
        Ok(out)
    }

    /// The loop form of [`Self::f_part`] at scaled point (r, s); needs λ > 1.
    fn f_loop(&self, r: f64, s: f64, lambda: f64, kappa: f64) -> Result<f64> {
        let t = self.t;
        let t13 = t.cbrt();
        let lo = (1.0 - lambda) * t13;
        wedge_integral(t, ALPHA_ANGLE, &[lo], |w| alpha_exponent(t, r, s, w) - (w * t13 - lo).ln() - kappa * s)
    }

    /// The loop form of [`Self::g_part`] at scaled point (r, s); needs ρ < 1.
    fn g_loop(&self, r: f64, s: f64, rho: f64, kappa: f64) -> Result<f64> {
        let t = self.t;
        let t13 = t.cbrt();
        let hi = (1.0 - rho) * t13;
        let v = wedge_integral(t, BETA_ANGLE, &[hi], |w| -alpha_exponent(t, r, s, w) - (w * t13 - hi).ln() + kappa * s)?;
        Ok(-t13 * v)
    }

    /// The loop form of t^{1/3}e^{t/2-ξ}(Φ̂₍₁₎ + Φ̂₍₂₎)·e^{κs}; needs ρ < 1.
    fn stat_flat_loop(&self, r: f64, s: f64, rho: f64, kappa: f64) -> Result<f64> {
        let t = self.t;
        let hi = (1.0 - rho) * t.cbrt();
        let v = wedge_integral(t, BETA_ANGLE, &[hi], |w| {
            let z = w - 1.0;
            let h = (rho * w).ln() - (rho + z * (rho + z).exp()).ln();
            -alpha_exponent(t, r, s, w) + z + h + kappa * s
        })?;
        Ok(-v)
    }

    /// The half-flat part K₁ as the finite sum Σ_{k<n2} Ψ_k(n1, ξ1) Φ_k(n2, ξ2)
    /// obtained by expanding 1/(we^w - ze^z) in powers of ze^z/(we^w).
    fn k1_part(&self, n1: i64, s1: &[f64], n2: i64, s2: &[f64]) -> DMatrix<f64> {
        let t = self.t;
        let k = self.kappa;
        let lt = t.ln() / 3.0;
        let terms = n2.max(0) as usize;
        if terms == 0 {
            return DMatrix::zeros(s1.len(), s2.len());
        }
        let l = scaled(s1.len(), terms, |a, q| {
            let x1 = self.xi(n1, s1[a]);
            let kk = q as i64;
            let j = ln_j(t, n1 - kk - 1, x1 - kk as f64 - 1.0);
            (parity(n1) * j.0, x1 - 0.5 * t + j.1 - k * s1[a])
        });
        let r = scaled(s2.len(), terms, |b, q| {
            let x2 = self.xi(n2, s2[b]);
            let kk = q as i64;
            let (cm, cm1) = ln_coef_pair(t, n2 - kk - 1, x2 - kk as f64 - 1.0);
            let c = sl_sum(&[cm, cm1]);
            (parity(n2) * c.0, lt + 0.5 * t - x2 + c.1 + k * s2[b])
        });
        combine(&l, &r)
    }

    /// Ψ^{n1}_{n1-1}(ξ1)(Φ̂₍₁₎ + Φ̂₍₂₎)(ξ2) of the stationary-flat kernel.
    /// Φ̂₍₁₎ is the residue at 0 and Φ̂₍₂₎ the residue at -ρ of
    /// e^{-tz²/2-(ξ-1)z}(-z)^{-n}ρ(1+z)/(ρ+ze^{ρ+z}); for ρ ≤ 1 - t^{-1/3}, where the
    /// two nearly cancel, both are taken at once by a loop on the wedge of β_t.
    fn stat_flat_part(&self, n1: i64, s1: &[f64], n2: i64, s2: &[f64], rho: f64) -> Result<DMatrix<f64>> {
        let t = self.t;
        let k = self.kappa;
        let h = stat_flat_series(rho, n2.max(1) as usize)?;
        let u: Vec<f64> = s1
            .iter()
            .map(|&sa| {
                let x1 = self.xi(n1, sa);
                let a = ln_j(t, n1 - 1, x1 - 1.0);
                mul_exp(parity(n1 - 1) * a.0, x1 - 0.5 * t + a.1 - k * sa)
            })
            .collect();
        let t13 = t.cbrt();
        let hi = (1.0 - rho) * t13;
        let r = to_scaled(t, n2 as f64, 0.0).0;
        let mut v = Vec::with_capacity(s2.len());
        for &sb in s2 {
            let x2 = self.xi(n2, sb);
            let lt = t.ln() / 3.0 + 0.5 * t - x2;
            let second = (1.0 - n2 as f64) * rho.ln() - t * rho * rho / 2.0 + rho * (x2 - 1.0);
            if lt + second > CANCELLATION_LOG && hi >= 1.0 {
                v.push(self.stat_flat_loop(r, sb, rho, k)?);
                continue;
            }
            let mut terms: Vec<Sl> = (0..n2.max(0))
                .map(|j| {
                    let (c, _) = ln_coef_pair(t, n2 - 1 - j, x2 - 1.0);
                    let hj = h[j as usize];
                    (parity(n2) * c.0 * hj.signum(), c.1 + hj.abs().ln())
                })
                .collect();
            terms.push((1.0, second));
            let tot = sl_sum(&terms);
            v.push(mul_exp(tot.0, lt + tot.1 + k * sb));
        }
        Ok(DMatrix::from_fn(s1.len(), s2.len(), |a, b| u[a] * v[b]))
    }

    /// The flat kernel's contour part over Γ₋ in separated form.
    fn flat_part(&self, n1: i64, s1: &[f64], n2: i64, s2: &[f64]) -> Result<DMatrix<f64>> {
        let t = self.t;
        let k = self.kappa;
        let (m1, m2) = (min_of(s1), min_of(s2));
        let (x1m, x2m) = (self.xi(n1, m1), self.xi(n2, m2));
        let (vertex, angle) = match self.flat_contour.family {
            ContourFamily::Wedge { vertex, angle } => (vertex, angle),
            other => return Err(Error::Contour(format!("flat kernel needs a wedge contour, got {other:?}"))),
        };
        let left = |z: Complex64, x1: f64| x1 * (1.0 + z) + t * (z * z - 1.0) / 2.0 + n1 as f64 * (-z).ln();
        let right = |p: Complex64, x2: f64| -x2 * (1.0 + p) - t * (p * p - 1.0) / 2.0 - n2 as f64 * (-p).ln();
        let dir = Complex64::from_polar(1.0, angle);
        let v = Complex64::new(vertex, 0.0);
        let step = (0.25f64).min(0.5 / t.cbrt());
        let lmag = |q: f64| {
            let z = v + dir * q;
            match lambert_w0(z * z.exp()) {
                Ok(p) => (left(z, x1m) + right(p, x2m)).re,
                Err(_) => f64::NEG_INFINITY,
            }
        };
        let len = reach(lmag, step, CONTOUR_BUDGET, 2.0);
        let spec = ContourSpec { family: self.flat_contour.family, order: self.flat_contour.order };
        let nodes = spec.nodes(step, len)?;
        let phis = lambert_along(&nodes)?;
        let poles: Vec<Complex64> = vec![Complex64::new(0.0, 0.0)];
        check_poles(&nodes, &poles)?;
        let image: Vec<Node> = phis.iter().map(|&p| (p, Complex64::new(0.0, 0.0))).collect();
        check_poles(&image, &poles)?;
        let lt = t.ln() / 3.0;
        let q = nodes.len();
        let mut lm = DMatrix::<Complex64>::zeros(s1.len(), q);
        let mut ls = vec![0.0; s1.len()];
        for a in 0..s1.len() {
            let x1 = self.xi(n1, s1[a]);
            let vals: Vec<Complex64> = nodes.iter().map(|&(z, _)| left(z, x1) - k * s1[a]).collect();
            let mx = vals.iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max);
            ls[a] = mx;
            for (j, c) in vals.iter().enumerate() {
                lm[(a, j)] = (c - mx).exp();
            }
        }
        let mut rm = DMatrix::<Complex64>::zeros(s2.len(), q);
        let mut rs = vec![0.0; s2.len()];
        let twopii = Complex64::new(0.0, 2.0 * PI);
        for b in 0..s2.len() {
            let x2 = self.xi(n2, s2[b]);
            let vals: Vec<Complex64> = phis.iter().map(|&p| right(p, x2) + lt + k * s2[b]).collect();
            let mx = vals.iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max);
            rs[b] = mx;
            for (j, c) in vals.iter().enumerate() {
                rm[(b, j)] = (c - mx).exp() * nodes[j].1 / twopii;
            }
        }
        let prod = &lm * rm.transpose();
        Ok(DMatrix::from_fn(s1.len(), s2.len(), |a, b| mul_exp(prod[(a, b)].re, ls[a] + rs[b])))
    }
}

/// The window (lo, hi) of admissible conjugation rates: κ sits half a unit
/// inside it when the window allows, and at its middle otherwise.
fn window_rate(lo: f64, hi: f64) -> f64 {
    let margin = (0.5f64).min((hi - lo) / 2.0);
    if lo < 0.0 && hi > 0.0 {
        (0.5f64).min(hi / 2.0)
    } else if lo >= 0.0 {
        lo + margin
    } else {
        hi - margin
    }
}

/// Taylor coefficients h_0..h_{m-1} of ρ(1+z)/(ρ + z e^{ρ+z}) at 0.
fn stat_flat_series(rho: f64, m: usize) -> Result<Vec<f64>> {
    let er = rho.exp();
    let d = |i: usize| if i == 0 { rho } else { er * (-ln_fact(i - 1)).exp() };
    let mut h = Vec::with_capacity(m);
    for j in 0..m {
        let nj = match j {
            0 | 1 => rho,
            _ => 0.0,
        };
        let acc: f64 = (1..=j).map(|i| d(i) * h[j - i]).sum();
        let v = (nj - acc) / rho;
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("series coefficient {j} for rho = {rho}")));
        }
        h.push(v);
    }
    Ok(h)
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Rescaled kernel t^{1/3}e^{ξ1-ξ2}K(n1, ξ1; n2, ξ2) of the spec's flavor.
pub fn kernel_finite(spec: &FiniteTimeKernelSpec, n1: i64, xi1: f64, n2: i64, xi2: f64) -> Result<f64> {
    spec.check_index(n1)?;
    spec.check_index(n2)?;
    if !(xi1.is_finite() && xi2.is_finite()) {
        return Err(Error::NonFinite(format!("kernel at xi1={xi1}, xi2={xi2}")));
    }
    let plain = FiniteTimeKernelSpec { kappa: 0.0, ..*spec };
    let (s1, s2) = (plain.s_of(n1, xi1), plain.s_of(n2, xi2));
    let m = plain.block(n1, &[s1], n2, &[s2])?;
    let v = mul_exp(m[(0, 0)], plain.point_rate(n1) * s1 - plain.point_rate(n2) * s2);
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("{} kernel at ({n1}, {xi1}; {n2}, {xi2})", spec.flavor.name())));
    }
    Ok(v)
}

/// Quadrature settings of the finite-time determinants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiniteOptions {
    /// Nyström nodes per index.
    pub order: usize,
    /// Scale of the map of (a, ∞) onto the unit interval, in units of s.
    pub lcut: f64,
}

impl Default for FiniteOptions {
    fn default() -> Self {
        Self { order: DEFAULT_ORDER, lcut: DEFAULT_LCUT }
    }
}

/// Slack allowed outside [0, 1] before a probability is reported as an error.
const PROBABILITY_SLACK: f64 = 1e-5;

fn clip(v: f64) -> Result<f64> {
    if !(-PROBABILITY_SLACK..=1.0 + PROBABILITY_SLACK).contains(&v) {
        return Err(Error::Domain(format!("probability {v} outside [0, 1]; quadrature not resolved")));
    }
    Ok(v.clamp(0.0, 1.0))
}

impl FiniteTimeKernelSpec {
    fn determinant(&self, n_list: &[i64], s_list: &[f64], opts: FiniteOptions, h: f64) -> Result<f64> {
        let t = self.t;
        let points: Vec<(f64, f64)> =
            n_list.iter().zip(s_list).map(|(&n, &s)| (to_scaled(t, n as f64, 0.0).0, s + h)).collect();
        let rate = match self.flavor {
            Flavor::Packed => n_list.iter().map(|&n| (n as f64 / t).sqrt() * t.cbrt()).fold(f64::INFINITY, f64::min),
            _ => self.decay_rate(),
        };
        let lcut = if rate.is_finite() { opts.lcut.max(2.0 / rate) } else { opts.lcut };
        let rules: Vec<PanelRule> = (0..n_list.len())
            .map(|i| {
                let s0 = points[i].1;
                let cuts: Vec<f64> = (i + 1..n_list.len())
                    .filter(|_| self.phi_has_cut(n_list[i]))
                    .map(|j| points[j].1 + (n_list[j] - n_list[i]) as f64 / t.cbrt())
                    .filter(|&c| c > s0)
                    .collect();
                PanelRule::new(s0, lcut, &cuts, opts.order)
            })
            .collect();
        let domain = MultiPointDomain::from_blocks(points, rules.iter().map(|r| r.rule.clone()).collect(), lcut);
        let ny = Nystrom::assemble_blocks(&domain, |bi, bj, xs, ys| {
            let (n1, n2) = (n_list[bi], n_list[bj]);
            let mut m = self.smooth_block(n1, xs, n2, ys)?;
            if n2 > n1 {
                m += &if self.phi_has_cut(n1) {
                    self.phi_product(n1, xs, n2, &rules[bj])
                } else {
                    self.phi_part(n1, xs, self.point_rate(n1), n2, ys, self.point_rate(n2))
                };
            }
            Ok(m)
        })?;
        let scale = ny.matrix.amax();
        if scale > MAX_ENTRY {
            return Err(Error::Domain(format!(
                "{} discretization badly scaled: entry of size {scale:e}",
                self.flavor.name()
            )));
        }
        Ok(ny.det())
    }

    /// The φ term against the nodes of `rule` by product integration: the
    /// entry for row x and column node y_b is ∫ φ(x, y) ℓ_b(y) dy / w_b, with
    /// ℓ_b the Lagrange basis of the panel holding y_b, integrated exactly
    /// across the cut y = x - (n2 - n1)/t^{1/3}.
    fn phi_product(&self, n1: i64, s1: &[f64], n2: i64, rule: &PanelRule) -> DMatrix<f64> {
        let (k1, k2) = (self.point_rate(n1), self.point_rate(n2));
        let ys = &rule.rule.nodes;
        let mut m = self.phi_part(n1, s1, k1, n2, ys, k2);
        let d = (n2 - n1) as f64 / self.t.cbrt();
        for (a, &x) in s1.iter().enumerate() {
            let cut = x - d;
            if cut <= rule.s0 {
                continue;
            }
            let u_cut = rule.to_u(cut);
            for p in &rule.panels {
                if p.hi <= u_cut {
                    for b in p.first..p.first + p.len {
                        m[(a, b)] = 0.0;
                    }
                } else if p.lo < u_cut {
                    let (zs, vs) = quad::composite(u_cut, p.hi, 1, 2 * p.len);
                    let ss: Vec<f64> = zs.iter().map(|&z| rule.to_s(z)).collect();
                    let f = self.phi_part(n1, &[x], k1, n2, &ss, k2);
                    let us = &rule.u[p.first..p.first + p.len];
                    let bary = barycentric_weights(us);
                    let mut acc = vec![0.0; p.len];
                    for (q, (&z, &v)) in zs.iter().zip(&vs).enumerate() {
                        let g = f[(0, q)] * v * rule.jacobian(z);
                        for (b, l) in lagrange_basis(us, &bary, z).into_iter().enumerate() {
                            acc[b] += g * l;
                        }
                    }
                    for (b, v) in acc.into_iter().enumerate() {
                        m[(a, p.first + b)] = v / rule.rule.weights[p.first + b];
                    }
                }
            }
        }
        m
    }
}

/// One Gauss–Legendre panel of a [`PanelRule`], in the map variable.
#[derive(Debug, Clone)]
struct Panel {
    lo: f64,
    hi: f64,
    first: usize,
    len: usize,
}

/// Composite Gauss–Legendre rule in u ∈ (0, 1) mapped to (s0, ∞) by
/// s = s0 + L u/(1 - u), with panel edges at the images of `cuts`. Without
/// cuts it is the single `order`-point rule.
#[derive(Debug, Clone)]
struct PanelRule {
    s0: f64,
    l: f64,
    u: Vec<f64>,
    panels: Vec<Panel>,
    rule: QuadratureRule,
}

/// Fewest nodes on a panel of a composite rule.
const MIN_PANEL_NODES: usize = 12;

impl PanelRule {
    fn new(s0: f64, l: f64, cuts: &[f64], order: usize) -> Self {
        let mut edges = vec![0.0];
        let mut inner: Vec<f64> = cuts.iter().map(|&c| (c - s0) / (c - s0 + l)).collect();
        inner.sort_by(|a, b| a.total_cmp(b));
        for u in inner {
            if u - edges[edges.len() - 1] > 1e-9 && 1.0 - u > 1e-9 {
                edges.push(u);
            }
        }
        edges.push(1.0);
        let mut u = Vec::new();
        let mut w = Vec::new();
        let mut panels = Vec::new();
        for e in edges.windows(2) {
            let len = if edges.len() == 2 { order } else { ((order as f64 * (e[1] - e[0])).round() as usize).max(MIN_PANEL_NODES) };
            panels.push(Panel { lo: e[0], hi: e[1], first: u.len(), len });
            quad::push_panel(e[0], e[1], len, &mut u, &mut w);
        }
        let nodes = u.iter().map(|&x| s0 + l * x / (1.0 - x)).collect();
        let weights = u.iter().zip(&w).map(|(&x, &wi)| wi * l / ((1.0 - x) * (1.0 - x))).collect();
        let rule = QuadratureRule { nodes, weights, interval: (s0, f64::INFINITY) };
        Self { s0, l, u, panels, rule }
    }

    fn to_u(&self, s: f64) -> f64 {
        (s - self.s0) / (s - self.s0 + self.l)
    }

    fn to_s(&self, u: f64) -> f64 {
        self.s0 + self.l * u / (1.0 - u)
    }

    fn jacobian(&self, u: f64) -> f64 {
        self.l / ((1.0 - u) * (1.0 - u))
    }
}

fn barycentric_weights(nodes: &[f64]) -> Vec<f64> {
    (0..nodes.len())
        .map(|b| 1.0 / nodes.iter().enumerate().filter(|&(c, _)| c != b).map(|(_, &y)| nodes[b] - y).product::<f64>())
        .collect()
}

/// Values at z of the Lagrange basis polynomials of `nodes`.
fn lagrange_basis(nodes: &[f64], bary: &[f64], z: f64) -> Vec<f64> {
    if let Some(k) = nodes.iter().position(|&y| y == z) {
        let mut v = vec![0.0; nodes.len()];
        v[k] = 1.0;
        return v;
    }
    let terms: Vec<f64> = nodes.iter().zip(bary).map(|(&y, &l)| l / (z - y)).collect();
    let total: f64 = terms.iter().sum();
    terms.into_iter().map(|v| v / total).collect()
}

/// P(x_n(t) ≤ a_n for all n in n_list) for the flavor's initial data.
pub fn finite_t_cdf(flavor: Flavor, t: f64, n_list: &[i64], a_list: &[f64], opts: FiniteOptions) -> Result<f64> {
    let spec = FiniteTimeKernelSpec::new(flavor, t)?;
    finite_t_cdf_with(&spec, n_list, a_list, opts)
}

/// As [`finite_t_cdf`] for an explicit kernel specification.
pub fn finite_t_cdf_with(spec: &FiniteTimeKernelSpec, n_list: &[i64], a_list: &[f64], opts: FiniteOptions) -> Result<f64> {
    if n_list.is_empty() {
        return Err(Error::Domain("at least one index is required".into()));
    }
    if n_list.len() != a_list.len() {
        return Err(Error::RangeMismatch(format!("{} indices against {} levels", n_list.len(), a_list.len())));
    }
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("indices must be strictly increasing".into()));
    }
    if a_list.iter().any(|a| !a.is_finite()) {
        return Err(Error::NonFinite("levels must be finite".into()));
    }
    for &n in n_list {
        spec.check_index(n)?;
    }
    let s_list: Vec<f64> = n_list.iter().zip(a_list).map(|(&n, &a)| spec.s_of(n, a)).collect();
    match spec.flavor {
        Flavor::Stat { lambda, rho } => {
            let delta = (lambda - rho) * spec.t.cbrt();
            let det = |h: f64| spec.determinant(n_list, &s_list, opts, h);
            let (d, gap) = quad::central_derivative(det, DERIVATIVE_STEP)?;
            if !(gap <= DERIVATIVE_TOL) {
                return Err(Error::Derivative(gap));
            }
            clip(det(0.0)? + d / delta)
        }
        _ => clip(spec.determinant(n_list, &s_list, opts, 0.0)?),
    }
}

// ---------------------------------------------------------------------------
// Transition density
// ---------------------------------------------------------------------------

/// Transition density r_t(ζ, ξ) of N ≤ 4 one-sided reflected Brownian
/// motions with drifts μ, started from ζ.
pub fn transition_density(zeta: &[f64], xi: &[f64], t: f64, mu: &[f64]) -> Result<f64> {
    let n = zeta.len();
    if n == 0 || n > MAX_DENSITY_N {
        return Err(Error::Domain(format!("transition density needs 1 <= N <= {MAX_DENSITY_N}, got {n}")));
    }
    if xi.len() != n || mu.len() != n {
        return Err(Error::RangeMismatch(format!("N = {n} with {} positions and {} drifts", xi.len(), mu.len())));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("t must be positive, got {t}")));
    }
    if zeta.iter().chain(xi).chain(mu).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("transition density arguments".into()));
    }
    if zeta.windows(2).any(|w| w[0] > w[1]) || xi.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Domain("positions must lie in the Weyl chamber x_1 <= ... <= x_N".into()));
    }
    let mut m = DMatrix::zeros(n, n);
    for k in 1..=n {
        for l in 1..=n {
            m[(k - 1, l - 1)] = f_kl(k, l, xi[n - l] - zeta[n - k], t, mu)?;
        }
    }
    let pre: f64 = (0..n).map(|i| mu[i] * (xi[i] - zeta[i]) - t * mu[i] * mu[i] / 2.0).sum();
    Ok(pre.exp() * m.determinant())
}

/// F_{k,l}(ξ, t). The line of integration passes through the Gaussian
/// saddle -ξ/t; poles it leaves on its right are collected by one circle.
fn f_kl(k: usize, l: usize, x: f64, t: f64, mu: &[f64]) -> Result<f64> {
    let n = mu.len();
    // after cancelling common factors only one side keeps any
    let num: Vec<f64> = (l.min(k)..k).map(|i| mu[n - i]).collect();
    let den: Vec<f64> = (k.min(l)..l).map(|i| mu[n - i]).collect();
    let g = |w: Complex64| {
        let mut v = Complex64::new(1.0, 0.0);
        for &m in &num {
            v *= w + m;
        }
        for &m in &den {
            v /= w + m;
        }
        v
    };
    let saddle = -x / t;
    let poles: Vec<f64> = den.iter().map(|&m| -m).collect();
    let (plo, phi) = poles.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &p| (a.min(p), b.max(p)));
    let mut total = 0.0;
    let mut c = saddle;
    if !poles.is_empty() && saddle <= phi + 0.25 {
        let center = 0.5 * (plo + phi);
        let radius = 0.5 * (phi - plo) + (0.5f64).min(1.0 / (x.abs() + t * center.abs() + t.sqrt()));
        c = saddle.min(center - radius - 0.25);
        let circle = ContourSpec { family: ContourFamily::Circle { center, radius }, order: 64 }.nodes(0.0, 0.0)?;
        let shift = t * center * center / 2.0 + x * center;
        let acc: Complex64 = circle.iter().map(|&(w, dw)| (t * w * w / 2.0 + x * w - shift).exp() * g(w) * dw).sum();
        total += mul_exp((acc / Complex64::new(0.0, 2.0 * PI)).re, shift);
    }
    let half = (2.0 * CONTOUR_BUDGET / t).sqrt();
    let rate = (x + t * c).abs() + 1.0;
    let panels = ((half * rate / PI).ceil() as usize).max(4);
    let nodes = ContourSpec { family: ContourFamily::Vertical { c }, order: PANEL_ORDER }.nodes(half / panels as f64, half)?;
    let pole_points: Vec<Complex64> = poles.iter().map(|&p| Complex64::new(p, 0.0)).collect();
    check_poles(&nodes, &pole_points)?;
    let shift = t * c * c / 2.0 + x * c;
    let acc: Complex64 = nodes.iter().map(|&(w, dw)| (t * w * w / 2.0 + x * w - shift).exp() * g(w) * dw).sum();
    total += mul_exp((acc / Complex64::new(0.0, 2.0 * PI)).re, shift);
    if !total.is_finite() {
        return Err(Error::NonFinite(format!("F_{k},{l}({x}, {t})")));
    }
    Ok(total)
}

/// Half-flat K₁ by direct double contour quadrature: w on iℝ - 1, z on a
/// circle around 0 small enough that |ze^z| stays 10% below |we^w| at every
/// node pair. Only usable for small t and indices; serves as a cross-check.
pub fn half_flat_k1_contour(t: f64, n1: i64, xi1: f64, n2: i64, xi2: f64, order: usize) -> Result<f64> {
    let wmin = (-1.0f64).exp();
    let radius = lambert_w0(Complex64::new(wmin / 1.1, 0.0))?.re * 0.999;
    let half = (2.0 * CONTOUR_BUDGET / t).sqrt() + 2.0;
    let wline = ContourSpec { family: ContourFamily::Vertical { c: -1.0 }, order: PANEL_ORDER }
        .nodes(half / order as f64, half)?;
    let zloop = ContourSpec { family: ContourFamily::Circle { center: 0.0, radius }, order }.nodes(0.0, 0.0)?;
    let wmag = wline.iter().map(|(w, _)| (w * w.exp()).norm()).fold(f64::INFINITY, f64::min);
    let zmag = zloop.iter().map(|(z, _)| (z * z.exp()).norm()).fold(0.0, f64::max);
    if !(1.1 * zmag < wmag) {
        return Err(Error::Contour(format!("|ze^z| = {zmag} not 10% below |we^w| = {wmag}")));
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for &(w, dw) in &wline {
        let fw = (t * w * w / 2.0 + xi1 * w).exp() * (-w).powi(n1 as i32);
        let wew = w * w.exp();
        for &(z, dz) in &zloop {
            let fz = (-(t * z * z / 2.0) - xi2 * z).exp() * (-z).powi(-(n2 as i32));
            let zez = z * z.exp();
            acc += fw * fz * (1.0 + z) * z.exp() / (wew - zez) * dw * dz;
        }
    }
    Ok((acc / (Complex64::new(0.0, 2.0 * PI) * Complex64::new(0.0, 2.0 * PI))).re)
}
