//! Scalar special functions: the Airy function Ai and its derivative on the
//! real line, the principal branch of the Lambert W function, and the Gaussian
//! heat kernel.
//!
//! Ai is evaluated from a table of (Ai, Ai') pairs at spacing 1/4 on
//! [-100, 40] followed by a local Taylor expansion of the Airy equation
//! around the nearest table point. The table is filled by Taylor stepping
//! from the origin on the oscillatory side and up to x = 3, and from the
//! steepest-descent integral on the decaying side. Outside the table the
//! classical asymptotic expansions are accurate to machine precision.

use crate::error::{Error, Result};
use crate::quad;
use num_complex::Complex64;
use std::f64::consts::{E, PI};
use std::sync::OnceLock;

const AI0: f64 = 0.355_028_053_887_817_239_26;
const AIP0: f64 = -0.258_819_403_792_806_798_41;

const TABLE_LO: f64 = -100.0;
const TABLE_HI: f64 = 40.0;
const TABLE_H: f64 = 0.25;

struct AiryTable {
    ai: Vec<f64>,
    aip: Vec<f64>,
}

fn table() -> &'static AiryTable {
    static T: OnceLock<AiryTable> = OnceLock::new();
    T.get_or_init(build_table)
}

fn build_table() -> AiryTable {
    let n = ((TABLE_HI - TABLE_LO) / TABLE_H).round() as usize + 1;
    let zero = (-TABLE_LO / TABLE_H).round() as usize;
    let mut ai = vec![0.0; n];
    let mut aip = vec![0.0; n];
    ai[zero] = AI0;
    aip[zero] = AIP0;
    for k in (0..zero).rev() {
        let x0 = TABLE_LO + (k + 1) as f64 * TABLE_H;
        let (a, d) = taylor(x0, ai[k + 1], aip[k + 1], -TABLE_H);
        ai[k] = a;
        aip[k] = d;
    }
    for k in zero + 1..n {
        let x = TABLE_LO + k as f64 * TABLE_H;
        if x <= 3.0 {
            let (a, d) = taylor(x - TABLE_H, ai[k - 1], aip[k - 1], TABLE_H);
            ai[k] = a;
            aip[k] = d;
        } else {
            let (a, d) = airy_integral(x);
            ai[k] = a;
            aip[k] = d;
        }
    }
    AiryTable { ai, aip }
}

/// Solution of y'' = x y at x0 + d given y(x0), y'(x0), by power series.
fn taylor(x0: f64, y0: f64, y1: f64, d: f64) -> (f64, f64) {
    let mut a_km1 = 0.0;
    let mut a_k = y0;
    let mut a_kp1 = y1;
    let mut val = y0 + y1 * d;
    let mut der = y1;
    let mut dk = d;
    let scale = y0.abs() + y1.abs() * d.abs();
    let mut quiet = 0;
    for k in 0..200 {
        let kf = k as f64;
        let a_kp2 = (x0 * a_k + a_km1) / ((kf + 2.0) * (kf + 1.0));
        der += (kf + 2.0) * a_kp2 * dk;
        dk *= d;
        let term = a_kp2 * dk;
        val += term;
        if term.abs() <= 1e-18 * scale.max(val.abs()) {
            quiet += 1;
            if quiet > 3 {
                break;
            }
        } else {
            quiet = 0;
        }
        a_km1 = a_k;
        a_k = a_kp1;
        a_kp1 = a_kp2;
    }
    (val, der)
}

/// Ai and Ai' for x > 0 from Ai(x) = e^{-ζ}/π ∫₀^∞ e^{-√x t²} cos(t³/3) dt.
fn airy_integral(x: f64) -> (f64, f64) {
    let sx = x.sqrt();
    let zeta = 2.0 / 3.0 * x * sx;
    let tmax = (44.0 / sx).sqrt();
    let panels = 16;
    let (nodes, weights) = quad::composite(0.0, tmax, panels, 24);
    let mut i0 = 0.0;
    let mut i2 = 0.0;
    for (t, w) in nodes.iter().zip(weights.iter()) {
        let g = (-sx * t * t).exp() * (t * t * t / 3.0).cos();
        i0 += w * g;
        i2 += w * t * t * g;
    }
    let pre = (-zeta).exp() / PI;
    let ai = pre * i0;
    let aip = pre * (-sx * i0 - i2 / (2.0 * sx));
    (ai, aip)
}

fn u_coeffs() -> &'static [f64] {
    static U: OnceLock<Vec<f64>> = OnceLock::new();
    U.get_or_init(|| {
        let mut u = vec![1.0];
        for k in 1..30 {
            let kf = k as f64;
            let prev = u[k - 1];
            u.push(prev * (6.0 * kf - 5.0) * (6.0 * kf - 3.0) * (6.0 * kf - 1.0) / ((2.0 * kf - 1.0) * 216.0 * kf));
        }
        u
    })
}

fn v_coeff(k: usize) -> f64 {
    let kf = k as f64;
    -(6.0 * kf + 1.0) / (6.0 * kf - 1.0) * u_coeffs()[k]
}

/// Asymptotic expansions for |x| outside the table.
fn airy_asymptotic(x: f64) -> (f64, f64) {
    let u = u_coeffs();
    if x > 0.0 {
        let zeta = 2.0 / 3.0 * x.powf(1.5);
        if zeta > 745.0 {
            return (0.0, 0.0);
        }
        let mut su = 0.0;
        let mut sv = 0.0;
        let mut p = 1.0;
        for (k, &uk) in u.iter().enumerate().take(16) {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            su += sign * uk * p;
            sv += sign * v_coeff(k) * p;
            p /= zeta;
        }
        let e = (-zeta).exp() / (2.0 * PI.sqrt());
        (e * su / x.powf(0.25), -e * x.powf(0.25) * sv)
    } else {
        let y = -x;
        let zeta = 2.0 / 3.0 * y.powf(1.5);
        let (mut pu, mut qu, mut pv, mut qv) = (0.0, 0.0, 0.0, 0.0);
        let mut p = 1.0;
        for (k, &uk) in u.iter().enumerate().take(16) {
            let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
            if k % 2 == 0 {
                pu += sign * uk * p;
                pv += sign * v_coeff(k) * p;
            } else {
                qu += sign * uk * p;
                qv += sign * v_coeff(k) * p;
            }
            p /= zeta;
        }
        let ph = zeta - PI / 4.0;
        let (s, c) = ph.sin_cos();
        let ai = (c * pu + s * qu) / (PI.sqrt() * y.powf(0.25));
        let aip = y.powf(0.25) / PI.sqrt() * (s * pv - c * qv);
        (ai, aip)
    }
}

/// Ai(x) and Ai'(x) together.
pub fn airy_ai_pair(x: f64) -> (f64, f64) {
    if x.is_nan() {
        return (f64::NAN, f64::NAN);
    }
    if !(TABLE_LO..=TABLE_HI).contains(&x) {
        return airy_asymptotic(x);
    }
    let t = table();
    let k = ((x - TABLE_LO) / TABLE_H).round() as usize;
    let x0 = TABLE_LO + k as f64 * TABLE_H;
    taylor(x0, t.ai[k], t.aip[k], x - x0)
}

/// The Airy function Ai(x).
pub fn airy_ai(x: f64) -> f64 {
    airy_ai_pair(x).0
}

/// Ai(x) as (sign, ln|Ai(x)|), usable far beyond the underflow point of Ai.
pub fn ln_airy_ai(x: f64) -> (f64, f64) {
    if x <= TABLE_HI {
        let a = airy_ai(x);
        return (a.signum(), a.abs().ln());
    }
    let u = u_coeffs();
    let zeta = 2.0 / 3.0 * x.powf(1.5);
    let mut su = 0.0;
    let mut p = 1.0;
    for (k, uk) in u.iter().enumerate().take(16) {
        su += if k % 2 == 0 { uk * p } else { -uk * p };
        p /= zeta;
    }
    (1.0, -zeta - (2.0 * PI.sqrt()).ln() - 0.25 * x.ln() + su.ln())
}

/// The derivative Ai'(x).
pub fn airy_ai_prime(x: f64) -> f64 {
    airy_ai_pair(x).1
}

/// The Airy kernel ∫₀^∞ Ai(a+x) Ai(b+x) dx in closed form.
pub fn airy_kernel(a: f64, b: f64) -> f64 {
    let d = a - b;
    if d.abs() < 1e-2 {
        return airy_kernel_near_diagonal(0.5 * (a + b), d);
    }
    let (ai_a, aip_a) = airy_ai_pair(a);
    let (ai_b, aip_b) = airy_ai_pair(b);
    (ai_a * aip_b - aip_a * ai_b) / d
}

/// Series in d of the closed-form kernel at a = m + d/2, b = m - d/2, which
/// avoids the cancellation of the difference quotient.
fn airy_kernel_near_diagonal(m: f64, d: f64) -> f64 {
    const NC: usize = 14;
    let (ai, aip) = airy_ai_pair(m);
    let mut c = [0.0; NC];
    c[0] = ai;
    c[1] = aip;
    for k in 0..NC - 2 {
        let prev = if k >= 1 { c[k - 1] } else { 0.0 };
        c[k + 2] = (m * c[k] + prev) / (((k + 2) * (k + 1)) as f64);
    }
    let mut total = 0.0;
    let mut dp = 1.0;
    for p in (1..NC - 2).step_by(2) {
        let mut coef = 0.0;
        for k in 0..=p {
            let l = p - k;
            let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
            coef += sign * (c[k] * (l + 1) as f64 * c[l + 1] - (k + 1) as f64 * c[k + 1] * c[l]);
        }
        total += coef * 0.5f64.powi(p as i32) * dp;
        dp *= d * d;
    }
    total
}

/// Principal branch W₀ of the Lambert W function: the solution w of w e^w = z
/// continuous on ℂ minus the cut (-∞, -1/e).
pub fn lambert_w0(z: Complex64) -> Result<Complex64> {
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::NonFinite(format!("lambert_w0({z})")));
    }
    let branch = -1.0 / E;
    if z.im == 0.0 && z.re < branch {
        return Err(Error::BranchCut { re: z.re, im: z.im });
    }
    if z == Complex64::new(0.0, 0.0) {
        return Ok(z);
    }
    let zb = z + Complex64::new(1.0 / E, 0.0);
    let mut w = if zb.norm() < 0.3 {
        let p = (2.0 * E * zb).sqrt();
        Complex64::new(-1.0, 0.0) + p - p * p / 3.0 + p * p * p * 11.0 / 72.0
    } else if z.norm() > 3.0 {
        let l1 = z.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    } else {
        (Complex64::new(1.0, 0.0) + z).ln()
    };
    for _ in 0..20 {
        let ew = w.exp();
        let f = w * ew - z;
        let wp1 = w + 1.0;
        if wp1.norm() < 1e-300 {
            break;
        }
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let dw = f / denom;
        w -= dw;
        if dw.norm() <= 1e-15 * (1.0 + w.norm()) {
            break;
        }
    }
    Ok(w)
}

/// Heat kernel V(r1, r2, s1, s2) = exp(-(s2-s1)²/(4(r2-r1))) / √(4π(r2-r1)).
pub fn heat_kernel(r1: f64, r2: f64, s1: f64, s2: f64) -> Result<f64> {
    if !(r2 > r1) {
        return Err(Error::Domain(format!("heat kernel needs r2 > r1, got r1={r1}, r2={r2}")));
    }
    let tau = r2 - r1;
    Ok((-(s2 - s1).powi(2) / (4.0 * tau)).exp() / (4.0 * PI * tau).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values computed to 20 digits with an arbitrary-precision library.
    const REF: &[(f64, f64, f64)] = &[
        (-20.0, -0.17640612707798468959, 0.8928628567364712384),
        (-15.5, -0.16644795409041976739, 0.90493793543021219951),
        (-10.0, 0.040241238486443190689, 0.9962650441327900559),
        (-7.25, 0.32374057321118614622, -0.30022899504735408146),
        (-4.5, 0.29215278105595946688, -0.52336253231574770071),
        (-2.0, 0.22740742820168557599, 0.61825902074169104141),
        (-1.0, 0.5355608832923521188, -0.010160567116645209395),
        (0.0, 0.35502805388781723926, -0.25881940379280679841),
        (0.5, 0.23169360648083348977, -0.22491053266468389314),
        (1.0, 0.13529241631288141552, -0.15914744129679321279),
        (2.0, 0.034924130423274379135, -0.053090384433653631704),
        (4.5, 0.00033025032351430898366, -0.00071786656755750888869),
        (5.0, 0.00010834442813607441735, -0.000247413890868462476),
        (7.5, 1.9172560675134307516e-7, -5.3127139597205446848e-7),
        (10.0, 1.1047532552898685934e-10, -3.5206336767389236366e-10),
        (15.0, 2.164962520737992299e-18, -8.4205679540177727661e-18),
        (20.0, 1.6916728686705403136e-27, -7.5863916257483549605e-27),
        (30.0, 3.2082175915504955711e-49, -1.7598765814327259821e-48),
    ];

    #[test]
    fn airy_matches_reference_table() {
        for &(x, ai, aip) in REF {
            let (a, d) = airy_ai_pair(x);
            assert!((a - ai).abs() <= 1e-13, "Ai({x}) = {a}, want {ai}");
            assert!((d - aip).abs() <= 1e-12, "Ai'({x}) = {d}, want {aip}");
            if x > 0.0 {
                assert!(((a - ai) / ai).abs() < 1e-10, "relative Ai({x})");
            }
        }
    }

    #[test]
    fn log_airy_is_continuous_past_table() {
        for x in [1.0, 10.0, 39.9, 40.0] {
            let (s, l) = ln_airy_ai(x);
            assert!((s * l.exp() - airy_ai(x)).abs() <= 1e-13 * airy_ai(x).abs());
        }
        let (_, a) = ln_airy_ai(40.0);
        let (_, b) = ln_airy_ai(40.0 + 1e-9);
        assert!((a - b).abs() < 1e-7);
        let (s, l) = ln_airy_ai(1e4);
        assert_eq!(s, 1.0);
        assert!((l + 2.0 / 3.0 * 1e6).abs() < 10.0);
        assert_eq!(ln_airy_ai(-3.0).0, airy_ai(-3.0).signum());
    }

    #[test]
    fn airy_at_origin() {
        assert!((airy_ai(0.0) - 0.355028053887817).abs() < 1e-15);
    }

    #[test]
    fn airy_regimes_agree_at_switch_points() {
        for x in [-100.0, TABLE_HI] {
            let (a, d) = airy_ai_pair(x);
            let (b, e) = airy_asymptotic(x);
            let scale = a.abs() + d.abs();
            assert!((a - b).abs() <= 1e-11 * scale, "x={x}: {a} vs {b}");
            assert!((d - e).abs() <= 1e-11 * scale, "x={x}: {d} vs {e}");
        }
        for x in [3.0, 3.5, 4.5, 8.0] {
            let (a, d) = airy_ai_pair(x + 0.1);
            let (b, e) = airy_integral(x + 0.1);
            assert!(((a - b) / b).abs() < 1e-11 && ((d - e) / e).abs() < 1e-11);
        }
    }

    #[test]
    fn airy_ode_residual() {
        let h = 5e-3;
        let mut x = -10.0;
        while x <= 5.0 {
            let f = |k: f64| airy_ai(x + k * h);
            let second = (-f(2.0) + 16.0 * f(1.0) - 30.0 * f(0.0) + 16.0 * f(-1.0) - f(-2.0)) / (12.0 * h * h);
            assert!((second - x * airy_ai(x)).abs() < 1e-8, "x={x}");
            x += 0.37;
        }
    }

    #[test]
    fn airy_integral_is_one_third() {
        let v = quad::integrate_tail(airy_ai, 0.0, 1.0, 30, 1e-18);
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn airy_decays_monotonically_on_positive_axis() {
        let mut prev = airy_ai(0.0);
        let mut x = 0.25;
        while x < 110.0 {
            let v = airy_ai(x);
            assert!(v <= prev && v >= 0.0);
            prev = v;
            x += 0.25;
        }
        assert_eq!(airy_ai(200.0), 0.0);
    }

    #[test]
    fn airy_kernel_closed_form_matches_quadrature() {
        for &(a, b) in &[(0.0, 0.0), (-1.0, 0.5), (2.0, -3.0), (-4.0, -4.0 + 1e-9)] {
            let q = quad::integrate_tail(|x| airy_ai(a + x) * airy_ai(b + x), 0.0, 1.0, 30, 1e-18);
            assert!((airy_kernel(a, b) - q).abs() < 1e-12, "({a},{b})");
        }
    }

    #[test]
    fn lambert_special_values() {
        let w = lambert_w0(Complex64::new(0.0, 0.0)).unwrap();
        assert_eq!(w, Complex64::new(0.0, 0.0));
        let w = lambert_w0(Complex64::new(E, 0.0)).unwrap();
        assert!((w - 1.0).norm() < 1e-14);
        let w = lambert_w0(Complex64::new(-1.0 / E, 0.0)).unwrap();
        assert!((w + 1.0).norm() < 1e-7);
    }

    #[test]
    fn lambert_branch_cut_is_an_error() {
        assert!(matches!(lambert_w0(Complex64::new(-1.0, 0.0)), Err(Error::BranchCut { .. })));
    }

    #[test]
    fn lambert_round_trip_on_circle_and_wedge() {
        for k in 0..1000 {
            let th = 2.0 * PI * k as f64 / 1000.0;
            let z = Complex64::from_polar(0.9 / E, th) * Complex64::new(-1.0, 0.0);
            let w = lambert_w0(z).unwrap();
            assert!(((w * w.exp() - z) / z).norm() < 1e-12);
            let zz = Complex64::new(-1.2, 0.0) + Complex64::from_polar(k as f64 * 0.01, 0.6 * PI);
            let arg = zz * zz.exp();
            let w = lambert_w0(arg).unwrap();
            assert!(((w * w.exp() - arg) / arg).norm() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn heat_kernel_peak_and_normalization() {
        let v = heat_kernel(0.0, 1.0, 0.0, 0.0).unwrap();
        assert!((v - 1.0 / (4.0 * PI).sqrt()).abs() < 1e-15);
        let mass = quad::integrate(|s| heat_kernel(0.0, 1.0, 0.0, s).unwrap(), -20.0, 20.0, 20, 20);
        assert!((mass - 1.0).abs() < 1e-10);
        assert!(heat_kernel(1.0, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn heat_kernel_semigroup() {
        let (s1, s2) = (0.3, -0.7);
        let v = quad::integrate(
            |u| heat_kernel(0.0, 1.0, s1, u).unwrap() * heat_kernel(1.0, 2.0, u, s2).unwrap(),
            -25.0,
            25.0,
            25,
            20,
        );
        assert!((v - heat_kernel(0.0, 2.0, s1, s2).unwrap()).abs() < 1e-8);
    }
}
