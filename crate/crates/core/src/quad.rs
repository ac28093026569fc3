//! Gauss–Legendre node tables and composite rules used by every module.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

type Table = Arc<(Vec<f64>, Vec<f64>)>;

fn cache() -> &'static Mutex<HashMap<usize, Table>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Table>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Nodes (increasing) and weights of the `order`-point Gauss–Legendre rule on [-1, 1].
pub(crate) fn gl_unit(order: usize) -> Table {
    assert!(order >= 1);
    if let Some(t) = cache().lock().unwrap().get(&order) {
        return t.clone();
    }
    let n = order;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        dp = if d != 0.0 { d } else { dp };
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    let t = Arc::new((x, w));
    cache().lock().unwrap().insert(order, t.clone());
    t
}

fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Appends the nodes and weights of an `order`-point rule on [a, b].
pub(crate) fn push_panel(a: f64, b: f64, order: usize, nodes: &mut Vec<f64>, weights: &mut Vec<f64>) {
    let t = gl_unit(order);
    let h = 0.5 * (b - a);
    let c = 0.5 * (a + b);
    for (x, w) in t.0.iter().zip(t.1.iter()) {
        nodes.push(c + h * x);
        weights.push(h * w);
    }
}

/// Composite rule with `panels` equal panels of `order` nodes on [a, b].
pub(crate) fn composite(a: f64, b: f64, panels: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = Vec::with_capacity(panels * order);
    let mut weights = Vec::with_capacity(panels * order);
    let h = (b - a) / panels as f64;
    for k in 0..panels {
        push_panel(a + k as f64 * h, a + (k + 1) as f64 * h, order, &mut nodes, &mut weights);
    }
    (nodes, weights)
}

/// Integrates `f` over [a, b] with a composite rule.
#[cfg(test)]
pub(crate) fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize, order: usize) -> f64 {
    let (x, w) = composite(a, b, panels, order);
    x.iter().zip(w.iter()).map(|(x, w)| w * f(*x)).sum()
}

/// Integrates `f` over [a, ∞) panel by panel, stopping once three consecutive
/// panels contribute less than `tol` relative to the running absolute mass.
#[cfg(test)]
pub(crate) fn integrate_tail<F: Fn(f64) -> f64>(f: F, a: f64, width: f64, order: usize, tol: f64) -> f64 {
    let t = gl_unit(order);
    let mut total = 0.0;
    let mut mass = 0.0;
    let mut quiet = 0;
    for k in 0..4000 {
        let lo = a + k as f64 * width;
        let c = lo + 0.5 * width;
        let mut part = 0.0;
        let mut part_abs = 0.0;
        for (x, w) in t.0.iter().zip(t.1.iter()) {
            let v = 0.5 * width * w * f(c + 0.5 * width * x);
            part += v;
            part_abs += v.abs();
        }
        total += part;
        mass += part_abs;
        if mass > 0.0 && part_abs <= tol * mass {
            quiet += 1;
            if quiet >= 3 {
                break;
            }
        } else {
            quiet = 0;
        }
    }
    total
}

/// Derivative of `f` at 0 from central differences with steps h and h/2.
/// Returns the Richardson-extrapolated value and |D(h) - D(h/2)|.
pub(crate) fn central_derivative<F>(f: F, h: f64) -> crate::error::Result<(f64, f64)>
where
    F: Fn(f64) -> crate::error::Result<f64>,
{
    let d1 = (f(h)? - f(-h)?) / (2.0 * h);
    let d2 = (f(0.5 * h)? - f(-0.5 * h)?) / h;
    Ok(((4.0 * d2 - d1) / 3.0, (d1 - d2).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_rule_weights_sum_to_two() {
        for n in [1, 2, 5, 20, 60, 121] {
            let t = gl_unit(n);
            let s: f64 = t.1.iter().sum();
            assert!((s - 2.0).abs() < 1e-13, "n={n} sum={s}");
            assert!(t.0.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn tail_integral_of_exponential() {
        let v = integrate_tail(|x| (-x).exp(), 0.0, 1.0, 20, 1e-17);
        assert!((v - 1.0).abs() < 1e-13);
    }
}
