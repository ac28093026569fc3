//! Nyström discretization of Fredholm determinants det(1 - χ K χ) on single
//! and multi-point domains, and dense resolvent solves.

use crate::error::{Error, Result};
use crate::quad;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

/// Default number of nodes per block.
pub const DEFAULT_ORDER: usize = 60;
/// Default scale of the map (0,1) → (s,∞).
pub const DEFAULT_LCUT: f64 = 10.0;

/// A quadrature rule: increasing nodes in `interval` with positive weights.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub interval: (f64, f64),
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// ∑ w_i f(x_i).
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(*x)).sum()
    }
}

/// Gauss–Legendre rule with `order` nodes on [a, b].
pub fn gauss_legendre(order: usize, a: f64, b: f64) -> Result<QuadratureRule> {
    if order == 0 {
        return Err(Error::Domain("quadrature order must be at least 1".into()));
    }
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::Domain(format!("gauss_legendre needs a < b, got [{a}, {b}]")));
    }
    let mut nodes = Vec::with_capacity(order);
    let mut weights = Vec::with_capacity(order);
    quad::push_panel(a, b, order, &mut nodes, &mut weights);
    Ok(QuadratureRule { nodes, weights, interval: (a, b) })
}

/// Maps a rule on (0, 1) to (s, ∞) by x = s + L u/(1-u).
pub fn map_semiinfinite(rule: &QuadratureRule, s: f64, l: f64) -> Result<QuadratureRule> {
    if !(l > 0.0) {
        return Err(Error::Domain(format!("map scale must be positive, got {l}")));
    }
    if rule.interval.0 < 0.0 || rule.interval.1 > 1.0 {
        return Err(Error::Domain("map_semiinfinite expects a rule on (0,1)".into()));
    }
    let mut nodes = Vec::with_capacity(rule.len());
    let mut weights = Vec::with_capacity(rule.len());
    for (u, w) in rule.nodes.iter().zip(&rule.weights) {
        let one_minus = 1.0 - u;
        nodes.push(s + l * u / one_minus);
        weights.push(w * l / (one_minus * one_minus));
    }
    Ok(QuadratureRule { nodes, weights, interval: (s, f64::INFINITY) })
}

/// Stacked quadrature blocks, one per point (r_k, s_k), each covering (s_k, ∞).
#[derive(Debug, Clone)]
pub struct MultiPointDomain {
    pub points: Vec<(f64, f64)>,
    pub blocks: Vec<QuadratureRule>,
    pub lcut: f64,
}

impl MultiPointDomain {
    /// Builds the domain; the first coordinates must be strictly increasing.
    pub fn new(points: &[(f64, f64)], order: usize, lcut: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Domain("at least one point is required".into()));
        }
        if points.windows(2).any(|p| !(p[0].0 < p[1].0)) {
            return Err(Error::Domain("points must have strictly increasing first coordinate".into()));
        }
        let base = gauss_legendre(order, 0.0, 1.0)?;
        let blocks = points
            .iter()
            .map(|&(_, s)| map_semiinfinite(&base, s, lcut))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { points: points.to_vec(), blocks, lcut })
    }

    /// Domain built from explicitly supplied blocks.
    pub fn from_blocks(points: Vec<(f64, f64)>, blocks: Vec<QuadratureRule>, lcut: f64) -> Self {
        Self { points, blocks, lcut }
    }

    pub fn size(&self) -> usize {
        self.blocks.iter().map(|b| b.len()).sum()
    }

    fn offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.blocks.len() + 1);
        let mut acc = 0;
        off.push(0);
        for b in &self.blocks {
            acc += b.len();
            off.push(acc);
        }
        off
    }
}

/// The symmetrically weighted Nyström matrix W^{1/2} K W^{1/2}.
#[derive(Debug, Clone)]
pub struct Nystrom {
    pub matrix: DMatrix<f64>,
    pub sqrt_weights: Vec<f64>,
}

impl Nystrom {
    /// Assembles from a pointwise kernel K(block_i, x, block_j, y).
    pub fn assemble<K>(domain: &MultiPointDomain, kernel: K) -> Result<Self>
    where
        K: Fn(usize, f64, usize, f64) -> f64 + Sync,
    {
        let n = domain.size();
        let mut coords = Vec::with_capacity(n);
        for (b, rule) in domain.blocks.iter().enumerate() {
            for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                coords.push((b, *x, w.sqrt()));
            }
        }
        let rows: Vec<Result<Vec<f64>>> = coords
            .par_iter()
            .map(|&(bi, x, wi)| {
                coords
                    .iter()
                    .map(|&(bj, y, wj)| {
                        let k = kernel(bi, x, bj, y);
                        if !k.is_finite() {
                            return Err(Error::NonFiniteKernel { bi, bj, x, y });
                        }
                        Ok(wi * k * wj)
                    })
                    .collect()
            })
            .collect();
        let mut matrix = DMatrix::zeros(n, n);
        for (i, row) in rows.into_iter().enumerate() {
            for (j, v) in row?.into_iter().enumerate() {
                matrix[(i, j)] = v;
            }
        }
        Ok(Self { matrix, sqrt_weights: coords.iter().map(|c| c.2).collect() })
    }

    /// Assembles from block evaluations: `block(bi, bj, xs, ys)` returns the
    /// unweighted kernel matrix between the nodes of two blocks.
    pub fn assemble_blocks<B>(domain: &MultiPointDomain, block: B) -> Result<Self>
    where
        B: Fn(usize, usize, &[f64], &[f64]) -> Result<DMatrix<f64>> + Sync,
    {
        let n = domain.size();
        let off = domain.offsets();
        let m = domain.blocks.len();
        let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..m).map(move |j| (i, j))).collect();
        let parts: Vec<Result<DMatrix<f64>>> = pairs
            .par_iter()
            .map(|&(i, j)| block(i, j, &domain.blocks[i].nodes, &domain.blocks[j].nodes))
            .collect();
        let sqrt_weights: Vec<f64> =
            domain.blocks.iter().flat_map(|b| b.weights.iter().map(|w| w.sqrt())).collect();
        let mut matrix = DMatrix::zeros(n, n);
        for (&(bi, bj), part) in pairs.iter().zip(parts) {
            let part = part?;
            for a in 0..part.nrows() {
                for b in 0..part.ncols() {
                    let v = part[(a, b)];
                    if !v.is_finite() {
                        return Err(Error::NonFiniteKernel {
                            bi,
                            bj,
                            x: domain.blocks[bi].nodes[a],
                            y: domain.blocks[bj].nodes[b],
                        });
                    }
                    let (r, c) = (off[bi] + a, off[bj] + b);
                    matrix[(r, c)] = sqrt_weights[r] * v * sqrt_weights[c];
                }
            }
        }
        Ok(Self { matrix, sqrt_weights })
    }

    /// det(I - M) by LU with partial pivoting.
    pub fn det(&self) -> f64 {
        det_one_minus(&self.matrix)
    }

    /// Solves (1 - K) u = rhs on the nodes.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.sqrt_weights.len();
        if rhs.len() != n {
            return Err(Error::Domain(format!("rhs has length {}, expected {n}", rhs.len())));
        }
        let a = DMatrix::identity(n, n) - &self.matrix;
        let b = DVector::from_iterator(n, rhs.iter().zip(&self.sqrt_weights).map(|(f, s)| f * s));
        let lu = a.clone().lu();
        let v = lu.solve(&b).ok_or_else(|| Error::Singular(condition_estimate(&a)))?;
        let resid = (&a * &v - &b).norm();
        let scale = b.norm().max(f64::MIN_POSITIVE);
        if !(resid <= 1e-10 * scale) {
            return Err(Error::Singular(condition_estimate(&a)));
        }
        Ok(v.iter().zip(&self.sqrt_weights).map(|(x, s)| x / s).collect())
    }
}

fn condition_estimate(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// det(I - M) for an already weighted matrix.
pub fn det_one_minus(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    (DMatrix::identity(n, n) - m).lu().determinant()
}

/// det(1 - χ K χ) on `domain` for a pointwise kernel.
pub fn fredholm_det<K>(domain: &MultiPointDomain, kernel: K) -> Result<f64>
where
    K: Fn(usize, f64, usize, f64) -> f64 + Sync,
{
    Ok(Nystrom::assemble(domain, kernel)?.det())
}

/// Solves (1 - χ K χ) u = rhs for a pointwise kernel; `rhs` is given on the nodes.
pub fn resolvent_apply<K>(domain: &MultiPointDomain, kernel: K, rhs: &[f64]) -> Result<Vec<f64>>
where
    K: Fn(usize, f64, usize, f64) -> f64 + Sync,
{
    Nystrom::assemble(domain, kernel)?.solve(rhs)
}
