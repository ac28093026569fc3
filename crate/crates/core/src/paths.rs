//! Driving noise and initial conditions.
//!
//! Every particle index owns its own ChaCha8 stream, selected by the index,
//! under a key derived from (seed, replica). A path therefore depends only on
//! (seed, replica, index, grid), and enlarging the index window never changes
//! a path that was already sampled. Exponential gaps of random initial data
//! use a second key family tagged "ic".

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

/// Uniform time grid 0, dt, …, n_steps·dt = t_end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_end: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, n_steps: usize) -> Result<Self> {
        if !(t_end > 0.0) || !t_end.is_finite() {
            return Err(Error::Domain(format!("t_end must be positive and finite, got {t_end}")));
        }
        if n_steps == 0 {
            return Err(Error::Domain("n_steps must be at least 1".into()));
        }
        let g = Self { t_end, n_steps };
        if !g.dt().is_finite() || g.dt() <= 0.0 {
            return Err(Error::NonFinite(format!("dt = {}", g.dt())));
        }
        Ok(g)
    }

    /// Grid with step at most `dt` (rounded so the end point is hit exactly).
    pub fn with_dt(t_end: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::NonFinite(format!("dt = {dt}")));
        }
        let n = (t_end / dt - 1e-9).ceil().max(1.0) as usize;
        Self::new(t_end, n)
    }

    /// Default grid: dt = 10⁻³·t_end.
    pub fn default_for(t_end: f64) -> Result<Self> {
        Self::new(t_end, 1000)
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.n_steps as f64
    }

    /// The j-th grid time, computed as j·dt.
    pub fn time(&self, j: usize) -> f64 {
        if j == self.n_steps {
            self.t_end
        } else {
            j as f64 * self.dt()
        }
    }

    /// Index of grid time `t`, or an error if `t` is not on the grid.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let j = (t / self.dt()).round();
        if j < 0.0 || j > self.n_steps as f64 || (j * self.dt() - t).abs() > 1e-9 * self.t_end.max(1.0) {
            return Err(Error::OffGrid(t));
        }
        Ok(j as usize)
    }
}

/// Seed provenance for a family of streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamId {
    pub seed: u64,
    pub replica: u64,
}

const PATH_TAG: u64 = 0x7061_7468_7300_0001;
const IC_TAG: u64 = 0x6963_0000_0000_0002;
const BRIDGE_TAG: u64 = 0x6272_6964_6765_0003;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn key(seed: u64, replica: u64, tag: u64) -> [u8; 32] {
    let mut out = [0u8; 32];
    let mut state = splitmix(seed ^ splitmix(tag)) ^ splitmix(replica.wrapping_add(tag));
    for chunk in out.chunks_mut(8) {
        state = splitmix(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    out
}

/// Generator for the Brownian increments of one particle index.
pub(crate) fn index_stream(id: StreamId, index: i64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(key(id.seed, id.replica, PATH_TAG));
    rng.set_stream(index as u64);
    rng
}

fn ic_stream(id: StreamId, index: i64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(key(id.seed, id.replica, IC_TAG));
    rng.set_stream(index as u64);
    rng
}

/// Fills `out[0..=n_steps]` with B(t_j) for one index.
pub(crate) fn fill_path(id: StreamId, index: i64, grid: &TimeGrid, out: &mut [f64]) {
    let mut rng = index_stream(id, index);
    let sd = grid.dt().sqrt();
    let mut b = 0.0;
    out[0] = 0.0;
    for v in out.iter_mut().skip(1).take(grid.n_steps) {
        let z: f64 = rng.sample(StandardNormal);
        b += sd * z;
        *v = b;
    }
}

/// Fills `out[1..=n_steps]` with uniforms on (0, 1] used to sample the
/// maximum of the bridge over each grid step at one index; `out[0]` is unused.
pub(crate) fn fill_bridge_uniforms(id: StreamId, index: i64, grid: &TimeGrid, out: &mut [f64]) {
    let mut rng = ChaCha8Rng::from_seed(key(id.seed, id.replica, BRIDGE_TAG));
    rng.set_stream(index as u64);
    out[0] = 1.0;
    for v in out.iter_mut().skip(1).take(grid.n_steps) {
        *v = 1.0 - rng.gen::<f64>();
    }
}

/// Brownian motions B_n, n in [n_min, n_max], sampled on a grid.
#[derive(Debug, Clone)]
pub struct BrownianPaths {
    pub n_min: i64,
    pub n_max: i64,
    pub grid: TimeGrid,
    pub stream: StreamId,
    values: Vec<f64>,
}

impl BrownianPaths {
    fn stride(&self) -> usize {
        self.grid.n_steps + 1
    }

    /// B_n(t_j) for j = 0..=n_steps.
    pub fn path(&self, n: i64) -> &[f64] {
        assert!(n >= self.n_min && n <= self.n_max, "index {n} outside [{}, {}]", self.n_min, self.n_max);
        let s = self.stride();
        let k = (n - self.n_min) as usize;
        &self.values[k * s..(k + 1) * s]
    }

    /// Increments B_n(t_{j+1}) - B_n(t_j).
    pub fn increments(&self, n: i64) -> Vec<f64> {
        self.path(n).windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// Samples the paths of replica 0.
pub fn sample_paths(seed: u64, grid: TimeGrid, index_range: (i64, i64)) -> Result<BrownianPaths> {
    sample_paths_replica(StreamId { seed, replica: 0 }, grid, index_range)
}

/// Samples the paths of an arbitrary replica.
pub fn sample_paths_replica(stream: StreamId, grid: TimeGrid, index_range: (i64, i64)) -> Result<BrownianPaths> {
    let (lo, hi) = index_range;
    if lo > hi {
        return Err(Error::EmptyRange { lo, hi });
    }
    if !grid.dt().is_finite() {
        return Err(Error::NonFinite(format!("dt = {}", grid.dt())));
    }
    let stride = grid.n_steps + 1;
    let count = (hi - lo + 1) as usize;
    let mut values = vec![0.0; count * stride];
    for (k, chunk) in values.chunks_mut(stride).enumerate() {
        fill_path(stream, lo + k as i64, &grid, chunk);
    }
    Ok(BrownianPaths { n_min: lo, n_max: hi, grid, stream, values })
}

/// The six families of initial data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "flavor", rename_all = "kebab-case")]
pub enum Flavor {
    Packed,
    Flat,
    Stat { lambda: f64, rho: f64 },
    HalfFlat,
    HalfStat { lambda: f64 },
    StatFlat { rho: f64 },
}

impl Flavor {
    /// Parses a CLI name, pulling λ and ρ where the flavor needs them.
    pub fn parse(name: &str, lambda: Option<f64>, rho: Option<f64>) -> Result<Self> {
        let f = match name {
            "packed" => Flavor::Packed,
            "flat" => Flavor::Flat,
            "stat" => Flavor::Stat { lambda: lambda.unwrap_or(1.0), rho: rho.unwrap_or(1.0) },
            "half-flat" => Flavor::HalfFlat,
            "half-stat" => Flavor::HalfStat { lambda: lambda.unwrap_or(1.0) },
            "stat-flat" => Flavor::StatFlat { rho: rho.unwrap_or(1.0) },
            other => return Err(Error::Config(format!("unknown flavor '{other}'"))),
        };
        f.validate()?;
        Ok(f)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Flavor::Packed => "packed",
            Flavor::Flat => "flat",
            Flavor::Stat { .. } => "stat",
            Flavor::HalfFlat => "half-flat",
            Flavor::HalfStat { .. } => "half-stat",
            Flavor::StatFlat { .. } => "stat-flat",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Flavor::Stat { lambda, rho } => {
                if !(lambda > 0.0) {
                    return Err(Error::Domain(format!("lambda must be positive, got {lambda}")));
                }
                if !(rho >= 0.0) {
                    return Err(Error::Domain(format!("rho must be non-negative, got {rho}")));
                }
            }
            Flavor::HalfStat { lambda } => {
                if !(lambda > 0.0) {
                    return Err(Error::Domain(format!("lambda must be positive, got {lambda}")));
                }
            }
            Flavor::StatFlat { rho }
                if !(rho >= 0.0) => {
                    return Err(Error::Domain(format!("rho must be non-negative, got {rho}")));
                }
            _ => {}
        }
        Ok(())
    }

    /// Smallest index of the system, or None when indices run to -∞.
    pub fn min_index(&self) -> Option<i64> {
        match self {
            Flavor::Packed | Flavor::HalfFlat => Some(1),
            Flavor::HalfStat { .. } => Some(0),
            Flavor::Flat | Flavor::Stat { .. } | Flavor::StatFlat { .. } => None,
        }
    }

    /// Index of the drifted boundary particle in the half-infinite
    /// representation of the stationary flavors, with its drift.
    pub fn boundary(&self) -> Option<(i64, f64)> {
        match *self {
            Flavor::Stat { rho, .. } => Some((0, rho)),
            Flavor::StatFlat { rho } => Some((1, rho)),
            _ => None,
        }
    }
}

/// Initial positions ζ_n on a finite index window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightVector {
    pub flavor: Option<Flavor>,
    pub n_min: i64,
    pub n_max: i64,
    pub zeta: Vec<f64>,
}

impl HeightVector {
    /// Wraps arbitrary positions; they must be non-decreasing.
    pub fn custom(n_min: i64, zeta: Vec<f64>) -> Result<Self> {
        if zeta.is_empty() {
            return Err(Error::EmptyRange { lo: n_min, hi: n_min - 1 });
        }
        if zeta.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::Domain("initial positions must be non-decreasing".into()));
        }
        let n_max = n_min + zeta.len() as i64 - 1;
        Ok(Self { flavor: None, n_min, n_max, zeta })
    }

    pub fn get(&self, n: i64) -> f64 {
        self.zeta[(n - self.n_min) as usize]
    }

    pub fn len(&self) -> usize {
        self.zeta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zeta.is_empty()
    }
}

fn exp_draw(id: StreamId, index: i64) -> f64 {
    ic_stream(id, index).sample(Exp1)
}

/// ζ_n for one index of a flavor; Exp variables come from the "ic" streams.
pub fn zeta_at(flavor: &Flavor, n: i64, seed: u64) -> Result<f64> {
    let seed = StreamId { seed, replica: 0 };
    let check_min = |m: i64| {
        if n < m {
            Err(Error::IndexUnderflow(format!("{} initial data starts at index {m}, got {n}", flavor.name())))
        } else {
            Ok(())
        }
    };
    match *flavor {
        Flavor::Packed => {
            check_min(1)?;
            Ok(0.0)
        }
        Flavor::Flat => Ok(n as f64),
        Flavor::HalfFlat => {
            check_min(1)?;
            Ok(n as f64)
        }
        Flavor::Stat { lambda, rho } => {
            if !(lambda > 0.0) {
                return Err(Error::Domain(format!("lambda must be positive, got {lambda}")));
            }
            if n >= 0 {
                Ok((1..=n).map(|k| exp_draw(seed, k)).sum::<f64>() / lambda)
            } else {
                if !(rho > 0.0) {
                    return Err(Error::Domain(format!("stat with negative indices needs rho > 0, got {rho}")));
                }
                Ok(-(n + 1..=0).map(|k| exp_draw(seed, k)).sum::<f64>() / rho)
            }
        }
        Flavor::HalfStat { lambda } => {
            check_min(0)?;
            if !(lambda > 0.0) {
                return Err(Error::Domain(format!("lambda must be positive, got {lambda}")));
            }
            Ok((0..=n).map(|k| exp_draw(seed, k)).sum::<f64>() / lambda)
        }
        Flavor::StatFlat { rho } => {
            if n >= 1 {
                Ok(n as f64)
            } else {
                if !(rho > 0.0) {
                    return Err(Error::Domain(format!("stat-flat with indices below 1 needs rho > 0, got {rho}")));
                }
                Ok(1.0 - (n + 1..=1).map(|k| exp_draw(seed, k)).sum::<f64>() / rho)
            }
        }
    }
}

/// Builds ζ on [n_min, n_max] for a flavor.
pub fn make_initial_condition(flavor: Flavor, index_range: (i64, i64), seed: u64) -> Result<HeightVector> {
    make_initial_condition_replica(flavor, index_range, StreamId { seed, replica: 0 })
}

/// Builds ζ for one replica; the Exp variables are keyed by (seed, replica, "ic", index).
pub fn make_initial_condition_replica(flavor: Flavor, index_range: (i64, i64), seed: StreamId) -> Result<HeightVector> {
    flavor.validate()?;
    let (lo, hi) = index_range;
    if lo > hi {
        return Err(Error::EmptyRange { lo, hi });
    }
    let mut zeta = Vec::with_capacity((hi - lo + 1) as usize);
    match flavor {
        Flavor::Stat { lambda, rho } => {
            if lo < 0 && !(rho > 0.0) {
                return Err(Error::Domain(format!("stat with negative indices needs rho > 0, got {rho}")));
            }
            // cumulative sums from the anchor ζ_0 = 0 outward
            let mut left = Vec::new();
            let mut acc = 0.0;
            for k in (lo.min(0) + 1..=0).rev() {
                acc -= exp_draw(seed, k) / rho;
                left.push((k - 1, acc));
            }
            let mut right = Vec::new();
            acc = 0.0;
            for k in 1..=hi.max(0) {
                acc += exp_draw(seed, k) / lambda;
                right.push((k, acc));
            }
            for n in lo..=hi {
                let v = match n.cmp(&0) {
                    std::cmp::Ordering::Equal => 0.0,
                    std::cmp::Ordering::Greater => right[(n - 1) as usize].1,
                    std::cmp::Ordering::Less => left[(-n - 1) as usize].1,
                };
                zeta.push(v);
            }
        }
        Flavor::HalfStat { lambda } => {
            if lo < 0 {
                return Err(Error::IndexUnderflow(format!("half-stat starts at index 0, got {lo}")));
            }
            let mut acc = 0.0;
            for k in 0..=hi {
                acc += exp_draw(seed, k) / lambda;
                if k >= lo {
                    zeta.push(acc);
                }
            }
        }
        Flavor::StatFlat { rho } => {
            if lo < 1 && !(rho > 0.0) {
                return Err(Error::Domain(format!("stat-flat with indices below 1 needs rho > 0, got {rho}")));
            }
            let mut left = Vec::new();
            let mut acc = 1.0;
            for k in (lo.min(1) + 1..=1).rev() {
                acc -= exp_draw(seed, k) / rho;
                left.push(acc);
            }
            for n in lo..=hi {
                zeta.push(if n >= 1 { n as f64 } else { left[(-n) as usize] });
            }
        }
        _ => {
            for n in lo..=hi {
                zeta.push(zeta_at(&flavor, n, seed.seed)?);
            }
        }
    }
    Ok(HeightVector { flavor: Some(flavor), n_min: lo, n_max: hi, zeta })
}

/// Result of the finite-window admissibility heuristic.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdmissibilityReport {
    pub reference_index: i64,
    pub worst_margin: f64,
    pub final_margin: f64,
    pub pass: bool,
}

/// Evaluates m(M) = ζ_n - ζ_{-M} - M^χ over the window for the reference
/// index n = min(0, n_max). Passes when the margin is positive over the last
/// tenth of the window and larger at the end than at mid-window.
pub fn admissibility_diagnostic(zeta: &HeightVector, chi: f64) -> Result<AdmissibilityReport> {
    if !(chi > 0.5) {
        return Err(Error::Domain(format!("chi must exceed 1/2, got {chi}")));
    }
    let n_ref = zeta.n_max.min(0);
    let m_max = -zeta.n_min;
    if m_max < 2 || n_ref < zeta.n_min {
        return Err(Error::Domain("window must extend at least two sites left of the origin".into()));
    }
    let margin = |m: i64| zeta.get(n_ref) - zeta.get(-m) - (m as f64).powf(chi);
    let mut worst = f64::INFINITY;
    for m in 1..=m_max {
        worst = worst.min(margin(m));
    }
    let tail_start = m_max - (m_max / 10).max(1);
    let tail_ok = (tail_start..=m_max).all(|m| margin(m) > 0.0);
    let growing = margin(m_max) > margin(m_max / 2);
    Ok(AdmissibilityReport {
        reference_index: n_ref,
        worst_margin: worst,
        final_margin: margin(m_max),
        pass: tail_ok && growing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_times_are_exact_multiples() {
        let g = TimeGrid::new(2.5, 7).unwrap();
        assert_eq!(g.time(0), 0.0);
        assert_eq!(g.time(7), 2.5);
        assert_eq!(g.time(3), 3.0 * (2.5 / 7.0));
        assert!(TimeGrid::new(1.0, 0).is_err());
        assert!(g.index_of(0.1).is_err());
        assert_eq!(g.index_of(g.time(4)).unwrap(), 4);
    }

    #[test]
    fn determinism_and_window_consistency() {
        let g = TimeGrid::new(1.0, 50).unwrap();
        let a = sample_paths(7, g, (1, 1)).unwrap();
        let b = sample_paths(7, g, (1, 1)).unwrap();
        assert_eq!(a.path(1), b.path(1));
        let wide = sample_paths(7, g, (1, 3)).unwrap();
        let narrow = sample_paths(7, g, (2, 2)).unwrap();
        assert_eq!(wide.path(2), narrow.path(2));
        assert_ne!(wide.path(1), wide.path(2));
        let other = sample_paths(8, g, (2, 2)).unwrap();
        assert_ne!(other.path(2), narrow.path(2));
    }

    #[test]
    fn empty_range_is_an_error() {
        let g = TimeGrid::new(1.0, 5).unwrap();
        assert!(matches!(sample_paths(1, g, (3, 2)), Err(Error::EmptyRange { .. })));
    }

    #[test]
    fn increment_variance_concentrates() {
        let n = 100_000;
        let g = TimeGrid::new(n as f64 * 1e-3, n).unwrap();
        let p = sample_paths(7, g, (1, 1)).unwrap();
        let inc = p.increments(1);
        let dt = g.dt();
        let mean = inc.iter().sum::<f64>() / n as f64;
        let var = inc.iter().map(|x| x * x).sum::<f64>() / n as f64;
        assert!((var - dt).abs() <= 3.0 * (2.0 / n as f64).sqrt() * dt, "var={var}");
        assert!(mean.abs() <= 4.0 * (dt / n as f64).sqrt());
    }

    #[test]
    fn deterministic_initial_conditions() {
        let p = make_initial_condition(Flavor::Packed, (1, 5), 0).unwrap();
        assert_eq!(p.zeta, vec![0.0; 5]);
        let f = make_initial_condition(Flavor::Flat, (-2, 2), 0).unwrap();
        assert_eq!(f.zeta, vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
        let h = make_initial_condition(Flavor::HalfFlat, (1, 3), 0).unwrap();
        assert_eq!(h.zeta, vec![1.0, 2.0, 3.0]);
        assert!(make_initial_condition(Flavor::Packed, (0, 3), 0).is_err());
    }

    #[test]
    fn stat_gaps_have_unit_mean() {
        let v = make_initial_condition(Flavor::Stat { lambda: 1.0, rho: 1.0 }, (-10_000, 0), 3).unwrap();
        assert_eq!(*v.zeta.last().unwrap(), 0.0);
        let mean_gap = (v.zeta[10_000] - v.zeta[0]) / 10_000.0;
        assert!((mean_gap - 1.0).abs() < 0.03);
        assert!(v.zeta.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn stat_pointwise_matches_vector() {
        let fl = Flavor::Stat { lambda: 2.0, rho: 0.5 };
        let v = make_initial_condition(fl, (-5, 5), 11).unwrap();
        for n in -5..=5 {
            assert!((v.get(n) - zeta_at(&fl, n, 11).unwrap()).abs() < 1e-12);
        }
        let sf = Flavor::StatFlat { rho: 0.7 };
        let v = make_initial_condition(sf, (-3, 4), 5).unwrap();
        for n in -3..=4 {
            assert!((v.get(n) - zeta_at(&sf, n, 5).unwrap()).abs() < 1e-12);
        }
        assert_eq!(v.get(1), 1.0);
        let hs = Flavor::HalfStat { lambda: 1.5 };
        let v = make_initial_condition(hs, (0, 4), 9).unwrap();
        for n in 0..=4 {
            assert!((v.get(n) - zeta_at(&hs, n, 9).unwrap()).abs() < 1e-12);
        }
        assert!(v.get(0) > 0.0);
    }

    #[test]
    fn parameter_errors() {
        assert!(make_initial_condition(Flavor::Stat { lambda: 0.0, rho: 1.0 }, (0, 3), 0).is_err());
        assert!(make_initial_condition(Flavor::Stat { lambda: 1.0, rho: 0.0 }, (-3, 3), 0).is_err());
        assert!(make_initial_condition(Flavor::Stat { lambda: 1.0, rho: 0.0 }, (0, 3), 0).is_ok());
        assert!(make_initial_condition(Flavor::HalfStat { lambda: -1.0 }, (0, 3), 0).is_err());
    }

    #[test]
    fn admissibility_examples() {
        let flat = make_initial_condition(Flavor::Flat, (-1000, 0), 0).unwrap();
        assert!(admissibility_diagnostic(&flat, 0.6).unwrap().pass);
        let packed = HeightVector::custom(-1000, vec![0.0; 1001]).unwrap();
        assert!(!admissibility_diagnostic(&packed, 0.6).unwrap().pass);
        let stat = make_initial_condition(Flavor::Stat { lambda: 1.0, rho: 1.0 }, (-10_000, 0), 1).unwrap();
        assert!(admissibility_diagnostic(&stat, 0.6).unwrap().pass);
        assert!(admissibility_diagnostic(&flat, 0.5).is_err());
    }
}
