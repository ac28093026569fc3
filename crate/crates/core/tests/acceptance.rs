//! Acceptance suite. Every test prints one `criterion N: PASS|FAIL` line to
//! stderr (outside the test capture) and then asserts the same verdict.

use std::io::Write;

use rayon::prelude::*;

use rbm_kpz::airylim::{baik_rains, cdf_limit, f_goe_2s, f_gue, LimitOptions, LimitProcess, PointConfig};
use rbm_kpz::dynamics::{
    burke_check, dkw_band, evolve_skorokhod_with, evolve_truncated_infinite, rescaled_samples, SampleOptions,
};
use rbm_kpz::finitet::{alpha_beta, finite_t_cdf, transition_density, FiniteOptions};
use rbm_kpz::fredholm::gauss_legendre;
use rbm_kpz::harness::{
    attractiveness_rows, run_experiment, ExperimentConfig, ExperimentKind, Times, MC_SUP_RULE,
};
use rbm_kpz::paths::{sample_paths_replica, Flavor, HeightVector, StreamId, TimeGrid};

fn verdict(n: usize, title: &str, pass: bool, detail: &str) {
    let word = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {n:2}: {word} {title}: {detail}");
}

fn check(n: usize, title: &str, pass: bool, detail: String) {
    verdict(n, title, pass, &detail);
    assert!(pass, "criterion {n} ({title}): {detail}");
}

/// Gauss–Legendre nodes and weights of `order` points on each of `panels`
/// equal panels of [a, b].
fn composite(a: f64, b: f64, panels: usize, order: usize) -> Vec<(f64, f64)> {
    let h = (b - a) / panels as f64;
    (0..panels)
        .flat_map(|k| {
            let lo = a + k as f64 * h;
            let rule = gauss_legendre(order, lo, lo + h).unwrap();
            rule.nodes.into_iter().zip(rule.weights)
        })
        .collect()
}

fn sci(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:.2e}")).collect();
    format!("[{}]", items.join(", "))
}

fn one_point(p: LimitProcess, r: f64, s: f64) -> f64 {
    cdf_limit(p, &PointConfig::one(r, s), LimitOptions::default()).unwrap()
}

fn two_sample_ks(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

fn normal_cdf(x: f64, var: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / (2.0 * var).sqrt()))
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0))
}

#[test]
fn criterion_01_mc_matches_exact_finite_time() {
    let flavors = [("packed", None, None), ("half-flat", None, None), ("stat", Some(1.0), Some(0.5))];
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, lambda, rho) in flavors {
        let start = std::time::Instant::now();
        let mut cfg = ExperimentConfig::new(ExperimentKind::McVsFiniteT, 2024);
        cfg.flavor = Some(name.into());
        cfg.lambda = lambda;
        cfg.rho = rho;
        cfg.t = Some(Times::One(25.0));
        cfg.r = vec![0.0];
        cfg.samples = Some(10_000);
        let rep = run_experiment(&cfg).unwrap();
        let (ks, band) = (rep.ks.unwrap(), rep.band.unwrap());
        pass &= ks <= band && rep.pass;
        detail.push(format!("{name} KS {ks:.4} (band {band:.4}, {:.0} s)", start.elapsed().as_secs_f64()));
    }
    check(1, "MC vs exact finite-t CDF at t=25", pass, detail.join("; "));
}

#[test]
fn criterion_02_two_particle_density() {
    let t = 1.0;
    let dens = |x1: f64, x2: f64| transition_density(&[0.0, 0.0], &[x1, x2], t, &[0.0, 0.0]).unwrap();
    let mut mass = 0.0;
    for (x2, w2) in composite(-9.0, 11.0, 8, 20) {
        for (u, w1) in composite(0.0, 14.0, 6, 20) {
            mass += w1 * w2 * dens(x2 - u, x2);
        }
    }

    // Probability of [a, b] × [c, d] ∩ {x1 ≤ x2}; x1 is split where the
    // inner range [max(c, x1), d] changes form.
    let bin_mass = |a: f64, b: f64, c: f64, d: f64| -> f64 {
        let mut cuts = vec![a];
        cuts.extend([c, d].into_iter().filter(|&v| v > a && v < b));
        cuts.push(b.min(d));
        let mut p = 0.0;
        for w in cuts.windows(2).filter(|w| w[1] > w[0]) {
            for (x1, w1) in composite(w[0], w[1], 1, 12) {
                let lo = c.max(x1);
                if lo < d {
                    for (x2, w2) in composite(lo, d, 1, 12) {
                        p += w1 * w2 * dens(x1, x2);
                    }
                }
            }
        }
        p
    };

    let n = 100_000usize;
    let grid = TimeGrid::new(t, 200).unwrap();
    let ic = HeightVector::custom(1, vec![0.0, 0.0]).unwrap();
    let pts: Vec<(f64, f64)> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let paths = sample_paths_replica(StreamId { seed: 77, replica: i }, grid, (1, 2)).unwrap();
            let x = evolve_skorokhod_with(&ic, &paths, None, MC_SUP_RULE).unwrap();
            (x.position(1, t).unwrap(), x.position(2, t).unwrap())
        })
        .collect();

    let e1: Vec<f64> = (0..=10).map(|k| -2.5 + 0.5 * k as f64).collect();
    let e2: Vec<f64> = (0..=10).map(|k| -1.5 + 0.5 * k as f64).collect();
    let mut counts = [[0usize; 10]; 10];
    for &(x1, x2) in &pts {
        let i = ((x1 - e1[0]) / 0.5).floor();
        let j = ((x2 - e2[0]) / 0.5).floor();
        if (0.0..10.0).contains(&i) && (0.0..10.0).contains(&j) {
            counts[i as usize][j as usize] += 1;
        }
    }
    let mut worst = 0.0f64;
    let mut outside = 0;
    for i in 0..10 {
        for j in 0..10 {
            let p = bin_mass(e1[i], e1[i + 1], e2[j], e2[j + 1]);
            let expect = n as f64 * p;
            let sigma = (n as f64 * p * (1.0 - p)).sqrt();
            let dev = (counts[i][j] as f64 - expect).abs();
            if dev > 4.0 * sigma + 1e-9 {
                outside += 1;
            }
            if sigma > 0.0 {
                worst = worst.max(dev / sigma);
            }
        }
    }
    let pass = (mass - 1.0).abs() <= 1e-4 && outside == 0;
    check(
        2,
        "two-particle density",
        pass,
        format!("mass {mass:.8}; {outside} of 100 bins outside 4σ, largest deviation {worst:.2}σ at n={n}"),
    );
}

#[test]
fn criterion_03_law_of_large_numbers() {
    let n = 400i64;
    let grid = TimeGrid::new(1.0, 1000).unwrap();
    let vals: Vec<f64> = (0..2000u64)
        .into_par_iter()
        .map(|seed| {
            let stream = StreamId { seed: 9000 + seed, replica: 0 };
            let v = evolve_truncated_infinite(Flavor::Packed, stream, grid, n, 1.0, 1e-9, MC_SUP_RULE).unwrap();
            v.value / (n as f64).sqrt()
        })
        .collect();
    let (mean, var) = mean_var(&vals);
    let pass = ((mean - 2.0) / 2.0).abs() <= 0.05;
    check(
        3,
        "law of large numbers",
        pass,
        format!("mean x_400(1)/20 = {mean:.4} ± {:.4} over 2000 seeds", (var / 2000.0).sqrt()),
    );
}

#[test]
fn criterion_04_stationarity() {
    let b = burke_check(31, 1.0, 10.0, 10_000, MC_SUP_RULE).unwrap();
    check(
        4,
        "stationarity suite",
        b.pass(),
        format!(
            "sup mean {:.4} (target {:.4}); gap KS {:.4} (band {:.4}); variance {:.3} (target {:.1})",
            b.sup_mean, b.sup_target, b.gap_ks, b.gap_band, b.variance, b.variance_target
        ),
    );
}

#[test]
fn criterion_05_attractiveness() {
    let rows = attractiveness_rows(55, 5.0, 0.01, 100).unwrap();
    let violations: f64 = rows.iter().map(|r| r.statistic).sum();
    let pass = rows.iter().all(|r| r.pass) && violations == 0.0;
    check(5, "attractiveness", pass, format!("{} flavor pairs, {violations} violations", rows.len()));
}

#[test]
fn criterion_06_limit_identities() {
    let mut parts = Vec::new();
    let mut pass = true;

    let goe: f64 = [-1.0, 0.0, 1.0]
        .iter()
        .map(|&s| {
            let g = f_goe_2s(s / 2.0).unwrap();
            (one_point(LimitProcess::Airy2ToBm, 0.0, s) - g * g).abs()
        })
        .fold(0.0, f64::max);
    pass &= goe <= 1e-5;
    parts.push(format!("GOE² gap {goe:.1e}"));

    // Process levels x; at r = -3 the event is A(r) ≤ x, i.e. kernel level x - 9.
    let levels = [-2.0, -1.0, 0.0, 1.0];
    let left = levels
        .iter()
        .map(|&x| (one_point(LimitProcess::Airy2To1, -3.0, x - 9.0) - f_gue(x).unwrap()).abs())
        .fold(0.0, f64::max);
    pass &= left <= 1e-3;
    parts.push(format!("crossover vs Airy2 at r=-3 {left:.1e}"));

    let right = levels
        .iter()
        .map(|&x| (one_point(LimitProcess::Airy2To1, 3.0, x) - f_goe_2s(x / 2f64.cbrt()).unwrap()).abs())
        .fold(0.0, f64::max);
    pass &= right <= 1e-3;
    parts.push(format!("crossover vs Airy1 at r=3 {right:.1e}"));

    let mut forms = 0.0f64;
    for (r, s) in [(vec![0.0], vec![-1.0]), (vec![0.0], vec![0.5]), (vec![-0.4, 0.6], vec![-1.0, -0.5]), (vec![0.1, 0.9], vec![0.0, 0.3])] {
        let shifted: Vec<f64> = r.iter().zip(&s).map(|(x, y)| y + x * x).collect();
        let a = cdf_limit(LimitProcess::Airy2, &PointConfig::new(r.clone(), s).unwrap(), LimitOptions::default()).unwrap();
        let b = cdf_limit(LimitProcess::Airy2Prime, &PointConfig::new(r, shifted).unwrap(), LimitOptions::default()).unwrap();
        forms = forms.max((a - b).abs());
    }
    pass &= forms <= 1e-6;
    parts.push(format!("two Airy2 forms {forms:.1e}"));
    check(6, "limit identities", pass, parts.join("; "));
}

#[test]
fn criterion_07_finite_step_interpolation() {
    let mut pass = true;
    let mut parts = Vec::new();
    for s in [-1.0, 0.0, 1.0] {
        let stat = baik_rains(s).unwrap();
        let small: Vec<f64> = [0.5, 0.25, 0.125]
            .iter()
            .map(|&d| (one_point(LimitProcess::FiniteStep { delta: d }, 0.0, s) - stat).abs())
            .collect();
        pass &= small.windows(2).all(|w| w[1] < w[0]);
        let large: Vec<f64> = [4.0, 8.0, 16.0]
            .iter()
            .map(|&d| {
                [0.0, 0.5]
                    .iter()
                    .map(|&r: &f64| {
                        let bm = one_point(LimitProcess::Airy2ToBm, r, s + r * r);
                        (one_point(LimitProcess::FiniteStep { delta: d }, r, s) - bm).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        pass &= large.windows(2).all(|w| w[1] < w[0]);
        parts.push(format!("s={s}: small δ {}, large δ {}", sci(&small), sci(&large)));
    }
    check(7, "finite-step interpolation", pass, parts.join("; "));
}

#[test]
fn criterion_08_baik_rains_mean() {
    let mean: f64 = composite(0.0, 8.0, 4, 10)
        .into_iter()
        .map(|(x, w)| w * ((1.0 - baik_rains(x).unwrap()) - baik_rains(-x).unwrap()))
        .sum();
    check(8, "Baik–Rains mean", mean.abs() <= 0.02, format!("mean {mean:.2e}"));
}

#[test]
fn criterion_09_convergence_sweeps() {
    let points: Vec<(f64, f64)> = [-0.25, 0.0, 0.25]
        .iter()
        .flat_map(|&r| [-2.0, -1.0, 0.0, 1.0, 2.0].map(|s| (r, s)))
        .collect();
    let dist: Vec<f64> = [1e2, 1e3, 1e4]
        .iter()
        .map(|&t| {
            points
                .iter()
                .map(|&(r, s)| {
                    let ai = rbm_kpz::specfun::airy_ai(r * r + s);
                    let e = (2.0 * r * r * r / 3.0 + r * s).exp();
                    let (a, b) = alpha_beta(t, r, s).unwrap();
                    (a - ai / e).abs().max((b + ai * e).abs())
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let ab_pass = dist.windows(2).all(|w| w[1] <= w[0]);

    let mut cfg = ExperimentConfig::new(ExperimentKind::FiniteTVsLimit, 0);
    cfg.flavor = Some("packed".into());
    cfg.process = Some("airy2".into());
    cfg.t = Some(Times::Many(vec![25.0, 100.0, 400.0]));
    cfg.r = vec![0.0];
    cfg.s = vec![-3.0, -2.0, -1.0, 0.0, 1.0, 2.0];
    let rep = run_experiment(&cfg).unwrap();
    let sweep: Vec<f64> = rep.rows.iter().map(|r| r.statistic).collect();
    check(
        9,
        "convergence sweeps",
        ab_pass && rep.pass,
        format!("α/β sup distance at t=1e2,1e3,1e4 {}; packed vs F_GUE at t=25,100,400 {}", sci(&dist), sci(&sweep)),
    );
}

#[test]
fn criterion_10_gaussian_increments() {
    let n = 2000;
    let opts = SampleOptions { sup_rule: MC_SUP_RULE, ..SampleOptions::default() };
    let flavor = Flavor::Stat { lambda: 1.0, rho: 1.0 };
    let rows = rescaled_samples(flavor, 100.0, &[0.0, 0.5, 1.0], &[0.0; 3], n, 1010, opts).unwrap();
    let band = 2.0 * dkw_band(n);
    let mut pass = true;
    let mut parts = Vec::new();
    for (k, r) in [(1usize, 0.5), (2, 1.0)] {
        let inc: Vec<f64> = rows.iter().map(|row| row[k].value - row[0].value).collect();
        let (mean, var) = mean_var(&inc);
        let mut sorted = inc.clone();
        sorted.sort_by(f64::total_cmp);
        let ks = sorted
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = normal_cdf(x, 2.0 * r);
                (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        pass &= ((var - 2.0 * r) / (2.0 * r)).abs() <= 0.1 && ks <= band;
        parts.push(format!("r={r}: mean {mean:.3}, var {var:.3} (target {:.1}), KS {ks:.4} (bound {band:.4})", 2.0 * r));
    }
    check(10, "Gaussian increments", pass, parts.join("; "));
}

#[test]
fn criterion_11_numerical_self_consistency() {
    let t = 25.0;
    let n0 = 25i64;
    let a = |n: i64, s: f64| 2.0 * t + 2.0 * (n - n0) as f64 + t.cbrt() * s;
    let flavors = [
        Flavor::Packed,
        Flavor::Flat,
        Flavor::HalfFlat,
        Flavor::HalfStat { lambda: 0.5 },
        Flavor::Stat { lambda: 1.0, rho: 0.5 },
        Flavor::StatFlat { rho: 0.5 },
    ];
    let mut finite_gap = 0.0f64;
    for f in flavors {
        for (ns, ss) in [(vec![n0], vec![-1.0]), (vec![n0], vec![0.5]), (vec![n0, n0 + 5], vec![0.0, 0.5])] {
            let levels: Vec<f64> = ns.iter().zip(&ss).map(|(&n, &s)| a(n, s)).collect();
            let base = FiniteOptions::default();
            let lo = finite_t_cdf(f, t, &ns, &levels, base).unwrap();
            let hi = finite_t_cdf(f, t, &ns, &levels, FiniteOptions { order: 2 * base.order, ..base }).unwrap();
            finite_gap = finite_gap.max((lo - hi).abs());
        }
    }

    let processes = [
        LimitProcess::Airy2,
        LimitProcess::Airy2Prime,
        LimitProcess::Airy1,
        LimitProcess::Airy2To1,
        LimitProcess::Airy2ToBm,
        LimitProcess::AiryBmTo1,
        LimitProcess::FiniteStep { delta: 1.0 },
        LimitProcess::AiryStat,
    ];
    let mut limit_gap = 0.0f64;
    for p in processes {
        for (r, s) in [(vec![0.0], vec![-1.0]), (vec![0.3], vec![0.5]), (vec![-0.5, 0.5], vec![0.0, 0.5])] {
            let cfg = PointConfig::new(r, s).unwrap();
            let base = LimitOptions::default();
            let lo = cdf_limit(p, &cfg, base).unwrap();
            let hi = cdf_limit(p, &cfg, LimitOptions { order: 2 * base.order, ..base }).unwrap();
            limit_gap = limit_gap.max((lo - hi).abs());
        }
    }

    let mut cfg = ExperimentConfig::new(ExperimentKind::McVsFiniteT, 5);
    cfg.flavor = Some("half-flat".into());
    cfg.t = Some(Times::One(4.0));
    cfg.r = vec![0.0, 0.5];
    cfg.samples = Some(400);
    let dir = tempfile::tempdir().unwrap();
    cfg.out = Some(dir.path().join("report.json"));
    let out = cfg.out.clone().unwrap();
    let run = || {
        let rep = run_experiment(&cfg).unwrap();
        let written: Vec<Vec<u8>> =
            ["csv", "samples.csv"].iter().map(|e| std::fs::read(out.with_extension(e)).unwrap()).collect();
        (rep.reproducible_json(), written)
    };
    let (json_a, csv_a) = run();
    let (json_b, csv_b) = run();
    let reproducible = json_a == json_b && csv_a == csv_b;

    // Every derivative prefactor returns an error when its Richardson pair
    // disagrees by more than 1e-4, so the evaluations above already check it.
    let pass = finite_gap <= 1e-6 && limit_gap <= 1e-6 && reproducible;
    check(
        11,
        "numerical self-consistency",
        pass,
        format!(
            "finite-t order doubling {finite_gap:.1e}; limit order doubling {limit_gap:.1e}; derivatives stable; reports reproducible: {reproducible}"
        ),
    );
}

#[test]
fn criterion_12_slow_decorrelation() {
    let n = 5000;
    let opts = SampleOptions { sup_rule: MC_SUP_RULE, ..SampleOptions::default() };
    let rows = rescaled_samples(Flavor::Packed, 100.0, &[0.0, 0.0], &[0.0, 10.0], n, 1212, opts).unwrap();
    let base: Vec<f64> = rows.iter().map(|r| r[0].value).collect();
    let late: Vec<f64> = rows.iter().map(|r| r[1].value).collect();
    let ks = two_sample_ks(&base, &late);
    let band = 2.0 * dkw_band(n);
    let gap = rows.iter().map(|r| (r[1].value - r[0].value).abs()).sum::<f64>() / n as f64;
    check(12, "slow decorrelation", ks <= band, format!("KS {ks:.4} (bound {band:.4}); mean |difference| {gap:.3}"));
}
