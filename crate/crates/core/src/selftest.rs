//! Built-in consistency checks: proximal maps against brute-force searches,
//! sparse kernels against dense arithmetic, dimension-reduction equivalence
//! and sufficient decrease on recorded traces.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data_bench::{synthetic_instance, SamplingMode, Scheme, SynthSpec};
use crate::error::Result;
use crate::obskernel::{half_sq_loss, resid_mul_y, resid_t_mul_x, residual, FactorPair, Matrix, ObservationSet};
use crate::regprox::{prox_col_capped, prox_col_hard, Branch};
use crate::solver::{solve, SolveReport, SolverConfig, Variant};

/// Deliberate defects for checking that the suite notices them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// Hard threshold at `sqrt(alpha)` instead of `sqrt(2 alpha)`.
    Prox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SelftestOptions {
    pub quick: bool,
    pub fault: Fault,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn hard_under_test(eta: &DVector<f64>, alpha: f64, radius: f64, fault: Fault) -> DVector<f64> {
    match fault {
        Fault::None => prox_col_hard(eta.as_view(), alpha, radius),
        Fault::Prox => prox_col_hard(eta.as_view(), alpha / 2.0, radius),
    }
}

fn gaussian_vec(len: usize, scale: f64, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(len, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        scale * z
    })
}

/// Minimizer of `0.5 (|eta| - s)^2 + alpha [s > 0]` over a grid of `s` in
/// `[0, radius]` that also contains `min(|eta|, radius)`; the prox lies on the
/// ray through `eta`, so this searches the whole feasible set.
pub fn hard_oracle(eta: &DVector<f64>, alpha: f64, radius: f64, grid: usize) -> (f64, f64) {
    let ne = eta.norm();
    let cost = |s: f64| 0.5 * (ne - s) * (ne - s) + if s > 0.0 { alpha } else { 0.0 };
    let mut best = (0.0, cost(0.0));
    let candidates = std::iter::once(ne.min(radius)).chain((1..=grid).map(|t| (radius * t as f64 / grid as f64).min(radius)));
    for s in candidates {
        let c = cost(s);
        if c < best.1 {
            best = (s, c);
        }
    }
    best
}

/// Grid minimizer (spacing `h`) of `0.5 (|eta| - s)^2 + tau s` (linear) or
/// `0.5 (|eta| - s)^2` (constant) over `s` in `[0, radius]`.
pub fn capped_oracle(ne: f64, tau: f64, radius: f64, branch: Branch, h: f64) -> f64 {
    let steps = (radius / h).ceil() as usize;
    let slope = match branch {
        Branch::Linear => tau,
        Branch::Constant => 0.0,
    };
    let mut best = (0.0, 0.5 * ne * ne);
    for t in 1..=steps {
        let s = (t as f64 * h).min(radius);
        let c = 0.5 * (ne - s) * (ne - s) + slope * s;
        if c < best.1 {
            best = (s, c);
        }
    }
    best.0
}

fn check_prox_hard(draws: usize, fault: Fault, rng: &mut ChaCha8Rng) -> CheckOutcome {
    let mut worst = String::new();
    let mut failures = 0;
    for _ in 0..draws {
        let len = rng.random_range(1..=6);
        let eta = gaussian_vec(len, rng.random_range(0.1..4.0), rng);
        let alpha = rng.random_range(0.0..4.0);
        let radius = rng.random_range(0.05..6.0);
        let got = hard_under_test(&eta, alpha, radius, fault);
        let (s, best) = hard_oracle(&eta, alpha, radius, 400);
        let ne = eta.norm();
        let near_tie = (0.5 * ne * ne - (0.5 * (ne - ne.min(radius)).powi(2) + alpha)).abs() <= 1e-12 * (1.0 + ne * ne);
        if near_tie {
            continue;
        }
        let want = if s == 0.0 { DVector::zeros(len) } else { &eta * (s / ne) };
        if got != want {
            failures += 1;
            if worst.is_empty() {
                worst = format!(
                    ", first at eta norm {ne:.6}, alpha {alpha:.6}, radius {radius:.6}: got norm {:.6}, oracle {s:.6} (cost {best:.6})",
                    got.norm()
                );
            }
        }
    }
    CheckOutcome { name: "prox_hard_vs_search", passed: failures == 0, detail: format!("{failures}/{draws} mismatches{worst}") }
}

fn check_prox_capped(draws: usize, rng: &mut ChaCha8Rng) -> CheckOutcome {
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for _ in 0..draws {
        let len = rng.random_range(1..=6);
        let eta = gaussian_vec(len, rng.random_range(0.1..3.0), rng);
        let tau = rng.random_range(0.0..3.0);
        let radius = rng.random_range(0.05..4.0);
        let branch = if rng.random_bool(0.5) { Branch::Linear } else { Branch::Constant };
        let got = prox_col_capped(eta.as_view(), tau, radius, branch);
        let s = capped_oracle(eta.norm(), tau, radius, branch, h);
        let want = &eta * (s / eta.norm());
        worst = worst.max((got - want).norm());
    }
    CheckOutcome { name: "prox_capped_vs_grid", passed: worst <= h, detail: format!("max deviation {worst:.3e} (grid {h:.0e})") }
}

fn random_instance(m: usize, n: usize, d: usize, rng: &mut ChaCha8Rng) -> Result<(ObservationSet, FactorPair)> {
    let mut trip = Vec::new();
    for i in 0..m {
        for j in 0..n {
            if rng.random_bool(0.4) {
                trip.push((i, j, StandardNormal.sample(rng)));
            }
        }
    }
    if trip.is_empty() {
        trip.push((0, 0, 1.0));
    }
    let obs = ObservationSet::from_triplets(m, n, &trip)?;
    let x = Matrix::from_fn(m, d, |_, _| StandardNormal.sample(rng));
    let y = Matrix::from_fn(n, d, |_, _| StandardNormal.sample(rng));
    Ok((obs, FactorPair::new(x, y)?))
}

fn check_kernels(instances: usize, rng: &mut ChaCha8Rng) -> Result<CheckOutcome> {
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let m = rng.random_range(1..=30);
        let n = rng.random_range(1..=30);
        let d = rng.random_range(1..=5);
        let (obs, pair) = random_instance(m, n, d, rng)?;
        let mask = Matrix::from_fn(m, n, |_, _| 0.0);
        let mut mask = mask;
        for (i, j, _) in obs.iter() {
            mask[(i, j)] = 1.0;
        }
        let dense_r = (pair.product() - obs.to_dense()).component_mul(&mask);
        let r = residual(&obs, &pair)?;
        let mut dev: f64 = 0.0;
        for ((i, j, _), v) in obs.iter().zip(r.values()) {
            dev = dev.max((dense_r[(i, j)] - v).abs());
        }
        dev = dev.max((half_sq_loss(&r) - 0.5 * dense_r.norm_squared()).abs());
        dev = dev.max((resid_mul_y(&obs, &r, &pair.y)? - &dense_r * &pair.y).amax());
        dev = dev.max((resid_t_mul_x(&obs, &r, &pair.x)? - dense_r.transpose() * &pair.x).amax());
        worst = worst.max(dev);
    }
    Ok(CheckOutcome { name: "kernels_vs_dense", passed: worst <= 1e-12, detail: format!("max deviation {worst:.3e}") })
}

fn small_synthetic(n: usize, seed: u64) -> Result<ObservationSet> {
    let spec = SynthSpec { n, rank: 3, sr: 0.3, noise: 0.1, scheme: Scheme::One, mode: SamplingMode::ExactCount, seed };
    Ok(synthetic_instance(&spec)?.observed)
}

/// Largest per-iteration gap between the objective traces of two runs, or
/// infinity when their lengths differ.
pub fn trace_gap(a: &SolveReport, b: &SolveReport) -> f64 {
    if a.trace.len() != b.trace.len() {
        return f64::INFINITY;
    }
    a.trace.iter().zip(&b.trace).map(|(s, t)| (s.f0 - t.f0).abs()).fold(0.0, f64::max)
}

fn check_reduction(instances: usize, n: usize, seed: u64) -> Result<CheckOutcome> {
    let mut worst: f64 = 0.0;
    for t in 0..instances as u64 {
        let obs = small_synthetic(n, seed + t)?;
        for variant in [Variant::Alg1, Variant::Alg2] {
            let mut cfg = SolverConfig::with_width(&obs, 1.0, variant, 10);
            cfg.lambda = 2.0;
            cfg.refresh_nu(&obs);
            cfg.reduce_dims = true;
            let a = solve(&cfg, &obs)?;
            cfg.reduce_dims = false;
            let b = solve(&cfg, &obs)?;
            worst = worst.max(trace_gap(&a, &b));
        }
    }
    Ok(CheckOutcome { name: "reduction_equivalence", passed: worst <= 1e-12, detail: format!("max objective gap {worst:.3e}") })
}

/// Iterations violating `F(k) <= F(k-1) - c_min * step_sq(k) + slack` for
/// `k >= from` (objective `F` relaxed for the first variant, `F0` otherwise).
pub fn decrease_violations(report: &SolveReport, variant: Variant, c_min: f64, from: usize, slack: f64) -> Vec<usize> {
    let value = |t: &crate::solver::IterRecord| match variant {
        Variant::Alg1 => t.f_relaxed,
        _ => t.f0,
    };
    report
        .trace
        .windows(2)
        .filter(|w| w[1].k >= from.max(1))
        .filter(|w| {
            let prev = value(&w[0]);
            value(&w[1]) > prev - c_min * w[1].step_sq + slack
        })
        .map(|w| w[1].k)
        .collect()
}

fn check_decrease(instances: usize, n: usize, seed: u64) -> Result<CheckOutcome> {
    let mut bad = 0;
    let mut caps = 0;
    for t in 0..instances as u64 {
        let obs = small_synthetic(n, seed + 100 + t)?;
        for variant in [Variant::Alg1, Variant::Alg2] {
            let mut cfg = SolverConfig::with_width(&obs, 1.0, variant, 10);
            cfg.lambda = 1.5;
            cfg.refresh_nu(&obs);
            let rep = solve(&cfg, &obs)?;
            bad += decrease_violations(&rep, variant, cfg.c_min, cfg.nu_switch, 1e-10).len();
            caps += rep.diagnostics.cap_violations;
        }
    }
    Ok(CheckOutcome {
        name: "sufficient_decrease",
        passed: bad == 0 && caps == 0,
        detail: format!("{bad} decrease violations, {caps} step-cap violations"),
    })
}

/// Run every check; the result lists each check once.
pub fn run(opts: &SelftestOptions) -> Result<Vec<CheckOutcome>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (draws, kernels, dr, n) = if opts.quick { (300, 20, 3, 30) } else { (1000, 100, 10, 60) };
    Ok(vec![
        check_prox_hard(draws, opts.fault, &mut rng),
        check_prox_capped(if opts.quick { 100 } else { draws }, &mut rng),
        check_kernels(kernels, &mut rng)?,
        check_reduction(dr, n, opts.seed)?,
        check_decrease(dr, n, opts.seed)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_suite_passes() {
        let out = run(&SelftestOptions { quick: true, ..Default::default() }).unwrap();
        for c in &out {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }

    #[test]
    fn injected_fault_is_caught() {
        let out = run(&SelftestOptions { quick: true, fault: Fault::Prox, seed: 3 }).unwrap();
        assert!(!out[0].passed);
    }
}
