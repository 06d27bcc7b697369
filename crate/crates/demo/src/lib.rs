//! Browser bindings: each export takes plain numbers and returns a JSON
//! string for the page to draw.

use facrank::data_bench::{synthetic_instance, SamplingMode, Scheme, SynthSpec};
use facrank::lambda_path::{auto_lambda, Family, PathOptions, PathRecord, PathSetup, LAMBDA_FLOOR};
use facrank::regprox::{prox_col_capped, prox_col_hard, Branch};
use facrank::solver::{solve_from, SolverConfig, Variant};
use nalgebra::DVector;
use serde::Serialize;
use wasm_bindgen::prelude::*;

const MAX_N: usize = 400;

#[derive(Serialize)]
pub struct ProxProfile {
    pub input: Vec<f64>,
    pub hard: Vec<f64>,
    pub linear: Vec<f64>,
    pub constant: Vec<f64>,
}

/// Output norm of each column proximal map as a function of the input norm.
pub fn prox_profile(alpha: f64, tau: f64, radius: f64, max_norm: f64, points: usize) -> Result<ProxProfile, String> {
    if !(alpha >= 0.0 && tau >= 0.0 && radius > 0.0 && max_norm > 0.0) || points < 2 {
        return Err("need alpha, tau >= 0, radius, max_norm > 0 and at least 2 points".into());
    }
    let mut p = ProxProfile { input: Vec::new(), hard: Vec::new(), linear: Vec::new(), constant: Vec::new() };
    for t in 0..points {
        let s = max_norm * t as f64 / (points - 1) as f64;
        let eta = DVector::from_vec(vec![s]);
        p.input.push(s);
        p.hard.push(prox_col_hard(eta.as_view(), alpha, radius).norm());
        p.linear.push(prox_col_capped(eta.as_view(), tau, radius, Branch::Linear).norm());
        p.constant.push(prox_col_capped(eta.as_view(), tau, radius, Branch::Constant).norm());
    }
    Ok(p)
}

fn variant(alg: &str) -> Result<Variant, String> {
    alg.parse().map_err(|e| format!("{e}"))
}

fn instance(n: usize, rank: usize, sr: f64, noise: f64, seed: u64) -> Result<facrank::data_bench::TargetInstance, String> {
    if n > MAX_N {
        return Err(format!("n is limited to {MAX_N} in the browser"));
    }
    let spec = SynthSpec { n, rank, sr, noise, scheme: Scheme::One, mode: SamplingMode::ExactCount, seed };
    synthetic_instance(&spec).map_err(|e| format!("{e}"))
}

#[derive(Serialize)]
pub struct Completion {
    pub lambda: f64,
    pub re: f64,
    pub rank: usize,
    pub iters: usize,
    pub f0: Vec<f64>,
    pub nnzc: Vec<usize>,
    /// Column norms of the final left factor, largest first.
    pub column_norms: Vec<f64>,
}

/// Solve a synthetic instance at the threshold that keeps `target_rank` columns after the first step.
pub fn complete(n: usize, rank: usize, sr: f64, noise: f64, alg: &str, target_rank: usize, seed: u64) -> Result<Completion, String> {
    let variant = variant(alg)?;
    let inst = instance(n, rank, sr, noise, seed)?;
    let obs = &inst.observed;
    let mut cfg = SolverConfig::standard(obs, 1.0, variant);
    cfg.seed = seed;
    let setup = PathSetup::new(obs, &cfg).map_err(|e| format!("{e}"))?;
    cfg.lambda = setup.beta(Family::for_variant(variant), target_rank).map_err(|e| format!("{e}"))?.max(LAMBDA_FLOOR);
    cfg.refresh_nu(obs);
    let rep = solve_from(&cfg, obs, &setup.init).map_err(|e| format!("{e}"))?;
    let re = inst.evaluate(&rep.pair).map_err(|e| format!("{e}"))?.re.unwrap_or(f64::NAN);
    let mut column_norms: Vec<f64> = rep.pair.x.column_iter().map(|c| c.norm()).collect();
    column_norms.sort_by(|a, b| b.total_cmp(a));
    Ok(Completion {
        lambda: cfg.lambda,
        re,
        rank: rep.diagnostics.rank_nnzc,
        iters: rep.iterations(),
        f0: rep.trace.iter().map(|t| t.f0).collect(),
        nnzc: rep.trace.iter().map(|t| t.nnzc_x).collect(),
        column_norms,
    })
}

#[derive(Serialize)]
pub struct PathDemo {
    pub records: Vec<PathRecord>,
    pub chosen: usize,
    pub criterion: Option<u8>,
    pub lambda: f64,
    pub rank: usize,
    pub re: f64,
}

/// Scan a lambda grid and report which point the loss-per-column criteria pick.
pub fn lambda_path(n: usize, rank: usize, sr: f64, noise: f64, alg: &str, n_lambda: usize, seed: u64) -> Result<PathDemo, String> {
    let variant = variant(alg)?;
    let inst = instance(n, rank, sr, noise, seed)?;
    let mut base = SolverConfig::standard(&inst.observed, 1.0, variant);
    base.seed = seed;
    let (out, _) = auto_lambda(&base, &inst.observed, n_lambda, &PathOptions::synthetic()).map_err(|e| format!("{e}"))?;
    let re = inst.evaluate(&out.report.pair).map_err(|e| format!("{e}"))?.re.unwrap_or(f64::NAN);
    Ok(PathDemo {
        rank: out.report.diagnostics.rank_nnzc,
        records: out.state.records,
        chosen: out.state.chosen,
        criterion: out.state.criterion,
        lambda: out.lambda,
        re,
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| format!("{e}"))).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = proxProfile)]
pub fn prox_profile_js(alpha: f64, tau: f64, radius: f64, max_norm: f64, points: usize) -> Result<String, JsValue> {
    to_js(prox_profile(alpha, tau, radius, max_norm, points))
}

#[wasm_bindgen(js_name = complete)]
pub fn complete_js(n: usize, rank: usize, sr: f64, noise: f64, alg: &str, target_rank: usize, seed: u32) -> Result<String, JsValue> {
    to_js(complete(n, rank, sr, noise, alg, target_rank, seed as u64))
}

#[wasm_bindgen(js_name = lambdaPath)]
pub fn lambda_path_js(n: usize, rank: usize, sr: f64, noise: f64, alg: &str, n_lambda: usize, seed: u32) -> Result<String, JsValue> {
    to_js(lambda_path(n, rank, sr, noise, alg, n_lambda, seed as u64))
}
