//! Data-driven choice of `lambda`: thresholds from the first proximal step,
//! a grid between them, and a scan that stops when adding columns stops
//! paying off in loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::obskernel::{half_sq_loss, resid_mul_y, residual_of, spectral_norm, ObservationSet};
use crate::regprox::nnzc;
use crate::solver::{init_factors, solve_from, Init, SolveReport, SolverConfig, Variant};

/// Which threshold formula to use: the linear-branch one (relaxed solver) or
/// the hard-threshold one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Relaxed,
    Hard,
}

impl Family {
    pub fn for_variant(v: Variant) -> Self {
        match v {
            Variant::Alg1 => Family::Relaxed,
            _ => Family::Hard,
        }
    }
}

/// Smallest lambda placed on a grid.
pub const LAMBDA_FLOOR: f64 = 1e-12;

/// Everything the thresholds are computed from.
#[derive(Debug, Clone)]
pub struct PathSetup {
    pub init: Init,
    /// Squared column norms of the first proximal point, descending.
    pub q: Vec<f64>,
    pub iota_base: f64,
    pub nu0: f64,
}

impl PathSetup {
    pub fn new(obs: &ObservationSet, config: &SolverConfig) -> Result<Self> {
        let init = init_factors(obs, config.width, config.radius, config.seed)?;
        Self::from_init(obs, config, init)
    }

    pub fn from_init(obs: &ObservationSet, config: &SolverConfig, init: Init) -> Result<Self> {
        let ny2 = spectral_norm(&init.pair.y).powi(2);
        let iota_base = config.iota_lo.max(ny2 / 2.0).min(config.iota_hi);
        let q = q_vector(obs, &init, iota_base)?;
        let nu0 = config.nu0.unwrap_or(if init.sigma1 > 0.0 { init.sigma1.sqrt() } else { config.nu });
        Ok(Self { init, q, iota_base, nu0 })
    }

    pub fn beta(&self, family: Family, r: usize) -> Result<f64> {
        beta(family, r, &self.q, self.iota_base, self.nu0)
    }
}

/// Squared column norms of `X0 - (R Y0) / iota_base`, sorted descending.
///
/// A column of the first proximal point survives the hard threshold exactly
/// when `lambda < iota * |Q_i|^2 / 2`, and the linear shrink when
/// `lambda < iota * nu0 * |Q_i|`; squaring here makes both thresholds in
/// [`beta`] exact.
pub fn q_vector(obs: &ObservationSet, init: &Init, iota_base: f64) -> Result<Vec<f64>> {
    if iota_base <= 0.0 {
        return Err(Error::InvalidConfig("base step must be positive".into()));
    }
    let p = &init.pair;
    let r = residual_of(obs, &p.x, &p.y)?;
    let g = resid_mul_y(obs, &r, &p.y)?;
    let q_mat = &p.x - g / iota_base;
    let mut q: Vec<f64> = q_mat.column_iter().map(|c| c.norm_squared()).collect();
    q.sort_by(|a, b| b.total_cmp(a));
    Ok(q)
}

/// Threshold above which at most `r` columns survive the first step.
/// `r = 0` uses the largest entry of `q`; `r = d` is 0.99 times the value at `d - 1`.
pub fn beta(family: Family, r: usize, q: &[f64], iota_base: f64, nu0: f64) -> Result<f64> {
    let d = q.len();
    if d == 0 || r > d {
        return Err(Error::IndexOutOfRange { index: r, max: d });
    }
    if r == d {
        return Ok(0.99 * beta(family, d - 1, q, iota_base, nu0)?);
    }
    let qr = q[r];
    Ok(match family {
        Family::Relaxed => iota_base * nu0 * qr.sqrt(),
        Family::Hard => iota_base * qr / 2.0,
    })
}

/// Threshold at a possibly fractional column count, rounded up.
pub fn beta_at(family: Family, nz: f64, q: &[f64], iota_base: f64, nu0: f64) -> Result<f64> {
    let r = (nz.ceil().max(0.0) as usize).min(q.len());
    beta(family, r, q, iota_base, nu0)
}

fn order_stat_desc(v: &[f64], k: usize) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    s[(k - 1).min(s.len() - 1)]
}

/// Index of the first gap in `q` that is both among the five largest
/// absolute gaps and among the two largest relative gaps; 1 if none.
pub fn select_r0(q: &[f64]) -> usize {
    if q.len() < 2 {
        return 1;
    }
    let diff: Vec<f64> = q.windows(2).map(|w| w[0] - w[1]).collect();
    let rela: Vec<f64> = q.windows(2).map(|w| (w[0] - w[1]) / w[1].max(0.001)).collect();
    let t_diff = order_stat_desc(&diff, 5);
    let t_rela = order_stat_desc(&rela, 2);
    (0..diff.len()).find(|&i| diff[i] >= t_diff && rela[i] >= t_rela).map(|i| i + 1).unwrap_or(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridMethod {
    /// `lambda_i = beta(ceil(d i / n))`.
    AverageRank,
    /// Linear from `beta(r0)` down to `beta(d)`.
    AverageDistance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    pub family: Family,
    pub method: GridMethod,
    /// `n_lambda + 1` values, nonincreasing.
    pub values: Vec<f64>,
    pub n_lambda: usize,
    pub r0: usize,
}

pub fn lambda_grid(family: Family, q: &[f64], iota_base: f64, nu0: f64, n_lambda: usize, r0: usize) -> Result<LambdaGrid> {
    if n_lambda == 0 {
        return Err(Error::InvalidConfig("grid needs at least one step".into()));
    }
    let d = q.len();
    let b = |r: usize| beta(family, r, q, iota_base, nu0);
    let (method, values) = if r0 <= 1 {
        let mut v = vec![b(1.min(d))?];
        for i in 1..=n_lambda {
            v.push(b((d * i).div_ceil(n_lambda).min(d))?);
        }
        (GridMethod::AverageRank, v)
    } else {
        let hi = b(r0.min(d))?;
        let lo = b(d)?;
        let v = (0..=n_lambda).map(|i| hi - (hi - lo) * i as f64 / n_lambda as f64).collect();
        (GridMethod::AverageDistance, v)
    };
    // monotone and strictly positive
    let mut values: Vec<f64> = values.into_iter().map(|v: f64| v.max(LAMBDA_FLOOR)).collect();
    for i in 1..values.len() {
        values[i] = values[i].min(values[i - 1]);
    }
    Ok(LambdaGrid { family, method, values, n_lambda, r0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathOptions {
    pub delta1: f64,
    pub delta2: f64,
    /// Skip solves whose lambda is still above the threshold for the
    /// previous column count.
    pub screening: bool,
}

impl PathOptions {
    pub fn synthetic() -> Self {
        Self { delta1: 1.0, delta2: 3.0, screening: true }
    }

    pub fn real() -> Self {
        Self { delta1: 0.1, delta2: 1.0, screening: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub i: usize,
    pub lambda: f64,
    pub solved: bool,
    pub loss: f64,
    pub nz: f64,
    pub zeta: f64,
    /// 1 or 2 when that criterion fired at this index.
    pub criterion: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathState {
    pub records: Vec<PathRecord>,
    pub chosen: usize,
    /// `None` when no criterion fired and the last solved point was used.
    pub criterion: Option<u8>,
}

pub struct PathOutcome {
    pub report: SolveReport,
    pub lambda: f64,
    pub state: PathState,
}

fn zeta(loss: f64, loss_prev: f64, nz: f64, nz_prev: f64) -> f64 {
    let den = (loss * (nz - nz_prev)).abs();
    if den == 0.0 {
        0.0
    } else {
        (loss - loss_prev).abs() / den
    }
}

/// Walk the grid from large to small `lambda`, solving where needed, and
/// return the first solution singled out by the loss-per-column criteria.
pub fn path_solve(
    base: &SolverConfig,
    obs: &ObservationSet,
    setup: &PathSetup,
    grid: &LambdaGrid,
    opts: &PathOptions,
) -> Result<PathOutcome> {
    if !(opts.delta1 > 0.0 && opts.delta2 > 0.0) {
        return Err(Error::InvalidConfig("criteria thresholds must be positive".into()));
    }
    let d = base.width as f64;
    let solve_at = |lambda: f64| -> Result<SolveReport> {
        let mut cfg = base.clone();
        cfg.lambda = lambda;
        cfg.refresh_nu(obs);
        solve_from(&cfg, obs, &setup.init)
    };
    let zero_loss = half_sq_loss(&residual_of(obs, &setup.init.pair.x.scale(0.0), &setup.init.pair.y.scale(0.0))?);

    let first = solve_at(grid.values[1])?;
    let f1 = first.loss;
    let mut loss = vec![(0.9 * f1).max(zero_loss), f1];
    let mut nz = vec![0.0, (0.1 * d).min(nnzc(&first.pair.x) as f64)];
    let mut zetas = vec![0.0, zeta(loss[1], loss[0], nz[1], nz[0])];
    let mut records = vec![PathRecord { i: 0, lambda: grid.values[0], solved: false, loss: loss[0], nz: 0.0, zeta: 0.0, criterion: None }];
    let mut solutions: Vec<Option<(SolveReport, f64)>> = vec![None, Some((first, grid.values[1]))];
    records.push(PathRecord { i: 1, lambda: grid.values[1], solved: true, loss: loss[1], nz: nz[1], zeta: zetas[1], criterion: None });
    let mut last_solved = 1;

    let decide = |i: usize, zetas: &[f64], records: &mut Vec<PathRecord>| -> Option<(usize, u8)> {
        if zetas[i] > opts.delta1 {
            records[i].criterion = Some(1);
            return Some((i, 1));
        }
        if zetas[i] != 0.0 {
            if let Some(star) = (1..i).rev().find(|&t| zetas[t] != 0.0) {
                if zetas[star] / zetas[i] > opts.delta2 {
                    records[i].criterion = Some(2);
                    return Some((star, 2));
                }
            }
        }
        None
    };

    let mut pick = decide(1, &zetas, &mut records);
    let mut i = 2;
    while pick.is_none() && i <= grid.n_lambda {
        let lambda = grid.values[i];
        let threshold = beta_at(grid.family, nz[i - 1], &setup.q, setup.iota_base, setup.nu0)?;
        let solved = !(opts.screening && lambda >= threshold);
        if solved {
            let rep = solve_at(lambda)?;
            loss.push(rep.loss);
            nz.push(nnzc(&rep.pair.x) as f64);
            solutions.push(Some((rep, lambda)));
            last_solved = i;
        } else {
            loss.push(loss[i - 1]);
            nz.push(nz[i - 1]);
            solutions.push(None);
        }
        zetas.push(zeta(loss[i], loss[i - 1], nz[i], nz[i - 1]));
        records.push(PathRecord { i, lambda, solved, loss: loss[i], nz: nz[i], zeta: zetas[i], criterion: None });
        pick = decide(i, &zetas, &mut records);
        i += 1;
    }

    let (chosen, criterion) = match pick {
        Some((idx, c)) => (idx, Some(c)),
        None => (last_solved, None),
    };
    let (report, lambda) = solutions[chosen].take().expect("chosen index was solved");
    Ok(PathOutcome { report, lambda, state: PathState { records, chosen, criterion } })
}

/// Convenience wrapper: thresholds, grid and scan from a base configuration.
pub fn auto_lambda(base: &SolverConfig, obs: &ObservationSet, n_lambda: usize, opts: &PathOptions) -> Result<(PathOutcome, LambdaGrid)> {
    let setup = PathSetup::new(obs, base)?;
    let family = Family::for_variant(base.variant);
    let r0 = select_r0(&setup.q);
    let grid = lambda_grid(family, &setup.q, setup.iota_base, setup.nu0, n_lambda, r0)?;
    let out = path_solve(base, obs, &setup, &grid, opts)?;
    Ok((out, grid))
}
