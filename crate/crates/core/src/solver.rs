//! Alternating proximal solvers for the column-sparse factorized model
//!
//! `min f(XY^T) + lambda (nnzc(X) + nnzc(Y))` over column balls of radius
//! `radius`, with `f` half the squared residual on the observed entries.
//!
//! * [`Variant::Alg1`] works on the capped-l1 relaxation, picking the linear or
//!   constant piece per column from the current iterate, with backtracking.
//! * [`Variant::Alg2`] takes hard-threshold proximal steps with backtracking.
//! * [`Variant::PalmFixed`] takes hard-threshold steps with a fixed step size.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::obskernel::{
    dense_svd, half_sq_loss, resid_mul_y, resid_t_mul_x, residual_of, spectral_norm, top_d_svd, FactorPair, Matrix, ObservationSet,
    ResidualVector,
};
use crate::regprox::{
    column_is_zero, has_column_bound, indicator_of, is_column_consistent, nnzc, prox_col_capped, prox_col_hard, sparsity_couple_in_place,
    support, theta_total, Branch, ColumnIndexSet, IndicatorVector,
};

#[cfg(not(target_arch = "wasm32"))]
type Clock = std::time::Instant;

/// Browsers give no monotonic clock to plain wasm; times read as zero there.
#[cfg(target_arch = "wasm32")]
#[derive(Clone, Copy)]
struct Clock;

#[cfg(target_arch = "wasm32")]
impl Clock {
    fn now() -> Self {
        Clock
    }

    fn elapsed(&self) -> std::time::Duration {
        std::time::Duration::ZERO
    }
}

const MAX_DOUBLINGS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Alg1,
    Alg2,
    PalmFixed,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alg1" => Ok(Variant::Alg1),
            "alg2" => Ok(Variant::Alg2),
            "palm" | "palm_fixed" => Ok(Variant::PalmFixed),
            other => Err(Error::InvalidConfig(format!("unknown algorithm {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub lambda: f64,
    /// Column-ball radius.
    pub radius: f64,
    /// Factor width `d`.
    pub width: usize,
    pub nu: f64,
    /// Relaxation parameter before `nu_switch`; `None` uses the square root
    /// of the top singular value of the observed matrix.
    pub nu0: Option<f64>,
    pub rho: f64,
    pub c_min: f64,
    pub c_max: f64,
    pub iota_lo: f64,
    pub iota_hi: f64,
    /// Sparsity coupling runs on iterations `0..couple_first` and on `couple_extra`.
    pub couple_first: usize,
    pub couple_extra: Vec<usize>,
    pub nu_switch: usize,
    /// Iteration at which the base step divisor moves from 2 to 4.
    pub base_switch: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub variant: Variant,
    /// Lipschitz constant of the loss gradient.
    pub lipschitz: f64,
    pub seed: u64,
    pub reduce_dims: bool,
}

pub fn default_width(m: usize, n: usize) -> usize {
    100usize.min(m.min(n).div_ceil(2))
}

pub fn default_radius(obs_frob: f64) -> f64 {
    if obs_frob > 0.0 {
        100.0 * obs_frob.sqrt()
    } else {
        1.0
    }
}

pub fn default_nu(lambda: f64, radius: f64, d: usize, obs_frob: f64) -> f64 {
    0.99 * radius.min(lambda / (radius * (d as f64 * radius * radius + obs_frob)))
}

impl SolverConfig {
    /// Standard parameter choice for a data set: width, radius and `nu` from
    /// the observations, schedule constants as used in the benchmarks.
    pub fn standard(obs: &ObservationSet, lambda: f64, variant: Variant) -> Self {
        let width = default_width(obs.m(), obs.n());
        Self::with_width(obs, lambda, variant, width)
    }

    pub fn with_width(obs: &ObservationSet, lambda: f64, variant: Variant, width: usize) -> Self {
        let frob = obs.frob_norm();
        let radius = default_radius(frob);
        let big = 3.0 * width as f64 * radius * radius;
        Self {
            lambda,
            radius,
            width,
            nu: default_nu(lambda, radius, width, frob),
            nu0: None,
            rho: 2.0,
            c_min: 1e-5,
            c_max: big,
            iota_lo: 1e-5,
            iota_hi: big,
            couple_first: 10,
            couple_extra: Vec::new(),
            nu_switch: 1,
            base_switch: 10,
            tol: 1e-7,
            max_iter: 100,
            variant,
            lipschitz: 1.0,
            seed: 0,
            reduce_dims: true,
        }
    }

    /// Recompute `nu` after changing `lambda`, `radius` or `width`.
    pub fn refresh_nu(&mut self, obs: &ObservationSet) {
        self.nu = default_nu(self.lambda, self.radius, self.width, obs.frob_norm());
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        let finite =
            [self.lambda, self.radius, self.nu, self.rho, self.c_min, self.c_max, self.iota_lo, self.iota_hi, self.tol, self.lipschitz];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("non-finite parameter");
        }
        if self.lambda <= 0.0 {
            return bad("lambda must be positive");
        }
        if self.radius <= 0.0 {
            return bad("radius must be positive");
        }
        if self.width == 0 {
            return bad("width must be at least 1");
        }
        if self.rho <= 1.0 {
            return bad("rho must exceed 1");
        }
        if !(0.0 < self.c_min && self.c_min < self.c_max) {
            return bad("need 0 < c_min < c_max");
        }
        if !(0.0 < self.iota_lo && self.iota_lo < self.iota_hi) {
            return bad("need 0 < iota_lo < iota_hi");
        }
        if !(self.nu > 0.0 && self.nu < self.radius) {
            return bad("nu must lie in (0, radius)");
        }
        if let Some(v) = self.nu0 {
            if !(v > 0.0 && v.is_finite()) {
                return bad("nu0 must be positive");
            }
        }
        if self.tol <= 0.0 {
            return bad("tol must be positive");
        }
        if self.lipschitz <= 0.0 {
            return bad("lipschitz constant must be positive");
        }
        Ok(())
    }

    pub fn couples_at(&self, k: usize) -> bool {
        k < self.couple_first || self.couple_extra.contains(&k)
    }
}

/// Starting factors and the top singular value they came from.
#[derive(Debug, Clone)]
pub struct Init {
    pub pair: FactorPair,
    pub sigma1: f64,
}

/// `X_i = sqrt(s_i) U_i`, `Y_i = sqrt(s_i) V_i` from the top singular triplets
/// of the observed matrix, clipped into the ball of radius `radius`.
pub fn init_factors(obs: &ObservationSet, d: usize, radius: f64, seed: u64) -> Result<Init> {
    let t = top_d_svd(obs, d, seed)?;
    let mut pair = FactorPair::zeros(obs.m(), obs.n(), d);
    for c in 0..d {
        if t.s[c] == 0.0 {
            continue;
        }
        let w = t.s[c].sqrt().min(radius);
        pair.x.set_column(c, &(t.u.column(c) * w));
        pair.y.set_column(c, &(t.v.column(c) * w));
    }
    Ok(Init { pair, sigma1: t.s[0] })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Block {
    X,
    Y,
}

/// One proximal step on a factor block:
/// `prox(current - grad / iota)` column by column.
#[allow(clippy::too_many_arguments)]
pub fn prox_step(
    current: &Matrix,
    grad: &Matrix,
    iota: f64,
    lambda: f64,
    nu_k: f64,
    branches: Option<&IndicatorVector>,
    variant: Variant,
    radius: f64,
) -> Matrix {
    let mut out = Matrix::zeros(current.nrows(), current.ncols());
    for c in 0..current.ncols() {
        let eta: DVector<f64> = current.column(c) - grad.column(c) / iota;
        let col = match (variant, branches) {
            (Variant::Alg1, Some(ind)) => prox_col_capped(eta.as_view(), lambda / (iota * nu_k), radius, ind.0[c]),
            (Variant::Alg1, None) => prox_col_capped(eta.as_view(), lambda / (iota * nu_k), radius, Branch::Linear),
            _ => prox_col_hard(eta.as_view(), lambda / iota, radius),
        };
        out.set_column(c, &col);
    }
    out
}

/// Candidate for the X block: gradient `G_X = R Y` at the current pair.
#[allow(clippy::too_many_arguments)]
pub fn x_update(
    x: &Matrix,
    grad_x: &Matrix,
    iota: f64,
    lambda: f64,
    nu_k: f64,
    branches: Option<&IndicatorVector>,
    variant: Variant,
    radius: f64,
) -> Matrix {
    prox_step(x, grad_x, iota, lambda, nu_k, branches, variant, radius)
}

/// Candidate for the Y block: gradient `G_Y = R^T X` at the updated X.
#[allow(clippy::too_many_arguments)]
pub fn y_update(
    y: &Matrix,
    grad_y: &Matrix,
    iota: f64,
    lambda: f64,
    nu_k: f64,
    branches: Option<&IndicatorVector>,
    variant: Variant,
    radius: f64,
) -> Matrix {
    prox_step(y, grad_y, iota, lambda, nu_k, branches, variant, radius)
}

/// Everything a block line search needs.
pub struct BlockProblem<'a> {
    pub obs: &'a ObservationSet,
    pub block: Block,
    /// The block being updated.
    pub current: &'a Matrix,
    /// The fixed block.
    pub other: &'a Matrix,
    pub grad: &'a Matrix,
    /// Loss at (current, other).
    pub loss: f64,
    pub lambda: f64,
    pub nu_k: f64,
    pub radius: f64,
    pub rho: f64,
    pub variant: Variant,
}

#[derive(Debug, Clone)]
pub struct BlockStep {
    pub candidate: Matrix,
    pub residual: ResidualVector,
    pub loss: f64,
    pub iota: f64,
    pub backtracks: usize,
}

impl BlockProblem<'_> {
    fn penalty(&self, m: &Matrix) -> f64 {
        match self.variant {
            Variant::Alg1 => theta_total(m, self.nu_k),
            _ => nnzc(m) as f64,
        }
    }

    fn evaluate(&self, cand: &Matrix) -> Result<(ResidualVector, f64)> {
        let r = match self.block {
            Block::X => residual_of(self.obs, cand, self.other)?,
            Block::Y => residual_of(self.obs, self.other, cand)?,
        };
        let f = half_sq_loss(&r);
        Ok((r, f))
    }

    fn candidate(&self, iota: f64, branches: Option<&IndicatorVector>) -> Matrix {
        prox_step(self.current, self.grad, iota, self.lambda, self.nu_k, branches, self.variant, self.radius)
    }
}

/// Backtracking from `iota_base` by factors of `rho` until the block objective
/// drops by at least `c |candidate - current|_F^2`.
pub fn line_search_block(prob: &BlockProblem, iota_base: f64, c: f64, iter: usize) -> Result<BlockStep> {
    let branches = match prob.variant {
        Variant::Alg1 => Some(indicator_of(prob.current, prob.nu_k)),
        _ => None,
    };
    let reference = prob.loss + prob.lambda * prob.penalty(prob.current);
    let mut iota = iota_base;
    for l in 0..MAX_DOUBLINGS {
        let cand = prob.candidate(iota, branches.as_ref());
        let (r, f) = prob.evaluate(&cand)?;
        let step = (&cand - prob.current).norm_squared();
        if f + prob.lambda * prob.penalty(&cand) <= reference - c * step {
            return Ok(BlockStep { candidate: cand, residual: r, loss: f, iota, backtracks: l });
        }
        iota *= prob.rho;
    }
    Err(Error::LineSearchDiverged {
        block: match prob.block {
            Block::X => 'X',
            Block::Y => 'Y',
        },
        iter,
    })
}

fn fixed_step(prob: &BlockProblem, iota: f64) -> Result<BlockStep> {
    let cand = prob.candidate(iota, None);
    let (r, f) = prob.evaluate(&cand)?;
    Ok(BlockStep { candidate: cand, residual: r, loss: f, iota, backtracks: 0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Tol,
    MaxIter,
}

/// State after iteration `k` (i.e. the iterate with index `k + 1`) and the
/// step sizes that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub k: usize,
    pub f0: f64,
    pub f_relaxed: f64,
    pub loss: f64,
    pub nnzc_x: usize,
    pub nnzc_y: usize,
    pub active: usize,
    pub iota_x: f64,
    pub iota_y: f64,
    pub backtracks_x: usize,
    pub backtracks_y: usize,
    pub cap_x: f64,
    pub cap_y: f64,
    pub c_x: f64,
    pub c_y: f64,
    /// `|X_new - X|^2 + |Y_new - Y|^2` before sparsity coupling.
    pub step_sq: f64,
    pub grad_x: f64,
    pub grad_y: f64,
    pub consistent: bool,
    pub bounded_nu: bool,
    pub time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartState {
    pub f0: f64,
    pub f_relaxed: f64,
    pub loss: f64,
    pub nnzc_x: usize,
    pub nnzc_y: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationarityResiduals {
    pub raw_x: f64,
    pub raw_y: f64,
    pub projected_x: f64,
    pub projected_y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrongStationarity {
    pub stationary: bool,
    pub consistent: bool,
    pub bounded: bool,
    pub residuals: StationarityResiduals,
}

impl StrongStationarity {
    pub fn holds(&self) -> bool {
        self.stationary && self.consistent && self.bounded
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub strong: StrongStationarity,
    pub rank_nnzc: usize,
    pub rank_numeric: usize,
    pub cap_violations: usize,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub pair: FactorPair,
    pub start: StartState,
    pub trace: Vec<IterRecord>,
    pub termination: Termination,
    pub diagnostics: Diagnostics,
    pub sigma1: f64,
    pub nu0: f64,
    pub loss: f64,
    pub f0: f64,
    pub time_s: f64,
}

impl SolveReport {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

fn restricted_grad_norms(gx: &Matrix, gy: &Matrix, common: &ColumnIndexSet) -> (f64, f64) {
    let nx: f64 = common.0.iter().map(|&c| gx.column(c).norm_squared()).sum();
    let ny: f64 = common.0.iter().map(|&c| gy.column(c).norm_squared()).sum();
    (nx.sqrt(), ny.sqrt())
}

fn projected_norm(g: &Matrix, f: &Matrix, common: &ColumnIndexSet, radius: f64) -> f64 {
    let mut total = 0.0;
    for &c in &common.0 {
        let gc = g.column(c);
        let fc = f.column(c);
        let fn2 = fc.norm_squared();
        let inner = gc.dot(&fc);
        if fn2.sqrt() >= radius * (1.0 - 1e-12) && inner < 0.0 {
            total += (gc - fc * (inner / fn2)).norm_squared();
        } else {
            total += gc.norm_squared();
        }
    }
    total.sqrt()
}

/// Block gradient norms on the common support, raw and with the outward
/// normal-cone component removed for columns on the ball boundary.
pub fn stationarity_residuals(pair: &FactorPair, obs: &ObservationSet, radius: f64) -> Result<StationarityResiduals> {
    let r = residual_of(obs, &pair.x, &pair.y)?;
    let gx = resid_mul_y(obs, &r, &pair.y)?;
    let gy = resid_t_mul_x(obs, &r, &pair.x)?;
    let common = support(&pair.x).intersection(&support(&pair.y));
    let (raw_x, raw_y) = restricted_grad_norms(&gx, &gy, &common);
    Ok(StationarityResiduals {
        raw_x,
        raw_y,
        projected_x: projected_norm(&gx, &pair.x, &common, radius),
        projected_y: projected_norm(&gy, &pair.y, &common, radius),
    })
}

pub fn strong_stationarity_report(pair: &FactorPair, obs: &ObservationSet, nu: f64, eps: f64, radius: f64) -> Result<StrongStationarity> {
    let residuals = stationarity_residuals(pair, obs, radius)?;
    Ok(StrongStationarity {
        stationary: residuals.projected_x <= eps && residuals.projected_y <= eps,
        consistent: is_column_consistent(pair),
        bounded: has_column_bound(pair, nu),
        residuals,
    })
}

/// Rank of `X_I Y_I^T` on the common support, singular values below
/// `1e-6 * sigma_1` treated as zero.
pub fn numerical_rank(pair: &FactorPair) -> usize {
    let common = support(&pair.x).intersection(&support(&pair.y));
    if common.is_empty() {
        return 0;
    }
    let xs = pair.x.select_columns(&common.0);
    let ys = pair.y.select_columns(&common.0);
    let rx = xs.qr().r();
    let ry = ys.qr().r();
    let core = rx * ry.transpose();
    let s = match dense_svd(&core) {
        Ok(t) => t.s,
        Err(_) => core.singular_values().as_slice().to_vec(),
    };
    let s1 = s.iter().cloned().fold(0.0f64, f64::max);
    if s1 == 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > 1e-6 * s1).count()
}

/// Working state: the active columns of the full iterate and where they live.
struct Working {
    pair: FactorPair,
    cols: Vec<usize>,
}

impl Working {
    fn expand(&self, width: usize) -> FactorPair {
        let mut out = FactorPair::zeros(self.pair.x.nrows(), self.pair.y.nrows(), width);
        for (c, &dst) in self.cols.iter().enumerate() {
            out.x.set_column(dst, &self.pair.x.column(c));
            out.y.set_column(dst, &self.pair.y.column(c));
        }
        out
    }

    fn compact(&mut self, grad_x: &mut Matrix) {
        let keep: Vec<usize> =
            (0..self.pair.width()).filter(|&c| !column_is_zero(&self.pair.x, c) || !column_is_zero(&self.pair.y, c)).collect();
        if keep.len() == self.pair.width() {
            return;
        }
        self.pair.x = self.pair.x.select_columns(&keep);
        self.pair.y = self.pair.y.select_columns(&keep);
        *grad_x = grad_x.select_columns(&keep);
        self.cols = keep.iter().map(|&c| self.cols[c]).collect();
    }
}

pub fn solve(config: &SolverConfig, obs: &ObservationSet) -> Result<SolveReport> {
    config.validate()?;
    let start = Clock::now();
    let init = init_factors(obs, config.width, config.radius, config.seed)?;
    solve_inner(config, obs, &init, start)
}

/// Solve from precomputed starting factors (e.g. shared along a lambda path).
pub fn solve_from(config: &SolverConfig, obs: &ObservationSet, init: &Init) -> Result<SolveReport> {
    config.validate()?;
    solve_inner(config, obs, init, Clock::now())
}

fn solve_inner(config: &SolverConfig, obs: &ObservationSet, init: &Init, start: Clock) -> Result<SolveReport> {
    if init.pair.width() != config.width || init.pair.x.nrows() != obs.m() || init.pair.y.nrows() != obs.n() {
        return Err(Error::ShapeMismatch("starting factors do not match the configuration".into()));
    }
    let lambda = config.lambda;
    let nu = config.nu;
    let nu0 = config.nu0.unwrap_or(if init.sigma1 > 0.0 { init.sigma1.sqrt() } else { nu });
    let lf = config.lipschitz;

    let mut w = Working { pair: init.pair.clone(), cols: (0..config.width).collect() };
    let mut r = residual_of(obs, &w.pair.x, &w.pair.y)?;
    let mut loss = half_sq_loss(&r);
    let objective0 = |p: &FactorPair, f: f64| f + lambda * (nnzc(&p.x) + nnzc(&p.y)) as f64;
    let relaxed = |p: &FactorPair, f: f64| f + lambda * (theta_total(&p.x, nu) + theta_total(&p.y, nu));
    let start_state = StartState {
        f0: objective0(&w.pair, loss),
        f_relaxed: relaxed(&w.pair, loss),
        loss,
        nnzc_x: nnzc(&w.pair.x),
        nnzc_y: nnzc(&w.pair.y),
    };
    let mut f0_prev = start_state.f0;
    let mut grad_x = resid_mul_y(obs, &r, &w.pair.y)?;
    let mut trace = Vec::new();
    let mut termination = Termination::MaxIter;

    for k in 0..config.max_iter {
        let nu_k = if k < config.nu_switch { nu0 } else { nu };
        let divisor = if k < config.base_switch { 2.0 } else { 4.0 };

        // X block
        let ny2 = spectral_norm(&w.pair.y).powi(2);
        let c_x = config.c_min.max(ny2 / 5.0).min(config.c_max);
        let prob_x = BlockProblem {
            obs,
            block: Block::X,
            current: &w.pair.x,
            other: &w.pair.y,
            grad: &grad_x,
            loss,
            lambda,
            nu_k,
            radius: config.radius,
            rho: config.rho,
            variant: config.variant,
        };
        let (step_x, cap_x) = match config.variant {
            Variant::PalmFixed => {
                let iota = config.iota_lo.max(config.c_min + lf * ny2);
                (fixed_step(&prob_x, iota)?, iota)
            }
            v => {
                let base = config.iota_lo.max(ny2 / divisor).clamp(config.iota_lo, config.iota_hi);
                let cap = step_cap(v, config, c_x, lf * ny2);
                (line_search_block(&prob_x, base, c_x, k)?, cap)
            }
        };
        let dx = (&step_x.candidate - &w.pair.x).norm_squared();
        let x_new = step_x.candidate;

        // Y block
        let nx2 = spectral_norm(&x_new).powi(2);
        let c_y = config.c_min.max(nx2 / 5.0).min(config.c_max);
        let grad_y = resid_t_mul_x(obs, &step_x.residual, &x_new)?;
        let prob_y = BlockProblem {
            obs,
            block: Block::Y,
            current: &w.pair.y,
            other: &x_new,
            grad: &grad_y,
            loss: step_x.loss,
            lambda,
            nu_k,
            radius: config.radius,
            rho: config.rho,
            variant: config.variant,
        };
        let (step_y, cap_y) = match config.variant {
            Variant::PalmFixed => {
                let iota = config.iota_lo.max(config.c_min + lf * nx2);
                (fixed_step(&prob_y, iota)?, iota)
            }
            v => {
                let base = config.iota_lo.max(nx2 / divisor).clamp(config.iota_lo, config.iota_hi);
                let cap = step_cap(v, config, c_y, lf * nx2);
                (line_search_block(&prob_y, base, c_y, k)?, cap)
            }
        };
        let dy = (&step_y.candidate - &w.pair.y).norm_squared();

        w.pair.x = x_new;
        w.pair.y = step_y.candidate;
        r = step_y.residual;
        loss = step_y.loss;
        if config.couples_at(k) {
            sparsity_couple_in_place(&mut w.pair);
        }

        grad_x = resid_mul_y(obs, &r, &w.pair.y)?;
        let grad_y_now = resid_t_mul_x(obs, &r, &w.pair.x)?;
        let common = support(&w.pair.x).intersection(&support(&w.pair.y));
        let (gxn, gyn) = restricted_grad_norms(&grad_x, &grad_y_now, &common);
        let f0 = objective0(&w.pair, loss);
        trace.push(IterRecord {
            k,
            f0,
            f_relaxed: relaxed(&w.pair, loss),
            loss,
            nnzc_x: nnzc(&w.pair.x),
            nnzc_y: nnzc(&w.pair.y),
            active: w.pair.width(),
            iota_x: step_x.iota,
            iota_y: step_y.iota,
            backtracks_x: step_x.backtracks,
            backtracks_y: step_y.backtracks,
            cap_x,
            cap_y,
            c_x,
            c_y,
            step_sq: dx + dy,
            grad_x: gxn,
            grad_y: gyn,
            consistent: is_column_consistent(&w.pair),
            bounded_nu: has_column_bound(&w.pair, nu),
            time_s: start.elapsed().as_secs_f64(),
        });

        let change = (f0 - f0_prev).abs() / f0.max(1.0);
        f0_prev = f0;
        if config.reduce_dims {
            w.compact(&mut grad_x);
        }
        if change <= config.tol {
            termination = Termination::Tol;
            break;
        }
    }

    let pair = w.expand(config.width);
    let cap_violations = trace.iter().filter(|t| t.iota_x > t.cap_x * (1.0 + 1e-12) || t.iota_y > t.cap_y * (1.0 + 1e-12)).count();
    let strong = strong_stationarity_report(&pair, obs, nu, 1e-5, config.radius)?;
    let common = support(&pair.x).intersection(&support(&pair.y));
    let diagnostics = Diagnostics { strong, rank_nnzc: common.len(), rank_numeric: numerical_rank(&pair), cap_violations };
    let f0 = objective0(&pair, loss);
    Ok(SolveReport {
        pair,
        start: start_state,
        trace,
        termination,
        diagnostics,
        sigma1: init.sigma1,
        nu0,
        loss,
        f0,
        time_s: start.elapsed().as_secs_f64(),
    })
}

/// Largest step size the backtracking can accept.
pub fn step_cap(variant: Variant, config: &SolverConfig, c: f64, curvature: f64) -> f64 {
    let rho = config.rho;
    match variant {
        Variant::Alg1 => config.iota_lo.max(2.0 * rho * c).max(rho * curvature),
        Variant::Alg2 => config.iota_lo.max(rho * (2.0 * c + curvature)),
        Variant::PalmFixed => config.iota_lo.max(config.c_min + curvature),
    }
}

/// Lower bound on nonzero column norms of the hard-threshold variants once
/// the supports settle.
pub fn hard_column_floor(config: &SolverConfig) -> f64 {
    let iota_max =
        config.iota_lo.max(config.rho * (2.0 * config.c_max + config.lipschitz * config.width as f64 * config.radius * config.radius));
    config.radius.min((2.0 * config.lambda / iota_max).sqrt())
}
