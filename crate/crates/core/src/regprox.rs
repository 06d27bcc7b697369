//! Column-sparsity regularizers, their per-column proximal maps and the
//! support predicates used to certify solutions.

use nalgebra::{DVector, DVectorView};

use crate::error::{Error, Result};
use crate::obskernel::{FactorPair, Matrix};

/// Which piece of the capped-l1 penalty a column is charged with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    /// `t / nu`
    Linear,
    /// constant `1`
    Constant,
}

impl TryFrom<u8> for Branch {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Branch::Linear),
            2 => Ok(Branch::Constant),
            other => Err(Error::InvalidBranch(other)),
        }
    }
}

impl From<Branch> for u8 {
    fn from(b: Branch) -> u8 {
        match b {
            Branch::Linear => 1,
            Branch::Constant => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndicatorVector(pub Vec<Branch>);

/// Strictly increasing column indices.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ColumnIndexSet(pub Vec<usize>);

impl ColumnIndexSet {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, c: usize) -> bool {
        self.0.binary_search(&c).is_ok()
    }

    pub fn union(&self, other: &Self) -> Self {
        let mut v: Vec<usize> = self.0.iter().chain(other.0.iter()).copied().collect();
        v.sort_unstable();
        v.dedup();
        ColumnIndexSet(v)
    }

    pub fn intersection(&self, other: &Self) -> Self {
        ColumnIndexSet(self.0.iter().copied().filter(|&c| other.contains(c)).collect())
    }
}

pub fn column_is_zero(m: &Matrix, c: usize) -> bool {
    m.column(c).iter().all(|&v| v == 0.0)
}

pub fn support(m: &Matrix) -> ColumnIndexSet {
    ColumnIndexSet((0..m.ncols()).filter(|&c| !column_is_zero(m, c)).collect())
}

pub fn nnzc(m: &Matrix) -> usize {
    (0..m.ncols()).filter(|&c| !column_is_zero(m, c)).count()
}

pub fn theta_capped(t: f64, nu: f64) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::NegativeInput(t));
    }
    Ok(capped(t, nu))
}

fn capped(t: f64, nu: f64) -> f64 {
    (t / nu).min(1.0)
}

pub fn theta_total(m: &Matrix, nu: f64) -> f64 {
    m.column_iter().map(|c| capped(c.norm(), nu)).sum()
}

pub fn theta_total_i(m: &Matrix, nu: f64, ind: &IndicatorVector) -> f64 {
    m.column_iter()
        .zip(&ind.0)
        .map(|(c, b)| match b {
            Branch::Linear => c.norm() / nu,
            Branch::Constant => 1.0,
        })
        .sum()
}

/// Constant branch wherever the column norm reaches `nu` (ties go to the constant piece).
pub fn indicator_of(m: &Matrix, nu: f64) -> IndicatorVector {
    IndicatorVector(m.column_iter().map(|c| if c.norm() >= nu { Branch::Constant } else { Branch::Linear }).collect())
}

/// Minimizer of `0.5 |x - eta|^2 + alpha [x != 0]` over `|x| <= radius`.
/// The only candidates are `0` and the radial clip of `eta`; ties return `0`.
pub fn prox_col_hard(eta: DVectorView<f64>, alpha: f64, radius: f64) -> DVector<f64> {
    let ne = eta.norm();
    let out = if ne == 0.0 {
        DVector::zeros(eta.len())
    } else {
        let s = ne.min(radius);
        let keep_cost = 0.5 * (ne - s) * (ne - s) + alpha;
        if keep_cost < 0.5 * ne * ne {
            eta * (s / ne)
        } else {
            DVector::zeros(eta.len())
        }
    };
    #[cfg(debug_assertions)]
    if radius >= (2.0 * alpha).sqrt() && (ne - (2.0 * alpha).sqrt()).abs() > 1e-12 * ne {
        let composed = if ne > (2.0 * alpha).sqrt() { eta * (ne.min(radius) / ne) } else { DVector::zeros(eta.len()) };
        debug_assert_eq!(composed, out);
    }
    out
}

/// Minimizer of `0.5 |x - eta|^2 + tau |x|` (linear branch) or of
/// `0.5 |x - eta|^2` (constant branch) over `|x| <= radius`.
pub fn prox_col_capped(eta: DVectorView<f64>, tau: f64, radius: f64, branch: Branch) -> DVector<f64> {
    let ne = eta.norm();
    if ne == 0.0 {
        return DVector::zeros(eta.len());
    }
    let s = match branch {
        Branch::Linear => (ne - tau).clamp(0.0, radius),
        Branch::Constant => ne.min(radius),
    };
    if s == ne {
        eta.into_owned()
    } else if s == 0.0 {
        DVector::zeros(eta.len())
    } else {
        eta * (s / ne)
    }
}

pub fn is_column_consistent(pair: &FactorPair) -> bool {
    support(&pair.x) == support(&pair.y)
}

/// Every column of both factors is zero or has norm at least `alpha`.
pub fn has_column_bound(pair: &FactorPair, alpha: f64) -> bool {
    let ok = |m: &Matrix| {
        m.column_iter().all(|c| {
            let n = c.norm();
            n == 0.0 || n >= alpha
        })
    };
    ok(&pair.x) && ok(&pair.y)
}

/// Zero every column outside the common support of `X` and `Y`.
pub fn sparsity_couple(pair: &FactorPair) -> FactorPair {
    let mut out = pair.clone();
    sparsity_couple_in_place(&mut out);
    out
}

pub fn sparsity_couple_in_place(pair: &mut FactorPair) {
    for c in 0..pair.width() {
        if column_is_zero(&pair.x, c) != column_is_zero(&pair.y, c) {
            pair.x.column_mut(c).fill(0.0);
            pair.y.column_mut(c).fill(0.0);
        }
    }
}
