//! Sampled-entry storage and the linear-algebra kernels shared by the solvers.
//!
//! Every kernel walks the observed entries in their canonical row-major order,
//! so serial results are bitwise reproducible.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;

/// Observed entries of an `m x n` matrix, sorted by `(row, col)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    m: usize,
    n: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    row_ptr: Vec<usize>,
}

impl ObservationSet {
    pub fn from_triplets(m: usize, n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        if m == 0 || n == 0 || triplets.is_empty() {
            return Err(Error::EmptyInput);
        }
        for &(i, j, v) in triplets {
            if i >= m || j >= n {
                return Err(Error::OutOfRangeIndex { i, j, m, n });
            }
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("value at ({i}, {j})")));
            }
        }
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by_key(|a| (a.0, a.1));
        for w in sorted.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                return Err(Error::DuplicateEntry { i: w[0].0, j: w[0].1 });
            }
        }
        let mut row_ptr = vec![0usize; m + 1];
        for &(i, _, _) in &sorted {
            row_ptr[i + 1] += 1;
        }
        for i in 0..m {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self {
            m,
            n,
            rows: sorted.iter().map(|t| t.0).collect(),
            cols: sorted.iter().map(|t| t.1).collect(),
            vals: sorted.iter().map(|t| t.2).collect(),
            row_ptr,
        })
    }

    /// Every entry of a dense matrix, zeros included.
    pub fn from_dense(z: &Matrix) -> Result<Self> {
        let mut trip = Vec::with_capacity(z.len());
        for i in 0..z.nrows() {
            for j in 0..z.ncols() {
                trip.push((i, j, z[(i, j)]));
            }
        }
        Self::from_triplets(z.nrows(), z.ncols(), &trip)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.vals
    }

    /// Entries of row `i` as a range into the entry arrays.
    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.len()).map(move |t| (self.rows[t], self.cols[t], self.vals[t]))
    }

    pub fn frob_norm(&self) -> f64 {
        self.vals.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Same support, new values (aligned with the entry order).
    pub fn with_values(&self, vals: Vec<f64>) -> Result<Self> {
        if vals.len() != self.len() {
            return Err(Error::ShapeMismatch(format!("{} values for {} entries", vals.len(), self.len())));
        }
        if let Some(v) = vals.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("value {v}")));
        }
        Ok(Self { vals, ..self.clone() })
    }

    /// Dense matrix with observed values and zeros elsewhere.
    pub fn to_dense(&self) -> Matrix {
        let mut z = Matrix::zeros(self.m, self.n);
        for (i, j, v) in self.iter() {
            z[(i, j)] = v;
        }
        z
    }

    fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for (i, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for t in self.row_range(i) {
                s += self.vals[t] * x[self.cols[t]];
            }
            *o = s;
        }
        out
    }

    fn tr_mul_vec(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for t in 0..self.len() {
            out[self.cols[t]] += self.vals[t] * u[self.rows[t]];
        }
        out
    }
}

/// The factor iterate `(X, Y)` with `X: m x d`, `Y: n x d`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPair {
    pub x: Matrix,
    pub y: Matrix,
}

impl FactorPair {
    pub fn new(x: Matrix, y: Matrix) -> Result<Self> {
        if x.ncols() != y.ncols() {
            return Err(Error::ShapeMismatch(format!("X has {} columns, Y has {}", x.ncols(), y.ncols())));
        }
        Ok(Self { x, y })
    }

    pub fn zeros(m: usize, n: usize, d: usize) -> Self {
        Self { x: Matrix::zeros(m, d), y: Matrix::zeros(n, d) }
    }

    pub fn width(&self) -> usize {
        self.x.ncols()
    }

    /// All columns of both factors inside the ball of radius `radius`.
    pub fn is_feasible(&self, radius: f64) -> bool {
        let ok = |m: &Matrix| m.column_iter().all(|c| c.norm() <= radius);
        ok(&self.x) && ok(&self.y)
    }

    pub fn product(&self) -> Matrix {
        &self.x * self.y.transpose()
    }

    fn check(&self, obs: &ObservationSet) -> Result<()> {
        if self.x.nrows() != obs.m() || self.y.nrows() != obs.n() {
            return Err(Error::ShapeMismatch(format!(
                "factors {}x{} / {}x{} against a {}x{} observation set",
                self.x.nrows(),
                self.x.ncols(),
                self.y.nrows(),
                self.y.ncols(),
                obs.m(),
                obs.n()
            )));
        }
        Ok(())
    }
}

/// `(XY^T)_{ij} - v` for each observed entry, in entry order.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualVector(pub Vec<f64>);

impl ResidualVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone)]
pub struct SvdTriplet {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

pub fn residual(obs: &ObservationSet, pair: &FactorPair) -> Result<ResidualVector> {
    pair.check(obs)?;
    residual_of(obs, &pair.x, &pair.y)
}

/// [`residual`] on borrowed factors.
pub fn residual_of(obs: &ObservationSet, x: &Matrix, y: &Matrix) -> Result<ResidualVector> {
    if x.nrows() != obs.m() || y.nrows() != obs.n() || x.ncols() != y.ncols() {
        return Err(Error::ShapeMismatch("factors do not match observations".into()));
    }
    let a = x.ncols();
    // transposes give contiguous rows of X and Y
    let xt = x.transpose();
    let yt = y.transpose();
    let xs = xt.as_slice();
    let ys = yt.as_slice();
    let mut r = Vec::with_capacity(obs.len());
    for t in 0..obs.len() {
        let xi = &xs[obs.rows[t] * a..(obs.rows[t] + 1) * a];
        let yj = &ys[obs.cols[t] * a..(obs.cols[t] + 1) * a];
        let mut s = 0.0;
        for c in 0..a {
            s += xi[c] * yj[c];
        }
        r.push(s - obs.vals[t]);
    }
    Ok(ResidualVector(r))
}

pub fn half_sq_loss(r: &ResidualVector) -> f64 {
    0.5 * r.0.iter().map(|v| v * v).sum::<f64>()
}

/// `R Y` where `R` is the sparse residual matrix.
pub fn resid_mul_y(obs: &ObservationSet, r: &ResidualVector, y: &Matrix) -> Result<Matrix> {
    if r.0.len() != obs.len() || y.nrows() != obs.n() {
        return Err(Error::ShapeMismatch("residual or Y does not match observations".into()));
    }
    Ok(scatter(obs.m(), &obs.rows, &obs.cols, &r.0, y))
}

/// `R^T X` where `R` is the sparse residual matrix.
pub fn resid_t_mul_x(obs: &ObservationSet, r: &ResidualVector, x: &Matrix) -> Result<Matrix> {
    if r.0.len() != obs.len() || x.nrows() != obs.m() {
        return Err(Error::ShapeMismatch("residual or X does not match observations".into()));
    }
    Ok(scatter(obs.n(), &obs.cols, &obs.rows, &r.0, x))
}

fn scatter(out_rows: usize, dst: &[usize], src: &[usize], r: &[f64], f: &Matrix) -> Matrix {
    let a = f.ncols();
    let ft = f.transpose();
    let fs = ft.as_slice();
    let mut gt = vec![0.0; out_rows * a];
    for t in 0..r.len() {
        let row = &fs[src[t] * a..(src[t] + 1) * a];
        let acc = &mut gt[dst[t] * a..(dst[t] + 1) * a];
        for c in 0..a {
            acc[c] += r[t] * row[c];
        }
    }
    Matrix::from_vec(a, out_rows, gt).transpose()
}

/// Largest singular value, from the eigenvalues of the smaller Gram matrix.
/// Exactly-zero columns are skipped.
pub fn spectral_norm(m: &Matrix) -> f64 {
    let keep: Vec<usize> = (0..m.ncols()).filter(|&c| m.column(c).iter().any(|&v| v != 0.0)).collect();
    if keep.is_empty() || m.nrows() == 0 {
        return 0.0;
    }
    let sub = m.select_columns(&keep);
    let gram = if sub.nrows() < sub.ncols() { &sub * sub.transpose() } else { sub.tr_mul(&sub) };
    let top = gram.symmetric_eigenvalues().iter().cloned().fold(0.0f64, f64::max);
    top.max(0.0).sqrt()
}

/// Full dense SVD with singular values sorted descending.
///
/// The result is accepted only if it reproduces `a` to `1e-12` relative;
/// otherwise the decomposition is retried with other convergence settings, on
/// the transpose, and finally with one-sided Jacobi rotations.
pub fn dense_svd(a: &Matrix) -> Result<SvdTriplet> {
    let scale = a.norm();
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::EmptyInput);
    }
    let attempts = [(false, 1e-15), (true, 1e-15), (false, 4e-16), (true, 4e-16), (false, 2e-15), (true, 2e-15)];
    for (transpose, eps) in attempts {
        let work = if transpose { a.transpose() } else { a.clone() };
        let Some(svd) = work.try_svd(true, true, eps, 100_000) else { continue };
        let (Some(u), Some(vt)) = (svd.u.as_ref(), svd.v_t.as_ref()) else { continue };
        let (u, v) = if transpose { (vt.transpose(), u.clone()) } else { (u.clone(), vt.transpose()) };
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&x, &y| svd.singular_values[y].total_cmp(&svd.singular_values[x]));
        let s: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
        let u = u.select_columns(&order);
        let v = v.select_columns(&order);
        let rebuilt = &u * Matrix::from_diagonal(&nalgebra::DVector::from_column_slice(&s)) * v.transpose();
        if (rebuilt - a).norm() <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
            return Ok(SvdTriplet { u, s, v });
        }
    }
    let svd = if a.nrows() >= a.ncols() {
        jacobi_svd(a)
    } else {
        let t = jacobi_svd(&a.transpose());
        SvdTriplet { u: t.v, s: t.s, v: t.u }
    };
    let rebuilt = &svd.u * Matrix::from_diagonal(&nalgebra::DVector::from_column_slice(&svd.s)) * svd.v.transpose();
    if (rebuilt - a).norm() <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Ok(svd);
    }
    Err(Error::ConvergenceFailure(0))
}

/// One-sided Jacobi SVD for `a` with at least as many rows as columns.
fn jacobi_svd(a: &Matrix) -> SvdTriplet {
    let (m, n) = (a.nrows(), a.ncols());
    let mut w = a.clone();
    let mut v = Matrix::identity(n, n);
    for _ in 0..100 {
        let mut rotated = false;
        for i in 0..n {
            for j in i + 1..n {
                let alpha = w.column(i).norm_squared();
                let beta = w.column(j).norm_squared();
                let gamma = w.column(i).dot(&w.column(j));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for mat in [&mut w, &mut v] {
                    for r in 0..mat.nrows() {
                        let (x, y) = (mat[(r, i)], mat[(r, j)]);
                        mat[(r, i)] = c * x - s * y;
                        mat[(r, j)] = s * x + c * y;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..n).map(|i| w.column(i).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let top = norms[order[0]];
    let mut u = Matrix::zeros(m, n);
    let mut s = Vec::with_capacity(n);
    for (k, &i) in order.iter().enumerate() {
        let norm = norms[i];
        if norm > top * f64::EPSILON * n as f64 {
            u.set_column(k, &(w.column(i) / norm));
            s.push(norm);
        } else {
            s.push(0.0);
        }
    }
    // complete the left basis where the columns vanished
    let mut next = 0;
    for (k, &sk) in s.iter().enumerate() {
        if sk > 0.0 {
            continue;
        }
        while next < m {
            let mut e = nalgebra::DVector::zeros(m);
            e[next] = 1.0;
            next += 1;
            for _ in 0..2 {
                for l in 0..n {
                    if l != k {
                        let proj = u.column(l).dot(&e);
                        e -= u.column(l) * proj;
                    }
                }
            }
            let en = e.norm();
            if en > 0.5 {
                u.set_column(k, &(e / en));
                break;
            }
        }
    }
    SvdTriplet { u, s, v: v.select_columns(&order) }
}

/// Top-`k` singular triplets of the zero-filled observation matrix.
///
/// Golub-Kahan-Lanczos bidiagonalization with full reorthogonalization. The
/// Krylov dimension grows until every requested Ritz triplet has residual at
/// most `1e-11 * sigma_1`; at full dimension the factorization is exact.
pub fn top_d_svd(obs: &ObservationSet, k: usize, seed: u64) -> Result<SvdTriplet> {
    let (m, n) = (obs.m(), obs.n());
    let max = m.min(n);
    if k == 0 || k > max {
        return Err(Error::RankTooLarge { k, max });
    }
    if n <= m {
        let (u, s, v) = lanczos_svd(m, n, k, seed, |x| obs.mul_vec(x), |u| obs.tr_mul_vec(u))?;
        Ok(SvdTriplet { u, s, v })
    } else {
        let (v, s, u) = lanczos_svd(n, m, k, seed, |x| obs.tr_mul_vec(x), |u| obs.mul_vec(u))?;
        Ok(SvdTriplet { u, s, v })
    }
}

const SVD_TOL: f64 = 1e-11;

fn lanczos_svd<A, At>(p: usize, q: usize, k: usize, seed: u64, av: A, atv: At) -> Result<(Matrix, Vec<f64>, Matrix)>
where
    A: Fn(&[f64]) -> Vec<f64>,
    At: Fn(&[f64]) -> Vec<f64>,
{
    // q <= p, so the right Krylov basis is complete after q steps
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut us: Vec<Vec<f64>> = Vec::new();
    let mut vs: Vec<Vec<f64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut anorm = 0.0f64;

    let start = random_orthonormal(q, &vs, &mut rng);
    vs.push(start);
    let mut target = q.min((2 * k + 10).max(24));
    let step = k.max(16);
    loop {
        while alpha.len() < target {
            let j = alpha.len();
            let mut u = av(&vs[j]);
            if j > 0 {
                axpy(-beta[j - 1], &us[j - 1], &mut u);
            }
            reorth(&mut u, &us);
            let mut a = norm(&u);
            if a <= 1e-13 * anorm || a == 0.0 {
                a = 0.0;
                u = random_orthonormal(p, &us, &mut rng);
            } else {
                scale(&mut u, 1.0 / a);
            }
            anorm = anorm.max(a);
            alpha.push(a);
            us.push(u);

            let mut v = atv(&us[j]);
            axpy(-a, &vs[j], &mut v);
            reorth(&mut v, &vs);
            let mut b = norm(&v);
            if vs.len() == q {
                b = 0.0;
                v = vec![0.0; q];
            } else if b <= 1e-13 * anorm || b == 0.0 {
                b = 0.0;
                v = random_orthonormal(q, &vs, &mut rng);
            } else {
                scale(&mut v, 1.0 / b);
            }
            anorm = anorm.max(b);
            beta.push(b);
            vs.push(v);
        }

        let kd = alpha.len();
        let mut bmat = Matrix::zeros(kd, kd);
        for i in 0..kd {
            bmat[(i, i)] = alpha[i];
            if i + 1 < kd {
                bmat[(i, i + 1)] = beta[i];
            }
        }
        let svd = dense_svd(&bmat)?;
        let (pm, qm) = (&svd.u, &svd.v);
        let s1 = svd.s[0];
        let last = beta[kd - 1];
        let converged = (0..k).all(|i| last * pm[(kd - 1, i)].abs() <= SVD_TOL * s1);

        if converged || kd == q {
            if !converged && last != 0.0 {
                return Err(Error::ConvergenceFailure(kd));
            }
            let mut u = Matrix::zeros(p, k);
            let mut v = Matrix::zeros(q, k);
            let mut s = Vec::with_capacity(k);
            for c in 0..k {
                s.push(svd.s[c].max(0.0));
                for (l, ul) in us.iter().enumerate().take(kd) {
                    let w = pm[(l, c)];
                    for r in 0..p {
                        u[(r, c)] += w * ul[r];
                    }
                }
                for (l, vl) in vs.iter().enumerate().take(kd) {
                    let w = qm[(l, c)];
                    for r in 0..q {
                        v[(r, c)] += w * vl[r];
                    }
                }
            }
            return Ok((u, s, v));
        }
        target = (kd + step).min(q);
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn scale(x: &mut [f64], a: f64) {
    x.iter_mut().for_each(|v| *v *= a);
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// classical Gram-Schmidt applied twice
fn reorth(x: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        let coeffs: Vec<f64> = basis.iter().map(|b| dot(b, x)).collect();
        for (c, b) in coeffs.iter().zip(basis) {
            axpy(-c, b, x);
        }
    }
}

fn random_orthonormal(dim: usize, basis: &[Vec<f64>], rng: &mut ChaCha8Rng) -> Vec<f64> {
    for _ in 0..8 {
        let mut x: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        reorth(&mut x, basis);
        let nx = norm(&x);
        if nx > 1e-8 {
            scale(&mut x, 1.0 / nx);
            return x;
        }
    }
    vec![0.0; dim]
}

/// Balanced factorization `Z = X Y^T` with `X = U S^{1/2}`, `Y = V S^{1/2}`
/// truncated to `d` columns.
pub fn factorize_balanced(z: &Matrix, d: usize, radius: f64) -> Result<FactorPair> {
    let (m, n) = (z.nrows(), z.ncols());
    if m == 0 || n == 0 {
        return Err(Error::EmptyInput);
    }
    let mut x = Matrix::zeros(m, d);
    let mut y = Matrix::zeros(n, d);
    if z.iter().all(|&v| v == 0.0) {
        return Ok(FactorPair { x, y });
    }
    let svd = dense_svd(z)?;
    let s1 = svd.s[0];
    let rank = svd.s.iter().filter(|&&v| v > 1e-10 * s1).count();
    if rank > d {
        return Err(Error::RankExceedsD { rank, d });
    }
    let bound = radius * radius;
    if s1 > bound * (1.0 + 1e-12) {
        return Err(Error::SpectralBoundViolated { norm: s1, bound });
    }
    for c in 0..rank {
        let w = svd.s[c].sqrt().min(radius);
        x.set_column(c, &(svd.u.column(c) * w));
        y.set_column(c, &(svd.v.column(c) * w));
    }
    Ok(FactorPair { x, y })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frobenius_norm_of_triplets() {
        let obs = ObservationSet::from_triplets(2, 2, &[(1, 1, 4.0), (0, 0, 3.0)]).unwrap();
        assert_eq!(obs.frob_norm(), 5.0);
        assert_eq!(obs.rows(), &[0, 1]);
    }

    #[test]
    fn rejects_bad_triplets() {
        assert!(matches!(ObservationSet::from_triplets(2, 2, &[(0, 0, 1.0), (0, 0, 2.0)]), Err(Error::DuplicateEntry { i: 0, j: 0 })));
        assert!(matches!(ObservationSet::from_triplets(2, 2, &[(2, 0, 1.0)]), Err(Error::OutOfRangeIndex { .. })));
        assert!(matches!(ObservationSet::from_triplets(2, 2, &[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn residual_single_entry() {
        let obs = ObservationSet::from_triplets(1, 1, &[(0, 0, 10.0)]).unwrap();
        let pair = FactorPair::new(Matrix::from_row_slice(1, 2, &[1.0, 2.0]), Matrix::from_row_slice(1, 2, &[3.0, 4.0])).unwrap();
        assert_eq!(residual(&obs, &pair).unwrap().0, vec![1.0]);
    }

    #[test]
    fn gradient_single_entry() {
        let obs = ObservationSet::from_triplets(2, 2, &[(0, 0, 0.0)]).unwrap();
        let r = ResidualVector(vec![2.0]);
        let y = Matrix::from_row_slice(2, 2, &[1.0, 5.0, 7.0, 7.0]);
        let g = resid_mul_y(&obs, &r, &y).unwrap();
        assert_eq!(g, Matrix::from_row_slice(2, 2, &[2.0, 10.0, 0.0, 0.0]));
        let gt = resid_t_mul_x(&obs, &r, &y).unwrap();
        assert_eq!(gt, Matrix::from_row_slice(2, 2, &[2.0, 10.0, 0.0, 0.0]));
    }

    #[test]
    fn loss_of_three_four() {
        assert_eq!(half_sq_loss(&ResidualVector(vec![3.0, 4.0])), 12.5);
    }

    #[test]
    fn spectral_norm_examples() {
        assert!((spectral_norm(&Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 2.0]))) - 3.0).abs() < 1e-14);
        let u = nalgebra::DVector::from_vec(vec![1.0, 2.0, 2.0]);
        let v = nalgebra::DVector::from_vec(vec![3.0, 4.0]);
        let m = &u * v.transpose();
        assert!((spectral_norm(&m) - 15.0).abs() < 1e-12);
        assert_eq!(spectral_norm(&Matrix::zeros(3, 2)), 0.0);
    }

    #[test]
    fn svd_of_diagonal() {
        let obs = ObservationSet::from_triplets(2, 2, &[(0, 0, 5.0), (0, 1, 0.0), (1, 0, 0.0), (1, 1, 3.0)]).unwrap();
        let t = top_d_svd(&obs, 2, 1).unwrap();
        assert!((t.s[0] - 5.0).abs() < 1e-12 && (t.s[1] - 3.0).abs() < 1e-12);
        assert!((t.u[(0, 0)].abs() - 1.0).abs() < 1e-12);
        assert!((t.v[(1, 1)].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn svd_single_entry() {
        let obs = ObservationSet::from_triplets(3, 4, &[(1, 2, 4.0)]).unwrap();
        let t = top_d_svd(&obs, 1, 0).unwrap();
        assert!((t.s[0] - 4.0).abs() < 1e-12);
        assert!(matches!(top_d_svd(&obs, 4, 0), Err(Error::RankTooLarge { .. })));
    }

    #[test]
    fn balanced_scalar() {
        let f = factorize_balanced(&Matrix::from_element(1, 1, 4.0), 1, 2.0).unwrap();
        assert!((f.x[(0, 0)] * f.y[(0, 0)] - 4.0).abs() < 1e-14);
        assert!((f.x[(0, 0)].abs() - 2.0).abs() < 1e-14);
        let z = factorize_balanced(&Matrix::zeros(2, 3), 2, 1.0).unwrap();
        assert!(z.x.iter().chain(z.y.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn balanced_errors() {
        let z = Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![9.0, 4.0]));
        assert!(matches!(factorize_balanced(&z, 1, 3.0), Err(Error::RankExceedsD { rank: 2, d: 1 })));
        assert!(matches!(factorize_balanced(&z, 2, 2.0), Err(Error::SpectralBoundViolated { .. })));
    }

    #[test]
    fn jacobi_svd_is_orthogonal_on_rank_deficient_input() {
        let left = Matrix::from_fn(9, 2, |i, j| ((i * 3 + j * 7) % 5) as f64 - 2.0);
        let right = Matrix::from_fn(6, 2, |i, j| ((i + 2 * j) % 4) as f64 - 1.5);
        let a = &left * right.transpose();
        let svd = jacobi_svd(&a);
        assert_eq!(svd.s.iter().filter(|&&x| x > 1e-10).count(), 2);
        assert!((svd.u.transpose() * &svd.u - Matrix::identity(6, 6)).amax() < 1e-12);
        assert!((svd.v.transpose() * &svd.v - Matrix::identity(6, 6)).amax() < 1e-12);
        let rebuilt = &svd.u * Matrix::from_diagonal(&nalgebra::DVector::from_vec(svd.s.clone())) * svd.v.transpose();
        assert!((rebuilt - a).amax() < 1e-12);
    }
}
