use facrank::data_bench::{nmae, relative_error, LowRankTarget};
use facrank::obskernel::*;
use facrank::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gauss(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        z
    })
}

fn random_obs(m: usize, n: usize, p: f64, rng: &mut ChaCha8Rng) -> ObservationSet {
    let mut trip = Vec::new();
    for i in 0..m {
        for j in 0..n {
            if rng.random_bool(p) {
                let v: f64 = StandardNormal.sample(rng);
                trip.push((i, j, v));
            }
        }
    }
    if trip.is_empty() {
        trip.push((m - 1, n - 1, 0.5));
    }
    ObservationSet::from_triplets(m, n, &trip).unwrap()
}

/// Singular values from the eigenvalues of the Gram matrix, descending.
fn gram_singular_values(a: &Matrix) -> Vec<f64> {
    let g = a.transpose() * a;
    let mut s: Vec<f64> = g.symmetric_eigenvalues().iter().map(|&e| e.max(0.0).sqrt()).collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

fn dense_mask(obs: &ObservationSet) -> Matrix {
    let mut mask = Matrix::zeros(obs.m(), obs.n());
    for (i, j, _) in obs.iter() {
        mask[(i, j)] = 1.0;
    }
    mask
}

#[test]
fn kernels_match_dense_products() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..60 {
        let m = rng.random_range(1..=100);
        let n = rng.random_range(1..=100);
        let d = rng.random_range(1..=8);
        let obs = random_obs(m, n, rng.random_range(0.05..0.9), &mut rng);
        let pair = FactorPair::new(gauss(m, d, &mut rng), gauss(n, d, &mut rng)).unwrap();
        let mask = dense_mask(&obs);
        let dense_r = (&pair.x * pair.y.transpose() - obs.to_dense()).component_mul(&mask);

        let r = residual(&obs, &pair).unwrap();
        assert_eq!(r.values().len(), obs.len());
        for ((i, j, _), v) in obs.iter().zip(r.values()) {
            assert!((dense_r[(i, j)] - v).abs() <= 1e-12);
        }
        assert!((half_sq_loss(&r) - 0.5 * dense_r.norm_squared()).abs() <= 1e-12 * (1.0 + dense_r.norm_squared()));
        let gx = resid_mul_y(&obs, &r, &pair.y).unwrap();
        let gy = resid_t_mul_x(&obs, &r, &pair.x).unwrap();
        assert!((gx - &dense_r * &pair.y).amax() <= 1e-12);
        assert!((gy - dense_r.transpose() * &pair.x).amax() <= 1e-12);
    }
}

#[test]
fn kernels_reject_wrong_shapes() {
    let obs = ObservationSet::from_triplets(3, 2, &[(0, 0, 1.0)]).unwrap();
    let pair = FactorPair::zeros(2, 2, 1);
    assert!(matches!(residual(&obs, &pair), Err(Error::ShapeMismatch(_))));
}

#[test]
fn dense_round_trip_of_observations() {
    let z = Matrix::from_row_slice(2, 3, &[1.0, 0.0, -2.0, 0.0, 0.0, 4.0]);
    let obs = ObservationSet::from_dense(&z).unwrap();
    assert_eq!(obs.len(), 6);
    assert_eq!(obs.to_dense(), z);
    assert_eq!(obs.frob_norm(), z.norm());
}

#[test]
fn truncated_svd_matches_dense_svd() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (m, n) in [(50, 40), (40, 50), (30, 30)] {
        let z = gauss(m, n, &mut rng);
        let obs = ObservationSet::from_dense(&z).unwrap();
        let k = 8;
        let t = top_d_svd(&obs, k, 1).unwrap();
        let sv = gram_singular_values(&z);
        let zzt = &z * z.transpose();
        let ztz = z.transpose() * &z;
        for c in 0..k {
            assert!((t.s[c] - sv[c]).abs() <= 1e-6 * sv[c], "sigma_{c}: {} vs {}", t.s[c], sv[c]);
            // singular vectors are eigenvectors of the Gram matrices
            let u = t.u.column(c);
            let v = t.v.column(c);
            assert!((&zzt * u - u * sv[c] * sv[c]).norm() <= 1e-6 * sv[0] * sv[0]);
            assert!((&ztz * v - v * sv[c] * sv[c]).norm() <= 1e-6 * sv[0] * sv[0]);
            assert!((u.norm() - 1.0).abs() <= 1e-10 && (v.norm() - 1.0).abs() <= 1e-10);
        }
        // triplets reproduce the operator
        for c in 0..k {
            let zv = &z * t.v.column(c);
            assert!((zv - t.u.column(c) * t.s[c]).norm() <= 1e-8 * t.s[0]);
        }
    }
}

#[test]
fn dense_svd_on_rank_deficient_products() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..2000 {
        let m = rng.random_range(2..30);
        let n = rng.random_range(2..30);
        let r = rng.random_range(1..=m.min(n));
        let a = gauss(m, r, &mut rng) * gauss(n, r, &mut rng).transpose();
        let svd = dense_svd(&a).unwrap();
        let k = m.min(n);
        assert!((svd.u.transpose() * &svd.u - Matrix::identity(k, k)).amax() < 1e-10);
        assert!((svd.v.transpose() * &svd.v - Matrix::identity(k, k)).amax() < 1e-10);
        assert!(svd.s.windows(2).all(|w| w[0] >= w[1]));
        let want = gram_singular_values(&a);
        assert!((svd.s[0] - want[0]).abs() <= 1e-9 * want[0]);
    }
}

#[test]
fn truncated_svd_of_sparse_low_rank_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let z = gauss(60, 3, &mut rng) * gauss(45, 3, &mut rng).transpose();
    let obs = ObservationSet::from_dense(&z).unwrap();
    let t = top_d_svd(&obs, 5, 0).unwrap();
    assert!(t.s[3] <= 1e-8 * t.s[0] && t.s[4] <= 1e-8 * t.s[0]);
    let rebuilt = t.u.columns(0, 3) * Matrix::from_diagonal(&nalgebra::DVector::from_row_slice(&t.s[..3])) * t.v.columns(0, 3).transpose();
    assert!((rebuilt - &z).norm() <= 1e-9 * z.norm());
}

#[test]
fn spectral_norm_matches_dense() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let a = gauss(rng.random_range(1..30), rng.random_range(1..30), &mut rng);
        let s = gram_singular_values(&a)[0];
        assert!((spectral_norm(&a) - s).abs() <= 1e-10 * s.max(1.0));
    }
    assert_eq!(spectral_norm(&Matrix::zeros(3, 2)), 0.0);
}

#[test]
fn balanced_factorization_postconditions() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..100 {
        let m = rng.random_range(2..25);
        let n = rng.random_range(2..25);
        let r = rng.random_range(1..=m.min(n));
        let d = rng.random_range(r..=m.min(n) + 2);
        let z = gauss(m, r, &mut rng) * gauss(n, r, &mut rng).transpose();
        let s1 = gram_singular_values(&z)[0];
        let radius = s1.sqrt() * rng.random_range(1.0..2.0);
        let p = factorize_balanced(&z, d, radius).unwrap();
        assert_eq!(p.width(), d);
        assert!((p.product() - &z).norm() <= 1e-10 * z.norm());
        assert!(p.is_feasible(radius * (1.0 + 1e-12)));
        // balanced: X^T X = Y^T Y, diagonal
        let gx = p.x.transpose() * &p.x;
        let gy = p.y.transpose() * &p.y;
        assert!((&gx - &gy).amax() <= 1e-9 * s1);
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    assert!(gx[(i, j)].abs() <= 1e-9 * s1);
                }
            }
        }
        // exactly `rank` nonzero columns, matching in X and Y
        let nz = |m: &Matrix| (0..d).filter(|&c| m.column(c).iter().any(|&v| v != 0.0)).count();
        assert_eq!(nz(&p.x), r);
        assert_eq!(nz(&p.y), r);
    }
}

#[test]
fn balanced_factorization_edge_cases() {
    let p = factorize_balanced(&Matrix::from_diagonal_element(1, 1, 4.0), 1, 2.0).unwrap();
    assert_eq!(p.x[(0, 0)].abs(), 2.0);
    assert_eq!(p.y[(0, 0)].abs(), 2.0);
    let zero = factorize_balanced(&Matrix::zeros(3, 4), 2, 1.0).unwrap();
    assert_eq!(zero.x, Matrix::zeros(3, 2));
    assert!(matches!(factorize_balanced(&Matrix::identity(3, 3), 2, 5.0), Err(Error::RankExceedsD { rank: 3, d: 2 })));
    assert!(matches!(factorize_balanced(&Matrix::from_diagonal_element(1, 1, 9.0), 1, 2.0), Err(Error::SpectralBoundViolated { .. })));
}

#[test]
fn metrics_match_dense_formulas() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..30 {
        let m = rng.random_range(2..60);
        let n = rng.random_range(2..60);
        let target = LowRankTarget { left: gauss(m, 2, &mut rng), right: gauss(n, 2, &mut rng) };
        let pair = FactorPair::new(gauss(m, 3, &mut rng), gauss(n, 3, &mut rng)).unwrap();
        let truth = target.dense();
        let re = relative_error(&pair, &target).unwrap();
        let want = (pair.product() - &truth).norm() / truth.norm();
        assert!((re - want).abs() <= 1e-12 * want.max(1.0));

        let given = random_obs(m, n, 0.6, &mut rng);
        let keep: Vec<(usize, usize, f64)> = given.iter().filter(|_| rng.random_bool(0.3)).collect();
        if keep.is_empty() || keep.len() == given.len() {
            continue;
        }
        let observed = ObservationSet::from_triplets(m, n, &keep).unwrap();
        let got = nmae(&pair, &given, &observed, 1.0, 5.0).unwrap();
        let prod = pair.product();
        let held: Vec<f64> = given
            .iter()
            .filter(|(i, j, _)| !keep.iter().any(|&(a, b, _)| a == *i && b == *j))
            .map(|(i, j, v)| (prod[(i, j)] - v).abs())
            .collect();
        let want = held.iter().sum::<f64>() / (held.len() as f64 * 4.0);
        assert!((got - want).abs() <= 1e-12 * want.max(1.0));
    }
}

#[test]
fn nmae_needs_held_out_entries() {
    let given = ObservationSet::from_triplets(1, 2, &[(0, 0, 1.0)]).unwrap();
    let pair = FactorPair::zeros(1, 2, 1);
    assert!(matches!(nmae(&pair, &given, &given, 1.0, 5.0), Err(Error::EmptyHoldout)));
}
