//! Random instances and independent reference computations shared by the
//! integration tests.
#![allow(dead_code)]

use aligned_mtl::aggregate::TaskWeights;
use aligned_mtl::linalg::Matrix;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

pub fn from_na(m: &DMatrix<f64>) -> Matrix {
    let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
    Matrix::from_rows(&rows).unwrap()
}

pub fn gaussian<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Matrix::from_row_major(rows, cols, data).unwrap()
}

/// `n x k` matrix with orthonormal columns (`k ≤ n`), Haar-distributed.
pub fn orthonormal<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> DMatrix<f64> {
    let a = to_na(&gaussian(rng, n, n));
    let qr = a.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q.columns(0, k).into_owned()
}

/// Orthogonal matrix within roughly `eps` of the identity.
pub fn near_identity<R: Rng + ?Sized>(rng: &mut R, n: usize, eps: f64) -> DMatrix<f64> {
    let a = DMatrix::<f64>::identity(n, n) + to_na(&gaussian(rng, n, n)) * eps;
    let qr = a.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `U diag(s) Vᵀ` with Haar-random `U` (`n x t`) and `V` (`t x t`).
pub fn with_singular_values<R: Rng + ?Sized>(rng: &mut R, n: usize, s: &[f64]) -> Matrix {
    let t = s.len();
    let u = orthonormal(rng, n, t);
    let v = orthonormal(rng, t, t);
    from_na(&(u * DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(s)) * v.transpose()))
}

/// Full-rank `n x t` matrix with condition number `kappa` and largest
/// singular value `scale`; singular values are log-spaced.
pub fn with_condition<R: Rng + ?Sized>(rng: &mut R, n: usize, t: usize, kappa: f64, scale: f64) -> Matrix {
    let s: Vec<f64> = (0..t)
        .map(|i| {
            let f = if t == 1 { 0.0 } else { i as f64 / (t - 1) as f64 };
            scale * kappa.powf(-f)
        })
        .collect();
    with_singular_values(rng, n, &s)
}

/// Product of Gaussian `n x r` and `r x t` factors: rank `min(r, n, t)`.
pub fn low_rank<R: Rng + ?Sized>(rng: &mut R, n: usize, t: usize, r: usize) -> Matrix {
    gaussian(rng, n, r).matmul(&gaussian(rng, r, t)).unwrap()
}

pub fn random_weights<R: Rng + ?Sized>(rng: &mut R, t: usize) -> TaskWeights {
    let mut w: Vec<f64> = (0..t).map(|_| rng.random::<f64>()).collect();
    if rng.random_bool(0.2) {
        w[rng.random_range(0..t)] = 0.0;
    }
    if w.iter().all(|&x| x == 0.0) {
        w[0] = 1.0;
    }
    TaskWeights::new(w).unwrap()
}

/// Polar factor `U Vᵀ` of `G` from nalgebra's SVD.
pub fn polar(g: &Matrix) -> Matrix {
    let svd = to_na(g).svd(true, true);
    from_na(&(svd.u.unwrap() * svd.v_t.unwrap()))
}

pub fn singular_values_na(g: &Matrix) -> Vec<f64> {
    let mut s: Vec<f64> = to_na(g).singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / scale.max(f64::MIN_POSITIVE)
}

pub fn fro_dist(a: &Matrix, b: &Matrix) -> f64 {
    a.sub(b).unwrap().frobenius_norm()
}

/// Central difference of `f` at `x` along every coordinate, with step
/// `h = 1e-6 · max(1, |xᵢ|)`.
pub fn central_diff<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64]) -> Vec<f64> {
    let mut x = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = 1e-6 * x[i].abs().max(1.0);
            let orig = x[i];
            x[i] = orig + h;
            let up = f(&x);
            x[i] = orig - h;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}
