//! Comparison aggregators: linear scalarization, PCGrad, MGDA, CAGrad and
//! IMTL-G. Each is a plain function of the gradient matrix; the inner solvers
//! run a fixed number of iterations so results are reproducible.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use super::TaskWeights;
use crate::linalg::{axpy, dot, gram, norm, solve, Matrix};
use crate::{Error, Result};

pub const MGDA_MAX_ITERS: usize = 200;
pub const MGDA_GAP_TOL: f64 = 1e-8;
pub const CAGRAD_ITERS: usize = 1000;
pub const CAGRAD_STEP: f64 = 0.05;
pub const CAGRAD_DEFAULT_C: f64 = 0.4;

/// `G w`.
pub fn uniform(g: &Matrix, w: &TaskWeights) -> Result<Vec<f64>> {
    g.matvec(w.as_slice())
}

/// Projecting conflicting gradients.
///
/// For each task `i`, the other tasks are visited in an order drawn from
/// `rng`; whenever `gᵢ·gⱼ < 0` the component of `gᵢ` along `gⱼ` is removed.
/// Projections use the original `gⱼ`. Zero `gⱼ` are skipped.
pub fn pcgrad<R: Rng + ?Sized>(g: &Matrix, w: &TaskWeights, rng: &mut R) -> Result<Vec<f64>> {
    let t = g.cols();
    if w.len() != t {
        return Err(Error::DimensionMismatch {
            expected: t,
            found: w.len(),
        });
    }
    let cols = g.columns();
    let sq: Vec<f64> = cols.iter().map(|c| dot(c, c)).collect();
    let mut out = vec![0.0; g.rows()];
    let mut order: Vec<usize> = (0..t).collect();
    for i in 0..t {
        let mut gi = cols[i].clone();
        order.shuffle(rng);
        for &j in order.iter().filter(|&&j| j != i) {
            if sq[j] == 0.0 {
                continue;
            }
            let d = dot(&gi, &cols[j]);
            if d < 0.0 {
                axpy(-d / sq[j], &cols[j], &mut gi);
            }
        }
        axpy(w[i], &gi, &mut out);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct MgdaSolution {
    pub direction: Vec<f64>,
    /// Convex combination weights of the min-norm point.
    pub gamma: Vec<f64>,
}

/// Min-norm point of the convex hull of the task gradients.
///
/// Two tasks use the closed form; more tasks use fully corrective
/// Frank–Wolfe (Wolfe's nearest-point method) on `γᵀ GᵀG γ` over the simplex,
/// started at the shortest gradient and stopping at a duality gap of
/// `MGDA_GAP_TOL · max‖gᵢ‖²` or after `MGDA_MAX_ITERS` iterations. The exact
/// re-solve on the active vertices makes the result exact once the optimal
/// face is found, including when the origin lies inside the hull. When all
/// columns coincide every vertex is optimal and `γ = e₁` is returned.
pub fn mgda(g: &Matrix) -> MgdaSolution {
    let t = g.cols();
    let gamma = if t == 1 || all_columns_equal(g) {
        unit(t, 0)
    } else if t == 2 {
        let g1 = g.column(0);
        let g2 = g.column(1);
        let diff: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| a - b).collect();
        let denom = dot(&diff, &diff);
        let num = -dot(&diff, &g2);
        let a = (num / denom).clamp(0.0, 1.0);
        vec![a, 1.0 - a]
    } else {
        min_norm_frank_wolfe(&gram(g))
    };
    let direction = g.matvec(&gamma).expect("gamma has one entry per task");
    MgdaSolution { direction, gamma }
}

fn all_columns_equal(g: &Matrix) -> bool {
    (0..g.rows()).all(|i| g.row(i).iter().all(|&x| x == g[(i, 0)]))
}

fn unit(t: usize, k: usize) -> Vec<f64> {
    let mut e = vec![0.0; t];
    e[k] = 1.0;
    e
}

fn min_norm_frank_wolfe(m: &Matrix) -> Vec<f64> {
    let t = m.rows();
    let scale = (0..t).map(|i| m[(i, i)]).fold(0.0, f64::max);
    let tol = MGDA_GAP_TOL * scale;
    let first = (0..t).min_by(|&a, &b| m[(a, a)].total_cmp(&m[(b, b)])).unwrap();
    let mut gamma = unit(t, first);
    let mut active = vec![first];
    for _ in 0..MGDA_MAX_ITERS {
        let mg = m.matvec(&gamma).expect("square");
        let quad = dot(&gamma, &mg);
        let toward = (0..t).min_by(|&a, &b| mg[a].total_cmp(&mg[b])).unwrap();
        if quad - mg[toward] <= tol || active.contains(&toward) {
            break;
        }
        active.push(toward);
        // Fully corrective step: move to the affine min-norm point of the
        // active vertices, shrinking the set while that point leaves the simplex.
        loop {
            let Some(y) = affine_min_norm(m, &active) else {
                active.pop();
                return gamma;
            };
            if y.iter().all(|&v| v > 0.0) {
                for (&i, &v) in active.iter().zip(&y) {
                    gamma[i] = v;
                }
                break;
            }
            let theta = active
                .iter()
                .zip(&y)
                .filter(|(_, &v)| v <= 0.0)
                .map(|(&i, &v)| gamma[i] / (gamma[i] - v))
                .fold(1.0, f64::min);
            for (&i, &v) in active.iter().zip(&y) {
                gamma[i] += theta * (v - gamma[i]);
            }
            let leaving = *active
                .iter()
                .min_by(|&&a, &&b| gamma[a].total_cmp(&gamma[b]))
                .unwrap();
            for &i in &active {
                if gamma[i] <= 1e-15 || i == leaving {
                    gamma[i] = 0.0;
                }
            }
            active.retain(|&i| gamma[i] > 0.0);
            let s: f64 = gamma.iter().sum();
            gamma.iter_mut().for_each(|x| *x /= s);
        }
    }
    gamma
}

/// Minimiser of `yᵀ M_SS y` subject to `Σ y = 1`, from the KKT system.
fn affine_min_norm(m: &Matrix, active: &[usize]) -> Option<Vec<f64>> {
    let k = active.len();
    let mut kkt = Matrix::zeros(k + 1, k + 1);
    for (a, &i) in active.iter().enumerate() {
        for (b, &j) in active.iter().enumerate() {
            kkt[(a, b)] = m[(i, j)];
        }
        kkt[(a, k)] = 1.0;
        kkt[(k, a)] = 1.0;
    }
    let mut rhs = vec![0.0; k + 1];
    rhs[k] = 1.0;
    let mut y = solve(&kkt, &rhs)?;
    y.truncate(k);
    Some(y)
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut theta = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        css += uk;
        let th = (css - 1.0) / (k + 1) as f64;
        if uk - th > 0.0 {
            theta = th;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct CagradSolution {
    pub direction: Vec<f64>,
    /// Simplex weights solving the dual problem.
    pub lambda: Vec<f64>,
    /// Dual objective at `lambda`, divided by `‖g₀‖²`.
    pub dual_value: f64,
}

/// Dual objective of CAGrad divided by `‖g₀‖²`:
/// `(xᵀ GᵀG w + c ‖g₀‖ ‖G x‖) / ‖g₀‖²`.
pub fn cagrad_dual(m: &Matrix, w: &[f64], c: f64, x: &[f64]) -> f64 {
    let b = m.matvec(w).expect("square");
    let g0_sq = dot(w, &b);
    let xmx = dot(x, &m.matvec(x).expect("square")).max(0.0);
    (dot(x, &b) + c * g0_sq.sqrt() * xmx.sqrt()) / g0_sq
}

/// Conflict-averse direction.
///
/// Minimises the dual `xᵀGᵀg₀ + c‖g₀‖‖Gx‖` over the simplex by projected
/// gradient steps (fixed step and iteration count, started from the uniform
/// point) on the objective divided by `‖g₀‖²`, then returns
/// `g₀ + (c‖g₀‖/‖g_x‖) g_x` with `g₀ = G w` and `g_x = G x`. `c = 0` returns
/// `G w` unchanged.
pub fn cagrad(g: &Matrix, w: &TaskWeights, c: f64) -> Result<CagradSolution> {
    if !(c >= 0.0 && c.is_finite()) {
        return Err(Error::InvalidArgument(format!("CAGrad c must be >= 0, got {c}")));
    }
    let t = g.cols();
    let g0 = uniform(g, w)?;
    let g0_norm = norm(&g0);
    let start = vec![1.0 / t as f64; t];
    if c == 0.0 || g0_norm == 0.0 {
        return Ok(CagradSolution {
            direction: g0,
            lambda: start,
            dual_value: 0.0,
        });
    }
    let m = gram(g);
    let b = m.matvec(w.as_slice())?;
    let g0_sq = g0_norm * g0_norm;
    let mut x = start;
    for _ in 0..CAGRAD_ITERS {
        let mx = m.matvec(&x)?;
        let gx = dot(&x, &mx).max(0.0).sqrt();
        let grad: Vec<f64> = (0..t)
            .map(|i| {
                let smooth = if gx > 0.0 { c * g0_norm * mx[i] / gx } else { 0.0 };
                (b[i] + smooth) / g0_sq
            })
            .collect();
        let stepped: Vec<f64> = x.iter().zip(&grad).map(|(xi, gi)| xi - CAGRAD_STEP * gi).collect();
        x = project_simplex(&stepped);
    }
    let gx = g.matvec(&x)?;
    let gx_norm = norm(&gx);
    let mut direction = g0;
    if gx_norm > 0.0 {
        axpy(c * g0_norm / gx_norm, &gx, &mut direction);
    }
    let dual_value = cagrad_dual(&m, w.as_slice(), c, &x);
    Ok(CagradSolution {
        direction,
        lambda: x,
        dual_value,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ImtlSolution {
    pub direction: Vec<f64>,
    /// Combination weights, summing to one.
    pub beta: Vec<f64>,
    /// The linear solve was singular and uniform weights were used instead.
    pub fallback: bool,
    /// The aggregate vanished (relative to the largest task gradient).
    pub stationary: bool,
}

/// Impartial gradient balancing: picks the affine combination of task
/// gradients whose cosine similarity to every task gradient is equal.
///
/// With `uᵢ = gᵢ/‖gᵢ‖`, `D` the rows `g₁ − gₜ` and `U` the rows `u₁ − uₜ`
/// (`t = 2..T`), the tail weights solve `(U Dᵀ) a = U g₁` and
/// `β = (1 − Σa, a)`. A singular system falls back to uniform weights.
pub fn imtl_g(g: &Matrix) -> Result<ImtlSolution> {
    let t = g.cols();
    let cols = g.columns();
    let norms: Vec<f64> = cols.iter().map(|c| norm(c)).collect();
    if let Some(task) = norms.iter().position(|&n| n == 0.0) {
        return Err(Error::ZeroColumn { task });
    }
    let units: Vec<Vec<f64>> = cols
        .iter()
        .zip(&norms)
        .map(|(c, n)| c.iter().map(|x| x / n).collect())
        .collect();

    let (beta, fallback) = if t == 1 {
        (vec![1.0], false)
    } else {
        let k = t - 1;
        let d: Vec<Vec<f64>> = (1..t).map(|i| sub(&cols[0], &cols[i])).collect();
        let u: Vec<Vec<f64>> = (1..t).map(|i| sub(&units[0], &units[i])).collect();
        let mut system = Matrix::zeros(k, k);
        for a in 0..k {
            for b in 0..k {
                system[(a, b)] = dot(&u[a], &d[b]);
            }
        }
        let rhs: Vec<f64> = u.iter().map(|ui| dot(ui, &cols[0])).collect();
        match solve(&system, &rhs) {
            Some(a) => {
                let mut beta = Vec::with_capacity(t);
                beta.push(1.0 - a.iter().sum::<f64>());
                beta.extend(a);
                let s: f64 = beta.iter().sum();
                if s.abs() > f64::EPSILON {
                    beta.iter_mut().for_each(|b| *b /= s);
                }
                (beta, false)
            }
            None => (vec![1.0 / t as f64; t], true),
        }
    };
    let direction = g.matvec(&beta)?;
    let largest = norms.iter().cloned().fold(0.0, f64::max);
    let stationary = norm(&direction) <= 1e-9 * largest;
    Ok(ImtlSolution {
        direction,
        beta,
        fallback,
        stationary,
    })
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}
