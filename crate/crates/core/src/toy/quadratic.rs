//! Quadratic tasks behind a linear shared representation.
//!
//! With `H = E θ`, task `t` has loss `Lₜ = ½ (H − cₜ)ᵀ Qₜ (H − cₜ)` for a
//! symmetric positive definite `Qₜ`. Everything of interest is available in
//! closed form: `Z` has columns `Qₜ (Eθ − cₜ)`, `J = Eᵀ`, the Hessian of the
//! weighted loss is `Eᵀ (Σ wₜ Qₜ) E` and its minimiser solves a linear
//! system.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{Evaluation, MultiTaskProblem, Params};
use crate::aggregate::{SharedRepGradients, TaskWeights};
use crate::linalg::{dot, solve, sym_eigh, Matrix};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct QuadraticSuite {
    /// `|H| x |θ|`.
    pub e: Matrix,
    pub q: Vec<Matrix>,
    pub centers: Vec<Vec<f64>>,
    pub init: Vec<f64>,
}

impl QuadraticSuite {
    pub fn new(e: Matrix, q: Vec<Matrix>, centers: Vec<Vec<f64>>, init: Vec<f64>) -> Result<Self> {
        if q.is_empty() || q.len() != centers.len() {
            return Err(Error::DimensionMismatch {
                expected: q.len(),
                found: centers.len(),
            });
        }
        for (qt, ct) in q.iter().zip(&centers) {
            if qt.shape() != (e.rows(), e.rows()) || ct.len() != e.rows() {
                return Err(Error::DimensionMismatch {
                    expected: e.rows(),
                    found: ct.len(),
                });
            }
            sym_eigh(qt)?;
        }
        if init.len() != e.cols() {
            return Err(Error::DimensionMismatch {
                expected: e.cols(),
                found: init.len(),
            });
        }
        Ok(Self { e, q, centers, init })
    }

    /// Two isotropic tasks in the plane whose gradients at the start point
    /// `θ = 0` meet at `angle` (radians) and differ in norm by `dominance`.
    ///
    /// `L₁ = ½‖θ − (1, 0)‖²` and `L₂ = (dominance/2)‖θ − (cos a, sin a)‖²`.
    pub fn conflict(angle: f64, dominance: f64) -> Result<Self> {
        if !(dominance > 0.0 && dominance.is_finite() && angle.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "need finite angle and dominance > 0, got {angle}, {dominance}"
            )));
        }
        Self::new(
            Matrix::identity(2),
            vec![Matrix::identity(2), Matrix::identity(2).scale(dominance)],
            vec![vec![1.0, 0.0], vec![angle.cos(), angle.sin()]],
            vec![0.0, 0.0],
        )
    }

    /// `tasks` random tasks on `θ ∈ ℝᵈ` with a random, well-conditioned
    /// square encoder `E`, curvatures `Qₜ = MMᵀ + (t + 1)/2 · I` and centres
    /// of scale 3.
    pub fn random<R: Rng + ?Sized>(dim: usize, tasks: usize, rng: &mut R) -> Self {
        let mut gauss = |rows: usize, cols: usize, s: f64| {
            let data = (0..rows * cols).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect();
            Matrix::from_row_major(rows, cols, data).expect("finite samples")
        };
        let mut e = gauss(dim, dim, 0.3);
        for i in 0..dim {
            e[(i, i)] += 1.0;
        }
        let q = (0..tasks)
            .map(|t| {
                let m = gauss(dim, dim, 1.0);
                let mut q = m.matmul(&m.transpose()).expect("square");
                for i in 0..dim {
                    q[(i, i)] += 0.5 * (t + 1) as f64;
                }
                // exact symmetry regardless of rounding in the product
                for i in 0..dim {
                    for j in 0..i {
                        q[(j, i)] = q[(i, j)];
                    }
                }
                q
            })
            .collect();
        let centers = (0..tasks).map(|_| gauss(dim, 1, 3.0).column(0)).collect();
        let init = gauss(dim, 1, 5.0).column(0);
        Self { e, q, centers, init }
    }

    pub fn dim(&self) -> usize {
        self.e.cols()
    }

    fn weighted_curvature(&self, w: &TaskWeights) -> Result<Matrix> {
        if w.len() != self.q.len() {
            return Err(Error::DimensionMismatch {
                expected: self.q.len(),
                found: w.len(),
            });
        }
        let n = self.e.rows();
        let mut qw = Matrix::zeros(n, n);
        for (qt, &wt) in self.q.iter().zip(w.as_slice()) {
            for i in 0..n {
                for j in 0..n {
                    qw[(i, j)] += wt * qt[(i, j)];
                }
            }
        }
        Ok(qw)
    }

    /// Hessian `Eᵀ (Σ wₜ Qₜ) E` of the weighted loss.
    pub fn hessian(&self, w: &TaskWeights) -> Result<Matrix> {
        let qw = self.weighted_curvature(w)?;
        let mut h = self.e.transpose().matmul(&qw)?.matmul(&self.e)?;
        for i in 0..h.rows() {
            for j in 0..i {
                let s = 0.5 * (h[(i, j)] + h[(j, i)]);
                h[(i, j)] = s;
                h[(j, i)] = s;
            }
        }
        Ok(h)
    }

    /// Lipschitz constant `Λ` of the weighted gradient: the largest
    /// eigenvalue of the Hessian.
    pub fn lipschitz(&self, w: &TaskWeights) -> Result<f64> {
        Ok(sym_eigh(&self.hessian(w)?)?.eigenvalues[0])
    }

    /// Minimiser of `Σ wₜ Lₜ`.
    pub fn weighted_minimizer(&self, w: &TaskWeights) -> Result<Vec<f64>> {
        let qw_e = self.weighted_curvature(w)?.matmul(&self.e)?;
        let hess = self.e.transpose().matmul(&qw_e)?;
        let mut rhs_h = vec![0.0; self.e.rows()];
        for (t, (qt, ct)) in self.q.iter().zip(&self.centers).enumerate() {
            let qc = qt.matvec(ct)?;
            for (r, x) in rhs_h.iter_mut().zip(qc) {
                *r += w[t] * x;
            }
        }
        let rhs = self.e.tr_matvec(&rhs_h)?;
        solve(&hess, &rhs).ok_or_else(|| Error::InvalidArgument("singular weighted Hessian".into()))
    }

    /// Losses and `(Z, J)` at `θ`.
    pub fn evaluate_at(&self, theta: &[f64]) -> Result<(Vec<f64>, SharedRepGradients)> {
        let h = self.e.matvec(theta)?;
        let mut losses = Vec::with_capacity(self.q.len());
        let mut z_cols = Vec::with_capacity(self.q.len());
        for (qt, ct) in self.q.iter().zip(&self.centers) {
            let r: Vec<f64> = h.iter().zip(ct).map(|(a, b)| a - b).collect();
            let qr = qt.matvec(&r)?;
            losses.push(0.5 * dot(&r, &qr));
            z_cols.push(qr);
        }
        let rep = SharedRepGradients::new(Matrix::from_columns(&z_cols)?, self.e.transpose())?;
        Ok((losses, rep))
    }
}

impl MultiTaskProblem for QuadraticSuite {
    fn num_tasks(&self) -> usize {
        self.q.len()
    }

    fn initial_params(&self) -> Params {
        Params {
            shared: self.init.clone(),
            task: vec![Vec::new(); self.q.len()],
        }
    }

    fn evaluate(&self, params: &Params) -> Result<Evaluation> {
        let (losses, rep) = self.evaluate_at(&params.shared)?;
        Ok(Evaluation {
            losses,
            g: rep.full_gradient()?,
            rep: Some(rep),
            task_grads: vec![Vec::new(); self.q.len()],
        })
    }
}
