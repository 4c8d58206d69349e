use serde::Serialize;

use super::TaskWeights;
use crate::linalg::{dot, task_spectrum, Matrix, Spectrum};
use crate::{Error, Result};

/// Output of gradient matrix alignment.
#[derive(Debug, Clone, Serialize)]
pub struct AlignmentResult {
    /// Aligned cumulative gradient `ĝ₀ = G α`.
    pub g_hat0: Vec<f64>,
    /// Balance coefficients `α = B w`.
    pub alpha: Vec<f64>,
    /// Common singular value of the aligned system: the smallest singular
    /// value of `G` that survived the rank cut.
    pub sigma: f64,
    /// Effective rank of `G`.
    pub rank: usize,
    #[serde(skip)]
    pub spectrum: Spectrum,
    /// Task-space balance transformation `B`, so that `Ĝ = G B`.
    #[serde(skip)]
    pub balance: Matrix,
    /// `wᵀvᵣ` for every retained eigenvector.
    pub weight_projections: Vec<f64>,
}

impl AlignmentResult {
    /// The aligned gradient matrix `Ĝ = G B`.
    pub fn aligned_matrix(&self, g: &Matrix) -> Result<Matrix> {
        g.matmul(&self.balance)
    }
}

/// Aligns a gradient matrix so its columns become orthogonal with equal norm
/// `σ`, then combines them with the task weights.
///
/// The decomposition happens in task space: with `(λ, V)` the eigenpairs of
/// `GᵀG` restricted to the `R` eigenvalues above the rank cut,
///
/// ```text
/// B = √λ_R · V_R diag(1/√λ₁, …, 1/√λ_R) V_Rᵀ,   α = B w,   ĝ₀ = G α
/// ```
///
/// For full-rank `G` the aligned matrix `G B` equals `σ U Vᵀ`, the closest
/// matrix to `G` whose Gram matrix is `σ² I`. For rank-deficient `G` the
/// transformation acts on the row space only and the component of `w` in the
/// null space of `G` is dropped.
///
/// Returns [`Error::ZeroGradient`] when every column of `G` is zero.
pub fn align(g: &Matrix, w: &TaskWeights) -> Result<AlignmentResult> {
    check_input(g, w)?;
    align_with_spectrum(g, w, task_spectrum(g))
}

/// [`align`] with a precomputed spectrum of `GᵀG`.
///
/// Useful when the caller already holds the decomposition, and for checking
/// that the result does not depend on eigenvector signs.
pub fn align_with_spectrum(g: &Matrix, w: &TaskWeights, spectrum: Spectrum) -> Result<AlignmentResult> {
    check_input(g, w)?;
    if spectrum.eigenvectors.rows() != g.cols() {
        return Err(Error::DimensionMismatch {
            expected: g.cols(),
            found: spectrum.eigenvectors.rows(),
        });
    }
    let rank = spectrum.rank;
    if rank == 0 {
        return Err(Error::ZeroGradient);
    }
    let (balance, sigma) = balance_transform(&spectrum);
    let alpha = balance.matvec(w.as_slice())?;
    let g_hat0 = g.matvec(&alpha)?;
    let weight_projections = (0..rank)
        .map(|r| dot(w.as_slice(), &spectrum.eigenvector(r)))
        .collect();
    Ok(AlignmentResult {
        g_hat0,
        alpha,
        sigma,
        rank,
        spectrum,
        balance,
        weight_projections,
    })
}

/// Balance transformation `B` and scale `σ = √λ_R` for a task-space spectrum.
pub fn balance_transform(spectrum: &Spectrum) -> (Matrix, f64) {
    let t = spectrum.eigenvectors.rows();
    let rank = spectrum.rank;
    let sigmas = spectrum.singular_values();
    let sigma = sigmas.last().copied().unwrap_or(0.0);
    let mut b = Matrix::zeros(t, t);
    for (r, s) in sigmas.iter().enumerate().take(rank) {
        let v = spectrum.eigenvector(r);
        let k = sigma / s;
        for i in 0..t {
            let vi = k * v[i];
            for j in 0..t {
                b[(i, j)] += vi * v[j];
            }
        }
    }
    (b, sigma)
}

fn check_input(g: &Matrix, w: &TaskWeights) -> Result<()> {
    if w.len() != g.cols() {
        return Err(Error::DimensionMismatch {
            expected: g.cols(),
            found: w.len(),
        });
    }
    if g.is_zero() {
        return Err(Error::ZeroGradient);
    }
    Ok(())
}

/// Task gradients taken with respect to a shared representation `H`.
///
/// `z` is `|H| x T` (one column per task) and `j` is the `|θ| x |H|` Jacobian
/// of the representation, oriented so that the full gradient matrix is
/// `G = J Z`.
#[derive(Debug, Clone)]
pub struct SharedRepGradients {
    pub z: Matrix,
    pub j: Matrix,
}

impl SharedRepGradients {
    pub fn new(z: Matrix, j: Matrix) -> Result<Self> {
        if j.cols() != z.rows() {
            return Err(Error::DimensionMismatch {
                expected: z.rows(),
                found: j.cols(),
            });
        }
        Ok(Self { z, j })
    }

    /// Identity Jacobian: the representation is the parameter vector itself.
    pub fn identity(g: Matrix) -> Self {
        let j = Matrix::identity(g.rows());
        Self { z: g, j }
    }

    pub fn num_tasks(&self) -> usize {
        self.z.cols()
    }

    /// `G = J Z`.
    pub fn full_gradient(&self) -> Result<Matrix> {
        self.j.matmul(&self.z)
    }
}

/// Upper-bound approximation of [`align`]: aligns `Z` instead of `G` and maps
/// the combined representation gradient back through `J`.
///
/// Needs no per-task backward pass through the shared parameters; the only
/// parameter-space work is one application of `J`. The returned `g_hat0`
/// equals `σ J Ẑ w` with `Ẑ = U Vᵀ` the unit-scale alignment of `Z`; `alpha`,
/// `sigma`, `rank` and `spectrum` describe the alignment of `Z`.
pub fn align_ub(rep: &SharedRepGradients, w: &TaskWeights) -> Result<AlignmentResult> {
    let mut res = align(&rep.z, w)?;
    res.g_hat0 = rep.j.matvec(&res.g_hat0)?;
    Ok(res)
}
