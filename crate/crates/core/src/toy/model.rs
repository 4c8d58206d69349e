//! A one-layer shared encoder with linear task heads and hand-written
//! backpropagation.
//!
//! For a sample `x` the encoder produces `h = act(W x + b)` and task `t`
//! predicts `ŷₜ = Vₜ h + cₜ`. Task losses are mean squared errors,
//! `Lₜ = (1/N) Σₙ ‖ŷₜₙ − yₜₙ‖²`. The representation of a batch is the
//! concatenation of all `hₙ`, so `Z` has `N·hidden` rows and the Jacobian
//! `J` maps it back onto the encoder parameters with `G = J·Z` exactly.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::{Evaluation, MultiTaskProblem, Params};
use crate::aggregate::{SharedRepGradients, TaskWeights};
use crate::linalg::{solve, Matrix};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Tanh,
}

impl Activation {
    /// Value and derivative at `a`.
    fn eval(self, a: f64) -> (f64, f64) {
        match self {
            Activation::Linear => (a, 1.0),
            Activation::Tanh => {
                let t = a.tanh();
                (t, 1.0 - t * t)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: usize,
    pub activation: Activation,
    /// Output width of each task head.
    pub head_dims: Vec<usize>,
}

impl Architecture {
    /// `W` (row-major, `hidden x input_dim`) followed by `b`.
    pub fn shared_len(&self) -> usize {
        self.hidden * (self.input_dim + 1)
    }

    /// `Vₜ` (row-major, `out x hidden`) followed by `cₜ`.
    pub fn head_len(&self, t: usize) -> usize {
        self.head_dims[t] * (self.hidden + 1)
    }

    pub fn num_tasks(&self) -> usize {
        self.head_dims.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `N x input_dim`.
    pub x: Matrix,
    /// Per task, `N x head_dims[t]`.
    pub y: Vec<Matrix>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }
}

#[derive(Debug, Clone)]
pub struct ToyModel {
    pub arch: Architecture,
    pub params: Params,
}

/// Output of one forward and backward pass.
#[derive(Debug, Clone)]
pub struct ForwardBackward {
    pub losses: Vec<f64>,
    /// `|θ_sh| x T`.
    pub g: Matrix,
    /// `Z` is `N·hidden x T`, `J` is `|θ_sh| x N·hidden`.
    pub rep: SharedRepGradients,
    pub task_grads: Vec<Vec<f64>>,
}

impl ToyModel {
    /// Gaussian initialisation with standard deviation `1/√fan_in`.
    pub fn init<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Self {
        let mut normal = |n: usize, fan_in: usize| -> Vec<f64> {
            let s = 1.0 / (fan_in as f64).sqrt();
            (0..n).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect()
        };
        let shared = normal(arch.shared_len(), arch.input_dim);
        let task = (0..arch.num_tasks()).map(|t| normal(arch.head_len(t), arch.hidden)).collect();
        Self {
            arch,
            params: Params { shared, task },
        }
    }

    pub fn forward_backward(&self, data: &Dataset) -> Result<ForwardBackward> {
        forward_backward(&self.arch, &self.params, data)
    }
}

fn check_dims(arch: &Architecture, params: &Params, data: &Dataset) -> Result<()> {
    let mismatch = |expected, found| Err(Error::DimensionMismatch { expected, found });
    if params.shared.len() != arch.shared_len() {
        return mismatch(arch.shared_len(), params.shared.len());
    }
    if params.task.len() != arch.num_tasks() {
        return mismatch(arch.num_tasks(), params.task.len());
    }
    for (t, p) in params.task.iter().enumerate() {
        if p.len() != arch.head_len(t) {
            return mismatch(arch.head_len(t), p.len());
        }
    }
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if data.x.cols() != arch.input_dim {
        return mismatch(arch.input_dim, data.x.cols());
    }
    if data.y.len() != arch.num_tasks() {
        return mismatch(arch.num_tasks(), data.y.len());
    }
    for (t, y) in data.y.iter().enumerate() {
        if y.shape() != (data.len(), arch.head_dims[t]) {
            return mismatch(arch.head_dims[t], y.cols());
        }
    }
    Ok(())
}

/// Losses, shared gradients `G`, the `(Z, J)` pair and head gradients at
/// `params`.
pub fn forward_backward(arch: &Architecture, params: &Params, data: &Dataset) -> Result<ForwardBackward> {
    check_dims(arch, params, data)?;
    let (d, hid, n_samples, tasks) = (arch.input_dim, arch.hidden, data.len(), arch.num_tasks());
    let scale = 2.0 / n_samples as f64;
    let (w, b) = params.shared.split_at(hid * d);
    let rep_dim = n_samples * hid;

    let mut losses = vec![0.0; tasks];
    let mut z = Matrix::zeros(rep_dim, tasks);
    let mut g = Matrix::zeros(arch.shared_len(), tasks);
    let mut jac = Matrix::zeros(arch.shared_len(), rep_dim);
    let mut task_grads: Vec<Vec<f64>> = (0..tasks).map(|t| vec![0.0; arch.head_len(t)]).collect();
    let mut h = vec![0.0; hid];
    let mut dact = vec![0.0; hid];

    for n in 0..n_samples {
        let x = data.x.row(n);
        for k in 0..hid {
            let a = b[k] + (0..d).map(|j| w[k * d + j] * x[j]).sum::<f64>();
            (h[k], dact[k]) = arch.activation.eval(a);
            for j in 0..d {
                jac[(k * d + j, n * hid + k)] = dact[k] * x[j];
            }
            jac[(hid * d + k, n * hid + k)] = dact[k];
        }
        for t in 0..tasks {
            let out = arch.head_dims[t];
            let (v, c) = params.task[t].split_at(out * hid);
            let (dv, dc) = task_grads[t].split_at_mut(out * hid);
            let y = data.y[t].row(n);
            for o in 0..out {
                let e = c[o] + (0..hid).map(|k| v[o * hid + k] * h[k]).sum::<f64>() - y[o];
                losses[t] += e * e / n_samples as f64;
                dc[o] += scale * e;
                for k in 0..hid {
                    dv[o * hid + k] += scale * e * h[k];
                    z[(n * hid + k, t)] += scale * e * v[o * hid + k];
                }
            }
            for k in 0..hid {
                let back = z[(n * hid + k, t)] * dact[k];
                for j in 0..d {
                    g[(k * d + j, t)] += back * x[j];
                }
                g[(hid * d + k, t)] += back;
            }
        }
    }
    Ok(ForwardBackward {
        losses,
        g,
        rep: SharedRepGradients::new(z, jac)?,
        task_grads,
    })
}

/// Flattened representation `(h₁, …, h_N)` of a batch.
pub fn representation(arch: &Architecture, params: &Params, data: &Dataset) -> Result<Vec<f64>> {
    check_dims(arch, params, data)?;
    let (d, hid) = (arch.input_dim, arch.hidden);
    let (w, b) = params.shared.split_at(hid * d);
    let mut out = Vec::with_capacity(data.len() * hid);
    for n in 0..data.len() {
        let x = data.x.row(n);
        for k in 0..hid {
            let a = b[k] + (0..d).map(|j| w[k * d + j] * x[j]).sum::<f64>();
            out.push(arch.activation.eval(a).0);
        }
    }
    Ok(out)
}

/// Task losses as a function of the flattened representation alone; the
/// encoder parameters in `params` are ignored.
pub fn losses_from_representation(
    arch: &Architecture,
    params: &Params,
    data: &Dataset,
    h: &[f64],
) -> Result<Vec<f64>> {
    check_dims(arch, params, data)?;
    let (hid, n_samples) = (arch.hidden, data.len());
    if h.len() != n_samples * hid {
        return Err(Error::DimensionMismatch {
            expected: n_samples * hid,
            found: h.len(),
        });
    }
    let mut losses = vec![0.0; arch.num_tasks()];
    for (t, loss) in losses.iter_mut().enumerate() {
        let out = arch.head_dims[t];
        let (v, c) = params.task[t].split_at(out * hid);
        for n in 0..n_samples {
            let hn = &h[n * hid..(n + 1) * hid];
            for o in 0..out {
                let e = c[o] + (0..hid).map(|k| v[o * hid + k] * hn[k]).sum::<f64>() - data.y[t][(n, o)];
                *loss += e * e / n_samples as f64;
            }
        }
    }
    Ok(losses)
}

/// A [`ToyModel`] bound to a fixed full-batch dataset.
#[derive(Debug, Clone)]
pub struct RegressionProblem {
    pub model: ToyModel,
    pub data: Dataset,
}

impl MultiTaskProblem for RegressionProblem {
    fn num_tasks(&self) -> usize {
        self.model.arch.num_tasks()
    }

    fn initial_params(&self) -> Params {
        self.model.params.clone()
    }

    fn evaluate(&self, params: &Params) -> Result<Evaluation> {
        let fb = forward_backward(&self.model.arch, params, &self.data)?;
        Ok(Evaluation {
            losses: fb.losses,
            g: fb.g,
            rep: Some(fb.rep),
            task_grads: fb.task_grads,
        })
    }
}

fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Matrix::from_row_major(rows, cols, data).expect("finite gaussian samples")
}

impl RegressionProblem {
    /// Linear encoder (3 inputs, 2 hidden units) with two scalar heads on
    /// noisy linear targets of different scales. Every task can reach its
    /// own least-squares fit at the same time, so the joint optimum is
    /// known in closed form; see [`RegressionProblem::least_squares_losses`].
    pub fn linear_two_heads(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let arch = Architecture {
            input_dim: 3,
            hidden: 2,
            activation: Activation::Linear,
            head_dims: vec![1, 1],
        };
        let n = 64;
        let x = gaussian_matrix(&mut rng, n, 3);
        let coef = [[1.0, -2.0, 0.5, 0.3], [-4.0, 1.0, 3.0, -1.0]];
        let y = coef
            .iter()
            .map(|a| {
                let col: Vec<f64> = (0..n)
                    .map(|i| {
                        let r = x.row(i);
                        a[0] * r[0] + a[1] * r[1] + a[2] * r[2] + a[3] + 0.1 * rng.sample::<f64, _>(StandardNormal)
                    })
                    .collect();
                Matrix::from_columns(&[col]).expect("non-empty column")
            })
            .collect();
        let model = ToyModel::init(arch, &mut rng);
        Self {
            model,
            data: Dataset { x, y },
        }
    }

    /// One-hidden-layer `tanh` encoder (3 inputs, 6 hidden units) with three
    /// scalar heads on smooth nonlinear targets.
    pub fn tanh_three_heads(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let arch = Architecture {
            input_dim: 3,
            hidden: 6,
            activation: Activation::Tanh,
            head_dims: vec![1, 1, 1],
        };
        let n = 32;
        let x = gaussian_matrix(&mut rng, n, 3);
        let targets: [fn(&[f64]) -> f64; 3] = [
            |r| r[0].sin() + 0.5 * r[1],
            |r| 3.0 * (r[1] * r[2]).tanh(),
            |r| -(r[0] - r[2]).cos(),
        ];
        let y = targets
            .iter()
            .map(|f| {
                let col: Vec<f64> = (0..n).map(|i| f(x.row(i))).collect();
                Matrix::from_columns(&[col]).expect("non-empty column")
            })
            .collect();
        let model = ToyModel::init(arch, &mut rng);
        Self {
            model,
            data: Dataset { x, y },
        }
    }

    /// Per-task mean squared error of an ordinary least-squares fit with
    /// intercept.
    ///
    /// For a linear encoder with at least as many hidden units as total
    /// head outputs these are the losses at the joint optimum, so
    /// `Σ wₜ Lₜ*` is the optimal weighted loss. Errors for other
    /// architectures.
    pub fn least_squares_losses(&self) -> Result<Vec<f64>> {
        let arch = &self.model.arch;
        let outputs: usize = arch.head_dims.iter().sum();
        if arch.activation != Activation::Linear || arch.hidden < outputs {
            return Err(Error::InvalidArgument(
                "closed-form optimum needs a linear encoder with hidden >= total outputs".into(),
            ));
        }
        let (n, d) = self.data.x.shape();
        let mut design = Matrix::zeros(n, d + 1);
        for i in 0..n {
            for j in 0..d {
                design[(i, j)] = self.data.x[(i, j)];
            }
            design[(i, d)] = 1.0;
        }
        let normal = design.transpose().matmul(&design)?;
        let mut out = Vec::with_capacity(arch.num_tasks());
        for y in &self.data.y {
            let mut loss = 0.0;
            for o in 0..y.cols() {
                let target = y.column(o);
                let rhs = design.tr_matvec(&target)?;
                let coef = solve(&normal, &rhs)
                    .ok_or_else(|| Error::InvalidArgument("singular design matrix".into()))?;
                let fit = design.matvec(&coef)?;
                loss += fit.iter().zip(&target).map(|(f, t)| (f - t).powi(2)).sum::<f64>() / n as f64;
            }
            out.push(loss);
        }
        Ok(out)
    }

    /// `Σ wₜ Lₜ*` from [`RegressionProblem::least_squares_losses`].
    pub fn least_squares_optimum(&self, w: &TaskWeights) -> Result<f64> {
        let l = self.least_squares_losses()?;
        Ok(l.iter().zip(w.as_slice()).map(|(l, w)| l * w).sum())
    }
}
