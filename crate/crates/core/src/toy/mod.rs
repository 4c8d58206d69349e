//! Small multi-task problems with exact gradients.
//!
//! Every problem splits its parameters into a shared block, which receives
//! the aggregated direction, and independent per-task blocks, which are
//! updated with their own gradients.

use crate::aggregate::SharedRepGradients;
use crate::linalg::Matrix;
use crate::Result;

pub mod metrics;
pub mod model;
pub mod quadratic;
pub mod train;

pub use metrics::{delta_m, DeltaMode, MetricEntry, MetricTable};
pub use model::{Activation, Architecture, Dataset, ForwardBackward, RegressionProblem, ToyModel};
pub use quadratic::QuadraticSuite;
pub use train::{descent_bound_violations, train, TrainConfig, TrainRun};

/// Shared and per-task parameters, flattened.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub shared: Vec<f64>,
    pub task: Vec<Vec<f64>>,
}

/// Everything one training step needs at the current parameters.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub losses: Vec<f64>,
    /// Task gradients w.r.t. the shared parameters, one column per task.
    pub g: Matrix,
    /// Task gradients w.r.t. the shared representation, with its Jacobian.
    pub rep: Option<SharedRepGradients>,
    /// Gradient of each task loss w.r.t. that task's own parameters.
    pub task_grads: Vec<Vec<f64>>,
}

pub trait MultiTaskProblem {
    fn num_tasks(&self) -> usize;

    fn initial_params(&self) -> Params;

    fn evaluate(&self, params: &Params) -> Result<Evaluation>;

    /// Task losses only; the default runs a full evaluation.
    fn losses(&self, params: &Params) -> Result<Vec<f64>> {
        Ok(self.evaluate(params)?.losses)
    }
}
