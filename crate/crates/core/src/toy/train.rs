//! Deterministic full-batch training loop.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{MultiTaskProblem, Params};
use crate::aggregate::{aggregate, Method, TaskWeights};
use crate::diagnostics::stability_report;
use crate::linalg::dot;
use crate::optim::{OptimizerConfig, OptimizerState};
use crate::trajectory::{due, Record, StopReason, Trajectory, UpdateStats};
use crate::{Error, Result};

/// Any task loss above this aborts training.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Serialize)]
pub struct TrainConfig {
    pub method: Method,
    pub optimizer: OptimizerConfig,
    pub steps: usize,
    pub weights: TaskWeights,
    pub seed: u64,
    pub record_stride: usize,
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub trajectory: Trajectory,
    pub params: Params,
}

/// Trains `problem` for `config.steps` updates.
///
/// Shared parameters follow the aggregated direction; `Aligned-MTL-UB` uses
/// the problem's `(Z, J)` pair when it provides one. Each task's own
/// parameters follow that task's gradient through a separate optimizer with
/// the same configuration. Training stops early when every shared gradient
/// vanishes.
pub fn train<P: MultiTaskProblem + ?Sized>(problem: &P, config: &TrainConfig) -> Result<TrainRun> {
    config.optimizer.validate()?;
    if config.weights.len() != problem.num_tasks() {
        return Err(Error::DimensionMismatch {
            expected: problem.num_tasks(),
            found: config.weights.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = problem.initial_params();
    let mut shared_opt = OptimizerState::new(config.optimizer, params.shared.len());
    let mut task_opts: Vec<OptimizerState> = params
        .task
        .iter()
        .map(|p| OptimizerState::new(config.optimizer, p.len()))
        .collect();
    let mut records = Vec::new();
    let mut stop = StopReason::Completed;

    for step in 0..=config.steps {
        let ev = problem.evaluate(&params)?;
        for (task, &loss) in ev.losses.iter().enumerate() {
            if loss.is_nan() || loss > DIVERGENCE_LIMIT {
                return Err(Error::Diverged { step, task, loss });
            }
        }
        let direction = if step < config.steps {
            match aggregate(config.method, &ev.g, ev.rep.as_ref(), &config.weights, &mut rng) {
                Ok(d) => Some(d),
                Err(Error::ZeroGradient) => {
                    stop = StopReason::ZeroGradient;
                    None
                }
                Err(e) => return Err(e),
            }
        } else {
            None
        };
        if due(step, config.record_stride, config.steps) || direction.is_none() {
            let update = direction.as_ref().map(|d| UpdateStats {
                g0_dot_r: dot(&ev.g.matvec(config.weights.as_slice()).expect("weights match tasks"), d),
                r_norm_sq: dot(d, d),
            });
            records.push(Record {
                step,
                theta: params.shared.clone(),
                l0: dot(&ev.losses, config.weights.as_slice()),
                losses: ev.losses,
                report: stability_report(&ev.g).ok(),
                update,
            });
        }
        let Some(d) = direction else { break };
        shared_opt.step(&mut params.shared, &d)?;
        for ((p, opt), grad) in params.task.iter_mut().zip(&mut task_opts).zip(&ev.task_grads) {
            if !p.is_empty() {
                opt.step(p, grad)?;
            }
        }
    }
    Ok(TrainRun {
        trajectory: Trajectory { records, stop },
        params,
    })
}

/// Steps at which a plain gradient step of size `lr` decreased the weighted
/// loss by less than `lr⟨Gw, r⟩ − lr²Λ/2 ‖r‖²` (minus `slack`).
///
/// Needs consecutive records (stride 1) carrying update statistics.
pub fn descent_bound_violations(trajectory: &Trajectory, lr: f64, lipschitz: f64, slack: f64) -> Vec<usize> {
    trajectory
        .records
        .windows(2)
        .filter_map(|pair| {
            let (a, b) = (&pair[0], &pair[1]);
            let u = a.update?;
            if b.step != a.step + 1 {
                return None;
            }
            let bound = lr * u.g0_dot_r - 0.5 * lr * lr * lipschitz * u.r_norm_sq;
            (a.l0 - b.l0 < bound - slack).then_some(a.step)
        })
        .collect()
}
