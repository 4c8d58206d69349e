//! Two-task synthetic benchmark on `θ ∈ ℝ²`.
//!
//! ```text
//! L₁ = c₁(θ) f₁(θ) + c₂(θ) g₁(θ)          L₂ = c₁(θ) f₂(θ) + c₂(θ) g₂(θ)
//!
//! h₁ = |(−θ₁ − 7)/2 − tanh(−θ₂)|
//! h₂ = |(−θ₁ + 3)/2 ∓ tanh(−θ₂) + 2|       (see H2Grouping)
//! c₁ = max(tanh(θ₂/2), 0)                  c₂ = max(tanh(−θ₂/2), 0)
//! fᵢ = log max(hᵢ, 5·10⁻⁶) + 6
//! g₁ = ((−θ₁ − 7)² + 0.1(−θ₂ − 8)²)/10 − 20
//! g₂ = ((−θ₁ + 7)² + 0.1(−θ₂ − 8)²)/10 − 20
//! ```
//!
//! The upper half-plane holds two narrow logarithmic valleys near `θ₁ ≈ ∓7`
//! where the tasks conflict and one gradient dominates the other; the lower
//! half-plane is a shared quadratic bowl holding the optimum of the uniform
//! combination. Gradients are analytic and follow fixed conventions on the
//! non-smooth sets: `d|x|/dx = 0` at `x = 0`, `max(a, b)` differentiates
//! `a` on ties, and the log clamp passes no gradient while active.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aggregate::{aggregate, Method, TaskWeights};
use crate::diagnostics::stability_report;
use crate::linalg::{dot, Matrix};
use crate::optim::{OptimizerConfig, OptimizerState};
use crate::trajectory::{due, Record, StopReason, Trajectory, UpdateStats};
use crate::{Error, Result};

pub const LOG_CLAMP: f64 = 5e-6;

/// Initial points of the benchmark protocol.
pub const INIT_POINTS: [Theta2; 5] = [
    Theta2::new(-8.5, 7.5),
    Theta2::new(0.0, 0.0),
    Theta2::new(9.0, 9.0),
    Theta2::new(-7.5, -0.5),
    Theta2::new(9.0, -1.0),
];

pub const DEFAULT_LR: f64 = 1e-3;
pub const DEFAULT_STEPS: usize = 35_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theta2 {
    pub t1: f64,
    pub t2: f64,
}

impl Theta2 {
    pub const fn new(t1: f64, t2: f64) -> Self {
        Self { t1, t2 }
    }

    pub fn to_vec(self) -> Vec<f64> {
        vec![self.t1, self.t2]
    }

    pub fn distance(self, other: Theta2) -> f64 {
        (self.t1 - other.t1).hypot(self.t2 - other.t2)
    }
}

impl FromStr for Theta2 {
    type Err = Error;

    /// `x,y`
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("expected `t1,t2`, got `{s}`"));
        let (a, b) = s.split_once(',').ok_or_else(bad)?;
        let t1: f64 = a.trim().parse().map_err(|_| bad())?;
        let t2: f64 = b.trim().parse().map_err(|_| bad())?;
        if !(t1.is_finite() && t2.is_finite()) {
            return Err(bad());
        }
        Ok(Self::new(t1, t2))
    }
}

/// How the constant and the `tanh` term combine inside `h₂`.
///
/// The typeset expression `|(−θ₁+3)/2 − tanh(−θ₂) + 2|` can be read three
/// ways once the sign of the `tanh` term is taken into account:
///
/// * `Typeset`: `|(−θ₁+3)/2 − tanh(−θ₂) + 2|`, the literal reading;
/// * `Parenthesized`: `|(−θ₁+3)/2 − (tanh(−θ₂) + 2)|`;
/// * `Mirrored`: `|(−θ₁+3)/2 + tanh(−θ₂) + 2|`, under which
///   `L₂(−θ₁, θ₂) = L₁(θ₁, θ₂)` holds exactly, so the two valleys are mirror
///   images of each other.
///
/// `Mirrored` is the default: it is the only reading that gives the
/// symmetric two-valley landscape the benchmark is known for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum H2Grouping {
    Typeset,
    Parenthesized,
    #[default]
    Mirrored,
}

impl fmt::Display for H2Grouping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            H2Grouping::Typeset => "typeset",
            H2Grouping::Parenthesized => "parenthesized",
            H2Grouping::Mirrored => "mirrored",
        })
    }
}

impl FromStr for H2Grouping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "typeset" => Ok(H2Grouping::Typeset),
            "parenthesized" => Ok(H2Grouping::Parenthesized),
            "mirrored" => Ok(H2Grouping::Mirrored),
            _ => Err(Error::InvalidArgument(format!("unknown h2 grouping `{s}`"))),
        }
    }
}

/// Losses and task gradients at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticEval {
    pub losses: [f64; 2],
    /// `grads[t]` is the gradient of task `t` w.r.t. `(θ₁, θ₂)`.
    pub grads: [[f64; 2]; 2],
}

impl SyntheticEval {
    pub fn gradient_matrix(&self) -> Matrix {
        Matrix::from_columns(&[self.grads[0].to_vec(), self.grads[1].to_vec()])
            .expect("2x2 gradient matrix")
    }

    pub fn weighted_loss(&self, w: &TaskWeights) -> f64 {
        dot(&self.losses, w.as_slice())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SyntheticObjective {
    pub grouping: H2Grouping,
}

/// `|x|` and its derivative with `d|x|/dx = 0` at zero.
fn abs_d(x: f64) -> (f64, f64) {
    let d = if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    };
    (x.abs(), d)
}

/// `max(x, 0)` and its derivative factor; ties take the first argument.
fn relu_d(x: f64) -> (f64, f64) {
    if x >= 0.0 {
        (x, 1.0)
    } else {
        (0.0, 0.0)
    }
}

/// `log max(h, LOG_CLAMP) + 6` and the factor multiplying `dh`.
fn log_clamp_d(h: f64) -> (f64, f64) {
    if h >= LOG_CLAMP {
        (h.ln() + 6.0, 1.0 / h)
    } else {
        (LOG_CLAMP.ln() + 6.0, 0.0)
    }
}

impl SyntheticObjective {
    pub fn new(grouping: H2Grouping) -> Self {
        Self { grouping }
    }

    pub fn losses(&self, th: Theta2) -> [f64; 2] {
        self.eval(th).losses
    }

    pub fn eval(&self, th: Theta2) -> SyntheticEval {
        let Theta2 { t1, t2 } = th;
        let s = (-t2).tanh();
        let ds2 = -(1.0 - s * s); // d tanh(−θ₂)/dθ₂

        let u1 = (-t1 - 7.0) / 2.0 - s;
        let du1 = [-0.5, -ds2];
        let (u2, du2) = match self.grouping {
            H2Grouping::Typeset => ((-t1 + 3.0) / 2.0 - s + 2.0, [-0.5, -ds2]),
            H2Grouping::Parenthesized => ((-t1 + 3.0) / 2.0 - (s + 2.0), [-0.5, -ds2]),
            H2Grouping::Mirrored => ((-t1 + 3.0) / 2.0 + s + 2.0, [-0.5, ds2]),
        };
        let (h1, sh1) = abs_d(u1);
        let (h2, sh2) = abs_d(u2);
        let (f1, kf1) = log_clamp_d(h1);
        let (f2, kf2) = log_clamp_d(h2);
        let df1 = [kf1 * sh1 * du1[0], kf1 * sh1 * du1[1]];
        let df2 = [kf2 * sh2 * du2[0], kf2 * sh2 * du2[1]];

        let th_up = (t2 / 2.0).tanh();
        let (c1, k1) = relu_d(th_up);
        let dc1 = [0.0, k1 * 0.5 * (1.0 - th_up * th_up)];
        let th_dn = (-t2 / 2.0).tanh();
        let (c2, k2) = relu_d(th_dn);
        let dc2 = [0.0, -k2 * 0.5 * (1.0 - th_dn * th_dn)];

        let q = 0.1 * (-t2 - 8.0).powi(2);
        let g1 = ((-t1 - 7.0).powi(2) + q) / 10.0 - 20.0;
        let g2 = ((-t1 + 7.0).powi(2) + q) / 10.0 - 20.0;
        let dq = (t2 + 8.0) / 50.0;
        let dg1 = [(t1 + 7.0) / 5.0, dq];
        let dg2 = [(t1 - 7.0) / 5.0, dq];

        let l1 = c1 * f1 + c2 * g1;
        let l2 = c1 * f2 + c2 * g2;
        let grad = |f: f64, df: [f64; 2], g: f64, dg: [f64; 2]| {
            [0, 1].map(|k| dc1[k] * f + c1 * df[k] + dc2[k] * g + c2 * dg[k])
        };
        SyntheticEval {
            losses: [l1, l2],
            grads: [grad(f1, df1, g1, dg1), grad(f2, df2, g2, dg2)],
        }
    }

    /// Distance from `θ` to the nearest set where the analytic gradient may
    /// be discontinuous (kinks of `|·|`, the log clamp boundary, `θ₂ = 0`),
    /// measured in the arguments of those functions.
    pub fn nonsmooth_margin(&self, th: Theta2) -> f64 {
        let s = (-th.t2).tanh();
        let u1 = (-th.t1 - 7.0) / 2.0 - s;
        let u2 = match self.grouping {
            H2Grouping::Typeset => (-th.t1 + 3.0) / 2.0 - s + 2.0,
            H2Grouping::Parenthesized => (-th.t1 + 3.0) / 2.0 - (s + 2.0),
            H2Grouping::Mirrored => (-th.t1 + 3.0) / 2.0 + s + 2.0,
        };
        [u1.abs(), u2.abs(), (u1.abs() - LOG_CLAMP).abs(), (u2.abs() - LOG_CLAMP).abs(), th.t2.abs()]
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Evaluates the default benchmark objective.
pub fn synth_eval(th: Theta2) -> SyntheticEval {
    SyntheticObjective::default().eval(th)
}

/// Axis-aligned search box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub t1: (f64, f64),
    pub t2: (f64, f64),
}

impl Bounds {
    pub fn square(lo: f64, hi: f64) -> Self {
        Self {
            t1: (lo, hi),
            t2: (lo, hi),
        }
    }
}

impl Default for Bounds {
    fn default() -> Self {
        Self::square(-10.0, 10.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridCell {
    pub theta: Theta2,
    pub l1: f64,
    pub l2: f64,
    pub l0: f64,
}

/// Dense grid evaluation of the objective: global optimum of the weighted
/// loss and the non-dominated cells.
#[derive(Debug, Clone)]
pub struct ParetoOracle {
    pub bounds: Bounds,
    /// Points per axis, endpoints included.
    pub resolution: usize,
    pub weights: TaskWeights,
    /// Row-major over `(θ₂ index, θ₁ index)`.
    pub cells: Vec<GridCell>,
    pub optimum: usize,
    /// Largest change of `L₀` between the optimum cell and its 8 neighbours.
    pub optimum_variation: f64,
    /// Indices of non-dominated cells, sorted by `L₁`.
    pub front: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleSummary {
    pub bounds: Bounds,
    pub resolution: usize,
    pub weights: Vec<f64>,
    pub optimum: GridCell,
    pub optimum_variation: f64,
    pub front_size: usize,
}

/// Evaluates the objective on a `resolution x resolution` grid over `bounds`.
pub fn build_oracle(
    objective: &SyntheticObjective,
    bounds: Bounds,
    resolution: usize,
    weights: &TaskWeights,
) -> Result<ParetoOracle> {
    if resolution < 2 {
        return Err(Error::InvalidArgument(format!("grid resolution must be >= 2, got {resolution}")));
    }
    if weights.len() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: weights.len(),
        });
    }
    let axis = |(lo, hi): (f64, f64), k: usize| lo + (hi - lo) * k as f64 / (resolution - 1) as f64;
    let mut cells = Vec::with_capacity(resolution * resolution);
    for b in 0..resolution {
        for a in 0..resolution {
            let theta = Theta2::new(axis(bounds.t1, a), axis(bounds.t2, b));
            let [l1, l2] = objective.losses(theta);
            let l0 = weights[0] * l1 + weights[1] * l2;
            cells.push(GridCell { theta, l1, l2, l0 });
        }
    }
    let optimum = (0..cells.len())
        .min_by(|&i, &j| cells[i].l0.total_cmp(&cells[j].l0))
        .expect("non-empty grid");

    let (oa, ob) = ((optimum % resolution) as isize, (optimum / resolution) as isize);
    let mut optimum_variation: f64 = 0.0;
    for db in -1..=1 {
        for da in -1..=1 {
            let (a, b) = (oa + da, ob + db);
            if (da, db) == (0, 0) || a < 0 || b < 0 || a >= resolution as isize || b >= resolution as isize {
                continue;
            }
            let c = &cells[b as usize * resolution + a as usize];
            optimum_variation = optimum_variation.max((c.l0 - cells[optimum].l0).abs());
        }
    }

    let front = non_dominated(&cells);
    Ok(ParetoOracle {
        bounds,
        resolution,
        weights: weights.clone(),
        cells,
        optimum,
        optimum_variation,
        front,
    })
}

fn non_dominated(cells: &[GridCell]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..cells.len()).collect();
    order.sort_by(|&i, &j| {
        cells[i]
            .l1
            .total_cmp(&cells[j].l1)
            .then(cells[i].l2.total_cmp(&cells[j].l2))
            .then(i.cmp(&j))
    });
    let mut front = Vec::new();
    let mut best_l2 = f64::INFINITY;
    let mut k = 0;
    while k < order.len() {
        // group of equal L₁; only its smallest L₂ can survive
        let l1 = cells[order[k]].l1;
        let mut end = k;
        while end < order.len() && cells[order[end]].l1 == l1 {
            end += 1;
        }
        let group_min = cells[order[k]].l2;
        if group_min < best_l2 {
            front.extend(order[k..end].iter().copied().filter(|&i| cells[i].l2 == group_min));
            best_l2 = group_min;
        }
        k = end;
    }
    front
}

impl ParetoOracle {
    pub fn optimum_cell(&self) -> &GridCell {
        &self.cells[self.optimum]
    }

    /// Whether some grid cell improves both losses by more than `tol`.
    pub fn is_dominated(&self, l1: f64, l2: f64, tol: f64) -> bool {
        self.front
            .iter()
            .any(|&i| self.cells[i].l1 < l1 - tol && self.cells[i].l2 < l2 - tol)
    }

    /// Tolerance for "reached the optimum": the larger of `floor` and the
    /// grid-cell variation around the optimum.
    pub fn tolerance(&self, floor: f64) -> f64 {
        floor.max(self.optimum_variation)
    }

    pub fn summary(&self) -> OracleSummary {
        OracleSummary {
            bounds: self.bounds,
            resolution: self.resolution,
            weights: self.weights.as_slice().to_vec(),
            optimum: *self.optimum_cell(),
            optimum_variation: self.optimum_variation,
            front_size: self.front.len(),
        }
    }

    /// CSV dump of every cell, with a flag for front membership.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut on_front = vec![false; self.cells.len()];
        for &i in &self.front {
            on_front[i] = true;
        }
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::InvalidArgument(format!("writing oracle grid: {e}"));
        w.write_record(["theta1", "theta2", "l1", "l2", "l0", "front"]).map_err(io)?;
        for (c, f) in self.cells.iter().zip(&on_front) {
            w.write_record([
                crate::io::fmt_f64(c.theta.t1),
                crate::io::fmt_f64(c.theta.t2),
                crate::io::fmt_f64(c.l1),
                crate::io::fmt_f64(c.l2),
                crate::io::fmt_f64(c.l0),
                (*f as u8).to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::InvalidArgument(format!("writing oracle grid: {e}")))?;
        Ok(())
    }
}

/// One run of the benchmark protocol.
#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkConfig {
    pub method: Method,
    pub init: Theta2,
    pub steps: usize,
    pub lr: f64,
    pub weights: TaskWeights,
    pub seed: u64,
    pub record_stride: usize,
    pub objective: SyntheticObjective,
}

impl BenchmarkConfig {
    /// Adam, `lr = 1e-3`, 35k steps, uniform weights, a record every 100
    /// steps.
    pub fn new(method: Method, init: Theta2) -> Self {
        Self {
            method,
            init,
            steps: DEFAULT_STEPS,
            lr: DEFAULT_LR,
            weights: TaskWeights::uniform(2),
            seed: 0,
            record_stride: 100,
            objective: SyntheticObjective::default(),
        }
    }
}

/// Minimises the benchmark with Adam from `config.init`, aggregating the two
/// task gradients with `config.method` at every step.
///
/// Stops early if the aggregator reports an all-zero gradient matrix. The
/// upper-bound variant of Aligned-MTL sees the parameters themselves as the
/// shared representation, so it coincides with plain Aligned-MTL here.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<Trajectory> {
    OptimizerConfig::adam(config.lr).validate()?;
    if config.weights.len() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: config.weights.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut opt = OptimizerState::new(OptimizerConfig::adam(config.lr), 2);
    let mut theta = config.init.to_vec();
    let mut records = Vec::new();
    let mut stop = StopReason::Completed;

    for step in 0..=config.steps {
        let th = Theta2::new(theta[0], theta[1]);
        let ev = config.objective.eval(th);
        let g = ev.gradient_matrix();
        let record_now = due(step, config.record_stride, config.steps);
        let direction = if step < config.steps {
            match aggregate(config.method, &g, None, &config.weights, &mut rng) {
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
        if record_now || direction.is_none() {
            let update = direction.as_ref().map(|d| {
                let g0 = g.matvec(config.weights.as_slice()).expect("2 tasks");
                UpdateStats {
                    g0_dot_r: dot(&g0, d),
                    r_norm_sq: dot(d, d),
                }
            });
            records.push(Record {
                step,
                theta: theta.clone(),
                losses: ev.losses.to_vec(),
                l0: ev.weighted_loss(&config.weights),
                report: stability_report(&g).ok(),
                update,
            });
        }
        match direction {
            Some(d) => opt.step(&mut theta, &d)?,
            None => break,
        }
    }
    Ok(Trajectory { records, stop })
}
