//! Multi-task gradient aggregation.
//!
//! Every aggregator maps a gradient matrix `G` (one column per task) and fixed
//! task weights `w` to a single update direction for the shared parameters.

use std::fmt;
use std::ops::Index;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::{Error, Result};

mod aligned;
pub mod baselines;

pub use aligned::{align, align_ub, align_with_spectrum, balance_transform, AlignmentResult, SharedRepGradients};
pub use baselines::{cagrad, imtl_g, mgda, pcgrad, uniform, CagradSolution, ImtlSolution, MgdaSolution};

/// Fixed, non-negative task weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TaskWeights(Vec<f64>);

impl TaskWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::InvalidWeights("no tasks".into()));
        }
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::InvalidWeights(format!("entries must be finite and >= 0, got {w:?}")));
        }
        if w.iter().all(|&x| x == 0.0) {
            return Err(Error::InvalidWeights("at least one weight must be positive".into()));
        }
        Ok(Self(w))
    }

    /// `wᵢ = 1/T`.
    pub fn uniform(tasks: usize) -> Self {
        assert!(tasks > 0, "at least one task");
        Self(vec![1.0 / tasks as f64; tasks])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl Index<usize> for TaskWeights {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<f64>> for TaskWeights {
    type Error = Error;

    fn try_from(w: Vec<f64>) -> Result<Self> {
        Self::new(w)
    }
}

impl From<TaskWeights> for Vec<f64> {
    fn from(w: TaskWeights) -> Self {
        w.0
    }
}

impl FromStr for TaskWeights {
    type Err = Error;

    /// Comma-separated list, e.g. `0.7,0.3`.
    fn from_str(s: &str) -> Result<Self> {
        let w = s
            .split(',')
            .map(|x| {
                x.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidWeights(format!("`{x}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(w)
    }
}

/// Registered aggregation methods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Method {
    AlignedMtl,
    AlignedMtlUb,
    Uniform,
    PcGrad,
    Mgda,
    CaGrad { c: f64 },
    ImtlG,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::AlignedMtl,
        Method::AlignedMtlUb,
        Method::Uniform,
        Method::PcGrad,
        Method::Mgda,
        Method::CaGrad {
            c: baselines::CAGRAD_DEFAULT_C,
        },
        Method::ImtlG,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            Method::AlignedMtl => "aligned-mtl",
            Method::AlignedMtlUb => "aligned-mtl-ub",
            Method::Uniform => "uniform",
            Method::PcGrad => "pcgrad",
            Method::Mgda => "mgda",
            Method::CaGrad { .. } => "cagrad",
            Method::ImtlG => "imtl-g",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::CaGrad { c } if *c != baselines::CAGRAD_DEFAULT_C => write!(f, "cagrad:{c}"),
            m => f.write_str(m.id()),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    /// Accepts the ids listed in [`Method::id`]; CAGrad takes an optional
    /// `:c` suffix, e.g. `cagrad:0.5`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let method = match (name.to_ascii_lowercase().as_str(), arg) {
            ("aligned-mtl", None) => Method::AlignedMtl,
            ("aligned-mtl-ub", None) => Method::AlignedMtlUb,
            ("uniform" | "ls", None) => Method::Uniform,
            ("pcgrad", None) => Method::PcGrad,
            ("mgda", None) => Method::Mgda,
            ("imtl-g" | "imtl", None) => Method::ImtlG,
            ("cagrad", None) => Method::CaGrad {
                c: baselines::CAGRAD_DEFAULT_C,
            },
            ("cagrad", Some(c)) => {
                let c: f64 = c.parse().map_err(|_| Error::UnknownMethod(s.to_string()))?;
                if !(c >= 0.0 && c.is_finite()) {
                    return Err(Error::UnknownMethod(s.to_string()));
                }
                Method::CaGrad { c }
            }
            _ => return Err(Error::UnknownMethod(s.to_string())),
        };
        Ok(method)
    }
}

impl From<Method> for String {
    fn from(m: Method) -> Self {
        m.to_string()
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Computes the update direction for the shared parameters.
///
/// `rep` feeds [`align_ub`]; when it is `None` the upper-bound variant aligns
/// `G` directly (identity Jacobian). An all-zero `G` yields
/// [`Error::ZeroGradient`] for every method, which callers treat as reaching
/// a Pareto-stationary point. `rng` is only drawn from by PCGrad.
pub fn aggregate<R: Rng + ?Sized>(
    method: Method,
    g: &Matrix,
    rep: Option<&SharedRepGradients>,
    w: &TaskWeights,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if w.len() != g.cols() {
        return Err(Error::DimensionMismatch {
            expected: g.cols(),
            found: w.len(),
        });
    }
    if g.is_zero() {
        return Err(Error::ZeroGradient);
    }
    match method {
        Method::AlignedMtl => Ok(align(g, w)?.g_hat0),
        Method::AlignedMtlUb => match rep {
            Some(rep) => Ok(align_ub(rep, w)?.g_hat0),
            None => Ok(align(g, w)?.g_hat0),
        },
        Method::Uniform => uniform(g, w),
        Method::PcGrad => pcgrad(g, w, rng),
        Method::Mgda => Ok(mgda(g).direction),
        Method::CaGrad { c } => Ok(cagrad(g, w, c)?.direction),
        Method::ImtlG => Ok(imtl_g(g)?.direction),
    }
}
