//! Gradient alignment for multi-task optimization.
//!
//! A multi-task model with shared parameters `θ` receives one gradient per
//! task. Stacking them as the columns of a matrix `G` turns the question of
//! how to combine them into a question about `G` itself: when its condition
//! number `κ(G) = σ_max / σ_min` is large, some tasks dominate the update or
//! cancel each other out. [`aggregate::align`] replaces `G` by the closest
//! matrix with orthogonal columns of equal norm, rescaled to `G`'s smallest
//! singular value, and returns the weighted sum of those columns as the
//! update direction.
//!
//! ```
//! use aligned_mtl::aggregate::{align, TaskWeights};
//! use aligned_mtl::linalg::Matrix;
//!
//! // the first task gradient is twice as long as the second
//! let g = Matrix::from_columns(&[vec![2.0, 0.0], vec![0.0, 1.0]])?;
//! let out = align(&g, &TaskWeights::uniform(2))?;
//! assert_eq!(out.g_hat0, vec![0.5, 0.5]);
//! assert_eq!(out.alpha, vec![0.25, 0.5]);
//! # Ok::<(), aligned_mtl::Error>(())
//! ```
//!
//! Modules:
//!
//! * [`linalg`]: the small dense linear algebra everything else builds on;
//! * [`aggregate`]: the aligned aggregators and the comparison baselines;
//! * [`diagnostics`]: condition number, magnitude similarity and conflict
//!   statistics of a gradient system;
//! * [`synthetic`]: a two-parameter, two-task benchmark with a grid oracle;
//! * [`toy`]: tiny shared-encoder models and quadratic problems with exact
//!   gradients, a training loop and `Δm` scoring;
//! * [`io`]: CSV formats for gradient dumps and metric tables.

pub mod aggregate;
pub mod diagnostics;
mod error;
pub mod io;
pub mod linalg;
pub mod optim;
pub mod synthetic;
pub mod toy;
pub mod trajectory;

pub use error::{Error, Result};
