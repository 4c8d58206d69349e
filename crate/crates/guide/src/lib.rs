//! Compiles and runs the Rust listings of the guide in `book/` as doc-tests.

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/introduction.md")]
mod introduction {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/condition-number.md")]
mod condition_number {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/alignment.md")]
mod alignment {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/upper-bound.md")]
mod upper_bound {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/baselines.md")]
mod baselines {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/synthetic.md")]
mod synthetic {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/toy-models.md")]
mod toy_models {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod cli {}

#[cfg(doctest)]
#[doc = include_str!("../../../README.md")]
mod readme {}
