//! Sparse single-index regression with a monotone link.
//!
//! The solver lives in [`solver`]; [`isotonic`] and [`operators`] hold its
//! building blocks. [`baselines`], [`datagen`] and [`experiments`] support
//! simulation studies. The guide in `book/` walks through each part.

// `!(x > 0.0)` deliberately rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod datagen;
pub mod error;
pub mod experiments;
pub mod isotonic;
pub mod linalg;
pub mod operators;
pub mod solver;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/isotonic.md")]
    mod isotonic {}
    #[doc = include_str!("../../../book/src/operators.md")]
    mod operators {}
    #[doc = include_str!("../../../book/src/solver.md")]
    mod solver {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    mod baselines {}
    #[doc = include_str!("../../../book/src/simulations.md")]
    mod simulations {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
