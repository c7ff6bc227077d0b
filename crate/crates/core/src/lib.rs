//! Certified reduced-basis approximation of parametrized obstacle problems.
//!
//! The guide in `book/` walks through the models, the solvers, both reduced
//! formulations and their error bounds. Its code listings run as doc-tests
//! of this crate.

pub mod complementarity;
pub mod dual_slack;
pub mod experiment;
mod error;
pub mod fe_truth;
pub mod linalg;
pub mod offline;
pub mod online;
pub mod sparse;
pub mod truth;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/complementarity.md")]
    mod complementarity {}
    #[doc = include_str!("../../../book/src/slack.md")]
    mod slack {}
    #[doc = include_str!("../../../book/src/offline.md")]
    mod offline {}
    #[doc = include_str!("../../../book/src/online.md")]
    mod online {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/verification.md")]
    mod verification {}
}
