//! Exact tabular laboratory for continuous constraint interpolation (CCI)
//! and the ACPO primal-dual offline RL algorithm.
//!
//! * [`mdp`]: finite MDPs, soft policy evaluation, visitation, returns.
//! * [`data`]: offline datasets and count-based behavior estimation.
//! * [`cci`]: closed-form constrained policy, weight spectrum, regimes.
//! * [`train`]: the tabular primal-dual training loop.
//! * [`theory`]: exact numerical checks of the performance bounds.

pub mod cci;
pub mod data;
mod error;
pub mod mdp;
pub mod prob;
pub mod theory;
pub mod train;

pub use error::{Error, Result};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/mdp.md")]
    mod mdp {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/cci.md")]
    mod cci {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/theory.md")]
    mod theory {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
