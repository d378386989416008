//! Sparse optimal control of interacting agent systems and its mean-field
//! limit.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: agent ensembles, atomic measures, interaction kernels, cost
//!   functionals, admissible feedback controls and scenario files.
//! * [`dynamics`]: RK4 integration of the controlled particle system and the
//!   a priori confinement bounds.
//! * [`transport`]: exact Wasserstein-1 distances between atomic measures.
//! * [`meanfield`]: push-forward solutions of the kinetic equation, weak-form
//!   residuals and the stability estimate.
//! * [`control`]: cost evaluation and proximal-gradient optimization with an
//!   L1 sparsity penalty.
//! * [`harness`]: mean-field limit and Gamma-convergence studies.
//! * [`cli`]: the `mfoc` command-line front-end.
//!
//! A guide with worked examples lives in the `book/` directory of the
//! repository; its code listings are compiled as doc-tests of this crate.

pub mod cli;
pub mod control;
pub mod dynamics;
mod error;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod meanfield;
pub mod model;
pub mod transport;

pub use error::{Error, Result};

/// Applies `MFOC_THREADS` to the global thread pool (0 or unset: automatic).
pub fn configure_threads() {
    let threads = std::env::var("MFOC_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(0);
    if threads > 0 {
        // a pool that is already initialised keeps its size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/dynamics.md")]
    mod dynamics {}
    #[doc = include_str!("../../../book/src/transport.md")]
    mod transport {}
    #[doc = include_str!("../../../book/src/meanfield.md")]
    mod meanfield {}
    #[doc = include_str!("../../../book/src/control.md")]
    mod control {}
    #[doc = include_str!("../../../book/src/studies.md")]
    mod studies {}
}
