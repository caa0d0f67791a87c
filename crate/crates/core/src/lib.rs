//! Absolutely continuous invariant measures of piecewise expanding maps of [0,1].
//!
//! The crate builds countable-branch maps, pushes densities through their
//! transfer operator, discretizes that operator on uniform bins and measures
//! mixing, correlation decay and the central limit behaviour of orbits.
//!
//! ```
//! use acim_core::{maps::builtin, par::Execution, ulam};
//!
//! let map = builtin::builtin("three_branch", None).unwrap();
//! let m = ulam::build_ulam(&map, 64, 1e-8, Execution::default()).unwrap();
//! let d = ulam::invariant_density(&m, 1e-12, 10_000, Execution::default()).unwrap();
//! assert!((d.density.eval(0.1) - 2.0).abs() < 1e-9);
//! ```

pub mod ergodics;
pub mod error;
pub mod maps;
pub mod par;
pub mod sampler;
pub mod step;
pub mod transfer;
pub mod ulam;

pub use error::{Error, Result};
pub use maps::PiecewiseMap;
pub use par::Execution;
pub use step::{ClosedForm, Observable, StepFunction};
