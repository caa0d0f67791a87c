//! Ulam discretization of the transfer operator and the spectral quantities read from it.

mod ly_probe;
mod matrix;
mod spectral;

pub use ly_probe::{ly_probe, LyProbeReport, Witness};
pub use matrix::{build_ulam, UlamMatrix};
pub use spectral::{
    invariant_density, second_eigenvalue, spectral_gap_probe, spectral_report, DensityResult, GapFit, Lambda2,
    SpectralReport, GAP_FLOOR,
};
pub(crate) use spectral::log_linear_fit;
