//! Piecewise monotone interval maps with finitely or countably many branches.

pub mod branch;
pub mod builtin;
pub mod config;
pub mod first_return;
pub mod partition;
pub mod piecewise;
pub mod validate;

pub use branch::{AnalyticForm, Branch, BranchKind};
pub use builtin::builtin;
pub use config::{BranchConfig, MapConfig, MapKind};
pub use first_return::{first_return_map, FirstReturnMap};
pub use partition::{iterate_partition, mesh_decay, min_slope_certificate, Cell, IteratePartition};
pub use piecewise::{Applied, Depth, PiecewiseMap, TailClosure, TailDescriptor};
pub use validate::{validate, Cardinality, ClassReport, Violation};
