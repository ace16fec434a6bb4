//! Fractal serialization of patch grids and a skip-augmented selective
//! state-space kernel.
//!
//! The crate is organised bottom-up:
//!
//! - [`curve`]: Hilbert, Coil and Meurthe scan orders plus raster, zigzag and
//!   local-window baselines.
//! - [`sds`]: the structure distortion score, threshold coverage tables and
//!   PGM heatmaps.
//! - [`csr`]: greedy cross-state routing skip graphs and routing distances.
//! - [`ssm`]: zero-order-hold discretization, the classic recurrence and the
//!   bidirectional dynamic-programming kernel over the skip graph, with
//!   quadratic reference evaluators.
//! - [`grad`]: hand-written reverse-mode gradients for the kernels and a
//!   finite-difference checker.
//! - [`rope`]: rotary position encoding along the serialized sequence.
//! - [`model`]: a minimal block stack, synthetic scale-renderable tasks and a
//!   seeded SGD harness.
//! - [`verify`]: seeded oracle sweeps shared by the CLI and the test suites.

pub mod csr;
pub mod curve;
pub mod grad;
pub mod model;
pub mod rng;
pub mod rope;
pub mod sds;
pub mod ssm;
pub mod verify;

pub use csr::{build_skip_graph, SkipGraph};
pub use curve::{generate_order, Cell, CurveKind, GridShape, ScanOrder};
pub use ssm::{DiscreteParams, SequenceBatch, SsmParams};
