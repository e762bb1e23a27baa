//! Simulation toolkit for strongly inhomogeneous diffusion-absorption problems.
//!
//! The physical setting is a porous solid particle immersed in a liquid
//! reservoir: a species diffuses quickly through the liquid, is absorbed at
//! the solid/liquid interface, and then diffuses slowly through the solid.
//! The diffusivity contrast between the two phases (several orders of
//! magnitude) makes a plain explicit finite-difference treatment of the
//! liquid phase the dominant cost.
//!
//! The toolkit removes that cost with a transfer-matrix superposition
//! solver: the response of the near-field liquid to a unit source on each
//! coarse-mesh node group is precomputed by explicit finite differences
//! over one macro time step, and the long step is then applied as a single
//! dense matrix-vector product. The slow solid phase and the interface
//! exchange keep their explicit treatment.
//!
//! Modules follow the pipeline:
//!
//! - [`geometry`]: voxelized domain (porous particle, near-field shell,
//!   far-field reservoir accounting)
//! - [`physics`]: model parameters, pointwise formulas, stability limits
//! - [`fd_solver`]: explicit finite-difference stepping (liquid, solid,
//!   interface exchange) and the baseline solver
//! - [`coarse_mesh`]: representative-node grouping, mapping and remapping
//! - [`transfer`]: transfer-matrix preconditioning and superposition
//! - [`precision`]: bit-exact software emulation of binary16/binary32
//!   arithmetic and the mixed-precision dot-product contract
//! - [`driver`]: integrated macro loop, kinetics, precision comparison,
//!   scaling benchmark
//! - [`io`]: on-disk formats (geometry, matrix, field dumps, kinetics CSV)
//! - [`outputs`]: run-directory emission used by the CLI
//! - [`plot`]: dependency-free SVG line charts

pub mod coarse_mesh;
pub mod driver;
pub mod error;
pub mod fd_solver;
pub mod geometry;
pub mod io;
pub mod outputs;
pub mod physics;
pub mod plot;
pub mod precision;
pub mod transfer;
pub mod util;

pub use error::{Error, Result};
