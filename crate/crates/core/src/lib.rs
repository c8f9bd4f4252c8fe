//! Desk-scale neural-network molecular dynamics with an in-process virtual cluster.
//!
//! The crate decomposes an orthogonal periodic box over a grid of MPI-like
//! ranks (4 per node), materializes ghost atoms through pluggable exchange
//! schemes (3-stage, p2p, node-based with 1/2/4 leaders), evaluates a
//! Deep-Potential-style force field under three precision modes, and accounts
//! every message, copy and registered region in a latency+bandwidth network
//! model. Everything is deterministic: the same configuration produces
//! bit-identical trajectories regardless of the communication scheme.
//!
//! Numeric kernels (dense matrices, the embedding/fitting networks) are
//! generic over the working scalar through [`scalar::Real`]; spatial state and
//! integration stay in `f64`, matching the precision split of the mixed modes.

pub mod engine;
pub mod error;
pub mod geometry;
pub mod neighbor;
pub mod netsim;
pub mod potential;
pub mod scalar;
pub mod schemes;
pub mod tsgemm;
pub mod validate;

pub use error::{Error, Result};
pub use scalar::Real;

/// Dense row-major matrix in single precision.
pub type Matrix32 = tsgemm::Matrix<f32>;
/// Dense row-major matrix in double precision.
pub type Matrix64 = tsgemm::Matrix<f64>;
/// Embedding/fitting network weights in single precision.
pub type Network32 = potential::TypedModel<f32>;
/// Embedding/fitting network weights in double precision.
pub type Network64 = potential::TypedModel<f64>;
