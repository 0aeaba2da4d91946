//! Graph-based multi-agent trajectory forecasting.
//!
//! Agents observed over a short history become nodes of a scene graph built at
//! the last observed frame. Two anisotropic graph layers (fixed kernel weights,
//! multi-head attention, or edge gating) aggregate neighbour information, and a
//! per-node feed-forward head emits the future trajectory. Training minimises a
//! Huber objective scaled by a trajectory-overlap penalty, and predictions can
//! be explained with integrated gradients over the edge weights.
//!
//! The crate is `no_std` + `alloc`: all IO lives in the companion `scout`
//! crate.
#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

pub mod attribution;
pub mod baseline;
pub mod error;
pub mod graph;
pub mod loss;
pub mod model;
pub mod numerics;
pub mod synth;
pub mod traj;
pub mod train;

pub use error::{Error, Result};
pub use numerics::{Matrix, Param, ParamStore, Tape, Var};
