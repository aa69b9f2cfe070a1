//! Voter model, random walks and coalescing-walk duality on random regular
//! graphs under edge rewiring.
//!
//! The crate is organised bottom-up:
//!
//! * [`theta`]: the diffusion constant and the continued-fraction quantities.
//! * [`graph`]: stub-matching multigraphs and the rewiring move.
//! * [`sim`]: Gillespie simulation of walks and the voter model, the
//!   graphical-construction event log and duality checks.
//! * [`toy`]: the killed distance chain and the two-phase renewal model.
//! * [`fw`]: the Fisher-Wright diffusion reference.
//! * [`stats`]: estimators and gates.
//! * [`experiment`]: configuration, replica fan-out and reports.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod fw;
pub mod graph;
pub mod rng;
pub mod sim;
pub mod stats;
pub mod theta;
pub mod toy;

pub use error::{Error, Result};
pub use graph::GraphState;
pub use theta::{ModelConst, ThetaBundle};
