//! Nash-equilibrium machinery for joint spectrum sensing and power allocation
//! among secondary users sharing a multicarrier band with a primary user.
//!
//! The crate is organised bottom-up:
//!
//! * [`sensing`] — Q-function, detection probabilities, missed-detection
//!   probability in the `τ̂ = √(τ f)` coordinates and its derivatives.
//! * [`network`] — scenarios, strategies, rates, throughput and payoffs.
//! * [`constraints`] — feasible sets, interference violations, feasibility
//!   pre-checks and interference-weight models.
//! * [`kkt`] — per-player Lagrangian values, gradients, Hessians and the
//!   natural-map residual.
//! * [`solver`] — projection onto a player's convex set, best responses and
//!   the proximal price update.
//! * [`consensus`] — finite-time average consensus on directed graphs.
//! * [`equilibrium`] — best-response dynamics (Jacobi, Gauss-Seidel,
//!   asynchronous), proximal outer loops and equilibrium certificates.
//! * [`analysis`] — multiplier bounds, Hessian floors and the existence,
//!   uniqueness and contraction condition checks.
//! * [`harness`] — experiment configuration, presets and artifact emission.

pub mod analysis;
pub mod consensus;
pub mod constraints;
pub mod equilibrium;
mod error;
pub mod harness;
pub mod kkt;
pub mod network;
pub mod sensing;
pub mod solver;

pub use error::{Error, Result};
