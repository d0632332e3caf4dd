//! Trajectory-level influence for linear system identification feeding LQR.
//!
//! The crate answers "which training trajectories matter" for a two-stage
//! pipeline: ridge least squares fits a linear model from trajectories, and a
//! discrete-time LQR controller is synthesized from the fit. Influence scores
//! predict, per trajectory, how held-out prediction loss and closed-loop LQR
//! cost would change if that trajectory were dropped and everything rerun,
//! without rerunning anything.
//!
//! Layout:
//! - [`lyapriccati`]: dense DARE / discrete Lyapunov solvers.
//! - [`ident`]: trajectory data model, ridge fit, leave-one-out machinery,
//!   and scores targeting prediction loss.
//! - [`daresens`]: derivatives of the LQR cost through the Riccati solution,
//!   and the score targeting closed-loop cost.
//! - [`pipeline`]: the end-to-end scoring pass with instrumentation.

pub mod daresens;
pub mod error;
pub mod ident;
pub mod lyapriccati;
pub mod pipeline;

pub use error::{Error, Result};
pub use lyapriccati::{DareOptions, DareSolution};
