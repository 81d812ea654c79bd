//! Analysis of linear neutral-type delay systems
//!
//! ```text
//! d/dt [z(t) - A_{-1} z(t-h)] = ∫_{-h}^0 A2(θ) ż(t+θ) dθ + ∫_{-h}^0 A3(θ) z(t+θ) dθ + B u(t)
//! ```
//!
//! The crate locates the spectrum (roots of `det Δ(λ)`), decides exponential
//! and asymptotic stability, checks stabilizability and null-controllability
//! rank conditions, computes controllability indices and time bounds, and
//! corroborates verdicts with a method-of-steps simulator and a discretized
//! reachability probe.

pub mod charmatrix;
pub mod cli;
pub mod contour;
pub mod error;
pub mod fixtures;
pub mod linalg;
pub mod reachability;
pub mod rootfinder;
pub mod simulate;
pub mod stability;
pub mod structural;
pub mod sysmodel;

pub use error::{NtsError, Result};
pub use sysmodel::{load_system, DelayKernel, NeutralSystem};
