//! Transient analysis of the M/M/∞ queue with discouragement.
//!
//! The queue has birth rate `λ/(1+k)` and death rate `μk` in state `k`.
//! Its transient law started from the empty state is an entire power series
//! in rescaled time `τ = λt`, whose coefficients obey a triangular recursion
//! ([`series`]). A Bessel-number triangle majorizes those coefficients and
//! certifies truncation ([`bounds`]). The embedded jump chain has an exact
//! rational closed form ([`embedded`]). Independent engines (uniformization,
//! Monte Carlo, detailed balance) live in [`oracle`].

pub mod bounds;
pub mod embedded;
pub mod error;
pub mod model;
pub mod oracle;
pub mod par;
pub mod series;
pub mod triangle;

mod bigfloat;

pub use error::{Error, Result};
pub use model::{BirthDeathRates, ModelParams, PrecisionMode, PrecisionPolicy};
pub use par::Execution;
pub use triangle::{CoefficientTriangle, LTriangle, MTriangle, TriangleKind};

/// Crate version, stamped into every emitted report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
