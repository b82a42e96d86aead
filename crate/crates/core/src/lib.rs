//! Optimal multi-threshold status updates for remote estimation of a
//! discrete-time Markov source under age-of-incorrect-information penalties.
//!
//! - [`markov`]: dense absorbing-chain and phase-type primitives.
//! - [`drph`]: dual-regime phase-type laws and closed-form penalty sums.
//! - [`smdp`]: per-cycle chains and the SMDP parameters `a, c, d, p`.
//! - [`policy`]: policy iteration, exhaustive search and benchmark policies.
//! - [`sim`]: slot-accurate Monte Carlo simulator.

pub mod drph;
pub mod error;
pub mod markov;
pub mod policy;
pub mod sim;
pub mod smdp;

pub use drph::{DrAmc, DrPh, Penalty, PolynomialPenalty};
pub use error::{Error, Result};
pub use markov::{Amc, DtmcSource, Matrix, RowVector, Tolerances};
pub use policy::{PolicyIterConfig, PolicyIterOutcome, ThresholdPolicy};
pub use sim::{SimConfig, SimPolicy, SimStats};
pub use smdp::{PenaltySet, SmdpModel, SmdpStateParams};
