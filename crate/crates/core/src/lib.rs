//! Closed-loop depth-of-anesthesia simulation and controller tuning.
//!
//! - [`pkpd`]: propofol three-compartment PK, effect site and BIS response
//! - [`fracops`]: Grünwald–Letnikov fractional integral and derivative
//! - [`fuzzy`]: Mamdani gain scheduler
//! - [`control`]: PID, FOPID and fuzzy FOPID control laws
//! - [`simloop`]: closed-loop runs and IAE/ITAE/settling metrics
//! - [`woa`]: whale optimization algorithm
//! - [`tune`]: controller tuning against cohort cost

pub mod control;
pub mod error;
pub mod fracops;
pub mod fuzzy;
pub mod pkpd;
pub mod simloop;
pub mod tune;
pub mod woa;

pub use error::{Error, Result};
