//! Exact stochastic simulation and estimation for SIS/SIR epidemics on
//! Z^d with i.i.d. random edge weights.
//!
//! The crate provides:
//! - reproducible lazily-sampled edge-weight environments and their
//!   large-deviation event checks ([`environment`]),
//! - an exact event-driven simulator for the weighted contact process and
//!   its SIR variant ([`dynamics`]),
//! - the graphical representation with infectious-path reachability
//!   ([`graphical`]),
//! - gambler's-ruin walks ([`rwalk`]), structured self-avoiding walk pair
//!   statistics and second-moment survival bounds ([`sawpair`]),
//! - top-level estimators for survival probabilities, critical values,
//!   and the high-dimension Laplace-transform limit ([`estimators`]),
//! - a CLI front end emitting CSV/JSONL artifacts ([`cli`]).
//!
//! Every random quantity is a pure function of a master seed plus a
//! structural key, so runs are bit-reproducible regardless of thread
//! count or query order.

// Validations are written `!(x > 0.0)` so that NaN fails them; the
// un-negated forms would wave NaN through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dynamics;
pub mod environment;
pub mod error;
pub mod estimators;
pub mod graphical;
pub mod lattice;
pub mod numeric;
pub mod output;
pub mod rng;
pub mod rwalk;
pub mod sawpair;

pub use error::{Error, Result};
