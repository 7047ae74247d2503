//! Transient nearest-neighbour random walks on the nonnegative integers and
//! the Bessel processes they embed into.
//!
//! The crate is organised bottom-up:
//!
//! * [`rng`] and [`stats`] are the numerical plumbing (seeded streams,
//!   goodness-of-fit tests, log-log regression).
//! * [`specfun`] holds the modified Bessel functions and the exact exit laws
//!   of a Bessel process from an interval.
//! * [`walklaw`] builds walk laws, classifies transience and computes the
//!   exact geometric law of total local times.
//! * [`walksim`] and [`besselsim`] simulate the two processes.
//! * [`localtime`], [`embed`] and [`couple`] implement the three strong
//!   approximation constructions and measure their discrepancies.
//! * [`classtest`] evaluates upper/lower class integral and series tests.

pub mod besselsim;
pub mod classtest;
pub mod couple;
pub mod embed;
mod error;
pub mod localtime;
pub mod rng;
pub mod specfun;
pub mod stats;
pub mod walklaw;
pub mod walksim;
mod verdict;

pub use error::{Error, Result};
pub use verdict::{TestVerdict, Verdict};
