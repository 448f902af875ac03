//! Exact simulators for processor-sharing queues, binary CMJ branching
//! processes and local times of spectrally positive Lévy paths, with the
//! Lamperti time change connecting them and Monte Carlo checks of their
//! heavy-traffic limits.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cmj;
pub mod distributions;
pub mod lamperti;
pub mod levy;
pub mod paths;
pub mod psq;
pub mod rng;
pub mod scaling;
pub mod verify;

pub use distributions::{Family, Regime, ServiceDist};
pub use paths::{Excursion, Path, Segment};
