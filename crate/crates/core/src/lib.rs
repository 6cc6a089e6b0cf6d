//! Coupled dynamics of online news propagation and SIRS epidemic spreading.
//!
//! * [`branching`]: stochastic propagation of a single post and its tracking iterate.
//! * [`news_ode`]: mean-field news ODE, closed forms and the news limit cycle.
//! * [`sirs`]: uncoupled SIRS model.
//! * [`coupled`]: infection-dependent infection rate, equilibrium analysis,
//!   cycle detection and the two-timescale hybrid simulator.
//! * [`fit`]: piecewise-constant influence schedules fitted to infection curves.
//! * [`numerics`]: fixed-step integration and root finding shared by all of the above.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod branching;
pub mod coupled;
pub mod error;
pub mod fit;
pub mod news_ode;
pub mod numerics;
pub mod sirs;

pub use error::{Error, Result};
