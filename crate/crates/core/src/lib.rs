//! Minimum-energy control of linear systems through controllability Gramians,
//! together with numerical checks of the associated non-standard Lyapunov and
//! Riccati equations.

pub mod energy;
pub mod error;
pub mod gramian;
pub mod linalg;
pub mod models;
pub mod quadrature;
pub mod random;
pub mod riccati;

pub use error::{Error, Result};
pub use gramian::{Gramian, GramianMethod, Horizon, LinearSystem};
pub use linalg::{RankPolicy, SymmetricPsd};
