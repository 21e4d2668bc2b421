//! Accretive quadratic differential operators: Hamilton maps and singular
//! spaces, the time-dependent multiplier Q_t, Hermite–Galerkin discretizations of
//! e^{-tq^w}, and Ornstein–Uhlenbeck / Fokker–Planck models.

pub mod cli;
pub mod error;
pub mod galerkin;
pub mod io;
pub mod linalg;
pub mod multiplier;
pub mod ou;
pub mod singular;
pub mod symplectic;

pub use error::{Error, Result};
pub use faer::c64;
