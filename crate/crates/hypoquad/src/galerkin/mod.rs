//! Hermite–Galerkin truncations of Weyl-quantized quadratic operators.

pub mod commutation;
pub mod decay;
pub mod hermite;
pub mod operator;
pub mod propagate;
pub mod sparse;
pub mod spectrum;
pub mod states;
pub mod subelliptic;

pub use decay::{decay_exponent, directional_norms, iterated_directional_norms, DecayFit, IteratedSample};
pub use hermite::HermiteBasis;
pub use operator::{linear_observable, quantize, HermiteOperator};
pub use propagate::{propagate, propagate_with, PropagateOptions, Trajectory};
pub use spectrum::{galerkin_eigenvalues, spectrum_bottom, SpectrumHead};
pub use states::{project_gaussian, random_state, Amplitude};
