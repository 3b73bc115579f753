//! Random shallow ReLU approximation of smooth functions.
//!
//! The crate builds networks of the form `a·x + b + Σ cᵢ σ(αᵢ·x − tᵢ)` whose
//! hidden parameters `(αᵢ, tᵢ)` are drawn at random from a positive density on
//! `S^{n-1} × [−R, R]`, and certifies their worst-case error on the ball
//! `B₀(R)`. The pieces are:
//!
//! - [`targets`]: smooth test functions with closed-form Fourier spectra and
//!   certified smoothness constants.
//! - [`representation`]: quadrature oracles for the ReLU integral
//!   representation of a smooth function on a ball.
//! - [`sampling`]: hidden-parameter densities and seeded samplers.
//! - [`network`]: the network itself and the importance-sampled construction.
//! - [`fitting`]: least-squares refits of the output layer.
//! - [`analysis`]: sup-norm certification, error-bound calculators and
//!   convergence studies.
//! - [`mrac`]: a model-reference adaptive control testbed driven by random
//!   ReLU feature maps.
//!
//! Data-parallel loops go through [`exec::Execution`], which uses rayon when the
//! `parallel` feature is enabled and falls back to plain iteration otherwise.

pub mod analysis;
pub mod error;
pub mod exec;
pub mod fitting;
pub mod linalg;
pub mod mrac;
pub mod network;
pub mod quad;
pub mod representation;
pub mod sampling;
pub mod targets;

pub use error::{Error, Result};
pub use exec::Execution;
pub use network::ReluNetwork;
pub use representation::RepresentationOracle;
pub use sampling::{HiddenParamDistribution, ParamDensity};
pub use targets::SmoothTarget;

/// The ReLU activation `max{0, t}`.
#[inline]
pub fn relu(t: f64) -> f64 {
    if t > 0.0 {
        t
    } else {
        0.0
    }
}
