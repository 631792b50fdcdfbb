//! Empirical Bayes normal means.
//!
//! Given `x_i ~ N(theta_i, s_i^2)`, estimate a prior `g` for the `theta_i`
//! from a chosen family by maximizing the marginal likelihood, then report
//! posterior means, standard deviations, local false sign rates, and draws.

pub mod bench;
pub mod cli;
pub mod error;
pub mod fit;
pub mod kernels;
pub mod mix_fit;
pub mod model;
pub mod optimize;
pub mod param_fit;
pub mod posterior;
pub mod sim;
pub mod special;

pub use error::{EbnmError, Result};
pub use fit::ebnm;
pub use mix_fit::{KktCertificate, LikelihoodMatrix};
pub use model::{
    validate_observations, EbnmResult, FitDiagnostics, FittedPrior, MixtureComponents,
    MixtureKind, MixturePrior, Mode, ObservationSet, ParametricPrior, PosteriorSummary,
    PriorFamily, PriorFamilySpec, ScaleSpec,
};
pub use posterior::{credible_interval, log_likelihood, posterior_sample, posterior_summary, PosteriorSampler};
