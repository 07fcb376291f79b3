//! Hybrid Bayesian networks of Bernoulli-logistic and Gaussian-linear nodes:
//! model specification, adaptive Metropolis-within-Gibbs fitting, and
//! evidence-conditioned posterior predictive queries over discrete states.

pub mod cli;
pub mod driver;
pub mod error;
pub mod io;
pub mod model;
pub mod predictive;
pub mod sampler;

pub use error::{Error, Result};
pub use model::{
    log_likelihood, log_prior, log_unnormalized_posterior, Covariate, CovariateKind, CovariateSchema, Dataset, Family,
    ModelSpec, NodeSpec, NormalPrior, ParameterVector, UniformPrior,
};
pub use predictive::{query, sweep, Averaging, Evidence, GridAxis, QueryOptions, QueryResult, SweepPoint};
pub use sampler::{fit, PosteriorSample, SamplerConfig};
