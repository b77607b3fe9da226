//! Latent Gaussian model: specification, hyperparameters, assembly and
//! posterior fitting.

mod assemble;
mod fit;
mod hyper;
mod optimize;
mod spec;

pub use assemble::{assemble, log_marginal_likelihood, Assembled, Conditional, LatentLayout, System, RW1_SUM_PENALTY};
pub(crate) use assemble::{design, projector, TermValues};
pub use fit::{
    fit, fit_at, fitted_values, FitBundle, FitConfig, FittedValue, GridStyle, PosteriorFit, Summary, ThetaPoint,
    BUNDLE_FORMAT_VERSION,
};
pub(crate) use fit::quadratic_form;
pub use hyper::{theta_labels, Hyperparams, StParams, SvcParams, Transform, TvcParams};
pub use spec::{
    CorPrior, ModelSpec, ScalePrior, StFieldSpec, SvcTerm, TvcTerm, DEFAULT_FIXED_EFFECT_VARIANCE, DEFAULT_PHI_PRIOR,
};
