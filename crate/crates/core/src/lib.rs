//! Online Bayes-mixture and MDL prediction over countable weighted model
//! classes, with metrics and a Monte Carlo harness for cumulative
//! Hellinger and Kullback-Leibler loss bounds.
//!
//! ```
//! use discrete_mdl::model::{InputToken, Outcome};
//! use discrete_mdl::predictor::PredictorState;
//! use discrete_mdl::quadrature::QuadratureSpec;
//! use discrete_mdl::simulate::standard_class;
//!
//! let mut state = PredictorState::new(standard_class())?;
//! state.update(&InputToken::scalar(0.3), Outcome::Real(1.2))?;
//! let next = InputToken::scalar(-0.5);
//! let mix = state.bayes_predict(&next)?;
//! let rho_bar = state.normalized_predict(&next, &QuadratureSpec::default())?;
//! assert!(mix.ln_eval_real(0.0).is_finite() && rho_bar.ln_eval_real(0.0).is_finite());
//! # Ok::<(), discrete_mdl::Error>(())
//! ```

pub mod classify;
pub mod cli;
pub mod density;
pub mod error;
pub mod math;
pub mod metrics;
pub mod model;
pub mod predictor;
pub mod quadrature;
pub mod simulate;

pub use error::{Error, Result};
