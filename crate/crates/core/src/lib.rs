//! Linear regression imputation for survey data with item nonresponse.
//!
//! The crate covers the full pipeline for estimating a finite population mean
//! when the survey variable is missing at random:
//!
//! * [`design`]: SRSWOR and stratified SRSWOR with exact inclusion probabilities
//! * [`popgen`]: superpopulation generator and MAR response indicators
//! * [`estimator`]: per-model OLS on respondents and the imputed mean
//! * [`loss`]: the oracle imputation loss and a Monte Carlo check of it
//! * [`selection`]: AIC, BIC and K-fold cross-validation on respondent data
//! * [`variance`]: reverse-approach variance estimator and confidence intervals
//! * [`study`]: Monte Carlo replication engine and summary metrics
//! * [`cli`]: JSON configuration, CSV I/O and the command-line front end

pub mod cli;
pub mod design;
pub mod error;
pub mod estimator;
mod linalg;
pub mod loss;
pub mod normal;
pub mod popgen;
pub mod presets;
pub mod selection;
pub mod study;
pub mod variance;

pub use error::{ImputeError, Result};
