//! The simulation setting used throughout the examples and tests: 20 Gamma(5, 2)
//! covariates, six signal coefficients, N(0, 60²) errors, a logistic response
//! mechanism with roughly 50% response, and the embedded family of 20 models.

use crate::estimator::{nested_family, ModelSpec};
use crate::popgen::{CovariateLaw, PopulationSpec, ResponseModel};

pub const PAPER_COVARIATES: usize = 20;

/// Slopes of the six signal covariates; the other 14 are zero and the
/// intercept is zero.
pub const PAPER_SIGNAL: [f64; 6] = [10.0, 9.0, 9.0, 8.0, 8.0, 7.0];

/// Covariates (1-based) that drive the response propensity.
pub const PAPER_RESPONSE_COVARIATES: [usize; 7] = [1, 2, 3, 4, 7, 8, 9];

/// Stratum shares, in sort order.
pub const PAPER_STRATUM_FRACTIONS: [f64; 4] = [0.5, 0.25, 0.20, 0.05];

/// Stratification sort key `-(3 x1 + 2 x2 + 4 x3 + 5 x4)` as coefficients.
pub fn paper_sort_coefficients() -> Vec<f64> {
    let mut c = vec![0.0; PAPER_COVARIATES];
    c[..4].copy_from_slice(&[-3.0, -2.0, -4.0, -5.0]);
    c
}

/// Covariate used for the Neyman allocation (1-based).
pub const PAPER_ALLOCATION_COVARIATE: usize = 2;

pub fn paper_population(size: usize) -> PopulationSpec {
    let mut beta = vec![0.0; PAPER_COVARIATES + 1];
    beta[1..7].copy_from_slice(&PAPER_SIGNAL);
    let mut zeta = vec![0.0; PAPER_COVARIATES];
    for j in PAPER_RESPONSE_COVARIATES {
        zeta[j - 1] = 1.0;
    }
    PopulationSpec {
        size,
        covariates: PAPER_COVARIATES,
        law: CovariateLaw::Gamma {
            shape: 5.0,
            scale: 2.0,
        },
        beta,
        sigma: 60.0,
        response: ResponseModel {
            offset: -70.0,
            scale: 0.1,
            zeta,
        },
    }
}

/// `{1} ⊂ {1,2} ⊂ ... ⊂ {1..20}`, intercept in every model.
pub fn paper_candidates() -> Vec<ModelSpec> {
    nested_family(PAPER_COVARIATES, true)
}
