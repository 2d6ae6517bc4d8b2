//! Point estimation: per-model OLS on respondents, the Horvitz-Thompson mean
//! and the regression-imputed mean.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::design::SampleDraw;
use crate::error::{ImputeError, Result};
use crate::linalg::LeastSquares;
use crate::popgen::{Population, ResponseMask};

/// A candidate imputation model: a subset of the covariates (1-based, in the
/// order their coefficients are reported) plus an optional intercept.
///
/// Equality compares covariate sets, so `{1,2}` equals `{2,1}`.
#[derive(Debug, Clone, Eq)]
pub struct ModelSpec {
    included: Vec<usize>,
    with_intercept: bool,
}

impl PartialEq for ModelSpec {
    fn eq(&self, other: &Self) -> bool {
        self.with_intercept == other.with_intercept
            && self.sorted_included() == other.sorted_included()
    }
}

impl ModelSpec {
    pub fn new(included: Vec<usize>, with_intercept: bool) -> Result<Self> {
        if included.is_empty() && !with_intercept {
            return Err(ImputeError::Config(
                "model without covariates needs an intercept".into(),
            ));
        }
        if included.contains(&0) {
            return Err(ImputeError::Config("covariate indices are 1-based".into()));
        }
        let mut sorted = included.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(ImputeError::Config(format!(
                "repeated covariate in model {included:?}"
            )));
        }
        Ok(Self {
            included,
            with_intercept,
        })
    }

    pub fn included(&self) -> &[usize] {
        &self.included
    }

    pub fn with_intercept(&self) -> bool {
        self.with_intercept
    }

    pub fn sorted_included(&self) -> Vec<usize> {
        let mut s = self.included.clone();
        s.sort_unstable();
        s
    }

    /// Number of fitted coefficients `p_alpha`.
    pub fn n_params(&self) -> usize {
        self.included.len() + usize::from(self.with_intercept)
    }

    pub fn max_covariate(&self) -> usize {
        self.included.iter().copied().max().unwrap_or(0)
    }

    /// Covariate-columns design matrix for the rows of `x`, with a leading
    /// column of ones when the model has an intercept.
    pub fn design_matrix(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.design_rows(x, &(0..x.nrows()).collect::<Vec<_>>())
    }

    pub(crate) fn design_rows(&self, x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
        let offset = usize::from(self.with_intercept);
        DMatrix::from_fn(rows.len(), self.n_params(), |i, c| {
            if c < offset {
                1.0
            } else {
                x[(rows[i], self.included[c - offset] - 1)]
            }
        })
    }

    /// `x_{k,alpha}` for row `i` of `x`.
    pub fn row_vector(&self, x: &DMatrix<f64>, i: usize) -> DVector<f64> {
        let offset = usize::from(self.with_intercept);
        DVector::from_fn(self.n_params(), |c, _| {
            if c < offset {
                1.0
            } else {
                x[(i, self.included[c - offset] - 1)]
            }
        })
    }

    pub fn predict(&self, x: &DMatrix<f64>, i: usize, beta: &DVector<f64>) -> f64 {
        let offset = usize::from(self.with_intercept);
        let mut value = if self.with_intercept { beta[0] } else { 0.0 };
        for (c, &j) in self.included.iter().enumerate() {
            value += beta[c + offset] * x[(i, j - 1)];
        }
        value
    }

    /// Compact label such as `{1..6}` or `{1,3,5}`; `{}` is intercept-only.
    pub fn label(&self) -> String {
        let sorted = self.sorted_included();
        let mut parts = Vec::new();
        let mut i = 0;
        while i < sorted.len() {
            let mut j = i;
            while j + 1 < sorted.len() && sorted[j + 1] == sorted[j] + 1 {
                j += 1;
            }
            parts.push(match j - i {
                0 => sorted[i].to_string(),
                1 => format!("{},{}", sorted[i], sorted[j]),
                _ => format!("{}..{}", sorted[i], sorted[j]),
            });
            i = j + 1;
        }
        let body = format!("{{{}}}", parts.join(","));
        if self.with_intercept {
            body
        } else {
            format!("{body}-noint")
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// The embedded family `{1} ⊂ {1,2} ⊂ ... ⊂ {1..p}`.
pub fn nested_family(p: usize, with_intercept: bool) -> Vec<ModelSpec> {
    (1..=p)
        .map(|j| ModelSpec::new((1..=j).collect(), with_intercept).expect("non-empty model"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelClass {
    /// Exactly the support of the true coefficients.
    True,
    /// Contains the support plus superfluous covariates.
    CorrectOverfit,
    /// Omits a covariate with a non-zero coefficient.
    Wrong,
}

/// Classifies `model` against the true support. A missing intercept makes a
/// model wrong only when the true intercept is non-zero; an included intercept
/// never counts as superfluous.
pub fn classify_model(
    model: &ModelSpec,
    true_support: &[usize],
    intercept_active: bool,
) -> ModelClass {
    let included = model.sorted_included();
    let covers = true_support
        .iter()
        .all(|j| included.binary_search(j).is_ok());
    if !covers || (intercept_active && !model.with_intercept()) {
        ModelClass::Wrong
    } else if included.len() == true_support.len() {
        ModelClass::True
    } else {
        ModelClass::CorrectOverfit
    }
}

/// Observed survey data for one sample. `y` is NaN for nonrespondents.
#[derive(Debug, Clone)]
pub struct SurveyData {
    /// n x p covariates of the sampled units, in `sample.unit_ids` order.
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    pub responded: Vec<bool>,
    pub sample: SampleDraw,
}

impl SurveyData {
    /// `y[i] = None` marks item nonresponse.
    pub fn new(x: DMatrix<f64>, y: Vec<Option<f64>>, sample: SampleDraw) -> Result<Self> {
        let n = sample.len();
        if x.nrows() != n || y.len() != n {
            return Err(ImputeError::Domain(format!(
                "data has {} covariate rows and {} outcomes for a sample of {n}",
                x.nrows(),
                y.len()
            )));
        }
        if y.iter().flatten().any(|v| !v.is_finite()) || x.iter().any(|v| !v.is_finite()) {
            return Err(ImputeError::Domain("non-finite observed value".into()));
        }
        let responded = y.iter().map(Option::is_some).collect();
        let y = y.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect();
        Ok(Self {
            x,
            y,
            responded,
            sample,
        })
    }

    /// What the analyst sees: sampled covariates, and `y` for respondents only.
    pub fn observe(pop: &Population, sample: &SampleDraw, mask: &ResponseMask) -> Self {
        let ids = &sample.unit_ids;
        let x = DMatrix::from_fn(ids.len(), pop.covariates(), |i, j| pop.x[(ids[i], j)]);
        let y = ids
            .iter()
            .zip(&mask.r)
            .map(|(&k, &r)| if r { pop.y[k] } else { f64::NAN })
            .collect();
        Self {
            x,
            y,
            responded: mask.r.clone(),
            sample: sample.clone(),
        }
    }

    pub fn n(&self) -> usize {
        self.responded.len()
    }

    pub fn covariates(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_respondents(&self) -> usize {
        self.responded.iter().filter(|&&r| r).count()
    }

    pub fn population_size(&self) -> usize {
        self.sample.population_size()
    }

    pub fn pi(&self) -> &[f64] {
        &self.sample.pi
    }

    pub fn respondent_rows(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.responded[i]).collect()
    }

    pub fn nonrespondent_rows(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| !self.responded[i]).collect()
    }

    /// Respondent covariates `X_r` (n_r x p) and outcomes `Y_r`.
    pub fn respondents(&self) -> (DMatrix<f64>, DVector<f64>) {
        let rows = self.respondent_rows();
        let x = DMatrix::from_fn(rows.len(), self.covariates(), |i, j| self.x[(rows[i], j)]);
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.y[i]));
        (x, y)
    }

    pub(crate) fn check_model(&self, model: &ModelSpec) -> Result<()> {
        if model.max_covariate() > self.covariates() {
            return Err(ImputeError::Config(format!(
                "model {model} references covariate {} but data has {}",
                model.max_covariate(),
                self.covariates()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Intercept first (if any), then covariates in `ModelSpec::included` order.
    pub beta_hat: DVector<f64>,
    pub rss: f64,
    pub n_r_used: usize,
}

/// Squared residual norm, relative to `‖y‖²`, at or below which a fit is
/// reported as exact (`rss = 0`).
pub const EXACT_FIT_TOLERANCE: f64 = 1e-24;

/// Unweighted OLS of `y_r` on the model's columns of `x_r`, via Householder QR.
pub fn fit_ols(x_r: &DMatrix<f64>, y_r: &DVector<f64>, model: &ModelSpec) -> Result<FitResult> {
    if model.max_covariate() > x_r.ncols() {
        return Err(ImputeError::Config(format!(
            "model {model} references covariate {} but data has {}",
            model.max_covariate(),
            x_r.ncols()
        )));
    }
    let design = model.design_matrix(x_r);
    let ls = LeastSquares::new(design.clone(), &model.label())?;
    let beta_hat = ls.solve(y_r);
    let mut rss = (y_r - &design * &beta_hat).norm_squared();
    if rss <= EXACT_FIT_TOLERANCE * y_r.norm_squared() {
        rss = 0.0;
    }
    Ok(FitResult {
        beta_hat,
        rss,
        n_r_used: y_r.len(),
    })
}

/// Fits `model` on the respondents of `data`.
pub fn fit_respondents(data: &SurveyData, model: &ModelSpec) -> Result<FitResult> {
    data.check_model(model)?;
    let (x_r, y_r) = data.respondents();
    fit_ols(&x_r, &y_r, model)
}

/// Horvitz-Thompson mean `(1/N) Σ_S y_k / π_k`; `y` is in sample order.
pub fn ht_mean(sample: &SampleDraw, y: &[f64]) -> f64 {
    let total: f64 = y.iter().zip(&sample.pi).map(|(v, p)| v / p).sum();
    total / sample.population_size() as f64
}

/// Imputed mean: observed `y` for respondents, `x_{k,α}'β̂_α` for the rest.
pub fn imputed_mean(data: &SurveyData, model: &ModelSpec, fit: &FitResult) -> f64 {
    let pi = data.pi();
    let total: f64 = (0..data.n())
        .map(|i| {
            let value = if data.responded[i] {
                data.y[i]
            } else {
                model.predict(&data.x, i, &fit.beta_hat)
            };
            value / pi[i]
        })
        .sum();
    total / data.population_size() as f64
}
