//! Reverse-approach variance estimation for the imputed mean and the
//! select-then-estimate confidence interval.
//!
//! For a model `α` the imputed mean is linearized through the pseudo-values
//!
//! ```text
//! η̂_k = x_{k,α}'β̂_α + r_k (1 + π_k ĉ_α'x_{k,α}) (y_k - x_{k,α}'β̂_α)
//! ĉ_α = (Σ_S r_k x_{k,α}x_{k,α}'/N)^{-1} Σ_S (1 - r_k) x_{k,α}/(N π_k)
//! ```
//!
//! and the total variance is estimated by `V̂_T = V̂_1 + V̂_2`, where `V̂_1` is
//! the Horvitz-Thompson variance estimator applied to `η̂` and
//! `V̂_2 = σ̂² Σ_S [1 - r_k + r_k (π_k ĉ'x_{k,α})²] / (N² π_k)`.

use nalgebra::DVector;
use rand::Rng;

use crate::design::SampleDraw;
use crate::error::{ImputeError, Result};
use crate::estimator::{fit_respondents, imputed_mean, FitResult, ModelSpec, SurveyData};
use crate::linalg::LeastSquares;
use crate::normal::normal_quantile;
use crate::selection::{select, Criterion};

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceEstimate {
    pub v1: f64,
    pub v2: f64,
    pub v_total: f64,
    pub sigma2_hat: f64,
    pub c_hat: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub point: f64,
}

impl ConfidenceInterval {
    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// `ĉ_α`; the zero vector under full response.
pub fn c_hat(data: &SurveyData, model: &ModelSpec) -> Result<DVector<f64>> {
    data.check_model(model)?;
    let big_n = data.population_size() as f64;
    let respondents = data.respondent_rows();
    let ls = LeastSquares::new(model.design_rows(&data.x, &respondents), &model.label())?;
    let rhs = data
        .nonrespondent_rows()
        .into_iter()
        .fold(DVector::zeros(model.n_params()), |acc, i| {
            acc + model.row_vector(&data.x, i) / (big_n * data.pi()[i])
        });
    // (A/N)^{-1} b = N A^{-1} b
    Ok(ls.gram_solve(&rhs) * big_n)
}

/// Pseudo-values `η̂_k` for every sampled unit, in sample order.
pub fn eta_hat(
    data: &SurveyData,
    model: &ModelSpec,
    fit: &FitResult,
    c: &DVector<f64>,
) -> Vec<f64> {
    (0..data.n())
        .map(|i| {
            let fitted = model.predict(&data.x, i, &fit.beta_hat);
            if data.responded[i] {
                let lever = 1.0 + data.pi()[i] * c.dot(&model.row_vector(&data.x, i));
                fitted + lever * (data.y[i] - fitted)
            } else {
                fitted
            }
        })
        .collect()
}

/// Horvitz-Thompson variance estimator of `(1/N) Σ_S η_k/π_k`:
/// `(1/N²) Σ_k Σ_l (Δ_kl/π_kl)(η_k/π_k)(η_l/π_l)` over the realized sample.
///
/// Summation runs k-major, then l, so the result does not depend on any
/// scheduling.
pub fn v1_hat(sample: &SampleDraw, eta: &[f64]) -> Result<f64> {
    let design = &sample.design;
    let ids = &sample.unit_ids;
    let expanded: Vec<f64> = eta.iter().zip(&sample.pi).map(|(e, p)| e / p).collect();
    let mut total = 0.0;
    for (a, &k) in ids.iter().enumerate() {
        let mut row = 0.0;
        for (b, &l) in ids.iter().enumerate() {
            let ratio = design.delta(k, l)? / design.pair_inclusion(k, l)?;
            row += ratio * expanded[b];
        }
        total += row * expanded[a];
    }
    let big_n = sample.population_size() as f64;
    Ok(total / (big_n * big_n))
}

/// `σ̂²_α = rss / (n_r - p_α)`.
pub fn sigma2_hat(fit: &FitResult, model: &ModelSpec) -> Result<f64> {
    let p = model.n_params();
    if fit.n_r_used <= p {
        return Err(ImputeError::DegenerateFit {
            model: model.label(),
            reason: format!(
                "{} respondents for {p} coefficients leaves no residual df",
                fit.n_r_used
            ),
        });
    }
    Ok(fit.rss / (fit.n_r_used - p) as f64)
}

pub fn v2_hat(data: &SurveyData, model: &ModelSpec, sigma2: f64, c: &DVector<f64>) -> f64 {
    let big_n = data.population_size() as f64;
    let sum: f64 = (0..data.n())
        .map(|i| {
            let pi = data.pi()[i];
            let weight = if data.responded[i] {
                (pi * c.dot(&model.row_vector(&data.x, i))).powi(2)
            } else {
                1.0
            };
            weight / (big_n * big_n * pi)
        })
        .sum();
    sigma2 * sum
}

/// `point ± z_{(1+level)/2} √v_total`.
pub fn confidence_interval(point: f64, v_total: f64, level: f64) -> Result<ConfidenceInterval> {
    if !(level > 0.0 && level < 1.0) {
        return Err(ImputeError::Domain(format!(
            "confidence level {level} outside (0, 1)"
        )));
    }
    if !v_total.is_finite() || v_total < 0.0 {
        return Err(ImputeError::EstimationFailure(format!(
            "total variance estimate {v_total}"
        )));
    }
    let half = normal_quantile(0.5 + level / 2.0) * v_total.sqrt();
    Ok(ConfidenceInterval {
        lower: point - half,
        upper: point + half,
        level,
        point,
    })
}

/// Variance components for `model` given its respondent fit.
pub fn estimate_variance(
    data: &SurveyData,
    model: &ModelSpec,
    fit: &FitResult,
) -> Result<VarianceEstimate> {
    let c = c_hat(data, model)?;
    let eta = eta_hat(data, model, fit, &c);
    let v1 = v1_hat(&data.sample, &eta)?;
    let sigma2 = sigma2_hat(fit, model)?;
    let v2 = v2_hat(data, model, sigma2, &c);
    Ok(VarianceEstimate {
        v1,
        v2,
        v_total: v1 + v2,
        sigma2_hat: sigma2,
        c_hat: c,
    })
}

/// Everything reported for one model on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateBundle {
    pub model: ModelSpec,
    /// Position of `model` among the candidates, when it came from a selection.
    pub model_index: Option<usize>,
    pub mu_hat: f64,
    pub fit: FitResult,
    pub variance: VarianceEstimate,
    pub ci: ConfidenceInterval,
}

/// Point estimate, variance and interval for a fixed model.
pub fn estimate_for_model(
    data: &SurveyData,
    model: &ModelSpec,
    level: f64,
) -> Result<EstimateBundle> {
    let fit = fit_respondents(data, model)?;
    let mu_hat = imputed_mean(data, model, &fit);
    let variance = estimate_variance(data, model, &fit)?;
    let ci = confidence_interval(mu_hat, variance.v_total, level)?;
    Ok(EstimateBundle {
        model: model.clone(),
        model_index: None,
        mu_hat,
        fit,
        variance,
        ci,
    })
}

/// Select a model with `criterion`, impute, estimate the variance and build
/// the interval at confidence `level`.
pub fn estimate_with_inference<R: Rng + ?Sized>(
    data: &SurveyData,
    candidates: &[ModelSpec],
    criterion: Criterion,
    level: f64,
    rng: &mut R,
) -> Result<EstimateBundle> {
    for m in candidates {
        data.check_model(m)?;
    }
    let (x_r, y_r) = data.respondents();
    let selection = select(criterion, candidates, &x_r, &y_r, rng)?;
    let mut bundle = estimate_for_model(data, &selection.model, level)?;
    bundle.model_index = Some(selection.index);
    Ok(bundle)
}

/// Population-level linearization quantities computed from the true
/// coefficients and population-wide response indicators. Only available in
/// simulations; used to check the linearization of the imputed mean.
pub mod oracle {
    use nalgebra::{DMatrix, DVector};

    use crate::design::SampleDraw;
    use crate::error::{ImputeError, Result};
    use crate::estimator::ModelSpec;
    use crate::popgen::Population;

    /// `c_α = (Σ_U r_k π_k x_{k,α}x_{k,α}'/N)^{-1} Σ_U (1 - r_k) x_{k,α}/N`
    /// with `pi` and `r` given for every population unit.
    pub fn population_c(
        pop: &Population,
        pi: &[f64],
        r: &[bool],
        model: &ModelSpec,
    ) -> Result<DVector<f64>> {
        let big_n = pop.size() as f64;
        let p = model.n_params();
        let mut gram = DMatrix::zeros(p, p);
        let mut rhs = DVector::zeros(p);
        for k in 0..pop.size() {
            let x = model.row_vector(&pop.x, k);
            if r[k] {
                gram += &x * x.transpose() * (pi[k] / big_n);
            } else {
                rhs += x / big_n;
            }
        }
        let chol = gram.cholesky().ok_or_else(|| ImputeError::SingularFit {
            model: model.label(),
            reason: "population Gram matrix not positive definite".into(),
        })?;
        Ok(chol.solve(&rhs))
    }

    /// `β_α`: the true coefficients restricted to the model (meaningful for
    /// correct models).
    pub fn restricted_beta(pop: &Population, model: &ModelSpec) -> DVector<f64> {
        let offset = usize::from(model.with_intercept());
        DVector::from_fn(model.n_params(), |c, _| {
            if c < offset {
                pop.beta[0]
            } else {
                pop.beta[model.included()[c - offset]]
            }
        })
    }

    /// `η_k = x_{k,α}'β_α + r_k (1 + π_k c_α'x_{k,α}) ε_k` for every unit.
    pub fn linearized_eta(
        pop: &Population,
        pi: &[f64],
        r: &[bool],
        model: &ModelSpec,
        c: &DVector<f64>,
    ) -> Vec<f64> {
        let beta = restricted_beta(pop, model);
        (0..pop.size())
            .map(|k| {
                let x = model.row_vector(&pop.x, k);
                let base = x.dot(&beta);
                if r[k] {
                    base + (1.0 + pi[k] * c.dot(&x)) * pop.error(k)
                } else {
                    base
                }
            })
            .collect()
    }

    /// Linearized imputed mean `(1/N) Σ_S η_k/π_k`.
    pub fn linearized_mean(sample: &SampleDraw, eta: &[f64]) -> f64 {
        let total: f64 = sample
            .unit_ids
            .iter()
            .zip(&sample.pi)
            .map(|(&k, p)| eta[k] / p)
            .sum();
        total / sample.population_size() as f64
    }
}
