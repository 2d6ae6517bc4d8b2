//! Oracle imputation loss.
//!
//! For a model `α` the loss is `E_m[(μ̂_α - μ̂_π)²]`, the expected squared gap
//! between the imputed mean and the complete-data Horvitz-Thompson mean, with
//! the expectation over the model errors and the sample, response pattern and
//! covariates held fixed. On the `N²`-scaled gap `N(μ̂_α - μ̂_π)` it splits
//! exactly into
//!
//! ```text
//! l1 = { (Σ_{S_m} x_k/π_k)'β - (Σ_{S_m} x_{k,α}/π_k)' A_{r,α}^{-1} X_{r,α}' X_r β }²
//! l2 = σ² (Σ_{S_m} x_{k,α}/π_k)' A_{r,α}^{-1} (Σ_{S_m} x_{k,α}/π_k)
//! ```
//!
//! plus the model-free constant `σ² Σ_{S_m} π_k^{-2}`, which is left out of
//! [`LossValue`]. Here `A_{r,α} = X_{r,α}'X_{r,α}` and `X_r β` is the true
//! conditional mean of the respondents (intercept included). These quantities
//! need the true `β` and `σ`, so they only exist on the simulation path.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{ImputeError, Result};
use crate::estimator::{ModelSpec, SurveyData};
use crate::linalg::LeastSquares;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    /// Squared bias term.
    pub l1: f64,
    /// Variance term.
    pub l2: f64,
    pub total: f64,
}

fn true_mean(data: &SurveyData, beta: &[f64], i: usize) -> f64 {
    beta[0]
        + (0..data.covariates())
            .map(|j| data.x[(i, j)] * beta[j + 1])
            .sum::<f64>()
}

fn check_truth(data: &SurveyData, beta_true: &[f64], sigma: f64) -> Result<()> {
    if beta_true.len() != data.covariates() + 1 {
        return Err(ImputeError::Domain(format!(
            "true coefficients have length {}, expected {}",
            beta_true.len(),
            data.covariates() + 1
        )));
    }
    if sigma.is_nan() || sigma < 0.0 {
        return Err(ImputeError::Domain("sigma must be non-negative".into()));
    }
    Ok(())
}

/// Weighted nonrespondent covariate total `Σ_{S_m} x_{k,α}/π_k`.
fn nonrespondent_total(data: &SurveyData, model: &ModelSpec) -> DVector<f64> {
    data.nonrespondent_rows()
        .into_iter()
        .fold(DVector::zeros(model.n_params()), |acc, i| {
            acc + model.row_vector(&data.x, i) / data.pi()[i]
        })
}

/// Closed-form `(l1, l2)` for `model` on one realized sample.
pub fn loss_closed_form(
    data: &SurveyData,
    model: &ModelSpec,
    beta_true: &[f64],
    sigma: f64,
) -> Result<LossValue> {
    data.check_model(model)?;
    check_truth(data, beta_true, sigma)?;
    let respondents = data.respondent_rows();
    let ls = LeastSquares::new(model.design_rows(&data.x, &respondents), &model.label())?;
    if data.nonrespondent_rows().is_empty() {
        return Ok(LossValue {
            l1: 0.0,
            l2: 0.0,
            total: 0.0,
        });
    }

    let t = nonrespondent_total(data, model);
    // A^{-1} X_{r,α}' (X_r β) is the OLS fit of the true respondent means
    let mean_r = DVector::from_iterator(
        respondents.len(),
        respondents.iter().map(|&i| true_mean(data, beta_true, i)),
    );
    let projected = ls.solve(&mean_r);
    let missing_mean: f64 = data
        .nonrespondent_rows()
        .into_iter()
        .map(|i| true_mean(data, beta_true, i) / data.pi()[i])
        .sum();
    let l1 = (missing_mean - t.dot(&projected)).powi(2);
    let l2 = sigma * sigma * ls.gram_quadratic(&t);
    Ok(LossValue {
        l1,
        l2,
        total: l1 + l2,
    })
}

/// Monte Carlo estimate of `l1 + l2` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McLoss {
    pub estimate: f64,
    pub std_error: f64,
}

/// Direct evaluation of the loss definition: redraw the errors of every
/// sampled unit `draws` times (covariates, sample and response fixed), refit,
/// and average `(N(μ̂_α - μ̂_π))²`. The constant `σ² Σ_{S_m} π_k^{-2}` is
/// subtracted so the result targets `l1 + l2`.
pub fn mc_loss_oracle<R: Rng + ?Sized>(
    data: &SurveyData,
    model: &ModelSpec,
    beta_true: &[f64],
    sigma: f64,
    draws: usize,
    rng: &mut R,
) -> Result<McLoss> {
    data.check_model(model)?;
    check_truth(data, beta_true, sigma)?;
    if draws < 2 {
        return Err(ImputeError::Domain("at least two draws required".into()));
    }
    let respondents = data.respondent_rows();
    let missing = data.nonrespondent_rows();
    let ls = LeastSquares::new(model.design_rows(&data.x, &respondents), &model.label())?;
    let pi = data.pi();
    let means: Vec<f64> = (0..data.n())
        .map(|i| true_mean(data, beta_true, i))
        .collect();
    let predictors: Vec<DVector<f64>> = missing
        .iter()
        .map(|&i| model.row_vector(&data.x, i))
        .collect();
    let constant: f64 = missing
        .iter()
        .map(|&i| sigma * sigma / (pi[i] * pi[i]))
        .sum();

    let mut y = vec![0.0; data.n()];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..draws {
        for (v, m) in y.iter_mut().zip(&means) {
            let z: f64 = StandardNormal.sample(rng);
            *v = m + sigma * z;
        }
        let y_r = DVector::from_iterator(respondents.len(), respondents.iter().map(|&i| y[i]));
        let beta_hat = ls.solve(&y_r);
        let gap: f64 = missing
            .iter()
            .zip(&predictors)
            .map(|(&i, x)| (x.dot(&beta_hat) - y[i]) / pi[i])
            .sum();
        let sq = gap * gap;
        sum += sq;
        sum_sq += sq * sq;
    }
    let n = draws as f64;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(McLoss {
        estimate: mean - constant,
        std_error: (var / n).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::draw_srswor;
    use crate::estimator::nested_family;
    use crate::popgen::{
        generate_population, generate_response, CovariateLaw, PopulationSpec, ResponseModel,
    };
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_instance(seed: u64, sigma: f64) -> (SurveyData, Vec<f64>) {
        let spec = PopulationSpec {
            size: 20,
            covariates: 3,
            law: CovariateLaw::Uniform {
                low: 0.0,
                high: 4.0,
            },
            beta: vec![1.0, 2.0, -1.5, 0.0],
            sigma,
            response: ResponseModel {
                offset: 0.0,
                scale: 1.0,
                zeta: vec![0.0; 3],
            },
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pop = generate_population(&spec, &mut rng).unwrap();
        let sample = draw_srswor(20, 10, &mut rng).unwrap();
        // six respondents, four nonrespondents
        let mask = crate::popgen::ResponseMask {
            r: (0..10).map(|i| i % 5 != 1 && i % 5 != 3).collect(),
        };
        (SurveyData::observe(&pop, &sample, &mask), spec.beta)
    }

    #[test]
    fn correct_models_have_no_bias_term() {
        let (data, beta) = tiny_instance(1, 1.0);
        for ids in [vec![1, 2], vec![1, 2, 3]] {
            let m = ModelSpec::new(ids, true).unwrap();
            let loss = loss_closed_form(&data, &m, &beta, 1.0).unwrap();
            assert!(loss.l1 <= 1e-9 * loss.l2, "{loss:?}");
            assert!(loss.l2 > 0.0);
        }
        let wrong = ModelSpec::new(vec![1], true).unwrap();
        assert!(loss_closed_form(&data, &wrong, &beta, 1.0).unwrap().l1 > 1e-6);
    }

    #[test]
    fn full_response_has_zero_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = crate::presets::paper_population(100);
        let pop = generate_population(&spec, &mut rng).unwrap();
        let sample = draw_srswor(100, 40, &mut rng).unwrap();
        let mask = generate_response(&vec![1.0; 100], &sample, &mut rng);
        let data = SurveyData::observe(&pop, &sample, &mask);
        let m = ModelSpec::new(vec![1, 2], true).unwrap();
        let loss = loss_closed_form(&data, &m, &pop.beta, 60.0).unwrap();
        assert_eq!((loss.l1, loss.l2), (0.0, 0.0));
    }

    #[test]
    fn matches_monte_carlo_definition() {
        let (data, beta) = tiny_instance(5, 1.5);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for ids in [vec![1], vec![1, 2], vec![1, 2, 3]] {
            let m = ModelSpec::new(ids, true).unwrap();
            let exact = loss_closed_form(&data, &m, &beta, 1.5).unwrap().total;
            let mc = mc_loss_oracle(&data, &m, &beta, 1.5, 200_000, &mut rng).unwrap();
            assert!(
                (mc.estimate - exact).abs() <= 3.0 * mc.std_error,
                "model {m}: exact {exact}, mc {mc:?}"
            );
        }
    }

    #[test]
    fn noiseless_correct_model_has_zero_mc_loss() {
        let (data, beta) = tiny_instance(2, 0.0);
        let m = ModelSpec::new(vec![1, 2], true).unwrap();
        let mc = mc_loss_oracle(
            &data,
            &m,
            &beta,
            0.0,
            1000,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        assert!(mc.estimate.abs() < 1e-18 && mc.std_error < 1e-18);
    }

    #[test]
    fn doubling_sigma_less_than_quadruples_biased_loss() {
        let (data, beta) = tiny_instance(5, 1.0);
        let wrong = ModelSpec::new(vec![2], true).unwrap();
        let exact = loss_closed_form(&data, &wrong, &beta, 1.0).unwrap();
        assert!(exact.l1 > exact.l2, "bias term should dominate: {exact:?}");
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let at_one = mc_loss_oracle(&data, &wrong, &beta, 1.0, 20_000, &mut rng).unwrap();
        let at_two = mc_loss_oracle(&data, &wrong, &beta, 2.0, 20_000, &mut rng).unwrap();
        assert!(at_two.estimate > at_one.estimate);
        assert!(at_two.estimate < 4.0 * at_one.estimate);
    }

    #[test]
    fn correct_nested_minimum_is_true_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let spec = crate::presets::paper_population(1000);
        let pop = generate_population(&spec, &mut rng).unwrap();
        let sample = draw_srswor(1000, 100, &mut rng).unwrap();
        let mask = generate_response(&pop.resp_prob, &sample, &mut rng);
        let data = SurveyData::observe(&pop, &sample, &mask);
        let totals: Vec<f64> = nested_family(20, true)[5..]
            .iter()
            .map(|m| loss_closed_form(&data, m, &pop.beta, 60.0).unwrap().total)
            .collect();
        assert!(totals.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn loss_ignores_unit_order() {
        let (data, beta) = tiny_instance(8, 1.0);
        let m = ModelSpec::new(vec![1, 3], true).unwrap();
        let base = loss_closed_form(&data, &m, &beta, 1.0).unwrap();
        let perm: Vec<usize> = (0..data.n()).rev().collect();
        let mut shuffled = data.clone();
        shuffled.x = nalgebra::DMatrix::from_fn(data.n(), 3, |i, j| data.x[(perm[i], j)]);
        shuffled.y = perm.iter().map(|&i| data.y[i]).collect();
        shuffled.responded = perm.iter().map(|&i| data.responded[i]).collect();
        shuffled.sample.pi = perm.iter().map(|&i| data.sample.pi[i]).collect();
        let other = loss_closed_form(&shuffled, &m, &beta, 1.0).unwrap();
        assert!((base.l1 - other.l1).abs() <= 1e-9 * base.total);
        assert!((base.l2 - other.l2).abs() <= 1e-9 * base.total);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn variance_term_increases_along_nested_pairs(seed in 0u64..10_000, small in 0usize..4, extra in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let spec = PopulationSpec {
                size: 200,
                covariates: 8,
                law: CovariateLaw::Gamma { shape: 2.0, scale: 1.0 },
                beta: vec![0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
                sigma: 1.0,
                response: ResponseModel { offset: 0.0, scale: 0.0, zeta: vec![0.0; 8] },
            };
            let pop = generate_population(&spec, &mut rng).unwrap();
            let sample = draw_srswor(200, 40, &mut rng).unwrap();
            let mask = generate_response(&pop.resp_prob, &sample, &mut rng);
            prop_assume!(mask.nonrespondents() > 0 && mask.respondents() > 12);
            let data = SurveyData::observe(&pop, &sample, &mask);
            let mut pool: Vec<usize> = (1..=8).collect();
            use rand::seq::SliceRandom;
            pool.shuffle(&mut rng);
            let inner = ModelSpec::new(pool[..small].to_vec(), true).unwrap();
            let outer = ModelSpec::new(pool[..small + extra].to_vec(), true).unwrap();
            let a = loss_closed_form(&data, &inner, &pop.beta, 1.0).unwrap();
            let b = loss_closed_form(&data, &outer, &pop.beta, 1.0).unwrap();
            prop_assert!(a.l2 < b.l2, "{} -> {}: {} !< {}", inner, outer, a.l2, b.l2);
        }
    }
}
