//! Model selection on respondent data: Gaussian-profile AIC and BIC, and
//! K-fold cross-validation with squared-error loss.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{ImputeError, Result};
use crate::estimator::{fit_ols, FitResult, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    Aic,
    Bic,
    /// K-fold cross-validation.
    KFold(usize),
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Criterion::Aic => f.write_str("aic"),
            Criterion::Bic => f.write_str("bic"),
            Criterion::KFold(k) => write!(f, "cv{k}"),
        }
    }
}

impl FromStr for Criterion {
    type Err = ImputeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aic" => Ok(Criterion::Aic),
            "bic" => Ok(Criterion::Bic),
            _ => s
                .strip_prefix("cv")
                .and_then(|k| k.parse::<usize>().ok())
                .filter(|&k| k >= 2)
                .map(Criterion::KFold)
                .ok_or_else(|| {
                    ImputeError::Config(format!(
                        "unknown criterion {s:?}; expected aic, bic or cvK with K >= 2"
                    ))
                }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionScore {
    pub model: ModelSpec,
    /// Lower is better.
    pub score: f64,
    pub criterion: Criterion,
}

fn profile_loglik_term(fit: &FitResult) -> f64 {
    let n = fit.n_r_used as f64;
    if fit.rss <= 0.0 {
        // interpolating fit
        return f64::NEG_INFINITY;
    }
    n * (fit.rss / n).ln()
}

/// `n_r ln(rss/n_r) + 2 p_α`; `-∞` when the fit interpolates.
pub fn score_aic(fit: &FitResult, model: &ModelSpec) -> f64 {
    profile_loglik_term(fit) + 2.0 * model.n_params() as f64
}

/// `n_r ln(rss/n_r) + ln(n_r) p_α`; `-∞` when the fit interpolates.
pub fn score_bic(fit: &FitResult, model: &ModelSpec) -> f64 {
    profile_loglik_term(fit) + (fit.n_r_used as f64).ln() * model.n_params() as f64
}

/// Assigns each of `n` rows to one of `k` folds through a random
/// permutation; fold sizes differ by at most one.
pub fn fold_assignment<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut fold = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        fold[row] = pos % k;
    }
    fold
}

fn check_folds(n: usize, k: usize, model: &ModelSpec) -> Result<()> {
    if k < 2 || n < k {
        return Err(ImputeError::Domain(format!(
            "cannot form {k} folds from {n} respondents"
        )));
    }
    // smallest training set must leave residual degrees of freedom
    let largest_fold = n.div_ceil(k);
    if n - largest_fold <= model.n_params() {
        return Err(ImputeError::SingularFit {
            model: model.label(),
            reason: format!(
                "training folds of {} rows cannot support {} coefficients",
                n - largest_fold,
                model.n_params()
            ),
        });
    }
    Ok(())
}

/// Cross-validated mean squared prediction error for a fixed fold assignment:
/// the average over folds of the held-out MSE.
pub fn kfold_score_with_folds(
    x_r: &DMatrix<f64>,
    y_r: &DVector<f64>,
    model: &ModelSpec,
    folds: &[usize],
    k: usize,
) -> Result<f64> {
    let n = y_r.len();
    check_folds(n, k, model)?;
    let mut total = 0.0;
    for fold in 0..k {
        let train: Vec<usize> = (0..n).filter(|&i| folds[i] != fold).collect();
        let test: Vec<usize> = (0..n).filter(|&i| folds[i] == fold).collect();
        let x_train = DMatrix::from_fn(train.len(), x_r.ncols(), |i, j| x_r[(train[i], j)]);
        let y_train = DVector::from_iterator(train.len(), train.iter().map(|&i| y_r[i]));
        let fit = fit_ols(&x_train, &y_train, model)?;
        let sse: f64 = test
            .iter()
            .map(|&i| (y_r[i] - model.predict(x_r, i, &fit.beta_hat)).powi(2))
            .sum();
        total += sse / test.len() as f64;
    }
    Ok(total / k as f64)
}

/// K-fold cross-validation score with folds drawn from `rng`.
pub fn score_kfold_cv<R: Rng + ?Sized>(
    x_r: &DMatrix<f64>,
    y_r: &DVector<f64>,
    model: &ModelSpec,
    k: usize,
    rng: &mut R,
) -> Result<f64> {
    check_folds(y_r.len(), k, model)?;
    let folds = fold_assignment(y_r.len(), k, rng);
    kfold_score_with_folds(x_r, y_r, model, &folds, k)
}

/// Outcome of a selection: the chosen candidate and every candidate's score
/// (`None` where the fit failed).
#[derive(Debug, Clone)]
pub struct Selection {
    pub index: usize,
    pub model: ModelSpec,
    pub scores: Vec<Option<f64>>,
}

/// Orders candidates by score, then fewer coefficients, then the
/// lexicographically smaller covariate set.
fn prefer(a: (f64, &ModelSpec), b: (f64, &ModelSpec)) -> Ordering {
    a.0.total_cmp(&b.0)
        .then(a.1.n_params().cmp(&b.1.n_params()))
        .then_with(|| a.1.sorted_included().cmp(&b.1.sorted_included()))
}

/// Returns the argmin of `criterion` over `candidates`. Candidates whose fit
/// fails are skipped. Cross-validation scores each candidate on its own fold
/// assignment, drawn from `rng` in candidate order (one draw per candidate,
/// whether or not its fit succeeds).
pub fn select<R: Rng + ?Sized>(
    criterion: Criterion,
    candidates: &[ModelSpec],
    x_r: &DMatrix<f64>,
    y_r: &DVector<f64>,
    rng: &mut R,
) -> Result<Selection> {
    let scores: Vec<Option<f64>> = candidates
        .iter()
        .map(|m| {
            let score = match criterion {
                Criterion::Aic => fit_ols(x_r, y_r, m).map(|f| score_aic(&f, m)),
                Criterion::Bic => fit_ols(x_r, y_r, m).map(|f| score_bic(&f, m)),
                Criterion::KFold(k) => {
                    let folds = fold_assignment(y_r.len(), k, rng);
                    kfold_score_with_folds(x_r, y_r, m, &folds, k)
                }
            };
            score.ok().filter(|s| !s.is_nan())
        })
        .collect();
    let index = scores
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.map(|s| (i, s)))
        .min_by(|a, b| prefer((a.1, &candidates[a.0]), (b.1, &candidates[b.0])))
        .map(|(i, _)| i)
        .ok_or(ImputeError::SelectionFailure)?;
    Ok(Selection {
        index,
        model: candidates[index].clone(),
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::nested_family;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn model(ids: &[usize]) -> ModelSpec {
        ModelSpec::new(ids.to_vec(), true).unwrap()
    }

    fn fit_with(rss: f64, n: usize) -> FitResult {
        FitResult {
            beta_hat: DVector::zeros(1),
            rss,
            n_r_used: n,
        }
    }

    #[test]
    fn parses_criterion_names() {
        assert_eq!("aic".parse::<Criterion>().unwrap(), Criterion::Aic);
        assert_eq!("bic".parse::<Criterion>().unwrap(), Criterion::Bic);
        assert_eq!("cv5".parse::<Criterion>().unwrap(), Criterion::KFold(5));
        assert_eq!(Criterion::KFold(10).to_string(), "cv10");
        assert!("cv1".parse::<Criterion>().is_err());
        assert!("mallows".parse::<Criterion>().is_err());
    }

    #[test]
    fn aic_penalty_arithmetic() {
        let fit = fit_with(50.0, 100);
        let d = score_aic(&fit, &model(&[1, 2, 3])) - score_aic(&fit, &model(&[1, 2]));
        assert!((d - 2.0).abs() < 1e-12);
        let half = fit_with(25.0, 100);
        let drop = score_aic(&fit, &model(&[1])) - score_aic(&half, &model(&[1]));
        assert!((drop - 100.0 * 2f64.ln()).abs() < 1e-10);
        assert_eq!(
            score_aic(&fit_with(0.0, 10), &model(&[1])),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn bic_penalizes_more_than_aic_from_eight_respondents() {
        for n in [8usize, 50, 500] {
            let fit = fit_with(10.0, n);
            let (small, big) = (model(&[1]), model(&[1, 2]));
            let bic_gap = score_bic(&fit, &big) - score_bic(&fit, &small);
            let aic_gap = score_aic(&fit, &big) - score_aic(&fit, &small);
            assert!(bic_gap > aic_gap);
        }
        let fit = fit_with(10.0, 7);
        assert!(score_bic(&fit, &model(&[1, 2])) - score_bic(&fit, &model(&[1])) < 2.0);
    }

    fn noiseless(n: usize, p: usize, active: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| {
            Distribution::<f64>::sample(&StandardNormal, &mut rng)
        });
        let y = DVector::from_fn(n, |i, _| {
            1.0 + (0..active).map(|j| (j + 1) as f64 * x[(i, j)]).sum::<f64>()
        });
        (x, y)
    }

    #[test]
    fn bic_picks_smallest_correct_model_on_noiseless_data() {
        // add a tiny deterministic perturbation so rss is positive but equal
        // across correct models up to rounding
        let (x, mut y) = noiseless(60, 6, 3, 4);
        for i in 0..60 {
            y[i] += if i % 2 == 0 { 1e-3 } else { -1e-3 };
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let sel = select(Criterion::Bic, &nested_family(6, true), &x, &y, &mut rng).unwrap();
        assert_eq!(sel.model, model(&[1, 2, 3]));

        // exactly noiseless: every correct fit is exact and the tie rule decides
        let (x, y) = noiseless(60, 6, 3, 4);
        let sel = select(Criterion::Bic, &nested_family(6, true), &x, &y, &mut rng).unwrap();
        assert_eq!(sel.model, model(&[1, 2, 3]));
        assert!(sel.scores[2..]
            .iter()
            .all(|s| *s == Some(f64::NEG_INFINITY)));
        assert!(sel.scores[1].unwrap().is_finite());
    }

    #[test]
    fn duplicated_noiseless_data_has_zero_cv_error() {
        let (x, y) = noiseless(20, 3, 2, 6);
        let x2 = DMatrix::from_fn(40, 3, |i, j| x[(i % 20, j)]);
        let y2 = DVector::from_fn(40, |i, _| y[i % 20]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let score = score_kfold_cv(&x2, &y2, &model(&[1, 2, 3]), 5, &mut rng).unwrap();
        assert!(score < 1e-20);
    }

    #[test]
    fn leave_one_out_matches_hat_matrix_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = DMatrix::from_fn(10, 1, |_, _| {
            Distribution::<f64>::sample(&StandardNormal, &mut rng)
        });
        let y = DVector::from_fn(10, |i, _| {
            2.0 * x[(i, 0)] + Distribution::<f64>::sample(&StandardNormal, &mut rng) * 0.5
        });
        let m = model(&[1]);
        let cv = score_kfold_cv(&x, &y, &m, 10, &mut rng).unwrap();

        let a = m.design_matrix(&x);
        let hat = &a * (a.transpose() * &a).try_inverse().unwrap() * a.transpose();
        let resid = &y - &hat * &y;
        let loo: f64 = (0..10)
            .map(|i| (resid[i] / (1.0 - hat[(i, i)])).powi(2))
            .sum::<f64>()
            / 10.0;
        assert!((cv - loo).abs() < 1e-8, "cv {cv} vs loo {loo}");
    }

    #[test]
    fn folds_are_balanced_and_seeded() {
        let a = fold_assignment(23, 5, &mut ChaCha8Rng::seed_from_u64(3));
        let b = fold_assignment(23, 5, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
        let mut counts = [0; 5];
        for f in a {
            counts[f] += 1;
        }
        assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
    }

    #[test]
    fn cv_rejects_unsupported_training_folds() {
        let (x, y) = noiseless(10, 6, 2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(score_kfold_cv(&x, &y, &model(&[1, 2, 3, 4, 5, 6]), 5, &mut rng).is_ok());
        assert!(score_kfold_cv(&x, &y, &model(&[1, 2, 3, 4, 5, 6]), 2, &mut rng).is_err());
        assert!(score_kfold_cv(&x, &y, &model(&[1]), 11, &mut rng).is_err());
    }

    #[test]
    fn single_candidate_and_ties() {
        let (x, y) = noiseless(30, 2, 1, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let only = vec![model(&[2])];
        assert_eq!(
            select(Criterion::Aic, &only, &x, &y, &mut rng)
                .unwrap()
                .index,
            0
        );

        // covariate 2 duplicated as covariate 3: identical fits, tie goes to the
        // lexicographically smaller set
        let x3 = DMatrix::from_fn(30, 3, |i, j| x[(i, j.min(1))]);
        let cands = vec![model(&[3]), model(&[2])];
        let mut y2 = y.clone();
        y2[0] += 0.3;
        let scores: Vec<f64> = cands
            .iter()
            .map(|m| score_aic(&fit_ols(&x3, &y2, m).unwrap(), m))
            .collect();
        assert_eq!(scores[0], scores[1]);
        let sel = select(Criterion::Aic, &cands, &x3, &y2, &mut rng).unwrap();
        assert_eq!(sel.model, model(&[2]));

        let (big, small) = (model(&[1, 2]), model(&[5]));
        assert_eq!(prefer((1.0, &small), (1.0, &big)), Ordering::Less);
        assert_eq!(prefer((0.5, &big), (1.0, &small)), Ordering::Less);
    }

    #[test]
    fn all_singular_is_selection_failure() {
        let x = DMatrix::from_row_slice(3, 1, &[1.0, 1.0, 1.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = select(Criterion::Bic, &[model(&[1])], &x, &y, &mut rng).unwrap_err();
        assert_eq!(err, ImputeError::SelectionFailure);
    }

    #[test]
    fn selection_invariant_to_scaling_y() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let x = DMatrix::from_fn(80, 5, |_, _| {
            Distribution::<f64>::sample(&StandardNormal, &mut rng)
        });
        let y = DVector::from_fn(80, |i, _| {
            x[(i, 0)] - 0.5 * x[(i, 1)] + Distribution::<f64>::sample(&StandardNormal, &mut rng)
        });
        let cands = nested_family(5, true);
        for crit in [Criterion::Aic, Criterion::Bic] {
            let a = select(crit, &cands, &x, &y, &mut rng).unwrap();
            let b = select(crit, &cands, &x, &(&y * 37.5), &mut rng).unwrap();
            assert_eq!(a.index, b.index);
        }
    }

    #[test]
    fn selection_matches_exhaustive_rescoring() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = DMatrix::from_fn(120, 8, |_, _| {
            Distribution::<f64>::sample(&StandardNormal, &mut rng)
        });
        let noise: Vec<f64> = (0..120)
            .map(|_| Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect();
        let y = DVector::from_fn(120, |i, _| {
            2.0 + x[(i, 0)] + 0.8 * x[(i, 1)] + 0.3 * x[(i, 2)] + noise[i]
        });
        let cands = nested_family(8, true);

        // normal equations, one candidate at a time
        let rss = |m: &ModelSpec| {
            let d = m.design_matrix(&x);
            let b = (d.transpose() * &d)
                .lu()
                .solve(&(d.transpose() * &y))
                .unwrap();
            (&y - &d * b).norm_squared()
        };
        let bic: Vec<f64> = cands
            .iter()
            .map(|m| 120.0 * (rss(m) / 120.0).ln() + 120f64.ln() * m.n_params() as f64)
            .collect();
        let best = (0..cands.len())
            .min_by(|&a, &b| bic[a].total_cmp(&bic[b]))
            .unwrap();
        assert_eq!(
            select(Criterion::Bic, &cands, &x, &y, &mut rng)
                .unwrap()
                .index,
            best
        );

        // cross-validation: each candidate has its own folds, replayed here
        let seeded = ChaCha8Rng::seed_from_u64(31);
        let mut replay = seeded.clone();
        let cv: Vec<f64> = cands
            .iter()
            .map(|m| {
                let folds = fold_assignment(120, 5, &mut replay);
                let mut total = 0.0;
                for f in 0..5 {
                    let train: Vec<usize> = (0..120).filter(|&i| folds[i] != f).collect();
                    let test: Vec<usize> = (0..120).filter(|&i| folds[i] == f).collect();
                    let d = m.design_matrix(&x).select_rows(&train);
                    let yt = y.select_rows(&train);
                    let b = (d.transpose() * &d)
                        .lu()
                        .solve(&(d.transpose() * yt))
                        .unwrap();
                    let dt = m.design_matrix(&x).select_rows(&test);
                    total += (y.select_rows(&test) - dt * b).norm_squared() / test.len() as f64;
                }
                total / 5.0
            })
            .collect();
        let sel = select(Criterion::KFold(5), &cands, &x, &y, &mut seeded.clone()).unwrap();
        for (a, b) in sel.scores.iter().zip(&cv) {
            assert!((a.unwrap() - b).abs() < 1e-9 * b);
        }
        let best = (0..cands.len())
            .min_by(|&a, &b| cv[a].total_cmp(&cv[b]))
            .unwrap();
        assert_eq!(sel.index, best);
    }
}
