//! Finite populations drawn from a homoscedastic linear superpopulation model,
//! and missing-at-random response indicators for a selected sample.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::design::SampleDraw;
use crate::error::{ImputeError, Result};

/// Law of each (i.i.d.) covariate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CovariateLaw {
    /// Gamma with mean `shape * scale`.
    Gamma {
        shape: f64,
        scale: f64,
    },
    Normal {
        mean: f64,
        sd: f64,
    },
    Uniform {
        low: f64,
        high: f64,
    },
}

enum CovariateSampler {
    Gamma(Gamma<f64>),
    Normal(Normal<f64>),
    Uniform(Uniform<f64>),
}

impl CovariateSampler {
    fn new(law: CovariateLaw) -> Result<Self> {
        let bad = |what: &str| ImputeError::Config(format!("invalid covariate law: {what}"));
        Ok(match law {
            CovariateLaw::Gamma { shape, scale } => {
                Self::Gamma(Gamma::new(shape, scale).map_err(|e| bad(&e.to_string()))?)
            }
            CovariateLaw::Normal { mean, sd } => {
                Self::Normal(Normal::new(mean, sd).map_err(|e| bad(&e.to_string()))?)
            }
            CovariateLaw::Uniform { low, high } => {
                Self::Uniform(Uniform::new(low, high).map_err(|e| bad(&e.to_string()))?)
            }
        })
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Gamma(d) => d.sample(rng),
            Self::Normal(d) => d.sample(rng),
            Self::Uniform(d) => d.sample(rng),
        }
    }
}

/// Logistic response propensity `p(x) = logistic(scale * (offset + x'zeta))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseModel {
    pub offset: f64,
    pub scale: f64,
    pub zeta: Vec<f64>,
}

impl ResponseModel {
    pub fn propensity(&self, x: impl Iterator<Item = f64>) -> f64 {
        let index: f64 = self.offset + x.zip(&self.zeta).map(|(a, z)| a * z).sum::<f64>();
        1.0 / (1.0 + (-self.scale * index).exp())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSpec {
    pub size: usize,
    pub covariates: usize,
    pub law: CovariateLaw,
    /// Intercept first, then one coefficient per covariate.
    pub beta: Vec<f64>,
    pub sigma: f64,
    pub response: ResponseModel,
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<()> {
        let p = self.covariates;
        if self.size == 0 || p == 0 {
            return Err(ImputeError::Config(
                "population size and covariate count must be positive".into(),
            ));
        }
        if self.beta.len() != p + 1 {
            return Err(ImputeError::Config(format!(
                "beta has {} entries, expected {} (intercept + {p} covariates)",
                self.beta.len(),
                p + 1
            )));
        }
        if self.response.zeta.len() != p {
            return Err(ImputeError::Config(format!(
                "zeta has {} entries, expected {p}",
                self.response.zeta.len()
            )));
        }
        let finite = self
            .beta
            .iter()
            .chain(&self.response.zeta)
            .all(|v| v.is_finite())
            && self.response.offset.is_finite()
            && self.response.scale.is_finite()
            && self.sigma.is_finite();
        if !finite {
            return Err(ImputeError::Config(
                "non-finite population parameter".into(),
            ));
        }
        if self.sigma < 0.0 {
            return Err(ImputeError::Config("sigma must be non-negative".into()));
        }
        CovariateSampler::new(self.law).map(|_| ())
    }

    /// Covariate indices (1-based) with non-zero slope.
    pub fn true_support(&self) -> Vec<usize> {
        support_of(&self.beta)
    }
}

fn support_of(beta: &[f64]) -> Vec<usize> {
    (1..beta.len()).filter(|&j| beta[j] != 0.0).collect()
}

/// One realized finite population. `x` holds the `p` non-constant covariates
/// (N x p); the intercept is implicit.
#[derive(Debug, Clone)]
pub struct Population {
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    pub beta: Vec<f64>,
    pub sigma: f64,
    pub resp_prob: Vec<f64>,
    pub true_support: Vec<usize>,
}

impl Population {
    pub fn size(&self) -> usize {
        self.y.len()
    }

    pub fn covariates(&self) -> usize {
        self.x.ncols()
    }

    pub fn mean(&self) -> f64 {
        self.y.iter().sum::<f64>() / self.y.len() as f64
    }

    /// Conditional mean `beta_0 + x_k' beta` of unit `k`.
    pub fn regression_mean(&self, k: usize) -> f64 {
        self.beta[0]
            + (0..self.covariates())
                .map(|j| self.x[(k, j)] * self.beta[j + 1])
                .sum::<f64>()
    }

    /// Model error `y_k - (beta_0 + x_k' beta)`.
    pub fn error(&self, k: usize) -> f64 {
        self.y[k] - self.regression_mean(k)
    }

    pub fn intercept_active(&self) -> bool {
        self.beta[0] != 0.0
    }
}

/// Draws a population unit by unit: the `p` covariates, then the error.
pub fn generate_population<R: Rng + ?Sized>(
    spec: &PopulationSpec,
    rng: &mut R,
) -> Result<Population> {
    spec.validate()?;
    let (n, p) = (spec.size, spec.covariates);
    let sampler = CovariateSampler::new(spec.law)?;
    let noise = Normal::new(0.0, spec.sigma).map_err(|e| ImputeError::Config(e.to_string()))?;

    let mut rows = Vec::with_capacity(n * p);
    let mut y = Vec::with_capacity(n);
    let mut resp_prob = Vec::with_capacity(n);
    for _ in 0..n {
        let start = rows.len();
        rows.extend((0..p).map(|_| sampler.sample(rng)));
        let xk = &rows[start..];
        let mean = spec.beta[0]
            + xk.iter()
                .zip(&spec.beta[1..])
                .map(|(a, b)| a * b)
                .sum::<f64>();
        y.push(mean + noise.sample(rng));
        resp_prob.push(spec.response.propensity(xk.iter().copied()));
    }
    Ok(Population {
        x: DMatrix::from_row_slice(n, p, &rows),
        y,
        beta: spec.beta.clone(),
        sigma: spec.sigma,
        resp_prob,
        true_support: spec.true_support(),
    })
}

/// Response indicators for the sampled units, in sample order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseMask {
    pub r: Vec<bool>,
}

impl ResponseMask {
    pub fn respondents(&self) -> usize {
        self.r.iter().filter(|&&r| r).count()
    }

    pub fn nonrespondents(&self) -> usize {
        self.r.len() - self.respondents()
    }
}

/// Independent Bernoulli(`resp_prob[k]`) draws for each sampled unit. Only
/// the propensities are visible here, so the mechanism cannot depend on `y`.
pub fn generate_response<R: Rng + ?Sized>(
    resp_prob: &[f64],
    sample: &SampleDraw,
    rng: &mut R,
) -> ResponseMask {
    let r = sample
        .unit_ids
        .iter()
        .map(|&k| rng.random::<f64>() < resp_prob[k])
        .collect();
    ResponseMask { r }
}
