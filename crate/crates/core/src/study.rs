//! Monte Carlo replication engine.
//!
//! Each replication regenerates the population, draws a sample, generates
//! nonresponse, evaluates every candidate model (imputed mean and oracle
//! loss) and runs every configured criterion end to end. Replication `b` uses
//! `ChaCha8Rng::seed_from_u64(master_seed)` moved to stream `b`, so results do
//! not depend on how replications are scheduled; aggregation folds the
//! records in replication order.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{draw_srswor, draw_stratified, stratum_sizes, SampleDraw, MIN_STRATUM_SAMPLE};
use crate::error::{ImputeError, Result};
use crate::estimator::{
    classify_model, fit_respondents, ht_mean, imputed_mean, ModelClass, ModelSpec, SurveyData,
};
use crate::loss::{loss_closed_form, LossValue};
use crate::popgen::{
    generate_population, generate_response, Population, PopulationSpec, ResponseMask,
};
use crate::selection::{select, Criterion};
use crate::variance::{estimate_for_model, EstimateBundle};

/// Sampling design of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DesignSpec {
    Srswor {
        sample_size: usize,
    },
    /// Units sorted ascending by `x'sort_coefficients` and cut into strata of
    /// the given population shares; bounded Neyman allocation on covariate
    /// `alloc_covariate` (1-based).
    Stratified {
        sample_size: usize,
        fractions: Vec<f64>,
        sort_coefficients: Vec<f64>,
        alloc_covariate: usize,
    },
}

impl DesignSpec {
    pub fn sample_size(&self) -> usize {
        match self {
            DesignSpec::Srswor { sample_size } | DesignSpec::Stratified { sample_size, .. } => {
                *sample_size
            }
        }
    }

    pub fn validate(&self, population_size: usize, covariates: usize) -> Result<()> {
        let n = self.sample_size();
        if n == 0 {
            return Err(ImputeError::Config(
                "design.sample_size must be positive".into(),
            ));
        }
        if n > population_size {
            return Err(ImputeError::Config(format!(
                "design.sample_size ({n}) exceeds population.size ({population_size})"
            )));
        }
        if let DesignSpec::Stratified {
            fractions,
            sort_coefficients,
            alloc_covariate,
            ..
        } = self
        {
            if sort_coefficients.len() != covariates {
                return Err(ImputeError::Config(format!(
                    "design.sort_coefficients has {} entries, expected {covariates}",
                    sort_coefficients.len()
                )));
            }
            if !(1..=covariates).contains(alloc_covariate) {
                return Err(ImputeError::Config(format!(
                    "design.alloc_covariate ({alloc_covariate}) outside 1..={covariates}"
                )));
            }
            let sizes = stratum_sizes(fractions, population_size)
                .map_err(|e| ImputeError::Config(format!("design.fractions: {e}")))?;
            if sizes.iter().any(|&s| s < MIN_STRATUM_SAMPLE) {
                return Err(ImputeError::Config(format!(
                    "design.fractions give a stratum with fewer than {MIN_STRATUM_SAMPLE} units"
                )));
            }
            if n < MIN_STRATUM_SAMPLE * sizes.len() {
                return Err(ImputeError::Config(format!(
                    "design.sample_size ({n}) below {MIN_STRATUM_SAMPLE} per stratum"
                )));
            }
        }
        Ok(())
    }

    pub fn draw<R: rand::Rng + ?Sized>(&self, pop: &Population, rng: &mut R) -> Result<SampleDraw> {
        match self {
            DesignSpec::Srswor { sample_size } => draw_srswor(pop.size(), *sample_size, rng),
            DesignSpec::Stratified {
                sample_size,
                fractions,
                sort_coefficients,
                alloc_covariate,
            } => {
                let key: Vec<f64> = (0..pop.size())
                    .map(|k| {
                        (0..pop.covariates())
                            .map(|j| pop.x[(k, j)] * sort_coefficients[j])
                            .sum()
                    })
                    .collect();
                let alloc: Vec<f64> = pop.x.column(alloc_covariate - 1).iter().copied().collect();
                draw_stratified(&key, &alloc, fractions, *sample_size, rng)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudySpec {
    pub population: PopulationSpec,
    pub design: DesignSpec,
    pub candidates: Vec<ModelSpec>,
    pub criteria: Vec<Criterion>,
    pub replications: usize,
    pub level: f64,
    pub master_seed: u64,
}

impl StudySpec {
    pub fn validate(&self) -> Result<()> {
        self.population.validate()?;
        self.design
            .validate(self.population.size, self.population.covariates)?;
        if self.candidates.is_empty() {
            return Err(ImputeError::Config(
                "candidates: at least one model required".into(),
            ));
        }
        for m in &self.candidates {
            if m.max_covariate() > self.population.covariates {
                return Err(ImputeError::Config(format!(
                    "candidates: model {m} uses covariate {} but the population has {}",
                    m.max_covariate(),
                    self.population.covariates
                )));
            }
        }
        if self.replications == 0 {
            return Err(ImputeError::Config("replications must be positive".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(ImputeError::Config(format!(
                "level ({}) must lie in (0, 1)",
                self.level
            )));
        }
        Ok(())
    }

    pub fn classes(&self) -> Vec<ModelClass> {
        let support = self.population.true_support();
        let intercept = self.population.beta[0] != 0.0;
        self.candidates
            .iter()
            .map(|m| classify_model(m, &support, intercept))
            .collect()
    }
}

/// Result of one candidate model in one replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelOutcome {
    pub mu_hat: f64,
    pub loss: LossValue,
}

/// Result of one criterion run end to end in one replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriterionOutcome {
    /// Index of the selected candidate.
    pub selected: usize,
    pub mu_hat: f64,
    pub v1: f64,
    pub v2: f64,
    pub v_total: f64,
    pub lower: f64,
    pub upper: f64,
    pub covered: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRecord {
    pub rep_id: u64,
    pub mu_true: f64,
    /// Complete-data Horvitz-Thompson mean of the sample.
    pub ht_full: f64,
    pub n_respondents: usize,
    /// One entry per candidate; `Err` holds the failure message.
    pub models: Vec<std::result::Result<ModelOutcome, String>>,
    /// One entry per criterion.
    pub criteria: Vec<std::result::Result<CriterionOutcome, String>>,
}

fn replication_rng(master_seed: u64, rep_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(rep_id);
    rng
}

/// Population, sample and observed data of replication `rep_id`.
pub fn replication_data(
    spec: &StudySpec,
    rep_id: u64,
) -> Result<(Population, SurveyData, ChaCha8Rng)> {
    let mut rng = replication_rng(spec.master_seed, rep_id);
    let pop = generate_population(&spec.population, &mut rng)?;
    let sample = spec.design.draw(&pop, &mut rng)?;
    let mask: ResponseMask = generate_response(&pop.resp_prob, &sample, &mut rng);
    let data = SurveyData::observe(&pop, &sample, &mask);
    Ok((pop, data, rng))
}

pub fn run_replication(spec: &StudySpec, rep_id: u64) -> Result<ReplicationRecord> {
    let (pop, data, mut rng) = replication_data(spec, rep_id)?;
    let y_full: Vec<f64> = data.sample.unit_ids.iter().map(|&k| pop.y[k]).collect();
    let ht_full = ht_mean(&data.sample, &y_full);
    let mu_true = pop.mean();

    let models = spec
        .candidates
        .iter()
        .map(|m| {
            let fit = fit_respondents(&data, m)?;
            let loss = loss_closed_form(&data, m, &pop.beta, pop.sigma)?;
            Ok(ModelOutcome {
                mu_hat: imputed_mean(&data, m, &fit),
                loss,
            })
        })
        .map(|r: Result<ModelOutcome>| r.map_err(|e| e.to_string()))
        .collect();

    let (x_r, y_r) = data.respondents();
    let mut cache: HashMap<usize, std::result::Result<EstimateBundle, String>> = HashMap::new();
    let criteria = spec
        .criteria
        .iter()
        .map(|&criterion| {
            let selection = select(criterion, &spec.candidates, &x_r, &y_r, &mut rng)
                .map_err(|e| e.to_string())?;
            let bundle = cache
                .entry(selection.index)
                .or_insert_with(|| {
                    estimate_for_model(&data, &selection.model, spec.level)
                        .map_err(|e| e.to_string())
                })
                .clone()?;
            Ok(CriterionOutcome {
                selected: selection.index,
                mu_hat: bundle.mu_hat,
                v1: bundle.variance.v1,
                v2: bundle.variance.v2,
                v_total: bundle.variance.v_total,
                lower: bundle.ci.lower,
                upper: bundle.ci.upper,
                covered: bundle.ci.contains(mu_true),
            })
        })
        .collect();

    Ok(ReplicationRecord {
        rep_id,
        mu_true,
        ht_full,
        n_respondents: data.n_respondents(),
        models,
        criteria,
    })
}

/// Runs all replications, on a dedicated pool of `threads` workers when given.
pub fn run_replications(
    spec: &StudySpec,
    threads: Option<usize>,
) -> Result<Vec<ReplicationRecord>> {
    spec.validate()?;
    let work = || {
        (0..spec.replications as u64)
            .into_par_iter()
            .map(|b| run_replication(spec, b))
            .collect::<Result<Vec<_>>>()
    };
    match threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build()
            .map_err(|e| ImputeError::Config(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    }
}

pub fn run_study(
    spec: &StudySpec,
    threads: Option<usize>,
) -> Result<(StudySummary, Vec<ReplicationRecord>)> {
    let records = run_replications(spec, threads)?;
    let summary = summarize(spec, &records)?;
    Ok((summary, records))
}

// ---- metrics ----

/// `100 (1/B) Σ (μ̂ - μ)/μ` over `(estimate, truth)` pairs.
pub fn relative_bias(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(ImputeError::Metric("relative bias of an empty set".into()));
    }
    if pairs.iter().any(|&(_, mu)| mu == 0.0) {
        return Err(ImputeError::Metric(
            "relative bias undefined for a zero true mean".into(),
        ));
    }
    let sum: f64 = pairs.iter().map(|&(est, mu)| (est - mu) / mu).sum();
    Ok(100.0 * sum / pairs.len() as f64)
}

/// `100 Σ (μ̂ - μ)² / Σ (μ̂_π - μ)²` over `(estimate, reference, truth)` triples.
pub fn relative_efficiency(triples: &[(f64, f64, f64)]) -> Result<f64> {
    let (num, den) = triples
        .iter()
        .fold((0.0, 0.0), |(a, b), &(est, reference, mu)| {
            (a + (est - mu).powi(2), b + (reference - mu).powi(2))
        });
    if den <= 0.0 {
        return Err(ImputeError::Metric(
            "reference estimator has zero Monte Carlo MSE".into(),
        ));
    }
    Ok(100.0 * num / den)
}

/// `100 (1/B) Σ 1(selected = target)`; failed replications count as misses.
pub fn identification_probability(selected: &[Option<usize>], target: usize) -> f64 {
    if selected.is_empty() {
        return 0.0;
    }
    100.0 * selected.iter().filter(|&&s| s == Some(target)).count() as f64 / selected.len() as f64
}

pub fn coverage_probability(covered: &[bool]) -> Result<f64> {
    if covered.is_empty() {
        return Err(ImputeError::Metric("coverage of an empty set".into()));
    }
    Ok(100.0 * covered.iter().filter(|&&c| c).count() as f64 / covered.len() as f64)
}

/// Sample variance with divisor `B - 1`.
pub fn sample_variance(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(ImputeError::Metric(
            "variance needs at least two replications".into(),
        ));
    }
    let b = values.len() as f64;
    let mean = values.iter().sum::<f64>() / b;
    Ok(values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b - 1.0))
}

/// `100 (1/B) Σ (v^{(b)} - V_MC)/V_MC`, with `V_MC` the sample variance of
/// `errors` (estimate minus the replication's true mean).
pub fn variance_rb(v_total: &[f64], errors: &[f64]) -> Result<f64> {
    let v_mc = sample_variance(errors)?;
    if v_mc == 0.0 {
        return Err(ImputeError::Metric("Monte Carlo variance is zero".into()));
    }
    let mean_v = v_total.iter().sum::<f64>() / v_total.len() as f64;
    Ok(100.0 * (mean_v - v_mc) / v_mc)
}

/// `(1/B) Σ (μ̂_α - μ̂_π)²` over `(estimate, complete-data HT)` pairs, on the
/// scale of the mean (no `N` factor).
pub fn mc_loss(pairs: &[(f64, f64)]) -> f64 {
    if pairs.is_empty() {
        return f64::NAN;
    }
    pairs.iter().map(|(a, b)| (a - b).powi(2)).sum::<f64>() / pairs.len() as f64
}

// ---- summary ----

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSummary {
    pub label: String,
    pub class: ModelClass,
    pub rb: Option<f64>,
    pub re: Option<f64>,
    pub loss: Option<f64>,
    /// Mean closed-form oracle loss `l1 + l2`.
    pub oracle_loss: Option<f64>,
    /// Percentage of replications in which the fit failed.
    pub failures: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionSummary {
    pub criterion: Criterion,
    pub rb: Option<f64>,
    pub re: Option<f64>,
    pub freq_wrong: f64,
    pub freq_true: f64,
    pub freq_overfit: f64,
    pub cp: Option<f64>,
    pub var_rb: Option<f64>,
    /// Percentage of replications where selection or estimation failed.
    pub failures: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudySummary {
    pub replications: usize,
    pub population_size: usize,
    pub models: Vec<ModelSummary>,
    pub criteria: Vec<CriterionSummary>,
}

pub fn summarize(spec: &StudySpec, records: &[ReplicationRecord]) -> Result<StudySummary> {
    let b = records.len();
    if b == 0 {
        return Err(ImputeError::Metric("no replications".into()));
    }
    let pct = |count: usize| 100.0 * count as f64 / b as f64;
    let classes = spec.classes();
    let n_pop = spec.population.size;

    let models = spec
        .candidates
        .iter()
        .enumerate()
        .map(|(j, m)| {
            let ok: Vec<(&ReplicationRecord, &ModelOutcome)> = records
                .iter()
                .filter_map(|r| r.models[j].as_ref().ok().map(|o| (r, o)))
                .collect();
            let pairs: Vec<(f64, f64)> = ok.iter().map(|(r, o)| (o.mu_hat, r.mu_true)).collect();
            let triples: Vec<(f64, f64, f64)> = ok
                .iter()
                .map(|(r, o)| (o.mu_hat, r.ht_full, r.mu_true))
                .collect();
            let gaps: Vec<(f64, f64)> = ok.iter().map(|(r, o)| (o.mu_hat, r.ht_full)).collect();
            ModelSummary {
                label: m.label(),
                class: classes[j],
                rb: relative_bias(&pairs).ok(),
                re: relative_efficiency(&triples).ok(),
                loss: (!ok.is_empty()).then(|| mc_loss(&gaps)),
                oracle_loss: (!ok.is_empty())
                    .then(|| ok.iter().map(|(_, o)| o.loss.total).sum::<f64>() / ok.len() as f64),
                failures: pct(b - ok.len()),
            }
        })
        .collect();

    let criteria = spec
        .criteria
        .iter()
        .enumerate()
        .map(|(c, &criterion)| {
            let ok: Vec<(&ReplicationRecord, &CriterionOutcome)> = records
                .iter()
                .filter_map(|r| r.criteria[c].as_ref().ok().map(|o| (r, o)))
                .collect();
            let count = |class: ModelClass| {
                ok.iter()
                    .filter(|(_, o)| classes[o.selected] == class)
                    .count()
            };
            let pairs: Vec<(f64, f64)> = ok.iter().map(|(r, o)| (o.mu_hat, r.mu_true)).collect();
            let triples: Vec<(f64, f64, f64)> = ok
                .iter()
                .map(|(r, o)| (o.mu_hat, r.ht_full, r.mu_true))
                .collect();
            let covered: Vec<bool> = ok.iter().map(|(_, o)| o.covered).collect();
            let v_total: Vec<f64> = ok.iter().map(|(_, o)| o.v_total).collect();
            let errors: Vec<f64> = ok.iter().map(|(r, o)| o.mu_hat - r.mu_true).collect();
            CriterionSummary {
                criterion,
                rb: relative_bias(&pairs).ok(),
                re: relative_efficiency(&triples).ok(),
                freq_wrong: pct(count(ModelClass::Wrong)),
                freq_true: pct(count(ModelClass::True)),
                freq_overfit: pct(count(ModelClass::CorrectOverfit)),
                cp: coverage_probability(&covered).ok(),
                var_rb: variance_rb(&v_total, &errors).ok(),
                failures: pct(b - ok.len()),
            }
        })
        .collect();

    Ok(StudySummary {
        replications: b,
        population_size: n_pop,
        models,
        criteria,
    })
}

/// Rounds to 10 significant digits and prints the shortest representation.
pub fn format_sig(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    format!("{x:.9e}")
        .parse::<f64>()
        .map(|v| v.to_string())
        .unwrap_or_else(|_| x.to_string())
}

fn opt(x: Option<f64>) -> String {
    x.map(format_sig).unwrap_or_default()
}

pub const SUMMARY_COLUMNS: [&str; 11] = [
    "scope",
    "name",
    "RB",
    "RE",
    "loss",
    "freqW",
    "freqTrue",
    "freqOverfit",
    "CP",
    "varRB",
    "failures",
];

impl StudySummary {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| ImputeError::Config(format!("writing summary: {e}"));
        w.write_record(SUMMARY_COLUMNS).map_err(io)?;
        for m in &self.models {
            w.write_record([
                "model".to_string(),
                m.label.clone(),
                opt(m.rb),
                opt(m.re),
                opt(m.loss),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                format_sig(m.failures),
            ])
            .map_err(io)?;
        }
        for c in &self.criteria {
            w.write_record([
                "criterion".to_string(),
                c.criterion.to_string(),
                opt(c.rb),
                opt(c.re),
                String::new(),
                format_sig(c.freq_wrong),
                format_sig(c.freq_true),
                format_sig(c.freq_overfit),
                opt(c.cp),
                opt(c.var_rb),
                format_sig(c.failures),
            ])
            .map_err(io)?;
        }
        w.flush()
            .map_err(|e| ImputeError::Config(format!("writing summary: {e}")))?;
        Ok(())
    }

    /// Fixed-width table for terminals.
    pub fn render(&self) -> String {
        let cell = |x: Option<f64>| x.map(|v| format!("{v:.1}")).unwrap_or_else(|| "-".into());
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} replications, N = {}",
            self.replications, self.population_size
        );
        let _ = writeln!(
            s,
            "{:<14} {:>8} {:>8} {:>10} {:>6}",
            "model", "RB%", "RE%", "loss", "fail%"
        );
        for m in &self.models {
            let _ = writeln!(
                s,
                "{:<14} {:>8} {:>8} {:>10} {:>6.1}",
                m.label,
                cell(m.rb),
                cell(m.re),
                cell(m.loss),
                m.failures
            );
        }
        let _ = writeln!(
            s,
            "\n{:<14} {:>8} {:>8} {:>7} {:>7} {:>7} {:>7} {:>7} {:>6}",
            "criterion", "RB%", "RE%", "W%", "true%", "over%", "CP%", "varRB%", "fail%"
        );
        for c in &self.criteria {
            let _ = writeln!(
                s,
                "{:<14} {:>8} {:>8} {:>7.1} {:>7.1} {:>7.1} {:>7} {:>7} {:>6.1}",
                c.criterion.to_string(),
                cell(c.rb),
                cell(c.re),
                c.freq_wrong,
                c.freq_true,
                c.freq_overfit,
                cell(c.cp),
                cell(c.var_rb),
                c.failures
            );
        }
        s
    }

    /// Largest per-criterion failure share, as a fraction.
    pub fn failure_rate(&self) -> f64 {
        self.criteria
            .iter()
            .map(|c| c.failures / 100.0)
            .fold(0.0, f64::max)
    }
}

pub const REPS_COLUMNS: [&str; 17] = [
    "rep_id",
    "scope",
    "name",
    "mu_true",
    "ht_full",
    "n_respondents",
    "mu_hat",
    "l1",
    "l2",
    "selected",
    "v1",
    "v2",
    "v_total",
    "lower",
    "upper",
    "covered",
    "failure",
];

/// Raw records in long format: one row per replication and model or criterion.
pub fn write_reps_csv<W: Write>(
    spec: &StudySpec,
    records: &[ReplicationRecord],
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| ImputeError::Config(format!("writing replications: {e}"));
    w.write_record(REPS_COLUMNS).map_err(io)?;
    for r in records {
        let head = |scope: &str, name: String| {
            vec![
                r.rep_id.to_string(),
                scope.to_string(),
                name,
                format_sig(r.mu_true),
                format_sig(r.ht_full),
                r.n_respondents.to_string(),
            ]
        };
        for (m, outcome) in spec.candidates.iter().zip(&r.models) {
            let mut row = head("model", m.label());
            match outcome {
                Ok(o) => {
                    row.extend([
                        format_sig(o.mu_hat),
                        format_sig(o.loss.l1),
                        format_sig(o.loss.l2),
                    ]);
                    row.extend(std::iter::repeat_n(String::new(), 7));
                    row.push(String::new());
                }
                Err(e) => {
                    row.extend(std::iter::repeat_n(String::new(), 10));
                    row.push(e.clone());
                }
            }
            w.write_record(&row).map_err(io)?;
        }
        for (c, outcome) in spec.criteria.iter().zip(&r.criteria) {
            let mut row = head("criterion", c.to_string());
            match outcome {
                Ok(o) => {
                    row.extend([format_sig(o.mu_hat), String::new(), String::new()]);
                    row.push(spec.candidates[o.selected].label());
                    row.extend([o.v1, o.v2, o.v_total, o.lower, o.upper].map(format_sig));
                    row.push(u8::from(o.covered).to_string());
                    row.push(String::new());
                }
                Err(e) => {
                    row.extend(std::iter::repeat_n(String::new(), 10));
                    row.push(e.clone());
                }
            }
            w.write_record(&row).map_err(io)?;
        }
    }
    w.flush()
        .map_err(|e| ImputeError::Config(format!("writing replications: {e}")))?;
    Ok(())
}
