//! Command-line front end: JSON study configuration, the `simulate` and
//! `estimate` commands, and CSV import/export of survey samples.
//!
//! Sample CSV layout: `unit_id,x1,...,xp,y,pi[,stratum]`, where an empty `y`
//! marks a nonrespondent. The population size is recovered from the
//! inclusion probabilities (`N = n/π` overall, or per stratum).

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::design::{DesignDescriptor, SampleDraw};
use crate::error::ImputeError;
use crate::estimator::{nested_family, ModelSpec, SurveyData};
use crate::popgen::{CovariateLaw, PopulationSpec, ResponseModel};
use crate::selection::Criterion;
use crate::study::{self, format_sig, DesignSpec, StudySpec};
use crate::variance::estimate_with_inference;

pub const SEED_ENV: &str = "SURVEY_IMPUTE_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationConfig {
    pub size: usize,
    pub covariates: usize,
    pub law: CovariateLaw,
    /// Intercept first, then one slope per covariate.
    pub beta: Vec<f64>,
    pub sigma: f64,
    pub response: ResponseModel,
}

impl From<&PopulationConfig> for PopulationSpec {
    fn from(c: &PopulationConfig) -> Self {
        PopulationSpec {
            size: c.size,
            covariates: c.covariates,
            law: c.law,
            beta: c.beta.clone(),
            sigma: c.sigma,
            response: c.response.clone(),
        }
    }
}

/// Either `{"preset": "nested"}` or `{"subsets": [[1], [1, 2], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidatesConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsets: Option<Vec<Vec<usize>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_summary")]
    pub summary: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reps: Option<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            summary: default_summary(),
            reps: None,
        }
    }
}

fn default_summary() -> String {
    "summary.csv".into()
}

fn default_true() -> bool {
    true
}

fn default_level() -> f64 {
    0.95
}

fn default_max_failure_rate() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub population: PopulationConfig,
    pub design: DesignSpec,
    pub candidates: CandidatesConfig,
    #[serde(default = "default_true")]
    pub intercept: bool,
    /// `"aic"`, `"bic"` or `"cvK"`.
    pub criteria: Vec<String>,
    pub replications: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    pub master_seed: u64,
    /// Largest tolerated share of failed replications for any criterion.
    #[serde(default = "default_max_failure_rate")]
    pub max_failure_rate: f64,
    #[serde(default)]
    pub output: OutputConfig,
}

impl StudyConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn candidates(&self) -> Result<Vec<ModelSpec>, ImputeError> {
        match (&self.candidates.preset, &self.candidates.subsets) {
            (Some(p), None) if p == "nested" => {
                Ok(nested_family(self.population.covariates, self.intercept))
            }
            (Some(p), None) => Err(ImputeError::Config(format!(
                "candidates.preset: unknown preset {p:?}"
            ))),
            (None, Some(sets)) => sets
                .iter()
                .map(|s| ModelSpec::new(s.clone(), self.intercept))
                .collect::<Result<Vec<_>, _>>(),
            _ => Err(ImputeError::Config(
                "candidates: give exactly one of preset or subsets".into(),
            )),
        }
    }

    pub fn criteria(&self) -> Result<Vec<Criterion>, ImputeError> {
        if self.criteria.is_empty() {
            return Err(ImputeError::Config(
                "criteria: at least one criterion required".into(),
            ));
        }
        self.criteria.iter().map(|c| c.parse()).collect()
    }

    /// Validated study specification.
    pub fn to_spec(&self) -> Result<StudySpec, ImputeError> {
        if !(0.0..=1.0).contains(&self.max_failure_rate) {
            return Err(ImputeError::Config(format!(
                "max_failure_rate ({}) must lie in [0, 1]",
                self.max_failure_rate
            )));
        }
        let spec = StudySpec {
            population: (&self.population).into(),
            design: self.design.clone(),
            candidates: self.candidates()?,
            criteria: self.criteria()?,
            replications: self.replications,
            level: self.level,
            master_seed: self.master_seed,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Failure with the process exit status it maps to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub const CONFIG: u8 = 2;
    pub const FAILURE_RATE: u8 = 3;
    pub const IO: u8 = 1;

    fn config(message: String) -> Self {
        CliError {
            code: Self::CONFIG,
            message,
        }
    }

    fn io(message: String) -> Self {
        CliError {
            code: Self::IO,
            message,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<ImputeError> for CliError {
    fn from(e: ImputeError) -> Self {
        CliError::config(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "survey-impute",
    version,
    about = "Regression imputation with model selection for survey data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a Monte Carlo study and write summary tables.
    Simulate(SimulateArgs),
    /// Select a model, impute and estimate the variance on one sample file.
    Estimate(EstimateArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Validate and print the resolved configuration without running.
    #[arg(long)]
    pub dry_run: bool,
    /// Also write raw replication records to this file.
    #[arg(long)]
    pub reps_out: Option<PathBuf>,
    /// Write the observed sample of this replication as a CSV into the output
    /// directory and skip the study.
    #[arg(long, value_name = "REP")]
    pub export_sample: Option<u64>,
    /// Overrides master_seed.
    #[arg(long, env = SEED_ENV)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    /// Also write the JSON result to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides master_seed (used for cross-validation folds).
    #[arg(long, env = SEED_ENV)]
    pub seed: Option<u64>,
}

pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(&args, stdout),
        Command::Estimate(args) => cmd_estimate(&args, stdout),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(format!("cannot create {}: {e}", path.display())))
}

fn out_err(e: io::Error) -> CliError {
    CliError::io(format!("write failed: {e}"))
}

pub fn cmd_simulate(args: &SimulateArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let mut config = StudyConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    let spec = config.to_spec()?;
    if args.dry_run {
        let echo =
            serde_json::to_string_pretty(&config).map_err(|e| CliError::io(e.to_string()))?;
        writeln!(stdout, "{echo}").map_err(out_err)?;
        return Ok(());
    }
    if let Some(rep) = args.export_sample {
        let (_, data, _) = study::replication_data(&spec, rep)?;
        let path = args.out_dir.join(format!("sample_rep{rep}.csv"));
        write_sample_csv(&data, create(&path)?)?;
        writeln!(stdout, "wrote {}", path.display()).map_err(out_err)?;
        return Ok(());
    }

    let (summary, records) = study::run_study(&spec, args.threads)?;
    let summary_path = args.out_dir.join(&config.output.summary);
    summary.write_csv(create(&summary_path)?)?;
    let reps_path = args
        .reps_out
        .clone()
        .or_else(|| config.output.reps.as_ref().map(|r| args.out_dir.join(r)));
    if let Some(path) = reps_path {
        study::write_reps_csv(&spec, &records, create(&path)?)?;
    }
    write!(stdout, "{}", summary.render()).map_err(out_err)?;

    let rate = summary.failure_rate();
    if rate > config.max_failure_rate {
        return Err(CliError {
            code: CliError::FAILURE_RATE,
            message: format!(
                "failure rate {} exceeds max_failure_rate {}",
                format_sig(rate),
                config.max_failure_rate
            ),
        });
    }
    Ok(())
}

/// Writes `data` in the sample CSV layout with full float precision.
pub fn write_sample_csv<W: Write>(data: &SurveyData, out: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| CliError::io(format!("writing sample: {e}"));
    let design = &data.sample.design;
    let stratified = design.strata().len() > 1;
    let p = data.covariates();
    let mut header = vec!["unit_id".to_string()];
    header.extend((1..=p).map(|j| format!("x{j}")));
    header.extend(["y".to_string(), "pi".to_string()]);
    if stratified {
        header.push("stratum".into());
    }
    w.write_record(&header).map_err(err)?;

    let mut rows: Vec<usize> = (0..data.n()).collect();
    if stratified {
        rows.sort_by_key(|&i| design.stratum_of(data.sample.unit_ids[i]));
    }
    for i in rows {
        let k = data.sample.unit_ids[i];
        let mut rec = vec![k.to_string()];
        rec.extend((0..p).map(|j| data.x[(i, j)].to_string()));
        rec.push(if data.responded[i] {
            data.y[i].to_string()
        } else {
            String::new()
        });
        rec.push(data.sample.pi[i].to_string());
        if stratified {
            rec.push((design.stratum_of(k).unwrap_or(0) + 1).to_string());
        }
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(out_err)
}

struct SampleRow {
    x: Vec<f64>,
    y: Option<f64>,
    pi: f64,
    stratum: Option<String>,
}

/// Parses a sample CSV and rebuilds the design. SRSWOR samples use
/// `N = n/π`; stratified samples need a `stratum` column and use
/// `N_h = n_h/π_h`. Rows are grouped by stratum (label order) for the
/// stratified design and kept in file order otherwise.
pub fn read_sample_csv<R: Read>(input: R, design: &DesignSpec) -> Result<SurveyData, CliError> {
    let bad = |m: String| CliError::config(format!("data: {m}"));
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let y_col = col("y").ok_or_else(|| bad("missing y column".into()))?;
    let pi_col = col("pi").ok_or_else(|| bad("missing pi column".into()))?;
    let stratum_col = col("stratum");
    let mut x_cols = Vec::new();
    while let Some(c) = col(&format!("x{}", x_cols.len() + 1)) {
        x_cols.push(c);
    }
    if x_cols.is_empty() {
        return Err(bad("no covariate columns x1..xp".into()));
    }

    let mut rows = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let at = line + 2;
        let num = |c: usize, what: &str| -> Result<f64, CliError> {
            let field = rec.get(c).unwrap_or("").trim();
            field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(format!("line {at}: invalid {what} {field:?}")))
        };
        let x = x_cols
            .iter()
            .enumerate()
            .map(|(j, &c)| num(c, &format!("x{}", j + 1)))
            .collect::<Result<Vec<_>, _>>()?;
        let y = match rec.get(y_col).unwrap_or("").trim() {
            "" => None,
            _ => Some(num(y_col, "y")?),
        };
        let pi = num(pi_col, "pi")?;
        if !(pi > 0.0 && pi <= 1.0) {
            return Err(bad(format!("line {at}: pi {pi} outside (0, 1]")));
        }
        let stratum = stratum_col.map(|c| rec.get(c).unwrap_or("").trim().to_string());
        rows.push(SampleRow { x, y, pi, stratum });
    }
    if rows.is_empty() {
        return Err(bad("no rows".into()));
    }
    if rows.iter().all(|r| r.y.is_none()) {
        return Err(bad(
            "y is missing for every unit; at least one respondent is required".into(),
        ));
    }

    let (descriptor, ordered): (DesignDescriptor, Vec<SampleRow>) = match design {
        DesignSpec::Srswor { .. } => {
            let n = rows.len();
            let big_n = infer_size(n, &rows, "sample")?;
            (DesignDescriptor::srswor(big_n, n)?, rows)
        }
        DesignSpec::Stratified { .. } => {
            if stratum_col.is_none() {
                return Err(bad("stratified design requires a stratum column".into()));
            }
            let mut groups: BTreeMap<StratumKey, Vec<SampleRow>> = BTreeMap::new();
            for r in rows {
                let key = StratumKey::new(r.stratum.clone().unwrap_or_default());
                groups.entry(key).or_default().push(r);
            }
            let mut sizes = Vec::new();
            let mut ordered = Vec::new();
            for (key, group) in groups {
                let n_h = group.len();
                sizes.push((infer_size(n_h, &group, &format!("stratum {}", key.0))?, n_h));
                ordered.extend(group);
            }
            (DesignDescriptor::stratified_from_sizes(&sizes)?, ordered)
        }
    };

    // units of each stratum are the leading ids of its block
    let mut ids = Vec::with_capacity(ordered.len());
    let mut offset = 0;
    for s in descriptor.strata() {
        ids.extend(offset..offset + s.sample_size);
        offset += s.units.len();
    }
    if descriptor.strata().is_empty() {
        ids.extend(0..ordered.len());
    }
    let p = x_cols.len();
    let x = DMatrix::from_fn(ordered.len(), p, |i, j| ordered[i].x[j]);
    let y = ordered.iter().map(|r| r.y).collect();
    let sample = SampleDraw::from_units(Arc::new(descriptor), ids)?;
    Ok(SurveyData::new(x, y, sample)?)
}

/// Numeric stratum labels sort numerically and before other labels, which
/// sort lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
struct StratumKey(String, Option<i64>);

impl StratumKey {
    fn new(label: String) -> Self {
        let num = label.parse().ok();
        StratumKey(label, num)
    }
}

impl Ord for StratumKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        let rank = |k: &Self| (k.1.is_none(), k.1, k.0.clone());
        rank(self).cmp(&rank(other))
    }
}

impl PartialOrd for StratumKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

fn infer_size(n: usize, rows: &[SampleRow], what: &str) -> Result<usize, CliError> {
    let pi = rows[0].pi;
    if rows.iter().any(|r| (r.pi - pi).abs() > 1e-9 * pi) {
        return Err(CliError::config(format!(
            "data: {what} has unequal pi values; not an equal-probability design"
        )));
    }
    let big_n = (n as f64 / pi).round() as usize;
    if big_n < n || ((n as f64 / big_n as f64) - pi).abs() > 1e-9 * pi {
        return Err(CliError::config(format!(
            "data: pi {pi} of {what} is not n/N for an integer N (n = {n})"
        )));
    }
    Ok(big_n)
}

pub fn cmd_estimate(args: &EstimateArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let mut config = StudyConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    let candidates = config.candidates()?;
    let criteria = config.criteria()?;
    if !(config.level > 0.0 && config.level < 1.0) {
        return Err(CliError::config(format!(
            "level ({}) must lie in (0, 1)",
            config.level
        )));
    }
    let file = File::open(&args.data)
        .map_err(|e| CliError::config(format!("cannot read data {}: {e}", args.data.display())))?;
    let data = read_sample_csv(file, &config.design)?;
    let result = estimate_json(
        &data,
        &candidates,
        &criteria,
        config.level,
        config.master_seed,
    )?;
    let text = serde_json::to_string_pretty(&result).map_err(|e| CliError::io(e.to_string()))?;
    writeln!(stdout, "{text}").map_err(out_err)?;
    if let Some(path) = &args.out {
        let mut f = create(path)?;
        writeln!(f, "{text}").map_err(out_err)?;
    }
    Ok(())
}

fn num(x: f64) -> serde_json::Value {
    serde_json::Number::from_f64(format_sig(x).parse().unwrap_or(x))
        .map(serde_json::Value::Number)
        .unwrap_or(serde_json::Value::Null)
}

/// Runs every criterion on `data` (cross-validation folds drawn from
/// `ChaCha8Rng::seed_from_u64(seed)`, criteria in order) and collects the
/// results as JSON with 10 significant digits.
pub fn estimate_json(
    data: &SurveyData,
    candidates: &[ModelSpec],
    criteria: &[Criterion],
    level: f64,
    seed: u64,
) -> Result<serde_json::Value, CliError> {
    for m in candidates {
        if m.max_covariate() > data.covariates() {
            return Err(CliError::config(format!(
                "candidates: model {m} uses covariate {} but the data has {}",
                m.max_covariate(),
                data.covariates()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut results = Vec::new();
    for &criterion in criteria {
        let b = estimate_with_inference(data, candidates, criterion, level, &mut rng)
            .map_err(|e| CliError::config(format!("{criterion}: {e}")))?;
        results.push(json!({
            "criterion": criterion.to_string(),
            "selected": b.model.label(),
            "mu_hat": num(b.mu_hat),
            "v1": num(b.variance.v1),
            "v2": num(b.variance.v2),
            "v_total": num(b.variance.v_total),
            "ci_lower": num(b.ci.lower),
            "ci_upper": num(b.ci.upper),
        }));
    }
    Ok(json!({
        "population_size": data.population_size(),
        "sample_size": data.n(),
        "respondents": data.n_respondents(),
        "level": level,
        "results": results,
    }))
}
