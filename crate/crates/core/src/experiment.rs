//! Simulation experiments: generate data, sketch it, estimate, and compare to
//! the truth, one CSV row per (model, n, repetition, estimator).
//!
//! A run is fully determined by its config. Each (model, repetition) pair draws
//! one sample of the largest `n` from its own seed stream and one random hash;
//! the smaller sample sizes are prefixes of that sample.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dp::{dp_report, ThetaSource, DEFAULT_THETA_BOUNDS};
use crate::error::{Error, Result};
use crate::genmodel::{
    sample_pyp_sequence, sample_pyp_urn, sample_zipf_sequence, AtomWeights, GeneratorMeta,
    PriorParams, RawSample,
};
use crate::oracle::{good_turing, partition_stats_of, true_coverage_all};
use crate::pyp::{pyp_report, wasserstein_fit, Debias, PypMethod, WassersteinConfig, DEFAULT_EXACT_CAP};
use crate::report::{EstimateReport, PriorSource};
use crate::rng::{derive_seed, stream_rng};
use crate::sketch::HashSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Sampler {
    #[default]
    StickBreaking,
    Urn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    Dp {
        theta: f64,
        #[serde(default)]
        sampler: Sampler,
    },
    Pyp {
        alpha: f64,
        theta: f64,
        #[serde(default)]
        sampler: Sampler,
    },
    Zipf {
        exponent: f64,
        vocab: u64,
    },
    /// Iid draws from the empirical distribution of a token file (one token
    /// per line). Relative paths resolve against the config file.
    File {
        path: PathBuf,
    },
}

impl ModelSpec {
    pub fn label(&self) -> String {
        match self {
            ModelSpec::Dp { .. } => "dp".into(),
            ModelSpec::Pyp { .. } => "pyp".into(),
            ModelSpec::Zipf { exponent, .. } => format!("zipf-{exponent}"),
            ModelSpec::File { path } => format!(
                "file-{}",
                path.file_name().map(|s| s.to_string_lossy()).unwrap_or_default()
            ),
        }
    }

    pub fn true_params(&self) -> Option<PriorParams> {
        match self {
            ModelSpec::Dp { theta, .. } => Some(PriorParams { alpha: 0.0, theta: *theta }),
            ModelSpec::Pyp { alpha, theta, .. } => Some(PriorParams { alpha: *alpha, theta: *theta }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorKind {
    Dp,
    Pyp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitKind {
    /// Use the `alpha`/`theta` given in the estimator block.
    None,
    /// Use the data-generating parameters.
    Oracle,
    EbMle,
    EbWasserstein,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodKind {
    Exact,
    Mc,
    Asymptotic,
    /// Exact up to the cap, Monte Carlo beyond it.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSpec {
    pub prior: PriorKind,
    pub fit: FitKind,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default = "default_method")]
    pub method: MethodKind,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: u64,
    #[serde(default)]
    pub debias: Debias,
    #[serde(default = "default_cap")]
    pub exact_cap: u64,
    #[serde(default = "default_bounds")]
    pub theta_bounds: (f64, f64),
    #[serde(default)]
    pub wasserstein: Option<WassersteinConfig>,
}

fn default_method() -> MethodKind {
    MethodKind::Exact
}
fn default_mc_samples() -> u64 {
    100_000
}
fn default_cap() -> u64 {
    DEFAULT_EXACT_CAP
}
fn default_bounds() -> (f64, f64) {
    DEFAULT_THETA_BOUNDS
}

impl EstimatorSpec {
    fn label(&self) -> String {
        let prior = match self.prior {
            PriorKind::Dp => "dp",
            PriorKind::Pyp => "pyp",
        };
        let method = match (self.prior, self.method) {
            (PriorKind::Dp, _) => "exact",
            (_, MethodKind::Exact) => "exact",
            (_, MethodKind::Mc) => match self.debias {
                Debias::None => "mc",
                Debias::Tin => "mc-tin",
            },
            (_, MethodKind::Asymptotic) => "asymptotic",
            (_, MethodKind::Auto) => "auto",
        };
        let fit = match self.fit {
            FitKind::None => "given",
            FitKind::Oracle => "oracle",
            FitKind::EbMle => "eb-mle",
            FitKind::EbWasserstein => "eb-wasserstein",
        };
        format!("{prior}-{method}:{fit}")
    }

    fn validate(&self, models: &[ModelSpec]) -> Result<()> {
        match (self.prior, self.fit) {
            (PriorKind::Pyp, FitKind::EbMle) => {
                return Err(Error::Config(
                    "eb-mle fits theta under the DP prior only; use eb-wasserstein for pyp".into(),
                ))
            }
            (PriorKind::Dp, FitKind::None) if self.theta.is_none() => {
                return Err(Error::Config("fit = \"none\" needs theta".into()))
            }
            (PriorKind::Pyp, FitKind::None) if self.theta.is_none() || self.alpha.is_none() => {
                return Err(Error::Config("fit = \"none\" needs alpha and theta".into()))
            }
            (_, FitKind::Oracle) if models.iter().any(|m| m.true_params().is_none()) => {
                return Err(Error::Config(
                    "fit = \"oracle\" needs dp or pyp models with known parameters".into(),
                ))
            }
            _ => {}
        }
        if matches!(self.method, MethodKind::Mc | MethodKind::Auto) && self.mc_samples < 100 {
            return Err(Error::Config("mc_samples must be at least 100".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub models: Vec<ModelSpec>,
    /// Strictly increasing sample sizes.
    pub n: Vec<u64>,
    pub width: u32,
    pub reps: u32,
    pub seed: u64,
    /// Largest `r` with a truth/estimate column pair; `r = 0` is always reported.
    #[serde(default = "default_r_max")]
    pub r_max: u64,
    pub estimators: Vec<EstimatorSpec>,
    /// Record wall-clock times. Off by default so that output bytes depend on
    /// the config alone.
    #[serde(default)]
    pub timing: bool,
    /// Append the classical Good–Turing missing-mass estimate from the raw
    /// sample as a comparison column.
    #[serde(default)]
    pub good_turing: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_r_max() -> u64 {
    3
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config and resolves relative file-model paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for m in &mut cfg.models {
            if let ModelSpec::File { path } = m {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
        if let Some(out) = &mut cfg.output {
            if out.is_relative() {
                *out = base.join(&*out);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::Config("reps must be at least 1".into()));
        }
        if self.n.is_empty() {
            return Err(Error::Config("n schedule is empty".into()));
        }
        if self.n.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("n schedule must be strictly increasing".into()));
        }
        if self.models.is_empty() || self.estimators.is_empty() {
            return Err(Error::Config("need at least one model and one estimator".into()));
        }
        HashSpec::new(1, 0, self.width, 0).map_err(|e| Error::Config(e.to_string()))?;
        for m in &self.models {
            if let Some(p) = m.true_params() {
                p.validate()?;
            }
        }
        for e in &self.estimators {
            e.validate(&self.models)?;
        }
        Ok(())
    }

    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = [
            "model",
            "alpha_true",
            "theta_true",
            "n",
            "J",
            "rep",
            "seed",
            "truth_missing_mass",
            "est_missing_mass",
            "theta_hat",
            "alpha_hat",
            "k_true",
            "k_hat",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        for r in 1..=self.r_max {
            h.push(format!("truth_p{r}"));
            h.push(format!("est_p{r}"));
        }
        h.extend(["method", "mc_stderr", "wall_time"].map(String::from));
        if self.good_turing {
            h.push("good_turing_missing_mass".into());
        }
        h
    }
}

/// Draws the population sample for one (model, rep).
fn draw(model: &ModelSpec, n: usize, seed: u64, population: Option<&[u64]>) -> Result<RawSample> {
    match model {
        ModelSpec::Dp { theta, sampler } | ModelSpec::Pyp { theta, sampler, .. } => {
            let alpha = if let ModelSpec::Pyp { alpha, .. } = model { *alpha } else { 0.0 };
            let params = PriorParams::new(alpha, *theta)?;
            match sampler {
                Sampler::StickBreaking => sample_pyp_sequence(params, n, seed),
                Sampler::Urn => sample_pyp_urn(params, n, seed),
            }
        }
        ModelSpec::Zipf { exponent, vocab } => sample_zipf_sequence(*exponent, *vocab, n, seed),
        ModelSpec::File { .. } => {
            let freqs = population.expect("file population loaded");
            sample_empirical(freqs, n, seed)
        }
    }
}

/// Frequencies of each distinct line of a token file, in first-seen order.
pub fn load_population(path: &Path) -> Result<Vec<u64>> {
    let text = std::fs::read_to_string(path)?;
    let mut index = std::collections::HashMap::new();
    let mut freqs: Vec<u64> = Vec::new();
    for line in text.lines().filter(|l| !l.is_empty()) {
        let next = freqs.len();
        let id = *index.entry(line).or_insert(next);
        if id == next {
            freqs.push(0);
        }
        freqs[id] += 1;
    }
    if freqs.is_empty() {
        return Err(Error::Config(format!("{} contains no tokens", path.display())));
    }
    Ok(freqs)
}

fn sample_empirical(freqs: &[u64], n: usize, seed: u64) -> Result<RawSample> {
    let total: u64 = freqs.iter().sum();
    let mut cumulative = Vec::with_capacity(freqs.len());
    let mut acc = 0u64;
    for f in freqs {
        acc += f;
        cumulative.push(acc);
    }
    let mut rng = stream_rng(seed, 4);
    let symbols = (0..n)
        .map(|_| {
            let u = rand::Rng::random_range(&mut rng, 0..total);
            cumulative.partition_point(|c| *c <= u) as u64
        })
        .collect();
    Ok(RawSample {
        symbols,
        weights: Some(AtomWeights {
            first_id: 0,
            masses: freqs.iter().map(|f| *f as f64 / total as f64).collect(),
            tail_mass: 0.0,
        }),
        meta: GeneratorMeta {
            model: "file".into(),
            params: None,
            exponent: None,
            vocab: Some(freqs.len() as u64),
            seed,
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub model_index: usize,
    pub n_index: usize,
    pub rep: u32,
    pub estimator_index: usize,
    pub fields: Vec<String>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn estimate(
    spec: &EstimatorSpec,
    model: &ModelSpec,
    sketch: &crate::Sketch,
    r_max: u64,
    seed: u64,
) -> Result<EstimateReport> {
    let given = |alpha: Option<f64>, theta: Option<f64>| -> Result<PriorParams> {
        PriorParams::new(alpha.unwrap_or(0.0), theta.unwrap_or(f64::NAN))
    };
    let params = match spec.fit {
        FitKind::None => Some((given(spec.alpha, spec.theta)?, PriorSource::Given)),
        FitKind::Oracle => Some((model.true_params().expect("validated"), PriorSource::Given)),
        FitKind::EbMle => None,
        FitKind::EbWasserstein => {
            let mut w = spec.wasserstein.clone().unwrap_or_default();
            if spec.prior == PriorKind::Dp {
                w.alphas = vec![0.0];
            }
            let fit = wasserstein_fit(sketch, &w, derive_seed(seed, 1))?;
            Some((fit.params, PriorSource::EbWasserstein))
        }
    };
    let Some((params, source)) = params else {
        let (lo, hi) = spec.theta_bounds;
        return dp_report(sketch, ThetaSource::EbMle { lo, hi }, Some(r_max));
    };
    if spec.prior == PriorKind::Dp || params.alpha == 0.0 {
        let mut rep = dp_report(sketch, ThetaSource::Given(params.theta), Some(r_max))?;
        rep.prior_source = source;
        return Ok(rep);
    }
    let mc = PypMethod::MonteCarlo {
        samples: spec.mc_samples,
        seed: derive_seed(seed, 2),
        debias: spec.debias,
    };
    let method = match spec.method {
        MethodKind::Exact => PypMethod::Exact { cap: spec.exact_cap },
        MethodKind::Mc => mc,
        MethodKind::Asymptotic => PypMethod::Asymptotic,
        MethodKind::Auto if sketch.n() <= spec.exact_cap => PypMethod::Exact { cap: spec.exact_cap },
        MethodKind::Auto => mc,
    };
    pyp_report(sketch, params, source, &method, Some(r_max))
}

fn run_job(
    cfg: &ExperimentConfig,
    model_index: usize,
    rep: u32,
    population: Option<&[u64]>,
) -> Result<Vec<Row>> {
    let model = &cfg.models[model_index];
    let seed = derive_seed(cfg.seed, ((model_index as u64) << 32) | rep as u64);
    let n_max = *cfg.n.last().expect("validated") as usize;
    let sample = draw(model, n_max, seed, population)?;
    let spec = HashSpec::random(cfg.width, derive_seed(seed, 1))?;
    let truth_params = model.true_params();
    let mut rows = Vec::new();
    let mut sketch = crate::Sketch::new(spec);
    let mut filled = 0usize;
    for (n_index, &n) in cfg.n.iter().enumerate() {
        let n = n as usize;
        for id in &sample.symbols[filled..n] {
            sketch.insert(&id.to_le_bytes())?;
        }
        filled = n;
        let prefix = RawSample {
            symbols: sample.symbols[..n].to_vec(),
            weights: sample.weights.clone(),
            meta: sample.meta.clone(),
        };
        let truth = true_coverage_all(&prefix, cfg.r_max)?;
        let stats = partition_stats_of(&prefix.symbols);
        for (estimator_index, est) in cfg.estimators.iter().enumerate() {
            let est_seed = derive_seed(seed, 16 + ((n_index as u64) << 16) + estimator_index as u64);
            let start = Instant::now();
            let report = estimate(est, model, &sketch, cfg.r_max, est_seed)?;
            let elapsed = if cfg.timing { start.elapsed().as_secs_f64() } else { 0.0 };
            let mut f = vec![
                model.label(),
                fmt_opt(truth_params.map(|p| p.alpha)),
                fmt_opt(truth_params.map(|p| p.theta)),
                n.to_string(),
                cfg.width.to_string(),
                rep.to_string(),
                seed.to_string(),
                truth[0].to_string(),
                report.missing_mass().to_string(),
                report.prior.theta.to_string(),
                report.prior.alpha.to_string(),
                stats.k.to_string(),
                fmt_opt(report.distinct),
            ];
            for r in 1..=cfg.r_max {
                f.push(truth[r as usize].to_string());
                f.push(fmt_opt(report.coverage.get(&r).copied()));
            }
            f.push(est.label());
            f.push(fmt_opt(report.mc_stderr.as_ref().and_then(|s| s.get(&0).copied())));
            f.push(elapsed.to_string());
            if cfg.good_turing {
                f.push(good_turing(&stats, 0).to_string());
            }
            rows.push(Row {
                model_index,
                n_index,
                rep,
                estimator_index,
                fields: f,
            });
        }
    }
    Ok(rows)
}

/// Runs every (model, rep) job and returns rows ordered by model, n, rep and
/// estimator regardless of completion order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<Row>> {
    cfg.validate()?;
    let populations: Vec<Option<Vec<u64>>> = cfg
        .models
        .iter()
        .map(|m| match m {
            ModelSpec::File { path } => load_population(path).map(Some),
            _ => Ok(None),
        })
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, u32)> = (0..cfg.models.len())
        .flat_map(|m| (0..cfg.reps).map(move |r| (m, r)))
        .collect();
    let chunks: Vec<Vec<Row>> = jobs
        .par_iter()
        .map(|&(m, r)| run_job(cfg, m, r, populations[m].as_deref()))
        .collect::<Result<_>>()?;
    let mut rows: Vec<Row> = chunks.into_iter().flatten().collect();
    rows.sort_by_key(|r| (r.model_index, r.n_index, r.rep, r.estimator_index));
    Ok(rows)
}

pub fn write_csv<W: std::io::Write>(cfg: &ExperimentConfig, rows: &[Row], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(cfg.header()).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row.fields).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn run_to_string(cfg: &ExperimentConfig) -> Result<String> {
    let rows = run_experiment(cfg)?;
    let mut buf = Vec::new();
    write_csv(cfg, &rows, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv is utf-8"))
}
