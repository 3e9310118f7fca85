mod tokenize;

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bnp_sketch::dp::{dp_report, ThetaSource, DEFAULT_THETA_BOUNDS};
use bnp_sketch::experiment::{run_experiment, write_csv, ExperimentConfig};
use bnp_sketch::genmodel::{sample_pyp_sequence, sample_pyp_urn, sample_zipf_sequence, RawSample};
use bnp_sketch::oracle::{partition_stats, true_coverage_all};
use bnp_sketch::pyp::{
    pyp_report, wasserstein_fit, Debias, PypMethod, WassersteinConfig, DEFAULT_EXACT_CAP,
};
use bnp_sketch::report::{EstimateReport, PriorSource};
use bnp_sketch::{Error, HashSpec, PriorParams, Sketch};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::tokenize::{load_dictionary, tokenize, Tokenizer};

#[derive(Parser)]
#[command(name = "bnpsketch", version, about = "Coverage, frequency and distinct-count estimates from hashed count sketches")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Hash a token stream into a sketch file.
    Sketch {
        /// Input file; standard input when omitted or "-".
        input: Option<PathBuf>,
        #[arg(long)]
        width: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// lines | words | kmer:K | ngram:N
        #[arg(long, default_value = "lines")]
        tokenizer: Tokenizer,
        /// Keep only words listed in this file (words and ngram tokenizers).
        #[arg(long)]
        dictionary: Option<PathBuf>,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Estimate coverage probabilities, frequency counts and distinct counts.
    Estimate {
        #[arg(long)]
        sketch: PathBuf,
        #[arg(long, value_enum)]
        prior: PriorArg,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, value_enum, default_value_t = FitArg::None)]
        fit: FitArg,
        #[arg(long, value_enum, default_value_t = MethodArg::Exact)]
        method: MethodArg,
        /// Largest r to report; defaults to the largest bucket count.
        #[arg(long)]
        r_max: Option<u64>,
        #[arg(long, default_value_t = 100_000)]
        mc_samples: u64,
        #[arg(long, value_enum, default_value_t = DebiasArg::None)]
        debias: DebiasArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_EXACT_CAP)]
        exact_cap: u64,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Draw synthetic data and emit tokens, a sketch and/or the true quantities.
    Simulate {
        #[arg(long, value_enum)]
        model: ModelArg,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
        #[arg(long)]
        exponent: Option<f64>,
        #[arg(long)]
        vocab: Option<u64>,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Use the predictive (urn) sampler instead of stick-breaking.
        #[arg(long)]
        urn: bool,
        /// What to write; repeat for several outputs (then --out-dir is required).
        #[arg(long, value_enum, default_values_t = [Emit::Truth])]
        emit: Vec<Emit>,
        /// Sketch width for --emit sketch.
        #[arg(long, default_value_t = 128)]
        width: u32,
        /// Hash seed for --emit sketch.
        #[arg(long, default_value_t = 0)]
        hash_seed: u64,
        /// Largest r in the truth file; defaults to the largest frequency.
        #[arg(long)]
        r_max: Option<u64>,
        /// Directory for tokens.txt, sketch.bnps and truth.json.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Output file for a single --emit; standard output when omitted.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Run an experiment grid from a TOML config and write CSV.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output path; standard output when neither is set.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Fit prior parameters to a sketch.
    Fit {
        #[arg(long)]
        sketch: PathBuf,
        #[arg(long, value_enum)]
        fit: FitKindArg,
        #[arg(long, default_value_t = DEFAULT_THETA_BOUNDS.0)]
        theta_min: f64,
        #[arg(long, default_value_t = DEFAULT_THETA_BOUNDS.1)]
        theta_max: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Simulations per grid point.
        #[arg(long, default_value_t = 5)]
        reps: u32,
        /// Simulated sample size; defaults to min(n, 10000).
        #[arg(long)]
        sim_n: Option<u64>,
        /// Write the distance surface here instead of standard output.
        #[arg(long)]
        surface: Option<PathBuf>,
    },
    /// Merge sketches built with the same hash.
    Merge {
        #[arg(required = true, num_args = 2..)]
        inputs: Vec<PathBuf>,
        #[arg(long, short)]
        output: PathBuf,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PriorArg {
    Dp,
    Pyp,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FitArg {
    None,
    EbMle,
    EbWasserstein,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FitKindArg {
    EbMle,
    EbWasserstein,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Exact,
    Mc,
    Asymptotic,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DebiasArg {
    None,
    Tin,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Dp,
    Pyp,
    Zipf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Debug)]
enum Emit {
    Tokens,
    Sketch,
    Truth,
}

enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Lib(Error::Io(e))
    }
}

fn usage<T>(msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure::Usage(msg.into()))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 1,
        Error::Parse(_) | Error::Io(_) | Error::Incompatible(_) | Error::Overflow(_) => 2,
        Error::Domain(_) | Error::ExactCapExceeded { .. } | Error::Degenerate(_) => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn open_input(path: Option<&Path>) -> io::Result<Box<dyn BufRead>> {
    match path {
        None => Ok(Box::new(io::stdin().lock())),
        Some(p) if p == Path::new("-") => Ok(Box::new(io::stdin().lock())),
        Some(p) => Ok(Box::new(BufReader::new(File::open(p)?))),
    }
}

fn open_output(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    match path {
        None => Ok(Box::new(io::stdout().lock())),
        Some(p) => Ok(Box::new(BufWriter::new(File::create(p)?))),
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Sketch {
            input,
            width,
            seed,
            tokenizer,
            dictionary,
            output,
        } => {
            let spec = HashSpec::random(width, seed).map_err(|e| Failure::Usage(e.to_string()))?;
            let dict = match dictionary {
                Some(p) => {
                    if !matches!(tokenizer, Tokenizer::Words | Tokenizer::Ngram(_)) {
                        return usage("--dictionary applies to the words and ngram tokenizers");
                    }
                    Some(load_dictionary(BufReader::new(File::open(p)?))?)
                }
                None => None,
            };
            let mut sketch = Sketch::new(spec);
            let reader = open_input(input.as_deref())?;
            let mut overflow = None;
            tokenize(reader, tokenizer, dict.as_ref(), |t| {
                if let Err(e) = sketch.insert(t.as_bytes()) {
                    overflow = Some(e);
                    return Err(io::Error::other("counter overflow"));
                }
                Ok(())
            })
            .map_err(|e| overflow.take().map(Failure::Lib).unwrap_or(e.into()))?;
            sketch.write_to(&output)?;
            eprintln!("n = {}, J = {}", sketch.n(), sketch.width());
            Ok(())
        }
        Command::Estimate {
            sketch,
            prior,
            theta,
            alpha,
            fit,
            method,
            r_max,
            mc_samples,
            debias,
            seed,
            exact_cap,
            format,
        } => {
            let sketch = Sketch::read_from(&sketch)?;
            let debias = match debias {
                DebiasArg::None => Debias::None,
                DebiasArg::Tin => Debias::Tin,
            };
            let report = estimate(
                &sketch, prior, theta, alpha, fit, method, r_max, mc_samples, debias, seed,
                exact_cap,
            )?;
            let text = match format {
                Format::Json => report.to_json() + "\n",
                Format::Csv => report.to_csv(),
            };
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
        Command::Simulate {
            model,
            theta,
            alpha,
            exponent,
            vocab,
            n,
            seed,
            urn,
            emit,
            width,
            hash_seed,
            r_max,
            out_dir,
            output,
        } => {
            let sample = simulate(model, theta, alpha, exponent, vocab, n, seed, urn)?;
            let mut emit = emit;
            emit.dedup();
            if emit.len() > 1 && out_dir.is_none() {
                return usage("several --emit values need --out-dir");
            }
            if out_dir.is_some() && output.is_some() {
                return usage("use either --out-dir or --output");
            }
            for e in emit {
                let path = match (&out_dir, e) {
                    (Some(d), Emit::Tokens) => Some(d.join("tokens.txt")),
                    (Some(d), Emit::Sketch) => Some(d.join("sketch.bnps")),
                    (Some(d), Emit::Truth) => Some(d.join("truth.json")),
                    (None, _) => output.clone(),
                };
                let mut out = open_output(path.as_deref())?;
                match e {
                    Emit::Tokens => {
                        for id in &sample.symbols {
                            writeln!(out, "{id}")?;
                        }
                    }
                    Emit::Sketch => {
                        let spec = HashSpec::random(width, hash_seed)
                            .map_err(|e| Failure::Usage(e.to_string()))?;
                        // the decimal token text is hashed, as `sketch --tokenizer lines` would
                        let mut sketch = Sketch::new(spec);
                        for id in &sample.symbols {
                            sketch.insert(id.to_string().as_bytes())?;
                        }
                        out.write_all(&sketch.to_bytes())?;
                    }
                    Emit::Truth => {
                        let text = truth_json(&sample, r_max)?;
                        writeln!(out, "{text}")?;
                    }
                }
                out.flush()?;
            }
            Ok(())
        }
        Command::Experiment { config, output } => {
            let cfg = ExperimentConfig::load(&config)?;
            let rows = run_experiment(&cfg)?;
            let path = output.or(cfg.output.clone());
            let mut out = open_output(path.as_deref())?;
            write_csv(&cfg, &rows, &mut out)?;
            out.flush()?;
            Ok(())
        }
        Command::Fit {
            sketch,
            fit,
            theta_min,
            theta_max,
            seed,
            reps,
            sim_n,
            surface,
        } => {
            let sketch = Sketch::read_from(&sketch)?;
            match fit {
                FitKindArg::EbMle => {
                    let f = bnp_sketch::dp::dp_fit_theta(&sketch, (theta_min, theta_max))?;
                    let out = json!({
                        "alpha": 0.0,
                        "theta": f.theta,
                        "loglik": f.loglik,
                        "boundary_hit": f.boundary_hit,
                    });
                    println!("{}", serde_json::to_string_pretty(&out).expect("json"));
                }
                FitKindArg::EbWasserstein => {
                    let config = WassersteinConfig {
                        reps,
                        sim_n,
                        ..WassersteinConfig::default()
                    };
                    let f = wasserstein_fit(&sketch, &config, seed)?;
                    let out = json!({
                        "alpha": f.params.alpha,
                        "theta": f.params.theta,
                        "distance": f.distance,
                        "sim_n": f.sim_n,
                    });
                    println!("{}", serde_json::to_string_pretty(&out).expect("json"));
                    match surface {
                        Some(p) => std::fs::write(p, f.surface_csv())?,
                        None => print!("\n{}", f.surface_csv()),
                    }
                }
            }
            Ok(())
        }
        Command::Merge { inputs, output } => {
            let mut merged = Sketch::read_from(&inputs[0])?;
            for p in &inputs[1..] {
                merged.merge_in(&Sketch::read_from(p)?)?;
            }
            merged.write_to(&output)?;
            Ok(())
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn estimate(
    sketch: &Sketch,
    prior: PriorArg,
    theta: Option<f64>,
    alpha: Option<f64>,
    fit: FitArg,
    method: MethodArg,
    r_max: Option<u64>,
    mc_samples: u64,
    debias: Debias,
    seed: u64,
    exact_cap: u64,
) -> Result<EstimateReport, Failure> {
    if prior == PriorArg::Dp {
        if method != MethodArg::Exact {
            return usage("the dp prior has closed-form estimators; --method must be exact");
        }
        if alpha.is_some_and(|a| a != 0.0) {
            return usage("--alpha is not used with the dp prior");
        }
    }
    if prior == PriorArg::Pyp && fit == FitArg::EbMle {
        return usage("eb-mle fits theta under the dp prior; use eb-wasserstein for pyp");
    }
    let (params, source) = match fit {
        FitArg::EbMle => {
            let (lo, hi) = DEFAULT_THETA_BOUNDS;
            return Ok(dp_report(sketch, ThetaSource::EbMle { lo, hi }, r_max)?);
        }
        FitArg::None => {
            let Some(theta) = theta else {
                return usage("--theta is required unless a fit is requested");
            };
            let alpha = match prior {
                PriorArg::Dp => 0.0,
                PriorArg::Pyp => match alpha {
                    Some(a) => a,
                    None => return usage("--alpha is required for the pyp prior"),
                },
            };
            (PriorParams::new(alpha, theta)?, PriorSource::Given)
        }
        FitArg::EbWasserstein => {
            let mut config = WassersteinConfig::default();
            if prior == PriorArg::Dp {
                config.alphas = vec![0.0];
            }
            (wasserstein_fit(sketch, &config, seed)?.params, PriorSource::EbWasserstein)
        }
    };
    if prior == PriorArg::Dp || (params.alpha == 0.0 && method == MethodArg::Exact) {
        let mut report = dp_report(sketch, ThetaSource::Given(params.theta), r_max)?;
        report.prior_source = source;
        return Ok(report);
    }
    if params.alpha == 0.0 {
        return usage("the mc and asymptotic methods need alpha > 0");
    }
    let method = match method {
        MethodArg::Exact => PypMethod::Exact { cap: exact_cap },
        MethodArg::Mc => PypMethod::MonteCarlo {
            samples: mc_samples,
            seed,
            debias,
        },
        MethodArg::Asymptotic => PypMethod::Asymptotic,
    };
    Ok(pyp_report(sketch, params, source, &method, r_max)?)
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    model: ModelArg,
    theta: Option<f64>,
    alpha: f64,
    exponent: Option<f64>,
    vocab: Option<u64>,
    n: usize,
    seed: u64,
    urn: bool,
) -> Result<RawSample, Failure> {
    match model {
        ModelArg::Dp | ModelArg::Pyp => {
            let Some(theta) = theta else {
                return usage("--theta is required for dp and pyp models");
            };
            let alpha = if model == ModelArg::Dp { 0.0 } else { alpha };
            let params = PriorParams::new(alpha, theta)?;
            Ok(if urn {
                sample_pyp_urn(params, n, seed)?
            } else {
                sample_pyp_sequence(params, n, seed)?
            })
        }
        ModelArg::Zipf => match (exponent, vocab) {
            (Some(e), Some(v)) => Ok(sample_zipf_sequence(e, v, n, seed)?),
            _ => usage("--exponent and --vocab are required for the zipf model"),
        },
    }
}

fn truth_json(sample: &RawSample, r_max: Option<u64>) -> Result<String, Failure> {
    let stats = partition_stats(sample);
    let top = stats.m.iter().rposition(|m| *m > 0).unwrap_or(0) as u64;
    let r_max = r_max.unwrap_or(top);
    let coverage = true_coverage_all(sample, r_max)?;
    let coverage: serde_json::Map<String, serde_json::Value> = coverage
        .iter()
        .enumerate()
        .map(|(r, p)| (r.to_string(), json!(p)))
        .collect();
    let freq: serde_json::Map<String, serde_json::Value> = (1..=r_max)
        .map(|r| (r.to_string(), json!(stats.m(r))))
        .collect();
    let out = json!({
        "model": sample.meta.model,
        "params": sample.meta.params,
        "exponent": sample.meta.exponent,
        "vocab": sample.meta.vocab,
        "seed": sample.meta.seed,
        "n": stats.n,
        "distinct": stats.k,
        "coverage": coverage,
        "freq_counts": freq,
    });
    Ok(serde_json::to_string_pretty(&out).expect("json"))
}
