//! `penetrance`: simulate pedigree cohorts, fit the competing-risk frailty
//! model, predict personal risk and compare models.
//!
//! Exit codes: 0 success, 2 usage, 3 invalid input or configuration,
//! 4 numerical failure, 5 I/O.

mod manifest;
mod output;

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};

use penetrance::baseline::BaselineKind;
use penetrance::cohort::Cohort;
use penetrance::config::Config;
use penetrance::evaluate;
use penetrance::inference::{self, resume_chain, ChainRunner, Checkpoint, FamilyData, PosteriorSamples};
use penetrance::pedigree::{load_pedigrees, write_pedigrees, Pedigree};
use penetrance::predict;
use penetrance::simulate::simulate_cohort;
use penetrance::Error;

use manifest::Manifest;

#[derive(Parser)]
#[command(name = "penetrance", version, about = "Bayesian competing-risk penetrance estimation on pedigrees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Master seed; overrides the config and PENETRANCE_SEED.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the available cores.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Clone, Default)]
struct ModelFlags {
    /// Fit without dividing by the ascertainment probability.
    #[arg(long)]
    no_ascertainment_correction: bool,
    /// Fix every family frailty at 1.
    #[arg(long)]
    no_frailty: bool,
    /// Baseline hazard family.
    #[arg(long, value_parser = ["bernstein", "exponential", "weibull", "piecewise"])]
    baseline: Option<String>,
    /// Bernstein polynomial degree M.
    #[arg(long)]
    degree: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an ascertained cohort.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Fit the model to a pedigree file.
    Fit {
        pedigrees: PathBuf,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelFlags,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Carrier probability and risk curves for counselees.
    Predict {
        /// Directory written by `fit`.
        #[arg(long)]
        model: PathBuf,
        pedigrees: PathBuf,
        /// Member id; defaults to the members flagged in the counselee column.
        #[arg(long)]
        counselee: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Model comparison and validation.
    Evaluate {
        #[command(subcommand)]
        metric: Metric,
    },
}

#[derive(Subcommand)]
enum Metric {
    /// Per-family conditional predictive ordinate and the PsML.
    Cpo {
        #[arg(long)]
        model: PathBuf,
        pedigrees: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Deviance information criterion.
    Dic {
        #[arg(long)]
        model: PathBuf,
        pedigrees: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Cross-validated ROC curves from repeated half splits.
    Roc {
        pedigrees: PathBuf,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelFlags,
    },
}

/// Command-line misuse that clap cannot detect.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<Error>() {
            return match err {
                Error::Quadrature { .. }
                | Error::DegenerateAscertainment { .. }
                | Error::Initialization(_)
                | Error::SimulationStalled { .. }
                | Error::Undefined(_) => 4,
                Error::Io(_) => 5,
                _ => 3,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 5;
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() {
            return 3;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common } => cmd_simulate(&common),
        Command::Fit {
            pedigrees,
            common,
            model,
            resume,
        } => cmd_fit(&pedigrees, &common, &model, resume.as_deref()),
        Command::Predict {
            model,
            pedigrees,
            counselee,
            common,
        } => cmd_predict(&model, &pedigrees, counselee.as_deref(), &common),
        Command::Evaluate { metric } => match metric {
            Metric::Cpo {
                model,
                pedigrees,
                common,
            } => cmd_cpo(&model, &pedigrees, &common),
            Metric::Dic {
                model,
                pedigrees,
                common,
            } => cmd_dic(&model, &pedigrees, &common),
            Metric::Roc {
                pedigrees,
                common,
                model,
            } => cmd_roc(&pedigrees, &common, &model),
        },
    }
}

/// Effective configuration: file, then `PENETRANCE_SEED`, then flags.
fn load_config(common: &Common, flags: Option<&ModelFlags>, fallback: Option<&Path>) -> Result<Config> {
    let path = common.config.as_deref().or(fallback.filter(|p| p.exists()));
    let mut c = match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Config::from_toml(&text).with_context(|| format!("config {}", p.display()))?
        }
        None => Config::default(),
    };
    c = c.with_env_seed()?;
    if let Some(s) = common.seed {
        c.seed = s;
    }
    if let Some(f) = flags {
        if f.no_ascertainment_correction {
            c.correct_ascertainment = false;
        }
        if f.no_frailty {
            c.frailty = false;
        }
        if let Some(b) = &f.baseline {
            c.baseline = b.parse::<BaselineKind>()?;
        }
        if let Some(m) = f.degree {
            c.bernstein_degree = m;
        }
    }
    c.validate()?;
    Ok(c)
}

fn setup(common: &Common) -> Result<usize> {
    let threads = common
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if threads == 0 {
        return Err(Usage("--threads must be at least 1".into()).into());
    }
    // Only the first call in a process can set the global pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
    Ok(threads)
}

fn read_pedigrees(path: &Path) -> Result<Vec<Pedigree>> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    load_pedigrees(f).with_context(|| format!("reading pedigrees from {}", path.display()))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<fs::File>> {
    let path = dir.join(name);
    Ok(BufWriter::new(
        fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn cmd_simulate(common: &Common) -> Result<()> {
    let threads = setup(common)?;
    let config = load_config(common, None, None)?;
    let families = simulate_cohort(&config.simulate, config.seed)?;
    let out = &common.out;
    write_pedigrees(create(out, "pedigrees.tsv")?, &families)?;
    let mut m = Manifest::new("simulate", config.seed, threads, config.to_toml());
    if let Some(p) = &common.config {
        m.input(p)?;
    }
    m.outputs_in(out, &["pedigrees.tsv"])?;
    m.write(out)
}

const MODEL_FILES: [&str; 7] = [
    "model.json",
    "config.toml",
    "draws.tsv",
    "trace.tsv",
    "summary.tsv",
    "acceptance.tsv",
    "curves.tsv",
];

fn cmd_fit(pedigrees: &Path, common: &Common, flags: &ModelFlags, resume: Option<&Path>) -> Result<()> {
    let threads = setup(common)?;
    let config = load_config(common, Some(flags), None)?;
    let families = read_pedigrees(pedigrees)?;
    let cohort = Cohort::prepare(families, config.admin_age())?;
    let out = &common.out;
    let ck_path = out.join("checkpoint.json");
    let (runner, states) = match resume {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let ck: Checkpoint = serde_json::from_str(&text).context("parsing checkpoint")?;
            if ck.config.seed != config.seed {
                return Err(Usage(format!("checkpoint seed {} differs from configured seed {}", ck.config.seed, config.seed)).into());
            }
            resume_chain(ck, &cohort, Some(config.iterations))?
        }
        None => {
            let spec = config.model_spec(cohort.max_cause())?;
            let runner = ChainRunner::new(&spec, &config.sampler(), &cohort)?;
            let states = (0..config.chains).map(|c| runner.start(c)).collect::<penetrance::Result<Vec<_>>>()?;
            (runner, states)
        }
    };
    let states = runner.run(states, config.checkpoint_every, |s| {
        let text = serde_json::to_string(&runner.checkpoint(s)).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(&ck_path, text)?;
        Ok(())
    })?;
    let samples = runner.collect(states);
    output::write_model(out, &samples, &config)?;
    let mut m = Manifest::new("fit", config.seed, threads, config.to_toml());
    m.input(pedigrees)?;
    if let Some(p) = &common.config {
        m.input(p)?;
    }
    if let Some(p) = resume {
        m.input(p)?;
    }
    m.outputs_in(out, &MODEL_FILES)?;
    m.write(out)
}

/// Fitted model with its draws, plus the configuration it was fitted with.
fn load_model(dir: &Path) -> Result<PosteriorSamples> {
    let text = fs::read_to_string(dir.join("model.json")).with_context(|| format!("reading {}/model.json", dir.display()))?;
    let mut s: PosteriorSamples = serde_json::from_str(&text).context("parsing model.json")?;
    let f = fs::File::open(dir.join("draws.tsv")).with_context(|| format!("opening {}/draws.tsv", dir.display()))?;
    s.draws = inference::read_draws(f, &s)?;
    Ok(s)
}

fn model_inputs(m: &mut Manifest, model: &Path, pedigrees: &Path, common: &Common) -> Result<()> {
    m.input(&model.join("model.json"))?;
    m.input(&model.join("draws.tsv"))?;
    m.input(pedigrees)?;
    if let Some(p) = &common.config {
        m.input(p)?;
    }
    Ok(())
}

fn cmd_predict(model: &Path, pedigrees: &Path, counselee: Option<&str>, common: &Common) -> Result<()> {
    let threads = setup(common)?;
    let config = load_config(common, None, Some(&model.join("config.toml")))?;
    let samples = load_model(model)?;
    let families = read_pedigrees(pedigrees)?;
    let cohort = Cohort::conform(families, samples.time_scale, config.admin_age())?;
    let mut targets: Vec<(usize, usize)> = Vec::new();
    for (f, p) in cohort.families.iter().enumerate() {
        for (j, ind) in p.members().iter().enumerate() {
            let hit = match counselee {
                Some(id) => ind.id == id,
                None => ind.is_counselee,
            };
            if hit {
                targets.push((f, j));
            }
        }
    }
    if targets.is_empty() {
        return Err(Usage(match counselee {
            Some(id) => format!("counselee {id:?} not found in {}", pedigrees.display()),
            None => "no counselee given: pass --counselee or flag members in a counselee column".into(),
        })
        .into());
    }
    let ages = config.curve_ages(samples.time_scale);
    let mut preds = Vec::new();
    for &(f, j) in &targets {
        let p = &cohort.families[f];
        let r = predict::predict_risk(&samples, p, j, &ages, config.predict_frailty, config.credible_level, config.seed)?;
        preds.push((p.family_id().to_string(), r));
    }
    let out = &common.out;
    output::write_predictions(out, &preds)?;
    let mut m = Manifest::new("predict", config.seed, threads, config.to_toml());
    model_inputs(&mut m, model, pedigrees, common)?;
    m.outputs_in(out, &["risk.tsv", "carrier.tsv"])?;
    m.write(out)
}

fn fitted_data(model: &Path, pedigrees: &Path, common: &Common) -> Result<(Config, PosteriorSamples, Vec<FamilyData>)> {
    let config = load_config(common, None, Some(&model.join("config.toml")))?;
    let samples = load_model(model)?;
    let families = read_pedigrees(pedigrees)?;
    let cohort = Cohort::conform(families, samples.time_scale, config.admin_age())?;
    let data = cohort
        .families
        .iter()
        .map(|p| FamilyData::new(p, &samples.spec, samples.time_scale))
        .collect::<penetrance::Result<Vec<_>>>()?;
    Ok((config, samples, data))
}

fn cmd_cpo(model: &Path, pedigrees: &Path, common: &Common) -> Result<()> {
    let threads = setup(common)?;
    let (config, samples, data) = fitted_data(model, pedigrees, common)?;
    let rows = evaluate::cpo(&samples, &data)?;
    output::write_cpo(&common.out, &rows)?;
    let mut m = Manifest::new("evaluate cpo", config.seed, threads, config.to_toml());
    model_inputs(&mut m, model, pedigrees, common)?;
    m.outputs_in(&common.out, &["cpo.tsv"])?;
    m.write(&common.out)
}

fn cmd_dic(model: &Path, pedigrees: &Path, common: &Common) -> Result<()> {
    let threads = setup(common)?;
    let (config, samples, data) = fitted_data(model, pedigrees, common)?;
    let d = evaluate::dic(&samples, &data)?;
    output::write_dic(&common.out, &d)?;
    let mut m = Manifest::new("evaluate dic", config.seed, threads, config.to_toml());
    model_inputs(&mut m, model, pedigrees, common)?;
    m.outputs_in(&common.out, &["dic.tsv"])?;
    m.write(&common.out)
}

fn cmd_roc(pedigrees: &Path, common: &Common, flags: &ModelFlags) -> Result<()> {
    let threads = setup(common)?;
    let config = load_config(common, Some(flags), None)?;
    let cohort = Cohort::prepare(read_pedigrees(pedigrees)?, config.admin_age())?;
    let spec = config.model_spec(cohort.max_cause())?;
    if config.roc_cause == 0 || config.roc_cause > spec.causes {
        return Err(anyhow!(Error::InvalidCause {
            cause: config.roc_cause,
            causes: spec.causes
        }));
    }
    let cv = evaluate::cross_validated_roc(&cohort, &config, &spec)?;
    output::write_roc(&common.out, &cv)?;
    let mut m = Manifest::new("evaluate roc", config.seed, threads, config.to_toml());
    m.input(pedigrees)?;
    if let Some(p) = &common.config {
        m.input(p)?;
    }
    m.outputs_in(&common.out, &["roc.tsv", "roc_band.tsv"])?;
    m.write(&common.out)
}
