use std::collections::HashMap;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use immc_core::baselines::{fmmc_best_of, fmmc_grid_search, ngram_fit, DEFAULT_DELTA};
use immc_core::dist::rng_from_seed;
use immc_core::eval::{prediction_accuracy, run_report, segmentation_error, ImmcPredictor, RunReport, RunScores, SegmentationScore};
use immc_core::generator::{
    builtin_testcase, generate_corpus, SyntheticSpec, SyntheticSpecFile, TestCaseId, SIZE_LARGE,
    SIZE_MID, SIZE_SMALL,
};
use immc_core::sampler::{decode, fit_with_clock, segmentation};
use immc_core::{Corpus, FitReport, Hyperparams};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clock::StdClock;
use crate::config::{default_out_dir, PartialConfig, RunConfig};
use crate::dot;
use crate::io::{self, CorpusFormat, FmmcModelFile, ImmcModelFile, LabelRecord, ModelBody, NgramModelFile};

#[derive(Debug, Parser)]
#[command(
    name = "immc",
    version,
    about = "Segment categorical sequences with an infinite mixture of Markov chains",
    after_help = "Output directories default to $IMMC_OUT_DIR, else ./immc-out."
)]
pub struct Cli {
    /// Print scores and summaries as JSON on standard output.
    #[arg(long, global = true)]
    pub json: bool,
    /// TOML file with default settings; flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus and its ground-truth labels.
    Generate(GenerateArgs),
    /// Run the Gibbs sampler on a corpus.
    Fit(FitArgs),
    /// Fit a baseline model (global n-gram or finite mixture of Markov chains).
    Baseline(BaselineArgs),
    /// Segment a corpus with a saved model.
    Segment(SegmentArgs),
    /// Next-event prediction accuracy of a saved model.
    Predict(PredictArgs),
    /// Score a segmentation against ground-truth labels.
    Eval(EvalArgs),
    /// Write one Graphviz file per super state of a saved model.
    ExportDot(ExportDotArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Size {
    Small,
    Mid,
    Large,
}

impl Size {
    pub fn observations(self) -> usize {
        match self {
            Size::Small => SIZE_SMALL,
            Size::Mid => SIZE_MID,
            Size::Large => SIZE_LARGE,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// JSON spec with symbols, processes and sizes.
    #[arg(long, conflicts_with = "testcase", required_unless_present = "testcase")]
    pub spec: Option<PathBuf>,
    /// Built-in test case: I, II or III.
    #[arg(long)]
    pub testcase: Option<TestCaseId>,
    #[arg(long, value_enum, default_value = "small")]
    pub size: Size,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "N")]
    pub mean_segments: Option<f64>,
    /// Output directory for corpus.jsonl and truth.jsonl.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Corpus format; guessed from the extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<CorpusFormat>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: CorpusArgs,
    /// Ground-truth sidecar; adds error rates to the report.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub iters: Option<u64>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long = "L", value_parser = clap::value_parser!(u64).range(1..))]
    pub truncation: Option<u64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    /// Several seeds, comma separated; chains run in parallel.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineKind {
    Ngram,
    Fmmc,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long, value_enum)]
    pub kind: BaselineKind,
    #[command(flatten)]
    pub input: CorpusArgs,
    /// History length of the n-gram model.
    #[arg(long, default_value_t = 1)]
    pub order: usize,
    /// FMMC components; chosen on a held-out split from 1..=8 when omitted.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub components: Option<u64>,
    #[arg(long, default_value_t = 5)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output model file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub input: CorpusArgs,
    /// Output segmentation file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub input: CorpusArgs,
    /// Seed for the cut positions.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub segmentation: PathBuf,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Output score file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportDotArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub min_prob: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// An invalid combination of arguments; exits with status 2 like clap's
/// own usage errors.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub struct Output<'a> {
    pub json: bool,
    pub stdout: &'a mut dyn Write,
    pub stderr: &'a mut dyn Write,
}

impl Output<'_> {
    fn data(&mut self, text: &str) -> anyhow::Result<()> {
        writeln!(self.stdout, "{text}")?;
        Ok(())
    }

    fn json<T: Serialize>(&mut self, value: &T) -> anyhow::Result<()> {
        serde_json::to_writer_pretty(&mut *self.stdout, value)?;
        writeln!(self.stdout)?;
        Ok(())
    }

    fn note(&mut self, text: &str) -> anyhow::Result<()> {
        writeln!(self.stderr, "{text}")?;
        Ok(())
    }
}

pub fn run(cli: Cli, out: &mut Output) -> anyhow::Result<()> {
    let file = match &cli.config {
        Some(path) => PartialConfig::load(path)?,
        None => PartialConfig::default(),
    };
    out.json = cli.json;
    match cli.command {
        Command::Generate(a) => cmd_generate(a, out),
        Command::Fit(a) => cmd_fit(a, file, out),
        Command::Baseline(a) => cmd_baseline(a, file, out),
        Command::Segment(a) => cmd_segment(a, file, out),
        Command::Predict(a) => cmd_predict(a, file, out),
        Command::Eval(a) => cmd_eval(a, file, out),
        Command::ExportDot(a) => cmd_export_dot(a, file, out),
    }
}

fn corpus_settings(input: &CorpusArgs, file: &PartialConfig) -> anyhow::Result<(PathBuf, CorpusFormat)> {
    let path = input
        .corpus
        .clone()
        .or_else(|| file.corpus.clone())
        .ok_or_else(|| usage("no corpus given (use --corpus or `corpus` in the config file)"))?;
    let format = input.format.or(file.format).unwrap_or_else(|| CorpusFormat::from_path(&path));
    Ok((path, format))
}

fn model_path(flag: Option<PathBuf>, file: &PartialConfig) -> anyhow::Result<PathBuf> {
    flag.or_else(|| file.model.clone()).ok_or_else(|| usage("no model given (use --model or `model` in the config file)"))
}

fn cmd_generate(a: GenerateArgs, out: &mut Output) -> anyhow::Result<()> {
    let mut spec = match (&a.spec, a.testcase) {
        (Some(path), _) => {
            let file: SyntheticSpecFile = io::read_json(path)?;
            file.compile().with_context(|| format!("invalid spec in {}", path.display()))?
        }
        (None, Some(which)) => SyntheticSpec::from_testcase(&builtin_testcase(which), a.size.observations(), 0),
        (None, None) => return Err(usage("give --spec or --testcase")),
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    if let Some(m) = a.mean_segments {
        spec.mean_segments_per_sequence = m;
    }
    let g = generate_corpus(&spec)?;
    let dir = a.out.unwrap_or_else(default_out_dir);
    let corpus_path = dir.join("corpus.jsonl");
    let truth_path = dir.join("truth.jsonl");
    io::write_corpus(&corpus_path, &g.corpus)?;
    io::write_truth(&truth_path, &g)?;
    out.note(&format!(
        "wrote {} sequences, {} observations to {} and {}",
        g.corpus.len(),
        g.corpus.total_events(),
        corpus_path.display(),
        truth_path.display()
    ))
}

/// Per-chain trace in the fit report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainTrace {
    pub seed: u64,
    pub active_states: usize,
    pub log_likelihood: Vec<f64>,
    pub iteration_seconds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRunReport {
    pub hyperparams: Hyperparams,
    pub iterations: usize,
    pub burn_in: usize,
    pub observations: usize,
    pub sequences: usize,
    /// How `error_rate` is computed.
    pub error_rate_definition: String,
    pub summary: RunReport,
    pub chains: Vec<ChainTrace>,
}

pub const ERROR_RATE_DEFINITION: &str =
    "fraction of events whose predicted super state differs from the true label under the best one-to-one matching of predicted to true labels; unmatched predicted labels count as errors";

/// Flatten labels in corpus order, checking ids and lengths.
pub fn aligned_labels(corpus_ids: &[(&str, usize)], records: &[LabelRecord], what: &str) -> anyhow::Result<Vec<u32>> {
    let by_id: HashMap<&str, &LabelRecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut flat = Vec::new();
    for &(id, len) in corpus_ids {
        let rec = by_id.get(id).ok_or_else(|| anyhow!("{what} has no labels for sequence `{id}`"))?;
        if rec.labels.len() != len {
            bail!("{what} has {} labels for sequence `{id}` of length {len}", rec.labels.len());
        }
        flat.extend_from_slice(&rec.labels);
    }
    Ok(flat)
}

fn fit_config(a: &FitArgs, file: PartialConfig) -> PartialConfig {
    let seeds = a.seeds.clone().or_else(|| a.seed.map(|s| vec![s]));
    PartialConfig {
        gamma: a.gamma,
        alpha: a.alpha,
        kappa: a.kappa,
        sigma: a.sigma,
        lambda: a.lambda,
        truncation: a.truncation.map(|l| l as usize),
        iterations: a.iters.map(|n| n as usize),
        burn_in: a.burn_in,
        seeds,
        corpus: a.input.corpus.clone(),
        format: a.input.format,
        truth: a.truth.clone(),
        out_dir: a.out.clone(),
        ..Default::default()
    }
    .or(file)
}

fn cmd_fit(a: FitArgs, file: PartialConfig, out: &mut Output) -> anyhow::Result<()> {
    let cfg: RunConfig = fit_config(&a, file).resolve();
    if cfg.iterations == 0 {
        return Err(usage("iterations must be at least 1"));
    }
    cfg.hyperparams.validate().map_err(|e| usage(e.to_string()))?;
    let (path, format) = corpus_settings(&CorpusArgs { corpus: cfg.corpus.clone(), format: cfg.format }, &PartialConfig::default())?;
    let corpus = io::load_corpus(&path, format)?;
    let stream = corpus.concatenate();
    let truth = match &cfg.truth {
        Some(t) => Some(aligned_labels(&sequence_shapes(&corpus), &io::read_labels(t)?, &t.display().to_string())?),
        None => None,
    };

    let chains: Vec<(u64, FitReport)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let h = Hyperparams { seed, ..cfg.hyperparams };
            let mut rng = rng_from_seed(seed);
            fit_with_clock(&stream, &h, cfg.iterations, cfg.burn_in, &mut rng, &StdClock::new()).map(|r| (seed, r))
        })
        .collect::<Result<_, _>>()?;

    let multi = chains.len() > 1;
    let name = |stem: &str, seed: u64, ext: &str| {
        if multi {
            cfg.out_dir.join(format!("{stem}-seed{seed}.{ext}"))
        } else {
            cfg.out_dir.join(format!("{stem}.{ext}"))
        }
    };
    let mut scores = Vec::with_capacity(chains.len());
    for (seed, report) in &chains {
        let segs = segmentation(&stream, &report.latent);
        let error_rate = match &truth {
            Some(t) => {
                let predicted: Vec<u32> = segs.iter().flat_map(|(l, _)| l.iter().copied()).collect();
                Some(segmentation_error(&predicted, t)?.error_rate)
            }
            None => None,
        };
        scores.push(RunScores { seed: *seed, error_rate, accuracy: None });
        let mut model = ImmcModelFile::new(
            Hyperparams { seed: *seed, ..cfg.hyperparams },
            corpus.alphabet(),
            report.params(),
            *seed,
            report.burn_in + report.iterations,
        );
        model.state_counts = Some(report.stats.d.clone());
        io::save_model(&name("model", *seed, "json"), &ModelBody::Immc(model))?;
        io::write_segmentation(&name("segmentation", *seed, "jsonl"), &corpus, segs)?;
    }
    let fits: Vec<FitReport> = chains.iter().map(|(_, r)| r.clone()).collect();
    let report = FitRunReport {
        hyperparams: cfg.hyperparams,
        iterations: cfg.iterations,
        burn_in: cfg.burn_in,
        observations: corpus.total_events(),
        sequences: corpus.len(),
        error_rate_definition: ERROR_RATE_DEFINITION.into(),
        summary: run_report(&fits, &scores)?,
        chains: chains
            .iter()
            .map(|(seed, r)| ChainTrace {
                seed: *seed,
                active_states: r.active_states,
                log_likelihood: r.log_likelihood.clone(),
                iteration_seconds: r.iteration_seconds.clone(),
            })
            .collect(),
    };
    let report_path = cfg.out_dir.join("report.json");
    io::write_json(&report_path, &report)?;
    out.note(&format!("wrote models, segmentations and {}", report_path.display()))?;
    if out.json {
        return out.json(&report.summary);
    }
    for r in &report.summary.runs {
        let mut line = format!(
            "seed {}: active_states {} log_likelihood {:.4} seconds/iteration {:.4}",
            r.seed, r.active_states, r.final_log_likelihood, r.mean_iteration_seconds
        );
        if let Some(e) = r.error_rate {
            line.push_str(&format!(" error_rate {e:.6}"));
        }
        out.data(&line)?;
    }
    if let Some(s) = report.summary.error_rate.filter(|s| s.n > 1) {
        out.data(&format!("mean error_rate {:.6} (std {:.6}, {} runs)", s.mean, s.std, s.n))?;
    }
    Ok(())
}

fn sequence_shapes(corpus: &Corpus) -> Vec<(&str, usize)> {
    corpus.sequences().iter().map(|s| (s.id.as_str(), s.len())).collect()
}

fn cmd_baseline(a: BaselineArgs, file: PartialConfig, out: &mut Output) -> anyhow::Result<()> {
    let (path, format) = corpus_settings(&a.input, &file)?;
    let corpus = io::load_corpus(&path, format)?;
    let alphabet = corpus.alphabet().symbols().to_vec();
    let (body, summary) = match a.kind {
        BaselineKind::Ngram => {
            let model = ngram_fit(&corpus, a.order, DEFAULT_DELTA)?;
            (ModelBody::Ngram(NgramModelFile { alphabet, model }), format!("order-{} n-gram", a.order))
        }
        BaselineKind::Fmmc => {
            let fit = match a.components {
                Some(m) => fmmc_best_of(&corpus, m as usize, a.restarts, 500, 1e-6, a.seed)?,
                None => {
                    let candidates: Vec<usize> = (1..=8).collect();
                    fmmc_grid_search(&corpus, &candidates, a.restarts, 500, a.seed)?.1
                }
            };
            let text = format!("FMMC with {} components, objective {:.4}", fit.model.n_components, fit.final_objective());
            (ModelBody::Fmmc(FmmcModelFile { alphabet, model: fit.model }), text)
        }
    };
    let dest = a.out.or_else(|| file.model.clone()).unwrap_or_else(|| {
        file.out_dir.clone().unwrap_or_else(default_out_dir).join(format!("{}.json", body.kind()))
    });
    io::save_model(&dest, &body)?;
    out.note(&format!("wrote {summary} to {}", dest.display()))
}

fn cmd_segment(a: SegmentArgs, file: PartialConfig, out: &mut Output) -> anyhow::Result<()> {
    let model_path = model_path(a.model, &file)?;
    let ModelBody::Immc(model) = io::load_model(&model_path)? else {
        bail!("{}: segmentation needs an IMMC model", model_path.display());
    };
    let (path, format) = corpus_settings(&a.input, &file)?;
    let corpus = io::load_corpus_with(&path, format, &model.alphabet()?)?;
    let stream = corpus.concatenate();
    let latent = decode(&stream, &model.params()?, &model.hyperparams)?;
    let dest = a.out.unwrap_or_else(|| file.out_dir.clone().unwrap_or_else(default_out_dir).join("segmentation.jsonl"));
    io::write_segmentation(&dest, &corpus, segmentation(&stream, &latent))?;
    out.note(&format!("wrote {}", dest.display()))
}

#[derive(Debug, Serialize)]
struct PredictOutput {
    model_kind: &'static str,
    sequences: usize,
    seed: u64,
    accuracy: f64,
}

fn cmd_predict(a: PredictArgs, file: PartialConfig, out: &mut Output) -> anyhow::Result<()> {
    let model_path = model_path(a.model, &file)?;
    let body = io::load_model(&model_path)?;
    let (path, format) = corpus_settings(&a.input, &file)?;
    let corpus = io::load_corpus_with(&path, format, &body.alphabet()?)?;
    let accuracy = match &body {
        ModelBody::Immc(m) => {
            let params = m.params()?;
            prediction_accuracy(&ImmcPredictor { params: &params, hyper: &m.hyperparams }, &corpus, a.seed)?
        }
        ModelBody::Ngram(m) => prediction_accuracy(&m.model, &corpus, a.seed)?,
        ModelBody::Fmmc(m) => prediction_accuracy(&m.model, &corpus, a.seed)?,
    };
    if out.json {
        return out.json(&PredictOutput { model_kind: body.kind(), sequences: corpus.len(), seed: a.seed, accuracy });
    }
    out.data(&format!("{accuracy}"))
}

fn cmd_eval(a: EvalArgs, file: PartialConfig, out: &mut Output) -> anyhow::Result<()> {
    let truth_path = a.truth.or_else(|| file.truth.clone()).ok_or_else(|| usage("no truth file given (use --truth)"))?;
    let predicted = io::read_labels(&a.segmentation)?;
    let truth = io::read_labels(&truth_path)?;
    let shapes: Vec<(&str, usize)> = truth.iter().map(|r| (r.id.as_str(), r.labels.len())).collect();
    let flat_pred = aligned_labels(&shapes, &predicted, &a.segmentation.display().to_string())?;
    let flat_truth: Vec<u32> = truth.iter().flat_map(|r| r.labels.iter().copied()).collect();
    if predicted.len() != truth.len() {
        bail!(
            "{} has {} sequences, {} has {}",
            a.segmentation.display(),
            predicted.len(),
            truth_path.display(),
            truth.len()
        );
    }
    let score: SegmentationScore = segmentation_error(&flat_pred, &flat_truth)?;
    let dest = a.out.unwrap_or_else(|| file.out_dir.clone().unwrap_or_else(default_out_dir).join("score.json"));
    io::write_json(&dest, &score)?;
    out.note(&format!("wrote {}", dest.display()))?;
    if out.json {
        return out.json(&score);
    }
    out.data(&format!("{}", score.error_rate))
}

fn cmd_export_dot(a: ExportDotArgs, file: PartialConfig, out: &mut Output) -> anyhow::Result<()> {
    let model_path = model_path(a.model, &file)?;
    let ModelBody::Immc(model) = io::load_model(&model_path)? else {
        bail!("{}: graph export needs an IMMC model", model_path.display());
    };
    let min_prob = a.min_prob.or(file.min_prob).unwrap_or(crate::config::DEFAULT_MIN_PROB);
    if !(0.0..=1.0).contains(&min_prob) {
        return Err(usage(format!("--min-prob must lie in [0, 1], got {min_prob}")));
    }
    let params = model.params()?;
    let alphabet = model.alphabet()?;
    let dir = a.out.or_else(|| file.out_dir.clone()).unwrap_or_else(default_out_dir);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let active: Vec<usize> = match &model.state_counts {
        Some(d) => (0..params.l()).filter(|&i| d.get(i).copied().unwrap_or(0) > 0).collect(),
        None => (0..params.l()).collect(),
    };
    let mut written = Vec::new();
    for i in active {
        let dest = dir.join(format!("state-{i}.dot"));
        std::fs::write(&dest, dot::state_graph(&params, &alphabet, i, min_prob))
            .with_context(|| format!("writing {}", dest.display()))?;
        written.push(dest);
    }
    for p in &written {
        out.note(&format!("wrote {}", p.display()))?;
    }
    if out.json {
        return out.json(&written);
    }
    out.data(&format!("{}", written.len()))
}

pub fn is_usage_error(e: &anyhow::Error) -> bool {
    e.downcast_ref::<UsageError>().is_some()
}
