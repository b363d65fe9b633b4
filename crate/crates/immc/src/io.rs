//! File formats: corpora, label sidecars, segmentations, model files and
//! reports.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use immc_core::baselines::{FmmcModel, NgramModel};
use immc_core::generator::LabeledCorpus;
use immc_core::{Alphabet, Corpus, Hyperparams, ModelParams};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, IoError, Result};

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

impl CorpusFormat {
    /// Guess from the file extension; anything but `.csv` is JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => CorpusFormat::Csv,
            _ => CorpusFormat::Jsonl,
        }
    }
}

impl FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "csv" => Ok(CorpusFormat::Csv),
            other => Err(format!("unknown corpus format `{other}` (expected jsonl or csv)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub events: Vec<String>,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(io_err(path))?))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

/// Parse one JSON object per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (n, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| IoError::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = create(path)?;
    for rec in records {
        serde_json::to_writer(&mut w, &rec).map_err(|e| IoError::Format { path: path.to_path_buf(), message: e.to_string() })?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| IoError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| IoError::Format { path: path.to_path_buf(), message: e.to_string() })?;
    w.write_all(b"\n").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

/// CSV rows `id,event`, one sequence per run of equal ids. A header row
/// `id,event` is optional.
fn read_csv_records(path: &Path) -> Result<Vec<CorpusRecord>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(open(path)?);
    let mut out: Vec<CorpusRecord> = Vec::new();
    for (n, row) in reader.records().enumerate() {
        let line = n + 1;
        let parse = |message: String| IoError::Parse { path: path.to_path_buf(), line, message };
        let row = row.map_err(|e| parse(e.to_string()))?;
        if row.len() != 2 {
            return Err(parse(format!("expected 2 columns `id,event`, found {}", row.len())));
        }
        let (id, event) = (&row[0], &row[1]);
        if line == 1 && id == "id" && event == "event" {
            continue;
        }
        if event.is_empty() {
            return Err(parse(format!("empty event in sequence `{id}`")));
        }
        match out.last_mut() {
            Some(last) if last.id == id => last.events.push(event.to_string()),
            _ => {
                if out.iter().any(|r| r.id == id) {
                    return Err(parse(format!("rows of sequence `{id}` are not contiguous")));
                }
                out.push(CorpusRecord { id: id.to_string(), events: vec![event.to_string()] });
            }
        }
    }
    Ok(out)
}

pub fn read_corpus_records(path: &Path, format: CorpusFormat) -> Result<Vec<CorpusRecord>> {
    let records: Vec<CorpusRecord> = match format {
        CorpusFormat::Jsonl => read_jsonl(path)?,
        CorpusFormat::Csv => read_csv_records(path)?,
    };
    Ok(records)
}

/// Load a corpus, building the alphabet in first-appearance order.
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus> {
    let records = read_corpus_records(path, format)?;
    Ok(Corpus::from_tokens(records.into_iter().map(|r| (r.id, r.events)))?)
}

/// Load a corpus against a fixed alphabet; unknown symbols are an error.
pub fn load_corpus_with(path: &Path, format: CorpusFormat, alphabet: &Alphabet) -> Result<Corpus> {
    let records = read_corpus_records(path, format)?;
    Ok(Corpus::encode_with(alphabet, records.into_iter().map(|r| (r.id, r.events)))?)
}

pub fn write_corpus(path: &Path, corpus: &Corpus) -> Result<()> {
    write_jsonl(
        path,
        (0..corpus.len()).map(|i| CorpusRecord {
            id: corpus.sequences()[i].id.clone(),
            events: corpus.tokens(i).into_iter().map(String::from).collect(),
        }),
    )
}

/// Per-sequence labels: the ground-truth sidecar and segmentation outputs
/// share this shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub id: String,
    pub labels: Vec<u32>,
    /// Offsets of segment starts within the sequence.
    #[serde(default)]
    pub boundaries: Vec<usize>,
}

pub fn write_truth(path: &Path, g: &LabeledCorpus) -> Result<()> {
    write_jsonl(
        path,
        g.corpus.sequences().iter().zip(&g.labels).zip(&g.segment_starts).map(|((s, labels), starts)| LabelRecord {
            id: s.id.clone(),
            labels: labels.clone(),
            boundaries: starts.clone(),
        }),
    )
}

pub fn write_segmentation(path: &Path, corpus: &Corpus, segments: Vec<(Vec<u32>, Vec<usize>)>) -> Result<()> {
    write_jsonl(
        path,
        corpus.sequences().iter().zip(segments).map(|(s, (labels, boundaries))| LabelRecord {
            id: s.id.clone(),
            labels,
            boundaries,
        }),
    )
}

pub fn read_labels(path: &Path) -> Result<Vec<LabelRecord>> {
    read_jsonl(path)
}

/// A fitted IMMC model as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImmcModelFile {
    pub hyperparams: Hyperparams,
    pub alphabet: Vec<String>,
    pub beta: Vec<f64>,
    pub pi: Vec<Vec<f64>>,
    pub psi: Vec<Vec<f64>>,
    pub theta: Vec<Vec<Vec<f64>>>,
    pub seed: u64,
    pub iterations_run: usize,
    /// Emissions per super state in the final sweep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_counts: Option<Vec<u64>>,
}

impl ImmcModelFile {
    pub fn new(h: Hyperparams, alphabet: &Alphabet, params: &ModelParams, seed: u64, iterations_run: usize) -> Self {
        let nested = params.to_nested();
        ImmcModelFile {
            hyperparams: h,
            alphabet: alphabet.symbols().to_vec(),
            beta: nested.beta,
            pi: nested.pi,
            psi: nested.psi,
            theta: nested.theta,
            seed,
            iterations_run,
            state_counts: None,
        }
    }

    pub fn params(&self) -> immc_core::Result<ModelParams> {
        ModelParams::from_nested(&immc_core::model::NestedParams {
            beta: self.beta.clone(),
            pi: self.pi.clone(),
            psi: self.psi.clone(),
            theta: self.theta.clone(),
        })
    }

    pub fn alphabet(&self) -> immc_core::Result<Alphabet> {
        Alphabet::new(self.alphabet.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FmmcModelFile {
    pub alphabet: Vec<String>,
    #[serde(flatten)]
    pub model: FmmcModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgramModelFile {
    pub alphabet: Vec<String>,
    #[serde(flatten)]
    pub model: NgramModel,
}

/// Every model file carries `format_version` and a `model_kind`
/// discriminator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model_kind", rename_all = "lowercase")]
pub enum ModelBody {
    Immc(ImmcModelFile),
    Fmmc(FmmcModelFile),
    Ngram(NgramModelFile),
}

impl ModelBody {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelBody::Immc(_) => "immc",
            ModelBody::Fmmc(_) => "fmmc",
            ModelBody::Ngram(_) => "ngram",
        }
    }

    pub fn alphabet(&self) -> immc_core::Result<Alphabet> {
        let symbols = match self {
            ModelBody::Immc(m) => &m.alphabet,
            ModelBody::Fmmc(m) => &m.alphabet,
            ModelBody::Ngram(m) => &m.alphabet,
        };
        Alphabet::new(symbols.clone())
    }
}

#[derive(Serialize)]
struct Envelope<'a> {
    format_version: u64,
    #[serde(flatten)]
    body: &'a ModelBody,
}

pub fn save_model(path: &Path, body: &ModelBody) -> Result<()> {
    write_json(path, &Envelope { format_version: FORMAT_VERSION, body })
}

pub fn load_model(path: &Path) -> Result<ModelBody> {
    let format = |message: String| IoError::Format { path: path.to_path_buf(), message };
    let mut value: serde_json::Value = read_json(path)?;
    let obj = value.as_object_mut().ok_or_else(|| format("model file is not a JSON object".into()))?;
    let version = obj
        .remove("format_version")
        .ok_or_else(|| format("missing `format_version`".into()))?
        .as_u64()
        .ok_or_else(|| format("`format_version` is not an integer".into()))?;
    if version != FORMAT_VERSION {
        return Err(IoError::VersionMismatch { path: path.to_path_buf(), found: version, expected: FORMAT_VERSION });
    }
    obj.entry("model_kind").or_insert_with(|| "immc".into());
    let body: ModelBody = serde_json::from_value(value).map_err(|e| format(e.to_string()))?;
    let check = |r: immc_core::Result<()>| r.map_err(|source| IoError::Model { path: path.to_path_buf(), source });
    match &body {
        ModelBody::Immc(m) => {
            let p = m.params().map_err(|source| IoError::Model { path: path.to_path_buf(), source })?;
            if p.k() != m.alphabet.len() + 1 || p.l() != m.hyperparams.truncation {
                return Err(format(format!(
                    "parameters have L = {}, K = {} but hyperparameters say L = {} and the alphabet has {} symbols",
                    p.l(),
                    p.k(),
                    m.hyperparams.truncation,
                    m.alphabet.len()
                )));
            }
            check(m.hyperparams.validate())?;
        }
        ModelBody::Fmmc(m) => {
            let (c, s) = (m.model.n_components, m.model.n_symbols);
            if s != m.alphabet.len() || m.model.weights.len() != c || m.model.initial.len() != c * s || m.model.transitions.len() != c * s * s {
                return Err(format("FMMC arrays do not match their declared sizes".into()));
            }
        }
        ModelBody::Ngram(m) => {
            if m.model.n_symbols != m.alphabet.len() || m.model.counts.values().any(|c| c.len() != m.model.n_symbols) {
                return Err(format("n-gram counts do not match the alphabet".into()));
            }
        }
    }
    check(body.alphabet().map(|_| ()))?;
    Ok(body)
}
