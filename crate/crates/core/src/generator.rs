//! Synthetic corpora with known segmentations.
//!
//! A [`GroundTruthProcess`] is an absorbing Markov chain over a subset of the
//! alphabet: it enters through `entry`, moves along `transitions` and stops
//! with the leftover row mass. Segments drawn from a mixture of processes are
//! strung together into sequences; every event is labeled with the index of
//! the process that produced it.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Alphabet, Corpus, Sequence};
use crate::dist::{categorical, poisson, rng_from_seed};
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Segments longer than this abort generation.
pub const MAX_SEGMENT_LEN: usize = 1_000_000;

const ROW_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthProcess {
    pub name: String,
    /// Alphabet codes the process visits.
    pub states: Vec<u32>,
    /// Entry distribution over `states`.
    pub entry: Vec<f64>,
    /// Row-major `n × n` transition mass among `states`.
    pub transitions: Vec<f64>,
    /// `1 - row sum` per state.
    pub exit: Vec<f64>,
}

impl GroundTruthProcess {
    pub fn new(name: impl Into<String>, states: Vec<u32>, entry: Vec<f64>, transitions: Vec<f64>) -> Result<Self> {
        let name = name.into();
        let n = states.len();
        let invalid = |msg: String| Err(Error::InvalidProcess(format!("{name}: {msg}")));
        if n == 0 {
            return invalid("no states".into());
        }
        if entry.len() != n || transitions.len() != n * n {
            return invalid("entry or transition shape does not match the state list".into());
        }
        let mut sorted = states.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != n {
            return invalid("duplicate state".into());
        }
        if entry.iter().chain(&transitions).any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return invalid("negative or non-finite probability".into());
        }
        if (entry.iter().sum::<f64>() - 1.0).abs() > ROW_TOL {
            return invalid("entry distribution does not sum to 1".into());
        }
        let mut exit = Vec::with_capacity(n);
        for s in 0..n {
            let row: f64 = transitions[s * n..(s + 1) * n].iter().sum();
            if row > 1.0 + ROW_TOL {
                return invalid(format!("row {} sums to {row} > 1", states[s]));
            }
            exit.push((1.0 - row).max(0.0));
        }
        let p = GroundTruthProcess { name, states, entry, transitions, exit };
        p.check_termination()?;
        Ok(p)
    }

    /// Every state reachable from the entry must be able to reach an exit,
    /// otherwise some segments never end.
    fn check_termination(&self) -> Result<()> {
        let n = self.states.len();
        let can_exit = |s: usize| self.exit[s] > ROW_TOL;
        // states that can reach an exit, by backward closure
        let mut reaches = (0..n).map(can_exit).collect::<Vec<_>>();
        loop {
            let mut changed = false;
            for s in 0..n {
                if !reaches[s] && (0..n).any(|t| self.transitions[s * n + t] > 0.0 && reaches[t]) {
                    reaches[s] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let mut seen = vec![false; n];
        let mut stack: Vec<usize> = (0..n).filter(|&s| self.entry[s] > 0.0).collect();
        while let Some(s) = stack.pop() {
            if core::mem::replace(&mut seen[s], true) {
                continue;
            }
            if !reaches[s] {
                return Err(Error::InvalidProcess(format!(
                    "{}: state {} is reachable but can never exit",
                    self.name, self.states[s]
                )));
            }
            stack.extend((0..n).filter(|&t| self.transitions[s * n + t] > 0.0 && !seen[t]));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Transition probability between two alphabet codes, `None` when either
    /// is not a state of the process.
    pub fn transition(&self, from: u32, to: u32) -> Option<f64> {
        let n = self.states.len();
        let a = self.states.iter().position(|&s| s == from)?;
        let b = self.states.iter().position(|&s| s == to)?;
        Some(self.transitions[a * n + b])
    }

    pub fn exit_prob(&self, from: u32) -> Option<f64> {
        self.states.iter().position(|&s| s == from).map(|a| self.exit[a])
    }
}

/// A process as written in fixture and spec files: probabilities keyed by
/// symbol label, with an optional explicit `exit` entry per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessTable {
    pub name: String,
    pub entry: BTreeMap<String, f64>,
    pub transitions: BTreeMap<String, BTreeMap<String, f64>>,
}

const EXIT_KEY: &str = "exit";

impl ProcessTable {
    pub fn compile(&self, alphabet: &Alphabet) -> Result<GroundTruthProcess> {
        let code = |label: &str| {
            alphabet
                .encode(label)
                .ok_or_else(|| Error::InvalidProcess(format!("{}: unknown symbol `{label}`", self.name)))
        };
        let mut states = Vec::new();
        for (from, row) in &self.transitions {
            states.push(code(from)?);
            for to in row.keys().filter(|k| *k != EXIT_KEY) {
                states.push(code(to)?);
            }
        }
        for label in self.entry.keys() {
            states.push(code(label)?);
        }
        states.sort_unstable();
        states.dedup();
        let n = states.len();
        let index = |c: u32| states.iter().position(|&s| s == c).expect("collected above");
        let mut entry = vec![0.0; n];
        for (label, &p) in &self.entry {
            entry[index(code(label)?)] = p;
        }
        let mut transitions = vec![0.0; n * n];
        let mut printed_exit = Vec::new();
        for (from, row) in &self.transitions {
            let a = index(code(from)?);
            for (to, &p) in row {
                if to == EXIT_KEY {
                    printed_exit.push((a, p));
                } else {
                    transitions[a * n + index(code(to)?)] = p;
                }
            }
        }
        let process = GroundTruthProcess::new(self.name.clone(), states, entry, transitions)?;
        for (a, p) in printed_exit {
            if (process.exit[a] - p).abs() > ROW_TOL {
                return Err(Error::InvalidProcess(format!(
                    "{}: printed exit {p} of state {} disagrees with its row (exit {})",
                    self.name, process.states[a], process.exit[a]
                )));
            }
        }
        Ok(process)
    }
}

/// A named set of processes over a shared alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct TestCase {
    pub name: String,
    pub alphabet: Alphabet,
    pub processes: Vec<GroundTruthProcess>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCaseFile {
    pub name: String,
    pub symbols: Vec<String>,
    pub processes: Vec<ProcessTable>,
}

impl TestCaseFile {
    pub fn compile(&self) -> Result<TestCase> {
        let alphabet = Alphabet::new(self.symbols.clone())?;
        let processes = self
            .processes
            .iter()
            .map(|p| p.compile(&alphabet))
            .collect::<Result<Vec<_>>>()?;
        Ok(TestCase { name: self.name.clone(), alphabet, processes })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestCaseId {
    I,
    II,
    III,
}

impl core::str::FromStr for TestCaseId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "I" | "1" => Ok(TestCaseId::I),
            "II" | "2" => Ok(TestCaseId::II),
            "III" | "3" => Ok(TestCaseId::III),
            other => Err(Error::InvalidArgument(format!("unknown test case `{other}`"))),
        }
    }
}

/// Observation counts of the small, mid and large benchmark sizes.
pub const SIZE_SMALL: usize = 2_500;
pub const SIZE_MID: usize = 25_000;
pub const SIZE_LARGE: usize = 250_000;

/// The built-in benchmark processes.
///
/// Cases II and III reproduce published process graphs; case I uses three
/// fixed chains on disjoint four-symbol state spaces.
pub fn builtin_testcase(which: TestCaseId) -> TestCase {
    let src = match which {
        TestCaseId::I => include_str!("../fixtures/testcase_I.json"),
        TestCaseId::II => include_str!("../fixtures/testcase_II.json"),
        TestCaseId::III => include_str!("../fixtures/testcase_III.json"),
    };
    let file: TestCaseFile = serde_json::from_str(src).expect("checked-in fixture parses");
    file.compile().expect("checked-in fixture is valid")
}

/// Draw one segment: a start state from `entry`, then transitions until the
/// exit is taken.
pub fn sample_segment<R: Rng + ?Sized>(process: &GroundTruthProcess, rng: &mut R) -> Result<Vec<u32>> {
    let n = process.len();
    let mut s = categorical(rng, &process.entry).ok_or_else(|| Error::InvalidProcess(process.name.clone()))?;
    let mut out = Vec::new();
    let mut row = vec![0.0; n + 1];
    loop {
        out.push(process.states[s]);
        if out.len() > MAX_SEGMENT_LEN {
            return Err(Error::RunawaySegment { process: process.name.clone(), limit: MAX_SEGMENT_LEN });
        }
        row[..n].copy_from_slice(&process.transitions[s * n..(s + 1) * n]);
        row[n] = process.exit[s];
        match categorical(rng, &row) {
            Some(next) if next < n => s = next,
            _ => return Ok(out),
        }
    }
}

/// How synthetic segments are assembled into a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub alphabet: Alphabet,
    pub processes: Vec<GroundTruthProcess>,
    /// Probability of drawing each process for a segment.
    pub mixing: Vec<f64>,
    pub target_observations: usize,
    /// Segments per sequence are `1 + Poisson(mean - 1)`.
    pub mean_segments_per_sequence: f64,
    pub seed: u64,
}

pub const DEFAULT_MEAN_SEGMENTS: f64 = 4.0;

impl SyntheticSpec {
    /// Uniform mixing over the processes of a test case.
    pub fn from_testcase(case: &TestCase, target_observations: usize, seed: u64) -> Self {
        let m = case.processes.len();
        SyntheticSpec {
            alphabet: case.alphabet.clone(),
            processes: case.processes.clone(),
            mixing: vec![1.0 / m as f64; m],
            target_observations,
            mean_segments_per_sequence: DEFAULT_MEAN_SEGMENTS,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.processes.is_empty() {
            return Err(Error::InvalidArgument("no processes".into()));
        }
        if self.mixing.len() != self.processes.len()
            || !crate::math::is_probability_vector(&self.mixing, ROW_TOL)
        {
            return Err(Error::InvalidArgument("mixing must be a probability vector over the processes".into()));
        }
        if self.target_observations == 0 {
            return Err(Error::InvalidArgument("target_observations must be at least 1".into()));
        }
        if !(self.mean_segments_per_sequence >= 1.0) {
            return Err(Error::InvalidArgument("mean_segments_per_sequence must be at least 1".into()));
        }
        let n = self.alphabet.len() as u32;
        if self.processes.iter().any(|p| p.states.iter().any(|&s| s >= n)) {
            return Err(Error::InvalidArgument("process state outside the alphabet".into()));
        }
        Ok(())
    }
}

/// JSON form of a [`SyntheticSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpecFile {
    pub symbols: Vec<String>,
    pub processes: Vec<ProcessTable>,
    /// Defaults to uniform.
    #[serde(default)]
    pub mixing: Option<Vec<f64>>,
    pub target_observations: usize,
    #[serde(default = "default_mean_segments")]
    pub mean_segments_per_sequence: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_mean_segments() -> f64 {
    DEFAULT_MEAN_SEGMENTS
}

impl SyntheticSpecFile {
    pub fn compile(&self) -> Result<SyntheticSpec> {
        let case = TestCaseFile {
            name: String::new(),
            symbols: self.symbols.clone(),
            processes: self.processes.clone(),
        }
        .compile()?;
        let m = case.processes.len();
        let spec = SyntheticSpec {
            alphabet: case.alphabet,
            processes: case.processes,
            mixing: self.mixing.clone().unwrap_or_else(|| vec![1.0 / m as f64; m]),
            target_observations: self.target_observations,
            mean_segments_per_sequence: self.mean_segments_per_sequence,
            seed: self.seed,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// A generated corpus with the generating process index of every event.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCorpus {
    pub corpus: Corpus,
    pub labels: Vec<Vec<u32>>,
    /// Offset of every segment start within its sequence.
    pub segment_starts: Vec<Vec<usize>>,
}

impl LabeledCorpus {
    pub fn flat_labels(&self) -> Vec<u32> {
        self.labels.concat()
    }
}

/// Assemble segments into sequences until `target_observations` is reached.
/// The sequence in progress is closed as soon as the target is met.
pub fn generate_corpus(spec: &SyntheticSpec) -> Result<LabeledCorpus> {
    spec.validate()?;
    let mut rng = rng_from_seed(spec.seed);
    let mut sequences = Vec::new();
    let mut labels = Vec::new();
    let mut segment_starts = Vec::new();
    let mut total = 0usize;
    while total < spec.target_observations {
        let n_segments = 1 + poisson(&mut rng, spec.mean_segments_per_sequence - 1.0) as usize;
        let mut events = Vec::new();
        let mut seq_labels = Vec::new();
        let mut starts = Vec::with_capacity(n_segments);
        for _ in 0..n_segments {
            let which = categorical(&mut rng, &spec.mixing).expect("validated mixing");
            let seg = sample_segment(&spec.processes[which], &mut rng)?;
            starts.push(events.len());
            total += seg.len();
            seq_labels.extend(core::iter::repeat(which as u32).take(seg.len()));
            events.extend(seg);
            if total >= spec.target_observations {
                break;
            }
        }
        sequences.push(Sequence::new(format!("seq-{:05}", sequences.len()), events));
        labels.push(seq_labels);
        segment_starts.push(starts);
    }
    Ok(LabeledCorpus {
        corpus: Corpus::new(spec.alphabet.clone(), sequences)?,
        labels,
        segment_starts,
    })
}

/// Forward-simulate sequences from model parameters.
///
/// Each sequence opens with a super state drawn from `β`; a segment enters
/// through `θ[z][B]` (restricted to real symbols), continues along `θ[z]`
/// and closes when the boundary is drawn; the next segment's super state
/// follows `π[z]`. Sequences hold `1 + Poisson(mean_segments - 1)` segments.
/// Labels are the super state of every event.
pub fn sample_from_immc<R: Rng + ?Sized>(
    params: &ModelParams,
    alphabet: &Alphabet,
    n_sequences: usize,
    mean_segments: f64,
    rng: &mut R,
) -> Result<LabeledCorpus> {
    if alphabet.k() != params.k() {
        return Err(Error::ShapeMismatch(format!(
            "alphabet has K = {}, parameters K = {}",
            alphabet.k(),
            params.k()
        )));
    }
    if n_sequences == 0 {
        return Err(Error::EmptyCorpus);
    }
    let b = params.boundary();
    let mut sequences = Vec::with_capacity(n_sequences);
    let mut labels = Vec::with_capacity(n_sequences);
    let mut segment_starts = Vec::with_capacity(n_sequences);
    for s in 0..n_sequences {
        let n_segments = 1 + poisson(rng, (mean_segments - 1.0).max(0.0)) as usize;
        let mut z = categorical(rng, &params.beta).ok_or(Error::ZeroMass { position: 0 })?;
        let mut events = Vec::new();
        let mut seq_labels = Vec::new();
        let mut starts = Vec::with_capacity(n_segments);
        for seg in 0..n_segments {
            starts.push(events.len());
            if seg > 0 {
                z = categorical(rng, params.pi_row(z)).ok_or(Error::ZeroMass { position: events.len() })?;
            }
            let entry = &params.theta_row(z, b)[..b];
            let mut cur = categorical(rng, entry).ok_or(Error::ZeroMass { position: events.len() })?;
            let mut len = 0usize;
            loop {
                events.push(cur as u32);
                seq_labels.push(z as u32);
                len += 1;
                if len > MAX_SEGMENT_LEN {
                    return Err(Error::RunawaySegment { process: format!("super state {z}"), limit: MAX_SEGMENT_LEN });
                }
                match categorical(rng, params.theta_row(z, cur)) {
                    Some(next) if next != b => cur = next,
                    Some(_) => break,
                    None => return Err(Error::ZeroMass { position: events.len() }),
                }
            }
        }
        sequences.push(Sequence::new(format!("sim-{s:05}"), events));
        labels.push(seq_labels);
        segment_starts.push(starts);
    }
    Ok(LabeledCorpus {
        corpus: Corpus::new(alphabet.clone(), sequences)?,
        labels,
        segment_starts,
    })
}
