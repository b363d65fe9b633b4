//! Categorical sequences, their integer encoding, and the boundary-separated
//! stream the sampler runs over.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::rng_from_seed;
use crate::error::{Error, Result};

/// Label printed for the boundary code. It can never be a user symbol.
pub const BOUNDARY_LABEL: &str = "<B>";

/// Ordered observation labels. Codes `0..len` are real symbols and code
/// `len` is the boundary `B`, so `K = len + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Alphabet {
    symbols: Vec<String>,
    index: BTreeMap<String, u32>,
}

impl Alphabet {
    pub fn new(symbols: Vec<String>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::InvalidAlphabet("no symbols".into()));
        }
        let mut index = BTreeMap::new();
        for (i, s) in symbols.iter().enumerate() {
            if s.is_empty() {
                return Err(Error::InvalidAlphabet("empty symbol".into()));
            }
            if s == BOUNDARY_LABEL {
                return Err(Error::InvalidAlphabet(alloc::format!(
                    "`{BOUNDARY_LABEL}` is reserved for the boundary"
                )));
            }
            if index.insert(s.clone(), i as u32).is_some() {
                return Err(Error::InvalidAlphabet(alloc::format!("duplicate symbol `{s}`")));
            }
        }
        Ok(Alphabet { symbols, index })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Number of codes including the boundary.
    pub fn k(&self) -> usize {
        self.symbols.len() + 1
    }

    pub fn boundary(&self) -> u32 {
        self.symbols.len() as u32
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn encode(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn decode(&self, code: u32) -> Option<&str> {
        if code == self.boundary() {
            Some(BOUNDARY_LABEL)
        } else {
            self.symbols.get(code as usize).map(String::as_str)
        }
    }
}

impl TryFrom<Vec<String>> for Alphabet {
    type Error = Error;

    fn try_from(symbols: Vec<String>) -> Result<Self> {
        Alphabet::new(symbols)
    }
}

impl From<Alphabet> for Vec<String> {
    fn from(a: Alphabet) -> Self {
        a.symbols
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sequence {
    pub id: String,
    pub events: Vec<u32>,
}

impl Sequence {
    pub fn new(id: impl Into<String>, events: Vec<u32>) -> Self {
        Sequence { id: id.into(), events }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    alphabet: Alphabet,
    sequences: Vec<Sequence>,
}

impl Corpus {
    /// Checks that every sequence is non-empty and encodes against `alphabet`.
    pub fn new(alphabet: Alphabet, sequences: Vec<Sequence>) -> Result<Self> {
        if sequences.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let n = alphabet.len();
        for s in &sequences {
            if s.events.is_empty() {
                return Err(Error::EmptySequence { id: s.id.clone() });
            }
            if let Some(&code) = s.events.iter().find(|&&c| c as usize >= n) {
                return Err(Error::CodeOutOfRange { code, alphabet_len: n });
            }
        }
        Ok(Corpus { alphabet, sequences })
    }

    /// Encode raw token sequences, assigning codes in first-appearance order.
    pub fn from_tokens<I, S, T>(records: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<T>)>,
        S: Into<String>,
        T: AsRef<str>,
    {
        let mut symbols: Vec<String> = Vec::new();
        let mut index: BTreeMap<String, u32> = BTreeMap::new();
        let mut sequences = Vec::new();
        for (id, tokens) in records {
            let id = id.into();
            if tokens.is_empty() {
                return Err(Error::EmptySequence { id });
            }
            let mut events = Vec::with_capacity(tokens.len());
            for tok in &tokens {
                let tok = tok.as_ref();
                if tok.is_empty() {
                    return Err(Error::EmptyToken { id });
                }
                let code = match index.get(tok) {
                    Some(&c) => c,
                    None => {
                        let c = symbols.len() as u32;
                        symbols.push(tok.to_string());
                        index.insert(tok.to_string(), c);
                        c
                    }
                };
                events.push(code);
            }
            sequences.push(Sequence { id, events });
        }
        if sequences.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        Corpus::new(Alphabet::new(symbols)?, sequences)
    }

    /// Re-encode token sequences against an existing alphabet, e.g. a test
    /// corpus against the alphabet stored in a fitted model.
    pub fn encode_with<I, S, T>(alphabet: &Alphabet, records: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<T>)>,
        S: Into<String>,
        T: AsRef<str>,
    {
        let mut sequences = Vec::new();
        for (id, tokens) in records {
            let id = id.into();
            let events = tokens
                .iter()
                .map(|t| {
                    alphabet
                        .encode(t.as_ref())
                        .ok_or_else(|| Error::Parse(alloc::format!("unknown symbol `{}` in `{id}`", t.as_ref())))
                })
                .collect::<Result<Vec<_>>>()?;
            sequences.push(Sequence { id, events });
        }
        Corpus::new(alphabet.clone(), sequences)
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn sequences(&self) -> &[Sequence] {
        &self.sequences
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn total_events(&self) -> usize {
        self.sequences.iter().map(Sequence::len).sum()
    }

    /// Decoded token view of one sequence.
    pub fn tokens(&self, seq: usize) -> Vec<&str> {
        self.sequences[seq]
            .events
            .iter()
            .map(|&c| self.alphabet.decode(c).unwrap_or(BOUNDARY_LABEL))
            .collect()
    }

    pub fn concatenate(&self) -> ConcatenatedStream {
        concatenate(self)
    }

    fn subset(&self, indices: &[usize]) -> Corpus {
        Corpus {
            alphabet: self.alphabet.clone(),
            sequences: indices.iter().map(|&i| self.sequences[i].clone()).collect(),
        }
    }
}

/// All sequences joined into one stream: `B s_1 B s_2 B ... s_S B`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConcatenatedStream {
    pub codes: Vec<u32>,
    /// Start index in `codes` of each original sequence.
    pub offsets: Vec<usize>,
    pub boundary: u32,
}

impl ConcatenatedStream {
    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn k(&self) -> usize {
        self.boundary as usize + 1
    }

    pub fn is_boundary(&self, t: usize) -> bool {
        self.codes[t] == self.boundary
    }

    /// Undo [`concatenate`]: drop boundary codes and split at them.
    pub fn split(&self) -> Vec<Vec<u32>> {
        self.codes
            .split(|&c| c == self.boundary)
            .filter(|s| !s.is_empty())
            .map(<[u32]>::to_vec)
            .collect()
    }

    /// Stream positions holding real events, in order.
    pub fn event_positions(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.codes.len()).filter(move |&t| self.codes[t] != self.boundary)
    }
}

pub fn concatenate(corpus: &Corpus) -> ConcatenatedStream {
    let boundary = corpus.alphabet.boundary();
    let mut codes = Vec::with_capacity(corpus.total_events() + corpus.len() + 1);
    let mut offsets = Vec::with_capacity(corpus.len());
    codes.push(boundary);
    for s in &corpus.sequences {
        offsets.push(codes.len());
        codes.extend_from_slice(&s.events);
        codes.push(boundary);
    }
    ConcatenatedStream { codes, offsets, boundary }
}

/// Seeded disjoint split; the test side holds `round(test_fraction * S)`
/// sequences, clamped to `[1, S - 1]`.
pub fn split_train_test(corpus: &Corpus, test_fraction: f64, seed: u64) -> Result<(Corpus, Corpus)> {
    let s = corpus.len();
    if s < 2 {
        return Err(Error::TooFewSequences { needed: 2, found: s });
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "test fraction {test_fraction} outside (0, 1)"
        )));
    }
    let n_test = (libm::round(test_fraction * s as f64) as usize).clamp(1, s - 1);
    let mut order: Vec<usize> = (0..s).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let (test, train) = order.split_at(n_test);
    let mut train = train.to_vec();
    let mut test = test.to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((corpus.subset(&train), corpus.subset(&test)))
}

/// Cut at a uniform position `c` in `[1, len - 1]`; returns the first `c`
/// events and the event that follows them.
pub fn cut_for_prediction(seq: &Sequence, seed: u64) -> Result<(Sequence, u32)> {
    let mut rng = rng_from_seed(seed);
    cut_with_rng(seq, &mut rng)
}

pub(crate) fn cut_with_rng<R: Rng + ?Sized>(seq: &Sequence, rng: &mut R) -> Result<(Sequence, u32)> {
    let n = seq.events.len();
    if n < 2 {
        return Err(Error::SequenceTooShort { id: seq.id.clone(), len: n });
    }
    let c = rng.gen_range(1..n);
    Ok((Sequence::new(seq.id.clone(), seq.events[..c].to_vec()), seq.events[c]))
}
