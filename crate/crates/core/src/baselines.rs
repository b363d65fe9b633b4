//! Comparison models: a finite mixture of Markov chains fit by EM, and
//! global order-k Markov models with backoff.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{split_train_test, Corpus};
use crate::dist::{dirichlet_into, rng_from_seed};
use crate::error::{Error, Result};
use crate::eval::NextEventPredictor;
use crate::math::{argmax, exp, ln, log_sum_exp};

/// Smoothing constant shared by both baselines.
pub const DEFAULT_DELTA: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FmmcModel {
    pub n_components: usize,
    /// Number of symbols `s`.
    pub n_symbols: usize,
    pub weights: Vec<f64>,
    /// `M × s` initial distributions.
    pub initial: Vec<f64>,
    /// `M × s × s` transition matrices.
    pub transitions: Vec<f64>,
}

impl FmmcModel {
    pub fn initial_row(&self, c: usize) -> &[f64] {
        &self.initial[c * self.n_symbols..(c + 1) * self.n_symbols]
    }

    pub fn transition_row(&self, c: usize, from: usize) -> &[f64] {
        let s = self.n_symbols;
        let at = (c * s + from) * s;
        &self.transitions[at..at + s]
    }

    /// `ln p(events | component c)`; an empty slice has likelihood 1.
    pub fn component_log_likelihood(&self, c: usize, events: &[u32]) -> f64 {
        let Some(&first) = events.first() else {
            return 0.0;
        };
        let mut ll = ln(self.initial_row(c)[first as usize]);
        for w in events.windows(2) {
            ll += ln(self.transition_row(c, w[0] as usize)[w[1] as usize]);
        }
        ll
    }

    /// `ln p(events)` under the mixture.
    pub fn log_likelihood(&self, events: &[u32]) -> f64 {
        let terms: Vec<f64> = (0..self.n_components)
            .map(|c| ln(self.weights[c]) + self.component_log_likelihood(c, events))
            .collect();
        log_sum_exp(&terms)
    }

    /// Component maximizing `weight × likelihood`, lowest index on ties.
    pub fn classify(&self, events: &[u32]) -> usize {
        let scores: Vec<f64> = (0..self.n_components)
            .map(|c| ln(self.weights[c]) + self.component_log_likelihood(c, events))
            .collect();
        argmax(&scores).unwrap_or(0)
    }
}

/// A fitted mixture and the penalized log-likelihood after every EM step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FmmcFit {
    pub model: FmmcModel,
    /// Data log-likelihood plus the log density of the smoothing prior; EM
    /// never decreases it.
    pub objective: Vec<f64>,
}

impl FmmcFit {
    pub fn final_objective(&self) -> f64 {
        self.objective.last().copied().unwrap_or(f64::NEG_INFINITY)
    }
}

fn check_symbols(corpus: &Corpus) -> Result<usize> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(corpus.alphabet().len())
}

/// EM for a mixture of `m` first-order chains over whole sequences, started
/// from random responsibilities. Stops after `max_iters` steps or once the
/// objective gains less than `tol`.
pub fn fmmc_fit<R: Rng + ?Sized>(corpus: &Corpus, m: usize, max_iters: usize, tol: f64, rng: &mut R) -> Result<FmmcFit> {
    fmmc_fit_with_delta(corpus, m, max_iters, tol, DEFAULT_DELTA, rng)
}

pub fn fmmc_fit_with_delta<R: Rng + ?Sized>(
    corpus: &Corpus,
    m: usize,
    max_iters: usize,
    tol: f64,
    delta: f64,
    rng: &mut R,
) -> Result<FmmcFit> {
    if m == 0 {
        return Err(Error::InvalidArgument("FMMC needs at least one component".into()));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    let s = check_symbols(corpus)?;
    let seqs: Vec<&[u32]> = corpus.sequences().iter().map(|q| q.events.as_slice()).collect();
    let n = seqs.len();
    let mut resp = vec![0.0; n * m];
    let ones = vec![1.0; m];
    for row in resp.chunks_mut(m) {
        dirichlet_into(rng, &ones, row);
    }
    let mut model = FmmcModel {
        n_components: m,
        n_symbols: s,
        weights: vec![0.0; m],
        initial: vec![0.0; m * s],
        transitions: vec![0.0; m * s * s],
    };
    let mut objective = Vec::new();
    let mut scores = vec![0.0; m];
    for _ in 0..max_iters.max(1) {
        m_step(&seqs, &resp, delta, &mut model);
        let mut ll = 0.0;
        for (q, row) in seqs.iter().zip(resp.chunks_mut(m)) {
            for (c, sc) in scores.iter_mut().enumerate() {
                *sc = ln(model.weights[c]) + model.component_log_likelihood(c, q);
            }
            let lse = log_sum_exp(&scores);
            ll += lse;
            for (r, sc) in row.iter_mut().zip(&scores) {
                *r = exp(sc - lse);
            }
        }
        let obj = ll + log_prior(&model, delta);
        let gain = objective.last().map(|&prev| obj - prev);
        objective.push(obj);
        if gain.is_some_and(|g| g < tol) {
            break;
        }
    }
    Ok(FmmcFit { model, objective })
}

fn m_step(seqs: &[&[u32]], resp: &[f64], delta: f64, model: &mut FmmcModel) {
    let (m, s) = (model.n_components, model.n_symbols);
    model.weights.iter_mut().for_each(|w| *w = delta);
    model.initial.iter_mut().for_each(|w| *w = delta);
    model.transitions.iter_mut().for_each(|w| *w = delta);
    for (q, row) in seqs.iter().zip(resp.chunks(m)) {
        for (c, &r) in row.iter().enumerate() {
            if r == 0.0 {
                continue;
            }
            model.weights[c] += r;
            if let Some(&first) = q.first() {
                model.initial[c * s + first as usize] += r;
            }
            for w in q.windows(2) {
                model.transitions[(c * s + w[0] as usize) * s + w[1] as usize] += r;
            }
        }
    }
    normalize_chunks(&mut model.weights, m);
    normalize_chunks(&mut model.initial, s);
    normalize_chunks(&mut model.transitions, s);
}

fn normalize_chunks(v: &mut [f64], width: usize) {
    for row in v.chunks_mut(width) {
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= total);
    }
}

/// Log density, up to a constant, of the symmetric `Dir(1 + δ)` priors the
/// smoothed M-step maximizes against.
fn log_prior(model: &FmmcModel, delta: f64) -> f64 {
    let sum_ln = |v: &[f64]| v.iter().map(|&x| ln(x)).sum::<f64>();
    delta * (sum_ln(&model.weights) + sum_ln(&model.initial) + sum_ln(&model.transitions))
}

/// Best of `n_inits` EM runs by final objective, each with its own seed
/// derived from `seed`.
pub fn fmmc_best_of(corpus: &Corpus, m: usize, n_inits: usize, max_iters: usize, tol: f64, seed: u64) -> Result<FmmcFit> {
    let mut best: Option<FmmcFit> = None;
    for run in 0..n_inits.max(1) as u64 {
        let mut rng = rng_from_seed(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(run));
        let fit = fmmc_fit(corpus, m, max_iters, tol, &mut rng)?;
        if best.as_ref().is_none_or(|b| fit.final_objective() > b.final_objective()) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one run"))
}

/// Label each segment of `events` cut at `boundaries` (segment start
/// offsets; 0 may be omitted) with its most likely component.
pub fn fmmc_segment_given_boundaries(model: &FmmcModel, events: &[u32], boundaries: &[usize]) -> Result<Vec<usize>> {
    let mut cuts: Vec<usize> = boundaries.to_vec();
    if cuts.first() != Some(&0) {
        cuts.insert(0, 0);
    }
    if cuts.windows(2).any(|w| w[0] >= w[1]) || cuts.last().is_some_and(|&c| c >= events.len() && !events.is_empty()) {
        return Err(Error::InvalidArgument("segment boundaries must be increasing offsets inside the sequence".into()));
    }
    cuts.push(events.len());
    Ok(cuts.windows(2).map(|w| model.classify(&events[w[0]..w[1]])).collect())
}

/// Pick the number of components by held-out likelihood on a 90/10 split.
/// Returns the chosen `M` and the model refit on the full corpus.
pub fn fmmc_grid_search(
    corpus: &Corpus,
    candidates: &[usize],
    n_inits: usize,
    max_iters: usize,
    seed: u64,
) -> Result<(usize, FmmcFit)> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no candidate component counts".into()));
    }
    let (train, held_out) = split_train_test(corpus, 0.1, seed)?;
    let mut best = (f64::NEG_INFINITY, candidates[0]);
    for &m in candidates {
        let fit = fmmc_best_of(&train, m, n_inits, max_iters, 1e-6, seed)?;
        let score: f64 = held_out.sequences().iter().map(|q| fit.model.log_likelihood(&q.events)).sum();
        if score > best.0 {
            best = (score, m);
        }
    }
    let fit = fmmc_best_of(corpus, best.1, n_inits, max_iters, 1e-6, seed)?;
    Ok((best.1, fit))
}

/// Global order-k Markov model: next-symbol counts for every history of
/// length `0..=k` seen inside a sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgramModel {
    pub order: usize,
    pub n_symbols: usize,
    pub delta: f64,
    /// Counts keyed by history, oldest symbol first.
    #[serde(with = "history_counts")]
    pub counts: BTreeMap<Vec<u32>, Vec<u64>>,
}

/// Serializes the count map as a list of `(history, counts)` pairs, since
/// JSON objects only allow string keys.
mod history_counts {
    use alloc::collections::BTreeMap;
    use alloc::vec::Vec;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(map: &BTreeMap<Vec<u32>, Vec<u64>>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(map.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<Vec<u32>, Vec<u64>>, D::Error> {
        Ok(Vec::<(Vec<u32>, Vec<u64>)>::deserialize(d)?.into_iter().collect())
    }
}

impl NgramModel {
    /// Smoothed next-symbol distribution after exactly `history`, or `None`
    /// when that history never occurred.
    pub fn distribution(&self, history: &[u32]) -> Option<Vec<f64>> {
        let counts = self.counts.get(history)?;
        let total = counts.iter().sum::<u64>() as f64 + self.delta * self.n_symbols as f64;
        Some(counts.iter().map(|&c| (c as f64 + self.delta) / total).collect())
    }

    /// The longest suffix of `prefix` (at most `order` symbols) with counts.
    pub fn backoff_history<'a>(&self, prefix: &'a [u32]) -> &'a [u32] {
        let longest = prefix.len().min(self.order);
        (0..=longest)
            .rev()
            .map(|h| &prefix[prefix.len() - h..])
            .find(|h| self.counts.contains_key(*h))
            .unwrap_or(&prefix[prefix.len()..])
    }
}

pub fn ngram_fit(corpus: &Corpus, order: usize, delta: f64) -> Result<NgramModel> {
    if order == 0 {
        return Err(Error::InvalidArgument("n-gram order must be at least 1".into()));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    let s = check_symbols(corpus)?;
    let mut counts: BTreeMap<Vec<u32>, Vec<u64>> = BTreeMap::new();
    for q in corpus.sequences() {
        let e = &q.events;
        for t in 0..e.len() {
            for h in 0..=order.min(t) {
                counts.entry(e[t - h..t].to_vec()).or_insert_with(|| vec![0; s])[e[t] as usize] += 1;
            }
        }
    }
    Ok(NgramModel { order, n_symbols: s, delta, counts })
}

/// Most frequent next symbol after the longest known history; lowest index
/// on ties.
pub fn ngram_predict(model: &NgramModel, prefix: &[u32]) -> u32 {
    let h = model.backoff_history(prefix);
    model
        .counts
        .get(h)
        .and_then(|c| {
            let as_f: Vec<f64> = c.iter().map(|&x| x as f64).collect();
            argmax(&as_f)
        })
        .unwrap_or(0) as u32
}

impl NextEventPredictor for NgramModel {
    fn predict_next(&self, prefix: &[u32]) -> Result<u32> {
        Ok(ngram_predict(self, prefix))
    }
}

impl FmmcModel {
    /// Next-symbol distribution after `prefix`: each component's transition
    /// row from the last symbol, weighted by the component posterior.
    pub fn next_distribution(&self, prefix: &[u32]) -> Result<Vec<f64>> {
        let &last = prefix.last().ok_or_else(|| Error::InvalidArgument("empty prefix".into()))?;
        if let Some(&c) = prefix.iter().find(|&&c| c as usize >= self.n_symbols) {
            return Err(Error::CodeOutOfRange { code: c, alphabet_len: self.n_symbols });
        }
        let scores: Vec<f64> = (0..self.n_components)
            .map(|c| ln(self.weights[c]) + self.component_log_likelihood(c, prefix))
            .collect();
        let norm = log_sum_exp(&scores);
        let mut out = vec![0.0; self.n_symbols];
        for (c, s) in scores.iter().enumerate() {
            let w = exp(s - norm);
            for (o, p) in out.iter_mut().zip(self.transition_row(c, last as usize)) {
                *o += w * p;
            }
        }
        Ok(out)
    }
}

impl NextEventPredictor for FmmcModel {
    fn predict_next(&self, prefix: &[u32]) -> Result<u32> {
        let d = self.next_distribution(prefix)?;
        Ok(argmax(&d).unwrap_or(0) as u32)
    }
}
