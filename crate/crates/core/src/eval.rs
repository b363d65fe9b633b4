//! Scoring: segmentation error under optimal label matching, next-event
//! prediction, and aggregate run reports.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::{cut_with_rng, Corpus};
use crate::dist::{rng_from_seed, SamplerRng};
use crate::error::{Error, Result};
use crate::math::{argmax, sqrt};
use crate::model::{Hyperparams, ModelParams};
use crate::sampler::{filter_posterior, FitReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationScore {
    pub error_rate: f64,
    pub predicted_labels: Vec<u32>,
    pub true_labels: Vec<u32>,
    /// `confusion[a][b]` counts events labeled `predicted_labels[a]` whose
    /// true label is `true_labels[b]`.
    pub confusion: Vec<Vec<u64>>,
    /// `(predicted, true)` label pairs of the optimal matching.
    pub matching: Vec<(u32, u32)>,
}

/// Fraction of events mislabeled under the injective predicted-to-true
/// label map that maximizes agreement.
pub fn segmentation_error(predicted: &[u32], truth: &[u32]) -> Result<SegmentationScore> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch { left: predicted.len(), right: truth.len() });
    }
    let pl = distinct(predicted);
    let tl = distinct(truth);
    let pi: BTreeMap<u32, usize> = pl.iter().enumerate().map(|(i, &l)| (l, i)).collect();
    let ti: BTreeMap<u32, usize> = tl.iter().enumerate().map(|(i, &l)| (l, i)).collect();
    let mut confusion = vec![vec![0u64; tl.len()]; pl.len()];
    for (p, t) in predicted.iter().zip(truth) {
        confusion[pi[p]][ti[t]] += 1;
    }
    let assignment = max_assignment(&confusion, tl.len());
    let mut matching = Vec::new();
    let mut agree = 0u64;
    for (a, col) in assignment.iter().enumerate() {
        if let Some(b) = *col {
            agree += confusion[a][b];
            matching.push((pl[a], tl[b]));
        }
    }
    let n = predicted.len();
    let error_rate = if n == 0 { 0.0 } else { 1.0 - agree as f64 / n as f64 };
    Ok(SegmentationScore { error_rate, predicted_labels: pl, true_labels: tl, confusion, matching })
}

fn distinct(labels: &[u32]) -> Vec<u32> {
    let mut v = labels.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

/// Maximum-weight assignment of rows to columns on a rectangular count
/// matrix. Rows left without a real column map to `None`.
pub fn max_assignment(weights: &[Vec<u64>], cols: usize) -> Vec<Option<usize>> {
    let rows = weights.len();
    let n = rows.max(cols);
    if n == 0 {
        return Vec::new();
    }
    let top = weights.iter().flatten().copied().max().unwrap_or(0) as i64;
    let cost = |i: usize, j: usize| -> i64 {
        if i < rows && j < cols {
            top - weights[i][j] as i64
        } else {
            top
        }
    };
    // Kuhn-Munkres with potentials, 1-based with a virtual column 0.
    let inf = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![None; rows];
    for j in 1..=n {
        let i = p[j];
        if i >= 1 && i <= rows && j <= cols {
            out[i - 1] = Some(j - 1);
        }
    }
    out
}

/// Anything that guesses the next event of a sequence prefix.
pub trait NextEventPredictor {
    fn predict_next(&self, prefix: &[u32]) -> Result<u32>;
}

/// Unnormalized next-event scores: the super-state posterior at the last
/// prefix position mixes the transition rows out of the last symbol. The
/// boundary gets no score.
pub fn immc_next_scores(params: &ModelParams, h: &Hyperparams, prefix: &[u32]) -> Result<Vec<f64>> {
    let post = filter_posterior(prefix, params, h)?;
    let last = *prefix.last().expect("filter_posterior rejects empty prefixes") as usize;
    let b = params.boundary();
    let mut scores = vec![0.0; b];
    for (i, &w) in post.iter().enumerate() {
        if w > 0.0 {
            for (s, &th) in scores.iter_mut().zip(&params.theta_row(i, last)[..b]) {
                *s += w * th;
            }
        }
    }
    Ok(scores)
}

/// MAP next event under [`immc_next_scores`]; ties go to the lowest code.
pub fn immc_predict_next(params: &ModelParams, h: &Hyperparams, prefix: &[u32]) -> Result<u32> {
    Ok(argmax(&immc_next_scores(params, h, prefix)?).unwrap_or(0) as u32)
}

/// [`immc_predict_next`] under fixed parameters.
pub struct ImmcPredictor<'a> {
    pub params: &'a ModelParams,
    pub hyper: &'a Hyperparams,
}

impl NextEventPredictor for ImmcPredictor<'_> {
    fn predict_next(&self, prefix: &[u32]) -> Result<u32> {
        immc_predict_next(self.params, self.hyper, prefix)
    }
}

/// Guesses uniformly over `0..k`, driven by its own seeded generator.
pub struct UniformPredictor {
    k: usize,
    rng: core::cell::RefCell<SamplerRng>,
}

impl UniformPredictor {
    pub fn new(k: usize, seed: u64) -> Self {
        assert!(k > 0, "empty alphabet");
        UniformPredictor { k, rng: core::cell::RefCell::new(rng_from_seed(seed)) }
    }
}

impl NextEventPredictor for UniformPredictor {
    fn predict_next(&self, _prefix: &[u32]) -> Result<u32> {
        use rand::Rng;
        Ok(self.rng.borrow_mut().gen_range(0..self.k) as u32)
    }
}

/// Cut every test sequence at a random point and score the predictor on the
/// event right after the cut. Sequences shorter than two events are skipped.
pub fn prediction_accuracy<P: NextEventPredictor + ?Sized>(predictor: &P, test: &Corpus, seed: u64) -> Result<f64> {
    let mut rng = rng_from_seed(seed);
    let (mut hits, mut total) = (0usize, 0usize);
    for seq in test.sequences().iter().filter(|s| s.len() >= 2) {
        let (prefix, target) = cut_with_rng(seq, &mut rng)?;
        total += 1;
        hits += (predictor.predict_next(&prefix.events)? == target) as usize;
    }
    if total == 0 {
        return Err(Error::InvalidArgument("no test sequence has two or more events".into()));
    }
    Ok(hits as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
    pub n: usize,
}

pub fn summarize(xs: &[f64]) -> Option<Summary> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let std = if n < 2 {
        0.0
    } else {
        sqrt(xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64)
    };
    Some(Summary { mean, std, n })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub iterations: usize,
    pub burn_in: usize,
    pub active_states: usize,
    pub final_log_likelihood: f64,
    pub error_rate: Option<f64>,
    pub accuracy: Option<f64>,
    pub mean_iteration_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub runs: Vec<RunRecord>,
    pub error_rate: Option<Summary>,
    pub accuracy: Option<Summary>,
    pub iteration_seconds: Summary,
}

/// Per-run scores for [`run_report`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunScores {
    pub seed: u64,
    pub error_rate: Option<f64>,
    pub accuracy: Option<f64>,
}

pub fn run_report(fits: &[FitReport], scores: &[RunScores]) -> Result<RunReport> {
    if fits.is_empty() {
        return Err(Error::InvalidArgument("run report needs at least one run".into()));
    }
    if fits.len() != scores.len() {
        return Err(Error::LengthMismatch { left: fits.len(), right: scores.len() });
    }
    let runs: Vec<RunRecord> = fits
        .iter()
        .zip(scores)
        .map(|(f, s)| RunRecord {
            seed: s.seed,
            iterations: f.iterations,
            burn_in: f.burn_in,
            active_states: f.active_states,
            final_log_likelihood: f.log_likelihood.last().copied().unwrap_or(f64::NAN),
            error_rate: s.error_rate,
            accuracy: s.accuracy,
            mean_iteration_seconds: summarize(&f.iteration_seconds).map_or(0.0, |x| x.mean),
        })
        .collect();
    let errors: Vec<f64> = runs.iter().filter_map(|r| r.error_rate).collect();
    let accs: Vec<f64> = runs.iter().filter_map(|r| r.accuracy).collect();
    let secs: Vec<f64> = fits.iter().flat_map(|f| f.iteration_seconds.iter().copied()).collect();
    Ok(RunReport {
        error_rate: summarize(&errors),
        accuracy: summarize(&accs),
        iteration_seconds: summarize(&secs).unwrap_or(Summary { mean: 0.0, std: 0.0, n: 0 }),
        runs,
    })
}
