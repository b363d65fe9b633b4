//! Truncated blocked Gibbs sampler.
//!
//! Given parameters, the posterior over super-state paths factorizes along
//! the stream. Writing `c_t` for the code at position `t`, each step
//! `t-1 → t` contributes one of three factors:
//!
//! * sequence start (`c_{t-1} = B`): a fresh super state `j` with weight
//!   `β_j θ_{j,B,c_t}`;
//! * sequence end (`c_t = B`): the super state is kept and the segment exits
//!   with weight `E_i(c_{t-1})`;
//! * inside a sequence, either the segment continues with the intra weight
//!   `ψ_{i,c_{t-1}} θ_{i,c_{t-1},c_t}`, or it closes and super state `j`
//!   opens a new one with the inter weight `E_i(c_{t-1}) π_{i,j} θ_{j,B,c_t}`,
//!
//! where `E_i(r) = β_i ψ_{i,B} ψ_{i,r} θ_{i,r,B}` is the exit weight. A
//! backward pass accumulates these factors into per-position messages and a
//! forward sweep samples the segment indicators and super states exactly.
//!
//! Each message row is normalized to sum to one and the normalizer is kept,
//! so arbitrarily long streams neither underflow nor lose the stream
//! log-likelihood.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::ConcatenatedStream;
use crate::dist::{bernoulli, categorical};
use crate::error::{Error, Result};
use crate::math::{argmax, ln};
use crate::model::{init_priors, resample_params, Hyperparams, LatentState, ModelParams, SufficientStats};

/// Normalized backward messages.
///
/// Row `t + 1` holds the message into stream position `t` from everything
/// after it; row `T` (into the final boundary) is the all-ones row and row 0
/// repeats row 1 for the virtual position before the stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Messages {
    l: usize,
    stay: f64,
    rows: Vec<f64>,
    /// Natural log of each row's normalizer.
    pub log_norm: Vec<f64>,
}

impl Messages {
    pub fn l(&self) -> usize {
        self.l
    }

    /// Stay bias applied by the forward draws. The messages themselves are
    /// unbiased.
    pub fn stay_bias(&self) -> f64 {
        self.stay
    }

    pub fn n_rows(&self) -> usize {
        self.log_norm.len()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.rows[r * self.l..(r + 1) * self.l]
    }

    /// Message into stream position `t`.
    #[inline]
    pub fn into_position(&self, t: usize) -> &[f64] {
        self.row(t + 1)
    }

    /// `ln p(stream | params)`.
    pub fn log_likelihood(&self) -> f64 {
        self.log_norm.iter().sum::<f64>() - ln(self.l as f64)
    }
}

/// Precomputed exit weights `E_i(r)` for every super state and code.
struct ExitTable {
    k: usize,
    w: Vec<f64>,
}

impl ExitTable {
    fn new(params: &ModelParams) -> Self {
        let (l, k, b) = (params.l(), params.k(), params.boundary());
        let mut w = vec![0.0; l * k];
        for i in 0..l {
            let head = params.beta[i] * params.psi(i, b);
            for r in 0..k {
                w[i * k + r] = head * params.psi(i, r) * params.theta(i, r, b);
            }
        }
        ExitTable { k, w }
    }

    #[inline]
    fn get(&self, i: usize, r: usize) -> f64 {
        self.w[i * self.k + r]
    }
}

/// Exit weight `E_i(r) = β_i ψ_{i,B} ψ_{i,r} θ_{i,r,B}` of super state `i`
/// leaving from sub-state `r`.
#[inline]
pub fn exit_weight(params: &ModelParams, i: usize, r: usize) -> f64 {
    let b = params.boundary();
    params.beta[i] * params.psi(i, b) * params.psi(i, r) * params.theta(i, r, b)
}

/// Intra weight `ψ_{i,p} θ_{i,p,y}` of super state `i` continuing `p → y`.
#[inline]
pub fn intra_weight(params: &ModelParams, i: usize, p: usize, y: usize) -> f64 {
    params.psi(i, p) * params.theta(i, p, y)
}

fn check_shapes(stream: &ConcatenatedStream, params: &ModelParams) -> Result<()> {
    if stream.is_empty() {
        return Err(Error::InvalidArgument("empty stream".into()));
    }
    if stream.k() != params.k() {
        return Err(Error::ShapeMismatch(alloc::format!(
            "stream has K = {}, parameters have K = {}",
            stream.k(),
            params.k()
        )));
    }
    if let Some(&c) = stream.codes.iter().find(|&&c| c as usize >= params.k()) {
        return Err(Error::CodeOutOfRange { code: c, alphabet_len: params.k() - 1 });
    }
    Ok(())
}

/// Backward pass over the whole stream.
pub fn backward_pass(stream: &ConcatenatedStream, params: &ModelParams, h: &Hyperparams) -> Result<Messages> {
    check_shapes(stream, params)?;
    if h.truncation != params.l() {
        return Err(Error::ShapeMismatch(alloc::format!(
            "L = {} in hyperparameters, {} in parameters",
            h.truncation,
            params.l()
        )));
    }
    let l = params.l();
    let b = params.boundary();
    let t_len = stream.len();
    let codes = &stream.codes;
    let exits = ExitTable::new(params);

    let mut rows = vec![0.0; (t_len + 1) * l];
    let mut log_norm = vec![0.0; t_len + 1];
    rows[t_len * l..].iter_mut().for_each(|x| *x = 1.0 / l as f64);
    log_norm[t_len] = ln(l as f64);

    let mut w = vec![0.0; l];
    for t in (0..t_len.saturating_sub(1)).rev() {
        let (head, tail) = rows.split_at_mut((t + 2) * l);
        let next = &tail[..l];
        let out = &mut head[(t + 1) * l..];
        let (cur, nxt) = (codes[t] as usize, codes[t + 1] as usize);
        if nxt == b && cur == b {
            out.copy_from_slice(next);
        } else if nxt == b {
            for i in 0..l {
                out[i] = exits.get(i, cur) * next[i];
            }
        } else if cur == b {
            let s: f64 = (0..l).map(|j| params.beta[j] * params.theta(j, b, nxt) * next[j]).sum();
            out.iter_mut().for_each(|x| *x = s);
        } else {
            for j in 0..l {
                w[j] = params.theta(j, b, nxt) * next[j];
            }
            for i in 0..l {
                let switch: f64 = params.pi_row(i).iter().zip(&w).map(|(p, w)| p * w).sum();
                out[i] = intra_weight(params, i, cur, nxt) * next[i] + exits.get(i, cur) * switch;
            }
        }
        let norm: f64 = out.iter().sum();
        if !(norm > 0.0) || !norm.is_finite() || out.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteMessage { position: t });
        }
        out.iter_mut().for_each(|x| *x /= norm);
        log_norm[t + 1] = ln(norm);
    }
    let (first, rest) = rows.split_at_mut(l);
    first.copy_from_slice(&rest[..l]);
    Ok(Messages { l, stay: h.stay_bias(), rows, log_norm })
}

/// Draw the segment indicator at position `t` given the super state of
/// position `t - 1`. Returns 1 when `t` opens a new segment.
///
/// Forced cases: a boundary at `t` keeps the segment (0) and a boundary at
/// `t - 1` always opens one (1). Otherwise the segment continues with
/// probability `s·intra / (s·intra + Σ_j inter_j)` with `s` the stay bias.
pub fn sample_omega<R: Rng + ?Sized>(
    t: usize,
    stream: &ConcatenatedStream,
    z_prev: u32,
    params: &ModelParams,
    messages: &Messages,
    rng: &mut R,
) -> Result<u8> {
    let b = params.boundary();
    if t == 0 || stream.codes[t] as usize == b {
        return Ok(0);
    }
    let p = stream.codes[t - 1] as usize;
    if p == b {
        return Ok(1);
    }
    let y = stream.codes[t] as usize;
    let i = z_prev as usize;
    let m = messages.into_position(t);
    let stay = messages.stay * intra_weight(params, i, p, y) * m[i];
    let exit = exit_weight(params, i, p);
    let switch: f64 = (0..params.l()).map(|j| params.pi(i, j) * params.theta(j, b, y) * m[j]).sum::<f64>() * exit;
    let total = stay + switch;
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::ZeroMass { position: t });
    }
    Ok(if bernoulli(rng, stay / total) { 0 } else { 1 })
}

/// Draw the super state at position `t` given the segment indicator there.
///
/// A continued segment keeps `z_prev`. A segment opened at a sequence start
/// draws `z ∝ β_z θ_{z,B,y} m(z)`; one opened inside a sequence draws
/// `z ∝ π_{z_prev,z} θ_{z,B,y} m(z)`.
pub fn sample_z<R: Rng + ?Sized>(
    t: usize,
    stream: &ConcatenatedStream,
    omega: u8,
    z_prev: u32,
    params: &ModelParams,
    messages: &Messages,
    rng: &mut R,
) -> Result<u32> {
    if omega == 0 {
        return Ok(z_prev);
    }
    let b = params.boundary();
    let y = stream.codes[t] as usize;
    let m = messages.into_position(t);
    let at_start = t == 0 || stream.codes[t - 1] as usize == b;
    let weights: Vec<f64> = (0..params.l())
        .map(|j| {
            let prior = if at_start { params.beta[j] } else { params.pi(z_prev as usize, j) };
            prior * params.theta(j, b, y) * m[j]
        })
        .collect();
    categorical(rng, &weights).map(|j| j as u32).ok_or(Error::ZeroMass { position: t })
}

/// Add the counts of one latent path to `stats`.
///
/// For every step `t ≥ 1`, with `r_t = y_{t-1}` the previous code: a
/// non-boundary `y_t` adds one emission to `d[z_t]`; an opened segment adds
/// the entry `G[z_t][B][y_t]` and, inside a sequence, the super-state
/// transition `n[z_{t-1}][z_t]` and the exit `G[z_{t-1}][r_t][B]`; a
/// continued segment adds `G[z_t][r_t][y_t]`.
pub fn accumulate_stats(latent: &LatentState, mut stats: SufficientStats) -> Result<SufficientStats> {
    let (l, k) = (stats.l(), stats.k());
    let b = (k - 1) as u32;
    let t_len = latent.len();
    if latent.omega.len() != t_len || latent.p.len() != t_len || latent.y.len() != t_len {
        return Err(Error::ShapeMismatch("latent arrays differ in length".into()));
    }
    if let Some(t) = (0..t_len).find(|&t| latent.z[t] as usize >= l || latent.y[t] as usize >= k) {
        return Err(Error::IndexOutOfRange(alloc::format!(
            "position {t}: z = {}, y = {} with L = {l}, K = {k}",
            latent.z[t],
            latent.y[t]
        )));
    }
    for t in 1..t_len {
        let (z, y) = (latent.z[t] as usize, latent.y[t]);
        let r = latent.y[t - 1];
        if y != b {
            stats.d[z] += 1;
        }
        if latent.omega[t] == 1 {
            *stats.g_mut(z, b as usize, y as usize) += 1;
            if r != b {
                let zp = latent.z[t - 1] as usize;
                *stats.n_mut(zp, z) += 1;
                *stats.g_mut(zp, r as usize, b as usize) += 1;
            }
        } else if !(r == b && y == b) {
            *stats.g_mut(z, r as usize, y as usize) += 1;
        }
    }
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationOutput {
    pub latent: LatentState,
    pub stats: SufficientStats,
    pub log_likelihood: f64,
}

/// Forward sweep against precomputed messages.
pub fn forward_sample<R: Rng + ?Sized>(
    stream: &ConcatenatedStream,
    params: &ModelParams,
    messages: &Messages,
    rng: &mut R,
) -> Result<LatentState> {
    let b = params.boundary() as u32;
    let mut latent = LatentState::with_len(stream.len(), b);
    for t in 1..stream.len() {
        let z_prev = latent.z[t - 1];
        let omega = sample_omega(t, stream, z_prev, params, messages, rng)?;
        let z = sample_z(t, stream, omega, z_prev, params, messages, rng)?;
        latent.omega[t] = omega;
        latent.z[t] = z;
        latent.p[t] = if omega == 1 { b } else { stream.codes[t - 1] };
        latent.y[t] = stream.codes[t];
    }
    Ok(latent)
}

/// One blocked Gibbs step: backward messages, a forward sweep, and fresh
/// counts for the sampled path.
pub fn gibbs_iteration<R: Rng + ?Sized>(
    stream: &ConcatenatedStream,
    params: &ModelParams,
    h: &Hyperparams,
    rng: &mut R,
) -> Result<IterationOutput> {
    let messages = backward_pass(stream, params, h)?;
    let latent = forward_sample(stream, params, &messages, rng)?;
    let stats = accumulate_stats(&latent, SufficientStats::zeros(params.l(), params.k()))?;
    Ok(IterationOutput {
        latent,
        stats,
        log_likelihood: messages.log_likelihood(),
    })
}

/// Source of wall-clock time for per-iteration timings, in seconds.
pub trait Clock {
    fn now(&self) -> f64;
}

/// Clock for environments without one; every timing reads zero.
pub struct NoClock;

impl Clock for NoClock {
    fn now(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub iterations: usize,
    pub burn_in: usize,
    /// Stream log-likelihood under the parameters used in each iteration.
    pub log_likelihood: Vec<f64>,
    pub latent: LatentState,
    #[serde(skip)]
    pub params: Option<ModelParams>,
    pub stats: SufficientStats,
    pub active_states: usize,
    pub iteration_seconds: Vec<f64>,
}

impl FitReport {
    pub fn params(&self) -> &ModelParams {
        self.params.as_ref().expect("fit always stores parameters")
    }
}

/// Weight of the uniform component mixed into the starting parameters.
pub const START_BLEND: f64 = 1e-6;

/// Run `burn_in + iterations` sweeps from a prior draw.
pub fn fit<R: Rng + ?Sized>(
    stream: &ConcatenatedStream,
    h: &Hyperparams,
    iterations: usize,
    burn_in: usize,
    rng: &mut R,
) -> Result<FitReport> {
    fit_with_clock(stream, h, iterations, burn_in, rng, &NoClock)
}

pub fn fit_with_clock<R: Rng + ?Sized, C: Clock + ?Sized>(
    stream: &ConcatenatedStream,
    h: &Hyperparams,
    iterations: usize,
    burn_in: usize,
    rng: &mut R,
    clock: &C,
) -> Result<FitReport> {
    if iterations == 0 {
        return Err(Error::InvalidArgument("iterations must be at least 1".into()));
    }
    h.validate()?;
    let mut params = init_priors(h, stream.k(), rng)?;
    // Prior draws routinely underflow to exact zeros, which can leave the
    // data with no support at all.
    params.blend_uniform(START_BLEND);
    let total = burn_in + iterations;
    let mut trace = Vec::with_capacity(total);
    let mut seconds = Vec::with_capacity(total);
    let mut last = None;
    for _ in 0..total {
        let start = clock.now();
        let out = gibbs_iteration(stream, &params, h, rng)?;
        params = resample_params(h, &out.stats, rng)?;
        seconds.push(clock.now() - start);
        trace.push(out.log_likelihood);
        last = Some(out);
    }
    let last = last.expect("at least one iteration");
    Ok(FitReport {
        iterations,
        burn_in,
        log_likelihood: trace,
        active_states: last.stats.active_states(),
        latent: last.latent,
        stats: last.stats,
        params: Some(params),
        iteration_seconds: seconds,
    })
}

/// Deterministic decode under fixed parameters: the backward messages are
/// computed once and the forward sweep takes the most probable option at
/// every step instead of sampling it.
pub fn decode(stream: &ConcatenatedStream, params: &ModelParams, h: &Hyperparams) -> Result<LatentState> {
    let messages = backward_pass(stream, params, h)?;
    let b = params.boundary();
    let l = params.l();
    let mut latent = LatentState::with_len(stream.len(), b as u32);
    let mut weights = vec![0.0; l + 1];
    for t in 1..stream.len() {
        let (p, y) = (stream.codes[t - 1] as usize, stream.codes[t] as usize);
        let z_prev = latent.z[t - 1] as usize;
        let m = messages.into_position(t);
        let (omega, z) = if y == b {
            (0, z_prev)
        } else if p == b {
            let w: Vec<f64> = (0..l).map(|j| params.beta[j] * params.theta(j, b, y) * m[j]).collect();
            (1, positive_argmax(&w).ok_or(Error::ZeroMass { position: t })?)
        } else {
            weights[0] = messages.stay * intra_weight(params, z_prev, p, y) * m[z_prev];
            let exit = exit_weight(params, z_prev, p);
            for j in 0..l {
                weights[j + 1] = exit * params.pi(z_prev, j) * params.theta(j, b, y) * m[j];
            }
            match positive_argmax(&weights) {
                Some(0) => (0, z_prev),
                Some(j) => (1, j - 1),
                None => return Err(Error::ZeroMass { position: t }),
            }
        };
        latent.omega[t] = omega;
        latent.z[t] = z as u32;
        latent.p[t] = if omega == 1 { b as u32 } else { p as u32 };
        latent.y[t] = y as u32;
    }
    Ok(latent)
}

/// Posterior over the super state of the last event of `prefix`, treating
/// the prefix as the opening of a sequence whose continuation is unknown.
pub fn filter_posterior(prefix: &[u32], params: &ModelParams, h: &Hyperparams) -> Result<Vec<f64>> {
    let stay = h.stay_bias();
    let b = params.boundary();
    let l = params.l();
    let first = *prefix.first().ok_or_else(|| Error::InvalidArgument("empty prefix".into()))? as usize;
    if let Some(&c) = prefix.iter().find(|&&c| c as usize >= b) {
        return Err(Error::CodeOutOfRange { code: c, alphabet_len: b });
    }
    let mut alpha: Vec<f64> = (0..l).map(|j| params.beta[j] * params.theta(j, b, first)).collect();
    normalize_or_zero_mass(&mut alpha, 1)?;
    let mut next = vec![0.0; l];
    for (t, pair) in prefix.windows(2).enumerate() {
        let (p, y) = (pair[0] as usize, pair[1] as usize);
        for (j, slot) in next.iter_mut().enumerate() {
            let opened: f64 = (0..l).map(|i| alpha[i] * exit_weight(params, i, p) * params.pi(i, j)).sum();
            *slot = stay * alpha[j] * intra_weight(params, j, p, y) + opened * params.theta(j, b, y);
        }
        core::mem::swap(&mut alpha, &mut next);
        normalize_or_zero_mass(&mut alpha, t + 2)?;
    }
    Ok(alpha)
}

fn positive_argmax(w: &[f64]) -> Option<usize> {
    argmax(w).filter(|&i| w[i] > 0.0)
}

fn normalize_or_zero_mass(v: &mut [f64], position: usize) -> Result<()> {
    let s: f64 = v.iter().sum();
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::ZeroMass { position });
    }
    v.iter_mut().for_each(|x| *x /= s);
    Ok(())
}

/// Per-sequence super-state labels and segment starts (offsets within each
/// sequence) read off a latent path.
pub fn segmentation(stream: &ConcatenatedStream, latent: &LatentState) -> Vec<(Vec<u32>, Vec<usize>)> {
    let mut out = Vec::with_capacity(stream.offsets.len());
    for &start in &stream.offsets {
        let mut labels = Vec::new();
        let mut starts = Vec::new();
        let mut t = start;
        while t < stream.len() && !stream.is_boundary(t) {
            if latent.omega[t] == 1 {
                starts.push(t - start);
            }
            labels.push(latent.z[t]);
            t += 1;
        }
        out.push((labels, starts));
    }
    out
}
