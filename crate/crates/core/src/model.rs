//! Hyperparameters, truncated model parameters and their conjugate updates.
//!
//! With truncation level `L` and `K = |Σ| + 1` codes (the last being the
//! boundary `B`) a model holds
//!
//! * `beta`: global super-state weights, length `L`;
//! * `pi`: the `L × L` sticky super-state transition matrix;
//! * `psi`: per super state, an `L × K` occupancy distribution over codes;
//! * `theta`: per super state, a `K × K` Markov chain over codes where row
//!   `B` is the entry distribution and column `B` the exit probability.
//!
//! # Draw order
//!
//! [`init_priors`] and [`resample_params`] consume the generator in the same
//! order: `beta`, then `pi` rows `0..L`, then `psi` rows `0..L`, then `theta`
//! rows in `(i, k)` lexicographic order. Within a row, one Gamma variate is
//! drawn per component in index order.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{beta as beta_draw, dirichlet, dirichlet_into};
use crate::error::{Error, Result};
use crate::math::is_probability_vector;

/// Tolerance every stored probability row is held to.
pub const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Top-level concentration.
    pub gamma: f64,
    /// Concentration of the super-state transition rows.
    pub alpha: f64,
    /// Extra prior mass on self-transitions.
    pub kappa: f64,
    /// Concentration of the occupancy distributions.
    pub sigma: f64,
    /// Concentration of the within-state transition rows.
    pub lambda: f64,
    /// Truncation level `L`.
    #[serde(rename = "L")]
    pub truncation: usize,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            gamma: 1.0,
            alpha: 1.0,
            kappa: 100.0,
            sigma: 1.0,
            lambda: 1.0,
            truncation: 20,
            seed: 0,
        }
    }
}

impl Hyperparams {
    /// Multiplier on the weight of continuing a segment at each step, `1 + κ`.
    pub fn stay_bias(&self) -> f64 {
        1.0 + self.kappa
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gamma", self.gamma),
            ("alpha", self.alpha),
            ("sigma", self.sigma),
            ("lambda", self.lambda),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidHyperparams(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidHyperparams(format!(
                "kappa must be nonnegative, got {}",
                self.kappa
            )));
        }
        if self.truncation == 0 {
            return Err(Error::InvalidHyperparams("truncation level L must be at least 1".into()));
        }
        Ok(())
    }
}

/// Dense parameter arrays, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    l: usize,
    k: usize,
    pub beta: Vec<f64>,
    pub pi: Vec<f64>,
    pub psi: Vec<f64>,
    pub theta: Vec<f64>,
}

/// Nested-array view used for serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedParams {
    pub beta: Vec<f64>,
    pub pi: Vec<Vec<f64>>,
    pub psi: Vec<Vec<f64>>,
    pub theta: Vec<Vec<Vec<f64>>>,
}

impl ModelParams {
    /// All-zero arrays of the right shape; callers fill every row before use.
    pub fn zeros(l: usize, k: usize) -> Self {
        ModelParams {
            l,
            k,
            beta: vec![0.0; l],
            pi: vec![0.0; l * l],
            psi: vec![0.0; l * k],
            theta: vec![0.0; l * k * k],
        }
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// The boundary code `K - 1`.
    pub fn boundary(&self) -> usize {
        self.k - 1
    }

    #[inline]
    pub fn pi(&self, i: usize, j: usize) -> f64 {
        self.pi[i * self.l + j]
    }

    #[inline]
    pub fn psi(&self, i: usize, c: usize) -> f64 {
        self.psi[i * self.k + c]
    }

    #[inline]
    pub fn theta(&self, i: usize, from: usize, to: usize) -> f64 {
        self.theta[(i * self.k + from) * self.k + to]
    }

    pub fn pi_row(&self, i: usize) -> &[f64] {
        &self.pi[i * self.l..(i + 1) * self.l]
    }

    pub fn pi_row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.pi[i * self.l..(i + 1) * self.l]
    }

    pub fn psi_row(&self, i: usize) -> &[f64] {
        &self.psi[i * self.k..(i + 1) * self.k]
    }

    pub fn psi_row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.psi[i * self.k..(i + 1) * self.k]
    }

    pub fn theta_row(&self, i: usize, from: usize) -> &[f64] {
        let start = (i * self.k + from) * self.k;
        &self.theta[start..start + self.k]
    }

    pub fn theta_row_mut(&mut self, i: usize, from: usize) -> &mut [f64] {
        let start = (i * self.k + from) * self.k;
        &mut self.theta[start..start + self.k]
    }

    /// Check that every row is a probability vector within `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let bad = |what: &str| Err(Error::ShapeMismatch(format!("{what} is not a probability vector")));
        if !is_probability_vector(&self.beta, tol) {
            return bad("beta");
        }
        for i in 0..self.l {
            if !is_probability_vector(self.pi_row(i), tol) {
                return bad(&format!("pi[{i}]"));
            }
            if !is_probability_vector(self.psi_row(i), tol) {
                return bad(&format!("psi[{i}]"));
            }
            for c in 0..self.k {
                if !is_probability_vector(self.theta_row(i, c), tol) {
                    return bad(&format!("theta[{i}][{c}]"));
                }
            }
        }
        Ok(())
    }

    /// Mix every distribution with the uniform one: `(1 - eps) p + eps / n`.
    pub fn blend_uniform(&mut self, eps: f64) {
        let blend = |row: &mut [f64]| {
            let u = eps / row.len() as f64;
            row.iter_mut().for_each(|x| *x = (1.0 - eps) * *x + u);
        };
        blend(&mut self.beta);
        for row in self.pi.chunks_mut(self.l) {
            blend(row);
        }
        for row in self.psi.chunks_mut(self.k).chain(self.theta.chunks_mut(self.k)) {
            blend(row);
        }
    }

    pub fn to_nested(&self) -> NestedParams {
        NestedParams {
            beta: self.beta.clone(),
            pi: (0..self.l).map(|i| self.pi_row(i).to_vec()).collect(),
            psi: (0..self.l).map(|i| self.psi_row(i).to_vec()).collect(),
            theta: (0..self.l)
                .map(|i| (0..self.k).map(|c| self.theta_row(i, c).to_vec()).collect())
                .collect(),
        }
    }

    /// Rebuild from nested arrays, checking shapes and simplex constraints.
    pub fn from_nested(n: &NestedParams) -> Result<Self> {
        let l = n.beta.len();
        let k = n.psi.first().map_or(0, Vec::len);
        if l == 0 || k < 2 {
            return Err(Error::ShapeMismatch(format!("L = {l}, K = {k}")));
        }
        let rows_ok = |rows: &[Vec<f64>], width: usize| rows.len() == l && rows.iter().all(|r| r.len() == width);
        if !rows_ok(&n.pi, l) || !rows_ok(&n.psi, k) || n.theta.len() != l || !n.theta.iter().all(|m| {
            m.len() == k && m.iter().all(|r| r.len() == k)
        }) {
            return Err(Error::ShapeMismatch(format!("arrays inconsistent with L = {l}, K = {k}")));
        }
        let p = ModelParams {
            l,
            k,
            beta: n.beta.clone(),
            pi: n.pi.concat(),
            psi: n.psi.concat(),
            theta: n.theta.iter().flat_map(|m| m.iter().flatten().copied()).collect(),
        };
        p.validate(SIMPLEX_TOL)?;
        Ok(p)
    }
}

/// Per stream position: super state `z`, segment-start indicator `omega`
/// (1 when position `t` opens a new segment), previous sub-state `p` (`B` at
/// segment starts) and current sub-state `y` (`B` at stream boundaries).
///
/// Position 0 is the leading boundary of the stream and carries `z = 0`,
/// `omega = 0`, `p = y = B`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LatentState {
    pub z: Vec<u32>,
    pub omega: Vec<u8>,
    pub p: Vec<u32>,
    pub y: Vec<u32>,
}

impl LatentState {
    pub fn with_len(t: usize, boundary: u32) -> Self {
        LatentState {
            z: vec![0; t],
            omega: vec![0; t],
            p: vec![boundary; t],
            y: vec![boundary; t],
        }
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }
}

/// Counts collected during one forward sweep.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SufficientStats {
    l: usize,
    k: usize,
    /// Emissions per super state.
    pub d: Vec<u64>,
    /// Within-state transitions, `[i][from][to]`.
    pub g: Vec<u64>,
    /// Super-state transitions between consecutive segments of a sequence.
    pub n: Vec<u64>,
}

impl SufficientStats {
    pub fn zeros(l: usize, k: usize) -> Self {
        SufficientStats {
            l,
            k,
            d: vec![0; l],
            g: vec![0; l * k * k],
            n: vec![0; l * l],
        }
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn g(&self, i: usize, from: usize, to: usize) -> u64 {
        self.g[(i * self.k + from) * self.k + to]
    }

    #[inline]
    pub fn g_mut(&mut self, i: usize, from: usize, to: usize) -> &mut u64 {
        &mut self.g[(i * self.k + from) * self.k + to]
    }

    #[inline]
    pub fn n(&self, i: usize, j: usize) -> u64 {
        self.n[i * self.l + j]
    }

    #[inline]
    pub fn n_mut(&mut self, i: usize, j: usize) -> &mut u64 {
        &mut self.n[i * self.l + j]
    }

    /// Column sum `Σ_from G[i][from][to]`: how often `to` was entered in state `i`.
    pub fn g_column(&self, i: usize, to: usize) -> u64 {
        (0..self.k).map(|from| self.g(i, from, to)).sum()
    }

    pub fn active_states(&self) -> usize {
        self.d.iter().filter(|&&d| d > 0).count()
    }

    fn check_shape(&self, l: usize, k: usize) -> Result<()> {
        if self.l != l || self.k != k || self.d.len() != l || self.g.len() != l * k * k || self.n.len() != l * l {
            return Err(Error::ShapeMismatch(format!(
                "stats shaped for L = {}, K = {}, expected L = {l}, K = {k}",
                self.l, self.k
            )));
        }
        Ok(())
    }
}

/// Truncated stick-breaking weights: `β'_i ~ Beta(1, γ)`, `β_i = β'_i ∏_{k<i}(1 - β'_k)`,
/// with the last entry taking whatever stick is left.
pub fn sbp1_truncated<R: Rng + ?Sized>(gamma: f64, l: usize, rng: &mut R) -> Vec<f64> {
    assert!(gamma > 0.0 && l >= 1);
    let mut out = Vec::with_capacity(l);
    let mut remaining = 1.0;
    for _ in 0..l - 1 {
        let frac = beta_draw(rng, 1.0, gamma);
        let piece = remaining * frac;
        out.push(piece);
        remaining -= piece;
    }
    out.push(remaining.max(0.0));
    out
}

/// Stick breaking against a finite base measure `base` with concentration
/// `alpha`: `π'_i ~ Beta(α b_i, α (1 - Σ_{k≤i} b_k))`.
pub fn sbp2<R: Rng + ?Sized>(alpha: f64, base: &[f64], rng: &mut R) -> Vec<f64> {
    let l = base.len();
    assert!(alpha > 0.0 && l >= 1);
    let mut out = Vec::with_capacity(l);
    let mut remaining = 1.0;
    let mut base_used = 0.0;
    for &b in &base[..l - 1] {
        base_used += b;
        let rest = (1.0 - base_used).max(0.0);
        let frac = beta_draw(rng, alpha * b, alpha * rest);
        let piece = remaining * frac;
        out.push(piece);
        remaining -= piece;
    }
    out.push(remaining.max(0.0));
    out
}

/// Row `j` of the sticky transition matrix: stick breaking with
/// concentration `α + κ` over the base measure `(αβ + κδ_j) / (α + κ)`.
pub fn sbp2_sticky<R: Rng + ?Sized>(alpha: f64, kappa: f64, beta: &[f64], j: usize, rng: &mut R) -> Vec<f64> {
    assert!(j < beta.len());
    let c = alpha + kappa;
    let base: Vec<f64> = beta
        .iter()
        .enumerate()
        .map(|(i, &b)| (alpha * b + if i == j { kappa } else { 0.0 }) / c)
        .collect();
    sbp2(c, &base, rng)
}

/// Draw the initial parameters from the truncated priors:
/// `β ~ Dir(γ/L)`, `π_i ~ Dir(αβ + κδ_i)`, `ψ_i ~ Dir(σ/K)`, `θ_{i,k} ~ Dir(λψ_i)`.
pub fn init_priors<R: Rng + ?Sized>(h: &Hyperparams, k: usize, rng: &mut R) -> Result<ModelParams> {
    h.validate()?;
    if k < 2 {
        return Err(Error::InvalidArgument(format!("K must be at least 2, got {k}")));
    }
    let l = h.truncation;
    let mut p = ModelParams::zeros(l, k);
    p.beta = dirichlet(rng, &vec![h.gamma / l as f64; l]);
    draw_pi(h, &p.beta.clone(), None, &mut p, rng);
    let psi_shape = vec![h.sigma / k as f64; k];
    for i in 0..l {
        dirichlet_into(rng, &psi_shape, p.psi_row_mut(i));
    }
    let mut shape = vec![0.0; k];
    for i in 0..l {
        for (s, &q) in shape.iter_mut().zip(p.psi_row(i)) {
            *s = h.lambda * q;
        }
        for c in 0..k {
            dirichlet_into(rng, &shape, p.theta_row_mut(i, c));
        }
    }
    Ok(p)
}

/// Draw parameters from their conditionals given the counts of one sweep:
/// `β ~ Dir(γ/L + d)`, `π_i ~ Dir(αβ + n_i + κδ_i)`,
/// `ψ_i ~ Dir(σ/K + Σ_k G[i][k][·])`, `θ_{i,k} ~ Dir(λ/K + G[i][k][·])`.
pub fn resample_params<R: Rng + ?Sized>(h: &Hyperparams, stats: &SufficientStats, rng: &mut R) -> Result<ModelParams> {
    h.validate()?;
    let l = h.truncation;
    let k = stats.k();
    stats.check_shape(l, k)?;
    let mut p = ModelParams::zeros(l, k);
    let shape: Vec<f64> = stats.d.iter().map(|&d| h.gamma / l as f64 + d as f64).collect();
    p.beta = dirichlet(rng, &shape);
    draw_pi(h, &p.beta.clone(), Some(stats), &mut p, rng);
    let mut shape = vec![0.0; k];
    for i in 0..l {
        for (c, s) in shape.iter_mut().enumerate() {
            *s = h.sigma / k as f64 + stats.g_column(i, c) as f64;
        }
        dirichlet_into(rng, &shape, p.psi_row_mut(i));
    }
    for i in 0..l {
        for from in 0..k {
            for (to, s) in shape.iter_mut().enumerate() {
                *s = h.lambda / k as f64 + stats.g(i, from, to) as f64;
            }
            dirichlet_into(rng, &shape, p.theta_row_mut(i, from));
        }
    }
    Ok(p)
}

fn draw_pi<R: Rng + ?Sized>(h: &Hyperparams, beta: &[f64], stats: Option<&SufficientStats>, p: &mut ModelParams, rng: &mut R) {
    let l = beta.len();
    let mut shape = vec![0.0; l];
    for i in 0..l {
        for (j, s) in shape.iter_mut().enumerate() {
            let count = stats.map_or(0, |st| st.n(i, j)) as f64;
            *s = h.alpha * beta[j] + count + if i == j { h.kappa } else { 0.0 };
        }
        dirichlet_into(rng, &shape, p.pi_row_mut(i));
    }
}
