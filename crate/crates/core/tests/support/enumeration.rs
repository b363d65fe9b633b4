//! Brute-force posterior over super-state paths for tiny streams.
//!
//! Every path is scored directly from the parameters: a sequence start picks
//! `j` with `β_j θ[j,B,y]`, a continuation costs `ψ[i,p] θ[i,p,y]`, a switch
//! `i → j` costs `exit(i,p) π[i,j] θ[j,B,y]` and a sequence end `exit(i,p)`,
//! where `exit(i,r) = β_i ψ[i,B] ψ[i,r] θ[i,r,B]`.

#![allow(dead_code)]

use immc_core::dist::{dirichlet, rng_from_seed};
use immc_core::ModelParams;

pub struct Enumeration {
    /// `z[t][i]`: posterior probability that position `t` is in super state `i`.
    pub z: Vec<Vec<f64>>,
    /// Posterior probability that position `t` opens a segment.
    pub omega: Vec<f64>,
    /// Total path weight, `p(stream | params)`.
    pub evidence: f64,
    pub paths: usize,
}

fn exit(p: &ModelParams, i: usize, r: usize) -> f64 {
    let b = p.boundary();
    p.beta[i] * p.psi(i, b) * p.psi(i, r) * p.theta(i, r, b)
}

pub fn enumerate(codes: &[u32], p: &ModelParams) -> Enumeration {
    let t_len = codes.len();
    let l = p.l();
    let mut out = Enumeration {
        z: vec![vec![0.0; l]; t_len],
        omega: vec![0.0; t_len],
        evidence: 0.0,
        paths: 0,
    };
    let mut z = vec![0usize; t_len];
    let mut omega = vec![0u8; t_len];
    walk(codes, p, 1, 1.0, &mut z, &mut omega, &mut out);
    for row in out.z.iter_mut() {
        row.iter_mut().for_each(|x| *x /= out.evidence);
    }
    out.omega.iter_mut().for_each(|x| *x /= out.evidence);
    out
}

fn walk(
    codes: &[u32],
    p: &ModelParams,
    t: usize,
    weight: f64,
    z: &mut Vec<usize>,
    omega: &mut Vec<u8>,
    out: &mut Enumeration,
) {
    if t == codes.len() {
        out.evidence += weight;
        out.paths += 1;
        for s in 1..codes.len() {
            out.z[s][z[s]] += weight;
            out.omega[s] += weight * omega[s] as f64;
        }
        return;
    }
    let b = p.boundary();
    let (prev, y) = (codes[t - 1] as usize, codes[t] as usize);
    let zp = z[t - 1];
    let mut step = |z: &mut Vec<usize>, omega: &mut Vec<u8>, state: usize, open: u8, w: f64| {
        z[t] = state;
        omega[t] = open;
        walk(codes, p, t + 1, weight * w, z, omega, out);
    };
    if y == b {
        let w = if prev == b { 1.0 } else { exit(p, zp, prev) };
        step(z, omega, zp, 0, w);
    } else if prev == b {
        for j in 0..p.l() {
            step(z, omega, j, 1, p.beta[j] * p.theta(j, b, y));
        }
    } else {
        step(z, omega, zp, 0, p.psi(zp, prev) * p.theta(zp, prev, y));
        for j in 0..p.l() {
            step(z, omega, j, 1, exit(p, zp, prev) * p.pi(zp, j) * p.theta(j, b, y));
        }
    }
}

pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Parameters with every row drawn from a flat Dirichlet.
pub fn random_params(l: usize, k: usize, seed: u64) -> ModelParams {
    let mut rng = rng_from_seed(seed);
    let mut p = ModelParams::zeros(l, k);
    p.beta = dirichlet(&mut rng, &vec![1.0; l]);
    for i in 0..l {
        p.pi_row_mut(i).copy_from_slice(&dirichlet(&mut rng, &vec![1.0; l]));
        p.psi_row_mut(i).copy_from_slice(&dirichlet(&mut rng, &vec![1.0; k]));
        for c in 0..k {
            p.theta_row_mut(i, c).copy_from_slice(&dirichlet(&mut rng, &vec![1.0; k]));
        }
    }
    p
}
