//! Random draws used throughout the crate.
//!
//! Every stochastic operation takes a `&mut impl Rng` so a whole run can be
//! driven from one seeded [`SamplerRng`]. Dirichlet and Beta variates are
//! built from log-space Gamma draws so that tiny concentrations (the
//! weak-limit priors routinely use shapes around `0.05`) never underflow into
//! an all-zero vector.

use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, Gamma, Poisson};

use crate::math::{ln, log_sum_exp};

/// The generator every run is driven by.
pub type SamplerRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SamplerRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform draw in the open interval (0, 1).
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            return u;
        }
    }
}

/// `ln X` for `X ~ Gamma(shape, 1)`. A zero shape is the degenerate point
/// mass at zero and yields negative infinity.
pub fn log_gamma_variate<R: Rng + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    debug_assert!(shape >= 0.0 && shape.is_finite(), "gamma shape {shape}");
    if shape <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if shape >= 1.0 {
        let g = Gamma::new(shape, 1.0).expect("finite positive shape");
        let x: f64 = g.sample(rng);
        if x > 0.0 {
            return ln(x);
        }
    }
    // Gamma(a) = Gamma(a + 1) * U^(1/a), kept in log space.
    let g = Gamma::new(shape + 1.0, 1.0).expect("finite positive shape");
    let x: f64 = g.sample(rng);
    ln(x) + ln(open_unit(rng)) / shape
}

/// Draw from `Dir(alpha)`, writing the probability vector into `out`.
pub fn dirichlet_into<R: Rng + ?Sized>(rng: &mut R, alpha: &[f64], out: &mut [f64]) {
    debug_assert_eq!(alpha.len(), out.len());
    for (o, &a) in out.iter_mut().zip(alpha) {
        *o = log_gamma_variate(rng, a);
    }
    let lse = log_sum_exp(out);
    if lse == f64::NEG_INFINITY {
        // Every shape was zero; fall back to a point mass on the first entry.
        out.iter_mut().for_each(|o| *o = 0.0);
        if let Some(first) = out.first_mut() {
            *first = 1.0;
        }
        return;
    }
    for o in out.iter_mut() {
        *o = libm::exp(*o - lse);
    }
    renormalize(out);
}

pub fn dirichlet<R: Rng + ?Sized>(rng: &mut R, alpha: &[f64]) -> Vec<f64> {
    let mut out = alloc::vec![0.0; alpha.len()];
    dirichlet_into(rng, alpha, &mut out);
    out
}

/// Draw from `Beta(a, b)`. A zero second parameter returns 1 and a zero
/// first parameter returns 0.
pub fn beta<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    let la = log_gamma_variate(rng, a.max(0.0));
    let lb = log_gamma_variate(rng, b.max(0.0));
    match (la == f64::NEG_INFINITY, lb == f64::NEG_INFINITY) {
        (true, true) => 0.0,
        (true, false) => 0.0,
        (false, true) => 1.0,
        (false, false) => 1.0 / (1.0 + libm::exp(lb - la)),
    }
}

/// Index drawn proportionally to the nonnegative `weights`. Returns `None`
/// when the total mass is zero or not finite.
pub fn categorical<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return None;
    }
    let target = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = None;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = Some(i);
            if target < acc {
                return Some(i);
            }
        }
    }
    last_positive
}

pub fn bernoulli<R: Rng + ?Sized>(rng: &mut R, p: f64) -> bool {
    rng.gen::<f64>() < p
}

pub fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("positive mean");
    let x: f64 = d.sample(rng);
    x as u64
}

/// Rescale a nonnegative vector to sum to one.
pub fn renormalize(v: &mut [f64]) {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        v.iter_mut().for_each(|x| *x /= total);
    }
}
