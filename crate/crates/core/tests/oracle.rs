mod support;

use immc_core::corpus::{Alphabet, Corpus, Sequence};
use immc_core::dist::rng_from_seed;
use immc_core::sampler::{backward_pass, exit_weight, gibbs_iteration};
use immc_core::{ConcatenatedStream, Hyperparams};
use support::enumeration::{enumerate, random_params, total_variation};

fn stream(n_sym: usize, seqs: &[&[u32]]) -> ConcatenatedStream {
    let a = Alphabet::new((0..n_sym).map(|i| format!("s{i}")).collect()).unwrap();
    let seqs = seqs.iter().enumerate().map(|(i, s)| Sequence::new(i.to_string(), s.to_vec())).collect();
    Corpus::new(a, seqs).unwrap().concatenate()
}

fn exact(l: usize) -> Hyperparams {
    Hyperparams { kappa: 0.0, truncation: l, ..Hyperparams::default() }
}

#[test]
fn messages_for_a_two_event_sequence() {
    // stream [B, 0, 1, B] with L = 2, K = 3
    let p = random_params(2, 3, 11);
    let s = stream(2, &[&[0, 1]]);
    let m = backward_pass(&s, &p, &exact(2)).unwrap();
    let (a, b_, bd) = (0, 1, 2);
    let e = |i: usize, r: usize| p.beta[i] * p.psi(i, bd) * p.psi(i, r) * p.theta(i, r, bd);

    let m3 = [0.5, 0.5];
    let u2 = [e(0, b_) * m3[0], e(1, b_) * m3[1]];
    let m2 = [u2[0] / (u2[0] + u2[1]), u2[1] / (u2[0] + u2[1])];
    let sw = p.theta(0, bd, b_) * m2[0];
    let sw1 = p.theta(1, bd, b_) * m2[1];
    let u1 = [
        p.psi(0, a) * p.theta(0, a, b_) * m2[0] + e(0, a) * (p.pi(0, 0) * sw + p.pi(0, 1) * sw1),
        p.psi(1, a) * p.theta(1, a, b_) * m2[1] + e(1, a) * (p.pi(1, 0) * sw + p.pi(1, 1) * sw1),
    ];
    let m1 = [u1[0] / (u1[0] + u1[1]), u1[1] / (u1[0] + u1[1])];
    let u0 = p.beta[0] * p.theta(0, bd, a) * m1[0] + p.beta[1] * p.theta(1, bd, a) * m1[1];

    let close = |x: &[f64], y: &[f64]| x.iter().zip(y).all(|(x, y)| (x - y).abs() < 1e-12);
    assert!(close(m.into_position(3), &m3));
    assert!(close(m.into_position(2), &m2));
    assert!(close(m.into_position(1), &m1));
    assert!(close(m.into_position(0), &[0.5, 0.5]));
    assert!((m.log_norm[1] - (2.0 * u0).ln()).abs() < 1e-12);

    let mut evidence = 0.0;
    for j in 0..2 {
        let stay = p.psi(j, a) * p.theta(j, a, b_) * e(j, b_);
        let switch: f64 = (0..2).map(|k| p.pi(j, k) * p.theta(k, bd, b_) * e(k, b_)).sum::<f64>() * e(j, a);
        evidence += p.beta[j] * p.theta(j, bd, a) * (stay + switch);
    }
    assert!((m.log_likelihood() - evidence.ln()).abs() < 1e-12);
    assert!((exit_weight(&p, 1, a) - e(1, a)).abs() < 1e-15);
}

#[test]
fn log_likelihood_matches_enumerated_evidence() {
    let cases: [&[&[u32]]; 4] = [&[&[0, 1, 1, 0, 1, 0]], &[&[0, 0, 1], &[1, 1, 0]], &[&[1], &[0, 1, 0, 0]], &[&[2, 0, 1, 2]]];
    for (n, seqs) in cases.iter().enumerate() {
        for l in 1..=3 {
            let s = stream(3, seqs);
            let p = random_params(l, 4, 100 + n as u64);
            let m = backward_pass(&s, &p, &exact(l)).unwrap();
            let e = enumerate(&s.codes, &p);
            assert!((m.log_likelihood() - e.evidence.ln()).abs() < 1e-10, "case {n}, L = {l}");
        }
    }
}

#[test]
fn gibbs_marginals_match_enumeration() {
    let cases: [&[&[u32]]; 3] = [&[&[0, 1, 1, 0, 1, 0]], &[&[0, 0, 1], &[1, 1, 0]], &[&[1], &[0, 1, 0, 0]]];
    let sweeps = 200_000;
    for (n, seqs) in cases.iter().enumerate() {
        let s = stream(2, seqs);
        let p = random_params(2, 3, 7 + n as u64);
        let h = exact(2);
        let truth = enumerate(&s.codes, &p);
        let mut counts = vec![[0u64; 2]; s.len()];
        let mut opens = vec![0u64; s.len()];
        let mut rng = rng_from_seed(n as u64);
        for _ in 0..sweeps {
            let out = gibbs_iteration(&s, &p, &h, &mut rng).unwrap();
            for t in 1..s.len() {
                counts[t][out.latent.z[t] as usize] += 1;
                opens[t] += out.latent.omega[t] as u64;
            }
        }
        for t in s.event_positions() {
            let freq: Vec<f64> = counts[t].iter().map(|&c| c as f64 / sweeps as f64).collect();
            let tv = total_variation(&freq, &truth.z[t]);
            assert!(tv < 0.02, "case {n}, position {t}: {freq:?} vs {:?}", truth.z[t]);
            let open = opens[t] as f64 / sweeps as f64;
            assert!((open - truth.omega[t]).abs() < 0.02, "case {n}, position {t}: {open} vs {}", truth.omega[t]);
        }
    }
}
