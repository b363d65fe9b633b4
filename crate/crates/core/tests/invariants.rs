mod support;

use immc_core::corpus::{Alphabet, Corpus, Sequence};
use immc_core::dist::{dirichlet, rng_from_seed};
use immc_core::math::is_probability_vector;
use immc_core::model::{init_priors, resample_params, sbp2_sticky, SIMPLEX_TOL};
use immc_core::sampler::{backward_pass, fit, gibbs_iteration};
use immc_core::{ConcatenatedStream, Hyperparams, ModelParams, SufficientStats};
use proptest::prelude::*;
use rand::Rng;
use support::enumeration::random_params;

fn assert_params_simplex(p: &ModelParams) {
    assert!(is_probability_vector(&p.beta, SIMPLEX_TOL));
    for i in 0..p.l() {
        assert!(is_probability_vector(p.pi_row(i), SIMPLEX_TOL));
        assert!(is_probability_vector(p.psi_row(i), SIMPLEX_TOL));
        for c in 0..p.k() {
            assert!(is_probability_vector(p.theta_row(i, c), SIMPLEX_TOL));
        }
    }
}

fn corpus_strategy() -> impl Strategy<Value = ConcatenatedStream> {
    (1usize..4).prop_flat_map(|n_sym| {
        prop::collection::vec(prop::collection::vec(0..n_sym as u32, 1..12), 1..8).prop_map(move |seqs| {
            let a = Alphabet::new((0..n_sym).map(|i| format!("s{i}")).collect()).unwrap();
            let seqs = seqs.into_iter().enumerate().map(|(i, e)| Sequence::new(i.to_string(), e)).collect();
            Corpus::new(a, seqs).unwrap().concatenate()
        })
    })
}

fn hyper_strategy() -> impl Strategy<Value = Hyperparams> {
    (0.1f64..5.0, 0.1f64..5.0, 0.0f64..200.0, 0.1f64..5.0, 0.1f64..5.0, 1usize..6).prop_map(
        |(gamma, alpha, kappa, sigma, lambda, l)| Hyperparams {
            gamma,
            alpha,
            kappa,
            sigma,
            lambda,
            truncation: l,
            seed: 0,
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prior_and_posterior_draws_are_distributions(h in hyper_strategy(), k in 2usize..6, seed: u64, fill in 0u64..50) {
        let mut rng = rng_from_seed(seed);
        assert_params_simplex(&init_priors(&h, k, &mut rng).unwrap());
        let mut stats = SufficientStats::zeros(h.truncation, k);
        for x in stats.d.iter_mut().chain(stats.g.iter_mut()).chain(stats.n.iter_mut()) {
            *x = rng.gen_range(0..=fill);
        }
        assert_params_simplex(&resample_params(&h, &stats, &mut rng).unwrap());
    }

    #[test]
    fn sampled_paths_are_coherent_and_counts_conserved(s in corpus_strategy(), l in 1usize..4, kappa in 0.0f64..50.0, seed: u64) {
        let h = Hyperparams { kappa, truncation: l, ..Hyperparams::default() };
        let p = random_params(l, s.k(), seed);
        let m = backward_pass(&s, &p, &h).unwrap();
        for r in 0..m.n_rows() {
            prop_assert!(is_probability_vector(m.row(r), 1e-9));
        }
        let mut rng = rng_from_seed(seed);
        let out = gibbs_iteration(&s, &p, &h, &mut rng).unwrap();
        let (z, omega) = (&out.latent.z, &out.latent.omega);
        let b = s.boundary;
        let mut opened_inside = 0u64;
        for t in 1..s.len() {
            if s.codes[t] == b {
                prop_assert_eq!(omega[t], 0);
            } else if s.codes[t - 1] == b {
                prop_assert_eq!(omega[t], 1);
            } else if omega[t] == 1 {
                opened_inside += 1;
            }
            if omega[t] == 0 {
                prop_assert_eq!(z[t], z[t - 1]);
            }
            prop_assert_eq!(out.latent.y[t], s.codes[t]);
        }
        let events = s.codes.iter().filter(|&&c| c != b).count() as u64;
        prop_assert_eq!(out.stats.d.iter().sum::<u64>(), events);
        prop_assert_eq!(out.stats.n.iter().sum::<u64>(), opened_inside);
    }

    #[test]
    fn fit_is_reproducible(s in corpus_strategy(), seed: u64) {
        let h = Hyperparams { truncation: 3, ..Hyperparams::default() };
        let a = fit(&s, &h, 3, 2, &mut rng_from_seed(seed)).unwrap();
        let b = fit(&s, &h, 3, 2, &mut rng_from_seed(seed)).unwrap();
        prop_assert_eq!(a, b);
    }
}

/// Two-sample Kolmogorov–Smirnov statistic.
fn ks_statistic(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

/// Rejection threshold at significance 1e-3 for two samples of size `n`.
fn ks_critical(n: usize) -> f64 {
    let c = (-(1e-3f64 / 2.0).ln() / 2.0).sqrt();
    c * (2.0 / n as f64).sqrt()
}

const DRAWS: usize = 10_000;

#[test]
fn sticky_row_without_kappa_is_dirichlet() {
    let beta = [0.5, 0.3, 0.15, 0.05];
    let alpha = 2.0;
    let shape: Vec<f64> = beta.iter().map(|b| alpha * b).collect();
    let mut rng = rng_from_seed(21);
    let sticky: Vec<Vec<f64>> = (0..DRAWS).map(|_| sbp2_sticky(alpha, 0.0, &beta, 1, &mut rng)).collect();
    let direct: Vec<Vec<f64>> = (0..DRAWS).map(|_| dirichlet(&mut rng, &shape)).collect();
    for c in 0..beta.len() {
        let d = ks_statistic(sticky.iter().map(|r| r[c]).collect(), direct.iter().map(|r| r[c]).collect());
        assert!(d < ks_critical(DRAWS), "component {c}: D = {d}");
    }
}

#[test]
fn zero_count_posterior_matches_prior() {
    let h = Hyperparams { gamma: 2.0, alpha: 3.0, kappa: 0.0, truncation: 4, ..Hyperparams::default() };
    let k = 3;
    let stats = SufficientStats::zeros(4, k);
    let mut rng = rng_from_seed(22);
    let prior: Vec<ModelParams> = (0..DRAWS).map(|_| init_priors(&h, k, &mut rng).unwrap()).collect();
    let post: Vec<ModelParams> = (0..DRAWS).map(|_| resample_params(&h, &stats, &mut rng).unwrap()).collect();
    for c in 0..4 {
        let d = ks_statistic(prior.iter().map(|p| p.beta[c]).collect(), post.iter().map(|p| p.beta[c]).collect());
        assert!(d < ks_critical(DRAWS), "beta[{c}]: D = {d}");
        for i in [0, 3] {
            let d = ks_statistic(prior.iter().map(|p| p.pi(i, c)).collect(), post.iter().map(|p| p.pi(i, c)).collect());
            assert!(d < ks_critical(DRAWS), "pi[{i}][{c}]: D = {d}");
        }
    }
}

#[test]
fn ks_statistic_detects_a_shift() {
    let a: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0).collect();
    let b: Vec<f64> = a.iter().map(|x| x + 0.1).collect();
    assert!((ks_statistic(a.clone(), b) - 0.1).abs() < 2e-3);
    assert_eq!(ks_statistic(a.clone(), a), 0.0);
}
