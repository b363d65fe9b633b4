use std::collections::BTreeMap;

use immc_core::corpus::Alphabet;
use immc_core::dist::rng_from_seed;
use immc_core::generator::{
    builtin_testcase, generate_corpus, sample_from_immc, LabeledCorpus, SyntheticSpec, TestCaseId, SIZE_LARGE,
};
use immc_core::model::sbp2_sticky;
use immc_core::sampler::fit;
use immc_core::{Hyperparams, ModelParams};

/// Iterate over every generated segment as `(label, events)`.
fn segments(g: &LabeledCorpus) -> impl Iterator<Item = (u32, &[u32])> + '_ {
    g.corpus.sequences().iter().zip(&g.labels).zip(&g.segment_starts).flat_map(|((s, labels), starts)| {
        starts.iter().enumerate().map(move |(n, &a)| {
            let b = starts.get(n + 1).copied().unwrap_or(s.len());
            (labels[a], &s.events[a..b])
        })
    })
}

#[test]
fn labels_partition_events_into_constant_segments() {
    for which in [TestCaseId::I, TestCaseId::II, TestCaseId::III] {
        let case = builtin_testcase(which);
        let g = generate_corpus(&SyntheticSpec::from_testcase(&case, 5_000, 3)).unwrap();
        for ((s, labels), starts) in g.corpus.sequences().iter().zip(&g.labels).zip(&g.segment_starts) {
            assert_eq!(labels.len(), s.len());
            assert_eq!(starts.first(), Some(&0));
            assert!(starts.windows(2).all(|w| w[0] < w[1]));
            assert!(s.events.iter().all(|&c| c < case.alphabet.boundary()));
            for (n, &a) in starts.iter().enumerate() {
                let b = starts.get(n + 1).copied().unwrap_or(s.len());
                assert!(labels[a..b].iter().all(|&l| l == labels[a]));
            }
        }
        let split = g.corpus.concatenate().split();
        assert_eq!(split.len(), g.corpus.len());
    }
}

#[test]
fn label_conditional_transition_frequencies() {
    for which in [TestCaseId::I, TestCaseId::II, TestCaseId::III] {
        let case = builtin_testcase(which);
        let g = generate_corpus(&SyntheticSpec::from_testcase(&case, SIZE_LARGE, 11)).unwrap();
        // (label, from) -> (to or None for exit) -> count
        let mut counts: BTreeMap<(u32, u32), BTreeMap<Option<u32>, u64>> = BTreeMap::new();
        for (label, seg) in segments(&g) {
            for w in seg.windows(2) {
                *counts.entry((label, w[0])).or_default().entry(Some(w[1])).or_default() += 1;
            }
            *counts.entry((label, *seg.last().unwrap())).or_default().entry(None).or_default() += 1;
        }
        for ((label, from), row) in &counts {
            let proc = &case.processes[*label as usize];
            let total: u64 = row.values().sum();
            for to in proc.states.iter().map(|&s| Some(s)).chain([None]) {
                let expected = match to {
                    Some(to) => proc.transition(*from, to).unwrap(),
                    None => proc.exit_prob(*from).unwrap(),
                };
                let freq = *row.get(&to).unwrap_or(&0) as f64 / total as f64;
                // rarely visited rows get four binomial standard deviations
                let tol = (4.0 * (expected * (1.0 - expected) / total as f64).sqrt()).max(0.02);
                assert!(
                    (freq - expected).abs() <= tol,
                    "{which:?} {}: {from} -> {to:?} seen {freq:.4}, expected {expected} over {total}",
                    proc.name
                );
            }
        }
    }
}

fn three_symbol_alphabet() -> Alphabet {
    Alphabet::new(vec!["a".into(), "b".into(), "c".into()]).unwrap()
}

#[test]
fn super_state_runs_lengthen_with_kappa() {
    let a = three_symbol_alphabet();
    let l = 3;
    let beta = vec![1.0 / l as f64; l];
    let mut means = Vec::new();
    for kappa in [0.0, 10.0, 100.0] {
        let mut rng = rng_from_seed(5);
        let (mut events, mut runs) = (0usize, 0usize);
        for _ in 0..200 {
            let mut p = ModelParams::zeros(l, 4);
            p.beta = beta.clone();
            for i in 0..l {
                p.pi_row_mut(i).copy_from_slice(&sbp2_sticky(1.0, kappa, &beta, i, &mut rng));
                p.psi_row_mut(i).copy_from_slice(&[0.25; 4]);
                for c in 0..4 {
                    p.theta_row_mut(i, c).copy_from_slice(&[0.2, 0.2, 0.1, 0.5]);
                }
            }
            let g = sample_from_immc(&p, &a, 10, 8.0, &mut rng).unwrap();
            for labels in &g.labels {
                events += labels.len();
                runs += 1 + labels.windows(2).filter(|w| w[0] != w[1]).count();
            }
        }
        means.push(events as f64 / runs as f64);
    }
    assert!(means[0] < means[1] && means[1] < means[2], "{means:?}");
}

#[test]
fn fit_recovers_two_super_states() {
    let a = three_symbol_alphabet();
    let mut p = ModelParams::zeros(2, 4);
    p.beta = vec![0.5, 0.5];
    p.pi = vec![0.0, 1.0, 1.0, 0.0];
    p.psi.fill(0.25);
    let rows = [
        // forward cycle a -> b -> c -> a, exits from c
        [[0.0, 0.9, 0.1, 0.0], [0.05, 0.0, 0.95, 0.0], [0.6, 0.1, 0.0, 0.3], [1.0, 0.0, 0.0, 0.0]],
        // backward cycle c -> b -> a -> c, exits from a
        [[0.0, 0.1, 0.6, 0.3], [0.95, 0.0, 0.05, 0.0], [0.0, 0.9, 0.1, 0.0], [0.0, 0.0, 1.0, 0.0]],
    ];
    for (i, state) in rows.iter().enumerate() {
        for (c, row) in state.iter().enumerate() {
            p.theta_row_mut(i, c).copy_from_slice(row);
        }
    }
    let mut recovered = 0;
    for seed in 0..10 {
        let g = sample_from_immc(&p, &a, 150, 4.0, &mut rng_from_seed(100 + seed)).unwrap();
        let stream = g.corpus.concatenate();
        let report = fit(&stream, &Hyperparams::default(), 50, 50, &mut rng_from_seed(seed)).unwrap();
        let total: u64 = report.stats.d.iter().sum();
        let active = report.stats.d.iter().filter(|&&d| d as f64 > 0.01 * total as f64).count();
        recovered += (active == 2) as usize;
    }
    assert!(recovered >= 8, "{recovered}/10 runs found two states");
}
