mod common;

use dynacd::evaluation::{
    auc, cosine_similarity, expected_adjacency, max_assignment, recall_at_n, PairKind, ScoredPair,
};
use dynacd::inference::e_step_q;
use dynacd::model::{lambda_rate, log_posterior};
use dynacd::network::{hat_transform, preprocess, PreprocessOptions};
use dynacd::{ModelParams, ScoredPairs, TemporalNetwork};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn network() -> impl Strategy<Value = TemporalNetwork> {
    (1usize..9, 0usize..5).prop_flat_map(|(n, t)| {
        proptest::collection::vec(proptest::bool::weighted(0.3), n * n * (t + 1)).prop_map(
            move |bits| {
                let mut net = TemporalNetwork::with_size(n, t);
                for (idx, b) in bits.into_iter().enumerate() {
                    let (s, o) = (idx / (n * n), idx % (n * n));
                    if b && o / n != o % n {
                        net.set(s, o / n, o % n, 1);
                    }
                }
                net
            },
        )
    })
}

fn instance() -> impl Strategy<Value = (TemporalNetwork, ModelParams)> {
    (network(), 1usize..4, any::<u64>()).prop_map(|(net, k, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = common::random_params(&mut rng, net.n_nodes(), k, net.n_steps());
        (net, p)
    })
}

/// Brute-force maximum over all permutations.
fn brute_assignment(m: &[f64], k: usize) -> f64 {
    fn go(m: &[f64], k: usize, row: usize, used: &mut Vec<bool>) -> f64 {
        if row == k {
            return 0.0;
        }
        let mut best = f64::NEG_INFINITY;
        for c in 0..k {
            if !used[c] {
                used[c] = true;
                best = best.max(m[row * k + c] + go(m, k, row + 1, used));
                used[c] = false;
            }
        }
        best
    }
    go(m, k, 0, &mut vec![false; k])
}

/// AUC as the fraction of (positive, negative) pairs ordered correctly.
fn quadratic_auc(items: &[(f64, bool)]) -> f64 {
    let (mut wins, mut total) = (0.0, 0.0);
    for &(sp, lp) in items {
        for &(sn, ln) in items {
            if lp && !ln {
                total += 1.0;
                wins += if sp > sn {
                    1.0
                } else if sp == sn {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    wins / total
}

fn scored(items: &[(f64, bool)]) -> ScoredPairs {
    let pairs = items
        .iter()
        .enumerate()
        .map(|(idx, &(score, label))| ScoredPair {
            i: idx,
            j: idx + 1000,
            score,
            label,
        })
        .collect();
    ScoredPairs::new(PairKind::Ordered, pairs).unwrap()
}

fn labelled_scores() -> impl Strategy<Value = Vec<(f64, bool)>> {
    proptest::collection::vec(
        ((0u8..20).prop_map(|x| x as f64 / 4.0), any::<bool>()),
        2..40,
    )
    .prop_filter("both classes", |v| {
        v.iter().any(|x| x.1) && v.iter().any(|x| !x.1)
    })
}

proptest! {
    #[test]
    fn hat_marks_exactly_the_appearances(net in network()) {
        let hat = hat_transform(&net);
        let n = net.n_nodes();
        for t in 0..=net.n_steps() {
            for i in 0..n {
                for j in 0..n {
                    let want = if t == 0 {
                        net.get(0, i, j)
                    } else {
                        net.get(t, i, j) * (1 - net.get(t - 1, i, j))
                    };
                    prop_assert_eq!(hat.get(t, i, j), want);
                }
            }
        }
    }

    #[test]
    fn preprocess_is_idempotent(net in network()) {
        if let Ok((once, _)) = preprocess(&net, PreprocessOptions::default()) {
            let (twice, report) = preprocess(&once, PreprocessOptions::default()).unwrap();
            prop_assert_eq!(&twice, &once);
            prop_assert_eq!(report.removed_self_loops, 0);
        }
    }

    #[test]
    fn network_json_round_trips(net in network()) {
        let mut buf = Vec::new();
        net.write_json(&mut buf).unwrap();
        prop_assert_eq!(TemporalNetwork::read_json(buf.as_slice()).unwrap(), net);
    }

    #[test]
    fn params_json_round_trips((_net, p) in instance()) {
        let text = serde_json::to_string(&p).unwrap();
        let back: ModelParams = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, p);
    }

    #[test]
    fn posterior_is_symmetric_and_bounded((net, p) in instance()) {
        let q = e_step_q(&p, &net).unwrap();
        let n = net.n_nodes();
        for i in 0..n {
            prop_assert_eq!(q.get(i, i), 0.0);
            for j in 0..n {
                prop_assert_eq!(q.get(i, j), q.get(j, i));
                prop_assert!((0.0..=1.0).contains(&q.get(i, j)));
            }
        }
    }

    #[test]
    fn membership_rescaling_leaves_objective_unchanged(
        (net, p) in instance(),
        c in 0.1f64..10.0,
    ) {
        let q = e_step_q(&p, &net).unwrap();
        let mut scaled = p.clone();
        scaled.u.iter_mut().for_each(|x| *x *= c);
        scaled.w.iter_mut().for_each(|x| *x /= c);
        for t in 0..=net.n_steps() {
            let (a, b) = (lambda_rate(&p, 0, 0, t).unwrap(), lambda_rate(&scaled, 0, 0, t).unwrap());
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }
        let before = log_posterior(&p, &q, &net).unwrap();
        let after = log_posterior(&scaled, &q, &net).unwrap();
        prop_assert!((before - after).abs() <= 1e-9 * before.abs().max(1.0));
    }

    #[test]
    fn expected_adjacency_is_a_probability((net, p) in instance()) {
        prop_assume!(net.n_steps() >= 1);
        let q = e_step_q(&p, &net).unwrap();
        for t in 1..=net.n_steps() {
            let e = expected_adjacency(&p, &q, net.snapshot(t - 1), t).unwrap();
            prop_assert!(e.iter().all(|x| (0.0..=1.0).contains(x)));
        }
    }

    #[test]
    fn auc_matches_quadratic_count(items in labelled_scores()) {
        let got = auc(&scored(&items)).unwrap();
        prop_assert!((got - quadratic_auc(&items)).abs() < 1e-12);
    }

    #[test]
    fn auc_ignores_monotone_transforms(items in labelled_scores()) {
        let moved: Vec<(f64, bool)> = items.iter().map(|&(s, l)| ((3.0 * s).exp() - 7.0, l)).collect();
        prop_assert_eq!(auc(&scored(&items)).unwrap(), auc(&scored(&moved)).unwrap());
    }

    #[test]
    fn recall_is_one_when_positives_lead(labels in proptest::collection::vec(any::<bool>(), 1..40)) {
        prop_assume!(labels.iter().any(|&l| l));
        let items: Vec<(f64, bool)> = labels
            .iter()
            .enumerate()
            .map(|(idx, &l)| (if l { 10.0 + idx as f64 } else { idx as f64 * 0.1 }, l))
            .collect();
        let positives = labels.iter().filter(|&&l| l).count();
        prop_assert_eq!(recall_at_n(&scored(&items), positives).unwrap(), 1.0);
    }

    #[test]
    fn cosine_is_one_under_scaling_and_permutation(
        seed in any::<u64>(),
        k in 1usize..6,
        n in 1usize..20,
    ) {
        use rand::Rng;
        use rand::seq::SliceRandom;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut perm: Vec<usize> = (0..k).collect();
        perm.shuffle(&mut rng);
        let scale: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..5.0)).collect();
        let relabel = |x: &[f64], c: &[f64]| {
            let mut y = vec![0.0; n * k];
            for i in 0..n {
                for a in 0..k {
                    y[i * k + perm[a]] = x[i * k + a] * c[a];
                }
            }
            y
        };

        // Mixed memberships keep their row directions only under a common scale.
        let mixed: Vec<f64> = (0..n * k).map(|_| rng.random_range(0.01..1.0)).collect();
        let common = vec![scale[0]; k];
        prop_assert!((cosine_similarity(&mixed, &relabel(&mixed, &common), k).unwrap() - 1.0).abs() < 1e-12);
        prop_assert!(cosine_similarity(&mixed, &relabel(&mixed, &scale), k).unwrap() <= 1.0 + 1e-12);

        // Hard memberships tolerate a separate scale per community.
        let mut hard = vec![0.0; n * k];
        for i in 0..n {
            hard[i * k + rng.random_range(0..k)] = 1.0;
        }
        prop_assert!((cosine_similarity(&hard, &relabel(&hard, &scale), k).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn assignment_matches_brute_force(seed in any::<u64>(), k in 1usize..7) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m: Vec<f64> = (0..k * k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let sigma = max_assignment(&m, k);
        let mut seen = sigma.clone();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..k).collect::<Vec<_>>());
        let got: f64 = (0..k).map(|a| m[a * k + sigma[a]]).sum();
        prop_assert!((got - brute_assignment(&m, k)).abs() < 1e-12);
    }
}
