use proptest::prelude::*;
use qdose_core::autoencoder::{kl_sparsity_gradient, kl_sparsity_penalty, train_autoencoder_on, SparseAeConfig};
use qdose_core::baseline::{
    assign_cluster, fit_kmeans, train_sarsa_transitions, ClusterModel, SarsaConfig, SarsaTransition,
};
use qdose_core::dqn::{double_targets, init_dqn, run_dqn, DqnConfig, DuelingQNet, PerBuffer, PerConfig, SumTree, Transitions};
use qdose_core::matrix::squared_distance;
use qdose_core::nn::{AdamConfig, AdamState, BatchNorm, Gradients, Layer, Mode, Network};
use qdose_core::rng::seeded;
use qdose_core::{Matrix, N_ACTIONS};
use rand::Rng;
use rand_distr::StandardNormal;

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = seeded(seed);
    let data = (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

#[test]
fn batch_norm_train_mode_standardizes_each_unit() {
    let net = Network::from_layers(4, vec![Layer::BatchNorm(BatchNorm::new(4))]).unwrap();
    let x = random_matrix(64, 4, 1).map(|v| 3.0 * v + 7.0);
    let trace = net.forward(&x, Mode::Train).unwrap();
    let y = trace.output();
    for j in 0..4 {
        let col: Vec<f64> = y.iter_rows().map(|r| r[j]).collect();
        let mean = col.iter().sum::<f64>() / 64.0;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 64.0;
        assert!(mean.abs() < 1e-6, "unit {j} mean {mean}");
        assert!((var - 1.0).abs() < 1e-4, "unit {j} var {var}");
    }
}

#[test]
fn eval_forward_leaves_the_network_untouched() {
    let mut rng = seeded(2);
    let net = DuelingQNet::new(5, &[8, 6], &mut rng).unwrap();
    let before = net.clone();
    let x = random_matrix(10, 5, 3);
    net.forward(&x, Mode::Eval).unwrap();
    net.q_values(&x).unwrap();
    assert_eq!(net, before);
}

#[test]
fn adam_first_step_ignores_gradient_scale() {
    let start = vec![0.5, -1.0, 2.0];
    let grads = [0.3, -0.02, 1.7];
    let step = |scale: f64| {
        let mut p = start.clone();
        let mut adam = AdamState::for_params(AdamConfig::with_lr(1e-2), &[&p]);
        let g = Gradients {
            blocks: vec![grads.iter().map(|v| v * scale).collect()],
        };
        adam.step(vec![&mut p[..]], &g).unwrap();
        p.iter().zip(&start).map(|(a, b)| a - b).collect::<Vec<_>>()
    };
    let base = step(1.0);
    for scale in [0.1, 10.0, 1000.0] {
        for (a, b) in step(scale).iter().zip(&base) {
            assert!((a - b).abs() < 1e-6, "scale {scale}: {a} vs {b}");
        }
    }
}

#[test]
fn dueling_q_ignores_a_common_advantage_shift() {
    let mut rng = seeded(4);
    let mut net = DuelingQNet::new(3, &[6, 4], &mut rng).unwrap();
    let x = random_matrix(7, 3, 5);
    let before = net.q_values(&x).unwrap();
    let mut blocks = net.params_mut();
    let n = blocks.len();
    for b in blocks[n - 3].iter_mut() {
        *b += 2.5;
    }
    let after = net.q_values(&x).unwrap();
    for (a, b) in before.as_slice().iter().zip(after.as_slice()) {
        assert!((a - b).abs() < 1e-12);
    }
}

fn tiny_transitions(n: usize, width: usize, seed: u64) -> Transitions {
    let mut rng = seeded(seed);
    let states = random_matrix(n, width, seed);
    let next_states = random_matrix(n, width, seed + 1);
    Transitions {
        states,
        actions: (0..n).map(|_| rng.random_range(0..N_ACTIONS)).collect(),
        rewards: (0..n).map(|_| rng.random_range(-15.0..15.0)).collect(),
        next_states,
        done: (0..n).map(|_| rng.random_bool(0.3)).collect(),
    }
}

#[test]
fn target_network_changes_only_on_schedule() {
    let data = tiny_transitions(40, 3, 6);
    let cfg = DqnConfig {
        hidden: vec![8, 8],
        batch_size: 4,
        target_update_period: 3,
        total_steps: 10,
        learning_rate: 1e-2,
        ..Default::default()
    };
    let mut state = init_dqn(3, data.len(), &cfg).unwrap();
    for step in 1..=10 {
        let before = state.target.clone();
        run_dqn(&mut state, &data, &cfg, step).unwrap();
        if step % 3 == 0 {
            assert_eq!(state.target, state.main, "step {step}");
        } else {
            assert_eq!(state.target, before, "step {step}");
            assert_ne!(state.main, state.target, "step {step}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn double_targets_stay_in_range(seed in 0u64..1000, zero_reward in any::<bool>()) {
        let cfg = DqnConfig { hidden: vec![6, 4], ..Default::default() };
        let mut rng = seeded(seed);
        let mut main = DuelingQNet::new(3, &cfg.hidden, &mut rng).unwrap();
        for block in main.params_mut() {
            for p in block.iter_mut() {
                *p *= 40.0;
            }
        }
        let target = main.clone();
        let mut data = tiny_transitions(16, 3, seed);
        if zero_reward {
            data.rewards.iter_mut().for_each(|r| *r = 0.0);
        }
        let t = double_targets(&main, &target, &data.rewards, &data.next_states, &data.done, &cfg).unwrap();
        let bound = if zero_reward { cfg.gamma * cfg.r_max } else { cfg.r_max * (1.0 + cfg.gamma) };
        for v in t {
            prop_assert!(v.abs() <= bound + 1e-12, "{} outside ±{}", v, bound);
        }
    }

    #[test]
    fn sum_tree_nodes_equal_their_children(ops in proptest::collection::vec((0usize..50, 0.0f64..100.0), 1..300)) {
        let mut tree = SumTree::new(50);
        for (i, v) in ops {
            tree.set(i, v).unwrap();
        }
        let nodes = tree.nodes();
        for k in 1..tree.leaf_slots() {
            prop_assert!((nodes[k] - nodes[2 * k] - nodes[2 * k + 1]).abs() <= 1e-9);
        }
        let leaves: f64 = (0..50).map(|i| tree.get(i)).sum();
        prop_assert!((tree.total() - leaves).abs() <= 1e-9);
    }

    #[test]
    fn per_probabilities_follow_the_priority_law(priorities in proptest::collection::vec(0.01f64..10.0, 1..64)) {
        let cfg = PerConfig::default();
        let mut buf = PerBuffer::filled(priorities.len(), cfg).unwrap();
        for (i, &p) in priorities.iter().enumerate() {
            buf.set_priority(i, p).unwrap();
        }
        let total: f64 = priorities.iter().map(|p| p.powf(cfg.alpha)).sum();
        for (i, &p) in priorities.iter().enumerate() {
            prop_assert!((buf.probability(i) - p.powf(cfg.alpha) / total).abs() < 1e-9);
        }
    }

    #[test]
    fn assignment_matches_an_exhaustive_scan(seed in 0u64..500) {
        let centroids = random_matrix(9, 4, seed);
        let model = ClusterModel { centroids: centroids.clone(), seed };
        let probes = random_matrix(50, 4, seed + 7);
        for x in probes.iter_rows() {
            let got = assign_cluster(x, &model);
            let best = (0..9)
                .map(|c| squared_distance(x, centroids.row(c)))
                .fold(f64::INFINITY, f64::min);
            prop_assert_eq!(squared_distance(x, centroids.row(got)), best);
        }
    }

    #[test]
    fn kl_penalty_is_non_negative_with_matching_gradient(rho in 0.01f64..0.99, hat in 0.01f64..0.99) {
        prop_assert!(kl_sparsity_penalty(rho, &[hat]) >= 0.0);
        let h = 1e-6;
        let numeric = (kl_sparsity_penalty(rho, &[hat + h]) - kl_sparsity_penalty(rho, &[hat - h])) / (2.0 * h);
        let analytic = kl_sparsity_gradient(rho, &[hat])[0];
        prop_assert!((analytic - numeric).abs() <= 1e-4 * analytic.abs().max(1.0));
    }
}

#[test]
fn kmeans_is_deterministic_and_covers_all_points() {
    let x = random_matrix(200, 3, 8);
    let (a, ra) = fit_kmeans(&x, 6, 9).unwrap();
    let (b, _) = fit_kmeans(&x, 6, 9).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.assign_all(&x).len(), 200);
    assert!(ra.inertia.windows(2).all(|w| w[1] <= w[0] + 1e-9));
}

#[test]
fn sarsa_stays_bounded_and_counts_every_update() {
    let mut rng = seeded(10);
    let n_states = 6;
    let transitions: Vec<SarsaTransition> = (0..300)
        .map(|_| {
            let terminal = rng.random_bool(0.2);
            SarsaTransition {
                state: rng.random_range(0..n_states),
                action: rng.random_range(0..N_ACTIONS),
                reward: if terminal { 15.0 * rng.random_range(-1.0f64..1.0).signum() } else { 0.0 },
                next: (!terminal).then(|| (rng.random_range(0..n_states), rng.random_range(0..N_ACTIONS))),
            }
        })
        .collect();
    let cfg = SarsaConfig {
        gamma: 0.9,
        n_sweeps: 30,
        ..Default::default()
    };
    let (q, epochs) = train_sarsa_transitions(&transitions, n_states, &cfg).unwrap();
    assert_eq!(q.total_visits(), 30 * 300);
    let bound = 15.0 / (1.0 - 0.9) + 1e-6;
    assert!(epochs.iter().all(|e| e.max_abs_q <= bound));
    assert!(q.max_abs() <= bound);
}

#[test]
fn autoencoder_log_accounts_for_both_terms() {
    let x = random_matrix(120, 8, 11);
    let cfg = SparseAeConfig {
        hidden_dim: 5,
        epochs: 4,
        batch_size: 32,
        beta_sparsity: 2.0,
        ..Default::default()
    };
    let (_, log) = train_autoencoder_on(&x, &cfg).unwrap();
    assert_eq!(log.len(), 4);
    for e in &log {
        assert!((e.total - (e.reconstruction + cfg.beta_sparsity * e.penalty)).abs() <= 1e-9);
    }
}

#[test]
fn stronger_sparsity_never_raises_activation() {
    let x = random_matrix(200, 8, 12);
    let activation = |beta: f64| {
        let cfg = SparseAeConfig {
            hidden_dim: 6,
            epochs: 30,
            batch_size: 50,
            beta_sparsity: beta,
            ..Default::default()
        };
        train_autoencoder_on(&x, &cfg).unwrap().1.last().unwrap().mean_activation
    };
    let (weak, strong) = (activation(0.1), activation(3.0));
    assert!(strong <= weak, "beta 3: {strong}, beta 0.1: {weak}");
}

#[test]
fn zero_epochs_keep_the_initialization() {
    let x = random_matrix(20, 4, 13);
    let cfg = SparseAeConfig {
        hidden_dim: 3,
        epochs: 0,
        ..Default::default()
    };
    let (params, log) = train_autoencoder_on(&x, &cfg).unwrap();
    assert!(log.is_empty());
    assert_eq!(params, qdose_core::autoencoder::AeParams::init(4, 3, cfg.seed));
}
