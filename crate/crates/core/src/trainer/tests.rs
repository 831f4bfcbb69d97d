use super::*;
use crate::discriminator::DiscriminatorConfig;
use crate::generator::GeneratorConfig;
use crate::stgraphs::{Channel, Edge, EdgeMode, LocationGraph};
use chrono::NaiveDate;
use rand::Rng;

const N: usize = 6;

fn day() -> NaiveDate {
    NaiveDate::from_ymd_opt(2012, 4, 2).unwrap()
}

fn graphs() -> Vec<LocationGraph> {
    Channel::ALL
        .iter()
        .map(|&channel| LocationGraph {
            channel,
            mode: EdgeMode::Vanilla,
            k: 1,
            edges: (0..N)
                .map(|i| Edge {
                    src: i,
                    dst: (i + 1) % N,
                    weight: 1.0,
                })
                .collect(),
            self_loops: true,
        })
        .collect()
}

fn gen_config() -> GeneratorConfig {
    let mut c = GeneratorConfig::new(N);
    c.embed_dim = 8;
    c.hidden_dim = 8;
    c.dropout = 0.1;
    c
}

fn setup(seed: u64) -> (Generator, GraphContext) {
    let g = Generator::new(gen_config(), &mut rng::stream(seed, "init", 0)).unwrap();
    let ctx = g.prepare(&graphs()).unwrap();
    (g, ctx)
}

fn disc(seed: u64) -> Discriminator {
    let cfg = DiscriminatorConfig {
        num_locations: N,
        embed_dim: 8,
        hidden_dim: 8,
    };
    Discriminator::new(cfg, &mut rng::stream(seed, "init-d", 0)).unwrap()
}

fn data(count: usize, len: usize) -> Vec<Trajectory> {
    let mut r = rng::stream(0, "trainer-data", 0);
    (0..count)
        .map(|i| {
            let mut cur = r.gen_range(0..N);
            let slots = (0..len)
                .map(|_| {
                    let v = cur;
                    if r.gen_bool(0.4) {
                        cur = (cur + 1) % N;
                    }
                    v
                })
                .collect();
            Trajectory::new(format!("u{i}"), day(), slots)
        })
        .collect()
}

fn small_cfg() -> TrainConfig {
    TrainConfig {
        epochs: 2,
        pretrain_epochs: 2,
        d_pretrain_epochs: 1,
        batch_size: 4,
        rollouts: 2,
        val_samples: 8,
        seq_len: 8,
        seed: 3,
        ..TrainConfig::default()
    }
}

#[test]
fn zero_learning_rate_pretraining_keeps_parameters() {
    let (mut g, ctx) = setup(1);
    let before = g.params().clone();
    let cfg = TrainConfig {
        lr: 0.0,
        ..small_cfg()
    };
    pretrain_generator(&mut g, &ctx, &data(10, 8), &cfg, &mut |_| {}).unwrap();
    assert_eq!(g.params(), &before);
    let mut d = disc(2);
    let before = d.params().clone();
    pretrain_discriminator(&mut d, &g, &ctx, &data(10, 8), &cfg).unwrap();
    assert_eq!(d.params(), &before);
}

#[test]
fn pretraining_overfits_one_trajectory() {
    let (mut g, ctx) = setup(2);
    let one = data(1, 24).remove(0);
    let set = vec![one; 320];
    let (initial, _) = mean_nll(&g, &ctx, &set).unwrap();
    let cfg = TrainConfig {
        pretrain_epochs: 20,
        batch_size: 32,
        seq_len: 24,
        ..small_cfg()
    };
    pretrain_generator(&mut g, &ctx, &set, &cfg, &mut |_| {}).unwrap();
    let (fin, _) = mean_nll(&g, &ctx, &set).unwrap();
    assert!(fin < 0.5 * initial, "{fin} vs {initial}");
}

#[test]
fn pretraining_is_deterministic() {
    let run = || {
        let (mut g, ctx) = setup(5);
        let log = pretrain_generator(&mut g, &ctx, &data(12, 8), &small_cfg(), &mut |_| {}).unwrap();
        let mut buf = Vec::new();
        g.write_checkpoint(&mut buf).unwrap();
        (log, buf)
    };
    assert_eq!(run(), run());
    assert!(matches!(
        pretrain_generator(&mut setup(0).0, &setup(0).1, &[], &small_cfg(), &mut |_| {}),
        Err(TrainError::Empty(_))
    ));
}

#[test]
fn discriminator_is_at_chance_on_identical_sources() {
    let (g, ctx) = setup(7);
    let table = g.table(&ctx).unwrap();
    let real_train = to_trajectories(&sample_batch(&g, &table, 64, 8, 1, "a").unwrap(), day());
    let cfg = TrainConfig {
        d_pretrain_epochs: 3,
        ..small_cfg()
    };
    let mut d = disc(3);
    pretrain_discriminator(&mut d, &g, &ctx, &real_train, &cfg).unwrap();
    let real = sample_batch(&g, &table, 5000, 8, 11, "held-real").unwrap();
    let fake = sample_batch(&g, &table, 5000, 8, 12, "held-fake").unwrap();
    let r: Vec<&[usize]> = real.iter().map(|s| s.slots.as_slice()).collect();
    let f: Vec<&[usize]> = fake.iter().map(|s| s.slots.as_slice()).collect();
    let acc = discriminator_accuracy(&d, &r, &f).unwrap();
    assert!((acc - 0.5).abs() < 0.05, "{acc}");
}

#[test]
fn constant_discriminator_gives_constant_rewards() {
    let (g, ctx) = setup(4);
    let table = g.table(&ctx).unwrap();
    let mut d = disc(0);
    let ids: Vec<_> = d.params().ids().collect();
    for id in ids {
        d.params_mut().get_mut(id).fill(0.0);
    }
    let batch = sample_batch(&g, &table, 3, 8, 0, "s").unwrap();
    for t in compute_rewards(&g, &table, &d, &batch, 3, 0, "r").unwrap() {
        assert_eq!(t.0, vec![0.5; 8]);
    }
    assert!(compute_rewards(&g, &table, &d, &batch, 0, 0, "r").is_err());
}

#[test]
fn deterministic_policy_single_rollout_rewards_equal_final_score() {
    let (mut g, ctx) = setup(4);
    let mut cfg = g.config().clone();
    cfg.beta = 1e-300;
    let mut params = g.params().clone();
    let (w_d, b_d) = g.dwell_head_ids();
    params.get_mut(w_d).fill(0.0);
    params.get_mut(b_d).fill(1000.0);
    g = Generator::from_params(cfg, params, g.start_distribution().to_vec()).unwrap();
    let table = g.table(&ctx).unwrap();
    let d = disc(9);
    let s = Sampled {
        slots: vec![2, 2, 2, 2, 2, 2],
        dwelled: vec![false, true, true, true, true],
    };
    let t = &compute_rewards(&g, &table, &d, &[s.clone()], 1, 0, "r").unwrap()[0];
    let full = d.classify(&s.slots).unwrap();
    assert!(t.0[1..].iter().all(|&v| v == full));
    assert!(t.0.iter().all(|&v| (0.0..=1.0).contains(&v)));
}

#[test]
fn rewards_at_baseline_give_zero_gradient() {
    let (g, ctx) = setup(6);
    let table = g.table(&ctx).unwrap();
    let batch = sample_batch(&g, &table, 4, 8, 0, "s").unwrap();
    let rewards: Vec<RewardTable> = batch.iter().map(|_| RewardTable(vec![0.37; 8])).collect();
    let grads = policy_gradient(&g, &ctx, &batch, &rewards, 0.37).unwrap();
    assert_eq!(grads.norm(), 0.0);
    let short = vec![RewardTable(vec![0.5; 8])];
    assert!(matches!(policy_gradient(&g, &ctx, &batch, &short, 0.0), Err(TrainError::Misaligned { .. })));
}

/// Two locations and two slots: one exploration draw, a 2-action bandit.
fn bandit() -> (Generator, GraphContext, Tensor, Vec<f64>) {
    let mut cfg = GeneratorConfig::new(2);
    cfg.embed_dim = 2;
    cfg.hidden_dim = 2;
    cfg.channels = vec![Channel::Sdg];
    let g = Generator::new(cfg, &mut rng::stream(0, "bandit", 0)).unwrap();
    let mut g = g;
    g.set_start_distribution(vec![1.0, 0.0]).unwrap();
    let graph = LocationGraph {
        channel: Channel::Sdg,
        mode: EdgeMode::Vanilla,
        k: 1,
        edges: vec![Edge { src: 0, dst: 1, weight: 1.0 }, Edge { src: 1, dst: 0, weight: 1.0 }],
        self_loops: true,
    };
    let ctx = g.prepare(&[graph]).unwrap();
    let table = g.table(&ctx).unwrap();
    let mut st = crate::generator::GenState::new(&[0], 2);
    let probs = g.explore_step(&table, &mut st).unwrap();
    (g, ctx, table, probs)
}

#[test]
fn bandit_update_matches_analytic_reinforce_gradient() {
    let (g, ctx, _, p) = bandit();
    let (_, b_p) = g.explore_head_ids();
    for action in 0..2 {
        let reward = 0.8;
        let s = Sampled {
            slots: vec![0, action],
            dwelled: vec![false],
        };
        let grads = policy_gradient(&g, &ctx, &[s], &[RewardTable(vec![0.0, reward])], 0.0).unwrap();
        // descent direction of -R ln p_a with respect to the logits
        for k in 0..2 {
            let onehot = if k == action { 1.0 } else { 0.0 };
            let expect = reward * (p[k] - onehot);
            assert!((grads.get(b_p).data()[k] - expect).abs() < 1e-12);
        }
    }
}

#[test]
fn reinforce_estimator_is_unbiased_on_a_bandit() {
    let (g, _, table, p) = bandit();
    let (_, b_p) = g.explore_head_ids();
    let reward = [0.2, 0.9];
    // d E[R] / d b_p[0] = sum_a R(a) p_a (1[a = 0] - p_0)
    let analytic: f64 = (0..2).map(|a| reward[a] * p[a] * (f64::from(u8::from(a == 0)) - p[0])).sum();
    let draws = 100_000;
    let mut r = rng::stream(0, "bandit-draws", 0);
    let mut samples = Vec::with_capacity(draws);
    for _ in 0..draws {
        let s = g.sample(&table, 2, &mut r).unwrap();
        let mut grads = g.params().zero_grads();
        let mut dt = Tensor::zeros(table.shape());
        g.policy_log_prob_grad(&table, &s, &[reward[s.slots[1]]], &mut grads, &mut dt)
            .unwrap();
        // ascent direction is the negated descent gradient
        samples.push(-grads.get(b_p).data()[0]);
    }
    let mean = samples.iter().sum::<f64>() / draws as f64;
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
    let se = (var / draws as f64).sqrt();
    assert!((mean - analytic).abs() < 3.0 * se, "{mean} vs {analytic} (se {se})");
}

#[test]
fn baseline_tracks_an_exponential_average() {
    let mut b = Baseline::new(true, 0.9);
    assert_eq!(b.current(0.4), 0.4);
    b.update(0.4);
    b.update(0.6);
    assert!((b.current(0.0) - 0.42).abs() < 1e-15);
    let off = Baseline::new(false, 0.9);
    assert_eq!(off.current(0.7), 0.0);
}

#[test]
fn zero_adversarial_epochs_keep_the_pretrained_state() {
    let (mut g, ctx) = setup(8);
    let mut d = disc(8);
    let before = (g.params().clone(), d.params().clone());
    let ts = data(16, 8);
    let val = ValidationSet {
        valid: &ts[..8],
        locations: &(0..N).map(|i| LatLon::new(40.0 + 0.01 * i as f64, -74.0)).collect::<Vec<_>>(),
    };
    let cfg = TrainConfig {
        epochs: 0,
        ..small_cfg()
    };
    let out = adversarial_train(&mut g, &mut d, &ctx, &ts, val, &cfg, &mut |_| {}).unwrap();
    assert_eq!(out.best_epoch, 0);
    assert_eq!(out.log.len(), 1);
    assert_eq!((g.params().clone(), d.params().clone()), before);
}

#[test]
fn zero_learning_rate_adversarial_training_is_a_no_op() {
    let (mut g, ctx) = setup(8);
    let mut d = disc(8);
    let before = (g.params().clone(), d.params().clone());
    let ts = data(16, 8);
    let locs: Vec<LatLon> = (0..N).map(|i| LatLon::new(40.0 + 0.01 * i as f64, -74.0)).collect();
    let val = ValidationSet {
        valid: &ts[..8],
        locations: &locs,
    };
    let cfg = TrainConfig {
        lr: 0.0,
        ..small_cfg()
    };
    adversarial_train(&mut g, &mut d, &ctx, &ts, val, &cfg, &mut |_| {}).unwrap();
    assert_eq!((g.params().clone(), d.params().clone()), before);
}

#[test]
fn adversarial_training_is_reproducible() {
    let ts = data(16, 8);
    let locs: Vec<LatLon> = (0..N).map(|i| LatLon::new(40.0 + 0.01 * i as f64, -74.0)).collect();
    let run = || {
        let (mut g, ctx) = setup(8);
        let mut d = disc(8);
        let val = ValidationSet {
            valid: &ts[..8],
            locations: &locs,
        };
        let mut lines = Vec::new();
        let out = adversarial_train(&mut g, &mut d, &ctx, &ts, val, &small_cfg(), &mut |e| lines.push(e.to_string())).unwrap();
        (out.best_epoch, lines, g.params().clone())
    };
    let a = run();
    assert_eq!(a, run());
    assert_eq!(a.1.len(), 3);
    assert!(a.1[1].starts_with("phase=adversarial epoch=1 "));
}

#[test]
fn parallel_map_preserves_order() {
    assert_eq!(par_map(1000, |i| i * 2), (0..1000).map(|i| i * 2).collect::<Vec<_>>());
    assert!(par_map(0, |i| i).is_empty());
}
