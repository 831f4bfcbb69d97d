//! Maximum-likelihood pretraining and adversarial REINFORCE training.
//!
//! Every random draw comes from a named stream of the master seed, so a run
//! is reproducible bit for bit. Rollouts and sampling fan out over threads;
//! each item owns its stream, so thread count never changes results.

use std::fmt;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::discriminator::Discriminator;
use crate::generator::{GraphContext, Generator, ModelError, Sampled};
use crate::metrics::{evaluate, MetricError, METRIC_NAMES};
use crate::mobdata::{LatLon, Trajectory};
use crate::rng;
use crate::tensor::optim::{Optimizer, OptimizerKind};
use crate::tensor::{Grads, ParamSet, Tensor};
use crate::SLOTS_PER_DAY;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("{0} split is empty")]
    Empty(&'static str),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("{got} reward tables for {expected} trajectories")]
    Misaligned { expected: usize, got: usize },
    #[error("training diverged at {step}: parameter {param} is not finite")]
    Diverged { step: String, param: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Adversarial epochs.
    pub epochs: usize,
    pub pretrain_epochs: usize,
    pub d_pretrain_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub rollouts: usize,
    pub g_steps: usize,
    pub d_steps: usize,
    /// Generated trajectories scored against the validation split per epoch.
    pub val_samples: usize,
    pub baseline: bool,
    pub baseline_decay: f64,
    pub seq_len: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            pretrain_epochs: 20,
            d_pretrain_epochs: 5,
            batch_size: 32,
            lr: 0.01,
            optimizer: OptimizerKind::Adam,
            rollouts: 16,
            g_steps: 1,
            d_steps: 1,
            val_samples: 200,
            baseline: true,
            baseline_decay: 0.9,
            seq_len: SLOTS_PER_DAY,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.batch_size == 0 || self.rollouts == 0 || self.g_steps == 0 || self.d_steps == 0 || self.val_samples == 0 {
            return bad("batch size, rollouts, g-steps, d-steps and validation samples must be positive");
        }
        if self.seq_len < 2 {
            return bad("sequence length must be at least 2");
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return bad("learning rate must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return bad("baseline decay must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Maps `f` over `0..n` on scoped threads, preserving order.
pub fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let threads = std::thread::available_parallelism().map_or(1, |p| p.get()).min(n.max(1));
    if threads <= 1 {
        return (0..n).map(f).collect();
    }
    let chunk = n.div_ceil(threads);
    let f = &f;
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|t| s.spawn(move || (t * chunk..((t + 1) * chunk).min(n)).map(f).collect::<Vec<T>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

fn check_finite(ps: &ParamSet, step: impl FnOnce() -> String) -> Result<(), TrainError> {
    match ps.first_non_finite() {
        Some(param) => Err(TrainError::Diverged {
            step: step(),
            param: param.to_string(),
        }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainEpoch {
    pub epoch: usize,
    /// Mean per-trajectory NLL over the epoch's batches.
    pub nll: f64,
    pub dwell_bce: f64,
}

impl fmt::Display for PretrainEpoch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "phase=pretrain epoch={} nll={:?} dwell_bce={:?}", self.epoch, self.nll, self.dwell_bce)
    }
}

/// Mean per-trajectory `(nll, dwell_bce)` in evaluation mode.
pub fn mean_nll(gen: &Generator, ctx: &GraphContext, trajectories: &[Trajectory]) -> Result<(f64, f64), TrainError> {
    if trajectories.is_empty() {
        return Err(TrainError::Empty("evaluation"));
    }
    let table = gen.table(ctx)?;
    let per = par_map(trajectories.len(), |i| gen.sequence_nll(&table, &trajectories[i].slots));
    let mut acc = (0.0, 0.0);
    for r in per {
        let (a, b) = r?;
        acc.0 += a;
        acc.1 += b;
    }
    let n = trajectories.len() as f64;
    Ok((acc.0 / n, acc.1 / n))
}

/// Minimizes `nll + dwell_bce` by minibatch descent; dropout is active.
/// Also fits the start distribution to the training split.
pub fn pretrain_generator(
    gen: &mut Generator,
    ctx: &GraphContext,
    train: &[Trajectory],
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&PretrainEpoch),
) -> Result<Vec<PretrainEpoch>, TrainError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::Empty("training"));
    }
    gen.fit_start_distribution(train)?;
    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr, gen.params());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::with_capacity(cfg.pretrain_epochs);
    let mut step = 0u64;
    for epoch in 1..=cfg.pretrain_epochs {
        order.shuffle(&mut rng::stream(cfg.seed, "pretrain-shuffle", epoch as u64));
        let (mut nll_sum, mut bce_sum) = (0.0, 0.0);
        for batch in order.chunks(cfg.batch_size) {
            let mut drop_rng = rng::stream(cfg.seed, "dropout", step);
            let (table, cache) = gen.embed_locations(ctx, Some(&mut drop_rng))?;
            let mut grads = gen.params().zero_grads();
            let mut d_table = Tensor::zeros(table.shape());
            for &i in batch {
                let (nll, bce) = gen.sequence_nll_grad(&table, &train[i].slots, 1.0, 1.0, &mut grads, &mut d_table)?;
                nll_sum += nll;
                bce_sum += bce;
            }
            gen.embed_backward(ctx, &cache, &d_table, &mut grads);
            grads.scale(1.0 / batch.len() as f64);
            opt.step(gen.params_mut(), &grads);
            check_finite(gen.params(), || format!("pretrain epoch {epoch} step {step}"))?;
            step += 1;
        }
        let n = train.len() as f64;
        let entry = PretrainEpoch {
            epoch,
            nll: nll_sum / n,
            dwell_bce: bce_sum / n,
        };
        on_epoch(&entry);
        log.push(entry);
    }
    Ok(log)
}

/// Samples `count` trajectories; trajectory `i` uses stream `(tag, i)`.
pub fn sample_batch(
    gen: &Generator,
    table: &Tensor,
    count: usize,
    len: usize,
    seed: u64,
    tag: &str,
) -> Result<Vec<Sampled>, TrainError> {
    par_map(count, |i| gen.sample(table, len, &mut rng::stream(seed, tag, i as u64)))
        .into_iter()
        .map(|r| r.map_err(TrainError::from))
        .collect()
}

/// Sampled trajectories wrapped as generated-user trajectories.
pub fn to_trajectories(samples: &[Sampled], template_day: chrono::NaiveDate) -> Vec<Trajectory> {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| Trajectory::new(format!("gen{i:06}"), template_day, s.slots.clone()))
        .collect()
}

/// Fraction of `real` scored above 0.5 plus fraction of `fake` at or below.
pub fn discriminator_accuracy(disc: &Discriminator, real: &[&[usize]], fake: &[&[usize]]) -> Result<f64, TrainError> {
    let mut correct = 0usize;
    for r in real {
        correct += usize::from(disc.classify(r)? > 0.5);
    }
    for f in fake {
        correct += usize::from(disc.classify(f)? <= 0.5);
    }
    Ok(correct as f64 / (real.len() + fake.len()) as f64)
}

/// One discriminator ascent step on a real batch against fresh fakes.
fn d_step(
    disc: &mut Discriminator,
    opt: &mut Optimizer,
    real: &[&[usize]],
    fake: &[&[usize]],
    label: impl FnOnce() -> String,
) -> Result<f64, TrainError> {
    let mut grads = disc.params().zero_grads();
    let loss = disc.d_loss_grad(real, fake, &mut grads)?;
    opt.step(disc.params_mut(), &grads);
    check_finite(disc.params(), label)?;
    Ok(loss)
}

/// Maximizes the discriminator objective on real batches against freshly
/// sampled generator batches. Returns the mean objective per epoch.
pub fn pretrain_discriminator(
    disc: &mut Discriminator,
    gen: &Generator,
    ctx: &GraphContext,
    real: &[Trajectory],
    cfg: &TrainConfig,
) -> Result<Vec<f64>, TrainError> {
    cfg.validate()?;
    if real.is_empty() {
        return Err(TrainError::Empty("training"));
    }
    let table = gen.table(ctx)?;
    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr, disc.params());
    let mut order: Vec<usize> = (0..real.len()).collect();
    let mut out = Vec::with_capacity(cfg.d_pretrain_epochs);
    let mut step = 0u64;
    for epoch in 1..=cfg.d_pretrain_epochs {
        order.shuffle(&mut rng::stream(cfg.seed, "d-pretrain-shuffle", epoch as u64));
        let mut total = 0.0;
        let mut batches = 0;
        for batch in order.chunks(cfg.batch_size) {
            let fakes = sample_batch(gen, &table, batch.len(), cfg.seq_len, cfg.seed, &format!("d-pretrain-fake-{step}"))?;
            let real_b: Vec<&[usize]> = batch.iter().map(|&i| real[i].slots.as_slice()).collect();
            let fake_b: Vec<&[usize]> = fakes.iter().map(|s| s.slots.as_slice()).collect();
            total += d_step(disc, &mut opt, &real_b, &fake_b, || format!("discriminator pretrain step {step}"))?;
            batches += 1;
            step += 1;
        }
        out.push(total / batches as f64);
    }
    Ok(out)
}

/// Per-prefix rewards of one generated trajectory: entry `l - 1` scores
/// the prefix of length `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardTable(pub Vec<f64>);

impl RewardTable {
    /// Reward credited to generated step `j`, the action producing slot
    /// `j + 1`.
    pub fn for_step(&self, j: usize) -> f64 {
        self.0[j + 1]
    }
}

/// Monte-Carlo rewards: for a prefix shorter than the trajectory, the mean
/// discriminator score of `n` completions; for the full trajectory, its
/// own score. Completion `k` of prefix length `l` in trajectory `i` uses
/// stream `(tag, (i * L + l) * n + k)`.
pub fn compute_rewards(
    gen: &Generator,
    table: &Tensor,
    disc: &Discriminator,
    batch: &[Sampled],
    n: usize,
    seed: u64,
    tag: &str,
) -> Result<Vec<RewardTable>, TrainError> {
    if n == 0 {
        return Err(TrainError::Config("rollout count must be positive".into()));
    }
    par_map(batch.len(), |i| -> Result<RewardTable, TrainError> {
        let slots = &batch[i].slots;
        let len = slots.len();
        let mut rewards = Vec::with_capacity(len);
        let mut state = crate::generator::GenState::new(&slots[..1], gen.config().hidden_dim);
        for l in 1..len {
            gen.explore_step(table, &mut state)?;
            let mut sum = 0.0;
            for k in 0..n {
                let mut r = rng::stream(seed, tag, ((i * len + l) * n + k) as u64);
                let mut rollout = state.clone();
                gen.continue_state(table, &mut rollout, len, &mut r)?;
                sum += disc.classify(rollout.prefix())?;
            }
            rewards.push(sum / n as f64);
            state.push(slots[l]);
        }
        rewards.push(disc.classify(slots)?);
        Ok(RewardTable(rewards))
    })
    .into_iter()
    .collect()
}

/// Exponential moving average of batch-mean rewards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Baseline {
    pub enabled: bool,
    pub decay: f64,
    pub value: Option<f64>,
}

impl Baseline {
    pub fn new(enabled: bool, decay: f64) -> Self {
        Self {
            enabled,
            decay,
            value: None,
        }
    }

    /// Baseline for a batch with mean reward `mean`; the first batch
    /// initializes it to its own mean.
    pub fn current(&self, mean: f64) -> f64 {
        if !self.enabled {
            return 0.0;
        }
        self.value.unwrap_or(mean)
    }

    pub fn update(&mut self, mean: f64) {
        if self.enabled {
            self.value = Some(match self.value {
                Some(v) => self.decay * v + (1.0 - self.decay) * mean,
                None => mean,
            });
        }
    }
}

/// Batch-mean gradient of `-sum_l (R_l - b) ln P(step l)` over all
/// generator parameters, in evaluation mode.
pub fn policy_gradient(
    gen: &Generator,
    ctx: &GraphContext,
    batch: &[Sampled],
    rewards: &[RewardTable],
    baseline: f64,
) -> Result<Grads, TrainError> {
    if rewards.len() != batch.len() {
        return Err(TrainError::Misaligned {
            expected: batch.len(),
            got: rewards.len(),
        });
    }
    let (table, cache) = gen.embed_locations(ctx, None)?;
    let mut grads = gen.params().zero_grads();
    let mut d_table = Tensor::zeros(table.shape());
    for (s, r) in batch.iter().zip(rewards) {
        if r.0.len() != s.slots.len() {
            return Err(TrainError::Misaligned {
                expected: s.slots.len(),
                got: r.0.len(),
            });
        }
        let coeffs: Vec<f64> = (0..s.slots.len() - 1).map(|j| r.for_step(j) - baseline).collect();
        gen.policy_log_prob_grad(&table, s, &coeffs, &mut grads, &mut d_table)?;
    }
    gen.embed_backward(ctx, &cache, &d_table, &mut grads);
    grads.scale(1.0 / batch.len().max(1) as f64);
    Ok(grads)
}

fn mean_reward(rewards: &[RewardTable]) -> f64 {
    let (sum, count) = rewards
        .iter()
        .flat_map(|r| r.0[1..].iter())
        .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// One g-step: sample, score with rollouts, and step along the policy
/// gradient. Returns the batch-mean reward.
#[allow(clippy::too_many_arguments)]
pub fn policy_gradient_step(
    gen: &mut Generator,
    ctx: &GraphContext,
    disc: &Discriminator,
    opt: &mut Optimizer,
    baseline: &mut Baseline,
    cfg: &TrainConfig,
    tag: &str,
) -> Result<f64, TrainError> {
    let table = gen.table(ctx)?;
    let batch = sample_batch(gen, &table, cfg.batch_size, cfg.seq_len, cfg.seed, &format!("{tag}-sample"))?;
    let rewards = compute_rewards(gen, &table, disc, &batch, cfg.rollouts, cfg.seed, &format!("{tag}-rollout"))?;
    let mean = mean_reward(&rewards);
    let b = baseline.current(mean);
    let grads = policy_gradient(gen, ctx, &batch, &rewards, b)?;
    opt.step(gen.params_mut(), &grads);
    baseline.update(mean);
    check_finite(gen.params(), || format!("generator {tag}"))?;
    Ok(mean)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialEpoch {
    pub epoch: usize,
    pub mean_reward: f64,
    pub d_objective: f64,
    pub jsd: [f64; 6],
    pub mean_jsd: f64,
}

impl fmt::Display for AdversarialEpoch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "phase=adversarial epoch={} reward={:?} d_objective={:?}",
            self.epoch, self.mean_reward, self.d_objective
        )?;
        for (name, v) in METRIC_NAMES.iter().zip(self.jsd) {
            write!(f, " {name}={v:?}")?;
        }
        write!(f, " mean_jsd={:?}", self.mean_jsd)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialOutcome {
    /// Epoch 0 is the state before adversarial training.
    pub best_epoch: usize,
    pub log: Vec<AdversarialEpoch>,
}

/// The data adversarial training validates against.
#[derive(Debug, Clone, Copy)]
pub struct ValidationSet<'a> {
    pub valid: &'a [Trajectory],
    pub locations: &'a [LatLon],
}

/// Six validation JSDs of `val_samples` generated trajectories.
pub fn validation_jsd(gen: &Generator, ctx: &GraphContext, val: ValidationSet<'_>, cfg: &TrainConfig) -> Result<[f64; 6], TrainError> {
    if val.valid.is_empty() {
        return Err(TrainError::Empty("validation"));
    }
    let table = gen.table(ctx)?;
    let samples = sample_batch(gen, &table, cfg.val_samples, cfg.seq_len, cfg.seed, "validation")?;
    let generated = to_trajectories(&samples, val.valid[0].day);
    let report = evaluate(val.valid, &generated, val.locations)?;
    Ok(report.values().map(|(_, v)| v))
}

/// Alternates g-steps and d-steps for `cfg.epochs` epochs, validating after
/// each. `gen` ends at the checkpoint with the lowest mean validation JSD
/// (epoch 0, the starting state, included); ties keep the earlier epoch.
pub fn adversarial_train(
    gen: &mut Generator,
    disc: &mut Discriminator,
    ctx: &GraphContext,
    train: &[Trajectory],
    val: ValidationSet<'_>,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&AdversarialEpoch),
) -> Result<AdversarialOutcome, TrainError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::Empty("training"));
    }
    let mut g_opt = Optimizer::new(cfg.optimizer, cfg.lr, gen.params());
    let mut d_opt = Optimizer::new(cfg.optimizer, cfg.lr, disc.params());
    let mut baseline = Baseline::new(cfg.baseline, cfg.baseline_decay);

    let jsd = validation_jsd(gen, ctx, val, cfg)?;
    let first = AdversarialEpoch {
        epoch: 0,
        mean_reward: f64::NAN,
        d_objective: f64::NAN,
        jsd,
        mean_jsd: jsd.iter().sum::<f64>() / 6.0,
    };
    on_epoch(&first);
    let mut best = (0usize, first.mean_jsd, gen.params().clone());
    let mut log = vec![first];

    for epoch in 1..=cfg.epochs {
        let mut rewards = 0.0;
        for g in 0..cfg.g_steps {
            rewards += policy_gradient_step(gen, ctx, disc, &mut g_opt, &mut baseline, cfg, &format!("adv-e{epoch}-g{g}"))?;
        }
        let table = gen.table(ctx)?;
        let mut d_obj = 0.0;
        for d in 0..cfg.d_steps {
            let mut pick = rng::stream(cfg.seed, "adv-real", (epoch * cfg.d_steps + d) as u64);
            let real: Vec<&[usize]> = train
                .choose_multiple(&mut pick, cfg.batch_size.min(train.len()))
                .map(|t| t.slots.as_slice())
                .collect();
            let fakes = sample_batch(gen, &table, real.len(), cfg.seq_len, cfg.seed, &format!("adv-e{epoch}-d{d}-fake"))?;
            let fake: Vec<&[usize]> = fakes.iter().map(|s| s.slots.as_slice()).collect();
            d_obj += d_step(disc, &mut d_opt, &real, &fake, || format!("discriminator epoch {epoch} step {d}"))?;
        }
        let jsd = validation_jsd(gen, ctx, val, cfg)?;
        let entry = AdversarialEpoch {
            epoch,
            mean_reward: rewards / cfg.g_steps as f64,
            d_objective: d_obj / cfg.d_steps as f64,
            jsd,
            mean_jsd: jsd.iter().sum::<f64>() / 6.0,
        };
        on_epoch(&entry);
        if entry.mean_jsd < best.1 {
            best = (epoch, entry.mean_jsd, gen.params().clone());
        }
        log.push(entry);
    }
    gen.params_mut().load_values(&best.2).map_err(ModelError::from)?;
    Ok(AdversarialOutcome { best_epoch: best.0, log })
}

#[cfg(test)]
mod tests;
