//! Trajectory generator: multi-channel graph-attention location embeddings
//! feeding a GRU with two heads.
//!
//! * The exploration head gives `softmax(h_l W_p + b_p)` over all locations.
//! * The dwell head gives `sigmoid(h_l W_d + b_d) * exp(-beta * C)`, where
//!   `C` counts the current location in the prefix (itself included).
//!
//! Sampling a step: when the prefix is longer than one slot, repeat the
//! current location with the dwell probability; otherwise draw from the
//! exploration distribution.

pub(crate) mod checkpoint;
mod config;

pub use config::GeneratorConfig;

use std::collections::HashMap;

use rand::{Rng, RngCore};
use thiserror::Error;

use crate::mobdata::Trajectory;
use crate::rng;
use crate::stgraphs::{Channel, EdgeMode, LocationGraph};
use crate::tensor::attention::{GatCache, GatLayer, Neighborhoods};
use crate::tensor::gru::{GruCache, GruCell};
use crate::tensor::ops::{
    bce_with_logit, linear, linear_backward, log_softmax, sigmoid, softmax, softmax_cross_entropy,
};
use crate::tensor::{Grads, ParamId, ParamSet, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("no graph supplied for channel {0}")]
    MissingGraph(Channel),
    #[error("location id {id} out of range for {n} locations")]
    IdOutOfRange { id: usize, n: usize },
    #[error("the prefix is empty")]
    EmptyPrefix,
    #[error("sequence needs at least {need} slots, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("checkpoint line {line}: {reason}")]
    Checkpoint { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
struct ChannelStack {
    layers: Vec<GatLayer>,
}

/// The neighbourhoods each channel's attention stack runs over.
#[derive(Debug, Clone)]
pub struct GraphContext {
    neighborhoods: Vec<Neighborhoods>,
}

/// Caches from [`Generator::embed_locations`] needed by its backward pass.
#[derive(Debug, Clone)]
pub struct EmbedCache {
    /// `[layer][channel]`
    layers: Vec<Vec<GatCache>>,
    output_mask: Option<Vec<f64>>,
}

impl EmbedCache {
    pub fn min_kink_margin(&self) -> f64 {
        self.layers
            .iter()
            .flatten()
            .map(GatCache::min_kink_margin)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Decoding state: the generated prefix, per-location counts over it, and
/// the GRU state after consuming `consumed` prefix slots.
#[derive(Debug, Clone, PartialEq)]
pub struct GenState {
    prefix: Vec<usize>,
    counts: HashMap<usize, u32>,
    hidden: Vec<f64>,
    consumed: usize,
}

impl GenState {
    pub fn new(prefix: &[usize], hidden_dim: usize) -> Self {
        let mut counts = HashMap::new();
        for &p in prefix {
            *counts.entry(p).or_insert(0) += 1;
        }
        Self {
            prefix: prefix.to_vec(),
            counts,
            hidden: vec![0.0; hidden_dim],
            consumed: 0,
        }
    }

    pub fn prefix(&self) -> &[usize] {
        &self.prefix
    }

    pub fn hidden(&self) -> &[f64] {
        &self.hidden
    }

    /// Occurrences of `location` in the prefix.
    pub fn count(&self, location: usize) -> u32 {
        self.counts.get(&location).copied().unwrap_or(0)
    }

    pub fn push(&mut self, location: usize) {
        self.prefix.push(location);
        *self.counts.entry(location).or_insert(0) += 1;
    }
}

/// A sampled trajectory with the branch that produced each step.
#[derive(Debug, Clone, PartialEq)]
pub struct Sampled {
    pub slots: Vec<usize>,
    /// `dwelled[l]` tells whether `slots[l + 1]` came from the dwell branch.
    pub dwelled: Vec<bool>,
}

/// Per-step quantities of a teacher-forced pass.
struct Unrolled {
    caches: Vec<GruCache>,
    hidden: Vec<Vec<f64>>,
    logits: Vec<Vec<f64>>,
    dwell_logits: Vec<f64>,
}

/// Gradient signal for one step: `dL/dlogits` of the exploration head and
/// `dL/d(dwell logit)`.
struct StepGrad {
    d_logits: Option<Vec<f64>>,
    d_dwell: f64,
}

#[derive(Debug, Clone)]
pub struct Generator {
    config: GeneratorConfig,
    params: ParamSet,
    start: Vec<f64>,
    embedding: ParamId,
    stacks: Vec<ChannelStack>,
    gru: GruCell,
    w_p: ParamId,
    b_p: ParamId,
    w_d: ParamId,
    b_d: ParamId,
}

/// Draws an index from a probability vector with one uniform variate.
pub fn sample_categorical(probs: &[f64], rng: &mut dyn RngCore) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Picks the next location.
///
/// With a prefix of `prefix_len > 1` slots, a Bernoulli(`dwell`) success
/// returns `current`. Otherwise the location is drawn from `explore`. A
/// zero dwell probability consumes no randomness, so it reduces exactly to
/// a draw from `explore`.
pub fn next_location(
    explore: &[f64],
    dwell: f64,
    prefix_len: usize,
    current: usize,
    rng: &mut dyn RngCore,
) -> (usize, bool) {
    if prefix_len > 1 && dwell > 0.0 && rng.gen::<f64>() < dwell {
        return (current, true);
    }
    (sample_categorical(explore, rng), false)
}

impl Generator {
    pub fn new<R: Rng>(config: GeneratorConfig, rng: &mut R) -> Result<Self, ModelError> {
        config.validate()?;
        let n = config.num_locations;
        let d = config.embed_dim;
        let h = config.hidden_dim;
        // Each block draws from its own stream, so removing a channel leaves
        // every other block's initial values unchanged.
        let base: u64 = rng.gen();
        let block = |name: &str| rng::stream(base, name, 0);
        let mut ps = ParamSet::new();
        ps.register("gen.emb", Tensor::normal(&[n, d], 1.0, &mut block("gen.emb")))?;
        for &ch in &config.channels {
            for l in 0..config.layers {
                let name = format!("gen.{ch}.l{l}");
                GatLayer::register(&mut ps, &name, d, config.heads, d / config.heads, &mut block(&name))?;
            }
        }
        GruCell::register(&mut ps, "gen.gru", d, h, &mut block("gen.gru"))?;
        ps.register("gen.W_p", Tensor::xavier(h, n, &mut block("gen.W_p")))?;
        ps.register("gen.b_p", Tensor::zeros(&[n]))?;
        ps.register("gen.W_d", Tensor::xavier(h, 1, &mut block("gen.W_d")))?;
        ps.register("gen.b_d", Tensor::zeros(&[1]))?;
        Self::from_params(config, ps, vec![1.0 / n as f64; n])
    }

    /// Binds a generator to an existing parameter set.
    pub fn from_params(config: GeneratorConfig, params: ParamSet, start: Vec<f64>) -> Result<Self, ModelError> {
        config.validate()?;
        let get = |name: &str| {
            params
                .id(name)
                .ok_or_else(|| ModelError::Config(format!("missing parameter {name}")))
        };
        let stacks = config
            .channels
            .iter()
            .map(|&channel| {
                let layers = (0..config.layers)
                    .map(|l| GatLayer::bind(&params, &format!("gen.{channel}.l{l}"), config.heads))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(ChannelStack { layers })
            })
            .collect::<Result<Vec<_>, TensorError>>()?;
        let g = Self {
            embedding: get("gen.emb")?,
            gru: GruCell::bind(&params, "gen.gru")?,
            w_p: get("gen.W_p")?,
            b_p: get("gen.b_p")?,
            w_d: get("gen.W_d")?,
            b_d: get("gen.b_d")?,
            stacks,
            config,
            params,
            start: Vec::new(),
        };
        let n = g.config.num_locations;
        if g.params.get(g.embedding).shape() != [n, g.config.embed_dim] {
            return Err(ModelError::Config("embedding table does not match the configuration".into()));
        }
        let mut g = g;
        g.set_start_distribution(start)?;
        Ok(g)
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn start_distribution(&self) -> &[f64] {
        &self.start
    }

    pub fn set_start_distribution(&mut self, start: Vec<f64>) -> Result<(), ModelError> {
        let sum: f64 = start.iter().sum();
        if start.len() != self.config.num_locations || start.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(ModelError::Config("start distribution must be a probability vector over locations".into()));
        }
        self.start = start;
        Ok(())
    }

    /// Uses the empirical distribution of first-slot locations.
    pub fn fit_start_distribution(&mut self, trajectories: &[Trajectory]) -> Result<(), ModelError> {
        let n = self.config.num_locations;
        let mut counts = vec![0.0; n];
        for t in trajectories {
            let &first = t.slots.first().ok_or(ModelError::EmptyPrefix)?;
            if first >= n {
                return Err(ModelError::IdOutOfRange { id: first, n });
            }
            counts[first] += 1.0;
        }
        let total: f64 = counts.iter().sum();
        if total == 0.0 {
            return Err(ModelError::Config("no trajectories to fit the start distribution".into()));
        }
        self.set_start_distribution(counts.into_iter().map(|c| c / total).collect())
    }

    pub fn embedding_id(&self) -> ParamId {
        self.embedding
    }

    pub fn dwell_head_ids(&self) -> (ParamId, ParamId) {
        (self.w_d, self.b_d)
    }

    pub fn explore_head_ids(&self) -> (ParamId, ParamId) {
        (self.w_p, self.b_p)
    }

    /// Builds neighbourhoods for every configured channel from `graphs`.
    pub fn prepare(&self, graphs: &[LocationGraph]) -> Result<GraphContext, ModelError> {
        let n = self.config.num_locations;
        let neighborhoods = self
            .config
            .channels
            .iter()
            .map(|&ch| {
                let g = graphs
                    .iter()
                    .find(|g| g.channel == ch)
                    .ok_or(ModelError::MissingGraph(ch))?;
                let weighted = self.config.edge_mode == EdgeMode::Weighted && g.mode == EdgeMode::Weighted;
                Ok(Neighborhoods::build(n, &g.triples(), weighted, g.self_loops)?)
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        Ok(GraphContext { neighborhoods })
    }

    /// Runs every channel's attention stack on the shared embedding table,
    /// summing channel outputs after each layer.
    ///
    /// Passing a dropout stream enables training-mode dropout on attention
    /// coefficients and on the fused output.
    pub fn embed_locations(
        &self,
        ctx: &GraphContext,
        mut dropout: Option<&mut dyn RngCore>,
    ) -> Result<(Tensor, EmbedCache), ModelError> {
        if ctx.neighborhoods.len() != self.stacks.len() {
            return Err(ModelError::Config("graph context does not match the channel set".into()));
        }
        if let Some(nb) = ctx.neighborhoods.iter().find(|nb| nb.num_nodes() != self.config.num_locations) {
            return Err(ModelError::Config(format!(
                "graph has {} nodes, model has {}",
                nb.num_nodes(),
                self.config.num_locations
            )));
        }
        let rate = self.config.dropout;
        let mut h = self.params.get(self.embedding).clone();
        let mut layer_caches = Vec::with_capacity(self.config.layers);
        for l in 0..self.config.layers {
            let mut sum: Option<Tensor> = None;
            let mut caches = Vec::with_capacity(self.stacks.len());
            for (stack, nb) in self.stacks.iter().zip(&ctx.neighborhoods) {
                let drop = dropout.as_mut().map(|r| (rate, &mut **r as &mut dyn RngCore));
                let (out, cache) = stack.layers[l].forward(&self.params, &h, nb, drop)?;
                match sum.as_mut() {
                    Some(s) => s.add_scaled(&out, 1.0),
                    None => sum = Some(out),
                }
                caches.push(cache);
            }
            h = sum.expect("at least one channel");
            layer_caches.push(caches);
        }
        let mut output_mask = None;
        if let Some(r) = dropout.as_mut() {
            if rate > 0.0 {
                let keep = 1.0 / (1.0 - rate);
                let mask: Vec<f64> = (0..h.len())
                    .map(|_| if r.gen_bool(rate) { 0.0 } else { keep })
                    .collect();
                h.data_mut().iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
                output_mask = Some(mask);
            }
        }
        Ok((
            h,
            EmbedCache {
                layers: layer_caches,
                output_mask,
            },
        ))
    }

    /// Backpropagates `d_table` through the attention stacks into the
    /// embedding table and attention parameters.
    pub fn embed_backward(&self, ctx: &GraphContext, cache: &EmbedCache, d_table: &Tensor, grads: &mut Grads) {
        let mut d = d_table.clone();
        if let Some(mask) = &cache.output_mask {
            d.data_mut().iter_mut().zip(mask).for_each(|(v, m)| *v *= m);
        }
        for l in (0..self.config.layers).rev() {
            let mut d_prev: Option<Tensor> = None;
            for ((stack, nb), gc) in self.stacks.iter().zip(&ctx.neighborhoods).zip(&cache.layers[l]) {
                let di = stack.layers[l].backward(&self.params, nb, gc, &d, grads);
                match d_prev.as_mut() {
                    Some(s) => s.add_scaled(&di, 1.0),
                    None => d_prev = Some(di),
                }
            }
            d = d_prev.expect("at least one channel");
        }
        grads.get_mut(self.embedding).add_scaled(&d, 1.0);
    }

    fn check_id(&self, id: usize) -> Result<(), ModelError> {
        let n = self.config.num_locations;
        if id >= n {
            return Err(ModelError::IdOutOfRange { id, n });
        }
        Ok(())
    }

    fn explore_logits(&self, hidden: &[f64]) -> Result<Vec<f64>, ModelError> {
        Ok(linear(hidden, self.params.get(self.w_p), Some(self.params.get(self.b_p).data()))?)
    }

    fn dwell_logit(&self, hidden: &[f64]) -> Result<f64, ModelError> {
        Ok(linear(hidden, self.params.get(self.w_d), Some(self.params.get(self.b_d).data()))?[0])
    }

    /// Feeds the not-yet-consumed prefix slots through the GRU and returns
    /// the exploration distribution for the next slot.
    pub fn explore_step(&self, table: &Tensor, state: &mut GenState) -> Result<Vec<f64>, ModelError> {
        if state.prefix.is_empty() {
            return Err(ModelError::EmptyPrefix);
        }
        while state.consumed < state.prefix.len() {
            let loc = state.prefix[state.consumed];
            self.check_id(loc)?;
            let (z, _) = self.gru.forward(&self.params, table.row(loc), &state.hidden)?;
            state.hidden = z;
            state.consumed += 1;
        }
        Ok(softmax(&self.explore_logits(&state.hidden)?))
    }

    /// Dwell probability given the hidden state and the prefix counts. Zero
    /// when the dwell branch is disabled.
    pub fn dwell_prob(&self, hidden: &[f64], state: &GenState) -> Result<f64, ModelError> {
        if !self.config.dwell {
            return Ok(0.0);
        }
        let &last = state.prefix.last().ok_or(ModelError::EmptyPrefix)?;
        let c = f64::from(state.count(last));
        Ok(sigmoid(self.dwell_logit(hidden)?) * (-self.config.beta * c).exp())
    }

    /// Extends `state` until its prefix has `len` slots; returns the branch
    /// taken at each new step.
    pub fn continue_state(
        &self,
        table: &Tensor,
        state: &mut GenState,
        len: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<bool>, ModelError> {
        let mut dwelled = Vec::new();
        while state.prefix.len() < len {
            let probs = self.explore_step(table, state)?;
            let dwell = self.dwell_prob(&state.hidden, state)?;
            let last = *state.prefix.last().expect("non-empty");
            let (next, fired) = next_location(&probs, dwell, state.prefix.len(), last, rng);
            state.push(next);
            dwelled.push(fired);
        }
        Ok(dwelled)
    }

    /// Completes `prefix` to `len` slots. The prefix is kept verbatim.
    pub fn rollout(
        &self,
        table: &Tensor,
        prefix: &[usize],
        len: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<usize>, ModelError> {
        if prefix.is_empty() {
            return Err(ModelError::EmptyPrefix);
        }
        let mut state = GenState::new(prefix, self.config.hidden_dim);
        self.continue_state(table, &mut state, len, rng)?;
        Ok(state.prefix)
    }

    /// Draws the first slot from the start distribution, then rolls out.
    pub fn sample(&self, table: &Tensor, len: usize, rng: &mut dyn RngCore) -> Result<Sampled, ModelError> {
        let first = sample_categorical(&self.start, rng);
        let mut state = GenState::new(&[first], self.config.hidden_dim);
        let dwelled = self.continue_state(table, &mut state, len, rng)?;
        Ok(Sampled {
            slots: state.prefix,
            dwelled,
        })
    }

    /// Evaluation-mode embedding table (no dropout).
    pub fn table(&self, ctx: &GraphContext) -> Result<Tensor, ModelError> {
        Ok(self.embed_locations(ctx, None)?.0)
    }

    fn unroll(&self, table: &Tensor, slots: &[usize]) -> Result<Unrolled, ModelError> {
        if slots.len() < 2 {
            return Err(ModelError::TooShort { need: 2, got: slots.len() });
        }
        for &s in slots {
            self.check_id(s)?;
        }
        let steps = slots.len() - 1;
        let mut u = Unrolled {
            caches: Vec::with_capacity(steps),
            hidden: Vec::with_capacity(steps),
            logits: Vec::with_capacity(steps),
            dwell_logits: Vec::with_capacity(steps),
        };
        let mut z = vec![0.0; self.config.hidden_dim];
        for &loc in &slots[..steps] {
            let (z_next, cache) = self.gru.forward(&self.params, table.row(loc), &z)?;
            z = z_next;
            u.logits.push(self.explore_logits(&z)?);
            u.dwell_logits.push(self.dwell_logit(&z)?);
            u.hidden.push(z.clone());
            u.caches.push(cache);
        }
        Ok(u)
    }

    fn backprop(&self, slots: &[usize], u: &Unrolled, steps: &[StepGrad], grads: &mut Grads, d_table: &mut Tensor) {
        let h = self.config.hidden_dim;
        let mut dz_next = vec![0.0; h];
        for l in (0..steps.len()).rev() {
            let mut dz = std::mem::take(&mut dz_next);
            if let Some(dl) = &steps[l].d_logits {
                linear_backward(&u.hidden[l], self.params.get(self.w_p), dl, Some(&mut dz), grads.get_mut(self.w_p), None);
                grads.get_mut(self.b_p).data_mut().iter_mut().zip(dl).for_each(|(g, d)| *g += d);
            }
            if steps[l].d_dwell != 0.0 {
                let dd = [steps[l].d_dwell];
                linear_backward(&u.hidden[l], self.params.get(self.w_d), &dd, Some(&mut dz), grads.get_mut(self.w_d), None);
                grads.get_mut(self.b_d).data_mut()[0] += dd[0];
            }
            let (dx, dz_prev) = self.gru.backward(&self.params, &u.caches[l], &dz, grads);
            d_table.row_mut(slots[l]).iter_mut().zip(&dx).for_each(|(g, d)| *g += d);
            dz_next = dz_prev;
        }
    }

    /// Whether the dwell branch can fire when predicting slot `step + 1`.
    fn dwell_eligible(&self, step: usize) -> bool {
        self.config.dwell && step + 1 > 1
    }

    /// Teacher-forced losses of one trajectory:
    /// `nll = -sum ln p_hat[next]` and the dwell head's BCE against the
    /// stay indicator (sigmoid factor only) on steps where dwelling is
    /// possible.
    pub fn sequence_nll(&self, table: &Tensor, slots: &[usize]) -> Result<(f64, f64), ModelError> {
        let u = self.unroll(table, slots)?;
        let mut nll = 0.0;
        let mut bce = 0.0;
        for l in 0..u.logits.len() {
            nll -= log_softmax(&u.logits[l])[slots[l + 1]];
            if self.dwell_eligible(l) {
                let stay = if slots[l + 1] == slots[l] { 1.0 } else { 0.0 };
                bce += bce_with_logit(u.dwell_logits[l], stay).0;
            }
        }
        Ok((nll, bce))
    }

    /// [`Generator::sequence_nll`] plus the gradient of
    /// `nll_weight * nll + bce_weight * bce`, accumulated into `grads`
    /// (heads and GRU) and `d_table` (embedding rows).
    pub fn sequence_nll_grad(
        &self,
        table: &Tensor,
        slots: &[usize],
        nll_weight: f64,
        bce_weight: f64,
        grads: &mut Grads,
        d_table: &mut Tensor,
    ) -> Result<(f64, f64), ModelError> {
        let u = self.unroll(table, slots)?;
        let mut nll = 0.0;
        let mut bce = 0.0;
        let mut steps = Vec::with_capacity(u.logits.len());
        for l in 0..u.logits.len() {
            let (loss, mut dl) = softmax_cross_entropy(&u.logits[l], slots[l + 1])?;
            nll += loss;
            dl.iter_mut().for_each(|v| *v *= nll_weight);
            let mut d_dwell = 0.0;
            if self.dwell_eligible(l) {
                let stay = if slots[l + 1] == slots[l] { 1.0 } else { 0.0 };
                let (b, g) = bce_with_logit(u.dwell_logits[l], stay);
                bce += b;
                d_dwell = bce_weight * g;
            }
            steps.push(StepGrad {
                d_logits: Some(dl),
                d_dwell,
            });
        }
        self.backprop(slots, &u, &steps, grads, d_table);
        Ok((nll, bce))
    }

    /// `ln P(step l)` terms of a sampled trajectory under the current
    /// parameters, one per generated slot.
    pub fn step_log_probs(&self, table: &Tensor, sampled: &Sampled) -> Result<Vec<f64>, ModelError> {
        let u = self.unroll(table, &sampled.slots)?;
        let mut out = Vec::with_capacity(u.logits.len());
        let mut state = GenState::new(&sampled.slots[..1], self.config.hidden_dim);
        for l in 0..u.logits.len() {
            let next = sampled.slots[l + 1];
            let log_explore = log_softmax(&u.logits[l])[next];
            let lp = if self.dwell_eligible(l) {
                let c = f64::from(state.count(sampled.slots[l]));
                let y = sigmoid(u.dwell_logits[l]) * (-self.config.beta * c).exp();
                if sampled.dwelled[l] {
                    y.ln()
                } else {
                    (1.0 - y).ln() + log_explore
                }
            } else {
                log_explore
            };
            out.push(lp);
            state.push(next);
        }
        Ok(out)
    }

    /// Accumulates the gradient of `-sum_l coeffs[l] * ln P(step l)`.
    ///
    /// A dwell step contributes `ln y_hat`; an exploration step contributes
    /// `ln p_hat[next]`, plus `ln(1 - y_hat)` where dwelling was possible.
    /// Returns `sum_l coeffs[l] * ln P(step l)`.
    pub fn policy_log_prob_grad(
        &self,
        table: &Tensor,
        sampled: &Sampled,
        coeffs: &[f64],
        grads: &mut Grads,
        d_table: &mut Tensor,
    ) -> Result<f64, ModelError> {
        let u = self.unroll(table, &sampled.slots)?;
        if coeffs.len() != u.logits.len() || sampled.dwelled.len() != u.logits.len() {
            return Err(ModelError::Config(format!(
                "{} coefficients / {} branch flags for {} steps",
                coeffs.len(),
                sampled.dwelled.len(),
                u.logits.len()
            )));
        }
        let mut state = GenState::new(&sampled.slots[..1], self.config.hidden_dim);
        let mut objective = 0.0;
        let mut steps = Vec::with_capacity(coeffs.len());
        for (l, &c) in coeffs.iter().enumerate() {
            let next = sampled.slots[l + 1];
            let mut step = StepGrad {
                d_logits: None,
                d_dwell: 0.0,
            };
            let explore = |step: &mut StepGrad| -> f64 {
                let probs = softmax(&u.logits[l]);
                let mut dl: Vec<f64> = probs.iter().map(|p| c * p).collect();
                dl[next] -= c;
                step.d_logits = Some(dl);
                probs[next].ln()
            };
            let lp = if self.dwell_eligible(l) {
                let count = f64::from(state.count(sampled.slots[l]));
                let s = sigmoid(u.dwell_logits[l]);
                let y = s * (-self.config.beta * count).exp();
                if sampled.dwelled[l] {
                    step.d_dwell = -c * (1.0 - s);
                    y.ln()
                } else {
                    step.d_dwell = c * y * (1.0 - s) / (1.0 - y);
                    (1.0 - y).ln() + explore(&mut step)
                }
            } else {
                explore(&mut step)
            };
            objective += c * lp;
            steps.push(step);
            state.push(next);
        }
        self.backprop(&sampled.slots, &u, &steps, grads, d_table);
        Ok(objective)
    }
}
