//! Embedding + GRU binary classifier scoring trajectories as real or
//! generated.

use std::io::{BufRead, Write};

use rand::Rng;

use crate::generator::checkpoint::Header;
use crate::generator::ModelError;
use crate::tensor::gru::{GruCache, GruCell};
use crate::tensor::ops::{linear, linear_backward, sigmoid, LOG_CLAMP};
use crate::tensor::{Grads, ParamId, ParamSet, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscriminatorConfig {
    pub num_locations: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
}

impl DiscriminatorConfig {
    pub fn new(num_locations: usize) -> Self {
        Self {
            num_locations,
            embed_dim: 32,
            hidden_dim: 32,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Discriminator {
    config: DiscriminatorConfig,
    params: ParamSet,
    embedding: ParamId,
    gru: GruCell,
    w: ParamId,
    b: ParamId,
}

struct Pass {
    caches: Vec<GruCache>,
    last: Vec<f64>,
    logit: f64,
}

/// `ln p` and `d ln p / d logit` for `p = sigmoid(logit)` clamped into
/// `[LOG_CLAMP, 1 - LOG_CLAMP]`; the gradient is zero where the clamp binds.
fn clamped_log_sigmoid(logit: f64, positive: bool) -> (f64, f64) {
    let s = sigmoid(logit);
    let p = if positive { s } else { 1.0 - s };
    if p < LOG_CLAMP {
        return (LOG_CLAMP.ln(), 0.0);
    }
    if p > 1.0 - LOG_CLAMP {
        return ((1.0 - LOG_CLAMP).ln(), 0.0);
    }
    (p.ln(), if positive { 1.0 - s } else { -s })
}

impl Discriminator {
    pub fn new<R: Rng>(config: DiscriminatorConfig, rng: &mut R) -> Result<Self, ModelError> {
        if config.num_locations == 0 || config.embed_dim == 0 || config.hidden_dim == 0 {
            return Err(ModelError::Config("discriminator sizes must be positive".into()));
        }
        let mut ps = ParamSet::new();
        ps.register("disc.emb", Tensor::normal(&[config.num_locations, config.embed_dim], 1.0, rng))?;
        GruCell::register(&mut ps, "disc.gru", config.embed_dim, config.hidden_dim, rng)?;
        ps.register("disc.W", Tensor::xavier(config.hidden_dim, 1, rng))?;
        ps.register("disc.b", Tensor::zeros(&[1]))?;
        Self::from_params(config, ps)
    }

    pub fn from_params(config: DiscriminatorConfig, params: ParamSet) -> Result<Self, ModelError> {
        let get = |name: &str| {
            params
                .id(name)
                .ok_or_else(|| ModelError::Config(format!("missing parameter {name}")))
        };
        let d = Self {
            embedding: get("disc.emb")?,
            gru: GruCell::bind(&params, "disc.gru")?,
            w: get("disc.W")?,
            b: get("disc.b")?,
            config,
            params,
        };
        if d.params.get(d.embedding).shape() != [config.num_locations, config.embed_dim]
            || d.gru.hidden != config.hidden_dim
        {
            return Err(ModelError::Config("discriminator parameters do not match the configuration".into()));
        }
        Ok(d)
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn forward(&self, slots: &[usize]) -> Result<Pass, ModelError> {
        let n = self.config.num_locations;
        if slots.is_empty() {
            return Err(ModelError::TooShort { need: 1, got: 0 });
        }
        let emb = self.params.get(self.embedding);
        let mut z = vec![0.0; self.config.hidden_dim];
        let mut caches = Vec::with_capacity(slots.len());
        for &s in slots {
            if s >= n {
                return Err(ModelError::IdOutOfRange { id: s, n });
            }
            let (next, cache) = self.gru.forward(&self.params, emb.row(s), &z)?;
            z = next;
            caches.push(cache);
        }
        let logit = linear(&z, self.params.get(self.w), Some(self.params.get(self.b).data()))?[0];
        Ok(Pass { caches, last: z, logit })
    }

    fn backward(&self, slots: &[usize], pass: &Pass, d_logit: f64, grads: &mut Grads) {
        let mut dz = vec![0.0; self.config.hidden_dim];
        linear_backward(&pass.last, self.params.get(self.w), &[d_logit], Some(&mut dz), grads.get_mut(self.w), None);
        grads.get_mut(self.b).data_mut()[0] += d_logit;
        for (l, &s) in slots.iter().enumerate().rev() {
            let (dx, dz_prev) = self.gru.backward(&self.params, &pass.caches[l], &dz, grads);
            grads
                .get_mut(self.embedding)
                .row_mut(s)
                .iter_mut()
                .zip(&dx)
                .for_each(|(g, d)| *g += d);
            dz = dz_prev;
        }
    }

    /// Probability that `slots` is a real trajectory.
    pub fn classify(&self, slots: &[usize]) -> Result<f64, ModelError> {
        Ok(sigmoid(self.forward(slots)?.logit))
    }

    /// `mean ln D(real) + mean ln(1 - D(fake))` with clamped logs.
    pub fn d_loss(&self, real: &[&[usize]], fake: &[&[usize]]) -> Result<f64, ModelError> {
        self.d_loss_impl(real, fake, None)
    }

    /// [`Discriminator::d_loss`], accumulating the gradient of its negation
    /// (the quantity to descend) into `grads`.
    pub fn d_loss_grad(&self, real: &[&[usize]], fake: &[&[usize]], grads: &mut Grads) -> Result<f64, ModelError> {
        self.d_loss_impl(real, fake, Some(grads))
    }

    fn d_loss_impl(
        &self,
        real: &[&[usize]],
        fake: &[&[usize]],
        mut grads: Option<&mut Grads>,
    ) -> Result<f64, ModelError> {
        if real.is_empty() || fake.is_empty() {
            return Err(ModelError::Config("discriminator loss needs non-empty real and fake batches".into()));
        }
        let mut total = 0.0;
        for (batch, positive) in [(real, true), (fake, false)] {
            let scale = 1.0 / batch.len() as f64;
            for slots in batch {
                let pass = self.forward(slots)?;
                let (lp, dlp) = clamped_log_sigmoid(pass.logit, positive);
                total += scale * lp;
                if let Some(g) = grads.as_deref_mut() {
                    self.backward(slots, &pass, -scale * dlp, g);
                }
            }
        }
        Ok(total)
    }

    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<(), ModelError> {
        writeln!(w, "discriminator")?;
        writeln!(w, "num_locations={}", self.config.num_locations)?;
        writeln!(w, "embed_dim={}", self.config.embed_dim)?;
        writeln!(w, "hidden_dim={}", self.config.hidden_dim)?;
        writeln!(w, "end-config")?;
        self.params.write_to(&mut w)?;
        Ok(())
    }

    pub fn read_checkpoint<R: BufRead>(r: R) -> Result<Self, ModelError> {
        let h = Header::read(r, "discriminator")?;
        let config = DiscriminatorConfig {
            num_locations: h.get("num_locations")?,
            embed_dim: h.get("embed_dim")?,
            hidden_dim: h.get("hidden_dim")?,
        };
        Self::from_params(config, h.params)
    }
}
