use crate::stgraphs::{Channel, EdgeMode};

use super::ModelError;

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub num_locations: usize,
    /// Embedding width; also the attention output width (`heads * head_dim`).
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub channels: Vec<Channel>,
    pub edge_mode: EdgeMode,
    pub beta: f64,
    pub dwell: bool,
    /// Dropout rate applied in training mode only.
    pub dropout: f64,
}

impl GeneratorConfig {
    pub fn new(num_locations: usize) -> Self {
        Self {
            num_locations,
            embed_dim: 32,
            hidden_dim: 32,
            layers: 1,
            heads: 1,
            channels: Channel::ALL.to_vec(),
            edge_mode: EdgeMode::Vanilla,
            beta: 1.0,
            dwell: true,
            dropout: 0.6,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.num_locations < 2 {
            return bad(format!("need at least 2 locations, got {}", self.num_locations));
        }
        if self.embed_dim == 0 || self.hidden_dim == 0 {
            return bad("embedding and hidden widths must be positive".into());
        }
        if !(1..=2).contains(&self.layers) {
            return bad(format!("layers must be 1 or 2, got {}", self.layers));
        }
        if ![1, 2, 4].contains(&self.heads) {
            return bad(format!("heads must be 1, 2 or 4, got {}", self.heads));
        }
        if self.embed_dim % self.heads != 0 {
            return bad(format!("embedding width {} is not divisible by {} heads", self.embed_dim, self.heads));
        }
        if self.channels.is_empty() {
            return bad("at least one graph channel is required".into());
        }
        let mut seen = self.channels.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.channels.len() {
            return bad("duplicate graph channel".into());
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        Ok(())
    }
}
