//! Model checkpoints: a kind line, `key=value` configuration lines, then
//! the parameter block.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::stgraphs::{Channel, EdgeMode};
use crate::tensor::ParamSet;

use super::{Generator, GeneratorConfig, ModelError};

pub(crate) struct Header {
    values: BTreeMap<String, (usize, String)>,
    pub(crate) params: ParamSet,
}

fn err(line: usize, reason: impl Into<String>) -> ModelError {
    ModelError::Checkpoint {
        line,
        reason: reason.into(),
    }
}

impl Header {
    pub(crate) fn read<R: BufRead>(r: R, kind: &str) -> Result<Self, ModelError> {
        let mut lines = r.lines();
        let first = lines.next().transpose()?.unwrap_or_default();
        if first.trim() != kind {
            return Err(err(1, format!("expected `{kind}`, found `{first}`")));
        }
        let mut values = BTreeMap::new();
        let mut line_no = 1;
        loop {
            line_no += 1;
            let line = lines
                .next()
                .transpose()?
                .ok_or_else(|| err(line_no, "missing parameter block"))?;
            if line == "end-config" {
                break;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(line_no, "expected key=value"))?;
            values.insert(k.to_string(), (line_no, v.to_string()));
        }
        let params = ParamSet::read_from(&mut lines, line_no)?;
        Ok(Self { values, params })
    }

    pub(crate) fn raw(&self, key: &str) -> Result<(usize, &str), ModelError> {
        self.values
            .get(key)
            .map(|(l, v)| (*l, v.as_str()))
            .ok_or_else(|| err(0, format!("missing key `{key}`")))
    }

    pub(crate) fn get<T: FromStr>(&self, key: &str) -> Result<T, ModelError> {
        let (line, v) = self.raw(key)?;
        v.parse().map_err(|_| err(line, format!("bad value for `{key}`: `{v}`")))
    }
}

impl Generator {
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<(), ModelError> {
        let c = &self.config;
        writeln!(w, "generator")?;
        writeln!(w, "num_locations={}", c.num_locations)?;
        writeln!(w, "embed_dim={}", c.embed_dim)?;
        writeln!(w, "hidden_dim={}", c.hidden_dim)?;
        writeln!(w, "layers={}", c.layers)?;
        writeln!(w, "heads={}", c.heads)?;
        let channels: Vec<&str> = c.channels.iter().map(|ch| ch.name()).collect();
        writeln!(w, "channels={}", channels.join(","))?;
        writeln!(w, "edge_mode={}", c.edge_mode)?;
        writeln!(w, "beta={:?}", c.beta)?;
        writeln!(w, "dwell={}", c.dwell)?;
        writeln!(w, "dropout={:?}", c.dropout)?;
        let start: Vec<String> = self.start.iter().map(|p| format!("{p:?}")).collect();
        writeln!(w, "start={}", start.join(" "))?;
        writeln!(w, "end-config")?;
        self.params.write_to(&mut w)?;
        Ok(())
    }

    pub fn read_checkpoint<R: BufRead>(r: R) -> Result<Self, ModelError> {
        let h = Header::read(r, "generator")?;
        let (line, ch) = h.raw("channels")?;
        let channels = ch
            .split(',')
            .map(Channel::from_str)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| err(line, e.to_string()))?;
        let (line, em) = h.raw("edge_mode")?;
        let edge_mode = EdgeMode::from_str(em).map_err(|e| err(line, e.to_string()))?;
        let config = GeneratorConfig {
            num_locations: h.get("num_locations")?,
            embed_dim: h.get("embed_dim")?,
            hidden_dim: h.get("hidden_dim")?,
            layers: h.get("layers")?,
            heads: h.get("heads")?,
            channels,
            edge_mode,
            beta: h.get("beta")?,
            dwell: h.get("dwell")?,
            dropout: h.get("dropout")?,
        };
        let (line, st) = h.raw("start")?;
        let start = st
            .split(' ')
            .map(str::parse)
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|_| err(line, "bad start distribution"))?;
        Generator::from_params(config, h.params, start)
    }
}
