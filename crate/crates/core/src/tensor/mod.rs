//! Dense row-major arrays with hand-written forward/backward passes.
//!
//! There is no tape. Every op returns its output together with whatever
//! cache its backward needs, and backward functions accumulate into a
//! [`Grads`] shaped like the [`ParamSet`] the op reads from. Keeping the
//! accumulator separate from the values lets independent samples fill
//! disjoint accumulators that are summed afterwards.

pub mod attention;
pub mod gradcheck;
pub mod gru;
pub mod ops;
pub mod optim;

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("parameter `{0}` is already registered")]
    DuplicateName(String),
    #[error("parameter name `{0}` must be non-empty and free of whitespace")]
    BadName(String),
    #[error("{op}: index {index} out of range for {len}")]
    Index {
        op: &'static str,
        index: usize,
        len: usize,
    },
    #[error("{0}")]
    Graph(String),
    #[error("checkpoint line {line}: {reason}")]
    Checkpoint { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> TensorError {
    TensorError::Shape {
        op,
        detail: detail.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self, TensorError> {
        let want: usize = shape.iter().product();
        if want != data.len() {
            return Err(shape_err(
                "tensor",
                format!("shape {shape:?} needs {want} values, got {}", data.len()),
            ));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Values drawn uniformly from `[-bound, bound]`.
    pub fn uniform<R: Rng>(shape: &[usize], bound: f64, rng: &mut R) -> Self {
        let mut t = Self::zeros(shape);
        if bound > 0.0 {
            let d = Uniform::new_inclusive(-bound, bound);
            t.data.iter_mut().for_each(|v| *v = d.sample(rng));
        }
        t
    }

    pub fn normal<R: Rng>(shape: &[usize], std: f64, rng: &mut R) -> Self {
        let mut t = Self::zeros(shape);
        let d = Normal::new(0.0, std).expect("finite std");
        t.data.iter_mut().for_each(|v| *v = d.sample(rng));
        t
    }

    /// Glorot-uniform init for a `[fan_in, fan_out]` matrix.
    pub fn xavier<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Self::uniform(&[fan_in, fan_out], bound, rng)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    pub fn cols(&self) -> usize {
        if self.shape.len() < 2 {
            self.data.len()
        } else {
            self.shape[1..].iter().product()
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Tensor, scale: f64) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Handle to a tensor registered in a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named trainable tensors, in registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<Tensor>,
    lookup: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: &str, value: Tensor) -> Result<ParamId, TensorError> {
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(TensorError::BadName(name.to_string()));
        }
        if self.lookup.contains_key(name) {
            return Err(TensorError::DuplicateName(name.to_string()));
        }
        let id = self.values.len();
        self.lookup.insert(name.to_string(), id);
        self.names.push(name.to_string());
        self.values.push(value);
        Ok(ParamId(id))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.lookup.get(name).copied().map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// A zeroed accumulator matching every registered tensor.
    pub fn zero_grads(&self) -> Grads {
        Grads {
            tensors: self.values.iter().map(|t| Tensor::zeros(t.shape())).collect(),
        }
    }

    /// First parameter holding a non-finite value, if any.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.iter().find(|(_, t)| !t.is_finite()).map(|(n, _)| n)
    }

    /// Text checkpoint: a `params <count>` line, then for every tensor a
    /// `<name> <rank> <dims...>` line followed by one line of values in
    /// shortest round-trip decimal form. Reading it back is bit-exact.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), TensorError> {
        writeln!(w, "params {}", self.len())?;
        for (name, t) in self.iter() {
            write!(w, "{name} {}", t.shape().len())?;
            for d in t.shape() {
                write!(w, " {d}")?;
            }
            writeln!(w)?;
            for (i, v) in t.data().iter().enumerate() {
                if i > 0 {
                    w.write_all(b" ")?;
                }
                write!(w, "{v:?}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Reads a checkpoint written by [`ParamSet::write_to`] from `lines`.
    pub fn read_from<I>(lines: &mut I, first_line: usize) -> Result<Self, TensorError>
    where
        I: Iterator<Item = std::io::Result<String>>,
    {
        let mut line_no = first_line;
        let mut next = |line_no: &mut usize| -> Result<String, TensorError> {
            *line_no += 1;
            match lines.next() {
                Some(l) => Ok(l?),
                None => Err(TensorError::Checkpoint {
                    line: *line_no,
                    reason: "unexpected end of checkpoint".into(),
                }),
            }
        };
        let bad = |line: usize, reason: &str| TensorError::Checkpoint {
            line,
            reason: reason.to_string(),
        };
        let header = next(&mut line_no)?;
        let count: usize = header
            .strip_prefix("params ")
            .and_then(|c| c.trim().parse().ok())
            .ok_or_else(|| bad(line_no, "expected `params <count>`"))?;
        let mut ps = ParamSet::new();
        for _ in 0..count {
            let head = next(&mut line_no)?;
            let mut f = head.split(' ');
            let name = f.next().ok_or_else(|| bad(line_no, "missing name"))?.to_string();
            let rank: usize = f
                .next()
                .and_then(|r| r.parse().ok())
                .ok_or_else(|| bad(line_no, "bad rank"))?;
            let dims: Vec<usize> = f.map(str::parse).collect::<Result<_, _>>().map_err(|_| bad(line_no, "bad dims"))?;
            if dims.len() != rank {
                return Err(bad(line_no, "rank does not match dims"));
            }
            let vals = next(&mut line_no)?;
            let data: Vec<f64> = if vals.is_empty() {
                Vec::new()
            } else {
                vals.split(' ')
                    .map(str::parse)
                    .collect::<Result<_, _>>()
                    .map_err(|_| bad(line_no, "bad value"))?
            };
            let t = Tensor::from_vec(&dims, data).map_err(|e| bad(line_no, &e.to_string()))?;
            ps.register(&name, t)?;
        }
        Ok(ps)
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self, TensorError> {
        Self::read_from(&mut r.lines(), 0)
    }

    /// Copies values from `other` by name; every name must exist here with
    /// the same shape.
    pub fn load_values(&mut self, other: &ParamSet) -> Result<(), TensorError> {
        if other.len() != self.len() {
            return Err(TensorError::Checkpoint {
                line: 0,
                reason: format!("expected {} tensors, found {}", self.len(), other.len()),
            });
        }
        for (name, t) in other.iter() {
            let id = self.id(name).ok_or_else(|| TensorError::Checkpoint {
                line: 0,
                reason: format!("unknown parameter `{name}`"),
            })?;
            if self.get(id).shape() != t.shape() {
                return Err(shape_err("load", format!("{name}: {:?} vs {:?}", self.get(id).shape(), t.shape())));
            }
            *self.get_mut(id) = t.clone();
        }
        Ok(())
    }
}

/// Gradient accumulator aligned with a [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    tensors: Vec<Tensor>,
}

impl Grads {
    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn add(&mut self, other: &Grads) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.add_scaled(b, 1.0);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in &mut self.tensors {
            t.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn zero(&mut self) {
        for t in &mut self.tensors {
            t.fill(0.0);
        }
    }

    pub fn norm(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.data())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.tensors.iter().enumerate().map(|(i, t)| (ParamId(i), t))
    }
}
