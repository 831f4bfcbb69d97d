//! Multi-head graph attention over a fixed neighbourhood structure.
//!
//! For head `k` with projection `W` and attention vector `a = [a_src; a_dst]`:
//!
//! ```text
//! e_ij  = LeakyReLU_0.2(a_src . W h_i + a_dst . W h_j) + ln w_ij
//! alpha = softmax_j(e_ij)                  over j in N(i) plus i itself
//! out_i = ReLU(sum_j alpha_ij W h_j)
//! ```
//!
//! Head outputs are concatenated. In vanilla mode `ln w_ij` is 0, so edge
//! weights only enter through that one additive term.

use rand::{Rng, RngCore};

use super::ops::{leaky_relu, leaky_relu_grad, linear, linear_backward, LEAKY_SLOPE};
use super::{shape_err, Grads, ParamId, ParamSet, Tensor, TensorError};

/// Weights below this are clamped before taking the log.
const MIN_EDGE_WEIGHT: f64 = 1e-12;

/// Compressed per-node neighbour lists with log edge weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhoods {
    n: usize,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    log_weights: Vec<f64>,
}

impl Neighborhoods {
    /// Builds neighbour lists from `(src, dst, weight)` triples.
    ///
    /// Lists are sorted by target id, so the result does not depend on the
    /// order of `edges`. With `self_loops`, every node without an explicit
    /// self-edge gets one of weight 1. With `weighted == false` all log
    /// weights are 0.
    pub fn build(
        n: usize,
        edges: &[(usize, usize, f64)],
        weighted: bool,
        self_loops: bool,
    ) -> Result<Self, TensorError> {
        let mut sorted: Vec<(usize, usize, f64)> = Vec::with_capacity(edges.len() + n);
        for &(s, d, w) in edges {
            if s >= n || d >= n {
                return Err(TensorError::Graph(format!("edge ({s}, {d}) outside {n} nodes")));
            }
            sorted.push((s, d, w));
        }
        if self_loops {
            let mut has_self = vec![false; n];
            for &(s, d, _) in edges {
                if s == d {
                    has_self[s] = true;
                }
            }
            sorted.extend((0..n).filter(|&i| !has_self[i]).map(|i| (i, i, 1.0)));
        }
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        if let Some(w) = sorted.windows(2).find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(TensorError::Graph(format!("duplicate edge ({}, {})", w[0].0, w[0].1)));
        }
        let mut offsets = vec![0usize; n + 1];
        for &(s, _, _) in &sorted {
            offsets[s + 1] += 1;
        }
        for i in 0..n {
            if offsets[i + 1] == 0 {
                return Err(TensorError::Graph(format!(
                    "node {i} has no neighbours and self-loops are disabled"
                )));
            }
            offsets[i + 1] += offsets[i];
        }
        Ok(Self {
            n,
            offsets,
            targets: sorted.iter().map(|e| e.1).collect(),
            log_weights: sorted
                .iter()
                .map(|e| if weighted { e.2.max(MIN_EDGE_WEIGHT).ln() } else { 0.0 })
                .collect(),
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }

    fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GatHead {
    pub w: ParamId,
    pub a: ParamId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatLayer {
    pub in_dim: usize,
    pub head_dim: usize,
    pub heads: Vec<GatHead>,
}

#[derive(Debug, Clone)]
struct HeadCache {
    z: Tensor,
    args: Vec<f64>,
    alpha: Vec<f64>,
    /// Inverted-dropout scale per neighbour entry, when dropout was active.
    mask: Option<Vec<f64>>,
    pre: Tensor,
}

#[derive(Debug, Clone)]
pub struct GatCache {
    input: Tensor,
    heads: Vec<HeadCache>,
}

impl GatCache {
    /// Attention coefficients of `head`, aligned with the neighbour lists.
    pub fn alpha(&self, head: usize) -> &[f64] {
        &self.heads[head].alpha
    }

    /// Smallest distance of any LeakyReLU or ReLU input from its kink.
    pub fn min_kink_margin(&self) -> f64 {
        self.heads
            .iter()
            .flat_map(|h| h.args.iter().chain(h.pre.data()))
            .fold(f64::INFINITY, |m, v| m.min(v.abs()))
    }
}

impl GatLayer {
    pub fn register<R: Rng>(
        ps: &mut ParamSet,
        prefix: &str,
        in_dim: usize,
        num_heads: usize,
        head_dim: usize,
        rng: &mut R,
    ) -> Result<Self, TensorError> {
        let mut heads = Vec::with_capacity(num_heads);
        for k in 0..num_heads {
            let w = ps.register(&format!("{prefix}.h{k}.W"), Tensor::xavier(in_dim, head_dim, rng))?;
            let bound = (6.0 / (2 * head_dim + 1) as f64).sqrt();
            let a = ps.register(&format!("{prefix}.h{k}.a"), Tensor::uniform(&[2 * head_dim], bound, rng))?;
            heads.push(GatHead { w, a });
        }
        Ok(Self {
            in_dim,
            head_dim,
            heads,
        })
    }

    pub fn bind(ps: &ParamSet, prefix: &str, num_heads: usize) -> Result<Self, TensorError> {
        let mut heads = Vec::with_capacity(num_heads);
        for k in 0..num_heads {
            let get = |n: &str| {
                ps.id(&format!("{prefix}.h{k}.{n}"))
                    .ok_or_else(|| shape_err("graph_attention", format!("missing {prefix}.h{k}.{n}")))
            };
            heads.push(GatHead {
                w: get("W")?,
                a: get("a")?,
            });
        }
        let w = ps.get(heads[0].w);
        Ok(Self {
            in_dim: w.rows(),
            head_dim: w.cols(),
            heads,
        })
    }

    pub fn out_dim(&self) -> usize {
        self.heads.len() * self.head_dim
    }

    pub fn forward(
        &self,
        ps: &ParamSet,
        h: &Tensor,
        nb: &Neighborhoods,
        mut dropout: Option<(f64, &mut dyn RngCore)>,
    ) -> Result<(Tensor, GatCache), TensorError> {
        if h.shape().len() != 2 || h.cols() != self.in_dim || h.rows() != nb.num_nodes() {
            return Err(shape_err(
                "graph_attention",
                format!(
                    "H is {:?}, expected [{}, {}]",
                    h.shape(),
                    nb.num_nodes(),
                    self.in_dim
                ),
            ));
        }
        let n = h.rows();
        let dh = self.head_dim;
        let mut out = Tensor::zeros(&[n, self.out_dim()]);
        let mut caches = Vec::with_capacity(self.heads.len());

        for (k, head) in self.heads.iter().enumerate() {
            let w = ps.get(head.w);
            let a = ps.get(head.a).data();
            let (a_src, a_dst) = a.split_at(dh);
            let mut z = Tensor::zeros(&[n, dh]);
            for i in 0..n {
                z.row_mut(i).copy_from_slice(&linear(h.row(i), w, None)?);
            }
            let s: Vec<f64> = (0..n).map(|i| dot(a_src, z.row(i))).collect();
            let t: Vec<f64> = (0..n).map(|j| dot(a_dst, z.row(j))).collect();

            let total = nb.targets.len();
            let mut args = vec![0.0; total];
            let mut alpha = vec![0.0; total];
            let mut mask = match &dropout {
                Some((rate, _)) if *rate > 0.0 => Some(vec![0.0; total]),
                _ => None,
            };
            let mut pre = Tensor::zeros(&[n, dh]);
            for i in 0..n {
                let range = nb.range(i);
                let mut m = f64::NEG_INFINITY;
                for e in range.clone() {
                    let j = nb.targets[e];
                    args[e] = s[i] + t[j];
                    alpha[e] = leaky_relu(args[e], LEAKY_SLOPE) + nb.log_weights[e];
                    m = m.max(alpha[e]);
                }
                let mut sum = 0.0;
                for e in range.clone() {
                    alpha[e] = (alpha[e] - m).exp();
                    sum += alpha[e];
                }
                let row = pre.row_mut(i);
                for e in range {
                    alpha[e] /= sum;
                    let mut coef = alpha[e];
                    if let (Some(mask), Some((rate, rng))) = (mask.as_mut(), dropout.as_mut()) {
                        mask[e] = if rng.gen_bool(*rate) { 0.0 } else { 1.0 / (1.0 - *rate) };
                        coef *= mask[e];
                    }
                    for (p, zj) in row.iter_mut().zip(z.row(nb.targets[e])) {
                        *p += coef * zj;
                    }
                }
            }
            for i in 0..n {
                let dst = &mut out.row_mut(i)[k * dh..(k + 1) * dh];
                for (o, p) in dst.iter_mut().zip(pre.row(i)) {
                    *o = p.max(0.0);
                }
            }
            caches.push(HeadCache {
                z,
                args,
                alpha,
                mask,
                pre,
            });
        }
        Ok((
            out,
            GatCache {
                input: h.clone(),
                heads: caches,
            },
        ))
    }

    /// Accumulates into `grads` and returns `dL/dH`.
    pub fn backward(
        &self,
        ps: &ParamSet,
        nb: &Neighborhoods,
        cache: &GatCache,
        d_out: &Tensor,
        grads: &mut Grads,
    ) -> Tensor {
        let n = cache.input.rows();
        let dh = self.head_dim;
        let mut d_input = Tensor::zeros(cache.input.shape());

        for (k, (head, hc)) in self.heads.iter().zip(&cache.heads).enumerate() {
            let a = ps.get(head.a).data().to_vec();
            let (a_src, a_dst) = a.split_at(dh);
            let mut dz = Tensor::zeros(&[n, dh]);
            let mut ds = vec![0.0; n];
            let mut dt = vec![0.0; n];
            let mut d_alpha = Vec::new();

            for i in 0..n {
                let dpre: Vec<f64> = d_out.row(i)[k * dh..(k + 1) * dh]
                    .iter()
                    .zip(hc.pre.row(i))
                    .map(|(&g, &p)| if p > 0.0 { g } else { 0.0 })
                    .collect();
                let range = nb.range(i);
                d_alpha.clear();
                for e in range.clone() {
                    let j = nb.targets[e];
                    let scale = hc.mask.as_ref().map_or(1.0, |m| m[e]);
                    let coef = hc.alpha[e] * scale;
                    for (g, d) in dz.row_mut(j).iter_mut().zip(&dpre) {
                        *g += coef * d;
                    }
                    d_alpha.push(dot(&dpre, hc.z.row(j)) * scale);
                }
                let weighted: f64 = range
                    .clone()
                    .zip(&d_alpha)
                    .map(|(e, da)| hc.alpha[e] * da)
                    .sum();
                for (e, da) in range.zip(&d_alpha) {
                    let de = hc.alpha[e] * (da - weighted);
                    let darg = de * leaky_relu_grad(hc.args[e], LEAKY_SLOPE);
                    ds[i] += darg;
                    dt[nb.targets[e]] += darg;
                }
            }

            let da = grads.get_mut(head.a).data_mut();
            for i in 0..n {
                let zi = hc.z.row(i);
                for c in 0..dh {
                    da[c] += ds[i] * zi[c];
                    da[dh + c] += dt[i] * zi[c];
                }
            }
            for i in 0..n {
                for (c, g) in dz.row_mut(i).iter_mut().enumerate() {
                    *g += ds[i] * a_src[c] + dt[i] * a_dst[c];
                }
            }
            let w = ps.get(head.w);
            for i in 0..n {
                linear_backward(
                    cache.input.row(i),
                    w,
                    dz.row(i),
                    Some(d_input.row_mut(i)),
                    grads.get_mut(head.w),
                    None,
                );
            }
        }
        d_input
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
