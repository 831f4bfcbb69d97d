//! Central finite-difference checks of every differentiable op over random
//! instances. Each check reports the largest relative error it saw.

use crate::discriminator::{Discriminator, DiscriminatorConfig};
use crate::generator::{Generator, GeneratorConfig};
use crate::rng::{self, StreamRng};
use crate::stgraphs::{Channel, Edge, EdgeMode, LocationGraph};
use crate::tensor::attention::{GatLayer, Neighborhoods};
use crate::tensor::gradcheck::grad_check;
use crate::tensor::gru::GruCell;
use crate::tensor::ops;
use crate::tensor::{Grads, ParamSet, Tensor};
use rand::Rng;

pub const STEP: f64 = 1e-5;
pub const TOL: f64 = 1e-6;
pub const LINEAR_TOL: f64 = 1e-8;
/// Instances with a ReLU-type input closer than this to its kink are redrawn.
pub const KINK_MARGIN: f64 = 1e-3;

/// Largest relative error of one op against its tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpCheck {
    pub name: &'static str,
    pub worst: f64,
    pub tolerance: f64,
}

impl OpCheck {
    pub fn passed(&self) -> bool {
        self.worst < self.tolerance
    }
}

/// Every check, `instances` random instances each.
pub fn run_all(instances: u64) -> Vec<OpCheck> {
    let mut out = vec![linear_map(instances)];
    out.extend(activations(instances));
    out.extend([
        losses(instances),
        gru_cell(instances),
        graph_attention(instances),
        sequence_nll(instances),
        dwell_head(instances),
        policy_log_probability(instances),
        discriminator_loss(instances),
    ]);
    out
}

fn vec_param(ps: &mut ParamSet, name: &str, n: usize, r: &mut StreamRng) {
    ps.register(name, Tensor::uniform(&[n], 1.5, r)).unwrap();
}

fn weights(n: usize, r: &mut StreamRng) -> Vec<f64> {
    (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn linear_map(instances: u64) -> OpCheck {
    let mut worst = 0.0f64;
    for i in 0..instances {
        let mut r = rng::stream(i, "gc-linear", 0);
        let (n_in, n_out) = (r.gen_range(1..6), r.gen_range(1..6));
        let mut ps = ParamSet::new();
        let x = ps.register("x", Tensor::uniform(&[n_in], 2.0, &mut r)).unwrap();
        let w = ps.register("W", Tensor::uniform(&[n_in, n_out], 2.0, &mut r)).unwrap();
        let b = ps.register("b", Tensor::uniform(&[n_out], 2.0, &mut r)).unwrap();
        let c = weights(n_out, &mut r);
        worst = worst.max(grad_check(&mut ps, STEP, |p, g| {
            let y = ops::linear(p.get(x).data(), p.get(w), Some(p.get(b).data())).unwrap();
            if let Some(g) = g {
                let mut dx = vec![0.0; n_in];
                let mut db = vec![0.0; n_out];
                let mut dw = Tensor::zeros(&[n_in, n_out]);
                ops::linear_backward(p.get(x).data(), p.get(w), &c, Some(&mut dx), &mut dw, Some(&mut db));
                g.get_mut(x).data_mut().copy_from_slice(&dx);
                g.get_mut(b).data_mut().copy_from_slice(&db);
                *g.get_mut(w) = dw;
            }
            dot(&c, &y)
        }));
    }
    OpCheck { name: "linear", worst, tolerance: LINEAR_TOL }
}

/// Checks `f(x) = c . act(x)` against its analytic vector-Jacobian product.
fn check_vector_op(instances: u64, name: &'static str, kinked: bool, act: impl Fn(&[f64]) -> Vec<f64>, vjp: impl Fn(&[f64], &[f64]) -> Vec<f64>) -> OpCheck {
    let mut worst = 0.0f64;
    for i in 0..instances {
        let mut r = rng::stream(i, name, 0);
        let n = r.gen_range(1..8);
        let mut ps = ParamSet::new();
        vec_param(&mut ps, "x", n, &mut r);
        let x = ps.id("x").unwrap();
        if kinked {
            for v in ps.get_mut(x).data_mut() {
                if v.abs() < KINK_MARGIN {
                    *v += 10.0 * KINK_MARGIN;
                }
            }
        }
        let c = weights(n, &mut r);
        worst = worst.max(grad_check(&mut ps, STEP, |p, g| {
            let xv = p.get(x).data();
            if let Some(g) = g {
                g.get_mut(x).data_mut().copy_from_slice(&vjp(xv, &c));
            }
            dot(&c, &act(xv))
        }));
    }
    OpCheck { name, worst, tolerance: TOL }
}

pub fn activations(instances: u64) -> Vec<OpCheck> {
    vec![
    check_vector_op(instances, "relu", true, ops::relu, ops::relu_backward),
    check_vector_op(
        instances,
        "leaky",
        true,
        |x| x.iter().map(|&v| ops::leaky_relu(v, ops::LEAKY_SLOPE)).collect(),
        |x, c| x.iter().zip(c).map(|(&v, d)| d * ops::leaky_relu_grad(v, ops::LEAKY_SLOPE)).collect(),
    ),
    check_vector_op(
        instances,
        "sigmoid",
        false,
        |x| x.iter().map(|&v| ops::sigmoid(v)).collect(),
        |x, c| x.iter().zip(c).map(|(&v, d)| d * ops::sigmoid_grad_from_output(ops::sigmoid(v))).collect(),
    ),
    check_vector_op(
        instances,
        "tanh",
        false,
        |x| x.iter().map(|v| v.tanh()).collect(),
        |x, c| x.iter().zip(c).map(|(v, d)| d * ops::tanh_grad_from_output(v.tanh())).collect(),
    ),
    check_vector_op(instances, "softmax", false, ops::softmax, |x, c| ops::softmax_backward(&ops::softmax(x), c)),
    ]
}

pub fn losses(instances: u64) -> OpCheck {
    let mut worst = 0.0f64;
    for i in 0..instances {
        let mut r = rng::stream(i, "gc-losses", 0);
        let n = r.gen_range(2..8);
        let target = r.gen_range(0..n);
        let y = f64::from(u8::from(r.gen_bool(0.5)));
        let mut ps = ParamSet::new();
        vec_param(&mut ps, "logits", n, &mut r);
        let (l, pz) = (ps.id("logits").unwrap(), ps.register("p", Tensor::zeros(&[1])).unwrap());
        ps.get_mut(pz).data_mut()[0] = r.gen_range(0.05..0.95);
        worst = worst.max(grad_check(&mut ps, STEP, |p, g| {
            let (ce, dl) = ops::softmax_cross_entropy(p.get(l).data(), target).unwrap();
            let (bce, dz) = ops::bce_with_logit(p.get(l).data()[0], y);
            let prob = p.get(pz).data()[0];
            let plain = ops::binary_cross_entropy(prob, y);
            if let Some(g) = g {
                g.get_mut(l).data_mut().copy_from_slice(&dl);
                g.get_mut(l).data_mut()[0] += dz;
                g.get_mut(pz).data_mut()[0] = ops::binary_cross_entropy_backward(prob, y);
            }
            ce + bce + plain
        }));
    }
    OpCheck { name: "losses", worst, tolerance: TOL }
}

pub fn gru_cell(instances: u64) -> OpCheck {
    let mut worst = 0.0f64;
    for i in 0..instances {
        let mut r = rng::stream(i, "gc-gru", 0);
        let (n_in, h) = (r.gen_range(1..5), r.gen_range(1..5));
        let mut ps = ParamSet::new();
        let cell = GruCell::register(&mut ps, "g", n_in, h, &mut r).unwrap();
        for id in cell.param_ids() {
            let shape = ps.get(id).shape().to_vec();
            *ps.get_mut(id) = Tensor::uniform(&shape, 1.0, &mut r);
        }
        vec_param(&mut ps, "x", n_in, &mut r);
        vec_param(&mut ps, "z", h, &mut r);
        let (x, z) = (ps.id("x").unwrap(), ps.id("z").unwrap());
        let c = weights(h, &mut r);
        worst = worst.max(grad_check(&mut ps, STEP, |p, g| {
            let (out, cache) = cell.forward(p, p.get(x).data(), p.get(z).data()).unwrap();
            if let Some(g) = g {
                let (dx, dz) = cell.backward(p, &cache, &c, g);
                g.get_mut(x).data_mut().copy_from_slice(&dx);
                g.get_mut(z).data_mut().copy_from_slice(&dz);
            }
            dot(&c, &out)
        }));
    }
    OpCheck { name: "gru", worst, tolerance: TOL }
}

fn random_edges(n: usize, r: &mut StreamRng) -> Vec<(usize, usize, f64)> {
    let mut edges = Vec::new();
    for s in 0..n {
        for d in 0..n {
            if s != d && r.gen_bool(0.5) {
                edges.push((s, d, r.gen_range(0.1..3.0)));
            }
        }
    }
    edges
}

pub fn graph_attention(instances: u64) -> OpCheck {
    let mut worst = 0.0f64;
    let mut done = 0;
    let mut attempt = 0;
    while done < instances {
        attempt += 1;
        let mut r = rng::stream(attempt, "gc-gat", 0);
        let n = r.gen_range(2..6);
        let heads = [1, 2, 4][r.gen_range(0..3)];
        let (in_dim, head_dim) = (r.gen_range(1..4), r.gen_range(1..3));
        let weighted = r.gen_bool(0.5);
        let mut ps = ParamSet::new();
        let layer = GatLayer::register(&mut ps, "gat", in_dim, heads, head_dim, &mut r).unwrap();
        let h = ps.register("H", Tensor::uniform(&[n, in_dim], 1.5, &mut r)).unwrap();
        let nb = Neighborhoods::build(n, &random_edges(n, &mut r), weighted, true).unwrap();
        let (out, cache) = layer.forward(&ps, ps.get(h), &nb, None).unwrap();
        if cache.min_kink_margin() < KINK_MARGIN {
            continue;
        }
        let c = Tensor::uniform(out.shape(), 1.0, &mut r);
        worst = worst.max(grad_check(&mut ps, STEP, |p, g| {
            let (out, cache) = layer.forward(p, p.get(h), &nb, None).unwrap();
            if let Some(g) = g {
                let dh = layer.backward(p, &nb, &cache, &c, g);
                *g.get_mut(h) = dh;
            }
            dot(c.data(), out.data())
        }));
        done += 1;
    }
    OpCheck { name: "attention", worst, tolerance: TOL }
}

fn ring_graphs(n: usize, r: &mut StreamRng) -> Vec<LocationGraph> {
    Channel::ALL
        .iter()
        .map(|&channel| LocationGraph {
            channel,
            mode: EdgeMode::Weighted,
            k: 0,
            edges: random_edges(n, r)
                .into_iter()
                .map(|(src, dst, weight)| Edge { src, dst, weight })
                .collect(),
            self_loops: true,
        })
        .collect()
}

fn small_generator(r: &mut StreamRng) -> (GeneratorConfig, Generator, Vec<LocationGraph>) {
    let n = r.gen_range(3..6);
    let mut cfg = GeneratorConfig::new(n);
    cfg.embed_dim = 4;
    cfg.hidden_dim = 3;
    cfg.layers = r.gen_range(1..3);
    cfg.heads = [1, 2, 4][r.gen_range(0..3)];
    cfg.edge_mode = if r.gen_bool(0.5) { EdgeMode::Weighted } else { EdgeMode::Vanilla };
    cfg.beta = r.gen_range(0.2..2.0);
    cfg.dwell = r.gen_bool(0.8);
    let g = Generator::new(cfg.clone(), r).unwrap();
    let graphs = ring_graphs(n, r);
    (cfg, g, graphs)
}

/// Generator objective check over the full parameter set: embedding,
/// attention stacks, GRU and both heads.
fn check_generator(instances: u64, name: &'static str, objective: impl Fn(&Generator, &Tensor, &mut StreamRng, Option<(&mut Grads, &mut Tensor)>) -> f64) -> OpCheck {
    let mut worst = 0.0f64;
    let mut done = 0;
    let mut attempt = 0;
    while done < instances {
        attempt += 1;
        let mut r = rng::stream(attempt, name, 0);
        let (cfg, g, graphs) = small_generator(&mut r);
        let ctx = g.prepare(&graphs).unwrap();
        if g.embed_locations(&ctx, None).unwrap().1.min_kink_margin() < KINK_MARGIN {
            continue;
        }
        let start = g.start_distribution().to_vec();
        let inst_seed = r.gen::<u64>();
        let mut ps = g.params().clone();
        worst = worst.max(grad_check(&mut ps, STEP, |p, grads| {
            let g = Generator::from_params(cfg.clone(), p.clone(), start.clone()).unwrap();
            let (table, cache) = g.embed_locations(&ctx, None).unwrap();
            let mut r = rng::stream(inst_seed, "instance", 0);
            match grads {
                Some(grads) => {
                    let mut d_table = Tensor::zeros(table.shape());
                    let v = objective(&g, &table, &mut r, Some((grads, &mut d_table)));
                    g.embed_backward(&ctx, &cache, &d_table, grads);
                    v
                }
                None => objective(&g, &table, &mut r, None),
            }
        }));
        done += 1;
    }
    OpCheck { name, worst, tolerance: TOL }
}

fn random_slots(n: usize, len: usize, r: &mut StreamRng) -> Vec<usize> {
    let mut cur = r.gen_range(0..n);
    (0..len)
        .map(|_| {
            if r.gen_bool(0.5) {
                cur = r.gen_range(0..n);
            }
            cur
        })
        .collect()
}

pub fn sequence_nll(instances: u64) -> OpCheck {
    check_generator(instances, "sequence-nll", |g, table, r, grads| {
        let slots = random_slots(g.config().num_locations, 7, r);
        match grads {
            Some((gr, dt)) => g.sequence_nll_grad(table, &slots, 1.0, 0.0, gr, dt).unwrap().0,
            None => g.sequence_nll(table, &slots).unwrap().0,
        }
    })
}

pub fn dwell_head(instances: u64) -> OpCheck {
    check_generator(instances, "dwell-head", |g, table, r, grads| {
        let slots = random_slots(g.config().num_locations, 7, r);
        match grads {
            Some((gr, dt)) => g.sequence_nll_grad(table, &slots, 0.0, 1.0, gr, dt).unwrap().1,
            None => g.sequence_nll(table, &slots).unwrap().1,
        }
    })
}

pub fn policy_log_probability(instances: u64) -> OpCheck {
    check_generator(instances, "policy-log-prob", |g, table, r, grads| {
        let slots = random_slots(g.config().num_locations, 7, r);
        // a dwell outcome is only possible for a repeat after the first step
        let dwelled = (0..6).map(|j| j >= 1 && slots[j + 1] == slots[j] && r.gen_bool(0.5)).collect();
        let s = crate::generator::Sampled { slots, dwelled };
        let coeffs = weights(6, r);
        match grads {
            Some((gr, dt)) => -g.policy_log_prob_grad(table, &s, &coeffs, gr, dt).unwrap(),
            None => -dot(&coeffs, &g.step_log_probs(table, &s).unwrap()),
        }
    })
}

pub fn discriminator_loss(instances: u64) -> OpCheck {
    let mut worst = 0.0f64;
    for i in 0..instances {
        let mut r = rng::stream(i, "gc-disc", 0);
        let n = r.gen_range(2..6);
        let cfg = DiscriminatorConfig {
            num_locations: n,
            embed_dim: r.gen_range(1..4),
            hidden_dim: r.gen_range(1..4),
        };
        let d = Discriminator::new(cfg, &mut r).unwrap();
        let real: Vec<Vec<usize>> = (0..r.gen_range(1..4)).map(|_| random_slots(n, 5, &mut r)).collect();
        let fake: Vec<Vec<usize>> = (0..r.gen_range(1..4)).map(|_| random_slots(n, 5, &mut r)).collect();
        let rr: Vec<&[usize]> = real.iter().map(Vec::as_slice).collect();
        let ff: Vec<&[usize]> = fake.iter().map(Vec::as_slice).collect();
        let mut ps = d.params().clone();
        worst = worst.max(grad_check(&mut ps, STEP, |p, g| {
            let d = Discriminator::from_params(cfg, p.clone()).unwrap();
            match g {
                Some(g) => -d.d_loss_grad(&rr, &ff, g).unwrap(),
                None => -d.d_loss(&rr, &ff).unwrap(),
            }
        }));
    }
    OpCheck { name: "discriminator", worst, tolerance: TOL }
}
