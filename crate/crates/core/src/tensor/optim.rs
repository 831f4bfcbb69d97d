//! First-order optimizers stepping a [`ParamSet`] against a [`Grads`].

use std::fmt;
use std::str::FromStr;

use super::{Grads, ParamSet, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "adam" => Ok(Self::Adam),
            "sgd" => Ok(Self::Sgd),
            other => Err(format!("unknown optimizer `{other}`")),
        }
    }
}

/// Descends along `grads` (callers negate objectives they maximize).
#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd {
        lr: f64,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        t: i32,
        m: Vec<Tensor>,
        v: Vec<Tensor>,
    },
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, ps: &ParamSet) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd { lr },
            OptimizerKind::Adam => {
                let zeros: Vec<Tensor> = ps.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
                Optimizer::Adam {
                    lr,
                    beta1: 0.9,
                    beta2: 0.999,
                    eps: 1e-8,
                    t: 0,
                    m: zeros.clone(),
                    v: zeros,
                }
            }
        }
    }

    pub fn step(&mut self, ps: &mut ParamSet, grads: &Grads) {
        match self {
            Optimizer::Sgd { lr } => {
                let ids: Vec<_> = ps.ids().collect();
                for id in ids {
                    ps.get_mut(id).add_scaled(grads.get(id), -*lr);
                }
            }
            Optimizer::Adam {
                lr,
                beta1,
                beta2,
                eps,
                t,
                m,
                v,
            } => {
                *t += 1;
                let c1 = 1.0 - beta1.powi(*t);
                let c2 = 1.0 - beta2.powi(*t);
                let ids: Vec<_> = ps.ids().collect();
                for id in ids {
                    let g = grads.get(id).data();
                    let (mi, vi) = (m[id.index()].data_mut(), v[id.index()].data_mut());
                    let p = ps.get_mut(id).data_mut();
                    for k in 0..g.len() {
                        mi[k] = *beta1 * mi[k] + (1.0 - *beta1) * g[k];
                        vi[k] = *beta2 * vi[k] + (1.0 - *beta2) * g[k] * g[k];
                        let step = (mi[k] / c1) / ((vi[k] / c2).sqrt() + *eps);
                        p[k] -= *lr * step;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(kind: OptimizerKind, lr: f64, steps: usize) -> f64 {
        let mut ps = ParamSet::new();
        let id = ps.register("x", Tensor::from_vec(&[2], vec![3.0, -2.0]).unwrap()).unwrap();
        let mut opt = Optimizer::new(kind, lr, &ps);
        for _ in 0..steps {
            let mut g = ps.zero_grads();
            let x = ps.get(id).data().to_vec();
            g.get_mut(id).data_mut().copy_from_slice(&[2.0 * x[0], 2.0 * x[1]]);
            opt.step(&mut ps, &g);
        }
        ps.get(id).data().iter().map(|v| v * v).sum()
    }

    #[test]
    fn both_optimizers_descend() {
        assert!(quadratic(OptimizerKind::Sgd, 0.1, 100) < 1e-6);
        assert!(quadratic(OptimizerKind::Adam, 0.1, 500) < 1e-3);
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        assert_eq!(quadratic(OptimizerKind::Adam, 0.0, 10), 13.0);
        assert_eq!(quadratic(OptimizerKind::Sgd, 0.0, 10), 13.0);
    }
}
