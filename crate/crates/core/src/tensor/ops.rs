//! Elementwise and vector ops with their exact derivatives.
//!
//! Vectors are plain slices. Linear maps use the row-vector convention
//! `y = x W + b` with `W` shaped `[in, out]`.

use super::{shape_err, Tensor, TensorError};

pub const LEAKY_SLOPE: f64 = 0.2;

/// Inputs of `log` are clipped to `[LOG_CLAMP, 1 - LOG_CLAMP]`.
pub const LOG_CLAMP: f64 = 1e-7;

pub fn linear(x: &[f64], w: &Tensor, b: Option<&[f64]>) -> Result<Vec<f64>, TensorError> {
    let (n_in, n_out) = (w.rows(), w.cols());
    if w.shape().len() != 2 || x.len() != n_in {
        return Err(shape_err(
            "linear",
            format!("x has {} values, W is {:?}", x.len(), w.shape()),
        ));
    }
    let mut y = match b {
        Some(b) if b.len() != n_out => {
            return Err(shape_err("linear", format!("bias {} for {} outputs", b.len(), n_out)))
        }
        Some(b) => b.to_vec(),
        None => vec![0.0; n_out],
    };
    let wd = w.data();
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let row = &wd[i * n_out..(i + 1) * n_out];
        for (yo, wo) in y.iter_mut().zip(row) {
            *yo += xi * wo;
        }
    }
    Ok(y)
}

/// Accumulates `dW += x^T dy`, `db += dy` and, when asked, `dx += W dy`.
pub fn linear_backward(
    x: &[f64],
    w: &Tensor,
    dy: &[f64],
    dx: Option<&mut [f64]>,
    dw: &mut Tensor,
    db: Option<&mut [f64]>,
) {
    let n_out = w.cols();
    debug_assert_eq!(dy.len(), n_out);
    let dwd = dw.data_mut();
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for (g, d) in dwd[i * n_out..(i + 1) * n_out].iter_mut().zip(dy) {
            *g += xi * d;
        }
    }
    if let Some(db) = db {
        for (g, d) in db.iter_mut().zip(dy) {
            *g += d;
        }
    }
    if let Some(dx) = dx {
        let wd = w.data();
        for (i, g) in dx.iter_mut().enumerate() {
            let row = &wd[i * n_out..(i + 1) * n_out];
            *g += row.iter().zip(dy).map(|(a, b)| a * b).sum::<f64>();
        }
    }
}

/// `A B` for `[n, k] x [k, m]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
    if a.shape().len() != 2 || b.shape().len() != 2 || a.cols() != b.rows() {
        return Err(shape_err("matmul", format!("{:?} x {:?}", a.shape(), b.shape())));
    }
    let (n, m) = (a.rows(), b.cols());
    let mut out = Tensor::zeros(&[n, m]);
    for i in 0..n {
        let y = linear(a.row(i), b, None)?;
        out.row_mut(i).copy_from_slice(&y);
    }
    Ok(out)
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

pub fn relu_backward(x: &[f64], dy: &[f64]) -> Vec<f64> {
    x.iter().zip(dy).map(|(&v, &d)| if v > 0.0 { d } else { 0.0 }).collect()
}

pub fn leaky_relu(v: f64, slope: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        slope * v
    }
}

pub fn leaky_relu_grad(v: f64, slope: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else {
        slope
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Derivative of the sigmoid expressed through its output `y`.
pub fn sigmoid_grad_from_output(y: f64) -> f64 {
    y * (1.0 - y)
}

pub fn tanh_grad_from_output(y: f64) -> f64 {
    1.0 - y * y
}

/// Softmax with max subtraction.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut y: Vec<f64> = x.iter().map(|&v| (v - m).exp()).collect();
    let s: f64 = y.iter().sum();
    y.iter_mut().for_each(|v| *v /= s);
    y
}

pub fn log_sum_exp(x: &[f64]) -> f64 {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + x.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}

pub fn log_softmax(x: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(x);
    x.iter().map(|&v| v - lse).collect()
}

/// Given `y = softmax(x)` and `dL/dy`, returns `dL/dx`.
pub fn softmax_backward(y: &[f64], dy: &[f64]) -> Vec<f64> {
    let dot: f64 = y.iter().zip(dy).map(|(a, b)| a * b).sum();
    y.iter().zip(dy).map(|(&yi, &di)| yi * (di - dot)).collect()
}

pub fn concat(parts: &[&[f64]]) -> Vec<f64> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

/// Splits a gradient of a concatenation back into its parts.
pub fn concat_backward(dy: &[f64], sizes: &[usize]) -> Result<Vec<Vec<f64>>, TensorError> {
    if sizes.iter().sum::<usize>() != dy.len() {
        return Err(shape_err("concat", format!("parts {sizes:?} vs {}", dy.len())));
    }
    let mut out = Vec::with_capacity(sizes.len());
    let mut at = 0;
    for &s in sizes {
        out.push(dy[at..at + s].to_vec());
        at += s;
    }
    Ok(out)
}

/// Gathers rows of `table` for `ids`.
pub fn embedding_lookup(table: &Tensor, ids: &[usize]) -> Result<Tensor, TensorError> {
    let d = table.cols();
    let mut out = Tensor::zeros(&[ids.len(), d]);
    for (r, &id) in ids.iter().enumerate() {
        if id >= table.rows() {
            return Err(TensorError::Index {
                op: "embedding_lookup",
                index: id,
                len: table.rows(),
            });
        }
        out.row_mut(r).copy_from_slice(table.row(id));
    }
    Ok(out)
}

/// Scatter-adds row gradients back into the table gradient.
pub fn embedding_backward(dtable: &mut Tensor, ids: &[usize], dy: &Tensor) {
    for (r, &id) in ids.iter().enumerate() {
        for (g, d) in dtable.row_mut(id).iter_mut().zip(dy.row(r)) {
            *g += d;
        }
    }
}

/// `-ln p[target]`.
pub fn cross_entropy(probs: &[f64], target: usize) -> Result<f64, TensorError> {
    let p = *probs.get(target).ok_or(TensorError::Index {
        op: "cross_entropy",
        index: target,
        len: probs.len(),
    })?;
    Ok(-p.ln())
}

pub fn cross_entropy_backward(probs: &[f64], target: usize) -> Vec<f64> {
    let mut d = vec![0.0; probs.len()];
    d[target] = -1.0 / probs[target];
    d
}

/// Fused `-log_softmax(logits)[target]`; returns the loss and `dL/dlogits`.
pub fn softmax_cross_entropy(logits: &[f64], target: usize) -> Result<(f64, Vec<f64>), TensorError> {
    if target >= logits.len() {
        return Err(TensorError::Index {
            op: "softmax_cross_entropy",
            index: target,
            len: logits.len(),
        });
    }
    let lse = log_sum_exp(logits);
    let mut d: Vec<f64> = logits.iter().map(|&v| (v - lse).exp()).collect();
    d[target] -= 1.0;
    Ok((lse - logits[target], d))
}

/// `-(y ln p + (1-y) ln(1-p))` with `p` clipped away from 0 and 1.
pub fn binary_cross_entropy(p: f64, y: f64) -> f64 {
    let p = p.clamp(LOG_CLAMP, 1.0 - LOG_CLAMP);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

pub fn binary_cross_entropy_backward(p: f64, y: f64) -> f64 {
    if !(LOG_CLAMP..=1.0 - LOG_CLAMP).contains(&p) {
        return 0.0;
    }
    -y / p + (1.0 - y) / (1.0 - p)
}

/// BCE of `sigmoid(logit)` against `y`; returns the loss and `dL/dlogit`.
pub fn bce_with_logit(logit: f64, y: f64) -> (f64, f64) {
    // softplus(z) - y z, stable for large |z|
    let softplus = logit.max(0.0) + (-logit.abs()).exp().ln_1p();
    (softplus - y * logit, sigmoid(logit) - y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let y = softmax(&[0.0; 7]);
        assert!(y.iter().all(|&v| (v - 1.0 / 7.0).abs() < 1e-15));
    }

    #[test]
    fn softmax_is_stable_for_large_logits() {
        let y = softmax(&[1000.0, 999.0, -1000.0]);
        assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(y.iter().all(|&v| v.is_finite() && v >= 0.0));
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn sigmoid_at_zero() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(sigmoid_grad_from_output(sigmoid(0.0)), 0.25);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn relu_blocks_negative_gradient() {
        assert_eq!(relu_backward(&[-0.3, 0.4], &[5.0, 5.0]), vec![0.0, 5.0]);
        assert_eq!(relu(&[-1.0, 2.0]), vec![0.0, 2.0]);
        assert_eq!(leaky_relu(-1.0, LEAKY_SLOPE), -0.2);
    }

    #[test]
    fn linear_shapes_are_checked() {
        let w = Tensor::zeros(&[3, 2]);
        assert!(linear(&[1.0, 2.0], &w, None).is_err());
        assert!(linear(&[1.0, 2.0, 3.0], &w, Some(&[0.0])).is_err());
        let err = linear(&[1.0], &w, None).unwrap_err().to_string();
        assert!(err.contains("linear"));
    }

    #[test]
    fn concat_round_trip() {
        let y = concat(&[&[1.0, 2.0], &[3.0]]);
        assert_eq!(y, vec![1.0, 2.0, 3.0]);
        assert_eq!(concat_backward(&y, &[2, 1]).unwrap(), vec![vec![1.0, 2.0], vec![3.0]]);
        assert!(concat_backward(&y, &[1, 1]).is_err());
    }

    #[test]
    fn embedding_gathers_and_scatters() {
        let table = Tensor::from_vec(&[3, 2], vec![0., 1., 2., 3., 4., 5.]).unwrap();
        let e = embedding_lookup(&table, &[2, 0, 2]).unwrap();
        assert_eq!(e.data(), &[4., 5., 0., 1., 4., 5.]);
        let mut g = Tensor::zeros(&[3, 2]);
        embedding_backward(&mut g, &[2, 0, 2], &Tensor::from_vec(&[3, 2], vec![1.0; 6]).unwrap());
        assert_eq!(g.data(), &[1., 1., 0., 0., 2., 2.]);
        assert!(embedding_lookup(&table, &[3]).is_err());
    }

    #[test]
    fn losses_match_closed_forms() {
        let p = softmax(&[0.1, -0.4, 2.0]);
        let (l, d) = softmax_cross_entropy(&[0.1, -0.4, 2.0], 1).unwrap();
        assert!((l - cross_entropy(&p, 1).unwrap()).abs() < 1e-12);
        let via_probs = softmax_backward(&p, &cross_entropy_backward(&p, 1));
        for (a, b) in d.iter().zip(&via_probs) {
            assert!((a - b).abs() < 1e-12);
        }
        let (l, g) = bce_with_logit(0.0, 1.0);
        assert!((l - 2f64.ln()).abs() < 1e-15);
        assert_eq!(g, -0.5);
        assert!((binary_cross_entropy(0.5, 0.0) - 2f64.ln()).abs() < 1e-15);
        assert!(binary_cross_entropy(0.0, 1.0).is_finite());
        assert!((bce_with_logit(40.0, 0.0).0 - 40.0).abs() < 1e-9);
    }
}
