//! Gated recurrent unit cell.
//!
//! ```text
//! u  = sigmoid(x W_z + z U_z + b_z)          update gate
//! r  = sigmoid(x W_r + z U_r + b_r)          reset gate
//! h~ = tanh(x W_h + (r * z) U_h + b_h)
//! z' = (1 - u) * z + u * h~
//! ```
//!
//! The emitted representation equals the new state `z'`.

use rand::Rng;

use super::ops::{linear, linear_backward, sigmoid, sigmoid_grad_from_output, tanh_grad_from_output};
use super::{shape_err, Grads, ParamId, ParamSet, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GruCell {
    pub input: usize,
    pub hidden: usize,
    w_z: ParamId,
    u_z: ParamId,
    b_z: ParamId,
    w_r: ParamId,
    u_r: ParamId,
    b_r: ParamId,
    w_h: ParamId,
    u_h: ParamId,
    b_h: ParamId,
}

#[derive(Debug, Clone)]
pub struct GruCache {
    x: Vec<f64>,
    z_prev: Vec<f64>,
    u: Vec<f64>,
    r: Vec<f64>,
    rz: Vec<f64>,
    h_tilde: Vec<f64>,
}

impl GruCell {
    /// Registers the nine tensors under `prefix` with uniform
    /// `[-1/sqrt(hidden), 1/sqrt(hidden)]` weights and zero biases.
    pub fn register<R: Rng>(
        ps: &mut ParamSet,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self, TensorError> {
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut mat = |name: &str, rows: usize, rng: &mut R| {
            ps.register(&format!("{prefix}.{name}"), Tensor::uniform(&[rows, hidden], bound, rng))
        };
        let w_z = mat("W_z", input, rng)?;
        let u_z = mat("U_z", hidden, rng)?;
        let w_r = mat("W_r", input, rng)?;
        let u_r = mat("U_r", hidden, rng)?;
        let w_h = mat("W_h", input, rng)?;
        let u_h = mat("U_h", hidden, rng)?;
        let b_z = ps.register(&format!("{prefix}.b_z"), Tensor::zeros(&[hidden]))?;
        let b_r = ps.register(&format!("{prefix}.b_r"), Tensor::zeros(&[hidden]))?;
        let b_h = ps.register(&format!("{prefix}.b_h"), Tensor::zeros(&[hidden]))?;
        Ok(Self {
            input,
            hidden,
            w_z,
            u_z,
            b_z,
            w_r,
            u_r,
            b_r,
            w_h,
            u_h,
            b_h,
        })
    }

    /// Re-binds a cell to tensors already present in `ps` under `prefix`.
    pub fn bind(ps: &ParamSet, prefix: &str) -> Result<Self, TensorError> {
        let get = |n: &str| {
            ps.id(&format!("{prefix}.{n}"))
                .ok_or_else(|| shape_err("gru", format!("missing {prefix}.{n}")))
        };
        let w_z = get("W_z")?;
        Ok(Self {
            input: ps.get(w_z).rows(),
            hidden: ps.get(w_z).cols(),
            w_z,
            u_z: get("U_z")?,
            b_z: get("b_z")?,
            w_r: get("W_r")?,
            u_r: get("U_r")?,
            b_r: get("b_r")?,
            w_h: get("W_h")?,
            u_h: get("U_h")?,
            b_h: get("b_h")?,
        })
    }

    pub fn param_ids(&self) -> [ParamId; 9] {
        [
            self.w_z, self.u_z, self.b_z, self.w_r, self.u_r, self.b_r, self.w_h, self.u_h, self.b_h,
        ]
    }

    fn gate(
        ps: &ParamSet,
        w: ParamId,
        u: ParamId,
        b: ParamId,
        x: &[f64],
        z: &[f64],
    ) -> Result<Vec<f64>, TensorError> {
        let mut a = linear(x, ps.get(w), Some(ps.get(b).data()))?;
        let az = linear(z, ps.get(u), None)?;
        a.iter_mut().zip(az).for_each(|(p, q)| *p += q);
        Ok(a)
    }

    pub fn forward(
        &self,
        ps: &ParamSet,
        x: &[f64],
        z_prev: &[f64],
    ) -> Result<(Vec<f64>, GruCache), TensorError> {
        if x.len() != self.input || z_prev.len() != self.hidden {
            return Err(shape_err(
                "gru_cell",
                format!(
                    "x {} / z {} for input {} hidden {}",
                    x.len(),
                    z_prev.len(),
                    self.input,
                    self.hidden
                ),
            ));
        }
        let u: Vec<f64> = Self::gate(ps, self.w_z, self.u_z, self.b_z, x, z_prev)?
            .into_iter()
            .map(sigmoid)
            .collect();
        let r: Vec<f64> = Self::gate(ps, self.w_r, self.u_r, self.b_r, x, z_prev)?
            .into_iter()
            .map(sigmoid)
            .collect();
        let rz: Vec<f64> = r.iter().zip(z_prev).map(|(a, b)| a * b).collect();
        let h_tilde: Vec<f64> = Self::gate(ps, self.w_h, self.u_h, self.b_h, x, &rz)?
            .into_iter()
            .map(f64::tanh)
            .collect();
        let z: Vec<f64> = (0..self.hidden)
            .map(|k| (1.0 - u[k]) * z_prev[k] + u[k] * h_tilde[k])
            .collect();
        Ok((
            z,
            GruCache {
                x: x.to_vec(),
                z_prev: z_prev.to_vec(),
                u,
                r,
                rz,
                h_tilde,
            },
        ))
    }

    /// Accumulates parameter gradients and returns `(dx, dz_prev)`.
    pub fn backward(
        &self,
        ps: &ParamSet,
        cache: &GruCache,
        dz: &[f64],
        grads: &mut Grads,
    ) -> (Vec<f64>, Vec<f64>) {
        let h = self.hidden;
        let mut dx = vec![0.0; self.input];
        let mut dz_prev: Vec<f64> = (0..h).map(|k| dz[k] * (1.0 - cache.u[k])).collect();

        // candidate
        let da_h: Vec<f64> = (0..h)
            .map(|k| dz[k] * cache.u[k] * tanh_grad_from_output(cache.h_tilde[k]))
            .collect();
        let mut d_rz = vec![0.0; h];
        linear_backward(&cache.x, ps.get(self.w_h), &da_h, Some(&mut dx), grads.get_mut(self.w_h), None);
        linear_backward(&cache.rz, ps.get(self.u_h), &da_h, Some(&mut d_rz), grads.get_mut(self.u_h), None);
        add_into(grads.get_mut(self.b_h).data_mut(), &da_h);

        // reset gate
        let da_r: Vec<f64> = (0..h)
            .map(|k| d_rz[k] * cache.z_prev[k] * sigmoid_grad_from_output(cache.r[k]))
            .collect();
        for k in 0..h {
            dz_prev[k] += d_rz[k] * cache.r[k];
        }
        linear_backward(&cache.x, ps.get(self.w_r), &da_r, Some(&mut dx), grads.get_mut(self.w_r), None);
        linear_backward(&cache.z_prev, ps.get(self.u_r), &da_r, Some(&mut dz_prev), grads.get_mut(self.u_r), None);
        add_into(grads.get_mut(self.b_r).data_mut(), &da_r);

        // update gate
        let da_u: Vec<f64> = (0..h)
            .map(|k| {
                dz[k] * (cache.h_tilde[k] - cache.z_prev[k]) * sigmoid_grad_from_output(cache.u[k])
            })
            .collect();
        linear_backward(&cache.x, ps.get(self.w_z), &da_u, Some(&mut dx), grads.get_mut(self.w_z), None);
        linear_backward(&cache.z_prev, ps.get(self.u_z), &da_u, Some(&mut dz_prev), grads.get_mut(self.u_z), None);
        add_into(grads.get_mut(self.b_z).data_mut(), &da_u);

        (dx, dz_prev)
    }
}

fn add_into(acc: &mut [f64], v: &[f64]) {
    acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
}
