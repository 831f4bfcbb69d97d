//! Central finite-difference gradient checking.

use super::{Grads, ParamSet};

/// Denominator floor of [`relative_error`]; below it the error is absolute.
pub const REL_ERROR_FLOOR: f64 = 1e-2;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares the analytic gradient of a scalar function of `ps` with central
/// differences of step `step` over every scalar in `ps`.
///
/// `f(ps, Some(grads))` must return the value and accumulate its gradient;
/// `f(ps, None)` only evaluates. Returns the largest relative error.
pub fn grad_check<F>(ps: &mut ParamSet, step: f64, mut f: F) -> f64
where
    F: FnMut(&ParamSet, Option<&mut Grads>) -> f64,
{
    let mut grads = ps.zero_grads();
    f(ps, Some(&mut grads));
    let ids: Vec<_> = ps.ids().collect();
    let mut worst = 0.0f64;
    for id in ids {
        for k in 0..ps.get(id).len() {
            let orig = ps.get(id).data()[k];
            ps.get_mut(id).data_mut()[k] = orig + step;
            let plus = f(ps, None);
            ps.get_mut(id).data_mut()[k] = orig - step;
            let minus = f(ps, None);
            ps.get_mut(id).data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            worst = worst.max(relative_error(grads.get(id).data()[k], numeric));
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn detects_a_wrong_gradient() {
        let mut ps = ParamSet::new();
        let id = ps.register("x", Tensor::from_vec(&[2], vec![2.0, -1.3]).unwrap()).unwrap();
        let good = grad_check(&mut ps, 1e-5, |p, g| {
            let x = p.get(id).data();
            if let Some(g) = g {
                g.get_mut(id).data_mut()[0] += 3.0 * x[0] * x[0];
                g.get_mut(id).data_mut()[1] += 1.0;
            }
            x[0].powi(3) + x[1]
        });
        assert!(good < 1e-8);
        let bad = grad_check(&mut ps, 1e-5, |p, g| {
            let x = p.get(id).data();
            if let Some(g) = g {
                g.get_mut(id).data_mut()[0] += 2.0 * x[0];
            }
            x[0].powi(3)
        });
        assert!(bad > 0.1);
    }
}
