//! Central finite-difference verification of reverse-mode gradients.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::matrix::Matrix;
use super::mlp::Mlp;
use crate::error::Result;

/// Denominator floor of the relative error, so that gradients that are
/// zero up to rounding do not blow up the ratio.
pub const RELATIVE_FLOOR: f64 = 1e-3;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Maximum relative error per parameter group (and `"input"`).
    pub groups: Vec<(String, f64)>,
    pub max_error: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_error < self.tolerance
    }
}

/// Central difference of `f` with respect to `params[i]` at step `h`.
pub fn central_difference<F>(params: &mut [f64], i: usize, h: f64, mut f: F) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let saved = params[i];
    params[i] = saved + h;
    let up = f(params)?;
    params[i] = saved - h;
    let down = f(params)?;
    params[i] = saved;
    Ok((up - down) / (2.0 * h))
}

/// Fixed pseudo-random projection weights for a scalar test loss.
fn projection(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| libm::sin(1.0 + 0.7 * i as f64) + 0.25)
        .collect()
}

fn projected_loss(mlp: &Mlp, x: &Matrix, c: &[f64]) -> Result<f64> {
    let (y, _) = mlp.forward(x)?;
    Ok(y.data.iter().zip(c).map(|(a, b)| a * b).sum())
}

/// Compares backward-pass gradients of `L = sum c * mlp(x)` against central
/// differences for every parameter and every input entry.
pub fn grad_check(mlp: &Mlp, x: &Matrix, tolerance: f64) -> Result<GradCheckReport> {
    let h = 1e-6;
    let (y, cache) = mlp.forward(x)?;
    let c = projection(y.data.len());
    let dy = Matrix::from_vec(y.rows, y.cols, c.clone());
    let mut grads = vec![0.0; mlp.num_params()];
    let dx = mlp.backward(&cache, &dy, &mut grads)?;

    let mut work = mlp.clone();
    let shape = *mlp.shape();
    let mut groups = Vec::new();
    for (name, range) in shape.groups() {
        let mut worst: f64 = 0.0;
        for i in range {
            let mut p = work.params().to_vec();
            let num = central_difference(&mut p, i, h, |p| {
                work.params_mut().copy_from_slice(p);
                projected_loss(&work, x, &c)
            })?;
            work.params_mut().copy_from_slice(mlp.params());
            worst = worst.max(relative_error(grads[i], num));
        }
        groups.push((name, worst));
    }
    let mut xin = x.data.clone();
    let mut worst: f64 = 0.0;
    for i in 0..xin.len() {
        let num = central_difference(&mut xin, i, h, |v| {
            projected_loss(mlp, &Matrix::from_vec(x.rows, x.cols, v.to_vec()), &c)
        })?;
        worst = worst.max(relative_error(dx.data[i], num));
    }
    groups.push(("input".into(), worst));
    let max_error = groups.iter().map(|g| g.1).fold(0.0, f64::max);
    Ok(GradCheckReport {
        groups,
        max_error,
        tolerance,
    })
}
