//! Fully connected networks with LeakyReLU hidden layers and an optional
//! layer normalization on the output.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{gemm, Matrix};
use crate::error::{Error, Result};

pub const LEAKY_SLOPE: f64 = 0.01;
pub const LN_VARIANCE_FLOOR: f64 = 1e-12;

#[inline]
pub fn leaky_relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpShape {
    pub input: usize,
    pub hidden: usize,
    pub hidden_layers: usize,
    pub output: usize,
    pub layer_norm: bool,
}

impl MlpShape {
    /// Two hidden layers of width 64.
    pub fn standard(input: usize, output: usize, layer_norm: bool) -> Self {
        Self {
            input,
            hidden: 64,
            hidden_layers: 2,
            output,
            layer_norm,
        }
    }

    fn dims(&self) -> Vec<usize> {
        let mut d = Vec::with_capacity(self.hidden_layers + 2);
        d.push(self.input);
        d.extend(core::iter::repeat_n(self.hidden, self.hidden_layers));
        d.push(self.output);
        d
    }

    pub fn num_layers(&self) -> usize {
        self.hidden_layers + 1
    }

    /// Weight and bias ranges of affine layer `l` in the flat parameter vector.
    pub fn layer_ranges(&self, l: usize) -> (Range<usize>, Range<usize>) {
        let d = self.dims();
        let mut off = 0;
        for i in 0..l {
            off += d[i] * d[i + 1] + d[i + 1];
        }
        let w = d[l] * d[l + 1];
        (off..off + w, off + w..off + w + d[l + 1])
    }

    /// Gain and offset ranges of the output layer normalization.
    pub fn norm_ranges(&self) -> Option<(Range<usize>, Range<usize>)> {
        if !self.layer_norm {
            return None;
        }
        let start = self.layer_ranges(self.num_layers() - 1).1.end;
        Some((start..start + self.output, start + self.output..start + 2 * self.output))
    }

    pub fn num_params(&self) -> usize {
        let d = self.dims();
        let affine: usize = d.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        affine + if self.layer_norm { 2 * self.output } else { 0 }
    }

    /// Named parameter groups in storage order.
    pub fn groups(&self) -> Vec<(String, Range<usize>)> {
        let mut g = Vec::new();
        for l in 0..self.num_layers() {
            let (w, b) = self.layer_ranges(l);
            g.push((format!("layer{l}.weight"), w));
            g.push((format!("layer{l}.bias"), b));
        }
        if let Some((gain, offset)) = self.norm_ranges() {
            g.push(("norm.gain".into(), gain));
            g.push(("norm.offset".into(), offset));
        }
        g
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mlp {
    shape: MlpShape,
    params: Vec<f64>,
    #[serde(skip)]
    version: u64,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape && self.params == other.params
    }
}

/// Intermediates of a batched forward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    version: u64,
    /// Input of every affine layer.
    inputs: Vec<Matrix>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Matrix>,
    /// Normalized output before the affine map, with per-row inverse std
    /// and whether the variance floor was active.
    norm: Option<(Matrix, Vec<f64>, Vec<bool>)>,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases, unit gain and zero offset.
    pub fn new<R: Rng + ?Sized>(shape: MlpShape, rng: &mut R) -> Self {
        let mut params = vec![0.0; shape.num_params()];
        let d = shape.dims();
        for l in 0..shape.num_layers() {
            let (w, _) = shape.layer_ranges(l);
            let a = libm::sqrt(6.0 / (d[l] + d[l + 1]) as f64);
            for p in &mut params[w] {
                *p = rng.random_range(-a..a);
            }
        }
        if let Some((gain, _)) = shape.norm_ranges() {
            params[gain].fill(1.0);
        }
        Self {
            shape,
            params,
            version: 0,
        }
    }

    pub fn from_params(shape: MlpShape, params: Vec<f64>) -> Result<Self> {
        if params.len() != shape.num_params() {
            return Err(Error::Dimension {
                expected: shape.num_params(),
                got: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Validation("non-finite network parameter".into()));
        }
        Ok(Self {
            shape,
            params,
            version: 0,
        })
    }

    pub fn shape(&self) -> &MlpShape {
        &self.shape
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable parameters. Invalidates caches from earlier forward passes.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.version += 1;
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Zeroes the last affine layer (and the norm offset), so the network
    /// maps everything to zero.
    pub fn zero_output(&mut self) {
        let (w, b) = self.shape.layer_ranges(self.shape.num_layers() - 1);
        let norm = self.shape.norm_ranges();
        let p = self.params_mut();
        p[w].fill(0.0);
        p[b].fill(0.0);
        if let Some((_, offset)) = norm {
            p[offset].fill(0.0);
        }
    }

    /// Batched forward pass; `x` holds one sample per row.
    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, MlpCache)> {
        if x.cols != self.shape.input {
            return Err(Error::Dimension {
                expected: self.shape.input,
                got: x.cols,
            });
        }
        let rows = x.rows;
        let d = self.shape.dims();
        let layers = self.shape.num_layers();
        let mut inputs = Vec::with_capacity(layers);
        let mut pre = Vec::with_capacity(layers - 1);
        let mut h = x.clone();
        for l in 0..layers {
            let (wr, br) = self.shape.layer_ranges(l);
            let (din, dout) = (d[l], d[l + 1]);
            let mut z = Matrix::zeros(rows, dout);
            let bias = &self.params[br];
            for i in 0..rows {
                z.row_mut(i).copy_from_slice(bias);
            }
            gemm(rows, din, dout, 1.0, &h.data, false, &self.params[wr], true, 1.0, &mut z.data);
            inputs.push(h);
            if l + 1 < layers {
                let mut a = z.clone();
                for v in &mut a.data {
                    *v = leaky_relu(*v);
                }
                pre.push(z);
                h = a;
            } else {
                h = z;
            }
        }
        let mut norm = None;
        if let Some((gr, or)) = self.shape.norm_ranges() {
            let n = self.shape.output as f64;
            let mut xhat = Matrix::zeros(rows, self.shape.output);
            let mut inv_std = vec![0.0; rows];
            let mut floored = vec![false; rows];
            for i in 0..rows {
                let z = h.row(i);
                let mean = z.iter().sum::<f64>() / n;
                let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                floored[i] = var < LN_VARIANCE_FLOOR;
                let s = 1.0 / libm::sqrt(var.max(LN_VARIANCE_FLOOR));
                inv_std[i] = s;
                for (dst, v) in xhat.row_mut(i).iter_mut().zip(z) {
                    *dst = (v - mean) * s;
                }
            }
            let (gain, offset) = (&self.params[gr], &self.params[or]);
            for i in 0..rows {
                let xr = xhat.row(i);
                let out = h.row_mut(i);
                for c in 0..out.len() {
                    out[c] = gain[c] * xr[c] + offset[c];
                }
            }
            norm = Some((xhat, inv_std, floored));
        }
        if h.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite network output".into()));
        }
        Ok((
            h,
            MlpCache {
                version: self.version,
                inputs,
                pre,
                norm,
            },
        ))
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the input.
    pub fn backward(&self, cache: &MlpCache, dy: &Matrix, grads: &mut [f64]) -> Result<Matrix> {
        if cache.version != self.version {
            return Err(Error::Contract("forward cache is stale: parameters changed".into()));
        }
        if grads.len() != self.params.len() {
            return Err(Error::Dimension {
                expected: self.params.len(),
                got: grads.len(),
            });
        }
        let rows = cache.inputs[0].rows;
        if dy.rows != rows || dy.cols != self.shape.output {
            return Err(Error::Dimension {
                expected: self.shape.output,
                got: dy.cols,
            });
        }
        let d = self.shape.dims();
        let layers = self.shape.num_layers();
        let mut dz = dy.clone();
        if let (Some((gr, or)), Some((xhat, inv_std, floored))) = (self.shape.norm_ranges(), &cache.norm) {
            let n = self.shape.output as f64;
            let gain = &self.params[gr.clone()];
            for i in 0..rows {
                let (xr, dyr) = (xhat.row(i), dy.row(i));
                for c in 0..xr.len() {
                    grads[gr.start + c] += dyr[c] * xr[c];
                    grads[or.start + c] += dyr[c];
                }
                let dxhat: Vec<f64> = (0..xr.len()).map(|c| dyr[c] * gain[c]).collect();
                let mean_d = dxhat.iter().sum::<f64>() / n;
                let mean_dx = if floored[i] {
                    0.0
                } else {
                    dxhat.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>() / n
                };
                let out = dz.row_mut(i);
                for c in 0..xr.len() {
                    out[c] = inv_std[i] * (dxhat[c] - mean_d - xr[c] * mean_dx);
                }
            }
        }
        for l in (0..layers).rev() {
            let (wr, br) = self.shape.layer_ranges(l);
            let (din, dout) = (d[l], d[l + 1]);
            let input = &cache.inputs[l];
            gemm(dout, rows, din, 1.0, &dz.data, true, &input.data, false, 1.0, &mut grads[wr.clone()]);
            let gb = &mut grads[br];
            for i in 0..rows {
                for (g, v) in gb.iter_mut().zip(dz.row(i)) {
                    *g += v;
                }
            }
            let mut dx = Matrix::zeros(rows, din);
            gemm(rows, dout, din, 1.0, &dz.data, false, &self.params[wr], false, 0.0, &mut dx.data);
            if l > 0 {
                for (g, z) in dx.data.iter_mut().zip(&cache.pre[l - 1].data) {
                    if *z <= 0.0 {
                        *g *= LEAKY_SLOPE;
                    }
                }
            }
            dz = dx;
        }
        Ok(dz)
    }
}

/// Single-sample forward pass.
pub fn mlp_forward(mlp: &Mlp, x: &[f64]) -> Result<(Vec<f64>, MlpCache)> {
    let (y, cache) = mlp.forward(&Matrix::from_vec(1, x.len(), x.to_vec()))?;
    Ok((y.data, cache))
}

/// Single-sample backward pass: `(dx, parameter gradients)`.
pub fn mlp_backward(mlp: &Mlp, cache: &MlpCache, dy: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut grads = vec![0.0; mlp.num_params()];
    let dx = mlp.backward(cache, &Matrix::from_vec(1, dy.len(), dy.to_vec()), &mut grads)?;
    Ok((dx.data, grads))
}
