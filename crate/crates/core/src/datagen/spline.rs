use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::{NodeState, Trajectory};

/// Natural cubic spline through `(t[i], y[i])`.
#[derive(Debug, Clone)]
pub struct NaturalSpline {
    t: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl NaturalSpline {
    pub fn new(t: &[f64], y: &[f64]) -> Result<Self> {
        let n = t.len();
        if n != y.len() {
            return Err(Error::Dimension {
                expected: n,
                got: y.len(),
            });
        }
        if n < 2 {
            return Err(Error::Validation("spline needs at least two knots".into()));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Validation("spline knots must be strictly increasing".into()));
        }
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior second-derivative system.
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            let mut upper = vec![0.0; k];
            for i in 0..k {
                let h0 = t[i + 1] - t[i];
                let h1 = t[i + 2] - t[i + 1];
                diag[i] = 2.0 * (h0 + h1);
                upper[i] = h1;
                rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h1 - (y[i + 1] - y[i]) / h0);
            }
            for i in 1..k {
                let lower = t[i + 1] - t[i];
                let w = lower / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                m[i + 1] = (rhs[i] - upper[i] * m[i + 2]) / diag[i];
            }
        }
        Ok(Self {
            t: t.to_vec(),
            y: y.to_vec(),
            m,
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.t.len();
        let i = match self.t.binary_search_by(|v| v.total_cmp(&x)) {
            Ok(i) => return self.y[i],
            Err(0) => 0,
            Err(i) if i >= n => n - 2,
            Err(i) => i - 1,
        };
        let h = self.t[i + 1] - self.t[i];
        let a = (self.t[i + 1] - x) / h;
        let b = (x - self.t[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }
}

/// Resamples every nodal pressure and flow, and the inlet series, onto a
/// uniform grid of spacing `dt_target` starting at the first sample.
pub fn resample_trajectory(trajectory: &Trajectory, dt_target: f64) -> Result<Trajectory> {
    let n_src = trajectory.len();
    if n_src < 4 {
        return Err(Error::Validation(format!(
            "resampling needs at least 4 samples, got {n_src}"
        )));
    }
    if !(dt_target > 0.0) {
        return Err(Error::Validation("target dt must be positive".into()));
    }
    if trajectory.loading_steps != 0 {
        return Err(Error::Validation("resample before prepending a loading phase".into()));
    }
    let src_t: Vec<f64> = (0..n_src).map(|i| i as f64 * trajectory.dt).collect();
    let span = src_t[n_src - 1];
    let steps = libm::floor(span / dt_target + 1e-9) as usize;
    let grid: Vec<f64> = (0..=steps).map(|j| j as f64 * dt_target).collect();
    let exact_end = (steps as f64 * dt_target - span).abs() <= 1e-9 * span.max(1.0);
    let nodes = trajectory.num_nodes();
    let sample = |series: &[f64]| -> Result<Vec<f64>> {
        let s = NaturalSpline::new(&src_t, series)?;
        let mut out: Vec<f64> = grid.iter().map(|&x| s.eval(x)).collect();
        if exact_end {
            out[steps] = series[n_src - 1];
        }
        Ok(out)
    };
    let mut p = vec![Vec::new(); nodes];
    let mut q = vec![Vec::new(); nodes];
    let mut column = vec![0.0; n_src];
    for i in 0..nodes {
        for (c, s) in column.iter_mut().zip(&trajectory.states) {
            *c = s.p[i];
        }
        p[i] = sample(&column)?;
        for (c, s) in column.iter_mut().zip(&trajectory.states) {
            *c = s.q[i];
        }
        q[i] = sample(&column)?;
    }
    let inflow = sample(&trajectory.inlet_flow)?;
    let k0 = trajectory.states[0].k;
    let states = (0..=steps)
        .map(|j| {
            NodeState::new(
                p.iter().map(|v| v[j]).collect(),
                q.iter().map(|v| v[j]).collect(),
                false,
                k0 + j,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(trajectory.graph_id.clone(), dt_target, states, inflow, 0)
}
