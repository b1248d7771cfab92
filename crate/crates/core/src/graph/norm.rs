//! Per-channel standardization statistics.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::features::{channels, edge_feature_table, static_node_features};
use super::{CenterlineGraph, Trajectory, EDGE_FEATURES, NODE_FEATURES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Mean and standard deviation per channel. Excluded channels pass through.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelNorm {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub excluded: Vec<bool>,
}

impl ChannelNorm {
    pub fn identity(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
            excluded: vec![false; channels],
        }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    #[inline]
    pub fn forward_channel(&self, c: usize, x: f64) -> f64 {
        if self.excluded[c] {
            x
        } else {
            (x - self.mean[c]) / self.std[c]
        }
    }

    #[inline]
    pub fn inverse_channel(&self, c: usize, x: f64) -> f64 {
        if self.excluded[c] {
            x
        } else {
            x * self.std[c] + self.mean[c]
        }
    }

    /// Effective scale of a channel in physical units (1 when excluded).
    pub fn scale(&self, c: usize) -> f64 {
        if self.excluded[c] {
            1.0
        } else {
            self.std[c]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub node: ChannelNorm,
    pub edge: ChannelNorm,
    /// Statistics of the per-step increments `(dp, dq)`.
    pub output: ChannelNorm,
}

impl NormStats {
    pub fn identity() -> Self {
        let mut s = Self {
            node: ChannelNorm::identity(NODE_FEATURES),
            edge: ChannelNorm::identity(EDGE_FEATURES),
            output: ChannelNorm::identity(2),
        };
        mark_excluded(&mut s);
        s
    }
}

fn mark_excluded(s: &mut NormStats) {
    for c in channels::TANGENT {
        s.node.excluded[c] = true;
        s.node.mean[c] = 0.0;
        s.node.std[c] = 1.0;
    }
    for c in channels::DIRECTION {
        s.edge.excluded[c] = true;
        s.edge.mean[c] = 0.0;
        s.edge.std[c] = 1.0;
    }
}

pub fn apply_normalization(norm: &ChannelNorm, x: &[f64], direction: Direction) -> Result<Vec<f64>> {
    if x.len() != norm.len() {
        return Err(Error::Dimension {
            expected: norm.len(),
            got: x.len(),
        });
    }
    Ok(x
        .iter()
        .enumerate()
        .map(|(c, &v)| match direction {
            Direction::Forward => norm.forward_channel(c, v),
            Direction::Inverse => norm.inverse_channel(c, v),
        })
        .collect())
}

/// Neumaier-compensated running sums, one per channel.
#[derive(Clone)]
struct Accumulator {
    sum: Vec<f64>,
    comp: Vec<f64>,
    count: usize,
}

impl Accumulator {
    fn new(channels: usize) -> Self {
        Self {
            sum: vec![0.0; channels],
            comp: vec![0.0; channels],
            count: 0,
        }
    }

    #[inline]
    fn add(&mut self, c: usize, x: f64) {
        let s = self.sum[c];
        let t = s + x;
        if s.abs() >= x.abs() {
            self.comp[c] += (s - t) + x;
        } else {
            self.comp[c] += (x - t) + s;
        }
        self.sum[c] = t;
    }

    fn total(&self, c: usize) -> f64 {
        self.sum[c] + self.comp[c]
    }
}

/// Two-pass statistics over a stream of fixed-width rows.
fn channel_stats<F>(channels: usize, visit: F) -> ChannelNorm
where
    F: Fn(&mut dyn FnMut(&[f64])),
{
    let mut first = Accumulator::new(channels);
    visit(&mut |row: &[f64]| {
        for (c, &x) in row.iter().enumerate() {
            first.add(c, x);
        }
        first.count += 1;
    });
    let n = first.count.max(1) as f64;
    let mean: Vec<f64> = (0..channels).map(|c| first.total(c) / n).collect();
    let mut second = Accumulator::new(channels);
    visit(&mut |row: &[f64]| {
        for (c, &x) in row.iter().enumerate() {
            let d = x - mean[c];
            second.add(c, d * d);
        }
    });
    let std = (0..channels)
        .map(|c| {
            let s = libm::sqrt(second.total(c) / n);
            // zero-variance channels keep unit scale
            if s <= 1e-12 * mean[c].abs().max(1.0) {
                1.0
            } else {
                s
            }
        })
        .collect();
    ChannelNorm {
        mean,
        std,
        excluded: vec![false; channels],
    }
}

/// Fits statistics over all nodes, edges and time steps of the dataset.
///
/// Output statistics are computed over consecutive-state increments.
pub fn fit_normalization(dataset: &[(&CenterlineGraph, &Trajectory)]) -> Result<NormStats> {
    if dataset.is_empty() || dataset.iter().all(|(_, t)| t.is_empty()) {
        return Err(Error::Validation("cannot fit normalization on an empty dataset".into()));
    }
    for (g, t) in dataset {
        if t.num_nodes() != g.num_nodes() {
            return Err(Error::Dimension {
                expected: g.num_nodes(),
                got: t.num_nodes(),
            });
        }
    }
    let statics: Vec<_> = dataset.iter().map(|(g, _)| static_node_features(g)).collect();
    let node = channel_stats(NODE_FEATURES, |f| {
        let mut row = [0.0; NODE_FEATURES];
        for ((_, traj), table) in dataset.iter().zip(&statics) {
            for s in &traj.states {
                for (i, base) in table.iter().enumerate() {
                    row.copy_from_slice(base);
                    row[channels::PRESSURE] = s.p[i];
                    row[channels::FLOW] = s.q[i];
                    row[channels::LOADING] = if s.loading { 1.0 } else { 0.0 };
                    f(&row);
                }
            }
        }
    });
    let edge_tables = dataset
        .iter()
        .map(|(g, _)| edge_feature_table(g))
        .collect::<Result<Vec<_>>>()?;
    let edge = channel_stats(EDGE_FEATURES, |f| {
        for table in &edge_tables {
            for w in table {
                f(w);
            }
        }
    });
    let output = channel_stats(2, |f| {
        for (_, traj) in dataset {
            for pair in traj.states.windows(2) {
                for i in 0..pair[0].num_nodes() {
                    f(&[pair[1].p[i] - pair[0].p[i], pair[1].q[i] - pair[0].q[i]]);
                }
            }
        }
    });
    let mut stats = NormStats { node, edge, output };
    mark_excluded(&mut stats);
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::test_graphs::{chain, y_tree};
    use crate::graph::{add_boundary_edges, NodeState};
    use alloc::string::String;

    fn trajectory(n: usize, steps: usize, f: impl Fn(usize, usize) -> (f64, f64)) -> Trajectory {
        let states = (0..steps)
            .map(|k| {
                let (p, q): (Vec<f64>, Vec<f64>) = (0..n).map(|i| f(k, i)).unzip();
                NodeState::new(p, q, k < 2, k).unwrap()
            })
            .collect::<Vec<_>>();
        let inflow = states.iter().map(|s| s.q[0]).collect();
        Trajectory::new(String::from("g"), 0.01, states, inflow, 2).unwrap()
    }

    #[test]
    fn constant_trajectory_clamps_std() {
        let g = chain(4);
        let t = trajectory(4, 5, |_, _| (90_000.0, 0.0));
        let stats = fit_normalization(&[(&g, &t)]).unwrap();
        assert_eq!(stats.node.mean[channels::PRESSURE], 90_000.0);
        assert_eq!(stats.node.std[channels::PRESSURE], 1.0);
        assert_eq!(stats.output.std, vec![1.0, 1.0]);
    }

    #[test]
    fn standardized_channels() {
        let g = add_boundary_edges(&y_tree());
        let t = trajectory(7, 9, |k, i| {
            (80_000.0 + 1000.0 * (k * k) as f64 + 37.0 * i as f64, 3.0 * k as f64 - i as f64)
        });
        let stats = fit_normalization(&[(&g, &t)]).unwrap();
        let statics = static_node_features(&g);
        let mut rows = Vec::new();
        for s in &t.states {
            for (i, base) in statics.iter().enumerate() {
                let mut r = *base;
                r[0] = s.p[i];
                r[1] = s.q[i];
                r[16] = if s.loading { 1.0 } else { 0.0 };
                rows.push(apply_normalization(&stats.node, &r, Direction::Forward).unwrap());
            }
        }
        let n = rows.len() as f64;
        for c in 0..NODE_FEATURES {
            let mean: f64 = rows.iter().map(|r| r[c]).sum::<f64>() / n;
            let var: f64 = rows.iter().map(|r| (r[c] - mean) * (r[c] - mean)).sum::<f64>() / n;
            if stats.node.excluded[c] {
                assert!(channels::TANGENT.contains(&c));
                continue;
            }
            assert!(mean.abs() < 1e-10, "channel {c} mean {mean}");
            if stats.node.std[c] != 1.0 || var > 0.0 {
                assert!((libm::sqrt(var) - 1.0).abs() < 1e-10, "channel {c} std {}", libm::sqrt(var));
            }
        }
        assert!(stats.edge.excluded[0] && stats.edge.excluded[1] && stats.edge.excluded[2]);
        assert!(!stats.edge.excluded[3]);
    }

    #[test]
    fn excluded_channel_passes_through() {
        let mut norm = ChannelNorm::identity(3);
        norm.mean = vec![5.0, 5.0, 5.0];
        norm.std = vec![2.0, 2.0, 2.0];
        norm.excluded[1] = true;
        let y = apply_normalization(&norm, &[1.0, 0.7, 9.0], Direction::Forward).unwrap();
        assert_eq!(y, vec![-2.0, 0.7, 2.0]);
        let x = apply_normalization(&norm, &y, Direction::Inverse).unwrap();
        assert_eq!(x, vec![1.0, 0.7, 9.0]);
    }

    #[test]
    fn identity_stats_and_mismatch() {
        let norm = ChannelNorm::identity(4);
        assert_eq!(
            apply_normalization(&norm, &[0.0; 4], Direction::Forward).unwrap(),
            vec![0.0; 4]
        );
        assert!(matches!(
            apply_normalization(&norm, &[0.0; 3], Direction::Forward),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn empty_dataset_rejected() {
        assert!(fit_normalization(&[]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn round_trip_identity(
            xs in proptest::collection::vec(-1e6f64..1e6, 5),
            means in proptest::collection::vec(-1e5f64..1e5, 5),
            stds in proptest::collection::vec(1e-3f64..1e4, 5),
        ) {
            let norm = ChannelNorm { mean: means, std: stds, excluded: vec![false, true, false, false, false] };
            let y = apply_normalization(&norm, &xs, Direction::Forward).unwrap();
            let back = apply_normalization(&norm, &y, Direction::Inverse).unwrap();
            for (a, b) in xs.iter().zip(&back) {
                proptest::prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }
}
