use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::engine;
use super::*;
use crate::graph::test_graphs::{chain, y_tree};
use crate::graph::{
    add_boundary_edges, fit_normalization, CenterlineGraph, Edge, NodeState, NormStats, Trajectory,
};
use crate::nn::{central_difference, relative_error, Matrix};

fn synthetic(g: &CenterlineGraph, steps: usize) -> Trajectory {
    let n = g.num_nodes();
    let states: Vec<NodeState> = (0..steps)
        .map(|k| {
            let t = k as f64 * 0.1;
            let p = (0..n).map(|i| 9e4 + 4e3 * libm::sin(t + 0.3 * i as f64)).collect();
            let q = (0..n).map(|i| 5.0 + 3.0 * libm::cos(t - 0.2 * i as f64)).collect();
            NodeState::new(p, q, k < 2, k).unwrap()
        })
        .collect();
    let inflow = states.iter().map(|s| s.q[0]).collect();
    Trajectory::new("t".into(), 0.01, states, inflow, 2).unwrap()
}

fn setup(g: CenterlineGraph, seed: u64) -> (CenterlineGraph, Trajectory, GnnModel) {
    let g = add_boundary_edges(&g);
    let t = synthetic(&g, 12);
    let stats = fit_normalization(&[(&g, &t)]).unwrap();
    let model = GnnModel::new(GnnConfig::default(), stats, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    (g, t, model)
}

fn zero_mean_output(stats: &NormStats) -> NormStats {
    let mut s = stats.clone();
    s.output.mean = vec![0.0, 0.0];
    s
}

#[test]
fn encode_widths_and_function_of_features() {
    let (g, t, model) = setup(chain(5), 1);
    let lat = encode(&model, &g, &t.states[0]).unwrap();
    assert_eq!(lat.nodes.cols, 16);
    assert_eq!(lat.nodes.rows, 5);
    assert_eq!(lat.edges.rows, g.num_edges());
    assert_eq!(lat.edges.cols, 16);
    // boundary edges are part of the encoded set
    assert!(!g.boundary_edges().is_empty() && lat.edges.rows > g.physical_edges().len());
    // nodes 1 and 3 of a chain with identical state and static features
    let mut s = t.states[0].clone();
    s.p = vec![1e5; 5];
    s.q = vec![2.0; 5];
    let x = engine::node_inputs(&model, &model.prepare(&g).unwrap(), &s.p, &s.q, &[false]);
    let (v, _) = model.node_encoder().forward(&x).unwrap();
    assert_eq!(x.row(1), x.row(2));
    assert_eq!(v.row(1), v.row(2));
}

#[test]
fn inlet_aggregate_is_zero_without_inlet_edge() {
    // chain(5): node 3 links to the outlet, so its inlet-type sum is zero
    let (g, _, model) = setup(chain(5), 2);
    let pg = model.prepare(&g).unwrap();
    let v = Matrix::from_vec(5, 16, (0..80).map(|i| i as f64 * 0.01).collect());
    let w = Matrix::from_vec(pg.num_edges(), 16, (0..pg.num_edges() * 16).map(|i| 1.0 + i as f64).collect());
    let nin = engine::gather_nodes(&pg, &v, &w);
    assert!(nin.row(3)[32..48].iter().all(|x| *x == 0.0));
    assert!(nin.row(3)[48..64].iter().any(|x| *x != 0.0));
    assert!(nin.row(1)[32..48].iter().any(|x| *x != 0.0));
    assert!(nin.row(1)[48..64].iter().all(|x| *x == 0.0));
    // the aggregate is the sum of incoming edge latents
    let mut expect = [0.0; 16];
    for e in 0..pg.num_edges() {
        if pg.dst[e] == 2 {
            for c in 0..16 {
                expect[c] += w.get(e, c);
            }
        }
    }
    assert_eq!(&nin.row(2)[16..32], &expect);
}

#[test]
fn zeroed_processors_are_pure_residual() {
    let (g, t, mut model) = setup(y_tree(), 3);
    model.zero_processors_and_decoder();
    let lat0 = encode(&model, &g, &t.states[3]).unwrap();
    let mut lat = lat0.clone();
    for l in 1..=5 {
        lat = process_step(&model, &g, &lat, l).unwrap();
    }
    assert_eq!(lat.nodes, lat0.nodes);
    assert_eq!(lat.edges, lat0.edges);
    assert!(process_step(&model, &g, &lat, 6).is_err());
    assert!(process_step(&model, &g, &lat0, 2).is_err());
}

#[test]
fn decoder_widths_and_zero_map() {
    let (g, t, mut model) = setup(y_tree(), 4);
    let lat = encode(&model, &g, &t.states[0]).unwrap();
    let d = decode(&model, &lat).unwrap();
    assert_eq!(d.len(), 7);
    assert!(d.iter().all(|v| v[0].is_finite() && v[1].is_finite()));
    model.zero_processors_and_decoder();
    let d = decode(&model, &lat).unwrap();
    let mean = &model.stats().output.mean;
    for v in d {
        assert_eq!(v, [mean[0], mean[1]]);
    }
}

#[test]
fn zero_increment_step_prescribes_inlet_only() {
    let (g, t, model) = setup(y_tree(), 5);
    let stats = zero_mean_output(model.stats());
    let mut m = GnnModel::new(GnnConfig::default(), stats, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    m.zero_processors_and_decoder();
    let s = &t.states[4];
    let next = gnn_step(&m, &g, s, 42.0, false).unwrap();
    assert_eq!(next.q[0], 42.0);
    assert_eq!(next.p, s.p);
    assert_eq!(&next.q[1..], &s.q[1..]);
    assert_eq!(next.k, s.k + 1);
}

#[test]
fn rollout_algebra() {
    let (g, t, model) = setup(y_tree(), 6);
    let sched = Schedule::of(&t);
    let series: Vec<f64> = t.inlet_flow[1..].to_vec();
    let s0 = &t.states[0];
    let zero = rollout(&model, &g, s0, &series, sched, 0).unwrap();
    assert_eq!(zero.states, vec![s0.clone()]);
    let five = rollout(&model, &g, s0, &series, sched, 5).unwrap();
    let two = rollout(&model, &g, s0, &series, sched, 2).unwrap();
    let three = rollout(&model, &g, two.states.last().unwrap(), &series[2..], sched, 3).unwrap();
    assert_eq!(&five.states[..3], &two.states[..]);
    assert_eq!(&five.states[2..], &three.states[..]);
    for (j, s) in five.states.iter().enumerate().skip(1) {
        assert_eq!(s.q[0], series[j - 1]);
        assert_eq!(s.loading, s.k < t.loading_steps);
    }
    let again = rollout(&model, &g, s0, &series, sched, 5).unwrap();
    let bits = |tr: &Trajectory| -> Vec<u64> {
        tr.states.iter().flat_map(|s| s.p.iter().chain(&s.q).map(|v| v.to_bits())).collect()
    };
    assert_eq!(bits(&five), bits(&again));
    assert!(rollout(&model, &g, s0, &series[..2], sched, 5).is_err());
}

#[test]
fn zero_network_keeps_state_constant() {
    let (g, t, model) = setup(y_tree(), 7);
    let stats = zero_mean_output(model.stats());
    let mut m = GnnModel::new(GnnConfig::default(), stats, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
    m.zero_processors_and_decoder();
    let series = vec![3.5; 20];
    let tr = rollout(&m, &g, &t.states[0], &series, Schedule::of(&t), 20).unwrap();
    for s in &tr.states[1..] {
        assert_eq!(s.p, t.states[0].p);
        assert_eq!(&s.q[1..], &t.states[0].q[1..]);
        assert_eq!(s.q[0], 3.5);
    }
}

/// Relabels nodes by `perm` (old -> new), keeping edge order.
fn permuted(g: &CenterlineGraph, perm: &[usize]) -> CenterlineGraph {
    let n = g.num_nodes();
    let mut inv = vec![0; n];
    for (old, &new) in perm.iter().enumerate() {
        inv[new] = old;
    }
    let pick = |i: usize| inv[i];
    let map_edges = |es: &[Edge]| -> Vec<Edge> {
        es.iter()
            .map(|e| Edge {
                src: perm[e.src],
                dst: perm[e.dst],
                kind: e.kind,
            })
            .collect()
    };
    let bcs: BTreeMap<_, _> = g.outlet_bcs().iter().map(|(k, v)| (perm[*k], *v)).collect();
    CenterlineGraph::from_parts(
        (0..n).map(|i| g.positions()[pick(i)]).collect(),
        (0..n).map(|i| g.node_types()[pick(i)]).collect(),
        (0..n).map(|i| g.areas()[pick(i)]).collect(),
        (0..n).map(|i| g.tangents()[pick(i)]).collect(),
        map_edges(g.physical_edges()),
        map_edges(g.boundary_edges()),
        *g.scalars(),
        bcs,
    )
    .unwrap()
}

#[test]
fn permutation_equivariance() {
    let (g, t, model) = setup(y_tree(), 8);
    let perm = [3, 6, 0, 5, 1, 4, 2];
    let pg = permuted(&g, &perm);
    let permute_state = |s: &NodeState| {
        let mut p = vec![0.0; 7];
        let mut q = vec![0.0; 7];
        for i in 0..7 {
            p[perm[i]] = s.p[i];
            q[perm[i]] = s.q[i];
        }
        NodeState::new(p, q, s.loading, s.k).unwrap()
    };
    let series = t.inlet_flow[1..].to_vec();
    let a = rollout(&model, &g, &t.states[0], &series, Schedule::of(&t), 6).unwrap();
    let b = rollout(&model, &pg, &permute_state(&t.states[0]), &series, Schedule::of(&t), 6).unwrap();
    for (sa, sb) in a.states.iter().zip(&b.states) {
        assert_eq!(permute_state(sa), *sb);
    }
}

#[test]
fn ablation_widths_and_boundary_removal() {
    let g = add_boundary_edges(&y_tree());
    let t = synthetic(&g, 6);
    let stats = fit_normalization(&[(&g, &t)]).unwrap();
    for (ab, nw, ew) in [
        (Ablation::NoTau, 6, 4),
        (Ablation::NoRcr, 14, 8),
        (Ablation::NoBoundaryEdges, 17, 8),
    ] {
        let cfg = GnnConfig {
            ablation: ab,
            ..Default::default()
        };
        let m = GnnModel::new(cfg, stats.clone(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(m.node_encoder().shape().input, nw);
        assert_eq!(m.edge_encoder().shape().input, ew);
        let pg = m.prepare(&g).unwrap();
        if ab == Ablation::NoBoundaryEdges {
            assert_eq!(pg.num_edges(), g.physical_edges().len());
        } else {
            assert_eq!(pg.num_edges(), g.num_edges());
        }
        let tr = rollout(&m, &g, &t.states[0], &t.inlet_flow[1..], Schedule::of(&t), 3).unwrap();
        assert_eq!(tr.len(), 4);
    }
}

#[test]
fn single_step_gradient_matches_finite_differences() {
    let (g, t, model) = setup(chain(5), 9);
    let pg = model.prepare(&g).unwrap();
    let s = &t.states[5];
    let c: Vec<f64> = (0..10).map(|i| libm::sin(0.9 * i as f64 + 0.4)).collect();
    let loss = |m: &GnnModel, p: &[f64]| -> f64 {
        let (w0, _) = m.edge_encoder().forward(&pg.edge_inputs).unwrap();
        let out = engine::step_forward(m, &pg, &w0, p, &s.q, &[false], None, false).unwrap();
        (0..5).map(|i| c[i] * out.dp[i] / 1e3 + c[5 + i] * out.dq[i]).sum()
    };
    let (w0, ecache) = model.edge_encoder().forward(&pg.edge_inputs).unwrap();
    let out = engine::step_forward(&model, &pg, &w0, &s.p, &s.q, &[false], None, true).unwrap();
    let mut grads = GnnGrads::zeros_like(&model);
    let mut dw0 = Matrix::zeros(pg.num_edges(), 16);
    let gdp: Vec<f64> = c[..5].iter().map(|v| v / 1e3).collect();
    let (gp, _) = engine::step_backward(&model, &pg, out.cache.as_ref().unwrap(), &gdp, &c[5..], &mut grads, &mut dw0)
        .unwrap();
    model.edge_encoder().backward(&ecache, &dw0, &mut grads.blocks[1]).unwrap();
    let mut worst: f64 = 0.0;
    for b in 0..model.mlps().len() {
        let n = model.mlps()[b].num_params();
        for i in (0..n).step_by(n / 7 + 1) {
            let mut work = model.clone();
            let mut params = model.mlps()[b].params().to_vec();
            let num = central_difference(&mut params, i, 1e-6, |p| {
                work.mlps_mut()[b].params_mut().copy_from_slice(p);
                Ok(loss(&work, &s.p))
            })
            .unwrap();
            worst = worst.max(relative_error(grads.blocks[b][i], num));
        }
    }
    let mut p = s.p.clone();
    for i in 0..5 {
        let num = central_difference(&mut p, i, 1e-2, |p| Ok(loss(&model, p))).unwrap();
        worst = worst.max(relative_error(gp[i], num));
    }
    assert!(worst < 1e-5, "max relative error {worst}");
}
