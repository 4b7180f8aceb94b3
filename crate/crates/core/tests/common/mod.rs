//! Independent oracles shared by the integration and acceptance suites.
//! None of these call into the code paths they check.

#![allow(dead_code)]

pub mod recovery;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use nodality_core::centrality::{MetricKind, NodalityMatrix};
use nodality_core::graph::{DiscourseGraph, GraphKind};
use nodality_core::types::Window;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const EPS: f64 = 1e-6;

pub fn window() -> Window {
    Window { start: 0, end: 1 }
}

pub fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("n{i:02}")).collect()
}

pub fn graph_from(n: usize, edges: &[(usize, usize, u64)]) -> DiscourseGraph {
    let nm = names(n);
    let e: Vec<(String, String, u64)> = edges
        .iter()
        .map(|&(a, b, w)| (nm[a].clone(), nm[b].clone(), w))
        .collect();
    DiscourseGraph::from_edges(GraphKind::Full, window(), nm.clone(), &e).unwrap()
}

/// Every directed simple graph on `n` labelled nodes with unit weights.
pub fn all_graphs(n: usize) -> Vec<DiscourseGraph> {
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    (0u64..(1 << pairs.len()))
        .map(|mask| {
            let edges: Vec<_> = pairs
                .iter()
                .enumerate()
                .filter(|(b, _)| mask >> b & 1 == 1)
                .map(|(_, &(i, j))| (i, j, 1))
                .collect();
            graph_from(n, &edges)
        })
        .collect()
}

pub fn random_graph(rng: &mut ChaCha8Rng, max_n: usize) -> DiscourseGraph {
    let n = rng.random_range(3..=max_n);
    let p = rng.random_range(0.15..0.6);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.random_bool(p) {
                edges.push((i, j, rng.random_range(1..=9)));
            }
        }
    }
    graph_from(n, &edges)
}

pub fn random_graphs(seed: u64, count: usize, max_n: usize) -> Vec<DiscourseGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_graph(&mut rng, max_n)).collect()
}

fn dense_weights(g: &DiscourseGraph) -> DMatrix<f64> {
    let n = g.node_count();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = g.weight(i, j) as f64;
        }
    }
    a
}

fn path_tie(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Betweenness by enumerating every simple path between every ordered pair.
pub fn brute_betweenness(g: &DiscourseGraph) -> Vec<f64> {
    let n = g.node_count();
    let a = dense_weights(g);
    let mut bc = vec![0.0; n];
    for s in 0..n {
        for t in 0..n {
            if s == t {
                continue;
            }
            let mut paths: Vec<(f64, Vec<usize>)> = Vec::new();
            let mut stack = vec![s];
            let mut on = vec![false; n];
            on[s] = true;
            enumerate(&a, t, &mut stack, &mut on, 0.0, &mut paths);
            if paths.is_empty() {
                continue;
            }
            let best = paths.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
            let shortest: Vec<&Vec<usize>> = paths.iter().filter(|p| path_tie(p.0, best)).map(|p| &p.1).collect();
            let total = shortest.len() as f64;
            for v in 0..n {
                if v == s || v == t {
                    continue;
                }
                let through = shortest.iter().filter(|p| p.contains(&v)).count() as f64;
                bc[v] += through / total;
            }
        }
    }
    if n > 2 {
        let norm = ((n - 1) * (n - 2)) as f64;
        bc.iter_mut().for_each(|b| *b /= norm);
    } else {
        bc.iter_mut().for_each(|b| *b = 0.0);
    }
    bc
}

fn enumerate(
    a: &DMatrix<f64>,
    t: usize,
    stack: &mut Vec<usize>,
    on: &mut [bool],
    len: f64,
    out: &mut Vec<(f64, Vec<usize>)>,
) {
    let u = *stack.last().unwrap();
    if u == t {
        out.push((len, stack.clone()));
        return;
    }
    for v in 0..a.ncols() {
        if a[(u, v)] > 0.0 && !on[v] {
            on[v] = true;
            stack.push(v);
            enumerate(a, t, stack, on, len + 1.0 / a[(u, v)], out);
            stack.pop();
            on[v] = false;
        }
    }
}

fn active(g: &DiscourseGraph) -> Vec<usize> {
    (0..g.node_count())
        .filter(|&i| !g.out_edges(i).is_empty() || !g.in_edges(i).is_empty())
        .collect()
}

/// Dense `A + eps J` over the nodes that have at least one edge.
fn perturbed(g: &DiscourseGraph) -> (Vec<usize>, DMatrix<f64>) {
    let act = active(g);
    let k = act.len();
    let mut m = DMatrix::from_element(k, k, EPS);
    for (a, &i) in act.iter().enumerate() {
        for (b, &j) in act.iter().enumerate() {
            m[(a, b)] += g.weight(i, j) as f64;
        }
    }
    (act, m)
}

fn scatter(n: usize, act: &[usize], v: &DVector<f64>) -> Vec<f64> {
    let mut out = vec![0.0; n];
    let sign = if v.sum() < 0.0 { -1.0 } else { 1.0 };
    let norm = v.norm();
    for (k, &i) in act.iter().enumerate() {
        out[i] = sign * v[k] / norm;
    }
    out
}

/// Perron vector of the perturbed adjacency: Perron root from the Schur
/// eigenvalues, eigenvector as the null vector of `M - lambda I` via SVD.
pub fn dense_eigenvector(g: &DiscourseGraph) -> Vec<f64> {
    let (act, m) = perturbed(g);
    if act.is_empty() {
        return vec![0.0; g.node_count()];
    }
    let k = act.len();
    let lambda = m
        .clone()
        .complex_eigenvalues()
        .iter()
        .map(|c| c.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let shifted = &m - DMatrix::identity(k, k) * lambda;
    let svd = shifted.svd(false, true);
    let vt = svd.v_t.unwrap();
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, &s)| if s < best.1 { (i, s) } else { best });
    let v = vt.row(idx).transpose();
    scatter(g.node_count(), &act, &v)
}

fn top_symmetric(m: DMatrix<f64>) -> DVector<f64> {
    let eig = SymmetricEigen::new(m);
    let (idx, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &l)| if l > best.1 { (i, l) } else { best });
    eig.eigenvectors.column(idx).into_owned()
}

/// Authorities and hubs as the top eigenvectors of `M^T M` and `M M^T`.
pub fn dense_hits(g: &DiscourseGraph) -> (Vec<f64>, Vec<f64>) {
    let (act, m) = perturbed(g);
    let n = g.node_count();
    if act.is_empty() {
        return (vec![0.0; n], vec![0.0; n]);
    }
    let auth = top_symmetric(m.transpose() * &m);
    let hub = top_symmetric(&m * m.transpose());
    (scatter(n, &act, &auth), scatter(n, &act, &hub))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn dense_degree(g: &DiscourseGraph) -> Vec<f64> {
    let a = dense_weights(g);
    let n = g.node_count();
    (0..n)
        .map(|i| (0..n).filter(|&j| a[(i, j)] > 0.0).count() + (0..n).filter(|&j| a[(j, i)] > 0.0).count())
        .map(|d| d as f64 / (n - 1) as f64)
        .collect()
}

pub fn dense_strength(g: &DiscourseGraph) -> Vec<f64> {
    let a = dense_weights(g);
    (0..g.node_count()).map(|i| a.row(i).sum() + a.column(i).sum()).collect()
}

/// Funnel and amplification bandwidth summed straight from the adjacency
/// matrix, with `f` in node order.
pub fn dense_bandwidths(g: &DiscourseGraph, f: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let a = dense_weights(g);
    let n = g.node_count();
    let k_in = (0..n).map(|i| a.column(i).sum()).sum::<f64>() / n as f64;
    let k_out = (0..n).map(|i| a.row(i).sum()).sum::<f64>() / n as f64;
    let nu = (0..n)
        .map(|i| if k_in > 0.0 { f[i] * (0..n).map(|h| a[(h, i)]).sum::<f64>() / k_in } else { 0.0 })
        .collect();
    let mu = (0..n)
        .map(|i| if k_out > 0.0 { (0..n).map(|j| f[j] * a[(i, j)]).sum::<f64>() / k_out } else { 0.0 })
        .collect();
    (nu, mu)
}

pub fn bits(mask: u32, len: usize) -> Vec<f64> {
    (0..len).map(|i| f64::from((mask >> i) & 1)).collect()
}

/// Dense-table transfer entropy on 0/1 series with history 1. A binary
/// series is its own median-split symbol sequence, so no binning is needed.
pub fn dense_te(x: &[f64], y: &[f64]) -> f64 {
    let mut joint = [[[0.0f64; 2]; 2]; 2];
    let n = x.len() - 1;
    for t in 0..n {
        joint[y[t + 1] as usize][y[t] as usize][x[t] as usize] += 1.0 / n as f64;
    }
    let mut te = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            for c in 0..2 {
                let p = joint[a][b][c];
                if p == 0.0 {
                    continue;
                }
                let p_bc: f64 = (0..2).map(|a2| joint[a2][b][c]).sum();
                let p_ab: f64 = (0..2).map(|c2| joint[a][b][c2]).sum();
                let p_b: f64 = (0..2).flat_map(|a2| (0..2).map(move |c2| (a2, c2))).map(|(a2, c2)| joint[a2][b][c2]).sum();
                te += p * ((p / p_bc) / (p_ab / p_b)).ln();
            }
        }
    }
    (te / std::f64::consts::LN_2).max(0.0)
}

pub const GOOD: [MetricKind; 3] = [MetricKind::Strength, MetricKind::Degree, MetricKind::FunnelBandwidth];

/// Good metrics: topic = a + b + noise, null = a - b + noise.
/// Other metrics: topic = a + noise, null = -a + noise.
pub fn planted(seed: u64, n: usize) -> NodalityMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kinds = MetricKind::ALL.to_vec();
    let m = kinds.len();
    let mut data = DMatrix::zeros(n, 2 * m);
    for i in 0..n {
        let a = 3.0 * rng.sample::<f64, _>(StandardNormal);
        let b = rng.sample::<f64, _>(StandardNormal);
        for (j, k) in kinds.iter().enumerate() {
            let mut noise = || 0.2 * rng.sample::<f64, _>(StandardNormal);
            let (t, nl) = if GOOD.contains(k) { (a + b, a - b) } else { (a, -a) };
            data[(i, j)] = t + noise();
            data[(i, m + j)] = nl + noise();
        }
    }
    NodalityMatrix {
        actors: (0..n).map(|i| format!("a{i:04}")).collect(),
        kinds,
        data,
    }
}

/// Least squares through the normal equations, with classical standard
/// errors from `s^2 (X'X)^-1`.
pub fn normal_equations(x: &DMatrix<f64>, y: &DVector<f64>) -> (Vec<f64>, Vec<f64>) {
    let xtx_inv = (x.transpose() * x).try_inverse().unwrap();
    let beta = &xtx_inv * x.transpose() * y;
    let resid = y - x * &beta;
    let s2 = resid.norm_squared() / (x.nrows() - x.ncols()) as f64;
    let se = (0..x.ncols()).map(|j| (s2 * xtx_inv[(j, j)]).sqrt()).collect();
    (beta.iter().copied().collect(), se)
}
