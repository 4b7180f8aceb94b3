//! Per-node centrality metrics on a [`DiscourseGraph`], including the two
//! follower-weighted bandwidth metrics.
//!
//! The spectral metrics (eigenvector, authority, hub) run on the weighted
//! adjacency restricted to nodes with at least one edge, with `EIGEN_EPS`
//! added to every entry so the operator is irreducible. Nodes without edges
//! score 0.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DiscourseGraph, GraphKind};
use crate::ingest::Followers;
use crate::par;
use crate::types::{ActorId, Window};

pub const EIGEN_EPS: f64 = 1e-6;
pub const EIGEN_TOL: f64 = 1e-10;
pub const EIGEN_MAX_ITER: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Degree,
    Betweenness,
    Eigenvector,
    Authority,
    Hub,
    Strength,
    FunnelBandwidth,
    AmplificationBandwidth,
}

impl MetricKind {
    pub const ALL: [MetricKind; 8] = [
        MetricKind::Degree,
        MetricKind::Betweenness,
        MetricKind::Eigenvector,
        MetricKind::Authority,
        MetricKind::Hub,
        MetricKind::Strength,
        MetricKind::FunnelBandwidth,
        MetricKind::AmplificationBandwidth,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Degree => "degree",
            MetricKind::Betweenness => "betweenness",
            MetricKind::Eigenvector => "eigenvector",
            MetricKind::Authority => "authority",
            MetricKind::Hub => "hub",
            MetricKind::Strength => "strength",
            MetricKind::FunnelBandwidth => "funnel_bandwidth",
            MetricKind::AmplificationBandwidth => "amplification_bandwidth",
        }
    }

    pub fn needs_followers(self) -> bool {
        matches!(self, MetricKind::FunnelBandwidth | MetricKind::AmplificationBandwidth)
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        MetricKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.trim())
            .ok_or_else(|| Error::invalid(format!("unknown metric `{s}`")))
    }
}

pub fn parse_metric_list(s: &str) -> Result<Vec<MetricKind>> {
    let kinds: Vec<MetricKind> = s.split(',').filter(|p| !p.trim().is_empty()).map(str::parse).collect::<Result<_>>()?;
    if kinds.is_empty() {
        return Err(Error::invalid("empty metric list"));
    }
    Ok(kinds)
}

/// Scores for one metric on one graph, aligned with the graph's node order.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricVector {
    pub kind: MetricKind,
    pub graph_kind: GraphKind,
    pub window: Window,
    pub actors: Vec<ActorId>,
    pub values: Vec<f64>,
}

impl MetricVector {
    pub fn get(&self, actor: &str) -> Option<f64> {
        self.actors
            .binary_search_by(|a| a.as_str().cmp(actor))
            .ok()
            .map(|i| self.values[i])
    }
}

pub fn compute(graph: &DiscourseGraph, kind: MetricKind, followers: &Followers) -> Result<MetricVector> {
    let values = match kind {
        MetricKind::Degree => degree(graph)?,
        MetricKind::Betweenness => betweenness(graph)?,
        MetricKind::Eigenvector => eigenvector(graph),
        MetricKind::Authority => hits(graph).0,
        MetricKind::Hub => hits(graph).1,
        MetricKind::Strength => strength(graph),
        MetricKind::FunnelBandwidth => funnel_bandwidth(graph, followers)?,
        MetricKind::AmplificationBandwidth => amplification_bandwidth(graph, followers)?,
    };
    Ok(MetricVector {
        kind,
        graph_kind: graph.kind.clone(),
        window: graph.window,
        actors: graph.nodes().to_vec(),
        values,
    })
}

fn in_strength(g: &DiscourseGraph, i: usize) -> f64 {
    g.in_edges(i).iter().map(|&(_, w)| w as f64).sum()
}

fn out_strength(g: &DiscourseGraph, i: usize) -> f64 {
    g.out_edges(i).iter().map(|&(_, w)| w as f64).sum()
}

/// Unweighted in-degree plus out-degree over `n - 1`.
pub fn degree(g: &DiscourseGraph) -> Result<Vec<f64>> {
    let n = g.node_count();
    if n <= 1 {
        return Err(Error::TooFewNodes(n));
    }
    let norm = (n - 1) as f64;
    Ok((0..n)
        .map(|i| (g.in_edges(i).len() + g.out_edges(i).len()) as f64 / norm)
        .collect())
}

/// Weighted in-strength plus out-strength.
pub fn strength(g: &DiscourseGraph) -> Vec<f64> {
    (0..g.node_count()).map(|i| in_strength(g, i) + out_strength(g, i)).collect()
}

fn follower(followers: &Followers, actor: &str) -> Result<f64> {
    followers
        .get(actor)
        .copied()
        .ok_or_else(|| Error::MissingFollowers(actor.to_string()))
}

/// Mean weighted in-strength, which equals the mean out-strength.
fn mean_strength(g: &DiscourseGraph) -> f64 {
    if g.node_count() == 0 {
        0.0
    } else {
        g.total_weight() as f64 / g.node_count() as f64
    }
}

/// `nu_i = f_i * sum_h w_hi / <k_in>`.
pub fn funnel_bandwidth(g: &DiscourseGraph, followers: &Followers) -> Result<Vec<f64>> {
    let k_in = mean_strength(g);
    (0..g.node_count())
        .map(|i| {
            let f = follower(followers, &g.nodes()[i])?;
            Ok(if k_in > 0.0 { f * in_strength(g, i) / k_in } else { 0.0 })
        })
        .collect()
}

/// `mu_i = sum_j f_j * w_ij / <k_out>`.
pub fn amplification_bandwidth(g: &DiscourseGraph, followers: &Followers) -> Result<Vec<f64>> {
    let k_out = mean_strength(g);
    let f: Vec<f64> = g.nodes().iter().map(|a| follower(followers, a)).collect::<Result<_>>()?;
    Ok((0..g.node_count())
        .map(|i| {
            if k_out > 0.0 {
                g.out_edges(i).iter().map(|&(j, w)| f[j] * w as f64).sum::<f64>() / k_out
            } else {
                0.0
            }
        })
        .collect())
}

#[derive(Clone, Copy, PartialEq)]
struct Dist(f64, usize);

impl Eq for Dist {}

impl PartialOrd for Dist {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dist {
    // min-heap on distance
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

/// Relative tolerance for treating two path lengths as tied.
const PATH_TIE_TOL: f64 = 1e-12;

#[inline]
pub(crate) fn tied(a: f64, b: f64) -> bool {
    (a - b).abs() <= PATH_TIE_TOL * a.abs().max(b.abs()).max(1.0)
}

/// Brandes betweenness on the directed graph with edge length `1 / w_ij`,
/// normalised by `(n - 1)(n - 2)`.
pub fn betweenness(g: &DiscourseGraph) -> Result<Vec<f64>> {
    let n = g.node_count();
    if n <= 1 {
        return Err(Error::TooFewNodes(n));
    }
    let partials = par::map_range(n, |s| brandes_from(g, s));
    let mut bc = vec![0.0; n];
    for p in partials {
        for (b, v) in bc.iter_mut().zip(p) {
            *b += v;
        }
    }
    if n > 2 {
        let norm = ((n - 1) * (n - 2)) as f64;
        bc.iter_mut().for_each(|b| *b /= norm);
    } else {
        bc.iter_mut().for_each(|b| *b = 0.0);
    }
    Ok(bc)
}

fn brandes_from(g: &DiscourseGraph, s: usize) -> Vec<f64> {
    let n = g.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut sigma = vec![0.0f64; n];
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut settled = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut heap = BinaryHeap::new();
    dist[s] = 0.0;
    sigma[s] = 1.0;
    heap.push(Dist(0.0, s));
    while let Some(Dist(d, u)) = heap.pop() {
        if settled[u] || d > dist[u] {
            continue;
        }
        settled[u] = true;
        order.push(u);
        for &(v, w) in g.out_edges(u) {
            if settled[v] {
                continue;
            }
            let nd = d + 1.0 / w as f64;
            if dist[v].is_finite() && tied(nd, dist[v]) {
                sigma[v] += sigma[u];
                preds[v].push(u);
            } else if nd < dist[v] {
                dist[v] = nd;
                sigma[v] = sigma[u];
                preds[v].clear();
                preds[v].push(u);
                heap.push(Dist(nd, v));
            }
        }
    }
    let mut delta = vec![0.0f64; n];
    let mut out = vec![0.0f64; n];
    for &w in order.iter().rev() {
        for &v in &preds[w] {
            delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
        }
        if w != s {
            out[w] = delta[w];
        }
    }
    out
}

/// Nodes with at least one incident edge.
fn active_nodes(g: &DiscourseGraph) -> Vec<usize> {
    (0..g.node_count())
        .filter(|&i| !g.out_edges(i).is_empty() || !g.in_edges(i).is_empty())
        .collect()
}

/// Sparse view of `A + eps * J` over the active node set.
struct Perturbed {
    n: usize,
    /// `out[i]` holds `(j, w_ij)` in local indices.
    out: Vec<Vec<(usize, f64)>>,
}

impl Perturbed {
    fn new(g: &DiscourseGraph, active: &[usize]) -> Self {
        let local: BTreeMap<usize, usize> = active.iter().enumerate().map(|(k, &i)| (i, k)).collect();
        let out = active
            .iter()
            .map(|&i| {
                g.out_edges(i)
                    .iter()
                    .map(|&(j, w)| (local[&j], w as f64))
                    .collect()
            })
            .collect();
        Perturbed { n: active.len(), out }
    }

    /// `(A + eps J) x`
    fn mul(&self, x: &[f64]) -> Vec<f64> {
        let shift = EIGEN_EPS * x.iter().sum::<f64>();
        self.out
            .iter()
            .map(|row| shift + row.iter().map(|&(j, w)| w * x[j]).sum::<f64>())
            .collect()
    }

    /// `(A + eps J)^T x`
    fn mul_t(&self, x: &[f64]) -> Vec<f64> {
        let shift = EIGEN_EPS * x.iter().sum::<f64>();
        let mut y = vec![shift; self.n];
        for (i, row) in self.out.iter().enumerate() {
            for &(j, w) in row {
                y[j] += w * x[i];
            }
        }
        y
    }
}

fn l2_normalize(x: &mut [f64]) -> f64 {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        x.iter_mut().for_each(|v| *v /= norm);
    }
    norm
}

fn l2_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn scatter(n: usize, active: &[usize], local: Vec<f64>) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (&i, v) in active.iter().zip(local) {
        out[i] = v;
    }
    out
}

/// Dominant eigenvector with `x_i ∝ sum_j w_ij x_j`, L2-normalised.
///
/// Power iteration on `M + s I` where `s` tracks the current estimate of the
/// dominant eigenvalue. The shift leaves eigenvectors unchanged and damps the
/// rotating eigenvalues that near-acyclic graphs produce.
pub fn eigenvector(g: &DiscourseGraph) -> Vec<f64> {
    let active = active_nodes(g);
    if active.is_empty() {
        return vec![0.0; g.node_count()];
    }
    let m = Perturbed::new(g, &active);
    let k = m.n;
    let mut x = vec![1.0 / (k as f64).sqrt(); k];
    for _ in 0..EIGEN_MAX_ITER {
        let mx = m.mul(&x);
        let lambda = mx.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut next: Vec<f64> = mx.iter().zip(&x).map(|(a, b)| a + lambda * b).collect();
        l2_normalize(&mut next);
        let change = l2_diff(&next, &x);
        x = next;
        if change < EIGEN_TOL {
            break;
        }
    }
    scatter(g.node_count(), &active, x)
}

/// Width of the iterated block in [`hits`].
const HITS_BLOCK: usize = 8;

/// Authority and hub scores: `a ∝ M^T h`, `h ∝ M a`, both L2-normalised.
///
/// The mutual recursion is run on a block of vectors (orthogonal iteration on
/// `M^T M`) with a Rayleigh-Ritz step, so authority vectors whose singular
/// values are split only by the `EIGEN_EPS` perturbation are still resolved.
/// Hubs follow as `M a`.
pub fn hits(g: &DiscourseGraph) -> (Vec<f64>, Vec<f64>) {
    let active = active_nodes(g);
    let n = g.node_count();
    if active.is_empty() {
        return (vec![0.0; n], vec![0.0; n]);
    }
    let m = Perturbed::new(g, &active);
    let k = m.n;
    let b = k.min(HITS_BLOCK);
    let apply = |col: &[f64]| m.mul_t(&m.mul(col));

    // first column uniform, the rest fixed pseudo-random fill
    let mut state = 0x9e37_79b9_7f4a_7c15u64;
    let mut q = DMatrix::from_fn(k, b, |_, c| {
        if c == 0 {
            1.0
        } else {
            state = state.wrapping_mul(6_364_136_223_846_793_005).wrapping_add(1_442_695_040_888_963_407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        }
    });
    q = q.qr().q();

    let mut a = vec![0.0; k];
    for _ in 0..EIGEN_MAX_ITER {
        let mut z = DMatrix::zeros(k, b);
        for c in 0..b {
            let col: Vec<f64> = q.column(c).iter().copied().collect();
            z.set_column(c, &nalgebra::DVector::from_vec(apply(&col)));
        }
        let h = q.transpose() * &z;
        let h = (&h + h.transpose()) * 0.5;
        let eig = nalgebra::SymmetricEigen::new(h);
        let top = eig
            .eigenvalues
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &l)| if l > best.1 { (i, l) } else { best })
            .0;
        let ritz = &q * eig.eigenvectors.column(top);
        let mut next: Vec<f64> = ritz.iter().copied().collect();
        if next.iter().sum::<f64>() < 0.0 {
            next.iter_mut().for_each(|v| *v = -*v);
        }
        l2_normalize(&mut next);
        let change = l2_diff(&next, &a);
        a = next;
        if change < EIGEN_TOL {
            break;
        }
        q = z.qr().q();
    }
    let mut h = m.mul(&a);
    l2_normalize(&mut h);
    (scatter(n, &active, a), scatter(n, &active, h))
}

/// `n x 2m` matrix: the first `m` columns are `kinds` on the topic graph,
/// the last `m` the same kinds on the null graph. Rows cover the union of
/// both graphs' nodes; a node absent from one graph scores 0 there.
#[derive(Clone, Debug, PartialEq)]
pub struct NodalityMatrix {
    pub actors: Vec<ActorId>,
    pub kinds: Vec<MetricKind>,
    pub data: DMatrix<f64>,
}

impl NodalityMatrix {
    pub fn m(&self) -> usize {
        self.kinds.len()
    }

    pub fn column_names(&self) -> Vec<String> {
        let topic = self.kinds.iter().map(|k| format!("{k}@topic"));
        let null = self.kinds.iter().map(|k| format!("{k}@null"));
        topic.chain(null).collect()
    }

    /// Sub-matrix for a subset of this matrix's kinds, in the given order.
    pub fn select(&self, kinds: &[MetricKind]) -> Result<NodalityMatrix> {
        let m = self.m();
        let cols: Vec<usize> = kinds
            .iter()
            .map(|k| {
                self.kinds
                    .iter()
                    .position(|x| x == k)
                    .ok_or_else(|| Error::invalid(format!("metric `{k}` not in matrix")))
            })
            .collect::<Result<_>>()?;
        let idx: Vec<usize> = cols.iter().copied().chain(cols.iter().map(|c| c + m)).collect();
        Ok(NodalityMatrix {
            actors: self.actors.clone(),
            kinds: kinds.to_vec(),
            data: self.data.select_columns(idx.iter()),
        })
    }
}

pub fn metric_matrix(
    topic: &DiscourseGraph,
    null: &DiscourseGraph,
    kinds: &[MetricKind],
    followers: &Followers,
) -> Result<NodalityMatrix> {
    if kinds.is_empty() {
        return Err(Error::invalid("no metrics requested"));
    }
    let mut actors: Vec<ActorId> = topic.nodes().iter().chain(null.nodes()).cloned().collect();
    actors.sort();
    actors.dedup();
    let jobs: Vec<(&DiscourseGraph, MetricKind)> = [topic, null]
        .iter()
        .flat_map(|g| kinds.iter().map(move |&k| (*g, k)))
        .collect();
    let columns = par::map(&jobs, |&(g, k)| {
        if g.node_count() == 0 {
            Ok(None)
        } else {
            compute(g, k, followers).map(Some)
        }
    });
    let mut data = DMatrix::zeros(actors.len(), jobs.len());
    for (c, col) in columns.into_iter().enumerate() {
        let Some(mv) = col? else { continue };
        for (a, v) in mv.actors.iter().zip(&mv.values) {
            let r = actors.binary_search(a).expect("actor in union");
            data[(r, c)] = *v;
        }
    }
    Ok(NodalityMatrix {
        actors,
        kinds: kinds.to_vec(),
        data,
    })
}

impl NodalityMatrix {
    /// CSV with `actor_id` then one column per [`column_names`](Self::column_names).
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["actor_id".to_string()];
        header.extend(self.column_names());
        out.write_record(&header)?;
        for (i, a) in self.actors.iter().enumerate() {
            let mut rec = vec![a.clone()];
            rec.extend(self.data.row(i).iter().map(|v| v.to_string()));
            out.write_record(&rec)?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        let cols: Vec<&str> = header.iter().skip(1).collect();
        if header.get(0) != Some("actor_id") || cols.is_empty() || cols.len() % 2 != 0 {
            return Err(Error::invalid("metric table needs actor_id and paired topic/null columns"));
        }
        let m = cols.len() / 2;
        let mut kinds = Vec::with_capacity(m);
        for (j, c) in cols.iter().enumerate() {
            let (name, side) = c
                .split_once('@')
                .ok_or_else(|| Error::invalid(format!("bad metric column `{c}`")))?;
            let want = if j < m { "topic" } else { "null" };
            let kind: MetricKind = name.parse()?;
            if side != want || (j >= m && kinds[j - m] != kind) {
                return Err(Error::invalid(format!("unexpected metric column `{c}`")));
            }
            if j < m {
                kinds.push(kind);
            }
        }
        let mut actors = Vec::new();
        let mut values = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            actors.push(rec.get(0).unwrap_or_default().to_string());
            for v in rec.iter().skip(1) {
                values.push(v.parse::<f64>().map_err(|e| Error::Schema {
                    line: line + 2,
                    message: e.to_string(),
                })?);
            }
        }
        let data = DMatrix::from_row_slice(actors.len(), 2 * m, &values);
        Ok(NodalityMatrix { actors, kinds, data })
    }
}
