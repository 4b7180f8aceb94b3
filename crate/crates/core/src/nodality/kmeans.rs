//! k-means with k-means++ seeding and tiering by first coordinate.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::pca::PcaResult;
use crate::error::{Error, Result};
use crate::par;
use crate::types::ActorId;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub restarts: usize,
    pub max_iter: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            k: 3,
            seed: 42,
            restarts: 100,
            max_iter: 300,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansFit {
    pub labels: Vec<usize>,
    pub centroids: Vec<[f64; 2]>,
    pub wcss: f64,
}

fn dist2(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn nearest(p: &[f64; 2], centroids: &[[f64; 2]]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, q) in centroids.iter().enumerate() {
        let d = dist2(p, q);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn distinct_count(points: &[[f64; 2]]) -> usize {
    let mut v: Vec<(u64, u64)> = points
        .iter()
        .map(|p| ((p[0] + 0.0).to_bits(), (p[1] + 0.0).to_bits()))
        .collect();
    v.sort_unstable();
    v.dedup();
    v.len()
}

fn plus_plus(points: &[[f64; 2]], k: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)]];
    let mut d: Vec<f64> = points.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &w) in d.iter().enumerate() {
                if r < w {
                    idx = i;
                    break;
                }
                r -= w;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        let c = points[pick];
        for (di, p) in d.iter_mut().zip(points) {
            *di = di.min(dist2(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn lloyd(points: &[[f64; 2]], mut centroids: Vec<[f64; 2]>, max_iter: usize) -> KMeansFit {
    let k = centroids.len();
    let mut labels = vec![usize::MAX; points.len()];
    for _ in 0..max_iter {
        let mut changed = false;
        for (l, p) in labels.iter_mut().zip(points) {
            let (c, _) = nearest(p, &centroids);
            if *l != c {
                *l = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![[0.0; 2]; k];
        let mut counts = vec![0usize; k];
        for (&l, p) in labels.iter().zip(points) {
            sums[l][0] += p[0];
            sums[l][1] += p[1];
            counts[l] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = [sums[c][0] / counts[c] as f64, sums[c][1] / counts[c] as f64];
            } else {
                // empty cluster: move it onto the worst-served point
                let far = points
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (i, dist2(p, &centroids[labels[i]])))
                    .fold((0, -1.0), |b, x| if x.1 > b.1 { x } else { b })
                    .0;
                centroids[c] = points[far];
                labels[far] = c;
            }
        }
    }
    let wcss = labels.iter().zip(points).map(|(&l, p)| dist2(p, &centroids[l])).sum();
    KMeansFit { labels, centroids, wcss }
}

/// Best of `cfg.restarts` k-means++ runs by within-cluster sum of squares.
/// Restart `r` is seeded with `cfg.seed + r`; ties keep the lowest `r`.
pub fn kmeans(points: &[[f64; 2]], cfg: &KMeansConfig) -> Result<KMeansFit> {
    let got = distinct_count(points);
    if cfg.k == 0 || got < cfg.k {
        return Err(Error::TooFewDistinct { k: cfg.k, got });
    }
    let restarts = cfg.restarts.max(1);
    let fits = par::map_range(restarts, |r| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(r as u64));
        let init = plus_plus(points, cfg.k, &mut rng);
        lloyd(points, init, cfg.max_iter.max(1))
    });
    let mut best: Option<KMeansFit> = None;
    for f in fits {
        if best.as_ref().is_none_or(|b| f.wcss < b.wcss) {
            best = Some(f);
        }
    }
    Ok(best.expect("at least one restart"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Leader,
    Funneler,
    Receiver,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::Leader, Tier::Funneler, Tier::Receiver];

    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Leader => "leader",
            Tier::Funneler => "funneler",
            Tier::Receiver => "receiver",
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tier {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Tier::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown tier `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TierAssignment {
    pub tiers: BTreeMap<ActorId, Tier>,
    /// Leader, funneler, receiver centroids in `(PC1, PC2)`.
    pub centroids: Vec<[f64; 2]>,
    pub wcss: f64,
}

impl TierAssignment {
    pub fn tier_of(&self, actor: &str) -> Option<Tier> {
        self.tiers.get(actor).copied()
    }

    pub fn members(&self, tier: Tier) -> Vec<&ActorId> {
        self.tiers.iter().filter(|(_, t)| **t == tier).map(|(a, _)| a).collect()
    }
}

/// Three tiers from k-means on `(PC1, PC2)`, ordered by descending centroid PC1.
pub fn cluster(result: &PcaResult, cfg: &KMeansConfig) -> Result<TierAssignment> {
    cluster_points(&result.actors, &result.coordinates(), cfg)
}

pub fn cluster_points(actors: &[ActorId], points: &[[f64; 2]], cfg: &KMeansConfig) -> Result<TierAssignment> {
    if cfg.k != 3 {
        return Err(Error::invalid(format!("tiering needs k = 3, got {}", cfg.k)));
    }
    if actors.len() != points.len() {
        return Err(Error::LengthMismatch(actors.len(), points.len()));
    }
    let fit = kmeans(points, cfg)?;
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| fit.centroids[b][0].total_cmp(&fit.centroids[a][0]));
    let mut rank = [0usize; 3];
    for (r, &c) in order.iter().enumerate() {
        rank[c] = r;
    }
    let tiers = actors
        .iter()
        .zip(&fit.labels)
        .map(|(a, &l)| (a.clone(), Tier::ALL[rank[l]]))
        .collect();
    Ok(TierAssignment {
        tiers,
        centroids: order.iter().map(|&c| fit.centroids[c]).collect(),
        wcss: fit.wcss,
    })
}
