//! Exhaustive search over metric subsets.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::kmeans::{cluster, KMeansConfig, Tier};
use super::pca::{eigenvector_test, pca};
use crate::centrality::{MetricKind, NodalityMatrix};
use crate::error::{Error, Result};
use crate::par;
use crate::types::{ActorId, TopicId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub kinds: Vec<MetricKind>,
    pub min_size: usize,
    pub eps: f64,
    pub kmeans: KMeansConfig,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            kinds: MetricKind::ALL.to_vec(),
            min_size: 3,
            eps: 0.01,
            kmeans: KMeansConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetResult {
    pub metrics: Vec<MetricKind>,
    pub passes: BTreeMap<TopicId, bool>,
    pub passes_all: bool,
    /// Leader-tier intersection size across topics; set only when every
    /// topic passes.
    pub leader_intersection: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CombinationReport {
    pub topics: Vec<TopicId>,
    pub evaluated: usize,
    pub subsets: Vec<SubsetResult>,
    pub selected: Option<Vec<MetricKind>>,
    pub selected_intersection: Option<usize>,
    pub shared_leaders: Vec<ActorId>,
}

impl CombinationReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// All subsets of `kinds` with at least `min_size` members, each in the
/// order of `kinds`, enumerated by size then bitmask.
pub fn subsets(kinds: &[MetricKind], min_size: usize) -> Vec<Vec<MetricKind>> {
    let p = kinds.len();
    let mut masks: Vec<u32> = (1u32..(1 << p)).filter(|m| m.count_ones() as usize >= min_size).collect();
    masks.sort_by_key(|m| (m.count_ones(), m.reverse_bits()));
    masks
        .into_iter()
        .map(|m| (0..p).filter(|b| m >> b & 1 == 1).map(|b| kinds[b]).collect())
        .collect()
}

fn sorted_names(s: &[MetricKind]) -> Vec<&'static str> {
    let mut v: Vec<_> = s.iter().map(|k| k.as_str()).collect();
    v.sort_unstable();
    v
}

/// Selection order: larger intersection first, then smaller subset, then
/// lexicographically smaller sorted metric names.
fn better(a: (&[MetricKind], usize), b: (&[MetricKind], usize)) -> bool {
    (b.1, a.0.len(), sorted_names(a.0)) < (a.1, b.0.len(), sorted_names(b.0))
}

struct Evaluated {
    result: SubsetResult,
    leaders: Vec<ActorId>,
}

fn evaluate(matrices: &BTreeMap<TopicId, NodalityMatrix>, subset: &[MetricKind], cfg: &SearchConfig) -> Result<Evaluated> {
    let mut passes = BTreeMap::new();
    let mut fits = Vec::new();
    for (topic, full) in matrices {
        let sub = full.select(subset)?;
        let ok = match pca(&sub) {
            Ok(r) => {
                let pass = eigenvector_test(&r, cfg.eps);
                if pass {
                    fits.push(r);
                }
                pass
            }
            Err(Error::ZeroVariance(_)) | Err(Error::TooFewRows { .. }) => false,
            Err(e) => return Err(e),
        };
        passes.insert(topic.clone(), ok);
    }
    let passes_all = passes.values().all(|&p| p);
    let mut leaders = Vec::new();
    let mut leader_intersection = None;
    if passes_all {
        let mut shared: Option<BTreeSet<ActorId>> = None;
        for r in &fits {
            let tiers = match cluster(r, &cfg.kmeans) {
                Ok(t) => t,
                Err(Error::TooFewDistinct { .. }) => {
                    shared = Some(BTreeSet::new());
                    break;
                }
                Err(e) => return Err(e),
            };
            let set: BTreeSet<ActorId> = tiers.members(Tier::Leader).into_iter().cloned().collect();
            shared = Some(match shared {
                None => set,
                Some(s) => s.intersection(&set).cloned().collect(),
            });
        }
        let s = shared.unwrap_or_default();
        leader_intersection = Some(s.len());
        leaders = s.into_iter().collect();
    }
    Ok(Evaluated {
        result: SubsetResult {
            metrics: subset.to_vec(),
            passes,
            passes_all,
            leader_intersection,
        },
        leaders,
    })
}

/// Runs PCA and the eigenvector test for every metric subset on every
/// topic, clusters the subsets that pass everywhere, and selects the one
/// whose leader tiers share the most actors. An empty selection is not an
/// error.
pub fn search_combinations(matrices: &BTreeMap<TopicId, NodalityMatrix>, cfg: &SearchConfig) -> Result<CombinationReport> {
    if matrices.len() < 2 {
        return Err(Error::invalid(format!("combination search needs at least 2 topics, got {}", matrices.len())));
    }
    if cfg.kinds.len() > 16 {
        return Err(Error::invalid("too many metric kinds"));
    }
    let all = subsets(&cfg.kinds, cfg.min_size);
    let evaluated = par::map(&all, |s| evaluate(matrices, s, cfg));
    let mut subsets: Vec<SubsetResult> = Vec::with_capacity(evaluated.len());
    let mut best: Option<(usize, usize)> = None;
    let mut leader_sets = Vec::with_capacity(evaluated.len());
    for (idx, e) in evaluated.into_iter().enumerate() {
        let e = e?;
        if let Some(size) = e.result.leader_intersection {
            let take = match best {
                None => true,
                Some((b, bs)) => better((&e.result.metrics, size), (&subsets[b].metrics, bs)),
            };
            if take {
                best = Some((idx, size));
            }
        }
        leader_sets.push(e.leaders);
        subsets.push(e.result);
    }
    let (selected, selected_intersection, shared_leaders) = match best {
        Some((i, size)) => (Some(subsets[i].metrics.clone()), Some(size), std::mem::take(&mut leader_sets[i])),
        None => (None, None, Vec::new()),
    };
    if selected.is_none() {
        log::warn!("no metric subset passed the eigenvector test on every topic");
    }
    Ok(CombinationReport {
        topics: matrices.keys().cloned().collect(),
        evaluated: subsets.len(),
        subsets,
        selected,
        selected_intersection,
        shared_leaders,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn binom(n: usize, k: usize) -> usize {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn subset_count() {
        let all = subsets(&MetricKind::ALL, 3);
        let expect: usize = (3..=8).map(|r| binom(8, r)).sum();
        assert_eq!(expect, 219);
        assert_eq!(all.len(), 219);
        let uniq: BTreeSet<_> = all.iter().cloned().collect();
        assert_eq!(uniq.len(), 219);
        assert!(all.windows(2).all(|w| w[0].len() <= w[1].len()));
    }

    #[test]
    fn tie_rule_prefers_smaller_then_lexicographic() {
        use MetricKind::*;
        let small = [Degree, Strength, Hub];
        let large = [Degree, Strength, Hub, Authority];
        assert!(better((&small, 5), (&large, 5)));
        assert!(!better((&large, 5), (&small, 5)));
        assert!(better((&large, 6), (&small, 5)));
        let a = [Authority, Degree, Hub];
        assert!(better((&a, 5), (&small, 5)));
    }

    #[test]
    fn needs_two_topics() {
        let m = NodalityMatrix {
            actors: vec!["a".into(), "b".into(), "c".into()],
            kinds: MetricKind::ALL.to_vec(),
            data: DMatrix::zeros(3, 16),
        };
        let one: BTreeMap<_, _> = [("t".to_string(), m)].into();
        assert!(search_combinations(&one, &SearchConfig::default()).is_err());
    }

    #[test]
    fn constant_columns_fail_rather_than_abort() {
        let m = NodalityMatrix {
            actors: (0..5).map(|i| format!("a{i}")).collect(),
            kinds: MetricKind::ALL.to_vec(),
            data: DMatrix::zeros(5, 16),
        };
        let two: BTreeMap<_, _> = [("t1".to_string(), m.clone()), ("t2".to_string(), m)].into();
        let r = search_combinations(&two, &SearchConfig::default()).unwrap();
        assert_eq!(r.evaluated, 219);
        assert!(r.selected.is_none());
        assert!(r.subsets.iter().all(|s| !s.passes_all));
    }
}
