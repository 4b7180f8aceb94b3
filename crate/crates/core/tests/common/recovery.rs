//! End-to-end recovery of planted tiers from synthetic data.

use std::collections::{BTreeMap, BTreeSet};

use nodality_core::centrality::{metric_matrix, MetricKind};
use nodality_core::graph::{build_network, event_range, tile_windows, BuildOptions, NetworkKind};
use nodality_core::influence::{activities_from_events, group_influence_table, InfluenceOptions};
use nodality_core::ingest::{followers_from_roster, GroupAssignment};
use nodality_core::nodality::{cluster, pca, KMeansConfig, Tier};
use nodality_core::synth::{generate, SynthConfig, SynthOutput};

pub const SELECTED: [MetricKind; 3] = [MetricKind::Strength, MetricKind::Degree, MetricKind::FunnelBandwidth];

pub struct TopicRecovery {
    pub topic: String,
    pub precision: f64,
    pub recall: f64,
    pub tiers: GroupAssignment,
}

pub fn recover_tiers(cfg: &SynthConfig, out: &SynthOutput) -> Vec<TopicRecovery> {
    let truth = out.truth_map();
    let planted: BTreeSet<_> = truth.iter().filter(|(_, t)| **t == Tier::Leader).map(|(a, _)| a.clone()).collect();
    let followers = followers_from_roster(&out.roster);
    let range = event_range(&out.events).unwrap();
    let opts = BuildOptions::default();
    cfg.topics
        .iter()
        .map(|topic| {
            let tg = build_network(&out.events, topic, range, NetworkKind::Topic, &opts).unwrap();
            let ng = build_network(&out.events, topic, range, NetworkKind::Null, &opts).unwrap();
            let mm = metric_matrix(&tg, &ng, &SELECTED, &followers).unwrap();
            let tiers = cluster(&pca(&mm).unwrap(), &KMeansConfig::default()).unwrap();
            let found: BTreeSet<_> = tiers.members(Tier::Leader).into_iter().cloned().collect();
            let hit = found.intersection(&planted).count() as f64;
            TopicRecovery {
                topic: topic.clone(),
                precision: hit / found.len().max(1) as f64,
                recall: hit / planted.len() as f64,
                tiers: GroupAssignment {
                    members: tiers.tiers.iter().map(|(a, t)| (a.clone(), t.as_str().to_string())).collect(),
                },
            }
        })
        .collect()
}

pub fn planted_groups(out: &SynthOutput) -> GroupAssignment {
    GroupAssignment {
        members: out.truth.iter().map(|t| (t.actor_id.clone(), t.tier.as_str().to_string())).collect(),
    }
}

/// Every `phi(tier, rest)` over two-week windows, keyed by tier.
pub fn tier_phis(cfg: &SynthConfig, out: &SynthOutput, groups: &[(String, GroupAssignment)]) -> BTreeMap<Tier, Vec<f64>> {
    let windows = tile_windows(event_range(&out.events).unwrap(), 14).unwrap();
    let acts = activities_from_events(&out.events);
    let mut phis: BTreeMap<Tier, Vec<f64>> = BTreeMap::new();
    for (topic, g) in groups {
        assert!(cfg.topics.contains(topic));
        for rec in group_influence_table(&acts, g, topic, &windows, &InfluenceOptions::default()).unwrap() {
            phis.entry(rec.group.parse().unwrap()).or_default().push(rec.phi);
        }
    }
    phis
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn config(seed: u64, coupling: f64) -> SynthConfig {
    SynthConfig {
        seed,
        coupling,
        ..Default::default()
    }
}

pub fn generate_seeded(seed: u64, coupling: f64) -> (SynthConfig, SynthOutput) {
    let cfg = config(seed, coupling);
    let out = generate(&cfg).unwrap();
    (cfg, out)
}
