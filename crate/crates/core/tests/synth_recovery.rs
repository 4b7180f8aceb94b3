mod common;

use common::recovery::*;
use nodality_core::nodality::Tier;

#[test]
fn leaders_are_recovered_on_every_topic() {
    for seed in [3, 11] {
        let (cfg, out) = generate_seeded(seed, 0.8);
        for r in recover_tiers(&cfg, &out) {
            assert!(r.precision >= 0.9 && r.recall >= 0.9, "seed {seed} {}: P {} R {}", r.topic, r.precision, r.recall);
        }
    }
}

#[test]
fn uncoupled_activity_has_no_net_influence() {
    let mut all = Vec::new();
    for seed in 0..50 {
        let (cfg, out) = generate_seeded(seed, 0.0);
        let g = planted_groups(&out);
        let groups: Vec<_> = cfg.topics.iter().map(|t| (t.clone(), g.clone())).collect();
        all.extend(tier_phis(&cfg, &out, &groups).into_values().flatten());
    }
    let m = mean(&all);
    assert!(m.abs() < 0.02, "mean phi {m}");
}

#[test]
fn coupled_tiers_order_by_influence() {
    let mut means = [0.0; 3];
    for seed in 0..6 {
        let (cfg, out) = generate_seeded(seed, 0.8);
        let g = planted_groups(&out);
        let groups: Vec<_> = cfg.topics.iter().map(|t| (t.clone(), g.clone())).collect();
        let phis = tier_phis(&cfg, &out, &groups);
        for (k, t) in Tier::ALL.iter().enumerate() {
            means[k] += mean(&phis[t]) / 6.0;
        }
    }
    assert!(means[0] > means[1] && means[1] > means[2], "{means:?}");
}
