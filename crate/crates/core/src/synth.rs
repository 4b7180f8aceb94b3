//! Synthetic event streams with planted tiers, topic specialists and
//! lagged activity coupling.
//!
//! Each tier shares a daily on/off state. Leaders draw theirs fresh every
//! day; funnelers copy the leaders' previous-day state with probability
//! `coupling`, receivers copy the funnelers' the same way. An actor's daily
//! initiations are Poisson with a rate scaled by that state, and the author
//! of each interaction is drawn in proportion to tier attention weight,
//! boosted for specialists on their own topic.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{LogNormal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{write_events, write_roster, Actor, ActorKind, InteractionEvent, InteractionKind, Role};
use crate::nodality::Tier;
use crate::types::{day_start, ActorId, TopicId, SECONDS_PER_DAY};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TierSpec {
    pub count: usize,
    /// Relative chance of being picked as the author others interact with.
    pub attention: f64,
    /// Mean initiations per actor per day.
    pub rate: f64,
    /// Log-normal follower count parameters (of the natural log).
    pub follower_mu: f64,
    pub follower_sigma: f64,
    /// Share of the tier that are MPs; the rest are journalists.
    pub mp_share: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub start: NaiveDate,
    pub days: u32,
    pub topics: Vec<TopicId>,
    pub leader: TierSpec,
    pub funneler: TierSpec,
    pub receiver: TierSpec,
    /// Probability that a tier's daily state copies its driver's previous day.
    pub coupling: f64,
    /// Activity multiplier is `1 + amplitude` when on and `1 - amplitude` when off.
    pub amplitude: f64,
    /// Probability an event carries a topic label.
    pub topic_share: f64,
    pub specialist_share: f64,
    /// Attention multiplier for specialists on their topic; specialists also
    /// pick their own topic this much more often.
    pub specialist_boost: f64,
    /// Retweet, mention, reply probabilities.
    pub kind_mix: [f64; 3],
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 42,
            start: NaiveDate::from_ymd_opt(2022, 1, 3).expect("valid date"),
            days: 168,
            topics: ["crisis", "energy", "health", "economy"].map(String::from).to_vec(),
            leader: TierSpec {
                count: 60,
                attention: 10.0,
                rate: 3.0,
                follower_mu: 12.0,
                follower_sigma: 0.5,
                mp_share: 0.5,
            },
            funneler: TierSpec {
                count: 180,
                attention: 3.0,
                rate: 1.0,
                follower_mu: 10.5,
                follower_sigma: 0.5,
                mp_share: 0.5,
            },
            receiver: TierSpec {
                count: 360,
                attention: 1.0,
                rate: 0.5,
                follower_mu: 9.0,
                follower_sigma: 0.5,
                mp_share: 0.5,
            },
            coupling: 0.8,
            amplitude: 0.9,
            topic_share: 0.8,
            specialist_share: 0.2,
            specialist_boost: 1.5,
            kind_mix: [0.6, 0.25, 0.15],
        }
    }
}

impl SynthConfig {
    pub fn tier(&self, t: Tier) -> &TierSpec {
        match t {
            Tier::Leader => &self.leader,
            Tier::Funneler => &self.funneler,
            Tier::Receiver => &self.receiver,
        }
    }

    pub fn actor_count(&self) -> usize {
        Tier::ALL.iter().map(|&t| self.tier(t).count).sum()
    }

    /// Share of authorship a tier gets when nobody specialises.
    pub fn attention_share(&self, t: Tier) -> f64 {
        let w = |t: Tier| self.tier(t).count as f64 * self.tier(t).attention;
        w(t) / Tier::ALL.iter().map(|&x| w(x)).sum::<f64>()
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        prob("coupling", self.coupling)?;
        prob("amplitude", self.amplitude)?;
        prob("topic_share", self.topic_share)?;
        prob("specialist_share", self.specialist_share)?;
        for (name, t) in [("leader", &self.leader), ("funneler", &self.funneler), ("receiver", &self.receiver)] {
            if t.count == 0 {
                return Err(Error::Config(format!("{name}.count must be positive")));
            }
            if !(t.attention > 0.0 && t.rate > 0.0 && t.follower_sigma >= 0.0 && t.follower_mu.is_finite()) {
                return Err(Error::Config(format!("{name}: attention and rate must be positive")));
            }
            prob(&format!("{name}.mp_share"), t.mp_share)?;
        }
        if !(self.specialist_boost >= 1.0) {
            return Err(Error::Config("specialist_boost must be at least 1".into()));
        }
        if self.kind_mix.iter().any(|&p| !(p >= 0.0)) || self.kind_mix.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Config("kind_mix needs nonnegative weights with a positive sum".into()));
        }
        if self.days < 2 {
            return Err(Error::Config("days must be at least 2".into()));
        }
        let uniq: BTreeSet<_> = self.topics.iter().collect();
        if self.topics.is_empty() || uniq.len() != self.topics.len() {
            return Err(Error::Config("topics must be nonempty and distinct".into()));
        }
        if self.actor_count() < 2 {
            return Err(Error::Config("need at least 2 actors".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SynthConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SynthConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// TOML or JSON, picked by file extension.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json(&text),
            _ => Self::from_toml(&text),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthRow {
    pub actor_id: ActorId,
    pub tier: Tier,
    pub specialist_topic: Option<TopicId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthOutput {
    pub events: Vec<InteractionEvent>,
    pub roster: Vec<Actor>,
    pub truth: Vec<TruthRow>,
    /// Daily on/off state per tier, in `Tier::ALL` order.
    pub states: [Vec<bool>; 3],
}

impl SynthOutput {
    pub fn truth_map(&self) -> BTreeMap<ActorId, Tier> {
        self.truth.iter().map(|t| (t.actor_id.clone(), t.tier)).collect()
    }

    pub fn write_truth_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["actor_id", "tier", "specialist_topic"])?;
        for t in &self.truth {
            out.write_record([t.actor_id.as_str(), t.tier.as_str(), t.specialist_topic.as_deref().unwrap_or("")])?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Writes `events.jsonl`, `roster.csv` and `truth.csv` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let create = |name: &str| {
            let p = dir.join(name);
            std::fs::File::create(&p).map(std::io::BufWriter::new).map_err(|e| Error::io(p, e))
        };
        write_events(create("events.jsonl")?, &self.events)?;
        write_roster(create("roster.csv")?, &self.roster)?;
        self.write_truth_csv(create("truth.csv")?)?;
        Ok(())
    }
}

struct Planted {
    tier: Tier,
    specialist: Option<usize>,
}

fn make_actors(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<(Vec<Actor>, Vec<Planted>)> {
    let mut slots: Vec<Tier> = Tier::ALL
        .iter()
        .flat_map(|&t| std::iter::repeat_n(t, cfg.tier(t).count))
        .collect();
    slots.shuffle(rng);
    let mut actors = Vec::with_capacity(slots.len());
    let mut planted = Vec::with_capacity(slots.len());
    for (i, tier) in slots.into_iter().enumerate() {
        let spec = cfg.tier(tier);
        let followers = LogNormal::new(spec.follower_mu, spec.follower_sigma)
            .map_err(|e| Error::Config(e.to_string()))?
            .sample(rng);
        let is_mp = rng.random_bool(spec.mp_share);
        let government = rng.random_bool(0.5);
        let (kind, role, party) = if is_mp {
            let role = match (tier == Tier::Leader, government) {
                (true, true) => Role::Cabinet,
                (true, false) => Role::ShadowCabinet,
                (false, true) => Role::GovernmentBackbench,
                (false, false) => Role::OppositionBackbench,
            };
            let party = if government { "Government" } else { "Opposition" };
            (ActorKind::Mp, role, Some(party.to_string()))
        } else {
            (ActorKind::Journalist, Role::Journalist, None)
        };
        let specialist = if rng.random_bool(cfg.specialist_share) {
            Some(rng.random_range(0..cfg.topics.len()))
        } else {
            None
        };
        actors.push(Actor {
            actor_id: format!("a{:04}", i + 1),
            display_name: format!("Actor {}", i + 1),
            kind,
            role,
            party,
            follower_count: followers.round().max(1.0) as u64,
        });
        planted.push(Planted { tier, specialist });
    }
    Ok((actors, planted))
}

fn tier_states(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> [Vec<bool>; 3] {
    let days = cfg.days as usize;
    let mut s: [Vec<bool>; 3] = [vec![false; days], vec![false; days], vec![false; days]];
    for d in 0..days {
        s[0][d] = rng.random_bool(0.5);
        for k in 1..3 {
            s[k][d] = if d > 0 && rng.random_bool(cfg.coupling) {
                s[k - 1][d - 1]
            } else {
                rng.random_bool(0.5)
            };
        }
    }
    s
}

fn tier_index(t: Tier) -> usize {
    Tier::ALL.iter().position(|&x| x == t).expect("tier listed")
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (roster, planted) = make_actors(cfg, &mut rng)?;
    let states = tier_states(cfg, &mut rng);
    let n = roster.len();
    let m = cfg.topics.len();

    let attention: Vec<f64> = planted.iter().map(|p| cfg.tier(p.tier).attention).collect();
    let weights_for = |topic: Option<usize>| -> Result<WeightedIndex<f64>> {
        let w = planted.iter().zip(&attention).map(|(p, &a)| match (topic, p.specialist) {
            (Some(t), Some(s)) if t == s => a * cfg.specialist_boost,
            _ => a,
        });
        WeightedIndex::new(w).map_err(|e| Error::Config(e.to_string()))
    };
    let unlabelled = weights_for(None)?;
    let by_topic: Vec<WeightedIndex<f64>> = (0..m).map(|t| weights_for(Some(t))).collect::<Result<_>>()?;
    let topic_pick: Vec<WeightedIndex<f64>> = planted
        .iter()
        .map(|p| {
            let w = (0..m).map(|t| if p.specialist == Some(t) { cfg.specialist_boost } else { 1.0 });
            WeightedIndex::new(w).map_err(|e| Error::Config(e.to_string()))
        })
        .collect::<Result<_>>()?;
    let kinds = WeightedIndex::new(cfg.kind_mix).map_err(|e| Error::Config(e.to_string()))?;
    let kind_of = [InteractionKind::Retweet, InteractionKind::Mention, InteractionKind::Reply];

    let day0 = day_start(cfg.start);
    let mut events = Vec::new();
    for d in 0..cfg.days as usize {
        let mut today = Vec::new();
        for (j, p) in planted.iter().enumerate() {
            let on = states[tier_index(p.tier)][d];
            let scale = if on { 1.0 + cfg.amplitude } else { 1.0 - cfg.amplitude };
            let lambda = cfg.tier(p.tier).rate * scale;
            if lambda <= 0.0 {
                continue;
            }
            let count = Poisson::new(lambda).map_err(|e| Error::Config(e.to_string()))?.sample(&mut rng) as u64;
            for _ in 0..count {
                let topic = if rng.random_bool(cfg.topic_share) {
                    Some(topic_pick[j].sample(&mut rng))
                } else {
                    None
                };
                let pick = topic.map_or(&unlabelled, |t| &by_topic[t]);
                let mut i = pick.sample(&mut rng);
                while i == j && n > 1 {
                    i = pick.sample(&mut rng);
                }
                let ts = day0 + d as i64 * SECONDS_PER_DAY + rng.random_range(0..SECONDS_PER_DAY);
                today.push(InteractionEvent {
                    event_id: String::new(),
                    source: roster[i].actor_id.clone(),
                    target: roster[j].actor_id.clone(),
                    kind: kind_of[kinds.sample(&mut rng)],
                    timestamp: ts,
                    topics: topic.map(|t| cfg.topics[t].clone()).into_iter().collect(),
                    text_ref: None,
                });
            }
        }
        today.sort_by(|a, b| (a.timestamp, &a.target, &a.source).cmp(&(b.timestamp, &b.target, &b.source)));
        events.extend(today);
    }
    for (k, e) in events.iter_mut().enumerate() {
        e.event_id = format!("e{:07}", k + 1);
    }
    let truth = roster
        .iter()
        .zip(&planted)
        .map(|(a, p)| TruthRow {
            actor_id: a.actor_id.clone(),
            tier: p.tier,
            specialist_topic: p.specialist.map(|t| cfg.topics[t].clone()),
        })
        .collect();
    Ok(SynthOutput {
        events,
        roster,
        truth,
        states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        let mut c = SynthConfig::default();
        c.days = 28;
        c.leader.count = 10;
        c.funneler.count = 30;
        c.receiver.count = 60;
        c
    }

    #[test]
    fn same_seed_same_stream() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a, b);
        let mut other = small();
        other.seed = 7;
        assert_ne!(generate(&other).unwrap().events, a.events);
    }

    #[test]
    fn shape_and_validity() {
        let cfg = small();
        let out = generate(&cfg).unwrap();
        assert_eq!(out.roster.len(), 100);
        assert_eq!(out.truth.iter().filter(|t| t.tier == Tier::Leader).count(), 10);
        let ids: BTreeSet<_> = out.roster.iter().map(|a| a.actor_id.as_str()).collect();
        let end = day_start(cfg.start) + i64::from(cfg.days) * SECONDS_PER_DAY;
        for e in &out.events {
            assert_ne!(e.source, e.target);
            assert!(ids.contains(e.source.as_str()) && ids.contains(e.target.as_str()));
            assert!(e.timestamp >= day_start(cfg.start) && e.timestamp < end);
            assert!(e.topics.len() <= 1);
        }
        assert!(out.events.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
        for a in &out.roster {
            if a.kind == ActorKind::Journalist {
                assert_eq!(a.role, Role::Journalist);
            }
        }
    }

    #[test]
    fn leader_share_matches_configuration() {
        let mut cfg = SynthConfig::default();
        cfg.specialist_share = 0.0;
        cfg.days = 28;
        let out = generate(&cfg).unwrap();
        assert!(out.events.len() >= 10_000);
        let truth = out.truth_map();
        let lead = out.events.iter().filter(|e| truth[&e.source] == Tier::Leader).count() as f64;
        let share = lead / out.events.len() as f64;
        let want = cfg.attention_share(Tier::Leader);
        assert!((share - want).abs() < 0.05 * want, "{share} vs {want}");
    }

    #[test]
    fn coupling_copies_driver_state() {
        let mut cfg = small();
        cfg.days = 400;
        cfg.coupling = 1.0;
        let out = generate(&cfg).unwrap();
        for d in 1..400 {
            assert_eq!(out.states[1][d], out.states[0][d - 1]);
            assert_eq!(out.states[2][d], out.states[1][d - 1]);
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = small();
        c.coupling = 1.5;
        assert!(generate(&c).is_err());
        let mut c = small();
        c.leader.rate = 0.0;
        assert!(c.validate().is_err());
        let mut c = small();
        c.topics = vec!["a".into(), "a".into()];
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_text_round_trip() {
        let cfg = small();
        let toml_text = toml::to_string(&cfg).unwrap();
        assert_eq!(SynthConfig::from_toml(&toml_text).unwrap(), cfg);
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(SynthConfig::from_json(&json).unwrap(), cfg);
        let partial = SynthConfig::from_toml("seed = 9\ncoupling = 0.0\n").unwrap();
        assert_eq!(partial.seed, 9);
        assert_eq!(partial.leader, SynthConfig::default().leader);
    }

    #[test]
    fn output_files() {
        let dir = tempfile::tempdir().unwrap();
        let out = generate(&small()).unwrap();
        out.write_dir(dir.path()).unwrap();
        let roster = crate::ingest::load_roster(std::fs::File::open(dir.path().join("roster.csv")).unwrap()).unwrap();
        assert_eq!(roster, out.roster);
        let text = std::fs::read_to_string(dir.path().join("events.jsonl")).unwrap();
        let parsed = crate::ingest::parse_events(text.as_bytes(), Default::default()).unwrap();
        assert!(parsed.errors.is_empty());
        assert_eq!(parsed.events, out.events);
    }
}
