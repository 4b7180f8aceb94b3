//! Event logs, actor rosters and follower counts.
//!
//! Edge convention: `source` is the author of the original content and
//! `target` is the actor who interacted with it (retweeted, mentioned or
//! replied). The interaction becomes an edge `source -> target`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{format_timestamp, parse_timestamp, ActorId, TopicId, Window};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionKind {
    Retweet,
    Mention,
    Reply,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InteractionEvent {
    pub event_id: String,
    pub source: ActorId,
    pub target: ActorId,
    pub kind: InteractionKind,
    pub timestamp: i64,
    pub topics: BTreeSet<TopicId>,
    pub text_ref: Option<String>,
}

impl InteractionEvent {
    pub fn has_topic(&self, topic: &str) -> bool {
        self.topics.contains(topic)
    }
}

/// One line of the event log.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EventRecord {
    event_id: String,
    source: String,
    target: String,
    kind: InteractionKind,
    ts: String,
    #[serde(default)]
    topics: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text_ref: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

#[derive(Clone, Debug, Default)]
pub struct ParseReport {
    pub events: Vec<InteractionEvent>,
    pub errors: Vec<LineError>,
    /// Line numbers of self-interactions that were excluded.
    pub self_interactions: Vec<usize>,
    pub out_of_window: usize,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ParseOptions {
    pub window: Option<Window>,
}

/// Parses a line-delimited event log. Malformed lines go to the error report;
/// only I/O failures abort.
pub fn parse_events<R: BufRead>(reader: R, opts: ParseOptions) -> Result<ParseReport> {
    let mut report = ParseReport::default();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io("<event stream>", e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        match parse_event_line(trimmed) {
            Ok(ev) => {
                if ev.source == ev.target {
                    log::debug!("line {lineno}: self-interaction by `{}` excluded", ev.source);
                    report.self_interactions.push(lineno);
                    continue;
                }
                if let Some(w) = opts.window {
                    if !w.contains(ev.timestamp) {
                        report.out_of_window += 1;
                        continue;
                    }
                }
                report.events.push(ev);
            }
            Err(message) => report.errors.push(LineError {
                line: lineno,
                message,
            }),
        }
    }
    if !report.self_interactions.is_empty() {
        log::info!(
            "excluded {} self-interaction(s)",
            report.self_interactions.len()
        );
    }
    Ok(report)
}

fn parse_event_line(line: &str) -> std::result::Result<InteractionEvent, String> {
    let rec: EventRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if rec.event_id.is_empty() || rec.source.is_empty() || rec.target.is_empty() {
        return Err("event_id, source and target must be nonempty".into());
    }
    let timestamp = parse_timestamp(&rec.ts).map_err(|e| e.to_string())?;
    Ok(InteractionEvent {
        event_id: rec.event_id,
        source: rec.source,
        target: rec.target,
        kind: rec.kind,
        timestamp,
        topics: rec.topics.into_iter().collect(),
        text_ref: rec.text_ref,
    })
}

pub fn write_events<W: Write>(mut w: W, events: &[InteractionEvent]) -> Result<()> {
    for ev in events {
        let rec = EventRecord {
            event_id: ev.event_id.clone(),
            source: ev.source.clone(),
            target: ev.target.clone(),
            kind: ev.kind,
            ts: format_timestamp(ev.timestamp),
            topics: ev.topics.iter().cloned().collect(),
            text_ref: ev.text_ref.clone(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n").map_err(|e| Error::io("<event sink>", e))?;
    }
    Ok(())
}

/// Drops events whose source or target is not rostered. Returns the number dropped.
pub fn filter_to_roster(events: &mut Vec<InteractionEvent>, roster: &[Actor]) -> usize {
    let ids: HashSet<&str> = roster.iter().map(|a| a.actor_id.as_str()).collect();
    let before = events.len();
    events.retain(|e| ids.contains(e.source.as_str()) && ids.contains(e.target.as_str()));
    let dropped = before - events.len();
    if dropped > 0 {
        log::warn!("dropped {dropped} event(s) referencing actors outside the roster");
    }
    dropped
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorKind {
    Mp,
    Journalist,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Cabinet,
    ShadowCabinet,
    GovernmentBackbench,
    OppositionBackbench,
    Journalist,
}

impl FromStr for ActorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mp" => Ok(ActorKind::Mp),
            "journalist" => Ok(ActorKind::Journalist),
            other => Err(Error::invalid(format!("unknown actor kind `{other}`"))),
        }
    }
}

impl FromStr for Role {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cabinet" => Ok(Role::Cabinet),
            "shadow_cabinet" => Ok(Role::ShadowCabinet),
            "government_backbench" => Ok(Role::GovernmentBackbench),
            "opposition_backbench" => Ok(Role::OppositionBackbench),
            "journalist" => Ok(Role::Journalist),
            other => Err(Error::invalid(format!("unknown role `{other}`"))),
        }
    }
}

impl ActorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ActorKind::Mp => "mp",
            ActorKind::Journalist => "journalist",
        }
    }
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Cabinet => "cabinet",
            Role::ShadowCabinet => "shadow_cabinet",
            Role::GovernmentBackbench => "government_backbench",
            Role::OppositionBackbench => "opposition_backbench",
            Role::Journalist => "journalist",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Actor {
    pub actor_id: ActorId,
    pub display_name: String,
    pub kind: ActorKind,
    pub role: Role,
    pub party: Option<String>,
    pub follower_count: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct RosterRow {
    actor_id: String,
    display_name: String,
    kind: String,
    role: String,
    #[serde(default)]
    party: Option<String>,
    follower_count: u64,
}

pub fn load_roster<R: Read>(reader: R) -> Result<Vec<Actor>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (idx, row) in rdr.deserialize::<RosterRow>().enumerate() {
        // header is line 1
        let line = idx + 2;
        let row = row.map_err(|e| Error::Schema {
            line,
            message: e.to_string(),
        })?;
        let schema = |e: Error| Error::Schema {
            line,
            message: e.to_string(),
        };
        let kind: ActorKind = row.kind.parse().map_err(schema)?;
        let role: Role = row.role.parse().map_err(schema)?;
        if (kind == ActorKind::Journalist) != (role == Role::Journalist) {
            return Err(Error::Schema {
                line,
                message: format!(
                    "actor `{}`: kind `{}` is incompatible with role `{}`",
                    row.actor_id,
                    kind.as_str(),
                    role.as_str()
                ),
            });
        }
        if !seen.insert(row.actor_id.clone()) {
            return Err(Error::DuplicateActor(row.actor_id));
        }
        out.push(Actor {
            actor_id: row.actor_id,
            display_name: row.display_name,
            kind,
            role,
            party: row.party.filter(|p| !p.is_empty()),
            follower_count: row.follower_count,
        });
    }
    Ok(out)
}

pub fn write_roster<W: Write>(w: W, roster: &[Actor]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for a in roster {
        wtr.serialize(RosterRow {
            actor_id: a.actor_id.clone(),
            display_name: a.display_name.clone(),
            kind: a.kind.as_str().to_string(),
            role: a.role.as_str().to_string(),
            party: a.party.clone(),
            follower_count: a.follower_count,
        })?;
    }
    wtr.flush().map_err(|e| Error::io("<roster sink>", e))?;
    Ok(())
}

pub type Followers = BTreeMap<ActorId, f64>;

pub fn followers_from_roster(roster: &[Actor]) -> Followers {
    roster
        .iter()
        .map(|a| (a.actor_id.clone(), a.follower_count as f64))
        .collect()
}

/// Reads any delimited table with `actor_id` and `follower_count` columns
/// (a roster file qualifies).
pub fn load_followers<R: Read>(reader: R) -> Result<Followers> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::invalid(format!("followers table lacks `{name}` column")))
    };
    let id_col = col("actor_id")?;
    let f_col = col("follower_count")?;
    let mut out = Followers::new();
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let id = rec.get(id_col).unwrap_or_default().to_string();
        let raw = rec.get(f_col).unwrap_or_default();
        let f: u64 = raw.parse().map_err(|_| Error::Schema {
            line: idx + 2,
            message: format!("bad follower_count `{raw}`"),
        })?;
        out.insert(id, f as f64);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Cabinet,
    ShadowCabinet,
    GovernmentBackbench,
    OppositionBackbench,
    ProminentJournalist,
    OtherJournalist,
}

impl Group {
    pub const ALL: [Group; 6] = [
        Group::Cabinet,
        Group::ShadowCabinet,
        Group::GovernmentBackbench,
        Group::OppositionBackbench,
        Group::ProminentJournalist,
        Group::OtherJournalist,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Group::Cabinet => "cabinet",
            Group::ShadowCabinet => "shadow_cabinet",
            Group::GovernmentBackbench => "government_backbench",
            Group::OppositionBackbench => "opposition_backbench",
            Group::ProminentJournalist => "prominent_journalist",
            Group::OtherJournalist => "other_journalist",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Actor -> group label. Group labels are free strings so the same structure
/// carries institutional groups and nodality tiers.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupAssignment {
    pub members: BTreeMap<ActorId, String>,
}

impl GroupAssignment {
    pub fn group_of(&self, actor: &str) -> Option<&str> {
        self.members.get(actor).map(String::as_str)
    }

    /// Group label -> sorted member list.
    pub fn groups(&self) -> BTreeMap<String, Vec<ActorId>> {
        let mut out: BTreeMap<String, Vec<ActorId>> = BTreeMap::new();
        for (actor, g) in &self.members {
            out.entry(g.clone()).or_default().push(actor.clone());
        }
        out
    }

    pub fn load<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut members = BTreeMap::new();
        for rec in rdr.deserialize::<(String, String)>() {
            let (actor, group) = rec?;
            if members.insert(actor.clone(), group).is_some() {
                return Err(Error::DuplicateActor(actor));
            }
        }
        Ok(GroupAssignment { members })
    }

    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["actor_id", "group"])?;
        for (a, g) in &self.members {
            wtr.write_record([a, g])?;
        }
        wtr.flush().map_err(|e| Error::io("<groups sink>", e))?;
        Ok(())
    }
}

/// Number of top-ranked journalists that make the prominent cut.
fn decile_rank(decile: f64, n: usize) -> usize {
    // guard against 0.1 * 30 = 3.0000000000000004
    let r = (decile * n as f64 - 1e-9).ceil() as usize;
    r.clamp(1, n)
}

/// Maps MPs by role and splits journalists at the follower-count decile.
/// Every journalist whose follower count is at least the count at rank
/// `ceil(decile * n)` is prominent, so ties at the boundary are all included.
pub fn assign_groups(roster: &[Actor], decile: f64) -> Result<GroupAssignment> {
    if roster.is_empty() {
        return Err(Error::invalid("roster is empty"));
    }
    if !(decile > 0.0 && decile < 1.0) {
        return Err(Error::invalid(format!("decile must lie in (0, 1), got {decile}")));
    }
    let mut journalist_counts: Vec<u64> = roster
        .iter()
        .filter(|a| a.role == Role::Journalist)
        .map(|a| a.follower_count)
        .collect();
    journalist_counts.sort_unstable_by(|a, b| b.cmp(a));
    let threshold = if journalist_counts.is_empty() {
        None
    } else {
        Some(journalist_counts[decile_rank(decile, journalist_counts.len()) - 1])
    };

    let members = roster
        .iter()
        .map(|a| {
            let g = match a.role {
                Role::Cabinet => Group::Cabinet,
                Role::ShadowCabinet => Group::ShadowCabinet,
                Role::GovernmentBackbench => Group::GovernmentBackbench,
                Role::OppositionBackbench => Group::OppositionBackbench,
                Role::Journalist => match threshold {
                    Some(t) if a.follower_count >= t => Group::ProminentJournalist,
                    _ => Group::OtherJournalist,
                },
            };
            (a.actor_id.clone(), g.as_str().to_string())
        })
        .collect();
    Ok(GroupAssignment { members })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn actor(id: &str, role: Role, followers: u64) -> Actor {
        Actor {
            actor_id: id.into(),
            display_name: id.to_uppercase(),
            kind: if role == Role::Journalist {
                ActorKind::Journalist
            } else {
                ActorKind::Mp
            },
            role,
            party: None,
            follower_count: followers,
        }
    }

    const LINE: &str = r#"{"event_id":"e1","source":"a","target":"b","kind":"retweet","ts":"2022-01-14T10:00:00Z","topics":["col"]}"#;

    #[test]
    fn parses_single_retweet() {
        let r = parse_events(LINE.as_bytes(), ParseOptions::default()).unwrap();
        assert_eq!(r.events.len(), 1);
        assert_eq!(r.events[0].kind, InteractionKind::Retweet);
        assert!(r.events[0].has_topic("col"));
        assert!(r.errors.is_empty());
    }

    #[test]
    fn empty_stream() {
        let r = parse_events(&b""[..], ParseOptions::default()).unwrap();
        assert!(r.events.is_empty() && r.errors.is_empty());
    }

    #[test]
    fn malformed_lines_are_reported_with_line_numbers() {
        let input = format!("{LINE}\nnot json\n{{\"event_id\":\"e2\"}}\n");
        let r = parse_events(input.as_bytes(), ParseOptions::default()).unwrap();
        assert_eq!(r.events.len(), 1);
        let lines: Vec<usize> = r.errors.iter().map(|e| e.line).collect();
        assert_eq!(lines, vec![2, 3]);
    }

    #[test]
    fn self_interactions_and_out_of_window_are_excluded() {
        let input = concat!(
            r#"{"event_id":"e1","source":"a","target":"a","kind":"reply","ts":"2022-01-14T10:00:00Z","topics":[]}"#,
            "\n",
            r#"{"event_id":"e2","source":"a","target":"b","kind":"reply","ts":"2021-01-14T10:00:00Z","topics":[]}"#,
            "\n",
            r#"{"event_id":"e3","source":"b","target":"a","kind":"mention","ts":"2022-01-15T10:00:00Z","topics":[]}"#,
        );
        let window = Window::from_days(crate::types::parse_date("2022-01-14").unwrap(), 7).unwrap();
        let r = parse_events(input.as_bytes(), ParseOptions { window: Some(window) }).unwrap();
        assert_eq!(r.self_interactions, vec![1]);
        assert_eq!(r.out_of_window, 1);
        assert_eq!(r.events.len(), 1);
        assert_eq!(r.events[0].event_id, "e3");
    }

    #[test]
    fn roster_loads_and_validates() {
        let ok = "actor_id,display_name,kind,role,party,follower_count\n\
                  a,A,mp,cabinet,Con,100\nb,B,mp,opposition_backbench,Lab,5\nc,C,journalist,journalist,,7\n";
        let r = load_roster(ok.as_bytes()).unwrap();
        assert_eq!(r.len(), 3);
        assert_eq!(r[2].party, None);

        let dup = "actor_id,display_name,kind,role,party,follower_count\n\
                   a,A,mp,cabinet,Con,100\na,A2,mp,cabinet,Con,1\n";
        match load_roster(dup.as_bytes()) {
            Err(Error::DuplicateActor(id)) => assert_eq!(id, "a"),
            other => panic!("expected duplicate error, got {other:?}"),
        }

        let bad = "actor_id,display_name,kind,role,party,follower_count\n\
                   j,J,journalist,cabinet,,10\n";
        assert!(matches!(load_roster(bad.as_bytes()), Err(Error::Schema { line: 2, .. })));

        let unknown = "actor_id,display_name,kind,role,party,follower_count\n\
                       j,J,mp,whip,,10\n";
        assert!(load_roster(unknown.as_bytes()).is_err());
    }

    #[test]
    fn decile_split_takes_top_journalist() {
        let roster: Vec<Actor> = (1..=10)
            .map(|f| actor(&format!("j{f:02}"), Role::Journalist, f))
            .collect();
        let g = assign_groups(&roster, 0.1).unwrap();
        let prominent: Vec<_> = g
            .members
            .iter()
            .filter(|(_, g)| *g == "prominent_journalist")
            .map(|(a, _)| a.as_str())
            .collect();
        assert_eq!(prominent, vec!["j10"]);
    }

    #[test]
    fn decile_ties_are_inclusive() {
        let mut roster: Vec<Actor> = (1..=8)
            .map(|f| actor(&format!("j{f}"), Role::Journalist, f))
            .collect();
        roster.push(actor("x", Role::Journalist, 50));
        roster.push(actor("y", Role::Journalist, 50));
        let g = assign_groups(&roster, 0.1).unwrap();
        assert_eq!(g.group_of("x"), Some("prominent_journalist"));
        assert_eq!(g.group_of("y"), Some("prominent_journalist"));
        assert_eq!(g.group_of("j8"), Some("other_journalist"));
    }

    #[test]
    fn mp_only_roster_has_no_journalist_groups() {
        let roster = vec![
            actor("a", Role::Cabinet, 1),
            actor("b", Role::ShadowCabinet, 1),
            actor("c", Role::GovernmentBackbench, 1),
        ];
        let g = assign_groups(&roster, 0.1).unwrap();
        assert!(g.groups().keys().all(|k| !k.contains("journalist")));
        assert_eq!(g.members.len(), 3);
    }

    #[test]
    fn bad_decile_and_empty_roster() {
        assert!(assign_groups(&[], 0.1).is_err());
        let r = vec![actor("a", Role::Cabinet, 1)];
        assert!(assign_groups(&r, 0.0).is_err());
        assert!(assign_groups(&r, 1.0).is_err());
    }

    fn arb_event() -> impl Strategy<Value = InteractionEvent> {
        (
            "[a-z0-9]{1,8}",
            "[a-e]",
            "[f-j]",
            0..3u8,
            0i64..2_000_000_000,
            proptest::collection::btree_set("[a-z]{1,5}", 0..3),
            proptest::option::of("[a-z0-9]{1,6}"),
        )
            .prop_map(|(id, s, t, k, ts, topics, text_ref)| InteractionEvent {
                event_id: id,
                source: s,
                target: t,
                kind: [InteractionKind::Retweet, InteractionKind::Mention, InteractionKind::Reply]
                    [k as usize],
                timestamp: ts,
                topics,
                text_ref,
            })
    }

    proptest! {
        #[test]
        fn event_log_round_trips(events in proptest::collection::vec(arb_event(), 0..20)) {
            let mut buf = Vec::new();
            write_events(&mut buf, &events).unwrap();
            let back = parse_events(&buf[..], ParseOptions::default()).unwrap();
            prop_assert!(back.errors.is_empty());
            prop_assert_eq!(back.events, events);
        }

        #[test]
        fn groups_partition_and_ignore_order(
            follows in proptest::collection::vec(0u64..20, 1..30),
            mps in 0usize..6,
            seed in any::<u64>(),
        ) {
            let roles = [Role::Cabinet, Role::ShadowCabinet, Role::GovernmentBackbench, Role::OppositionBackbench];
            let mut roster: Vec<Actor> = follows.iter().enumerate()
                .map(|(i, f)| actor(&format!("j{i}"), Role::Journalist, *f)).collect();
            roster.extend((0..mps).map(|i| actor(&format!("m{i}"), roles[i % 4], 0)));
            let g1 = assign_groups(&roster, 0.1).unwrap();
            prop_assert_eq!(g1.members.len(), roster.len());
            let total: usize = g1.groups().values().map(Vec::len).sum();
            prop_assert_eq!(total, roster.len());

            let mut shuffled = roster.clone();
            let n = shuffled.len();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(i, (s >> 33) as usize % (i + 1));
            }
            prop_assert_eq!(assign_groups(&shuffled, 0.1).unwrap(), g1);
        }
    }
}
