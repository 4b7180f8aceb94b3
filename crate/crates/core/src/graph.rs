//! Weighted directed discourse networks.
//!
//! An edge `i -> j` has weight `w_ij`, the number of times `j` interacted
//! with content authored by `i`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{InteractionEvent, InteractionKind};
use crate::par;
use crate::types::{ActorId, TopicId, Window, SECONDS_PER_DAY};

pub mod export;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GraphKind {
    Topic(TopicId),
    Null(TopicId),
    /// All events in the window, regardless of topic.
    Full,
}

impl fmt::Display for GraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphKind::Topic(t) => write!(f, "topic:{t}"),
            GraphKind::Null(t) => write!(f, "null:{t}"),
            GraphKind::Full => f.write_str("full"),
        }
    }
}

impl FromStr for GraphKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            Some(("topic", t)) => Ok(GraphKind::Topic(t.to_string())),
            Some(("null", t)) => Ok(GraphKind::Null(t.to_string())),
            None if s == "full" => Ok(GraphKind::Full),
            _ => Err(Error::invalid(format!("unknown graph kind `{s}`"))),
        }
    }
}

/// Which side of the topic/null split to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkKind {
    Topic,
    Null,
}

impl FromStr for NetworkKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "topic" => Ok(NetworkKind::Topic),
            "null" => Ok(NetworkKind::Null),
            other => Err(Error::invalid(format!("unknown network kind `{other}`"))),
        }
    }
}

/// Integer weight contributed by one event of each interaction kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindWeights {
    pub retweet: u64,
    pub mention: u64,
    pub reply: u64,
}

impl Default for KindWeights {
    fn default() -> Self {
        KindWeights {
            retweet: 1,
            mention: 1,
            reply: 1,
        }
    }
}

impl KindWeights {
    pub fn of(&self, kind: InteractionKind) -> u64 {
        match kind {
            InteractionKind::Retweet => self.retweet,
            InteractionKind::Mention => self.mention,
            InteractionKind::Reply => self.reply,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct BuildOptions {
    pub weights: KindWeights,
    /// When set, null networks drop events labelled with any of these topics
    /// instead of taking the strict complement.
    pub null_excludes: Option<BTreeSet<TopicId>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscourseGraph {
    pub kind: GraphKind,
    pub window: Window,
    /// Sorted actor ids; node indices refer to this order.
    nodes: Vec<ActorId>,
    /// Per node, sorted `(target, weight)` pairs.
    out: Vec<Vec<(usize, u64)>>,
    /// Per node, sorted `(source, weight)` pairs.
    inn: Vec<Vec<(usize, u64)>>,
}

impl DiscourseGraph {
    /// Builds a graph from explicit nodes and weighted edges. Edge endpoints
    /// are added as nodes; repeated edges accumulate.
    pub fn from_edges<I, S>(kind: GraphKind, window: Window, nodes: I, edges: &[(S, S, u64)]) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut names: BTreeSet<String> = nodes.into_iter().map(|s| s.as_ref().to_string()).collect();
        for (a, b, w) in edges {
            if a.as_ref() == b.as_ref() {
                return Err(Error::invalid(format!("self-loop on `{}`", a.as_ref())));
            }
            if *w == 0 {
                return Err(Error::invalid("edge weights must be >= 1"));
            }
            names.insert(a.as_ref().to_string());
            names.insert(b.as_ref().to_string());
        }
        let nodes: Vec<String> = names.into_iter().collect();
        let index: HashMap<&str, usize> = nodes.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let mut acc: BTreeMap<(usize, usize), u64> = BTreeMap::new();
        for (a, b, w) in edges {
            *acc.entry((index[a.as_ref()], index[b.as_ref()])).or_default() += w;
        }
        Ok(Self::from_indexed(kind, window, nodes, acc))
    }

    fn from_indexed(kind: GraphKind, window: Window, nodes: Vec<ActorId>, edges: BTreeMap<(usize, usize), u64>) -> Self {
        let n = nodes.len();
        let mut out = vec![Vec::new(); n];
        let mut inn = vec![Vec::new(); n];
        for ((i, j), w) in edges {
            out[i].push((j, w));
            inn[j].push((i, w));
        }
        for list in &mut inn {
            list.sort_unstable();
        }
        DiscourseGraph {
            kind,
            window,
            nodes,
            out,
            inn,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[ActorId] {
        &self.nodes
    }

    pub fn index_of(&self, actor: &str) -> Option<usize> {
        self.nodes.binary_search_by(|n| n.as_str().cmp(actor)).ok()
    }

    pub fn out_edges(&self, i: usize) -> &[(usize, u64)] {
        &self.out[i]
    }

    pub fn in_edges(&self, i: usize) -> &[(usize, u64)] {
        &self.inn[i]
    }

    /// All edges as `(source, target, weight)` in index order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        self.out
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.iter().map(move |&(j, w)| (i, j, w)))
    }

    pub fn weight(&self, i: usize, j: usize) -> u64 {
        self.out[i]
            .binary_search_by_key(&j, |&(t, _)| t)
            .map(|k| self.out[i][k].1)
            .unwrap_or(0)
    }

    pub fn total_weight(&self) -> u64 {
        self.edges().map(|(_, _, w)| w).sum()
    }

    /// Edge multiset keyed by actor names, convenient for comparisons.
    pub fn edge_map(&self) -> BTreeMap<(ActorId, ActorId), u64> {
        self.edges()
            .map(|(i, j, w)| ((self.nodes[i].clone(), self.nodes[j].clone()), w))
            .collect()
    }

    /// Subgraph induced by `keep` (indices into this graph).
    pub fn induced(&self, keep: &[usize]) -> DiscourseGraph {
        let mut sorted: Vec<usize> = keep.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        let remap: HashMap<usize, usize> = sorted.iter().enumerate().map(|(new, &old)| (old, new)).collect();
        let nodes = sorted.iter().map(|&i| self.nodes[i].clone()).collect();
        let mut edges = BTreeMap::new();
        for &i in &sorted {
            for &(j, w) in &self.out[i] {
                if let Some(&nj) = remap.get(&j) {
                    edges.insert((remap[&i], nj), w);
                }
            }
        }
        DiscourseGraph::from_indexed(self.kind.clone(), self.window, nodes, edges)
    }
}

fn accumulate<'a>(
    kind: GraphKind,
    window: Window,
    events: impl Iterator<Item = &'a InteractionEvent>,
    weights: &KindWeights,
) -> DiscourseGraph {
    let mut acc: BTreeMap<(&str, &str), u64> = BTreeMap::new();
    for ev in events {
        let w = weights.of(ev.kind);
        if w == 0 || ev.source == ev.target {
            continue;
        }
        *acc.entry((ev.source.as_str(), ev.target.as_str())).or_default() += w;
    }
    let names: BTreeSet<&str> = acc.keys().flat_map(|(a, b)| [*a, *b]).collect();
    let nodes: Vec<ActorId> = names.iter().map(|s| s.to_string()).collect();
    let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let edges = acc
        .into_iter()
        .map(|((a, b), w)| ((index[a], index[b]), w))
        .collect();
    DiscourseGraph::from_indexed(kind, window, nodes, edges)
}

fn ensure_topic_known(events: &[InteractionEvent], topic: &str) -> Result<()> {
    if events.iter().any(|e| e.has_topic(topic)) {
        Ok(())
    } else {
        Err(Error::UnknownTopic(topic.to_string()))
    }
}

fn in_null(ev: &InteractionEvent, topic: &str, opts: &BuildOptions) -> bool {
    if ev.has_topic(topic) {
        return false;
    }
    match &opts.null_excludes {
        Some(ex) => ev.topics.is_disjoint(ex),
        None => true,
    }
}

/// Topic network (events carrying `topic`) or its null network (every other
/// event in the window, unlabelled ones included).
pub fn build_network(
    events: &[InteractionEvent],
    topic: &str,
    window: Window,
    kind: NetworkKind,
    opts: &BuildOptions,
) -> Result<DiscourseGraph> {
    ensure_topic_known(events, topic)?;
    Ok(build_unchecked(events, topic, window, kind, opts))
}

fn build_unchecked(
    events: &[InteractionEvent],
    topic: &str,
    window: Window,
    kind: NetworkKind,
    opts: &BuildOptions,
) -> DiscourseGraph {
    let in_window = events.iter().filter(move |e| window.contains(e.timestamp));
    match kind {
        NetworkKind::Topic => accumulate(
            GraphKind::Topic(topic.to_string()),
            window,
            in_window.filter(|e| e.has_topic(topic)),
            &opts.weights,
        ),
        NetworkKind::Null => accumulate(
            GraphKind::Null(topic.to_string()),
            window,
            in_window.filter(|e| in_null(e, topic, opts)),
            &opts.weights,
        ),
    }
}

/// Every event in the window.
pub fn build_full(events: &[InteractionEvent], window: Window, weights: &KindWeights) -> DiscourseGraph {
    accumulate(
        GraphKind::Full,
        window,
        events.iter().filter(|e| window.contains(e.timestamp)),
        weights,
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub window: Window,
    pub topic: DiscourseGraph,
    pub null: DiscourseGraph,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotSeries {
    pub topic: TopicId,
    pub snapshots: Vec<Snapshot>,
}

impl SnapshotSeries {
    pub fn windows(&self) -> Vec<Window> {
        self.snapshots.iter().map(|s| s.window).collect()
    }
}

/// Day-aligned range covering every event: from midnight of the first
/// event's day to midnight after the last event's day.
pub fn event_range(events: &[InteractionEvent]) -> Option<Window> {
    let min = events.iter().map(|e| e.timestamp).min()?;
    let max = events.iter().map(|e| e.timestamp).max()?;
    let start = min.div_euclid(SECONDS_PER_DAY) * SECONDS_PER_DAY;
    let end = (max.div_euclid(SECONDS_PER_DAY) + 1) * SECONDS_PER_DAY;
    Some(Window { start, end })
}

/// Tiles `range` into consecutive windows of `window_len_days`, dropping a
/// trailing partial window.
pub fn tile_windows(range: Window, window_len_days: u32) -> Result<Vec<Window>> {
    if window_len_days == 0 {
        return Err(Error::invalid("window length must be at least one day"));
    }
    let len = i64::from(window_len_days) * SECONDS_PER_DAY;
    let count = range.len_seconds() / len;
    if count == 0 {
        return Err(Error::invalid(format!(
            "study range of {} day(s) is shorter than one {window_len_days}-day window",
            range.len_seconds() / SECONDS_PER_DAY
        )));
    }
    Ok((0..count)
        .map(|k| Window {
            start: range.start + k * len,
            end: range.start + (k + 1) * len,
        })
        .collect())
}

pub fn snapshot_series(
    events: &[InteractionEvent],
    topic: &str,
    window_len_days: u32,
    range: Window,
    opts: &BuildOptions,
) -> Result<SnapshotSeries> {
    ensure_topic_known(events, topic)?;
    let windows = tile_windows(range, window_len_days)?;
    let snapshots = par::map(&windows, |&w| Snapshot {
        window: w,
        topic: build_unchecked(events, topic, w, NetworkKind::Topic, opts),
        null: build_unchecked(events, topic, w, NetworkKind::Null, opts),
    });
    Ok(SnapshotSeries {
        topic: topic.to_string(),
        snapshots,
    })
}

/// Weakly connected components, each sorted; the list is ordered by the
/// smallest node index in each component.
pub fn weak_components(graph: &DiscourseGraph) -> Vec<Vec<usize>> {
    let n = graph.node_count();
    let mut comp = vec![usize::MAX; n];
    let mut out = Vec::new();
    for root in 0..n {
        if comp[root] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut members = vec![root];
        comp[root] = id;
        let mut stack = vec![root];
        while let Some(u) = stack.pop() {
            let nbrs = graph.out_edges(u).iter().chain(graph.in_edges(u)).map(|&(v, _)| v);
            for v in nbrs {
                if comp[v] == usize::MAX {
                    comp[v] = id;
                    members.push(v);
                    stack.push(v);
                }
            }
        }
        members.sort_unstable();
        out.push(members);
    }
    out
}

/// Largest weakly connected component. Equal sizes go to the component
/// holding the lexicographically smallest actor id.
pub fn giant_component(graph: &DiscourseGraph) -> DiscourseGraph {
    let comps = weak_components(graph);
    // components arrive ordered by smallest member, so the first maximum wins ties
    let best = comps.iter().fold(None::<&Vec<usize>>, |best, c| match best {
        Some(b) if b.len() >= c.len() => Some(b),
        _ => Some(c),
    });
    match best {
        Some(c) => graph.induced(c),
        None => graph.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::parse_date;
    use proptest::prelude::*;

    fn ev(id: usize, s: &str, t: &str, day: i64, topics: &[&str]) -> InteractionEvent {
        InteractionEvent {
            event_id: format!("e{id}"),
            source: s.into(),
            target: t.into(),
            kind: InteractionKind::Retweet,
            timestamp: day * SECONDS_PER_DAY + 3600,
            topics: topics.iter().map(|s| s.to_string()).collect(),
            text_ref: None,
        }
    }

    fn week() -> Window {
        Window {
            start: 0,
            end: 7 * SECONDS_PER_DAY,
        }
    }

    #[test]
    fn single_event_single_edge() {
        let evs = vec![ev(0, "A", "B", 0, &["T"])];
        let g = build_network(&evs, "T", week(), NetworkKind::Topic, &BuildOptions::default()).unwrap();
        assert_eq!(g.edge_map(), BTreeMap::from([(("A".into(), "B".into()), 1)]));
        let evs2 = vec![ev(0, "A", "B", 0, &["T"]), ev(1, "A", "B", 1, &["T"])];
        let g2 = build_network(&evs2, "T", week(), NetworkKind::Topic, &BuildOptions::default()).unwrap();
        assert_eq!(g2.weight(0, 1), 2);
        assert!(matches!(
            build_network(&evs, "X", week(), NetworkKind::Topic, &BuildOptions::default()),
            Err(Error::UnknownTopic(_))
        ));
    }

    #[test]
    fn mixed_fixture_partitions_by_event() {
        let evs = vec![
            ev(0, "A", "B", 0, &["T"]),
            ev(1, "A", "B", 1, &["U"]),
            ev(2, "B", "C", 2, &["T"]),
            ev(3, "C", "A", 3, &[]),
            ev(4, "C", "D", 4, &["U"]),
            ev(5, "D", "A", 5, &["T"]),
        ];
        let o = BuildOptions::default();
        let topic = build_network(&evs, "T", week(), NetworkKind::Topic, &o).unwrap();
        let null = build_network(&evs, "T", week(), NetworkKind::Null, &o).unwrap();
        let e = |a: &str, b: &str| (a.to_string(), b.to_string());
        assert_eq!(
            topic.edge_map(),
            BTreeMap::from([(e("A", "B"), 1), (e("B", "C"), 1), (e("D", "A"), 1)])
        );
        assert_eq!(
            null.edge_map(),
            BTreeMap::from([(e("A", "B"), 1), (e("C", "A"), 1), (e("C", "D"), 1)])
        );

        let strict = BuildOptions {
            null_excludes: Some(BTreeSet::from(["U".to_string()])),
            ..Default::default()
        };
        let null_excl = build_network(&evs, "T", week(), NetworkKind::Null, &strict).unwrap();
        assert_eq!(null_excl.edge_map(), BTreeMap::from([(e("C", "A"), 1)]));
    }

    #[test]
    fn kind_weights_apply() {
        let mut e = ev(0, "A", "B", 0, &["T"]);
        e.kind = InteractionKind::Reply;
        let o = BuildOptions {
            weights: KindWeights {
                retweet: 1,
                mention: 1,
                reply: 3,
            },
            ..Default::default()
        };
        let g = build_network(&[e], "T", week(), NetworkKind::Topic, &o).unwrap();
        assert_eq!(g.total_weight(), 3);
    }

    #[test]
    fn snapshot_tiling() {
        let start = parse_date("2022-01-14").unwrap();
        let d0 = crate::types::day_start(start) / SECONDS_PER_DAY;
        let evs = vec![ev(0, "A", "B", d0, &["T"]), ev(1, "A", "B", d0 + 29, &["T"]), ev(2, "A", "B", d0 - 3, &["T"])];
        let r28 = Window::from_days(start, 28).unwrap();
        let s = snapshot_series(&evs, "T", 14, r28, &BuildOptions::default()).unwrap();
        assert_eq!(s.snapshots.len(), 2);
        let r30 = Window::from_days(start, 30).unwrap();
        let s30 = snapshot_series(&evs, "T", 14, r30, &BuildOptions::default()).unwrap();
        assert_eq!(s30.snapshots.len(), 2);
        assert_eq!(s30.snapshots[1].window.end - s30.snapshots[0].window.start, 28 * SECONDS_PER_DAY);
        // events on day 29 and day -3 fall outside every window
        let total: u64 = s30.snapshots.iter().map(|s| s.topic.total_weight()).sum();
        assert_eq!(total, 1);
        assert!(s30.snapshots.windows(2).all(|w| w[0].window.end == w[1].window.start));

        let r10 = Window::from_days(start, 10).unwrap();
        assert!(snapshot_series(&evs, "T", 14, r10, &BuildOptions::default()).is_err());
        assert!(tile_windows(r28, 0).is_err());
    }

    fn graph(nodes: &[&str], edges: &[(&str, &str, u64)]) -> DiscourseGraph {
        DiscourseGraph::from_edges(GraphKind::Full, week(), nodes.iter().copied(), edges).unwrap()
    }

    #[test]
    fn giant_component_cases() {
        let g = graph(&[], &[("A", "B", 1), ("B", "C", 1), ("D", "E", 2)]);
        assert_eq!(giant_component(&g).nodes(), &["A", "B", "C"]);

        let connected = graph(&[], &[("A", "B", 1), ("C", "B", 1)]);
        assert_eq!(giant_component(&connected), connected);

        let tie = graph(&[], &[("C", "D", 1), ("B", "A", 1)]);
        assert_eq!(giant_component(&tie).nodes(), &["A", "B"]);

        let bigger_later = graph(&[], &[("A", "B", 1), ("C", "D", 1), ("D", "E", 1)]);
        assert_eq!(giant_component(&bigger_later).nodes(), &["C", "D", "E"]);
    }

    #[test]
    fn from_edges_rejects_bad_edges() {
        assert!(DiscourseGraph::from_edges(GraphKind::Full, week(), Vec::<&str>::new(), &[("A", "A", 1)]).is_err());
        assert!(DiscourseGraph::from_edges(GraphKind::Full, week(), Vec::<&str>::new(), &[("A", "B", 0)]).is_err());
    }

    fn arb_events() -> impl Strategy<Value = Vec<InteractionEvent>> {
        proptest::collection::vec(
            (0usize..5, 0usize..5, 0i64..7, proptest::sample::select(vec!["T", "U", ""])),
            1..40,
        )
        .prop_map(|v| {
            let names = ["A", "B", "C", "D", "E"];
            v.into_iter()
                .enumerate()
                .filter(|(_, (s, t, _, _))| s != t)
                .map(|(i, (s, t, d, topic))| {
                    let topics: Vec<&str> = if topic.is_empty() { vec![] } else { vec![topic] };
                    ev(i, names[s], names[t], d, &topics)
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn topic_plus_null_equals_full(mut evs in arb_events(), seed in any::<u64>()) {
            evs.push(ev(999, "A", "B", 0, &["T"]));
            let o = BuildOptions::default();
            let topic = build_network(&evs, "T", week(), NetworkKind::Topic, &o).unwrap();
            let null = build_network(&evs, "T", week(), NetworkKind::Null, &o).unwrap();
            let full = build_full(&evs, week(), &o.weights);
            let mut merged = topic.edge_map();
            for (k, w) in null.edge_map() {
                *merged.entry(k).or_default() += w;
            }
            prop_assert_eq!(&merged, &full.edge_map());
            prop_assert_eq!(full.total_weight() as usize, evs.len());

            // order invariance
            let mut shuffled = evs.clone();
            let mut s = seed;
            for i in (1..shuffled.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
                shuffled.swap(i, (s >> 33) as usize % (i + 1));
            }
            let topic2 = build_network(&shuffled, "T", week(), NetworkKind::Topic, &o).unwrap();
            prop_assert_eq!(topic2, topic);
        }
    }
}
