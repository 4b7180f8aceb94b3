//! Group activity series, transfer entropy and the share of influence.

mod estimator;

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

pub use estimator::{discretize, entropy, entropy_symbols, share_of_influence, transfer_entropy, Influence, PooledEstimator};

use crate::error::{Error, Result};
use crate::ingest::{GroupAssignment, InteractionEvent};
use crate::par;
use crate::types::{format_date, parse_timestamp, ActorId, Window, SECONDS_PER_DAY};

/// One act of posting by an actor. Built from interaction events (the
/// interactor, i.e. the event target, is the one posting) and optionally
/// from a separate posting log.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Activity {
    pub actor: ActorId,
    pub timestamp: i64,
    pub topics: BTreeSet<String>,
}

pub fn activities_from_events(events: &[InteractionEvent]) -> Vec<Activity> {
    events
        .iter()
        .map(|e| Activity {
            actor: e.target.clone(),
            timestamp: e.timestamp,
            topics: e.topics.clone(),
        })
        .collect()
}

/// Reads a posting log: one JSON object per line with `actor`, `ts` and
/// `topics`.
pub fn load_posts<R: BufRead>(reader: R) -> Result<Vec<Activity>> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Rec {
        actor: String,
        ts: String,
        #[serde(default)]
        topics: BTreeSet<String>,
    }
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<posts>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Rec = serde_json::from_str(&line).map_err(|e| Error::Schema {
            line: i + 1,
            message: e.to_string(),
        })?;
        let timestamp = parse_timestamp(&rec.ts).map_err(|e| Error::Schema {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(Activity {
            actor: rec.actor,
            timestamp,
            topics: rec.topics,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivitySeries {
    pub window: Window,
    pub bin_seconds: i64,
    pub counts: Vec<f64>,
}

impl ActivitySeries {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

fn bin_count(window: Window, bin_seconds: i64) -> Result<usize> {
    if bin_seconds <= 0 {
        return Err(Error::invalid("bin width must be positive"));
    }
    let bins = (window.len_seconds() + bin_seconds - 1) / bin_seconds;
    if bins < 2 {
        return Err(Error::invalid(format!(
            "window {} spans {bins} bin(s); need at least 2",
            window.start_date()
        )));
    }
    Ok(bins as usize)
}

/// Per-bin count of `topic` activity by members of `actors` (all topics
/// when `topic` is `None`). A trailing partial bin is kept.
pub fn activity_series(
    activity: &[Activity],
    actors: &BTreeSet<ActorId>,
    topic: Option<&str>,
    window: Window,
    bin_days: u32,
) -> Result<ActivitySeries> {
    let bin_seconds = i64::from(bin_days) * SECONDS_PER_DAY;
    let bins = bin_count(window, bin_seconds)?;
    let mut counts = vec![0.0; bins];
    for a in activity {
        if window.contains(a.timestamp)
            && topic.is_none_or(|t| a.topics.contains(t))
            && actors.contains(&a.actor)
        {
            counts[((a.timestamp - window.start) / bin_seconds) as usize] += 1.0;
        }
    }
    Ok(ActivitySeries {
        window,
        bin_seconds,
        counts,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfluenceOptions {
    pub lag: usize,
    pub bins: usize,
    pub bin_days: u32,
    /// Estimate the discretisation and conditional distributions over the
    /// whole span and report per-window means of local transfer entropy.
    pub pool_windows: bool,
}

impl Default for InfluenceOptions {
    fn default() -> Self {
        InfluenceOptions {
            lag: 1,
            bins: 2,
            bin_days: 1,
            pool_windows: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfluenceRecord {
    pub group: String,
    pub window: Window,
    pub phi: f64,
    pub te_xy: f64,
    pub te_yx: f64,
    pub h_x: f64,
    pub h_y: f64,
}

impl InfluenceRecord {
    fn new(group: &str, window: Window, inf: Influence) -> Self {
        InfluenceRecord {
            group: group.to_string(),
            window,
            phi: inf.phi,
            te_xy: inf.te_xy,
            te_yx: inf.te_yx,
            h_x: inf.h_x,
            h_y: inf.h_y,
        }
    }
}

/// Bins topic activity once per window into one row per group plus a total
/// over all assigned actors.
struct Binned {
    groups: Vec<String>,
    per_group: Vec<Vec<f64>>,
    total: Vec<f64>,
}

fn bin_groups(
    activity: &[Activity],
    groups: &[String],
    assignment: &GroupAssignment,
    topic: &str,
    window: Window,
    bin_seconds: i64,
) -> Result<Binned> {
    let bins = bin_count(window, bin_seconds)?;
    let mut per_group = vec![vec![0.0; bins]; groups.len()];
    let mut total = vec![0.0; bins];
    for a in activity {
        if !window.contains(a.timestamp) || !a.topics.contains(topic) {
            continue;
        }
        let Some(g) = assignment.group_of(&a.actor) else { continue };
        let b = ((a.timestamp - window.start) / bin_seconds) as usize;
        let gi = groups.binary_search_by(|x| x.as_str().cmp(g)).expect("group listed");
        per_group[gi][b] += 1.0;
        total[b] += 1.0;
    }
    Ok(Binned {
        groups: groups.to_vec(),
        per_group,
        total,
    })
}

impl Binned {
    /// `(X, Y)`: the group's activity and everyone else's.
    fn pair(&self, gi: usize) -> (Vec<f64>, Vec<f64>) {
        let x = self.per_group[gi].clone();
        let y = self.total.iter().zip(&x).map(|(t, g)| t - g).collect();
        (x, y)
    }
}

/// `phi(G, not G)` for every group and window on one topic. `not G` is every
/// other actor in `assignment`.
pub fn group_influence_table(
    activity: &[Activity],
    assignment: &GroupAssignment,
    topic: &str,
    windows: &[Window],
    opts: &InfluenceOptions,
) -> Result<Vec<InfluenceRecord>> {
    if windows.is_empty() {
        return Err(Error::invalid("no windows to evaluate"));
    }
    let groups: Vec<String> = assignment.groups().into_keys().collect();
    if groups.is_empty() {
        return Err(Error::EmptyGroup("<any>".into()));
    }
    let bin_seconds = i64::from(opts.bin_days) * SECONDS_PER_DAY;
    if opts.pool_windows {
        return pooled_table(activity, assignment, topic, windows, &groups, bin_seconds, opts);
    }
    let binned = par::map(windows, |&w| bin_groups(activity, &groups, assignment, topic, w, bin_seconds));
    let binned: Vec<Binned> = binned.into_iter().collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..windows.len())
        .flat_map(|w| (0..groups.len()).map(move |g| (w, g)))
        .collect();
    let records = par::map(&jobs, |&(w, g)| {
        let (x, y) = binned[w].pair(g);
        share_of_influence(&x, &y, opts.lag, opts.bins).map(|inf| InfluenceRecord::new(&binned[w].groups[g], windows[w], inf))
    });
    records.into_iter().collect()
}

fn pooled_table(
    activity: &[Activity],
    assignment: &GroupAssignment,
    topic: &str,
    windows: &[Window],
    groups: &[String],
    bin_seconds: i64,
    opts: &InfluenceOptions,
) -> Result<Vec<InfluenceRecord>> {
    let start = windows.iter().map(|w| w.start).min().expect("nonempty");
    let end = windows.iter().map(|w| w.end).max().expect("nonempty");
    for w in windows {
        if (w.start - start) % bin_seconds != 0 {
            return Err(Error::WindowMismatch(format!(
                "window {} is not on the {}-day bin grid",
                w.start_date(),
                opts.bin_days
            )));
        }
    }
    let span = Window::new(start, end)?;
    let binned = bin_groups(activity, groups, assignment, topic, span, bin_seconds)?;
    let rows = par::map_range(groups.len(), |g| {
        let (x, y) = binned.pair(g);
        let est = PooledEstimator::new(&x, &y, opts.lag, opts.bins)?;
        windows
            .iter()
            .map(|w| {
                let lo = ((w.start - start) / bin_seconds) as usize;
                let hi = (((w.end - start) + bin_seconds - 1) / bin_seconds) as usize;
                Ok(InfluenceRecord::new(&groups[g], *w, est.window(lo, hi)))
            })
            .collect::<Result<Vec<_>>>()
    });
    let mut out = Vec::with_capacity(groups.len() * windows.len());
    let rows: Vec<Vec<InfluenceRecord>> = rows.into_iter().collect::<Result<_>>()?;
    for w in 0..windows.len() {
        for row in &rows {
            out.push(row[w].clone());
        }
    }
    Ok(out)
}

pub fn write_table_csv<W: Write>(records: &[InfluenceRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["group", "window_start", "phi", "te_xy", "te_yx", "h_x", "h_y"])?;
    for r in records {
        out.write_record([
            r.group.clone(),
            format_date(r.window.start),
            r.phi.to_string(),
            r.te_xy.to_string(),
            r.te_yx.to_string(),
            r.h_x.to_string(),
            r.h_y.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Reads a table written by [`write_table_csv`]. Windows are restored from
/// their start date and `window_days`.
pub fn read_table_csv<R: std::io::Read>(r: R, window_days: u32) -> Result<Vec<InfluenceRecord>> {
    #[derive(Deserialize)]
    struct Row {
        group: String,
        window_start: String,
        phi: f64,
        te_xy: f64,
        te_yx: f64,
        h_x: f64,
        h_y: f64,
    }
    let mut out = Vec::new();
    for row in csv::Reader::from_reader(r).deserialize() {
        let row: Row = row?;
        let start = crate::types::parse_date(&row.window_start)?;
        out.push(InfluenceRecord {
            group: row.group,
            window: Window::from_days(start, window_days)?,
            phi: row.phi,
            te_xy: row.te_xy,
            te_yx: row.te_yx,
            h_x: row.h_x,
            h_y: row.h_y,
        });
    }
    Ok(out)
}

/// Records grouped by group label, in window order.
pub fn by_group(records: &[InfluenceRecord]) -> BTreeMap<String, Vec<&InfluenceRecord>> {
    let mut out: BTreeMap<String, Vec<&InfluenceRecord>> = BTreeMap::new();
    for r in records {
        out.entry(r.group.clone()).or_default().push(r);
    }
    for v in out.values_mut() {
        v.sort_by_key(|r| r.window.start);
    }
    out
}
