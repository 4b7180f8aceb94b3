//! End-to-end run: ingest, labelling, graphs, centrality, nodality,
//! influence and regression. Stages exchange data only through files in the
//! output directory, which is what makes per-stage caching possible.

mod config;
mod manifest;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use config::{
    GraphSection, InfluenceSection, Inputs, LabelMode, MetricChoice, NodalitySection, PipelineConfig,
    RegressionSection, Study, WeaklabelSection,
};
pub use manifest::{hash_file, sha256_hex, Manifest, StageRecord, MANIFEST_FILE};

use crate::centrality::{metric_matrix, MetricKind, NodalityMatrix};
use crate::error::{Error, Result};
use crate::graph::export::{attributes_from_roster, read_graphml, write_graphml};
use crate::graph::{build_network, event_range, snapshot_series, BuildOptions, DiscourseGraph, NetworkKind};
use crate::influence::{
    activities_from_events, group_influence_table, load_posts, read_table_csv, write_table_csv, Activity,
    InfluenceOptions,
};
use crate::ingest::{
    assign_groups, filter_to_roster, followers_from_roster, load_roster, parse_events, write_events, write_roster,
    Actor, GroupAssignment, InteractionEvent, ParseOptions,
};
use crate::nodality::{
    cluster, eigenvector_test, pca, read_scores_csv, search_combinations, KMeansConfig, NodalityScores,
    SearchConfig,
};
use crate::par;
use crate::regress::{build_design, fit_ols, write_design_csv, DesignRow, FitOptions};
use crate::types::{day_start, format_date, parse_date, Window, SECONDS_PER_DAY};
use crate::weaklabel::{aggregate, apply_lfs, label_multi, load_corpus, load_lfs, Policy};
use manifest::{Runner, StageOutput};

pub const STAGES: [&str; 7] = ["ingest", "weaklabel", "graphs", "centrality", "nodality", "influence", "regression"];

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    /// Re-run every stage even when its cache key matches.
    pub force: bool,
}

/// Summary of the ingest stage, written to `ingest/report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub events_kept: usize,
    pub malformed_lines: Vec<crate::ingest::LineError>,
    pub self_interactions: usize,
    pub out_of_window: usize,
    pub unrostered: usize,
    pub study_start: String,
    pub study_end: String,
    pub window: Window,
}

/// Runs every stage and returns the manifest that was written.
pub fn run_pipeline(cfg: &PipelineConfig, opts: RunOptions) -> Result<Manifest> {
    cfg.validate()?;
    cfg.check_paths()?;
    let config_hash = sha256_hex(&serde_json::to_vec(cfg)?);
    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        config_hash,
        created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        stages: Vec::new(),
    };
    let mut run = Runner::new(cfg.output_dir.clone(), manifest, opts.force)?;

    run.stage("ingest", &cfg.study, &[cfg.inputs.events.clone(), cfg.inputs.roster.clone()], |out| {
        stage_ingest(cfg, out)
    })?;

    let mut events_file = run.rel("ingest/events.jsonl");
    if let (Some(lfs), Some(corpus)) = (&cfg.inputs.labeling_functions, &cfg.inputs.corpus) {
        let inputs = vec![events_file.clone(), lfs.clone(), corpus.clone()];
        run.stage("weaklabel", &cfg.weaklabel, &inputs, |out| {
            stage_weaklabel(cfg, &inputs[0], out)
        })?;
        events_file = run.rel("weaklabel/events.jsonl");
    }

    let roster_file = run.rel("ingest/roster.csv");
    let report_file = run.rel("ingest/report.json");
    let inputs = vec![events_file.clone(), roster_file.clone(), report_file.clone()];
    let params = (&cfg.study.topics, cfg.study.window_days, &cfg.graph);
    run.stage("graphs", &params, &inputs, |out| {
        stage_graphs(cfg, &events_file, &roster_file, &report_file, out)
    })?;

    let kinds = match &cfg.nodality.metrics {
        MetricChoice::List(v) => v.clone(),
        MetricChoice::Named(_) => MetricKind::ALL.to_vec(),
    };
    let mut inputs = vec![roster_file.clone()];
    for t in &cfg.study.topics {
        inputs.push(run.rel(&format!("graphs/{t}/topic_full.graphml")));
        inputs.push(run.rel(&format!("graphs/{t}/null_full.graphml")));
    }
    run.stage("centrality", &kinds, &inputs, |out| stage_centrality(cfg, &kinds, &roster_file, out))?;

    let mut inputs = run.outputs_of("centrality");
    inputs.extend(run.outputs_of("graphs"));
    inputs.push(roster_file.clone());
    let params = (&cfg.study.topics, &cfg.nodality, cfg.kmeans_seed());
    let root = run.root().to_path_buf();
    run.stage("nodality", &params, &inputs, |out| stage_nodality(cfg, &root, &roster_file, out))?;

    let mut inputs = vec![events_file.clone(), run.rel("ingest/groups.csv"), run.rel("graphs/windows.json")];
    inputs.extend(cfg.inputs.posts.iter().cloned());
    for t in &cfg.study.topics {
        inputs.push(run.rel(&format!("nodality/scores_{t}.csv")));
    }
    let params = (&cfg.study.topics, &cfg.influence);
    run.stage("influence", &params, &inputs, |out| stage_influence(cfg, &root, &events_file, out))?;

    let mut inputs = run.outputs_of("influence");
    inputs.extend(run.outputs_of("nodality"));
    inputs.push(run.rel("ingest/groups.csv"));
    inputs.push(run.rel("graphs/windows.json"));
    let params = (&cfg.study.topics, &cfg.regression);
    run.stage("regression", &params, &inputs, |out| stage_regression(cfg, &root, out))?;

    run.save()?;
    Ok(run.manifest)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s.into_bytes())
}

/// Reads an event file produced by an earlier stage; any bad line is an error.
fn read_events(path: &Path) -> Result<Vec<InteractionEvent>> {
    let report = parse_events(BufReader::new(open(path)?), ParseOptions::default())?;
    if let Some(e) = report.errors.first() {
        return Err(Error::invalid(format!("{}: line {}: {}", path.display(), e.line, e.message)));
    }
    Ok(report.events)
}

fn read_roster(path: &Path) -> Result<Vec<Actor>> {
    load_roster(open(path)?)
}

fn read_windows(root: &Path) -> Result<Vec<Window>> {
    Ok(serde_json::from_str(&read_text(&root.join("graphs/windows.json"))?)?)
}

fn read_graph(path: &Path) -> Result<DiscourseGraph> {
    read_graphml(&read_text(path)?).map(|(g, _)| g)
}

fn window_file(topic: &str, idx: usize, which: &str) -> String {
    format!("graphs/{topic}/w{idx:03}_{which}.graphml")
}

fn window_scores_file(topic: &str, idx: usize) -> String {
    format!("nodality/windows/{topic}/w{idx:03}.csv")
}

fn stage_ingest(cfg: &PipelineConfig, out: &mut StageOutput<'_>) -> Result<()> {
    let roster = read_roster(&cfg.inputs.roster)?;
    let report = parse_events(BufReader::new(open(&cfg.inputs.events)?), ParseOptions::default())?;
    for e in report.errors.iter().take(5) {
        log::warn!("events line {}: {}", e.line, e.message);
    }
    let mut events = report.events;
    let unrostered = filter_to_roster(&mut events, &roster);
    let range = event_range(&events).ok_or_else(|| Error::invalid("no usable events"))?;
    let start = match &cfg.study.start {
        Some(s) => day_start(parse_date(s)?),
        None => range.start,
    };
    let end = match &cfg.study.end {
        Some(s) => day_start(parse_date(s)?),
        None => range.end,
    };
    let window = Window::new(start, end)?;
    let before = events.len();
    events.retain(|e| window.contains(e.timestamp));
    let out_of_window = before - events.len();
    if events.is_empty() {
        return Err(Error::invalid("no events fall inside the study window"));
    }
    let groups = assign_groups(&roster, cfg.study.decile)?;

    out.write("ingest/events.jsonl", &csv_bytes(|b| write_events(b, &events))?)?;
    out.write("ingest/roster.csv", &csv_bytes(|b| write_roster(b, &roster))?)?;
    out.write("ingest/groups.csv", &csv_bytes(|b| groups.write(b))?)?;
    let summary = IngestReport {
        events_kept: events.len(),
        malformed_lines: report.errors,
        self_interactions: report.self_interactions.len(),
        out_of_window,
        unrostered,
        study_start: format_date(window.start),
        study_end: format_date(window.end),
        window,
    };
    out.write("ingest/report.json", &json_bytes(&summary)?)
}

fn stage_weaklabel(cfg: &PipelineConfig, events_file: &Path, out: &mut StageOutput<'_>) -> Result<()> {
    let (Some(lf_path), Some(corpus_path)) = (&cfg.inputs.labeling_functions, &cfg.inputs.corpus) else {
        return Ok(());
    };
    let lfs = load_lfs(open(lf_path)?)?;
    let corpus = load_corpus(open(corpus_path)?)?;
    let texts: Vec<&str> = corpus.iter().map(|c| c.text.as_str()).collect();
    let labels: Vec<BTreeSet<String>> = match cfg.weaklabel.mode {
        LabelMode::Multi => label_multi(&lfs, &texts)?,
        LabelMode::Majority => {
            let m = apply_lfs(&lfs, &texts)?;
            aggregate(&m, Policy::Majority, None)?
                .into_iter()
                .map(|t| t.into_iter().collect())
                .collect()
        }
    };
    let mut by_id = BTreeMap::new();
    for (entry, l) in corpus.iter().zip(&labels) {
        if by_id.insert(entry.text_id.as_str(), l).is_some() {
            return Err(Error::invalid(format!("duplicate text_id `{}` in corpus", entry.text_id)));
        }
    }
    let mut events = read_events(events_file)?;
    let mut missing = 0usize;
    for ev in &mut events {
        if let Some(r) = &ev.text_ref {
            match by_id.get(r.as_str()) {
                Some(l) => ev.topics = (*l).clone(),
                None => missing += 1,
            }
        }
    }
    if missing > 0 {
        log::warn!("{missing} event(s) reference texts missing from the corpus; their topics are kept");
    }
    let labels_csv = csv_bytes(|b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["text_id", "topics"])?;
        for (entry, l) in corpus.iter().zip(&labels) {
            let joined = l.iter().map(String::as_str).collect::<Vec<_>>().join(";");
            w.write_record([entry.text_id.as_str(), &joined])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    })?;
    out.write("weaklabel/labels.csv", &labels_csv)?;
    out.write("weaklabel/events.jsonl", &csv_bytes(|b| write_events(b, &events))?)
}

fn stage_graphs(
    cfg: &PipelineConfig,
    events_file: &Path,
    roster_file: &Path,
    report_file: &Path,
    out: &mut StageOutput<'_>,
) -> Result<()> {
    let events = read_events(events_file)?;
    let roster = read_roster(roster_file)?;
    let report: IngestReport = serde_json::from_str(&read_text(report_file)?)?;
    let attrs = attributes_from_roster(&roster);
    let opts = BuildOptions {
        weights: cfg.graph.weights,
        null_excludes: cfg
            .graph
            .null_excludes_other_topics
            .then(|| cfg.study.topics.iter().cloned().collect()),
    };
    let mut windows = None;
    for topic in &cfg.study.topics {
        let series = snapshot_series(&events, topic, cfg.study.window_days, report.window, &opts)?;
        let ws = series.windows();
        let span = Window::new(ws[0].start, ws[ws.len() - 1].end)?;
        for (kind, name) in [(NetworkKind::Topic, "topic"), (NetworkKind::Null, "null")] {
            let g = build_network(&events, topic, span, kind, &opts)?;
            let bytes = csv_bytes(|b| write_graphml(b, &g, &attrs))?;
            out.write(&format!("graphs/{topic}/{name}_full.graphml"), &bytes)?;
        }
        for (i, snap) in series.snapshots.iter().enumerate() {
            out.write(&window_file(topic, i, "topic"), &csv_bytes(|b| write_graphml(b, &snap.topic, &attrs))?)?;
            out.write(&window_file(topic, i, "null"), &csv_bytes(|b| write_graphml(b, &snap.null, &attrs))?)?;
        }
        windows = Some(ws);
    }
    let windows = windows.expect("topics are nonempty");
    out.write("graphs/windows.json", &json_bytes(&windows)?)?;
    out.write("figures/daily_volumes.csv", &daily_volumes(&events, &roster, &cfg.study.topics, report.window)?)
}

/// Interactions per day, topic and kind of the interacting actor.
fn daily_volumes(events: &[InteractionEvent], roster: &[Actor], topics: &[String], range: Window) -> Result<Vec<u8>> {
    let kinds: BTreeMap<&str, &'static str> =
        roster.iter().map(|a| (a.actor_id.as_str(), a.kind.as_str())).collect();
    let kind_names: BTreeSet<&'static str> = kinds.values().copied().collect();
    let days = (range.len_seconds() / SECONDS_PER_DAY) as usize;
    let mut counts: BTreeMap<(usize, &str, &str), u64> = BTreeMap::new();
    for ev in events {
        let day = ((ev.timestamp - range.start) / SECONDS_PER_DAY) as usize;
        let kind = kinds.get(ev.target.as_str()).copied().unwrap_or("unknown");
        *counts.entry((day, "all", kind)).or_default() += 1;
        for t in topics {
            if ev.has_topic(t) {
                *counts.entry((day, t.as_str(), kind)).or_default() += 1;
            }
        }
    }
    csv_bytes(|b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["date", "topic", "actor_kind", "count"])?;
        for d in 0..days {
            let date = format_date(range.start + d as i64 * SECONDS_PER_DAY);
            for t in std::iter::once("all").chain(topics.iter().map(String::as_str)) {
                for k in &kind_names {
                    let c = counts.get(&(d, t, k)).copied().unwrap_or(0);
                    w.write_record([date.as_str(), t, k, &c.to_string()])?;
                }
            }
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    })
}

fn stage_centrality(cfg: &PipelineConfig, kinds: &[MetricKind], roster_file: &Path, out: &mut StageOutput<'_>) -> Result<()> {
    let followers = followers_from_roster(&read_roster(roster_file)?);
    for topic in &cfg.study.topics {
        let root = out.path("");
        let g = read_graph(&root.join(format!("graphs/{topic}/topic_full.graphml")))?;
        let n = read_graph(&root.join(format!("graphs/{topic}/null_full.graphml")))?;
        let m = metric_matrix(&g, &n, kinds, &followers)?;
        out.write(&format!("centrality/{topic}.csv"), &csv_bytes(|b| m.write_csv(b))?)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct PcaSummary<'a> {
    metrics: &'a [MetricKind],
    columns: &'a [String],
    eigenvalues: &'a [f64],
    /// One list per component.
    loadings: Vec<Vec<f64>>,
    eigenvector_test: bool,
    tier_sizes: BTreeMap<String, usize>,
}

fn stage_nodality(cfg: &PipelineConfig, root: &Path, roster_file: &Path, out: &mut StageOutput<'_>) -> Result<()> {
    let topics = &cfg.study.topics;
    let mut matrices = BTreeMap::new();
    for t in topics {
        matrices.insert(t.clone(), NodalityMatrix::read_csv(open(&root.join(format!("centrality/{t}.csv")))?)?);
    }
    let kcfg = KMeansConfig {
        k: 3,
        seed: cfg.kmeans_seed(),
        restarts: cfg.nodality.restarts,
        max_iter: cfg.nodality.max_iter,
    };
    let selected = match &cfg.nodality.metrics {
        MetricChoice::List(v) => v.clone(),
        MetricChoice::Named(_) => {
            let scfg = SearchConfig {
                kinds: MetricKind::ALL.to_vec(),
                min_size: cfg.nodality.min_size,
                eps: cfg.nodality.eps,
                kmeans: kcfg.clone(),
            };
            let report = search_combinations(&matrices, &scfg)?;
            out.write("nodality/combination_report.json", report.to_json()?.as_bytes())?;
            match report.selected {
                Some(s) => s,
                None => {
                    log::warn!("no metric subset passes on every topic; using the fallback list");
                    cfg.nodality.fallback.clone()
                }
            }
        }
    };
    out.write("nodality/selected_metrics.json", &json_bytes(&selected)?)?;

    for t in topics {
        let m = matrices[t].select(&selected)?;
        let p = pca(&m)?;
        let passes = eigenvector_test(&p, cfg.nodality.eps);
        if !passes {
            log::warn!("topic {t}: loadings fail the eigenvector test");
        }
        let tiers = cluster(&p, &kcfg)?;
        let scores = NodalityScores::from_pca(&p);
        out.write(&format!("nodality/scores_{t}.csv"), &csv_bytes(|b| scores.write_csv(Some(&tiers), b))?)?;
        let summary = PcaSummary {
            metrics: &selected,
            columns: &p.columns,
            eigenvalues: &p.eigenvalues,
            loadings: (0..p.loadings.ncols()).map(|c| p.loading(c)).collect(),
            eigenvector_test: passes,
            tier_sizes: crate::nodality::Tier::ALL
                .iter()
                .map(|&x| (x.as_str().to_string(), tiers.members(x).len()))
                .collect(),
        };
        out.write(&format!("nodality/pca_{t}.json"), &json_bytes(&summary)?)?;
    }

    let followers = followers_from_roster(&read_roster(roster_file)?);
    let windows = read_windows(root)?;
    let jobs: Vec<(&String, usize)> = topics.iter().flat_map(|t| (0..windows.len()).map(move |i| (t, i))).collect();
    let results = par::map(&jobs, |&(t, i)| -> Result<Option<Vec<u8>>> {
        let g = read_graph(&root.join(window_file(t, i, "topic")))?;
        let n = read_graph(&root.join(window_file(t, i, "null")))?;
        let m = metric_matrix(&g, &n, &selected, &followers);
        let p = m.and_then(|m| pca(&m));
        match p {
            Ok(p) => Ok(Some(csv_bytes(|b| NodalityScores::from_pca(&p).write_csv(None, b))?)),
            Err(e @ (Error::ZeroVariance(_) | Error::TooFewRows { .. } | Error::TooFewNodes(_))) => {
                log::warn!("topic {t}, window {i}: no nodality scores ({e})");
                Ok(None)
            }
            Err(e) => Err(e),
        }
    });
    for (&(t, i), r) in jobs.iter().zip(results) {
        if let Some(bytes) = r? {
            out.write(&window_scores_file(t, i), &bytes)?;
        }
    }
    Ok(())
}

fn tier_assignment(path: &Path) -> Result<GroupAssignment> {
    let (_, tiers) = read_scores_csv(open(path)?)?;
    Ok(GroupAssignment {
        members: tiers.into_iter().map(|(a, t)| (a, t.as_str().to_string())).collect(),
    })
}

fn stage_influence(cfg: &PipelineConfig, root: &Path, events_file: &Path, out: &mut StageOutput<'_>) -> Result<()> {
    let events = read_events(events_file)?;
    let mut activity: Vec<Activity> = activities_from_events(&events);
    if let Some(p) = &cfg.inputs.posts {
        activity.extend(load_posts(BufReader::new(open(p)?))?);
    }
    let windows = read_windows(root)?;
    let groups = GroupAssignment::load(open(&root.join("ingest/groups.csv"))?)?;
    let opts = InfluenceOptions {
        lag: cfg.influence.lag,
        bins: cfg.influence.bins,
        bin_days: cfg.influence.bin_days,
        pool_windows: cfg.influence.pool_windows,
    };
    let mut phi_rows = Vec::new();
    for t in &cfg.study.topics {
        let tiers = tier_assignment(&root.join(format!("nodality/scores_{t}.csv")))?;
        for (grouping, assignment) in [("institutional", &groups), ("tiers", &tiers)] {
            let table = group_influence_table(&activity, assignment, t, &windows, &opts)?;
            out.write(&format!("influence/{t}/{grouping}.csv"), &csv_bytes(|b| write_table_csv(&table, b))?)?;
            phi_rows.extend(table.into_iter().map(|r| (t.clone(), grouping, r.group, format_date(r.window.start), r.phi)));
        }
    }
    let bytes = csv_bytes(|b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["topic", "grouping", "group", "window_start", "phi"])?;
        for (t, g, grp, date, phi) in &phi_rows {
            w.write_record([t.as_str(), g, grp, date, &phi.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    })?;
    out.write("figures/phi.csv", &bytes)
}

fn stage_regression(cfg: &PipelineConfig, root: &Path, out: &mut StageOutput<'_>) -> Result<()> {
    let windows = read_windows(root)?;
    let groups = GroupAssignment::load(open(&root.join("ingest/groups.csv"))?)?;
    let mut rows: Vec<DesignRow> = Vec::new();
    let mut window_starts = Vec::new();
    for t in &cfg.study.topics {
        let mut scores = BTreeMap::new();
        let mut true_index = Vec::new();
        for (i, w) in windows.iter().enumerate() {
            let path = root.join(window_scores_file(t, i));
            if path.is_file() {
                let (s, _) = read_scores_csv(open(&path)?)?;
                scores.insert(*w, s);
                true_index.push(i);
            }
        }
        let records = read_table_csv(open(&root.join(format!("influence/{t}/institutional.csv")))?, cfg.study.window_days)?;
        let mut skipped = 0usize;
        for rec in &records {
            if !scores.contains_key(&rec.window) {
                skipped += 1;
                continue;
            }
            match build_design(std::slice::from_ref(rec), &scores, &groups, t, cfg.regression.aggregate) {
                Ok(mut r) => {
                    for row in &mut r {
                        // positions among scored windows -> positions in the full sequence
                        row.window = true_index[row.window];
                        row.time = row.window as f64;
                        window_starts.push(format_date(windows[row.window].start));
                    }
                    rows.extend(r);
                }
                Err(Error::EmptyGroup(g)) => {
                    log::debug!("no scored members for {g}");
                    skipped += 1;
                }
                Err(e) => return Err(e),
            }
        }
        if skipped > 0 {
            log::warn!("topic {t}: {skipped} influence record(s) left out of the design");
        }
    }
    out.write("regression/design.csv", &csv_bytes(|b| write_design_csv(&rows, b))?)?;
    let fit = fit_ols(
        &rows,
        &FitOptions {
            robust: cfg.regression.robust,
            aggregate: Some(cfg.regression.aggregate),
        },
    )?;
    let mut json = fit.to_json()?;
    json.push('\n');
    out.write("regression/result.json", json.as_bytes())?;
    out.write("regression/coefficients.csv", &csv_bytes(|b| fit.write_csv(b))?)?;
    let bytes = csv_bytes(|b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["topic", "group", "window_start", "inherent", "active"])?;
        for (r, date) in rows.iter().zip(&window_starts) {
            w.write_record([r.topic.as_str(), &r.group, date, &r.inherent.to_string(), &r.active.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    })?;
    out.write("figures/group_nodality.csv", &bytes)
}
