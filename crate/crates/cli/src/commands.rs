use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use nodality_core::centrality::{compute, metric_matrix, parse_metric_list, MetricKind, NodalityMatrix};
use nodality_core::graph::export::{attributes_from_roster, read_graphml, write_dot, write_graphml, NodeAttributeMap};
use nodality_core::graph::{build_network, event_range, snapshot_series, tile_windows, BuildOptions, DiscourseGraph, NetworkKind};
use nodality_core::influence::{activities_from_events, group_influence_table, load_posts, write_table_csv, InfluenceOptions};
use nodality_core::ingest::{
    assign_groups, filter_to_roster, load_followers, load_roster, parse_events, write_events, write_roster, Followers,
    GroupAssignment, InteractionEvent, ParseOptions,
};
use nodality_core::nodality::{
    cluster, eigenvector_test, pca, read_scores_csv, search_combinations, KMeansConfig, NodalityScores, SearchConfig, Tier,
};
use nodality_core::pipeline::{run_pipeline, PipelineConfig, RunOptions};
use nodality_core::regress::{fit_ols, read_design_csv, FitOptions};
use nodality_core::synth::{generate, SynthConfig};
use nodality_core::types::{day_start, format_date, parse_date, Window, SECONDS_PER_DAY};
use nodality_core::weaklabel::{aggregate, apply_lfs, evaluate, label_multi, load_corpus, load_lfs, GoldSet, LabelMatrix, Policy};

use crate::*;

const DEFAULT_SEED: u64 = 42;

struct Ctx {
    seed: Option<u64>,
    out_dir: Option<PathBuf>,
}

impl Ctx {
    /// `explicit` if given, else `default_name` inside the output directory.
    fn file(&self, explicit: &Option<PathBuf>, default_name: &str) -> Result<PathBuf> {
        match explicit {
            Some(p) => Ok(p.clone()),
            None => Ok(self.out()?.join(default_name)),
        }
    }

    fn out(&self) -> Result<PathBuf> {
        let dir = self.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(dir)
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let ctx = Ctx {
        seed: cli.seed,
        out_dir: cli.out_dir,
    };
    match cli.command {
        Command::Ingest(IngestCmd::Validate(a)) => ingest(&ctx, a),
        Command::Weaklabel(WeaklabelCmd::Run(a)) => weaklabel(&ctx, a),
        Command::Graph(GraphCmd::Build(a)) => graph(&ctx, a),
        Command::Centrality(CentralityCmd::Compute(a)) => centrality(&ctx, a),
        Command::Nodality(NodalityCmd::Score(a)) => score(&ctx, a),
        Command::Nodality(NodalityCmd::Search(a)) => search(&ctx, a),
        Command::Influence(InfluenceCmd::Table(a)) => influence(&ctx, a),
        Command::Regress(RegressCmd::Fit(a)) => regress(&ctx, a),
        Command::Synth(SynthCmd::Generate(a)) => synth(&ctx, a),
        Command::Pipeline(a) => pipeline(&ctx, a),
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).with_context(|| format!("opening {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn read_events(path: &Path) -> Result<Vec<InteractionEvent>> {
    let report = parse_events(BufReader::new(open(path)?), ParseOptions::default())?;
    if !report.errors.is_empty() {
        log::warn!("{}: skipped {} malformed line(s)", path.display(), report.errors.len());
    }
    Ok(report.events)
}

fn study_window(range: &StudyRange, data: Option<Window>) -> Result<Window> {
    let start = match (&range.start, data) {
        (Some(s), _) => day_start(parse_date(s)?),
        (None, Some(w)) => w.start,
        (None, None) => bail!("no events and no --start given"),
    };
    let end = match (&range.end, data) {
        (Some(s), _) => day_start(parse_date(s)?),
        (None, Some(w)) => w.end,
        (None, None) => bail!("no events and no --end given"),
    };
    Ok(Window::new(start, end)?)
}

fn ingest(ctx: &Ctx, a: IngestArgs) -> Result<()> {
    let roster = load_roster(open(&a.roster)?)?;
    let report = parse_events(BufReader::new(open(&a.events)?), ParseOptions::default())?;
    for e in &report.errors {
        eprintln!("{}:{}: {}", a.events.display(), e.line, e.message);
    }
    if a.strict && !report.errors.is_empty() {
        bail!("{} malformed line(s)", report.errors.len());
    }
    let mut events = report.events;
    let unrostered = filter_to_roster(&mut events, &roster);
    let window = study_window(&a.range, event_range(&events))?;
    let before = events.len();
    events.retain(|e| window.contains(e.timestamp));
    let groups = assign_groups(&roster, a.decile)?;

    let out = ctx.out()?;
    write_events(create(&out.join("events.jsonl"))?, &events)?;
    write_roster(create(&out.join("roster.csv"))?, &roster)?;
    groups.write(create(&out.join("groups.csv"))?)?;
    println!(
        "{} event(s) kept; {} malformed, {} self-interaction(s), {} unrostered, {} outside {}..{}",
        events.len(),
        report.errors.len(),
        report.self_interactions.len(),
        unrostered,
        before - events.len(),
        window.start_date(),
        format_date(window.end),
    );
    Ok(())
}

/// `text_id,topic` with an empty topic meaning unlabelled.
fn load_gold(path: &Path) -> Result<BTreeMap<String, Option<String>>> {
    let mut out = BTreeMap::new();
    for rec in csv::Reader::from_reader(open(path)?).deserialize::<(String, String)>() {
        let (id, topic) = rec?;
        let topic = topic.trim().to_string();
        out.insert(id, (!topic.is_empty()).then_some(topic));
    }
    Ok(out)
}

fn weaklabel(ctx: &Ctx, a: WeaklabelArgs) -> Result<()> {
    let lfs = load_lfs(open(&a.lfs)?)?;
    let corpus = load_corpus(open(&a.corpus)?)?;
    let texts: Vec<&str> = corpus.iter().map(|c| c.text.as_str()).collect();
    let labels_path = ctx.file(&a.out, "labels.csv")?;
    let report_dir = labels_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let matrix = apply_lfs(&lfs, &texts)?;

    let gold = a.gold.as_deref().map(load_gold).transpose()?;
    let gold_rows: Vec<(usize, Option<String>)> = match &gold {
        Some(g) => corpus
            .iter()
            .enumerate()
            .filter_map(|(i, c)| g.get(&c.text_id).map(|t| (i, t.clone())))
            .collect(),
        None => Vec::new(),
    };
    if gold.is_some() && gold_rows.is_empty() {
        bail!("no gold text_id matches the corpus");
    }

    let labels: Vec<Vec<String>> = match a.policy {
        LabelModeArg::Multi => label_multi(&lfs, &texts)?.into_iter().map(|s| s.into_iter().collect()).collect(),
        LabelModeArg::Majority | LabelModeArg::Weighted => {
            let predicted = if matches!(a.policy, LabelModeArg::Weighted) {
                if gold_rows.is_empty() {
                    bail!("weighted aggregation needs --gold");
                }
                let votes = gold_rows.iter().map(|(i, _)| matrix.row(*i).to_vec()).collect();
                let gm = LabelMatrix::from_votes(matrix.topics.clone(), matrix.lf_ids.clone(), votes)?;
                let gl: Vec<_> = gold_rows.iter().map(|(_, t)| t.clone()).collect();
                aggregate(&matrix, Policy::Weighted, Some(&GoldSet { matrix: &gm, labels: &gl }))?
            } else {
                aggregate(&matrix, Policy::Majority, None)?
            };
            if !gold_rows.is_empty() {
                let p: Vec<_> = gold_rows.iter().map(|(i, _)| predicted[*i].clone()).collect();
                let g: Vec<_> = gold_rows.iter().map(|(_, t)| t.clone()).collect();
                let cm = evaluate(&p, &g)?;
                cm.write_csv(create(&report_dir.join("confusion.csv"))?)?;
                for c in &cm.classes {
                    println!("recall {c}: {:.3}", cm.recall(c).unwrap_or(f64::NAN));
                }
            }
            predicted.into_iter().map(|t| t.into_iter().collect()).collect()
        }
    };
    let mut w = csv::Writer::from_writer(create(&labels_path)?);
    w.write_record(["text_id", "topics"])?;
    for (c, l) in corpus.iter().zip(&labels) {
        w.write_record([c.text_id.as_str(), &l.join(";")])?;
    }
    w.flush()?;
    let labelled = labels.iter().filter(|l| !l.is_empty()).count();
    println!("{labelled} of {} text(s) labelled", corpus.len());
    Ok(())
}

fn write_graph(path: &Path, g: &DiscourseGraph, attrs: &NodeAttributeMap, format: GraphFormat) -> Result<()> {
    let w = create(path)?;
    match format {
        GraphFormat::Graphml => write_graphml(w, g, attrs)?,
        GraphFormat::Dot => write_dot(w, g, attrs)?,
    }
    Ok(())
}

fn graph(ctx: &Ctx, a: GraphArgs) -> Result<()> {
    let events = read_events(&a.events)?;
    let attrs = match &a.roster {
        Some(p) => attributes_from_roster(&load_roster(open(p)?)?),
        None => NodeAttributeMap::new(),
    };
    let range = study_window(&a.range, event_range(&events))?;
    let opts = BuildOptions {
        weights: Default::default(),
        null_excludes: a.null_excludes_other_topics.then(|| a.topics.iter().cloned().collect()),
    };

    if let (Some(kind), Some(out)) = (a.kind, &a.out) {
        let [topic] = a.topics.as_slice() else {
            bail!("--kind builds one graph; give exactly one --topic");
        };
        let start = match &a.window_start {
            Some(d) => day_start(parse_date(d)?),
            None => range.start,
        };
        let window = Window::new(start, start + i64::from(a.window_days) * SECONDS_PER_DAY)?;
        let kind = match kind {
            KindArg::Topic => NetworkKind::Topic,
            KindArg::Null => NetworkKind::Null,
        };
        let g = build_network(&events, topic, window, kind, &opts)?;
        let format = if out.extension().is_some_and(|e| e == "dot") { GraphFormat::Dot } else { a.format };
        write_graph(out, &g, &attrs, format)?;
        println!("{} node(s), {} edge(s) -> {}", g.node_count(), g.edge_count(), out.display());
        return Ok(());
    }

    let ext = match a.format {
        GraphFormat::Graphml => "graphml",
        GraphFormat::Dot => "dot",
    };
    let out = ctx.out()?;
    for topic in &a.topics {
        let series = snapshot_series(&events, topic, a.window_days, range, &opts)?;
        let ws = series.windows();
        let span = Window::new(ws[0].start, ws[ws.len() - 1].end)?;
        for (kind, name) in [(NetworkKind::Topic, "topic"), (NetworkKind::Null, "null")] {
            let g = build_network(&events, topic, span, kind, &opts)?;
            write_graph(&out.join(format!("{topic}/{name}_full.{ext}")), &g, &attrs, a.format)?;
        }
        for (i, s) in series.snapshots.iter().enumerate() {
            write_graph(&out.join(format!("{topic}/w{i:03}_topic.{ext}")), &s.topic, &attrs, a.format)?;
            write_graph(&out.join(format!("{topic}/w{i:03}_null.{ext}")), &s.null, &attrs, a.format)?;
        }
        println!("{topic}: {} window(s) from {}", ws.len(), span.start_date());
    }
    Ok(())
}

fn read_graph(path: &Path) -> Result<DiscourseGraph> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(read_graphml(&text)?.0)
}

fn metrics_arg(s: &str) -> Result<Vec<MetricKind>> {
    if s.trim() == "all" {
        Ok(MetricKind::ALL.to_vec())
    } else {
        Ok(parse_metric_list(s)?)
    }
}

fn followers_arg(path: &Option<PathBuf>, kinds: &[MetricKind]) -> Result<Followers> {
    match path {
        Some(p) => Ok(load_followers(open(p)?)?),
        None if kinds.iter().any(|k| k.needs_followers()) => {
            bail!("--followers is required for the bandwidth metrics")
        }
        None => Ok(Followers::new()),
    }
}

fn centrality(ctx: &Ctx, a: CentralityArgs) -> Result<()> {
    let kinds = metrics_arg(&a.metric)?;
    let followers = followers_arg(&a.followers, &kinds)?;
    if let Some(graph_path) = &a.graph {
        let g = read_graph(graph_path)?;
        let path = ctx.file(&a.out, "centrality.csv")?;
        let mut w = csv::Writer::from_writer(create(&path)?);
        w.write_record(["actor_id", "metric", "value", "graph_kind", "window_start"])?;
        for k in &kinds {
            let mv = compute(&g, *k, &followers)?;
            let gk = mv.graph_kind.to_string();
            let start = mv.window.start_date();
            for (actor, v) in mv.actors.iter().zip(&mv.values) {
                w.write_record([actor.as_str(), k.as_str(), &v.to_string(), &gk, &start])?;
            }
        }
        w.flush()?;
        println!("{} node(s) x {} metric(s) -> {}", g.node_count(), kinds.len(), path.display());
        return Ok(());
    }
    let (Some(tg), Some(ng)) = (&a.topic_graph, &a.null_graph) else {
        bail!("give --graph, or --topic-graph with --null-graph");
    };
    let m = metric_matrix(&read_graph(tg)?, &read_graph(ng)?, &kinds, &followers)?;
    let path = ctx.file(&a.out, "matrix.csv")?;
    m.write_csv(create(&path)?)?;
    println!("{} actor(s) x {} column(s) -> {}", m.actors.len(), 2 * m.m(), path.display());
    Ok(())
}

fn kmeans_config(ctx: &Ctx, k: &KMeansArgs) -> KMeansConfig {
    KMeansConfig {
        k: 3,
        seed: ctx.seed(),
        restarts: k.restarts,
        max_iter: k.max_iter,
    }
}

const DEFAULT_SELECTION: [MetricKind; 3] = [MetricKind::Strength, MetricKind::Degree, MetricKind::FunnelBandwidth];

fn score(ctx: &Ctx, a: ScoreArgs) -> Result<()> {
    let chosen = a.metrics.as_deref().map(parse_metric_list).transpose()?;
    let m = match (&a.matrix, &a.topic_graph, &a.null_graph) {
        (Some(p), _, _) => {
            let m = NodalityMatrix::read_csv(open(p)?)?;
            match &chosen {
                Some(k) => m.select(k)?,
                None => m,
            }
        }
        (None, Some(tg), Some(ng)) => {
            let kinds = chosen.unwrap_or_else(|| DEFAULT_SELECTION.to_vec());
            let followers = followers_arg(&a.followers, &kinds)?;
            metric_matrix(&read_graph(tg)?, &read_graph(ng)?, &kinds, &followers)?
        }
        _ => bail!("give --matrix, or --topic-graph with --null-graph"),
    };
    let p = pca(&m)?;
    let passes = eigenvector_test(&p, a.eps);
    let tiers = cluster(&p, &kmeans_config(ctx, &a.kmeans))?;
    let path = ctx.file(&a.out, "scores.csv")?;
    NodalityScores::from_pca(&p).write_csv(Some(&tiers), create(&path)?)?;
    println!("eigenvalues: {:?}", p.eigenvalues);
    println!("eigenvector test: {}", if passes { "pass" } else { "FAIL" });
    for t in Tier::ALL {
        println!("{t}: {}", tiers.members(t).len());
    }
    Ok(())
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct TopicsFile {
    followers: Option<PathBuf>,
    topics: BTreeMap<String, TopicInput>,
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct TopicInput {
    matrix: Option<PathBuf>,
    topic_graph: Option<PathBuf>,
    null_graph: Option<PathBuf>,
}

/// Matrices named by a topics file; relative paths resolve against its directory.
fn matrices_from_topics_file(path: &Path) -> Result<BTreeMap<String, NodalityMatrix>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: TopicsFile = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &Path| if p.is_relative() { base.join(p) } else { p.to_path_buf() };
    let followers = match &file.followers {
        Some(f) => load_followers(open(&resolve(f))?)?,
        None => Followers::new(),
    };
    let mut out = BTreeMap::new();
    for (topic, t) in &file.topics {
        let m = match (&t.matrix, &t.topic_graph, &t.null_graph) {
            (Some(m), None, None) => NodalityMatrix::read_csv(open(&resolve(m))?)?,
            (None, Some(tg), Some(ng)) => {
                let (g, n) = (read_graph(&resolve(tg))?, read_graph(&resolve(ng))?);
                metric_matrix(&g, &n, &MetricKind::ALL, &followers)?
            }
            _ => bail!("topic `{topic}`: give either `matrix` or both `topic_graph` and `null_graph`"),
        };
        out.insert(topic.clone(), m);
    }
    Ok(out)
}

fn search(ctx: &Ctx, a: SearchArgs) -> Result<()> {
    let matrices = match &a.topics {
        Some(p) => matrices_from_topics_file(p)?,
        None => {
            let mut m = BTreeMap::new();
            for (t, p) in &a.matrices {
                if m.insert(t.clone(), NodalityMatrix::read_csv(open(p)?)?).is_some() {
                    bail!("topic `{t}` given twice");
                }
            }
            m
        }
    };
    let cfg = SearchConfig {
        kinds: MetricKind::ALL.to_vec(),
        min_size: a.min_size,
        eps: a.eps,
        kmeans: kmeans_config(ctx, &a.kmeans),
    };
    let report = search_combinations(&matrices, &cfg)?;
    let path = ctx.file(&a.out, "combination_report.json")?;
    let mut w = create(&path)?;
    w.write_all(report.to_json()?.as_bytes())?;
    w.write_all(b"\n")?;
    w.flush()?;
    println!("{} subset(s) evaluated", report.evaluated);
    match &report.selected {
        Some(s) => println!(
            "selected: {} ({} shared leader(s))",
            s.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(", "),
            report.selected_intersection.unwrap_or(0)
        ),
        None => println!("no subset passes on every topic"),
    }
    Ok(())
}

fn influence(ctx: &Ctx, a: InfluenceArgs) -> Result<()> {
    let events = read_events(&a.events)?;
    let mut activity = activities_from_events(&events);
    if let Some(p) = &a.posts {
        activity.extend(load_posts(BufReader::new(open(p)?))?);
    }
    let assignment = match (&a.groups, &a.scores) {
        (Some(g), _) => GroupAssignment::load(open(g)?)?,
        (None, Some(s)) => {
            let (_, tiers) = read_scores_csv(open(s)?)?;
            if tiers.is_empty() {
                bail!("{} has no tier column values", s.display());
            }
            GroupAssignment {
                members: tiers.into_iter().map(|(k, t)| (k, t.as_str().to_string())).collect(),
            }
        }
        (None, None) => bail!("one of --groups or --scores is required"),
    };
    let data = {
        let lo = activity.iter().map(|x| x.timestamp).min();
        let hi = activity.iter().map(|x| x.timestamp).max();
        match (lo, hi) {
            (Some(lo), Some(hi)) => {
                let day = SECONDS_PER_DAY;
                Some(Window::new(lo.div_euclid(day) * day, (hi.div_euclid(day) + 1) * day)?)
            }
            _ => None,
        }
    };
    let windows = tile_windows(study_window(&a.range, data)?, a.window_days)?;
    let opts = InfluenceOptions {
        lag: a.lag,
        bins: a.bins,
        bin_days: a.bin_days,
        pool_windows: a.pool_windows,
    };
    let table = group_influence_table(&activity, &assignment, &a.topic, &windows, &opts)?;
    let path = ctx.file(&a.out, "influence.csv")?;
    write_table_csv(&table, create(&path)?)?;
    println!("{} record(s) -> {}", table.len(), path.display());
    Ok(())
}

fn regress(ctx: &Ctx, a: RegressArgs) -> Result<()> {
    let rows = read_design_csv(open(&a.design)?)?;
    let fit = fit_ols(
        &rows,
        &FitOptions {
            robust: a.robust,
            aggregate: a.aggregate,
        },
    )?;
    let path = ctx.file(&a.out, "result.json")?;
    let mut w = create(&path)?;
    w.write_all(fit.to_json()?.as_bytes())?;
    w.write_all(b"\n")?;
    w.flush()?;
    fit.write_csv(create(&path.with_extension("csv"))?)?;
    println!("N = {}, R^2 = {:.4}", fit.n, fit.r_squared);
    for c in &fit.coefficients {
        println!("{:<12} {:>12.6} (se {:.6}, p {:.4})", c.name, c.estimate, c.std_error, c.p_value);
    }
    Ok(())
}

fn synth(ctx: &Ctx, a: SynthArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => SynthConfig::load(p)?,
        None => SynthConfig::default(),
    };
    if let Some(s) = ctx.seed {
        cfg.seed = s;
    }
    if let Some(d) = a.days {
        cfg.days = d;
    }
    if let Some(c) = a.coupling {
        cfg.coupling = c;
    }
    let data = generate(&cfg)?;
    let out = ctx.out()?;
    data.write_dir(&out)?;
    println!(
        "{} actor(s), {} event(s) over {} day(s) -> {}",
        data.roster.len(),
        data.events.len(),
        cfg.days,
        out.display()
    );
    Ok(())
}

fn pipeline(ctx: &Ctx, a: PipelineArgs) -> Result<()> {
    let mut cfg = PipelineConfig::load(&a.config)?;
    if let Some(s) = ctx.seed {
        cfg.seed = s;
    }
    if let Some(d) = &ctx.out_dir {
        cfg.output_dir = d.clone();
    }
    let manifest = run_pipeline(&cfg, RunOptions { force: a.force })?;
    for s in &manifest.stages {
        println!(
            "{:<11} {:<8} {} file(s)",
            s.name,
            if s.cached { "cached" } else { "ran" },
            s.outputs.len()
        );
    }
    println!("outputs in {}", cfg.output_dir.display());
    Ok(())
}
