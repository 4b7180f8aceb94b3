use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser, Debug)]
#[command(name = "nodality", version, about = "Topic-specific nodality and influence in political discourse networks")]
struct Cli {
    /// Seed for every randomised step; overrides config files.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for outputs; overrides config files.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Event logs and rosters.
    #[command(subcommand)]
    Ingest(IngestCmd),
    /// Topic labels from labelling functions.
    #[command(subcommand)]
    Weaklabel(WeaklabelCmd),
    /// Topic and null interaction networks.
    #[command(subcommand)]
    Graph(GraphCmd),
    /// Centrality metric matrices.
    #[command(subcommand)]
    Centrality(CentralityCmd),
    /// Inherent and active nodality.
    #[command(subcommand)]
    Nodality(NodalityCmd),
    /// Share-of-influence tables.
    #[command(subcommand)]
    Influence(InfluenceCmd),
    /// Nodality-influence regression.
    #[command(subcommand)]
    Regress(RegressCmd),
    /// Synthetic data with planted tiers.
    #[command(subcommand)]
    Synth(SynthCmd),
    /// Run every stage from one config file.
    Pipeline(PipelineArgs),
}

#[derive(Subcommand, Debug)]
enum IngestCmd {
    /// Parse and clean an event log against a roster.
    Validate(IngestArgs),
}

#[derive(Args, Debug)]
struct StudyRange {
    /// First day (YYYY-MM-DD), inclusive.
    #[arg(long)]
    start: Option<String>,
    /// Last day (YYYY-MM-DD), exclusive.
    #[arg(long)]
    end: Option<String>,
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    roster: PathBuf,
    #[command(flatten)]
    range: StudyRange,
    /// Follower-count decile that makes a journalist prominent.
    #[arg(long, default_value_t = 0.1)]
    decile: f64,
    /// Fail if any line is malformed.
    #[arg(long)]
    strict: bool,
}

#[derive(Subcommand, Debug)]
enum WeaklabelCmd {
    /// Apply labelling functions to a corpus.
    Run(WeaklabelArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LabelModeArg {
    /// Every topic with at least one vote.
    Multi,
    Majority,
    /// Votes weighted by each function's accuracy on the gold set.
    Weighted,
}

#[derive(Args, Debug)]
struct WeaklabelArgs {
    #[arg(long)]
    lfs: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, alias = "mode", value_enum, default_value_t = LabelModeArg::Multi)]
    policy: LabelModeArg,
    /// Gold labels (text_id,topic) for weighting and evaluation.
    #[arg(long)]
    gold: Option<PathBuf>,
    /// Labels CSV (default: labels.csv in the output directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum GraphCmd {
    /// Build one network, or every full-period and windowed network when
    /// `--kind` is omitted.
    Build(GraphArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KindArg {
    Topic,
    Null,
}

#[derive(Args, Debug)]
struct GraphArgs {
    #[arg(long)]
    events: PathBuf,
    /// Adds node attributes (kind, role, party, followers).
    #[arg(long)]
    roster: Option<PathBuf>,
    /// Topic to build; repeat for several.
    #[arg(long = "topic", required = true)]
    topics: Vec<String>,
    #[arg(long, default_value_t = 14)]
    window_days: u32,
    /// Start of the single window built with `--kind` (default: first event day).
    #[arg(long, requires = "kind")]
    window_start: Option<String>,
    /// Build just this side of the split for one window.
    #[arg(long, value_enum, requires = "out")]
    kind: Option<KindArg>,
    #[command(flatten)]
    range: StudyRange,
    /// Null networks drop events carrying any of the given topics.
    #[arg(long)]
    null_excludes_other_topics: bool,
    /// Output file for `--kind`; `.dot` selects DOT, anything else GraphML.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = GraphFormat::Graphml)]
    format: GraphFormat,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GraphFormat {
    Graphml,
    Dot,
}

#[derive(Subcommand, Debug)]
enum CentralityCmd {
    /// Metric scores for one graph, or the topic/null matrix for a pair.
    Compute(CentralityArgs),
}

#[derive(Args, Debug)]
struct CentralityArgs {
    /// Single graph; writes actor_id, metric, value, graph_kind, window_start.
    #[arg(long, conflicts_with_all = ["topic_graph", "null_graph"], required_unless_present = "topic_graph")]
    graph: Option<PathBuf>,
    #[arg(long, requires = "null_graph")]
    topic_graph: Option<PathBuf>,
    #[arg(long, requires = "topic_graph")]
    null_graph: Option<PathBuf>,
    /// Table with actor_id and follower_count columns (a roster works).
    #[arg(long, alias = "roster")]
    followers: Option<PathBuf>,
    /// Comma-separated metric names, or `all`.
    #[arg(long, alias = "metrics", default_value = "all")]
    metric: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum NodalityCmd {
    /// PCA scores and tiers for one topic.
    Score(ScoreArgs),
    /// Exhaustive metric-subset search across topics.
    Search(SearchArgs),
}

#[derive(Args, Debug)]
struct KMeansArgs {
    #[arg(long, default_value_t = 100)]
    restarts: usize,
    #[arg(long, default_value_t = 300)]
    max_iter: usize,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    /// Metric matrix written by `centrality compute`.
    #[arg(long, conflicts_with_all = ["topic_graph", "null_graph"], required_unless_present = "topic_graph")]
    matrix: Option<PathBuf>,
    #[arg(long, requires = "null_graph")]
    topic_graph: Option<PathBuf>,
    #[arg(long, requires = "topic_graph")]
    null_graph: Option<PathBuf>,
    #[arg(long, alias = "roster")]
    followers: Option<PathBuf>,
    /// Comma-separated metrics (default: every metric in the matrix, or
    /// strength,degree,funnel_bandwidth for graphs).
    #[arg(long)]
    metrics: Option<String>,
    #[arg(long, default_value_t = 0.01)]
    eps: f64,
    #[command(flatten)]
    kmeans: KMeansArgs,
    /// Scores CSV (default: scores.csv in the output directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SearchArgs {
    /// TOML listing each topic's `matrix`, or its `topic_graph` and
    /// `null_graph` plus a top-level `followers`.
    #[arg(long, required_unless_present = "matrices")]
    topics: Option<PathBuf>,
    /// `topic=path/to/matrix.csv`; repeat once per topic.
    #[arg(long = "matrix", value_parser = parse_topic_path, conflicts_with = "topics")]
    matrices: Vec<(String, PathBuf)>,
    #[arg(long, default_value_t = 3)]
    min_size: usize,
    #[arg(long, default_value_t = 0.01)]
    eps: f64,
    #[command(flatten)]
    kmeans: KMeansArgs,
    /// Report JSON (default: combination_report.json in the output directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_topic_path(s: &str) -> Result<(String, PathBuf), String> {
    let (t, p) = s.split_once('=').ok_or_else(|| format!("expected topic=path, got `{s}`"))?;
    if t.is_empty() || p.is_empty() {
        return Err(format!("expected topic=path, got `{s}`"));
    }
    Ok((t.to_string(), PathBuf::from(p)))
}

#[derive(Subcommand, Debug)]
enum InfluenceCmd {
    /// phi per group and window on one topic.
    Table(InfluenceArgs),
}

#[derive(Args, Debug)]
struct InfluenceArgs {
    #[arg(long)]
    events: PathBuf,
    /// Extra posting log (JSON lines with actor, ts, topics).
    #[arg(long)]
    posts: Option<PathBuf>,
    /// Group assignment CSV (actor_id,group).
    #[arg(long, conflicts_with = "scores", required_unless_present = "scores")]
    groups: Option<PathBuf>,
    /// Scores CSV whose tier column defines the groups.
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long)]
    topic: String,
    #[arg(long, default_value_t = 14)]
    window_days: u32,
    #[command(flatten)]
    range: StudyRange,
    #[arg(long, default_value_t = 1)]
    lag: usize,
    #[arg(long, default_value_t = 2)]
    bins: usize,
    #[arg(long, default_value_t = 1)]
    bin_days: u32,
    /// Estimate over the whole span and report per-window means.
    #[arg(long)]
    pool_windows: bool,
    /// Table CSV (default: influence.csv in the output directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum RegressCmd {
    /// OLS of phi on group nodality.
    Fit(RegressArgs),
}

#[derive(Args, Debug)]
struct RegressArgs {
    /// Design CSV (group, topic, window, phi, inherent, active, interaction, time).
    #[arg(long)]
    design: PathBuf,
    /// How group nodality was aggregated when the design was built.
    #[arg(long)]
    aggregate: Option<nodality_core::regress::Aggregate>,
    /// HC1 robust standard errors.
    #[arg(long)]
    robust: bool,
    /// Result JSON (default: result.json in the output directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum SynthCmd {
    /// Generate events, roster and planted tiers.
    Generate(SynthArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// TOML or JSON generator settings; defaults apply otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    days: Option<u32>,
    /// Probability a tier copies its driver's previous-day state.
    #[arg(long)]
    coupling: Option<f64>,
}

#[derive(Args, Debug)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
    /// Re-run every stage even when cached outputs are current.
    #[arg(long)]
    force: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
