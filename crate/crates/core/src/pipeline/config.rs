//! Pipeline configuration file.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::centrality::MetricKind;
use crate::error::{Error, Result};
use crate::graph::KindWeights;
use crate::regress::Aggregate;
use crate::types::TopicId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    pub events: PathBuf,
    pub roster: PathBuf,
    #[serde(default)]
    pub labeling_functions: Option<PathBuf>,
    #[serde(default)]
    pub corpus: Option<PathBuf>,
    #[serde(default)]
    pub posts: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Study {
    pub topics: Vec<TopicId>,
    #[serde(default = "default_window_days")]
    pub window_days: u32,
    /// First day of the study (inclusive); defaults to the first event's day.
    #[serde(default)]
    pub start: Option<String>,
    /// Last day of the study (exclusive); defaults to the day after the last event.
    #[serde(default)]
    pub end: Option<String>,
    /// Journalists at or above this follower-count decile are prominent.
    #[serde(default = "default_decile")]
    pub decile: f64,
}

fn default_window_days() -> u32 {
    14
}

fn default_decile() -> f64 {
    0.1
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphSection {
    /// Drop events labelled with another studied topic from each null network.
    pub null_excludes_other_topics: bool,
    pub weights: KindWeights,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// Every topic with at least one LF vote.
    #[default]
    Multi,
    /// One topic per text by plurality; ties and all-abstain leave it unlabelled.
    Majority,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeaklabelSection {
    pub mode: LabelMode,
}

/// `"search"` or an explicit list of metric names.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetricChoice {
    Named(String),
    List(Vec<MetricKind>),
}

impl Default for MetricChoice {
    fn default() -> Self {
        MetricChoice::Named("search".into())
    }
}

impl MetricChoice {
    pub fn is_search(&self) -> bool {
        matches!(self, MetricChoice::Named(s) if s == "search")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NodalitySection {
    pub metrics: MetricChoice,
    pub min_size: usize,
    pub eps: f64,
    /// Defaults to the top-level seed.
    pub kmeans_seed: Option<u64>,
    pub restarts: usize,
    pub max_iter: usize,
    /// Used when the search finds no subset that passes on every topic.
    pub fallback: Vec<MetricKind>,
}

impl Default for NodalitySection {
    fn default() -> Self {
        NodalitySection {
            metrics: MetricChoice::default(),
            min_size: 3,
            eps: 0.01,
            kmeans_seed: None,
            restarts: 100,
            max_iter: 300,
            fallback: vec![MetricKind::Strength, MetricKind::Degree, MetricKind::FunnelBandwidth],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InfluenceSection {
    pub lag: usize,
    pub bins: usize,
    pub bin_days: u32,
    pub pool_windows: bool,
}

impl Default for InfluenceSection {
    fn default() -> Self {
        InfluenceSection {
            lag: 1,
            bins: 2,
            bin_days: 1,
            pool_windows: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressionSection {
    pub aggregate: Aggregate,
    pub robust: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub inputs: Inputs,
    pub study: Study,
    #[serde(default)]
    pub graph: GraphSection,
    #[serde(default)]
    pub weaklabel: WeaklabelSection,
    #[serde(default)]
    pub nodality: NodalitySection,
    #[serde(default)]
    pub influence: InfluenceSection,
    #[serde(default)]
    pub regression: RegressionSection,
}

fn default_seed() -> u64 {
    42
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML config; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_relative(dir);
        }
        Ok(cfg)
    }

    pub fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        fix(&mut self.inputs.events);
        fix(&mut self.inputs.roster);
        for p in [&mut self.inputs.labeling_functions, &mut self.inputs.corpus, &mut self.inputs.posts]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.study.topics.is_empty() {
            return Err(Error::Config("study.topics must not be empty".into()));
        }
        if let Some(t) = self.study.topics.iter().find(|t| {
            t.is_empty() || !t.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        }) {
            return Err(Error::Config(format!(
                "topic `{t}` must use only ASCII letters, digits, `_` and `-` (it names output files)"
            )));
        }
        let uniq: BTreeSet<_> = self.study.topics.iter().collect();
        if uniq.len() != self.study.topics.len() {
            return Err(Error::Config("study.topics has duplicates".into()));
        }
        if self.study.window_days == 0 {
            return Err(Error::Config("study.window_days must be positive".into()));
        }
        if !(self.study.decile > 0.0 && self.study.decile < 1.0) {
            return Err(Error::Config("study.decile must lie in (0, 1)".into()));
        }
        match &self.nodality.metrics {
            MetricChoice::Named(s) if s != "search" => {
                return Err(Error::Config(format!("nodality.metrics must be \"search\" or a list, got \"{s}\"")));
            }
            MetricChoice::List(v) if v.is_empty() => {
                return Err(Error::Config("nodality.metrics list is empty".into()));
            }
            _ => {}
        }
        if self.nodality.metrics.is_search() && self.study.topics.len() < 2 {
            return Err(Error::Config("metric search needs at least 2 topics".into()));
        }
        if self.nodality.fallback.is_empty() {
            return Err(Error::Config("nodality.fallback must not be empty".into()));
        }
        if self.influence.lag == 0 || self.influence.bins < 2 || self.influence.bin_days == 0 {
            return Err(Error::Config("influence needs lag >= 1, bins >= 2 and bin_days >= 1".into()));
        }
        if self.inputs.labeling_functions.is_some() != self.inputs.corpus.is_some() {
            return Err(Error::Config("labeling_functions and corpus must be given together".into()));
        }
        Ok(())
    }

    /// Checks that every referenced input file exists.
    pub fn check_paths(&self) -> Result<()> {
        let mut paths = vec![&self.inputs.events, &self.inputs.roster];
        paths.extend(
            [&self.inputs.labeling_functions, &self.inputs.corpus, &self.inputs.posts]
                .into_iter()
                .flatten(),
        );
        for p in paths {
            if !p.is_file() {
                return Err(Error::Config(format!("input file {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn kmeans_seed(&self) -> u64 {
        self.nodality.kmeans_seed.unwrap_or(self.seed)
    }
}
