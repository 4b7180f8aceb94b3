//! Rule-based topic labelling: labelling functions vote a topic or abstain,
//! votes are collected into a label matrix and aggregated per text.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::types::TopicId;

/// Matrix entry for a labelling function that did not vote.
pub const ABSTAIN: i32 = -1;
/// Class name used for unlabelled texts in confusion matrices.
pub const OTHER: &str = "Other";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule_type", content = "payload", rename_all = "snake_case")]
pub enum Rule {
    KeywordSet(Vec<String>),
    Regex(String),
}

/// Whole-word match; a boundary is only required on an edge that is itself a
/// word character, so `#energy` matches after a space.
fn keyword_pattern(word: &str) -> String {
    let is_word = |c: Option<char>| c.is_some_and(|c| c.is_alphanumeric() || c == '_');
    let left = if is_word(word.chars().next()) { r"\b" } else { "" };
    let right = if is_word(word.chars().last()) { r"\b" } else { "" };
    format!("{left}{}{right}", regex::escape(word))
}

#[derive(Clone, Debug)]
pub struct LabelingFunction {
    pub lf_id: String,
    pub topic: TopicId,
    pub rule: Rule,
    matcher: Regex,
}

impl LabelingFunction {
    pub fn new(lf_id: impl Into<String>, topic: impl Into<TopicId>, rule: Rule) -> Result<Self> {
        let lf_id = lf_id.into();
        let matcher = match &rule {
            Rule::KeywordSet(words) => {
                let words: Vec<String> = words
                    .iter()
                    .map(|w| w.trim())
                    .filter(|w| !w.is_empty())
                    .map(keyword_pattern)
                    .collect();
                if words.is_empty() {
                    return Err(Error::invalid(format!("LF `{lf_id}`: empty keyword set")));
                }
                Regex::new(&format!("(?i)(?:{})", words.join("|")))
            }
            Rule::Regex(p) => Regex::new(p),
        }
        .map_err(|e| Error::invalid(format!("LF `{lf_id}`: {e}")))?;
        Ok(LabelingFunction {
            lf_id,
            topic: topic.into(),
            rule,
            matcher,
        })
    }

    pub fn keywords<S: AsRef<str>>(lf_id: &str, topic: &str, words: &[S]) -> Result<Self> {
        let words = words.iter().map(|w| w.as_ref().to_string()).collect();
        Self::new(lf_id, topic, Rule::KeywordSet(words))
    }

    pub fn regex(lf_id: &str, topic: &str, pattern: &str) -> Result<Self> {
        Self::new(lf_id, topic, Rule::Regex(pattern.to_string()))
    }

    pub fn votes(&self, text: &str) -> bool {
        self.matcher.is_match(text)
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct LfRow {
    lf_id: String,
    topic: String,
    rule_type: String,
    payload: String,
}

/// LF table columns: lf_id, topic, rule_type (`keyword_set` | `regex`), payload.
/// Keyword payloads are `;`-separated.
pub fn load_lfs<R: Read>(reader: R) -> Result<Vec<LabelingFunction>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (idx, row) in rdr.deserialize::<LfRow>().enumerate() {
        let row = row?;
        let rule = match row.rule_type.trim() {
            "keyword_set" | "keyword" | "keywords" => {
                Rule::KeywordSet(row.payload.split(';').map(str::to_string).collect())
            }
            "regex" => Rule::Regex(row.payload),
            other => {
                return Err(Error::Schema {
                    line: idx + 2,
                    message: format!("unknown rule_type `{other}`"),
                })
            }
        };
        out.push(LabelingFunction::new(row.lf_id, row.topic, rule)?);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub text_id: String,
    pub text: String,
}

pub fn load_corpus<R: Read>(reader: R) -> Result<Vec<CorpusEntry>> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// `rows x cols` votes: entry is an index into `topics` or [`ABSTAIN`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMatrix {
    pub topics: Vec<TopicId>,
    pub lf_ids: Vec<String>,
    pub rows: usize,
    pub cols: usize,
    data: Vec<i32>,
}

impl LabelMatrix {
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> i32 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[i32] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    /// Builds a matrix from raw votes; used for hand-written fixtures.
    pub fn from_votes(topics: Vec<TopicId>, lf_ids: Vec<String>, votes: Vec<Vec<i32>>) -> Result<Self> {
        let cols = lf_ids.len();
        let mut data = Vec::with_capacity(votes.len() * cols);
        for (i, row) in votes.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::LengthMismatch(row.len(), cols));
            }
            for &v in row {
                if v != ABSTAIN && (v < 0 || v as usize >= topics.len()) {
                    return Err(Error::invalid(format!("row {i}: vote {v} is not a topic index")));
                }
            }
            data.extend_from_slice(row);
        }
        Ok(LabelMatrix {
            topics,
            lf_ids,
            rows: votes.len(),
            cols,
            data,
        })
    }
}

pub fn apply_lfs<S: AsRef<str> + Sync>(lfs: &[LabelingFunction], corpus: &[S]) -> Result<LabelMatrix> {
    if lfs.is_empty() {
        return Err(Error::invalid("no labelling functions"));
    }
    let topics: Vec<TopicId> = lfs
        .iter()
        .map(|lf| lf.topic.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: BTreeMap<&str, i32> = topics
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i as i32))
        .collect();
    let lf_topic: Vec<i32> = lfs.iter().map(|lf| index[lf.topic.as_str()]).collect();
    let rows = par::map(corpus, |text| {
        lfs.iter()
            .zip(&lf_topic)
            .map(|(lf, &t)| if lf.votes(text.as_ref()) { t } else { ABSTAIN })
            .collect::<Vec<i32>>()
    });
    Ok(LabelMatrix {
        topics,
        lf_ids: lfs.iter().map(|lf| lf.lf_id.clone()).collect(),
        rows: corpus.len(),
        cols: lfs.len(),
        data: rows.concat(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Majority,
    Weighted,
}

impl std::str::FromStr for Policy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "majority" => Ok(Policy::Majority),
            "weighted" => Ok(Policy::Weighted),
            other => Err(Error::invalid(format!("unknown policy `{other}`"))),
        }
    }
}

/// Gold labels for a labelled sample, used to estimate per-LF accuracy.
pub struct GoldSet<'a> {
    pub matrix: &'a LabelMatrix,
    pub labels: &'a [Option<TopicId>],
}

/// Laplace-smoothed accuracy of each LF over the texts it voted on:
/// `(correct + 1) / (votes + 2)`. An LF that never votes gets 0.5.
pub fn lf_accuracies(gold: &GoldSet<'_>) -> Result<Vec<f64>> {
    let m = gold.matrix;
    if gold.labels.len() != m.rows {
        return Err(Error::LengthMismatch(gold.labels.len(), m.rows));
    }
    let mut acc = Vec::with_capacity(m.cols);
    for j in 0..m.cols {
        let (mut votes, mut correct) = (0usize, 0usize);
        for (i, label) in gold.labels.iter().enumerate() {
            let v = m.get(i, j);
            if v == ABSTAIN {
                continue;
            }
            votes += 1;
            if label.as_deref() == Some(m.topics[v as usize].as_str()) {
                correct += 1;
            }
        }
        acc.push((correct as f64 + 1.0) / (votes as f64 + 2.0));
    }
    Ok(acc)
}

/// One topic per text; `None` means unlabelled (all abstained or a tie).
pub fn aggregate(
    matrix: &LabelMatrix,
    policy: Policy,
    gold: Option<&GoldSet<'_>>,
) -> Result<Vec<Option<TopicId>>> {
    let weights = match policy {
        Policy::Majority => vec![1.0; matrix.cols],
        Policy::Weighted => {
            let gold = gold.ok_or_else(|| Error::invalid("weighted aggregation needs a gold set"))?;
            if gold.matrix.lf_ids != matrix.lf_ids || gold.matrix.topics != matrix.topics {
                return Err(Error::invalid("gold matrix uses different labelling functions"));
            }
            lf_accuracies(gold)?
        }
    };
    Ok((0..matrix.rows)
        .map(|i| plurality(matrix.row(i), &weights, matrix.topics.len()))
        .map(|w| w.map(|t| matrix.topics[t].clone()))
        .collect())
}

fn plurality(votes: &[i32], weights: &[f64], n_topics: usize) -> Option<usize> {
    let mut tally = vec![0.0f64; n_topics];
    for (&v, &w) in votes.iter().zip(weights) {
        if v != ABSTAIN {
            tally[v as usize] += w;
        }
    }
    let best = tally.iter().cloned().fold(0.0f64, f64::max);
    if best <= 0.0 {
        return None;
    }
    let mut winners = tally
        .iter()
        .enumerate()
        .filter(|(_, &t)| (t - best).abs() <= 1e-12 * best.max(1.0));
    let first = winners.next().map(|(i, _)| i);
    if winners.next().is_some() {
        None
    } else {
        first
    }
}

/// Multi-label mode: each topic's LFs form an independent binary problem, and
/// a text carries every topic for which at least one of its LFs voted.
pub fn label_multi<S: AsRef<str> + Sync>(
    lfs: &[LabelingFunction],
    corpus: &[S],
) -> Result<Vec<BTreeSet<TopicId>>> {
    let matrix = apply_lfs(lfs, corpus)?;
    Ok((0..matrix.rows)
        .map(|i| {
            matrix
                .row(i)
                .iter()
                .filter(|&&v| v != ABSTAIN)
                .map(|&v| matrix.topics[v as usize].clone())
                .collect()
        })
        .collect())
}

/// Row-normalised confusion matrix; rows are gold classes, columns predictions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// `Other` first, then topics in sorted order.
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
    pub rates: Vec<Vec<f64>>,
}

impl ConfusionMatrix {
    pub fn recall(&self, class: &str) -> Option<f64> {
        let i = self.classes.iter().position(|c| c == class)?;
        Some(self.rates[i][i])
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["actual".to_string()];
        header.extend(self.classes.iter().cloned());
        wtr.write_record(&header)?;
        for (c, row) in self.classes.iter().zip(&self.rates) {
            let mut rec = vec![c.clone()];
            rec.extend(row.iter().map(|r| format!("{r:.6}")));
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| Error::io("<confusion sink>", e))?;
        Ok(())
    }
}

fn class_of(label: &Option<TopicId>) -> &str {
    label.as_deref().unwrap_or(OTHER)
}

pub fn evaluate(predicted: &[Option<TopicId>], gold: &[Option<TopicId>]) -> Result<ConfusionMatrix> {
    if predicted.len() != gold.len() {
        return Err(Error::LengthMismatch(predicted.len(), gold.len()));
    }
    let topics: BTreeSet<&str> = predicted
        .iter()
        .chain(gold)
        .map(class_of)
        .filter(|c| *c != OTHER)
        .collect();
    let mut classes = vec![OTHER.to_string()];
    classes.extend(topics.into_iter().map(str::to_string));
    let index: BTreeMap<&str, usize> = classes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let k = classes.len();
    let mut counts = vec![vec![0u64; k]; k];
    for (p, g) in predicted.iter().zip(gold) {
        counts[index[class_of(g)]][index[class_of(p)]] += 1;
    }
    let rates = counts
        .iter()
        .map(|row| {
            let total: u64 = row.iter().sum();
            row.iter()
                .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
                .collect()
        })
        .collect();
    Ok(ConfusionMatrix {
        classes,
        counts,
        rates,
    })
}
