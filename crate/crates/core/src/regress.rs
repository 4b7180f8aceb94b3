//! Group-level linear model of share of influence on inherent and active
//! nodality.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::influence::InfluenceRecord;
use crate::ingest::GroupAssignment;
use crate::nodality::NodalityScores;
use crate::types::{TopicId, Window};

pub const PREDICTORS: [&str; 5] = ["intercept", "inherent", "active", "interaction", "time"];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregate {
    #[default]
    Mean,
    Sum,
}

impl Aggregate {
    pub fn as_str(self) -> &'static str {
        match self {
            Aggregate::Mean => "mean",
            Aggregate::Sum => "sum",
        }
    }
}

impl fmt::Display for Aggregate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Aggregate {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Aggregate::Mean),
            "sum" => Ok(Aggregate::Sum),
            _ => Err(Error::invalid(format!("unknown aggregate `{s}` (expected mean or sum)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignRow {
    pub group: String,
    pub topic: TopicId,
    /// Index of the window in the topic's window sequence.
    pub window: usize,
    pub phi: f64,
    pub inherent: f64,
    pub active: f64,
    pub interaction: f64,
    pub time: f64,
}

impl DesignRow {
    fn predictors(&self) -> [f64; 5] {
        [1.0, self.inherent, self.active, self.interaction, self.time]
    }
}

/// One row per influence record. Group nodality comes from the scores of
/// the record's window; members without a score in that window (absent
/// from both networks) are skipped.
pub fn build_design(
    influence: &[InfluenceRecord],
    scores: &BTreeMap<Window, NodalityScores>,
    groups: &GroupAssignment,
    topic: &str,
    aggregate: Aggregate,
) -> Result<Vec<DesignRow>> {
    let members = groups.groups();
    let index: BTreeMap<Window, usize> = scores.keys().enumerate().map(|(i, w)| (*w, i)).collect();
    let mut rows = Vec::with_capacity(influence.len());
    for rec in influence {
        let &t = index.get(&rec.window).ok_or_else(|| {
            Error::WindowMismatch(format!("no nodality scores for window starting {}", rec.window.start_date()))
        })?;
        let snap = &scores[&rec.window];
        let ids = members.get(&rec.group).ok_or_else(|| Error::EmptyGroup(rec.group.clone()))?;
        let present: Vec<_> = ids.iter().filter_map(|a| snap.get(a)).collect();
        if present.is_empty() {
            return Err(Error::EmptyGroup(format!("{} in window {}", rec.group, rec.window.start_date())));
        }
        let scale = match aggregate {
            Aggregate::Mean => 1.0 / present.len() as f64,
            Aggregate::Sum => 1.0,
        };
        let row = DesignRow {
            group: rec.group.clone(),
            topic: topic.to_string(),
            window: t,
            phi: rec.phi,
            inherent: scale * present.iter().map(|s| s.inherent).sum::<f64>(),
            active: scale * present.iter().map(|s| s.active).sum::<f64>(),
            interaction: scale * present.iter().map(|s| s.inherent * s.active).sum::<f64>(),
            time: t as f64,
        };
        if !row.predictors().iter().chain([&row.phi]).all(|v| v.is_finite()) {
            return Err(Error::invalid(format!("non-finite design value for group {}", row.group)));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_design_csv<W: Write>(rows: &[DesignRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn read_design_csv<R: Read>(r: R) -> Result<Vec<DesignRow>> {
    let mut rows = Vec::new();
    for row in csv::Reader::from_reader(r).deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    /// `None` when the standard error is 0 and the estimate is not.
    pub t_value: Option<f64>,
    pub p_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub coefficients: Vec<Coefficient>,
    pub n: usize,
    pub r_squared: f64,
    pub robust: bool,
    pub aggregate: Option<Aggregate>,
}

impl RegressionResult {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["name", "estimate", "std_error", "t_value", "p_value"])?;
        for c in &self.coefficients {
            out.write_record([
                c.name.clone(),
                c.estimate.to_string(),
                c.std_error.to_string(),
                c.t_value.map(|t| t.to_string()).unwrap_or_default(),
                c.p_value.to_string(),
            ])?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// HC1 heteroskedasticity-robust standard errors.
    pub robust: bool,
    /// Recorded in the result; does not change the fit.
    pub aggregate: Option<Aggregate>,
}

/// Columns that add nothing beyond the columns before them.
fn dependent_columns(x: &DMatrix<f64>) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut bad = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let norm = col.norm();
        let mut r = col.clone();
        // two passes keep the projection accurate
        for _ in 0..2 {
            for q in &basis {
                let d = q.dot(&r);
                r -= q * d;
            }
        }
        let rn = r.norm();
        if norm == 0.0 || rn <= 1e-10 * norm {
            bad.push(j);
        } else {
            basis.push(r / rn);
        }
    }
    bad
}

pub fn fit_ols(rows: &[DesignRow], opts: &FitOptions) -> Result<RegressionResult> {
    let p = PREDICTORS.len();
    let n = rows.len();
    if n <= p {
        return Err(Error::TooFewRows { needed: p + 1, got: n });
    }
    let x = DMatrix::from_fn(n, p, |i, j| rows[i].predictors()[j]);
    let y = DVector::from_iterator(n, rows.iter().map(|r| r.phi));
    let bad = dependent_columns(&x);
    if !bad.is_empty() {
        return Err(Error::RankDeficient(bad.into_iter().map(|j| PREDICTORS[j].to_string()).collect()));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let qty = qr.q().transpose() * &y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::RankDeficient(vec!["<triangular solve>".into()]))?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| Error::RankDeficient(vec!["<triangular solve>".into()]))?;
    let xtx_inv = &r_inv * r_inv.transpose();

    let resid = &y - &x * &beta;
    let ssr = resid.norm_squared();
    let mean = y.mean();
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let r_squared = if sst > 0.0 { (1.0 - ssr / sst).clamp(0.0, 1.0) } else { 0.0 };
    let df = (n - p) as f64;

    let cov = if opts.robust {
        let mut meat = DMatrix::zeros(p, p);
        for i in 0..n {
            let xi = x.row(i).transpose();
            meat += &xi * xi.transpose() * resid[i].powi(2);
        }
        &xtx_inv * meat * &xtx_inv * (n as f64 / df)
    } else {
        &xtx_inv * (ssr / df)
    };
    let t_dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::invalid(e.to_string()))?;
    let coefficients = (0..p)
        .map(|j| {
            let se = cov[(j, j)].max(0.0).sqrt();
            let est = beta[j];
            let (t_value, p_value) = if se > 0.0 {
                let t = est / se;
                (Some(t), (2.0 * (1.0 - t_dist.cdf(t.abs()))).clamp(0.0, 1.0))
            } else if est == 0.0 {
                (Some(0.0), 1.0)
            } else {
                (None, 0.0)
            };
            Coefficient {
                name: PREDICTORS[j].to_string(),
                estimate: est,
                std_error: se,
                t_value,
                p_value,
            }
        })
        .collect();
    Ok(RegressionResult {
        coefficients,
        n,
        r_squared,
        robust: opts.robust,
        aggregate: opts.aggregate,
    })
}
