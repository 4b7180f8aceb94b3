//! PCA-based nodality: the eigenvector test, per-actor inherent and active
//! scores, k-means tiers and the metric-subset search.

mod kmeans;
mod pca;
mod search;

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

pub use kmeans::{cluster, cluster_points, kmeans, KMeansConfig, KMeansFit, Tier, TierAssignment};
pub use pca::{eigenvector_test, eigenvector_test_loadings, pca, pca_columns, PcaResult};
pub use search::{search_combinations, subsets, CombinationReport, SearchConfig, SubsetResult};

use crate::error::Result;
use crate::types::ActorId;

pub const DEFAULT_EPS: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Nodality {
    pub inherent: f64,
    pub active: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NodalityScores {
    pub scores: BTreeMap<ActorId, Nodality>,
}

impl NodalityScores {
    pub fn from_pca(result: &PcaResult) -> Self {
        let scores = result
            .actors
            .iter()
            .zip(result.coordinates())
            .map(|(a, [inherent, active])| (a.clone(), Nodality { inherent, active }))
            .collect();
        NodalityScores { scores }
    }

    pub fn get(&self, actor: &str) -> Option<Nodality> {
        self.scores.get(actor).copied()
    }

    /// CSV with columns actor_id, inherent, active, tier.
    pub fn write_csv<W: Write>(&self, tiers: Option<&TierAssignment>, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["actor_id", "inherent", "active", "tier"])?;
        for (a, s) in &self.scores {
            let tier = tiers.and_then(|t| t.tier_of(a)).map(|t| t.as_str()).unwrap_or("");
            out.write_record([a.as_str(), &s.inherent.to_string(), &s.active.to_string(), tier])?;
        }
        out.flush().map_err(|e| crate::Error::io("<csv>", e))?;
        Ok(())
    }
}

pub fn read_scores_csv<R: std::io::Read>(r: R) -> Result<(NodalityScores, BTreeMap<ActorId, Tier>)> {
    #[derive(Deserialize)]
    struct Row {
        actor_id: String,
        inherent: f64,
        active: f64,
        tier: String,
    }
    let mut scores = NodalityScores::default();
    let mut tiers = BTreeMap::new();
    for row in csv::Reader::from_reader(r).deserialize() {
        let row: Row = row?;
        if !row.tier.is_empty() {
            tiers.insert(row.actor_id.clone(), row.tier.parse()?);
        }
        scores.scores.insert(
            row.actor_id,
            Nodality {
                inherent: row.inherent,
                active: row.active,
            },
        );
    }
    Ok((scores, tiers))
}
