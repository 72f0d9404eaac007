//! Rank fusion of the factorization and proximity lists, and assembly of the
//! fixed-length continuation list.
//!
//! With `M = max(|mf|, |tp|)`, a track at zero-based rank `r` of a list gets
//! weight `M - r` from that list and `0` when it is absent. The fused score is
//! `(alpha_mf * w_mf + alpha_tp * w_tp) / 2`.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::features::FeatureMatrix;
use crate::mf::{HybridFactorizationModel, TrackReprs};
use crate::proximity::ProximityMatrix;
pub use crate::ranked::{Origin, RankedList};
use crate::TrackIdx;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionWeights {
    pub alpha_mf: f64,
    pub alpha_tp: f64,
}

impl Default for FusionWeights {
    fn default() -> Self {
        FusionWeights {
            alpha_mf: 0.7,
            alpha_tp: 0.3,
        }
    }
}

impl FusionWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, a) in [("alpha_mf", self.alpha_mf), ("alpha_tp", self.alpha_tp)] {
            if !(a.is_finite() && (0.0..=1.0).contains(&a)) {
                return Err(Error::HyperParam(format!("{name} must be in [0, 1], got {a}")));
            }
        }
        Ok(())
    }
}

fn check_unique(list: &RankedList, name: &str) -> Result<()> {
    let mut seen = HashSet::with_capacity(list.len());
    for t in list.tracks() {
        if !seen.insert(t) {
            return Err(Error::Contract(format!("duplicate track {t} in {name} list")));
        }
    }
    Ok(())
}

/// Fuses two ranked lists and keeps the best `k`; ties by ascending index.
pub fn fuse(list_mf: &RankedList, list_tp: &RankedList, weights: FusionWeights, k: usize) -> Result<RankedList> {
    weights.validate()?;
    check_unique(list_mf, "mf")?;
    check_unique(list_tp, "tp")?;
    let m = list_mf.len().max(list_tp.len()) as f64;

    let mut rank_weights: HashMap<TrackIdx, (f64, f64)> = HashMap::with_capacity(list_mf.len() + list_tp.len());
    for (r, t) in list_mf.tracks().enumerate() {
        rank_weights.entry(t).or_default().0 = m - r as f64;
    }
    for (r, t) in list_tp.tracks().enumerate() {
        rank_weights.entry(t).or_default().1 = m - r as f64;
    }
    let items = rank_weights
        .into_iter()
        .map(|(t, (w_mf, w_tp))| (t, (weights.alpha_mf * w_mf + weights.alpha_tp * w_tp) / 2.0))
        .collect();
    Ok(RankedList::from_candidates(items, k, Origin::Fused))
}

/// Where zero-seed playlists get their list from in fused mode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoSeedSource {
    #[default]
    Fusion,
    Mf,
    Tp,
}

/// Which model's list a submission is built from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Mf,
    Tp,
    #[default]
    Fused,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuationConfig {
    pub weights: FusionWeights,
    /// Final list length.
    pub list_len: usize,
    pub mf_candidates: usize,
    pub tp_candidates: usize,
    pub no_seed_source: NoSeedSource,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        ContinuationConfig {
            weights: FusionWeights::default(),
            list_len: 500,
            mf_candidates: 4000,
            tp_candidates: 4000,
            no_seed_source: NoSeedSource::Fusion,
        }
    }
}

/// A playlist to continue: its feature row index and visible seeds.
#[derive(Clone, Debug)]
pub struct ContinuationQuery<'a> {
    pub feature_row: usize,
    pub seeds: &'a [TrackIdx],
}

/// Trained models plus everything needed to continue playlists.
pub struct HybridRecommender<'a> {
    pub model: &'a HybridFactorizationModel,
    pub track_reprs: &'a TrackReprs,
    pub playlist_features: &'a FeatureMatrix,
    pub proximity: &'a ProximityMatrix,
    pub config: ContinuationConfig,
}

impl HybridRecommender<'_> {
    pub fn mf_list(&self, query: &ContinuationQuery<'_>) -> RankedList {
        self.model.recommend(
            self.track_reprs,
            self.playlist_features.row(query.feature_row),
            query.seeds,
            self.config.mf_candidates,
        )
    }

    pub fn tp_list(&self, query: &ContinuationQuery<'_>) -> RankedList {
        self.proximity.recommend(query.seeds, self.config.tp_candidates)
    }

    /// Exactly `list_len` tracks disjoint from the seeds.
    ///
    /// The model list is truncated to `list_len`; a short list is padded
    /// first in popularity order, then by ascending track index for tracks
    /// with no proximity mass. Padding carries negative scores below every
    /// model score.
    pub fn continue_playlist(&self, query: &ContinuationQuery<'_>, source: Source) -> Result<RankedList> {
        let n_tracks = self.proximity.n_tracks();
        let seeds: HashSet<TrackIdx> = query.seeds.iter().copied().collect();
        let available = n_tracks - seeds.iter().filter(|&&t| (t as usize) < n_tracks).count();
        if available < self.config.list_len {
            return Err(Error::Contract(format!(
                "catalog has {available} non-seed tracks, fewer than the list length {}",
                self.config.list_len
            )));
        }

        let route = match (source, query.seeds.is_empty()) {
            (Source::Fused, true) => match self.config.no_seed_source {
                NoSeedSource::Fusion => Source::Fused,
                NoSeedSource::Mf => Source::Mf,
                NoSeedSource::Tp => Source::Tp,
            },
            (s, _) => s,
        };
        let mut list = match route {
            Source::Mf => self.mf_list(query),
            Source::Tp => self.tp_list(query),
            Source::Fused => fuse(
                &self.mf_list(query),
                &self.tp_list(query),
                self.config.weights,
                self.config.list_len,
            )?,
        };
        list.truncate(self.config.list_len);
        Ok(self.pad(list, &seeds))
    }

    fn pad(&self, mut list: RankedList, seeds: &HashSet<TrackIdx>) -> RankedList {
        let target = self.config.list_len;
        if list.len() >= target {
            return list;
        }
        let mut taken: HashSet<TrackIdx> = list.tracks().collect();
        taken.extend(seeds.iter().copied());
        let mut score = list.items().last().map_or(0.0, |&(_, s)| s.min(0.0));
        let popular = self.proximity.popularity_list(&taken, target - list.len());
        let rest = (0..self.proximity.n_tracks() as TrackIdx).filter(|t| !taken.contains(t));
        let mut fill: Vec<TrackIdx> = popular.track_vec();
        let popular_set: HashSet<TrackIdx> = fill.iter().copied().collect();
        fill.extend(rest.filter(|t| !popular_set.contains(t)).take(target - list.len() - fill.len()));
        for t in fill {
            score -= 1.0;
            list.push_unchecked(t, score);
        }
        list
    }

    /// Continues every query; output order matches input order.
    pub fn continue_all(
        &self,
        queries: &[ContinuationQuery<'_>],
        source: Source,
        exec: Execution,
    ) -> Result<Vec<RankedList>> {
        exec.map(queries, |q| self.continue_playlist(q, source))
            .into_iter()
            .collect()
    }
}
