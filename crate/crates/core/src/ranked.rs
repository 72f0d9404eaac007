use std::cmp::Ordering;
use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::TrackIdx;

/// Which stage produced a list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Origin {
    Mf,
    Tp,
    Fused,
    Popularity,
}

/// Duplicate-free recommendation list, best first.
///
/// Scores are non-increasing and equal scores are ordered by ascending
/// track index.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedList {
    items: Vec<(TrackIdx, f64)>,
    origin: Origin,
}

/// Descending score, then ascending track index.
pub(crate) fn rank_order(a: &(TrackIdx, f64), b: &(TrackIdx, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

impl RankedList {
    /// Validates the ordering and uniqueness invariants.
    pub fn new(items: Vec<(TrackIdx, f64)>, origin: Origin) -> Result<Self> {
        let mut seen = HashSet::with_capacity(items.len());
        for &(t, s) in &items {
            if !s.is_finite() {
                return Err(Error::Contract(format!("non-finite score for track {t}")));
            }
            if !seen.insert(t) {
                return Err(Error::Contract(format!("duplicate track {t} in ranked list")));
            }
        }
        if items.windows(2).any(|w| rank_order(&w[0], &w[1]) != Ordering::Less) {
            return Err(Error::Contract("ranked list is not in rank order".into()));
        }
        Ok(RankedList { items, origin })
    }

    pub fn empty(origin: Origin) -> Self {
        RankedList {
            items: Vec::new(),
            origin,
        }
    }

    /// Sorts unique `(track, score)` candidates and keeps the best `k`.
    pub(crate) fn from_candidates(mut items: Vec<(TrackIdx, f64)>, k: usize, origin: Origin) -> Self {
        if items.len() > k {
            if k == 0 {
                items.clear();
            } else {
                items.select_nth_unstable_by(k - 1, rank_order);
                items.truncate(k);
            }
        }
        items.sort_unstable_by(rank_order);
        RankedList { items, origin }
    }

    /// Top `k` of a dense score vector, skipping `exclude` and, when
    /// `skip_zero` is set, tracks scoring exactly zero.
    pub fn top_k<S: Copy + Into<f64>>(
        scores: &[S],
        exclude: &HashSet<TrackIdx>,
        k: usize,
        skip_zero: bool,
        origin: Origin,
    ) -> Self {
        let items = scores
            .iter()
            .enumerate()
            .map(|(i, &s)| (i as TrackIdx, s.into()))
            .filter(|&(t, s)| !(skip_zero && s == 0.0) && !exclude.contains(&t))
            .collect();
        Self::from_candidates(items, k, origin)
    }

    pub fn origin(&self) -> Origin {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[(TrackIdx, f64)] {
        &self.items
    }

    pub fn tracks(&self) -> impl Iterator<Item = TrackIdx> + '_ {
        self.items.iter().map(|&(t, _)| t)
    }

    pub fn track_vec(&self) -> Vec<TrackIdx> {
        self.tracks().collect()
    }

    pub fn truncate(&mut self, k: usize) {
        self.items.truncate(k);
    }

    pub(crate) fn push_unchecked(&mut self, track: TrackIdx, score: f64) {
        self.items.push((track, score));
    }
}
