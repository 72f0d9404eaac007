//! Challenge metrics: R-precision, NDCG and CLICKS per playlist, category and
//! overall means, and Borda count aggregation across systems.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use crate::dataset::{ChallengeCategory, TestPlaylist};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::TrackIdx;

/// CLICKS value when no relevant track is recommended.
pub const NO_HIT_CLICKS: u32 = 51;

/// Partial credit for a recommended track by the artist of a missed
/// ground-truth track.
pub const ARTIST_CREDIT: f64 = 0.25;

fn require_truth(truth: &[TrackIdx]) -> Result<HashSet<TrackIdx>> {
    if truth.is_empty() {
        return Err(Error::Contract("ground truth must be nonempty".into()));
    }
    Ok(truth.iter().copied().collect())
}

/// `|G ∩ R[..|G|]| / |G|`, optionally with artist partial credit.
///
/// With `artist_of`, each recommended track in the prefix that is not itself
/// relevant earns [`ARTIST_CREDIT`] if it shares an artist with a
/// ground-truth track not yet credited. Exact matches are credited first and
/// every ground-truth track is credited at most once.
pub fn r_precision(recs: &[TrackIdx], truth: &[TrackIdx], artist_of: Option<&[u32]>) -> Result<f64> {
    let g = require_truth(truth)?;
    let prefix = &recs[..recs.len().min(g.len())];
    let exact: HashSet<TrackIdx> = prefix.iter().copied().filter(|t| g.contains(t)).collect();
    let mut numerator = exact.len() as f64;
    if let Some(artist_of) = artist_of {
        let mut open: HashMap<u32, usize> = HashMap::new();
        for t in g.iter().filter(|t| !exact.contains(t)) {
            *open.entry(artist_of[*t as usize]).or_default() += 1;
        }
        for t in prefix.iter().filter(|t| !g.contains(t)) {
            if let Some(n) = open.get_mut(&artist_of[*t as usize]).filter(|n| **n > 0) {
                *n -= 1;
                numerator += ARTIST_CREDIT;
            }
        }
    }
    Ok(numerator / g.len() as f64)
}

/// DCG over the list divided by the ideal DCG over `min(|G|, |R|)` hits.
pub fn ndcg(recs: &[TrackIdx], truth: &[TrackIdx]) -> Result<f64> {
    let g = require_truth(truth)?;
    let discount = |i: usize| 1.0 / ((i + 2) as f64).log2();
    let dcg: f64 = recs
        .iter()
        .enumerate()
        .filter(|(_, t)| g.contains(t))
        .map(|(i, _)| discount(i))
        .sum();
    let idcg: f64 = (0..g.len().min(recs.len())).map(discount).sum();
    Ok(if idcg > 0.0 { dcg / idcg } else { 0.0 })
}

/// Number of 10-track pages before the first relevant track; 51 with no hit.
pub fn clicks(recs: &[TrackIdx], truth: &[TrackIdx]) -> Result<u32> {
    let g = require_truth(truth)?;
    Ok(recs
        .iter()
        .position(|t| g.contains(t))
        .map_or(NO_HIT_CLICKS, |p| (p / 10) as u32))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaylistEval {
    pub rprec: f64,
    pub ndcg: f64,
    pub clicks: u32,
}

pub fn evaluate_playlist(recs: &[TrackIdx], truth: &[TrackIdx], artist_of: Option<&[u32]>) -> Result<PlaylistEval> {
    Ok(PlaylistEval {
        rprec: r_precision(recs, truth, artist_of)?,
        ndcg: ndcg(recs, truth)?,
        clicks: clicks(recs, truth)?,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    pub artist_credit: bool,
    pub list_len: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            artist_credit: false,
            list_len: 500,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub label: String,
    pub key: String,
    pub count: usize,
    pub rprec: f64,
    pub ndcg: f64,
    pub clicks: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    /// Categories present in the split, in table order.
    pub categories: Vec<ReportRow>,
    pub overall: ReportRow,
    /// Per-playlist results sorted by pid.
    pub playlists: Vec<(u64, ChallengeCategory, PlaylistEval)>,
    pub artist_credit: bool,
}

/// Row order of the report table.
pub const TABLE_ORDER: [ChallengeCategory; 10] = [
    ChallengeCategory::TitleFirst100,
    ChallengeCategory::TitleRandom100,
    ChallengeCategory::TitleFirst25,
    ChallengeCategory::TitleRandom25,
    ChallengeCategory::TitleFirst10,
    ChallengeCategory::NoTitleFirst10,
    ChallengeCategory::TitleFirst5,
    ChallengeCategory::NoTitleFirst5,
    ChallengeCategory::TitleFirst1,
    ChallengeCategory::TitleOnly,
];

pub const OVERALL_LABEL: &str = "All playlists combined";

fn validate_submission(
    submission: &HashMap<u64, Vec<TrackIdx>>,
    test: &[TestPlaylist],
    list_len: usize,
) -> Result<()> {
    let mut problems: BTreeMap<u64, &'static str> = BTreeMap::new();
    let test_pids: HashSet<u64> = test.iter().map(|t| t.pid).collect();
    for t in test {
        let Some(list) = submission.get(&t.pid) else {
            problems.insert(t.pid, "missing");
            continue;
        };
        let unique: HashSet<TrackIdx> = list.iter().copied().collect();
        if unique.len() != list.len() {
            problems.insert(t.pid, "duplicate tracks");
        } else if t.seeds.iter().any(|s| unique.contains(s)) {
            problems.insert(t.pid, "seed track recommended");
        } else if list.len() != list_len {
            problems.insert(t.pid, "wrong list length");
        }
    }
    for pid in submission.keys().filter(|p| !test_pids.contains(p)) {
        problems.insert(*pid, "unknown pid");
    }
    if problems.is_empty() {
        return Ok(());
    }
    let mut reasons: Vec<&str> = problems.values().copied().collect();
    reasons.sort_unstable();
    reasons.dedup();
    Err(Error::Validation {
        pids: problems.into_keys().collect(),
        reason: reasons.join(", "),
    })
}

fn mean_row(label: &str, key: &str, evals: &[&PlaylistEval]) -> ReportRow {
    let n = evals.len().max(1) as f64;
    let mut row = ReportRow {
        label: label.to_string(),
        key: key.to_string(),
        count: evals.len(),
        rprec: 0.0,
        ndcg: 0.0,
        clicks: 0.0,
    };
    for e in evals {
        row.rprec += e.rprec;
        row.ndcg += e.ndcg;
        row.clicks += e.clicks as f64;
    }
    row.rprec /= n;
    row.ndcg /= n;
    row.clicks /= n;
    row
}

/// Validates and scores a submission against the held-out playlists.
pub fn evaluate_submission(
    submission: &HashMap<u64, Vec<TrackIdx>>,
    test: &[TestPlaylist],
    artist_of: &[u32],
    options: &EvalOptions,
    exec: Execution,
) -> Result<EvalReport> {
    validate_submission(submission, test, options.list_len)?;
    let credit = options.artist_credit.then_some(artist_of);
    let evals = exec.map(test, |t| {
        evaluate_playlist(&submission[&t.pid], &t.ground_truth, credit).map(|e| (t.pid, t.category, e))
    });
    let mut playlists = evals.into_iter().collect::<Result<Vec<_>>>()?;
    playlists.sort_by_key(|&(pid, _, _)| pid);

    let categories = TABLE_ORDER
        .iter()
        .filter_map(|&c| {
            let rows: Vec<&PlaylistEval> = playlists.iter().filter(|p| p.1 == c).map(|p| &p.2).collect();
            (!rows.is_empty()).then(|| mean_row(c.label(), c.key(), &rows))
        })
        .collect();
    let all: Vec<&PlaylistEval> = playlists.iter().map(|p| &p.2).collect();
    let overall = mean_row(OVERALL_LABEL, "all", &all);
    Ok(EvalReport {
        categories,
        overall,
        playlists,
        artist_credit: options.artist_credit,
    })
}

impl EvalReport {
    fn rows(&self) -> impl Iterator<Item = &ReportRow> {
        self.categories.iter().chain(std::iter::once(&self.overall))
    }

    /// Plain-text table, one row per category plus the overall row.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# NDCG ideal gain is summed over min(|G|, |R|) positions");
        let _ = writeln!(
            out,
            "# R-precision artist partial credit: {}",
            if self.artist_credit { "on" } else { "off" }
        );
        let _ = writeln!(out, "{:<32} {:>6} {:>8} {:>8} {:>8}", "Playlist category", "n", "RPREC", "NDCG", "CLICKS");
        for r in self.rows() {
            let _ = writeln!(
                out,
                "{:<32} {:>6} {:>8.3} {:>8.3} {:>8.3}",
                r.label, r.count, r.rprec, r.ndcg, r.clicks
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("category,label,count,rprec,ndcg,clicks\n");
        for r in self.rows() {
            let _ = writeln!(out, "{},{},{},{},{},{}", r.key, r.label, r.count, r.rprec, r.ndcg, r.clicks);
        }
        out
    }
}

/// Per-metric system rankings, best first.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MetricRankings {
    pub rprec: Vec<String>,
    pub ndcg: Vec<String>,
    pub clicks: Vec<String>,
}

impl MetricRankings {
    /// Ranks systems by their overall means: R-precision and NDCG descending,
    /// CLICKS ascending; ties by system id.
    pub fn from_reports(reports: &[(String, EvalReport)]) -> Self {
        let order = |key: &dyn Fn(&EvalReport) -> f64, descending: bool| {
            let mut ids: Vec<(&str, f64)> = reports.iter().map(|(id, r)| (id.as_str(), key(r))).collect();
            ids.sort_by(|a, b| {
                let ord = a.1.total_cmp(&b.1);
                (if descending { ord.reverse() } else { ord }).then(a.0.cmp(b.0))
            });
            ids.into_iter().map(|(id, _)| id.to_string()).collect()
        };
        MetricRankings {
            rprec: order(&|r| r.overall.rprec, true),
            ndcg: order(&|r| r.overall.ndcg, true),
            clicks: order(&|r| r.overall.clicks, false),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BordaEntry {
    pub system: String,
    pub points: usize,
    /// 1-based; tied systems share a rank.
    pub rank: usize,
}

/// Borda count: in each of the three rankings of `p` systems the system at
/// zero-based position `i` earns `p - i` points.
pub fn borda(rankings: &MetricRankings) -> Result<Vec<BordaEntry>> {
    let lists = [&rankings.rprec, &rankings.ndcg, &rankings.clicks];
    let ids: HashSet<&String> = rankings.rprec.iter().collect();
    for l in lists {
        let set: HashSet<&String> = l.iter().collect();
        if set.len() != l.len() || set != ids {
            return Err(Error::Contract("metric rankings must be permutations of the same systems".into()));
        }
    }
    let p = rankings.rprec.len();
    let mut points: HashMap<&str, usize> = HashMap::new();
    for l in lists {
        for (i, id) in l.iter().enumerate() {
            *points.entry(id.as_str()).or_default() += p - i;
        }
    }
    let mut entries: Vec<BordaEntry> = points
        .into_iter()
        .map(|(system, points)| BordaEntry {
            system: system.to_string(),
            points,
            rank: 0,
        })
        .collect();
    entries.sort_by(|a, b| b.points.cmp(&a.points).then_with(|| a.system.cmp(&b.system)));
    for i in 0..entries.len() {
        entries[i].rank = if i > 0 && entries[i].points == entries[i - 1].points {
            entries[i - 1].rank
        } else {
            i + 1
        };
    }
    Ok(entries)
}
