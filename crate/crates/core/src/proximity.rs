//! Windowed track co-occurrence.
//!
//! Two occurrences at positions `a < b` of the same playlist with
//! `b - a < d` add `1 - (b - a) / d` to the entry of their track pair.
//! Same-track pairs are dropped, so the diagonal is never stored.

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};

use crate::dataset::Playlist;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::ranked::{Origin, RankedList};
use crate::sparse::Csr;
use crate::TrackIdx;

pub const DEFAULT_WINDOW: usize = 10;

/// Playlists per shard in the parallel build. Fixed so the merge tree, and
/// therefore the floating-point result, does not depend on the thread count.
const SHARD_PLAYLISTS: usize = 256;

const MAGIC: &[u8; 8] = b"APCPROX\0";
const FORMAT_VERSION: u32 = 1;

/// Sparse symmetric proximity matrix, stored as its strict upper triangle.
#[derive(Clone, Debug)]
pub struct ProximityMatrix {
    n_tracks: usize,
    window: usize,
    upper: Csr<f64>,
    // Both triangles, derived from `upper`; rows are what scoring walks.
    full: Csr<f64>,
    popularity: Vec<f64>,
}

impl PartialEq for ProximityMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.n_tracks == other.n_tracks
            && self.window == other.window
            && self.upper.triplets().map(|(i, j, v)| (i, j, v.to_bits())).eq(other
                .upper
                .triplets()
                .map(|(i, j, v)| (i, j, v.to_bits())))
    }
}

type Pair = u64;

fn pair_key(a: TrackIdx, b: TrackIdx) -> Pair {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    ((lo as u64) << 32) | hi as u64
}

fn unpair(k: Pair) -> (u32, u32) {
    ((k >> 32) as u32, k as u32)
}

/// Accumulates one shard; contributions land in (playlist, a, b) order.
fn accumulate(playlists: &[Playlist], window: usize) -> Vec<(Pair, f64)> {
    let mut acc: HashMap<Pair, f64> = HashMap::new();
    let d = window as f64;
    for p in playlists {
        let tracks = &p.tracks;
        for a in 0..tracks.len() {
            let end = (a + window).min(tracks.len());
            for b in a + 1..end {
                if tracks[a] == tracks[b] {
                    continue;
                }
                *acc.entry(pair_key(tracks[a], tracks[b])).or_insert(0.0) += 1.0 - (b - a) as f64 / d;
            }
        }
    }
    let mut out: Vec<_> = acc.into_iter().collect();
    out.sort_unstable_by_key(|&(k, _)| k);
    out
}

fn merge(left: Vec<(Pair, f64)>, right: Vec<(Pair, f64)>) -> Vec<(Pair, f64)> {
    let mut out = Vec::with_capacity(left.len() + right.len());
    let mut r = right.into_iter().peekable();
    for (k, v) in left {
        while let Some(&(rk, rv)) = r.peek() {
            if rk < k {
                out.push((rk, rv));
                r.next();
            } else {
                break;
            }
        }
        match r.peek() {
            Some(&(rk, rv)) if rk == k => {
                out.push((k, v + rv));
                r.next();
            }
            _ => out.push((k, v)),
        }
    }
    out.extend(r);
    out
}

/// Builds the proximity matrix over tracks `0..n_tracks`.
///
/// The sequential path is one shard. The parallel path accumulates fixed-size
/// shards independently and merges them pairwise in shard order, which may
/// differ from the sequential result in the last bits.
pub fn build_proximity(
    playlists: &[Playlist],
    n_tracks: usize,
    window: usize,
    exec: Execution,
) -> Result<ProximityMatrix> {
    if window == 0 {
        return Err(Error::Contract("proximity window must be >= 1".into()));
    }
    if let Some(&t) = playlists
        .iter()
        .flat_map(|p| &p.tracks)
        .find(|&&t| t as usize >= n_tracks)
    {
        return Err(Error::OutOfRange {
            what: "catalog",
            index: t as usize,
            size: n_tracks,
        });
    }

    let entries = if exec.is_parallel() && playlists.len() > SHARD_PLAYLISTS {
        let shards: Vec<&[Playlist]> = playlists.chunks(SHARD_PLAYLISTS).collect();
        let mut level = exec.map(&shards, |s| accumulate(s, window));
        while level.len() > 1 {
            let mut pairs = Vec::with_capacity(level.len().div_ceil(2));
            let mut it = level.into_iter();
            while let Some(l) = it.next() {
                pairs.push((l, it.next()));
            }
            level = par_merge(exec, pairs);
        }
        level.pop().unwrap_or_default()
    } else {
        accumulate(playlists, window)
    };

    Ok(ProximityMatrix::from_sorted_entries(n_tracks, window, &entries))
}

type Entries = Vec<(Pair, f64)>;

fn par_merge(exec: Execution, pairs: Vec<(Entries, Option<Entries>)>) -> Vec<Entries> {
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return pairs
            .into_par_iter()
            .map(|(l, r)| match r {
                Some(r) => merge(l, r),
                None => l,
            })
            .collect();
    }
    let _ = exec;
    pairs
        .into_iter()
        .map(|(l, r)| match r {
            Some(r) => merge(l, r),
            None => l,
        })
        .collect()
}

impl ProximityMatrix {
    fn from_sorted_entries(n_tracks: usize, window: usize, entries: &[(Pair, f64)]) -> Self {
        let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n_tracks];
        for &(k, v) in entries {
            let (i, j) = unpair(k);
            rows[i as usize].push((j, v));
        }
        let upper = Csr::from_rows(n_tracks, rows).expect("valid upper triangle");
        Self::from_upper(window, upper)
    }

    fn from_upper(window: usize, upper: Csr<f64>) -> Self {
        let n = upper.n_rows();
        let lower = upper.transpose();
        let full = Csr::from_rows(
            n,
            (0..n).map(|i| lower.row(i).iter().chain(upper.row(i).iter()).collect()),
        )
        .expect("valid symmetric matrix");
        let popularity = (0..n).map(|i| full.row(i).values.iter().sum()).collect();
        ProximityMatrix {
            n_tracks: n,
            window,
            upper,
            full,
            popularity,
        }
    }

    pub fn n_tracks(&self) -> usize {
        self.n_tracks
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Number of stored pairs `i < j`.
    pub fn nnz(&self) -> usize {
        self.upper.nnz()
    }

    /// `S[i][j]`, zero when not stored (always zero on the diagonal).
    pub fn get(&self, i: TrackIdx, j: TrackIdx) -> f64 {
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        if lo == hi {
            return 0.0;
        }
        self.upper.row(lo as usize).get(hi).unwrap_or(0.0)
    }

    /// Stored upper-triangle entries `(i, j, value)` with `i < j`.
    pub fn triplets(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        self.upper.triplets().map(|(i, j, v)| (i as u32, j, v))
    }

    /// Full symmetric row of track `i`.
    pub fn neighbors(&self, i: TrackIdx) -> impl Iterator<Item = (TrackIdx, f64)> + '_ {
        self.full.row(i as usize).iter()
    }

    /// `g[i] = sum over seeds j of S[j][i]`; repeated seeds count once.
    pub fn score(&self, seeds: &[TrackIdx]) -> Vec<f64> {
        let mut g = vec![0.0; self.n_tracks];
        let mut seen = HashSet::with_capacity(seeds.len());
        for &j in seeds {
            if seen.insert(j) {
                for (i, v) in self.neighbors(j) {
                    g[i as usize] += v;
                }
            }
        }
        g
    }

    /// Row sums of `S`, i.e. `g` with every track as a seed.
    pub fn popularity(&self) -> &[f64] {
        &self.popularity
    }

    /// Top `k` non-seed tracks by `g`, or by popularity when `seeds` is
    /// empty. Zero-score tracks are left out.
    pub fn recommend(&self, seeds: &[TrackIdx], k: usize) -> RankedList {
        if seeds.is_empty() {
            return self.popularity_list(&HashSet::new(), k);
        }
        let exclude: HashSet<TrackIdx> = seeds.iter().copied().collect();
        RankedList::top_k(&self.score(seeds), &exclude, k, true, Origin::Tp)
    }

    pub fn popularity_list(&self, exclude: &HashSet<TrackIdx>, k: usize) -> RankedList {
        RankedList::top_k(&self.popularity, exclude, k, true, Origin::Popularity)
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&FORMAT_VERSION.to_le_bytes())?;
        out.write_all(&(self.n_tracks as u64).to_le_bytes())?;
        out.write_all(&(self.window as u32).to_le_bytes())?;
        out.write_all(&(self.nnz() as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(16 * 4096);
        for (i, j, v) in self.triplets() {
            buf.extend_from_slice(&i.to_le_bytes());
            buf.extend_from_slice(&j.to_le_bytes());
            buf.extend_from_slice(&v.to_le_bytes());
            if buf.len() >= 16 * 4096 {
                out.write_all(&buf)?;
                buf.clear();
            }
        }
        out.write_all(&buf)?;
        out.flush()
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut bytes = Vec::new();
        input
            .read_to_end(&mut bytes)
            .map_err(|e| Error::Format(format!("proximity store: {e}")))?;
        let mut r = crate::io::ByteReader::new(&bytes, "proximity store");
        if r.take(8)? != MAGIC {
            return Err(Error::Format("proximity store: bad magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("proximity store: unsupported version {version}")));
        }
        let n_tracks = r.u64()? as usize;
        let window = r.u32()? as usize;
        let nnz = r.u64()? as usize;
        let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n_tracks];
        let mut prev: Option<(u32, u32)> = None;
        for _ in 0..nnz {
            let (i, j, v) = (r.u32()?, r.u32()?, r.f64()?);
            if i >= j || j as usize >= n_tracks || prev.is_some_and(|p| p >= (i, j)) {
                return Err(Error::Format(format!("proximity store: bad entry ({i}, {j})")));
            }
            prev = Some((i, j));
            rows[i as usize].push((j, v));
        }
        r.finish()?;
        let upper = Csr::from_rows(n_tracks, rows)?;
        Ok(Self::from_upper(window, upper))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pl(tracks: &[u32]) -> Playlist {
        Playlist {
            pid: 0,
            title: None,
            tracks: tracks.to_vec(),
        }
    }

    fn approx(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn three_track_example() {
        let s = build_proximity(&[pl(&[0, 1, 2])], 3, 10, Execution::Sequential).unwrap();
        assert!(approx(s.get(0, 1), 0.9));
        assert!(approx(s.get(1, 2), 0.9));
        assert!(approx(s.get(0, 2), 0.8));
        assert_eq!(s.get(2, 0), s.get(0, 2));
        assert_eq!(s.get(1, 1), 0.0);

        let g = s.score(&[1]);
        assert!(approx(g[0], 0.9) && g[1] == 0.0 && approx(g[2], 0.9));

        let pop = s.popularity();
        assert!(approx(pop[0], 1.7) && approx(pop[1], 1.8) && approx(pop[2], 1.7));

        let rec = s.recommend(&[0], 2);
        assert_eq!(rec.track_vec(), vec![1, 2]);
        assert!(approx(rec.items()[0].1, 0.9) && approx(rec.items()[1].1, 0.8));

        assert_eq!(s.recommend(&[], 3).track_vec(), vec![1, 0, 2]);
        assert!(s.recommend(&[0, 1, 2], 3).is_empty());
    }

    #[test]
    fn distance_equal_to_window_contributes_nothing() {
        let s = build_proximity(&[pl(&[0, 1, 2])], 3, 2, Execution::Sequential).unwrap();
        assert!(approx(s.get(0, 1), 0.5));
        assert_eq!(s.get(0, 2), 0.0);
        assert_eq!(s.nnz(), 2);
    }

    #[test]
    fn single_track_playlist_adds_nothing() {
        let s = build_proximity(&[pl(&[4])], 5, 10, Execution::Sequential).unwrap();
        assert_eq!(s.nnz(), 0);
        assert!(s.popularity().iter().all(|&p| p == 0.0));
        let empty = build_proximity(&[], 0, 10, Execution::Sequential).unwrap();
        assert!(empty.popularity().is_empty());
    }

    #[test]
    fn adjacency_in_three_playlists_sums() {
        let pls = [pl(&[0, 1]), pl(&[5, 0, 1]), pl(&[1, 0, 7])];
        let s = build_proximity(&pls, 8, 10, Execution::Sequential).unwrap();
        assert!(approx(s.get(0, 1), 2.7));
    }

    #[test]
    fn same_track_pairs_are_dropped() {
        let s = build_proximity(&[pl(&[3, 3, 4])], 5, 10, Execution::Sequential).unwrap();
        assert_eq!(s.get(3, 3), 0.0);
        assert!(approx(s.get(3, 4), 0.9 + 0.8));
    }

    #[test]
    fn invalid_inputs() {
        assert!(build_proximity(&[pl(&[0, 1])], 2, 0, Execution::Sequential).is_err());
        assert!(build_proximity(&[pl(&[0, 9])], 2, 10, Execution::Sequential).is_err());
    }

    #[test]
    fn seed_linearity() {
        let pls = [pl(&[0, 1, 2, 3, 4]), pl(&[4, 2, 0, 5])];
        let s = build_proximity(&pls, 6, 3, Execution::Sequential).unwrap();
        let ga = s.score(&[0]);
        let gb = s.score(&[4]);
        let gab = s.score(&[0, 4]);
        for i in 0..6 {
            assert_eq!(gab[i], ga[i] + gb[i]);
        }
    }

    #[test]
    fn store_roundtrip_is_bit_exact() {
        let pls: Vec<_> = (0..50u32).map(|i| pl(&[(i * 7) % 31, (i * 3) % 31, i % 31, (i + 5) % 31])).collect();
        let s = build_proximity(&pls, 31, 10, Execution::Sequential).unwrap();
        let mut buf = Vec::new();
        s.write_to(&mut buf).unwrap();
        let back = ProximityMatrix::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, s);
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(buf, again);
        assert!(ProximityMatrix::read_from(&buf[..buf.len() - 3]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(ProximityMatrix::read_from(bad.as_slice()).is_err());
    }

    fn corpus_strategy() -> impl Strategy<Value = (Vec<Vec<u32>>, usize)> {
        (2usize..30).prop_flat_map(|n| {
            (
                prop::collection::vec(prop::collection::vec(0..n as u32, 0..25), 0..12),
                Just(n),
            )
        })
    }

    proptest! {
        #[test]
        fn symmetric_bounded_and_monotone((lists, n) in corpus_strategy(), d in 1usize..12, extra in prop::collection::vec(0u32..2, 0..10)) {
            let pls: Vec<_> = lists.iter().map(|t| pl(t)).collect();
            let s = build_proximity(&pls, n, d, Execution::Sequential).unwrap();
            for i in 0..n as u32 {
                for j in 0..n as u32 {
                    prop_assert_eq!(s.get(i, j), s.get(j, i));
                    let both = pls.iter().filter(|p| p.tracks.contains(&i) && p.tracks.contains(&j)).count();
                    // a playlist with repeats can hold several pairs of (i, j)
                    let pairs: usize = pls.iter().map(|p| {
                        let ci = p.tracks.iter().filter(|&&t| t == i).count();
                        let cj = p.tracks.iter().filter(|&&t| t == j).count();
                        ci * cj
                    }).sum();
                    if i != j {
                        prop_assert!(s.get(i, j) <= pairs as f64 * (1.0 - 1.0 / d as f64) + 1e-9);
                        if both == 0 { prop_assert_eq!(s.get(i, j), 0.0); }
                    }
                }
            }
            for (_, _, v) in s.triplets() {
                prop_assert!(v > 0.0);
            }
            let mut more = pls.clone();
            more.push(pl(&extra));
            let s2 = build_proximity(&more, n, d, Execution::Sequential).unwrap();
            for (i, j, v) in s.triplets() {
                prop_assert!(s2.get(i, j) >= v);
            }
        }

        #[test]
        fn popularity_is_column_sum((lists, n) in corpus_strategy()) {
            let pls: Vec<_> = lists.iter().map(|t| pl(t)).collect();
            let s = build_proximity(&pls, n, 10, Execution::Sequential).unwrap();
            let all: Vec<u32> = (0..n as u32).collect();
            let g = s.score(&all);
            for (a, b) in g.iter().zip(s.popularity()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn parallel_build_matches_sequential_structure() {
        let pls: Vec<_> = (0..2000u32)
            .map(|i| pl(&(0..20).map(|k| (i * 13 + k * 7) % 500).collect::<Vec<_>>()))
            .collect();
        let seq = build_proximity(&pls, 500, 10, Execution::Sequential).unwrap();
        let par = build_proximity(&pls, 500, 10, Execution::Parallel).unwrap();
        let par2 = build_proximity(&pls, 500, 10, Execution::Parallel).unwrap();
        assert_eq!(par, par2);
        assert_eq!(seq.nnz(), par.nnz());
        for ((i, j, a), (k, l, b)) in seq.triplets().zip(par.triplets()) {
            assert_eq!((i, j), (k, l));
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }
}
