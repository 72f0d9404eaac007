//! Playlist corpus ingestion, URI interning, title normalization and the
//! ten-category local evaluation split.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::TrackIdx;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Track {
    pub index: TrackIdx,
    pub uri: String,
    pub artist_uri: String,
    pub name: String,
    pub artist_name: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Playlist {
    pub pid: u64,
    /// Raw title as ingested; normalization happens at feature time.
    pub title: Option<String>,
    /// Track order as ingested; the list index is the zero-based position.
    pub tracks: Vec<TrackIdx>,
}

impl Playlist {
    /// Tracks with repeats removed, keeping the first occurrence.
    pub fn distinct_tracks(&self) -> Vec<TrackIdx> {
        let mut seen = HashSet::with_capacity(self.tracks.len());
        self.tracks
            .iter()
            .copied()
            .filter(|t| seen.insert(*t))
            .collect()
    }

    pub fn normalized_title(&self) -> Option<String> {
        self.title
            .as_deref()
            .map(normalize_title)
            .filter(|t| !t.is_empty())
    }
}

/// Bidirectional mapping between track URIs and dense indices.
#[derive(Clone, Debug, Default)]
pub struct Catalog {
    uri_to_index: HashMap<String, TrackIdx>,
    tracks: Vec<Track>,
    artist_of: Vec<u32>,
    artist_uris: Vec<String>,
    artist_to_index: HashMap<String, u32>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    pub fn index_of(&self, uri: &str) -> Option<TrackIdx> {
        self.uri_to_index.get(uri).copied()
    }

    pub fn track(&self, index: TrackIdx) -> &Track {
        &self.tracks[index as usize]
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// Artist index for every track, indexed by track index.
    pub fn artist_of(&self) -> &[u32] {
        &self.artist_of
    }

    pub fn artist_uri(&self, artist: u32) -> &str {
        &self.artist_uris[artist as usize]
    }

    pub fn num_artists(&self) -> usize {
        self.artist_uris.len()
    }

    /// Returns the existing index for `uri` or appends a new track.
    pub fn intern(
        &mut self,
        uri: &str,
        artist_uri: &str,
        name: &str,
        artist_name: &str,
    ) -> TrackIdx {
        if let Some(&idx) = self.uri_to_index.get(uri) {
            return idx;
        }
        let idx = self.tracks.len() as TrackIdx;
        let artist = match self.artist_to_index.get(artist_uri) {
            Some(&a) => a,
            None => {
                let a = self.artist_uris.len() as u32;
                self.artist_uris.push(artist_uri.to_string());
                self.artist_to_index.insert(artist_uri.to_string(), a);
                a
            }
        };
        self.uri_to_index.insert(uri.to_string(), idx);
        self.artist_of.push(artist);
        self.tracks.push(Track {
            index: idx,
            uri: uri.to_string(),
            artist_uri: artist_uri.to_string(),
            name: name.to_string(),
            artist_name: artist_name.to_string(),
        });
        idx
    }

    fn resolve(&self, uri: &str) -> Result<TrackIdx> {
        self.index_of(uri)
            .ok_or_else(|| Error::Ingest(format!("track uri {uri} not in catalog")))
    }
}

// Wire shapes of the slice documents. Unknown keys are ignored by serde.

#[derive(Debug, Deserialize)]
struct RawSlice {
    playlists: Vec<RawPlaylist>,
}

#[derive(Debug, Deserialize, Serialize)]
struct RawPlaylist {
    pid: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(default)]
    tracks: Vec<RawTrack>,
}

#[derive(Debug, Deserialize, Serialize)]
struct RawTrack {
    #[serde(default)]
    pos: u64,
    track_uri: String,
    artist_uri: String,
    #[serde(default)]
    track_name: String,
    #[serde(default)]
    artist_name: String,
}

fn parse_error(file: &Path, err: serde_json::Error) -> Error {
    Error::Parse {
        file: file.display().to_string(),
        line: err.line(),
        column: err.column(),
        message: err.to_string(),
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

/// Loads one or more slice files into a catalog and playlist list.
///
/// Files are parsed with `exec`; interning runs serially in file order, so
/// track indices depend only on the order of `paths`.
pub fn load_corpus<P: AsRef<Path> + Sync>(
    paths: &[P],
    exec: Execution,
) -> Result<(Catalog, Vec<Playlist>)> {
    let parsed = exec.map(paths, |p| -> Result<RawSlice> {
        let path = p.as_ref();
        let mut text = String::new();
        open(path)?
            .read_to_string(&mut text)
            .map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| parse_error(path, e))
    });

    let mut catalog = Catalog::new();
    let mut playlists = Vec::new();
    let mut pids = HashSet::new();
    for (slice, path) in parsed.into_iter().zip(paths) {
        for raw in slice?.playlists {
            if !pids.insert(raw.pid) {
                return Err(Error::Ingest(format!(
                    "duplicate pid {} in {}",
                    raw.pid,
                    path.as_ref().display()
                )));
            }
            playlists.push(intern_playlist(&mut catalog, raw));
        }
    }
    Ok((catalog, playlists))
}

fn intern_playlist(catalog: &mut Catalog, raw: RawPlaylist) -> Playlist {
    let tracks = raw
        .tracks
        .iter()
        .map(|t| catalog.intern(&t.track_uri, &t.artist_uri, &t.track_name, &t.artist_name))
        .collect();
    Playlist {
        pid: raw.pid,
        title: raw.name,
        tracks,
    }
}

/// Expands a corpus location into slice files: a file is used as-is, a
/// directory contributes its `*.json` entries in name order.
pub fn corpus_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files = Vec::new();
    for entry in std::fs::read_dir(path).map_err(|e| Error::io(path, e))? {
        let p = entry.map_err(|e| Error::io(path, e))?.path();
        if p.extension().is_some_and(|e| e == "json") {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

/// Lowercases, strips ASCII punctuation and collapses whitespace.
pub fn normalize_title(raw: &str) -> String {
    let stripped: String = raw
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .flat_map(char::to_lowercase)
        .collect();
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChallengeCategory {
    TitleOnly,
    TitleFirst1,
    TitleFirst5,
    NoTitleFirst5,
    TitleFirst10,
    NoTitleFirst10,
    TitleFirst25,
    TitleRandom25,
    TitleFirst100,
    TitleRandom100,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeedMode {
    First,
    Random,
}

impl ChallengeCategory {
    pub const ALL: [ChallengeCategory; 10] = [
        ChallengeCategory::TitleOnly,
        ChallengeCategory::TitleFirst1,
        ChallengeCategory::TitleFirst5,
        ChallengeCategory::NoTitleFirst5,
        ChallengeCategory::TitleFirst10,
        ChallengeCategory::NoTitleFirst10,
        ChallengeCategory::TitleFirst25,
        ChallengeCategory::TitleRandom25,
        ChallengeCategory::TitleFirst100,
        ChallengeCategory::TitleRandom100,
    ];

    pub fn has_title(self) -> bool {
        !matches!(
            self,
            ChallengeCategory::NoTitleFirst5 | ChallengeCategory::NoTitleFirst10
        )
    }

    pub fn num_seeds(self) -> usize {
        use ChallengeCategory::*;
        match self {
            TitleOnly => 0,
            TitleFirst1 => 1,
            TitleFirst5 | NoTitleFirst5 => 5,
            TitleFirst10 | NoTitleFirst10 => 10,
            TitleFirst25 | TitleRandom25 => 25,
            TitleFirst100 | TitleRandom100 => 100,
        }
    }

    pub fn seed_mode(self) -> SeedMode {
        match self {
            ChallengeCategory::TitleRandom25 | ChallengeCategory::TitleRandom100 => SeedMode::Random,
            _ => SeedMode::First,
        }
    }

    /// Human-readable row label for report tables.
    pub fn label(self) -> &'static str {
        use ChallengeCategory::*;
        match self {
            TitleOnly => "No seed songs",
            TitleFirst1 => "First song",
            TitleFirst5 => "First 5 songs - with title",
            NoTitleFirst5 => "First 5 songs - without title",
            TitleFirst10 => "First 10 songs - with title",
            NoTitleFirst10 => "First 10 songs - without title",
            TitleFirst25 => "First 25 songs",
            TitleRandom25 => "Random 25 songs",
            TitleFirst100 => "First 100 songs",
            TitleRandom100 => "Random 100 songs",
        }
    }

    pub fn key(self) -> &'static str {
        use ChallengeCategory::*;
        match self {
            TitleOnly => "title_only",
            TitleFirst1 => "title_first1",
            TitleFirst5 => "title_first5",
            NoTitleFirst5 => "no_title_first5",
            TitleFirst10 => "title_first10",
            NoTitleFirst10 => "no_title_first10",
            TitleFirst25 => "title_first25",
            TitleRandom25 => "title_random25",
            TitleFirst100 => "title_first100",
            TitleRandom100 => "title_random100",
        }
    }
}

impl fmt::Display for ChallengeCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for ChallengeCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ChallengeCategory::ALL
            .into_iter()
            .find(|c| c.key() == s)
            .ok_or_else(|| Error::Ingest(format!("unknown category {s}")))
    }
}

/// A held-out playlist: visible seeds plus the tracks to be predicted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TestPlaylist {
    pub pid: u64,
    pub title: Option<String>,
    pub seeds: Vec<TrackIdx>,
    pub ground_truth: Vec<TrackIdx>,
    pub category: ChallengeCategory,
}

impl TestPlaylist {
    /// The playlist as the models see it during fold-in: seeds only.
    pub fn as_seed_playlist(&self) -> Playlist {
        Playlist {
            pid: self.pid,
            title: self.title.clone(),
            tracks: self.seeds.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalSplit {
    pub train: Vec<Playlist>,
    pub test: Vec<TestPlaylist>,
}

/// Selects `per_category` test playlists for each challenge category.
///
/// Categories are processed in [`ChallengeCategory::ALL`] order. A playlist is
/// eligible when it is not yet selected, has more distinct tracks than the
/// category's seed count and, for titled categories, a title that survives
/// normalization.
pub fn make_challenge_split(
    playlists: &[Playlist],
    per_category: usize,
    rng_seed: u64,
) -> Result<EvalSplit> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let distinct: Vec<Vec<TrackIdx>> = playlists.iter().map(Playlist::distinct_tracks).collect();
    let titled: Vec<bool> = playlists
        .iter()
        .map(|p| p.normalized_title().is_some())
        .collect();
    let mut taken = vec![false; playlists.len()];
    let mut test = Vec::with_capacity(per_category * ChallengeCategory::ALL.len());

    for category in ChallengeCategory::ALL {
        let k = category.num_seeds();
        let eligible: Vec<usize> = (0..playlists.len())
            .filter(|&i| !taken[i] && distinct[i].len() > k && (!category.has_title() || titled[i]))
            .collect();
        if eligible.len() < per_category {
            return Err(Error::InsufficientPlaylists {
                category: category.key().to_string(),
                needed: per_category,
                found: eligible.len(),
            });
        }
        for pick in index::sample(&mut rng, eligible.len(), per_category) {
            let i = eligible[pick];
            taken[i] = true;
            let (seeds, ground_truth) = split_tracks(category, &distinct[i], &mut rng);
            test.push(TestPlaylist {
                pid: playlists[i].pid,
                title: if category.has_title() {
                    playlists[i].title.clone()
                } else {
                    None
                },
                seeds,
                ground_truth,
                category,
            });
        }
    }

    let train = playlists
        .iter()
        .zip(&taken)
        .filter(|(_, &t)| !t)
        .map(|(p, _)| p.clone())
        .collect();
    Ok(EvalSplit { train, test })
}

/// Splits a deduplicated track list into seeds and ground truth for
/// `category`; ground truth keeps playlist order.
pub(crate) fn split_tracks(
    category: ChallengeCategory,
    tracks: &[TrackIdx],
    rng: &mut ChaCha8Rng,
) -> (Vec<TrackIdx>, Vec<TrackIdx>) {
    let k = category.num_seeds();
    match category.seed_mode() {
        SeedMode::First => (tracks[..k].to_vec(), tracks[k..].to_vec()),
        SeedMode::Random => {
            let mut chosen = vec![false; tracks.len()];
            for pos in index::sample(rng, tracks.len(), k) {
                chosen[pos] = true;
            }
            let mut seeds = Vec::with_capacity(k);
            let mut rest = Vec::with_capacity(tracks.len() - k);
            for (&t, &c) in tracks.iter().zip(&chosen) {
                if c {
                    seeds.push(t);
                } else {
                    rest.push(t);
                }
            }
            (seeds, rest)
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TestRecord {
    pid: u64,
    category: ChallengeCategory,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    title: Option<String>,
    seeds: Vec<String>,
    ground_truth: Vec<String>,
}

fn raw_playlist(catalog: &Catalog, p: &Playlist) -> RawPlaylist {
    RawPlaylist {
        pid: p.pid,
        name: p.title.clone(),
        tracks: p
            .tracks
            .iter()
            .enumerate()
            .map(|(pos, &t)| {
                let track = catalog.track(t);
                RawTrack {
                    pos: pos as u64,
                    track_uri: track.uri.clone(),
                    artist_uri: track.artist_uri.clone(),
                    track_name: track.name.clone(),
                    artist_name: track.artist_name.clone(),
                }
            })
            .collect(),
    }
}

fn json_line<W: Write, T: Serialize>(out: &mut W, value: &T) -> std::io::Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")
}

pub fn write_train_jsonl<W: Write>(out: W, catalog: &Catalog, playlists: &[Playlist]) -> std::io::Result<()> {
    let mut out = BufWriter::new(out);
    for p in playlists {
        json_line(&mut out, &raw_playlist(catalog, p))?;
    }
    out.flush()
}

pub fn write_test_jsonl<W: Write>(out: W, catalog: &Catalog, test: &[TestPlaylist]) -> std::io::Result<()> {
    let mut out = BufWriter::new(out);
    let uris = |ts: &[TrackIdx]| ts.iter().map(|&t| catalog.track(t).uri.clone()).collect();
    for t in test {
        let record = TestRecord {
            pid: t.pid,
            category: t.category,
            title: t.title.clone(),
            seeds: uris(&t.seeds),
            ground_truth: uris(&t.ground_truth),
        };
        json_line(&mut out, &record)?;
    }
    out.flush()
}

fn read_lines<T, F>(path: &Path, mut f: F) -> Result<Vec<T>>
where
    F: FnMut(&str, usize) -> Result<T>,
{
    let reader = BufReader::new(open(path)?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(f(&line, n + 1)?);
    }
    Ok(out)
}

fn line_error(path: &Path, line: usize, err: serde_json::Error) -> Error {
    Error::Parse {
        file: path.display().to_string(),
        line,
        column: err.column(),
        message: err.to_string(),
    }
}

/// Reads `train.jsonl`; every URI must already be in `catalog`.
pub fn read_train_jsonl(path: &Path, catalog: &Catalog) -> Result<Vec<Playlist>> {
    read_lines(path, |line, n| {
        let raw: RawPlaylist = serde_json::from_str(line).map_err(|e| line_error(path, n, e))?;
        let tracks = raw
            .tracks
            .iter()
            .map(|t| catalog.resolve(&t.track_uri))
            .collect::<Result<_>>()?;
        Ok(Playlist {
            pid: raw.pid,
            title: raw.name,
            tracks,
        })
    })
}

pub fn read_test_jsonl(path: &Path, catalog: &Catalog) -> Result<Vec<TestPlaylist>> {
    read_lines(path, |line, n| {
        let r: TestRecord = serde_json::from_str(line).map_err(|e| line_error(path, n, e))?;
        let resolve = |uris: &[String]| uris.iter().map(|u| catalog.resolve(u)).collect::<Result<Vec<_>>>();
        Ok(TestPlaylist {
            pid: r.pid,
            title: r.title,
            seeds: resolve(&r.seeds)?,
            ground_truth: resolve(&r.ground_truth)?,
            category: r.category,
        })
    })
}

/// Writes a slice document in the ingestion format.
pub fn write_slice<W: Write>(out: W, catalog: &Catalog, playlists: &[Playlist]) -> std::io::Result<()> {
    #[derive(Serialize)]
    struct Slice {
        playlists: Vec<RawPlaylist>,
    }
    let slice = Slice {
        playlists: playlists.iter().map(|p| raw_playlist(catalog, p)).collect(),
    };
    let mut out = BufWriter::new(out);
    serde_json::to_writer(&mut out, &slice)?;
    out.flush()
}
