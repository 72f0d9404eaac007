//! Playlist and track feature matrices for the factorization model.
//!
//! Playlist rows: one-hot normalized title followed by an identity block.
//! Track rows: 13 genre probabilities followed by an identity block.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::Path;

use crate::dataset::{normalize_title, Catalog, Playlist};
use crate::error::{Error, Result};
use crate::sparse::{Csr, Row};

pub const NUM_GENRES: usize = 13;

pub const GENRES: [&str; NUM_GENRES] = [
    "blues",
    "country",
    "electronic",
    "folk",
    "jazz",
    "latin",
    "metal",
    "pop",
    "rap",
    "reggae",
    "rnb",
    "rock",
    "world",
];

/// Sparse entity-by-feature matrix. Every row carries its identity feature.
pub type FeatureMatrix = Csr<f32>;
pub type FeatureRow<'a> = Row<'a, f32>;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TitleVocabulary {
    title_to_feature: BTreeMap<String, u32>,
}

impl TitleVocabulary {
    pub fn len(&self) -> usize {
        self.title_to_feature.len()
    }

    pub fn is_empty(&self) -> bool {
        self.title_to_feature.is_empty()
    }

    /// Column of a raw (unnormalized) title, if known.
    pub fn feature_of(&self, raw_title: &str) -> Option<u32> {
        self.title_to_feature.get(&normalize_title(raw_title)).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u32)> {
        self.title_to_feature.iter().map(|(k, &v)| (k.as_str(), v))
    }
}

/// Lexicographically ordered vocabulary of distinct nonempty normalized titles.
pub fn build_title_vocabulary<'a, I>(playlists: I) -> TitleVocabulary
where
    I: IntoIterator<Item = &'a Playlist>,
{
    let mut titles: BTreeMap<String, u32> = playlists
        .into_iter()
        .filter_map(Playlist::normalized_title)
        .map(|t| (t, 0))
        .collect();
    for (i, v) in titles.values_mut().enumerate() {
        *v = i as u32;
    }
    TitleVocabulary {
        title_to_feature: titles,
    }
}

/// Row `i`: 1.0 at the title column when known, plus 1.0 at `|vocab| + i`.
pub fn build_playlist_features(playlists: &[Playlist], vocab: &TitleVocabulary) -> FeatureMatrix {
    let offset = vocab.len() as u32;
    let rows = playlists.iter().enumerate().map(|(i, p)| {
        let mut row = Vec::with_capacity(2);
        if let Some(col) = p.title.as_deref().and_then(|t| vocab.feature_of(t)) {
            row.push((col, 1.0));
        }
        row.push((offset + i as u32, 1.0));
        row
    });
    Csr::from_rows(vocab.len() + playlists.len(), rows).expect("columns in range by construction")
}

/// Per-track genre probability vectors keyed by track URI.
#[derive(Clone, Debug, Default)]
pub struct GenreTable {
    rows: HashMap<String, Vec<f32>>,
}

impl GenreTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Stores a vector as-is; arity and range are checked when features are built.
    pub fn insert(&mut self, track_uri: impl Into<String>, probs: Vec<f32>) {
        self.rows.insert(track_uri.into(), probs);
    }

    pub fn get(&self, track_uri: &str) -> Option<&[f32]> {
        self.rows.get(track_uri).map(Vec::as_slice)
    }

    /// Reads the CSV format `track_uri,blues,...,world`.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| Error::Format(format!("genre table header: {e}")))?
            .clone();
        let expected: Vec<&str> = std::iter::once("track_uri").chain(GENRES).collect();
        if header.iter().collect::<Vec<_>>() != expected {
            return Err(Error::Format(format!(
                "genre table header must be `{}`",
                expected.join(",")
            )));
        }
        let mut table = GenreTable::new();
        for record in rdr.records() {
            let record = record.map_err(|e| Error::Format(format!("genre table: {e}")))?;
            let uri = record.get(0).unwrap_or_default().to_string();
            let probs = record
                .iter()
                .skip(1)
                .map(|v| {
                    v.parse::<f32>().map_err(|e| Error::TrackData {
                        track_uri: uri.clone(),
                        message: format!("bad genre value {v:?}: {e}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            validate_genres(&uri, &probs)?;
            table.insert(uri, probs);
        }
        Ok(table)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(f)
    }

    /// Writes rows in catalog order, skipping tracks without an entry.
    pub fn write_csv<W: std::io::Write>(&self, out: W, catalog: &Catalog) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let fmt = |e: csv::Error| Error::Format(format!("genre table: {e}"));
        w.write_record(std::iter::once("track_uri").chain(GENRES)).map_err(fmt)?;
        for t in catalog.tracks() {
            if let Some(probs) = self.get(&t.uri) {
                let mut rec = vec![t.uri.clone()];
                rec.extend(probs.iter().map(|p| p.to_string()));
                w.write_record(&rec).map_err(fmt)?;
            }
        }
        w.flush().map_err(|e| Error::Format(e.to_string()))
    }
}

fn validate_genres(uri: &str, probs: &[f32]) -> Result<()> {
    if probs.len() != NUM_GENRES {
        return Err(Error::TrackData {
            track_uri: uri.to_string(),
            message: format!("expected {NUM_GENRES} genre probabilities, got {}", probs.len()),
        });
    }
    if let Some(bad) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::TrackData {
            track_uri: uri.to_string(),
            message: format!("genre probability {bad} outside [0, 1]"),
        });
    }
    Ok(())
}

/// Row `i`: nonzero genre probabilities in columns `0..13`, plus 1.0 at `13 + i`.
pub fn build_track_features(catalog: &Catalog, genres: &GenreTable) -> Result<FeatureMatrix> {
    let mut rows = Vec::with_capacity(catalog.len());
    for (i, track) in catalog.tracks().iter().enumerate() {
        let mut row = Vec::new();
        if let Some(probs) = genres.get(&track.uri) {
            validate_genres(&track.uri, probs)?;
            row.extend(
                probs
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p != 0.0)
                    .map(|(g, &p)| (g as u32, p)),
            );
        }
        row.push(((NUM_GENRES + i) as u32, 1.0));
        rows.push(row);
    }
    Csr::from_rows(NUM_GENRES + catalog.len(), rows)
}
