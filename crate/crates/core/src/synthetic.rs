//! Seeded desk-scale corpora.
//!
//! Tracks are split into themes and each theme into clusters of
//! `cluster_size` tracks. A theme has a dominant genre and a pool of titles;
//! a cluster adds a secondary genre and a ring order over its tracks. A
//! playlist picks a theme, maybe a title, and a few of the theme's clusters,
//! then walks a cluster ring with steps of 1 to 3. With probability
//! `jump_rate` the walk moves to another chosen cluster, and with probability
//! `noise` a position holds a random catalog track instead.

use std::fs::File;
use std::path::{Path, PathBuf};

use rand::seq::{index, IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{write_slice, Catalog, Playlist};
use crate::error::{Error, Result};
use crate::features::{GenreTable, NUM_GENRES};
use crate::TrackIdx;

const THEME_TITLES: [&[&str]; 12] = [
    &["Chill Vibes", "chill", "Lazy Sunday"],
    &["Workout", "Gym Mix", "pump up"],
    &["Road Trip", "Summer Drive", "driving"],
    &["Throwbacks", "Old School", "90s"],
    &["Country Roads", "country", "Boots"],
    &["Party", "Pregame", "turn up"],
    &["Study", "Focus", "reading"],
    &["Sad Songs", "feels", "rainy day"],
    &["Jazz Night", "smooth jazz", "Late Night"],
    &["Metal", "heavy", "Mosh Pit"],
    &["Worship", "Sunday Morning", "praise"],
    &["Latin", "Reggaeton", "Fiesta"],
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub num_playlists: usize,
    pub num_tracks: usize,
    pub num_themes: usize,
    /// Probability that a playlist position is a random catalog track.
    pub noise: f64,
    /// Probability that the walk moves to another of the playlist's clusters.
    pub jump_rate: f64,
    pub cluster_size: usize,
    /// Probability that a playlist carries a title.
    pub title_rate: f64,
    /// Fraction of playlists long enough for the 100-seed categories.
    pub long_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            num_playlists: 200,
            num_tracks: 2000,
            num_themes: 8,
            noise: 0.1,
            jump_rate: 0.1,
            cluster_size: 25,
            title_rate: 0.85,
            long_rate: 0.3,
            seed: 0,
        }
    }
}

pub struct SyntheticCorpus {
    pub catalog: Catalog,
    pub playlists: Vec<Playlist>,
    pub genres: GenreTable,
}

fn title_variant(base: &str, rng: &mut ChaCha8Rng) -> String {
    match rng.random_range(0..4) {
        0 => base.to_string(),
        1 => base.to_lowercase(),
        2 => format!("{}!!", base.to_uppercase()),
        _ => format!(" {}  ", base.replace(' ', "  ")),
    }
}

/// Generates a corpus; the same config always yields the same corpus.
pub fn generate(config: &SyntheticConfig) -> Result<SyntheticCorpus> {
    let themes = config.num_themes;
    if themes == 0 || themes > THEME_TITLES.len() || config.num_tracks < themes * 20 {
        return Err(Error::HyperParam(format!(
            "need 1..={} themes and at least 20 tracks per theme",
            THEME_TITLES.len()
        )));
    }
    for (name, p) in [("noise", config.noise), ("jump_rate", config.jump_rate), ("title_rate", config.title_rate), ("long_rate", config.long_rate)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::HyperParam(format!("{name} must be in [0, 1]")));
        }
    }
    if config.cluster_size < 5 {
        return Err(Error::HyperParam("cluster_size must be at least 5".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.num_tracks;
    let theme_of = |t: usize| t * themes / n;
    let mut genre_order: Vec<usize> = (0..NUM_GENRES).collect();
    genre_order.shuffle(&mut rng);

    // theme -> clusters -> tracks in ring order
    let mut clusters: Vec<Vec<Vec<usize>>> = Vec::with_capacity(themes);
    let mut cluster_of = vec![(0usize, 0usize); n];
    let mut secondary = vec![0usize; n];
    for th in 0..themes {
        let mut members: Vec<usize> = (0..n).filter(|&t| theme_of(t) == th).collect();
        members.shuffle(&mut rng);
        let count = (members.len() / config.cluster_size).max(1);
        let per = members.len().div_ceil(count);
        let theme_clusters: Vec<Vec<usize>> = members.chunks(per).map(<[usize]>::to_vec).collect();
        for (c, ring) in theme_clusters.iter().enumerate() {
            let dominant = genre_order[th % NUM_GENRES];
            let g = loop {
                let g = rng.random_range(0..NUM_GENRES);
                if g != dominant {
                    break g;
                }
            };
            for &t in ring {
                cluster_of[t] = (th, c);
                secondary[t] = g;
            }
        }
        clusters.push(theme_clusters);
    }

    let mut catalog = Catalog::new();
    let mut genres = GenreTable::new();
    for t in 0..n {
        let uri = format!("spotify:track:syn{t:06}");
        let artist = t / 5;
        catalog.intern(&uri, &format!("spotify:artist:syn{artist:05}"), &format!("Track {t}"), &format!("Artist {artist}"));
        let mut probs = vec![0.0f32; NUM_GENRES];
        probs[genre_order[theme_of(t) % NUM_GENRES]] = rng.random_range(0.5..0.95);
        probs[secondary[t]] = rng.random_range(0.2..0.5);
        probs[rng.random_range(0..NUM_GENRES)] += rng.random_range(0.0..0.05);
        genres.insert(uri, probs);
    }

    let mut playlists = Vec::with_capacity(config.num_playlists);
    let mut taken = vec![false; n];
    for pid in 0..config.num_playlists {
        let th = rng.random_range(0..themes);
        let theme = &clusters[th];
        let theme_len: usize = theme.iter().map(Vec::len).sum();
        let max_len = theme_len * 3 / 4;
        let len = if rng.random_bool(config.long_rate) {
            rng.random_range(110.min(max_len)..=180.min(max_len))
        } else {
            rng.random_range(8.min(max_len)..=60.min(max_len))
        };
        let title = rng
            .random_bool(config.title_rate)
            .then(|| title_variant(THEME_TITLES[th].choose(&mut rng).unwrap(), &mut rng));

        // enough clusters to hold the playlist with room to spare
        let needed = (len * 4).div_ceil(3 * config.cluster_size) + rng.random_range(0..=1);
        let chosen: Vec<usize> = index::sample(&mut rng, theme.len(), needed.clamp(1, theme.len())).into_vec();
        let mut left: Vec<usize> = chosen.iter().map(|&c| theme[c].len()).collect();
        let mut cur = 0;
        let mut pos = rng.random_range(0..theme[chosen[cur]].len());
        let mut tracks: Vec<TrackIdx> = Vec::with_capacity(len);
        while tracks.len() < len {
            let t = if rng.random_bool(config.noise) {
                rng.random_range(0..n)
            } else {
                if left[cur] == 0 || rng.random_bool(config.jump_rate) {
                    let open: Vec<usize> = (0..chosen.len()).filter(|&i| left[i] > 0).collect();
                    cur = *open.choose(&mut rng).expect("chosen clusters hold the playlist");
                    pos = rng.random_range(0..theme[chosen[cur]].len());
                } else {
                    pos += rng.random_range(1..=3);
                }
                let ring = &theme[chosen[cur]];
                pos %= ring.len();
                while taken[ring[pos]] {
                    pos = (pos + 1) % ring.len();
                }
                ring[pos]
            };
            if !taken[t] {
                taken[t] = true;
                tracks.push(t as TrackIdx);
                let (tt, tc) = cluster_of[t];
                if tt == th {
                    if let Some(i) = chosen.iter().position(|&c| c == tc) {
                        left[i] -= 1;
                    }
                }
            }
        }
        for &t in &tracks {
            taken[t as usize] = false;
        }
        playlists.push(Playlist {
            pid: pid as u64,
            title,
            tracks,
        });
    }
    Ok(SyntheticCorpus {
        catalog,
        playlists,
        genres,
    })
}

/// Writes `mpd.slice.<first>-<last>.json` and `genres.csv` into `dir`.
pub fn write_corpus(corpus: &SyntheticCorpus, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let last = corpus.playlists.len().saturating_sub(1);
    let slice = dir.join(format!("mpd.slice.0-{last}.json"));
    let file = File::create(&slice).map_err(|e| Error::io(&slice, e))?;
    write_slice(file, &corpus.catalog, &corpus.playlists).map_err(|e| Error::io(&slice, e))?;
    let genre_path = dir.join("genres.csv");
    let file = File::create(&genre_path).map_err(|e| Error::io(&genre_path, e))?;
    corpus.genres.write_csv(file, &corpus.catalog)?;
    Ok((slice, genre_path))
}

/// Two disjoint blocks of 10 tracks; playlists `0..10` hold block 0 and
/// playlists `10..20` hold block 1, each in a seeded order.
pub fn block_corpus(seed: u64) -> Vec<Playlist> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..20u64)
        .map(|pid| {
            let base = if pid < 10 { 0 } else { 10 };
            let mut tracks: Vec<TrackIdx> = (base..base + 10).collect();
            tracks.shuffle(&mut rng);
            Playlist {
                pid,
                title: None,
                tracks,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{load_corpus, make_challenge_split};
    use crate::exec::Execution;
    use crate::features::build_track_features;

    #[test]
    fn seeded_and_well_formed() {
        let cfg = SyntheticConfig::default();
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.playlists, b.playlists);
        assert_ne!(a.playlists, generate(&SyntheticConfig { seed: 1, ..cfg.clone() }).unwrap().playlists);
        assert_eq!(a.playlists.len(), 200);
        for p in &a.playlists {
            assert_eq!(p.distinct_tracks().len(), p.tracks.len());
        }
        assert!(a.playlists.iter().filter(|p| p.tracks.len() > 100).count() >= 30);
        assert!(build_track_features(&a.catalog, &a.genres).is_ok());
        assert!(make_challenge_split(&a.playlists, 5, 0).is_ok());
    }

    #[test]
    fn odd_sizes_terminate() {
        for (tracks, themes, cluster_size) in [(251, 2, 25), (160, 8, 5), (997, 3, 40), (400, 1, 400)] {
            let c = generate(&SyntheticConfig {
                num_playlists: 60,
                num_tracks: tracks,
                num_themes: themes,
                cluster_size,
                long_rate: 0.5,
                jump_rate: 0.0,
                ..Default::default()
            })
            .unwrap();
            assert!(c.playlists.iter().all(|p| p.distinct_tracks().len() == p.tracks.len()));
        }
    }

    #[test]
    fn written_corpus_loads_back() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = generate(&SyntheticConfig { num_playlists: 30, ..Default::default() }).unwrap();
        let (slice, genres) = write_corpus(&corpus, dir.path()).unwrap();
        let (catalog, playlists) = load_corpus(&[slice], Execution::Sequential).unwrap();
        assert_eq!(playlists.len(), 30);
        let uris = |c: &Catalog, p: &Playlist| p.tracks.iter().map(|&t| c.track(t).uri.clone()).collect::<Vec<_>>();
        for (x, y) in corpus.playlists.iter().zip(&playlists) {
            assert_eq!(x.title, y.title);
            assert_eq!(uris(&corpus.catalog, x), uris(&catalog, y));
        }
        let table = GenreTable::from_csv_path(&genres).unwrap();
        assert!(build_track_features(&catalog, &table).is_ok());
    }

    #[test]
    fn block_corpus_shape() {
        let pls = block_corpus(3);
        assert_eq!(pls.len(), 20);
        assert_ne!(pls[0].tracks, pls[1].tracks);
        for p in &pls {
            assert_eq!(p.distinct_tracks().len(), 10);
            let block = if p.pid < 10 { 0..10 } else { 10..20 };
            assert!(p.tracks.iter().all(|t| block.contains(t)));
        }
    }
}
