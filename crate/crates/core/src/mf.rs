//! Hybrid latent factor model trained with the WARP ranking loss.
//!
//! A playlist's latent vector is the value-weighted sum of the embeddings of
//! its active features (title one-hot, identity); a track's likewise (genre
//! probabilities, identity). The score of a pair is the dot product of the
//! two vectors plus, with `use_biases`, the summed feature biases.
//!
//! Training walks every observed (playlist, track) pair in a seeded shuffled
//! order and samples negatives until one scores within a margin of 1 of the
//! positive. On such a violation the pairwise hinge gradient, weighted by
//! `ln(floor((|T| - 1) / samples) + 1)`, is applied to every feature row the
//! three entities touch.
//!
//! Parameters are stored as `f32`. During training they are viewed as
//! relaxed `AtomicU32` cells, so the parallel mode can apply lock-free
//! updates from several workers; lost updates are tolerated there. With a
//! single worker the same code is fully deterministic.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::sync::atomic::{AtomicU32, Ordering};

use rand::{Rng, SeedableRng};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Playlist;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::features::{FeatureMatrix, FeatureRow};
use crate::io::ByteReader;
use crate::ranked::{Origin, RankedList};
use crate::sparse::Csr;
use crate::TrackIdx;

const MAGIC: &[u8; 8] = b"APCMFMDL";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    pub num_factors: usize,
    pub l2_playlist: f32,
    pub l2_track: f32,
    pub epochs: usize,
    pub learning_rate: f32,
    pub max_sampled_negatives: usize,
    pub rng_seed: u64,
    pub candidate_list_size: usize,
    pub use_biases: bool,
    /// Embeddings start uniform in `±init_scale / sqrt(num_factors)`.
    pub init_scale: f32,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            num_factors: 200,
            l2_playlist: 1e-6,
            l2_track: 1e-6,
            epochs: 150,
            learning_rate: 0.05,
            max_sampled_negatives: 100,
            rng_seed: 0,
            candidate_list_size: 4000,
            use_biases: true,
            init_scale: 0.1,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::HyperParam(m.to_string()));
        if self.num_factors == 0 {
            return fail("num_factors must be >= 1");
        }
        if self.epochs == 0 {
            return fail("epochs must be >= 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return fail("learning_rate must be > 0");
        }
        if !(self.l2_playlist >= 0.0 && self.l2_track >= 0.0)
            || !self.l2_playlist.is_finite()
            || !self.l2_track.is_finite()
        {
            return fail("l2 penalties must be >= 0");
        }
        if self.max_sampled_negatives == 0 {
            return fail("max_sampled_negatives must be >= 1");
        }
        if self.candidate_list_size == 0 {
            return fail("candidate_list_size must be >= 1");
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return fail("init_scale must be >= 0");
        }
        Ok(())
    }
}

/// Binary playlist-by-track matrix of observed tracks.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionMatrix {
    inner: Csr<()>,
}

impl InteractionMatrix {
    pub fn n_playlists(&self) -> usize {
        self.inner.n_rows()
    }

    pub fn n_tracks(&self) -> usize {
        self.inner.n_cols()
    }

    pub fn nnz(&self) -> usize {
        self.inner.nnz()
    }

    /// Sorted, distinct tracks of playlist row `p`.
    pub fn tracks_of(&self, p: usize) -> &[u32] {
        self.inner.row(p).indices
    }

    pub fn contains(&self, p: usize, t: TrackIdx) -> bool {
        self.inner.row(p).contains(t)
    }
}

/// One row per playlist; repeated tracks collapse to one entry. For fold-in,
/// pass test playlists holding their seeds only.
pub fn build_interactions(playlists: &[Playlist], n_tracks: usize) -> Result<InteractionMatrix> {
    let rows = playlists.iter().map(|p| {
        let mut ts = p.tracks.clone();
        ts.sort_unstable();
        ts.dedup();
        ts.into_iter().map(|t| (t, ())).collect::<Vec<_>>()
    });
    let inner = Csr::from_rows(n_tracks, rows).map_err(|e| match e {
        Error::OutOfRange { index, size, .. } => Error::OutOfRange {
            what: "catalog",
            index,
            size,
        },
        other => other,
    })?;
    Ok(InteractionMatrix { inner })
}

#[derive(Clone, Debug, PartialEq)]
pub struct HybridFactorizationModel {
    num_factors: usize,
    playlist_embeddings: Vec<f32>,
    track_embeddings: Vec<f32>,
    playlist_biases: Vec<f32>,
    track_biases: Vec<f32>,
    hyperparams: HyperParams,
}

fn init_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn accumulate_plain(emb: &[f32], biases: &[f32], k: usize, row: FeatureRow<'_>, out: &mut [f32]) -> f32 {
    out.fill(0.0);
    let mut bias = 0.0;
    for (f, x) in row.iter() {
        let base = f as usize * k;
        for (o, e) in out.iter_mut().zip(&emb[base..base + k]) {
            *o += x * e;
        }
        bias += x * biases[f as usize];
    }
    bias
}

fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl HybridFactorizationModel {
    /// Fresh model with seeded uniform embeddings and zero biases.
    pub fn init(n_playlist_features: usize, n_track_features: usize, hp: &HyperParams) -> Result<Self> {
        hp.validate()?;
        let k = hp.num_factors;
        let bound = hp.init_scale / (k as f32).sqrt();
        let mut rng = init_rng(hp.rng_seed, 1);
        let mut table = |rows: usize| -> Vec<f32> {
            (0..rows * k)
                .map(|_| if bound > 0.0 { rng.random_range(-bound..bound) } else { 0.0 })
                .collect()
        };
        let playlist_embeddings = table(n_playlist_features);
        let track_embeddings = table(n_track_features);
        Ok(HybridFactorizationModel {
            num_factors: k,
            playlist_embeddings,
            track_embeddings,
            playlist_biases: vec![0.0; n_playlist_features],
            track_biases: vec![0.0; n_track_features],
            hyperparams: hp.clone(),
        })
    }

    pub fn num_factors(&self) -> usize {
        self.num_factors
    }

    pub fn hyperparams(&self) -> &HyperParams {
        &self.hyperparams
    }

    pub fn n_playlist_features(&self) -> usize {
        self.playlist_biases.len()
    }

    pub fn n_track_features(&self) -> usize {
        self.track_biases.len()
    }

    pub fn playlist_embedding(&self, feature: usize) -> &[f32] {
        &self.playlist_embeddings[feature * self.num_factors..(feature + 1) * self.num_factors]
    }

    pub fn track_embedding(&self, feature: usize) -> &[f32] {
        &self.track_embeddings[feature * self.num_factors..(feature + 1) * self.num_factors]
    }

    pub fn playlist_embedding_mut(&mut self, feature: usize) -> &mut [f32] {
        let k = self.num_factors;
        &mut self.playlist_embeddings[feature * k..(feature + 1) * k]
    }

    pub fn track_embedding_mut(&mut self, feature: usize) -> &mut [f32] {
        let k = self.num_factors;
        &mut self.track_embeddings[feature * k..(feature + 1) * k]
    }

    pub fn playlist_biases_mut(&mut self) -> &mut [f32] {
        &mut self.playlist_biases
    }

    pub fn track_biases_mut(&mut self) -> &mut [f32] {
        &mut self.track_biases
    }

    pub fn track_biases(&self) -> &[f32] {
        &self.track_biases
    }

    /// Latent vector and bias of a playlist feature row.
    pub fn playlist_vector(&self, row: FeatureRow<'_>) -> (Vec<f32>, f32) {
        let mut out = vec![0.0; self.num_factors];
        let b = accumulate_plain(&self.playlist_embeddings, &self.playlist_biases, self.num_factors, row, &mut out);
        (out, b)
    }

    /// Latent vector and bias of a track feature row.
    pub fn track_vector(&self, row: FeatureRow<'_>) -> (Vec<f32>, f32) {
        let mut out = vec![0.0; self.num_factors];
        let b = accumulate_plain(&self.track_embeddings, &self.track_biases, self.num_factors, row, &mut out);
        (out, b)
    }

    pub fn score(&self, playlist_row: FeatureRow<'_>, track_row: FeatureRow<'_>) -> f32 {
        let (u, bu) = self.playlist_vector(playlist_row);
        let (v, bv) = self.track_vector(track_row);
        let mut s = dot(&u, &v);
        if self.hyperparams.use_biases {
            s += bu + bv;
        }
        s
    }

    pub fn all_finite(&self) -> bool {
        [
            &self.playlist_embeddings,
            &self.track_embeddings,
            &self.playlist_biases,
            &self.track_biases,
        ]
        .iter()
        .all(|v| v.iter().all(|x| x.is_finite()))
    }

    /// Dense latent vectors for every track row, for ranking.
    pub fn track_representations(&self, track_features: &FeatureMatrix, exec: Execution) -> TrackReprs {
        let k = self.num_factors;
        let rows = exec.map_range(track_features.n_rows(), |t| self.track_vector(track_features.row(t)));
        let mut latents = Vec::with_capacity(rows.len() * k);
        let mut biases = Vec::with_capacity(rows.len());
        for (v, b) in rows {
            latents.extend_from_slice(&v);
            biases.push(b);
        }
        TrackReprs { k, latents, biases }
    }

    /// Scores of every track for one playlist.
    pub fn score_all(&self, reprs: &TrackReprs, playlist_row: FeatureRow<'_>) -> Vec<f32> {
        let (u, bu) = self.playlist_vector(playlist_row);
        let use_b = self.hyperparams.use_biases;
        (0..reprs.len())
            .map(|t| {
                let s = dot(&u, reprs.latent(t));
                if use_b {
                    s + bu + reprs.biases[t]
                } else {
                    s
                }
            })
            .collect()
    }

    /// Top `k` tracks by score excluding `seeds`; ties by ascending index.
    pub fn recommend(&self, reprs: &TrackReprs, playlist_row: FeatureRow<'_>, seeds: &[TrackIdx], k: usize) -> RankedList {
        let scores = self.score_all(reprs, playlist_row);
        let exclude: HashSet<TrackIdx> = seeds.iter().copied().collect();
        RankedList::top_k(&scores, &exclude, k, false, Origin::Mf)
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let hp = &self.hyperparams;
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.num_factors as u32).to_le_bytes());
        buf.extend_from_slice(&(self.n_playlist_features() as u64).to_le_bytes());
        buf.extend_from_slice(&(self.n_track_features() as u64).to_le_bytes());
        buf.extend_from_slice(&hp.l2_playlist.to_le_bytes());
        buf.extend_from_slice(&hp.l2_track.to_le_bytes());
        buf.extend_from_slice(&(hp.epochs as u32).to_le_bytes());
        buf.extend_from_slice(&hp.learning_rate.to_le_bytes());
        buf.extend_from_slice(&(hp.max_sampled_negatives as u32).to_le_bytes());
        buf.extend_from_slice(&hp.rng_seed.to_le_bytes());
        buf.extend_from_slice(&(hp.candidate_list_size as u32).to_le_bytes());
        buf.push(hp.use_biases as u8);
        buf.extend_from_slice(&hp.init_scale.to_le_bytes());
        out.write_all(&buf)?;
        for table in [
            &self.playlist_embeddings,
            &self.track_embeddings,
            &self.playlist_biases,
            &self.track_biases,
        ] {
            buf.clear();
            for x in table.iter() {
                buf.extend_from_slice(&x.to_le_bytes());
            }
            out.write_all(&buf)?;
        }
        out.flush()
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut bytes = Vec::new();
        input
            .read_to_end(&mut bytes)
            .map_err(|e| Error::Format(format!("model store: {e}")))?;
        let mut r = ByteReader::new(&bytes, "model store");
        if r.take(8)? != MAGIC {
            return Err(Error::Format("model store: bad magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("model store: unsupported version {version}")));
        }
        let k = r.u32()? as usize;
        let n_pf = r.u64()? as usize;
        let n_tf = r.u64()? as usize;
        let hp = HyperParams {
            num_factors: k,
            l2_playlist: r.f32()?,
            l2_track: r.f32()?,
            epochs: r.u32()? as usize,
            learning_rate: r.f32()?,
            max_sampled_negatives: r.u32()? as usize,
            rng_seed: r.u64()?,
            candidate_list_size: r.u32()? as usize,
            use_biases: r.u8()? != 0,
            init_scale: r.f32()?,
        };
        let mut table = |n: usize| -> Result<Vec<f32>> { (0..n).map(|_| r.f32()).collect() };
        let playlist_embeddings = table(n_pf * k)?;
        let track_embeddings = table(n_tf * k)?;
        let playlist_biases = table(n_pf)?;
        let track_biases = table(n_tf)?;
        r.finish()?;
        Ok(HybridFactorizationModel {
            num_factors: k,
            playlist_embeddings,
            track_embeddings,
            playlist_biases,
            track_biases,
            hyperparams: hp,
        })
    }
}

/// Precomputed track latent vectors and biases.
#[derive(Clone, Debug)]
pub struct TrackReprs {
    k: usize,
    latents: Vec<f32>,
    biases: Vec<f32>,
}

impl TrackReprs {
    pub fn len(&self) -> usize {
        self.biases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.biases.is_empty()
    }

    pub fn latent(&self, t: usize) -> &[f32] {
        &self.latents[t * self.k..(t + 1) * self.k]
    }
}

/// Lock-free view of the model parameters used by the training loop.
struct SharedParams<'a> {
    k: usize,
    playlist_embeddings: &'a [AtomicU32],
    track_embeddings: &'a [AtomicU32],
    track_biases: &'a [AtomicU32],
}

fn atomic_view(v: &mut [f32]) -> &[AtomicU32] {
    // SAFETY: AtomicU32 has the size and alignment of u32, which match f32.
    // The exclusive borrow rules out any non-atomic access for the lifetime
    // of the returned view.
    unsafe { &*(v as *mut [f32] as *const [AtomicU32]) }
}

#[inline]
fn load(c: &AtomicU32) -> f32 {
    f32::from_bits(c.load(Ordering::Relaxed))
}

#[inline]
fn store(c: &AtomicU32, x: f32) {
    c.store(x.to_bits(), Ordering::Relaxed)
}

impl SharedParams<'_> {
    fn represent(&self, emb: &[AtomicU32], biases: Option<&[AtomicU32]>, row: FeatureRow<'_>, out: &mut [f32]) -> f32 {
        out.fill(0.0);
        let mut bias = 0.0;
        for (f, x) in row.iter() {
            let base = f as usize * self.k;
            for (o, e) in out.iter_mut().zip(&emb[base..base + self.k]) {
                *o += x * load(e);
            }
            if let Some(b) = biases {
                bias += x * load(&b[f as usize]);
            }
        }
        bias
    }

    fn scale_row(&self, emb: &[AtomicU32], f: u32, factor: f32) {
        let base = f as usize * self.k;
        for e in &emb[base..base + self.k] {
            store(e, load(e) * factor);
        }
    }
}

/// Scratch space for one worker.
struct Scratch {
    user: Vec<f32>,
    pos: Vec<f32>,
    neg: Vec<f32>,
}

impl Scratch {
    fn new(k: usize) -> Self {
        Scratch {
            user: vec![0.0; k],
            pos: vec![0.0; k],
            neg: vec![0.0; k],
        }
    }
}

/// Applies one weighted pairwise step using representations computed before
/// the update, followed by L2 shrinkage of the touched rows.
#[allow(clippy::too_many_arguments)]
fn apply_warp_update(
    params: &SharedParams<'_>,
    hp: &HyperParams,
    scratch: &Scratch,
    playlist_row: FeatureRow<'_>,
    pos_row: FeatureRow<'_>,
    neg_row: FeatureRow<'_>,
    weight: f32,
) {
    let k = params.k;
    let step = hp.learning_rate * weight;
    let (u, vp, vn) = (&scratch.user, &scratch.pos, &scratch.neg);

    for (f, x) in playlist_row.iter() {
        let base = f as usize * k;
        for c in 0..k {
            let cell = &params.playlist_embeddings[base + c];
            store(cell, load(cell) + step * x * (vp[c] - vn[c]));
        }
    }
    for (rows, sign) in [(pos_row, 1.0f32), (neg_row, -1.0)] {
        for (g, y) in rows.iter() {
            let base = g as usize * k;
            for (cell, &uc) in params.track_embeddings[base..base + k].iter().zip(u.iter()) {
                store(cell, load(cell) + sign * step * y * uc);
            }
            if hp.use_biases {
                let b = &params.track_biases[g as usize];
                store(b, load(b) + sign * step * y);
            }
        }
    }

    let shrink_p = 1.0 - hp.learning_rate * hp.l2_playlist;
    if shrink_p != 1.0 {
        for f in playlist_row.indices {
            params.scale_row(params.playlist_embeddings, *f, shrink_p);
        }
    }
    let shrink_t = 1.0 - hp.learning_rate * hp.l2_track;
    if shrink_t != 1.0 {
        let neg_only = neg_row.indices.iter().filter(|g| !pos_row.contains(**g));
        for &g in pos_row.indices.iter().chain(neg_only) {
            params.scale_row(params.track_embeddings, g, shrink_t);
            let b = &params.track_biases[g as usize];
            store(b, load(b) * shrink_t);
        }
    }
}

/// WARP rank weight after `samples` draws over `n_tracks` tracks.
pub fn warp_weight(n_tracks: usize, samples: usize) -> f32 {
    (((n_tracks.saturating_sub(1)) / samples.max(1)) as f32 + 1.0).ln()
}

/// One forced WARP update on `model` for the given feature rows.
pub fn warp_step(
    model: &mut HybridFactorizationModel,
    playlist_row: FeatureRow<'_>,
    pos_row: FeatureRow<'_>,
    neg_row: FeatureRow<'_>,
    weight: f32,
) {
    let hp = model.hyperparams.clone();
    let k = model.num_factors;
    let mut scratch = Scratch::new(k);
    scratch.user = model.playlist_vector(playlist_row).0;
    scratch.pos = model.track_vector(pos_row).0;
    scratch.neg = model.track_vector(neg_row).0;
    let params = SharedParams {
        k,
        playlist_embeddings: atomic_view(&mut model.playlist_embeddings),
        track_embeddings: atomic_view(&mut model.track_embeddings),
        track_biases: atomic_view(&mut model.track_biases),
    };
    apply_warp_update(&params, &hp, &scratch, playlist_row, pos_row, neg_row, weight);
}

struct TrainData<'a> {
    interactions: &'a InteractionMatrix,
    playlist_features: &'a FeatureMatrix,
    track_features: &'a FeatureMatrix,
    hp: &'a HyperParams,
}

/// Runs WARP over `positives`; returns the number of updates applied.
fn run_positives(
    params: &SharedParams<'_>,
    playlist_biases: Option<&[AtomicU32]>,
    data: &TrainData<'_>,
    positives: &[(u32, u32)],
    rng: &mut ChaCha8Rng,
) -> usize {
    let hp = data.hp;
    let n_tracks = data.interactions.n_tracks() as u32;
    let mut scratch = Scratch::new(params.k);
    let mut updates = 0;
    let biases = |b| if hp.use_biases { Some(b) } else { None };
    for &(p, t) in positives {
        let prow = data.playlist_features.row(p as usize);
        let pos_row = data.track_features.row(t as usize);
        let bp = params.represent(params.playlist_embeddings, playlist_biases, prow, &mut scratch.user);
        let bt = params.represent(params.track_embeddings, biases(params.track_biases), pos_row, &mut scratch.pos);
        let pos_score = dot(&scratch.user, &scratch.pos) + bp + bt;

        for sampled in 1..=hp.max_sampled_negatives {
            let neg = rng.random_range(0..n_tracks);
            if data.interactions.contains(p as usize, neg) {
                continue;
            }
            let neg_row = data.track_features.row(neg as usize);
            let bn = params.represent(params.track_embeddings, biases(params.track_biases), neg_row, &mut scratch.neg);
            let neg_score = dot(&scratch.user, &scratch.neg) + bp + bn;
            if neg_score > pos_score - 1.0 {
                let weight = warp_weight(n_tracks as usize, sampled);
                apply_warp_update(params, hp, &scratch, prow, pos_row, neg_row, weight);
                updates += 1;
                break;
            }
        }
    }
    updates
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EpochStats {
    pub epoch: usize,
    pub positives: usize,
    pub updates: usize,
}

/// Epoch-at-a-time WARP training.
pub struct WarpTrainer<'a> {
    data: TrainData<'a>,
    model: HybridFactorizationModel,
    positives: Vec<(u32, u32)>,
    rng: ChaCha8Rng,
    epoch: usize,
    exec: Execution,
}

impl<'a> WarpTrainer<'a> {
    pub fn new(
        interactions: &'a InteractionMatrix,
        playlist_features: &'a FeatureMatrix,
        track_features: &'a FeatureMatrix,
        hp: &'a HyperParams,
        exec: Execution,
    ) -> Result<Self> {
        hp.validate()?;
        if interactions.n_playlists() != playlist_features.n_rows() {
            return Err(Error::Contract(format!(
                "{} interaction rows but {} playlist feature rows",
                interactions.n_playlists(),
                playlist_features.n_rows()
            )));
        }
        if interactions.n_tracks() != track_features.n_rows() {
            return Err(Error::Contract(format!(
                "{} interaction columns but {} track feature rows",
                interactions.n_tracks(),
                track_features.n_rows()
            )));
        }
        let model = HybridFactorizationModel::init(playlist_features.n_cols(), track_features.n_cols(), hp)?;
        let positives = (0..interactions.n_playlists())
            .flat_map(|p| interactions.tracks_of(p).iter().map(move |&t| (p as u32, t)))
            .collect();
        Ok(WarpTrainer {
            data: TrainData {
                interactions,
                playlist_features,
                track_features,
                hp,
            },
            model,
            positives,
            rng: init_rng(hp.rng_seed, 2),
            epoch: 0,
            exec,
        })
    }

    pub fn model(&self) -> &HybridFactorizationModel {
        &self.model
    }

    pub fn into_model(self) -> HybridFactorizationModel {
        self.model
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    pub fn run_epoch(&mut self) -> Result<EpochStats> {
        self.epoch += 1;
        self.positives.shuffle(&mut self.rng);
        let k = self.model.num_factors;
        let m = &mut self.model;
        let params = SharedParams {
            k,
            playlist_embeddings: atomic_view(&mut m.playlist_embeddings),
            track_embeddings: atomic_view(&mut m.track_embeddings),
            track_biases: atomic_view(&mut m.track_biases),
        };
        let playlist_biases = if self.data.hp.use_biases {
            Some(atomic_view(&mut m.playlist_biases) as &[AtomicU32])
        } else {
            None
        };

        let workers = self.exec.workers().min(self.positives.len().max(1));
        let updates = if workers <= 1 {
            run_positives(&params, playlist_biases, &self.data, &self.positives, &mut self.rng)
        } else {
            let chunk = self.positives.len().div_ceil(workers);
            let chunks: Vec<(&[(u32, u32)], ChaCha8Rng)> = self
                .positives
                .chunks(chunk)
                .map(|c| (c, ChaCha8Rng::from_rng(&mut self.rng)))
                .collect();
            run_parallel(&params, playlist_biases, &self.data, chunks)
        };

        if !self.model.all_finite() {
            return Err(Error::Diverged { epoch: self.epoch });
        }
        Ok(EpochStats {
            epoch: self.epoch,
            positives: self.positives.len(),
            updates,
        })
    }
}

#[cfg(feature = "parallel")]
fn run_parallel(
    params: &SharedParams<'_>,
    playlist_biases: Option<&[AtomicU32]>,
    data: &TrainData<'_>,
    chunks: Vec<(&[(u32, u32)], ChaCha8Rng)>,
) -> usize {
    use rayon::prelude::*;
    chunks
        .into_par_iter()
        .map(|(c, mut rng)| run_positives(params, playlist_biases, data, c, &mut rng))
        .sum()
}

#[cfg(not(feature = "parallel"))]
fn run_parallel(
    params: &SharedParams<'_>,
    playlist_biases: Option<&[AtomicU32]>,
    data: &TrainData<'_>,
    chunks: Vec<(&[(u32, u32)], ChaCha8Rng)>,
) -> usize {
    chunks
        .into_iter()
        .map(|(c, mut rng)| run_positives(params, playlist_biases, data, c, &mut rng))
        .sum()
}

/// Trains for `hp.epochs` epochs.
pub fn train_warp(
    interactions: &InteractionMatrix,
    playlist_features: &FeatureMatrix,
    track_features: &FeatureMatrix,
    hp: &HyperParams,
    exec: Execution,
) -> Result<HybridFactorizationModel> {
    let mut trainer = WarpTrainer::new(interactions, playlist_features, track_features, hp, exec)?;
    for _ in 0..hp.epochs {
        trainer.run_epoch()?;
    }
    Ok(trainer.into_model())
}

/// Mean hinge `max(0, 1 - (s(p, pos) - s(p, neg)))` over probe triples.
pub fn mean_violation_margin(
    model: &HybridFactorizationModel,
    playlist_features: &FeatureMatrix,
    track_features: &FeatureMatrix,
    probes: &[(usize, TrackIdx, TrackIdx)],
) -> f64 {
    if probes.is_empty() {
        return 0.0;
    }
    let total: f64 = probes
        .iter()
        .map(|&(p, pos, neg)| {
            let prow = playlist_features.row(p);
            let sp = model.score(prow, track_features.row(pos as usize));
            let sn = model.score(prow, track_features.row(neg as usize));
            (1.0 - (sp - sn) as f64).max(0.0)
        })
        .sum();
    total / probes.len() as f64
}
