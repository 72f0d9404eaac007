//! Pipeline stages. Each stage reads the artifacts of earlier stages from the
//! work directory and writes its own; the catalog is rebuilt from the corpus
//! every time, so artifacts only hold playlist splits, models and lists.

use std::collections::HashMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use apc_core::dataset::{
    corpus_files, load_corpus, make_challenge_split, read_test_jsonl, read_train_jsonl, write_test_jsonl,
    write_train_jsonl, Catalog, Playlist, TestPlaylist,
};
use apc_core::features::{
    build_playlist_features, build_title_vocabulary, build_track_features, FeatureMatrix, GenreTable,
};
use apc_core::fusion::{ContinuationQuery, HybridRecommender, Source};
use apc_core::metrics::{borda, evaluate_submission, BordaEntry, EvalOptions, EvalReport, MetricRankings};
use apc_core::mf::{build_interactions, train_warp, HybridFactorizationModel};
use apc_core::proximity::{build_proximity, ProximityMatrix};
use apc_core::synthetic::{generate, write_corpus};
use apc_core::{Execution, TrackIdx};

use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};
use crate::submission::{read_submission, write_submission};

/// Artifact locations inside the work directory.
pub struct Artifacts {
    pub work_dir: PathBuf,
}

impl Artifacts {
    pub fn new(config: &PipelineConfig) -> Self {
        Artifacts {
            work_dir: config.paths.work_dir.clone(),
        }
    }

    pub fn train(&self) -> PathBuf {
        self.work_dir.join("train.jsonl")
    }

    pub fn test(&self) -> PathBuf {
        self.work_dir.join("test.jsonl")
    }

    pub fn model(&self) -> PathBuf {
        self.work_dir.join("model.bin")
    }

    pub fn proximity(&self) -> PathBuf {
        self.work_dir.join("proximity.bin")
    }

    pub fn submission(&self, source: Source) -> PathBuf {
        let name = match source {
            Source::Mf => "mf",
            Source::Tp => "tp",
            Source::Fused => "fused",
        };
        self.work_dir.join(format!("submission_{name}.csv"))
    }
}

fn require(path: &Path, stage: &'static str, producer: &'static str) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingArtifact {
            stage,
            producer,
            path: path.to_path_buf(),
        })
    }
}

fn create(path: &Path) -> CliResult<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path).map_err(|e| CliError::io(path, e))
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| CliError::io(path, e))?))
}

fn load_catalog(config: &PipelineConfig, stage: &'static str, exec: Execution) -> CliResult<(Catalog, Vec<Playlist>)> {
    require(&config.paths.corpus, stage, "gen-synthetic")?;
    let files = corpus_files(&config.paths.corpus)?;
    Ok(load_corpus(&files, exec)?)
}

/// Writes a synthetic corpus and genre table into the corpus directory.
pub fn cmd_gen_synthetic(config: &PipelineConfig) -> CliResult<(PathBuf, PathBuf)> {
    let corpus = generate(&config.synthetic)?;
    Ok(write_corpus(&corpus, &config.paths.corpus)?)
}

/// Splits the corpus into `train.jsonl` and `test.jsonl`.
pub fn cmd_split(config: &PipelineConfig, exec: Execution) -> CliResult<(usize, usize)> {
    let (catalog, playlists) = load_catalog(config, "split", exec)?;
    let split = make_challenge_split(&playlists, config.split.per_category, config.split.rng_seed)?;
    let art = Artifacts::new(config);
    write_train_jsonl(create(&art.train())?, &catalog, &split.train).map_err(|e| CliError::io(art.train(), e))?;
    write_test_jsonl(create(&art.test())?, &catalog, &split.test).map_err(|e| CliError::io(art.test(), e))?;
    Ok((split.train.len(), split.test.len()))
}

/// Everything the model stages share.
pub struct Prepared {
    pub catalog: Catalog,
    pub train: Vec<Playlist>,
    pub test: Vec<TestPlaylist>,
    /// Rows `0..train.len()` are training playlists, the rest test playlists
    /// in file order.
    pub playlist_features: FeatureMatrix,
    pub track_features: FeatureMatrix,
}

impl Prepared {
    /// Training playlists followed by the seed-only test playlists.
    pub fn fold_in_playlists(&self) -> Vec<Playlist> {
        fold_in(&self.train, &self.test)
    }
}

fn fold_in(train: &[Playlist], test: &[TestPlaylist]) -> Vec<Playlist> {
    train
        .iter()
        .cloned()
        .chain(test.iter().map(TestPlaylist::as_seed_playlist))
        .collect()
}

pub fn prepare(config: &PipelineConfig, stage: &'static str, exec: Execution) -> CliResult<Prepared> {
    let art = Artifacts::new(config);
    require(&art.train(), stage, "split")?;
    require(&art.test(), stage, "split")?;
    let genre_path = config.paths.genres();
    require(&genre_path, stage, "gen-synthetic")?;
    let (catalog, _) = load_catalog(config, stage, exec)?;
    let train = read_train_jsonl(&art.train(), &catalog)?;
    let test = read_test_jsonl(&art.test(), &catalog)?;
    let genres = GenreTable::from_csv_path(&genre_path)?;
    let track_features = build_track_features(&catalog, &genres)?;
    let all = fold_in(&train, &test);
    let playlist_features = build_playlist_features(&all, &build_title_vocabulary(&all));
    Ok(Prepared {
        catalog,
        train,
        test,
        playlist_features,
        track_features,
    })
}

/// Trains the factorization model on training plus fold-in playlists.
pub fn cmd_train(config: &PipelineConfig, exec: Execution) -> CliResult<PathBuf> {
    let p = prepare(config, "train", exec)?;
    let interactions = build_interactions(&p.fold_in_playlists(), p.catalog.len())?;
    let model = train_warp(&interactions, &p.playlist_features, &p.track_features, &config.mf, exec)?;
    let path = Artifacts::new(config).model();
    model.write_to(create(&path)?).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

/// Builds the proximity matrix over the training playlists.
pub fn cmd_build_proximity(config: &PipelineConfig, exec: Execution) -> CliResult<PathBuf> {
    let art = Artifacts::new(config);
    require(&art.train(), "build-proximity", "split")?;
    let (catalog, _) = load_catalog(config, "build-proximity", exec)?;
    let train = read_train_jsonl(&art.train(), &catalog)?;
    let matrix = build_proximity(&train, catalog.len(), config.proximity.window, exec)?;
    let path = art.proximity();
    matrix.write_to(create(&path)?).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

pub fn load_model(config: &PipelineConfig, stage: &'static str) -> CliResult<HybridFactorizationModel> {
    let path = Artifacts::new(config).model();
    require(&path, stage, "train")?;
    Ok(HybridFactorizationModel::read_from(open(&path)?)?)
}

pub fn load_proximity(config: &PipelineConfig, stage: &'static str) -> CliResult<ProximityMatrix> {
    let path = Artifacts::new(config).proximity();
    require(&path, stage, "build-proximity")?;
    Ok(ProximityMatrix::read_from(open(&path)?)?)
}

/// `(pid, tracks)` lines in test file order.
pub type Rows = Vec<(u64, Vec<TrackIdx>)>;

/// Continues every test playlist from `source`.
pub fn recommend_all(config: &PipelineConfig, source: Source, exec: Execution) -> CliResult<(Prepared, Rows)> {
    let p = prepare(config, "recommend", exec)?;
    let model = load_model(config, "recommend")?;
    let proximity = load_proximity(config, "recommend")?;
    if model.n_playlist_features() != p.playlist_features.n_cols()
        || model.n_track_features() != p.track_features.n_cols()
    {
        return Err(CliError::Config(format!(
            "{} does not match the current split and genre table; rerun `apc train`",
            Artifacts::new(config).model().display()
        )));
    }
    if proximity.n_tracks() != p.catalog.len() {
        return Err(CliError::Config(format!(
            "{} does not match the current corpus; rerun `apc build-proximity`",
            Artifacts::new(config).proximity().display()
        )));
    }
    let reprs = model.track_representations(&p.track_features, exec);
    let recommender = HybridRecommender {
        model: &model,
        track_reprs: &reprs,
        playlist_features: &p.playlist_features,
        proximity: &proximity,
        config: config.continuation.clone(),
    };
    let queries: Vec<ContinuationQuery<'_>> = p
        .test
        .iter()
        .enumerate()
        .map(|(i, t)| ContinuationQuery {
            feature_row: p.train.len() + i,
            seeds: &t.seeds,
        })
        .collect();
    let lists = recommender.continue_all(&queries, source, exec)?;
    let rows = p.test.iter().zip(lists).map(|(t, l)| (t.pid, l.track_vec())).collect();
    Ok((p, rows))
}

/// Writes the submission for `source` to `out` or the default location.
pub fn cmd_recommend(config: &PipelineConfig, source: Source, out: Option<&Path>, exec: Execution) -> CliResult<PathBuf> {
    let (p, rows) = recommend_all(config, source, exec)?;
    let path = out.map_or_else(|| Artifacts::new(config).submission(source), Path::to_path_buf);
    write_submission(create(&path)?, config.team.as_ref(), &p.catalog, &rows).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

fn evaluate_file(
    config: &PipelineConfig,
    catalog: &Catalog,
    test: &[TestPlaylist],
    submission: &Path,
    exec: Execution,
) -> CliResult<EvalReport> {
    require(submission, "evaluate", "recommend")?;
    let lists = read_submission(submission, catalog)?;
    let options = EvalOptions {
        artist_credit: config.evaluation.artist_credit,
        list_len: config.continuation.list_len,
    };
    Ok(evaluate_submission(&lists, test, catalog.artist_of(), &options, exec)?)
}

fn load_test(config: &PipelineConfig, stage: &'static str, exec: Execution) -> CliResult<(Catalog, Vec<TestPlaylist>)> {
    let art = Artifacts::new(config);
    require(&art.test(), stage, "split")?;
    let (catalog, _) = load_catalog(config, stage, exec)?;
    let test = read_test_jsonl(&art.test(), &catalog)?;
    Ok((catalog, test))
}

/// Where the text and CSV reports for `submission` go: `reports/<stem>.txt`
/// and `reports/<stem>.csv` beside it.
pub fn report_paths(submission: &Path) -> (PathBuf, PathBuf) {
    let dir = submission.parent().unwrap_or(Path::new("")).join("reports");
    let stem = submission.file_stem().unwrap_or_default();
    let base = dir.join(stem);
    (base.with_extension("txt"), base.with_extension("csv"))
}

/// Scores a submission and writes its reports (see [`report_paths`]).
pub fn cmd_evaluate(config: &PipelineConfig, submission: &Path, exec: Execution) -> CliResult<EvalReport> {
    let (catalog, test) = load_test(config, "evaluate", exec)?;
    let report = evaluate_file(config, &catalog, &test, submission, exec)?;
    let (txt, csv) = report_paths(submission);
    for (path, body) in [(txt, report.to_table()), (csv, report.to_csv())] {
        use std::io::Write as _;
        create(&path)?.write_all(body.as_bytes()).map_err(|e| CliError::io(&path, e))?;
    }
    Ok(report)
}

/// Ranks submissions by Borda count; each system is named by its file stem.
pub fn cmd_borda(config: &PipelineConfig, submissions: &[PathBuf], exec: Execution) -> CliResult<Vec<BordaEntry>> {
    let (catalog, test) = load_test(config, "borda", exec)?;
    let mut reports = Vec::with_capacity(submissions.len());
    let mut seen = HashMap::new();
    for s in submissions {
        let id = s.file_stem().map_or_else(|| s.display().to_string(), |n| n.to_string_lossy().into_owned());
        if let Some(prev) = seen.insert(id.clone(), s) {
            return Err(CliError::Config(format!(
                "{} and {} share the system name {id}",
                prev.display(),
                s.display()
            )));
        }
        reports.push((id, evaluate_file(config, &catalog, &test, s, exec)?));
    }
    Ok(borda(&MetricRankings::from_reports(&reports))?)
}

pub fn borda_table(entries: &[BordaEntry]) -> String {
    let mut out = format!("{:<5} {:<32} {:>6}\n", "rank", "system", "points");
    for e in entries {
        out.push_str(&format!("{:<5} {:<32} {:>6}\n", e.rank, e.system, e.points));
    }
    out
}

/// Split, train, build-proximity, recommend (fused) and evaluate.
pub fn cmd_run(config: &PipelineConfig, exec: Execution) -> CliResult<EvalReport> {
    cmd_split(config, exec)?;
    cmd_train(config, exec)?;
    cmd_build_proximity(config, exec)?;
    let path = cmd_recommend(config, Source::Fused, None, exec)?;
    cmd_evaluate(config, &path, exec)
}
