use std::path::PathBuf;
use std::process::ExitCode;

use apc_cli::pipeline;
use apc_cli::{init_threads, CliResult, PipelineConfig};
use apc_core::fusion::Source;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "apc", version, about = "Hybrid playlist continuation pipeline")]
struct Cli {
    /// TOML config file; COCO_* environment variables override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads; 1 runs the deterministic sequential paths, 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    Mf,
    Tp,
    Fused,
}

impl From<SourceArg> for Source {
    fn from(s: SourceArg) -> Self {
        match s {
            SourceArg::Mf => Source::Mf,
            SourceArg::Tp => Source::Tp,
            SourceArg::Fused => Source::Fused,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic corpus and genre table to paths.corpus.
    GenSynthetic {
        #[arg(long)]
        playlists: Option<usize>,
        #[arg(long)]
        tracks: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Hold out challenge-style test playlists.
    Split,
    /// Train the factorization model.
    Train,
    /// Build the track proximity matrix.
    BuildProximity,
    /// Write a submission file for the test playlists.
    Recommend {
        #[arg(long, value_enum, default_value = "fused")]
        source: SourceArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a submission against the held-out tracks.
    Evaluate { submission: PathBuf },
    /// Rank several submissions by Borda count.
    Borda {
        #[arg(required = true)]
        submissions: Vec<PathBuf>,
    },
    /// Split, train, build-proximity, recommend and evaluate.
    Run,
}

fn run(cli: Cli) -> CliResult<()> {
    let mut config = PipelineConfig::load(cli.config.as_deref(), std::env::vars())?;
    let exec = init_threads(cli.threads)?;
    match cli.command {
        Command::GenSynthetic { playlists, tracks, seed } => {
            let s = &mut config.synthetic;
            s.num_playlists = playlists.unwrap_or(s.num_playlists);
            s.num_tracks = tracks.unwrap_or(s.num_tracks);
            s.seed = seed.unwrap_or(s.seed);
            let (slice, genres) = pipeline::cmd_gen_synthetic(&config)?;
            println!("{}\n{}", slice.display(), genres.display());
        }
        Command::Split => {
            let (train, test) = pipeline::cmd_split(&config, exec)?;
            println!("train playlists: {train}\ntest playlists: {test}");
        }
        Command::Train => println!("{}", pipeline::cmd_train(&config, exec)?.display()),
        Command::BuildProximity => println!("{}", pipeline::cmd_build_proximity(&config, exec)?.display()),
        Command::Recommend { source, out } => {
            println!("{}", pipeline::cmd_recommend(&config, source.into(), out.as_deref(), exec)?.display())
        }
        Command::Evaluate { submission } => print!("{}", pipeline::cmd_evaluate(&config, &submission, exec)?.to_table()),
        Command::Borda { submissions } => {
            print!("{}", pipeline::borda_table(&pipeline::cmd_borda(&config, &submissions, exec)?))
        }
        Command::Run => print!("{}", pipeline::cmd_run(&config, exec)?.to_table()),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.one_line());
            ExitCode::FAILURE
        }
    }
}
