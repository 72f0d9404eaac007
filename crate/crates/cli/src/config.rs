//! Pipeline configuration: one TOML file plus `COCO_` environment overrides.
//!
//! `COCO_MF__EPOCHS=20` sets `mf.epochs`; a double underscore separates table
//! levels. Values are parsed as TOML and fall back to plain strings.

use std::path::{Path, PathBuf};

use apc_core::fusion::ContinuationConfig;
use apc_core::mf::HyperParams;
use apc_core::synthetic::SyntheticConfig;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{CliError, CliResult};

pub const ENV_PREFIX: &str = "COCO_";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub synthetic: SyntheticConfig,
    pub split: SplitConfig,
    pub mf: HyperParams,
    pub proximity: ProximityConfig,
    pub continuation: ContinuationConfig,
    pub evaluation: EvaluationConfig,
    pub team: Option<TeamInfo>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Slice file or directory of slice files.
    pub corpus: PathBuf,
    /// Defaults to `genres.csv` inside the corpus directory.
    pub genres: Option<PathBuf>,
    pub work_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            corpus: PathBuf::from("data"),
            genres: None,
            work_dir: PathBuf::from("work"),
        }
    }
}

impl Paths {
    pub fn genres(&self) -> PathBuf {
        self.genres.clone().unwrap_or_else(|| {
            let dir = if self.corpus.is_file() {
                self.corpus.parent().unwrap_or(Path::new(".")).to_path_buf()
            } else {
                self.corpus.clone()
            };
            dir.join("genres.csv")
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub per_category: usize,
    pub rng_seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            per_category: 10,
            rng_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProximityConfig {
    pub window: usize,
}

impl Default for ProximityConfig {
    fn default() -> Self {
        ProximityConfig {
            window: apc_core::proximity::DEFAULT_WINDOW,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub artist_credit: bool,
}

/// Written as the `team_info` header of submission files.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeamInfo {
    pub name: String,
    pub track: String,
    pub email: String,
}

fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Applies `COCO_` variables from `vars` on top of `table`.
pub fn apply_env_overrides<I>(table: &mut Table, vars: I) -> CliResult<()>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut vars: Vec<(String, String)> = vars.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    vars.sort();
    for (key, raw) in vars {
        let path: Vec<String> = key[ENV_PREFIX.len()..].split("__").map(str::to_lowercase).collect();
        if path.iter().any(String::is_empty) {
            return Err(CliError::Config(format!("malformed override variable {key}")));
        }
        let (leaf, tables) = path.split_last().expect("split yields at least one part");
        let mut cur = &mut *table;
        for name in tables {
            let next = cur.entry(name.clone()).or_insert_with(|| Value::Table(Table::new()));
            cur = match next {
                Value::Table(t) => t,
                _ => return Err(CliError::Config(format!("{key}: {name} is not a table"))),
            };
        }
        cur.insert(leaf.clone(), parse_value(&raw));
    }
    Ok(())
}

impl PipelineConfig {
    /// Reads `path` (if any), applies overrides from `vars` and validates.
    pub fn load<I>(path: Option<&Path>, vars: I) -> CliResult<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                text.parse::<Table>()
                    .map_err(|e| CliError::Config(format!("{}: {}", p.display(), e.message())))?
            }
            None => Table::new(),
        };
        apply_env_overrides(&mut table, vars)?;
        let config: PipelineConfig = table.try_into().map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.mf.validate()?;
        self.continuation.weights.validate()?;
        if self.proximity.window == 0 {
            return Err(CliError::Config("proximity.window must be positive".into()));
        }
        if self.continuation.list_len == 0 {
            return Err(CliError::Config("continuation.list_len must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars(v: &[(&str, &str)]) -> Vec<(String, String)> {
        v.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults_without_file() {
        let c = PipelineConfig::load(None, vars(&[])).unwrap();
        assert_eq!(c, PipelineConfig::default());
        assert_eq!(c.mf.num_factors, 200);
        assert_eq!(c.continuation.list_len, 500);
        assert_eq!(c.paths.genres(), PathBuf::from("data/genres.csv"));
    }

    #[test]
    fn file_then_env() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(
            &p,
            "[mf]\nepochs = 3\nlearning_rate = 0.1\n[continuation]\nno_seed_source = \"tp\"\n[continuation.weights]\nalpha_mf = 0.5\n",
        )
        .unwrap();
        let c = PipelineConfig::load(
            Some(&p),
            vars(&[
                ("COCO_MF__EPOCHS", "7"),
                ("COCO_PATHS__WORK_DIR", "/tmp/w"),
                ("COCO_CONTINUATION__WEIGHTS__ALPHA_TP", "0.25"),
                ("HOME", "/root"),
            ]),
        )
        .unwrap();
        assert_eq!(c.mf.epochs, 7);
        assert_eq!(c.mf.learning_rate, 0.1);
        assert_eq!(c.paths.work_dir, PathBuf::from("/tmp/w"));
        assert_eq!(c.continuation.weights.alpha_mf, 0.5);
        assert_eq!(c.continuation.weights.alpha_tp, 0.25);
        assert_eq!(c.continuation.no_seed_source, apc_core::fusion::NoSeedSource::Tp);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(matches!(
            PipelineConfig::load(None, vars(&[("COCO_MF__EPOCS", "3")])),
            Err(CliError::Config(_))
        ));
        assert!(PipelineConfig::load(None, vars(&[("COCO_MF__LEARNING_RATE", "-1")])).is_err());
        assert!(PipelineConfig::load(None, vars(&[("COCO_MF__EPOCHS__X", "1")])).is_err());
        assert!(PipelineConfig::load(None, vars(&[("COCO_", "1")])).is_err());
    }
}
