use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use meta4::bertis::BertisConfig;
use meta4::model::Meta4Config;
use serde::{Deserialize, Serialize};

/// Relative `--out` paths are resolved against this directory when set.
pub const OUTPUT_ROOT_ENV: &str = "META4_OUTPUT_ROOT";

/// Everything a training run depends on. Read from TOML; every field is
/// optional and command-line flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Labeled text CSV for `train-bertis`.
    pub corpus: Option<PathBuf>,
    /// Pose dataset directory for `train-meta4`.
    pub data: Option<PathBuf>,
    /// Trained schema classifier used to label segments without an override.
    pub bertis_model: Option<PathBuf>,
    pub bertis: BertisConfig,
    pub meta4: Meta4Config,
    pub split: SplitConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    /// Speakers kept out of training. Unset holds out the last speaker id
    /// (when there are at least two); an empty list holds out nobody.
    pub held_out_speakers: Option<Vec<String>>,
    /// Share of the seen speakers' segments reserved for testing.
    pub seen_test_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            held_out_speakers: None,
            seen_test_fraction: 0.2,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.bertis.validate()?;
        self.meta4.validate()?;
        if !(0.0..1.0).contains(&self.split.seen_test_fraction) {
            bail!(
                "split.seen_test_fraction must be in [0, 1), got {}",
                self.split.seen_test_fraction
            );
        }
        Ok(())
    }
}

/// A parsed configuration together with the exact text it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub source: Option<String>,
}

impl LoadedConfig {
    /// Reads `path` (defaults when absent) and applies a `--seed` override.
    pub fn load(path: Option<&Path>, seed: Option<u64>) -> Result<Self> {
        let (mut config, source) = match path {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                let config: RunConfig =
                    toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?;
                (config, Some(text))
            }
            None => (RunConfig::default(), None),
        };
        if let Some(seed) = seed {
            config.seed = seed;
        }
        Ok(Self { config, source })
    }

    /// Writes `config.toml` (the file as given, byte for byte, or the
    /// defaults when none was given) and `resolved.toml` (after overrides).
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let resolved = toml::to_string(&self.config).context("serializing config")?;
        let original = self.source.clone().unwrap_or_else(|| resolved.clone());
        write(&dir.join("config.toml"), original)?;
        write(&dir.join("resolved.toml"), resolved)
    }
}

pub fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write(path, serde_json::to_string_pretty(value)? + "\n")
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Applies the output-root override to a relative output path.
pub fn output_path(path: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if path.is_relative() && !root.is_empty() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}
