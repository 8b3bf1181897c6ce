//! Run configuration: optional TOML/JSON file, reference-value defaults,
//! flag-wins merging.

use anyhow::{bail, Context};
use serde::Deserialize;
use std::path::{Path, PathBuf};

/// Pipeline-wide settings. Every default is the reference value; any flag
/// with the same meaning overrides the file.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    /// Samples requested per user.
    pub n_gen: usize,
    /// Retained samples per user after dedup.
    pub n_preds: usize,
    /// Logprob modulation strength.
    pub epsilon: f64,
    pub k1: f64,
    pub b: f64,
    pub alpha: f64,
    pub beta: f64,
    pub tau_c: f64,
    pub temperature: f64,
    pub max_output_tokens: usize,
    /// Word limits for title, category, brand, price.
    pub limits: [usize; 4],
    /// k-core threshold applied by `dedup`; 0 disables.
    pub kcore: usize,
    /// stage2, stage1_full, or stage1_valcat.
    pub split_mode: String,
    pub seed: u64,
    /// Recall cutoffs.
    pub ks: Vec<usize>,
}

/// Default stage-boundary files, used when the matching flag is absent.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub sequences: Option<PathBuf>,
    pub generations: Option<PathBuf>,
    pub rankings: Option<PathBuf>,
    pub reports: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            paths: Paths::default(),
            n_gen: 32,
            n_preds: 10,
            epsilon: 1.0 / 5000.0,
            k1: 1.5,
            b: 0.75,
            alpha: 0.125,
            beta: -0.025,
            tau_c: 0.5,
            temperature: 0.5,
            max_output_tokens: 80,
            limits: [25, 15, 15, 15],
            kcore: 5,
            split_mode: "stage2".to_string(),
            seed: 0,
            ks: vec![1, 10],
        }
    }
}

impl RunConfig {
    /// Loads a TOML (`.toml`) or JSON (anything else) config file, or the
    /// defaults when no path is given.
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        let config = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).with_context(|| format!("parsing TOML config {}", path.display()))?
        } else {
            serde_json::from_str(&text)
                .with_context(|| format!("parsing JSON config {}", path.display()))?
        };
        Ok(config)
    }

    /// A flag value, the config value, or an error naming the flag.
    pub fn require_path(
        flag_value: Option<PathBuf>,
        config_value: &Option<PathBuf>,
        flag: &str,
    ) -> anyhow::Result<PathBuf> {
        if let Some(path) = flag_value.or_else(|| config_value.clone()) {
            return Ok(path);
        }
        bail!("missing required path: pass --{flag} or set paths.{flag} in the config file");
    }
}
