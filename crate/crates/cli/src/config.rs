//! Config file loading and flag/config merging.

use std::path::{Path, PathBuf};

use atmocluster::{KMeansParams, LabelStrategy, MlsmoteParams};
use serde::Deserialize;

use crate::Failure;

/// Contents of a TOML config file. Every key is optional here; each command
/// decides which keys it requires after flags have been merged in.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub dataset: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    /// Dataset to assign with the fitted model; defaults to the fitting data.
    pub assign_dataset: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub k: Option<usize>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub mlsmote: MlsmoteSection,
    #[serde(default)]
    pub kmeans: KMeansSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlsmoteSection {
    pub enabled: Option<bool>,
    pub k: Option<usize>,
    pub strategy: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KMeansSection {
    pub max_iter: Option<usize>,
    pub tol: Option<f64>,
    pub normalize: Option<bool>,
}

pub const DEFAULT_K: usize = 4;

impl FileConfig {
    /// Reads `path`; relative paths inside it resolve against its directory.
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        let mut config: Self = toml::from_str(&text)
            .map_err(|e| Failure::Validation(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut config.dataset,
            &mut config.reference,
            &mut config.assign_dataset,
            &mut config.output,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }
}

/// Flag value if given, else config value.
pub fn pick<T>(flag: Option<T>, config: Option<T>) -> Option<T> {
    flag.or(config)
}

pub fn require<T>(value: Option<T>, what: &str) -> Result<T, Failure> {
    value.ok_or_else(|| Failure::Validation(format!("missing {what}")))
}

pub fn require_seed(value: Option<u64>) -> Result<u64, Failure> {
    value.ok_or_else(|| {
        Failure::Validation("missing seed: set `seed` in the config or pass --seed".into())
    })
}

pub fn existing(path: PathBuf, what: &str) -> Result<PathBuf, Failure> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Failure::Validation(format!(
            "{what} `{}` does not exist",
            path.display()
        )))
    }
}

pub fn mlsmote_params(
    seed: u64,
    k: Option<usize>,
    strategy: Option<String>,
) -> Result<MlsmoteParams, Failure> {
    let mut params = MlsmoteParams::new(seed);
    if let Some(k) = k {
        if k == 0 {
            return Err(Failure::Validation("mlsmote k must be at least 1".into()));
        }
        params.k = k;
    }
    if let Some(s) = strategy {
        params.strategy = s.parse::<LabelStrategy>()?;
    }
    Ok(params)
}

pub fn kmeans_params(
    k: usize,
    seed: u64,
    max_iter: Option<usize>,
    tol: Option<f64>,
) -> Result<KMeansParams, Failure> {
    if k == 0 {
        return Err(Failure::Validation("k must be at least 1".into()));
    }
    let mut params = KMeansParams::new(k, seed);
    if let Some(m) = max_iter {
        if m == 0 {
            return Err(Failure::Validation("max_iter must be at least 1".into()));
        }
        params.max_iter = m;
    }
    if let Some(t) = tol {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Failure::Validation(format!("tol must be finite and non-negative, got {t}")));
        }
        params.tol = t;
    }
    Ok(params)
}
