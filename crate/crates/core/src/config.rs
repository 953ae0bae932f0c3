//! Pipeline configuration: defaults, an optional TOML file, and flag
//! overrides, merged in that order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::{FusionWeights, HarmPolicy};
use crate::labels::{LABEL_COUNT, NEUTRAL_LABEL_ID};
use crate::routing::{RouterConfig, DEFAULT_OCR_MIN_ALNUM, DEFAULT_TEMPORAL_WINDOW_S};
use crate::scorers::BackendKind;

pub const EFFECTIVE_CONFIG_FILE: &str = "effective_config.toml";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {}: {detail}", path.display())]
    Read { path: PathBuf, detail: String },
    #[error("cannot parse config {}: {detail}", path.display())]
    Parse { path: PathBuf, detail: String },
    #[error("missing required setting {0}")]
    Missing(&'static str),
    #[error("invalid setting {name}: {reason}")]
    Invalid { name: &'static str, reason: String },
}

/// Fully resolved settings for one triage run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub manifest_path: PathBuf,
    pub annotations_path: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub temporal_window_s: i64,
    pub ocr_min_alnum: usize,
    pub non_harmful_labels: Vec<usize>,
    pub scorer_backend: BackendKind,
    pub remote_endpoint: Option<String>,
    pub remote_timeout_s: u64,
    pub max_inflight: usize,
    pub retry_budget: u32,
    pub weights: FusionWeights,
}

/// Weights where each entry may be left unset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialWeights {
    pub w_img: Option<f64>,
    pub w_ocr: Option<f64>,
    pub w_assoc: Option<f64>,
}

/// Any subset of [`PipelineConfig`]; the shape of config files and flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    pub manifest_path: Option<PathBuf>,
    pub annotations_path: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub temporal_window_s: Option<i64>,
    pub ocr_min_alnum: Option<usize>,
    pub non_harmful_labels: Option<Vec<usize>>,
    pub scorer_backend: Option<BackendKind>,
    pub remote_endpoint: Option<String>,
    pub remote_timeout_s: Option<u64>,
    pub max_inflight: Option<usize>,
    pub retry_budget: Option<u32>,
    pub weights: Option<PartialWeights>,
}

impl PartialConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })
    }

    /// Values set in `overrides` replace those in `self`.
    pub fn merge(self, overrides: PartialConfig) -> PartialConfig {
        let weights = match (self.weights, overrides.weights) {
            (Some(base), Some(top)) => Some(PartialWeights {
                w_img: top.w_img.or(base.w_img),
                w_ocr: top.w_ocr.or(base.w_ocr),
                w_assoc: top.w_assoc.or(base.w_assoc),
            }),
            (base, top) => top.or(base),
        };
        PartialConfig {
            manifest_path: overrides.manifest_path.or(self.manifest_path),
            annotations_path: overrides.annotations_path.or(self.annotations_path),
            out_dir: overrides.out_dir.or(self.out_dir),
            temporal_window_s: overrides.temporal_window_s.or(self.temporal_window_s),
            ocr_min_alnum: overrides.ocr_min_alnum.or(self.ocr_min_alnum),
            non_harmful_labels: overrides.non_harmful_labels.or(self.non_harmful_labels),
            scorer_backend: overrides.scorer_backend.or(self.scorer_backend),
            remote_endpoint: overrides.remote_endpoint.or(self.remote_endpoint),
            remote_timeout_s: overrides.remote_timeout_s.or(self.remote_timeout_s),
            max_inflight: overrides.max_inflight.or(self.max_inflight),
            retry_budget: overrides.retry_budget.or(self.retry_budget),
            weights,
        }
    }

    /// Fills defaults and validates.
    pub fn resolve(self) -> Result<PipelineConfig, ConfigError> {
        let defaults = FusionWeights::default();
        let weights = self.weights.unwrap_or_default();
        let config = PipelineConfig {
            manifest_path: self
                .manifest_path
                .ok_or(ConfigError::Missing("manifest_path"))?,
            annotations_path: self.annotations_path,
            out_dir: self.out_dir.ok_or(ConfigError::Missing("out_dir"))?,
            temporal_window_s: self.temporal_window_s.unwrap_or(DEFAULT_TEMPORAL_WINDOW_S),
            ocr_min_alnum: self.ocr_min_alnum.unwrap_or(DEFAULT_OCR_MIN_ALNUM),
            non_harmful_labels: self
                .non_harmful_labels
                .unwrap_or_else(|| vec![NEUTRAL_LABEL_ID]),
            scorer_backend: self.scorer_backend.unwrap_or(BackendKind::Lexicon),
            remote_endpoint: self.remote_endpoint,
            remote_timeout_s: self.remote_timeout_s.unwrap_or(60),
            max_inflight: self.max_inflight.unwrap_or(4),
            retry_budget: self.retry_budget.unwrap_or(2),
            weights: FusionWeights {
                w_img: weights.w_img.unwrap_or(defaults.w_img),
                w_ocr: weights.w_ocr.unwrap_or(defaults.w_ocr),
                w_assoc: weights.w_assoc.unwrap_or(defaults.w_assoc),
            },
        };
        config.validate()?;
        Ok(config)
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |name, reason: &str| ConfigError::Invalid {
            name,
            reason: reason.to_string(),
        };
        if self.temporal_window_s <= 0 {
            return Err(invalid("temporal_window_s", "must be > 0"));
        }
        if self.ocr_min_alnum == 0 {
            return Err(invalid("ocr_min_alnum", "must be >= 1"));
        }
        if self.max_inflight == 0 {
            return Err(invalid("max_inflight", "must be >= 1"));
        }
        if self.remote_timeout_s == 0 {
            return Err(invalid("remote_timeout_s", "must be >= 1"));
        }
        if let Some(&bad) = self.non_harmful_labels.iter().find(|&&l| l >= LABEL_COUNT) {
            return Err(invalid(
                "non_harmful_labels",
                &format!("label id {bad} is out of range"),
            ));
        }
        self.weights.validate().map_err(|e| ConfigError::Invalid {
            name: "weights",
            reason: e.to_string(),
        })?;
        match (self.scorer_backend, &self.remote_endpoint) {
            (BackendKind::Remote, None) => Err(invalid(
                "remote_endpoint",
                "required when scorer_backend = remote",
            )),
            (BackendKind::Lexicon, Some(_)) => Err(invalid(
                "remote_endpoint",
                "only allowed when scorer_backend = remote",
            )),
            _ => Ok(()),
        }
    }

    pub fn router_config(&self) -> RouterConfig {
        RouterConfig {
            temporal_window_s: self.temporal_window_s,
            ocr_min_alnum: self.ocr_min_alnum,
        }
    }

    pub fn harm_policy(&self) -> HarmPolicy {
        HarmPolicy::new(self.non_harmful_labels.iter().copied())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// Writes the effective configuration next to the audit files.
    pub fn persist(&self, out_dir: &Path) -> std::io::Result<PathBuf> {
        fs::create_dir_all(out_dir)?;
        let path = out_dir.join(EFFECTIVE_CONFIG_FILE);
        fs::write(&path, self.to_toml())?;
        Ok(path)
    }
}
