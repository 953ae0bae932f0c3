//! Score-level fusion and the final decision.
//!
//! For every label `k` the fused score is the weighted mean
//! `sum_m w_m * s_m[k] / sum_m w_m` over the modalities that are actually
//! present. Absent modalities are left out of both sums. The decision is the
//! argmax of the fused vector, ties going to the lowest label id.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evidence::MediaId;
use crate::labels::{ScoreVector, LABEL_COUNT, NEUTRAL_LABEL_ID};
use crate::modality::{Modality, ModalitySet};
use crate::routing::RoutingOutcome;

/// Two fused scores closer than this are treated as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FusionError {
    #[error("no modality scores to fuse")]
    NoModalities,
    #[error("image scores are required for every item")]
    MissingImageScores,
    #[error("modality {0} was not available for this item")]
    UnexpectedModality(Modality),
    #[error("fused vector has {0} entries, expected {LABEL_COUNT}")]
    WrongLength(usize),
    #[error("weight {name} must be a positive finite number, got {value}")]
    InvalidWeight { name: &'static str, value: f64 },
}

/// Fixed per-modality reliability weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionWeights {
    pub w_img: f64,
    pub w_ocr: f64,
    pub w_assoc: f64,
}

impl Default for FusionWeights {
    fn default() -> Self {
        FusionWeights {
            w_img: 1.0,
            w_ocr: 1.0,
            w_assoc: 1.2,
        }
    }
}

impl FusionWeights {
    pub fn new(w_img: f64, w_ocr: f64, w_assoc: f64) -> Result<Self, FusionError> {
        let weights = FusionWeights {
            w_img,
            w_ocr,
            w_assoc,
        };
        weights.validate()?;
        Ok(weights)
    }

    pub fn validate(&self) -> Result<(), FusionError> {
        for (name, value) in [
            ("w_img", self.w_img),
            ("w_ocr", self.w_ocr),
            ("w_assoc", self.w_assoc),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(FusionError::InvalidWeight { name, value });
            }
        }
        Ok(())
    }

    pub fn weight(&self, modality: Modality) -> f64 {
        match modality {
            Modality::Img => self.w_img,
            Modality::Ocr => self.w_ocr,
            Modality::Assoc => self.w_assoc,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        FusionWeights {
            w_img: self.w_img * factor,
            w_ocr: self.w_ocr * factor,
            w_assoc: self.w_assoc * factor,
        }
    }
}

impl fmt::Display for FusionWeights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "img={:.6};ocr={:.6};assoc={:.6}",
            self.w_img, self.w_ocr, self.w_assoc
        )
    }
}

/// Which final labels count as harmful. By default every label except
/// "Neutral or Contextual Content".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarmPolicy {
    non_harmful: BTreeSet<usize>,
}

impl Default for HarmPolicy {
    fn default() -> Self {
        HarmPolicy {
            non_harmful: [NEUTRAL_LABEL_ID].into_iter().collect(),
        }
    }
}

impl HarmPolicy {
    pub fn new(non_harmful: impl IntoIterator<Item = usize>) -> Self {
        HarmPolicy {
            non_harmful: non_harmful.into_iter().collect(),
        }
    }

    pub fn non_harmful(&self) -> impl Iterator<Item = usize> + '_ {
        self.non_harmful.iter().copied()
    }

    pub fn is_harmful(&self, label_id: usize) -> bool {
        !self.non_harmful.contains(&label_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub final_label_id: usize,
    pub tie: bool,
    pub harmful: bool,
}

/// Weighted mean over the modalities present in `scores`.
pub fn fuse(
    scores: &BTreeMap<Modality, ScoreVector>,
    weights: &FusionWeights,
) -> Result<[f64; LABEL_COUNT], FusionError> {
    let mut fused = [0.0; LABEL_COUNT];
    match scores.len() {
        0 => return Err(FusionError::NoModalities),
        // w*s/w is not always bit-exact in floating point.
        1 => {
            let only = scores.values().next().expect("one entry");
            fused.copy_from_slice(only.as_slice());
            return Ok(fused);
        }
        _ => {}
    }
    let total_weight: f64 = scores.keys().map(|&m| weights.weight(m)).sum();
    for (&modality, vector) in scores {
        let w = weights.weight(modality);
        for (slot, s) in fused.iter_mut().zip(vector.as_slice()) {
            *slot += w * s;
        }
    }
    for slot in &mut fused {
        *slot /= total_weight;
    }
    Ok(fused)
}

pub fn decide(fused: &[f64]) -> Result<Decision, FusionError> {
    decide_with(fused, &HarmPolicy::default())
}

/// Argmax with lowest-index tie-breaking; `tie` is set when another label
/// lies within [`TIE_TOLERANCE`] of the maximum.
pub fn decide_with(fused: &[f64], policy: &HarmPolicy) -> Result<Decision, FusionError> {
    if fused.len() != LABEL_COUNT {
        return Err(FusionError::WrongLength(fused.len()));
    }
    let max = fused.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut at_max = fused
        .iter()
        .enumerate()
        .filter(|(_, &s)| max - s <= TIE_TOLERANCE)
        .map(|(k, _)| k);
    let final_label_id = at_max.next().expect("a maximum exists");
    let tie = at_max.next().is_some();
    Ok(Decision {
        final_label_id,
        tie,
        harmful: policy.is_harmful(final_label_id),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionResult {
    pub media_id: MediaId,
    pub fused: [f64; LABEL_COUNT],
    pub modalities_used: ModalitySet,
    pub weights_used: FusionWeights,
    pub final_label_id: usize,
    pub tie: bool,
    pub harmful: bool,
}

/// Fuses the scores that were produced for a routed item and decides.
pub fn fuse_item(
    routing: &RoutingOutcome,
    modality_scores: &BTreeMap<Modality, ScoreVector>,
    weights: &FusionWeights,
    policy: &HarmPolicy,
) -> Result<FusionResult, FusionError> {
    if modality_scores.is_empty() {
        return Err(FusionError::NoModalities);
    }
    if let Some(&extra) = modality_scores
        .keys()
        .find(|&&m| !routing.available_modalities.contains(m))
    {
        return Err(FusionError::UnexpectedModality(extra));
    }
    if !modality_scores.contains_key(&Modality::Img) {
        return Err(FusionError::MissingImageScores);
    }
    let fused = fuse(modality_scores, weights)?;
    let decision = decide_with(&fused, policy)?;
    Ok(FusionResult {
        media_id: routing.media_id.clone(),
        fused,
        modalities_used: modality_scores.keys().copied().collect(),
        weights_used: *weights,
        final_label_id: decision.final_label_id,
        tie: decision.tie,
        harmful: decision.harmful,
    })
}
