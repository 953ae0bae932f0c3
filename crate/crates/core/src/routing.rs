//! Decides which text modalities legitimately accompany an image.
//!
//! Embedded (OCR) text counts as present when its transcript holds enough
//! alphanumeric characters. Associated text is linked only when it shares
//! the media id and thread of the image and was recorded within the
//! temporal window. The resulting pair of flags selects one of four data
//! situations, which fixes the modality set handed to fusion.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::evidence::{EvidenceItem, MediaId, TextSegment};
use crate::modality::{Modality, ModalitySet};

pub const DEFAULT_TEMPORAL_WINDOW_S: i64 = 120;
pub const DEFAULT_OCR_MIN_ALNUM: usize = 3;

/// Evidence scenario by text source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Case {
    #[serde(rename = "Case1_EmbeddedText")]
    EmbeddedText,
    #[serde(rename = "Case2_AssociatedText")]
    AssociatedText,
    #[serde(rename = "Case3_ImageOnly")]
    ImageOnly,
    #[serde(rename = "Case1and2_Both")]
    Both,
}

impl Case {
    pub fn as_str(self) -> &'static str {
        match self {
            Case::EmbeddedText => "Case1_EmbeddedText",
            Case::AssociatedText => "Case2_AssociatedText",
            Case::ImageOnly => "Case3_ImageOnly",
            Case::Both => "Case1and2_Both",
        }
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Case {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Case1_EmbeddedText" => Ok(Case::EmbeddedText),
            "Case2_AssociatedText" => Ok(Case::AssociatedText),
            "Case3_ImageOnly" => Ok(Case::ImageOnly),
            "Case1and2_Both" => Ok(Case::Both),
            other => Err(format!("unknown case {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DataSituation {
    /// Embedded and associated text.
    DS1,
    /// Embedded text only.
    DS2,
    /// Associated text only.
    DS3,
    /// No text.
    DS4,
}

impl DataSituation {
    pub const ALL: [DataSituation; 4] = [
        DataSituation::DS1,
        DataSituation::DS2,
        DataSituation::DS3,
        DataSituation::DS4,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DataSituation::DS1 => "DS1",
            DataSituation::DS2 => "DS2",
            DataSituation::DS3 => "DS3",
            DataSituation::DS4 => "DS4",
        }
    }

    /// Row caption used in the report tables.
    pub fn caption(self) -> &'static str {
        match self {
            DataSituation::DS1 => "DS1: Embedded + Assoc. Text",
            DataSituation::DS2 => "DS2: Embedded Text Only",
            DataSituation::DS3 => "DS3: Assoc. Text Only",
            DataSituation::DS4 => "DS4: Image Only",
        }
    }
}

impl fmt::Display for DataSituation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DataSituation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "DS1" => Ok(DataSituation::DS1),
            "DS2" => Ok(DataSituation::DS2),
            "DS3" => Ok(DataSituation::DS3),
            "DS4" => Ok(DataSituation::DS4),
            other => Err(format!("unknown data situation {other:?}")),
        }
    }
}

/// Why an associated-text candidate was not linked. Rules are checked in
/// declaration order and only the first failure is reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RejectionReason {
    IdMismatch,
    ThreadMismatch,
    TemporalWindowExceeded,
    MissingMetadata,
}

impl RejectionReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectionReason::IdMismatch => "IdMismatch",
            RejectionReason::ThreadMismatch => "ThreadMismatch",
            RejectionReason::TemporalWindowExceeded => "TemporalWindowExceeded",
            RejectionReason::MissingMetadata => "MissingMetadata",
        }
    }
}

impl fmt::Display for RejectionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    /// Position of the segment in the item's `assoc_texts`.
    pub segment_index: usize,
    pub segment: TextSegment,
    pub reason: RejectionReason,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutingOutcome {
    pub media_id: MediaId,
    pub case: Case,
    pub data_situation: DataSituation,
    pub available_modalities: ModalitySet,
    pub linked_assoc: Vec<TextSegment>,
    pub rejection_log: Vec<Rejection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RouterConfig {
    pub temporal_window_s: i64,
    pub ocr_min_alnum: usize,
}

impl Default for RouterConfig {
    fn default() -> Self {
        RouterConfig {
            temporal_window_s: DEFAULT_TEMPORAL_WINDOW_S,
            ocr_min_alnum: DEFAULT_OCR_MIN_ALNUM,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Router {
    config: RouterConfig,
}

impl Router {
    pub fn new(config: RouterConfig) -> Self {
        Router { config }
    }

    pub fn config(&self) -> RouterConfig {
        self.config
    }

    pub fn detect_embedded_text(&self, item: &EvidenceItem) -> bool {
        item.ocr_text.as_ref().is_some_and(|segment| {
            segment
                .content
                .trim()
                .chars()
                .filter(|c| c.is_alphanumeric())
                .take(self.config.ocr_min_alnum)
                .count()
                >= self.config.ocr_min_alnum
        })
    }

    /// Checks one candidate against the id, thread and window rules.
    pub fn check_candidate(
        &self,
        item: &EvidenceItem,
        segment: &TextSegment,
    ) -> Result<(), RejectionReason> {
        if segment.media_ref != item.media_id {
            return Err(RejectionReason::IdMismatch);
        }
        match (&segment.thread_id, &item.image_thread_id) {
            (Some(seg), Some(img)) if seg == img => {}
            (Some(_), Some(_)) => return Err(RejectionReason::ThreadMismatch),
            _ => return Err(RejectionReason::MissingMetadata),
        }
        match (segment.timestamp, item.image_timestamp) {
            (Some(seg), Some(img)) => {
                // i128 keeps the difference exact for any pair of i64 timestamps.
                let delta = (i128::from(seg) - i128::from(img)).abs();
                if delta > i128::from(self.config.temporal_window_s) {
                    return Err(RejectionReason::TemporalWindowExceeded);
                }
            }
            _ => return Err(RejectionReason::MissingMetadata),
        }
        Ok(())
    }

    pub fn link_associated_text(&self, item: &EvidenceItem) -> (Vec<TextSegment>, Vec<Rejection>) {
        let mut linked = Vec::new();
        let mut rejected = Vec::new();
        for (segment_index, segment) in item.assoc_texts.iter().enumerate() {
            match self.check_candidate(item, segment) {
                Ok(()) => linked.push(segment.clone()),
                Err(reason) => rejected.push(Rejection {
                    segment_index,
                    segment: segment.clone(),
                    reason,
                }),
            }
        }
        (linked, rejected)
    }

    pub fn route(&self, item: &EvidenceItem) -> RoutingOutcome {
        let has_ocr = self.detect_embedded_text(item);
        let (linked_assoc, rejection_log) = self.link_associated_text(item);
        let has_assoc = !linked_assoc.is_empty();

        let case = match (has_ocr, has_assoc) {
            (true, true) => Case::Both,
            (true, false) => Case::EmbeddedText,
            (false, true) => Case::AssociatedText,
            (false, false) => Case::ImageOnly,
        };
        let mut available_modalities: ModalitySet = [Modality::Img].into_iter().collect();
        if has_ocr {
            available_modalities.insert(Modality::Ocr);
        }
        if has_assoc {
            available_modalities.insert(Modality::Assoc);
        }

        RoutingOutcome {
            media_id: item.media_id.clone(),
            case,
            data_situation: derive_data_situation(has_ocr, has_assoc),
            available_modalities,
            linked_assoc,
            rejection_log,
        }
    }
}

pub fn derive_data_situation(has_ocr: bool, has_assoc: bool) -> DataSituation {
    match (has_ocr, has_assoc) {
        (true, true) => DataSituation::DS1,
        (true, false) => DataSituation::DS2,
        (false, true) => DataSituation::DS3,
        (false, false) => DataSituation::DS4,
    }
}
