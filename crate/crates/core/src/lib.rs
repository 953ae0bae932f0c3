//! Evidence-aware triage of image-centric forensic evidence.
//!
//! Each evidence item is routed by which kinds of text legitimately
//! accompany its image (embedded OCR text, associated report text, both or
//! neither). Every available modality is scored against a frozen ten-label
//! space, the scores are fused with fixed reliability weights over only the
//! present modalities, and the argmax becomes the decision. All
//! intermediate vectors are kept for the audit trail.

pub mod audit;
pub mod cli;
pub mod config;
pub mod evidence;
pub mod fusion;
pub mod labels;
pub mod modality;
pub mod pipeline;
pub mod routing;
pub mod scorers;

pub use evidence::{EvidenceItem, MediaId, TextKind, TextSegment};
pub use fusion::{FusionResult, FusionWeights};
pub use labels::{frozen_labels, validate_score_vector, LabelSpace, ScoreVector};
pub use modality::{Modality, ModalitySet};
pub use routing::{Case, DataSituation, RoutingOutcome};
