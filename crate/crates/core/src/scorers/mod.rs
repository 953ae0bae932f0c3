//! Modality scorers.
//!
//! A [`ScoringBackend`] turns an image or a text into a simplex over the
//! frozen labels. [`ModalityScorer`] binds a backend to one modality and
//! handles per-media aggregation of multiple text segments. OCR and
//! associated text share a backend but are always scored separately.

mod lexicon;
pub mod remote;

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evidence::{MediaId, TextSegment};
use crate::labels::{validate_score_vector, LabelSpace, ScoreVector, LABEL_COUNT};
use crate::modality::Modality;

pub use lexicon::{Lexicon, LexiconBackend, LexiconError, LEXICON_FIXTURE};
pub use remote::{HttpTransport, RemoteBackend, ReplayTransport, Transport, TransportResponse};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScorerError {
    #[error("cannot read image {}: {detail}", path.display())]
    UnreadableImage { path: PathBuf, detail: String },
    #[error("text is empty after trimming")]
    EmptyText,
    #[error("no score vectors to aggregate")]
    EmptyList,
    #[error("scoring backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("scoring protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("scorer for {expected} cannot score {requested}")]
    WrongModality {
        expected: Modality,
        requested: Modality,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Lexicon,
    Remote,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::Lexicon => "lexicon",
            BackendKind::Remote => "remote",
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Something that can score images and texts against the label space.
///
/// Implementations must be deterministic for a fixed configuration and must
/// only ever return simplex vectors.
pub trait ScoringBackend: Send + Sync {
    fn kind(&self) -> BackendKind;

    fn model_id(&self) -> Option<&str> {
        None
    }

    fn score_image(
        &self,
        image_path: &Path,
        labels: &LabelSpace,
    ) -> Result<ScoreVector, ScorerError>;

    fn score_text(&self, content: &str, labels: &LabelSpace) -> Result<ScoreVector, ScorerError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScorerDescriptor {
    pub scorer_id: String,
    pub modality: Modality,
    pub backend: BackendKind,
    pub model_id: Option<String>,
}

/// Scores for one modality of one media item.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalityScores {
    pub media_id: MediaId,
    pub modality: Modality,
    pub vector: ScoreVector,
    pub scorer: ScorerDescriptor,
    pub segment_count: usize,
}

/// A backend bound to a single modality.
#[derive(Clone)]
pub struct ModalityScorer {
    descriptor: ScorerDescriptor,
    backend: Arc<dyn ScoringBackend>,
}

impl fmt::Debug for ModalityScorer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModalityScorer")
            .field("descriptor", &self.descriptor)
            .finish_non_exhaustive()
    }
}

impl ModalityScorer {
    pub fn new(modality: Modality, backend: Arc<dyn ScoringBackend>) -> Self {
        let descriptor = ScorerDescriptor {
            scorer_id: format!("{}/{}", modality, backend.kind()),
            modality,
            backend: backend.kind(),
            model_id: backend.model_id().map(str::to_string),
        };
        ModalityScorer {
            descriptor,
            backend,
        }
    }

    pub fn descriptor(&self) -> &ScorerDescriptor {
        &self.descriptor
    }

    pub fn score_image(
        &self,
        media_id: &MediaId,
        image_path: &Path,
        labels: &LabelSpace,
    ) -> Result<ModalityScores, ScorerError> {
        if self.descriptor.modality != Modality::Img {
            return Err(ScorerError::WrongModality {
                expected: self.descriptor.modality,
                requested: Modality::Img,
            });
        }
        let vector = self.backend.score_image(image_path, labels)?;
        Ok(self.wrap(media_id, vector, 1))
    }

    /// Scores each segment independently and averages the vectors.
    pub fn score_segments(
        &self,
        media_id: &MediaId,
        segments: &[TextSegment],
        labels: &LabelSpace,
    ) -> Result<ModalityScores, ScorerError> {
        if self.descriptor.modality == Modality::Img {
            return Err(ScorerError::WrongModality {
                expected: Modality::Img,
                requested: Modality::Ocr,
            });
        }
        let vectors = segments
            .iter()
            .map(|segment| self.backend.score_text(&segment.content, labels))
            .collect::<Result<Vec<_>, _>>()?;
        let vector = aggregate_text_scores(&vectors)?;
        Ok(self.wrap(media_id, vector, vectors.len()))
    }

    fn wrap(
        &self,
        media_id: &MediaId,
        vector: ScoreVector,
        segment_count: usize,
    ) -> ModalityScores {
        ModalityScores {
            media_id: media_id.clone(),
            modality: self.descriptor.modality,
            vector,
            scorer: self.descriptor.clone(),
            segment_count,
        }
    }
}

/// The three per-modality scorers used by a pipeline run.
#[derive(Debug, Clone)]
pub struct ScorerSet {
    pub image: ModalityScorer,
    pub ocr: ModalityScorer,
    pub assoc: ModalityScorer,
}

impl ScorerSet {
    /// Binds one backend to all three modalities.
    pub fn from_backend(backend: Arc<dyn ScoringBackend>) -> Self {
        ScorerSet {
            image: ModalityScorer::new(Modality::Img, backend.clone()),
            ocr: ModalityScorer::new(Modality::Ocr, backend.clone()),
            assoc: ModalityScorer::new(Modality::Assoc, backend),
        }
    }

    pub fn for_modality(&self, modality: Modality) -> &ModalityScorer {
        match modality {
            Modality::Img => &self.image,
            Modality::Ocr => &self.ocr,
            Modality::Assoc => &self.assoc,
        }
    }
}

/// Element-wise arithmetic mean of simplex vectors.
pub fn aggregate_text_scores(vectors: &[ScoreVector]) -> Result<ScoreVector, ScorerError> {
    match vectors {
        [] => Err(ScorerError::EmptyList),
        [single] => Ok(*single),
        _ => {
            let n = vectors.len() as f64;
            let mut mean = [0.0; LABEL_COUNT];
            for (k, slot) in mean.iter_mut().enumerate() {
                *slot = vectors.iter().map(|v| v.get(k)).sum::<f64>() / n;
            }
            validate_score_vector(&mean).map_err(|e| {
                ScorerError::ProtocolViolation(format!("aggregate is not a simplex: {e}"))
            })
        }
    }
}
