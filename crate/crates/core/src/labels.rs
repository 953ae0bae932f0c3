//! The frozen semantic label space shared by every scorer, and the simplex
//! score vectors indexed by it.

use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of labels in the frozen space.
pub const LABEL_COUNT: usize = 10;

/// Index of "Neutral or Contextual Content".
pub const NEUTRAL_LABEL_ID: usize = 9;

/// Allowed deviation of a score vector's sum from 1.0.
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

/// Versioned label fixture. Scorers receive these records verbatim.
pub const LABEL_FIXTURE: &str = include_str!("../data/labels.v1.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Label {
    pub label_id: usize,
    pub name: String,
    pub prompt_text: String,
    pub hypothesis_text: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelFixture {
    version: u32,
    labels: Vec<Label>,
}

/// Ordered, immutable set of the ten forensic categories.
///
/// There is no constructor besides [`frozen_labels`]; every vector in the
/// system is index-aligned to the order held here.
#[derive(Debug, PartialEq, Eq)]
pub struct LabelSpace {
    version: u32,
    labels: Vec<Label>,
}

impl LabelSpace {
    pub fn version(&self) -> u32 {
        self.version
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn get(&self, label_id: usize) -> Option<&Label> {
        self.labels.get(label_id)
    }

    /// Name of `label_id`. Panics on ids outside `0..LABEL_COUNT`.
    pub fn name(&self, label_id: usize) -> &str {
        &self.labels[label_id].name
    }
}

/// The canonical label space, parsed once from the shipped fixture.
pub fn frozen_labels() -> &'static LabelSpace {
    static SPACE: OnceLock<LabelSpace> = OnceLock::new();
    SPACE.get_or_init(|| {
        let fixture: LabelFixture =
            serde_json::from_str(LABEL_FIXTURE).expect("label fixture is valid JSON");
        assert_eq!(
            fixture.labels.len(),
            LABEL_COUNT,
            "label fixture must hold 10 labels"
        );
        for (position, label) in fixture.labels.iter().enumerate() {
            assert_eq!(label.label_id, position, "label ids must follow list order");
        }
        LabelSpace {
            version: fixture.version,
            labels: fixture.labels,
        }
    })
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoreVectorError {
    #[error("score vector has {0} entries, expected {LABEL_COUNT}")]
    WrongLength(usize),
    #[error("score at index {index} is {value}, outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("score vector sums to {0}, expected 1 within {SIMPLEX_TOLERANCE}")]
    NotNormalized(f64),
}

/// Ten confidences in `[0, 1]` summing to one, aligned to [`frozen_labels`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ScoreVector([f64; LABEL_COUNT]);

impl ScoreVector {
    pub fn uniform() -> Self {
        ScoreVector([1.0 / LABEL_COUNT as f64; LABEL_COUNT])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, label_id: usize) -> f64 {
        self.0[label_id]
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

impl TryFrom<&[f64]> for ScoreVector {
    type Error = ScoreVectorError;

    fn try_from(raw: &[f64]) -> Result<Self, Self::Error> {
        validate_score_vector(raw)
    }
}

impl TryFrom<Vec<f64>> for ScoreVector {
    type Error = ScoreVectorError;

    fn try_from(raw: Vec<f64>) -> Result<Self, Self::Error> {
        validate_score_vector(&raw)
    }
}

impl fmt::Display for ScoreVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, s) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{s:.6}")?;
        }
        f.write_str("]")
    }
}

/// Accepts `raw` iff it has ten entries, each in `[0, 1]`, summing to 1
/// within [`SIMPLEX_TOLERANCE`].
pub fn validate_score_vector(raw: &[f64]) -> Result<ScoreVector, ScoreVectorError> {
    if raw.len() != LABEL_COUNT {
        return Err(ScoreVectorError::WrongLength(raw.len()));
    }
    for (index, &value) in raw.iter().enumerate() {
        // NaN fails both comparisons.
        if !(0.0..=1.0).contains(&value) {
            return Err(ScoreVectorError::OutOfRange { index, value });
        }
    }
    let sum: f64 = raw.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(ScoreVectorError::NotNormalized(sum));
    }
    let mut scores = [0.0; LABEL_COUNT];
    scores.copy_from_slice(raw);
    Ok(ScoreVector(scores))
}
