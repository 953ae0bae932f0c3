//! Keyword-lexicon backend. Model-free and fully hand-computable.
//!
//! Text is lowercased and split into alphanumeric tokens. A keyword (one or
//! more tokens) hits once per occurrence as a contiguous token run. Each
//! label's raw score is `1 + hits`; when no label hits at all, the neutral
//! label gets `2` instead. The vector is the raw scores divided by their sum.
//!
//! Images carry no signal for this backend and always score uniform.

use std::fs::File;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use super::{BackendKind, ScorerError, ScoringBackend};
use crate::labels::{
    validate_score_vector, LabelSpace, ScoreVector, LABEL_COUNT, NEUTRAL_LABEL_ID,
};

/// Versioned keyword fixture shipped with the crate.
pub const LEXICON_FIXTURE: &str = include_str!("../../data/lexicon.v1.json");

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("lexicon is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("lexicon label_id {0} is outside 0..{LABEL_COUNT}")]
    UnknownLabel(usize),
    #[error("lexicon lists label_id {0} more than once")]
    DuplicateLabel(usize),
    #[error("lexicon keyword {keyword:?} for label {label_id} has no alphanumeric tokens")]
    EmptyKeyword { label_id: usize, keyword: String },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LexiconFixture {
    version: u32,
    keywords: Vec<LabelKeywords>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelKeywords {
    label_id: usize,
    keywords: Vec<String>,
}

/// Tokenized keyword lists, one per label id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    version: u32,
    keywords: Vec<Vec<Vec<String>>>,
}

pub(crate) fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

impl Lexicon {
    pub fn from_json(json: &str) -> Result<Self, LexiconError> {
        let fixture: LexiconFixture = serde_json::from_str(json)?;
        let mut keywords: Vec<Option<Vec<Vec<String>>>> = vec![None; LABEL_COUNT];
        for entry in fixture.keywords {
            let slot = keywords
                .get_mut(entry.label_id)
                .ok_or(LexiconError::UnknownLabel(entry.label_id))?;
            if slot.is_some() {
                return Err(LexiconError::DuplicateLabel(entry.label_id));
            }
            let mut tokenized = Vec::with_capacity(entry.keywords.len());
            for keyword in entry.keywords {
                let tokens = tokenize(&keyword);
                if tokens.is_empty() {
                    return Err(LexiconError::EmptyKeyword {
                        label_id: entry.label_id,
                        keyword,
                    });
                }
                tokenized.push(tokens);
            }
            *slot = Some(tokenized);
        }
        Ok(Lexicon {
            version: fixture.version,
            keywords: keywords
                .into_iter()
                .map(Option::unwrap_or_default)
                .collect(),
        })
    }

    pub fn shipped() -> Self {
        Lexicon::from_json(LEXICON_FIXTURE).expect("shipped lexicon fixture is valid")
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    /// Keyword hits per label for `text`.
    pub fn hits(&self, text: &str) -> [usize; LABEL_COUNT] {
        let tokens = tokenize(text);
        let mut hits = [0; LABEL_COUNT];
        for (label_id, keywords) in self.keywords.iter().enumerate() {
            hits[label_id] = keywords
                .iter()
                .map(|kw| {
                    tokens
                        .windows(kw.len())
                        .filter(|w| *w == kw.as_slice())
                        .count()
                })
                .sum();
        }
        hits
    }

    /// Integer raw scores before normalization.
    pub fn raw_scores(&self, text: &str) -> [usize; LABEL_COUNT] {
        let hits = self.hits(text);
        let mut raw = hits.map(|h| 1 + h);
        if hits.iter().all(|&h| h == 0) {
            raw[NEUTRAL_LABEL_ID] = 2;
        }
        raw
    }

    pub fn score(&self, text: &str) -> ScoreVector {
        let raw = self.raw_scores(text);
        let total: usize = raw.iter().sum();
        let normalized = raw.map(|r| r as f64 / total as f64);
        validate_score_vector(&normalized).expect("normalized raw scores form a simplex")
    }
}

#[derive(Debug, Clone)]
pub struct LexiconBackend {
    lexicon: Lexicon,
}

impl LexiconBackend {
    pub fn new(lexicon: Lexicon) -> Self {
        LexiconBackend { lexicon }
    }

    pub fn shipped() -> Self {
        LexiconBackend::new(Lexicon::shipped())
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }
}

impl ScoringBackend for LexiconBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Lexicon
    }

    fn score_image(
        &self,
        image_path: &Path,
        _labels: &LabelSpace,
    ) -> Result<ScoreVector, ScorerError> {
        File::open(image_path).map_err(|e| ScorerError::UnreadableImage {
            path: image_path.to_path_buf(),
            detail: e.to_string(),
        })?;
        Ok(ScoreVector::uniform())
    }

    fn score_text(&self, content: &str, _labels: &LabelSpace) -> Result<ScoreVector, ScorerError> {
        if content.trim().is_empty() {
            return Err(ScorerError::EmptyText);
        }
        Ok(self.lexicon.score(content))
    }
}
