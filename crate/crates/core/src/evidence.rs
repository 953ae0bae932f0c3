//! Evidence data model and the line-delimited manifest/annotation readers.
//!
//! A manifest holds one JSON object per line:
//!
//! ```text
//! {"media_id":"m1","image_path":"img/m1.png","image_thread_id":"t1","image_timestamp":1700000000,
//!  "ocr_text":"I will find you","assoc_texts":[{"content":"...","thread_id":"t1","timestamp":1700000060,"source":"report 4"}]}
//! ```
//!
//! Relative `image_path` values resolve against the manifest's directory.
//! Text content is trimmed of leading and trailing whitespace and otherwise
//! kept verbatim.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Opaque, non-empty identifier of one media item. Compared byte for byte.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct MediaId(String);

impl MediaId {
    pub fn new(value: impl Into<String>) -> Result<Self, IngestError> {
        let value = value.into();
        if value.is_empty() {
            return Err(IngestError::EmptyMediaId);
        }
        Ok(MediaId(value))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for MediaId {
    type Error = IngestError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        MediaId::new(value)
    }
}

impl From<MediaId> for String {
    fn from(id: MediaId) -> Self {
        id.0
    }
}

impl fmt::Display for MediaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextKind {
    Ocr,
    Assoc,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextSegment {
    pub media_ref: MediaId,
    pub kind: TextKind,
    pub content: String,
    pub thread_id: Option<String>,
    pub timestamp: Option<i64>,
    pub source: String,
}

impl TextSegment {
    pub fn ocr(media_ref: MediaId, content: impl Into<String>) -> Self {
        TextSegment {
            media_ref,
            kind: TextKind::Ocr,
            content: content.into(),
            thread_id: None,
            timestamp: None,
            source: "ocr_text".to_string(),
        }
    }

    pub fn assoc(
        media_ref: MediaId,
        content: impl Into<String>,
        thread_id: Option<&str>,
        timestamp: Option<i64>,
        source: impl Into<String>,
    ) -> Self {
        TextSegment {
            media_ref,
            kind: TextKind::Assoc,
            content: content.into(),
            thread_id: thread_id.map(str::to_string),
            timestamp,
            source: source.into(),
        }
    }
}

/// One image plus its optional OCR transcript and candidate associated text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvidenceItem {
    pub media_id: MediaId,
    pub image_path: PathBuf,
    pub image_thread_id: Option<String>,
    pub image_timestamp: Option<i64>,
    pub ocr_text: Option<TextSegment>,
    pub assoc_texts: Vec<TextSegment>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthAnnotation {
    pub harmful: bool,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("duplicate media_id {0:?}")]
    DuplicateMediaId(String),
    #[error("image file missing or unreadable: {}", .0.display())]
    MissingImageFile(PathBuf),
    #[error("media_id must be non-empty")]
    EmptyMediaId,
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// One problem found by [`validate_manifest`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: usize,
    pub kind: DiagnosticKind,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagnosticKind {
    MalformedRecord,
    DuplicateMediaId,
    MissingImageFile,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            DiagnosticKind::MalformedRecord => "MalformedRecord",
            DiagnosticKind::DuplicateMediaId => "DuplicateMediaId",
            DiagnosticKind::MissingImageFile => "MissingImageFile",
        };
        write!(f, "line {}: {kind}: {}", self.line, self.message)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestRecord {
    media_id: String,
    image_path: PathBuf,
    #[serde(default)]
    image_thread_id: Option<String>,
    #[serde(default)]
    image_timestamp: Option<i64>,
    #[serde(default)]
    ocr_text: Option<String>,
    #[serde(default)]
    assoc_texts: Vec<AssocRecord>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AssocRecord {
    content: String,
    #[serde(default)]
    thread_id: Option<String>,
    #[serde(default)]
    timestamp: Option<i64>,
    #[serde(default)]
    source: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnotationRecord {
    media_id: String,
    harmful: bool,
}

fn malformed(line: usize, reason: impl Into<String>) -> IngestError {
    IngestError::MalformedRecord {
        line,
        reason: reason.into(),
    }
}

fn open(path: &Path) -> Result<BufReader<File>, IngestError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })
}

/// Yields `(line_number, text)` for every non-blank line.
fn records(
    path: &Path,
) -> Result<impl Iterator<Item = Result<(usize, String), IngestError>>, IngestError> {
    let reader = open(path)?;
    let owned = path.to_path_buf();
    Ok(reader
        .lines()
        .enumerate()
        .filter_map(move |(index, line)| match line {
            Ok(text) if text.trim().is_empty() => None,
            Ok(text) => Some(Ok((index + 1, text))),
            Err(source) => Some(Err(IngestError::Io {
                path: owned.clone(),
                source,
            })),
        }))
}

/// Parses one manifest line into an item without touching the filesystem.
fn parse_manifest_line(line: usize, text: &str, base: &Path) -> Result<EvidenceItem, IngestError> {
    let record: ManifestRecord =
        serde_json::from_str(text).map_err(|e| malformed(line, e.to_string()))?;
    let media_id =
        MediaId::new(record.media_id).map_err(|_| malformed(line, "media_id is empty"))?;
    if record.image_path.as_os_str().is_empty() {
        return Err(malformed(line, "image_path is empty"));
    }
    let image_path = if record.image_path.is_relative() {
        base.join(&record.image_path)
    } else {
        record.image_path
    };

    let ocr_text = record
        .ocr_text
        .map(|raw| TextSegment::ocr(media_id.clone(), raw.trim()));

    let mut assoc_texts = Vec::with_capacity(record.assoc_texts.len());
    for (position, assoc) in record.assoc_texts.into_iter().enumerate() {
        let content = assoc.content.trim();
        if content.is_empty() {
            return Err(malformed(
                line,
                format!("assoc_texts[{position}].content is empty"),
            ));
        }
        assoc_texts.push(TextSegment::assoc(
            media_id.clone(),
            content,
            assoc.thread_id.as_deref(),
            assoc.timestamp,
            assoc.source,
        ));
    }

    Ok(EvidenceItem {
        media_id,
        image_path,
        image_thread_id: record.image_thread_id,
        image_timestamp: record.image_timestamp,
        ocr_text,
        assoc_texts,
    })
}

fn image_readable(path: &Path) -> bool {
    File::open(path)
        .map(|f| f.metadata().map(|m| m.is_file()).unwrap_or(false))
        .unwrap_or(false)
}

fn manifest_base(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Reads a manifest, validating every record. Stops at the first problem.
pub fn load_manifest(path: &Path) -> Result<Vec<EvidenceItem>, IngestError> {
    let base = manifest_base(path);
    let mut seen = HashSet::new();
    let mut items = Vec::new();
    for record in records(path)? {
        let (line, text) = record?;
        let item = parse_manifest_line(line, &text, &base)?;
        if !seen.insert(item.media_id.clone()) {
            return Err(IngestError::DuplicateMediaId(item.media_id.0));
        }
        if !image_readable(&item.image_path) {
            return Err(IngestError::MissingImageFile(item.image_path));
        }
        items.push(item);
    }
    Ok(items)
}

/// Checks every record of a manifest and reports all problems found.
///
/// Only an unreadable manifest file is an error; record-level problems are
/// returned as diagnostics in line order.
pub fn validate_manifest(path: &Path) -> Result<Vec<Diagnostic>, IngestError> {
    let base = manifest_base(path);
    let mut seen = HashSet::new();
    let mut diagnostics = Vec::new();
    for record in records(path)? {
        let (line, text) = record?;
        match parse_manifest_line(line, &text, &base) {
            Ok(item) => {
                if !seen.insert(item.media_id.clone()) {
                    diagnostics.push(Diagnostic {
                        line,
                        kind: DiagnosticKind::DuplicateMediaId,
                        message: format!("media_id {:?} already used", item.media_id.as_str()),
                    });
                }
                if !image_readable(&item.image_path) {
                    diagnostics.push(Diagnostic {
                        line,
                        kind: DiagnosticKind::MissingImageFile,
                        message: item.image_path.display().to_string(),
                    });
                }
            }
            Err(IngestError::MalformedRecord { reason, .. }) => diagnostics.push(Diagnostic {
                line,
                kind: DiagnosticKind::MalformedRecord,
                message: reason,
            }),
            Err(other) => return Err(other),
        }
    }
    Ok(diagnostics)
}

/// Reads ground-truth annotations, one `{media_id, harmful}` object per line.
pub fn load_annotations(
    path: &Path,
) -> Result<BTreeMap<MediaId, GroundTruthAnnotation>, IngestError> {
    let mut annotations = BTreeMap::new();
    for record in records(path)? {
        let (line, text) = record?;
        let parsed: AnnotationRecord =
            serde_json::from_str(&text).map_err(|e| malformed(line, e.to_string()))?;
        let media_id =
            MediaId::new(parsed.media_id).map_err(|_| malformed(line, "media_id is empty"))?;
        if annotations.contains_key(&media_id) {
            return Err(IngestError::DuplicateMediaId(media_id.0));
        }
        annotations.insert(
            media_id,
            GroundTruthAnnotation {
                harmful: parsed.harmful,
            },
        );
    }
    Ok(annotations)
}
