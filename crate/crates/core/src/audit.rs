//! Audit trail persistence and per-data-situation analytics.
//!
//! A triage run writes three flat CSV files (modality scores, fused scores,
//! decisions) plus an event log with association rejections and scorer
//! failures. Rows are sorted by media id, then modality, then label id, and
//! every float is written with six decimals, so identical records always
//! produce identical bytes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::evidence::{GroundTruthAnnotation, MediaId};
use crate::fusion::{Decision, FusionResult, FusionWeights};
use crate::labels::{frozen_labels, LABEL_COUNT};
use crate::modality::{Modality, ModalitySet};
use crate::routing::{Case, DataSituation, Rejection, RoutingOutcome};
use crate::scorers::{ModalityScores, ScorerError};

pub const MODALITY_SCORES_FILE: &str = "modality_scores.csv";
pub const FUSED_SCORES_FILE: &str = "fused_scores.csv";
pub const DECISIONS_FILE: &str = "decisions.csv";
pub const EVENTS_FILE: &str = "audit_events.csv";
pub const REPORT_FILE: &str = "report.md";

const MODALITY_SCORES_HEADER: [&str; 5] =
    ["media_id", "modality", "label_id", "label_name", "score"];
const FUSED_SCORES_HEADER: [&str; 4] = ["media_id", "data_situation", "label_id", "fused_score"];
const DECISIONS_HEADER: [&str; 10] = [
    "media_id",
    "case",
    "data_situation",
    "modalities_used",
    "final_label",
    "tie",
    "harmful",
    "image_only_label",
    "decision_changed",
    "weights_used",
];
const EVENTS_HEADER: [&str; 5] = ["media_id", "event", "modality", "segment_index", "detail"];

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("I/O failure on {}: {detail}", path.display())]
    IoFailure { path: PathBuf, detail: String },
    #[error("{}: row {row}: {reason}", path.display())]
    MalformedRow {
        path: PathBuf,
        row: usize,
        reason: String,
    },
    #[error("no annotation for media ids: {}", join_ids(.0))]
    MissingAnnotation(Vec<MediaId>),
}

fn join_ids(ids: &[MediaId]) -> String {
    ids.iter()
        .map(MediaId::as_str)
        .collect::<Vec<_>>()
        .join(", ")
}

fn io_failure(path: &Path, detail: impl fmt::Display) -> AuditError {
    AuditError::IoFailure {
        path: path.to_path_buf(),
        detail: detail.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScorerFailure {
    pub modality: Modality,
    pub error: ScorerError,
}

/// Everything known about one completed item.
#[derive(Debug, Clone, PartialEq)]
pub struct TriageRecord {
    pub media_id: MediaId,
    pub case: Case,
    pub data_situation: DataSituation,
    pub available_modalities: ModalitySet,
    pub modalities_used: ModalitySet,
    pub modality_scores: BTreeMap<Modality, ModalityScores>,
    pub fused: [f64; LABEL_COUNT],
    pub weights_used: FusionWeights,
    pub final_label_id: usize,
    pub tie: bool,
    pub harmful: bool,
    pub image_only_label_id: usize,
    pub image_only_harmful: bool,
    pub decision_changed: bool,
    pub rejection_log: Vec<Rejection>,
    pub scorer_failures: Vec<ScorerFailure>,
}

impl TriageRecord {
    pub fn assemble(
        routing: RoutingOutcome,
        modality_scores: BTreeMap<Modality, ModalityScores>,
        fusion: FusionResult,
        image_only: Decision,
        scorer_failures: Vec<ScorerFailure>,
    ) -> Self {
        TriageRecord {
            media_id: routing.media_id,
            case: routing.case,
            data_situation: routing.data_situation,
            available_modalities: routing.available_modalities,
            modalities_used: fusion.modalities_used,
            modality_scores,
            fused: fusion.fused,
            weights_used: fusion.weights_used,
            final_label_id: fusion.final_label_id,
            tie: fusion.tie,
            harmful: fusion.harmful,
            image_only_label_id: image_only.final_label_id,
            image_only_harmful: image_only.harmful,
            decision_changed: fusion.harmful != image_only.harmful,
            rejection_log: routing.rejection_log,
            scorer_failures,
        }
    }

    pub fn decision_row(&self) -> DecisionRow {
        DecisionRow {
            media_id: self.media_id.clone(),
            case: self.case,
            data_situation: self.data_situation,
            modalities_used: self.modalities_used.clone(),
            final_label_id: self.final_label_id,
            tie: self.tie,
            harmful: self.harmful,
            image_only_label_id: self.image_only_label_id,
            decision_changed: self.decision_changed,
            weights_used: self.weights_used,
        }
    }
}

/// An item that produced no decision because its image could not be scored.
#[derive(Debug, Clone, PartialEq)]
pub struct FailedItem {
    pub media_id: MediaId,
    pub case: Case,
    pub data_situation: DataSituation,
    pub rejection_log: Vec<Rejection>,
    pub scorer_failures: Vec<ScorerFailure>,
}

/// One row of the decisions file.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRow {
    pub media_id: MediaId,
    pub case: Case,
    pub data_situation: DataSituation,
    pub modalities_used: ModalitySet,
    pub final_label_id: usize,
    pub tie: bool,
    pub harmful: bool,
    pub image_only_label_id: usize,
    pub decision_changed: bool,
    pub weights_used: FusionWeights,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditPaths {
    pub modality_scores: PathBuf,
    pub fused_scores: PathBuf,
    pub decisions: PathBuf,
}

fn score(value: f64) -> String {
    format!("{value:.6}")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, AuditError> {
    let file = File::create(path).map_err(|e| io_failure(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<(), AuditError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut writer = csv_writer(path)?;
    writer
        .write_record(header)
        .map_err(|e| io_failure(path, e))?;
    for row in rows {
        writer.write_record(row).map_err(|e| io_failure(path, e))?;
    }
    writer.flush().map_err(|e| io_failure(path, e))
}

fn sorted(records: &[TriageRecord]) -> Vec<&TriageRecord> {
    let mut refs: Vec<&TriageRecord> = records.iter().collect();
    refs.sort_by(|a, b| a.media_id.cmp(&b.media_id));
    refs
}

/// Writes the modality-score, fused-score and decision files into `out_dir`.
pub fn write_audit(records: &[TriageRecord], out_dir: &Path) -> Result<AuditPaths, AuditError> {
    fs::create_dir_all(out_dir).map_err(|e| io_failure(out_dir, e))?;
    let labels = frozen_labels();
    let records = sorted(records);
    let paths = AuditPaths {
        modality_scores: out_dir.join(MODALITY_SCORES_FILE),
        fused_scores: out_dir.join(FUSED_SCORES_FILE),
        decisions: out_dir.join(DECISIONS_FILE),
    };

    let modality_rows = records.iter().flat_map(|record| {
        record.modality_scores.values().flat_map(move |scores| {
            (0..LABEL_COUNT).map(move |k| {
                vec![
                    record.media_id.to_string(),
                    scores.modality.to_string(),
                    k.to_string(),
                    labels.name(k).to_string(),
                    score(scores.vector.get(k)),
                ]
            })
        })
    });
    write_rows(
        &paths.modality_scores,
        &MODALITY_SCORES_HEADER,
        modality_rows,
    )?;

    let fused_rows = records.iter().flat_map(|record| {
        (0..LABEL_COUNT).map(move |k| {
            vec![
                record.media_id.to_string(),
                record.data_situation.to_string(),
                k.to_string(),
                score(record.fused[k]),
            ]
        })
    });
    write_rows(&paths.fused_scores, &FUSED_SCORES_HEADER, fused_rows)?;

    let decision_rows = records.iter().map(|record| {
        let row = record.decision_row();
        vec![
            row.media_id.to_string(),
            row.case.to_string(),
            row.data_situation.to_string(),
            row.modalities_used.to_string(),
            row.final_label_id.to_string(),
            row.tie.to_string(),
            row.harmful.to_string(),
            row.image_only_label_id.to_string(),
            row.decision_changed.to_string(),
            row.weights_used.to_string(),
        ]
    });
    write_rows(&paths.decisions, &DECISIONS_HEADER, decision_rows)?;

    Ok(paths)
}

fn item_events(
    media_id: &MediaId,
    rejections: &[Rejection],
    failures: &[ScorerFailure],
) -> Vec<[String; 5]> {
    let mut rows = Vec::new();
    for r in rejections {
        rows.push([
            media_id.to_string(),
            "assoc_rejected".into(),
            Modality::Assoc.to_string(),
            r.segment_index.to_string(),
            r.reason.to_string(),
        ]);
    }
    for f in failures {
        rows.push([
            media_id.to_string(),
            "scorer_failure".into(),
            f.modality.to_string(),
            String::new(),
            f.error.to_string(),
        ]);
    }
    rows
}

/// Writes association rejections, scorer failures and failed items.
pub fn write_event_log(
    records: &[TriageRecord],
    failed: &[FailedItem],
    out_dir: &Path,
) -> Result<PathBuf, AuditError> {
    fs::create_dir_all(out_dir).map_err(|e| io_failure(out_dir, e))?;
    let path = out_dir.join(EVENTS_FILE);

    let mut per_item: BTreeMap<&MediaId, Vec<[String; 5]>> = BTreeMap::new();
    for record in records {
        let rows = item_events(
            &record.media_id,
            &record.rejection_log,
            &record.scorer_failures,
        );
        per_item.entry(&record.media_id).or_default().extend(rows);
    }
    for item in failed {
        let mut rows = item_events(&item.media_id, &item.rejection_log, &item.scorer_failures);
        rows.push([
            item.media_id.to_string(),
            "item_failed".into(),
            Modality::Img.to_string(),
            String::new(),
            "image could not be scored; no decision recorded".into(),
        ]);
        per_item.entry(&item.media_id).or_default().extend(rows);
    }

    write_rows(&path, &EVENTS_HEADER, per_item.into_values().flatten())?;
    Ok(path)
}

fn parse_field<T: std::str::FromStr>(
    path: &Path,
    row: usize,
    name: &str,
    value: &str,
) -> Result<T, AuditError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e| AuditError::MalformedRow {
        path: path.to_path_buf(),
        row,
        reason: format!("{name}: {e}"),
    })
}

fn parse_weights(path: &Path, row: usize, value: &str) -> Result<FusionWeights, AuditError> {
    let malformed = |reason: String| AuditError::MalformedRow {
        path: path.to_path_buf(),
        row,
        reason,
    };
    let mut parsed = BTreeMap::new();
    for part in value.split(';') {
        let (name, number) = part
            .split_once('=')
            .ok_or_else(|| malformed(format!("weights_used: bad entry {part:?}")))?;
        let modality: Modality = name
            .parse()
            .map_err(|e: String| malformed(format!("weights_used: {e}")))?;
        let weight: f64 = number
            .parse()
            .map_err(|e| malformed(format!("weights_used: {e}")))?;
        parsed.insert(modality, weight);
    }
    let get = |m: Modality| {
        parsed
            .get(&m)
            .copied()
            .ok_or_else(|| malformed(format!("weights_used: missing {m}")))
    };
    FusionWeights::new(
        get(Modality::Img)?,
        get(Modality::Ocr)?,
        get(Modality::Assoc)?,
    )
    .map_err(|e| malformed(format!("weights_used: {e}")))
}

/// Reads a decisions file back. A zero-byte file yields no rows.
pub fn read_decisions(path: &Path) -> Result<Vec<DecisionRow>, AuditError> {
    let bytes = fs::read(path).map_err(|e| io_failure(path, e))?;
    if bytes.is_empty() {
        return Ok(Vec::new());
    }
    let mut reader = csv::ReaderBuilder::new().from_reader(bytes.as_slice());
    let header = reader.headers().map_err(|e| io_failure(path, e))?.clone();
    if header.iter().ne(DECISIONS_HEADER.iter().copied()) {
        return Err(AuditError::MalformedRow {
            path: path.to_path_buf(),
            row: 1,
            reason: format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    let mut rows = Vec::new();
    for (index, record) in reader.records().enumerate() {
        let row = index + 2;
        let record = record.map_err(|e| AuditError::MalformedRow {
            path: path.to_path_buf(),
            row,
            reason: e.to_string(),
        })?;
        let field = |i: usize| record.get(i).unwrap_or_default();
        let media_id = MediaId::new(field(0)).map_err(|e| AuditError::MalformedRow {
            path: path.to_path_buf(),
            row,
            reason: e.to_string(),
        })?;
        let decision = DecisionRow {
            media_id,
            case: parse_field(path, row, "case", field(1))?,
            data_situation: parse_field(path, row, "data_situation", field(2))?,
            modalities_used: parse_field(path, row, "modalities_used", field(3))?,
            final_label_id: parse_field(path, row, "final_label", field(4))?,
            tie: parse_field(path, row, "tie", field(5))?,
            harmful: parse_field(path, row, "harmful", field(6))?,
            image_only_label_id: parse_field(path, row, "image_only_label", field(7))?,
            decision_changed: parse_field(path, row, "decision_changed", field(8))?,
            weights_used: parse_weights(path, row, field(9))?,
        };
        if decision.final_label_id >= LABEL_COUNT || decision.image_only_label_id >= LABEL_COUNT {
            return Err(AuditError::MalformedRow {
                path: path.to_path_buf(),
                row,
                reason: "label id out of range".into(),
            });
        }
        if decision.data_situation == DataSituation::DS4 && decision.decision_changed {
            return Err(AuditError::MalformedRow {
                path: path.to_path_buf(),
                row,
                reason: "DS4 row cannot record a decision change".into(),
            });
        }
        rows.push(decision);
    }
    Ok(rows)
}

/// A percentage held as an integer number of hundredths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Percent(u64);

impl Percent {
    /// `100 * numerator / denominator`, rounded half-up to two decimals.
    pub fn from_ratio(numerator: u64, denominator: u64) -> Self {
        assert!(denominator > 0, "percentage of an empty class");
        let scaled = 10_000 * u128::from(numerator);
        let den = u128::from(denominator);
        Percent(((2 * scaled + den) / (2 * den)) as u64)
    }

    pub fn hundredths(self) -> u64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 100.0
    }
}

impl fmt::Display for Percent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:02}", self.0 / 100, self.0 % 100)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DsAccuracyRow {
    pub data_situation: DataSituation,
    pub evidence_count: u64,
    pub correct_count: u64,
    pub accuracy_pct: Percent,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FusionImpactRow {
    pub data_situation: DataSituation,
    pub evidence_count: u64,
    pub changed_count: u64,
    pub change_rate_pct: Percent,
}

/// Agreement between the binary harmful decision and the annotations,
/// per data situation. Situations with no records are omitted.
pub fn accuracy_by_ds(
    rows: &[DecisionRow],
    annotations: &BTreeMap<MediaId, GroundTruthAnnotation>,
) -> Result<Vec<DsAccuracyRow>, AuditError> {
    let missing: BTreeSet<MediaId> = rows
        .iter()
        .filter(|r| !annotations.contains_key(&r.media_id))
        .map(|r| r.media_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(AuditError::MissingAnnotation(missing.into_iter().collect()));
    }
    let mut counts: BTreeMap<DataSituation, (u64, u64)> = BTreeMap::new();
    for row in rows {
        let entry = counts.entry(row.data_situation).or_default();
        entry.0 += 1;
        if row.harmful == annotations[&row.media_id].harmful {
            entry.1 += 1;
        }
    }
    Ok(counts
        .into_iter()
        .map(
            |(data_situation, (evidence_count, correct_count))| DsAccuracyRow {
                data_situation,
                evidence_count,
                correct_count,
                accuracy_pct: Percent::from_ratio(correct_count, evidence_count),
            },
        )
        .collect())
}

/// Share of items whose binary decision flipped between image-only and
/// fused inference, per data situation. DS4 runs no fusion and always
/// reports zero.
pub fn fusion_impact_by_ds(rows: &[DecisionRow]) -> Vec<FusionImpactRow> {
    let mut counts: BTreeMap<DataSituation, (u64, u64)> = BTreeMap::new();
    for row in rows {
        let entry = counts.entry(row.data_situation).or_default();
        entry.0 += 1;
        if row.decision_changed && row.data_situation != DataSituation::DS4 {
            entry.1 += 1;
        }
    }
    counts
        .into_iter()
        .map(
            |(data_situation, (evidence_count, changed_count))| FusionImpactRow {
                data_situation,
                evidence_count,
                changed_count,
                change_rate_pct: Percent::from_ratio(changed_count, evidence_count),
            },
        )
        .collect()
}

/// Renders the two analysis tables as Markdown.
pub fn render_report(accuracy: Option<&[DsAccuracyRow]>, impact: &[FusionImpactRow]) -> String {
    let mut out = String::new();
    if let Some(rows) = accuracy {
        out.push_str("## Pipeline Accuracy Across Derived Data Situations\n\n");
        out.push_str("| Modality | Evidence | Correct HT | Accuracy (%) |\n");
        out.push_str("|---|---|---|---|\n");
        for row in rows {
            out.push_str(&format!(
                "| {} | {} | {} / {} | {} |\n",
                row.data_situation.caption(),
                row.evidence_count,
                row.correct_count,
                row.evidence_count,
                row.accuracy_pct
            ));
        }
        out.push('\n');
    }
    out.push_str("## Impact of Multimodal Fusion on Pipeline Decisions\n\n");
    out.push_str("| Modality | Evidence | Changed | Rate (%) |\n");
    out.push_str("|---|---|---|---|\n");
    for row in impact {
        out.push_str(&format!(
            "| {} | {} | {} | {} |\n",
            row.data_situation.caption(),
            row.evidence_count,
            row.changed_count,
            row.change_rate_pct
        ));
    }
    out
}

pub fn write_report(path: &Path, report: &str) -> Result<(), AuditError> {
    let mut file = File::create(path).map_err(|e| io_failure(path, e))?;
    file.write_all(report.as_bytes())
        .and_then(|_| file.flush())
        .map_err(|e: io::Error| io_failure(path, e))
}
