//! Command-line front end: `triage`, `analyze` and `validate-manifest`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use crate::audit::{
    accuracy_by_ds, fusion_impact_by_ds, read_decisions, render_report, write_audit,
    write_event_log, write_report, AuditError, DecisionRow, REPORT_FILE,
};
use crate::config::{PartialConfig, PartialWeights, PipelineConfig};
use crate::evidence::{load_annotations, load_manifest, validate_manifest};
use crate::pipeline::Pipeline;
use crate::routing::{DataSituation, Router};
use crate::scorers::{BackendKind, LexiconBackend, RemoteBackend, ScorerSet, ScoringBackend};

pub const EXIT_OK: i32 = 0;
/// Some items could not be scored; everything else was written.
pub const EXIT_ITEM_FAILURES: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INGEST: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "evtriage",
    version,
    about = "Evidence-aware multimodal hate and threat triage"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Route, score and fuse every item of a manifest and write the audit files.
    Triage(TriageArgs),
    /// Build the per-data-situation report from a decisions file.
    Analyze(AnalyzeArgs),
    /// Check a manifest and list every problem without running the pipeline.
    ValidateManifest(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct TriageArgs {
    /// TOML config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub manifest_path: Option<PathBuf>,
    #[arg(long)]
    pub annotations_path: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub w_img: Option<f64>,
    #[arg(long)]
    pub w_ocr: Option<f64>,
    #[arg(long)]
    pub w_assoc: Option<f64>,
    #[arg(long)]
    pub temporal_window_s: Option<i64>,
    #[arg(long)]
    pub ocr_min_alnum: Option<usize>,
    /// Label ids whose final decision counts as non-harmful (default 9).
    #[arg(long, value_delimiter = ',')]
    pub non_harmful_labels: Option<Vec<usize>>,
    #[arg(long, value_parser = parse_backend)]
    pub scorer_backend: Option<BackendKind>,
    #[arg(long)]
    pub remote_endpoint: Option<String>,
    #[arg(long)]
    pub remote_timeout_s: Option<u64>,
    #[arg(long)]
    pub max_inflight: Option<usize>,
    #[arg(long)]
    pub retry_budget: Option<u32>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// decisions.csv written by `triage`.
    #[arg(long)]
    pub decisions: PathBuf,
    /// Ground-truth annotations; without them only the fusion-impact table is produced.
    #[arg(long)]
    pub annotations_path: Option<PathBuf>,
    /// Report destination (default: report.md next to the decisions file).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub manifest_path: PathBuf,
}

fn parse_backend(value: &str) -> Result<BackendKind, String> {
    match value {
        "lexicon" => Ok(BackendKind::Lexicon),
        "remote" => Ok(BackendKind::Remote),
        other => Err(format!(
            "unknown backend {other:?} (expected lexicon or remote)"
        )),
    }
}

impl TriageArgs {
    fn overrides(&self) -> PartialConfig {
        let weights = (self.w_img.is_some() || self.w_ocr.is_some() || self.w_assoc.is_some())
            .then_some(PartialWeights {
                w_img: self.w_img,
                w_ocr: self.w_ocr,
                w_assoc: self.w_assoc,
            });
        PartialConfig {
            manifest_path: self.manifest_path.clone(),
            annotations_path: self.annotations_path.clone(),
            out_dir: self.out_dir.clone(),
            temporal_window_s: self.temporal_window_s,
            ocr_min_alnum: self.ocr_min_alnum,
            non_harmful_labels: self.non_harmful_labels.clone(),
            scorer_backend: self.scorer_backend,
            remote_endpoint: self.remote_endpoint.clone(),
            remote_timeout_s: self.remote_timeout_s,
            max_inflight: self.max_inflight,
            retry_budget: self.retry_budget,
            weights,
        }
    }

    pub fn resolve(&self) -> Result<PipelineConfig, crate::config::ConfigError> {
        let base = match &self.config {
            Some(path) => PartialConfig::from_file(path)?,
            None => PartialConfig::default(),
        };
        base.merge(self.overrides()).resolve()
    }
}

pub fn run(cli: Cli) -> i32 {
    match cli.command {
        Command::Triage(args) => match args.resolve() {
            Ok(config) => cmd_triage(&config),
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_CONFIG
            }
        },
        Command::Analyze(args) => cmd_analyze(
            &args.decisions,
            args.annotations_path.as_deref(),
            args.out.as_deref(),
        ),
        Command::ValidateManifest(args) => cmd_validate_manifest(&args.manifest_path),
    }
}

fn build_backend(config: &PipelineConfig) -> Result<Arc<dyn ScoringBackend>, String> {
    match config.scorer_backend {
        BackendKind::Lexicon => Ok(Arc::new(LexiconBackend::shipped())),
        BackendKind::Remote => {
            let endpoint = config
                .remote_endpoint
                .as_deref()
                .ok_or("remote_endpoint is required for the remote backend")?;
            let backend = RemoteBackend::http(
                endpoint,
                Duration::from_secs(config.remote_timeout_s),
                config.retry_budget,
            )
            .map_err(|e| e.to_string())?;
            Ok(Arc::new(backend))
        }
    }
}

fn audit_exit(e: &AuditError) -> i32 {
    eprintln!("error: {e}");
    match e {
        AuditError::IoFailure { .. } => EXIT_IO,
        AuditError::MalformedRow { .. } | AuditError::MissingAnnotation(_) => EXIT_INGEST,
    }
}

fn print_ds_summary(rows: &[DecisionRow], failed: usize) {
    let mut counts: BTreeMap<DataSituation, usize> =
        DataSituation::ALL.iter().map(|&ds| (ds, 0)).collect();
    for row in rows {
        *counts.entry(row.data_situation).or_default() += 1;
    }
    for (ds, count) in counts {
        println!("{}: {count} item(s)", ds.caption());
    }
    if failed > 0 {
        println!("failed: {failed} item(s) could not be scored (see audit_events.csv)");
    }
}

pub fn cmd_triage(config: &PipelineConfig) -> i32 {
    let items = match load_manifest(&config.manifest_path) {
        Ok(items) => items,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INGEST;
        }
    };
    let annotations = match config
        .annotations_path
        .as_deref()
        .map(load_annotations)
        .transpose()
    {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INGEST;
        }
    };
    let backend = match build_backend(config) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };

    let pipeline = Pipeline::new(
        Router::new(config.router_config()),
        ScorerSet::from_backend(backend),
        config.weights,
        config.harm_policy(),
    )
    .with_max_inflight(config.max_inflight);
    let run = match pipeline.run(&items) {
        Ok(run) => run,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return EXIT_CONFIG;
        }
    };

    if let Err(e) = config.persist(&config.out_dir) {
        eprintln!(
            "error: cannot write effective config into {}: {e}",
            config.out_dir.display()
        );
        return EXIT_IO;
    }
    if let Err(e) = write_audit(&run.records, &config.out_dir) {
        return audit_exit(&e);
    }
    if let Err(e) = write_event_log(&run.records, &run.failed, &config.out_dir) {
        return audit_exit(&e);
    }

    let rows: Vec<DecisionRow> = run.records.iter().map(|r| r.decision_row()).collect();
    let accuracy = match annotations
        .as_ref()
        .map(|a| accuracy_by_ds(&rows, a))
        .transpose()
    {
        Ok(acc) => acc,
        Err(e) => return audit_exit(&e),
    };
    let report = render_report(accuracy.as_deref(), &fusion_impact_by_ds(&rows));
    if let Err(e) = write_report(&config.out_dir.join(REPORT_FILE), &report) {
        return audit_exit(&e);
    }

    print_ds_summary(&rows, run.failed.len());
    if run.failed.is_empty() {
        EXIT_OK
    } else {
        EXIT_ITEM_FAILURES
    }
}

pub fn cmd_analyze(decisions: &Path, annotations_path: Option<&Path>, out: Option<&Path>) -> i32 {
    let rows = match read_decisions(decisions) {
        Ok(rows) => rows,
        Err(AuditError::IoFailure { path, detail }) => {
            eprintln!("error: cannot read {}: {detail}", path.display());
            return EXIT_INGEST;
        }
        Err(e) => return audit_exit(&e),
    };
    let accuracy = match annotations_path {
        Some(path) => {
            let annotations = match load_annotations(path) {
                Ok(a) => a,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_INGEST;
                }
            };
            match accuracy_by_ds(&rows, &annotations) {
                Ok(acc) => Some(acc),
                Err(AuditError::MissingAnnotation(ids)) => {
                    for id in &ids {
                        eprintln!("MissingAnnotation: {id}");
                    }
                    return EXIT_INGEST;
                }
                Err(e) => return audit_exit(&e),
            }
        }
        None => None,
    };
    let report = render_report(accuracy.as_deref(), &fusion_impact_by_ds(&rows));
    let out = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| decisions.with_file_name(REPORT_FILE));
    if let Err(e) = write_report(&out, &report) {
        return audit_exit(&e);
    }
    print!("{report}");
    EXIT_OK
}

pub fn cmd_validate_manifest(manifest_path: &Path) -> i32 {
    match validate_manifest(manifest_path) {
        Ok(diagnostics) => {
            for d in &diagnostics {
                println!("{d}");
            }
            println!("{} errors", diagnostics.len());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INGEST
        }
    }
}
