//! Per-item triage: route, score the available modalities, fuse, decide.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::audit::{FailedItem, ScorerFailure, TriageRecord};
use crate::evidence::EvidenceItem;
use crate::fusion::{decide_with, fuse_item, FusionWeights, HarmPolicy};
use crate::labels::frozen_labels;
use crate::modality::Modality;
use crate::routing::Router;
use crate::scorers::{ModalityScores, ScorerSet};

#[derive(Debug, Clone, PartialEq)]
pub enum ItemOutcome {
    Completed(Box<TriageRecord>),
    Failed(FailedItem),
}

/// Results of a run, each list sorted by media id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriageRun {
    pub records: Vec<TriageRecord>,
    pub failed: Vec<FailedItem>,
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    router: Router,
    scorers: ScorerSet,
    weights: FusionWeights,
    policy: HarmPolicy,
    max_inflight: usize,
}

impl Pipeline {
    pub fn new(
        router: Router,
        scorers: ScorerSet,
        weights: FusionWeights,
        policy: HarmPolicy,
    ) -> Self {
        Pipeline {
            router,
            scorers,
            weights,
            policy,
            max_inflight: 1,
        }
    }

    /// Upper bound on items, and therefore scoring requests, in flight.
    pub fn with_max_inflight(mut self, max_inflight: usize) -> Self {
        self.max_inflight = max_inflight.max(1);
        self
    }

    pub fn process_item(&self, item: &EvidenceItem) -> ItemOutcome {
        let labels = frozen_labels();
        let routing = self.router.route(item);
        let mut failures = Vec::new();

        let image = match self
            .scorers
            .image
            .score_image(&item.media_id, &item.image_path, labels)
        {
            Ok(scores) => scores,
            Err(error) => {
                failures.push(ScorerFailure {
                    modality: Modality::Img,
                    error,
                });
                return ItemOutcome::Failed(FailedItem {
                    media_id: routing.media_id,
                    case: routing.case,
                    data_situation: routing.data_situation,
                    rejection_log: routing.rejection_log,
                    scorer_failures: failures,
                });
            }
        };

        let mut scored: BTreeMap<Modality, ModalityScores> = BTreeMap::new();
        scored.insert(Modality::Img, image);

        let text_inputs = [
            (
                Modality::Ocr,
                item.ocr_text.iter().cloned().collect::<Vec<_>>(),
            ),
            (Modality::Assoc, routing.linked_assoc.clone()),
        ];
        for (modality, segments) in text_inputs {
            if !routing.available_modalities.contains(modality) {
                continue;
            }
            match self.scorers.for_modality(modality).score_segments(
                &item.media_id,
                &segments,
                labels,
            ) {
                Ok(scores) => {
                    scored.insert(modality, scores);
                }
                Err(error) => {
                    log::warn!("{}: dropping {modality} modality: {error}", item.media_id);
                    failures.push(ScorerFailure { modality, error });
                }
            }
        }

        let vectors = scored.iter().map(|(&m, s)| (m, s.vector)).collect();
        let fusion = fuse_item(&routing, &vectors, &self.weights, &self.policy)
            .expect("image scores present and every scored modality was routed");
        let image_only = decide_with(scored[&Modality::Img].vector.as_slice(), &self.policy)
            .expect("score vectors have ten entries");

        ItemOutcome::Completed(Box::new(TriageRecord::assemble(
            routing, scored, fusion, image_only, failures,
        )))
    }

    /// Processes every item on a pool of `max_inflight` workers.
    pub fn run(&self, items: &[EvidenceItem]) -> Result<TriageRun, rayon::ThreadPoolBuildError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.max_inflight)
            .build()?;
        let outcomes: Vec<ItemOutcome> = pool.install(|| {
            items
                .par_iter()
                .map(|item| self.process_item(item))
                .collect()
        });

        let mut run = TriageRun::default();
        for outcome in outcomes {
            match outcome {
                ItemOutcome::Completed(record) => run.records.push(*record),
                ItemOutcome::Failed(item) => run.failed.push(item),
            }
        }
        run.records.sort_by(|a, b| a.media_id.cmp(&b.media_id));
        run.failed.sort_by(|a, b| a.media_id.cmp(&b.media_id));
        Ok(run)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evidence::{MediaId, TextSegment};
    use crate::labels::{LabelSpace, ScoreVector};
    use crate::routing::DataSituation;
    use crate::scorers::{BackendKind, LexiconBackend, ScorerError, ScoringBackend};
    use std::path::{Path, PathBuf};
    use std::sync::Arc;

    /// Lexicon text scoring, but fails text containing "fail" and images
    /// whose path contains "broken".
    struct Flaky(LexiconBackend);

    impl ScoringBackend for Flaky {
        fn kind(&self) -> BackendKind {
            BackendKind::Remote
        }

        fn score_image(
            &self,
            path: &Path,
            _labels: &LabelSpace,
        ) -> Result<ScoreVector, ScorerError> {
            if path.to_string_lossy().contains("broken") {
                return Err(ScorerError::BackendUnavailable("down".into()));
            }
            Ok(ScoreVector::uniform())
        }

        fn score_text(
            &self,
            content: &str,
            labels: &LabelSpace,
        ) -> Result<ScoreVector, ScorerError> {
            if content.contains("fail") {
                return Err(ScorerError::BackendUnavailable("down".into()));
            }
            self.0.score_text(content, labels)
        }
    }

    fn item(id: &str, path: &str, ocr: Option<&str>, assoc: &[&str]) -> EvidenceItem {
        let media_id = MediaId::new(id).unwrap();
        EvidenceItem {
            media_id: media_id.clone(),
            image_path: PathBuf::from(path),
            image_thread_id: Some("t".into()),
            image_timestamp: Some(0),
            ocr_text: ocr.map(|c| TextSegment::ocr(media_id.clone(), c)),
            assoc_texts: assoc
                .iter()
                .map(|c| TextSegment::assoc(media_id.clone(), *c, Some("t"), Some(30), "r"))
                .collect(),
        }
    }

    fn pipeline() -> Pipeline {
        Pipeline::new(
            Router::default(),
            ScorerSet::from_backend(Arc::new(Flaky(LexiconBackend::shipped()))),
            FusionWeights::default(),
            HarmPolicy::default(),
        )
    }

    #[test]
    fn failed_text_modality_is_dropped_not_fatal() {
        let outcome = pipeline().process_item(&item(
            "m",
            "ok.png",
            Some("please fail"),
            &["lunch with family"],
        ));
        let ItemOutcome::Completed(record) = outcome else {
            panic!("expected a record")
        };
        assert_eq!(record.data_situation, DataSituation::DS1);
        assert_eq!(record.modalities_used.to_string(), "img+assoc");
        assert_eq!(record.scorer_failures.len(), 1);
        assert_eq!(record.scorer_failures[0].modality, Modality::Ocr);
        assert_eq!(record.final_label_id, 9);
        assert!(record.decision_changed);
    }

    #[test]
    fn failed_image_fails_the_item() {
        let outcome = pipeline().process_item(&item("m", "broken.png", Some("gun"), &[]));
        let ItemOutcome::Failed(failed) = outcome else {
            panic!("expected failure")
        };
        assert_eq!(failed.scorer_failures[0].modality, Modality::Img);
        assert_eq!(failed.data_situation, DataSituation::DS2);
    }

    #[test]
    fn run_sorts_and_splits_outcomes() {
        let items = vec![
            item("c", "ok.png", None, &[]),
            item("a", "broken.png", None, &[]),
            item("b", "ok.png", Some("knife"), &[]),
        ];
        let run = pipeline().with_max_inflight(3).run(&items).unwrap();
        let ids: Vec<&str> = run.records.iter().map(|r| r.media_id.as_str()).collect();
        assert_eq!(ids, vec!["b", "c"]);
        assert_eq!(run.failed.len(), 1);
        assert_eq!(run.records[0].final_label_id, 4);
    }
}
