//! The storage stage (session -> knowledge base) and the query stage
//! (question -> explanation), shared by the CLI and the ask-service.

use std::path::Path;

use serde::{Deserialize, Serialize};
use xar_core::path_monitor::PathMonitor;
use xar_core::perception::{deviation_log, inject_event_logs, CaptionBackend};
use xar_core::rag::{self, ExplanationResult, LlmBackend};
use xar_core::session::{FrameRecord, LogRecord, SessionEvent};
use xar_core::vector_store::{doc_id_for, AddOutcome, VectorStore};
use xar_core::Embedder;

use crate::config::AppConfig;
use crate::error::AppError;

/// Instantiated model backends.
#[derive(Debug)]
pub struct Backends {
    pub embedder: Embedder,
    pub captioner: CaptionBackend,
    pub llm: LlmBackend,
}

impl Backends {
    pub fn from_config(cfg: &AppConfig) -> Result<Self, AppError> {
        let config = |e: xar_core::BackendError| AppError::Config(e.to_string());
        Ok(Self {
            embedder: Embedder::from_config(&cfg.embed).map_err(config)?,
            captioner: CaptionBackend::from_config(&cfg.caption).map_err(config)?,
            llm: LlmBackend::from_config(&cfg.rag.llm).map_err(config)?,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub records_ingested: usize,
    pub deviations_detected: usize,
    pub captions_injected: usize,
    pub duplicates_skipped: usize,
}

/// Runs the replanning monitor over `events` and returns the log stream with
/// deviation and caption records spliced in right after the triggering plan.
///
/// Relative `image_ref`s are resolved against `image_root`.
pub async fn expand_log_stream(
    events: &[SessionEvent],
    cfg: &AppConfig,
    captioner: &CaptionBackend,
    image_root: Option<&Path>,
    summary: &mut IngestSummary,
) -> Result<Vec<LogRecord>, AppError> {
    let frames: Vec<FrameRecord> = events
        .iter()
        .filter_map(|e| match e {
            SessionEvent::Frame(f) => Some(f.clone()),
            _ => None,
        })
        .collect();

    let mut monitor = PathMonitor::new();
    let mut logs = Vec::new();
    for event in events {
        match event {
            SessionEvent::Log(record) => logs.push(record.clone()),
            SessionEvent::Frame(_) => {}
            SessionEvent::Plan(plan) => {
                // Frames up to the sync horizon are visible at event time.
                let horizon = plan.t + cfg.monitor.sync_tolerance;
                let visible = &frames[..frames.partition_point(|f| f.t <= horizon)];
                let Some(deviation) = monitor.observe_plan(plan, visible, &cfg.monitor)? else {
                    continue;
                };
                summary.deviations_detected += 1;
                match &deviation.frame {
                    Some(frame) => {
                        let frame = resolve_image(frame, image_root);
                        let caption = captioner.caption(&frame).await?;
                        logs.extend(inject_event_logs(&deviation, &caption));
                        summary.captions_injected += 1;
                    }
                    None => {
                        eprintln!(
                            "warning: no camera frame within {} s of deviation at t={}",
                            cfg.monitor.sync_tolerance, deviation.t
                        );
                        logs.push(deviation_log(&deviation));
                    }
                }
            }
        }
    }
    Ok(logs)
}

fn resolve_image(frame: &FrameRecord, root: Option<&Path>) -> FrameRecord {
    let mut frame = frame.clone();
    if let (Some(root), Some(image)) = (root, frame.image_ref.as_deref()) {
        if Path::new(image).is_relative() {
            frame.image_ref = Some(root.join(image).to_string_lossy().into_owned());
        }
    }
    frame
}

/// Embeds and stores every log record at or above the configured level.
pub async fn ingest_events(
    events: &[SessionEvent],
    store: &mut VectorStore,
    cfg: &AppConfig,
    backends: &Backends,
    image_root: Option<&Path>,
) -> Result<IngestSummary, AppError> {
    let mut summary = IngestSummary::default();
    let logs =
        expand_log_stream(events, cfg, &backends.captioner, image_root, &mut summary).await?;
    for record in logs {
        if record.level < cfg.rag.min_level {
            continue;
        }
        if store.contains(doc_id_for(&record)) {
            summary.duplicates_skipped += 1;
            continue;
        }
        let vector = backends.embedder.embed(&record.msg).await?;
        match store.add_document(record, vector)? {
            AddOutcome::Inserted => summary.records_ingested += 1,
            AddOutcome::Duplicate => summary.duplicates_skipped += 1,
        }
    }
    Ok(summary)
}

/// Loads the store at `path`; a missing file is an empty store.
pub fn load_store(path: &Path) -> Result<VectorStore, AppError> {
    match std::fs::read(path) {
        Ok(bytes) => Ok(VectorStore::load(&bytes)?),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(VectorStore::new()),
        Err(e) => Err(AppError::io(path, e)),
    }
}

/// Writes the store through a temporary sibling file and a rename.
pub fn save_store(store: &VectorStore, path: &Path) -> Result<(), AppError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, store.save()).map_err(|e| AppError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| AppError::io(path, e))
}

pub async fn ask(
    question: &str,
    store: &VectorStore,
    cfg: &AppConfig,
    backends: &Backends,
) -> Result<ExplanationResult, AppError> {
    if store.is_empty() {
        return Err(AppError::EmptyStore);
    }
    Ok(rag::answer(question, store, &cfg.rag, &backends.embedder, &backends.llm).await?)
}

#[cfg(test)]
mod tests {
    use xar_core::scenario::{generate, ScenarioConfig};
    use xar_core::session::LogLevel;

    use super::*;

    async fn ingest_default(store: &mut VectorStore, cfg: &AppConfig) -> IngestSummary {
        let events = generate(&ScenarioConfig::default()).unwrap();
        let backends = Backends::from_config(cfg).unwrap();
        ingest_events(&events, store, cfg, &backends, None).await.unwrap()
    }

    #[tokio::test]
    async fn default_scenario_ingest() {
        let cfg = AppConfig::default();
        let mut store = VectorStore::new();
        let summary = ingest_default(&mut store, &cfg).await;
        assert_eq!(
            summary,
            IngestSummary {
                records_ingested: 4,
                deviations_detected: 1,
                captions_injected: 1,
                duplicates_skipped: 0,
            }
        );
        let msgs: Vec<&str> = store.documents().iter().map(|d| d.record.msg.as_str()).collect();
        assert_eq!(
            msgs,
            [
                "navigation started from S to G",
                "path length increased from 10.000 m to 12.472 m; possible obstacle, distance to the goal increasing",
                "image-to-text: a person's arm with blue and white stripes blocking the corridor",
                "goal reached",
            ]
        );

        let again = ingest_default(&mut store, &cfg).await;
        assert_eq!(again.records_ingested, 0);
        assert_eq!(again.duplicates_skipped, summary.records_ingested);
        assert_eq!(store.len(), 4);
    }

    #[tokio::test]
    async fn min_level_filters_ingestion() {
        let mut cfg = AppConfig::default();
        cfg.rag.min_level = LogLevel::Warn;
        let mut store = VectorStore::new();
        let summary = ingest_default(&mut store, &cfg).await;
        assert_eq!(summary.records_ingested, 1);
        assert_eq!(summary.captions_injected, 1);
        assert_eq!(store.documents()[0].record.level, LogLevel::Warn);
    }

    #[tokio::test]
    async fn deviation_without_frame_logs_warning_only() {
        let mut events = generate(&ScenarioConfig::default()).unwrap();
        events.retain(|e| !matches!(e, SessionEvent::Frame(_)));
        let cfg = AppConfig::default();
        let backends = Backends::from_config(&cfg).unwrap();
        let mut store = VectorStore::new();
        let summary = ingest_events(&events, &mut store, &cfg, &backends, None)
            .await
            .unwrap();
        assert_eq!(summary.deviations_detected, 1);
        assert_eq!(summary.captions_injected, 0);
        assert_eq!(summary.records_ingested, 3);
    }

    #[test]
    fn relative_images_resolve_against_root() {
        let f = FrameRecord::with_image(0.0, "frames/a.png");
        let r = resolve_image(&f, Some(Path::new("/data/session")));
        assert_eq!(r.image_ref.as_deref(), Some("/data/session/frames/a.png"));
        let abs = FrameRecord::with_image(0.0, "/abs/a.png");
        assert_eq!(resolve_image(&abs, Some(Path::new("/x"))), abs);
    }

    #[tokio::test]
    async fn ask_on_empty_store() {
        let cfg = AppConfig::default();
        let backends = Backends::from_config(&cfg).unwrap();
        let err = ask("q", &VectorStore::new(), &cfg, &backends).await.unwrap_err();
        assert!(matches!(err, AppError::EmptyStore));
        assert_eq!(err.to_string(), "knowledge base is empty");
    }
}
