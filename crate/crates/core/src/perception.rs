//! Camera captioning and injection of deviation events into the log stream.

use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::backend::{BackendConfig, BackendError, BackendMode, HttpEndpoint};
use crate::path_monitor::DeviationEvent;
use crate::session::{FrameRecord, LogLevel, LogRecord};

/// Node name used for every injected record.
pub const MONITOR_NODE: &str = "explainability_monitor";

/// Prefix of the injected caption record. Retrieval and tests key on it.
pub const CAPTION_MARKER: &str = "image-to-text: ";

pub const DEFAULT_CAPTION_PROMPT: &str = "Describe the image concisely.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaptionConfig {
    pub mode: BackendMode,
    pub endpoint_url: Option<String>,
    /// Seconds.
    pub timeout: f64,
    pub model_name: Option<String>,
    pub prompt: String,
}

impl Default for CaptionConfig {
    fn default() -> Self {
        Self {
            mode: BackendMode::Fake,
            endpoint_url: None,
            timeout: 30.0,
            model_name: None,
            prompt: DEFAULT_CAPTION_PROMPT.to_string(),
        }
    }
}

impl CaptionConfig {
    pub fn backend(&self) -> BackendConfig {
        BackendConfig {
            mode: self.mode,
            endpoint_url: self.endpoint_url.clone(),
            timeout: self.timeout,
            model_name: self.model_name.clone(),
        }
    }
}

#[derive(Serialize)]
struct CaptionRequest<'a> {
    model: Option<&'a str>,
    image_base64: String,
    prompt: &'a str,
}

#[derive(Deserialize)]
struct CaptionResponse {
    caption: String,
}

#[derive(Debug)]
pub enum CaptionBackend {
    /// Returns the frame's caption hint verbatim.
    Fake,
    Http(HttpCaptioner),
}

#[derive(Debug)]
pub struct HttpCaptioner {
    endpoint: HttpEndpoint,
    model: Option<String>,
    prompt: String,
}

impl CaptionBackend {
    pub fn from_config(cfg: &CaptionConfig) -> Result<Self, BackendError> {
        let backend = cfg.backend();
        backend.validate()?;
        Ok(match cfg.mode {
            BackendMode::Fake => CaptionBackend::Fake,
            BackendMode::Http => CaptionBackend::Http(HttpCaptioner {
                endpoint: HttpEndpoint::new(&backend)?,
                model: cfg.model_name.clone(),
                prompt: cfg.prompt.clone(),
            }),
        })
    }

    pub async fn caption(&self, frame: &FrameRecord) -> Result<String, BackendError> {
        let text = match self {
            CaptionBackend::Fake => frame
                .caption_hint
                .clone()
                .ok_or(BackendError::MissingCaptionHint)?,
            CaptionBackend::Http(http) => {
                let path = frame
                    .image_ref
                    .as_deref()
                    .ok_or_else(|| BackendError::MissingImage("frame has no image_ref".into()))?;
                let bytes = tokio::fs::read(path)
                    .await
                    .map_err(|e| BackendError::MissingImage(format!("{path}: {e}")))?;
                let request = CaptionRequest {
                    model: http.model.as_deref(),
                    image_base64: base64::engine::general_purpose::STANDARD.encode(bytes),
                    prompt: &http.prompt,
                };
                let resp: CaptionResponse = http.endpoint.post_json("/caption", &request).await?;
                resp.caption
            }
        };
        if text.trim().is_empty() {
            return Err(BackendError::EmptyCaption);
        }
        Ok(text)
    }
}

/// The WARN line announcing a deviation.
pub fn deviation_log(event: &DeviationEvent) -> LogRecord {
    LogRecord::new(
        event.t,
        LogLevel::Warn,
        MONITOR_NODE,
        format!(
            "path length increased from {:.3} m to {:.3} m; possible obstacle, distance to the goal increasing",
            event.old_length, event.new_length
        ),
    )
}

/// The two log lines announcing a deviation and what the camera saw.
///
/// Panics if `caption_text` is empty; callers reject empty captions first.
pub fn inject_event_logs(event: &DeviationEvent, caption_text: &str) -> [LogRecord; 2] {
    assert!(!caption_text.is_empty(), "caption text must not be empty");
    [
        deviation_log(event),
        LogRecord::new(
            event.t,
            LogLevel::Info,
            MONITOR_NODE,
            format!("{CAPTION_MARKER}{caption_text}"),
        ),
    ]
}
