//! Shared configuration and error taxonomy for the pluggable model backends
//! (embedding, captioning, chat completion).

use std::time::Duration;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendMode {
    #[default]
    Fake,
    Http,
}

impl std::str::FromStr for BackendMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fake" => Ok(BackendMode::Fake),
            "http" => Ok(BackendMode::Http),
            other => Err(format!("unknown backend mode {other:?} (expected fake or http)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    #[serde(default)]
    pub mode: BackendMode,
    #[serde(default)]
    pub endpoint_url: Option<String>,
    /// Per-request timeout in seconds.
    pub timeout: f64,
    #[serde(default)]
    pub model_name: Option<String>,
}

impl BackendConfig {
    pub fn fake(timeout: f64) -> Self {
        Self {
            mode: BackendMode::Fake,
            endpoint_url: None,
            timeout,
            model_name: None,
        }
    }

    pub fn http(endpoint_url: impl Into<String>, timeout: f64) -> Self {
        Self {
            mode: BackendMode::Http,
            endpoint_url: Some(endpoint_url.into()),
            timeout,
            model_name: None,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !(self.timeout.is_finite() && self.timeout > 0.0) {
            return Err(BackendError::InvalidConfig(
                "timeout must be a positive number of seconds".into(),
            ));
        }
        if self.mode == BackendMode::Http
            && self.endpoint_url.as_deref().is_none_or(str::is_empty)
        {
            return Err(BackendError::InvalidConfig(
                "http mode requires endpoint_url".into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn timeout_duration(&self) -> Duration {
        Duration::from_secs_f64(self.timeout)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("backend at {url} unavailable: {cause}")]
    Unavailable { url: String, cause: String },
    #[error("backend at {url} timed out")]
    Timeout { url: String },
    #[error("frame has no caption hint")]
    MissingCaptionHint,
    #[error("frame image unavailable: {0}")]
    MissingImage(String),
    #[error("backend returned an empty caption")]
    EmptyCaption,
    #[error("backend returned an empty answer")]
    EmptyAnswer,
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid backend configuration: {0}")]
    InvalidConfig(String),
}

/// Thin JSON-over-HTTP client bound to one endpoint.
#[derive(Debug, Clone)]
pub(crate) struct HttpEndpoint {
    client: reqwest::Client,
    base_url: String,
    timeout: Duration,
}

impl HttpEndpoint {
    pub(crate) fn new(cfg: &BackendConfig) -> Result<Self, BackendError> {
        cfg.validate()?;
        let base_url = cfg
            .endpoint_url
            .as_deref()
            .unwrap_or_default()
            .trim_end_matches('/')
            .to_string();
        let client = reqwest::Client::builder()
            .build()
            .map_err(|e| BackendError::InvalidConfig(e.to_string()))?;
        Ok(Self {
            client,
            base_url,
            timeout: cfg.timeout_duration(),
        })
    }

    pub(crate) fn url(&self, path: &str) -> String {
        format!("{}{}", self.base_url, path)
    }

    pub(crate) async fn post_json<B, R>(&self, path: &str, body: &B) -> Result<R, BackendError>
    where
        B: Serialize + ?Sized,
        R: DeserializeOwned,
    {
        let url = self.url(path);
        let classify = |e: reqwest::Error| {
            if e.is_timeout() {
                BackendError::Timeout { url: url.clone() }
            } else {
                BackendError::Unavailable {
                    url: url.clone(),
                    cause: e.to_string(),
                }
            }
        };
        let resp = self
            .client
            .post(&url)
            .timeout(self.timeout)
            .json(body)
            .send()
            .await
            .map_err(classify)?;
        let status = resp.status();
        if !status.is_success() {
            return Err(BackendError::Unavailable {
                url,
                cause: format!("status {status}"),
            });
        }
        let bytes = resp.bytes().await.map_err(classify)?;
        serde_json::from_slice(&bytes).map_err(|e| BackendError::Unavailable {
            url: url.clone(),
            cause: format!("invalid response body: {e}"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn http_requires_url() {
        let mut cfg = BackendConfig::fake(30.0);
        cfg.mode = BackendMode::Http;
        assert!(matches!(cfg.validate(), Err(BackendError::InvalidConfig(_))));
        assert!(BackendConfig::http("http://127.0.0.1:1", 30.0).validate().is_ok());
        assert!(BackendConfig::fake(0.0).validate().is_err());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("FAKE".parse::<BackendMode>().unwrap(), BackendMode::Fake);
        assert_eq!("http".parse::<BackendMode>().unwrap(), BackendMode::Http);
        assert!("grpc".parse::<BackendMode>().is_err());
    }
}
