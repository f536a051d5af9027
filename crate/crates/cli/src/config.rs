//! Application configuration.
//!
//! Values are resolved in layers, later layers winning:
//! built-in defaults, then the JSON config file, then `XAR_*` environment
//! variables, then command-line flags. Inside one layer the umbrella
//! `backend` setting is applied before the per-backend modes, so
//! `XAR_BACKEND=http XAR_EMBED_BACKEND=fake` yields a fake embedder only.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;
use xar_core::backend::{BackendConfig, BackendMode};
use xar_core::path_monitor::MonitorConfig;
use xar_core::perception::CaptionConfig;
use xar_core::rag::RagConfig;
use xar_core::session::LogLevel;

use crate::error::AppError;

pub const DEFAULT_STORE_PATH: &str = "xar_store.json";
pub const DEFAULT_PORT: u16 = 8080;

#[derive(Debug, Clone, PartialEq)]
pub struct AppConfig {
    pub store_path: PathBuf,
    pub embed: BackendConfig,
    pub caption: CaptionConfig,
    pub monitor: MonitorConfig,
    /// Retrieval settings and the language-model backend.
    pub rag: RagConfig,
    pub port: u16,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            store_path: PathBuf::from(DEFAULT_STORE_PATH),
            embed: BackendConfig::fake(30.0),
            caption: CaptionConfig::default(),
            monitor: MonitorConfig::default(),
            rag: RagConfig::default(),
            port: DEFAULT_PORT,
        }
    }
}

impl AppConfig {
    pub fn validate(&self) -> Result<(), AppError> {
        let err = |what: &str, e: String| AppError::Config(format!("{what}: {e}"));
        self.embed.validate().map_err(|e| err("embed", e.to_string()))?;
        self.caption
            .backend()
            .validate()
            .map_err(|e| err("caption", e.to_string()))?;
        self.monitor.validate().map_err(|e| err("monitor", e.to_string()))?;
        self.rag.validate().map_err(|e| err("rag", e.to_string()))?;
        Ok(())
    }

    /// Resolves the full layer stack. `env` looks up one variable by name.
    pub fn resolve(
        file: Option<&Path>,
        env: impl Fn(&str) -> Option<String>,
        flags: &ConfigLayer,
    ) -> Result<Self, AppError> {
        let mut cfg = AppConfig::default();
        if let Some(path) = file {
            ConfigLayer::from_file(path)?.apply(&mut cfg);
        }
        ConfigLayer::from_env(env)?.apply(&mut cfg);
        flags.apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendLayer {
    pub mode: Option<BackendMode>,
    pub endpoint_url: Option<String>,
    pub timeout: Option<f64>,
    pub model_name: Option<String>,
    /// Caption backend only.
    pub prompt: Option<String>,
}

impl BackendLayer {
    fn apply(&self, mode: &mut BackendMode, url: &mut Option<String>, timeout: &mut f64, model: &mut Option<String>) {
        if let Some(m) = self.mode {
            *mode = m;
        }
        if let Some(u) = &self.endpoint_url {
            *url = Some(u.clone());
        }
        if let Some(t) = self.timeout {
            *timeout = t;
        }
        if let Some(m) = &self.model_name {
            *model = Some(m.clone());
        }
    }

    fn apply_backend(&self, cfg: &mut BackendConfig) {
        self.apply(&mut cfg.mode, &mut cfg.endpoint_url, &mut cfg.timeout, &mut cfg.model_name);
    }

    fn apply_caption(&self, cfg: &mut CaptionConfig) {
        self.apply(&mut cfg.mode, &mut cfg.endpoint_url, &mut cfg.timeout, &mut cfg.model_name);
        if let Some(p) = &self.prompt {
            cfg.prompt = p.clone();
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorLayer {
    pub ratio_threshold: Option<f64>,
    pub min_abs_increase: Option<f64>,
    pub sync_tolerance: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RagLayer {
    pub k: Option<usize>,
    pub template: Option<String>,
    pub min_level: Option<LogLevel>,
}

/// One partial configuration source. Also the JSON config file schema.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub store_path: Option<PathBuf>,
    /// Mode applied to every backend before per-backend modes.
    pub backend: Option<BackendMode>,
    #[serde(default)]
    pub embed: BackendLayer,
    #[serde(default)]
    pub caption: BackendLayer,
    #[serde(default)]
    pub llm: BackendLayer,
    #[serde(default)]
    pub monitor: MonitorLayer,
    #[serde(default)]
    pub rag: RagLayer,
    pub port: Option<u16>,
}

fn parse_env<T: FromStr>(name: &str, value: String) -> Result<T, AppError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| AppError::Config(format!("{name}={value:?}: {e}")))
}

impl ConfigLayer {
    pub fn from_file(path: &Path) -> Result<Self, AppError> {
        let bytes = std::fs::read(path).map_err(|e| AppError::io(path, e))?;
        serde_json::from_slice(&bytes)
            .map_err(|e| AppError::Config(format!("{}: {e}", path.display())))
    }

    pub fn from_env(env: impl Fn(&str) -> Option<String>) -> Result<Self, AppError> {
        let mut layer = ConfigLayer::default();
        macro_rules! take {
            ($name:literal => $slot:expr) => {
                if let Some(v) = env($name) {
                    $slot = Some(parse_env($name, v)?);
                }
            };
        }
        take!("XAR_STORE_PATH" => layer.store_path);
        take!("XAR_BACKEND" => layer.backend);
        take!("XAR_PORT" => layer.port);

        take!("XAR_EMBED_BACKEND" => layer.embed.mode);
        take!("XAR_EMBED_URL" => layer.embed.endpoint_url);
        take!("XAR_EMBED_TIMEOUT" => layer.embed.timeout);
        take!("XAR_EMBED_MODEL" => layer.embed.model_name);

        take!("XAR_VLM_BACKEND" => layer.caption.mode);
        take!("XAR_VLM_URL" => layer.caption.endpoint_url);
        take!("XAR_VLM_TIMEOUT" => layer.caption.timeout);
        take!("XAR_VLM_MODEL" => layer.caption.model_name);
        take!("XAR_VLM_PROMPT" => layer.caption.prompt);

        take!("XAR_LLM_BACKEND" => layer.llm.mode);
        take!("XAR_LLM_URL" => layer.llm.endpoint_url);
        take!("XAR_LLM_TIMEOUT" => layer.llm.timeout);
        take!("XAR_LLM_MODEL" => layer.llm.model_name);

        take!("XAR_RATIO_THRESHOLD" => layer.monitor.ratio_threshold);
        take!("XAR_MIN_ABS_INCREASE" => layer.monitor.min_abs_increase);
        take!("XAR_SYNC_TOLERANCE" => layer.monitor.sync_tolerance);

        take!("XAR_K" => layer.rag.k);
        take!("XAR_TEMPLATE" => layer.rag.template);
        take!("XAR_MIN_LEVEL" => layer.rag.min_level);
        Ok(layer)
    }

    pub fn apply(&self, cfg: &mut AppConfig) {
        if let Some(p) = &self.store_path {
            cfg.store_path = p.clone();
        }
        if let Some(mode) = self.backend {
            cfg.embed.mode = mode;
            cfg.caption.mode = mode;
            cfg.rag.llm.mode = mode;
        }
        self.embed.apply_backend(&mut cfg.embed);
        self.caption.apply_caption(&mut cfg.caption);
        self.llm.apply_backend(&mut cfg.rag.llm);

        let m = &self.monitor;
        if let Some(v) = m.ratio_threshold {
            cfg.monitor.ratio_threshold = v;
        }
        if let Some(v) = m.min_abs_increase {
            cfg.monitor.min_abs_increase = v;
        }
        if let Some(v) = m.sync_tolerance {
            cfg.monitor.sync_tolerance = v;
        }

        if let Some(k) = self.rag.k {
            cfg.rag.k = k;
        }
        if let Some(t) = &self.rag.template {
            cfg.rag.template = t.clone();
        }
        if let Some(l) = self.rag.min_level {
            cfg.rag.min_level = l;
        }
        if let Some(p) = self.port {
            cfg.port = p;
        }
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;

    fn env_of(pairs: &[(&str, &str)]) -> impl Fn(&str) -> Option<String> {
        let map: HashMap<String, String> = pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        move |k| map.get(k).cloned()
    }

    #[test]
    fn defaults() {
        let cfg = AppConfig::resolve(None, env_of(&[]), &ConfigLayer::default()).unwrap();
        assert_eq!(cfg, AppConfig::default());
        assert_eq!(cfg.rag.k, 5);
        assert_eq!(cfg.rag.llm.timeout, 60.0);
        assert_eq!(cfg.caption.timeout, 30.0);
        assert_eq!(cfg.port, 8080);
        assert_eq!(cfg.monitor.ratio_threshold, 1.2);
    }

    #[test]
    fn precedence_cli_over_env_over_file() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("xar.json");
        std::fs::write(
            &file,
            r#"{"store_path":"from_file.json","port":1000,"rag":{"k":2,"min_level":"WARN"},
                "monitor":{"ratio_threshold":1.5}}"#,
        )
        .unwrap();

        let cfg = AppConfig::resolve(Some(&file), env_of(&[]), &ConfigLayer::default()).unwrap();
        assert_eq!(cfg.store_path, PathBuf::from("from_file.json"));
        assert_eq!(cfg.port, 1000);
        assert_eq!(cfg.rag.k, 2);
        assert_eq!(cfg.rag.min_level, LogLevel::Warn);
        assert_eq!(cfg.monitor.ratio_threshold, 1.5);

        let env = env_of(&[("XAR_PORT", "2000"), ("XAR_K", "3"), ("XAR_STORE_PATH", "env.json")]);
        let cfg = AppConfig::resolve(Some(&file), &env, &ConfigLayer::default()).unwrap();
        assert_eq!((cfg.port, cfg.rag.k), (2000, 3));
        assert_eq!(cfg.store_path, PathBuf::from("env.json"));

        let flags = ConfigLayer {
            port: Some(3000),
            ..Default::default()
        };
        let cfg = AppConfig::resolve(Some(&file), &env, &flags).unwrap();
        assert_eq!((cfg.port, cfg.rag.k), (3000, 3));
    }

    #[test]
    fn umbrella_backend_then_specific() {
        let env = env_of(&[
            ("XAR_BACKEND", "http"),
            ("XAR_EMBED_BACKEND", "fake"),
            ("XAR_VLM_URL", "http://vlm:1"),
            ("XAR_LLM_URL", "http://llm:2"),
        ]);
        let cfg = AppConfig::resolve(None, env, &ConfigLayer::default()).unwrap();
        assert_eq!(cfg.embed.mode, BackendMode::Fake);
        assert_eq!(cfg.caption.mode, BackendMode::Http);
        assert_eq!(cfg.rag.llm.mode, BackendMode::Http);
        assert_eq!(cfg.rag.llm.endpoint_url.as_deref(), Some("http://llm:2"));

        // A later layer's umbrella overrides an earlier layer's specific mode.
        let flags = ConfigLayer {
            backend: Some(BackendMode::Fake),
            ..Default::default()
        };
        let env = env_of(&[("XAR_EMBED_BACKEND", "http"), ("XAR_EMBED_URL", "http://e:3")]);
        let cfg = AppConfig::resolve(None, env, &flags).unwrap();
        assert_eq!(cfg.embed.mode, BackendMode::Fake);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for pairs in [
            [("XAR_PORT", "not-a-port")],
            [("XAR_BACKEND", "grpc")],
            [("XAR_K", "0")],
            [("XAR_TEMPLATE", "no placeholders")],
            [("XAR_LLM_BACKEND", "http")],
            [("XAR_RATIO_THRESHOLD", "0.9")],
        ] {
            let err = AppConfig::resolve(None, env_of(&pairs), &ConfigLayer::default()).unwrap_err();
            assert!(matches!(err, AppError::Config(_)), "{pairs:?}: {err:?}");
            assert_eq!(err.exit_code(), 2);
        }
    }

    #[test]
    fn unknown_file_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("xar.json");
        std::fs::write(&file, r#"{"stor_path":"typo.json"}"#).unwrap();
        assert!(matches!(
            ConfigLayer::from_file(&file),
            Err(AppError::Config(_))
        ));
        let missing = dir.path().join("missing.json");
        assert_eq!(ConfigLayer::from_file(&missing).unwrap_err().exit_code(), 4);
    }
}
