use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use tokio::sync::RwLock;
use xar_core::backend::BackendMode;
use xar_core::scenario::{generate_with_thresholds, ScenarioConfig};
use xar_core::session::{parse_session_bytes, write_session, LogLevel, Point};

use crate::config::{AppConfig, BackendLayer, ConfigLayer, MonitorLayer, RagLayer};
use crate::error::AppError;
use crate::pipeline::{self, Backends};
use crate::service::{self, AppState};

#[derive(Debug, Parser)]
#[command(name = "xar", version, about = "Explain robot behavior from its logs and camera captions")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the synthetic obstacle-detour session.
    GenScenario(GenScenarioArgs),
    /// Replay a session file into the knowledge base.
    Ingest {
        /// Session file (JSON Lines).
        session: PathBuf,
    },
    /// Answer one question from the knowledge base.
    Ask {
        question: String,
    },
    /// Run the HTTP ask-service.
    Serve,
}

#[derive(Debug, Args)]
pub struct GenScenarioArgs {
    /// Output path, or `-` for standard output.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = parse_point, value_name = "X,Y")]
    pub start: Option<Point>,
    #[arg(long, value_parser = parse_point, value_name = "X,Y")]
    pub goal: Option<Point>,
    #[arg(long, value_name = "SECONDS")]
    pub obstacle_time: Option<f64>,
    #[arg(long, value_parser = parse_point, value_name = "X,Y")]
    pub detour_apex: Option<Point>,
    #[arg(long, value_name = "SECONDS")]
    pub frame_period: Option<f64>,
    #[arg(long)]
    pub caption_hint: Option<String>,
}

impl GenScenarioArgs {
    fn scenario(&self) -> ScenarioConfig {
        let d = ScenarioConfig::default();
        ScenarioConfig {
            start: self.start.unwrap_or(d.start),
            goal: self.goal.unwrap_or(d.goal),
            obstacle_time: self.obstacle_time.unwrap_or(d.obstacle_time),
            detour_apex: self.detour_apex.unwrap_or(d.detour_apex),
            frame_period: self.frame_period.unwrap_or(d.frame_period),
            caption_hint: self.caption_hint.clone().unwrap_or(d.caption_hint),
        }
    }
}

fn parse_point(s: &str) -> Result<Point, String> {
    let (x, y) = s
        .split_once(',')
        .ok_or_else(|| format!("expected X,Y, got {s:?}"))?;
    let num = |v: &str| {
        v.trim()
            .parse::<f64>()
            .map_err(|e| format!("{v:?}: {e}"))
    };
    Ok(Point::new(num(x)?, num(y)?))
}

/// Flags accepted by every subcommand. Each overrides the matching config
/// file key and `XAR_*` variable.
#[derive(Debug, Args, Default)]
pub struct GlobalArgs {
    /// JSON config file.
    #[arg(long, global = true, env = "XAR_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long = "store", global = true, value_name = "PATH")]
    pub store_path: Option<PathBuf>,
    /// Mode for every backend: fake or http.
    #[arg(long, global = true)]
    pub backend: Option<BackendMode>,

    #[arg(long, global = true)]
    pub embed_backend: Option<BackendMode>,
    #[arg(long, global = true)]
    pub embed_url: Option<String>,
    #[arg(long, global = true, value_name = "SECONDS")]
    pub embed_timeout: Option<f64>,
    #[arg(long, global = true)]
    pub embed_model: Option<String>,

    #[arg(long, global = true)]
    pub vlm_backend: Option<BackendMode>,
    #[arg(long, global = true)]
    pub vlm_url: Option<String>,
    #[arg(long, global = true, value_name = "SECONDS")]
    pub vlm_timeout: Option<f64>,
    #[arg(long, global = true)]
    pub vlm_model: Option<String>,
    #[arg(long, global = true)]
    pub vlm_prompt: Option<String>,

    #[arg(long, global = true)]
    pub llm_backend: Option<BackendMode>,
    #[arg(long, global = true)]
    pub llm_url: Option<String>,
    #[arg(long, global = true, value_name = "SECONDS")]
    pub llm_timeout: Option<f64>,
    #[arg(long, global = true)]
    pub llm_model: Option<String>,

    #[arg(long, global = true)]
    pub ratio_threshold: Option<f64>,
    #[arg(long, global = true, value_name = "METERS")]
    pub min_abs_increase: Option<f64>,
    #[arg(long, global = true, value_name = "SECONDS")]
    pub sync_tolerance: Option<f64>,

    /// Number of log records retrieved as context.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Prompt template with {context} and {question}.
    #[arg(long, global = true)]
    pub template: Option<String>,
    /// Lowest log level ingested: DEBUG, INFO, WARN or ERROR.
    #[arg(long, global = true)]
    pub min_level: Option<LogLevel>,
    #[arg(long, global = true)]
    pub port: Option<u16>,
}

impl GlobalArgs {
    pub fn layer(&self) -> ConfigLayer {
        ConfigLayer {
            store_path: self.store_path.clone(),
            backend: self.backend,
            embed: BackendLayer {
                mode: self.embed_backend,
                endpoint_url: self.embed_url.clone(),
                timeout: self.embed_timeout,
                model_name: self.embed_model.clone(),
                prompt: None,
            },
            caption: BackendLayer {
                mode: self.vlm_backend,
                endpoint_url: self.vlm_url.clone(),
                timeout: self.vlm_timeout,
                model_name: self.vlm_model.clone(),
                prompt: self.vlm_prompt.clone(),
            },
            llm: BackendLayer {
                mode: self.llm_backend,
                endpoint_url: self.llm_url.clone(),
                timeout: self.llm_timeout,
                model_name: self.llm_model.clone(),
                prompt: None,
            },
            monitor: MonitorLayer {
                ratio_threshold: self.ratio_threshold,
                min_abs_increase: self.min_abs_increase,
                sync_tolerance: self.sync_tolerance,
            },
            rag: RagLayer {
                k: self.k,
                template: self.template.clone(),
                min_level: self.min_level,
            },
            port: self.port,
        }
    }

    pub fn resolve(&self) -> Result<AppConfig, AppError> {
        AppConfig::resolve(
            self.config.as_deref(),
            |name| std::env::var(name).ok(),
            &self.layer(),
        )
    }
}

fn print_json(value: &impl serde::Serialize) -> Result<(), AppError> {
    let line = serde_json::to_string(value).expect("serializable output");
    let mut out = std::io::stdout().lock();
    writeln!(out, "{line}")
        .and_then(|_| out.flush())
        .map_err(|e| AppError::io(Path::new("<stdout>"), e))
}

pub async fn run(cli: Cli) -> Result<(), AppError> {
    let cfg = cli.global.resolve()?;
    match cli.command {
        Command::GenScenario(args) => gen_scenario(&args, &cfg),
        Command::Ingest { session } => ingest(&session, &cfg).await,
        Command::Ask { question } => ask(&question, &cfg).await,
        Command::Serve => serve(cfg).await,
    }
}

fn gen_scenario(args: &GenScenarioArgs, cfg: &AppConfig) -> Result<(), AppError> {
    let events = generate_with_thresholds(&args.scenario(), &cfg.monitor)?;
    let text = write_session(&events)?;
    if args.out == Path::new("-") {
        let mut out = std::io::stdout().lock();
        return out
            .write_all(text.as_bytes())
            .and_then(|_| out.flush())
            .map_err(|e| AppError::io(Path::new("<stdout>"), e));
    }
    std::fs::write(&args.out, text).map_err(|e| AppError::io(&args.out, e))?;
    print_json(&json!({"out": args.out, "events": events.len()}))
}

async fn ingest(session: &Path, cfg: &AppConfig) -> Result<(), AppError> {
    let bytes = std::fs::read(session).map_err(|e| AppError::io(session, e))?;
    let events = parse_session_bytes(&bytes)?;
    let backends = Backends::from_config(cfg)?;
    let mut store = pipeline::load_store(&cfg.store_path)?;
    let summary =
        pipeline::ingest_events(&events, &mut store, cfg, &backends, session.parent()).await?;
    pipeline::save_store(&store, &cfg.store_path)?;
    print_json(&summary)
}

async fn ask(question: &str, cfg: &AppConfig) -> Result<(), AppError> {
    let store = pipeline::load_store(&cfg.store_path)?;
    if store.is_empty() {
        return Err(AppError::EmptyStore);
    }
    let backends = Backends::from_config(cfg)?;
    let result = pipeline::ask(question, &store, cfg, &backends).await?;
    print_json(&result)
}

async fn serve(cfg: AppConfig) -> Result<(), AppError> {
    let store = pipeline::load_store(&cfg.store_path)?;
    if store.is_empty() {
        eprintln!("warning: knowledge base is empty; /ask will answer 409");
    }
    let backends = Backends::from_config(&cfg)?;
    let listener = service::bind(cfg.port).await?;
    let addr = listener
        .local_addr()
        .map_err(|e| AppError::Bind {
            addr: format!("0.0.0.0:{}", cfg.port),
            source: e,
        })?;
    let state = Arc::new(AppState {
        store: RwLock::new(store),
        config: cfg,
        backends,
    });
    print_json(&json!({"status": "listening", "port": addr.port()}))?;
    service::serve(listener, state, shutdown_signal()).await
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let terminate = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = terminate => {}
    }
    eprintln!("shutting down");
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points() {
        assert_eq!(parse_point("5,0.5").unwrap(), Point::new(5.0, 0.5));
        assert_eq!(parse_point(" -1 , 2e1").unwrap(), Point::new(-1.0, 20.0));
        assert!(parse_point("5").is_err());
        assert!(parse_point("a,b").is_err());
    }

    #[test]
    fn flags_parse_into_layer() {
        let cli = Cli::try_parse_from([
            "xar", "ask", "why?", "--k", "1", "--backend", "fake", "--min-level", "warn",
            "--store", "kb.json",
        ])
        .unwrap();
        let layer = cli.global.layer();
        assert_eq!(layer.rag.k, Some(1));
        assert_eq!(layer.backend, Some(BackendMode::Fake));
        assert_eq!(layer.rag.min_level, Some(LogLevel::Warn));
        assert_eq!(layer.store_path, Some(PathBuf::from("kb.json")));
        assert!(matches!(cli.command, Command::Ask { ref question } if question == "why?"));
    }

    #[test]
    fn gen_scenario_flags() {
        let cli = Cli::try_parse_from(["xar", "gen-scenario", "--detour-apex", "5,0.5", "--out", "-"])
            .unwrap();
        let Command::GenScenario(args) = cli.command else {
            panic!("wrong command")
        };
        let sc = args.scenario();
        assert_eq!(sc.detour_apex, Point::new(5.0, 0.5));
        assert_eq!(sc.goal, ScenarioConfig::default().goal);
    }
}
