//! Retrieval-augmented answering: embed the question, pull the most similar
//! log records, render them into the prompt template, and ask the language
//! model.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendConfig, BackendError, BackendMode, HttpEndpoint};
use crate::embedder::Embedder;
use crate::session::{LogLevel, LogRecord};
use crate::vector_store::{StoreError, VectorStore};

pub const CONTEXT_PLACEHOLDER: &str = "{context}";
pub const QUESTION_PLACEHOLDER: &str = "{question}";

pub const DEFAULT_TEMPLATE: &str = "You are an explainability assistant for an autonomous robot.\n\
Use ONLY the context below, which contains the robot's most relevant logs.\n\
\n\
Context:\n\
{context}\n\
\n\
Question: {question}\n\
\n\
Answer:";

/// Prefix of every answer produced by the fake language model.
pub const ECHO_PREFIX: &str = "ECHO:\n";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RagConfig {
    pub k: usize,
    pub template: String,
    /// Records below this level are not ingested.
    pub min_level: LogLevel,
    pub llm: BackendConfig,
}

impl Default for RagConfig {
    fn default() -> Self {
        Self {
            k: 5,
            template: DEFAULT_TEMPLATE.to_string(),
            min_level: LogLevel::Debug,
            llm: BackendConfig::fake(60.0),
        }
    }
}

impl RagConfig {
    pub fn validate(&self) -> Result<(), RagError> {
        if self.k == 0 {
            return Err(RagError::InvalidK);
        }
        check_template(&self.template)?;
        self.llm.validate()?;
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RagError {
    #[error("knowledge base is empty")]
    EmptyStore,
    #[error("bad template: {0}")]
    BadTemplate(String),
    #[error("k must be at least 1")]
    InvalidK,
    #[error(transparent)]
    Store(StoreError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

impl From<StoreError> for RagError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::EmptyStore => RagError::EmptyStore,
            StoreError::InvalidK => RagError::InvalidK,
            other => RagError::Store(other),
        }
    }
}

/// One retrieved record with its similarity to the question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextEntry {
    #[serde(flatten)]
    pub record: LogRecord,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationResult {
    pub answer: String,
    pub context: Vec<ContextEntry>,
    pub prompt: String,
}

pub async fn build_context(
    store: &VectorStore,
    question: &str,
    k: usize,
    embedder: &Embedder,
) -> Result<Vec<ContextEntry>, RagError> {
    if store.is_empty() {
        return Err(RagError::EmptyStore);
    }
    if k == 0 {
        return Err(RagError::InvalidK);
    }
    let query = embedder.embed(question).await?;
    Ok(store
        .top_k(&query, k)?
        .into_iter()
        .map(|(doc, similarity)| ContextEntry {
            record: doc.record.clone(),
            similarity,
        })
        .collect())
}

/// One `[{t:.3}] [{node}] {msg}` line per record, LF-separated.
pub fn render_context_block(context: &[ContextEntry]) -> String {
    context
        .iter()
        .map(|e| format!("[{:.3}] [{}] {}", e.record.t, e.record.node, e.record.msg))
        .collect::<Vec<_>>()
        .join("\n")
}

fn check_template(template: &str) -> Result<(usize, usize), RagError> {
    let find_once = |placeholder: &str| match template.match_indices(placeholder).count() {
        1 => Ok(template.find(placeholder).expect("counted once")),
        0 => Err(RagError::BadTemplate(format!("missing {placeholder}"))),
        n => Err(RagError::BadTemplate(format!("{placeholder} appears {n} times"))),
    };
    Ok((find_once(CONTEXT_PLACEHOLDER)?, find_once(QUESTION_PLACEHOLDER)?))
}

/// Fills both placeholders in a single pass, so placeholder-like text inside
/// the context or the question is left alone.
pub fn render_prompt(
    template: &str,
    context: &[ContextEntry],
    question: &str,
) -> Result<String, RagError> {
    let (ctx_at, q_at) = check_template(template)?;
    let block = render_context_block(context);
    let mut slots = [
        (ctx_at, CONTEXT_PLACEHOLDER.len(), block.as_str()),
        (q_at, QUESTION_PLACEHOLDER.len(), question),
    ];
    slots.sort_by_key(|&(at, _, _)| at);

    let mut out = String::with_capacity(template.len() + block.len() + question.len());
    let mut cursor = 0;
    for (at, len, fill) in slots {
        out.push_str(&template[cursor..at]);
        out.push_str(fill);
        cursor = at + len;
    }
    out.push_str(&template[cursor..]);
    Ok(out)
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: Option<&'a str>,
    messages: [ChatMessage<'a>; 1],
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatResponseMessage,
}

#[derive(Deserialize)]
struct ChatResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Debug)]
pub enum LlmBackend {
    /// Echoes the retrieved context block.
    Fake,
    Http(HttpLlm),
}

#[derive(Debug)]
pub struct HttpLlm {
    endpoint: HttpEndpoint,
    model: Option<String>,
}

impl LlmBackend {
    pub fn from_config(cfg: &BackendConfig) -> Result<Self, BackendError> {
        cfg.validate()?;
        Ok(match cfg.mode {
            BackendMode::Fake => LlmBackend::Fake,
            BackendMode::Http => LlmBackend::Http(HttpLlm {
                endpoint: HttpEndpoint::new(cfg)?,
                model: cfg.model_name.clone(),
            }),
        })
    }

    pub async fn complete(
        &self,
        prompt: &str,
        context: &[ContextEntry],
    ) -> Result<String, BackendError> {
        let answer = match self {
            LlmBackend::Fake => format!("{ECHO_PREFIX}{}", render_context_block(context)),
            LlmBackend::Http(http) => {
                let request = ChatRequest {
                    model: http.model.as_deref(),
                    messages: [ChatMessage {
                        role: "user",
                        content: prompt,
                    }],
                };
                let resp: ChatResponse = http
                    .endpoint
                    .post_json("/v1/chat/completions", &request)
                    .await?;
                resp.choices
                    .into_iter()
                    .next()
                    .and_then(|c| c.message.content)
                    .unwrap_or_default()
            }
        };
        if answer.trim().is_empty() {
            return Err(BackendError::EmptyAnswer);
        }
        Ok(answer)
    }
}

pub async fn answer(
    question: &str,
    store: &VectorStore,
    cfg: &RagConfig,
    embedder: &Embedder,
    llm: &LlmBackend,
) -> Result<ExplanationResult, RagError> {
    check_template(&cfg.template)?;
    let context = build_context(store, question, cfg.k, embedder).await?;
    let prompt = render_prompt(&cfg.template, &context, question)?;
    let answer = llm.complete(&prompt, &context).await?;
    Ok(ExplanationResult {
        answer,
        context,
        prompt,
    })
}
