//! Explaining autonomous-robot behavior from its own logs.
//!
//! A recorded session (log lines, planned paths, camera frames) is replayed
//! through a replanning detector. Each detected path-length jump is paired with
//! the nearest camera frame, captioned, and written back into the log stream.
//! All log lines are embedded into a vector knowledge base, and user questions
//! are answered by retrieving the most similar lines and handing them, together
//! with a prompt template, to a language-model backend.
//!
//! Module map:
//!
//! - [`session`]: record types and the JSON Lines session format.
//! - [`path_monitor`]: path length, deviation detection, frame synchronization.
//! - [`perception`]: caption backends and caption injection into the log stream.
//! - [`embedder`]: text embeddings (deterministic feature hashing or HTTP).
//! - [`vector_store`]: exact top-k cosine search with JSON persistence.
//! - [`rag`]: context retrieval, prompt rendering, and language-model backends.
//! - [`scenario`]: synthetic start-to-goal navigation session with one detour.

pub mod backend;
pub mod embedder;
pub mod hash;
pub mod path_monitor;
pub mod perception;
pub mod rag;
pub mod scenario;
pub mod session;
pub mod vector_store;

pub use backend::{BackendConfig, BackendError, BackendMode};
pub use embedder::{cosine_similarity, Embedder, Embedding};
pub use path_monitor::{
    path_length, sync_frame, DeviationEvent, MonitorConfig, MonitorError, PathMonitor,
};
pub use perception::{inject_event_logs, CaptionBackend, CaptionConfig};
pub use rag::{render_prompt, ContextEntry, ExplanationResult, LlmBackend, RagConfig, RagError};
pub use scenario::{generate, ScenarioConfig, ScenarioError};
pub use session::{
    parse_session, write_session, FrameRecord, LogLevel, LogRecord, PlanSnapshot, Point,
    SessionError, SessionEvent,
};
pub use vector_store::{AddOutcome, EmbeddedDocument, StoreError, VectorStore};
