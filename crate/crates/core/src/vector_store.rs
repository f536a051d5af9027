//! The vector knowledge base.
//!
//! Documents are content-addressed: the id of a log record is the FNV-1a hash
//! of `"{t:.6}|{node}|{msg}"`, so replaying a session twice leaves the store
//! unchanged. Search is an exact linear scan over cosine similarity.
//!
//! The store is plain data and has no interior locking. Share it behind a
//! reader-writer lock: [`VectorStore::top_k`] takes `&self`, while
//! [`VectorStore::add_document`] and loading need exclusive access.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedder::{cosine_similarity, Embedding};
use crate::hash::fnv1a64;
use crate::session::LogRecord;

pub const STORE_FORMAT_VERSION: u32 = 1;

/// Allowed deviation from unit norm for stored vectors.
const NORM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddedDocument {
    pub doc_id: u64,
    pub record: LogRecord,
    pub vector: Embedding,
}

pub fn doc_id_for(record: &LogRecord) -> u64 {
    let key = format!("{:.6}|{}|{}", record.t, record.node, record.msg);
    fnv1a64(key.as_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AddOutcome {
    Inserted,
    Duplicate,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StoreError {
    #[error("vector dimension mismatch: store has {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("knowledge base is empty")]
    EmptyStore,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("corrupt store file: {0}")]
    CorruptStoreFile(String),
    #[error("unsupported store file version {found} (expected {STORE_FORMAT_VERSION})")]
    VersionMismatch { found: u64 },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VectorStore {
    dimension: Option<usize>,
    documents: Vec<EmbeddedDocument>,
    ids: HashSet<u64>,
}

/// Ranking key: greater means more relevant.
#[derive(Debug, Clone, Copy)]
struct Ranked {
    similarity: f64,
    doc_id: u64,
    index: usize,
}

impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.similarity
            .partial_cmp(&other.similarity)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.doc_id.cmp(&self.doc_id))
    }
}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked {}

impl VectorStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Dimension fixed by the first insert, if any.
    pub fn dimension(&self) -> Option<usize> {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn documents(&self) -> &[EmbeddedDocument] {
        &self.documents
    }

    pub fn contains(&self, doc_id: u64) -> bool {
        self.ids.contains(&doc_id)
    }

    pub fn add_document(
        &mut self,
        record: LogRecord,
        vector: Embedding,
    ) -> Result<AddOutcome, StoreError> {
        if let Some(expected) = self.dimension {
            if vector.dim() != expected {
                return Err(StoreError::DimensionMismatch {
                    expected,
                    got: vector.dim(),
                });
            }
        }
        let doc_id = doc_id_for(&record);
        if !self.ids.insert(doc_id) {
            return Ok(AddOutcome::Duplicate);
        }
        self.dimension = Some(vector.dim());
        self.documents.push(EmbeddedDocument {
            doc_id,
            record,
            vector,
        });
        Ok(AddOutcome::Inserted)
    }

    /// The `min(k, len)` most similar documents, best first. Equal similarities
    /// are ordered by ascending `doc_id`.
    pub fn top_k(
        &self,
        query: &Embedding,
        k: usize,
    ) -> Result<Vec<(&EmbeddedDocument, f64)>, StoreError> {
        let Some(expected) = self.dimension else {
            return Err(StoreError::EmptyStore);
        };
        if k == 0 {
            return Err(StoreError::InvalidK);
        }
        if query.dim() != expected {
            return Err(StoreError::DimensionMismatch {
                expected,
                got: query.dim(),
            });
        }

        // Min-heap of the k best seen so far; the root is the weakest keeper.
        let mut heap: BinaryHeap<Reverse<Ranked>> = BinaryHeap::with_capacity(k + 1);
        for (index, doc) in self.documents.iter().enumerate() {
            let similarity = cosine_similarity(query, &doc.vector)
                .expect("dimensions checked on insert and query");
            let candidate = Ranked {
                similarity,
                doc_id: doc.doc_id,
                index,
            };
            if heap.len() < k {
                heap.push(Reverse(candidate));
            } else if let Some(Reverse(weakest)) = heap.peek() {
                if candidate > *weakest {
                    heap.pop();
                    heap.push(Reverse(candidate));
                }
            }
        }

        // into_sorted_vec on Reverse yields best-first.
        Ok(heap
            .into_sorted_vec()
            .into_iter()
            .map(|Reverse(r)| (&self.documents[r.index], r.similarity))
            .collect())
    }

    /// Serializes the store as a single JSON document.
    pub fn save(&self) -> Vec<u8> {
        let file = StoreFileRef {
            version: STORE_FORMAT_VERSION,
            dimension: self.dimension,
            documents: &self.documents,
        };
        serde_json::to_vec(&file).expect("store serialization is infallible")
    }

    pub fn load(bytes: &[u8]) -> Result<Self, StoreError> {
        let corrupt = |reason: String| StoreError::CorruptStoreFile(reason);

        let header: StoreHeader =
            serde_json::from_slice(bytes).map_err(|e| corrupt(e.to_string()))?;
        if header.version != u64::from(STORE_FORMAT_VERSION) {
            return Err(StoreError::VersionMismatch {
                found: header.version,
            });
        }
        let file: StoreFile = serde_json::from_slice(bytes).map_err(|e| corrupt(e.to_string()))?;

        match (file.dimension, file.documents.is_empty()) {
            (Some(0), _) => return Err(corrupt("dimension must be positive".into())),
            (None, false) => return Err(corrupt("documents present but dimension is null".into())),
            _ => {}
        }

        let mut store = VectorStore {
            dimension: file.dimension,
            documents: Vec::with_capacity(file.documents.len()),
            ids: HashSet::with_capacity(file.documents.len()),
        };
        for (i, doc) in file.documents.into_iter().enumerate() {
            doc.record
                .validate()
                .map_err(|e| corrupt(format!("document {i}: {e}")))?;
            if doc.doc_id != doc_id_for(&doc.record) {
                return Err(corrupt(format!("document {i}: doc_id does not match record")));
            }
            if Some(doc.vector.dim()) != store.dimension {
                return Err(corrupt(format!("document {i}: wrong vector dimension")));
            }
            let values = doc.vector.values();
            if values.iter().any(|v| !v.is_finite()) {
                return Err(corrupt(format!("document {i}: non-finite vector value")));
            }
            if !doc.vector.is_zero() && (doc.vector.norm() - 1.0).abs() > NORM_TOLERANCE {
                return Err(corrupt(format!("document {i}: vector is not unit length")));
            }
            if !store.ids.insert(doc.doc_id) {
                return Err(corrupt(format!("document {i}: duplicate doc_id")));
            }
            store.documents.push(doc);
        }
        Ok(store)
    }
}

#[derive(Deserialize)]
struct StoreHeader {
    version: u64,
}

#[derive(Serialize)]
struct StoreFileRef<'a> {
    version: u32,
    dimension: Option<usize>,
    documents: &'a [EmbeddedDocument],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StoreFile {
    #[allow(dead_code)]
    version: u64,
    dimension: Option<usize>,
    documents: Vec<EmbeddedDocument>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedder::fake_embed;
    use crate::session::LogLevel;

    fn rec(t: f64, msg: &str) -> LogRecord {
        LogRecord::new(t, LogLevel::Info, "nav", msg)
    }

    fn add(store: &mut VectorStore, t: f64, msg: &str) -> AddOutcome {
        store.add_document(rec(t, msg), fake_embed(msg)).unwrap()
    }

    #[test]
    fn doc_id_golden() {
        // Frozen from an independent script.
        assert_eq!(
            doc_id_for(&rec(0.0, "goal accepted")),
            17_510_436_102_175_788_546
        );
        let injected = LogRecord::new(2.0, LogLevel::Info, "explainability_monitor", "image-to-text: x");
        assert_eq!(doc_id_for(&injected), 17_002_731_943_449_578_284);
        // Level does not participate.
        let mut warn = injected.clone();
        warn.level = LogLevel::Warn;
        assert_eq!(doc_id_for(&warn), doc_id_for(&injected));
    }

    #[test]
    fn first_insert_and_duplicate() {
        let mut store = VectorStore::new();
        assert_eq!(add(&mut store, 0.0, "goal accepted"), AddOutcome::Inserted);
        assert_eq!(store.len(), 1);
        assert_eq!(store.dimension(), Some(64));
        assert_eq!(add(&mut store, 0.0, "goal accepted"), AddOutcome::Duplicate);
        assert_eq!(store.len(), 1);
    }

    #[test]
    fn dimension_mismatch() {
        let mut store = VectorStore::new();
        add(&mut store, 0.0, "goal accepted");
        let err = store
            .add_document(rec(1.0, "x"), Embedding::zeros(32))
            .unwrap_err();
        assert_eq!(err, StoreError::DimensionMismatch { expected: 64, got: 32 });
        assert!(matches!(
            store.top_k(&Embedding::zeros(32), 1),
            Err(StoreError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn top_k_basics() {
        let mut store = VectorStore::new();
        assert_eq!(store.top_k(&fake_embed("x"), 1).unwrap_err(), StoreError::EmptyStore);
        add(&mut store, 0.0, "navigation started");
        add(&mut store, 1.0, "camera frame captured");
        add(&mut store, 2.0, "goal reached");

        let q = store.documents()[1].vector.clone();
        let hits = store.top_k(&q, 3).unwrap();
        assert_eq!(hits[0].0.record.msg, "camera frame captured");
        assert_eq!(hits[0].1, 1.0);

        assert_eq!(store.top_k(&q, 10).unwrap().len(), 3);
        assert_eq!(store.top_k(&q, 1).unwrap().len(), 1);
        assert_eq!(store.top_k(&q, 0).unwrap_err(), StoreError::InvalidK);
    }

    #[test]
    fn ties_break_by_doc_id() {
        let mut store = VectorStore::new();
        // Same text at different times: identical vectors, distinct ids.
        for t in 0..6 {
            add(&mut store, f64::from(t), "path blocked");
        }
        let hits = store.top_k(&fake_embed("path blocked"), 4).unwrap();
        let ids: Vec<u64> = hits.iter().map(|(d, _)| d.doc_id).collect();
        let mut all: Vec<u64> = store.documents().iter().map(|d| d.doc_id).collect();
        all.sort_unstable();
        assert_eq!(ids, all[..4]);
    }

    #[test]
    fn save_load_round_trip() {
        let empty = VectorStore::new();
        let bytes = empty.save();
        assert_eq!(
            String::from_utf8(bytes.clone()).unwrap(),
            r#"{"version":1,"dimension":null,"documents":[]}"#
        );
        assert_eq!(VectorStore::load(&bytes).unwrap(), empty);

        let mut store = VectorStore::new();
        add(&mut store, 0.125, "image-to-text: a person's hand");
        let loaded = VectorStore::load(&store.save()).unwrap();
        assert_eq!(loaded, store);
        assert_eq!(loaded.save(), store.save());
    }

    #[test]
    fn load_rejects_bad_files() {
        assert!(matches!(
            VectorStore::load(b"not json"),
            Err(StoreError::CorruptStoreFile(_))
        ));
        assert_eq!(
            VectorStore::load(br#"{"version":2,"dimension":null,"documents":[]}"#).unwrap_err(),
            StoreError::VersionMismatch { found: 2 }
        );

        let mut store = VectorStore::new();
        add(&mut store, 0.0, "goal accepted");
        let good = String::from_utf8(store.save()).unwrap();

        let tampered_id = good.replace("17510436102175788546", "1");
        assert!(matches!(
            VectorStore::load(tampered_id.as_bytes()),
            Err(StoreError::CorruptStoreFile(_))
        ));
        let wrong_dim = good.replace("\"dimension\":64", "\"dimension\":32");
        assert!(matches!(
            VectorStore::load(wrong_dim.as_bytes()),
            Err(StoreError::CorruptStoreFile(_))
        ));
        let extra_key = good.replace("{\"version\":1,", "{\"version\":1,\"extra\":0,");
        assert!(matches!(
            VectorStore::load(extra_key.as_bytes()),
            Err(StoreError::CorruptStoreFile(_))
        ));
    }
}
