//! Device and platform knowledge stores, exact vector search, and the
//! retrieval tools agents call.

mod chunk;
mod embed;
mod index;
pub mod snapshot;
mod source;
mod store;
mod tools;

pub use chunk::{chunk_text, ChunkingConfig};
pub use embed::{Embedder, HashingEmbedder, RemoteEmbedder, CODE_DIMENSION, PROSE_DIMENSION};
pub use index::{squared_l2, ChunkId, KnowledgeChunk, VectorIndex};
pub use source::{ContentKind, FixtureFetcher, LeakageDenylist, SourceDocument, SourceFetcher, SourceKind, WebResult};
pub use store::{
    ingest_device_sources, ingest_platform_docs, load_toc_dir, toc_leaves, Embedders, Exclusion, IngestReport,
    KnowledgeStore, SearchHit, TocNode, TOP_SOURCES_PER_KIND,
};
pub use tools::{render_hits, render_web, KnowledgeTools, DEFAULT_K};

#[derive(Debug, thiserror::Error)]
pub enum KnowledgeError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("fetch failed: {0}")]
    Fetch(String),
    #[error("ingestion failed for source kinds: {0}")]
    Ingestion(String),
    #[error("platform knowledge for {0} is empty; generation cannot proceed")]
    EmptyPlatformKnowledge(String),
    #[error("{0} store not built")]
    StoreNotBuilt(&'static str),
    #[error("embedding failed: {0}")]
    Embedding(String),
    #[error("snapshot: {0}")]
    Snapshot(String),
}
