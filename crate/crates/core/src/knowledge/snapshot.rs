//! On-disk knowledge snapshots.
//!
//! A store directory holds one sub-directory per content kind (`prose`,
//! `code`), each with three files:
//! - `manifest`: JSON metadata (dimension, embedder id, build time, count)
//! - `chunks`: one JSON record per line (id, parent_locator, text, token_count)
//! - `vectors`: little-endian `f32`, row-major, `count * dimension` values

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::index::{ChunkId, KnowledgeChunk, VectorIndex};
use super::source::ContentKind;
use super::store::{Embedders, KnowledgeStore};
use super::KnowledgeError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotManifest {
    pub store: String,
    pub content_kind: ContentKind,
    pub dimension: usize,
    pub embedder_id: String,
    pub build_time_ms: u64,
    pub chunk_count: usize,
}

#[derive(Serialize, Deserialize)]
struct ChunkRecord {
    id: ChunkId,
    parent_locator: String,
    text: String,
    token_count: u64,
}

fn kind_dir(kind: ContentKind) -> &'static str {
    match kind {
        ContentKind::Prose => "prose",
        ContentKind::Code => "code",
    }
}

fn snap_err(e: impl std::fmt::Display) -> KnowledgeError {
    KnowledgeError::Snapshot(e.to_string())
}

pub fn save_store(store: &KnowledgeStore, dir: &Path, build_time_ms: u64) -> Result<(), KnowledgeError> {
    for kind in [ContentKind::Prose, ContentKind::Code] {
        let index = store.index(kind);
        let sub = dir.join(kind_dir(kind));
        fs::create_dir_all(&sub).map_err(snap_err)?;
        let manifest = SnapshotManifest {
            store: store.name().to_string(),
            content_kind: kind,
            dimension: index.dimension(),
            embedder_id: store.embedders().for_kind(kind).id(),
            build_time_ms,
            chunk_count: index.len(),
        };
        fs::write(sub.join("manifest"), serde_json::to_vec_pretty(&manifest).map_err(snap_err)?).map_err(snap_err)?;

        let mut chunks = BufWriter::new(fs::File::create(sub.join("chunks")).map_err(snap_err)?);
        let mut vectors = BufWriter::new(fs::File::create(sub.join("vectors")).map_err(snap_err)?);
        for c in index.chunks() {
            let rec = ChunkRecord {
                id: c.chunk_id,
                parent_locator: c.parent_locator.clone(),
                text: c.text.clone(),
                token_count: c.token_count,
            };
            serde_json::to_writer(&mut chunks, &rec).map_err(snap_err)?;
            chunks.write_all(b"\n").map_err(snap_err)?;
            for x in &c.embedding {
                vectors.write_all(&x.to_le_bytes()).map_err(snap_err)?;
            }
        }
        chunks.flush().map_err(snap_err)?;
        vectors.flush().map_err(snap_err)?;
    }
    Ok(())
}

pub fn read_manifest(dir: &Path, kind: ContentKind) -> Result<SnapshotManifest, KnowledgeError> {
    let text = fs::read(dir.join(kind_dir(kind)).join("manifest")).map_err(snap_err)?;
    serde_json::from_slice(&text).map_err(snap_err)
}

/// Loads a store; the embedders must match the ones recorded at build time.
pub fn load_store(dir: &Path, embedders: Embedders) -> Result<KnowledgeStore, KnowledgeError> {
    let mut name = String::new();
    let mut indexes = Vec::new();
    for kind in [ContentKind::Prose, ContentKind::Code] {
        let sub = dir.join(kind_dir(kind));
        let manifest = read_manifest(dir, kind)?;
        let expected = embedders.for_kind(kind).id();
        if manifest.embedder_id != expected {
            return Err(KnowledgeError::Snapshot(format!(
                "{} index built with {}, loading with {expected}",
                kind_dir(kind),
                manifest.embedder_id
            )));
        }
        name = manifest.store.clone();
        let raw = fs::read(sub.join("vectors")).map_err(snap_err)?;
        if raw.len() != manifest.chunk_count * manifest.dimension * 4 {
            return Err(KnowledgeError::Snapshot(format!(
                "vectors file has {} bytes, expected {}",
                raw.len(),
                manifest.chunk_count * manifest.dimension * 4
            )));
        }
        let floats: Vec<f32> = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let reader = BufReader::new(fs::File::open(sub.join("chunks")).map_err(snap_err)?);
        let mut chunks = Vec::with_capacity(manifest.chunk_count);
        for (row, line) in reader.lines().enumerate() {
            let line = line.map_err(snap_err)?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ChunkRecord = serde_json::from_str(&line).map_err(snap_err)?;
            let start = row * manifest.dimension;
            let embedding = floats
                .get(start..start + manifest.dimension)
                .ok_or_else(|| KnowledgeError::Snapshot(format!("missing vector row {row}")))?
                .to_vec();
            chunks.push(KnowledgeChunk {
                chunk_id: rec.id,
                parent_locator: rec.parent_locator,
                text: rec.text,
                embedding,
                token_count: rec.token_count,
            });
        }
        if chunks.len() != manifest.chunk_count {
            return Err(KnowledgeError::Snapshot(format!(
                "chunks file has {} records, manifest says {}",
                chunks.len(),
                manifest.chunk_count
            )));
        }
        indexes.push(VectorIndex::from_parts(manifest.dimension, chunks)?);
    }
    let code = indexes.pop().expect("two indexes");
    let prose = indexes.pop().expect("two indexes");
    Ok(KnowledgeStore::from_parts(name, prose, code, embedders))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::knowledge::{ChunkingConfig, HashingEmbedder};

    #[test]
    fn snapshot_round_trip_preserves_search() {
        let mut store = KnowledgeStore::empty("device", Embedders::offline()).unwrap();
        store.add_text("m", "fan speed one to ten\nnight mode\n", ContentKind::Prose, ChunkingConfig::default()).unwrap();
        store.add_text("r", "def night_mode(self):\n    pass\n", ContentKind::Code, ChunkingConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_store(&store, dir.path(), 42).unwrap();
        assert_eq!(read_manifest(dir.path(), ContentKind::Code).unwrap().dimension, 768);
        let bytes = fs::metadata(dir.path().join("prose/vectors")).unwrap().len();
        assert_eq!(bytes, 1536 * 4);
        let loaded = load_store(dir.path(), Embedders::offline()).unwrap();
        assert_eq!(loaded.name(), "device");
        for kind in [ContentKind::Prose, ContentKind::Code] {
            assert_eq!(loaded.index(kind), store.index(kind));
            assert_eq!(
                loaded.search("night mode", 3, kind).unwrap(),
                store.search("night mode", 3, kind).unwrap()
            );
        }
    }

    #[test]
    fn embedder_mismatch_rejected() {
        let store = KnowledgeStore::empty("device", Embedders::offline()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_store(&store, dir.path(), 0).unwrap();
        let other = Embedders { prose: Arc::new(HashingEmbedder::new("other", 1536)), code: Arc::new(HashingEmbedder::code()) };
        assert!(matches!(load_store(dir.path(), other), Err(KnowledgeError::Snapshot(_))));
    }
}
