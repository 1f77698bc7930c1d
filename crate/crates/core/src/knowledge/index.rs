use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::KnowledgeError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChunkId(pub u32);

impl fmt::Display for ChunkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{:05}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeChunk {
    pub chunk_id: ChunkId,
    pub parent_locator: String,
    pub text: String,
    #[serde(skip)]
    pub embedding: Vec<f32>,
    pub token_count: u64,
}

/// Exact flat index under squared L2 distance.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    dimension: usize,
    chunks: Vec<KnowledgeChunk>,
}

/// Squared L2 distance, accumulated coordinate by coordinate in index order.
pub fn squared_l2(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = 0f32;
    for i in 0..a.len() {
        let d = a[i] - b[i];
        acc += d * d;
    }
    acc
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    distance: f32,
    id: ChunkId,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then_with(|| self.id.cmp(&other.id))
    }
}

impl VectorIndex {
    pub fn new(dimension: usize) -> Result<Self, KnowledgeError> {
        if dimension == 0 {
            return Err(KnowledgeError::InvalidInput("index dimension must be positive".into()));
        }
        Ok(Self { dimension, chunks: Vec::new() })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn chunks(&self) -> &[KnowledgeChunk] {
        &self.chunks
    }

    pub fn get(&self, id: ChunkId) -> Option<&KnowledgeChunk> {
        // ids are assigned densely in insertion order
        self.chunks.get(id.0 as usize).filter(|c| c.chunk_id == id)
    }

    /// Appends a chunk, assigning the next id.
    pub fn push(&mut self, parent_locator: String, text: String, embedding: Vec<f32>, token_count: u64) -> Result<ChunkId, KnowledgeError> {
        if embedding.len() != self.dimension {
            return Err(KnowledgeError::DimensionMismatch { expected: self.dimension, got: embedding.len() });
        }
        if token_count == 0 {
            return Err(KnowledgeError::InvalidInput("chunk must contain at least one token".into()));
        }
        let chunk_id = ChunkId(self.chunks.len() as u32);
        self.chunks.push(KnowledgeChunk { chunk_id, parent_locator, text, embedding, token_count });
        Ok(chunk_id)
    }

    /// The `k` nearest chunks by squared L2 distance, ascending, ties broken
    /// by ascending chunk id. Returns fewer than `k` when the index is smaller.
    pub fn knn(&self, query: &[f32], k: usize) -> Result<Vec<(ChunkId, f32)>, KnowledgeError> {
        if query.len() != self.dimension {
            return Err(KnowledgeError::DimensionMismatch { expected: self.dimension, got: query.len() });
        }
        if k == 0 {
            return Err(KnowledgeError::InvalidInput("k must be positive".into()));
        }
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        for chunk in &self.chunks {
            let cand = Candidate { distance: squared_l2(query, &chunk.embedding), id: chunk.chunk_id };
            if heap.len() < k {
                heap.push(cand);
            } else if let Some(worst) = heap.peek() {
                if cand < *worst {
                    heap.pop();
                    heap.push(cand);
                }
            }
        }
        Ok(heap.into_sorted_vec().into_iter().map(|c| (c.id, c.distance)).collect())
    }

    pub(crate) fn from_parts(dimension: usize, chunks: Vec<KnowledgeChunk>) -> Result<Self, KnowledgeError> {
        for (i, c) in chunks.iter().enumerate() {
            if c.chunk_id.0 as usize != i {
                return Err(KnowledgeError::Snapshot(format!("chunk ids not dense at position {i}")));
            }
            if c.embedding.len() != dimension {
                return Err(KnowledgeError::DimensionMismatch { expected: dimension, got: c.embedding.len() });
            }
        }
        Ok(Self { dimension, chunks })
    }
}
