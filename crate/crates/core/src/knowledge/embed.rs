use std::time::Duration;

use serde_json::{json, Value};

use super::KnowledgeError;

pub const PROSE_DIMENSION: usize = 1536;
pub const CODE_DIMENSION: usize = 768;

/// Maps text to a fixed-length vector.
pub trait Embedder: Send + Sync {
    /// Identifier recorded in snapshots; loading checks it matches.
    fn id(&self) -> String;
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f32>, KnowledgeError>;
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET ^ seed, |h, b| (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME))
}

/// Offline pseudo-embedding: signed feature hashing of lowercase word tokens,
/// L2-normalized. Identical text always yields an identical vector, and
/// texts sharing words land near each other.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    name: String,
    dimension: usize,
    seed: u64,
}

impl HashingEmbedder {
    pub fn new(name: impl Into<String>, dimension: usize) -> Self {
        let name = name.into();
        let seed = fnv1a(0, name.as_bytes());
        Self { name, dimension: dimension.max(1), seed }
    }

    pub fn prose() -> Self {
        Self::new("hash-prose", PROSE_DIMENSION)
    }

    pub fn code() -> Self {
        Self::new("hash-code", CODE_DIMENSION)
    }
}

fn word_tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

impl Embedder for HashingEmbedder {
    fn id(&self) -> String {
        format!("{}/{}", self.name, self.dimension)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, KnowledgeError> {
        let mut v = vec![0f32; self.dimension];
        for token in word_tokens(text) {
            let h = fnv1a(self.seed, token.as_bytes());
            let idx = (h % self.dimension as u64) as usize;
            v[idx] += if h >> 63 == 1 { -1.0 } else { 1.0 };
        }
        let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(v)
    }
}

/// Remote embedding service speaking the OpenAI-compatible `embeddings` API.
pub struct RemoteEmbedder {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    dimension: usize,
    client: reqwest::blocking::Client,
}

impl RemoteEmbedder {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, api_key: Option<String>, dimension: usize) -> Result<Self, KnowledgeError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| KnowledgeError::Embedding(e.to_string()))?;
        Ok(Self { endpoint: endpoint.into(), model: model.into(), api_key, dimension, client })
    }
}

impl Embedder for RemoteEmbedder {
    fn id(&self) -> String {
        format!("remote:{}/{}", self.model, self.dimension)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, KnowledgeError> {
        let url = format!("{}/embeddings", self.endpoint.trim_end_matches('/'));
        let mut req = self.client.post(url).json(&json!({"model": self.model, "input": text}));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let body: Value = req
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json())
            .map_err(|e| KnowledgeError::Embedding(e.to_string()))?;
        let v: Vec<f32> = body
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| KnowledgeError::Embedding("response has no data[0].embedding".into()))?
            .iter()
            .map(|x| x.as_f64().unwrap_or(0.0) as f32)
            .collect();
        if v.len() != self.dimension {
            return Err(KnowledgeError::DimensionMismatch { expected: self.dimension, got: v.len() });
        }
        Ok(v)
    }
}
