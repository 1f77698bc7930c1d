//! Domain types shared across the pipeline.

mod artifact;
mod profile;
mod task;

use std::sync::atomic::{AtomicU64, Ordering};

pub use artifact::{
    is_safe_relative_path, validate_artifact_layout, IntegrationArtifact, LayoutReport, RevisionCause,
    RevisionRecord, Violation,
};
pub use profile::{FileRule, LayoutRules, PlatformProfile, SandboxTemplate, ServiceBinding, TestTemplates};
#[cfg(test)]
pub(crate) use profile::tests::sample_profile;
pub use task::{
    classify_tier, ensure_unique_ids, DeviceTier, FunctionDescriptor, FunctionKind, IntegrationTask,
    ValueConstraints,
};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("duplicate function id: {0}")]
    DuplicateFunction(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Source of provenance timestamps.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

/// Monotone counter clock for reproducible runs.
#[derive(Debug)]
pub struct LogicalClock {
    next: AtomicU64,
}

impl LogicalClock {
    pub fn starting_at(start: u64) -> Self {
        Self { next: AtomicU64::new(start) }
    }
}

impl Clock for LogicalClock {
    fn now_ms(&self) -> u64 {
        self.next.fetch_add(1, Ordering::Relaxed)
    }
}
