//! Hardware-in-the-loop verification: actuate one function at a time,
//! ask a yes/no question, repair on "no" — at most ten times per function.

mod adapter;
mod agent;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use adapter::{ArtifactAdapter, DeviceAdapter, LoopbackAdapter};
pub use agent::{drive, fallback_question, Answer, HilAgent, HilConfig, LlmHilAgent, Responder, ScriptedResponder};

use crate::model::{ensure_unique_ids, FunctionDescriptor, IntegrationArtifact};

/// Repairs allowed per function; the next "no" marks it failed.
pub const NO_CAP: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HilStatus {
    Running,
    AwaitingFeedback,
    CompletedAllVerified,
    CompletedWithFailures,
    Aborted,
}

impl HilStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, HilStatus::CompletedAllVerified | HilStatus::CompletedWithFailures | HilStatus::Aborted)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            HilStatus::Running => "running",
            HilStatus::AwaitingFeedback => "awaiting_feedback",
            HilStatus::CompletedAllVerified => "completed_all_verified",
            HilStatus::CompletedWithFailures => "completed_with_failures",
            HilStatus::Aborted => "aborted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Probe {
    /// 1-based probe number within the session.
    pub seq: u32,
    pub function_id: String,
    pub function_name: String,
    /// What the adapter reported after actuating.
    pub actuation: String,
    pub question: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum HilEvent {
    Probe(Probe),
    Feedback { function_id: String, answer: Answer },
    TransportFailure { function_id: String, diagnostics: String },
    Repair { function_id: String, no_count: u32, revision: u64, accepted: bool },
    FunctionVerified { function_id: String },
    FunctionFailed { function_id: String },
    Aborted { diagnostics: String },
}

/// What `next_probe` did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProbeStep {
    /// A question is outstanding.
    Asked(Probe),
    /// Actuation failed; handled as a "no" without asking.
    ImplicitNo { function_id: String, diagnostics: String },
}

#[derive(Debug, thiserror::Error)]
pub enum HilError {
    #[error("precondition: {0}")]
    Precondition(String),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
    #[error("no answer for outstanding probe on {0}")]
    NoAnswer(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HilSession {
    pub session_id: String,
    pub functions: Vec<FunctionDescriptor>,
    pub function_queue: Vec<String>,
    pub current: usize,
    pub per_function_no_count: BTreeMap<String, u32>,
    pub failed: BTreeSet<String>,
    pub status: HilStatus,
    pub artifact: IntegrationArtifact,
    pub transcript: Vec<HilEvent>,
    pub outstanding: Option<Probe>,
    pub probes_issued: u32,
    #[serde(skip)]
    checkpoint: Option<PathBuf>,
}

impl HilSession {
    /// Opens a session at the first function. An unreachable adapter yields
    /// an aborted session, not an error.
    pub fn start(
        session_id: impl Into<String>,
        artifact: IntegrationArtifact,
        functions: Vec<FunctionDescriptor>,
        adapter: &mut dyn DeviceAdapter,
    ) -> Result<Self, HilError> {
        if functions.is_empty() {
            return Err(HilError::Precondition("function list is empty".into()));
        }
        ensure_unique_ids(&functions).map_err(|e| HilError::Precondition(e.to_string()))?;
        let mut s = Self {
            session_id: session_id.into(),
            function_queue: functions.iter().map(|f| f.function_id.clone()).collect(),
            per_function_no_count: functions.iter().map(|f| (f.function_id.clone(), 0)).collect(),
            functions,
            current: 0,
            failed: BTreeSet::new(),
            status: HilStatus::Running,
            artifact,
            transcript: Vec::new(),
            outstanding: None,
            probes_issued: 0,
            checkpoint: None,
        };
        if let Err(diagnostics) = adapter.connect() {
            tracing::warn!(%diagnostics, "device adapter unreachable; session aborted");
            s.status = HilStatus::Aborted;
            s.transcript.push(HilEvent::Aborted { diagnostics });
        }
        Ok(s)
    }

    /// Persists the session to `path` now and after every transition.
    pub fn with_checkpoint(mut self, path: impl Into<PathBuf>) -> Result<Self, HilError> {
        self.checkpoint = Some(path.into());
        self.persist()?;
        Ok(self)
    }

    /// Reloads a checkpointed session; later transitions keep writing there.
    pub fn restore(path: &Path) -> Result<Self, HilError> {
        let err = |message: String| HilError::Checkpoint { path: path.display().to_string(), message };
        let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let mut s: Self = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        s.checkpoint = Some(path.to_path_buf());
        Ok(s)
    }

    fn persist(&self) -> Result<(), HilError> {
        let Some(path) = &self.checkpoint else { return Ok(()) };
        let err = |message: String| HilError::Checkpoint { path: path.display().to_string(), message };
        let json = serde_json::to_string_pretty(self).map_err(|e| err(e.to_string()))?;
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, json).map_err(|e| err(e.to_string()))?;
        fs::rename(&tmp, path).map_err(|e| err(e.to_string()))
    }

    pub fn current_function(&self) -> Option<&FunctionDescriptor> {
        self.functions.get(self.current)
    }

    pub fn total_no_count(&self) -> u32 {
        self.per_function_no_count.values().sum()
    }

    /// Actuates the current function and asks about it.
    pub fn next_probe(&mut self, adapter: &mut dyn DeviceAdapter, agent: &mut dyn HilAgent) -> Result<ProbeStep, HilError> {
        if self.status != HilStatus::Running {
            return Err(HilError::Protocol(format!("cannot probe while {}", self.status.as_str())));
        }
        let f = self.functions[self.current].clone();
        self.probes_issued += 1;
        let step = match adapter.actuate(&self.artifact, &f) {
            Ok(actuation) => {
                let question = agent
                    .draft_question(&f)
                    .map(|q| q.trim().to_string())
                    .filter(|q| !q.is_empty())
                    .unwrap_or_else(|| fallback_question(&f));
                let probe = Probe {
                    seq: self.probes_issued,
                    function_id: f.function_id.clone(),
                    function_name: f.display_name(),
                    actuation,
                    question,
                };
                self.transcript.push(HilEvent::Probe(probe.clone()));
                self.outstanding = Some(probe.clone());
                self.status = HilStatus::AwaitingFeedback;
                ProbeStep::Asked(probe)
            }
            Err(diagnostics) => {
                tracing::info!(function = %f.function_id, "actuation failed; treating as no");
                self.transcript.push(HilEvent::TransportFailure { function_id: f.function_id.clone(), diagnostics: diagnostics.clone() });
                self.on_no(&f, &format!("the device was never actuated:\n{diagnostics}"), agent);
                ProbeStep::ImplicitNo { function_id: f.function_id, diagnostics }
            }
        };
        self.persist()?;
        Ok(step)
    }

    /// Applies the human's answer to the outstanding probe. Rejected, with
    /// the session unchanged, when no probe is outstanding.
    pub fn submit_feedback(&mut self, answer: Answer, agent: &mut dyn HilAgent) -> Result<(), HilError> {
        if self.status != HilStatus::AwaitingFeedback {
            return Err(HilError::Protocol(format!("no probe outstanding (session is {})", self.status.as_str())));
        }
        let probe = self.outstanding.take().expect("awaiting feedback implies an outstanding probe");
        let f = self.functions[self.current].clone();
        self.transcript.push(HilEvent::Feedback { function_id: f.function_id.clone(), answer });
        match answer {
            Answer::Yes => {
                self.transcript.push(HilEvent::FunctionVerified { function_id: f.function_id.clone() });
                self.advance();
            }
            Answer::No => {
                let report = format!("after actuation the user answered \"no\" to: {}", probe.question);
                self.on_no(&f, &report, agent);
            }
        }
        self.persist()
    }

    fn on_no(&mut self, f: &FunctionDescriptor, report: &str, agent: &mut dyn HilAgent) {
        let count = self.per_function_no_count.entry(f.function_id.clone()).or_insert(0);
        if *count >= NO_CAP {
            self.failed.insert(f.function_id.clone());
            self.transcript.push(HilEvent::FunctionFailed { function_id: f.function_id.clone() });
            self.advance();
            return;
        }
        *count += 1;
        let no_count = *count;
        let repaired = agent.repair(&self.artifact, f, report, no_count);
        let accepted = repaired.is_some();
        if let Some(next) = repaired {
            self.artifact = next;
        }
        self.transcript.push(HilEvent::Repair {
            function_id: f.function_id.clone(),
            no_count,
            revision: self.artifact.revision,
            accepted,
        });
        // re-probe the same function
        self.status = HilStatus::Running;
    }

    fn advance(&mut self) {
        self.current += 1;
        self.status = if self.current < self.functions.len() {
            HilStatus::Running
        } else if self.failed.is_empty() {
            HilStatus::CompletedAllVerified
        } else {
            HilStatus::CompletedWithFailures
        };
    }
}
