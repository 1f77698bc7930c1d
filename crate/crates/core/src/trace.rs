//! Step-level trace records shared by every agent, exported as JSON lines
//! and forwarded live to progress listeners.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::llm::{ChatMessage, Role};

const SUMMARY_CHARS: usize = 160;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub seq: u64,
    pub stage: String,
    pub step: u32,
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool: Option<String>,
    pub tokens: u64,
    pub summary: String,
}

type Listener = Box<dyn FnMut(&TraceRecord) + Send>;

#[derive(Default)]
pub struct Tracer {
    records: Vec<TraceRecord>,
    messages: Vec<ChatMessage>,
    listener: Option<Listener>,
}

impl std::fmt::Debug for Tracer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tracer").field("records", &self.records.len()).finish()
    }
}

fn summarize(msg: &ChatMessage) -> String {
    let text = match &msg.tool_call {
        Some(call) => format!("{}({})", call.name, call.arguments_json()),
        None => msg.content.clone(),
    };
    let first = text.lines().next().unwrap_or("");
    let mut s: String = first.chars().take(SUMMARY_CHARS).collect();
    if s.len() < text.len() {
        s.push('…');
    }
    s
}

impl Tracer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_listener(listener: impl FnMut(&TraceRecord) + Send + 'static) -> Self {
        Self { records: Vec::new(), messages: Vec::new(), listener: Some(Box::new(listener)) }
    }

    pub fn record(&mut self, stage: &str, step: u32, msg: &ChatMessage) {
        let tool = msg.tool_call.as_ref().map(|c| c.name.clone()).or_else(|| {
            // tool observations are prefixed with the tool name
            msg.content
                .strip_prefix("Observation[")
                .and_then(|rest| rest.split_once(']'))
                .map(|(name, _)| name.to_string())
        });
        let rec = TraceRecord {
            seq: self.records.len() as u64,
            stage: stage.to_string(),
            step,
            role: msg.role,
            tool,
            tokens: msg.token_count(),
            summary: summarize(msg),
        };
        if let Some(l) = self.listener.as_mut() {
            l(&rec);
        }
        self.records.push(rec);
        self.messages.push(msg.clone());
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    /// Full messages, parallel to `records()`.
    pub fn messages(&self) -> &[ChatMessage] {
        &self.messages
    }

    /// Full content of every tool observation recorded so far.
    pub fn tool_observations(&self) -> impl Iterator<Item = &str> {
        self.messages.iter().filter(|m| m.role == Role::Tool).map(|m| m.content.as_str())
    }

    pub fn write_jsonl(&self, path: &Path) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }
}
