//! Language-model access: message types, providers, budgets, and the token ledger.

mod ledger;
mod openai;
mod scripted;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub use ledger::{count_tokens, KindTotals, LedgerEntry, LedgerPhase, TokenKind, TokenLedger};
pub use openai::{OpenAiConfig, OpenAiProvider};
pub use scripted::{ScriptEntry, ScriptedProvider, ScriptedResponse};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    #[serde(default)]
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub arguments: Map<String, Value>,
}

impl ToolCall {
    pub fn new(name: impl Into<String>, arguments: Value) -> Self {
        let arguments = match arguments {
            Value::Object(m) => m,
            _ => Map::new(),
        };
        Self { id: String::new(), name: name.into(), arguments }
    }

    pub fn str_arg(&self, key: &str) -> Option<&str> {
        self.arguments.get(key).and_then(Value::as_str)
    }

    pub fn arguments_json(&self) -> String {
        serde_json::to_string(&self.arguments).unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    #[serde(default)]
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call: Option<ToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_result_for: Option<String>,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into(), tool_call: None, tool_result_for: None }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into(), tool_call: None, tool_result_for: None }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into(), tool_call: None, tool_result_for: None }
    }

    pub fn assistant_tool(call: ToolCall) -> Self {
        Self { role: Role::Assistant, content: String::new(), tool_call: Some(call), tool_result_for: None }
    }

    pub fn tool_result(call_id: impl Into<String>, content: impl Into<String>) -> Self {
        Self {
            role: Role::Tool,
            content: content.into(),
            tool_call: None,
            tool_result_for: Some(call_id.into()),
        }
    }

    /// Checks the role-specific field rules.
    pub fn is_well_formed(&self) -> bool {
        (self.tool_call.is_none() || self.role == Role::Assistant)
            && (self.tool_result_for.is_none() || self.role == Role::Tool)
    }

    pub fn token_count(&self) -> u64 {
        let call = self
            .tool_call
            .as_ref()
            .map(|c| count_tokens(&c.name) + count_tokens(&c.arguments_json()))
            .unwrap_or(0);
        count_tokens(&self.content) + call
    }
}

/// Tool description handed to the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSchema {
    pub name: String,
    pub description: String,
    pub parameters: Value,
}

impl ToolSchema {
    pub fn new(name: &str, description: &str, parameters: Value) -> Self {
        Self { name: name.into(), description: description.into(), parameters }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderBudget {
    pub max_calls: u32,
    pub max_total_tokens: u64,
    #[serde(with = "duration_secs")]
    pub per_call_timeout: Duration,
}

impl Default for ProviderBudget {
    fn default() -> Self {
        Self { max_calls: 200, max_total_tokens: 4_000_000, per_call_timeout: Duration::from_secs(120) }
    }
}

mod duration_secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Ok(Duration::from_secs_f64(secs.max(0.0)))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LlmError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("budget exhausted: {0}")]
    Budget(String),
    #[error("provider transport failure: {0}")]
    Transport(String),
    #[error("malformed provider output: {0}")]
    Malformed(String),
    #[error("scripted fixture exhausted; no entry matches message: {0:?}")]
    FixtureExhausted(String),
    #[error("provider config: {0}")]
    Config(String),
}

/// A chat-completion backend. Implementations return one assistant message.
pub trait ChatProvider: Send {
    fn complete(&mut self, messages: &[ChatMessage], tools: &[ToolSchema], timeout: Duration) -> Result<ChatMessage, LlmError>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct StageUsage {
    calls: u32,
    tokens: u64,
}

/// Session-owned handle combining a provider, its budget bookkeeping, and
/// the token ledger.
pub struct Gateway {
    provider: Box<dyn ChatProvider>,
    ledger: TokenLedger,
    phase: LedgerPhase,
    usage: StageUsage,
    max_retries: u32,
    call_counter: u64,
}

impl Gateway {
    pub const DEFAULT_RETRIES: u32 = 2;

    pub fn new(provider: Box<dyn ChatProvider>) -> Self {
        Self {
            provider,
            ledger: TokenLedger::new(),
            phase: LedgerPhase::DeviceControlCodegen,
            usage: StageUsage::default(),
            max_retries: Self::DEFAULT_RETRIES,
            call_counter: 0,
        }
    }

    pub fn with_retries(mut self, retries: u32) -> Self {
        self.max_retries = retries;
        self
    }

    /// Switches ledger attribution and resets the per-stage budget counters.
    pub fn begin_stage(&mut self, phase: LedgerPhase) {
        self.phase = phase;
        self.usage = StageUsage::default();
    }

    /// Switches ledger attribution without touching budget counters.
    pub fn set_phase(&mut self, phase: LedgerPhase) {
        self.phase = phase;
    }

    pub fn phase(&self) -> LedgerPhase {
        self.phase
    }

    pub fn ledger(&self) -> &TokenLedger {
        &self.ledger
    }

    pub fn into_ledger(self) -> TokenLedger {
        self.ledger
    }

    pub fn record_retrieved(&mut self, token_count: u64) {
        self.ledger.append(self.phase, TokenKind::RetrievedKnowledge, token_count);
    }

    pub fn complete(
        &mut self,
        messages: &[ChatMessage],
        tools: &[ToolSchema],
        budget: &ProviderBudget,
    ) -> Result<ChatMessage, LlmError> {
        match messages.first() {
            None => return Err(LlmError::Precondition("message list is empty".into())),
            Some(m) if m.role != Role::System => {
                return Err(LlmError::Precondition("first message must have the system role".into()))
            }
            _ => {}
        }
        if let Some(bad) = messages.iter().position(|m| !m.is_well_formed()) {
            return Err(LlmError::Precondition(format!("message {bad} has fields not allowed for its role")));
        }
        let prompt_tokens: u64 = messages.iter().map(ChatMessage::token_count).sum();
        if self.usage.calls >= budget.max_calls {
            return Err(LlmError::Budget(format!("call limit {} reached", budget.max_calls)));
        }
        if self.usage.tokens + prompt_tokens > budget.max_total_tokens {
            return Err(LlmError::Budget(format!("token limit {} reached", budget.max_total_tokens)));
        }

        let mut attempt = 0;
        let mut reply = loop {
            self.usage.calls += 1;
            match self
                .provider
                .complete(messages, tools, budget.per_call_timeout)
                .and_then(check_reply)
            {
                Ok(reply) => break reply,
                Err(LlmError::Malformed(why)) if attempt < self.max_retries => {
                    tracing::warn!(attempt, %why, "malformed provider output, retrying");
                    attempt += 1;
                    if self.usage.calls >= budget.max_calls {
                        return Err(LlmError::Budget(format!("call limit {} reached", budget.max_calls)));
                    }
                }
                Err(e) => return Err(e),
            }
        };
        self.call_counter += 1;
        if let Some(call) = reply.tool_call.as_mut() {
            if call.id.is_empty() {
                call.id = format!("call-{}", self.call_counter);
            }
        }
        let completion_tokens = reply.token_count();
        self.usage.tokens += prompt_tokens + completion_tokens;
        self.ledger.append(self.phase, TokenKind::Prompt, prompt_tokens);
        self.ledger.append(self.phase, TokenKind::Completion, completion_tokens);
        Ok(reply)
    }
}

fn check_reply(reply: ChatMessage) -> Result<ChatMessage, LlmError> {
    if reply.role != Role::Assistant {
        return Err(LlmError::Malformed(format!("reply role {:?}", reply.role)));
    }
    if reply.tool_result_for.is_some() {
        return Err(LlmError::Malformed("assistant reply carries a tool result id".into()));
    }
    if let Some(call) = &reply.tool_call {
        if call.name.trim().is_empty() {
            return Err(LlmError::Malformed("tool call without a name".into()));
        }
    }
    Ok(reply)
}
