use std::time::Duration;

use serde_json::{json, Map, Value};

use super::{ChatMessage, ChatProvider, LlmError, Role, ToolCall, ToolSchema};

pub const ENV_ENDPOINT: &str = "IOTBRIDGE_LLM_ENDPOINT";
pub const ENV_MODEL: &str = "IOTBRIDGE_LLM_MODEL";
pub const ENV_API_KEY: &str = "IOTBRIDGE_LLM_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpenAiConfig {
    /// Base URL, e.g. `https://api.openai.com/v1`.
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
}

impl OpenAiConfig {
    pub fn from_env() -> Result<Self, LlmError> {
        let endpoint = std::env::var(ENV_ENDPOINT).map_err(|_| LlmError::Config(format!("{ENV_ENDPOINT} not set")))?;
        let model = std::env::var(ENV_MODEL).map_err(|_| LlmError::Config(format!("{ENV_MODEL} not set")))?;
        Ok(Self { endpoint, model, api_key: std::env::var(ENV_API_KEY).ok() })
    }
}

/// Adapter for OpenAI-compatible `chat/completions` endpoints.
pub struct OpenAiProvider {
    config: OpenAiConfig,
    client: reqwest::blocking::Client,
}

impl OpenAiProvider {
    pub fn new(config: OpenAiConfig) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(Self { config, client })
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.config.endpoint.trim_end_matches('/'))
    }
}

pub(crate) fn encode_request(model: &str, messages: &[ChatMessage], tools: &[ToolSchema]) -> Value {
    let messages: Vec<Value> = messages
        .iter()
        .map(|m| {
            let role = match m.role {
                Role::System => "system",
                Role::User => "user",
                Role::Assistant => "assistant",
                Role::Tool => "tool",
            };
            let mut obj = Map::new();
            obj.insert("role".into(), json!(role));
            obj.insert("content".into(), json!(m.content));
            if let Some(call) = &m.tool_call {
                obj.insert(
                    "tool_calls".into(),
                    json!([{
                        "id": call.id,
                        "type": "function",
                        "function": {"name": call.name, "arguments": call.arguments_json()},
                    }]),
                );
            }
            if let Some(id) = &m.tool_result_for {
                obj.insert("tool_call_id".into(), json!(id));
            }
            Value::Object(obj)
        })
        .collect();
    let mut body = json!({"model": model, "messages": messages});
    if !tools.is_empty() {
        body["tools"] = tools
            .iter()
            .map(|t| {
                json!({
                    "type": "function",
                    "function": {"name": t.name, "description": t.description, "parameters": t.parameters},
                })
            })
            .collect();
    }
    body
}

pub(crate) fn decode_response(body: &Value) -> Result<ChatMessage, LlmError> {
    let message = body
        .pointer("/choices/0/message")
        .ok_or_else(|| LlmError::Malformed("response has no choices[0].message".into()))?;
    let content = message.get("content").and_then(Value::as_str).unwrap_or("").to_string();
    let calls = message.get("tool_calls").and_then(Value::as_array).cloned().unwrap_or_default();
    match calls.len() {
        0 => {
            if content.is_empty() {
                return Err(LlmError::Malformed("empty reply".into()));
            }
            Ok(ChatMessage::assistant(content))
        }
        1 => {
            let call = &calls[0];
            let name = call
                .pointer("/function/name")
                .and_then(Value::as_str)
                .ok_or_else(|| LlmError::Malformed("tool call without a function name".into()))?;
            let raw_args = call.pointer("/function/arguments").and_then(Value::as_str).unwrap_or("{}");
            let arguments: Map<String, Value> = serde_json::from_str(raw_args)
                .map_err(|e| LlmError::Malformed(format!("tool arguments are not a JSON object: {e}")))?;
            let id = call.get("id").and_then(Value::as_str).unwrap_or("").to_string();
            let mut msg = ChatMessage::assistant_tool(ToolCall { id, name: name.to_string(), arguments });
            msg.content = content;
            Ok(msg)
        }
        n => Err(LlmError::Malformed(format!("{n} tool calls in one turn; exactly one is allowed"))),
    }
}

impl ChatProvider for OpenAiProvider {
    fn complete(&mut self, messages: &[ChatMessage], tools: &[ToolSchema], timeout: Duration) -> Result<ChatMessage, LlmError> {
        let body = encode_request(&self.config.model, messages, tools);
        let mut req = self.client.post(self.url()).timeout(timeout).json(&body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| LlmError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(LlmError::Transport(format!("HTTP {status}: {text}")));
        }
        let value: Value = serde_json::from_str(&text).map_err(|e| LlmError::Malformed(e.to_string()))?;
        decode_response(&value)
    }
}
