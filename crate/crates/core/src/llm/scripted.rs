use std::fs;
use std::path::Path;
use std::time::Duration;

use regex::Regex;
use serde::Deserialize;
use serde_json::Value;

use super::{ChatMessage, ChatProvider, LlmError, Role, ToolCall, ToolSchema};

#[derive(Debug, Clone, PartialEq)]
pub enum ScriptedResponse {
    Text(String),
    ToolCall(ToolCall),
}

#[derive(Debug, Clone)]
pub struct ScriptEntry {
    matcher: Regex,
    response: ScriptedResponse,
}

impl ScriptEntry {
    pub fn new(pattern: &str, response: ScriptedResponse) -> Result<Self, LlmError> {
        let matcher = Regex::new(pattern).map_err(|e| LlmError::Config(format!("bad matcher {pattern:?}: {e}")))?;
        Ok(Self { matcher, response })
    }

    pub fn pattern(&self) -> &str {
        self.matcher.as_str()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    #[serde(rename = "match")]
    pattern: String,
    response: RawResponse,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawResponse {
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    tool_call: Option<ToolCall>,
}

/// Offline provider that replays a fixture of (matcher, canned response).
///
/// Each call takes the first not-yet-consumed entry whose matcher finds a
/// match in the latest user or tool message, and consumes it.
#[derive(Debug, Clone)]
pub struct ScriptedProvider {
    entries: Vec<ScriptEntry>,
    consumed: Vec<bool>,
}

impl ScriptedProvider {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        let consumed = vec![false; entries.len()];
        Self { entries, consumed }
    }

    /// Parses the JSON fixture format. Any object of the form
    /// `{"$include": "path"}` is replaced by that file's contents, resolved
    /// relative to `base_dir`.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, LlmError> {
        let mut value: Value = serde_json::from_str(text).map_err(|e| LlmError::Config(e.to_string()))?;
        resolve_includes(&mut value, base_dir)?;
        let raw: Vec<RawEntry> = serde_json::from_value(value).map_err(|e| LlmError::Config(e.to_string()))?;
        let entries = raw
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                let response = match (r.response.text, r.response.tool_call) {
                    (Some(t), None) => ScriptedResponse::Text(t),
                    (None, Some(c)) => ScriptedResponse::ToolCall(c),
                    _ => {
                        return Err(LlmError::Config(format!(
                            "entry {i}: response must have exactly one of text or tool_call"
                        )))
                    }
                };
                ScriptEntry::new(&r.pattern, response)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::new(entries))
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = fs::read_to_string(path).map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn remaining(&self) -> usize {
        self.consumed.iter().filter(|c| !**c).count()
    }
}

fn resolve_includes(value: &mut Value, base: &Path) -> Result<(), LlmError> {
    match value {
        Value::Object(map) => {
            if map.len() == 1 {
                if let Some(Value::String(rel)) = map.get("$include") {
                    let path = base.join(rel);
                    let text = fs::read_to_string(&path)
                        .map_err(|e| LlmError::Config(format!("include {}: {e}", path.display())))?;
                    *value = Value::String(text);
                    return Ok(());
                }
            }
            for v in map.values_mut() {
                resolve_includes(v, base)?;
            }
        }
        Value::Array(items) => {
            for v in items {
                resolve_includes(v, base)?;
            }
        }
        _ => {}
    }
    Ok(())
}

fn latest_input(messages: &[ChatMessage]) -> &str {
    messages
        .iter()
        .rev()
        .find(|m| matches!(m.role, Role::User | Role::Tool))
        .map(|m| m.content.as_str())
        .unwrap_or("")
}

impl ChatProvider for ScriptedProvider {
    fn complete(&mut self, messages: &[ChatMessage], _tools: &[ToolSchema], _timeout: Duration) -> Result<ChatMessage, LlmError> {
        let input = latest_input(messages);
        let hit = self
            .entries
            .iter()
            .enumerate()
            .find(|(i, e)| !self.consumed[*i] && e.matcher.is_match(input))
            .map(|(i, _)| i);
        let Some(i) = hit else {
            let shown: String = input.chars().take(200).collect();
            return Err(LlmError::FixtureExhausted(shown));
        };
        self.consumed[i] = true;
        Ok(match &self.entries[i].response {
            ScriptedResponse::Text(t) => ChatMessage::assistant(t.clone()),
            ScriptedResponse::ToolCall(c) => ChatMessage::assistant_tool(c.clone()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(p: &mut ScriptedProvider, user: &str) -> Result<ChatMessage, LlmError> {
        p.complete(&[ChatMessage::system("s"), ChatMessage::user(user)], &[], Duration::from_secs(1))
    }

    #[test]
    fn single_entry_replays_once() {
        let mut p = ScriptedProvider::from_json(r#"[{"match": ".*", "response": {"text": "hello"}}]"#, Path::new(".")).unwrap();
        assert_eq!(call(&mut p, "anything").unwrap().content, "hello");
        assert!(matches!(call(&mut p, "again"), Err(LlmError::FixtureExhausted(m)) if m == "again"));
    }

    #[test]
    fn matcher_selects_entry() {
        let fixture = r#"[
            {"match": "status", "response": {"text": "idle"}},
            {"match": "turn on", "response": {"tool_call": {"name": "search_device_db", "arguments": {"query": "power on command"}}}}
        ]"#;
        let mut p = ScriptedProvider::from_json(fixture, Path::new(".")).unwrap();
        let reply = call(&mut p, "please turn on the fan").unwrap();
        let tc = reply.tool_call.unwrap();
        assert_eq!(tc.name, "search_device_db");
        assert_eq!(tc.str_arg("query"), Some("power on command"));
        assert_eq!(p.remaining(), 1);
    }

    #[test]
    fn tool_messages_are_matched_too() {
        let mut p = ScriptedProvider::from_json(
            r#"[{"match": "^Observation", "response": {"text": "ok"}}]"#,
            Path::new("."),
        )
        .unwrap();
        let msgs = [
            ChatMessage::system("s"),
            ChatMessage::user("go"),
            ChatMessage::tool_result("c1", "Observation: 3 chunks"),
        ];
        assert_eq!(p.complete(&msgs, &[], Duration::from_secs(1)).unwrap().content, "ok");
    }

    #[test]
    fn includes_are_resolved() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("body.py"), "print('hi')\n").unwrap();
        let fixture = r#"[{"match": ".*", "response": {"tool_call": {"name": "write_file", "arguments": {"path": "a.py", "content": {"$include": "body.py"}}}}}]"#;
        let mut p = ScriptedProvider::from_json(fixture, dir.path()).unwrap();
        let tc = call(&mut p, "x").unwrap().tool_call.unwrap();
        assert_eq!(tc.str_arg("content"), Some("print('hi')\n"));
    }

    #[test]
    fn response_needs_exactly_one_form() {
        let bad = r#"[{"match": ".*", "response": {}}]"#;
        assert!(ScriptedProvider::from_json(bad, Path::new(".")).is_err());
    }

    #[test]
    fn replay_is_deterministic() {
        let fixture = r#"[
            {"match": "a", "response": {"text": "1"}},
            {"match": ".*", "response": {"text": "2"}},
            {"match": "a", "response": {"text": "3"}}
        ]"#;
        let run = || {
            let mut p = ScriptedProvider::from_json(fixture, Path::new(".")).unwrap();
            ["b", "a", "a"].iter().map(|u| call(&mut p, u).unwrap().content).collect::<Vec<_>>()
        };
        assert_eq!(run(), vec!["2", "1", "3"]);
        assert_eq!(run(), run());
    }
}
