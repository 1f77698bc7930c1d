//! Tool vocabulary shared by the generation, repair, and verification agents.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde_json::{json, Value};

use crate::knowledge::{render_hits, render_web, ContentKind, KnowledgeTools, DEFAULT_K};
use crate::llm::{Gateway, ToolCall, ToolSchema};

pub const SEARCH_DEVICE_DB: &str = "search_device_db";
pub const SEARCH_PLATFORM_DB: &str = "search_platform_db";
pub const WEB_SEARCH: &str = "web_search";
pub const WRITE_FILE: &str = "write_file";
pub const FINISH_PHASE: &str = "finish_phase";
pub const REWRITE_FILES: &str = "rewrite_files";
pub const MARK_TEST_DEFECTIVE: &str = "mark_test_defective";
pub const EMIT_TESTS: &str = "emit_tests";
pub const EMIT_FUNCTIONS: &str = "emit_functions";

const MAX_K: usize = 20;

fn search_params() -> Value {
    json!({
        "type": "object",
        "properties": {
            "query": {"type": "string"},
            "k": {"type": "integer", "minimum": 1, "maximum": MAX_K},
            "content_kind": {"type": "string", "enum": ["prose", "code"]}
        },
        "required": ["query"]
    })
}

pub fn schema(name: &str) -> ToolSchema {
    match name {
        SEARCH_DEVICE_DB => ToolSchema::new(name, "Search device manuals, API docs, and repositories.", search_params()),
        SEARCH_PLATFORM_DB => ToolSchema::new(name, "Search the platform developer documentation.", search_params()),
        WEB_SEARCH => ToolSchema::new(
            name,
            "Search the web for device information missing from the device knowledge base.",
            json!({"type": "object", "properties": {"query": {"type": "string"}}, "required": ["query"]}),
        ),
        WRITE_FILE => ToolSchema::new(
            name,
            "Write a whole file, replacing any previous content at that path.",
            json!({"type": "object", "properties": {"path": {"type": "string"}, "content": {"type": "string"}}, "required": ["path", "content"]}),
        ),
        FINISH_PHASE => ToolSchema::new(
            name,
            "Declare the current phase complete.",
            json!({"type": "object", "properties": {"summary": {"type": "string"}}}),
        ),
        REWRITE_FILES => ToolSchema::new(
            name,
            "Replace whole files. Maps relative path to full new content.",
            json!({"type": "object", "properties": {"files": {"type": "object", "additionalProperties": {"type": "string"}}}, "required": ["files"]}),
        ),
        MARK_TEST_DEFECTIVE => ToolSchema::new(
            name,
            "Declare the failing test itself wrong. Quote the failing assertion line.",
            json!({"type": "object", "properties": {"justification": {"type": "string"}}, "required": ["justification"]}),
        ),
        EMIT_TESTS => ToolSchema::new(
            name,
            "Return generated tests.",
            json!({"type": "object", "properties": {"tests": {"type": "array", "items": {"type": "object", "properties": {
                "category": {"type": "string", "enum": ["registration", "service_invocation", "config_entry", "functionality"]},
                "target_function": {"type": "string"},
                "body": {"type": "string"}
            }, "required": ["category", "body"]}}}, "required": ["tests"]}),
        ),
        EMIT_FUNCTIONS => ToolSchema::new(
            name,
            "Return the device function list.",
            json!({"type": "object", "properties": {"functions": {"type": "array", "items": {"type": "object", "properties": {
                "function_id": {"type": "string"},
                "name": {"type": "string"},
                "kind": {"type": "string"},
                "description": {"type": "string"},
                "min": {"type": "number"},
                "max": {"type": "number"},
                "options": {"type": "array", "items": {"type": "string"}},
                "unit": {"type": "string"}
            }, "required": ["function_id", "kind"]}}}, "required": ["functions"]}),
        ),
        other => ToolSchema::new(other, "", json!({"type": "object"})),
    }
}

pub fn schemas(names: &[&str]) -> Vec<ToolSchema> {
    names.iter().map(|n| schema(n)).collect()
}

pub fn observation(tool: &str, body: &str) -> String {
    format!("Observation[{tool}]: {body}")
}

pub fn is_retrieval(name: &str) -> bool {
    matches!(name, SEARCH_DEVICE_DB | SEARCH_PLATFORM_DB | WEB_SEARCH)
}

/// Runs a retrieval tool call and renders the observation body. Errors are
/// rendered too: the agent is expected to correct itself.
pub fn run_retrieval(tools: &KnowledgeTools<'_>, gw: &mut Gateway, call: &ToolCall) -> String {
    let Some(query) = call.str_arg("query").filter(|q| !q.trim().is_empty()) else {
        return "error: missing query".into();
    };
    let k = call
        .arguments
        .get("k")
        .and_then(Value::as_u64)
        .map(|k| (k as usize).clamp(1, MAX_K))
        .unwrap_or(DEFAULT_K);
    let kind = match call.str_arg("content_kind") {
        Some("code") => ContentKind::Code,
        _ => ContentKind::Prose,
    };
    let result = match call.name.as_str() {
        SEARCH_DEVICE_DB => tools.search_device_db(gw, query, k, kind).map(|h| render_hits(&h)),
        SEARCH_PLATFORM_DB => tools.search_platform_db(gw, query, k, kind).map(|h| render_hits(&h)),
        WEB_SEARCH => tools.web_search(gw, query).map(|r| render_web(&r)),
        other => return format!("error: {other} is not a retrieval tool"),
    };
    result.unwrap_or_else(|e| format!("error: {e}"))
}

pub fn parse_rewrites(call: &ToolCall) -> Result<BTreeMap<String, String>, String> {
    let files = call
        .arguments
        .get("files")
        .and_then(Value::as_object)
        .ok_or("missing files object")?;
    files
        .iter()
        .map(|(path, content)| {
            content
                .as_str()
                .map(|c| (path.clone(), c.to_string()))
                .ok_or_else(|| format!("content for {path} is not a string"))
        })
        .collect()
}

pub fn render_files(files: &BTreeMap<String, String>) -> String {
    if files.is_empty() {
        return "(none)".into();
    }
    let mut out = String::new();
    for (path, content) in files {
        let _ = writeln!(out, "--- {path} ---");
        out.push_str(content);
        if !content.ends_with('\n') {
            out.push('\n');
        }
    }
    out
}
