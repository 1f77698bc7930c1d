//! One ReAct repair round, shared by the automated and the HIL debugger:
//! the agent may search, then must either rewrite files or (auto-debug
//! only) declare the test defective.

use serde_json::Value;

use crate::agent::{self, observation, MARK_TEST_DEFECTIVE, REWRITE_FILES, SEARCH_DEVICE_DB, SEARCH_PLATFORM_DB};
use crate::codegen::GenerationContext;
use crate::llm::{ChatMessage, Gateway, LlmError, ProviderBudget};
use crate::model::{IntegrationArtifact, RevisionCause};
use crate::trace::Tracer;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum RoundOutcome {
    Rewritten(IntegrationArtifact),
    Defective(String),
    /// Step cap reached without an accepted rewrite or verdict.
    NoFix,
}

pub(crate) struct Round<'r> {
    pub stage: &'r str,
    pub cause: RevisionCause,
    pub max_steps: u32,
    /// Body of the failing test, when a defective verdict is allowed.
    pub test_body: Option<&'r str>,
    pub budget: &'r ProviderBudget,
}

/// Assertion lines a defective verdict may cite.
pub(crate) fn assertion_lines(body: &str) -> Vec<&str> {
    body.lines().map(str::trim).filter(|l| l.contains("assert")).collect()
}

fn cites_assertion(justification: &str, body: &str) -> bool {
    assertion_lines(body).iter().any(|l| justification.contains(l))
}

pub(crate) fn run_round(
    transcript: &mut Vec<ChatMessage>,
    artifact: &IntegrationArtifact,
    ctx: &GenerationContext<'_>,
    gw: &mut Gateway,
    round: &Round<'_>,
    tracer: &mut Tracer,
) -> Result<RoundOutcome, LlmError> {
    let mut tools = vec![SEARCH_DEVICE_DB, SEARCH_PLATFORM_DB, REWRITE_FILES];
    if round.test_body.is_some() {
        tools.push(MARK_TEST_DEFECTIVE);
    }
    let schemas = agent::schemas(&tools);
    for step in 0..round.max_steps {
        let reply = gw.complete(transcript, &schemas, round.budget)?;
        tracer.record(round.stage, step, &reply);
        transcript.push(reply.clone());
        let Some(call) = reply.tool_call else {
            let msg = ChatMessage::user("Observation[none]: no action taken; reply with exactly one tool call.");
            tracer.record(round.stage, step, &msg);
            transcript.push(msg);
            continue;
        };
        let mut outcome = None;
        let body = if !tools.contains(&call.name.as_str()) {
            "error: tool not available here".to_string()
        } else if agent::is_retrieval(&call.name) {
            agent::run_retrieval(&ctx.tools, gw, &call)
        } else if call.name == REWRITE_FILES {
            match agent::parse_rewrites(&call) {
                Err(e) => format!("error: {e}"),
                Ok(files) => match artifact.apply_rewrite(&files, round.cause, ctx.clock.now_ms(), ctx.profile) {
                    Ok(next) => {
                        let body = format!("accepted; artifact now at revision {}", next.revision);
                        outcome = Some(RoundOutcome::Rewritten(next));
                        body
                    }
                    Err(report) => {
                        let list: Vec<String> = report.violations.iter().map(|v| format!("- {v}")).collect();
                        format!("error: rewrite rejected\n{}", list.join("\n"))
                    }
                },
            }
        } else {
            let justification = call.arguments.get("justification").and_then(Value::as_str).unwrap_or("");
            match round.test_body {
                Some(test) if cites_assertion(justification, test) => {
                    outcome = Some(RoundOutcome::Defective(justification.to_string()));
                    "test recorded as defective and skipped".to_string()
                }
                _ => "error: justification must quote the failing assertion line of the test".to_string(),
            }
        };
        let msg = ChatMessage::tool_result(call.id.clone(), observation(&call.name, &body));
        tracer.record(round.stage, step, &msg);
        transcript.push(msg);
        if let Some(o) = outcome {
            return Ok(o);
        }
    }
    Ok(RoundOutcome::NoFix)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn citation_needs_an_assertion_line() {
        let body = "x = 1\n    assert x == 2, \"assertion failed: x\"\n";
        assert!(cites_assertion("the check `assert x == 2, \"assertion failed: x\"` is wrong", body));
        assert!(!cites_assertion("x = 1 is wrong", body));
        assert!(!cites_assertion("anything", "no checks here\n"));
    }
}
