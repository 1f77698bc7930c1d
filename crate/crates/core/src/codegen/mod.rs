//! Two-phase ReAct generation: device control code first, then the
//! platform-compliant integration code built on top of it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::agent::{self, observation, FINISH_PHASE, SEARCH_DEVICE_DB, SEARCH_PLATFORM_DB, WEB_SEARCH, WRITE_FILE};
use crate::knowledge::{render_hits, ContentKind, KnowledgeTools, DEFAULT_K};
use crate::llm::{ChatMessage, Gateway, KindTotals, LedgerPhase, LlmError, ProviderBudget};
use crate::model::{
    is_safe_relative_path, validate_artifact_layout, Clock, IntegrationArtifact, IntegrationTask, PlatformProfile,
};
use crate::prompts::{render, PromptSet};
use crate::trace::Tracer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodegenPhase {
    DeviceControl,
    Integration,
}

impl CodegenPhase {
    pub fn as_str(self) -> &'static str {
        match self {
            CodegenPhase::DeviceControl => "device_control",
            CodegenPhase::Integration => "integration",
        }
    }

    fn ledger_phase(self) -> LedgerPhase {
        match self {
            CodegenPhase::DeviceControl => LedgerPhase::DeviceControlCodegen,
            CodegenPhase::Integration => LedgerPhase::IntegrationCodegen,
        }
    }

    fn stage(self) -> &'static str {
        match self {
            CodegenPhase::DeviceControl => "generating_control",
            CodegenPhase::Integration => "generating_integration",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalMode {
    /// The agent decides per step whether, what, and when to retrieve.
    #[default]
    Progressive,
    /// A fixed query set runs once at the start of each phase; retrieval
    /// tools are then withheld.
    FixedOneTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CodegenConfig {
    pub step_budget: u32,
    pub retrieval_mode: RetrievalMode,
    /// How many layout-invalid finishes are fed back before giving up.
    pub format_repair_attempts: u32,
    pub budget: ProviderBudget,
}

impl Default for CodegenConfig {
    fn default() -> Self {
        Self {
            step_budget: 20,
            retrieval_mode: RetrievalMode::Progressive,
            format_repair_attempts: 2,
            budget: ProviderBudget::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReactState {
    pub phase: CodegenPhase,
    pub transcript: Vec<ChatMessage>,
    pub steps_taken: u32,
    pub step_budget: u32,
    pub retrieval_mode: RetrievalMode,
    pub working_files: BTreeMap<String, String>,
    layout_rejections: u32,
}

impl ReactState {
    pub fn new(system_prompt: String, step_budget: u32, retrieval_mode: RetrievalMode) -> Self {
        Self {
            phase: CodegenPhase::DeviceControl,
            transcript: vec![ChatMessage::system(system_prompt)],
            steps_taken: 0,
            step_budget,
            retrieval_mode,
            working_files: BTreeMap::new(),
            layout_rejections: 0,
        }
    }

    pub fn allowed_tools(&self) -> &'static [&'static str] {
        match (self.retrieval_mode, self.phase) {
            (RetrievalMode::FixedOneTime, _) => &[WRITE_FILE, FINISH_PHASE],
            (RetrievalMode::Progressive, CodegenPhase::DeviceControl) => &[SEARCH_DEVICE_DB, WEB_SEARCH, WRITE_FILE, FINISH_PHASE],
            (RetrievalMode::Progressive, CodegenPhase::Integration) => &[SEARCH_PLATFORM_DB, WRITE_FILE, FINISH_PHASE],
        }
    }
}

/// What one step did.
#[derive(Debug, Clone, PartialEq)]
pub enum StepEffect {
    ToolObserved(String),
    FileWritten(String),
    PhaseComplete,
    /// The step produced an error observation (disallowed tool, bad
    /// arguments, no action, layout violations).
    Rejected(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationStatus {
    Succeeded,
    BudgetExhausted,
    ProviderFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationOutcome {
    /// Present iff `status` is `Succeeded`.
    pub artifact: Option<IntegrationArtifact>,
    pub transcript: Vec<ChatMessage>,
    /// Transcript index of the device-control completion marker.
    pub phase_boundary: Option<usize>,
    pub ledger_snapshot: BTreeMap<LedgerPhase, KindTotals>,
    pub status: GenerationStatus,
    pub failure: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum CodegenError {
    #[error("precondition: {0}")]
    Precondition(String),
}

/// Everything the agent reads but never mutates.
#[derive(Clone, Copy)]
pub struct GenerationContext<'a> {
    pub task: &'a IntegrationTask,
    pub profile: &'a PlatformProfile,
    pub tools: KnowledgeTools<'a>,
    pub prompts: &'a PromptSet,
    pub clock: &'a dyn Clock,
}

impl GenerationContext<'_> {
    fn identity(&self) -> [(&str, &str); 3] {
        [
            ("device_brand", self.task.device_brand.as_str()),
            ("device_model", self.task.device_model.as_str()),
            ("platform", self.profile.name()),
        ]
    }

    pub(crate) fn render(&self, template: &str, extra: &[(&str, &str)]) -> String {
        let mut vars = self.identity().to_vec();
        vars.extend_from_slice(extra);
        render(template, &vars)
    }
}

const FIXED_QUERIES: [(&str, ContentKind); 4] = [
    ("capabilities", ContentKind::Prose),
    ("protocol", ContentKind::Prose),
    ("entity kinds", ContentKind::Prose),
    ("examples", ContentKind::Code),
];

fn fixed_retrieval(ctx: &GenerationContext<'_>, gw: &mut Gateway, phase: CodegenPhase) -> String {
    let mut sections = Vec::new();
    for (topic, kind) in FIXED_QUERIES {
        let (query, result) = match phase {
            CodegenPhase::DeviceControl => {
                let q = format!("{} {} {topic}", ctx.task.device_brand, ctx.task.device_model);
                let r = ctx.tools.search_device_db(gw, &q, DEFAULT_K, kind);
                (q, r)
            }
            CodegenPhase::Integration => {
                let q = format!("{} {topic}", ctx.profile.name());
                let r = ctx.tools.search_platform_db(gw, &q, DEFAULT_K, kind);
                (q, r)
            }
        };
        let body = result.map(|h| render_hits(&h)).unwrap_or_else(|e| format!("error: {e}"));
        sections.push(format!("## {query}\n{body}"));
    }
    let store = match phase {
        CodegenPhase::DeviceControl => "device knowledge base",
        CodegenPhase::Integration => "platform knowledge base",
    };
    render(&ctx.prompts.fixed_knowledge, &[("store", store), ("knowledge", &sections.join("\n\n"))])
}

fn phase_message(ctx: &GenerationContext<'_>, gw: &mut Gateway, state: &ReactState) -> String {
    let tools = state.allowed_tools().join(", ");
    let mut msg = match state.phase {
        CodegenPhase::DeviceControl => ctx.render(
            &ctx.prompts.device_control,
            &[
                ("function_description", ctx.task.function_description.as_deref().unwrap_or("all functions the device offers")),
                ("tools", &tools),
            ],
        ),
        CodegenPhase::Integration => {
            let files = agent::render_files(&state.working_files);
            ctx.render(
                &ctx.prompts.integration,
                &[
                    ("files", &files),
                    ("entity_kinds", &ctx.profile.entity_kinds.join(", ")),
                    ("manifest_path", &ctx.profile.layout.manifest_path),
                    ("tools", &tools),
                ],
            )
        }
    };
    if state.retrieval_mode == RetrievalMode::FixedOneTime {
        msg.push_str("\n\n");
        msg.push_str(&fixed_retrieval(ctx, gw, state.phase));
    }
    msg
}

fn artifact_id(task: &IntegrationTask) -> String {
    let slug: String = format!("{}-{}-{}", task.device_brand, task.device_model, task.platform_id)
        .to_lowercase()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '-' })
        .collect();
    format!("{slug}-s{}", task.seed)
}

/// Performs one ReAct step: one provider call and exactly one effect.
pub fn react_step(
    state: &mut ReactState,
    gw: &mut Gateway,
    ctx: &GenerationContext<'_>,
    config: &CodegenConfig,
    tracer: &mut Tracer,
) -> Result<StepEffect, LlmError> {
    if state.steps_taken >= state.step_budget {
        return Err(LlmError::Precondition("step budget exhausted".into()));
    }
    let stage = state.phase.stage();
    let step = state.steps_taken;
    let schemas = agent::schemas(state.allowed_tools());
    let reply = gw.complete(&state.transcript, &schemas, &config.budget)?;
    state.steps_taken += 1;
    tracer.record(stage, step, &reply);
    state.transcript.push(reply.clone());

    let Some(call) = reply.tool_call else {
        let note = "Observation[none]: no action taken; reply with exactly one tool call.";
        let msg = ChatMessage::user(note);
        tracer.record(stage, step, &msg);
        state.transcript.push(msg);
        return Ok(StepEffect::Rejected("no action".into()));
    };

    let (effect, body) = if !state.allowed_tools().contains(&call.name.as_str()) {
        (StepEffect::Rejected(format!("{} not available", call.name)), "error: tool not available in this phase".to_string())
    } else if agent::is_retrieval(&call.name) {
        (StepEffect::ToolObserved(call.name.clone()), agent::run_retrieval(&ctx.tools, gw, &call))
    } else if call.name == WRITE_FILE {
        match (call.str_arg("path"), call.arguments.get("content").and_then(Value::as_str)) {
            (Some(path), Some(content)) if is_safe_relative_path(path) => {
                state.working_files.insert(path.to_string(), content.to_string());
                (StepEffect::FileWritten(path.to_string()), format!("{path} written ({} bytes)", content.len()))
            }
            (Some(path), Some(_)) => (StepEffect::Rejected("unsafe path".into()), format!("error: unsafe path {path}")),
            _ => (StepEffect::Rejected("bad arguments".into()), "error: write_file needs string path and content".into()),
        }
    } else {
        finish(state, ctx)
    };
    let msg = ChatMessage::tool_result(call.id.clone(), observation(&call.name, &body));
    tracer.record(stage, step, &msg);
    state.transcript.push(msg);
    Ok(effect)
}

fn finish(state: &mut ReactState, ctx: &GenerationContext<'_>) -> (StepEffect, String) {
    match state.phase {
        CodegenPhase::DeviceControl if state.working_files.is_empty() => {
            (StepEffect::Rejected("empty phase".into()), "error: no control code written yet".into())
        }
        CodegenPhase::DeviceControl => (StepEffect::PhaseComplete, "device control code complete".into()),
        CodegenPhase::Integration => {
            let draft = IntegrationArtifact::new("draft", ctx.profile.layout.manifest_path.clone(), state.working_files.clone(), 0);
            let report = validate_artifact_layout(&draft, ctx.profile);
            if report.is_valid() {
                (StepEffect::PhaseComplete, "integration code complete".into())
            } else {
                state.layout_rejections += 1;
                let list: Vec<String> = report.violations.iter().map(|v| format!("- {v}")).collect();
                (StepEffect::Rejected("layout".into()), format!("error: layout violations\n{}", list.join("\n")))
            }
        }
    }
}

/// Runs both phases to completion or failure.
pub fn run_generation(
    ctx: &GenerationContext<'_>,
    gw: &mut Gateway,
    config: &CodegenConfig,
    tracer: &mut Tracer,
) -> Result<GenerationOutcome, CodegenError> {
    ctx.task.validate().map_err(|e| CodegenError::Precondition(e.to_string()))?;
    match ctx.tools.platform {
        Some(p) if !p.is_empty() => {}
        _ => {
            return Err(CodegenError::Precondition(format!(
                "platform knowledge for {} is empty; generation cannot proceed",
                ctx.profile.platform_id
            )))
        }
    }

    let system = ctx.render(&ctx.prompts.codegen_system, &[]);
    let mut state = ReactState::new(system, config.step_budget, config.retrieval_mode);
    let mut boundary = None;
    let outcome = |state: ReactState, boundary, gw: &Gateway, status, failure: Option<String>, artifact| GenerationOutcome {
        artifact,
        transcript: state.transcript,
        phase_boundary: boundary,
        ledger_snapshot: gw.ledger().totals_by_phase(),
        status,
        failure,
    };

    for phase in [CodegenPhase::DeviceControl, CodegenPhase::Integration] {
        state.phase = phase;
        state.steps_taken = 0;
        gw.begin_stage(phase.ledger_phase());
        let msg = ChatMessage::user(phase_message(ctx, gw, &state));
        tracer.record(phase.stage(), 0, &msg);
        state.transcript.push(msg);
        loop {
            if state.steps_taken >= state.step_budget {
                let why = format!("step budget {} exhausted in phase {}", state.step_budget, phase.as_str());
                return Ok(outcome(state, boundary, gw, GenerationStatus::BudgetExhausted, Some(why), None));
            }
            match react_step(&mut state, gw, ctx, config, tracer) {
                Ok(StepEffect::PhaseComplete) => break,
                Ok(StepEffect::Rejected(_)) if state.layout_rejections > config.format_repair_attempts => {
                    let why = format!("layout still invalid after {} repair attempts", config.format_repair_attempts);
                    return Ok(outcome(state, boundary, gw, GenerationStatus::ProviderFailed, Some(why), None));
                }
                Ok(_) => {}
                Err(LlmError::Budget(why)) => {
                    return Ok(outcome(state, boundary, gw, GenerationStatus::BudgetExhausted, Some(why), None));
                }
                Err(e) => {
                    return Ok(outcome(state, boundary, gw, GenerationStatus::ProviderFailed, Some(e.to_string()), None));
                }
            }
        }
        if phase == CodegenPhase::DeviceControl {
            boundary = Some(state.transcript.len() - 1);
        }
    }

    let artifact = IntegrationArtifact::new(
        artifact_id(ctx.task),
        ctx.profile.layout.manifest_path.clone(),
        state.working_files.clone(),
        ctx.clock.now_ms(),
    );
    Ok(outcome(state, boundary, gw, GenerationStatus::Succeeded, None, Some(artifact)))
}

#[cfg(test)]
mod tests;
