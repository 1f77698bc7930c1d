use std::collections::VecDeque;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{HilError, HilSession, HilStatus, Probe};
use crate::agent::render_files;
use crate::codegen::GenerationContext;
use crate::hil::DeviceAdapter;
use crate::llm::{ChatMessage, Gateway, LedgerPhase, ProviderBudget};
use crate::model::{FunctionDescriptor, IntegrationArtifact, RevisionCause};
use crate::repair::{run_round, Round, RoundOutcome};
use crate::trace::Tracer;

const STAGE: &str = "hil_running";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Answer {
    Yes,
    No,
}

impl FromStr for Answer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "y" | "yes" => Ok(Answer::Yes),
            "n" | "no" => Ok(Answer::No),
            other => Err(format!("expected yes or no, got {other:?}")),
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Answer::Yes => "yes",
            Answer::No => "no",
        })
    }
}

pub fn fallback_question(f: &FunctionDescriptor) -> String {
    format!("Did the device's {} behave correctly? (yes/no)", f.display_name())
}

/// The model-facing half of a session: question drafting and repair.
pub trait HilAgent {
    fn draft_question(&mut self, function: &FunctionDescriptor) -> Option<String>;
    /// Returns the next artifact revision, or `None` if no rewrite was
    /// accepted.
    fn repair(&mut self, artifact: &IntegrationArtifact, function: &FunctionDescriptor, report: &str, no_count: u32) -> Option<IntegrationArtifact>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HilConfig {
    pub max_repair_steps: u32,
    pub draft_questions: bool,
    pub budget: ProviderBudget,
}

impl Default for HilConfig {
    fn default() -> Self {
        Self { max_repair_steps: 6, draft_questions: true, budget: ProviderBudget::default() }
    }
}

pub struct LlmHilAgent<'s, 'a> {
    pub ctx: GenerationContext<'a>,
    pub gw: &'s mut Gateway,
    pub config: &'s HilConfig,
    pub tracer: &'s mut Tracer,
}

impl<'s, 'a> LlmHilAgent<'s, 'a> {
    pub fn new(ctx: GenerationContext<'a>, gw: &'s mut Gateway, config: &'s HilConfig, tracer: &'s mut Tracer) -> Self {
        gw.begin_stage(LedgerPhase::HilDebug);
        Self { ctx, gw, config, tracer }
    }

    fn system(&self) -> ChatMessage {
        ChatMessage::system(self.ctx.render(&self.ctx.prompts.hil_system, &[]))
    }
}

impl HilAgent for LlmHilAgent<'_, '_> {
    fn draft_question(&mut self, f: &FunctionDescriptor) -> Option<String> {
        if !self.config.draft_questions {
            return None;
        }
        let name = f.display_name();
        let user = self.ctx.render(
            &self.ctx.prompts.question_draft,
            &[("function_id", &f.function_id), ("function_name", &name), ("function_description", &f.description)],
        );
        let msgs = [self.system(), ChatMessage::user(user)];
        self.tracer.record(STAGE, 0, &msgs[1]);
        match self.gw.complete(&msgs, &[], &self.config.budget) {
            Ok(reply) if reply.tool_call.is_none() => {
                self.tracer.record(STAGE, 0, &reply);
                reply.content.lines().find(|l| !l.trim().is_empty()).map(str::to_string)
            }
            Ok(_) => None,
            Err(e) => {
                tracing::debug!(error = %e, "question drafting fell back to the template");
                None
            }
        }
    }

    fn repair(&mut self, artifact: &IntegrationArtifact, f: &FunctionDescriptor, report: &str, no_count: u32) -> Option<IntegrationArtifact> {
        let name = f.display_name();
        let user = self.ctx.render(
            &self.ctx.prompts.hil_task,
            &[
                ("function_id", &f.function_id),
                ("function_name", &name),
                ("report", report),
                ("no_count", &no_count.to_string()),
                ("files", &render_files(&artifact.files)),
            ],
        );
        let msg = ChatMessage::user(user);
        self.tracer.record(STAGE, 0, &msg);
        let mut transcript = vec![self.system(), msg];
        let round = Round {
            stage: STAGE,
            cause: RevisionCause::HilFix,
            max_steps: self.config.max_repair_steps,
            test_body: None,
            budget: &self.config.budget,
        };
        match run_round(&mut transcript, artifact, &self.ctx, self.gw, &round, self.tracer) {
            Ok(RoundOutcome::Rewritten(next)) => Some(next),
            Ok(_) => None,
            Err(e) => {
                tracing::warn!(error = %e, function = %f.function_id, "HIL repair got no fix from the provider");
                None
            }
        }
    }
}

/// Source of yes/no answers: a person at a terminal, a UI, or a script.
pub trait Responder {
    /// `None` ends the session loop with the probe still outstanding.
    fn answer(&mut self, probe: &Probe) -> Option<Answer>;
}

impl<F: FnMut(&Probe) -> Option<Answer>> Responder for F {
    fn answer(&mut self, probe: &Probe) -> Option<Answer> {
        self(probe)
    }
}

/// Replays answers from a file: one `yes`/`no` per line, `#` comments.
#[derive(Debug, Clone, Default)]
pub struct ScriptedResponder {
    answers: VecDeque<Answer>,
}

impl ScriptedResponder {
    pub fn new(answers: impl IntoIterator<Item = Answer>) -> Self {
        Self { answers: answers.into_iter().collect() }
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        text.lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(str::parse)
            .collect::<Result<VecDeque<_>, _>>()
            .map(|answers| Self { answers })
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text)
    }

    pub fn remaining(&self) -> usize {
        self.answers.len()
    }
}

impl Responder for ScriptedResponder {
    fn answer(&mut self, _: &Probe) -> Option<Answer> {
        self.answers.pop_front()
    }
}

/// Runs the session until it terminates or the responder runs dry.
pub fn drive(
    session: &mut HilSession,
    adapter: &mut dyn DeviceAdapter,
    agent: &mut dyn HilAgent,
    responder: &mut dyn Responder,
) -> Result<(), HilError> {
    loop {
        match session.status {
            HilStatus::Running => {
                session.next_probe(adapter, agent)?;
            }
            HilStatus::AwaitingFeedback => {
                let probe = session.outstanding.clone().expect("awaiting feedback implies an outstanding probe");
                match responder.answer(&probe) {
                    Some(a) => session.submit_feedback(a, agent)?,
                    None => return Err(HilError::NoAnswer(probe.function_id)),
                }
            }
            _ => return Ok(()),
        }
    }
}
