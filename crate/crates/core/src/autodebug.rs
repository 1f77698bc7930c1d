//! Automated debugging against the virtual device: tests run in order, and
//! each failure is repaired (or given up on) before the next test runs.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::agent::render_files;
use crate::codegen::GenerationContext;
use crate::harness::{TestCase, TestResult, TestRunner, Verdict};
use crate::llm::{ChatMessage, Gateway, LedgerPhase, LlmError, ProviderBudget};
use crate::model::{IntegrationArtifact, RevisionCause};
use crate::repair::{run_round, Round, RoundOutcome};
use crate::trace::Tracer;

const STAGE: &str = "auto_debugging";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AutoDebugConfig {
    /// Repair attempts per test (A).
    pub max_attempts: u32,
    /// Provider calls allowed within one attempt.
    pub max_steps_per_attempt: u32,
    /// Re-run the whole suite once at the end and repair regressions.
    pub confirmation_pass: bool,
    pub budget: ProviderBudget,
}

impl Default for AutoDebugConfig {
    fn default() -> Self {
        Self { max_attempts: 8, max_steps_per_attempt: 6, confirmation_pass: true, budget: ProviderBudget::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Fixed,
    AlreadyPassing,
    TestDefective,
    Unfixable,
    /// Never run, or never repaired, because the provider failed first.
    NotRun,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunPass {
    Initial,
    /// Re-run of a failing test right after an accepted rewrite.
    Rerun,
    Confirmation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Execution {
    pub test_id: String,
    pub pass: RunPass,
    pub revision: u64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub test_id: String,
    pub attempts: u32,
    pub final_verdict: Option<Verdict>,
    pub classification: Classification,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub justification: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DebugReport {
    pub outcomes: Vec<TestOutcome>,
    pub revisions_made: u64,
    pub executions: Vec<Execution>,
    /// Latest result per executed test, in suite order.
    pub results: Vec<TestResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl DebugReport {
    pub fn outcome(&self, test_id: &str) -> Option<&TestOutcome> {
        self.outcomes.iter().find(|o| o.test_id == test_id)
    }

    /// Tests re-executed after a rewrite (confirmation runs excluded).
    pub fn rerun_set(&self) -> BTreeSet<&str> {
        self.executions
            .iter()
            .filter(|e| e.pass == RunPass::Rerun)
            .map(|e| e.test_id.as_str())
            .collect()
    }

    /// Every test that was not skipped as defective ends in a pass.
    pub fn all_green(&self) -> bool {
        self.failure.is_none()
            && self.outcomes.iter().all(|o| match o.classification {
                Classification::Fixed | Classification::AlreadyPassing => o.final_verdict == Some(Verdict::Passed),
                Classification::TestDefective => true,
                Classification::Unfixable | Classification::NotRun => false,
            })
    }
}

struct Session<'s, 'a> {
    artifact: IntegrationArtifact,
    tests: &'s [TestCase],
    runner: &'s mut dyn TestRunner,
    ctx: &'s GenerationContext<'a>,
    gw: &'s mut Gateway,
    config: &'s AutoDebugConfig,
    tracer: &'s mut Tracer,
    report: DebugReport,
}

impl Session<'_, '_> {
    fn execute(&mut self, i: usize, pass: RunPass) -> TestResult {
        let tests = self.tests;
        let test = &tests[i];
        let r = self.runner.run(&self.artifact, test);
        tracing::debug!(test = %test.test_id, ?pass, verdict = ?r.verdict, "test executed");
        self.report.executions.push(Execution {
            test_id: test.test_id.clone(),
            pass,
            revision: self.artifact.revision,
            verdict: r.verdict,
        });
        self.report.outcomes[i].final_verdict = Some(r.verdict);
        match self.report.results.iter_mut().find(|x| x.test_id == r.test_id) {
            Some(slot) => *slot = r.clone(),
            None => self.report.results.push(r.clone()),
        }
        r
    }

    /// Repair loop for test `i`, which just failed with `last`.
    fn repair(&mut self, i: usize, mut last: TestResult) -> Result<(), LlmError> {
        let tests = self.tests;
        let test = &tests[i];
        let system = self.ctx.render(&self.ctx.prompts.autodebug_system, &[]);
        let mut transcript = vec![ChatMessage::system(system)];
        while self.report.outcomes[i].attempts < self.config.max_attempts {
            self.report.outcomes[i].attempts += 1;
            let attempt = self.report.outcomes[i].attempts.to_string();
            let task = self.ctx.render(
                &self.ctx.prompts.autodebug_task,
                &[
                    ("test_id", &test.test_id),
                    ("category", test.category.as_str()),
                    ("attempt", &attempt),
                    ("max_attempts", &self.config.max_attempts.to_string()),
                    ("verdict", verdict_str(last.verdict)),
                    ("diagnostics", &last.diagnostics),
                    ("test_body", &test.body),
                    ("files", &render_files(&self.artifact.files)),
                ],
            );
            let msg = ChatMessage::user(task);
            self.tracer.record(STAGE, 0, &msg);
            transcript.push(msg);
            let round = Round {
                stage: STAGE,
                cause: RevisionCause::AutoDebugFix,
                max_steps: self.config.max_steps_per_attempt,
                test_body: Some(&test.body),
                budget: &self.config.budget,
            };
            match run_round(&mut transcript, &self.artifact, self.ctx, self.gw, &round, self.tracer)? {
                RoundOutcome::Rewritten(next) => {
                    self.artifact = next;
                    self.report.revisions_made += 1;
                    last = self.execute(i, RunPass::Rerun);
                    if last.passed() {
                        self.report.outcomes[i].classification = Classification::Fixed;
                        return Ok(());
                    }
                }
                RoundOutcome::Defective(why) => {
                    let o = &mut self.report.outcomes[i];
                    o.classification = Classification::TestDefective;
                    o.justification = Some(why);
                    return Ok(());
                }
                RoundOutcome::NoFix => {}
            }
        }
        self.report.outcomes[i].classification = Classification::Unfixable;
        Ok(())
    }

    fn fail(&mut self, e: LlmError, untouched: impl IntoIterator<Item = usize>) {
        tracing::warn!(error = %e, "auto-debug stopped on provider failure");
        for j in untouched {
            self.report.outcomes[j].classification = Classification::NotRun;
        }
        self.report.failure = Some(e.to_string());
    }
}

fn verdict_str(v: Verdict) -> &'static str {
    match v {
        Verdict::Passed => "passed",
        Verdict::Failed => "failed",
        Verdict::Errored => "errored",
        Verdict::TimedOut => "timed_out",
    }
}

/// Runs `tests` in order against `artifact`, repairing each failure.
///
/// Earlier tests are not re-run while later ones are repaired; one
/// confirmation pass at the end re-runs every passing test, and each
/// regression gets one more repair loop (within what is left of its
/// attempt cap).
pub fn auto_debug(
    artifact: IntegrationArtifact,
    tests: &[TestCase],
    runner: &mut dyn TestRunner,
    ctx: &GenerationContext<'_>,
    gw: &mut Gateway,
    config: &AutoDebugConfig,
    tracer: &mut Tracer,
) -> (IntegrationArtifact, DebugReport) {
    gw.begin_stage(LedgerPhase::AutoDebug);
    let outcomes = tests
        .iter()
        .map(|t| TestOutcome {
            test_id: t.test_id.clone(),
            attempts: 0,
            final_verdict: None,
            classification: Classification::NotRun,
            justification: None,
        })
        .collect();
    let mut s = Session {
        artifact,
        tests,
        runner,
        ctx,
        gw,
        config,
        tracer,
        report: DebugReport { outcomes, revisions_made: 0, executions: Vec::new(), results: Vec::new(), failure: None },
    };

    for i in 0..tests.len() {
        let r = s.execute(i, RunPass::Initial);
        if r.passed() {
            s.report.outcomes[i].classification = Classification::AlreadyPassing;
            continue;
        }
        if let Err(e) = s.repair(i, r) {
            if s.report.outcomes[i].classification == Classification::NotRun {
                s.report.outcomes[i].classification = Classification::Unfixable;
            }
            s.fail(e, i + 1..tests.len());
            return (s.artifact, s.report);
        }
    }

    if config.confirmation_pass && s.report.revisions_made > 0 {
        let mut regressed = Vec::new();
        for i in 0..tests.len() {
            if matches!(s.report.outcomes[i].classification, Classification::Fixed | Classification::AlreadyPassing) {
                let r = s.execute(i, RunPass::Confirmation);
                if !r.passed() {
                    regressed.push((i, r));
                }
            }
        }
        let pending: Vec<usize> = regressed.iter().map(|(i, _)| *i).collect();
        for (n, (i, r)) in regressed.into_iter().enumerate() {
            tracing::info!(test = %tests[i].test_id, "regression found in confirmation pass");
            if let Err(e) = s.repair(i, r) {
                s.fail(e, pending[n..].iter().copied());
                break;
            }
        }
    }
    (s.artifact, s.report)
}

#[cfg(test)]
mod tests;
