//! End-to-end orchestration: ingest → generate → test → auto-debug → HIL.
//! Stage changes, trace records, test executions and HIL events are
//! forwarded to an optional event sink as they happen.

mod config;
mod fixture;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

pub use config::{merge_toml, PipelineConfig};
pub use fixture::{discover_fixtures, TaskFixture, TASK_FILE};

use crate::autodebug::{auto_debug, DebugReport};
use crate::codegen::{run_generation, GenerationContext, GenerationStatus};
use crate::device::{build_virtual_device, serve, ServerHandle, SharedDevice};
use crate::harness::{
    generate_basic_tests, generate_functionality_tests, summarize_function_list, SandboxRunner, TestCase, TestCategory,
    TestGenContext, TestIdAllocator, TestResult, TestRunner, Verdict,
};
use crate::hil::{ArtifactAdapter, Answer, DeviceAdapter, HilEvent, HilSession, HilStatus, LlmHilAgent, Probe, Responder};
use crate::knowledge::{
    ingest_device_sources, ingest_platform_docs, load_toc_dir, Embedders, Exclusion, IngestReport, KnowledgeStore,
    KnowledgeTools, LeakageDenylist, SourceFetcher,
};
use crate::llm::{ChatProvider, Gateway, KindTotals, LedgerPhase};
use crate::metrics::{RunRecord, METRICS_VERSION};
use crate::model::{
    validate_artifact_layout, Clock, FunctionDescriptor, IntegrationArtifact, IntegrationTask, LogicalClock, PlatformProfile,
};
use crate::prompts::PromptSet;
use crate::trace::Tracer;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("fixture: {0}")]
    Fixture(String),
    #[error("{0}")]
    Stage(String),
    #[error("precondition: {0}")]
    Precondition(String),
    #[error("hil: {0}")]
    Hil(#[from] crate::hil::HilError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingesting,
    GeneratingControl,
    GeneratingIntegration,
    AutoDebugging,
    AwaitingHil,
    HilRunning,
    Done,
    Failed,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingesting => "ingesting",
            Stage::GeneratingControl => "generating_control",
            Stage::GeneratingIntegration => "generating_integration",
            Stage::AutoDebugging => "auto_debugging",
            Stage::AwaitingHil => "awaiting_hil",
            Stage::HilRunning => "hil_running",
            Stage::Done => "done",
            Stage::Failed => "failed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Stage::Ingesting,
            Stage::GeneratingControl,
            Stage::GeneratingIntegration,
            Stage::AutoDebugging,
            Stage::AwaitingHil,
            Stage::HilRunning,
            Stage::Done,
            Stage::Failed,
        ]
        .into_iter()
        .find(|st| st.as_str() == s)
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, Stage::Done | Stage::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PipelineEvent {
    Stage { stage: Stage },
    Trace { record: crate::trace::TraceRecord },
    TestExecuted { test_id: String, revision: u64, verdict: Verdict },
    Hil { event: HilEvent },
    Finished { stage: Stage, usable: bool, failure: Option<String> },
}

pub type EventSink = Arc<dyn Fn(PipelineEvent) + Send + Sync>;

struct Emitter {
    sink: Option<EventSink>,
    stage: Mutex<Option<Stage>>,
}

impl Emitter {
    fn emit(&self, e: PipelineEvent) {
        if let Some(s) = &self.sink {
            s(e);
        }
    }

    /// Emits a stage event only on an actual change.
    fn enter(&self, stage: Stage) {
        {
            let mut cur = self.stage.lock().unwrap_or_else(|p| p.into_inner());
            if *cur == Some(stage) {
                return;
            }
            *cur = Some(stage);
        }
        tracing::info!(stage = stage.as_str(), "pipeline stage");
        self.emit(PipelineEvent::Stage { stage });
    }

    fn current(&self) -> Option<Stage> {
        *self.stage.lock().unwrap_or_else(|p| p.into_inner())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub ingested: Vec<String>,
    pub exclusions: Vec<Exclusion>,
    pub warnings: Vec<String>,
    pub chunks: usize,
}

impl From<&IngestReport> for IngestSummary {
    fn from(r: &IngestReport) -> Self {
        Self {
            ingested: r.ingested.clone(),
            exclusions: r.exclusions.clone(),
            warnings: r.warnings.clone(),
            chunks: r.store.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HilSummary {
    pub status: HilStatus,
    pub probes: u32,
    pub total_no: u32,
    pub per_function_no_count: BTreeMap<String, u32>,
    pub failed: Vec<String>,
}

impl From<&HilSession> for HilSummary {
    fn from(s: &HilSession) -> Self {
        Self {
            status: s.status,
            probes: s.probes_issued,
            total_no: s.total_no_count(),
            per_function_no_count: s.per_function_no_count.clone(),
            failed: s.failed.iter().cloned().collect(),
        }
    }
}

/// Everything a run produced so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub task: IntegrationTask,
    pub stage: Option<Stage>,
    pub failure: Option<String>,
    /// Stage that was running when the run failed.
    pub failed_stage: Option<Stage>,
    pub device_ingest: Option<IngestSummary>,
    pub platform_ingest: Option<IngestSummary>,
    pub generation: Option<GenerationStatus>,
    pub functions: Vec<FunctionDescriptor>,
    pub function_warnings: Vec<String>,
    pub tests: Vec<TestCase>,
    /// Latest result per test.
    pub results: Vec<TestResult>,
    pub debug: Option<DebugReport>,
    pub layout_valid: bool,
    /// Layout-valid and every basic test passed.
    pub usable: bool,
    pub revision: Option<u64>,
    pub hil: Option<HilSummary>,
    pub ledger: BTreeMap<LedgerPhase, KindTotals>,
}

/// External services a run talks to. Offline runs use fixture-backed
/// stand-ins for all of them.
pub struct Services {
    pub provider: Box<dyn ChatProvider>,
    pub fetcher: Box<dyn SourceFetcher>,
    pub embedders: Embedders,
    pub clock: Box<dyn Clock>,
    pub prompts: PromptSet,
}

struct Env {
    task: IntegrationTask,
    profile: PlatformProfile,
    config: PipelineConfig,
    prompts: PromptSet,
    fetcher: Box<dyn SourceFetcher>,
    denylist: LeakageDenylist,
    embedders: Embedders,
    clock: Box<dyn Clock>,
    device_store: Option<KnowledgeStore>,
    platform_store: Option<KnowledgeStore>,
}

impl Env {
    fn tools(&self) -> KnowledgeTools<'_> {
        KnowledgeTools {
            device: self.device_store.as_ref(),
            platform: self.platform_store.as_ref(),
            web: if self.config.web_search_enabled { Some(self.fetcher.as_ref()) } else { None },
            denylist: &self.denylist,
        }
    }

    fn ctx(&self) -> GenerationContext<'_> {
        GenerationContext {
            task: &self.task,
            profile: &self.profile,
            tools: self.tools(),
            prompts: &self.prompts,
            clock: self.clock.as_ref(),
        }
    }

    fn testgen(&self) -> TestGenContext<'_> {
        TestGenContext {
            task: &self.task,
            profile: &self.profile,
            tools: self.tools(),
            prompts: &self.prompts,
            budget: &self.config.testgen_budget,
        }
    }
}

pub struct Pipeline {
    env: Env,
    gw: Gateway,
    tracer: Tracer,
    emitter: Arc<Emitter>,
    ids: TestIdAllocator,
    device: Option<ServerHandle>,
    artifact: Option<IntegrationArtifact>,
    hil: Option<HilSession>,
    summary: RunSummary,
}

impl Pipeline {
    pub fn new(
        task: IntegrationTask,
        profile: PlatformProfile,
        denylist: LeakageDenylist,
        config: PipelineConfig,
        services: Services,
        sink: Option<EventSink>,
    ) -> Self {
        let emitter = Arc::new(Emitter { sink, stage: Mutex::new(None) });
        let tracer = {
            let emitter = emitter.clone();
            Tracer::with_listener(move |record| {
                // agents report their own stage; surface the transition first
                if let Some(stage) = Stage::parse(&record.stage) {
                    if emitter.current() != Some(Stage::AwaitingHil) {
                        emitter.enter(stage);
                    }
                }
                emitter.emit(PipelineEvent::Trace { record: record.clone() });
            })
        };
        let summary = RunSummary {
            task: task.clone(),
            stage: None,
            failure: None,
            failed_stage: None,
            device_ingest: None,
            platform_ingest: None,
            generation: None,
            functions: Vec::new(),
            function_warnings: Vec::new(),
            tests: Vec::new(),
            results: Vec::new(),
            debug: None,
            layout_valid: false,
            usable: false,
            revision: None,
            hil: None,
            ledger: BTreeMap::new(),
        };
        Self {
            env: Env {
                task,
                profile,
                config,
                prompts: services.prompts,
                fetcher: services.fetcher,
                denylist,
                embedders: services.embedders,
                clock: services.clock,
                device_store: None,
                platform_store: None,
            },
            gw: Gateway::new(services.provider),
            tracer,
            emitter,
            ids: TestIdAllocator::new(),
            device: None,
            artifact: None,
            hil: None,
            summary,
        }
    }

    /// A fully offline run: scripted provider, fixture sources, hashing
    /// embedders and a logical clock. `config` is used as given; see
    /// [`TaskFixture::pipeline_config`] for the fixture's own overrides.
    pub fn offline(fixture: &TaskFixture, config: PipelineConfig, sink: Option<EventSink>) -> Result<Self, PipelineError> {
        let services = Services {
            provider: Box::new(fixture.provider()?),
            fetcher: Box::new(fixture.fetcher()?),
            embedders: Embedders::offline(),
            clock: Box::new(LogicalClock::starting_at(1)),
            prompts: PromptSet::default(),
        };
        Ok(Self::new(fixture.task.clone(), fixture.profile.clone(), fixture.denylist.clone(), config, services, sink))
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.env.config
    }

    pub fn task(&self) -> &IntegrationTask {
        &self.env.task
    }

    pub fn profile(&self) -> &PlatformProfile {
        &self.env.profile
    }

    pub fn artifact(&self) -> Option<&IntegrationArtifact> {
        self.artifact.as_ref()
    }

    pub fn tracer(&self) -> &Tracer {
        &self.tracer
    }

    pub fn device_store(&self) -> Option<&KnowledgeStore> {
        self.env.device_store.as_ref()
    }

    pub fn platform_store(&self) -> Option<&KnowledgeStore> {
        self.env.platform_store.as_ref()
    }

    pub fn hil_session(&self) -> Option<&HilSession> {
        self.hil.as_ref()
    }

    /// The virtual device, once tests have run.
    pub fn device(&self) -> Option<&SharedDevice> {
        self.device.as_ref().map(|d| d.device())
    }

    pub fn device_endpoint(&self) -> Option<String> {
        self.device.as_ref().map(|d| d.endpoint())
    }

    pub fn stage(&self) -> Option<Stage> {
        self.emitter.current()
    }

    pub fn summary(&self) -> RunSummary {
        let mut s = self.summary.clone();
        s.stage = self.stage();
        s.ledger = self.gw.ledger().totals_by_phase();
        s.revision = self.artifact.as_ref().map(|a| a.revision);
        s.hil = self.hil.as_ref().map(HilSummary::from);
        s
    }

    fn fail(&mut self, message: String) -> PipelineError {
        tracing::error!(%message, "pipeline failed");
        self.summary.failure = Some(message.clone());
        self.summary.failed_stage = self.emitter.current();
        self.emitter.enter(Stage::Failed);
        self.emitter.emit(PipelineEvent::Finished { stage: Stage::Failed, usable: false, failure: Some(message.clone()) });
        PipelineError::Stage(message)
    }

    /// Builds the device store and, unless disabled, the platform store.
    pub fn ingest(&mut self) -> Result<(), PipelineError> {
        self.emitter.enter(Stage::Ingesting);
        let env = &self.env;
        let device = ingest_device_sources(&env.task, env.fetcher.as_ref(), &env.denylist, &env.embedders, env.config.chunking);
        let device = match device {
            Ok(r) => r,
            Err(e) => return Err(self.fail(format!("device ingestion failed: {e}"))),
        };
        for w in &device.warnings {
            tracing::warn!(warning = %w, "device ingestion");
        }
        self.summary.device_ingest = Some(IngestSummary::from(&device));
        self.env.device_store = Some(device.store);

        if !self.env.config.platform_store_enabled {
            tracing::info!("platform store disabled by configuration");
            return Ok(());
        }
        let env = &self.env;
        let doc_dir = env.profile.base_dir.join(&env.profile.doc_root);
        let platform = load_toc_dir(&doc_dir)
            .and_then(|toc| ingest_platform_docs(&env.profile, &toc, &env.denylist, &env.embedders, env.config.chunking));
        match platform {
            Ok(r) => {
                self.summary.platform_ingest = Some(IngestSummary::from(&r));
                self.env.platform_store = Some(r.store);
                Ok(())
            }
            Err(e) => Err(self.fail(format!("platform ingestion failed: {e}"))),
        }
    }

    /// Both code generation phases.
    pub fn generate(&mut self) -> Result<(), PipelineError> {
        self.emitter.enter(Stage::GeneratingControl);
        let ctx = self.env.ctx();
        let outcome = run_generation(&ctx, &mut self.gw, &self.env.config.codegen, &mut self.tracer);
        let outcome = match outcome {
            Ok(o) => o,
            Err(e) => return Err(self.fail(format!("generation refused: {e}"))),
        };
        self.summary.generation = Some(outcome.status);
        match outcome.artifact {
            Some(a) => {
                let report = validate_artifact_layout(&a, &self.env.profile);
                self.summary.layout_valid = report.is_valid();
                self.artifact = Some(a);
                Ok(())
            }
            None => {
                let why = outcome.failure.unwrap_or_else(|| "no artifact".into());
                Err(self.fail(format!("generation {}: {why}", serde_json::to_string(&outcome.status).unwrap_or_default())))
            }
        }
    }

    /// Function summary plus basic and functionality tests.
    pub fn prepare_tests(&mut self) -> Result<(), PipelineError> {
        self.emitter.enter(Stage::AutoDebugging);
        self.gw.begin_stage(LedgerPhase::TestGen);
        let ctx = self.env.testgen();
        let summary = summarize_function_list(&ctx, &mut self.gw);
        if summary.functions.is_empty() {
            self.summary.function_warnings = summary.warnings;
            return Err(self.fail("no device functions identified".into()));
        }
        let mut tests = generate_basic_tests(&ctx, &mut self.gw, &summary.functions, &mut self.ids);
        tests.extend(generate_functionality_tests(&ctx, &mut self.gw, &summary.functions, &mut self.ids));
        self.summary.functions = summary.functions;
        self.summary.function_warnings = summary.warnings;
        self.summary.tests = tests;
        Ok(())
    }

    fn ensure_device(&mut self) -> Result<String, PipelineError> {
        if let Some(d) = &self.device {
            return Ok(d.endpoint());
        }
        let dev = build_virtual_device(self.summary.functions.clone(), self.env.config.dummy_values.clone())
            .map_err(|e| self.fail(format!("virtual device: {e}")))?;
        let handle = serve(Arc::new(Mutex::new(dev)), &self.env.config.device).map_err(|e| self.fail(format!("virtual device: {e}")))?;
        let endpoint = handle.endpoint();
        tracing::info!(%endpoint, "virtual device listening");
        self.device = Some(handle);
        Ok(endpoint)
    }

    /// Runs the suite against the virtual device, repairing failures
    /// unless auto-debugging is disabled.
    pub fn debug(&mut self) -> Result<(), PipelineError> {
        let Some(artifact) = self.artifact.clone() else {
            return Err(PipelineError::Precondition("nothing generated yet".into()));
        };
        self.emitter.enter(Stage::AutoDebugging);
        let endpoint = self.ensure_device()?;
        let mut inner = SandboxRunner { profile: &self.env.profile, device_endpoint: endpoint };
        let emitter = self.emitter.clone();
        let mut runner = |a: &IntegrationArtifact, t: &TestCase| {
            let r = inner.run(a, t);
            emitter.emit(PipelineEvent::TestExecuted { test_id: r.test_id.clone(), revision: a.revision, verdict: r.verdict });
            r
        };
        let tests = &self.summary.tests;
        let (artifact, results, report) = if self.env.config.auto_debug_enabled {
            let ctx = self.env.ctx();
            let (a, report) = auto_debug(artifact, tests, &mut runner, &ctx, &mut self.gw, &self.env.config.autodebug, &mut self.tracer);
            (a, report.results.clone(), Some(report))
        } else {
            let results = tests.iter().map(|t| runner(&artifact, t)).collect();
            (artifact, results, None)
        };
        let passed = |id: &str| results.iter().any(|r| r.test_id == id && r.passed());
        let basics_pass = tests
            .iter()
            .filter(|t| t.category != TestCategory::Functionality)
            .all(|t| passed(&t.test_id));
        self.summary.layout_valid = validate_artifact_layout(&artifact, &self.env.profile).is_valid();
        self.summary.usable = self.summary.layout_valid && basics_pass;
        self.summary.results = results;
        self.summary.debug = report;
        self.artifact = Some(artifact);
        Ok(())
    }

    /// Ingest through auto-debugging; leaves the run awaiting HIL.
    pub fn run(&mut self) -> Result<(), PipelineError> {
        self.ingest()?;
        self.generate()?;
        self.prepare_tests()?;
        self.debug()?;
        self.emitter.enter(Stage::AwaitingHil);
        Ok(())
    }

    /// Adapter driving the artifact against the configured HIL endpoint,
    /// or the virtual device when none is configured.
    pub fn hil_adapter(&mut self) -> Result<ArtifactAdapter, PipelineError> {
        let endpoint = match self.env.config.hil_endpoint.clone() {
            Some(e) => e,
            None => self.ensure_device()?,
        };
        Ok(ArtifactAdapter::new(self.env.profile.clone(), endpoint))
    }

    /// Verifies functions one at a time with `responder`. A checkpoint
    /// file that already exists is resumed rather than restarted.
    pub fn run_hil(
        &mut self,
        adapter: &mut dyn DeviceAdapter,
        responder: &mut dyn Responder,
        checkpoint: Option<&Path>,
    ) -> Result<HilSummary, PipelineError> {
        let mut session = match (checkpoint, self.hil.take()) {
            (_, Some(s)) if !s.status.is_terminal() => s,
            (Some(p), _) if p.is_file() => HilSession::restore(p)?,
            _ => {
                let artifact = self.artifact.clone().ok_or_else(|| PipelineError::Precondition("nothing generated yet".into()))?;
                let id = format!("hil-{}", self.env.task.fingerprint());
                let s = HilSession::start(id, artifact, self.summary.functions.clone(), adapter)?;
                match checkpoint {
                    Some(p) => s.with_checkpoint(p)?,
                    None => s,
                }
            }
        };
        self.emitter.enter(Stage::HilRunning);
        let ctx = self.env.ctx();
        let mut agent = LlmHilAgent::new(ctx, &mut self.gw, &self.env.config.hil, &mut self.tracer);
        let emitter = &self.emitter;
        let mut seen = session.transcript.len();
        let flush = |s: &HilSession, seen: &mut usize| {
            // the stage changes before the probe goes out
            if s.status == HilStatus::AwaitingFeedback {
                emitter.enter(Stage::AwaitingHil);
            }
            for e in &s.transcript[*seen..] {
                emitter.emit(PipelineEvent::Hil { event: e.clone() });
            }
            *seen = s.transcript.len();
        };
        let result = loop {
            let step = match session.status {
                HilStatus::Running => session.next_probe(adapter, &mut agent).map(drop),
                HilStatus::AwaitingFeedback => {
                    let probe: Probe = session.outstanding.clone().expect("awaiting feedback implies a probe");
                    flush(&session, &mut seen);
                    emitter.enter(Stage::AwaitingHil);
                    match responder.answer(&probe) {
                        Some(a) => {
                            emitter.enter(Stage::HilRunning);
                            session.submit_feedback(a, &mut agent)
                        }
                        None => Err(crate::hil::HilError::NoAnswer(probe.function_id)),
                    }
                }
                _ => break Ok(()),
            };
            flush(&session, &mut seen);
            if let Err(e) = step {
                break Err(e);
            }
        };
        flush(&session, &mut seen);
        self.artifact = Some(session.artifact.clone());
        let summary = HilSummary::from(&session);
        self.hil = Some(session);
        result?;
        Ok(summary)
    }

    /// Marks the run done unless it already failed.
    pub fn finish(&mut self) -> RunSummary {
        if self.stage() != Some(Stage::Failed) {
            self.emitter.enter(Stage::Done);
            self.emitter.emit(PipelineEvent::Finished {
                stage: Stage::Done,
                usable: self.summary.usable,
                failure: self.summary.failure.clone(),
            });
        }
        self.summary()
    }

    /// Writes the artifact, tests, summary, ledger and trace under `out`.
    pub fn export(&self, out: &Path) -> Result<(), PipelineError> {
        let io = |e: std::io::Error| PipelineError::Stage(format!("{}: {e}", out.display()));
        fs::create_dir_all(out).map_err(io)?;
        if let Some(a) = &self.artifact {
            a.export(&out.join("artifact")).map_err(|e| PipelineError::Stage(e.to_string()))?;
        }
        let tests = out.join("tests");
        fs::create_dir_all(&tests).map_err(io)?;
        for t in &self.summary.tests {
            fs::write(tests.join(format!("{}.py", t.test_id)), &t.body).map_err(io)?;
        }
        let summary = serde_json::to_string_pretty(&self.summary()).map_err(|e| PipelineError::Stage(e.to_string()))?;
        fs::write(out.join("summary.json"), summary).map_err(io)?;
        let ledger = serde_json::to_string_pretty(self.gw.ledger().entries()).map_err(|e| PipelineError::Stage(e.to_string()))?;
        fs::write(out.join("ledger.json"), ledger).map_err(io)?;
        self.tracer.write_jsonl(&out.join("trace.jsonl")).map_err(io)
    }

    /// Bench record. Correct functions are the HIL-verified ones when HIL
    /// completed, otherwise those whose functionality test passed.
    pub fn run_record(&self, run_index: u32, wall_time_ms: u64) -> RunRecord {
        let s = self.summary();
        let total = s.functions.len() as u32;
        let correct = match &self.hil {
            Some(h) if matches!(h.status, HilStatus::CompletedAllVerified | HilStatus::CompletedWithFailures) => {
                total - h.failed.len() as u32
            }
            _ => s
                .tests
                .iter()
                .filter(|t| t.category == TestCategory::Functionality)
                .filter(|t| s.results.iter().any(|r| r.test_id == t.test_id && r.passed()))
                .count() as u32,
        };
        RunRecord {
            task: format!("{} {}", s.task.device_brand, s.task.device_model),
            platform_id: s.task.platform_id.clone(),
            run_index,
            usable: s.usable,
            functions_total: total,
            functions_correct: s.usable.then_some(correct),
            no_feedback_total: s.hil.as_ref().map_or(0, |h| h.total_no),
            ledger: s.ledger,
            wall_time_ms,
            metrics_version: METRICS_VERSION,
        }
    }
}

/// Stand-in for a person watching the device: answers "yes" when the
/// device logged a call to the probed function since the last answer.
pub struct CallLogObserver {
    device: SharedDevice,
    seen: usize,
}

impl CallLogObserver {
    pub fn new(device: SharedDevice) -> Self {
        let seen = device.lock().map(|d| d.call_log().len()).unwrap_or(0);
        Self { device, seen }
    }
}

impl Responder for CallLogObserver {
    fn answer(&mut self, probe: &Probe) -> Option<Answer> {
        let dev = self.device.lock().ok()?;
        let log = dev.call_log();
        let hit = log[self.seen.min(log.len())..].iter().any(|c| c.function_id == probe.function_id);
        self.seen = log.len();
        Some(if hit { Answer::Yes } else { Answer::No })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_round_trip() {
        for s in [Stage::Ingesting, Stage::AwaitingHil, Stage::Failed] {
            assert_eq!(Stage::parse(s.as_str()), Some(s));
            assert_eq!(serde_json::to_value(s).unwrap(), serde_json::json!(s.as_str()));
        }
        assert_eq!(Stage::parse("queued"), None);
    }

    #[test]
    fn events_are_tagged() {
        let e = PipelineEvent::Stage { stage: Stage::Done };
        assert_eq!(serde_json::to_value(&e).unwrap(), serde_json::json!({"type": "stage", "stage": "done"}));
    }
}
