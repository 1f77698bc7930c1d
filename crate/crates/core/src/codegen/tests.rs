use serde_json::json;

use super::*;
use crate::knowledge::{ChunkingConfig, Embedders, KnowledgeStore, LeakageDenylist};
use crate::llm::{Role, ScriptEntry, ScriptedProvider, ScriptedResponse, TokenKind, ToolCall};
use crate::model::{sample_profile, LogicalClock};

fn call(pattern: &str, name: &str, args: serde_json::Value) -> ScriptEntry {
    ScriptEntry::new(pattern, ScriptedResponse::ToolCall(ToolCall::new(name, args))).unwrap()
}

fn stores() -> (KnowledgeStore, KnowledgeStore) {
    let cfg = ChunkingConfig::default();
    let mut device = KnowledgeStore::empty("device", Embedders::offline()).unwrap();
    for (i, t) in [
        "The TH-100 answers JSON lines on TCP. Send function_id update to read temperature.",
        "Send function_id transmit to push a reading to the cloud.",
        "Battery: two AAA cells.",
        "Display shows temperature and humidity.",
        "Pairing: hold the button three seconds.",
        "Reset: hold the button ten seconds.",
    ]
    .iter()
    .enumerate()
    {
        device.add_text(&format!("manual#{i}"), t, ContentKind::Prose, cfg).unwrap();
    }
    device.add_text("repo#0", "def update(link):\n    return link.call('update')\n", ContentKind::Code, cfg).unwrap();
    let mut platform = KnowledgeStore::empty("platform", Embedders::offline()).unwrap();
    for (i, t) in [
        "A sensor entity subclasses SensorEntity and implements update().",
        "Every integration ships manifest.json with domain, name, and version.",
        "setup_entry(hass, entry) is called once per config entry.",
        "Switch entities implement turn_on and turn_off.",
        "Button entities implement press.",
        "Entity kinds: sensor, switch, button.",
    ]
    .iter()
    .enumerate()
    {
        platform.add_text(&format!("docs#{i}"), t, ContentKind::Prose, cfg).unwrap();
    }
    platform.add_text("docs#code", "class S(SensorEntity):\n    def update(self): ...\n", ContentKind::Code, cfg).unwrap();
    (device, platform)
}

fn happy_script() -> Vec<ScriptEntry> {
    vec![
        call("^Phase: device_control", SEARCH_DEVICE_DB, json!({"query": "read temperature command", "k": 2})),
        call(r"^Observation\[search_device_db\]", WRITE_FILE, json!({"path": "device.py", "content": "class Th:\n    pass\n"})),
        call(r"^Observation\[write_file\]: device.py", FINISH_PHASE, json!({})),
        call("^Phase: integration", SEARCH_PLATFORM_DB, json!({"query": "sensor entity", "k": 2})),
        call(r"^Observation\[search_platform_db\]", WRITE_FILE, json!({"path": "manifest.json", "content": "{\"domain\": \"th\", \"name\": \"TH\", \"version\": \"1\"}"})),
        call(r"^Observation\[write_file\]: manifest.json", WRITE_FILE, json!({"path": "sensor.py", "content": "# sensor\n"})),
        call(r"^Observation\[write_file\]: sensor.py", FINISH_PHASE, json!({"summary": "done"})),
    ]
}

struct Fixture {
    task: IntegrationTask,
    profile: PlatformProfile,
    device: KnowledgeStore,
    platform: KnowledgeStore,
    deny: LeakageDenylist,
    prompts: PromptSet,
    clock: LogicalClock,
}

impl Fixture {
    fn new() -> Self {
        let (device, platform) = stores();
        Self {
            task: IntegrationTask::new("Acme", "TH-100", "toyhome").unwrap(),
            profile: sample_profile(),
            device,
            platform,
            deny: LeakageDenylist::default(),
            prompts: PromptSet::default(),
            clock: LogicalClock::starting_at(1_000),
        }
    }

    fn ctx(&self) -> GenerationContext<'_> {
        GenerationContext {
            task: &self.task,
            profile: &self.profile,
            tools: KnowledgeTools { device: Some(&self.device), platform: Some(&self.platform), web: None, denylist: &self.deny },
            prompts: &self.prompts,
            clock: &self.clock,
        }
    }

    fn run(&self, script: Vec<ScriptEntry>, config: &CodegenConfig) -> (GenerationOutcome, Gateway) {
        let mut gw = Gateway::new(Box::new(ScriptedProvider::new(script)));
        let out = run_generation(&self.ctx(), &mut gw, config, &mut Tracer::new()).unwrap();
        (out, gw)
    }
}

fn tool_calls(transcript: &[ChatMessage]) -> Vec<&str> {
    transcript.iter().filter_map(|m| m.tool_call.as_ref().map(|c| c.name.as_str())).collect()
}

#[test]
fn happy_path_produces_layout_valid_artifact() {
    let fx = Fixture::new();
    let (out, _) = fx.run(happy_script(), &CodegenConfig::default());
    assert_eq!(out.status, GenerationStatus::Succeeded, "{:?}", out.failure);
    let art = out.artifact.as_ref().unwrap();
    assert!(art.files.contains_key("manifest.json") && art.files.contains_key("sensor.py"));
    assert!(art.files.contains_key("device.py"));
    assert!(validate_artifact_layout(art, &fx.profile).is_valid());

    let boundary = out.phase_boundary.unwrap();
    let (phase1, phase2) = out.transcript.split_at(boundary + 1);
    assert!(tool_calls(phase1).contains(&SEARCH_DEVICE_DB));
    assert!(!tool_calls(phase1).contains(&SEARCH_PLATFORM_DB));
    assert!(phase1.iter().all(|m| !m.content.starts_with("Phase: integration")));
    assert!(phase2[0].content.starts_with("Phase: integration"));
    assert!(phase2[0].content.contains("device.py"), "phase 2 sees phase-1 files");
}

#[test]
fn retrieval_is_attributed_to_the_active_phase() {
    let fx = Fixture::new();
    let (_, gw) = fx.run(happy_script(), &CodegenConfig::default());
    let retrieved: Vec<_> = gw.ledger().entries().iter().filter(|e| e.kind == TokenKind::RetrievedKnowledge).collect();
    assert_eq!(retrieved.len(), 2);
    assert_eq!(retrieved[0].phase, LedgerPhase::DeviceControlCodegen);
    assert_eq!(retrieved[1].phase, LedgerPhase::IntegrationCodegen);
}

#[test]
fn zero_step_budget_exhausts_without_calling_provider() {
    let fx = Fixture::new();
    let cfg = CodegenConfig { step_budget: 0, ..Default::default() };
    let (out, gw) = fx.run(happy_script(), &cfg);
    assert_eq!(out.status, GenerationStatus::BudgetExhausted);
    assert!(out.artifact.is_none());
    assert!(gw.ledger().is_empty());
}

#[test]
fn platform_search_in_phase_one_is_refused_and_counted() {
    let fx = Fixture::new();
    let mut script = vec![call("^Phase: device_control", SEARCH_PLATFORM_DB, json!({"query": "FanEntity methods", "k": 5}))];
    script.extend(happy_script().into_iter().skip(1).take(2));
    script.insert(1, call(r"^Observation\[search_platform_db\]", WRITE_FILE, json!({"path": "device.py", "content": "x"})));
    let (out, gw) = fx.run(script, &CodegenConfig::default());
    let obs = out
        .transcript
        .iter()
        .find(|m| m.role == Role::Tool && m.content.starts_with("Observation[search_platform_db]"))
        .unwrap();
    assert!(obs.content.contains("tool not available in this phase"));
    // refused call retrieves nothing
    assert_eq!(gw.ledger().total_of(TokenKind::RetrievedKnowledge), 0);
}

#[test]
fn write_file_replaces_prior_content() {
    let fx = Fixture::new();
    let mut state = ReactState::new("sys".into(), 5, RetrievalMode::Progressive);
    state.transcript.push(ChatMessage::user("Phase: device_control"));
    let script = vec![
        call("device_control", WRITE_FILE, json!({"path": "device.py", "content": "v1"})),
        call("device.py", WRITE_FILE, json!({"path": "device.py", "content": "v2"})),
        call("device.py", WRITE_FILE, json!({"path": "../escape.py", "content": "v3"})),
    ];
    let mut gw = Gateway::new(Box::new(ScriptedProvider::new(script)));
    let cfg = CodegenConfig::default();
    let mut tr = Tracer::new();
    assert_eq!(react_step(&mut state, &mut gw, &fx.ctx(), &cfg, &mut tr).unwrap(), StepEffect::FileWritten("device.py".into()));
    react_step(&mut state, &mut gw, &fx.ctx(), &cfg, &mut tr).unwrap();
    assert_eq!(state.working_files["device.py"], "v2");
    assert!(matches!(react_step(&mut state, &mut gw, &fx.ctx(), &cfg, &mut tr).unwrap(), StepEffect::Rejected(_)));
    assert_eq!(state.steps_taken, 3);
    assert_eq!(state.working_files.len(), 1);
}

#[test]
fn persistent_layout_violation_fails_after_repairs() {
    let fx = Fixture::new();
    let mut script = happy_script();
    script.truncate(4);
    // writes a stray file, then keeps finishing
    script.push(call(r"^Observation\[search_platform_db\]", WRITE_FILE, json!({"path": "stray.txt", "content": "x"})));
    for _ in 0..5 {
        script.push(call(r"^Observation\[(write_file|finish_phase)\]", FINISH_PHASE, json!({})));
    }
    let (out, _) = fx.run(script, &CodegenConfig::default());
    assert_eq!(out.status, GenerationStatus::ProviderFailed);
    assert!(out.artifact.is_none());
    let rejections = out.transcript.iter().filter(|m| m.content.contains("layout violations")).count();
    assert_eq!(rejections, 3);
}

#[test]
fn exhausted_script_is_provider_failure() {
    let fx = Fixture::new();
    let mut script = happy_script();
    script.truncate(3);
    let (out, _) = fx.run(script, &CodegenConfig::default());
    assert_eq!(out.status, GenerationStatus::ProviderFailed);
    assert!(out.failure.unwrap().contains("fixture"));
}

#[test]
fn empty_platform_store_fails_fast() {
    let fx = Fixture::new();
    let empty = KnowledgeStore::empty("platform", Embedders::offline()).unwrap();
    let mut ctx = fx.ctx();
    ctx.tools.platform = Some(&empty);
    let mut gw = Gateway::new(Box::new(ScriptedProvider::new(happy_script())));
    assert!(matches!(
        run_generation(&ctx, &mut gw, &CodegenConfig::default(), &mut Tracer::new()),
        Err(CodegenError::Precondition(_))
    ));
    ctx.tools.platform = None;
    assert!(run_generation(&ctx, &mut gw, &CodegenConfig::default(), &mut Tracer::new()).is_err());
    assert!(gw.ledger().is_empty());
}

#[test]
fn fixed_mode_retrieves_more_than_progressive() {
    let fx = Fixture::new();
    let (progressive, pg) = fx.run(happy_script(), &CodegenConfig::default());
    let cfg = CodegenConfig { retrieval_mode: RetrievalMode::FixedOneTime, ..Default::default() };
    let (fixed, fg) = fx.run(happy_script(), &cfg);
    assert_eq!(progressive.status, GenerationStatus::Succeeded);
    assert_eq!(fixed.status, GenerationStatus::Succeeded, "{:?}", fixed.failure);
    let p = pg.ledger().total_of(TokenKind::RetrievedKnowledge);
    let f = fg.ledger().total_of(TokenKind::RetrievedKnowledge);
    assert!(p < f, "progressive {p} vs fixed {f}");
    // 4 queries per store, one ledger entry each
    let entries = fg.ledger().entries().iter().filter(|e| e.kind == TokenKind::RetrievedKnowledge).count();
    assert_eq!(entries, 8);
}

#[test]
fn generation_is_deterministic() {
    let fx = Fixture::new();
    let (a, _) = fx.run(happy_script(), &CodegenConfig::default());
    let fx2 = Fixture::new();
    let (b, _) = fx2.run(happy_script(), &CodegenConfig::default());
    assert_eq!(a, b);
}
