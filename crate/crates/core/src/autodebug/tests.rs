use std::collections::BTreeMap;
use std::time::Duration;

use proptest::prelude::*;
use serde_json::json;

use super::*;
use crate::harness::{TestCategory, TestOrigin};
use crate::knowledge::{ChunkingConfig, ContentKind, Embedders, KnowledgeStore, KnowledgeTools, LeakageDenylist};
use crate::llm::{ChatProvider, ScriptEntry, ScriptedProvider, ScriptedResponse, ToolCall, ToolSchema};
use crate::model::{sample_profile, IntegrationTask, LogicalClock, PlatformProfile};
use crate::prompts::PromptSet;

// A test body is `assert '<needle>' in <path>`; it passes iff the file
// contains the needle.
fn body(path: &str, needle: &str) -> String {
    format!("# checks {path}\nassert '{needle}' in {path}\n")
}

fn fake_run(artifact: &IntegrationArtifact, test: &TestCase) -> TestResult {
    let line = test.body.lines().find(|l| l.starts_with("assert")).unwrap();
    let (needle, path) = line.trim_start_matches("assert '").split_once("' in ").unwrap();
    let ok = artifact.files.get(path).is_some_and(|c| c.contains(needle));
    TestResult {
        test_id: test.test_id.clone(),
        verdict: if ok { Verdict::Passed } else { Verdict::Failed },
        diagnostics: if ok { String::new() } else { format!("assertion failed: {needle} not in {path}") },
        duration: Duration::from_millis(1),
    }
}

fn case(id: &str, path: &str, needle: &str) -> TestCase {
    TestCase {
        test_id: id.into(),
        category: TestCategory::Functionality,
        target_function: Some(id.into()),
        body: body(path, needle),
        origin: TestOrigin::LlmGenerated,
    }
}

fn artifact(switch: &str) -> IntegrationArtifact {
    let mut files = BTreeMap::new();
    files.insert("manifest.json".into(), r#"{"domain": "d", "name": "n", "version": "1"}"#.into());
    files.insert("switch.py".into(), switch.into());
    IntegrationArtifact::new("a", "manifest.json", files, 0)
}

fn rewrite(pattern: &str, path: &str, content: &str) -> ScriptEntry {
    ScriptEntry::new(pattern, ScriptedResponse::ToolCall(ToolCall::new(REWRITE, json!({"files": {path: content}})))).unwrap()
}

const REWRITE: &str = crate::agent::REWRITE_FILES;

struct Env {
    task: IntegrationTask,
    profile: PlatformProfile,
    store: KnowledgeStore,
    deny: LeakageDenylist,
    prompts: PromptSet,
    clock: LogicalClock,
}

impl Env {
    fn new() -> Self {
        let mut store = KnowledgeStore::empty("platform", Embedders::offline()).unwrap();
        store
            .add_text("docs#switch", "Switch entities implement turn_on and turn_off.", ContentKind::Prose, ChunkingConfig::default())
            .unwrap();
        Self {
            task: IntegrationTask::new("Acme", "Lamp", "toyhome").unwrap(),
            profile: sample_profile(),
            store,
            deny: LeakageDenylist::default(),
            prompts: PromptSet::default(),
            clock: LogicalClock::starting_at(10),
        }
    }

    fn ctx(&self) -> GenerationContext<'_> {
        GenerationContext {
            task: &self.task,
            profile: &self.profile,
            tools: KnowledgeTools { device: Some(&self.store), platform: Some(&self.store), web: None, denylist: &self.deny },
            prompts: &self.prompts,
            clock: &self.clock,
        }
    }

    fn debug(
        &self,
        art: IntegrationArtifact,
        tests: &[TestCase],
        provider: Box<dyn ChatProvider>,
        config: &AutoDebugConfig,
    ) -> (IntegrationArtifact, DebugReport) {
        let mut gw = Gateway::new(provider);
        let mut runner = fake_run;
        auto_debug(art, tests, &mut runner, &self.ctx(), &mut gw, config, &mut Tracer::new())
    }
}

fn five_tests() -> Vec<TestCase> {
    vec![
        case("t01", "switch.py", "class"),
        case("t02", "switch.py", "turn_on"),
        case("t03", "manifest.json", "domain"),
        case("t04", "switch.py", "color_temp_kelvin"),
        case("t05", "switch.py", "turn_off"),
    ]
}

const GOOD: &str = "class Lamp:\n    def turn_on(self): ...\n    def turn_off(self): ...\n    color_temp_kelvin = 2700\n";
const NO_COLOR: &str = "class Lamp:\n    def turn_on(self): ...\n    def turn_off(self): ...\n    color_temp = 27\n";

#[test]
fn all_passing_leaves_artifact_untouched() {
    let env = Env::new();
    let (art, report) = env.debug(artifact(GOOD), &five_tests(), Box::new(ScriptedProvider::new(vec![])), &Default::default());
    assert_eq!(art.revision, 0);
    assert_eq!(report.revisions_made, 0);
    assert!(report.outcomes.iter().all(|o| o.classification == Classification::AlreadyPassing && o.attempts == 0));
    assert_eq!(report.executions.len(), 5, "no confirmation pass without rewrites");
    assert!(report.all_green());
}

#[test]
fn failing_fourth_test_is_fixed_and_only_it_is_rerun() {
    let env = Env::new();
    let script = vec![rewrite(r"^Task: repair_failing_test\nTest: t04", "switch.py", GOOD)];
    let (art, report) = env.debug(artifact(NO_COLOR), &five_tests(), Box::new(ScriptedProvider::new(script)), &Default::default());
    assert_eq!(art.revision, 1);
    assert_eq!(art.provenance.last().unwrap().cause, RevisionCause::AutoDebugFix);
    let t4 = report.outcome("t04").unwrap();
    assert_eq!((t4.classification, t4.attempts, t4.final_verdict), (Classification::Fixed, 1, Some(Verdict::Passed)));
    assert_eq!(report.rerun_set(), BTreeSet::from(["t04"]));

    // between the failure of t04 and the end of the sequential pass, only
    // t04 (re-run) and t05 execute
    let sequential: Vec<_> = report
        .executions
        .iter()
        .filter(|e| e.pass != RunPass::Confirmation)
        .map(|e| (e.test_id.as_str(), e.pass))
        .collect();
    assert_eq!(
        sequential,
        vec![
            ("t01", RunPass::Initial),
            ("t02", RunPass::Initial),
            ("t03", RunPass::Initial),
            ("t04", RunPass::Initial),
            ("t04", RunPass::Rerun),
            ("t05", RunPass::Initial),
        ]
    );
    let confirmed = report.executions.iter().filter(|e| e.pass == RunPass::Confirmation).count();
    assert_eq!(confirmed, 5);
    assert!(report.all_green());
}

/// Always answers with the same tool call.
struct Always(ToolCall);

impl ChatProvider for Always {
    fn complete(&mut self, _: &[ChatMessage], _: &[ToolSchema], _: Duration) -> Result<ChatMessage, LlmError> {
        Ok(ChatMessage::assistant_tool(self.0.clone()))
    }
}

#[test]
fn never_fixing_provider_hits_the_attempt_cap() {
    let env = Env::new();
    let useless = ToolCall::new(REWRITE, json!({"files": {"switch.py": NO_COLOR}}));
    let (art, report) = env.debug(artifact(NO_COLOR), &five_tests(), Box::new(Always(useless)), &Default::default());
    let t4 = report.outcome("t04").unwrap();
    assert_eq!((t4.classification, t4.attempts), (Classification::Unfixable, 8));
    assert_eq!(art.revision, 8, "each accepted rewrite is a revision, even a useless one");
    let t4_runs = report.executions.iter().filter(|e| e.test_id == "t04" && e.pass != RunPass::Confirmation).count();
    assert_eq!(t4_runs, 9);
    assert!(!report.all_green());
}

#[test]
fn searching_forever_uses_attempts_without_reruns() {
    let env = Env::new();
    let search = ToolCall::new(crate::agent::SEARCH_PLATFORM_DB, json!({"query": "switch"}));
    let cfg = AutoDebugConfig { max_attempts: 3, max_steps_per_attempt: 2, ..Default::default() };
    let (art, report) = env.debug(artifact(NO_COLOR), &five_tests(), Box::new(Always(search)), &cfg);
    assert_eq!(art.revision, 0);
    assert_eq!(report.outcome("t04").unwrap().attempts, 3);
    assert!(report.rerun_set().is_empty());
}

#[test]
fn defective_verdict_needs_the_assertion_line() {
    let env = Env::new();
    let mark = |j: &str| {
        ScriptEntry::new(
            "Test: t04|^Observation",
            ScriptedResponse::ToolCall(ToolCall::new(crate::agent::MARK_TEST_DEFECTIVE, json!({"justification": j}))),
        )
        .unwrap()
    };
    let script = vec![mark("the test is wrong"), mark("`assert 'color_temp_kelvin' in switch.py` checks a name the platform does not use")];
    let (art, report) = env.debug(artifact(NO_COLOR), &five_tests(), Box::new(ScriptedProvider::new(script)), &Default::default());
    let t4 = report.outcome("t04").unwrap();
    assert_eq!(t4.classification, Classification::TestDefective);
    assert!(t4.justification.as_deref().unwrap().contains("assert 'color_temp_kelvin'"));
    assert_eq!(art.revision, 0);
    assert_eq!(report.outcome("t05").unwrap().classification, Classification::AlreadyPassing);
    assert!(report.all_green());
}

#[test]
fn provider_failure_marks_the_rest_not_run() {
    let env = Env::new();
    let mut tests = five_tests();
    tests[1] = case("t02", "switch.py", "missing_method");
    let (_, report) = env.debug(artifact(GOOD), &tests, Box::new(ScriptedProvider::new(vec![])), &Default::default());
    assert!(report.failure.as_deref().unwrap().contains("fixture exhausted"));
    let classes: Vec<_> = report.outcomes.iter().map(|o| o.classification).collect();
    assert_eq!(
        classes,
        vec![
            Classification::AlreadyPassing,
            Classification::Unfixable,
            Classification::NotRun,
            Classification::NotRun,
            Classification::NotRun
        ]
    );
    assert_eq!(report.executions.len(), 2);
}

#[test]
fn rejected_rewrite_leaves_revision_unchanged() {
    let env = Env::new();
    let script = vec![
        rewrite("Test: t04", "../escape.py", "x"),
        rewrite(r"^Observation\[rewrite_files\]: error", "random_name.py", "x"),
        rewrite(r"^Observation\[rewrite_files\]: error", "switch.py", GOOD),
    ];
    let (art, report) = env.debug(artifact(NO_COLOR), &five_tests(), Box::new(ScriptedProvider::new(script)), &Default::default());
    assert_eq!(art.revision, 1);
    assert!(!art.files.contains_key("random_name.py"));
    assert_eq!(report.outcome("t04").unwrap().attempts, 1);
    assert_eq!(report.revisions_made, 1);
}

#[test]
fn regression_is_repaired_once_after_confirmation() {
    let env = Env::new();
    // the fix for t04 drops turn_on, which t02 needs
    let broke = "class Lamp:\n    def turn_off(self): ...\n    color_temp_kelvin = 2700\n";
    let script = vec![
        rewrite("Test: t04", "switch.py", broke),
        rewrite("Test: t02", "switch.py", GOOD),
    ];
    let (art, report) = env.debug(artifact(NO_COLOR), &five_tests(), Box::new(ScriptedProvider::new(script)), &Default::default());
    assert_eq!(art.revision, 2);
    assert_eq!(report.outcome("t02").unwrap().classification, Classification::Fixed);
    assert_eq!(report.outcome("t04").unwrap().classification, Classification::Fixed);
    assert_eq!(report.rerun_set(), BTreeSet::from(["t02", "t04"]));
    assert!(report.all_green());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // Sequential passes never exceed |tests| × (A + 1) executions.
    #[test]
    fn executions_are_bounded(
        needles in proptest::collection::vec(prop_oneof!["class", "turn_on", "nothing_here", "zzz"], 1..8),
        attempts in 1u32..5,
    ) {
        let env = Env::new();
        let tests: Vec<_> = needles.iter().enumerate().map(|(i, n)| case(&format!("t{i}"), "switch.py", n)).collect();
        let useless = ToolCall::new(REWRITE, json!({"files": {"switch.py": GOOD}}));
        let cfg = AutoDebugConfig { max_attempts: attempts, ..Default::default() };
        let (_, report) = env.debug(artifact(GOOD), &tests, Box::new(Always(useless)), &cfg);
        let sequential = report.executions.iter().filter(|e| e.pass != RunPass::Confirmation).count();
        prop_assert!(sequential <= tests.len() * (attempts as usize + 1));
        for o in &report.outcomes {
            prop_assert!(o.attempts <= attempts);
        }
    }
}
