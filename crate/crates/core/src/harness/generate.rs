use std::collections::{BTreeMap, BTreeSet};

use serde_json::Value;

use super::{TestCase, TestCategory, TestOrigin};
use crate::agent::{self, EMIT_FUNCTIONS, EMIT_TESTS};
use crate::knowledge::{render_hits, ContentKind, KnowledgeTools};
use crate::llm::{ChatMessage, Gateway, LlmError, ProviderBudget};
use crate::model::{FunctionDescriptor, FunctionKind, IntegrationTask, PlatformProfile};
use crate::prompts::{render, PromptSet};

/// Hands out test ids that stay unique for a whole session, across
/// regenerations.
#[derive(Debug, Clone, Default)]
pub struct TestIdAllocator {
    next: u32,
}

impl TestIdAllocator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn next(&mut self, category: TestCategory, target: Option<&str>) -> String {
        self.next += 1;
        match target {
            Some(t) => format!("t{:02}-{}-{t}", self.next, category.as_str()),
            None => format!("t{:02}-{}", self.next, category.as_str()),
        }
    }
}

#[derive(Clone, Copy)]
pub struct TestGenContext<'a> {
    pub task: &'a IntegrationTask,
    pub profile: &'a PlatformProfile,
    pub tools: KnowledgeTools<'a>,
    pub prompts: &'a PromptSet,
    pub budget: &'a ProviderBudget,
}

impl TestGenContext<'_> {
    fn render(&self, template: &str, extra: &[(&str, &str)]) -> String {
        let mut vars = vec![
            ("device_brand", self.task.device_brand.as_str()),
            ("device_model", self.task.device_model.as_str()),
            ("platform", self.profile.name()),
        ];
        vars.extend_from_slice(extra);
        render(template, &vars)
    }
}

/// Renders a JSON value as a Python literal.
fn py_literal(v: &Value) -> String {
    match v {
        Value::Null => "None".into(),
        Value::Bool(true) => "True".into(),
        Value::Bool(false) => "False".into(),
        Value::Number(n) => n.to_string(),
        Value::String(s) => Value::String(s.clone()).to_string(),
        Value::Array(items) => format!("[{}]", items.iter().map(py_literal).collect::<Vec<_>>().join(", ")),
        Value::Object(map) => format!(
            "{{{}}}",
            map.iter()
                .map(|(k, v)| format!("{}: {}", Value::String(k.clone()), py_literal(v)))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    }
}

/// Fills a profile test template for `category`, bound to `function` when
/// one is given.
pub fn render_template_test(profile: &PlatformProfile, category: TestCategory, function: Option<&FunctionDescriptor>) -> String {
    let template = match category {
        TestCategory::Registration => &profile.tests.registration,
        TestCategory::ServiceInvocation => &profile.tests.service_invocation,
        TestCategory::ConfigEntry => &profile.tests.config_entry,
        TestCategory::Functionality => &profile.tests.functionality,
    };
    render_for_function(template, profile, function)
}

/// Fills the profile's actuation template for `function`.
pub fn render_actuation(profile: &PlatformProfile, function: &FunctionDescriptor) -> String {
    render_for_function(&profile.tests.actuation, profile, Some(function))
}

pub(crate) fn render_for_function(template: &str, profile: &PlatformProfile, function: Option<&FunctionDescriptor>) -> String {
    let Some(f) = function else {
        return template.to_string();
    };
    let binding = profile.binding(f.kind);
    let empty = Value::Object(Default::default());
    let name = f.display_name();
    let service_data = py_literal(binding.map(|b| &b.service_data).unwrap_or(&empty));
    let expected = py_literal(binding.map(|b| &b.expected_arguments).unwrap_or(&empty));
    render(
        template,
        &[
            ("function_id", &f.function_id),
            ("function_name", &name),
            ("function_kind", f.kind.as_str()),
            ("entity_kind", binding.map(|b| b.entity_kind.as_str()).unwrap_or("")),
            ("service", binding.map(|b| b.service.as_str()).unwrap_or("")),
            ("service_data", &service_data),
            ("expected_arguments", &expected),
        ],
    )
}

struct RawTest {
    category: TestCategory,
    target: Option<String>,
    body: String,
}

fn parse_emitted_tests(reply: &ChatMessage) -> Result<Vec<RawTest>, LlmError> {
    let call = reply
        .tool_call
        .as_ref()
        .filter(|c| c.name == EMIT_TESTS)
        .ok_or_else(|| LlmError::Malformed("expected an emit_tests call".into()))?;
    let items = call
        .arguments
        .get("tests")
        .and_then(Value::as_array)
        .ok_or_else(|| LlmError::Malformed("emit_tests without tests array".into()))?;
    Ok(items
        .iter()
        .filter_map(|t| {
            let category = TestCategory::parse(t.get("category")?.as_str()?)?;
            let body = t.get("body")?.as_str()?.to_string();
            if body.trim().is_empty() {
                return None;
            }
            let target = t.get("target_function").and_then(Value::as_str).map(str::to_string);
            Some(RawTest { category, target, body })
        })
        .collect())
}

fn ask(ctx: &TestGenContext<'_>, gw: &mut Gateway, user: String, tool: &str) -> Result<ChatMessage, LlmError> {
    let system = ctx.render(&ctx.prompts.testgen_system, &[]);
    gw.complete(&[ChatMessage::system(system), ChatMessage::user(user)], &agent::schemas(&[tool]), ctx.budget)
}

fn platform_reference(ctx: &TestGenContext<'_>, gw: &mut Gateway, query: &str) -> String {
    ctx.tools
        .search_platform_db(gw, query, 3, ContentKind::Prose)
        .map(|h| render_hits(&h))
        .unwrap_or_else(|e| format!("unavailable: {e}"))
}

/// At least one test per basic category. Provider output is used where
/// valid; missing categories (or a failed provider) fall back to templates.
pub fn generate_basic_tests(
    ctx: &TestGenContext<'_>,
    gw: &mut Gateway,
    functions: &[FunctionDescriptor],
    ids: &mut TestIdAllocator,
) -> Vec<TestCase> {
    let reference = platform_reference(ctx, gw, &format!("{} registration service call config entry test", ctx.profile.name()));
    let user = ctx.render(
        &ctx.prompts.testgen_basic,
        &[("domain", ctx.profile.platform_id.as_str()), ("sandbox_reference", &reference)],
    );
    let emitted = match ask(ctx, gw, user, EMIT_TESTS).and_then(|r| parse_emitted_tests(&r)) {
        Ok(t) => t,
        Err(e) => {
            tracing::warn!(error = %e, "basic test generation fell back to templates");
            Vec::new()
        }
    };
    let mut out = Vec::new();
    for raw in emitted.into_iter().filter(|t| t.category != TestCategory::Functionality) {
        out.push(TestCase {
            test_id: ids.next(raw.category, None),
            category: raw.category,
            target_function: None,
            body: raw.body,
            origin: TestOrigin::LlmGenerated,
        });
    }
    let first = functions.first();
    for category in TestCategory::BASIC {
        if !out.iter().any(|t| t.category == category) {
            out.push(TestCase {
                test_id: ids.next(category, None),
                category,
                target_function: None,
                body: render_template_test(ctx.profile, category, first),
                origin: TestOrigin::Template,
            });
        }
    }
    // declaration order: registration, service invocation, config entry
    out.sort_by_key(|t| t.category);
    out
}

/// Exactly one test per function, in function order.
pub fn generate_functionality_tests(
    ctx: &TestGenContext<'_>,
    gw: &mut Gateway,
    functions: &[FunctionDescriptor],
    ids: &mut TestIdAllocator,
) -> Vec<TestCase> {
    if functions.is_empty() {
        return Vec::new();
    }
    let listing: Vec<String> = functions
        .iter()
        .map(|f| {
            let b = ctx.profile.binding(f.kind);
            format!(
                "- {} ({}): {} via {}.{}",
                f.function_id,
                f.kind.as_str(),
                f.display_name(),
                b.map(|b| b.entity_kind.as_str()).unwrap_or("?"),
                b.map(|b| b.service.as_str()).unwrap_or("?")
            )
        })
        .collect();
    let user = ctx.render(
        &ctx.prompts.testgen_functionality,
        &[("domain", ctx.profile.platform_id.as_str()), ("functions", &listing.join("\n"))],
    );
    let emitted = match ask(ctx, gw, user, EMIT_TESTS).and_then(|r| parse_emitted_tests(&r)) {
        Ok(t) => t,
        Err(e) => {
            tracing::warn!(error = %e, "functionality test generation fell back to templates");
            Vec::new()
        }
    };
    let mut by_function: BTreeMap<String, String> = BTreeMap::new();
    for raw in emitted {
        if let (TestCategory::Functionality, Some(target)) = (raw.category, raw.target) {
            if functions.iter().any(|f| f.function_id == target) {
                by_function.entry(target).or_insert(raw.body);
            }
        }
    }
    functions
        .iter()
        .map(|f| {
            let (body, origin) = match by_function.remove(&f.function_id) {
                Some(b) => (b, TestOrigin::LlmGenerated),
                None => (render_template_test(ctx.profile, TestCategory::Functionality, Some(f)), TestOrigin::Template),
            };
            TestCase {
                test_id: ids.next(TestCategory::Functionality, Some(&f.function_id)),
                category: TestCategory::Functionality,
                target_function: Some(f.function_id.clone()),
                body,
                origin,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionSummary {
    pub functions: Vec<FunctionDescriptor>,
    pub warnings: Vec<String>,
}

fn slug(s: &str) -> String {
    let mut out = String::new();
    for word in s.split(|c: char| !c.is_ascii_alphanumeric()).filter(|w| !w.is_empty()) {
        if !out.is_empty() {
            out.push('_');
        }
        out.push_str(&word.to_ascii_lowercase());
    }
    out
}

fn guess_kind(phrase: &str) -> FunctionKind {
    let p = phrase.to_ascii_lowercase();
    let has = |words: &[&str]| words.iter().any(|w| p.contains(w));
    if has(&["on/off", "toggle", "switch", "enable", "disable", "power"]) {
        FunctionKind::BinaryToggle
    } else if has(&["stream", "camera", "video", "feed"]) {
        FunctionKind::ContinuousStream
    } else if has(&["speed", "level", "brightness", "volume", "timer", "setpoint", "set "]) {
        FunctionKind::RangedSetting
    } else if has(&["mode", "preset", "program"]) {
        FunctionKind::EnumeratedMode
    } else if has(&["sensor", "read", "measure", "temperature", "humidity", "status", "battery"]) {
        FunctionKind::SensorReadout
    } else {
        FunctionKind::UnaryCommand
    }
}

/// Best-effort function list from free text: one function per comma,
/// semicolon, "and", or line separated phrase.
pub fn functions_from_description(description: &str) -> Vec<FunctionDescriptor> {
    let normalized = description.replace(" and ", ",");
    let mut seen = BTreeSet::new();
    normalized
        .split([',', ';', '\n'])
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .filter_map(|phrase| {
            let id = slug(phrase);
            if id.is_empty() || !seen.insert(id.clone()) {
                return None;
            }
            Some(FunctionDescriptor::new(id, phrase, guess_kind(phrase)))
        })
        .collect()
}

fn parse_emitted_functions(reply: &ChatMessage) -> Result<Vec<FunctionDescriptor>, LlmError> {
    let call = reply
        .tool_call
        .as_ref()
        .filter(|c| c.name == EMIT_FUNCTIONS)
        .ok_or_else(|| LlmError::Malformed("expected an emit_functions call".into()))?;
    let items = call
        .arguments
        .get("functions")
        .and_then(Value::as_array)
        .ok_or_else(|| LlmError::Malformed("emit_functions without functions array".into()))?;
    Ok(items
        .iter()
        .filter_map(|item| {
            let id = slug(item.get("function_id")?.as_str()?);
            if id.is_empty() {
                return None;
            }
            let kind: FunctionKind = serde_json::from_value(item.get("kind")?.clone()).ok()?;
            let name = item.get("name").and_then(Value::as_str).unwrap_or(&id).to_string();
            let mut f = FunctionDescriptor::new(id, name, kind);
            if let Some(d) = item.get("description").and_then(Value::as_str) {
                f = f.with_description(d);
            }
            if let (Some(lo), Some(hi)) = (item.get("min").and_then(Value::as_f64), item.get("max").and_then(Value::as_f64)) {
                f = f.with_range(lo, hi);
            }
            if let Some(opts) = item.get("options").and_then(Value::as_array) {
                f = f.with_options(opts.iter().filter_map(Value::as_str));
            }
            f.constraints.unit = item.get("unit").and_then(Value::as_str).map(str::to_string);
            Some(f)
        })
        .collect())
}

fn dedup(functions: Vec<FunctionDescriptor>) -> Vec<FunctionDescriptor> {
    let mut ids = BTreeSet::new();
    let mut names = BTreeSet::new();
    functions
        .into_iter()
        .filter(|f| {
            let name = slug(&f.name);
            let fresh = !ids.contains(&f.function_id) && !names.contains(&name);
            ids.insert(f.function_id.clone());
            names.insert(name);
            fresh
        })
        .collect()
}

/// Deduplicated device function list. With an empty device store, or when
/// the provider fails, the task's own description is parsed instead.
pub fn summarize_function_list(ctx: &TestGenContext<'_>, gw: &mut Gateway) -> FunctionSummary {
    let mut warnings = Vec::new();
    let description = ctx.task.function_description.as_deref().unwrap_or("");
    let kb_empty = ctx.tools.device.is_none_or(|d| d.is_empty());
    if !kb_empty {
        let query = format!("{} {} functions features controls", ctx.task.device_brand, ctx.task.device_model);
        let knowledge = ctx
            .tools
            .search_device_db(gw, &query, 5, ContentKind::Prose)
            .map(|h| render_hits(&h))
            .unwrap_or_else(|e| format!("unavailable: {e}"));
        let kinds: Vec<&str> = FunctionKind::ALL.iter().map(|k| k.as_str()).collect();
        let user = ctx.render(
            &ctx.prompts.summarize,
            &[
                ("function_description", if description.is_empty() { "(none)" } else { description }),
                ("kinds", &kinds.join(", ")),
                ("knowledge", &knowledge),
            ],
        );
        let system = ctx.render(&ctx.prompts.testgen_system, &[]);
        let reply = gw.complete(
            &[ChatMessage::system(system), ChatMessage::user(user)],
            &agent::schemas(&[EMIT_FUNCTIONS]),
            ctx.budget,
        );
        match reply.and_then(|r| parse_emitted_functions(&r)) {
            Ok(fs) if !fs.is_empty() => return FunctionSummary { functions: dedup(fs), warnings },
            Ok(_) => warnings.push("provider returned no functions; using the task description".into()),
            Err(e) => warnings.push(format!("function summary failed ({e}); using the task description")),
        }
    }
    let functions = dedup(functions_from_description(description));
    if functions.is_empty() {
        warnings.push("no device functions identified".into());
    }
    FunctionSummary { functions, warnings }
}

#[cfg(test)]
mod tests {
    use serde_json::json;

    use super::*;
    use crate::knowledge::{ChunkingConfig, Embedders, KnowledgeStore, LeakageDenylist};
    use crate::llm::{ScriptEntry, ScriptedProvider, ScriptedResponse, ToolCall};
    use crate::model::sample_profile;

    fn offline() -> Gateway {
        Gateway::new(Box::new(ScriptedProvider::new(vec![])))
    }

    fn scripted(pattern: &str, name: &str, args: Value) -> Gateway {
        let e = ScriptEntry::new(pattern, ScriptedResponse::ToolCall(ToolCall::new(name, args))).unwrap();
        Gateway::new(Box::new(ScriptedProvider::new(vec![e])))
    }

    struct Fx {
        task: IntegrationTask,
        profile: PlatformProfile,
        deny: LeakageDenylist,
        prompts: PromptSet,
        budget: ProviderBudget,
        device: KnowledgeStore,
    }

    impl Fx {
        fn new() -> Self {
            let mut device = KnowledgeStore::empty("device", Embedders::offline()).unwrap();
            device
                .add_text("manual", "Night mode dims the display. Fan speed 1-10.", ContentKind::Prose, ChunkingConfig::default())
                .unwrap();
            let mut task = IntegrationTask::new("Acme", "Fan", "toyhome").unwrap();
            task.function_description = Some("on/off switch".into());
            Self {
                task,
                profile: sample_profile(),
                deny: LeakageDenylist::default(),
                prompts: PromptSet::default(),
                budget: ProviderBudget::default(),
                device,
            }
        }

        fn ctx(&self, with_kb: bool) -> TestGenContext<'_> {
            TestGenContext {
                task: &self.task,
                profile: &self.profile,
                tools: KnowledgeTools { device: with_kb.then_some(&self.device), platform: None, web: None, denylist: &self.deny },
                prompts: &self.prompts,
                budget: &self.budget,
            }
        }
    }

    fn six() -> Vec<FunctionDescriptor> {
        FunctionKind::ALL
            .iter()
            .enumerate()
            .map(|(i, k)| FunctionDescriptor::new(format!("f{i}"), format!("f {i}"), *k))
            .collect()
    }

    #[test]
    fn offline_basic_tests_cover_all_categories_from_templates() {
        let fx = Fx::new();
        let mut ids = TestIdAllocator::new();
        let tests = generate_basic_tests(&fx.ctx(false), &mut offline(), &six(), &mut ids);
        assert_eq!(tests.len(), 3);
        for c in TestCategory::BASIC {
            assert!(tests.iter().any(|t| t.category == c && t.origin == TestOrigin::Template));
        }
    }

    #[test]
    fn provider_tests_are_kept_and_gaps_filled() {
        let fx = Fx::new();
        let mut gw = scripted(
            "generate_basic_tests",
            EMIT_TESTS,
            json!({"tests": [
                {"category": "registration", "body": "assert registered"},
                {"category": "registration", "body": "assert listed"},
                {"category": "bogus", "body": "x"}
            ]}),
        );
        let mut ids = TestIdAllocator::new();
        let tests = generate_basic_tests(&fx.ctx(false), &mut gw, &six(), &mut ids);
        assert_eq!(tests.len(), 4);
        assert_eq!(tests.iter().filter(|t| t.origin == TestOrigin::LlmGenerated).count(), 2);
        assert_eq!(tests[0].category, TestCategory::Registration);
        assert_eq!(tests[3].category, TestCategory::ConfigEntry);
    }

    #[test]
    fn ids_stay_unique_across_regenerations() {
        let fx = Fx::new();
        let mut ids = TestIdAllocator::new();
        let mut all = Vec::new();
        for _ in 0..3 {
            all.extend(generate_basic_tests(&fx.ctx(false), &mut offline(), &six(), &mut ids));
            all.extend(generate_functionality_tests(&fx.ctx(false), &mut offline(), &six(), &mut ids));
        }
        let unique: BTreeSet<_> = all.iter().map(|t| &t.test_id).collect();
        assert_eq!(unique.len(), all.len());
    }

    #[test]
    fn one_functionality_test_per_function() {
        let fx = Fx::new();
        let mut ids = TestIdAllocator::new();
        let fs: Vec<_> = (0..11).map(|i| FunctionDescriptor::new(format!("g{i}"), "g", FunctionKind::BinaryToggle)).collect();
        let tests = generate_functionality_tests(&fx.ctx(false), &mut offline(), &fs, &mut ids);
        assert_eq!(tests.len(), 11);
        let targets: BTreeSet<_> = tests.iter().map(|t| t.target_function.clone().unwrap()).collect();
        assert_eq!(targets.len(), 11);
        assert!(tests.iter().all(|t| t.category == TestCategory::Functionality));
    }

    #[test]
    fn provider_functionality_tests_must_target_declared_functions() {
        let fx = Fx::new();
        let mut gw = scripted(
            "generate_functionality_tests",
            EMIT_TESTS,
            json!({"tests": [
                {"category": "functionality", "target_function": "f1", "body": "llm f1"},
                {"category": "functionality", "target_function": "f1", "body": "dup"},
                {"category": "functionality", "target_function": "ghost", "body": "x"}
            ]}),
        );
        let mut ids = TestIdAllocator::new();
        let tests = generate_functionality_tests(&fx.ctx(false), &mut gw, &six(), &mut ids);
        assert_eq!(tests.len(), 6);
        assert_eq!(tests[1].body, "llm f1");
        assert_eq!(tests[1].origin, TestOrigin::LlmGenerated);
        assert!(tests.iter().filter(|t| t.origin == TestOrigin::Template).count() == 5);
    }

    #[test]
    fn toggle_template_mentions_function_and_expected_on() {
        let p = sample_profile();
        let mut p = p;
        p.tests.functionality = "call({entity_kind}.{service}) expect {function_id} {expected_arguments}".into();
        let f = FunctionDescriptor::new("night_mode", "night mode", FunctionKind::BinaryToggle);
        let body = render_template_test(&p, TestCategory::Functionality, Some(&f));
        assert_eq!(body, "call(switch.turn_on) expect night_mode {\"value\": True}");
    }

    #[test]
    fn description_only_summary() {
        let fx = Fx::new();
        let s = summarize_function_list(&fx.ctx(false), &mut offline());
        assert_eq!(s.functions.len(), 1);
        assert_eq!(s.functions[0].function_id, "on_off_switch");
        assert_eq!(s.functions[0].kind, FunctionKind::BinaryToggle);
    }

    #[test]
    fn provider_summary_is_deduplicated() {
        let fx = Fx::new();
        let mut gw = scripted(
            "summarize_functions",
            EMIT_FUNCTIONS,
            json!({"functions": [
                {"function_id": "night_mode", "name": "Night mode", "kind": "binary_toggle"},
                {"function_id": "night_mode", "name": "Night mode", "kind": "binary_toggle"},
                {"function_id": "Night-Mode2", "name": "night mode", "kind": "binary_toggle"},
                {"function_id": "speed", "kind": "ranged_setting", "min": 1, "max": 10},
                {"function_id": "x", "kind": "not_a_kind"}
            ]}),
        );
        let s = summarize_function_list(&fx.ctx(true), &mut gw);
        let ids: Vec<_> = s.functions.iter().map(|f| f.function_id.as_str()).collect();
        assert_eq!(ids, ["night_mode", "speed"]);
        assert_eq!(s.functions[1].constraints.max, Some(10.0));
        assert!(s.warnings.is_empty());
    }

    #[test]
    fn provider_failure_falls_back_to_description() {
        let fx = Fx::new();
        let s = summarize_function_list(&fx.ctx(true), &mut offline());
        assert_eq!(s.functions.len(), 1);
        assert_eq!(s.warnings.len(), 1);
    }

    #[test]
    fn description_parsing_guesses_kinds() {
        let fs = functions_from_description("power on/off, fan speed, night mode and temperature sensor; transmit");
        let kinds: Vec<_> = fs.iter().map(|f| (f.function_id.as_str(), f.kind)).collect();
        assert_eq!(
            kinds,
            [
                ("power_on_off", FunctionKind::BinaryToggle),
                ("fan_speed", FunctionKind::RangedSetting),
                ("night_mode", FunctionKind::EnumeratedMode),
                ("temperature_sensor", FunctionKind::SensorReadout),
                ("transmit", FunctionKind::UnaryCommand),
            ]
        );
    }
}
