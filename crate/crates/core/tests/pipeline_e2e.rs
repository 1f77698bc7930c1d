use std::path::Path;
use std::sync::{Arc, Mutex};

use iotbridge_core::autodebug::{Classification, RunPass};
use iotbridge_core::harness::Verdict;
use iotbridge_core::hil::{Answer, HilEvent, HilStatus, Probe, ScriptedResponder};
use iotbridge_core::pipeline::{CallLogObserver, Pipeline, PipelineConfig, PipelineEvent, Stage, TaskFixture};

fn fixture(name: &str) -> TaskFixture {
    TaskFixture::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)).unwrap()
}

fn have_python() -> bool {
    let ok = std::process::Command::new("python3").arg("--version").output().is_ok();
    if !ok {
        eprintln!("skipping: python3 not found");
    }
    ok
}

fn recording() -> (Arc<Mutex<Vec<PipelineEvent>>>, iotbridge_core::pipeline::EventSink) {
    let events = Arc::new(Mutex::new(Vec::new()));
    let sink = {
        let events = events.clone();
        Arc::new(move |e: PipelineEvent| events.lock().unwrap().push(e))
    };
    (events, sink)
}

#[test]
fn thermo_runs_to_done_with_one_hil_repair() {
    if !have_python() {
        return;
    }
    let fx = fixture("thermo");
    let (events, sink) = recording();
    let mut p = Pipeline::offline(&fx, PipelineConfig::default(), Some(sink)).unwrap();
    p.run().unwrap();
    let s = p.summary();
    assert!(s.usable);
    assert_eq!(s.tests.len(), 5);
    assert!(s.results.iter().all(|r| r.passed()));
    assert_eq!(s.stage, Some(Stage::AwaitingHil));

    let mut adapter = p.hil_adapter().unwrap();
    let mut responder = fx.responder().unwrap().unwrap();
    let hil = p.run_hil(&mut adapter, &mut responder, None).unwrap();
    assert_eq!(hil.status, HilStatus::CompletedAllVerified);
    assert_eq!(hil.total_no, 1);
    assert_eq!(hil.per_function_no_count["transmit"], 1);
    assert_eq!(p.artifact().unwrap().revision, 1);
    assert_eq!(p.finish().stage, Some(Stage::Done));

    let events = events.lock().unwrap();
    let stages: Vec<Stage> = events
        .iter()
        .filter_map(|e| match e {
            PipelineEvent::Stage { stage } => Some(*stage),
            _ => None,
        })
        .collect();
    assert_eq!(
        &stages[..5],
        &[Stage::Ingesting, Stage::GeneratingControl, Stage::GeneratingIntegration, Stage::AutoDebugging, Stage::AwaitingHil]
    );
    assert_eq!(stages.last(), Some(&Stage::Done));
    let executed = events.iter().filter(|e| matches!(e, PipelineEvent::TestExecuted { .. })).count();
    assert_eq!(executed, 5);
    let probes = events.iter().filter(|e| matches!(e, PipelineEvent::Hil { event: HilEvent::Probe(_) })).count();
    assert_eq!(probes, 3);
    assert!(matches!(events.last(), Some(PipelineEvent::Finished { stage: Stage::Done, usable: true, .. })));
}

#[test]
fn export_writes_artifact_tests_and_trace() {
    if !have_python() {
        return;
    }
    let fx = fixture("thermo");
    let mut p = Pipeline::offline(&fx, PipelineConfig::default(), None).unwrap();
    p.run().unwrap();
    let dir = tempfile::tempdir().unwrap();
    p.export(dir.path()).unwrap();
    for f in ["artifact/manifest.json", "artifact/button.py", "tests/t05-functionality-transmit.py", "summary.json", "ledger.json"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let trace = std::fs::read_to_string(dir.path().join("trace.jsonl")).unwrap();
    assert_eq!(trace.lines().count(), p.tracer().records().len());
}

#[test]
fn thermo_bug_is_repaired_by_auto_debug() {
    if !have_python() {
        return;
    }
    let fx = fixture("thermo_bug");
    let mut p = Pipeline::offline(&fx, PipelineConfig::default(), None).unwrap();
    p.run().unwrap();
    let s = p.summary();
    let report = s.debug.as_ref().unwrap();
    assert!(report.all_green());
    let t05 = report.outcome("t05-functionality-transmit").unwrap();
    assert_eq!((t05.classification, t05.attempts), (Classification::Fixed, 1));
    let first = &report.executions[4];
    assert_eq!((first.pass, first.revision, first.verdict), (RunPass::Initial, 0, Verdict::Failed));
    let rerun = &report.executions[5];
    assert_eq!((rerun.pass, rerun.revision, rerun.verdict), (RunPass::Rerun, 1, Verdict::Passed));
    assert_eq!(report.revisions_made, 1);
    assert!(s.usable);
}

#[test]
fn thermo_bug_without_auto_debug_keeps_failing() {
    if !have_python() {
        return;
    }
    let fx = fixture("thermo_bug");
    let config = PipelineConfig { auto_debug_enabled: false, ..Default::default() };
    let mut p = Pipeline::offline(&fx, config, None).unwrap();
    p.run().unwrap();
    let s = p.summary();
    assert!(s.debug.is_none());
    assert_eq!(s.revision, Some(0));
    let failing: Vec<&str> = s.results.iter().filter(|r| !r.passed()).map(|r| r.test_id.as_str()).collect();
    assert_eq!(failing, vec!["t05-functionality-transmit"]);
    // basic tests still pass, so the run counts as usable
    assert!(s.usable);
}

#[test]
fn platform_store_off_fails_before_generation() {
    let fx = fixture("thermo");
    let config = PipelineConfig { platform_store_enabled: false, ..Default::default() };
    let (events, sink) = recording();
    let mut p = Pipeline::offline(&fx, config, Some(sink)).unwrap();
    let err = p.run().unwrap_err().to_string();
    assert!(err.contains("platform knowledge"), "{err}");
    let s = p.summary();
    assert_eq!(s.stage, Some(Stage::Failed));
    assert_eq!(s.failed_stage, Some(Stage::GeneratingControl));
    assert!(p.artifact().is_none());
    assert!(p.tracer().records().is_empty(), "no provider calls were made");
    assert!(matches!(events.lock().unwrap().last(), Some(PipelineEvent::Finished { stage: Stage::Failed, .. })));
}

#[test]
fn hil_resumes_from_checkpoint() {
    if !have_python() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("hil.json");
    let fx = fixture("thermo");
    let mut p = Pipeline::offline(&fx, PipelineConfig::default(), None).unwrap();
    p.run().unwrap();
    let mut adapter = p.hil_adapter().unwrap();
    // answers the first probe, then goes silent
    let mut one = ScriptedResponder::new([Answer::Yes]);
    assert!(p.run_hil(&mut adapter, &mut one, Some(&ckpt)).is_err());
    assert_eq!(p.hil_session().unwrap().status, HilStatus::AwaitingFeedback);

    let mut rest = |probe: &Probe| {
        assert_eq!(probe.function_id, "transmit");
        Some(Answer::Yes)
    };
    let hil = p.run_hil(&mut adapter, &mut rest, Some(&ckpt)).unwrap();
    assert_eq!(hil.status, HilStatus::CompletedAllVerified);
    assert_eq!(hil.probes, 2);
}

#[test]
fn call_log_observer_confirms_working_functions() {
    if !have_python() {
        return;
    }
    let fx = fixture("thermo");
    let mut p = Pipeline::offline(&fx, PipelineConfig::default(), None).unwrap();
    p.run().unwrap();
    let mut adapter = p.hil_adapter().unwrap();
    let mut observer = CallLogObserver::new(p.device().unwrap().clone());
    let hil = p.run_hil(&mut adapter, &mut observer, None).unwrap();
    assert_eq!((hil.status, hil.total_no), (HilStatus::CompletedAllVerified, 0));
    let record = p.run_record(0, 1);
    assert_eq!((record.functions_total, record.functions_correct), (2, Some(2)));
}
