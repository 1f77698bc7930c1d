use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::json;

use iotbridge_core::hil::{Answer, HilStatus, Probe, Responder, ScriptedResponder};
use iotbridge_core::knowledge::snapshot::save_store;
use iotbridge_core::metrics::{aggregate, write_records};
use iotbridge_core::pipeline::{discover_fixtures, CallLogObserver, Pipeline, PipelineError, RunSummary, Stage};

use crate::settings::{Common, Settings};

/// Exit code when the run finished but the result is not acceptable
/// (suite not green, functions failed HIL).
pub const EXIT_INCOMPLETE: i32 = 3;

/// A failure reported as one JSON object on stderr.
#[derive(Debug)]
pub struct CliError {
    pub stage: Option<Stage>,
    pub message: String,
    pub code: i32,
}

impl CliError {
    pub fn new(message: impl Into<String>) -> Self {
        Self { stage: None, message: message.into(), code: 1 }
    }

    fn at(p: &Pipeline, e: impl std::fmt::Display) -> Self {
        let s = p.summary();
        Self { stage: s.failed_stage.or(s.stage), message: e.to_string(), code: 2 }
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({ "error": { "stage": self.stage.map(Stage::as_str), "message": self.message, "code": self.code } })
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        Self::new(format!("{e:#}"))
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        Self::new(e.to_string())
    }
}

pub type CmdResult = Result<(), CliError>;

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::new(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| CliError::new(format!("{}: {e}", path.display())))
}

fn mkdir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| CliError::new(format!("{}: {e}", path.display())))
}

fn print_results(s: &RunSummary) {
    for r in &s.results {
        println!("{:<36} {:?}", r.test_id, r.verdict);
    }
}

pub fn ingest(common: &Common) -> CmdResult {
    let settings = Settings::resolve(common)?;
    let mut p = settings.pipeline(None)?;
    let out = common.out_dir("out").join("kb");
    p.ingest().map_err(|e| CliError::at(&p, e))?;
    for (name, store) in [("device", p.device_store()), ("platform", p.platform_store())] {
        let Some(store) = store else { continue };
        save_store(store, &out.join(name), 0).map_err(|e| CliError::new(e.to_string()))?;
        println!("{name}: {} chunks -> {}", store.len(), out.join(name).display());
    }
    let s = p.summary();
    for x in s.device_ingest.iter().chain(s.platform_ingest.iter()).flat_map(|i| &i.exclusions) {
        println!("excluded: {x:?}");
    }
    write_json(&out.join("ingest.json"), &json!({ "device": s.device_ingest, "platform": s.platform_ingest }))
}

pub fn generate(common: &Common) -> CmdResult {
    let settings = Settings::resolve(common)?;
    let mut p = settings.pipeline(None)?;
    let out = common.out_dir("out");
    p.ingest().and_then(|_| p.generate()).map_err(|e| CliError::at(&p, e))?;
    p.export(&out)?;
    let a = p.artifact().expect("generate succeeded");
    println!("generated {} files (revision {}) -> {}", a.files.len(), a.revision, out.join("artifact").display());
    Ok(())
}

pub fn autodebug(common: &Common) -> CmdResult {
    let settings = Settings::resolve(common)?;
    let mut p = settings.pipeline(None)?;
    let out = common.out_dir("out");
    p.run().map_err(|e| CliError::at(&p, e))?;
    let s = p.finish();
    p.export(&out)?;
    print_results(&s);
    let green = s.results.iter().all(|r| r.passed());
    println!("usable: {}  all green: {green}", s.usable);
    if !green {
        let failing: Vec<&str> = s.results.iter().filter(|r| !r.passed()).map(|r| r.test_id.as_str()).collect();
        return Err(CliError {
            stage: Some(Stage::AutoDebugging),
            message: format!("tests still failing: {}", failing.join(", ")),
            code: EXIT_INCOMPLETE,
        });
    }
    Ok(())
}

/// Asks on the terminal.
struct Terminal;

impl Responder for Terminal {
    fn answer(&mut self, probe: &Probe) -> Option<Answer> {
        let stdin = std::io::stdin();
        loop {
            print!("[{}] {} ({})\n{} [y/n] ", probe.seq, probe.function_name, probe.actuation, probe.question);
            let _ = std::io::stdout().flush();
            let mut line = String::new();
            if stdin.lock().read_line(&mut line).ok()? == 0 {
                return None;
            }
            match line.parse() {
                Ok(a) => return Some(a),
                Err(e) => println!("{e}"),
            }
        }
    }
}

pub fn hil(common: &Common, responder: Option<&Path>, checkpoint: Option<&Path>) -> CmdResult {
    let settings = Settings::resolve(common)?;
    let mut p = settings.pipeline(None)?;
    let out = common.out_dir("out");
    p.run().map_err(|e| CliError::at(&p, e))?;
    if !p.summary().usable {
        return Err(CliError::at(&p, "integration is not usable; basic tests fail"));
    }
    let mut responder: Box<dyn Responder> = match responder {
        Some(path) => Box::new(ScriptedResponder::load(path).map_err(CliError::new)?),
        None => Box::new(Terminal),
    };
    let mut adapter = p.hil_adapter()?;
    let hil = p.run_hil(&mut adapter, responder.as_mut(), checkpoint);
    let hil = match hil {
        Ok(h) => h,
        Err(e) => {
            p.export(&out)?;
            return Err(CliError::at(&p, e));
        }
    };
    p.finish();
    p.export(&out)?;
    println!("probes: {}  \"no\" answers: {}", hil.probes, hil.total_no);
    match hil.status {
        HilStatus::CompletedAllVerified => {
            println!("all functions verified");
            Ok(())
        }
        status => Err(CliError {
            stage: Some(Stage::HilRunning),
            message: format!("hil ended {status:?}; failed functions: {}", hil.failed.join(", ")),
            code: EXIT_INCOMPLETE,
        }),
    }
}

pub fn bench(common: &Common, runs: u32) -> CmdResult {
    let root = common
        .fixtures
        .clone()
        .ok_or_else(|| CliError::new("bench needs --fixtures (a task directory or a directory of them)"))?;
    let dirs: Vec<PathBuf> = discover_fixtures(&root)?;
    let out = common.out_dir("out");
    mkdir(&out)?;
    let mut records = Vec::new();
    for dir in &dirs {
        for run in 0..runs {
            let mut settings = Settings::for_fixture(dir, common)?;
            settings.fixture.task.seed = settings.fixture.task.seed.wrapping_add(run as u64);
            let started = Instant::now();
            let mut p = settings.pipeline(None)?;
            if p.run().is_ok() && p.summary().usable {
                let mut adapter = p.hil_adapter()?;
                if let Some(device) = p.device().cloned() {
                    let mut observer = CallLogObserver::new(device);
                    if let Err(e) = p.run_hil(&mut adapter, &mut observer, None) {
                        tracing::warn!(error = %e, fixture = %dir.display(), run, "hil did not complete");
                    }
                }
            }
            p.finish();
            let mut record = p.run_record(run, started.elapsed().as_millis() as u64);
            // fixtures may share a device; each is its own task
            if let Some(name) = dir.file_name() {
                record.task = format!("{} [{}]", record.task, name.to_string_lossy());
            }
            println!(
                "{} run {run}: usable={} correct={:?}/{}",
                record.task, record.usable, record.functions_correct, record.functions_total
            );
            records.push(record);
        }
    }
    write_records(&out.join("records.jsonl"), &records).map_err(|e| CliError::new(e.to_string()))?;
    let report = aggregate(&records);
    write_json(&out.join("report.json"), &report)?;
    print!("{}", report.to_table());
    Ok(())
}
