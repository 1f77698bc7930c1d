//! HTTP session service: start jobs, stream their events, answer HIL probes.

use std::collections::HashMap;
use std::convert::Infallible;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{mpsc, Arc, Mutex};

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::watch;

use iotbridge_core::hil::{Answer, HilEvent, Probe};
use iotbridge_core::pipeline::{EventSink, PipelineEvent, RunSummary, Stage};

use crate::settings::{Common, Settings};

pub const SCHEMA: &str = include_str!("../api/schema.json");

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobRequest {
    /// Fixture directory; relative paths resolve against the server's
    /// `--fixtures` directory when one is set.
    pub fixture: PathBuf,
    /// Partial task override.
    #[serde(default)]
    pub task: Option<Value>,
    /// Pipeline config override.
    #[serde(default)]
    pub config: Option<Value>,
    /// Continue into HIL verification after auto-debugging.
    #[serde(default)]
    pub hil: bool,
}

#[derive(Debug, Deserialize)]
pub struct HilAnswer {
    pub answer: Answer,
}

#[derive(Debug, Clone, Serialize)]
pub struct JobSnapshot {
    pub job_id: String,
    pub stage: Option<Stage>,
    pub events: usize,
    pub outstanding_probe: Option<Probe>,
    pub finished: bool,
    pub summary: Option<RunSummary>,
    pub error: Option<String>,
}

#[derive(Default)]
struct JobState {
    events: Vec<Value>,
    stage: Option<Stage>,
    outstanding: Option<Probe>,
    answers: Option<mpsc::Sender<Answer>>,
    finished: bool,
    summary: Option<RunSummary>,
    error: Option<String>,
    /// The pipeline's `Finished`, held back until the summary is stored.
    held: Option<PipelineEvent>,
}

struct Job {
    id: String,
    state: Mutex<JobState>,
    /// Bumped on every state change; subscribers wait on it.
    notify: watch::Sender<u64>,
}

impl Job {
    fn lock(&self) -> std::sync::MutexGuard<'_, JobState> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn touch(&self) {
        self.notify.send_modify(|n| *n += 1);
    }

    fn push(&self, event: &PipelineEvent) {
        {
            let mut st = self.lock();
            let mut value = serde_json::to_value(event).unwrap_or_else(|e| json!({ "type": "error", "message": e.to_string() }));
            if let Value::Object(m) = &mut value {
                m.insert("seq".into(), json!(st.events.len()));
            }
            match event {
                PipelineEvent::Stage { stage } => st.stage = Some(*stage),
                PipelineEvent::Hil { event: HilEvent::Probe(p) } => st.outstanding = Some(p.clone()),
                PipelineEvent::Finished { stage, .. } => {
                    st.stage = Some(*stage);
                    st.outstanding = None;
                    st.finished = true;
                }
                _ => {}
            }
            st.events.push(value);
        }
        self.touch();
    }

    fn snapshot(&self) -> JobSnapshot {
        let st = self.lock();
        JobSnapshot {
            job_id: self.id.clone(),
            stage: st.stage,
            events: st.events.len(),
            outstanding_probe: st.outstanding.clone(),
            finished: st.finished,
            summary: st.summary.clone(),
            error: st.error.clone(),
        }
    }
}

pub struct AppState {
    base: Common,
    jobs: Mutex<HashMap<String, Arc<Job>>>,
    next_id: AtomicU64,
}

impl AppState {
    /// `base` supplies server-wide defaults (flags, `--config`, fixture root).
    pub fn new(base: Common) -> Arc<Self> {
        Arc::new(Self { base, jobs: Mutex::new(HashMap::new()), next_id: AtomicU64::new(1) })
    }

    fn job(&self, id: &str) -> Option<Arc<Job>> {
        self.jobs.lock().unwrap_or_else(|p| p.into_inner()).get(id).cloned()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/jobs", post(create_job))
        .route("/jobs/{id}", get(get_job))
        .route("/jobs/{id}/events", get(job_events))
        .route("/jobs/{id}/hil_answer", post(hil_answer))
        .route("/schema", get(schema))
        .with_state(state)
}

pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": { "message": message.into() } }))).into_response()
}

fn to_toml(v: Value) -> anyhow::Result<toml::Value> {
    Ok(toml::Value::try_from(v)?)
}

fn job_settings(base: &Common, req: JobRequest) -> anyhow::Result<Settings> {
    let dir = match &base.fixtures {
        Some(root) if req.fixture.is_relative() => root.join(&req.fixture),
        _ => req.fixture.clone(),
    };
    let mut settings = Settings::for_fixture(&dir, base)?;
    settings.overlay(req.task.map(to_toml).transpose()?, req.config.map(to_toml).transpose()?)?;
    Ok(settings)
}

async fn create_job(State(app): State<Arc<AppState>>, Json(req): Json<JobRequest>) -> Response {
    let hil = req.hil;
    let settings = match job_settings(&app.base, req) {
        Ok(s) => s,
        Err(e) => return error(StatusCode::UNPROCESSABLE_ENTITY, format!("{e:#}")),
    };
    let id = format!("job-{}", app.next_id.fetch_add(1, Ordering::Relaxed));
    let (answers, rx) = mpsc::channel();
    let job = Arc::new(Job {
        id: id.clone(),
        state: Mutex::new(JobState { answers: Some(answers), ..Default::default() }),
        notify: watch::channel(0).0,
    });
    app.jobs.lock().unwrap_or_else(|p| p.into_inner()).insert(id.clone(), job.clone());
    std::thread::Builder::new()
        .name(id.clone())
        .spawn(move || {
            let outcome = catch_unwind(AssertUnwindSafe(|| run_job(&job, &settings, hil, rx)));
            let err = match outcome {
                Ok(Ok(())) => None,
                Ok(Err(e)) => Some(format!("{e:#}")),
                Err(_) => Some("job panicked".to_string()),
            };
            let held = {
                let mut st = job.lock();
                st.answers = None;
                st.error = err.clone();
                st.held.take()
            };
            job.push(&held.unwrap_or(PipelineEvent::Finished { stage: Stage::Failed, usable: false, failure: err }));
        })
        .expect("spawn job thread");
    (StatusCode::CREATED, Json(json!({ "job_id": id }))).into_response()
}

fn run_job(job: &Arc<Job>, settings: &Settings, hil: bool, answers: mpsc::Receiver<Answer>) -> anyhow::Result<()> {
    let sink: EventSink = {
        let job = job.clone();
        Arc::new(move |e| match e {
            PipelineEvent::Finished { .. } => job.lock().held = Some(e),
            e => job.push(&e),
        })
    };
    let mut p = settings.pipeline(Some(sink))?;
    let run = p.run();
    let publish = |p: &iotbridge_core::pipeline::Pipeline| job.lock().summary = Some(p.summary());
    if let Err(e) = run {
        publish(&p);
        return Err(e.into());
    }
    if hil && p.summary().usable {
        let mut adapter = p.hil_adapter()?;
        publish(&p);
        // blocks until an answer is posted; a dropped sender ends the loop
        let mut responder = |_: &Probe| answers.recv().ok();
        let result = p.run_hil(&mut adapter, &mut responder, None);
        if let Err(e) = result {
            publish(&p);
            return Err(e.into());
        }
    }
    let summary = p.finish();
    job.lock().summary = Some(summary);
    Ok(())
}

async fn get_job(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    match app.job(&id) {
        Some(job) => Json(job.snapshot()).into_response(),
        None => error(StatusCode::NOT_FOUND, format!("no job {id}")),
    }
}

#[derive(Debug, Deserialize)]
pub struct EventsQuery {
    from: Option<usize>,
}

fn event_stream(job: Arc<Job>, from: usize) -> impl Stream<Item = Result<Event, Infallible>> {
    let rx = job.notify.subscribe();
    futures::stream::unfold((job, rx, from), |(job, mut rx, idx)| async move {
        loop {
            {
                let st = job.lock();
                if let Some(v) = st.events.get(idx) {
                    let kind = v.get("type").and_then(Value::as_str).unwrap_or("event").to_string();
                    let event = Event::default().id(idx.to_string()).event(kind).data(v.to_string());
                    return Some((Ok(event), (job.clone(), rx, idx + 1)));
                }
                if st.finished {
                    return None;
                }
                rx.borrow_and_update();
            }
            if rx.changed().await.is_err() {
                return None;
            }
        }
    })
}

async fn job_events(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
    headers: HeaderMap,
) -> Response {
    let Some(job) = app.job(&id) else {
        return error(StatusCode::NOT_FOUND, format!("no job {id}"));
    };
    let last_seen = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse::<usize>().ok());
    let from = match (last_seen, q.from) {
        (Some(n), _) => n + 1,
        (None, Some(n)) => n,
        (None, None) => 0,
    };
    Sse::new(event_stream(job, from)).keep_alive(KeepAlive::default()).into_response()
}

async fn hil_answer(State(app): State<Arc<AppState>>, Path(id): Path<String>, Json(body): Json<HilAnswer>) -> Response {
    let Some(job) = app.job(&id) else {
        return error(StatusCode::NOT_FOUND, format!("no job {id}"));
    };
    let mut st = job.lock();
    let (Some(probe), Some(tx)) = (st.outstanding.clone(), st.answers.clone()) else {
        return error(StatusCode::CONFLICT, "no probe is awaiting an answer");
    };
    if tx.send(body.answer).is_err() {
        return error(StatusCode::CONFLICT, "job is no longer accepting answers");
    }
    st.outstanding = None;
    drop(st);
    job.touch();
    Json(json!({ "accepted": { "seq": probe.seq, "function_id": probe.function_id, "answer": body.answer } })).into_response()
}

async fn schema() -> Response {
    ([(header::CONTENT_TYPE, "application/json")], SCHEMA).into_response()
}
