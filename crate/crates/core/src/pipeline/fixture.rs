use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{PipelineConfig, PipelineError};
use crate::hil::ScriptedResponder;
use crate::knowledge::{FixtureFetcher, LeakageDenylist};
use crate::llm::ScriptedProvider;
use crate::model::{IntegrationTask, PlatformProfile};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FixturePaths {
    profile: PathBuf,
    sources: PathBuf,
    #[serde(default)]
    denylist: Option<PathBuf>,
    #[serde(default)]
    script: Option<PathBuf>,
    #[serde(default)]
    responder: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskFile {
    task: IntegrationTask,
    fixture: FixturePaths,
    #[serde(default)]
    pipeline: Option<toml::Value>,
}

/// An offline task: the request plus everything needed to run it without
/// network access — local sources, a scripted provider, scripted answers.
#[derive(Debug, Clone)]
pub struct TaskFixture {
    pub dir: PathBuf,
    pub task: IntegrationTask,
    pub profile: PlatformProfile,
    pub sources: PathBuf,
    pub denylist: LeakageDenylist,
    pub script: Option<PathBuf>,
    pub responder: Option<PathBuf>,
    /// `[pipeline]` overrides carried by the fixture.
    pub config: Option<toml::Value>,
}

pub const TASK_FILE: &str = "task.toml";

impl TaskFixture {
    pub fn load(dir: &Path) -> Result<Self, PipelineError> {
        Self::load_file(&dir.join(TASK_FILE))
    }

    /// Loads a task file; relative paths resolve against its directory.
    pub fn load_file(path: &Path) -> Result<Self, PipelineError> {
        let dir = path.parent().unwrap_or(Path::new("."));
        let err = |m: String| PipelineError::Fixture(format!("{}: {m}", path.display()));
        let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let file: TaskFile = toml::from_str(&text).map_err(|e| err(e.to_string()))?;
        file.task.validate().map_err(|e| err(e.to_string()))?;
        let profile = PlatformProfile::load(&dir.join(&file.fixture.profile)).map_err(|e| err(e.to_string()))?;
        if profile.platform_id != file.task.platform_id {
            return Err(err(format!(
                "task targets {} but the profile is {}",
                file.task.platform_id, profile.platform_id
            )));
        }
        let denylist = match &file.fixture.denylist {
            Some(p) => LeakageDenylist::load(&dir.join(p)).map_err(|e| err(e.to_string()))?,
            None => LeakageDenylist::default(),
        };
        Ok(Self {
            dir: dir.to_path_buf(),
            task: file.task,
            profile,
            sources: dir.join(file.fixture.sources),
            denylist,
            script: file.fixture.script.map(|p| dir.join(p)),
            responder: file.fixture.responder.map(|p| dir.join(p)),
            config: file.pipeline,
        })
    }

    /// `base` with the fixture's `[pipeline]` table applied.
    pub fn pipeline_config(&self, base: &PipelineConfig) -> Result<PipelineConfig, PipelineError> {
        match &self.config {
            Some(layer) => base.overlay(layer.clone()),
            None => Ok(base.clone()),
        }
    }

    pub fn fetcher(&self) -> Result<FixtureFetcher, PipelineError> {
        FixtureFetcher::load(&self.sources).map_err(|e| PipelineError::Fixture(e.to_string()))
    }

    /// A fresh provider; scripts are consumed as they replay.
    pub fn provider(&self) -> Result<ScriptedProvider, PipelineError> {
        match &self.script {
            Some(p) => ScriptedProvider::load(p).map_err(|e| PipelineError::Fixture(e.to_string())),
            None => Ok(ScriptedProvider::new(Vec::new())),
        }
    }

    pub fn responder(&self) -> Result<Option<ScriptedResponder>, PipelineError> {
        self.responder
            .as_deref()
            .map(ScriptedResponder::load)
            .transpose()
            .map_err(PipelineError::Fixture)
    }
}

/// `root` itself when it holds a task file, otherwise every immediate
/// subdirectory that does, in name order.
pub fn discover_fixtures(root: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    if root.join(TASK_FILE).is_file() {
        return Ok(vec![root.to_path_buf()]);
    }
    let entries = fs::read_dir(root).map_err(|e| PipelineError::Fixture(format!("{}: {e}", root.display())))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(TASK_FILE).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(PipelineError::Fixture(format!("no {TASK_FILE} under {}", root.display())));
    }
    Ok(dirs)
}
