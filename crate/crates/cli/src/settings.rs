//! Configuration layering: defaults < fixture/task file < `--config` file <
//! flags < environment (provider credentials only).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};

use iotbridge_core::codegen::RetrievalMode;
use iotbridge_core::knowledge::Embedders;
use iotbridge_core::llm::{OpenAiConfig, OpenAiProvider};
use iotbridge_core::model::{IntegrationTask, SystemClock};
use iotbridge_core::pipeline::{merge_toml, EventSink, Pipeline, PipelineConfig, Services, TaskFixture};
use iotbridge_core::prompts::PromptSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Progressive,
    Fixed,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// TOML file with optional [task], [fixture] and [pipeline] tables.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Offline fixture directory (or, for bench, a directory of them).
    #[arg(long, global = true)]
    pub fixtures: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Ablation: build no platform store.
    #[arg(long, global = true)]
    pub no_platform_store: bool,
    /// Ablation: run tests once without repairing.
    #[arg(long, global = true)]
    pub no_auto_debug: bool,
    #[arg(long, global = true, value_enum)]
    pub retrieval_mode: Option<ModeArg>,
}

impl Common {
    pub fn out_dir(&self, default: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(default))
    }
}

/// A resolved task, its environment and the effective pipeline config.
#[derive(Debug, Clone)]
pub struct Settings {
    pub fixture: TaskFixture,
    pub config: PipelineConfig,
}

struct ConfigFile {
    task: Option<toml::Value>,
    pipeline: Option<toml::Value>,
    has_fixture: bool,
}

fn read_config_file(path: &Path) -> anyhow::Result<ConfigFile> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: toml::Value = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let toml::Value::Table(mut table) = value else { bail!("{} is not a table", path.display()) };
    let file = ConfigFile {
        task: table.remove("task"),
        pipeline: table.remove("pipeline"),
        has_fixture: table.remove("fixture").is_some(),
    };
    if let Some(key) = table.keys().next() {
        bail!("{}: unknown top-level key {key:?} (expected task, fixture, pipeline)", path.display());
    }
    Ok(file)
}

fn overlay_task(task: &IntegrationTask, layer: toml::Value) -> anyhow::Result<IntegrationTask> {
    let mut merged = toml::Value::try_from(task)?;
    merge_toml(&mut merged, layer);
    let task: IntegrationTask = merged.try_into().context("invalid [task] override")?;
    task.validate()?;
    Ok(task)
}

impl Settings {
    /// From `--fixtures`, or from a self-contained `--config` task file.
    pub fn resolve(common: &Common) -> anyhow::Result<Self> {
        match (&common.fixtures, &common.config) {
            (Some(dir), _) => Self::for_fixture(dir, common),
            (None, Some(path)) => {
                let fixture = TaskFixture::load_file(path)?;
                Self::layer(fixture, common, false)
            }
            (None, None) => bail!("either --fixtures or --config (a task file with [task] and [fixture]) is required"),
        }
    }

    pub fn for_fixture(dir: &Path, common: &Common) -> anyhow::Result<Self> {
        let fixture = TaskFixture::load(dir)?;
        Self::layer(fixture, common, true)
    }

    fn layer(fixture: TaskFixture, common: &Common, config_is_overlay: bool) -> anyhow::Result<Self> {
        let config = fixture.pipeline_config(&PipelineConfig::default())?;
        let mut settings = Self { fixture, config };
        if let (true, Some(path)) = (config_is_overlay, &common.config) {
            let file = read_config_file(path)?;
            if file.has_fixture {
                tracing::warn!(path = %path.display(), "[fixture] in --config is ignored when --fixtures is given");
            }
            settings.overlay(file.task, file.pipeline)?;
        }
        let Self { mut fixture, mut config } = settings;
        if let Some(seed) = common.seed {
            fixture.task.seed = seed;
        }
        if common.no_platform_store {
            config.platform_store_enabled = false;
        }
        if common.no_auto_debug {
            config.auto_debug_enabled = false;
        }
        match common.retrieval_mode {
            Some(ModeArg::Progressive) => config.codegen.retrieval_mode = RetrievalMode::Progressive,
            Some(ModeArg::Fixed) => config.codegen.retrieval_mode = RetrievalMode::FixedOneTime,
            None => {}
        }
        Ok(Self { fixture, config })
    }

    /// Applies a partial `[task]` table and a `[pipeline]` table.
    pub fn overlay(&mut self, task: Option<toml::Value>, pipeline: Option<toml::Value>) -> anyhow::Result<()> {
        if let Some(t) = task {
            self.fixture.task = overlay_task(&self.fixture.task, t)?;
            if self.fixture.task.platform_id != self.fixture.profile.platform_id {
                bail!("task targets {} but the profile is {}", self.fixture.task.platform_id, self.fixture.profile.platform_id);
            }
        }
        if let Some(p) = pipeline {
            self.config = self.config.overlay(p)?;
        }
        Ok(())
    }

    /// Offline when the task ships a provider script; nothing then leaves
    /// the machine.
    pub fn offline(&self) -> bool {
        self.fixture.script.is_some()
    }

    pub fn pipeline(&self, sink: Option<EventSink>) -> anyhow::Result<Pipeline> {
        if self.offline() {
            return Ok(Pipeline::offline(&self.fixture, self.config.clone(), sink)?);
        }
        let provider = OpenAiProvider::new(OpenAiConfig::from_env()?)?;
        let services = Services {
            provider: Box::new(provider),
            fetcher: Box::new(self.fixture.fetcher()?),
            embedders: Embedders::offline(),
            clock: Box::new(SystemClock),
            prompts: PromptSet::default(),
        };
        Ok(Pipeline::new(
            self.fixture.task.clone(),
            self.fixture.profile.clone(),
            self.fixture.denylist.clone(),
            self.config.clone(),
            services,
            sink,
        ))
    }
}
