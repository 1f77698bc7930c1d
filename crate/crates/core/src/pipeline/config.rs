use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::autodebug::AutoDebugConfig;
use crate::codegen::CodegenConfig;
use crate::device::{DummyValuePolicy, EndpointConfig};
use crate::hil::HilConfig;
use crate::knowledge::ChunkingConfig;
use crate::llm::ProviderBudget;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Without the platform store generation refuses to start.
    pub platform_store_enabled: bool,
    /// Without auto-debugging every test runs once and failures stand.
    pub auto_debug_enabled: bool,
    pub web_search_enabled: bool,
    pub chunking: ChunkingConfig,
    pub codegen: CodegenConfig,
    pub testgen_budget: ProviderBudget,
    pub autodebug: AutoDebugConfig,
    pub hil: HilConfig,
    /// Where the virtual device listens.
    pub device: EndpointConfig,
    pub dummy_values: DummyValuePolicy,
    /// HIL target; the virtual device when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hil_endpoint: Option<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            platform_store_enabled: true,
            auto_debug_enabled: true,
            web_search_enabled: true,
            chunking: ChunkingConfig::default(),
            codegen: CodegenConfig::default(),
            testgen_budget: ProviderBudget::default(),
            autodebug: AutoDebugConfig::default(),
            hil: HilConfig::default(),
            device: EndpointConfig::default(),
            dummy_values: DummyValuePolicy::default(),
            hil_endpoint: None,
        }
    }
}

/// Overlays `top` onto `base`: tables merge key by key, anything else is
/// replaced.
pub fn merge_toml(base: &mut toml::Value, top: toml::Value) {
    match (base, top) {
        (toml::Value::Table(b), toml::Value::Table(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(existing) => merge_toml(existing, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, t) => *b = t,
    }
}

impl PipelineConfig {
    /// Applies a partial TOML document on top of `self`. Unknown keys are
    /// rejected.
    pub fn overlay(&self, layer: toml::Value) -> Result<Self, PipelineError> {
        let mut merged = toml::Value::try_from(self).map_err(|e| PipelineError::Config(e.to_string()))?;
        merge_toml(&mut merged, layer);
        let text = toml::to_string(&merged).map_err(|e| PipelineError::Config(e.to_string()))?;
        Strict::parse(&text)
    }

    pub fn overlay_file(&self, path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let layer: toml::Value = toml::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        self.overlay(layer)
    }
}

/// Top-level key check: serde's `default` hides typos, so reject keys the
/// config does not have.
struct Strict;

impl Strict {
    fn parse(text: &str) -> Result<PipelineConfig, PipelineError> {
        let value: toml::Value = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        let known = toml::Value::try_from(PipelineConfig::default()).map_err(|e| PipelineError::Config(e.to_string()))?;
        if let (Some(v), Some(k)) = (value.as_table(), known.as_table()) {
            for key in v.keys() {
                if !k.contains_key(key) && key != "hil_endpoint" {
                    return Err(PipelineError::Config(format!("unknown config key {key:?}")));
                }
            }
        }
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }
}
