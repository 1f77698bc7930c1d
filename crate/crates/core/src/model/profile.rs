use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::task::FunctionKind;
use super::ModelError;

/// Declarative description of a target platform.
///
/// Two platforms differ only in their docs, entity names, layout rules,
/// sandbox command, and test templates, so all of that lives here as data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlatformProfile {
    pub platform_id: String,
    #[serde(default)]
    pub display_name: String,
    pub doc_root: PathBuf,
    pub entity_kinds: Vec<String>,
    pub layout: LayoutRules,
    pub sandbox: SandboxTemplate,
    pub tests: TestTemplates,
    #[serde(default)]
    pub bindings: BTreeMap<FunctionKind, ServiceBinding>,
    /// Directory the profile was loaded from; substituted for `{profile_dir}`.
    #[serde(default)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayoutRules {
    pub manifest_path: String,
    #[serde(default)]
    pub required_manifest_keys: Vec<String>,
    #[serde(default)]
    pub file_rules: Vec<FileRule>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity_kind: Option<String>,
    /// Regular expression matched against the whole relative path.
    pub pattern: String,
}

impl LayoutRules {
    pub(crate) fn compiled_rules(&self) -> Vec<Regex> {
        self.file_rules
            .iter()
            .filter_map(|r| Regex::new(&format!("^(?:{})$", r.pattern)).ok())
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SandboxTemplate {
    /// argv with `{artifact_dir}`, `{test_file}`, `{device_endpoint}` and
    /// `{profile_dir}` placeholders.
    pub command: Vec<String>,
    #[serde(default = "default_test_file_name")]
    pub test_file_name: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
}

fn default_test_file_name() -> String {
    "test_case.py".into()
}

fn default_timeout_secs() -> f64 {
    60.0
}

impl SandboxTemplate {
    pub fn render(&self, profile_dir: &Path, artifact_dir: &Path, test_file: &Path, device_endpoint: &str) -> Vec<String> {
        self.command
            .iter()
            .map(|arg| {
                arg.replace("{profile_dir}", &profile_dir.to_string_lossy())
                    .replace("{artifact_dir}", &artifact_dir.to_string_lossy())
                    .replace("{test_file}", &test_file.to_string_lossy())
                    .replace("{device_endpoint}", device_endpoint)
            })
            .collect()
    }
}

/// Test bodies shipped with the profile. After loading, each field holds
/// the template text (the config names files relative to the profile).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestTemplates {
    pub registration: String,
    pub service_invocation: String,
    pub config_entry: String,
    pub functionality: String,
    /// Actuation-only script used when driving a device for verification.
    pub actuation: String,
}

/// How a function kind is exposed through the platform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceBinding {
    pub entity_kind: String,
    pub service: String,
    /// Service data passed by the caller.
    #[serde(default = "empty_object")]
    pub service_data: serde_json::Value,
    /// Arguments the device must have received.
    #[serde(default = "empty_object")]
    pub expected_arguments: serde_json::Value,
}

fn empty_object() -> serde_json::Value {
    serde_json::Value::Object(Default::default())
}

impl PlatformProfile {
    /// Loads a profile from a TOML document. Relative paths (doc root and
    /// template files) resolve against the document's directory.
    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = fs::read_to_string(path)?;
        let base = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        let base = fs::canonicalize(&base).unwrap_or(base);
        Self::from_toml(&text, &base)
    }

    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, ModelError> {
        let mut profile: PlatformProfile =
            toml::from_str(text).map_err(|e| ModelError::Config(e.to_string()))?;
        profile.base_dir = base_dir.to_path_buf();
        if profile.doc_root.is_relative() {
            profile.doc_root = base_dir.join(&profile.doc_root);
        }
        let t = &mut profile.tests;
        for slot in [
            &mut t.registration,
            &mut t.service_invocation,
            &mut t.config_entry,
            &mut t.functionality,
            &mut t.actuation,
        ] {
            let file = base_dir.join(&*slot);
            *slot = fs::read_to_string(&file)
                .map_err(|e| ModelError::Config(format!("template {}: {e}", file.display())))?;
        }
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.platform_id.trim().is_empty() {
            return Err(ModelError::Config("platform_id must not be empty".into()));
        }
        if self.entity_kinds.is_empty() {
            return Err(ModelError::Config("entity_kinds must not be empty".into()));
        }
        for rule in &self.layout.file_rules {
            Regex::new(&rule.pattern)
                .map_err(|e| ModelError::Config(format!("bad layout pattern {:?}: {e}", rule.pattern)))?;
            if let Some(kind) = &rule.entity_kind {
                if !self.entity_kinds.contains(kind) {
                    return Err(ModelError::Config(format!("layout rule names unknown entity kind {kind}")));
                }
            }
        }
        if self.sandbox.command.is_empty() {
            return Err(ModelError::Config("sandbox command must not be empty".into()));
        }
        Ok(())
    }

    pub fn binding(&self, kind: FunctionKind) -> Option<&ServiceBinding> {
        self.bindings.get(&kind)
    }

    pub fn name(&self) -> &str {
        if self.display_name.is_empty() {
            &self.platform_id
        } else {
            &self.display_name
        }
    }
}
