//! Test generation (basic integration + per-function) and sandboxed execution.

mod generate;
mod sandbox;

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::model::{IntegrationArtifact, PlatformProfile};

pub use generate::{
    functions_from_description, generate_basic_tests, generate_functionality_tests, render_actuation, render_template_test,
    summarize_function_list, FunctionSummary, TestGenContext, TestIdAllocator,
};
pub use sandbox::{run_sandbox, run_test, run_test_with_timeout, SandboxRun};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestCategory {
    Registration,
    ServiceInvocation,
    ConfigEntry,
    Functionality,
}

impl TestCategory {
    pub const BASIC: [TestCategory; 3] = [TestCategory::Registration, TestCategory::ServiceInvocation, TestCategory::ConfigEntry];

    pub fn as_str(self) -> &'static str {
        match self {
            TestCategory::Registration => "registration",
            TestCategory::ServiceInvocation => "service_invocation",
            TestCategory::ConfigEntry => "config_entry",
            TestCategory::Functionality => "functionality",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::Registration, Self::ServiceInvocation, Self::ConfigEntry, Self::Functionality]
            .into_iter()
            .find(|c| c.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestOrigin {
    Template,
    LlmGenerated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub test_id: String,
    pub category: TestCategory,
    /// Set iff `category` is `Functionality`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_function: Option<String>,
    pub body: String,
    pub origin: TestOrigin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Passed,
    Failed,
    Errored,
    TimedOut,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestResult {
    pub test_id: String,
    pub verdict: Verdict,
    pub diagnostics: String,
    #[serde(with = "duration_ms")]
    pub duration: Duration,
}

impl TestResult {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Passed
    }
}

/// Executes one test against one artifact revision.
pub trait TestRunner {
    fn run(&mut self, artifact: &IntegrationArtifact, test: &TestCase) -> TestResult;
}

impl<F: FnMut(&IntegrationArtifact, &TestCase) -> TestResult> TestRunner for F {
    fn run(&mut self, artifact: &IntegrationArtifact, test: &TestCase) -> TestResult {
        self(artifact, test)
    }
}

/// Runs tests in the profile's sandbox against a device endpoint.
#[derive(Debug, Clone)]
pub struct SandboxRunner<'a> {
    pub profile: &'a PlatformProfile,
    pub device_endpoint: String,
}

impl TestRunner for SandboxRunner<'_> {
    fn run(&mut self, artifact: &IntegrationArtifact, test: &TestCase) -> TestResult {
        run_test(artifact, test, self.profile, &self.device_endpoint)
    }
}

mod duration_ms {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}
