use std::net::{SocketAddr, TcpStream};
use std::time::Duration;

use serde_json::json;

use crate::device::SharedDevice;
use crate::harness::{render_actuation, run_sandbox, Verdict};
use crate::model::{FunctionDescriptor, IntegrationArtifact, PlatformProfile};

/// Path from the artifact to a device. Actuation either completes or
/// reports a transport failure.
pub trait DeviceAdapter: Send {
    fn connect(&mut self) -> Result<(), String>;
    /// Returns a short description of what happened, or diagnostics.
    fn actuate(&mut self, artifact: &IntegrationArtifact, function: &FunctionDescriptor) -> Result<String, String>;
}

/// Invokes the virtual device directly, bypassing the artifact.
pub struct LoopbackAdapter {
    pub device: SharedDevice,
}

impl DeviceAdapter for LoopbackAdapter {
    fn connect(&mut self) -> Result<(), String> {
        Ok(())
    }

    fn actuate(&mut self, _: &IntegrationArtifact, f: &FunctionDescriptor) -> Result<String, String> {
        let mut dev = self.device.lock().map_err(|_| "device lock poisoned".to_string())?;
        let r = dev.invoke(&f.function_id, json!({}));
        if r.is_ok() {
            Ok(format!("{} -> {}", f.function_id, r.value.unwrap_or_default()))
        } else {
            Err(format!("device answered {}: {}", r.code, r.message.unwrap_or_default()))
        }
    }
}

/// Drives the device through the artifact itself: the profile's actuation
/// template runs in the sandbox against `endpoint`, which may be a real
/// device or a virtual one.
pub struct ArtifactAdapter {
    pub profile: PlatformProfile,
    pub endpoint: String,
    pub timeout: Duration,
}

impl ArtifactAdapter {
    pub fn new(profile: PlatformProfile, endpoint: impl Into<String>) -> Self {
        let timeout = Duration::from_secs_f64(profile.sandbox.timeout_secs.max(0.001));
        Self { profile, endpoint: endpoint.into(), timeout }
    }
}

impl DeviceAdapter for ArtifactAdapter {
    fn connect(&mut self) -> Result<(), String> {
        let addr: SocketAddr = self.endpoint.parse().map_err(|e| format!("bad endpoint {}: {e}", self.endpoint))?;
        TcpStream::connect_timeout(&addr, Duration::from_secs(5))
            .map(drop)
            .map_err(|e| format!("{}: {e}", self.endpoint))
    }

    fn actuate(&mut self, artifact: &IntegrationArtifact, f: &FunctionDescriptor) -> Result<String, String> {
        let script = render_actuation(&self.profile, f);
        let run = run_sandbox(&self.profile, artifact, &script, &self.endpoint, self.timeout);
        match run.verdict() {
            Verdict::Passed => Ok(format!("{} actuated through the integration", f.function_id)),
            _ => Err(run.diagnostics()),
        }
    }
}
