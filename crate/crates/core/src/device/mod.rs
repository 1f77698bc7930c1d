//! Mock device implementing a full function set, plus its wire protocol.
//!
//! Every declared function always succeeds with either an acknowledgment or
//! a valid dummy value. The only failure is a call to an undeclared
//! function, which surfaces integration bugs.

mod server;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::model::{ensure_unique_ids, Clock, FunctionDescriptor, FunctionKind, SystemClock};

pub use server::{serve, DeviceClient, EndpointConfig, ServerHandle, SharedDevice};

#[derive(Debug, thiserror::Error)]
pub enum DeviceError {
    #[error("device must declare at least one function")]
    NoFunctions,
    #[error("duplicate function id: {0}")]
    DuplicateFunction(String),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("device transport: {0}")]
    Transport(String),
}

/// Per-kind dummy values. Sensor readings are a fixed constant; the value
/// has no physical meaning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DummyValuePolicy {
    pub sensor_constant: f64,
    pub default_unit: String,
    pub ack_token: String,
    pub empty_frame_marker: String,
    pub default_range: (f64, f64),
}

impl Default for DummyValuePolicy {
    fn default() -> Self {
        Self {
            sensor_constant: 21.5,
            default_unit: "unit".into(),
            ack_token: "ack".into(),
            empty_frame_marker: "<empty-frame>".into(),
            default_range: (0.0, 100.0),
        }
    }
}

impl DummyValuePolicy {
    fn range(&self, f: &FunctionDescriptor) -> (f64, f64) {
        let (lo, hi) = self.default_range;
        (f.constraints.min.unwrap_or(lo), f.constraints.max.unwrap_or(hi))
    }

    /// Initial value for a function.
    pub fn initial_value(&self, f: &FunctionDescriptor) -> Value {
        match f.kind {
            FunctionKind::BinaryToggle => Value::Bool(true),
            FunctionKind::RangedSetting => {
                let (lo, hi) = self.range(f);
                number((lo + hi) / 2.0)
            }
            FunctionKind::EnumeratedMode => Value::String(
                f.constraints.options.first().cloned().unwrap_or_else(|| "default".into()),
            ),
            FunctionKind::SensorReadout => number(self.sensor_constant),
            FunctionKind::UnaryCommand => Value::String(self.ack_token.clone()),
            FunctionKind::ContinuousStream => Value::String(self.empty_frame_marker.clone()),
        }
    }

    /// Whether a caller-supplied value is valid for the function's kind.
    pub fn accepts(&self, f: &FunctionDescriptor, v: &Value) -> bool {
        match f.kind {
            FunctionKind::BinaryToggle => v.is_boolean(),
            FunctionKind::RangedSetting => {
                let (lo, hi) = self.range(f);
                v.as_f64().is_some_and(|x| x >= lo && x <= hi)
            }
            FunctionKind::EnumeratedMode => {
                let opts = &f.constraints.options;
                v.as_str().is_some_and(|s| opts.is_empty() || opts.iter().any(|o| o == s))
            }
            _ => false,
        }
    }

    pub fn unit(&self, f: &FunctionDescriptor) -> Option<String> {
        match f.kind {
            FunctionKind::SensorReadout => Some(f.constraints.unit.clone().unwrap_or_else(|| self.default_unit.clone())),
            _ => f.constraints.unit.clone(),
        }
    }
}

fn number(x: f64) -> Value {
    serde_json::Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub function_id: String,
    pub arguments: Value,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseStatus {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceResponse {
    pub status: ResponseStatus,
    pub code: u16,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl DeviceResponse {
    pub fn ok(value: Value, unit: Option<String>) -> Self {
        Self { status: ResponseStatus::Ok, code: 200, value: Some(value), unit, message: None }
    }

    pub fn error(code: u16, message: impl Into<String>) -> Self {
        Self { status: ResponseStatus::Error, code, value: None, unit: None, message: Some(message.into()) }
    }

    pub fn is_ok(&self) -> bool {
        self.status == ResponseStatus::Ok
    }
}

#[derive(Debug, Clone)]
pub struct VirtualDevice {
    functions: Vec<FunctionDescriptor>,
    state: BTreeMap<String, Value>,
    call_log: Vec<CallRecord>,
    policy: DummyValuePolicy,
}

/// Builds a device answering every declared function.
pub fn build_virtual_device(functions: Vec<FunctionDescriptor>, policy: DummyValuePolicy) -> Result<VirtualDevice, DeviceError> {
    if functions.is_empty() {
        return Err(DeviceError::NoFunctions);
    }
    ensure_unique_ids(&functions).map_err(|e| match e {
        crate::model::ModelError::DuplicateFunction(id) => DeviceError::DuplicateFunction(id),
        other => DeviceError::Transport(other.to_string()),
    })?;
    let state = functions
        .iter()
        .map(|f| (f.function_id.clone(), policy.initial_value(f)))
        .collect();
    Ok(VirtualDevice { functions, state, call_log: Vec::new(), policy })
}

impl VirtualDevice {
    pub fn functions(&self) -> &[FunctionDescriptor] {
        &self.functions
    }

    pub fn function(&self, id: &str) -> Option<&FunctionDescriptor> {
        self.functions.iter().find(|f| f.function_id == id)
    }

    pub fn call_log(&self) -> &[CallRecord] {
        &self.call_log
    }

    pub fn state(&self, id: &str) -> Option<&Value> {
        self.state.get(id)
    }

    pub fn invoke(&mut self, function_id: &str, arguments: Value) -> DeviceResponse {
        self.invoke_at(function_id, arguments, SystemClock.now_ms())
    }

    /// Calls a function. Settable kinds adopt a valid `value` argument;
    /// anything else leaves state untouched and answers with current state.
    pub fn invoke_at(&mut self, function_id: &str, arguments: Value, timestamp_ms: u64) -> DeviceResponse {
        let Some(f) = self.functions.iter().find(|f| f.function_id == function_id).cloned() else {
            return DeviceResponse::error(404, format!("function not found: {function_id}"));
        };
        self.call_log.push(CallRecord { function_id: function_id.to_string(), arguments: arguments.clone(), timestamp_ms });
        if let Some(v) = arguments.get("value") {
            if self.policy.accepts(&f, v) {
                self.state.insert(f.function_id.clone(), v.clone());
            }
        }
        let value = self.state.get(function_id).cloned().unwrap_or(Value::Null);
        DeviceResponse::ok(value, self.policy.unit(&f))
    }

    pub fn clear_log(&mut self) {
        self.call_log.clear();
    }
}
