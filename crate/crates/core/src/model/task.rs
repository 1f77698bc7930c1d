use serde::{Deserialize, Serialize};

use super::ModelError;

/// A user's request to integrate one device into one platform.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegrationTask {
    pub device_brand: String,
    pub device_model: String,
    pub platform_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub serial_number: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device_key: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function_description: Option<String>,
    #[serde(default)]
    pub seed: u64,
}

impl IntegrationTask {
    pub fn new(
        device_brand: impl Into<String>,
        device_model: impl Into<String>,
        platform_id: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let task = Self {
            device_brand: device_brand.into(),
            device_model: device_model.into(),
            platform_id: platform_id.into(),
            serial_number: None,
            device_key: None,
            function_description: None,
            seed: 0,
        };
        task.validate()?;
        Ok(task)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (field, value) in [
            ("device_brand", &self.device_brand),
            ("device_model", &self.device_model),
            ("platform_id", &self.platform_id),
        ] {
            if value.trim().is_empty() {
                return Err(ModelError::InvalidInput(format!("{field} must not be empty")));
            }
        }
        Ok(())
    }

    /// Stable identity of the task, independent of seed and credentials.
    pub fn fingerprint(&self) -> String {
        format!("{}/{}@{}", self.device_brand, self.device_model, self.platform_id)
    }
}

/// Closed taxonomy of device functions. Drives dummy values and test shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionKind {
    UnaryCommand,
    BinaryToggle,
    RangedSetting,
    EnumeratedMode,
    ContinuousStream,
    SensorReadout,
}

impl FunctionKind {
    pub const ALL: [FunctionKind; 6] = [
        FunctionKind::UnaryCommand,
        FunctionKind::BinaryToggle,
        FunctionKind::RangedSetting,
        FunctionKind::EnumeratedMode,
        FunctionKind::ContinuousStream,
        FunctionKind::SensorReadout,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FunctionKind::UnaryCommand => "unary_command",
            FunctionKind::BinaryToggle => "binary_toggle",
            FunctionKind::RangedSetting => "ranged_setting",
            FunctionKind::EnumeratedMode => "enumerated_mode",
            FunctionKind::ContinuousStream => "continuous_stream",
            FunctionKind::SensorReadout => "sensor_readout",
        }
    }
}

impl std::fmt::Display for FunctionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Value domain of a function, where the kind needs one.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValueConstraints {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
}

impl ValueConstraints {
    pub fn is_empty(&self) -> bool {
        self.min.is_none() && self.max.is_none() && self.options.is_empty() && self.unit.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionDescriptor {
    pub function_id: String,
    pub name: String,
    pub kind: FunctionKind,
    #[serde(default)]
    pub description: String,
    #[serde(default, skip_serializing_if = "ValueConstraints::is_empty")]
    pub constraints: ValueConstraints,
}

impl FunctionDescriptor {
    pub fn new(function_id: impl Into<String>, name: impl Into<String>, kind: FunctionKind) -> Self {
        Self {
            function_id: function_id.into(),
            name: name.into(),
            kind,
            description: String::new(),
            constraints: ValueConstraints::default(),
        }
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = description.into();
        self
    }

    pub fn with_range(mut self, min: f64, max: f64) -> Self {
        self.constraints.min = Some(min);
        self.constraints.max = Some(max);
        self
    }

    pub fn with_options<I, S>(mut self, options: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.constraints.options = options.into_iter().map(Into::into).collect();
        self
    }

    /// Human-facing name with underscores turned into spaces.
    pub fn display_name(&self) -> String {
        if self.name.trim().is_empty() {
            self.function_id.replace('_', " ")
        } else {
            self.name.replace('_', " ")
        }
    }
}

/// Checks that function ids are unique within one device.
pub fn ensure_unique_ids(functions: &[FunctionDescriptor]) -> Result<(), ModelError> {
    let mut seen = std::collections::BTreeSet::new();
    for f in functions {
        if !seen.insert(f.function_id.as_str()) {
            return Err(ModelError::DuplicateFunction(f.function_id.clone()));
        }
    }
    Ok(())
}

/// Device complexity tier, derived from the number of functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DeviceTier {
    Tier1,
    Tier2,
    Tier3,
}

impl std::fmt::Display for DeviceTier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let n = match self {
            DeviceTier::Tier1 => 1,
            DeviceTier::Tier2 => 2,
            DeviceTier::Tier3 => 3,
        };
        write!(f, "Tier {n}")
    }
}

/// 1–6 functions is Tier 1, 7–10 is Tier 2, 11 or more is Tier 3.
pub fn classify_tier(function_count: i64) -> Result<DeviceTier, ModelError> {
    match function_count {
        i64::MIN..=0 => Err(ModelError::InvalidInput(format!(
            "function count must be positive, got {function_count}"
        ))),
        1..=6 => Ok(DeviceTier::Tier1),
        7..=10 => Ok(DeviceTier::Tier2),
        _ => Ok(DeviceTier::Tier3),
    }
}
