//! Profile tables: measured per-layer latency, per-action accuracy and
//! per-technique downtime, ingested from JSON files.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::candidate::Technique;
use crate::error::ProfileError;
use crate::graph::{LayerSpec, LayerType};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyRow {
    pub platform: String,
    pub layer_type: LayerType,
    pub input_h: u32,
    pub input_w: u32,
    pub input_c: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filters: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<u32>,
    pub ms: f64,
    /// Estimate produced by an external predictor, when one was recorded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimated_ms: Option<f64>,
}

impl LatencyRow {
    pub fn from_layer(platform: &str, layer: &LayerSpec, ms: f64) -> Self {
        LatencyRow {
            platform: platform.to_string(),
            layer_type: layer.layer_type,
            input_h: layer.input_shape.0,
            input_w: layer.input_shape.1,
            input_c: layer.input_channels,
            kernel: layer.kernel_size,
            stride: layer.stride,
            filters: layer.filters,
            units: layer.units,
            ms,
            estimated_ms: None,
        }
    }

    pub fn layer(&self) -> LayerSpec {
        LayerSpec {
            layer_type: self.layer_type,
            input_shape: (self.input_h, self.input_w),
            input_channels: self.input_c,
            kernel_size: self.kernel,
            stride: self.stride,
            filters: self.filters,
            units: self.units,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub model: String,
    pub technique: Technique,
    /// Exit id, skip id, or 0 for repartitioning.
    pub action: u32,
    pub measured: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimated: Option<f64>,
}

/// Observed downtime of a technique, reinstatement included.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DowntimeRow {
    pub model: String,
    pub technique: Technique,
    pub ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProfileTable {
    #[serde(default)]
    pub latency: Vec<LatencyRow>,
    #[serde(default)]
    pub accuracy: Vec<AccuracyRow>,
    #[serde(default)]
    pub downtime: Vec<DowntimeRow>,
}

impl ProfileTable {
    pub fn from_json(text: &str) -> Result<Self, ProfileError> {
        let table: ProfileTable = serde_json::from_str(text).map_err(|e| ProfileError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        table.validate()?;
        Ok(table)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile table serializes")
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        let non_negative = |section, row, field, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(ProfileError::Range {
                    section,
                    row,
                    field,
                    value: v,
                })
            }
        };
        let fraction = |section, row, field, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(ProfileError::Range {
                    section,
                    row,
                    field,
                    value: v,
                })
            }
        };

        let mut seen = HashSet::new();
        for (i, r) in self.latency.iter().enumerate() {
            non_negative("latency", i, "ms", r.ms)?;
            if let Some(e) = r.estimated_ms {
                non_negative("latency", i, "estimated_ms", e)?;
            }
            if !seen.insert((r.platform.clone(), r.layer())) {
                return Err(ProfileError::DuplicateKey {
                    section: "latency",
                    key: format!("{}/{:?}", r.platform, r.layer()),
                });
            }
        }
        let mut seen = HashSet::new();
        for (i, r) in self.accuracy.iter().enumerate() {
            fraction("accuracy", i, "measured", r.measured)?;
            if let Some(e) = r.estimated {
                fraction("accuracy", i, "estimated", e)?;
            }
            if !seen.insert((r.model.clone(), r.technique, r.action)) {
                return Err(ProfileError::DuplicateKey {
                    section: "accuracy",
                    key: format!("{}/{}/{}", r.model, r.technique, r.action),
                });
            }
        }
        let mut seen = HashSet::new();
        for (i, r) in self.downtime.iter().enumerate() {
            non_negative("downtime", i, "ms", r.ms)?;
            if !seen.insert((r.model.clone(), r.technique)) {
                return Err(ProfileError::DuplicateKey {
                    section: "downtime",
                    key: format!("{}/{}", r.model, r.technique),
                });
            }
        }
        Ok(())
    }

    pub fn platforms(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.latency {
            if !out.contains(&r.platform) {
                out.push(r.platform.clone());
            }
        }
        out
    }

    pub fn measured_accuracy(&self, model: &str, technique: Technique, action: u32) -> Option<f64> {
        self.accuracy
            .iter()
            .find(|r| r.model == model && r.technique == technique && r.action == action)
            .map(|r| r.measured)
    }

    /// Concatenates `other` into `self`, re-validating keys.
    pub fn merge(&mut self, other: ProfileTable) -> Result<(), ProfileError> {
        self.latency.extend(other.latency);
        self.accuracy.extend(other.accuracy);
        self.downtime.extend(other.downtime);
        self.validate()
    }
}

pub fn load_profiles(path: &Path) -> Result<ProfileTable, ProfileError> {
    let text = std::fs::read_to_string(path).map_err(|e| ProfileError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    ProfileTable::from_json(&text)
}
