//! Retained-filter report written by the pruning driver.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelManifest;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRetention {
    /// Fraction of the layer's original filters that survive.
    pub retention: f64,
    /// Sorted 1-based indices of surviving filters.
    pub retained: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub baseline_accuracy: f64,
    pub accuracy: f64,
    /// Keyed by layer id; serialized with string keys.
    pub layers: BTreeMap<u32, LayerRetention>,
}

impl PruneReport {
    /// Report that keeps every filter of every layer.
    pub fn identity(manifest: &ModelManifest, baseline_accuracy: f64) -> Self {
        PruneReport {
            baseline_accuracy,
            accuracy: baseline_accuracy,
            layers: manifest
                .layers
                .iter()
                .map(|l| {
                    (
                        l.id,
                        LayerRetention {
                            retention: 1.0,
                            retained: (1..=l.num_filters as u32).collect(),
                        },
                    )
                })
                .collect(),
        }
    }

    /// Sorted, duplicate-free, 1-based indices in every layer.
    pub fn validate(&self) -> Result<()> {
        for (id, layer) in &self.layers {
            if layer.retained.first() == Some(&0) {
                return Err(Error::InvalidReport(format!(
                    "layer {id}: indices are 1-based"
                )));
            }
            if layer.retained.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidReport(format!(
                    "layer {id}: retained indices must be strictly increasing"
                )));
            }
            if !(0.0..=1.0).contains(&layer.retention) {
                return Err(Error::InvalidReport(format!(
                    "layer {id}: retention {} outside [0, 1]",
                    layer.retention
                )));
            }
        }
        Ok(())
    }

    /// Checks indices against layer widths.
    pub fn validate_against(&self, manifest: &ModelManifest) -> Result<()> {
        self.validate()?;
        for (&id, layer) in &self.layers {
            let spec = manifest.layer(id)?;
            if let Some(&last) = layer.retained.last() {
                if last as usize > spec.num_filters {
                    return Err(Error::InvalidReport(format!(
                        "layer {id}: index {last} exceeds {} filters",
                        spec.num_filters
                    )));
                }
            }
        }
        Ok(())
    }

    /// Retained filter count per conv layer, in manifest order. Layers absent
    /// from the report keep all their filters.
    pub fn retained_counts(&self, manifest: &ModelManifest) -> Vec<usize> {
        manifest
            .layers
            .iter()
            .map(|l| {
                self.layers
                    .get(&l.id)
                    .map_or(l.num_filters, |r| r.retained.len())
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn write_report(report: &PruneReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    report.validate()?;
    fs::write(path, report.to_json() + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_report(path: impl AsRef<Path>) -> Result<PruneReport> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let report: PruneReport = serde_json::from_str(&text).map_err(|e| Error::MalformedReport {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    report.validate().map_err(|e| Error::MalformedReport {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    Ok(report)
}
