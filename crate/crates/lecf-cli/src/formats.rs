//! Versioned JSON containers: preprocessed bundles, training checkpoints
//! and metric records. Serialization is deterministic, so rerunning a
//! command over the same inputs produces byte-identical artifacts.

use std::fs;
use std::path::Path;

use lecf_core::graph::{BundleStats, GraphBundle};
use lecf_core::model::{ModelParams, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleFile {
    pub version: u32,
    pub stats: BundleStats,
    pub bundle: GraphBundle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointFile {
    pub version: u32,
    pub config: TrainConfig,
    /// Statistics of the bundle the model was trained on; evaluate/probe
    /// refuse to run against a different bundle.
    pub bundle_stats: BundleStats,
    pub params: ModelParams,
}

/// One machine-readable metric observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub metric: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub value: f64,
    pub split: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_e: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    pub seed: u64,
}

impl MetricRecord {
    pub fn new(metric: &str, k: Option<usize>, value: f64, split: &str, seed: u64) -> Self {
        MetricRecord {
            metric: metric.to_owned(),
            k,
            value,
            split: split.to_owned(),
            alpha: None,
            beta: None,
            p_e: None,
            mode: None,
            seed,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("cannot parse {}: {e}", path.display())))
}

pub fn write_bundle(path: &Path, bundle: &GraphBundle) -> CliResult<()> {
    let file =
        BundleFile { version: FORMAT_VERSION, stats: bundle.stats(), bundle: bundle.clone() };
    write_json(path, &file)
}

pub fn read_bundle(path: &Path) -> CliResult<GraphBundle> {
    let file: BundleFile = read_json(path)?;
    if file.version != FORMAT_VERSION {
        return Err(CliError::Data(format!(
            "{}: bundle format version {} (expected {FORMAT_VERSION})",
            path.display(),
            file.version
        )));
    }
    file.bundle.validate()?;
    Ok(file.bundle)
}

pub fn write_checkpoint(
    path: &Path,
    config: &TrainConfig,
    bundle_stats: BundleStats,
    params: &ModelParams,
) -> CliResult<()> {
    let file = CheckpointFile {
        version: FORMAT_VERSION,
        config: *config,
        bundle_stats,
        params: params.clone(),
    };
    write_json(path, &file)
}

/// Read a checkpoint, verifying the format version and (when given) that it
/// was trained on a bundle with matching statistics.
pub fn read_checkpoint(path: &Path, expect: Option<&BundleStats>) -> CliResult<CheckpointFile> {
    let file: CheckpointFile = read_json(path)?;
    if file.version != FORMAT_VERSION {
        return Err(CliError::Data(format!(
            "{}: checkpoint format version {} (expected {FORMAT_VERSION})",
            path.display(),
            file.version
        )));
    }
    if let Some(stats) = expect {
        if *stats != file.bundle_stats {
            return Err(CliError::Data(format!(
                "checkpoint/bundle mismatch: checkpoint trained on {:?}, bundle has {:?}",
                file.bundle_stats, stats
            )));
        }
    }
    Ok(file)
}
