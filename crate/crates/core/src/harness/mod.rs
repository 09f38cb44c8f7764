//! Config-driven experiments: one JSON document describes a dataset, a
//! protocol, a clustering, a classifier recipe and a list of detectors.

mod knn;
mod manifest;
mod plot;
mod run;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use knn::{knn_experiment, KnnExperimentConfig, KnnResultRow};
pub use manifest::{OutputFile, RunManifest, RunStatus, StageRecord};
pub use plot::{sweep_svg, SweepSeries};
pub use run::{run_experiment, sweep_clusters, ResultRow, SweepOutcome};

use crate::classifier::TrainConfig;
use crate::dataset::{MixtureComponent, ProtocolSpec};
use crate::error::{Error, Result};
use crate::scoring::{Detector, InputBox, ScoreMethod};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    /// IDX image/label pair; pixels are scaled to [0, 1].
    Idx {
        images: PathBuf,
        labels: PathBuf,
    },
    Csv {
        path: PathBuf,
        label_column: String,
    },
    Synthetic {
        components: Vec<MixtureComponent>,
    },
}

fn default_n_init() -> usize {
    crate::clustering::DEFAULT_N_INIT
}
fn default_max_iters() -> usize {
    300
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum ClusteringSpec {
    /// One experiment per k, each clustering train-normal from scratch.
    Kmeans {
        k_list: Vec<usize>,
        #[serde(default = "default_n_init")]
        n_init: usize,
        #[serde(default = "default_max_iters")]
        max_iters: usize,
    },
    /// Normal class labels are the sub-clusters.
    Labels,
    /// Normal classes are merged into groups first; the groups are the sub-clusters.
    GroupingMap { map: BTreeMap<usize, usize> },
}

fn default_hidden() -> Vec<usize> {
    vec![256, 128]
}
fn default_repeats() -> usize {
    1
}
fn yes() -> bool {
    true
}

/// One experiment. Every random choice derives from `seed`: repeat `r` runs
/// with seed `seed + r`, which drives the protocol split, k-means, weight
/// initialisation and batch order. The `seed` fields inside `protocol` and
/// `train` are overwritten accordingly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub dataset: DatasetSource,
    pub protocol: ProtocolSpec,
    pub clustering: ClusteringSpec,
    /// Hidden widths; the input and output widths follow from the data and k.
    #[serde(default = "default_hidden")]
    pub hidden_dims: Vec<usize>,
    #[serde(default)]
    pub train: TrainConfig,
    pub detectors: Vec<ScoreMethod>,
    /// Fallback clamp box for detectors that perturb inputs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_box: Option<InputBox>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    /// Write a per-run score dump next to the results.
    #[serde(default = "yes")]
    pub save_scores: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file; relative dataset paths are taken relative to it.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut config = Self::from_json(&std::fs::read_to_string(path)?)?;
        if let Some(dir) = path.parent() {
            config.resolve_paths(dir);
        }
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.dataset {
            DatasetSource::Idx { images, labels } => {
                fix(images);
                fix(labels);
            }
            DatasetSource::Csv { path, .. } => fix(path),
            DatasetSource::Synthetic { .. } => {}
        }
        if let Some(out) = &mut self.out {
            fix(out);
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.repeats as u64).map(|r| self.seed.wrapping_add(r)).collect()
    }

    /// Detectors with the config-level input box filled in where they have none.
    pub fn resolved_detectors(&self) -> Vec<ScoreMethod> {
        self.detectors
            .iter()
            .map(|d| {
                let mut d = d.clone();
                if d.input_box.is_none() {
                    d.input_box = self.input_box;
                }
                d
            })
            .collect()
    }

    /// The k values this config will train at, when known before loading data.
    pub fn k_list(&self) -> Option<&[usize]> {
        match &self.clustering {
            ClusteringSpec::Kmeans { k_list, .. } => Some(k_list),
            _ => None,
        }
    }

    /// Checks everything that can be checked without touching the data.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.detectors.is_empty() {
            return bad("at least one detector is required".into());
        }
        let mut names = std::collections::BTreeSet::new();
        for d in self.resolved_detectors() {
            d.validate()
                .map_err(|e| Error::Config(format!("detector {}: {e}", d.name())))?;
            if !names.insert(d.name()) {
                return bad(format!("detector name {} appears twice", d.name()));
            }
        }
        if self.repeats == 0 {
            return bad("repeats must be at least 1".into());
        }
        if self.hidden_dims.contains(&0) {
            return bad("hidden layer widths must be positive".into());
        }
        match &self.clustering {
            ClusteringSpec::Kmeans { k_list, n_init, .. } => {
                if k_list.is_empty() {
                    return bad("k_list is empty".into());
                }
                // Every detector, kNN included, reads the trained sub-cluster classifier.
                if let Some(k) = k_list.iter().find(|&&k| k < 2) {
                    return bad(format!("k = {k}: the classifier needs at least 2 sub-clusters"));
                }
                let mut seen = std::collections::BTreeSet::new();
                if let Some(k) = k_list.iter().find(|k| !seen.insert(**k)) {
                    return bad(format!("k = {k} listed twice"));
                }
                if *n_init == 0 {
                    return bad("n_init must be at least 1".into());
                }
            }
            ClusteringSpec::Labels => {
                if self.protocol.normal_classes.len() < 2 && self.protocol.grouping_map.is_none() {
                    return bad("labels as clusters needs at least 2 normal classes".into());
                }
            }
            ClusteringSpec::GroupingMap { map } => {
                let groups: std::collections::BTreeSet<_> =
                    self.protocol.normal_classes.iter().filter_map(|c| map.get(c)).collect();
                if groups.len() < 2 {
                    return bad("grouping map must produce at least 2 groups".into());
                }
            }
        }
        if self
            .detectors
            .iter()
            .any(|d| matches!(d.detector, Detector::Knn { .. }))
            && self.protocol.test_fraction >= 1.0
        {
            return bad("kNN detectors need training samples as references".into());
        }
        Ok(())
    }
}

/// Lowercase hex SHA-256.
pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "dataset": {"kind": "synthetic", "components": [
            {"mean": [0.0], "std_dev": [1.0], "count": 10, "class_id": 0}
        ]},
        "protocol": {"normal_classes": [0], "anomaly_classes": [1]},
        "clustering": {"method": "kmeans", "k_list": [2, 4]},
        "detectors": [{"kind": "msp"}, {"kind": "odin", "epsilon": 0.0}, {"kind": "knn", "k": 3, "metric": "cosine"}]
    }"#;

    #[test]
    fn parses_with_defaults() {
        let c = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.hidden_dims, vec![256, 128]);
        assert_eq!(c.train, TrainConfig::default());
        assert_eq!(c.repeats, 1);
        assert_eq!(c.protocol.test_fraction, 0.2);
        let names: Vec<_> = c.detectors.iter().map(|d| d.name()).collect();
        assert_eq!(names, ["MAX", "ODIN", "KNN-cosine-K3"]);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn rejects_degenerate_configs() {
        let mut c = ExperimentConfig::from_json(MINIMAL).unwrap();
        c.clustering = ClusteringSpec::Kmeans {
            k_list: vec![1],
            n_init: 5,
            max_iters: 300,
        };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.clustering = ClusteringSpec::Kmeans {
            k_list: vec![],
            n_init: 5,
            max_iters: 300,
        };
        assert!(c.validate().is_err());

        let mut c = ExperimentConfig::from_json(MINIMAL).unwrap();
        c.detectors.clear();
        assert!(c.validate().is_err());

        let mut c = ExperimentConfig::from_json(MINIMAL).unwrap();
        c.detectors = vec![ScoreMethod::new(Detector::Odin {
            temperature: 1000.0,
            epsilon: 0.001,
            clamp: true,
        })];
        assert!(c.validate().is_err());
        c.input_box = Some(InputBox::UNIT);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn unknown_detector_is_a_config_error() {
        let text = MINIMAL.replace(r#"{"kind": "msp"}"#, r#"{"kind": "mahalanobis"}"#);
        assert!(matches!(ExperimentConfig::from_json(&text), Err(Error::Config(_))));
    }
}
