use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::sha256_hex;
use crate::dataset::{load_csv, load_csv_with_roles, Role};
use crate::error::{Error, Result};
use crate::eval::auroc;
use crate::scoring::{KnnAggregation, KnnIndex, KnnMetric};

fn role_column() -> String {
    "role".into()
}
fn both_metrics() -> Vec<KnnMetric> {
    vec![KnnMetric::Cosine, KnnMetric::Euclidean]
}

/// kNN scoring over precomputed embeddings. `reference` holds train-normal
/// embeddings (every column is a feature); `test` has the same feature
/// columns plus a role column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnnExperimentConfig {
    pub reference: PathBuf,
    pub test: PathBuf,
    #[serde(default = "role_column")]
    pub role_column: String,
    pub k_list: Vec<usize>,
    #[serde(default = "both_metrics")]
    pub metrics: Vec<KnnMetric>,
    #[serde(default)]
    pub aggregation: KnnAggregation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl KnnExperimentConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut c: Self =
            serde_json::from_str(&std::fs::read_to_string(path)?).map_err(|e| Error::Config(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut c.reference, &mut c.test] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(out) = &mut c.out {
            if out.is_relative() {
                *out = base.join(&*out);
            }
        }
        Ok(c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnnResultRow {
    pub k: usize,
    pub metric: KnnMetric,
    pub auroc: f64,
    pub n_normal: usize,
    pub n_anomaly: usize,
}

/// AUROC for every (K, metric) pair. Writes `knn_results.csv` and
/// `knn_results.json` to `dir` when given.
pub fn knn_experiment(config: &KnnExperimentConfig, dir: Option<&Path>) -> Result<Vec<KnnResultRow>> {
    if config.k_list.is_empty() || config.metrics.is_empty() {
        return Err(Error::Config("k_list and metrics must be nonempty".into()));
    }
    let reference = load_csv(&config.reference, None).map_err(|e| e.in_stage("load"))?;
    let (test, roles) = load_csv_with_roles(&config.test, &config.role_column).map_err(|e| e.in_stage("load"))?;
    if reference.dim() != test.cols() {
        return Err(Error::shape("knn_experiment", reference.dim(), test.cols()).in_stage("load"));
    }
    if let Some(k) = config.k_list.iter().find(|&&k| k == 0 || k > reference.len()) {
        return Err(Error::param(format!("K = {k} with {} reference rows", reference.len())));
    }

    let mut rows = Vec::new();
    for &metric in &config.metrics {
        let index = KnnIndex::new(reference.features().clone(), metric).map_err(|e| e.in_stage("score"))?;
        for &k in &config.k_list {
            let mut normal = Vec::new();
            let mut anomaly = Vec::new();
            for (q, role) in test.iter_rows().zip(&roles) {
                let s = index.score(q, k, config.aggregation).map_err(|e| e.in_stage("score"))?;
                match role {
                    Role::TestAnomaly => anomaly.push(s),
                    _ => normal.push(s),
                }
            }
            rows.push(KnnResultRow {
                k,
                metric,
                auroc: auroc(&normal, &anomaly).map_err(|e| e.in_stage("eval"))?,
                n_normal: normal.len(),
                n_anomaly: anomaly.len(),
            });
        }
    }

    if let Some(dir) = dir {
        std::fs::create_dir_all(dir)?;
        let mut csv = String::from("k,metric,auroc,n_normal,n_anomaly\n");
        for r in &rows {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                r.k,
                r.metric.as_str(),
                r.auroc,
                r.n_normal,
                r.n_anomaly
            ));
        }
        std::fs::write(dir.join("knn_results.csv"), &csv)?;
        let manifest = serde_json::json!({
            "config": config,
            "version": env!("CARGO_PKG_VERSION"),
            "reference_sha256": sha256_hex(&std::fs::read(&config.reference)?),
            "test_sha256": sha256_hex(&std::fs::read(&config.test)?),
            "rows": rows,
        });
        std::fs::write(
            dir.join("knn_results.json"),
            serde_json::to_string_pretty(&manifest).expect("serialises") + "\n",
        )?;
    }
    Ok(rows)
}
