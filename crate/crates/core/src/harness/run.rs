use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::manifest::indices_checksum;
use super::plot::{sweep_svg, SweepSeries};
use super::{ClusteringSpec, DatasetSource, ExperimentConfig, RunManifest, RunStatus, StageRecord};
use crate::classifier::{init_model, train, MlpModel};
use crate::clustering::{assign_pseudo_labels, kmeans_fit_with, labels_as_clusters, KMeansConfig, PseudoLabeledSet};
use crate::dataset::{build_protocol, load_csv, load_idx, synth_mixture, DatasetSplit, LabeledDataset, Role};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalResult};
use crate::numerics::Matrix;
use crate::scoring::{extract_embeddings, score_rows, Detector, KnnIndex, ScoreMethod, ScoreReport};

/// One line of `results.csv`. `seed` is the run seed, or `mean` for the
/// average over repeats.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub seed: String,
    pub k: usize,
    pub method: String,
    pub auroc: f64,
    pub n_normal: usize,
    pub n_anomaly: usize,
}

pub const RESULTS_HEADER: &str = "seed,k,method,auroc,n_normal,n_anomaly";

fn results_csv(rows: &[ResultRow]) -> String {
    let mut s = String::from(RESULTS_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.seed, r.k, r.method, r.auroc, r.n_normal, r.n_anomaly
        ));
    }
    s
}

#[derive(Serialize)]
struct ResultsJson<'a> {
    name: &'a str,
    rows: &'a [ResultRow],
}

fn load_dataset(source: &DatasetSource, seed: u64) -> Result<LabeledDataset> {
    match source {
        DatasetSource::Idx { images, labels } => load_idx(images, labels),
        DatasetSource::Csv { path, label_column } => load_csv(path, Some(label_column)),
        DatasetSource::Synthetic { components } => synth_mixture(components, seed),
    }
}

struct Runner<'a> {
    config: &'a ExperimentConfig,
    dir: &'a Path,
    manifest: RunManifest,
    written: Vec<String>,
}

impl Runner<'_> {
    fn stage<T>(
        &mut self,
        seed: u64,
        k: Option<usize>,
        stage: &'static str,
        inputs: &[&LabeledDataset],
        f: impl FnOnce() -> Result<T>,
    ) -> Result<T> {
        let start = Instant::now();
        let out = f().map_err(|e| e.in_stage(stage))?;
        let indices: Vec<usize> = inputs.iter().flat_map(|d| d.source_index().iter().copied()).collect();
        let mut roles: Vec<Role> = inputs.iter().filter_map(|d| d.role()).collect();
        roles.dedup();
        self.manifest.stages.push(StageRecord {
            seed,
            k,
            stage: stage.to_string(),
            wall_secs: start.elapsed().as_secs_f64(),
            inputs: roles,
            n_samples: indices.len(),
            source_sha256: indices_checksum(&indices),
        });
        Ok(out)
    }

    fn write(&mut self, rel: &str, contents: &[u8]) -> Result<()> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        self.written.push(rel.to_string());
        std::fs::write(path, contents)?;
        Ok(())
    }

    fn execute(&mut self) -> Result<Vec<ResultRow>> {
        let config = self.config;
        let detectors = config.resolved_detectors();
        let mut cells: BTreeMap<(u64, usize, usize), EvalResult> = BTreeMap::new();
        let mut cached: Option<LabeledDataset> = None;

        for seed in config.seeds() {
            let data = match (&config.dataset, &cached) {
                (DatasetSource::Synthetic { .. }, _) | (_, None) => {
                    let d = self.stage(seed, None, "load", &[], || load_dataset(&config.dataset, seed))?;
                    if !matches!(config.dataset, DatasetSource::Synthetic { .. }) {
                        cached = Some(d.clone());
                    }
                    d
                }
                (_, Some(d)) => d.clone(),
            };
            let mut spec = config.protocol.clone();
            spec.seed = seed;
            if let ClusteringSpec::GroupingMap { map } = &config.clustering {
                spec.grouping_map = Some(map.clone());
            }
            let split = self.stage(seed, None, "protocol", &[&data], || build_protocol(&data, &spec))?;

            let ks = match &config.clustering {
                ClusteringSpec::Kmeans { k_list, .. } => k_list.clone(),
                _ => vec![split.train_normal.class_count()],
            };
            for k in ks {
                let set = self.stage(seed, Some(k), "cluster", &[&split.train_normal], || {
                    cluster(config, &split.train_normal, k, seed)
                })?;
                let model = self.stage(seed, Some(k), "train", &[&split.train_normal], || {
                    let mut dims = vec![data.dim()];
                    dims.extend(&config.hidden_dims);
                    dims.push(set.k());
                    let mut recipe = config.train.clone();
                    recipe.seed = seed;
                    Ok(train(&init_model(&dims, seed)?, &set, &recipe)?.0)
                })?;
                let parts = [&split.train_normal, &split.test_normal, &split.test_anomaly];
                let reports = self.stage(seed, Some(k), "score", &parts, || score_all(&model, &split, &detectors))?;
                let evals = self.stage(seed, Some(k), "eval", &parts[1..], || {
                    reports.iter().map(evaluate).collect::<Result<Vec<_>>>()
                })?;
                for (d, e) in evals.into_iter().enumerate() {
                    cells.insert((seed, k, d), e);
                }
                if config.save_scores {
                    let mut buf = Vec::new();
                    {
                        use std::io::Write;
                        writeln!(buf, "{}", ScoreReport::CSV_HEADER)?;
                        for r in &reports {
                            r.write_rows(&mut buf)?;
                        }
                    }
                    self.write(&format!("scores/seed{seed}_k{k}.csv"), &buf)?;
                }
            }
        }

        for stage in ["cluster", "train"] {
            let roles = self.manifest.stage_roles(stage);
            if roles.iter().any(|r| *r != Role::TrainNormal) {
                return Err(Error::Consistency(format!("{stage} stage consumed {roles:?}")));
            }
        }
        Ok(collect_rows(config, &detectors, &cells))
    }
}

fn cluster(config: &ExperimentConfig, train_normal: &LabeledDataset, k: usize, seed: u64) -> Result<PseudoLabeledSet> {
    match &config.clustering {
        ClusteringSpec::Kmeans { n_init, max_iters, .. } => {
            let km = KMeansConfig {
                n_init: *n_init,
                max_iters: *max_iters,
                ..KMeansConfig::new(k, seed)
            };
            let fitted = kmeans_fit_with(train_normal.features(), &km)?;
            assign_pseudo_labels(&fitted, train_normal.features())
        }
        ClusteringSpec::Labels | ClusteringSpec::GroupingMap { .. } => labels_as_clusters(train_normal),
    }
}

fn score_all(model: &MlpModel, split: &DatasetSplit, detectors: &[ScoreMethod]) -> Result<Vec<ScoreReport>> {
    let (test_x, roles) = split.test_set();
    let sample_index: Vec<usize> = split
        .test_normal
        .source_index()
        .iter()
        .chain(split.test_anomaly.source_index())
        .copied()
        .collect();
    let mut train_embeddings: Option<Matrix> = None;
    let mut indices: BTreeMap<&'static str, KnnIndex> = BTreeMap::new();
    let mut reports = Vec::with_capacity(detectors.len());
    for method in detectors {
        let reference = match &method.detector {
            Detector::Knn { metric, .. } => {
                if train_embeddings.is_none() {
                    train_embeddings = Some(extract_embeddings(model, split.train_normal.features())?);
                }
                let emb = train_embeddings.as_ref().unwrap();
                if !indices.contains_key(metric.as_str()) {
                    indices.insert(metric.as_str(), KnnIndex::new(emb.clone(), *metric)?);
                }
                indices.get(metric.as_str())
            }
            _ => None,
        };
        let scores = score_rows(model, &test_x, method, reference)?;
        reports.push(ScoreReport::new(
            method.name(),
            scores,
            roles.clone(),
            sample_index.clone(),
        )?);
    }
    Ok(reports)
}

fn collect_rows(
    config: &ExperimentConfig,
    detectors: &[ScoreMethod],
    cells: &BTreeMap<(u64, usize, usize), EvalResult>,
) -> Vec<ResultRow> {
    let mut rows: Vec<ResultRow> = cells
        .iter()
        .map(|((seed, k, _), e)| ResultRow {
            seed: seed.to_string(),
            k: *k,
            method: e.method.clone(),
            auroc: e.auroc,
            n_normal: e.n_normal,
            n_anomaly: e.n_anomaly,
        })
        .collect();
    if config.repeats > 1 {
        let mut groups: BTreeMap<(usize, usize), Vec<&EvalResult>> = BTreeMap::new();
        for ((_, k, d), e) in cells {
            groups.entry((*k, *d)).or_default().push(e);
        }
        for ((k, d), es) in groups {
            let mean = es.iter().map(|e| e.auroc).sum::<f64>() / es.len() as f64;
            rows.push(ResultRow {
                seed: "mean".into(),
                k,
                method: detectors[d].name(),
                auroc: mean,
                n_normal: es[0].n_normal,
                n_anomaly: es[0].n_anomaly,
            });
        }
    }
    rows
}

/// Runs every (seed, k) cell of an experiment and writes `results.csv`,
/// `results.json`, optional score dumps and `manifest.json` into `dir`.
///
/// The manifest is written first with status `running`. On failure the
/// result files written so far are removed and the manifest is marked
/// `invalid` with the error; the error itself carries the failing stage.
pub fn run_experiment(config: &ExperimentConfig, dir: &Path) -> Result<(RunManifest, Vec<ResultRow>)> {
    config.validate()?;
    std::fs::create_dir_all(dir)?;
    let mut runner = Runner {
        config,
        dir,
        manifest: RunManifest::start(config),
        written: Vec::new(),
    };
    runner.manifest.write(dir)?;

    let outcome = runner.execute().and_then(|rows| {
        runner.write("results.csv", results_csv(&rows).as_bytes())?;
        let json = serde_json::to_string_pretty(&ResultsJson {
            name: &config.name,
            rows: &rows,
        })
        .expect("results serialise");
        runner.write("results.json", (json + "\n").as_bytes())?;
        Ok(rows)
    });
    match outcome {
        Ok(rows) => {
            for rel in runner.written.clone() {
                runner.manifest.record_output(dir, &rel)?;
            }
            runner.manifest.status = RunStatus::Complete;
            runner.manifest.write(dir)?;
            Ok((runner.manifest, rows))
        }
        Err(e) => {
            for rel in &runner.written {
                let _ = std::fs::remove_file(dir.join(rel));
            }
            runner.manifest.status = RunStatus::Invalid;
            runner.manifest.error = Some(e.to_string());
            runner.manifest.write(dir)?;
            Err(e)
        }
    }
}

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub manifest: RunManifest,
    pub rows: Vec<ResultRow>,
    /// `(k, AUROC per detector in config order)`, averaged over repeats.
    pub table: Vec<(usize, Vec<f64>)>,
    pub methods: Vec<String>,
}

/// [`run_experiment`] over an ascending k-list, plus `sweep.csv` (one row per
/// k, one column per detector) and `sweep.svg`.
pub fn sweep_clusters(config: &ExperimentConfig, dir: &Path) -> Result<SweepOutcome> {
    match config.k_list() {
        Some(ks) if ks.windows(2).all(|w| w[0] < w[1]) => {}
        Some(_) => return Err(Error::Config("sweep k_list must be strictly ascending".into())),
        None => return Err(Error::Config("a sweep needs k-means clustering with a k_list".into())),
    }
    let (mut manifest, rows) = run_experiment(config, dir)?;
    let methods: Vec<String> = config.detectors.iter().map(|d| d.name()).collect();
    let wanted = if config.repeats > 1 {
        Some("mean".to_string())
    } else {
        None
    };
    let table: Vec<(usize, Vec<f64>)> = config
        .k_list()
        .unwrap()
        .iter()
        .map(|&k| {
            let vals = methods
                .iter()
                .map(|m| {
                    rows.iter()
                        .find(|r| r.k == k && &r.method == m && wanted.as_ref().is_none_or(|w| &r.seed == w))
                        .map(|r| r.auroc)
                        .expect("every cell was evaluated")
                })
                .collect();
            (k, vals)
        })
        .collect();

    let mut csv = format!("k,{}\n", methods.join(","));
    for (k, vals) in &table {
        let cols: Vec<String> = vals.iter().map(|v| v.to_string()).collect();
        csv.push_str(&format!("{k},{}\n", cols.join(",")));
    }
    let series: Vec<SweepSeries> = methods
        .iter()
        .enumerate()
        .map(|(i, m)| SweepSeries {
            label: m.clone(),
            points: table.iter().map(|(k, v)| (*k, v[i])).collect(),
        })
        .collect();
    let title = if config.name.is_empty() {
        "AUROC vs. number of clusters"
    } else {
        &config.name
    };
    std::fs::write(dir.join("sweep.csv"), csv)?;
    std::fs::write(dir.join("sweep.svg"), sweep_svg(title, &series))?;
    manifest.record_output(dir, "sweep.csv")?;
    manifest.record_output(dir, "sweep.svg")?;
    manifest.write(dir)?;
    Ok(SweepOutcome {
        manifest,
        rows,
        table,
        methods,
    })
}
