//! Normality scores computed from a trained sub-cluster classifier.
//!
//! Every detector is oriented so that a higher score means "more normal".

mod knn;
mod report;

use serde::{Deserialize, Serialize};

pub use knn::{score_knn, KnnAggregation, KnnIndex, KnnMetric};
pub use report::ScoreReport;

use crate::classifier::{forward, input_gradients, MlpModel};
use crate::error::{Error, Result};
use crate::numerics::{check_temperature, log_softmax, Matrix};

pub const DEFAULT_ODIN_TEMPERATURE: f64 = 1000.0;
pub const DEFAULT_ODIN_EPSILON: f64 = 0.0012;

/// Rows scored per forward pass in the batch paths.
const CHUNK: usize = 512;

/// Per-feature clamp bounds for perturbed inputs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputBox {
    pub low: f64,
    pub high: f64,
}

impl InputBox {
    pub const UNIT: InputBox = InputBox { low: 0.0, high: 1.0 };

    fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.low, self.high)
    }
}

fn one() -> f64 {
    1.0
}
fn odin_t() -> f64 {
    DEFAULT_ODIN_TEMPERATURE
}
fn odin_eps() -> f64 {
    DEFAULT_ODIN_EPSILON
}
fn yes() -> bool {
    true
}
fn k_one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Detector {
    /// Maximum softmax probability.
    Msp {
        #[serde(default = "one")]
        temperature: f64,
    },
    /// Maximum softmax probability after a signed-gradient ascent step on the input.
    Odin {
        #[serde(default = "odin_t")]
        temperature: f64,
        #[serde(default = "odin_eps")]
        epsilon: f64,
        #[serde(default = "yes")]
        clamp: bool,
    },
    /// KL divergence of the softmax output from the uniform distribution.
    #[serde(rename = "kl")]
    KlUniform,
    /// Similarity to the nearest training embeddings.
    Knn {
        #[serde(default = "k_one")]
        k: usize,
        metric: KnnMetric,
        #[serde(default)]
        aggregation: KnnAggregation,
    },
}

/// A detector together with the input domain it may perturb within.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreMethod {
    #[serde(flatten)]
    pub detector: Detector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_box: Option<InputBox>,
    /// Overrides the column label used in result tables.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl ScoreMethod {
    pub fn new(detector: Detector) -> Self {
        Self {
            detector,
            input_box: None,
            label: None,
        }
    }

    pub fn msp() -> Self {
        Self::new(Detector::Msp { temperature: 1.0 })
    }

    pub fn odin(temperature: f64, epsilon: f64) -> Self {
        Self::new(Detector::Odin {
            temperature,
            epsilon,
            clamp: true,
        })
        .with_box(InputBox::UNIT)
    }

    pub fn kl() -> Self {
        Self::new(Detector::KlUniform)
    }

    pub fn knn(k: usize, metric: KnnMetric) -> Self {
        Self::new(Detector::Knn {
            k,
            metric,
            aggregation: KnnAggregation::Mean,
        })
    }

    pub fn with_box(mut self, input_box: InputBox) -> Self {
        self.input_box = Some(input_box);
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    /// Column label: `MAX`, `ODIN`, `KL`, or `KNN-<metric>-K<k>` unless overridden.
    pub fn name(&self) -> String {
        if let Some(l) = &self.label {
            return l.clone();
        }
        match &self.detector {
            Detector::Msp { .. } => "MAX".into(),
            Detector::Odin { .. } => "ODIN".into(),
            Detector::KlUniform => "KL".into(),
            Detector::Knn { k, metric, aggregation } => match aggregation {
                KnnAggregation::Mean => format!("KNN-{}-K{k}", metric.as_str()),
                KnnAggregation::Kth => format!("KNN-{}-K{k}-kth", metric.as_str()),
            },
        }
    }

    pub fn uses_classifier(&self) -> bool {
        !matches!(self.detector, Detector::Knn { .. })
    }

    pub fn validate(&self) -> Result<()> {
        match &self.detector {
            Detector::Msp { temperature } => check_temperature(*temperature),
            Detector::Odin {
                temperature,
                epsilon,
                clamp,
            } => {
                check_temperature(*temperature)?;
                if !(*epsilon >= 0.0 && epsilon.is_finite()) {
                    return Err(Error::param(format!("ODIN epsilon = {epsilon}")));
                }
                if *epsilon > 0.0 && *clamp && self.input_box.is_none() {
                    return Err(Error::Config("ODIN with clamping needs an input_box".into()));
                }
                Ok(())
            }
            Detector::KlUniform => Ok(()),
            Detector::Knn { k, .. } => {
                if *k == 0 {
                    return Err(Error::param("kNN needs K ≥ 1"));
                }
                Ok(())
            }
        }
    }
}

/// Binary outcome of thresholding a score.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Normal,
    Anomaly,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionConfig {
    pub gamma: f64,
}

/// `Normal` iff `score > gamma`.
pub fn decide(score: f64, config: &DecisionConfig) -> Decision {
    if score > config.gamma {
        Decision::Normal
    } else {
        Decision::Anomaly
    }
}

fn single(x: &[f64]) -> Result<Matrix> {
    Matrix::new(1, x.len(), x.to_vec())
}

fn max_prob_rows(model: &MlpModel, batch: &Matrix, temperature: f64) -> Result<Vec<f64>> {
    let f = forward(model, batch, temperature)?;
    Ok(f.probs
        .iter_rows()
        .map(|p| p.iter().copied().fold(0.0, f64::max))
        .collect())
}

fn odin_rows(
    model: &MlpModel,
    batch: &Matrix,
    temperature: f64,
    epsilon: f64,
    input_box: Option<InputBox>,
) -> Result<Vec<f64>> {
    if epsilon == 0.0 {
        return max_prob_rows(model, batch, temperature);
    }
    let grads = input_gradients(model, batch, temperature)?;
    let mut perturbed = batch.as_slice().to_vec();
    for (x, g) in perturbed.iter_mut().zip(grads.as_slice()) {
        let step = if *g > 0.0 {
            epsilon
        } else if *g < 0.0 {
            -epsilon
        } else {
            0.0
        };
        *x += step;
        if let Some(b) = &input_box {
            *x = b.clamp(*x);
        }
    }
    max_prob_rows(model, &Matrix::new(batch.rows(), batch.cols(), perturbed)?, temperature)
}

fn kl_rows(model: &MlpModel, batch: &Matrix) -> Result<Vec<f64>> {
    let f = forward(model, batch, 1.0)?;
    let ln_k = (model.num_classes() as f64).ln();
    Ok(f.logits
        .iter_rows()
        .map(|z| {
            let neg_entropy: f64 = log_softmax(z, 1.0)
                .iter()
                .map(|&lp| {
                    let p = lp.exp();
                    if p > 0.0 {
                        p * lp
                    } else {
                        0.0
                    }
                })
                .sum();
            (ln_k + neg_entropy).clamp(0.0, ln_k)
        })
        .collect())
}

/// Maximum softmax probability at temperature `temperature`.
pub fn score_msp(model: &MlpModel, x: &[f64], temperature: f64) -> Result<f64> {
    Ok(max_prob_rows(model, &single(x)?, temperature)?[0])
}

/// ODIN score: `x̃ = x + ε · sign(∇ₓ log S_ŷ(x; T))`, clamped to `input_box`
/// when one is given, scored by the maximum softmax probability of `x̃` at `T`.
/// With `ε = 0` the input is left untouched.
pub fn score_odin(
    model: &MlpModel,
    x: &[f64],
    temperature: f64,
    epsilon: f64,
    input_box: Option<InputBox>,
) -> Result<f64> {
    if epsilon.is_nan() || epsilon < 0.0 {
        return Err(Error::param(format!("ODIN epsilon = {epsilon}")));
    }
    Ok(odin_rows(model, &single(x)?, temperature, epsilon, input_box)?[0])
}

/// `KL(p ‖ uniform) = ln k − H(p)` at temperature 1.
pub fn score_kl_uniform(model: &MlpModel, x: &[f64]) -> Result<f64> {
    Ok(kl_rows(model, &single(x)?)?[0])
}

/// Last-hidden-layer activations, one row per input row.
pub fn extract_embeddings(model: &MlpModel, data: &Matrix) -> Result<Matrix> {
    let mut rows = Vec::with_capacity(data.rows());
    let mut cols = 0;
    for start in (0..data.rows()).step_by(CHUNK) {
        let idx: Vec<usize> = (start..(start + CHUNK).min(data.rows())).collect();
        let f = forward(model, &data.select_rows(&idx), 1.0)?;
        cols = f.hidden.cols();
        rows.extend_from_slice(f.hidden.as_slice());
    }
    if data.rows() == 0 {
        forward(model, data, 1.0)?;
        cols = model.layer_dims()[model.layer_dims().len().saturating_sub(2)];
    }
    Matrix::new(data.rows(), cols, rows)
}

/// Scores every row of `data`. kNN detectors need `reference`, an index over
/// the training embeddings; `data` rows are embedded with `model` first.
pub fn score_rows(
    model: &MlpModel,
    data: &Matrix,
    method: &ScoreMethod,
    reference: Option<&KnnIndex>,
) -> Result<Vec<f64>> {
    method.validate()?;
    if let Detector::Knn { k, metric, aggregation } = &method.detector {
        let index = reference.ok_or_else(|| Error::Config("kNN scoring needs a reference index".into()))?;
        if index.metric() != *metric {
            return Err(Error::Config("reference index built for a different metric".into()));
        }
        let emb = extract_embeddings(model, data)?;
        return emb.iter_rows().map(|q| index.score(q, *k, *aggregation)).collect();
    }
    let mut out = Vec::with_capacity(data.rows());
    for start in (0..data.rows()).step_by(CHUNK) {
        let idx: Vec<usize> = (start..(start + CHUNK).min(data.rows())).collect();
        let batch = data.select_rows(&idx);
        let scores = match &method.detector {
            Detector::Msp { temperature } => max_prob_rows(model, &batch, *temperature)?,
            Detector::Odin {
                temperature,
                epsilon,
                clamp,
            } => odin_rows(
                model,
                &batch,
                *temperature,
                *epsilon,
                if *clamp { method.input_box } else { None },
            )?,
            Detector::KlUniform => kl_rows(model, &batch)?,
            Detector::Knn { .. } => unreachable!(),
        };
        out.extend(scores);
    }
    Ok(out)
}
