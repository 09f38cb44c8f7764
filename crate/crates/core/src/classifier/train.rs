use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::mlp::{loss_grads_correct, MlpModel};
use crate::clustering::PseudoLabeledSet;
use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// Mini-batch SGD recipe: classical momentum, cosine-annealed step size, L2 weight decay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr0: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 0.1,
            momentum: 0.9,
            epochs: 30,
            batch_size: 128,
            weight_decay: 5e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self, n: usize) -> Result<()> {
        if !(self.lr0 >= 0.0 && self.lr0.is_finite()) {
            return Err(Error::param(format!("lr0 = {}", self.lr0)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::param(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::param(format!("weight_decay = {}", self.weight_decay)));
        }
        if self.epochs == 0 {
            return Err(Error::param("epochs must be at least 1"));
        }
        if self.batch_size == 0 || self.batch_size > n {
            return Err(Error::param(format!(
                "batch_size {} with {n} training samples",
                self.batch_size
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training cross-entropy of each epoch, accumulated while training.
    pub epoch_loss: Vec<f64>,
    pub epoch_accuracy: Vec<f64>,
    pub steps: usize,
    pub checksum: String,
    pub wall_time_secs: f64,
}

/// `0.5 · lr0 · (1 + cos(π · step / total_steps))`.
pub fn cosine_lr(step: usize, total_steps: usize, lr0: f64) -> Result<f64> {
    if step >= total_steps {
        return Err(Error::param(format!("step {step} outside 0..{total_steps}")));
    }
    let progress = step as f64 / total_steps as f64;
    Ok((0.5 * lr0 * (1.0 + (std::f64::consts::PI * progress).cos())).max(0.0))
}

/// Trains `model` on the pseudo-labels. Epoch `e` visits the samples in the
/// order given by sub-stream `("epoch", e)` of `config.seed`; the final
/// partial batch is kept.
pub fn train(model: &MlpModel, set: &PseudoLabeledSet, config: &TrainConfig) -> Result<(MlpModel, TrainReport)> {
    let start = Instant::now();
    if set.is_empty() {
        return Err(Error::param("empty training set"));
    }
    if set.k() != model.num_classes() {
        return Err(Error::shape("train", set.k(), model.layer_dims()));
    }
    if set.samples().cols() != model.input_dim() {
        return Err(Error::shape("train", set.samples().shape(), model.layer_dims()));
    }
    let n = set.len();
    config.validate(n)?;

    let steps_per_epoch = n.div_ceil(config.batch_size);
    let total_steps = config.epochs * steps_per_epoch;
    let root = RngStream::new(config.seed);

    let mut model = model.clone();
    let mut velocity: Vec<Vec<f64>> = model
        .layers()
        .iter()
        .flat_map(|l| [vec![0.0; l.weights.as_slice().len()], vec![0.0; l.bias.len()]])
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut report = TrainReport {
        epoch_loss: Vec::with_capacity(config.epochs),
        epoch_accuracy: Vec::with_capacity(config.epochs),
        steps: 0,
        checksum: String::new(),
        wall_time_secs: 0.0,
    };

    let mut step = 0;
    let mut labels = Vec::with_capacity(config.batch_size);
    for epoch in 0..config.epochs {
        root.substream("epoch", epoch as u64).shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for chunk in order.chunks(config.batch_size) {
            let batch = set.samples().select_rows(chunk);
            labels.clear();
            labels.extend(chunk.iter().map(|&i| set.labels()[i]));
            let (loss, grads, hits) = loss_grads_correct(&model, &batch, &labels)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            loss_sum += loss * chunk.len() as f64;
            correct += hits;

            let lr = cosine_lr(step, total_steps, config.lr0)?;
            let params = model
                .layers_mut()
                .iter_mut()
                .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()]);
            let grads = grads
                .layers
                .iter()
                .flat_map(|g| [g.weights.as_slice(), g.bias.as_slice()]);
            for ((theta, g), v) in params.zip(grads).zip(velocity.iter_mut()) {
                for ((t, &gi), vi) in theta.iter_mut().zip(g).zip(v.iter_mut()) {
                    let gi = gi + config.weight_decay * *t;
                    *vi = config.momentum * *vi - lr * gi;
                    *t += *vi;
                }
            }
            step += 1;
        }
        let epoch_loss = loss_sum / n as f64;
        if !epoch_loss.is_finite() || model.parameters().iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        report.epoch_loss.push(epoch_loss);
        report.epoch_accuracy.push(correct as f64 / n as f64);
    }

    report.steps = step;
    report.checksum = model.checksum();
    report.wall_time_secs = start.elapsed().as_secs_f64();
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::init_model;
    use crate::clustering::Provenance;
    use crate::dataset::{synth_mixture, MixtureComponent};

    fn two_blobs() -> PseudoLabeledSet {
        let d = synth_mixture(
            &[
                MixtureComponent::isotropic(vec![-2.0, 0.0], 0.5, 100, 0),
                MixtureComponent::isotropic(vec![2.0, 0.0], 0.5, 100, 1),
            ],
            3,
        )
        .unwrap();
        PseudoLabeledSet::new(
            d.features().clone(),
            d.labels().unwrap().to_vec(),
            2,
            Provenance::Labels,
        )
        .unwrap()
    }

    #[test]
    fn cosine_schedule_points() {
        assert_eq!(cosine_lr(0, 100, 0.1).unwrap(), 0.1);
        assert!((cosine_lr(50, 100, 0.1).unwrap() - 0.05).abs() < 1e-15);
        assert!(cosine_lr(99, 100, 0.1).unwrap() < 0.001);
        assert!(matches!(cosine_lr(100, 100, 0.1), Err(Error::Parameter(_))));
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let set = two_blobs();
        let model = init_model(&[2, 8, 2], 1).unwrap();
        let config = TrainConfig {
            lr0: 0.0,
            epochs: 3,
            batch_size: 32,
            ..Default::default()
        };
        let (trained, report) = train(&model, &set, &config).unwrap();
        assert_eq!(trained.checksum(), model.checksum());
        assert_eq!(report.checksum, model.checksum());
    }

    #[test]
    fn separable_blobs_are_learned() {
        let set = two_blobs();
        let model = init_model(&[2, 16, 2], 2).unwrap();
        let config = TrainConfig {
            epochs: 50,
            batch_size: 20,
            lr0: 0.05,
            ..Default::default()
        };
        let (trained, report) = train(&model, &set, &config).unwrap();
        assert!(
            *report.epoch_accuracy.last().unwrap() >= 0.99,
            "{:?}",
            report.epoch_accuracy
        );
        // re-check on the final parameters rather than the running estimate
        let f = crate::classifier::forward(&trained, set.samples(), 1.0).unwrap();
        let hits = (0..set.len())
            .filter(|&i| crate::numerics::argmax(f.probs.row(i)) == set.labels()[i])
            .count();
        assert!(hits as f64 >= 0.99 * set.len() as f64);
    }

    #[test]
    fn identical_runs_are_bitwise_equal() {
        let set = two_blobs();
        let model = init_model(&[2, 8, 2], 5).unwrap();
        let config = TrainConfig {
            epochs: 4,
            batch_size: 16,
            ..Default::default()
        };
        let (_, a) = train(&model, &set, &config).unwrap();
        let (_, b) = train(&model, &set, &config).unwrap();
        assert_eq!(a.checksum, b.checksum);
        assert_eq!(a.epoch_loss, b.epoch_loss);
    }

    #[test]
    fn divergence_is_reported_with_epoch() {
        let set = two_blobs();
        let model = init_model(&[2, 8, 2], 5).unwrap();
        let config = TrainConfig {
            lr0: 1e200,
            epochs: 3,
            batch_size: 10,
            ..Default::default()
        };
        assert!(matches!(
            train(&model, &set, &config),
            Err(Error::Diverged { epoch: 0 })
        ));
    }

    #[test]
    fn config_errors() {
        let set = two_blobs();
        let model = init_model(&[2, 8, 2], 5).unwrap();
        let too_big = TrainConfig {
            batch_size: 1000,
            ..Default::default()
        };
        assert!(matches!(train(&model, &set, &too_big), Err(Error::Parameter(_))));
        let wrong_k = init_model(&[2, 8, 3], 5).unwrap();
        assert!(train(
            &wrong_k,
            &set,
            &TrainConfig {
                batch_size: 10,
                ..Default::default()
            }
        )
        .is_err());
    }
}
