use serde::{Deserialize, Serialize};

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};

/// One axis-aligned Gaussian blob of a synthetic mixture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub mean: Vec<f64>,
    pub std_dev: Vec<f64>,
    pub count: usize,
    pub class_id: usize,
}

impl MixtureComponent {
    /// Isotropic component with the same deviation on every axis.
    pub fn isotropic(mean: Vec<f64>, std_dev: f64, count: usize, class_id: usize) -> Self {
        let std_dev = vec![std_dev; mean.len()];
        Self {
            mean,
            std_dev,
            count,
            class_id,
        }
    }
}

/// Draws every component from its own sub-stream `("mixture", index)`, so
/// adding samples to one component leaves the others untouched.
pub fn synth_mixture(components: &[MixtureComponent], seed: u64) -> Result<LabeledDataset> {
    let dim = components.first().map_or(0, |c| c.mean.len());
    for (i, c) in components.iter().enumerate() {
        if c.mean.len() != dim || c.std_dev.len() != dim {
            return Err(Error::shape(
                "synth_mixture",
                dim,
                format!("component {i}: mean {}, std_dev {}", c.mean.len(), c.std_dev.len()),
            ));
        }
        if c.std_dev.iter().any(|&s| !(s >= 0.0 && s.is_finite())) {
            return Err(Error::param(format!("component {i} has a negative std_dev")));
        }
    }

    let root = RngStream::new(seed);
    let total: usize = components.iter().map(|c| c.count).sum();
    let mut values = Vec::with_capacity(total * dim);
    let mut labels = Vec::with_capacity(total);
    for (i, c) in components.iter().enumerate() {
        let mut rng = root.substream("mixture", i as u64);
        for _ in 0..c.count {
            for (m, s) in c.mean.iter().zip(&c.std_dev) {
                values.push(rng.gaussian(*m, *s)?);
            }
            labels.push(c.class_id);
        }
    }
    LabeledDataset::new(Matrix::new(total, dim, values)?, Some(labels))
}
