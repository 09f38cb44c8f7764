//! Dense linear algebra, temperature softmax and seeded random streams.

mod matrix;
mod rng;

pub use matrix::{matmul, Matrix};
pub use rng::{rng_draw, Distribution, RngStream};

use crate::error::{Error, Result};

/// Softmax of `logits / temperature`, shifted by the maximum for overflow safety.
pub fn softmax_t(logits: &[f64], temperature: f64) -> Result<Vec<f64>> {
    check_temperature(temperature)?;
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::param("softmax of non-finite logits"));
    }
    let mut out = logits.to_vec();
    softmax_in_place(&mut out, temperature);
    Ok(out)
}

pub(crate) fn check_temperature(temperature: f64) -> Result<()> {
    if temperature > 0.0 && temperature.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("temperature must be positive, got {temperature}")))
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64], temperature: f64) {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &z| m.max(z / temperature));
    let mut sum = 0.0;
    for z in row.iter_mut() {
        *z = (*z / temperature - max).exp();
        sum += *z;
    }
    for z in row.iter_mut() {
        *z /= sum;
    }
}

/// `log softmax(logits / temperature)`.
pub(crate) fn log_softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &z| m.max(z / temperature));
    let lse = logits.iter().map(|&z| (z / temperature - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&z| z / temperature - max - lse).collect()
}

/// Index of the largest entry; ties go to the lowest index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
