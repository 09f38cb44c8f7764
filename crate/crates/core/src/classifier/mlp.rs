use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numerics::{argmax, check_temperature, log_softmax, softmax_in_place, Matrix, RngStream};

/// Fully connected layer computing `x · weights + bias`; `weights` is `fan_in × fan_out`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn apply(&self, input: &Matrix) -> Matrix {
        let mut out = input.matmul_unchecked(&self.weights);
        for i in 0..out.rows() {
            for (z, b) in out.row_mut(i).iter_mut().zip(&self.bias) {
                *z += b;
            }
        }
        out
    }
}

/// ReLU multilayer perceptron producing raw logits.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    layer_dims: Vec<usize>,
    layers: Vec<DenseLayer>,
    seed: u64,
}

/// Per-layer gradients, shaped like the model's layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<DenseLayer>,
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        flatten(&self.layers)
    }
}

/// Outputs of a forward pass over a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Forward {
    pub logits: Matrix,
    pub probs: Matrix,
    /// Activations of the last hidden layer (the input itself when there is none).
    pub hidden: Matrix,
}

fn flatten(layers: &[DenseLayer]) -> Vec<f64> {
    let mut out = Vec::new();
    for l in layers {
        out.extend_from_slice(l.weights.as_slice());
        out.extend_from_slice(&l.bias);
    }
    out
}

fn validate_dims(layer_dims: &[usize]) -> Result<()> {
    if layer_dims.len() < 2 {
        return Err(Error::param("layer_dims needs an input and an output size"));
    }
    if layer_dims.contains(&0) {
        return Err(Error::param(format!("zero-width layer in {layer_dims:?}")));
    }
    if *layer_dims.last().unwrap() < 2 {
        return Err(Error::param("classifier-based scoring requires ≥ 2 sub-clusters"));
    }
    Ok(())
}

/// He-initialised model: weights `N(0, 2 / fan_in)` drawn from sub-stream
/// `("init", layer)`, biases zero.
pub fn init_model(layer_dims: &[usize], seed: u64) -> Result<MlpModel> {
    validate_dims(layer_dims)?;
    let root = RngStream::new(seed);
    let layers = layer_dims
        .windows(2)
        .enumerate()
        .map(|(l, w)| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let std_dev = (2.0 / fan_in as f64).sqrt();
            let mut rng = root.substream("init", l as u64);
            let weights = (0..fan_in * fan_out)
                .map(|_| rng.gaussian(0.0, std_dev))
                .collect::<Result<Vec<_>>>()?;
            Ok(DenseLayer {
                weights: Matrix::new(fan_in, fan_out, weights)?,
                bias: vec![0.0; fan_out],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MlpModel {
        layer_dims: layer_dims.to_vec(),
        layers,
        seed,
    })
}

impl MlpModel {
    /// Rebuilds a model from flattened parameters (per layer: weights row-major, then bias).
    pub fn from_parameters(layer_dims: &[usize], params: &[f64], seed: u64) -> Result<MlpModel> {
        validate_dims(layer_dims)?;
        let expected: usize = layer_dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        if params.len() != expected {
            return Err(Error::shape("MlpModel::from_parameters", expected, params.len()));
        }
        let mut rest = params;
        let mut layers = Vec::new();
        for w in layer_dims.windows(2) {
            let (wn, bn) = (w[0] * w[1], w[1]);
            layers.push(DenseLayer {
                weights: Matrix::new(w[0], w[1], rest[..wn].to_vec())?,
                bias: rest[wn..wn + bn].to_vec(),
            });
            rest = &rest[wn + bn..];
        }
        if layers.iter().any(|l| l.bias.iter().any(|b| !b.is_finite())) {
            return Err(Error::Data("non-finite bias".into()));
        }
        Ok(MlpModel {
            layer_dims: layer_dims.to_vec(),
            layers,
            seed,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn parameters(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn num_parameters(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum()
    }

    /// SHA-256 over the layer sizes and the raw bits of every parameter.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for &d in &self.layer_dims {
            h.update((d as u64).to_le_bytes());
        }
        for l in &self.layers {
            for v in l.weights.as_slice().iter().chain(&l.bias) {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    fn check_input(&self, batch: &Matrix) -> Result<()> {
        if batch.cols() != self.input_dim() {
            return Err(Error::shape("forward", batch.shape(), self.layer_dims.as_slice()));
        }
        Ok(())
    }

    /// Activations `[input, h_1, …, h_L, logits]`; hidden entries are post-ReLU.
    fn activations(&self, batch: &Matrix) -> Vec<Matrix> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(batch.clone());
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = layer.apply(&acts[l]);
            if l + 1 < self.layers.len() {
                for v in z.as_mut_slice() {
                    *v = v.max(0.0);
                }
            }
            acts.push(z);
        }
        acts
    }

    /// Back-propagates `d_logits` through the network. Returns parameter
    /// gradients (when `params`) and the gradient with respect to the input
    /// (when `input`).
    fn backward(
        &self,
        acts: &[Matrix],
        d_logits: Matrix,
        params: bool,
        input: bool,
    ) -> (Option<Gradients>, Option<Matrix>) {
        let mut grads: Vec<DenseLayer> = Vec::new();
        let mut delta = d_logits;
        for l in (0..self.layers.len()).rev() {
            if params {
                let weights = acts[l].matmul_tn(&delta);
                let mut bias = vec![0.0; delta.cols()];
                for row in delta.iter_rows() {
                    for (b, d) in bias.iter_mut().zip(row) {
                        *b += d;
                    }
                }
                grads.push(DenseLayer { weights, bias });
            }
            if l == 0 && !input {
                break;
            }
            let mut upstream = delta.matmul_nt(&self.layers[l].weights);
            if l > 0 {
                for (g, a) in upstream.as_mut_slice().iter_mut().zip(acts[l].as_slice()) {
                    if *a <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            delta = upstream;
        }
        grads.reverse();
        (params.then_some(Gradients { layers: grads }), input.then_some(delta))
    }
}

/// Logits, temperature-scaled probabilities and last-hidden activations for a batch.
pub fn forward(model: &MlpModel, batch: &Matrix, temperature: f64) -> Result<Forward> {
    check_temperature(temperature)?;
    model.check_input(batch)?;
    let mut acts = model.activations(batch);
    let logits = acts.pop().unwrap();
    let hidden = acts.pop().unwrap();
    if !logits.is_finite() {
        return Err(Error::Data("forward pass produced non-finite logits".into()));
    }
    let mut probs = logits.clone();
    for i in 0..probs.rows() {
        softmax_in_place(probs.row_mut(i), temperature);
    }
    Ok(Forward { logits, probs, hidden })
}

/// Loss, gradients and the number of correct argmax predictions.
pub(crate) fn loss_grads_correct(
    model: &MlpModel,
    batch: &Matrix,
    labels: &[usize],
) -> Result<(f64, Gradients, usize)> {
    model.check_input(batch)?;
    if labels.len() != batch.rows() || batch.rows() == 0 {
        return Err(Error::shape("loss_and_grads", batch.shape(), labels.len()));
    }
    let k = model.num_classes();
    if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::Data(format!("label {bad} outside 0..{k}")));
    }
    let acts = model.activations(batch);
    let logits = acts.last().unwrap();
    let n = batch.rows() as f64;
    let mut loss = 0.0;
    let mut correct = 0;
    let mut d_logits = Matrix::zeros(logits.rows(), k);
    for (i, &y) in labels.iter().enumerate() {
        let z = logits.row(i);
        let logp = log_softmax(z, 1.0);
        loss -= logp[y];
        correct += usize::from(argmax(z) == y);
        for (d, lp) in d_logits.row_mut(i).iter_mut().zip(&logp) {
            *d = lp.exp() / n;
        }
        d_logits.row_mut(i)[y] -= 1.0 / n;
    }
    let (grads, _) = model.backward(&acts, d_logits, true, false);
    Ok((loss / n, grads.unwrap(), correct))
}

/// Mean softmax cross-entropy over the batch and its parameter gradients.
pub fn loss_and_grads(model: &MlpModel, batch: &Matrix, labels: &[usize]) -> Result<(f64, Gradients)> {
    loss_grads_correct(model, batch, labels).map(|(l, g, _)| (l, g))
}

/// Row-wise gradient of `log softmax_T(f(x))_ŷ` with respect to `x`, where
/// `ŷ` is each row's predicted class.
pub fn input_gradients(model: &MlpModel, batch: &Matrix, temperature: f64) -> Result<Matrix> {
    check_temperature(temperature)?;
    model.check_input(batch)?;
    let acts = model.activations(batch);
    let logits = acts.last().unwrap();
    let mut d_logits = logits.clone();
    for i in 0..d_logits.rows() {
        let top = argmax(logits.row(i));
        let row = d_logits.row_mut(i);
        softmax_in_place(row, temperature);
        // ascent direction of log p_top: (e_top - p) / T
        for (j, v) in row.iter_mut().enumerate() {
            let indicator = if j == top { 1.0 } else { 0.0 };
            *v = (indicator - *v) / temperature;
        }
    }
    let (_, dx) = model.backward(&acts, d_logits, false, true);
    Ok(dx.unwrap())
}

/// Single-sample form of [`input_gradients`].
pub fn input_gradient(model: &MlpModel, x: &[f64], temperature: f64) -> Result<Vec<f64>> {
    let batch = Matrix::new(1, x.len(), x.to_vec())?;
    input_gradients(model, &batch, temperature).map(Matrix::into_vec)
}
