use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{ParameterGradient, ParameterVector};
use crate::error::{check_len, Error, Result};

/// Fully connected network: tanh on hidden layers, identity on the output.
///
/// `weights[i]` has shape `layer_sizes[i + 1] x layer_sizes[i]`. Batched
/// methods take one sample per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

/// Activations recorded by [`Mlp::forward_cached`]. `activations[0]` is the
/// input batch, the last entry is the (linear) output.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    activations: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("cache holds the input at least")
    }

    pub fn batch_size(&self) -> usize {
        self.activations[0].nrows()
    }
}

/// Result of a backward pass: the parameter gradient summed over the batch and
/// the per-sample gradient with respect to the inputs.
#[derive(Debug, Clone)]
pub struct Backward {
    pub params: ParameterGradient,
    pub input: Array2<f64>,
}

fn validate_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "an MLP needs at least two layer sizes, got {layer_sizes:?}"
        )));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::InvalidConfig(format!(
            "layer sizes must be positive, got {layer_sizes:?}"
        )));
    }
    Ok(())
}

impl Mlp {
    /// Fan-in scaled uniform weights `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, zero biases.
    pub fn new(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        let mut rng = crate::seeded_rng(seed);
        Self::with_rng(layer_sizes, &mut rng)
    }

    pub fn with_rng(layer_sizes: &[usize], rng: &mut crate::Rng) -> Result<Self> {
        validate_sizes(layer_sizes)?;
        let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
        let mut biases = Vec::with_capacity(layer_sizes.len() - 1);
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = 1.0 / (fan_in as f64).sqrt();
            let weight = Array2::from_shape_fn((fan_out, fan_in), |_| {
                rng.random_range(-limit..limit)
            });
            weights.push(weight);
            biases.push(Array1::zeros(fan_out));
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
        })
    }

    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        validate_sizes(layer_sizes)?;
        let weights = layer_sizes
            .windows(2)
            .map(|w| Array2::zeros((w[1], w[0])))
            .collect();
        let biases = layer_sizes[1..].iter().map(|&n| Array1::zeros(n)).collect();
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
        })
    }

    pub fn from_parts(weights: Vec<Array2<f64>>, biases: Vec<Array1<f64>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::InvalidConfig(
                "weights and biases must be non-empty and of equal count".into(),
            ));
        }
        let mut layer_sizes = vec![weights[0].ncols()];
        for (w, b) in weights.iter().zip(&biases) {
            check_len("layer input", *layer_sizes.last().unwrap(), w.ncols())?;
            check_len("bias length", w.nrows(), b.len())?;
            layer_sizes.push(w.nrows());
        }
        validate_sizes(&layer_sizes)?;
        Ok(Self {
            layer_sizes,
            weights,
            biases,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    pub fn params(&self) -> ParameterVector {
        let mut out = Vec::with_capacity(self.num_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        ParameterVector(out)
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        check_len("Mlp::set_params", self.num_params(), params.len())?;
        let mut offset = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let (nw, nb) = (w.len(), b.len());
            for (dst, src) in w.iter_mut().zip(&params[offset..offset + nw]) {
                *dst = *src;
            }
            offset += nw;
            for (dst, src) in b.iter_mut().zip(&params[offset..offset + nb]) {
                *dst = *src;
            }
            offset += nb;
        }
        Ok(())
    }

    pub fn with_params(&self, params: &[f64]) -> Result<Self> {
        let mut out = self.clone();
        out.set_params(params)?;
        Ok(out)
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        check_len("Mlp::forward input", self.input_dim(), input.len())?;
        let batch = ArrayView2::from_shape((1, input.len()), input).expect("contiguous row");
        Ok(self.forward_batch(batch)?.into_raw_vec_and_offset().0)
    }

    pub fn forward_batch(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_len("Mlp::forward_batch input", self.input_dim(), inputs.ncols())?;
        let last = self.weights.len() - 1;
        let mut x = self.affine(0, inputs);
        if last > 0 {
            x.mapv_inplace(f64::tanh);
        }
        for layer in 1..=last {
            x = self.affine(layer, x.view());
            if layer < last {
                x.mapv_inplace(f64::tanh);
            }
        }
        Ok(x)
    }

    pub fn forward_cached(&self, inputs: ArrayView2<f64>) -> Result<ForwardCache> {
        check_len("Mlp::forward_cached input", self.input_dim(), inputs.ncols())?;
        let last = self.weights.len() - 1;
        let mut activations = Vec::with_capacity(self.weights.len() + 1);
        activations.push(inputs.to_owned());
        for layer in 0..=last {
            let mut z = self.affine(layer, activations[layer].view());
            if layer < last {
                z.mapv_inplace(f64::tanh);
            }
            activations.push(z);
        }
        Ok(ForwardCache { activations })
    }

    fn affine(&self, layer: usize, x: ArrayView2<f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weights[layer].t());
        z += &self.biases[layer];
        z
    }

    /// Gradient of `output_grad . output` with respect to all parameters and the input.
    pub fn backward(&self, input: &[f64], output_grad: &[f64]) -> Result<Backward> {
        check_len("Mlp::backward input", self.input_dim(), input.len())?;
        check_len("Mlp::backward output_grad", self.output_dim(), output_grad.len())?;
        let x = ArrayView2::from_shape((1, input.len()), input).expect("contiguous row");
        let g = ArrayView2::from_shape((1, output_grad.len()), output_grad).expect("contiguous row");
        let cache = self.forward_cached(x)?;
        self.backward_batch(&cache, g)
    }

    /// Backward pass over a cached batch; the parameter gradient is summed over rows.
    pub fn backward_batch(
        &self,
        cache: &ForwardCache,
        output_grad: ArrayView2<f64>,
    ) -> Result<Backward> {
        check_len("Mlp::backward_batch rows", cache.batch_size(), output_grad.nrows())?;
        check_len("Mlp::backward_batch cols", self.output_dim(), output_grad.ncols())?;
        let n_layers = self.weights.len();
        let mut layer_grads: Vec<(Array2<f64>, Array1<f64>)> = Vec::with_capacity(n_layers);
        let mut delta = output_grad.to_owned();
        for layer in (0..n_layers).rev() {
            let a_prev = &cache.activations[layer];
            let dw = delta.t().dot(a_prev);
            let db = delta.sum_axis(Axis(0));
            layer_grads.push((dw, db));
            let mut back = delta.dot(&self.weights[layer]);
            if layer > 0 {
                // a_prev = tanh(z_prev)
                back.zip_mut_with(a_prev, |d, &a| *d *= 1.0 - a * a);
            }
            delta = back;
        }
        layer_grads.reverse();
        let mut flat = Vec::with_capacity(self.num_params());
        for (dw, db) in &layer_grads {
            flat.extend(dw.iter());
            flat.extend(db.iter());
        }
        Ok(Backward {
            params: ParameterGradient(flat),
            input: delta,
        })
    }

    /// Forward-mode directional derivative of the outputs along a parameter
    /// tangent. Returns `(outputs, d outputs)`.
    pub fn jvp(
        &self,
        inputs: ArrayView2<f64>,
        tangent: &[f64],
    ) -> Result<(Array2<f64>, Array2<f64>)> {
        check_len("Mlp::jvp input", self.input_dim(), inputs.ncols())?;
        check_len("Mlp::jvp tangent", self.num_params(), tangent.len())?;
        let last = self.weights.len() - 1;
        let mut a = inputs.to_owned();
        let mut da = Array2::<f64>::zeros(a.raw_dim());
        let mut offset = 0;
        for layer in 0..=last {
            let (rows, cols) = self.weights[layer].dim();
            let dw = ArrayView2::from_shape((rows, cols), &tangent[offset..offset + rows * cols])
                .expect("tangent slice matches layer");
            offset += rows * cols;
            let db = ndarray::ArrayView1::from(&tangent[offset..offset + rows]);
            offset += rows;
            let z = self.affine(layer, a.view());
            let mut dz = da.dot(&self.weights[layer].t()) + a.dot(&dw.t());
            dz += &db;
            if layer < last {
                let h = z.mapv(f64::tanh);
                dz.zip_mut_with(&h, |d, &hv| *d *= 1.0 - hv * hv);
                a = h;
            } else {
                a = z;
            }
            da = dz;
        }
        Ok((a, da))
    }

    /// `self <- tau * online + (1 - tau) * self`, componentwise.
    pub fn soft_update_from(&mut self, online: &Mlp, tau: f64) -> Result<()> {
        if self.layer_sizes != online.layer_sizes {
            return Err(Error::InvalidConfig(format!(
                "soft update between {:?} and {:?}",
                self.layer_sizes, online.layer_sizes
            )));
        }
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::OutOfRange(format!("tau = {tau}")));
        }
        for (t, o) in self.weights.iter_mut().zip(&online.weights) {
            t.zip_mut_with(o, |t, &o| *t = tau * o + (1.0 - tau) * *t);
        }
        for (t, o) in self.biases.iter_mut().zip(&online.biases) {
            t.zip_mut_with(o, |t, &o| *t = tau * o + (1.0 - tau) * *t);
        }
        Ok(())
    }
}
