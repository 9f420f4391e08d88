//! MLP structure, initialization, forward pass, and parameter flattening.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{Logits, ParamVector};
use crate::rng;

/// Layer sizes of an MLP: input dim, hidden dims, output dim (class count).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MlpShape {
    layer_sizes: Vec<usize>,
}

impl MlpShape {
    /// `layer_sizes` must have at least two entries, all positive.
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::invalid(format!(
                "layer_sizes: need at least input and output dims, got {:?}",
                layer_sizes
            )));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::invalid(format!(
                "layer_sizes: every layer must be nonempty, got {:?}",
                layer_sizes
            )));
        }
        Ok(MlpShape { layer_sizes })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// Total parameter count: per layer, `out*in` weights plus `out` biases.
    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[1] * w[0] + w[1])
            .sum()
    }
}

/// Dense MLP: per-layer weight matrices of shape `(out, in)` and bias
/// vectors, ReLU on hidden layers, identity on the output layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    shape: MlpShape,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

/// Per-layer pre-activations and activations kept for backprop.
pub(crate) struct ForwardCache {
    /// `activations[0]` is the input batch; `activations[l+1]` is the output
    /// of layer `l` after its nonlinearity.
    pub activations: Vec<Array2<f64>>,
    /// Pre-activation of each layer (before ReLU / identity).
    pub pre_activations: Vec<Array2<f64>>,
}

impl Mlp {
    /// Glorot-style uniform init: weights i.i.d. on
    /// `[-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out)))`, biases zero.
    /// Deterministic for a given seed.
    pub fn init(shape: MlpShape, seed: u64) -> Mlp {
        let mut rng = rng::stream(seed, &[rng::tag::INIT]);
        let sizes = shape.layer_sizes().to_vec();
        let mut weights = Vec::with_capacity(sizes.len() - 1);
        let mut biases = Vec::with_capacity(sizes.len() - 1);
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data: Vec<f64> = (0..fan_out * fan_in)
                .map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * bound)
                .collect();
            weights.push(Array2::from_shape_vec((fan_out, fan_in), data).unwrap());
            biases.push(Array1::zeros(fan_out));
        }
        Mlp {
            shape,
            weights,
            biases,
        }
    }

    /// Zero-valued model of the given shape.
    pub fn zeros(shape: MlpShape) -> Mlp {
        let sizes = shape.layer_sizes().to_vec();
        let weights = sizes
            .windows(2)
            .map(|w| Array2::zeros((w[1], w[0])))
            .collect();
        let biases = sizes.windows(2).map(|w| Array1::zeros(w[1])).collect();
        Mlp {
            shape,
            weights,
            biases,
        }
    }

    pub fn shape(&self) -> &MlpShape {
        &self.shape
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.weights
    }

    fn check_input(&self, inputs: &ArrayView2<f64>) -> Result<()> {
        if inputs.ncols() != self.shape.input_dim() {
            return Err(Error::dim(format!(
                "forward: input dim {} but model expects {}",
                inputs.ncols(),
                self.shape.input_dim()
            )));
        }
        Ok(())
    }

    /// Batched forward pass; one logits row per input row.
    pub fn forward(&self, inputs: &ArrayView2<f64>) -> Result<Logits> {
        self.check_input(inputs)?;
        let mut a = inputs.to_owned();
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = a.dot(&w.t()) + b;
            if l < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            a = z;
        }
        Ok(a)
    }

    /// Forward pass that keeps per-layer activations for backprop.
    pub(crate) fn forward_cached(&self, inputs: &ArrayView2<f64>) -> Result<ForwardCache> {
        self.check_input(inputs)?;
        let last = self.weights.len() - 1;
        let mut activations = vec![inputs.to_owned()];
        let mut pre_activations = Vec::with_capacity(self.weights.len());
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = activations.last().unwrap().dot(&w.t()) + b;
            pre_activations.push(z.clone());
            let a = if l < last { z.mapv(|v| v.max(0.0)) } else { z };
            activations.push(a);
        }
        Ok(ForwardCache {
            activations,
            pre_activations,
        })
    }

    /// Backpropagates `d_logits = dLoss/dZ_out` through the cached pass and
    /// returns the gradient in flatten order.
    pub(crate) fn backprop(&self, cache: &ForwardCache, d_logits: Array2<f64>) -> ParamVector {
        let n_layers = self.weights.len();
        let mut d_w: Vec<Array2<f64>> = Vec::with_capacity(n_layers);
        let mut d_b: Vec<Array1<f64>> = Vec::with_capacity(n_layers);
        let mut delta = d_logits;
        for l in (0..n_layers).rev() {
            d_w.push(delta.t().dot(&cache.activations[l]));
            d_b.push(delta.sum_axis(Axis(0)));
            if l > 0 {
                let mut d_prev = delta.dot(&self.weights[l]);
                // ReLU mask of the previous layer's pre-activation.
                d_prev.zip_mut_with(&cache.pre_activations[l - 1], |d, &z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = d_prev;
            }
        }
        d_w.reverse();
        d_b.reverse();
        let mut flat = Vec::with_capacity(self.shape.param_count());
        for (w, b) in d_w.iter().zip(&d_b) {
            flat.extend(w.iter());
            flat.extend(b.iter());
        }
        ParamVector::new(flat)
    }

    /// Flattens parameters in layer order: layer 0 weights (row-major,
    /// `(out, in)`), layer 0 biases, layer 1 weights, layer 1 biases, ...
    pub fn flatten(&self) -> ParamVector {
        let mut flat = Vec::with_capacity(self.shape.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            flat.extend(w.iter());
            flat.extend(b.iter());
        }
        ParamVector::new(flat)
    }

    /// Inverse of [`Mlp::flatten`]; bit-exact round trip.
    pub fn unflatten(shape: &MlpShape, v: &ParamVector) -> Result<Mlp> {
        if v.len() != shape.param_count() {
            return Err(Error::dim(format!(
                "unflatten: vector length {} but shape {:?} needs {}",
                v.len(),
                shape.layer_sizes(),
                shape.param_count()
            )));
        }
        let vals = v.as_slice();
        let mut offset = 0;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in shape.layer_sizes().windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let w_len = fan_out * fan_in;
            weights.push(
                Array2::from_shape_vec((fan_out, fan_in), vals[offset..offset + w_len].to_vec())
                    .unwrap(),
            );
            offset += w_len;
            biases.push(Array1::from_vec(vals[offset..offset + fan_out].to_vec()));
            offset += fan_out;
        }
        Ok(Mlp {
            shape: shape.clone(),
            weights,
            biases,
        })
    }
}
