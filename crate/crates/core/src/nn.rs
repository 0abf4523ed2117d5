//! Dense feed-forward networks with reverse-mode parameter gradients.
//!
//! A [`Network`] is a stack of affine layers. Hidden layers apply the
//! network's [`Activation`] elementwise; the output layer is affine. All
//! parameters live in one flat vector, laid out layer by layer as the
//! row-major weight matrix `(fan_out, fan_in)` followed by the bias vector.
//!
//! Two evaluation paths are provided:
//!
//! - per-point [`Network::forward`] / [`Network::grad_params`], plain loops;
//! - batched [`Network::forward_batch`] / [`Network::backward_batch`] over
//!   row-major point matrices, used by the training hot path.

use std::fs;
use std::path::Path;

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Elementwise activation applied on hidden layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation's output `a = apply(z)`.
    #[inline]
    pub fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(Activation::Sigmoid),
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

/// Number of parameters of a network with the given layer widths.
pub fn param_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

fn validate_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 2 {
        return Err(Error::Config(format!(
            "a network needs at least input and output widths, got {widths:?}"
        )));
    }
    if widths.contains(&0) {
        return Err(Error::Config(format!("layer widths must be positive, got {widths:?}")));
    }
    Ok(())
}

/// Gradient of a scalar (cotangent-contracted) network output with respect to
/// the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientRecord {
    pub grad: Vec<f64>,
}

impl GradientRecord {
    pub fn zeros(len: usize) -> Self {
        Self { grad: vec![0.0; len] }
    }

    pub fn len(&self) -> usize {
        self.grad.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grad.is_empty()
    }
}

/// One affine layer, unpacked from the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub fan_in: usize,
    pub fan_out: usize,
    /// Row-major `(fan_out, fan_in)`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Deserialize)]
struct RawNetwork {
    widths: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

impl TryFrom<RawNetwork> for Network {
    type Error = Error;

    fn try_from(raw: RawNetwork) -> Result<Self> {
        Network::new(raw.widths, raw.activation, raw.params)
    }
}

/// Dense feed-forward network with a flat parameter vector.
///
/// Serializes to the checkpoint document
/// `{"widths": [...], "activation": "...", "params": [...]}`; unknown
/// fields are ignored on load so callers may stamp extra metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNetwork")]
pub struct Network {
    widths: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

/// Per-layer activations recorded by [`Network::forward_batch`].
#[derive(Debug, Clone)]
pub struct BatchTape {
    /// `layers[0]` is the input batch; `layers[l + 1]` the output of layer `l`.
    layers: Vec<Array2<f64>>,
}

impl BatchTape {
    pub fn output(&self) -> &Array2<f64> {
        self.layers.last().expect("tape holds at least the input")
    }

    pub fn rows(&self) -> usize {
        self.layers[0].nrows()
    }
}

impl Network {
    pub fn new(widths: Vec<usize>, activation: Activation, params: Vec<f64>) -> Result<Self> {
        validate_widths(&widths)?;
        let m = param_count(&widths);
        if params.len() != m {
            return Err(Error::shape(m, params.len()));
        }
        Ok(Self { widths, activation, params })
    }

    /// Network with every parameter zero; evaluates to the zero function.
    pub fn zeros(widths: Vec<usize>, activation: Activation) -> Result<Self> {
        validate_widths(&widths)?;
        let m = param_count(&widths);
        Ok(Self { widths, activation, params: vec![0.0; m] })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(widths: Vec<usize>, activation: Activation, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(widths, activation)?;
        let mut offset = 0;
        for pair in net.widths.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in &mut net.params[offset..offset + fan_in * fan_out] {
                *w = rng.random_range(-limit..limit);
            }
            offset += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("validated widths")
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::shape(self.params.len(), params.len()));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    /// `(weights, bias)` slices of layer `l`.
    fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let offset = param_count(&self.widths[..=l]);
        let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
        let w = &self.params[offset..offset + fan_in * fan_out];
        let b = &self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
        (w, b)
    }

    pub fn layers(&self) -> Vec<DenseLayer> {
        (0..self.num_layers())
            .map(|l| {
                let (w, b) = self.layer(l);
                DenseLayer {
                    fan_in: self.widths[l],
                    fan_out: self.widths[l + 1],
                    weights: w.to_vec(),
                    bias: b.to_vec(),
                }
            })
            .collect()
    }

    pub fn from_layers(layers: &[DenseLayer], activation: Activation) -> Result<Self> {
        let Some(first) = layers.first() else {
            return Err(Error::Config("a network needs at least one layer".into()));
        };
        let mut widths = vec![first.fan_in];
        let mut params = Vec::new();
        for layer in layers {
            if layer.fan_in != *widths.last().unwrap() {
                return Err(Error::shape(*widths.last().unwrap(), layer.fan_in));
            }
            if layer.weights.len() != layer.fan_in * layer.fan_out {
                return Err(Error::shape(layer.fan_in * layer.fan_out, layer.weights.len()));
            }
            if layer.bias.len() != layer.fan_out {
                return Err(Error::shape(layer.fan_out, layer.bias.len()));
            }
            params.extend_from_slice(&layer.weights);
            params.extend_from_slice(&layer.bias);
            widths.push(layer.fan_out);
        }
        Self::new(widths, activation, params)
    }

    /// Multiplies the output layer's weights and bias by `s`.
    pub fn scale_output(&mut self, s: f64) {
        let offset = param_count(&self.widths[..self.widths.len() - 1]);
        for p in &mut self.params[offset..] {
            *p *= s;
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::shape(self.input_dim(), x.len()));
        }
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let last = self.num_layers() - 1;
        let mut a = x.to_vec();
        for l in 0..=last {
            let (w, b) = self.layer(l);
            let fan_in = self.widths[l];
            let mut z: Vec<f64> = b
                .iter()
                .zip(w.chunks_exact(fan_in))
                .map(|(bi, row)| bi + row.iter().zip(&a).map(|(wij, aj)| wij * aj).sum::<f64>())
                .collect();
            if l < last {
                for zi in &mut z {
                    *zi = self.activation.apply(*zi);
                }
            }
            a = z;
        }
        a
    }

    /// Gradient of `cotangent · forward(x)` with respect to all parameters.
    pub fn grad_params(&self, x: &[f64], cotangent: &[f64]) -> Result<GradientRecord> {
        if x.len() != self.input_dim() {
            return Err(Error::shape(self.input_dim(), x.len()));
        }
        if cotangent.len() != self.output_dim() {
            return Err(Error::shape(self.output_dim(), cotangent.len()));
        }
        let last = self.num_layers() - 1;
        let mut acts = vec![x.to_vec()];
        for l in 0..=last {
            let (w, b) = self.layer(l);
            let a = acts.last().unwrap();
            let mut z: Vec<f64> = b
                .iter()
                .zip(w.chunks_exact(self.widths[l]))
                .map(|(bi, row)| bi + row.iter().zip(a).map(|(wij, aj)| wij * aj).sum::<f64>())
                .collect();
            if l < last {
                for zi in &mut z {
                    *zi = self.activation.apply(*zi);
                }
            }
            acts.push(z);
        }

        let mut grad = GradientRecord::zeros(self.num_params());
        let mut delta = cotangent.to_vec();
        for l in (0..=last).rev() {
            if l < last {
                for (d, a) in delta.iter_mut().zip(&acts[l + 1]) {
                    *d *= self.activation.derivative_from_output(*a);
                }
            }
            let offset = param_count(&self.widths[..=l]);
            let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
            let input = &acts[l];
            let (gw, gb) = grad.grad[offset..offset + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
            for (i, di) in delta.iter().enumerate() {
                for (g, aj) in gw[i * fan_in..(i + 1) * fan_in].iter_mut().zip(input) {
                    *g += di * aj;
                }
                gb[i] += di;
            }
            if l > 0 {
                let (w, _) = self.layer(l);
                let mut prev = vec![0.0; fan_in];
                for (i, di) in delta.iter().enumerate() {
                    for (p, wij) in prev.iter_mut().zip(&w[i * fan_in..(i + 1) * fan_in]) {
                        *p += di * wij;
                    }
                }
                delta = prev;
            }
        }
        Ok(grad)
    }

    /// Evaluates a `(rows, input_dim)` batch and records every layer output.
    ///
    /// Panics if the batch width does not match the input dimension.
    pub fn forward_batch(&self, inputs: ArrayView2<'_, f64>) -> BatchTape {
        assert_eq!(inputs.ncols(), self.input_dim(), "batch width must equal input dim");
        let last = self.num_layers() - 1;
        let mut layers = Vec::with_capacity(self.num_layers() + 1);
        layers.push(inputs.to_owned());
        for l in 0..=last {
            let (w, b) = self.layer(l);
            let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
            let w = ArrayView2::from_shape((fan_out, fan_in), w).expect("layer shape");
            let b = ArrayView1::from(b);
            let mut z = layers[l].dot(&w.t());
            z += &b;
            if l < last {
                let act = self.activation;
                z.mapv_inplace(|v| act.apply(v));
            }
            layers.push(z);
        }
        BatchTape { layers }
    }

    /// Accumulates `Σ_rows cotangent_row · output_row` differentiated with
    /// respect to the parameters into `grad`.
    ///
    /// Panics on shape mismatch between tape, cotangents and `grad`.
    pub fn backward_batch(&self, tape: &BatchTape, cotangents: ArrayView2<'_, f64>, grad: &mut [f64]) {
        assert_eq!(grad.len(), self.num_params(), "gradient buffer length");
        assert_eq!(cotangents.dim(), tape.output().dim(), "cotangent shape");
        let last = self.num_layers() - 1;
        let mut delta = cotangents.to_owned();
        for l in (0..=last).rev() {
            if l < last {
                let act = self.activation;
                delta.zip_mut_with(&tape.layers[l + 1], |d, a| *d *= act.derivative_from_output(*a));
            }
            let offset = param_count(&self.widths[..=l]);
            let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
            let (gw, gb) = grad[offset..offset + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
            let mut gw = ArrayViewMut2::from_shape((fan_out, fan_in), gw).expect("layer shape");
            general_mat_mul(1.0, &delta.t(), &tape.layers[l], 1.0, &mut gw);
            for (g, s) in gb.iter_mut().zip(delta.sum_axis(Axis(0))) {
                *g += s;
            }
            if l > 0 {
                let (w, _) = self.layer(l);
                let w = ArrayView2::from_shape((fan_out, fan_in), w).expect("layer shape");
                delta = delta.dot(&w);
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single_hidden(act: Activation, a: f64, c: f64, b: f64) -> Network {
        // layer 1: W=[a], b=[c]; layer 2: W=[b], bias 0
        Network::new(vec![1, 1, 1], act, vec![a, c, b, 0.0]).unwrap()
    }

    #[test]
    fn sigmoid_at_zero() {
        let net = single_hidden(Activation::Sigmoid, 0.0, 0.0, 2.0);
        assert_eq!(net.forward(&[0.0]).unwrap(), vec![1.0]);
    }

    #[test]
    fn relu_piecewise() {
        let net = single_hidden(Activation::Relu, 1.0, -0.5, 3.0);
        assert_eq!(net.forward(&[2.0]).unwrap(), vec![4.5]);
    }

    #[test]
    fn affine_neuron_gradient() {
        let net = Network::new(vec![1, 1], Activation::Sigmoid, vec![0.7, -0.2]).unwrap();
        let g = net.grad_params(&[1.5], &[1.0]).unwrap();
        assert_eq!(g.grad, vec![1.5, 1.0]);
        let g0 = net.grad_params(&[1.5], &[0.0]).unwrap();
        assert!(g0.grad.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn shape_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Network::init(vec![2, 4, 1], Activation::Tanh, &mut rng).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Shape { expected: 2, got: 1 })));
        assert!(matches!(net.grad_params(&[1.0, 2.0], &[1.0, 1.0]), Err(Error::Shape { .. })));
        assert!(Network::new(vec![2, 4, 1], Activation::Tanh, vec![0.0; 3]).is_err());
        assert!(matches!(Network::init(vec![], Activation::Relu, &mut rng), Err(Error::Config(_))));
        assert!(matches!(Network::init(vec![3], Activation::Relu, &mut rng), Err(Error::Config(_))));
    }

    #[test]
    fn param_count_matches_layout() {
        assert_eq!(param_count(&[2, 15, 1]), 61);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Network::init(vec![2, 15, 1], Activation::Sigmoid, &mut rng).unwrap();
        assert_eq!(net.num_params(), 61);
    }

    #[test]
    fn init_is_seeded() {
        let a = Network::init(vec![3, 7, 2], Activation::Relu, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = Network::init(vec![3, 7, 2], Activation::Relu, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a.params(), b.params());
        // biases are zero
        for layer in a.layers() {
            assert!(layer.bias.iter().all(|b| *b == 0.0));
        }
    }

    #[test]
    fn init_variance_matches_glorot() {
        // 100 x 100 hidden layer gives 10^4 draws from U(-l, l), variance l^2 / 3
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Network::init(vec![100, 100, 1], Activation::Sigmoid, &mut rng).unwrap();
        let w = &net.layers()[0].weights;
        assert_eq!(w.len(), 10_000);
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (w.len() - 1) as f64;
        let nominal = (6.0 / 200.0) / 3.0;
        assert!((var / nominal - 1.0).abs() < 0.2, "variance {var} vs nominal {nominal}");
    }

    #[test]
    fn batch_matches_pointwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Network::init(vec![2, 6, 5, 3], Activation::Sigmoid, &mut rng).unwrap();
        let xs = Array2::from_shape_fn((7, 2), |(i, j)| (i as f64 * 0.3 - 1.0) * (j as f64 + 0.5));
        let cot = Array2::from_shape_fn((7, 3), |(i, j)| ((i + 2 * j) as f64).sin());
        let tape = net.forward_batch(xs.view());
        let mut g = vec![0.0; net.num_params()];
        net.backward_batch(&tape, cot.view(), &mut g);
        let mut expected = vec![0.0; net.num_params()];
        for i in 0..7 {
            let y = net.forward(xs.row(i).as_slice().unwrap()).unwrap();
            for j in 0..3 {
                assert!((y[j] - tape.output()[[i, j]]).abs() < 1e-14);
            }
            let gi = net.grad_params(xs.row(i).as_slice().unwrap(), cot.row(i).as_slice().unwrap()).unwrap();
            for (e, v) in expected.iter_mut().zip(gi.grad) {
                *e += v;
            }
        }
        for (a, b) in g.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn checkpoint_ignores_extra_fields() {
        let text = r#"{"widths":[1,1],"activation":"tanh","params":[0.5,0.25],"seed":7}"#;
        let net = Network::from_json(text).unwrap();
        assert_eq!(net.params(), &[0.5, 0.25]);
        let bad = r#"{"widths":[1,1],"activation":"tanh","params":[0.5]}"#;
        assert!(Network::from_json(bad).is_err());
    }

    proptest! {
        #[test]
        fn checkpoint_round_trip_is_bit_exact(params in proptest::collection::vec(-1e6f64..1e6, 13)) {
            let net = Network::new(vec![2, 3, 1], Activation::Relu, params.clone()).unwrap();
            let back = Network::from_json(&net.to_json().unwrap()).unwrap();
            prop_assert_eq!(back.params().iter().map(|p| p.to_bits()).collect::<Vec<_>>(),
                            params.iter().map(|p| p.to_bits()).collect::<Vec<_>>());
        }

        #[test]
        fn flatten_unflatten_bijection(params in proptest::collection::vec(-10f64..10.0, 29)) {
            let net = Network::new(vec![3, 4, 2, 1], Activation::Sigmoid, params.clone()).unwrap();
            let rebuilt = Network::from_layers(&net.layers(), Activation::Sigmoid).unwrap();
            prop_assert_eq!(rebuilt.params(), &params[..]);
        }

        #[test]
        fn output_layer_homogeneity(seed in 0u64..1000, s in -4.0f64..4.0, x0 in -2.0f64..2.0, x1 in -2.0f64..2.0) {
            let mut net = Network::init(vec![2, 5, 1], Activation::Tanh, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            for (i, p) in net.params_mut().iter_mut().enumerate() {
                *p += 0.01 * i as f64; // nonzero biases
            }
            let y = net.forward(&[x0, x1]).unwrap()[0];
            net.scale_output(s);
            let ys = net.forward(&[x0, x1]).unwrap()[0];
            prop_assert!((ys - s * y).abs() <= 1e-12 * (1.0 + y.abs() * s.abs()));
        }
    }
}
