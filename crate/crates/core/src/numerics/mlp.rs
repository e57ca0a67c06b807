//! Fully-connected networks with hand-written forward and backward passes.
//!
//! A layer computes `activation(W x + b)` and then, in training mode only,
//! multiplies by an inverted-dropout mask whose kept entries equal
//! `1 / (1 - rate)`. Batches are row-major: one sample per row.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::activation::Activation;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// Shape `(out, in)`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
    pub dropout_rate: f64,
}

impl DenseLayer {
    pub fn new(
        weights: Array2<f64>,
        bias: Array1<f64>,
        activation: Activation,
        dropout_rate: f64,
    ) -> Result<Self> {
        if weights.nrows() != bias.len() {
            return Err(Error::Dimension(format!(
                "weights have {} rows but bias has {} entries",
                weights.nrows(),
                bias.len()
            )));
        }
        if weights.nrows() == 0 || weights.ncols() == 0 {
            return Err(Error::InvalidInput("layer dims must be > 0".into()));
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::InvalidInput(format!(
                "dropout rate {dropout_rate} outside [0, 1)"
            )));
        }
        Ok(Self {
            weights,
            bias,
            activation,
            dropout_rate,
        })
    }

    /// Uniform init in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn init<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        dropout_rate: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::InvalidInput("layer dims must be > 0".into()));
        }
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weights = Array2::from_shape_fn((out_dim, in_dim), |_| rng.random_range(-limit..limit));
        Self::new(weights, Array1::zeros(out_dim), activation, dropout_rate)
    }

    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }

    fn is_finite(&self) -> bool {
        self.weights.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }
}

/// Layer shape description used to build a freshly initialized model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub out_dim: usize,
    pub activation: Activation,
    pub dropout_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<DenseLayer>,
}

/// Everything `backward` needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ActivationCache {
    /// Input fed to each layer, `B x in_k`.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations `W x + b`, `B x out_k`.
    pre: Vec<Array2<f64>>,
    /// Scaled dropout masks, present only for layers that dropped in training.
    masks: Vec<Option<Array2<f64>>>,
}

impl ActivationCache {
    pub fn batch_size(&self) -> usize {
        self.inputs.first().map_or(0, |x| x.nrows())
    }

    pub fn masks(&self) -> &[Option<Array2<f64>>] {
        &self.masks
    }

    pub fn pre_activations(&self) -> &[Array2<f64>] {
        &self.pre
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Parameter gradients, one entry per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.layers {
            g.weights *= factor;
            g.bias *= factor;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|g| g.weights.iter().chain(g.bias.iter()).all(|v| v.is_finite()))
    }

    pub fn iter_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|g| g.weights.iter().chain(g.bias.iter()).copied())
    }
}

impl MlpModel {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidInput("model needs at least one layer".into()));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::Dimension(format!(
                    "layer {k} outputs {} but layer {} expects {}",
                    pair[0].out_dim(),
                    k + 1,
                    pair[1].in_dim()
                )));
            }
        }
        let model = Self { layers };
        if !model.is_finite() {
            return Err(Error::NonFinite("model weights contain NaN or Inf".into()));
        }
        Ok(model)
    }

    pub fn init<R: Rng + ?Sized>(input_dim: usize, specs: &[LayerSpec], rng: &mut R) -> Result<Self> {
        let mut layers = Vec::with_capacity(specs.len());
        let mut in_dim = input_dim;
        for spec in specs {
            layers.push(DenseLayer::init(
                in_dim,
                spec.out_dim,
                spec.activation,
                spec.dropout_rate,
                rng,
            )?);
            in_dim = spec.out_dim;
        }
        Self::new(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(DenseLayer::is_finite)
    }

    /// Single-sample forward pass.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        input: &[f64],
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Vec<f64>, ActivationCache)> {
        let batch = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|e| Error::Dimension(e.to_string()))?;
        let (out, cache) = self.forward_batch(batch, mode, rng)?;
        Ok((out.into_raw_vec_and_offset().0, cache))
    }

    /// Deterministic inference on one sample. Shares the batch code path, so
    /// results are bit-identical to `forward` in infer mode.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        let batch = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|e| Error::Dimension(e.to_string()))?;
        Ok(self.predict_batch(batch)?.into_raw_vec_and_offset().0)
    }

    /// Deterministic inference on a batch, one sample per row.
    pub fn predict_batch(&self, inputs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(inputs.ncols())?;
        let mut x = inputs.to_owned();
        for layer in &self.layers {
            let mut pre = x.dot(&layer.weights.t());
            pre += &layer.bias;
            pre.mapv_inplace(|v| layer.activation.apply(v));
            x = pre;
        }
        Ok(x)
    }

    pub fn forward_batch<R: Rng + ?Sized>(
        &self,
        inputs: ArrayView2<'_, f64>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Array2<f64>, ActivationCache)> {
        self.check_input(inputs.ncols())?;
        let n = self.layers.len();
        let mut cache = ActivationCache {
            inputs: Vec::with_capacity(n),
            pre: Vec::with_capacity(n),
            masks: Vec::with_capacity(n),
        };
        let mut x = inputs.to_owned();
        for layer in &self.layers {
            let mut pre = x.dot(&layer.weights.t());
            pre += &layer.bias;
            let mut out = pre.mapv(|v| layer.activation.apply(v));
            let mask = if mode == Mode::Train && layer.dropout_rate > 0.0 {
                let keep = 1.0 / (1.0 - layer.dropout_rate);
                let mask = Array2::from_shape_fn(out.raw_dim(), |_| {
                    if rng.random::<f64>() < layer.dropout_rate {
                        0.0
                    } else {
                        keep
                    }
                });
                out *= &mask;
                Some(mask)
            } else {
                None
            };
            cache.inputs.push(x);
            cache.pre.push(pre);
            cache.masks.push(mask);
            x = out;
        }
        Ok((x, cache))
    }

    /// Single-sample backward pass: parameter gradients and `dL/dinput`.
    pub fn backward(
        &self,
        cache: &ActivationCache,
        grad_output: &[f64],
    ) -> Result<(Gradients, Vec<f64>)> {
        let g = ArrayView2::from_shape((1, grad_output.len()), grad_output)
            .map_err(|e| Error::Dimension(e.to_string()))?;
        let (grads, input_grad) = self.backward_batch(cache, g, true)?;
        let input_grad = input_grad.expect("input gradient requested");
        Ok((grads, input_grad.into_raw_vec_and_offset().0))
    }

    /// Batch backward pass. Parameter gradients are summed over the batch.
    /// The input gradient is computed only when `want_input_grad` is set.
    pub fn backward_batch(
        &self,
        cache: &ActivationCache,
        grad_output: ArrayView2<'_, f64>,
        want_input_grad: bool,
    ) -> Result<(Gradients, Option<Array2<f64>>)> {
        if cache.pre.len() != self.layers.len() {
            return Err(Error::InvalidInput(format!(
                "cache has {} layers, model has {}",
                cache.pre.len(),
                self.layers.len()
            )));
        }
        for (k, (layer, pre)) in self.layers.iter().zip(&cache.pre).enumerate() {
            if pre.ncols() != layer.out_dim() || cache.inputs[k].ncols() != layer.in_dim() {
                return Err(Error::InvalidInput(format!(
                    "cache layer {k} does not match the model"
                )));
            }
        }
        if grad_output.ncols() != self.output_dim() || grad_output.nrows() != cache.batch_size() {
            return Err(Error::Dimension(format!(
                "grad_output is {}x{}, expected {}x{}",
                grad_output.nrows(),
                grad_output.ncols(),
                cache.batch_size(),
                self.output_dim()
            )));
        }

        let mut layer_grads = Vec::with_capacity(self.layers.len());
        let mut upstream = grad_output.to_owned();
        let mut input_grad = None;
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            if let Some(mask) = &cache.masks[k] {
                upstream *= mask;
            }
            let act = layer.activation;
            let mut delta = upstream;
            delta.zip_mut_with(&cache.pre[k], |d, &p| *d *= act.derivative(p));

            let weights = delta.t().dot(&cache.inputs[k]);
            let bias = delta.sum_axis(Axis(0));
            layer_grads.push(LayerGrad { weights, bias });

            if k > 0 {
                upstream = delta.dot(&layer.weights);
            } else {
                if want_input_grad {
                    input_grad = Some(delta.dot(&layer.weights));
                }
                upstream = Array2::zeros((0, 0));
            }
        }
        layer_grads.reverse();
        Ok((Gradients { layers: layer_grads }, input_grad))
    }

    /// Forward-mode directional derivative in inference mode: returns the
    /// output and the Jacobian applied to `tangent`.
    pub fn jvp(&self, input: &[f64], tangent: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_input(input.len())?;
        self.check_input(tangent.len())?;
        let mut x = Array1::from(input.to_vec());
        let mut t = Array1::from(tangent.to_vec());
        for layer in &self.layers {
            let mut pre = layer.weights.dot(&x);
            pre += &layer.bias;
            let mut dt = layer.weights.dot(&t);
            dt.zip_mut_with(&pre, |d, &p| *d *= layer.activation.derivative(p));
            pre.mapv_inplace(|v| layer.activation.apply(v));
            x = pre;
            t = dt;
        }
        Ok((x.to_vec(), t.to_vec()))
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.input_dim() {
            return Err(Error::Dimension(format!(
                "input has length {len}, model expects {}",
                self.input_dim()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    fn identity_layer(n: usize) -> DenseLayer {
        DenseLayer::new(Array2::eye(n), Array1::zeros(n), Activation::Identity, 0.0).unwrap()
    }

    #[test]
    fn identity_layer_is_identity() {
        let model = MlpModel::new(vec![identity_layer(3)]).unwrap();
        let v = [0.3, -1.5, 2.0];
        let (out, _) = model.forward(&v, Mode::Infer, &mut rng()).unwrap();
        assert_eq!(out, v.to_vec());
    }

    #[test]
    fn tanh_output_is_bounded() {
        let mut r = rng();
        let model = MlpModel::init(
            5,
            &[LayerSpec {
                out_dim: 4,
                activation: Activation::Tanh,
                dropout_rate: 0.0,
            }],
            &mut r,
        )
        .unwrap();
        for scale in [1e-3, 1.0, 1e3, 1e8] {
            let input: Vec<f64> = (0..5).map(|i| scale * (i as f64 - 2.0)).collect();
            let out = model.predict(&input).unwrap();
            assert!(out.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn identity_input_grad_is_transpose() {
        let w = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let layer = DenseLayer::new(w.clone(), Array1::zeros(3), Activation::Identity, 0.0).unwrap();
        let model = MlpModel::new(vec![layer]).unwrap();
        let (_, cache) = model.forward(&[0.5, -0.5], Mode::Infer, &mut rng()).unwrap();
        let g = [1.0, -2.0, 0.5];
        let (_, gi) = model.backward(&cache, &g).unwrap();
        let expected = w.t().dot(&Array1::from(g.to_vec()));
        assert_eq!(gi, expected.to_vec());
    }

    #[test]
    fn zero_grad_output_gives_zero_grads() {
        let mut r = rng();
        let model = MlpModel::init(
            3,
            &[
                LayerSpec {
                    out_dim: 4,
                    activation: Activation::LeakyRelu(0.01),
                    dropout_rate: 0.0,
                },
                LayerSpec {
                    out_dim: 2,
                    activation: Activation::Tanh,
                    dropout_rate: 0.0,
                },
            ],
            &mut r,
        )
        .unwrap();
        let (_, cache) = model.forward(&[0.1, 0.2, 0.3], Mode::Infer, &mut r).unwrap();
        let (grads, gi) = model.backward(&cache, &[0.0, 0.0]).unwrap();
        assert!(grads.iter_values().all(|v| v == 0.0));
        assert!(gi.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dimension_errors() {
        let model = MlpModel::new(vec![identity_layer(3)]).unwrap();
        assert!(matches!(
            model.forward(&[1.0, 2.0], Mode::Infer, &mut rng()),
            Err(Error::Dimension(_))
        ));
        let (_, cache) = model.forward(&[1.0, 2.0, 3.0], Mode::Infer, &mut rng()).unwrap();
        assert!(model.backward(&cache, &[1.0]).is_err());

        let other = MlpModel::new(vec![identity_layer(3), identity_layer(3)]).unwrap();
        assert!(matches!(
            other.backward(&cache, &[1.0, 1.0, 1.0]),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn layer_chain_is_checked() {
        let a = identity_layer(3);
        let b = identity_layer(2);
        assert!(matches!(MlpModel::new(vec![a, b]), Err(Error::Dimension(_))));
        assert!(DenseLayer::new(Array2::zeros((2, 3)), Array1::zeros(3), Activation::Relu, 0.0).is_err());
        assert!(DenseLayer::new(Array2::zeros((2, 3)), Array1::zeros(2), Activation::Relu, 1.0).is_err());
    }

    #[test]
    fn infer_mode_ignores_dropout() {
        let mut r = rng();
        let model = MlpModel::init(
            6,
            &[LayerSpec {
                out_dim: 6,
                activation: Activation::Relu,
                dropout_rate: 0.5,
            }],
            &mut r,
        )
        .unwrap();
        let x = [0.2, 0.4, -0.1, 0.9, 0.3, 0.0];
        let (a, cache) = model.forward(&x, Mode::Infer, &mut r).unwrap();
        let (b, _) = model.forward(&x, Mode::Infer, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, model.predict(&x).unwrap());
        assert!(cache.masks().iter().all(Option::is_none));
    }

    #[test]
    fn jvp_of_linear_layer_is_matrix_product() {
        let w = array![[1.0, -2.0], [0.5, 4.0]];
        let layer = DenseLayer::new(w.clone(), array![0.1, 0.2], Activation::Identity, 0.0).unwrap();
        let model = MlpModel::new(vec![layer]).unwrap();
        let (_, t) = model.jvp(&[3.0, 1.0], &[1.0, 1.0]).unwrap();
        assert_eq!(t, vec![-1.0, 4.5]);
    }
}
