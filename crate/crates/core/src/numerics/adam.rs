//! ADAM with bias correction.

use ndarray::{Array1, Array2, Zip};

use super::mlp::{Gradients, MlpModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps_hat: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
struct Moments {
    m_w: Array2<f64>,
    v_w: Array2<f64>,
    m_b: Array1<f64>,
    v_b: Array1<f64>,
}

/// Optimizer state for one [`MlpModel`].
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    t: u64,
    moments: Vec<Moments>,
}

impl AdamState {
    pub fn new(model: &MlpModel, config: AdamConfig) -> Self {
        let moments = model
            .layers()
            .iter()
            .map(|l| Moments {
                m_w: Array2::zeros(l.weights.raw_dim()),
                v_w: Array2::zeros(l.weights.raw_dim()),
                m_b: Array1::zeros(l.bias.len()),
                v_b: Array1::zeros(l.bias.len()),
            })
            .collect();
        Self {
            config,
            t: 0,
            moments,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// Applies one update to a flat parameter slice. `t` is the already
/// incremented step counter.
pub fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    cfg: &AdamConfig,
) {
    let (c1, c2) = bias_corrections(t, cfg);
    for i in 0..params.len() {
        update_one(&mut params[i], grads[i], &mut m[i], &mut v[i], c1, c2, cfg);
    }
}

fn bias_corrections(t: u64, cfg: &AdamConfig) -> (f64, f64) {
    let t = t as i32;
    (1.0 - cfg.beta1.powi(t), 1.0 - cfg.beta2.powi(t))
}

#[inline]
fn update_one(p: &mut f64, g: f64, m: &mut f64, v: &mut f64, c1: f64, c2: f64, cfg: &AdamConfig) {
    *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
    *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
    let m_hat = *m / c1;
    let v_hat = *v / c2;
    *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps_hat);
}

/// One ADAM step over every weight and bias of `model`.
pub fn adam_step(model: &mut MlpModel, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    if grads.layers.len() != model.layers().len() || state.moments.len() != model.layers().len() {
        return Err(Error::Dimension("gradient/state layer count mismatch".into()));
    }
    for (k, (layer, g)) in model.layers().iter().zip(&grads.layers).enumerate() {
        if layer.weights.raw_dim() != g.weights.raw_dim() || layer.bias.len() != g.bias.len() {
            return Err(Error::Dimension(format!("gradient shape mismatch at layer {k}")));
        }
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite(format!(
            "NaN/Inf gradient at optimizer step {}",
            state.t + 1
        )));
    }

    state.t += 1;
    let cfg = state.config;
    let (c1, c2) = bias_corrections(state.t, &cfg);
    for ((layer, g), mom) in model
        .layers_mut()
        .iter_mut()
        .zip(&grads.layers)
        .zip(&mut state.moments)
    {
        Zip::from(&mut layer.weights)
            .and(&g.weights)
            .and(&mut mom.m_w)
            .and(&mut mom.v_w)
            .for_each(|p, &g, m, v| update_one(p, g, m, v, c1, c2, &cfg));
        Zip::from(&mut layer.bias)
            .and(&g.bias)
            .and(&mut mom.m_b)
            .and(&mut mom.v_b)
            .for_each(|p, &g, m, v| update_one(p, g, m, v, c1, c2, &cfg));
    }
    if !model.is_finite() {
        return Err(Error::NonFinite(format!(
            "weights became non-finite at optimizer step {}",
            state.t
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Activation, LayerSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_model() -> MlpModel {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        MlpModel::init(
            3,
            &[LayerSpec {
                out_dim: 2,
                activation: Activation::Tanh,
                dropout_rate: 0.0,
            }],
            &mut rng,
        )
        .unwrap()
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut model = small_model();
        let before = model.clone();
        let mut state = AdamState::new(&model, AdamConfig::default());
        let grads = Gradients::zeros_like(&model);
        adam_step(&mut model, &grads, &mut state).unwrap();
        assert_eq!(state.step_count(), 1);
        for (a, b) in model.layers().iter().zip(before.layers()) {
            assert!(a.weights.iter().zip(b.weights.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
            assert!(a.bias.iter().zip(b.bias.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m = 0.1, v = 0.001; bias-corrected both equal g, so the step is
        // lr * 1 / (1 + 1e-8).
        let cfg = AdamConfig::default();
        let (mut p, mut m, mut v) = ([0.0], [0.0], [0.0]);
        adam_update(&mut p, &[1.0], &mut m, &mut v, 1, &cfg);
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15, "{}", p[0]);
    }

    #[test]
    fn constant_gradient_decreases_monotonically() {
        let cfg = AdamConfig::default();
        let (mut p, mut m, mut v) = ([0.0], [0.0], [0.0]);
        let mut prev = p[0];
        for t in 1..=500 {
            adam_update(&mut p, &[0.7], &mut m, &mut v, t, &cfg);
            assert!(p[0] < prev);
            prev = p[0];
        }
    }

    #[test]
    fn nan_gradient_aborts() {
        let mut model = small_model();
        let mut state = AdamState::new(&model, AdamConfig::default());
        let mut grads = Gradients::zeros_like(&model);
        grads.layers[0].bias[1] = f64::NAN;
        let err = adam_step(&mut model, &grads, &mut state).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
        assert_eq!(state.step_count(), 0);
    }
}
