//! Latent-to-drag regressor with a ReLU output, and its latent gradient.

use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{
    adam_step, load_checkpoint, save_checkpoint, Activation, AdamConfig, AdamState, LayerSpec,
    Metadata, MlpModel, Mode, DEFAULT_LEAKY_SLOPE,
};
use crate::shapes::Split;

#[derive(Debug, Clone, PartialEq)]
pub struct Regressor {
    net: MlpModel,
}

impl Regressor {
    pub fn new(net: MlpModel) -> Result<Self> {
        let last = net.layers().last().expect("non-empty model");
        if last.activation != Activation::Relu {
            return Err(Error::InvalidInput("regressor must end in a ReLU layer".into()));
        }
        Ok(Self { net })
    }

    pub fn net(&self) -> &MlpModel {
        &self.net
    }

    pub fn latent_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn predict(&self, z: &[f64]) -> Result<f64> {
        self.check(z)?;
        Ok(self.net.predict(z)?[0])
    }

    pub fn predict_all(&self, zs: &[Vec<f64>]) -> Result<Vec<f64>> {
        zs.iter().map(|z| self.predict(z)).collect()
    }

    /// Gradient of the prediction with respect to `z`; exactly zero where the
    /// output ReLU is inactive.
    pub fn grad_wrt_latent(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check(z)?;
        let mut unused = ChaCha8Rng::seed_from_u64(0);
        let (_, cache) = self.net.forward(z, Mode::Infer, &mut unused)?;
        let (_, grad) = self.net.backward(&cache, &[1.0])?;
        Ok(grad)
    }

    fn check(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.latent_dim() {
            return Err(Error::Dimension(format!(
                "latent has length {}, regressor expects {}",
                z.len(),
                self.latent_dim()
            )));
        }
        Ok(())
    }

    /// Saves with the upstream auto-encoder hash in the metadata; returns the
    /// checkpoint hash.
    pub fn save(&self, path: &Path, ae_hash: &str) -> Result<String> {
        let mut meta = Metadata::new();
        meta.insert("kind".into(), "regressor".into());
        meta.insert("ae_hash".into(), ae_hash.into());
        save_checkpoint(path, &self.net, &meta)
    }

    pub fn load(path: &Path) -> Result<LoadedRegressor> {
        let (net, meta, hash) = load_checkpoint(path)?;
        if meta.get("kind").map(String::as_str) != Some("regressor") {
            return Err(Error::Checkpoint(format!("{} is not a regressor", path.display())));
        }
        let ae_hash = meta
            .get("ae_hash")
            .cloned()
            .ok_or_else(|| Error::Checkpoint("regressor checkpoint lacks ae_hash".into()))?;
        Ok(LoadedRegressor {
            reg: Self::new(net)?,
            ae_hash,
            hash,
        })
    }
}

#[derive(Debug, Clone)]
pub struct LoadedRegressor {
    pub reg: Regressor,
    pub ae_hash: String,
    pub hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressorConfig {
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for RegressorConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            dropout: 0.1,
            epochs: 1000,
            batch_size: 32,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressorReport {
    pub train_mse: f64,
    pub val_mse: f64,
    /// MSE of predicting the validation mean, for comparison.
    pub val_baseline_mse: f64,
}

impl RegressorReport {
    pub fn to_csv(&self) -> String {
        format!(
            "train_mse,val_mse,val_baseline_mse\n{},{},{}\n",
            self.train_mse, self.val_mse, self.val_baseline_mse
        )
    }
}

fn mse(reg: &Regressor, zs: &Array2<f64>, ys: &Array1<f64>) -> Result<f64> {
    if zs.nrows() == 0 {
        return Ok(f64::NAN);
    }
    let pred = reg.net.predict_batch(zs.view())?;
    Ok(pred.column(0).iter().zip(ys).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / ys.len() as f64)
}

/// Fits `drags` from `latents` on the rows marked [`Split::Train`].
pub fn train_regressor(
    latents: &[Vec<f64>],
    drags: &[f64],
    splits: &[Split],
    config: &RegressorConfig,
) -> Result<(Regressor, RegressorReport)> {
    if latents.len() != drags.len() || latents.len() != splits.len() {
        return Err(Error::Dimension(format!(
            "{} latents, {} drags, {} split labels",
            latents.len(),
            drags.len(),
            splits.len()
        )));
    }
    if latents.is_empty() {
        return Err(Error::InvalidInput("no training data".into()));
    }
    if config.epochs == 0 || config.batch_size == 0 {
        return Err(Error::InvalidInput("epochs and batch size must be > 0".into()));
    }
    if drags.iter().any(|&y| !(y >= 0.0) || !y.is_finite()) {
        return Err(Error::InvalidInput("drag targets must be finite and >= 0".into()));
    }
    let h = latents[0].len();
    if h == 0 || latents.iter().any(|z| z.len() != h) {
        return Err(Error::Dimension("latents have inconsistent lengths".into()));
    }
    let rows = |split: Split| -> (Array2<f64>, Array1<f64>) {
        let idx: Vec<usize> = (0..latents.len()).filter(|&i| splits[i] == split).collect();
        let mut z = Array2::zeros((idx.len(), h));
        for (mut row, &i) in z.outer_iter_mut().zip(&idx) {
            row.assign(&Array1::from(latents[i].clone()));
        }
        (z, idx.iter().map(|&i| drags[i]).collect())
    };
    let (train_z, train_y) = rows(Split::Train);
    let (val_z, val_y) = rows(Split::Val);
    if train_z.nrows() == 0 {
        return Err(Error::InvalidInput("train split is empty".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut specs: Vec<LayerSpec> = config
        .hidden
        .iter()
        .map(|&w| LayerSpec {
            out_dim: w,
            activation: Activation::LeakyRelu(DEFAULT_LEAKY_SLOPE),
            dropout_rate: config.dropout,
        })
        .collect();
    specs.push(LayerSpec {
        out_dim: 1,
        activation: Activation::Relu,
        dropout_rate: 0.0,
    });
    let mut net = MlpModel::init(h, &specs, &mut rng)?;
    // Start the output at the target mean so the ReLU is live from step one.
    let mean_y = train_y.mean().unwrap_or(0.0);
    net.layers_mut().last_mut().expect("non-empty").bias[0] = mean_y;
    let mut reg = Regressor::new(net)?;
    let mut state = AdamState::new(&reg.net, config.adam);

    let mut order: Vec<usize> = (0..train_z.nrows()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let z = train_z.select(Axis(0), chunk);
            let y = train_y.select(Axis(0), chunk);
            let (pred, cache) = reg.net.forward_batch(z.view(), Mode::Train, &mut rng)?;
            let mut grad = pred;
            let scale = 2.0 / chunk.len() as f64;
            for (g, t) in grad.column_mut(0).iter_mut().zip(&y) {
                *g = scale * (*g - t);
            }
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!("regressor loss diverged at epoch {epoch}")));
            }
            let (grads, _) = reg.net.backward_batch(&cache, grad.view(), false)?;
            adam_step(&mut reg.net, &grads, &mut state)?;
        }
    }
    let val_baseline_mse = match val_y.mean() {
        Some(m) => val_y.iter().map(|y| (y - m).powi(2)).sum::<f64>() / val_y.len() as f64,
        None => f64::NAN,
    };
    let report = RegressorReport {
        train_mse: mse(&reg, &train_z, &train_y)?,
        val_mse: mse(&reg, &val_z, &val_y)?,
        val_baseline_mse,
    };
    Ok((reg, report))
}
