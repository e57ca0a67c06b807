//! Point-cloud auto-encoder: an MLP encoder into a tanh-bounded latent box
//! and a mirrored MLP decoder back to `P x 3` coordinates.

use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    adam_step, read_checkpoint, sha256_hex, write_checkpoint, Activation, AdamConfig, AdamState,
    LayerSpec, Metadata, MlpModel, Mode, DEFAULT_LEAKY_SLOPE,
};
use crate::shapes::{Dataset, PointCloud, Split};

pub const NORMALIZATION: &str = "centroid-origin/bbox-diagonal-1";
pub const AE_META_FORMAT: &str = "concept-forge-ae-meta/1";

#[derive(Debug, Clone, PartialEq)]
pub struct ArchitectureConfig {
    pub points: usize,
    pub latent_dim: usize,
    /// Encoder hidden widths, input side first. The decoder uses them reversed.
    pub hidden: Vec<usize>,
    pub leaky_slope: f64,
    /// Dropout on hidden layers.
    pub dropout: f64,
    /// Dropout on the latent code during training.
    pub latent_dropout: f64,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        Self {
            points: 512,
            latent_dim: 8,
            hidden: vec![256, 64, 32],
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            dropout: 0.1,
            latent_dropout: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoEncoder {
    encoder: MlpModel,
    decoder: MlpModel,
}

impl AutoEncoder {
    /// Checks the structural invariants: tanh latent layer, identity output
    /// layer, and decoder widths mirroring the encoder.
    pub fn new(encoder: MlpModel, decoder: MlpModel) -> Result<Self> {
        let enc_last = encoder.layers().last().expect("non-empty model");
        if enc_last.activation != Activation::Tanh {
            return Err(Error::InvalidInput("encoder must end in a tanh layer".into()));
        }
        let dec_last = decoder.layers().last().expect("non-empty model");
        if dec_last.activation != Activation::Identity {
            return Err(Error::InvalidInput("decoder must end in an identity layer".into()));
        }
        if !encoder.input_dim().is_multiple_of(3) {
            return Err(Error::Dimension("encoder input is not 3P".into()));
        }
        let enc_widths = widths(&encoder);
        let mut dec_widths = widths(&decoder);
        dec_widths.reverse();
        if enc_widths != dec_widths {
            return Err(Error::Dimension(format!(
                "decoder widths {:?} do not mirror encoder widths {:?}",
                widths(&decoder),
                enc_widths
            )));
        }
        Ok(Self { encoder, decoder })
    }

    pub fn init(arch: &ArchitectureConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        if arch.points == 0 || arch.latent_dim == 0 {
            return Err(Error::InvalidInput("points and latent_dim must be > 0".into()));
        }
        let hidden_layer = |out_dim| LayerSpec {
            out_dim,
            activation: Activation::LeakyRelu(arch.leaky_slope),
            dropout_rate: arch.dropout,
        };
        let mut enc: Vec<LayerSpec> = arch.hidden.iter().map(|&w| hidden_layer(w)).collect();
        enc.push(LayerSpec {
            out_dim: arch.latent_dim,
            activation: Activation::Tanh,
            dropout_rate: arch.latent_dropout,
        });
        let mut dec: Vec<LayerSpec> = arch.hidden.iter().rev().map(|&w| hidden_layer(w)).collect();
        dec.push(LayerSpec {
            out_dim: 3 * arch.points,
            activation: Activation::Identity,
            dropout_rate: 0.0,
        });
        let encoder = MlpModel::init(3 * arch.points, &enc, rng)?;
        let decoder = MlpModel::init(arch.latent_dim, &dec, rng)?;
        Self::new(encoder, decoder)
    }

    pub fn encoder(&self) -> &MlpModel {
        &self.encoder
    }

    pub fn decoder(&self) -> &MlpModel {
        &self.decoder
    }

    pub fn points(&self) -> usize {
        self.encoder.input_dim() / 3
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    /// Latent code of an already normalized cloud.
    pub fn encode(&self, pc: &PointCloud) -> Result<Vec<f64>> {
        self.check_points(pc)?;
        self.encoder.predict(&pc.to_flat())
    }

    pub fn encode_all(&self, clouds: &[PointCloud]) -> Result<Vec<Vec<f64>>> {
        if clouds.is_empty() {
            return Ok(Vec::new());
        }
        for pc in clouds {
            self.check_points(pc)?;
        }
        let x = stack(clouds);
        let z = self.encoder.predict_batch(x.view())?;
        Ok(z.outer_iter().map(|r| r.to_vec()).collect())
    }

    /// Decodes any latent vector, including ones outside the tanh box.
    pub fn decode(&self, z: &[f64]) -> Result<PointCloud> {
        if z.len() != self.latent_dim() {
            return Err(Error::Dimension(format!(
                "latent has length {}, expected {}",
                z.len(),
                self.latent_dim()
            )));
        }
        PointCloud::from_flat(&self.decoder.predict(z)?)
    }

    fn check_points(&self, pc: &PointCloud) -> Result<()> {
        if pc.len() != self.points() {
            return Err(Error::Dimension(format!(
                "cloud has {} points, auto-encoder expects {}",
                pc.len(),
                self.points()
            )));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut enc_meta = Metadata::new();
        enc_meta.insert("role".into(), "encoder".into());
        let mut dec_meta = Metadata::new();
        dec_meta.insert("role".into(), "decoder".into());
        let mut s = write_checkpoint(&self.encoder, &enc_meta);
        s.push_str(&write_checkpoint(&self.decoder, &dec_meta));
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let split = text
            .match_indices("\nend\n")
            .next()
            .map(|(i, m)| i + m.len())
            .ok_or_else(|| Error::Checkpoint("auto-encoder file has no encoder section".into()))?;
        let (enc, enc_meta) = read_checkpoint(&text[..split])?;
        let (dec, dec_meta) = read_checkpoint(&text[split..])?;
        if enc_meta.get("role").map(String::as_str) != Some("encoder")
            || dec_meta.get("role").map(String::as_str) != Some("decoder")
        {
            return Err(Error::Checkpoint("expected encoder then decoder sections".into()));
        }
        Self::new(enc, dec)
    }

    /// Writes the checkpoint and its `.meta.json` sidecar; returns the
    /// checkpoint hash.
    pub fn save(&self, path: &Path, manifest_hash: &str) -> Result<String> {
        let text = self.to_text();
        std::fs::write(path, &text).map_err(|e| Error::io(path, e))?;
        let hash = sha256_hex(text.as_bytes());
        let meta = AeMetadata {
            format: AE_META_FORMAT.into(),
            points: self.points(),
            latent_dim: self.latent_dim(),
            normalization: NORMALIZATION.into(),
            manifest_hash: manifest_hash.into(),
            checkpoint_hash: hash.clone(),
        };
        let meta_path = sidecar_path(path);
        std::fs::write(&meta_path, serde_json::to_string_pretty(&meta)? + "\n")
            .map_err(|e| Error::io(&meta_path, e))?;
        Ok(hash)
    }

    /// Loads a checkpoint, verifying it against its sidecar if present.
    pub fn load(path: &Path) -> Result<LoadedAutoEncoder> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let hash = sha256_hex(text.as_bytes());
        let meta_path = sidecar_path(path);
        let meta = match std::fs::read_to_string(&meta_path) {
            Ok(s) => {
                let meta: AeMetadata = serde_json::from_str(&s)?;
                if meta.checkpoint_hash != hash {
                    return Err(Error::ArtifactMismatch(format!(
                        "{} does not match its sidecar hash",
                        path.display()
                    )));
                }
                Some(meta)
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
            Err(e) => return Err(Error::io(&meta_path, e)),
        };
        let ae = Self::from_text(&text)?;
        Ok(LoadedAutoEncoder { ae, hash, meta })
    }
}

#[derive(Debug, Clone)]
pub struct LoadedAutoEncoder {
    pub ae: AutoEncoder,
    pub hash: String,
    pub meta: Option<AeMetadata>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeMetadata {
    pub format: String,
    pub points: usize,
    pub latent_dim: usize,
    pub normalization: String,
    pub manifest_hash: String,
    pub checkpoint_hash: String,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn widths(model: &MlpModel) -> Vec<usize> {
    let mut w = vec![model.input_dim()];
    w.extend(model.layers().iter().map(|l| l.out_dim()));
    w
}

fn stack(clouds: &[PointCloud]) -> Array2<f64> {
    let cols = clouds[0].len() * 3;
    let mut x = Array2::zeros((clouds.len(), cols));
    for (mut row, pc) in x.outer_iter_mut().zip(clouds) {
        for (dst, src) in row.iter_mut().zip(pc.points().iter().flatten()) {
            *dst = *src;
        }
    }
    x
}

/// Squared Frobenius norm of `x - x_hat`.
pub fn reconstruction_loss(x: &PointCloud, x_hat: &PointCloud) -> Result<f64> {
    if x.len() != x_hat.len() {
        return Err(Error::Dimension(format!(
            "clouds have {} and {} points",
            x.len(),
            x_hat.len()
        )));
    }
    Ok(x
        .points()
        .iter()
        .zip(x_hat.points())
        .map(|(a, b)| (0..3).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>())
        .sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            batch_size: 32,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

/// Mean per-shape losses. Epoch 0 is the untrained model evaluated in
/// inference mode; later train values are the running mean over that
/// epoch's minibatches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train: f64,
    pub val: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingCurve {
    pub epochs: Vec<EpochLoss>,
}

impl TrainingCurve {
    pub fn initial(&self) -> Option<EpochLoss> {
        self.epochs.first().copied()
    }

    pub fn last(&self) -> Option<EpochLoss> {
        self.epochs.last().copied()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss\n");
        for e in &self.epochs {
            s.push_str(&format!("{},{},{}\n", e.epoch, e.train, e.val));
        }
        s
    }
}

fn mean_loss(ae: &AutoEncoder, x: ArrayView2<'_, f64>) -> Result<f64> {
    if x.nrows() == 0 {
        return Ok(f64::NAN);
    }
    let z = ae.encoder.predict_batch(x)?;
    let x_hat = ae.decoder.predict_batch(z.view())?;
    let diff = &x_hat - &x;
    Ok(diff.mapv(|d| d * d).sum() / x.nrows() as f64)
}

/// Affine reparametrization used while training. The encoder sees inputs
/// relative to the training mean shape, with its first-layer bias starting at
/// `W0 · mean` so the initial network equals the one acting on raw clouds.
/// The decoder predicts the offset from the mean shape in units of the RMS
/// coordinate spread. Both maps are folded into the plain model afterwards.
struct TrainingFrame {
    mean: Array1<f64>,
    scale: f64,
}

impl TrainingFrame {
    fn fit(x: ArrayView2<f64>) -> Self {
        let mean = x.mean_axis(Axis(0)).expect("non-empty split");
        let var = x.var_axis(Axis(0), 0.0).mean().expect("non-empty cloud");
        let scale = if var.sqrt() > 1e-9 { var.sqrt() } else { 1.0 };
        Self { mean, scale }
    }

    fn center(&self, x: ArrayView2<f64>) -> Array2<f64> {
        &x - &self.mean
    }

    fn attach(&self, ae: &mut AutoEncoder) {
        let first = &mut ae.encoder.layers_mut()[0];
        first.bias = first.weights.dot(&self.mean);
    }

    /// Model acting on raw clouds equivalent to `ae` acting in this frame.
    fn fold(&self, ae: &AutoEncoder) -> Result<AutoEncoder> {
        let mut enc = ae.encoder.clone();
        let first = &mut enc.layers_mut()[0];
        first.bias -= &first.weights.dot(&self.mean);
        let mut dec = ae.decoder.clone();
        let last = dec.layers_mut().last_mut().expect("decoder has layers");
        last.weights *= self.scale;
        last.bias = &last.bias * self.scale + &self.mean;
        AutoEncoder::new(enc, dec)
    }
}

/// Trains on the dataset's train split and reports validation loss per epoch.
pub fn train_autoencoder(
    dataset: &Dataset,
    arch: &ArchitectureConfig,
    config: &TrainConfig,
) -> Result<(AutoEncoder, TrainingCurve)> {
    if config.epochs == 0 || config.batch_size == 0 {
        return Err(Error::InvalidInput("epochs and batch size must be > 0".into()));
    }
    if arch.points != dataset.points() {
        return Err(Error::Dimension(format!(
            "architecture expects {} points, dataset has {}",
            arch.points,
            dataset.points()
        )));
    }
    let train_idx = dataset.indices(Split::Train);
    let val_idx = dataset.indices(Split::Val);
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(Error::InvalidInput("train and validation splits must be non-empty".into()));
    }
    let all = stack(&dataset.clouds);
    let train_x = all.select(Axis(0), &train_idx);
    let val_x = all.select(Axis(0), &val_idx);
    let frame = TrainingFrame::fit(train_x.view());
    let train_c = frame.center(train_x.view());

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut ae = AutoEncoder::init(arch, &mut rng)?;
    frame.attach(&mut ae);
    let mut enc_state = AdamState::new(&ae.encoder, config.adam);
    let mut dec_state = AdamState::new(&ae.decoder, config.adam);

    let mut curve = TrainingCurve::default();
    let folded = frame.fold(&ae)?;
    curve.epochs.push(EpochLoss {
        epoch: 0,
        train: mean_loss(&folded, train_x.view())?,
        val: mean_loss(&folded, val_x.view())?,
    });

    let mut order: Vec<usize> = (0..train_x.nrows()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let xc = train_c.select(Axis(0), chunk);
            let b = chunk.len() as f64;
            let (z, enc_cache) = ae.encoder.forward_batch(xc.view(), Mode::Train, &mut rng)?;
            let (y, dec_cache) = ae.decoder.forward_batch(z.view(), Mode::Train, &mut rng)?;
            let diff = y * frame.scale - &xc;
            let loss = diff.mapv(|d| d * d).sum();
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("reconstruction loss is {loss} at epoch {epoch}")));
            }
            total += loss;
            let grad_out = diff * (2.0 * frame.scale / b);
            let (dec_grads, grad_z) = ae.decoder.backward_batch(&dec_cache, grad_out.view(), true)?;
            let grad_z = grad_z.expect("requested");
            let (enc_grads, _) = ae.encoder.backward_batch(&enc_cache, grad_z.view(), false)?;
            adam_step(&mut ae.decoder, &dec_grads, &mut dec_state)?;
            adam_step(&mut ae.encoder, &enc_grads, &mut enc_state)?;
        }
        let val = mean_loss(&frame.fold(&ae)?, val_x.view())?;
        if !val.is_finite() {
            return Err(Error::NonFinite(format!("validation loss is {val} at epoch {epoch}")));
        }
        curve.epochs.push(EpochLoss {
            epoch,
            train: total / train_x.nrows() as f64,
            val,
        });
        if epoch % 100 == 0 {
            log::info!("epoch {epoch}: train {:.5} val {val:.5}", total / train_x.nrows() as f64);
        }
    }
    let ae = frame.fold(&ae)?;
    Ok((ae, curve))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes::{generate_dataset, DatasetConfig};

    fn tiny_arch(points: usize) -> ArchitectureConfig {
        ArchitectureConfig {
            points,
            latent_dim: 4,
            hidden: vec![16, 8],
            ..ArchitectureConfig::default()
        }
    }

    #[test]
    fn loss_examples() {
        let x = PointCloud::new(vec![[0.0, 1.0, 2.0], [3.0, 4.0, 5.0]]).unwrap();
        assert_eq!(reconstruction_loss(&x, &x).unwrap(), 0.0);
        let shifted = PointCloud::new(vec![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap();
        assert_eq!(reconstruction_loss(&x, &shifted).unwrap(), 6.0);
        let short = PointCloud::new(vec![[0.0, 0.0, 0.0]]).unwrap();
        assert!(reconstruction_loss(&x, &short).is_err());
    }

    #[test]
    fn structure_is_validated() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ae = AutoEncoder::init(&tiny_arch(10), &mut rng).unwrap();
        assert_eq!(ae.latent_dim(), 4);
        assert_eq!(ae.points(), 10);
        // Swapping roles breaks both the activation and mirror checks.
        assert!(AutoEncoder::new(ae.decoder().clone(), ae.encoder().clone()).is_err());
        let other = AutoEncoder::init(
            &ArchitectureConfig {
                hidden: vec![16, 9],
                ..tiny_arch(10)
            },
            &mut rng,
        )
        .unwrap();
        assert!(AutoEncoder::new(ae.encoder().clone(), other.decoder().clone()).is_err());
    }

    #[test]
    fn wrong_sizes_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ae = AutoEncoder::init(&tiny_arch(10), &mut rng).unwrap();
        let pc = PointCloud::new(vec![[0.0, 0.1, 0.2]; 9]).unwrap();
        assert!(matches!(ae.encode(&pc), Err(Error::Dimension(_))));
        assert!(matches!(ae.decode(&[0.0; 3]), Err(Error::Dimension(_))));
        assert_eq!(ae.decode(&[0.0; 4]).unwrap().len(), 10);
    }

    #[test]
    fn text_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ae = AutoEncoder::init(&tiny_arch(6), &mut rng).unwrap();
        assert_eq!(AutoEncoder::from_text(&ae.to_text()).unwrap(), ae);
    }

    #[test]
    fn save_load_checks_sidecar() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ae = AutoEncoder::init(&tiny_arch(6), &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ae.model");
        let hash = ae.save(&path, "abc").unwrap();
        let loaded = AutoEncoder::load(&path).unwrap();
        assert_eq!(loaded.hash, hash);
        assert_eq!(loaded.meta.unwrap().manifest_hash, "abc");
        std::fs::write(&path, ae.to_text() + "\n").unwrap();
        assert!(matches!(AutoEncoder::load(&path), Err(Error::ArtifactMismatch(_))));
    }

    #[test]
    fn short_training_is_reproducible_and_finite() {
        let ds = generate_dataset(&DatasetConfig {
            cars: 16,
            cuboids: 4,
            ellipsoids: 4,
            points: 32,
            seed: 1,
            ..DatasetConfig::default()
        })
        .unwrap();
        let config = TrainConfig {
            epochs: 5,
            batch_size: 8,
            seed: 9,
            ..TrainConfig::default()
        };
        let (ae1, c1) = train_autoencoder(&ds, &tiny_arch(32), &config).unwrap();
        let (ae2, c2) = train_autoencoder(&ds, &tiny_arch(32), &config).unwrap();
        assert_eq!(c1, c2);
        assert_eq!(ae1, ae2);
        assert_eq!(c1.epochs.len(), 6);
        assert!(c1.epochs.iter().all(|e| e.val.is_finite() && e.train.is_finite()));
        assert!(c1.to_csv().starts_with("epoch,train_loss,val_loss\n0,"));
    }
}
