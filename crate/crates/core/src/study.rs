//! End-to-end parametric-concept study on bumped ellipsoids: train an
//! auto-encoder, learn a HighBump CAV and sweep along it.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autoencoder::{train_autoencoder, ArchitectureConfig, AutoEncoder, TrainConfig, TrainingCurve};
use crate::cav::{train_cav, Cav, CavConfig, ConceptSet, ConceptSource, LatentPool};
use crate::error::{Error, Result};
use crate::explore::{latent_correlation, linspace, spearman, translate, LatentCorrelation};
use crate::shapes::{fit_base_ellipsoid, generate_dataset, measure_bump, BumpSpec, Dataset, DatasetConfig, Proportions};

#[derive(Debug, Clone, PartialEq)]
pub struct BumpStudyConfig {
    pub proportions: Proportions,
    pub shapes: usize,
    pub points: usize,
    pub arch_hidden: Vec<usize>,
    pub train: TrainConfig,
    /// Shapes with `h >= high` form HighBump.
    pub high: f64,
    /// Shapes with `h <= low` form LowBump (random-proportions counter).
    pub low: f64,
    /// Size of the random counter in fixed-proportions mode.
    pub random_counter: usize,
    pub eps: Vec<f64>,
    pub cav: CavConfig,
    pub seed: u64,
}

impl BumpStudyConfig {
    pub fn new(proportions: Proportions) -> Self {
        Self {
            proportions,
            shapes: 150,
            points: 512,
            arch_hidden: ArchitectureConfig::default().hidden,
            train: TrainConfig::default(),
            high: 0.4,
            low: 0.2,
            random_counter: 50,
            eps: linspace(-0.5, 0.5, 9),
            cav: CavConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub eps: f64,
    pub bump_height: f64,
    pub semi_axes: [f64; 3],
    pub out_of_box: bool,
}

#[derive(Debug, Clone)]
pub struct BumpStudy {
    pub dataset: Dataset,
    pub ae: AutoEncoder,
    pub curve: TrainingCurve,
    pub latents: Vec<Vec<f64>>,
    pub correlation: LatentCorrelation,
    pub cav: Cav,
    /// Dataset shape the sweep starts from.
    pub base_id: String,
    pub sweep: Vec<SweepPoint>,
    /// Spearman rank correlation between `eps` and measured bump height.
    pub rho: f64,
    /// Largest relative change of any fitted semi-axis against `eps = 0`.
    pub max_axis_change: f64,
}

impl BumpStudy {
    pub fn sweep_csv(&self) -> String {
        let mut s = String::from("eps,bump_height,semi_a,semi_b,semi_c,out_of_box\n");
        for p in &self.sweep {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                p.eps, p.bump_height, p.semi_axes[0], p.semi_axes[1], p.semi_axes[2], p.out_of_box
            ));
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        format!(
            "mean_abs_offdiag,spearman_rho,max_axis_change,cav_train_accuracy,base_id\n{},{},{},{},{}\n",
            self.correlation.mean_abs_offdiag, self.rho, self.max_axis_change, self.cav.train_accuracy, self.base_id
        )
    }
}

fn concept(dataset: &Dataset, latents: &[Vec<f64>], name: &str, keep: impl Fn(f64) -> bool) -> Result<ConceptSet> {
    let mut ids = Vec::new();
    let mut z = Vec::new();
    for (i, e) in dataset.manifest.entries.iter().enumerate() {
        if e.bump_height.is_some_and(&keep) {
            ids.push(e.id.clone());
            z.push(latents[i].clone());
        }
    }
    ConceptSet::new(name, ids, z, ConceptSource::Dataset)
}

pub fn run_bump_study(config: &BumpStudyConfig) -> Result<BumpStudy> {
    if config.eps.is_empty() || !config.eps.contains(&0.0) {
        return Err(Error::InvalidInput("eps sweep must include 0".into()));
    }
    let spec = BumpSpec::default();
    let dataset = generate_dataset(&DatasetConfig {
        cars: 0,
        cuboids: 0,
        ellipsoids: 0,
        bumps: config.shapes,
        bump_proportions: config.proportions,
        bump: spec,
        points: config.points,
        seed: config.seed,
        ..DatasetConfig::default()
    })?;
    let arch = ArchitectureConfig {
        points: config.points,
        hidden: config.arch_hidden.clone(),
        ..ArchitectureConfig::default()
    };
    let (ae, curve) = train_autoencoder(&dataset, &arch, &config.train)?;
    let latents = ae.encode_all(&dataset.clouds)?;
    let correlation = latent_correlation(&latents)?;

    let high = concept(&dataset, &latents, "HighBump", |h| h >= config.high)?;
    let cav = match config.proportions {
        Proportions::Fixed => {
            let pool = LatentPool::from_dataset(&dataset, &latents)?;
            let exclude: BTreeSet<&str> = high.ids.iter().map(String::as_str).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let counter = pool.sample("random", config.random_counter, &exclude, &mut rng)?;
            train_cav(&high.latents, &counter.latents, "HighBump", "random", &config.cav)?
        }
        Proportions::Random => {
            let low = concept(&dataset, &latents, "LowBump", |h| h <= config.low)?;
            train_cav(&high.latents, &low.latents, "HighBump", "LowBump", &config.cav)?
        }
    };

    // Start from the shape whose bump is closest to the middle of the range.
    let mid = 0.5 * (spec.height_range.0 + spec.height_range.1);
    let (base, _) = dataset
        .manifest
        .entries
        .iter()
        .enumerate()
        .filter_map(|(i, e)| e.bump_height.map(|h| (i, (h - mid).abs())))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::InvalidInput("dataset has no bumped shapes".into()))?;

    let mut sweep = Vec::with_capacity(config.eps.len());
    for &eps in &config.eps {
        let edited = translate(&latents[base], &cav, eps)?;
        let cloud = ae.decode(&edited.latent)?;
        sweep.push(SweepPoint {
            eps,
            bump_height: measure_bump(&cloud, &spec)?,
            semi_axes: fit_base_ellipsoid(&cloud, &spec)?.semi_axes,
            out_of_box: edited.out_of_box,
        });
    }
    let eps: Vec<f64> = sweep.iter().map(|p| p.eps).collect();
    let heights: Vec<f64> = sweep.iter().map(|p| p.bump_height).collect();
    let rho = spearman(&eps, &heights)?;
    let origin = sweep.iter().find(|p| p.eps == 0.0).expect("checked above").semi_axes;
    let max_axis_change = sweep
        .iter()
        .flat_map(|p| (0..3).map(move |k| ((p.semi_axes[k] - origin[k]) / origin[k]).abs()))
        .fold(0.0, f64::max);

    Ok(BumpStudy {
        base_id: dataset.manifest.entries[base].id.clone(),
        dataset,
        ae,
        curve,
        latents,
        correlation,
        cav,
        sweep,
        rho,
        max_axis_change,
    })
}
