//! Dataset manifests and synthetic dataset generation.

use std::collections::{BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cloud::PointCloud;
use super::generate::{BumpSpec, CarStyle, Proportions, ShapeGenerator, ShapeKind, ShapeRecipe};
use super::measure::drag_proxy;
use crate::error::{Error, Result};
use crate::numerics::sha256_hex;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_FORMAT: &str = "concept-forge-manifest/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Relative to the manifest's directory.
    pub path: String,
    pub labels: BTreeSet<String>,
    pub drag: f64,
    pub split: Split,
    /// Ground-truth bump height for bumped ellipsoids.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bump_height: Option<f64>,
}

impl ManifestEntry {
    pub fn has_label(&self, label: &str) -> bool {
        self.labels.contains(label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub points: usize,
    pub seed: u64,
    pub validation_fraction: f64,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if self.format != MANIFEST_FORMAT {
            return Err(Error::InvalidInput(format!(
                "unsupported manifest format `{}`",
                self.format
            )));
        }
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate id `{}`", e.id)));
            }
            if !(e.drag >= 0.0) {
                return Err(Error::InvalidInput(format!("negative drag for `{}`", e.id)));
            }
        }
        Ok(())
    }

    pub fn entry(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn ids_with_label(&self, label: &str) -> Vec<String> {
        self.entries
            .iter()
            .filter(|e| e.has_label(label))
            .map(|e| e.id.clone())
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }
}

/// Shape counts for [`generate_dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub cars: usize,
    pub cuboids: usize,
    pub ellipsoids: usize,
    pub bumps: usize,
    pub bump_proportions: Proportions,
    pub bump: BumpSpec,
    pub points: usize,
    pub seed: u64,
    pub validation_fraction: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            cars: 1200,
            cuboids: 60,
            ellipsoids: 60,
            bumps: 0,
            bump_proportions: Proportions::Random,
            bump: BumpSpec::default(),
            points: 512,
            seed: 0,
            validation_fraction: 0.25,
        }
    }
}

/// Manifest plus the normalized clouds it lists, in manifest order.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub clouds: Vec<PointCloud>,
    /// SHA-256 of the serialized manifest.
    pub manifest_hash: String,
}

impl Dataset {
    pub fn points(&self) -> usize {
        self.manifest.points
    }

    pub fn len(&self) -> usize {
        self.clouds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clouds.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.manifest.entries.iter().position(|e| e.id == id)
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.manifest
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.split == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn cloud(&self, id: &str) -> Option<&PointCloud> {
        self.index_of(id).map(|i| &self.clouds[i])
    }

    /// Writes `manifest.json` and `shapes/<id>.xyz` under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir.join("shapes")).map_err(|e| Error::io(dir, e))?;
        for (entry, cloud) in self.manifest.entries.iter().zip(&self.clouds) {
            cloud.write_xyz(&dir.join(&entry.path))?;
        }
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, self.manifest.to_json()?).map_err(|e| Error::io(&path, e))
    }

    /// Loads a dataset directory and normalizes every cloud.
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest = DatasetManifest::from_json(&text)?;
        let mut clouds = Vec::with_capacity(manifest.entries.len());
        for entry in &manifest.entries {
            let cloud = PointCloud::read_xyz(&resolve(dir, &entry.path))?;
            if cloud.len() != manifest.points {
                return Err(Error::Dimension(format!(
                    "`{}` has {} points, manifest says {}",
                    entry.id,
                    cloud.len(),
                    manifest.points
                )));
            }
            clouds.push(cloud.normalize()?);
        }
        Ok(Self {
            manifest,
            clouds,
            manifest_hash: sha256_hex(text.as_bytes()),
        })
    }
}

fn resolve(dir: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        dir.join(p)
    }
}

/// Generates the synthetic dataset in memory. Clouds are normalized; drags
/// come from the drag proxy.
pub fn generate_dataset(config: &DatasetConfig) -> Result<Dataset> {
    if !(config.validation_fraction > 0.0 && config.validation_fraction < 1.0) {
        return Err(Error::InvalidInput("validation fraction must lie in (0, 1)".into()));
    }
    if config.points == 0 {
        return Err(Error::InvalidInput("points per cloud must be > 0".into()));
    }
    let gen = ShapeGenerator::new(config.points);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut shapes: Vec<(String, BTreeSet<String>, PointCloud, Option<f64>)> = Vec::new();
    let labels = |names: &[&str]| names.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();

    for i in 0..config.cars {
        let style = if rng.random::<bool>() { CarStyle::Sport } else { CarStyle::Sedan };
        let (cloud, _) = gen.gen_car_like(&mut rng, style)?;
        shapes.push((format!("car-{i:04}"), labels(&["car", style.label()]), cloud, None));
    }
    for i in 0..config.cuboids {
        let cloud = gen.gen_cuboid(&mut rng, &ShapeRecipe::new(ShapeKind::Cuboid))?;
        shapes.push((format!("cuboid-{i:04}"), labels(&["cuboid"]), cloud, None));
    }
    for i in 0..config.ellipsoids {
        let cloud = gen.gen_ellipsoid(&mut rng, &ShapeRecipe::new(ShapeKind::Ellipsoid))?;
        shapes.push((format!("ellipsoid-{i:04}"), labels(&["ellipsoid"]), cloud, None));
    }
    for i in 0..config.bumps {
        let (cloud, h) = gen.gen_bumped_ellipsoid(&mut rng, config.bump_proportions, &config.bump)?;
        shapes.push((format!("bump-{i:04}"), labels(&["bump"]), cloud, Some(h)));
    }
    if shapes.is_empty() {
        return Err(Error::InvalidInput("dataset would be empty".into()));
    }

    let n = shapes.len();
    let n_val = ((n as f64) * config.validation_fraction).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut split = vec![Split::Train; n];
    for &i in order.iter().take(n_val) {
        split[i] = Split::Val;
    }

    let mut entries = Vec::with_capacity(n);
    let mut clouds = Vec::with_capacity(n);
    for ((id, labels, cloud, bump_height), split) in shapes.into_iter().zip(split) {
        let cloud = cloud.normalize()?;
        entries.push(ManifestEntry {
            path: format!("shapes/{id}.xyz"),
            drag: drag_proxy(&cloud)?,
            id,
            labels,
            split,
            bump_height,
        });
        clouds.push(cloud);
    }
    let manifest = DatasetManifest {
        format: MANIFEST_FORMAT.to_string(),
        points: config.points,
        seed: config.seed,
        validation_fraction: config.validation_fraction,
        entries,
    };
    let manifest_hash = sha256_hex(manifest.to_json()?.as_bytes());
    Ok(Dataset {
        manifest,
        clouds,
        manifest_hash,
    })
}
