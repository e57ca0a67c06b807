//! Concept definitions and their resolution to latent sets.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autoencoder::AutoEncoder;
use crate::error::{Error, Result};
use crate::shapes::{
    BumpSpec, CarStyle, Dataset, PointCloud, Proportions, ShapeGenerator, ShapeKind, ShapeRecipe,
};

pub const DEFAULT_RANDOM_COUNTER: usize = 50;

/// Synthetic shapes generated on demand for a concept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptRecipe {
    /// One of `cuboid`, `ellipsoid`, `sport`, `sedan`, `bump`.
    pub kind: String,
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
    /// Bump height range for `bump`; defaults to the generator's range.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bump_height: Option<(f64, f64)>,
}

/// JSON concept file. Exactly one of `ids`, `label` or `recipe` selects the
/// positives. `counter` is another concept's name or `random:N`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConceptFile {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ids: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipe: Option<ConceptRecipe>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counter: Option<String>,
}

impl ConceptFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let c: Self = serde_json::from_str(&text)?;
        c.validate()?;
        Ok(c)
    }

    /// All `*.json` concept files in `dir`, sorted by name.
    pub fn load_dir(dir: &Path) -> Result<Vec<Self>> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut out: Vec<Self> = paths.iter().map(|p| Self::load(p)).collect::<Result<_>>()?;
        out.sort_by(|a, b| a.name.cmp(&b.name));
        for pair in out.windows(2) {
            if pair[0].name == pair[1].name {
                return Err(Error::InvalidInput(format!("duplicate concept `{}`", pair[0].name)));
            }
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::InvalidInput("concept name is empty".into()));
        }
        let selectors = [self.ids.is_some(), self.label.is_some(), self.recipe.is_some()];
        if selectors.iter().filter(|&&s| s).count() != 1 {
            return Err(Error::InvalidInput(format!(
                "concept `{}` needs exactly one of ids, label, recipe",
                self.name
            )));
        }
        if let Some(c) = &self.counter {
            Counter::parse(c)?;
        }
        Ok(())
    }

    pub fn counter(&self) -> Result<Counter> {
        match &self.counter {
            Some(c) => Counter::parse(c),
            None => Ok(Counter::Random(DEFAULT_RANDOM_COUNTER)),
        }
    }

    /// Resolves the positives against a dataset, encoding synthetic recipes.
    pub fn resolve(&self, dataset: &Dataset, ae: &AutoEncoder, latents: &[Vec<f64>]) -> Result<ConceptSet> {
        self.validate()?;
        let from_ids = |ids: Vec<String>, source| -> Result<ConceptSet> {
            let mut z = Vec::with_capacity(ids.len());
            for id in &ids {
                let i = dataset
                    .index_of(id)
                    .ok_or_else(|| Error::NotFound(format!("concept `{}`: unknown id `{id}`", self.name)))?;
                z.push(latents[i].clone());
            }
            ConceptSet::new(&self.name, ids, z, source)
        };
        if let Some(ids) = &self.ids {
            return from_ids(ids.clone(), ConceptSource::Dataset);
        }
        if let Some(label) = &self.label {
            return from_ids(dataset.manifest.ids_with_label(label), ConceptSource::Dataset);
        }
        let recipe = self.recipe.as_ref().expect("validated");
        let clouds = generate_recipe(recipe, dataset.points())?;
        let ids = (0..clouds.len()).map(|k| format!("synthetic:{}-{k:04}", self.name)).collect();
        ConceptSet::new(&self.name, ids, ae.encode_all(&clouds)?, ConceptSource::Synthetic)
    }
}

fn generate_recipe(recipe: &ConceptRecipe, points: usize) -> Result<Vec<PointCloud>> {
    let gen = ShapeGenerator::new(points);
    let mut rng = ChaCha8Rng::seed_from_u64(recipe.seed);
    let mut out = Vec::with_capacity(recipe.count);
    for _ in 0..recipe.count {
        let cloud = match recipe.kind.as_str() {
            "cuboid" => gen.gen_cuboid(&mut rng, &ShapeRecipe::new(ShapeKind::Cuboid))?,
            "ellipsoid" => gen.gen_ellipsoid(&mut rng, &ShapeRecipe::new(ShapeKind::Ellipsoid))?,
            "sport" => gen.gen_car_like(&mut rng, CarStyle::Sport)?.0,
            "sedan" => gen.gen_car_like(&mut rng, CarStyle::Sedan)?.0,
            "bump" => {
                let mut spec = BumpSpec::default();
                if let Some(range) = recipe.bump_height {
                    spec.height_range = range;
                }
                gen.gen_bumped_ellipsoid(&mut rng, Proportions::Random, &spec)?.0
            }
            other => return Err(Error::InvalidInput(format!("unknown recipe kind `{other}`"))),
        };
        out.push(cloud.normalize()?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Counter {
    /// Fresh random non-concept shapes of this size.
    Random(usize),
    Concept(String),
}

impl Counter {
    pub fn parse(s: &str) -> Result<Self> {
        match s.strip_prefix("random:") {
            Some(n) => match n.parse::<usize>() {
                Ok(n) if n > 0 => Ok(Self::Random(n)),
                _ => Err(Error::InvalidInput(format!("bad counter `{s}`"))),
            },
            None if !s.is_empty() => Ok(Self::Concept(s.to_string())),
            None => Err(Error::InvalidInput("empty counter".into())),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Random(n) => format!("random:{n}"),
            Self::Concept(name) => name.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConceptSource {
    Dataset,
    Synthetic,
    Random,
}

/// A named set of example shapes together with their latents.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptSet {
    pub name: String,
    pub ids: Vec<String>,
    pub latents: Vec<Vec<f64>>,
    pub source: ConceptSource,
}

impl ConceptSet {
    pub fn new(name: &str, ids: Vec<String>, latents: Vec<Vec<f64>>, source: ConceptSource) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::InvalidInput(format!("concept `{name}` is empty")));
        }
        if ids.len() != latents.len() {
            return Err(Error::Dimension(format!(
                "concept `{name}` has {} ids and {} latents",
                ids.len(),
                latents.len()
            )));
        }
        Ok(Self {
            name: name.into(),
            ids,
            latents,
            source,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Dataset shapes available for random non-concept sampling.
#[derive(Debug, Clone)]
pub struct LatentPool {
    pub ids: Vec<String>,
    pub latents: Vec<Vec<f64>>,
}

impl LatentPool {
    pub fn new(ids: Vec<String>, latents: Vec<Vec<f64>>) -> Result<Self> {
        if ids.len() != latents.len() {
            return Err(Error::Dimension("pool ids and latents differ in length".into()));
        }
        Ok(Self { ids, latents })
    }

    pub fn from_dataset(dataset: &Dataset, latents: &[Vec<f64>]) -> Result<Self> {
        let ids = dataset.manifest.entries.iter().map(|e| e.id.clone()).collect();
        Self::new(ids, latents.to_vec())
    }

    /// `n` distinct random shapes whose ids are not in `exclude`.
    pub fn sample(&self, name: &str, n: usize, exclude: &BTreeSet<&str>, rng: &mut ChaCha8Rng) -> Result<ConceptSet> {
        let candidates: Vec<usize> = (0..self.ids.len())
            .filter(|&i| !exclude.contains(self.ids[i].as_str()))
            .collect();
        if candidates.len() < n {
            return Err(Error::InvalidInput(format!(
                "need {n} random shapes but only {} are available",
                candidates.len()
            )));
        }
        let picked: Vec<usize> = candidates.choose_multiple(rng, n).copied().collect();
        ConceptSet::new(
            name,
            picked.iter().map(|&i| self.ids[i].clone()).collect(),
            picked.iter().map(|&i| self.latents[i].clone()).collect(),
            ConceptSource::Random,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counter_parsing() {
        assert_eq!(Counter::parse("random:50").unwrap(), Counter::Random(50));
        assert_eq!(Counter::parse("Ellipsoids").unwrap(), Counter::Concept("Ellipsoids".into()));
        assert!(Counter::parse("random:0").is_err());
        assert!(Counter::parse("random:x").is_err());
        assert!(Counter::parse("").is_err());
    }

    #[test]
    fn exactly_one_selector() {
        let mut c = ConceptFile {
            name: "Cuboids".into(),
            label: Some("cuboid".into()),
            ..ConceptFile::default()
        };
        assert!(c.validate().is_ok());
        c.ids = Some(vec!["a".into()]);
        assert!(c.validate().is_err());
        c.ids = None;
        c.label = None;
        assert!(c.validate().is_err());
    }

    #[test]
    fn json_shape() {
        let c: ConceptFile =
            serde_json::from_str(r#"{"name": "Sport", "label": "sport", "counter": "random:50"}"#).unwrap();
        assert_eq!(c.counter().unwrap(), Counter::Random(50));
        let r: ConceptFile = serde_json::from_str(
            r#"{"name": "HighBump", "recipe": {"kind": "bump", "count": 5, "bump_height": [0.4, 0.6]}}"#,
        )
        .unwrap();
        assert_eq!(r.recipe.unwrap().bump_height, Some((0.4, 0.6)));
    }

    #[test]
    fn pool_sampling_excludes_and_errors() {
        let ids: Vec<String> = (0..10).map(|i| format!("s{i}")).collect();
        let latents: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let pool = LatentPool::new(ids, latents).unwrap();
        let exclude: BTreeSet<&str> = ["s0", "s1", "s2"].into_iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = pool.sample("r", 7, &exclude, &mut rng).unwrap();
        assert!(s.ids.iter().all(|id| !exclude.contains(id.as_str())));
        assert_eq!(s.ids.iter().collect::<BTreeSet<_>>().len(), 7);
        assert!(pool.sample("r", 8, &exclude, &mut rng).is_err());
    }
}
