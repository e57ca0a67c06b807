//! Directional sensitivities, TCAV scores and the run-based significance test.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::classifier::{dot, train_cav, Cav, CavConfig};
use super::concept::{ConceptSet, LatentPool};
use crate::autoencoder::AutoEncoder;
use crate::error::{Error, Result};
use crate::regressor::Regressor;
use crate::shapes::PointCloud;

/// A scalar model output whose latent gradient is available.
pub trait Target {
    fn gradient(&self, z: &[f64]) -> Result<Vec<f64>>;
}

impl Target for Regressor {
    fn gradient(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.grad_wrt_latent(z)
    }
}

/// Directional derivative along the CAV's unit direction.
pub fn sensitivity(cav: &Cav, grad: &[f64]) -> Result<f64> {
    if grad.len() != cav.dim() {
        return Err(Error::Dimension(format!(
            "gradient has length {}, CAV has {}",
            grad.len(),
            cav.dim()
        )));
    }
    Ok(dot(&cav.w_hat, grad))
}

pub fn sensitivity_of_drag(cav: &Cav, reg: &Regressor, ae: &AutoEncoder, pc: &PointCloud) -> Result<f64> {
    let z = ae.encode(pc)?;
    sensitivity(cav, &reg.grad_wrt_latent(&z)?)
}

/// Derivative of every decoded coordinate along the CAV direction.
pub fn sensitivity_field(cav: &Cav, ae: &AutoEncoder, pc: &PointCloud) -> Result<Vec<[f64; 3]>> {
    let z = ae.encode(pc)?;
    sensitivity_field_at(ae, &z, &cav.w_hat)
}

pub fn sensitivity_field_at(ae: &AutoEncoder, z: &[f64], direction: &[f64]) -> Result<Vec<[f64; 3]>> {
    let (_, t) = ae.decoder().jvp(z, direction)?;
    Ok(t.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TcavScore {
    /// Fraction of inputs with sensitivity strictly above zero.
    pub sign_fraction: f64,
    /// Signed mean sensitivity.
    pub mean_magnitude: f64,
    pub mean_abs_magnitude: f64,
}

pub fn score_sensitivities(s: &[f64]) -> Result<TcavScore> {
    if s.is_empty() {
        return Err(Error::InvalidInput("no inputs to score".into()));
    }
    let n = s.len() as f64;
    Ok(TcavScore {
        sign_fraction: s.iter().filter(|&&v| v > 0.0).count() as f64 / n,
        mean_magnitude: s.iter().sum::<f64>() / n,
        mean_abs_magnitude: s.iter().map(|v| v.abs()).sum::<f64>() / n,
    })
}

pub fn sensitivities(cav: &Cav, latents: &[Vec<f64>], target: &dyn Target) -> Result<Vec<f64>> {
    latents.iter().map(|z| sensitivity(cav, &target.gradient(z)?)).collect()
}

pub fn tcav_score(cav: &Cav, latents: &[Vec<f64>], target: &dyn Target) -> Result<TcavScore> {
    if latents.is_empty() {
        return Err(Error::InvalidInput("no inputs to score".into()));
    }
    score_sensitivities(&sensitivities(cav, latents, target)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
}

/// Two-sided two-sample Student t-test with pooled variance. With zero
/// pooled variance the p-value is 1 for equal means and 0 otherwise.
pub fn two_sample_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidInput("t-test needs at least two samples per group".into()));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let df = na + nb - 2.0;
    let pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / df;
    let se = (pooled * (1.0 / na + 1.0 / nb)).sqrt();
    if se == 0.0 {
        let p = if ma == mb { 1.0 } else { 0.0 };
        let t = if ma == mb { 0.0 } else { f64::INFINITY.copysign(ma - mb) };
        return Ok(TTest { t, df, p_value: p });
    }
    let t = (ma - mb) / se;
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let p = (2.0 * dist.cdf(-t.abs())).clamp(0.0, 1.0);
    Ok(TTest { t, df, p_value: p })
}

/// Mean and unbiased sample variance.
fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

fn std_error(x: &[f64]) -> f64 {
    (mean_var(x).1 / x.len() as f64).sqrt()
}

/// What each run trains the concept against.
#[derive(Debug, Clone)]
pub enum CounterSet {
    /// Fresh random non-concept shapes of this size each run.
    Random(usize),
    /// A named concept, subsampled to 80% each run.
    Concept(ConceptSet),
}

impl CounterSet {
    pub fn label(&self) -> String {
        match self {
            Self::Random(n) => format!("random:{n}"),
            Self::Concept(c) => c.name.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignificanceConfig {
    pub n_runs: usize,
    pub cav: CavConfig,
    pub seed: u64,
}

impl Default for SignificanceConfig {
    fn default() -> Self {
        Self {
            n_runs: 20,
            cav: CavConfig::default(),
            seed: 0,
        }
    }
}

/// One row of a TCAV report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcavRow {
    pub concept: String,
    pub counter: String,
    pub sign_fraction: f64,
    pub mean_magnitude: f64,
    pub std_error: f64,
    pub p_value: f64,
    pub n_runs: usize,
    pub mean_abs_magnitude: f64,
    pub random_sign_fraction: f64,
    pub random_std_error: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TcavReport {
    pub rows: Vec<TcavRow>,
}

impl TcavReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row).map_err(|e| Error::InvalidInput(e.to_string()))?;
        }
        if self.rows.is_empty() {
            w.write_record(CSV_HEADER).map_err(|e| Error::InvalidInput(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let rows = r
            .deserialize()
            .collect::<std::result::Result<Vec<TcavRow>, _>>()
            .map_err(|e| Error::InvalidInput(format!("bad TCAV report: {e}")))?;
        Ok(Self { rows })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

pub const CSV_HEADER: [&str; 10] = [
    "concept",
    "counter",
    "sign_fraction",
    "mean_magnitude",
    "std_error",
    "p_value",
    "n_runs",
    "mean_abs_magnitude",
    "random_sign_fraction",
    "random_std_error",
];

fn subsample(set: &ConceptSet, rng: &mut ChaCha8Rng) -> Result<ConceptSet> {
    let k = ((set.len() as f64) * 0.8).ceil() as usize;
    let idx: Vec<usize> = (0..set.len()).collect::<Vec<_>>().choose_multiple(rng, k).copied().collect();
    ConceptSet::new(
        &set.name,
        idx.iter().map(|&i| set.ids[i].clone()).collect(),
        idx.iter().map(|&i| set.latents[i].clone()).collect(),
        set.source,
    )
}

/// Trains `n_runs` concept CAVs and `n_runs` random-vs-random CAVs, scores
/// each on `eval`, and compares the two sign-fraction populations.
///
/// Random CAVs use two disjoint random pool samples sized like the concept
/// run's positives and negatives.
pub fn significance_test(
    concept: &ConceptSet,
    counter: &CounterSet,
    pool: &LatentPool,
    eval: &[Vec<f64>],
    target: &dyn Target,
    config: &SignificanceConfig,
) -> Result<TcavRow> {
    if config.n_runs < 10 {
        return Err(Error::InvalidInput(format!("n_runs must be >= 10, got {}", config.n_runs)));
    }
    if eval.is_empty() {
        return Err(Error::InvalidInput("evaluation set is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let exclude: BTreeSet<&str> = concept.ids.iter().map(String::as_str).collect();
    let none = BTreeSet::new();

    let mut concept_sf = Vec::with_capacity(config.n_runs);
    let mut concept_mag = Vec::with_capacity(config.n_runs);
    let mut concept_abs = Vec::with_capacity(config.n_runs);
    let mut random_sf = Vec::with_capacity(config.n_runs);
    for run in 0..config.n_runs {
        let neg = match counter {
            CounterSet::Random(n) => pool.sample("random", *n, &exclude, &mut rng)?,
            CounterSet::Concept(c) => subsample(c, &mut rng)?,
        };
        let cav_cfg = CavConfig {
            seed: config.cav.seed.wrapping_add(run as u64),
            ..config.cav
        };
        let cav = train_cav(&concept.latents, &neg.latents, &concept.name, &counter.label(), &cav_cfg)?;
        let score = tcav_score(&cav, eval, target)?;
        concept_sf.push(score.sign_fraction);
        concept_mag.push(score.mean_magnitude);
        concept_abs.push(score.mean_abs_magnitude);

        let a = pool.sample("random-a", concept.len(), &none, &mut rng)?;
        let used: BTreeSet<&str> = a.ids.iter().map(String::as_str).collect();
        let b = pool.sample("random-b", neg.len(), &used, &mut rng)?;
        let null = train_cav(&a.latents, &b.latents, "random-a", "random-b", &cav_cfg)?;
        random_sf.push(tcav_score(&null, eval, target)?.sign_fraction);
    }
    let test = two_sample_t_test(&concept_sf, &random_sf)?;
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    Ok(TcavRow {
        concept: concept.name.clone(),
        counter: counter.label(),
        sign_fraction: mean(&concept_sf),
        mean_magnitude: mean(&concept_mag),
        std_error: std_error(&concept_sf),
        p_value: test.p_value,
        n_runs: config.n_runs,
        mean_abs_magnitude: mean(&concept_abs),
        random_sign_fraction: mean(&random_sf),
        random_std_error: std_error(&random_sf),
    })
}
