//! Linear concept classifiers trained by hinge-loss SGD.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CAV_FORMAT: &str = "concept-forge-cav/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cav {
    pub w: Vec<f64>,
    pub b: f64,
    pub w_hat: Vec<f64>,
    pub concept_name: String,
    pub counter_name: String,
    pub train_accuracy: f64,
}

impl Cav {
    /// Builds a CAV from a raw hyperplane, deriving `w_hat`.
    pub fn from_hyperplane(w: Vec<f64>, b: f64, concept: &str, counter: &str, accuracy: f64) -> Result<Self> {
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm >= 1e-12) || !norm.is_finite() || !b.is_finite() {
            return Err(Error::Degenerate(format!("CAV normal has norm {norm:e}")));
        }
        Ok(Self {
            w_hat: w.iter().map(|v| v / norm).collect(),
            w,
            b,
            concept_name: concept.into(),
            counter_name: counter.into(),
            train_accuracy: accuracy,
        })
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    /// Classifier margin `w . z + b`.
    pub fn score(&self, z: &[f64]) -> f64 {
        dot(&self.w, z) + self.b
    }

    /// Same hyperplane with the roles of concept and counter swapped.
    pub fn negated(&self) -> Self {
        Self {
            w: self.w.iter().map(|v| -v).collect(),
            b: -self.b,
            w_hat: self.w_hat.iter().map(|v| -v).collect(),
            concept_name: self.counter_name.clone(),
            counter_name: self.concept_name.clone(),
            train_accuracy: self.train_accuracy,
        }
    }

    /// Fraction of `pos` scored > 0 and `neg` scored < 0.
    pub fn accuracy(&self, pos: &[Vec<f64>], neg: &[Vec<f64>]) -> f64 {
        let correct = pos.iter().filter(|z| self.score(z) > 0.0).count()
            + neg.iter().filter(|z| self.score(z) < 0.0).count();
        correct as f64 / (pos.len() + neg.len()) as f64
    }

    pub fn save(&self, path: &Path, ae_hash: &str) -> Result<()> {
        let file = CavFile {
            format: CAV_FORMAT.into(),
            ae_hash: ae_hash.into(),
            cav: self.clone(),
        };
        let text = serde_json::to_string_pretty(&file)? + "\n";
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<CavFile> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: CavFile = serde_json::from_str(&text)?;
        if file.format != CAV_FORMAT {
            return Err(Error::InvalidInput(format!("unsupported CAV format `{}`", file.format)));
        }
        let norm = file.cav.w_hat.iter().map(|v| v * v).sum::<f64>().sqrt();
        if file.cav.w.len() != file.cav.w_hat.len() || (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("{} has an invalid direction", path.display())));
        }
        Ok(file)
    }
}

/// On-disk CAV with the hash of the auto-encoder whose latents trained it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CavFile {
    pub format: String,
    pub ae_hash: String,
    pub cav: Cav,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavConfig {
    pub epochs: usize,
    pub lr: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for CavConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            lr: 0.01,
            l2: 1e-3,
            seed: 0,
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn mean(set: &[Vec<f64>]) -> Vec<f64> {
    let mut m = vec![0.0; set[0].len()];
    for z in set {
        for (a, v) in m.iter_mut().zip(z) {
            *a += v;
        }
    }
    m.iter().map(|v| v / set.len() as f64).collect()
}

/// Per-class index order for one epoch. It depends only on the seed, the
/// epoch and the class size, so swapping the two classes swaps the orders.
fn class_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((n as u64) << 32) | epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Trains a concept-vs-counter hyperplane with hinge loss and an L2 penalty.
///
/// Each step pairs one positive with one negative, cycling the smaller class,
/// so both classes get equal weight. Starting from zero, swapping `pos` and
/// `neg` yields exactly the negated hyperplane.
pub fn train_cav(
    pos: &[Vec<f64>],
    neg: &[Vec<f64>],
    concept: &str,
    counter: &str,
    config: &CavConfig,
) -> Result<Cav> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::InvalidInput("concept and counter sets must be non-empty".into()));
    }
    let h = pos[0].len();
    if h == 0 || pos.iter().chain(neg).any(|z| z.len() != h) {
        return Err(Error::Dimension("latents have inconsistent lengths".into()));
    }
    if pos.len() == neg.len() && {
        let mut a: Vec<&Vec<f64>> = pos.iter().collect();
        let mut b: Vec<&Vec<f64>> = neg.iter().collect();
        a.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
        b.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
        a == b
    } {
        return Err(Error::Degenerate("concept and counter sets are identical".into()));
    }

    let mut w = vec![0.0; h];
    let mut b = 0.0;
    let decay = 1.0 - config.lr * config.l2;
    let steps = pos.len().max(neg.len());
    let mut d = vec![0.0; h];
    for epoch in 0..config.epochs {
        let op = class_order(config.seed, epoch, pos.len());
        let on = class_order(config.seed, epoch, neg.len());
        for s in 0..steps {
            let xp = &pos[op[s % pos.len()]];
            let xn = &neg[on[s % neg.len()]];
            // Hinge is active when the margin y (w.x + b) falls below 1.
            let ap = dot(&w, xp) + b < 1.0;
            let an = -(dot(&w, xn) + b) < 1.0;
            for i in 0..h {
                let p = if ap { xp[i] } else { 0.0 };
                let n = if an { xn[i] } else { 0.0 };
                d[i] = p - n;
            }
            for i in 0..h {
                w[i] = w[i] * decay + config.lr * d[i];
            }
            b += config.lr * (f64::from(ap as u8) - f64::from(an as u8));
        }
        if !b.is_finite() || w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("CAV training diverged at epoch {epoch}")));
        }
    }

    let (mp, mn) = (mean(pos), mean(neg));
    if dot(&w, &mp) < dot(&w, &mn) {
        w.iter_mut().for_each(|v| *v = -*v);
        b = -b;
    }
    let mut cav = Cav::from_hyperplane(w, b, concept, counter, 0.0)?;
    cav.train_accuracy = cav.accuracy(pos, neg);
    Ok(cav)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn normal(rng: &mut ChaCha8Rng) -> f64 {
        rng.sample(StandardNormal)
    }

    fn cluster(center: &[f64], sigma: f64, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| center.iter().map(|c| c + sigma * normal(rng)).collect())
            .collect()
    }

    fn two_clusters(seed: u64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dir: Vec<f64> = (0..8).map(|_| normal(&mut rng)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mu_p: Vec<f64> = dir.iter().map(|v| 0.5 * v / norm).collect();
        let mu_n: Vec<f64> = dir.iter().map(|v| -0.5 * v / norm).collect();
        let pos = cluster(&mu_p, 0.05, 40, &mut rng);
        let neg = cluster(&mu_n, 0.05, 60, &mut rng);
        (pos, neg, dir.iter().map(|v| v / norm).collect())
    }

    #[test]
    fn separated_clusters() {
        let (pos, neg, dir) = two_clusters(1);
        let cav = train_cav(&pos, &neg, "a", "b", &CavConfig::default()).unwrap();
        assert_eq!(cav.train_accuracy, 1.0);
        assert!(dot(&cav.w_hat, &dir) > 0.95);
        let norm = cav.w_hat.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn swapping_classes_negates_exactly() {
        let (pos, neg, _) = two_clusters(2);
        let cfg = CavConfig {
            seed: 5,
            ..CavConfig::default()
        };
        let a = train_cav(&pos, &neg, "a", "b", &cfg).unwrap();
        let b = train_cav(&neg, &pos, "b", "a", &cfg).unwrap();
        assert_eq!(b.w_hat, a.negated().w_hat);
        assert_eq!(b.b, -a.b);
    }

    #[test]
    fn identical_sets_are_degenerate() {
        let (pos, _, _) = two_clusters(3);
        let mut shuffled = pos.clone();
        shuffled.reverse();
        assert!(matches!(
            train_cav(&pos, &shuffled, "a", "a", &CavConfig::default()),
            Err(Error::Degenerate(_))
        ));
        assert!(train_cav(&pos, &[], "a", "b", &CavConfig::default()).is_err());
    }

    #[test]
    fn orientation_holds_for_overlapping_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let pos: Vec<Vec<f64>> = (0..30).map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let neg: Vec<Vec<f64>> = (0..30).map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let cav = train_cav(&pos, &neg, "p", "n", &CavConfig::default()).unwrap();
            assert!(dot(&cav.w, &mean(&pos)) > dot(&cav.w, &mean(&neg)));
        }
    }

    #[test]
    fn file_round_trip() {
        let (pos, neg, _) = two_clusters(4);
        let cav = train_cav(&pos, &neg, "a", "b", &CavConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.cav.json");
        cav.save(&path, "abc").unwrap();
        let back = Cav::load(&path).unwrap();
        assert_eq!(back.cav, cav);
        assert_eq!(back.ae_hash, "abc");
    }
}
