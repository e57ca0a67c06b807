//! Latent editing along CAV directions, blend grids, concept queries and
//! latent correlation diagnostics.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autoencoder::AutoEncoder;
use crate::cav::Cav;
use crate::error::{Error, Result};
use crate::regressor::Regressor;
use crate::shapes::PointCloud;

/// An edited latent and whether it left the `[-1, 1]^h` box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edited {
    pub latent: Vec<f64>,
    pub out_of_box: bool,
}

pub fn out_of_box(z: &[f64]) -> bool {
    z.iter().any(|v| v.abs() > 1.0)
}

pub fn translate(z: &[f64], cav: &Cav, eps: f64) -> Result<Edited> {
    blend(z, &[(cav, eps)])
}

/// `z + sum eps_i * w_hat_i`.
pub fn blend(z: &[f64], terms: &[(&Cav, f64)]) -> Result<Edited> {
    let mut out = z.to_vec();
    for (cav, eps) in terms {
        if cav.dim() != z.len() {
            return Err(Error::Dimension(format!(
                "CAV `{}` has dimension {}, latent has {}",
                cav.concept_name,
                cav.dim(),
                z.len()
            )));
        }
        for (o, w) in out.iter_mut().zip(&cav.w_hat) {
            *o += eps * w;
        }
    }
    Ok(Edited {
        out_of_box: out_of_box(&out),
        latent: out,
    })
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone)]
pub struct GridCell {
    pub i: usize,
    pub j: usize,
    pub eps_a: f64,
    pub eps_b: f64,
    pub edited: Edited,
    pub cloud: PointCloud,
    pub drag: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct BlendGrid {
    pub concept_a: String,
    pub concept_b: String,
    pub rows: usize,
    pub cols: usize,
    /// Row-major: cell `(i, j)` is at `i * cols + j`.
    pub cells: Vec<GridCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridIndexEntry {
    pub file: String,
    pub i: usize,
    pub j: usize,
    pub eps_a: f64,
    pub eps_b: f64,
    pub drag: Option<f64>,
    pub out_of_box: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridIndex {
    pub concept_a: String,
    pub concept_b: String,
    pub cells: Vec<GridIndexEntry>,
}

impl BlendGrid {
    pub fn cell(&self, i: usize, j: usize) -> &GridCell {
        &self.cells[i * self.cols + j]
    }

    pub fn index(&self) -> GridIndex {
        GridIndex {
            concept_a: self.concept_a.clone(),
            concept_b: self.concept_b.clone(),
            cells: self
                .cells
                .iter()
                .map(|c| GridIndexEntry {
                    file: format!("cell_{}_{}.xyz", c.i, c.j),
                    i: c.i,
                    j: c.j,
                    eps_a: c.eps_a,
                    eps_b: c.eps_b,
                    drag: c.drag,
                    out_of_box: c.edited.out_of_box,
                })
                .collect(),
        }
    }

    /// Writes `cell_{i}_{j}.xyz` per cell plus `index.json`.
    pub fn export(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for c in &self.cells {
            c.cloud.write_xyz(&dir.join(format!("cell_{}_{}.xyz", c.i, c.j)))?;
        }
        let path = dir.join("index.json");
        std::fs::write(&path, serde_json::to_string_pretty(&self.index())? + "\n").map_err(|e| Error::io(&path, e))
    }
}

pub fn blend_grid(
    ae: &AutoEncoder,
    reg: Option<&Regressor>,
    z: &[f64],
    cav_a: &Cav,
    cav_b: &Cav,
    eps_a: &[f64],
    eps_b: &[f64],
) -> Result<BlendGrid> {
    let mut cells = Vec::with_capacity(eps_a.len() * eps_b.len());
    for (i, &ea) in eps_a.iter().enumerate() {
        for (j, &eb) in eps_b.iter().enumerate() {
            let edited = blend(z, &[(cav_a, ea), (cav_b, eb)])?;
            let cloud = ae.decode(&edited.latent)?;
            let drag = reg.map(|r| r.predict(&edited.latent)).transpose()?;
            cells.push(GridCell {
                i,
                j,
                eps_a: ea,
                eps_b: eb,
                edited,
                cloud,
                drag,
            });
        }
    }
    Ok(BlendGrid {
        concept_a: cav_a.concept_name.clone(),
        concept_b: cav_b.concept_name.clone(),
        rows: eps_a.len(),
        cols: eps_b.len(),
        cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranked {
    pub id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    /// Highest classifier margins first.
    pub top: Vec<Ranked>,
    /// Lowest classifier margins first.
    pub bottom: Vec<Ranked>,
}

/// Ranks shapes by `w . z + b`. Ties break by ascending id in both lists.
pub fn query(ids: &[String], latents: &[Vec<f64>], cav: &Cav, k: usize) -> Result<QueryResult> {
    if ids.len() != latents.len() {
        return Err(Error::Dimension("ids and latents differ in length".into()));
    }
    let k = if k > ids.len() {
        log::warn!("k = {k} exceeds the {} available shapes; clamping", ids.len());
        ids.len()
    } else {
        k
    };
    let mut scored = Vec::with_capacity(ids.len());
    for (id, z) in ids.iter().zip(latents) {
        if z.len() != cav.dim() {
            return Err(Error::Dimension(format!("latent of `{id}` has length {}", z.len())));
        }
        scored.push(Ranked {
            id: id.clone(),
            score: cav.score(z),
        });
    }
    let mut desc = scored.clone();
    desc.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
    desc.truncate(k);
    scored.sort_by(|a, b| a.score.total_cmp(&b.score).then_with(|| a.id.cmp(&b.id)));
    scored.truncate(k);
    Ok(QueryResult {
        top: desc,
        bottom: scored,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentCorrelation {
    pub matrix: Vec<Vec<f64>>,
    pub mean_abs_offdiag: f64,
    /// Coordinates with zero variance; their correlations are set to 0.
    pub constant: Vec<usize>,
}

/// Pearson correlation between latent coordinates across shapes.
pub fn latent_correlation(latents: &[Vec<f64>]) -> Result<LatentCorrelation> {
    if latents.len() < 2 {
        return Err(Error::InvalidInput("need at least two latents".into()));
    }
    let h = latents[0].len();
    if h == 0 || latents.iter().any(|z| z.len() != h) {
        return Err(Error::Dimension("latents have inconsistent lengths".into()));
    }
    let n = latents.len() as f64;
    let mean: Vec<f64> = (0..h).map(|i| latents.iter().map(|z| z[i]).sum::<f64>() / n).collect();
    let mut cov = vec![vec![0.0; h]; h];
    for z in latents {
        for i in 0..h {
            for j in i..h {
                cov[i][j] += (z[i] - mean[i]) * (z[j] - mean[j]);
            }
        }
    }
    let constant: Vec<usize> = (0..h).filter(|&i| !(cov[i][i] > 0.0)).collect();
    if !constant.is_empty() {
        log::warn!("latent coordinates {constant:?} are constant; their correlations are reported as 0");
    }
    let mut matrix = vec![vec![0.0; h]; h];
    for i in 0..h {
        for j in i..h {
            let r = if constant.contains(&i) || constant.contains(&j) {
                0.0
            } else if i == j {
                1.0
            } else {
                (cov[i][j] / (cov[i][i] * cov[j][j]).sqrt()).clamp(-1.0, 1.0)
            };
            matrix[i][j] = r;
            matrix[j][i] = r;
        }
    }
    let mean_abs_offdiag = if h > 1 {
        let mut s = 0.0;
        for (i, row) in matrix.iter().enumerate() {
            for (j, r) in row.iter().enumerate() {
                if i != j {
                    s += r.abs();
                }
            }
        }
        s / (h * (h - 1)) as f64
    } else {
        0.0
    };
    Ok(LatentCorrelation {
        matrix,
        mean_abs_offdiag,
        constant,
    })
}

/// Ranks with ties sharing their average rank.
fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation; `NaN` if either input is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Dimension("spearman needs two equal-length series of length >= 2".into()));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cav(w: Vec<f64>, b: f64) -> Cav {
        Cav::from_hyperplane(w, b, "c", "n", 1.0).unwrap()
    }

    #[test]
    fn translate_examples() {
        let c = cav(vec![1.0, 2.0, 2.0], 0.0);
        let z = [0.1, -0.2, 0.3];
        assert_eq!(translate(&z, &c, 0.0).unwrap().latent, z.to_vec());
        let t = translate(&z, &c, 0.6).unwrap();
        let d: f64 = t.latent.iter().zip(&z).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!((d - 0.6).abs() < 1e-12);
        assert!(!t.out_of_box);
        assert!(translate(&z, &c, 3.0).unwrap().out_of_box);
        assert!(translate(&[0.0; 2], &c, 1.0).is_err());
    }

    #[test]
    fn query_examples() {
        let c = cav(vec![1.0, 0.0], -0.5);
        let ids: Vec<String> = ["d", "a", "c", "b"].iter().map(|s| s.to_string()).collect();
        let latents = vec![vec![0.3, 0.0], vec![0.9, 1.0], vec![0.3, 5.0], vec![-1.0, 0.0]];
        let q = query(&ids, &latents, &c, 2).unwrap();
        let top: Vec<&str> = q.top.iter().map(|r| r.id.as_str()).collect();
        let bottom: Vec<&str> = q.bottom.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(top, ["a", "c"]);
        assert_eq!(bottom, ["b", "c"]);
        assert!((q.top[0].score - 0.4).abs() < 1e-15);
        let empty = query(&ids, &latents, &c, 0).unwrap();
        assert!(empty.top.is_empty() && empty.bottom.is_empty());
        assert_eq!(query(&ids, &latents, &c, 10).unwrap().top.len(), 4);
        let neg = query(&ids, &latents, &c.negated(), 4).unwrap();
        let a: Vec<f64> = neg.top.iter().map(|r| r.score).collect();
        let b: Vec<f64> = q_all(&ids, &latents, &c).bottom.iter().map(|r| -r.score).collect();
        assert_eq!(a, b);
    }

    fn q_all(ids: &[String], latents: &[Vec<f64>], c: &Cav) -> QueryResult {
        query(ids, latents, c, ids.len()).unwrap()
    }

    #[test]
    fn correlation_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let latents: Vec<Vec<f64>> = (0..200)
            .map(|_| {
                let a: f64 = rng.random_range(-1.0..1.0);
                vec![a, a, rng.random_range(-1.0..1.0), 0.25]
            })
            .collect();
        let c = latent_correlation(&latents).unwrap();
        assert!((c.matrix[0][1] - 1.0).abs() < 1e-12);
        assert_eq!(c.matrix[0][0], 1.0);
        assert_eq!(c.matrix[2][2], 1.0);
        assert_eq!(c.constant, vec![3]);
        assert_eq!(c.matrix[3][3], 0.0);
        assert_eq!(c.matrix[1][3], 0.0);
    }

    #[test]
    fn spearman_examples() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, -5.0]).unwrap(), -1.0);
        // Ties get average ranks: ranks(y) = [1.5, 1.5, 3].
        let r = spearman(&[1.0, 2.0, 3.0], &[0.0, 0.0, 1.0]).unwrap();
        assert!((r - 0.8660254037844386).abs() < 1e-12);
        assert_eq!(linspace(-0.5, 0.5, 5), vec![-0.5, -0.25, 0.0, 0.25, 0.5]);
    }

    proptest! {
        #[test]
        fn blend_is_order_independent(
            z in prop::collection::vec(-1.0f64..1.0, 4),
            w1 in prop::collection::vec(0.1f64..1.0, 4),
            w2 in prop::collection::vec(-1.0f64..-0.1, 4),
            e1 in -2.0f64..2.0,
            e2 in -2.0f64..2.0,
        ) {
            let (a, b) = (cav(w1, 0.0), cav(w2, 0.0));
            let x = blend(&z, &[(&a, e1), (&b, e2)]).unwrap().latent;
            let y = blend(&z, &[(&b, e2), (&a, e1)]).unwrap().latent;
            for (p, q) in x.iter().zip(&y) {
                prop_assert!((p - q).abs() < 1e-12);
            }
            let back = blend(&z, &[(&a, e1), (&a, -e1)]).unwrap().latent;
            for (p, q) in back.iter().zip(&z) {
                prop_assert!((p - q).abs() < 1e-12);
            }
        }

        #[test]
        fn query_ranking_ignores_positive_rescaling(
            latents in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 1..20),
            w in prop::collection::vec(0.1f64..1.0, 3),
            b in -1.0f64..1.0,
            s in 0.1f64..10.0,
        ) {
            let ids: Vec<String> = (0..latents.len()).map(|i| format!("x{i:02}")).collect();
            let c1 = cav(w.clone(), b);
            let c2 = cav(w.iter().map(|v| v * s).collect(), b * s);
            let k = latents.len();
            let q1 = query(&ids, &latents, &c1, k).unwrap();
            let q2 = query(&ids, &latents, &c2, k).unwrap();
            let ids1: Vec<&String> = q1.top.iter().map(|r| &r.id).collect();
            let ids2: Vec<&String> = q2.top.iter().map(|r| &r.id).collect();
            // Rescaling can only reorder exact-tie neighbours.
            let close = q1.top.windows(2).any(|p| (p[0].score - p[1].score).abs() < 1e-9);
            prop_assert!(close || ids1 == ids2);
        }
    }
}
