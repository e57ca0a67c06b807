//! Geometric measurements on clouds: ellipsoid fitting, bump height and the
//! drag proxy used as a regression target.

use super::cloud::PointCloud;
use super::generate::BumpSpec;
use crate::error::{Error, Result};

/// Axis-aligned ellipsoid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FittedEllipsoid {
    pub center: [f64; 3],
    pub semi_axes: [f64; 3],
}

impl FittedEllipsoid {
    /// Coordinates of `p` in the frame where this ellipsoid is the unit sphere.
    pub fn unit_coords(&self, p: &[f64; 3]) -> [f64; 3] {
        [
            (p[0] - self.center[0]) / self.semi_axes[0],
            (p[1] - self.center[1]) / self.semi_axes[1],
            (p[2] - self.center[2]) / self.semi_axes[2],
        ]
    }
}

/// Least-squares fit of `A x^2 + B y^2 + C z^2 + D x + E y + F z = 1`.
pub fn fit_ellipsoid(points: &[[f64; 3]]) -> Result<FittedEllipsoid> {
    if points.len() < 6 {
        return Err(Error::Degenerate(format!(
            "need at least 6 points to fit an ellipsoid, got {}",
            points.len()
        )));
    }
    // Work relative to the centroid so the origin lies inside the surface.
    let n = points.len() as f64;
    let mut mean = [0.0; 3];
    for p in points {
        for i in 0..3 {
            mean[i] += p[i] / n;
        }
    }
    let mut ata = [[0.0; 6]; 6];
    let mut atb = [0.0; 6];
    for p in points {
        let p = [p[0] - mean[0], p[1] - mean[1], p[2] - mean[2]];
        let row = [p[0] * p[0], p[1] * p[1], p[2] * p[2], p[0], p[1], p[2]];
        for i in 0..6 {
            atb[i] += row[i];
            for j in 0..6 {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    let coef = solve_dense(ata, atb)
        .ok_or_else(|| Error::Degenerate("ellipsoid fit is singular".into()))?;
    let quad = [coef[0], coef[1], coef[2]];
    if quad.iter().any(|q| !(*q > 0.0)) {
        return Err(Error::Degenerate(format!(
            "fitted quadric is not an ellipsoid: {quad:?}"
        )));
    }
    let center = [
        -coef[3] / (2.0 * quad[0]),
        -coef[4] / (2.0 * quad[1]),
        -coef[5] / (2.0 * quad[2]),
    ];
    let k = 1.0 + (0..3).map(|i| quad[i] * center[i] * center[i]).sum::<f64>();
    if !(k > 0.0) {
        return Err(Error::Degenerate("fitted ellipsoid has no real surface".into()));
    }
    let semi_axes = [(k / quad[0]).sqrt(), (k / quad[1]).sqrt(), (k / quad[2]).sqrt()];
    let center = [center[0] + mean[0], center[1] + mean[1], center[2] + mean[2]];
    Ok(FittedEllipsoid { center, semi_axes })
}

/// Gaussian elimination with partial pivoting.
fn solve_dense<const N: usize>(mut a: [[f64; N]; N], mut b: [f64; N]) -> Option<[f64; N]> {
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..N {
        let pivot = (col..N).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-14 * scale {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..N {
            let f = a[row][col] / a[col][col];
            for k in col..N {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; N];
    for row in (0..N).rev() {
        let s: f64 = (row + 1..N).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

fn polar_angle(q: &[f64; 3]) -> f64 {
    let r = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]).sqrt();
    (q[2] / r).clamp(-1.0, 1.0).acos()
}

/// Fits the base ellipsoid while ignoring points inside the bump cone.
pub fn fit_base_ellipsoid(pc: &PointCloud, bump: &BumpSpec) -> Result<FittedEllipsoid> {
    if pc.diagonal() < 1e-9 {
        return Err(Error::Degenerate("cloud has near-zero extent".into()));
    }
    let width = bump.width_deg.to_radians();
    let mut fit = fit_ellipsoid(pc.points())?;
    for _ in 0..4 {
        let outside: Vec<[f64; 3]> = pc
            .points()
            .iter()
            .filter(|p| polar_angle(&fit.unit_coords(p)) >= width)
            .copied()
            .collect();
        fit = fit_ellipsoid(&outside)?;
    }
    Ok(fit)
}

/// Bump height in units of the fitted z semi-axis.
///
/// Each point inside the bump cone contributes its radial excess over the
/// fitted base ellipsoid; the result is the peak of the bump profile fitted
/// to those excesses by least squares, which equals the maximum excess for
/// a noise-free bump.
pub fn measure_bump(pc: &PointCloud, bump: &BumpSpec) -> Result<f64> {
    let fit = fit_base_ellipsoid(pc, bump)?;
    let width = bump.width_deg.to_radians();
    let (mut num, mut den) = (0.0, 0.0);
    for p in pc.points() {
        let q = fit.unit_coords(p);
        let polar = polar_angle(&q);
        if polar >= width {
            continue;
        }
        let qn = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]).sqrt();
        let base: f64 = (0..3)
            .map(|i| (fit.semi_axes[i] * q[i] / qn).powi(2))
            .sum::<f64>()
            .sqrt();
        let d = [p[0] - fit.center[0], p[1] - fit.center[1], p[2] - fit.center[2]];
        let dist = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        let excess = (dist - base) / fit.semi_axes[2];
        let g = bump.profile(polar);
        num += g * excess;
        den += g * g;
    }
    if den < 1e-9 {
        return Err(Error::Degenerate("no points inside the bump cone".into()));
    }
    Ok(num / den)
}

pub const DRAG_GRID: usize = 16;

/// Frontal occupancy and boxiness, the two ingredients of [`drag_proxy`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DragTerms {
    pub occupancy: f64,
    pub boxiness: f64,
}

impl DragTerms {
    pub fn value(&self) -> f64 {
        0.6 * self.occupancy + 0.4 * self.boxiness
    }
}

/// Geometric drag surrogate, `0.6 * occupancy + 0.4 * boxiness`; `+x` is the
/// travel direction.
///
/// * occupancy: fraction of a 16x16 grid over the `(y, z)` bounding box
///   covered by the frontal silhouette, where each z-row is filled between
///   its outermost occupied cells.
/// * boxiness: mean of `||q||_inf` with `q` the point relative to the
///   bounding-box centre, divided by the half-extents. Exactly 1 on a box.
pub fn drag_proxy(pc: &PointCloud) -> Result<f64> {
    Ok(drag_terms(pc)?.value())
}

pub fn drag_terms(pc: &PointCloud) -> Result<DragTerms> {
    check_not_collinear(pc)?;
    let (lo, hi) = pc.bounds();
    let ext = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
    let diag = pc.diagonal();
    if ext[1] <= 1e-9 * diag || ext[2] <= 1e-9 * diag {
        return Err(Error::Degenerate("cloud has no frontal extent".into()));
    }

    let cell = |v: f64, lo: f64, ext: f64| (((v - lo) / ext * DRAG_GRID as f64) as usize).min(DRAG_GRID - 1);
    let mut rows = [(usize::MAX, 0usize); DRAG_GRID];
    for p in pc.points() {
        let iy = cell(p[1], lo[1], ext[1]);
        let iz = cell(p[2], lo[2], ext[2]);
        let row = &mut rows[iz];
        row.0 = row.0.min(iy);
        row.1 = row.1.max(iy);
    }
    let filled: usize = rows
        .iter()
        .filter(|r| r.0 != usize::MAX)
        .map(|r| r.1 - r.0 + 1)
        .sum();
    let occupancy = filled as f64 / (DRAG_GRID * DRAG_GRID) as f64;

    let center = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0, (lo[2] + hi[2]) / 2.0];
    let half = ext.map(|e| e / 2.0);
    let boxiness = pc
        .points()
        .iter()
        .map(|p| {
            (0..3)
                .filter(|&i| half[i] > 0.0)
                .map(|i| ((p[i] - center[i]) / half[i]).abs())
                .fold(0.0f64, f64::max)
        })
        .sum::<f64>()
        / pc.len() as f64;
    Ok(DragTerms { occupancy, boxiness })
}

fn check_not_collinear(pc: &PointCloud) -> Result<()> {
    let pts = pc.points();
    let diag = pc.diagonal();
    if diag < 1e-12 {
        return Err(Error::Degenerate("all points coincide".into()));
    }
    let origin = pts[0];
    let far = pts
        .iter()
        .max_by(|a, b| dist2(a, &origin).total_cmp(&dist2(b, &origin)))
        .copied()
        .unwrap_or(origin);
    let d = [far[0] - origin[0], far[1] - origin[1], far[2] - origin[2]];
    let dn = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    let off_line = pts.iter().any(|p| {
        let v = [p[0] - origin[0], p[1] - origin[1], p[2] - origin[2]];
        let c = [
            v[1] * d[2] - v[2] * d[1],
            v[2] * d[0] - v[0] * d[2],
            v[0] * d[1] - v[1] * d[0],
        ];
        (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt() / dn > 1e-9 * diag
    });
    if off_line {
        Ok(())
    } else {
        Err(Error::Degenerate("all points are collinear".into()))
    }
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}
