//! Point clouds and their text formats.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// An ordered set of surface points. Row `k` of every cloud in a dataset
/// comes from the same canonical surface parameter, so clouds can be
/// compared coordinate-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<[f64; 3]>,
}

impl PointCloud {
    pub fn new(points: Vec<[f64; 3]>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("point cloud is empty".into()));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("point cloud has non-finite coordinates".into()));
        }
        Ok(Self { points })
    }

    /// Builds a cloud from `[x0, y0, z0, x1, ...]`.
    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if !flat.len().is_multiple_of(3) {
            return Err(Error::Dimension(format!(
                "flat coordinate array has length {}, not a multiple of 3",
                flat.len()
            )));
        }
        Self::new(flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.points.iter().flatten().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn centroid(&self) -> [f64; 3] {
        let n = self.points.len() as f64;
        let mut c = [0.0; 3];
        for p in &self.points {
            for i in 0..3 {
                c[i] += p[i];
            }
        }
        c.map(|v| v / n)
    }

    /// Axis-aligned bounding box as `(min, max)`.
    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.points {
            for i in 0..3 {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        (lo, hi)
    }

    pub fn extent(&self) -> [f64; 3] {
        let (lo, hi) = self.bounds();
        [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]]
    }

    pub fn diagonal(&self) -> f64 {
        let e = self.extent();
        (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt()
    }

    /// Centroid moved to the origin and bounding-box diagonal scaled to 1.
    pub fn normalize(&self) -> Result<PointCloud> {
        let diag = self.diagonal();
        if !(diag > 1e-12) {
            return Err(Error::Degenerate(format!(
                "cannot normalize a cloud with bounding-box diagonal {diag:e}"
            )));
        }
        let c = self.centroid();
        let points = self
            .points
            .iter()
            .map(|p| [(p[0] - c[0]) / diag, (p[1] - c[1]) / diag, (p[2] - c[2]) / diag])
            .collect();
        Ok(PointCloud { points })
    }

    pub fn to_xyz(&self) -> String {
        let mut out = String::with_capacity(self.points.len() * 48);
        for p in &self.points {
            let _ = writeln!(out, "{} {} {}", p[0], p[1], p[2]);
        }
        out
    }

    pub fn parse_xyz(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace().map(str::parse::<f64>);
            let mut next = || -> Result<f64> {
                parts
                    .next()
                    .and_then(|r| r.ok())
                    .ok_or_else(|| Error::InvalidInput(format!("line {}: expected `x y z`", n + 1)))
            };
            let p = [next()?, next()?, next()?];
            if parts.next().is_some() {
                return Err(Error::InvalidInput(format!("line {}: trailing fields", n + 1)));
            }
            points.push(p);
        }
        Self::new(points)
    }

    pub fn read_xyz(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_xyz(&text)
    }

    pub fn write_xyz(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_xyz()).map_err(|e| Error::io(path, e))
    }

    /// ASCII PLY with vertices only.
    pub fn to_ply(&self) -> String {
        let mut out = format!(
            "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nend_header\n",
            self.points.len()
        );
        out.push_str(&self.to_xyz());
        out
    }

    pub fn write_ply(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_ply()).map_err(|e| Error::io(path, e))
    }
}
