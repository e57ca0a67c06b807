//! Synthetic shape generators.
//!
//! Every generator maps a shared [`SurfaceTemplate`] of canonical surface
//! parameters onto its surface, so point `k` of a cuboid, an ellipsoid and a
//! car all derive from the same parameter triple. Shape-level randomness
//! (proportions, style parameters, bump height) comes from the caller's RNG.
//!
//! Car-like parameter ranges (length normalized to 1):
//!
//! | parameter          | Sport        | Sedan        |
//! |--------------------|--------------|--------------|
//! | cabin height / L   | 0.22 – 0.28  | 0.32 – 0.40  |
//! | windshield rake    | 58° – 68°    | 35° – 48°    |
//! | rear window rake   | 50° – 60°    | 25° – 35°    |
//! | width / L          | 0.38 – 0.46  | 0.38 – 0.46  |
//! | hood height / H    | 0.50 – 0.62  | 0.50 – 0.62  |
//! | deck height / H    | 0.60 – 0.72  | 0.60 – 0.72  |
//! | hood length / L    | 0.24 – 0.30  | 0.24 – 0.30  |
//! | trunk length / L   | 0.14 – 0.20  | 0.14 – 0.20  |
//!
//! Rakes are measured from the vertical.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cloud::PointCloud;
use crate::error::{Error, Result};

/// Seed of the canonical template; shared by every dataset.
pub const TEMPLATE_SEED: u64 = 0x5eed_c10d;

/// Canonical per-point surface parameters, iid uniform on `[0, 1)^3`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceTemplate {
    samples: Vec<[f64; 3]>,
}

impl SurfaceTemplate {
    pub fn new(points: usize) -> Self {
        Self::with_seed(points, TEMPLATE_SEED)
    }

    pub fn with_seed(points: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = (0..points)
            .map(|_| [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        Self { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[[f64; 3]] {
        &self.samples
    }

    /// Unit-sphere direction of sample `k` (area-uniform in `(s1, s2)`).
    pub fn direction(&self, k: usize) -> [f64; 3] {
        sphere_direction(self.samples[k][1], self.samples[k][2])
    }
}

fn sphere_direction(s1: f64, s2: f64) -> [f64; 3] {
    let z = 2.0 * s1 - 1.0;
    let phi = 2.0 * PI * s2;
    let r = (1.0 - z * z).max(0.0).sqrt();
    [r * phi.cos(), r * phi.sin(), z]
}

/// Bounds on longest / shortest semi-axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AspectBounds {
    pub min: f64,
    pub max: f64,
}

impl Default for AspectBounds {
    fn default() -> Self {
        Self { min: 1.5, max: 3.5 }
    }
}

impl AspectBounds {
    pub fn contains(&self, axes: [f64; 3]) -> bool {
        let ratio = aspect_ratio(axes);
        ratio >= self.min && ratio <= self.max
    }
}

pub fn aspect_ratio(axes: [f64; 3]) -> f64 {
    let hi = axes.iter().copied().fold(f64::MIN, f64::max);
    let lo = axes.iter().copied().fold(f64::MAX, f64::min);
    hi / lo
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CarStyle {
    Sport,
    Sedan,
}

impl CarStyle {
    pub fn label(self) -> &'static str {
        match self {
            CarStyle::Sport => "sport",
            CarStyle::Sedan => "sedan",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Cuboid,
    Ellipsoid,
    CarLike(CarStyle),
    BumpedEllipsoid,
}

/// Bump on the `+z` pole of an ellipsoid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpSpec {
    /// Fixed height in units of the z semi-axis; sampled from `height_range`
    /// when `None`.
    pub height: Option<f64>,
    pub height_range: (f64, f64),
    /// Half-angle of the bump's support, in degrees.
    pub width_deg: f64,
}

impl Default for BumpSpec {
    fn default() -> Self {
        Self {
            height: None,
            height_range: (0.0, 0.6),
            width_deg: 30.0,
        }
    }
}

impl BumpSpec {
    /// Radial profile in `[0, 1]` as a function of the polar angle of the
    /// base direction: a Gaussian with sigma = width / 2, shifted and
    /// rescaled so it reaches exactly 0 at the support edge.
    pub fn profile(&self, polar: f64) -> f64 {
        let width = self.width_deg.to_radians();
        if polar >= width {
            return 0.0;
        }
        let sigma = width / 2.0;
        let floor = (-(width * width) / (2.0 * sigma * sigma)).exp();
        let g = (-(polar * polar) / (2.0 * sigma * sigma)).exp();
        (g - floor) / (1.0 - floor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeRecipe {
    pub kind: ShapeKind,
    /// Fixed semi-axes (half-extents for cuboids); sampled within `aspect`
    /// when `None`.
    pub semi_axes: Option<[f64; 3]>,
    pub aspect: AspectBounds,
    pub bump: BumpSpec,
}

impl ShapeRecipe {
    pub fn new(kind: ShapeKind) -> Self {
        Self {
            kind,
            semi_axes: None,
            aspect: AspectBounds::default(),
            bump: BumpSpec::default(),
        }
    }

    pub fn with_semi_axes(mut self, axes: [f64; 3]) -> Self {
        self.semi_axes = Some(axes);
        self
    }
}

/// Proportions of the base ellipsoid for bump datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Proportions {
    Fixed,
    Random,
}

/// Base semi-axes used when proportions are fixed.
pub const FIXED_BUMP_AXES: [f64; 3] = [1.0, 0.6, 0.8];

/// Parameters that produced a car-like cloud.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarParams {
    pub style: CarStyle,
    pub length: f64,
    pub width: f64,
    pub cabin_height: f64,
    pub hood_height: f64,
    pub deck_height: f64,
    pub hood_length: f64,
    pub trunk_length: f64,
    pub windshield_rake_deg: f64,
    pub rear_rake_deg: f64,
}

/// A generated cloud plus the ground truth that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedShape {
    pub cloud: PointCloud,
    pub semi_axes: Option<[f64; 3]>,
    pub bump_height: Option<f64>,
    pub car: Option<CarParams>,
}

/// Samples semi-axes with x the longest (travel direction) and the
/// longest/shortest ratio inside `bounds`, by rejection.
pub fn sample_semi_axes<R: Rng + ?Sized>(rng: &mut R, bounds: AspectBounds) -> [f64; 3] {
    loop {
        let scale = rng.random_range(0.8..1.2);
        let b = rng.random_range(1.0 / bounds.max..1.0 / bounds.min);
        let c = rng.random_range(1.0 / bounds.max..1.0 / bounds.min);
        let axes = [scale, scale * b, scale * c];
        if bounds.contains(axes) {
            return axes;
        }
    }
}

pub struct ShapeGenerator {
    template: SurfaceTemplate,
}

impl ShapeGenerator {
    pub fn new(points: usize) -> Self {
        Self {
            template: SurfaceTemplate::new(points),
        }
    }

    pub fn from_template(template: SurfaceTemplate) -> Self {
        Self { template }
    }

    pub fn points(&self) -> usize {
        self.template.len()
    }

    pub fn template(&self) -> &SurfaceTemplate {
        &self.template
    }

    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R, recipe: &ShapeRecipe) -> Result<GeneratedShape> {
        match recipe.kind {
            ShapeKind::Cuboid => {
                let axes = self.resolve_axes(rng, recipe)?;
                Ok(GeneratedShape {
                    cloud: self.cuboid(axes)?,
                    semi_axes: Some(axes),
                    bump_height: None,
                    car: None,
                })
            }
            ShapeKind::Ellipsoid => {
                let axes = self.resolve_axes(rng, recipe)?;
                Ok(GeneratedShape {
                    cloud: self.ellipsoid(axes, None)?,
                    semi_axes: Some(axes),
                    bump_height: None,
                    car: None,
                })
            }
            ShapeKind::CarLike(style) => {
                let (cloud, params) = self.gen_car_like(rng, style)?;
                Ok(GeneratedShape {
                    cloud,
                    semi_axes: None,
                    bump_height: None,
                    car: Some(params),
                })
            }
            ShapeKind::BumpedEllipsoid => {
                let axes = self.resolve_axes(rng, recipe)?;
                let height = match recipe.bump.height {
                    Some(h) => h,
                    None => rng.random_range(recipe.bump.height_range.0..=recipe.bump.height_range.1),
                };
                Ok(GeneratedShape {
                    cloud: self.ellipsoid(axes, Some((&recipe.bump, height)))?,
                    semi_axes: Some(axes),
                    bump_height: Some(height),
                    car: None,
                })
            }
        }
    }

    pub fn gen_cuboid<R: Rng + ?Sized>(&self, rng: &mut R, recipe: &ShapeRecipe) -> Result<PointCloud> {
        let axes = self.resolve_axes(rng, recipe)?;
        self.cuboid(axes)
    }

    pub fn gen_ellipsoid<R: Rng + ?Sized>(&self, rng: &mut R, recipe: &ShapeRecipe) -> Result<PointCloud> {
        let axes = self.resolve_axes(rng, recipe)?;
        self.ellipsoid(axes, None)
    }

    /// Returns the cloud and the bump height actually used.
    pub fn gen_bumped_ellipsoid<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        proportions: Proportions,
        bump: &BumpSpec,
    ) -> Result<(PointCloud, f64)> {
        let mut recipe = ShapeRecipe::new(ShapeKind::BumpedEllipsoid);
        recipe.bump = *bump;
        recipe.semi_axes = match proportions {
            Proportions::Fixed => Some(FIXED_BUMP_AXES),
            Proportions::Random => Some(sample_bump_axes(rng, recipe.aspect)),
        };
        let shape = self.generate(rng, &recipe)?;
        Ok((shape.cloud, shape.bump_height.unwrap_or(0.0)))
    }

    fn resolve_axes<R: Rng + ?Sized>(&self, rng: &mut R, recipe: &ShapeRecipe) -> Result<[f64; 3]> {
        let axes = match recipe.semi_axes {
            Some(axes) => axes,
            None => sample_semi_axes(rng, recipe.aspect),
        };
        if axes.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
            return Err(Error::InvalidInput(format!("semi-axes must be positive, got {axes:?}")));
        }
        Ok(axes)
    }

    /// Area-uniform box surface: `s0` picks a face by area, `(s1, s2)` place
    /// the point on it.
    pub fn cuboid(&self, half: [f64; 3]) -> Result<PointCloud> {
        let [a, b, c] = half;
        let areas = [b * c, b * c, a * c, a * c, a * b, a * b];
        let total: f64 = areas.iter().sum();
        let mut cumulative = [0.0; 6];
        let mut acc = 0.0;
        for (slot, area) in cumulative.iter_mut().zip(areas) {
            acc += area / total;
            *slot = acc;
        }
        let points = self
            .template
            .samples()
            .iter()
            .map(|&[s0, s1, s2]| {
                let face = cumulative.iter().position(|&c| s0 < c).unwrap_or(5);
                let u = 2.0 * s1 - 1.0;
                let v = 2.0 * s2 - 1.0;
                match face {
                    0 => [a, b * u, c * v],
                    1 => [-a, b * u, c * v],
                    2 => [a * u, b, c * v],
                    3 => [a * u, -b, c * v],
                    4 => [a * u, b * v, c],
                    _ => [a * u, b * v, -c],
                }
            })
            .collect();
        PointCloud::new(points)
    }

    /// Sphere directions scaled by the semi-axes; an optional bump pushes
    /// points outward along their ray from the centre.
    pub fn ellipsoid(&self, axes: [f64; 3], bump: Option<(&BumpSpec, f64)>) -> Result<PointCloud> {
        let points = (0..self.template.len())
            .map(|k| {
                let u = self.template.direction(k);
                let p = [axes[0] * u[0], axes[1] * u[1], axes[2] * u[2]];
                match bump {
                    Some((spec, height)) if height != 0.0 => {
                        let polar = u[2].clamp(-1.0, 1.0).acos();
                        let lift = height * axes[2] * spec.profile(polar);
                        if lift == 0.0 {
                            return p;
                        }
                        let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
                        [
                            p[0] + lift * p[0] / r,
                            p[1] + lift * p[1] / r,
                            p[2] + lift * p[2] / r,
                        ]
                    }
                    _ => p,
                }
            })
            .collect();
        PointCloud::new(points)
    }

    pub fn gen_car_like<R: Rng + ?Sized>(&self, rng: &mut R, style: CarStyle) -> Result<(PointCloud, CarParams)> {
        let params = sample_car_params(rng, style);
        Ok((self.car_like(&params)?, params))
    }

    /// Three-box side profile in the `(x, z)` plane extruded along `y`.
    pub fn car_like(&self, params: &CarParams) -> Result<PointCloud> {
        let profile = CarProfile::new(params)?;
        let side_area = profile.area();
        let band_area = profile.perimeter() * params.width;
        let total = 2.0 * side_area + band_area;
        let side_frac = side_area / total;
        let half_w = params.width / 2.0;

        let points = self
            .template
            .samples()
            .iter()
            .map(|&[s0, s1, s2]| {
                if s0 < 2.0 * side_frac {
                    let y = if s0 < side_frac { -half_w } else { half_w };
                    let x = profile.x_at_area_fraction(s1);
                    let z = s2 * profile.top(x);
                    [x, y, z]
                } else {
                    let (x, z) = profile.point_at_arc_fraction(s1);
                    [x, (s2 - 0.5) * params.width, z]
                }
            })
            .collect();
        PointCloud::new(points)
    }
}

/// Semi-axes for random-proportion bump ellipsoids. The bump pole (z) is
/// kept away from the shortest axis so the bump covers enough points.
pub fn sample_bump_axes<R: Rng + ?Sized>(rng: &mut R, bounds: AspectBounds) -> [f64; 3] {
    loop {
        let axes = [
            rng.random_range(0.85..1.15),
            rng.random_range(0.45..0.7),
            rng.random_range(0.6..0.9),
        ];
        if bounds.contains(axes) {
            return axes;
        }
    }
}

pub fn sample_car_params<R: Rng + ?Sized>(rng: &mut R, style: CarStyle) -> CarParams {
    let length = 1.0;
    let (h_range, rake_range, rear_range) = match style {
        CarStyle::Sport => ((0.22, 0.28), (58.0, 68.0), (50.0, 60.0)),
        CarStyle::Sedan => ((0.32, 0.40), (35.0, 48.0), (25.0, 35.0)),
    };
    let cabin_height = length * rng.random_range(h_range.0..h_range.1);
    CarParams {
        style,
        length,
        width: length * rng.random_range(0.38..0.46),
        cabin_height,
        hood_height: cabin_height * rng.random_range(0.50..0.62),
        deck_height: cabin_height * rng.random_range(0.60..0.72),
        hood_length: length * rng.random_range(0.24..0.30),
        trunk_length: length * rng.random_range(0.14..0.20),
        windshield_rake_deg: rng.random_range(rake_range.0..rake_range.1),
        rear_rake_deg: rng.random_range(rear_range.0..rear_range.1),
    }
}

/// x-monotone side profile: bottom at `z = 0`, piecewise-linear top.
struct CarProfile {
    /// Top curve vertices from rear to front.
    top: Vec<(f64, f64)>,
    /// Closed outline for the band: rear bottom, top curve, front bottom.
    outline: Vec<(f64, f64)>,
    cumulative_arc: Vec<f64>,
    cumulative_area: Vec<f64>,
}

impl CarProfile {
    fn new(p: &CarParams) -> Result<Self> {
        let rear = -p.length / 2.0;
        let front = p.length / 2.0;
        let trunk_end = rear + p.trunk_length;
        let roof_rear = trunk_end + (p.cabin_height - p.deck_height) * p.rear_rake_deg.to_radians().tan();
        let shield_base = front - p.hood_length;
        let roof_front = shield_base - (p.cabin_height - p.hood_height) * p.windshield_rake_deg.to_radians().tan();
        if !(roof_front > roof_rear + 0.02 * p.length) {
            return Err(Error::InvalidInput(format!(
                "car parameters leave no roof: rear {roof_rear:.3}, front {roof_front:.3}"
            )));
        }
        let top = vec![
            (rear, p.deck_height),
            (trunk_end, p.deck_height),
            (roof_rear, p.cabin_height),
            (roof_front, p.cabin_height),
            (shield_base, p.hood_height),
            (front, p.hood_height),
        ];
        let mut outline = vec![(rear, 0.0)];
        outline.extend(top.iter().copied());
        outline.push((front, 0.0));
        outline.push((rear, 0.0));

        let mut cumulative_arc = vec![0.0];
        for w in outline.windows(2) {
            let d = ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt();
            cumulative_arc.push(cumulative_arc.last().unwrap() + d);
        }
        let mut cumulative_area = vec![0.0];
        for w in top.windows(2) {
            let a = (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0;
            cumulative_area.push(cumulative_area.last().unwrap() + a);
        }
        Ok(Self {
            top,
            outline,
            cumulative_arc,
            cumulative_area,
        })
    }

    fn area(&self) -> f64 {
        *self.cumulative_area.last().unwrap()
    }

    fn perimeter(&self) -> f64 {
        *self.cumulative_arc.last().unwrap()
    }

    fn top(&self, x: f64) -> f64 {
        for w in self.top.windows(2) {
            if x <= w[1].0 {
                let t = (x - w[0].0) / (w[1].0 - w[0].0);
                return w[0].1 + t * (w[1].1 - w[0].1);
            }
        }
        self.top.last().unwrap().1
    }

    /// Inverse of the area-under-the-top CDF, exact per trapezoid.
    fn x_at_area_fraction(&self, s: f64) -> f64 {
        let target = s * self.area();
        let seg = self
            .cumulative_area
            .windows(2)
            .position(|w| target < w[1])
            .unwrap_or(self.top.len() - 2);
        let (x0, h0) = self.top[seg];
        let (x1, h1) = self.top[seg + 1];
        let rem = target - self.cumulative_area[seg];
        let slope = (h1 - h0) / (x1 - x0);
        // Solve h0 * d + slope * d^2 / 2 = rem for d in [0, x1 - x0].
        let d = if slope.abs() < 1e-12 {
            rem / h0
        } else {
            (-h0 + (h0 * h0 + 2.0 * slope * rem).max(0.0).sqrt()) / slope
        };
        (x0 + d).clamp(x0, x1)
    }

    fn point_at_arc_fraction(&self, s: f64) -> (f64, f64) {
        let target = s * self.perimeter();
        let seg = self
            .cumulative_arc
            .windows(2)
            .position(|w| target < w[1])
            .unwrap_or(self.outline.len() - 2);
        let len = self.cumulative_arc[seg + 1] - self.cumulative_arc[seg];
        let t = if len > 0.0 {
            (target - self.cumulative_arc[seg]) / len
        } else {
            0.0
        };
        let (x0, z0) = self.outline[seg];
        let (x1, z1) = self.outline[seg + 1];
        (x0 + t * (x1 - x0), z0 + t * (z1 - z0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn unit_cube_points_lie_on_surface() {
        let gen = ShapeGenerator::new(2000);
        let pc = gen.cuboid([1.0, 1.0, 1.0]).unwrap();
        for p in pc.points() {
            let cheb = p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!((cheb - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn generators_are_deterministic() {
        let gen = ShapeGenerator::new(256);
        for kind in [
            ShapeKind::Cuboid,
            ShapeKind::Ellipsoid,
            ShapeKind::CarLike(CarStyle::Sport),
            ShapeKind::CarLike(CarStyle::Sedan),
            ShapeKind::BumpedEllipsoid,
        ] {
            let recipe = ShapeRecipe::new(kind);
            let a = gen.generate(&mut rng(11), &recipe).unwrap();
            let b = gen.generate(&mut rng(11), &recipe).unwrap();
            let bits = |pc: &PointCloud| pc.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.cloud), bits(&b.cloud), "{kind:?}");
        }
    }

    #[test]
    fn ellipsoid_points_satisfy_surface_equation() {
        let gen = ShapeGenerator::new(3000);
        let axes = [1.3, 0.5, 0.7];
        let pc = gen.ellipsoid(axes, None).unwrap();
        for p in pc.points() {
            let s: f64 = (0..3).map(|i| (p[i] / axes[i]).powi(2)).sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn sampled_axes_respect_aspect_bounds() {
        let mut r = rng(5);
        let bounds = AspectBounds::default();
        for _ in 0..1000 {
            let axes = sample_semi_axes(&mut r, bounds);
            assert!(bounds.contains(axes), "{axes:?}");
            assert!(axes.iter().all(|a| *a > 0.0));
            let bump = sample_bump_axes(&mut r, bounds);
            assert!(bounds.contains(bump), "{bump:?}");
        }
    }

    #[test]
    fn zero_bump_is_the_base_ellipsoid() {
        let gen = ShapeGenerator::new(512);
        let spec = BumpSpec {
            height: Some(0.0),
            ..BumpSpec::default()
        };
        let mut recipe = ShapeRecipe::new(ShapeKind::BumpedEllipsoid).with_semi_axes(FIXED_BUMP_AXES);
        recipe.bump = spec;
        let bumped = gen.generate(&mut rng(1), &recipe).unwrap();
        assert_eq!(bumped.cloud, gen.ellipsoid(FIXED_BUMP_AXES, None).unwrap());
    }

    #[test]
    fn bump_is_localized_to_its_support() {
        let gen = ShapeGenerator::new(512);
        let spec = BumpSpec::default();
        let low = gen.ellipsoid(FIXED_BUMP_AXES, Some((&spec, 0.1))).unwrap();
        let high = gen.ellipsoid(FIXED_BUMP_AXES, Some((&spec, 0.5))).unwrap();
        let width = spec.width_deg.to_radians();
        let mut changed = 0;
        for k in 0..gen.points() {
            let polar = gen.template().direction(k)[2].acos();
            let same = low.points()[k] == high.points()[k];
            if polar >= width {
                assert!(same, "point {k} outside the support moved");
            } else if !same {
                changed += 1;
            }
        }
        assert!(changed > 10);
    }

    #[test]
    fn bump_profile_shape() {
        let spec = BumpSpec::default();
        assert_eq!(spec.profile(0.0), 1.0);
        assert_eq!(spec.profile(spec.width_deg.to_radians()), 0.0);
        assert!(spec.profile(0.1) < 1.0 && spec.profile(0.1) > spec.profile(0.2));
    }

    #[test]
    fn sport_is_lower_than_sedan() {
        let gen = ShapeGenerator::new(512);
        let mut r = rng(9);
        let ratio = |pc: &PointCloud| {
            let e = pc.extent();
            e[2] / e[0]
        };
        let sport_max = (0..50)
            .map(|_| ratio(&gen.gen_car_like(&mut r, CarStyle::Sport).unwrap().0))
            .fold(f64::MIN, f64::max);
        let sedan_min = (0..50)
            .map(|_| ratio(&gen.gen_car_like(&mut r, CarStyle::Sedan).unwrap().0))
            .fold(f64::MAX, f64::min);
        assert!(sport_max < sedan_min, "{sport_max} vs {sedan_min}");
    }

    #[test]
    fn car_points_lie_inside_the_extruded_profile() {
        let gen = ShapeGenerator::new(1000);
        let (pc, params) = gen.gen_car_like(&mut rng(2), CarStyle::Sedan).unwrap();
        let profile = CarProfile::new(&params).unwrap();
        for p in pc.points() {
            assert!(p[0] >= -0.5 - 1e-12 && p[0] <= 0.5 + 1e-12);
            assert!(p[1].abs() <= params.width / 2.0 + 1e-12);
            assert!(p[2] >= -1e-12 && p[2] <= profile.top(p[0]) + 1e-9);
        }
    }
}
