//! Abdominal cavity and table set-up model for coverage and clearance checks.
//!
//! The cavity is a half-ellipsoid hanging below a wall-plane center point.
//! Sampling uses `ChaCha8Rng` seeded with a `u64`; the generator name and
//! seed are part of every report so results can be reproduced exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{is_reachable, JointLimits, Point3, Vec3, ViewFrustum};

/// Name of the generator behind every seeded estimate.
pub const PRNG_NAME: &str = "ChaCha8Rng";

pub const DEFAULT_BASE_DIAMETER_MM: f64 = 110.0;
pub const DEFAULT_TROCAR_DIAMETER_MM: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SceneError {
    #[error("{0} must be strictly positive")]
    NotPositive(&'static str),
    #[error("cavity center must lie on or below the wall plane (z = {0})")]
    CavityAboveWall(f64),
    #[error("at least {min} samples are required, got {got}")]
    TooFewSamples { min: usize, got: usize },
    #[error("invalid scene file: {0}")]
    Parse(String),
}

/// Half-ellipsoid cavity `{((p − c)/a)² ≤ 1, z < c.z}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CavityModel {
    pub ax_mm: f64,
    pub ay_mm: f64,
    pub az_mm: f64,
    /// Center of the wall-plane face; the pivot's wall point by default.
    pub center_mm: [f64; 3],
}

impl Default for CavityModel {
    fn default() -> Self {
        CavityModel {
            ax_mm: 150.0,
            ay_mm: 120.0,
            az_mm: 120.0,
            center_mm: [0.0; 3],
        }
    }
}

impl CavityModel {
    pub fn validate(&self) -> Result<(), SceneError> {
        for (name, v) in [
            ("ax_mm", self.ax_mm),
            ("ay_mm", self.ay_mm),
            ("az_mm", self.az_mm),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SceneError::NotPositive(name));
            }
        }
        if self.center_mm[2].is_nan() || self.center_mm[2] > 0.0 {
            return Err(SceneError::CavityAboveWall(self.center_mm[2]));
        }
        Ok(())
    }

    pub fn contains(&self, p: &Point3) -> bool {
        let [cx, cy, cz] = self.center_mm;
        let (dx, dy, dz) = (
            (p.x - cx) / self.ax_mm,
            (p.y - cy) / self.ay_mm,
            (p.z - cz) / self.az_mm,
        );
        p.z < cz && dx * dx + dy * dy + dz * dz <= 1.0
    }

    pub fn volume(&self) -> f64 {
        2.0 / 3.0 * std::f64::consts::PI * self.ax_mm * self.ay_mm * self.az_mm
    }

    /// Uniform samples inside the cavity by rejection from its bounding box.
    /// The sequence depends only on the cavity and the seed.
    pub fn sample_points(&self, count: usize, seed: u64) -> Vec<Point3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [cx, cy, cz] = self.center_mm;
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let p = Vec3::new(
                cx + rng.random_range(-self.ax_mm..self.ax_mm),
                cy + rng.random_range(-self.ay_mm..self.ay_mm),
                cz - rng.random_range(0.0..self.az_mm),
            );
            if self.contains(&p) {
                out.push(p);
            }
        }
        out
    }
}

pub const MIN_COVERAGE_SAMPLES: usize = 1000;

/// Fraction of the cavity volume the scope tip can reach, estimated from
/// `samples` seeded uniform cavity points.
pub fn coverage(
    cavity: &CavityModel,
    limits: &JointLimits,
    samples: usize,
    seed: u64,
) -> Result<f64, SceneError> {
    if samples < MIN_COVERAGE_SAMPLES {
        return Err(SceneError::TooFewSamples {
            min: MIN_COVERAGE_SAMPLES,
            got: samples,
        });
    }
    cavity.validate()?;
    Ok(coverage_of(&cavity.sample_points(samples, seed), limits))
}

/// Coverage over a fixed sample set, for comparing limits on shared points.
pub fn coverage_of(points: &[Point3], limits: &JointLimits) -> f64 {
    let hits = points.iter().filter(|p| is_reachable(p, limits)).count();
    hits as f64 / points.len() as f64
}

/// Monte-Carlo workspace volume: uniform samples in the box
/// `[−r, r]² × [−r, 0]` around the reachable sector.
pub fn monte_carlo_volume(limits: &JointLimits, samples: usize, seed: u64) -> f64 {
    let r = limits.insertion_max_mm();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..samples {
        let p = Vec3::new(
            rng.random_range(-r..r),
            rng.random_range(-r..r),
            -rng.random_range(0.0..r),
        );
        if is_reachable(&p, limits) {
            hits += 1;
        }
    }
    hits as f64 / samples as f64 * 4.0 * r * r * r
}

/// Reachable-cone aperture measured by sampling: twice the largest polar
/// angle (from −z) among reachable directions drawn uniformly over the lower
/// hemisphere at random ranges, degrees.
pub fn sampled_aperture_deg(limits: &JointLimits, samples: usize, seed: u64) -> f64 {
    let r = limits.insertion_max_mm();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut widest = 0.0f64;
    for _ in 0..samples {
        // uniform on the lower hemisphere: cos(polar) uniform in (0, 1]
        let cos_polar: f64 = 1.0 - rng.random::<f64>();
        let azimuth = rng.random_range(0.0..std::f64::consts::TAU);
        let range = r * (1.0 - rng.random::<f64>());
        let sin_polar = (1.0 - cos_polar * cos_polar).sqrt();
        let p = Vec3::new(
            sin_polar * azimuth.cos(),
            sin_polar * azimuth.sin(),
            -cos_polar,
        ) * range;
        if is_reachable(&p, limits) {
            let polar = (p.x.hypot(p.y)).atan2(-p.z).to_degrees();
            widest = widest.max(polar);
        }
    }
    2.0 * widest
}

/// A trocar entry point on the wall plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrocarSite {
    pub position_mm: [f64; 2],
    #[serde(default = "default_trocar_diameter")]
    pub diameter_mm: f64,
}

fn default_trocar_diameter() -> f64 {
    DEFAULT_TROCAR_DIAMETER_MM
}

impl TrocarSite {
    pub fn new(x: f64, y: f64, diameter_mm: f64) -> Self {
        TrocarSite {
            position_mm: [x, y],
            diameter_mm,
        }
    }
}

/// Straight wall-plane segment, e.g. the clamp arm from the base edge to the
/// table rail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment2 {
    pub from_mm: [f64; 2],
    pub to_mm: [f64; 2],
}

impl Segment2 {
    pub fn distance_to(&self, p: [f64; 2]) -> f64 {
        let [ax, ay] = self.from_mm;
        let [bx, by] = self.to_mm;
        let (dx, dy) = (bx - ax, by - ay);
        let len2 = dx * dx + dy * dy;
        let t = if len2 == 0.0 {
            0.0
        } else {
            (((p[0] - ax) * dx + (p[1] - ay) * dy) / len2).clamp(0.0, 1.0)
        };
        (p[0] - (ax + t * dx)).hypot(p[1] - (ay + t * dy))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaseFootprint {
    pub center_mm: [f64; 2],
    pub diameter_mm: f64,
    pub clamp_arm: Option<Segment2>,
}

impl Default for BaseFootprint {
    fn default() -> Self {
        BaseFootprint {
            center_mm: [0.0, 0.0],
            diameter_mm: DEFAULT_BASE_DIAMETER_MM,
            clamp_arm: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ConflictCause {
    Base,
    ClampArm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Conflict {
    pub site: usize,
    pub cause: ConflictCause,
}

/// Every trocar that overlaps the robot base or sits under the clamp arm.
///
/// A site conflicts with the base when its center is closer than
/// `base radius + site radius` to the base center, and with the clamp arm
/// when its center is closer than its own radius to the arm segment.
/// Touching is not a conflict. Results are ordered by site, BASE first.
pub fn check_clearance(sites: &[TrocarSite], base: &BaseFootprint) -> Vec<Conflict> {
    let mut out = Vec::new();
    for (site, t) in sites.iter().enumerate() {
        let r = t.diameter_mm / 2.0;
        let [cx, cy] = base.center_mm;
        let to_center = (t.position_mm[0] - cx).hypot(t.position_mm[1] - cy);
        if to_center < base.diameter_mm / 2.0 + r {
            out.push(Conflict {
                site,
                cause: ConflictCause::Base,
            });
        }
        if let Some(arm) = &base.clamp_arm {
            if arm.distance_to(t.position_mm) < r {
                out.push(Conflict {
                    site,
                    cause: ConflictCause::ClampArm,
                });
            }
        }
    }
    out
}

/// Relative slack on the frustum boundary so targets constructed exactly
/// at the half angle survive rounding.
const BOUNDARY_SLACK: f64 = 1e-12;

/// Targets inside the closed viewing cone and strictly in front of the apex.
pub fn visible_targets(frustum: &ViewFrustum, targets: &[Point3]) -> Vec<Point3> {
    let cos_half = frustum.half_angle_deg.to_radians().cos();
    targets
        .iter()
        .copied()
        .filter(|t| {
            let v = *t - frustum.apex;
            let along = v.dot(&frustum.axis);
            let dist = v.norm();
            along > 0.0 && along >= dist * (cos_half - BOUNDARY_SLACK)
        })
        .collect()
}

/// Contents of a scene description file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneDescription {
    pub cavity: CavityModel,
    pub trocars: Vec<TrocarSite>,
    pub base: BaseFootprint,
}

impl SceneDescription {
    pub fn from_json(text: &str) -> Result<Self, SceneError> {
        let scene: SceneDescription =
            serde_json::from_str(text).map_err(|e| SceneError::Parse(e.to_string()))?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        self.cavity.validate()?;
        if self.base.diameter_mm.is_nan() || self.base.diameter_mm <= 0.0 {
            return Err(SceneError::NotPositive("base.diameter_mm"));
        }
        if self.trocars.iter().any(|t| t.diameter_mm.is_nan() || t.diameter_mm <= 0.0) {
            return Err(SceneError::NotPositive("trocars[].diameter_mm"));
        }
        Ok(())
    }

    pub fn conflicts(&self) -> Vec<Conflict> {
        check_clearance(&self.trocars, &self.base)
    }
}
