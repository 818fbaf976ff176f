//! Remote-center-of-motion geometry.
//!
//! The endoscope passes through a trocar that acts as a fixed pivot. The
//! patient frame has its origin at that pivot, `+z` pointing out of the
//! abdomen toward the robot base, and `x`/`y` spanning the abdominal-wall
//! plane. Every point inside the cavity therefore has `z < 0`.
//!
//! A configuration is three integers: pan (rotation about the vertical,
//! millidegrees), tilt (inclination from the vertical, millidegrees) and
//! insertion (axial travel from the pivot, micrometers). With pan `θ`, tilt
//! `φ` and insertion `s` the scope axis is
//! `(sin φ cos θ, sin φ sin θ, −cos φ)` and the tip sits at `s · axis`.
//!
//! Trigonometry goes through [`libm`] so derived poses are identical on every
//! platform, not just the fixed-point joints.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Millidegrees in one full pan revolution.
pub const FULL_TURN_MDEG: i64 = 360_000;

const MDEG_PER_RAD: f64 = 180_000.0 / PI;

/// One of the three motorized joints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Axis {
    /// Rotation of the needle about the vertical (motor 2).
    Pan,
    /// Pan-tilt inclination from the vertical (motor 3).
    Tilt,
    /// Cable-and-pulley insertion depth (motor 1).
    Insertion,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::Pan, Axis::Tilt, Axis::Insertion];

    /// Motor number on the physical device.
    pub fn motor(self) -> u8 {
        match self {
            Axis::Insertion => 1,
            Axis::Pan => 2,
            Axis::Tilt => 3,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Axis::Pan => 0,
            Axis::Tilt => 1,
            Axis::Insertion => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Axis::Pan => "PAN",
            Axis::Tilt => "TILT",
            Axis::Insertion => "INSERTION",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LimitsError {
    #[error("{0} must be strictly positive")]
    NotPositive(&'static str),
    #[error("tilt_max_mdeg {0} exceeds 90000: the scope cannot leave the cavity half-space")]
    TiltBeyondHorizontal(i64),
}

/// Mechanical ranges and speed ceilings.
///
/// Defaults describe the device: 80° tilt, 200 mm of insertion travel,
/// 75°/s on both rotary joints and 80 mm/s on insertion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JointLimits {
    pub tilt_max_mdeg: i64,
    pub insertion_max_um: i64,
    pub pan_speed_mdeg_s: i64,
    pub tilt_speed_mdeg_s: i64,
    pub insertion_speed_um_s: i64,
}

impl Default for JointLimits {
    fn default() -> Self {
        JointLimits {
            tilt_max_mdeg: 80_000,
            insertion_max_um: 200_000,
            pan_speed_mdeg_s: 75_000,
            tilt_speed_mdeg_s: 75_000,
            insertion_speed_um_s: 80_000,
        }
    }
}

impl JointLimits {
    pub fn validate(&self) -> Result<(), LimitsError> {
        let fields = [
            ("tilt_max_mdeg", self.tilt_max_mdeg),
            ("insertion_max_um", self.insertion_max_um),
            ("pan_speed_mdeg_s", self.pan_speed_mdeg_s),
            ("tilt_speed_mdeg_s", self.tilt_speed_mdeg_s),
            ("insertion_speed_um_s", self.insertion_speed_um_s),
        ];
        for (name, value) in fields {
            if value <= 0 {
                return Err(LimitsError::NotPositive(name));
            }
        }
        if self.tilt_max_mdeg > 90_000 {
            return Err(LimitsError::TiltBeyondHorizontal(self.tilt_max_mdeg));
        }
        Ok(())
    }

    /// Speed ceiling of `axis` in its native unit per second.
    pub fn speed(&self, axis: Axis) -> i64 {
        match axis {
            Axis::Pan => self.pan_speed_mdeg_s,
            Axis::Tilt => self.tilt_speed_mdeg_s,
            Axis::Insertion => self.insertion_speed_um_s,
        }
    }

    pub fn tilt_max_deg(&self) -> f64 {
        self.tilt_max_mdeg as f64 / 1000.0
    }

    pub fn insertion_max_mm(&self) -> f64 {
        self.insertion_max_um as f64 / 1000.0
    }
}

/// Robot configuration in fixed point.
///
/// Pan always lies in `[0, 360000)` and wraps; tilt and insertion are
/// clamped to `[0, limit]` by every constructor, so a value of this type
/// is always a valid configuration for the limits it was built with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize)]
pub struct JointVector {
    pan_mdeg: i64,
    tilt_mdeg: i64,
    insertion_um: i64,
}

impl JointVector {
    pub const ZERO: JointVector = JointVector {
        pan_mdeg: 0,
        tilt_mdeg: 0,
        insertion_um: 0,
    };

    /// Wraps pan and clamps tilt and insertion into `limits`.
    pub fn new(pan_mdeg: i64, tilt_mdeg: i64, insertion_um: i64, limits: &JointLimits) -> Self {
        JointVector {
            pan_mdeg: pan_mdeg.rem_euclid(FULL_TURN_MDEG),
            tilt_mdeg: tilt_mdeg.clamp(0, limits.tilt_max_mdeg),
            insertion_um: insertion_um.clamp(0, limits.insertion_max_um),
        }
    }

    /// Convenience constructor in degrees and millimeters, rounded to the
    /// nearest quantum.
    pub fn from_degrees_mm(
        pan_deg: f64,
        tilt_deg: f64,
        insertion_mm: f64,
        limits: &JointLimits,
    ) -> Self {
        JointVector::new(
            (pan_deg * 1000.0).round() as i64,
            (tilt_deg * 1000.0).round() as i64,
            (insertion_mm * 1000.0).round() as i64,
            limits,
        )
    }

    pub fn pan_mdeg(&self) -> i64 {
        self.pan_mdeg
    }

    pub fn tilt_mdeg(&self) -> i64 {
        self.tilt_mdeg
    }

    pub fn insertion_um(&self) -> i64 {
        self.insertion_um
    }

    pub fn get(&self, axis: Axis) -> i64 {
        match axis {
            Axis::Pan => self.pan_mdeg,
            Axis::Tilt => self.tilt_mdeg,
            Axis::Insertion => self.insertion_um,
        }
    }

    /// Returns a copy with `axis` set to `value`, wrapped or clamped.
    pub fn with(&self, axis: Axis, value: i64, limits: &JointLimits) -> Self {
        let (mut pan, mut tilt, mut ins) = (self.pan_mdeg, self.tilt_mdeg, self.insertion_um);
        match axis {
            Axis::Pan => pan = value,
            Axis::Tilt => tilt = value,
            Axis::Insertion => ins = value,
        }
        JointVector::new(pan, tilt, ins, limits)
    }

    /// Signed distance from `other` to `self` along `axis`. Pan takes the
    /// short way round.
    pub fn delta(&self, other: &JointVector, axis: Axis) -> i64 {
        let d = self.get(axis) - other.get(axis);
        if axis == Axis::Pan {
            let d = d.rem_euclid(FULL_TURN_MDEG);
            if d > FULL_TURN_MDEG / 2 {
                d - FULL_TURN_MDEG
            } else {
                d
            }
        } else {
            d
        }
    }
}

/// A 3-vector in the patient frame, millimeters where it is a position.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Positions use the same representation as directions.
pub type Point3 = Vec3;

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(&self, other: &Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.dot(self))
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, k: f64) -> Vec3 {
        Vec3::new(self.x * k, self.y * k, self.z * k)
    }
}

/// Endoscope tip position and pointing direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScopePose {
    pub tip: Point3,
    /// Unit vector from the pivot toward the tip.
    pub axis: Vec3,
}

/// Viewing cone of the endoscope optics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewFrustum {
    pub apex: Point3,
    pub axis: Vec3,
    pub half_angle_deg: f64,
}

/// Optical field of view of a conventional laparoscope, degrees.
pub const DEFAULT_FOV_DEG: f64 = 70.0;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum UnreachableReason {
    #[error("target is not inside the cavity (z = {z_mm} mm, must be < 0)")]
    OutsideCavity { z_mm: f64 },
    #[error("target range {range_mm} mm exceeds insertion travel {max_mm} mm")]
    InsertionOutOfRange { range_mm: f64, max_mm: f64 },
    #[error("target is {tilt_deg}° from vertical, beyond the {max_deg}° tilt range")]
    TiltOutOfRange { tilt_deg: f64, max_deg: f64 },
    #[error("target has non-finite coordinates")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("field of view must lie strictly between 0 and 180 degrees, got {0}")]
pub struct InvalidFov(pub f64);

fn mdeg_to_rad(mdeg: i64) -> f64 {
    mdeg as f64 / MDEG_PER_RAD
}

/// Unit scope direction for a pan/tilt pair.
fn direction(pan_mdeg: i64, tilt_mdeg: i64) -> Vec3 {
    let (sin_pan, cos_pan) = libm::sincos(mdeg_to_rad(pan_mdeg));
    let (sin_tilt, cos_tilt) = libm::sincos(mdeg_to_rad(tilt_mdeg));
    Vec3::new(sin_tilt * cos_pan, sin_tilt * sin_pan, -cos_tilt)
}

pub fn forward_kinematics(joints: &JointVector) -> ScopePose {
    let axis = direction(joints.pan_mdeg, joints.tilt_mdeg);
    let s_mm = joints.insertion_um as f64 / 1000.0;
    ScopePose {
        tip: axis * s_mm,
        axis,
    }
}

/// Joint configuration that places the tip on `target`.
///
/// Range checks apply to the quantized joints: a target is accepted when its
/// range rounds to at most `insertion_max` micrometers and its angle from
/// `−z` rounds to at most `tilt_max` millidegrees, and it lies strictly below
/// the wall plane. Apart from that half-quantum shell the accepted set is the
/// closed spherical sector. When the quantized tilt is zero the pan is
/// unobservable and `current`'s pan is kept, so a vertical target never
/// swings the base.
pub fn inverse_kinematics(
    target: &Point3,
    current: &JointVector,
    limits: &JointLimits,
) -> Result<JointVector, UnreachableReason> {
    if !target.is_finite() {
        return Err(UnreachableReason::NonFinite);
    }
    if target.z >= 0.0 {
        return Err(UnreachableReason::OutsideCavity { z_mm: target.z });
    }
    let range_mm = target.norm();
    let insertion_um = (range_mm * 1000.0).round() as i64;
    if insertion_um > limits.insertion_max_um {
        return Err(UnreachableReason::InsertionOutOfRange {
            range_mm,
            max_mm: limits.insertion_max_mm(),
        });
    }
    // atan2 form of arccos(-z/r); well conditioned near the vertical.
    let radial = libm::hypot(target.x, target.y);
    let tilt_exact = libm::atan2(radial, -target.z) * MDEG_PER_RAD;
    let tilt_mdeg = tilt_exact.round() as i64;
    if tilt_mdeg > limits.tilt_max_mdeg {
        return Err(UnreachableReason::TiltOutOfRange {
            tilt_deg: tilt_exact / 1000.0,
            max_deg: limits.tilt_max_deg(),
        });
    }
    let pan_mdeg = if tilt_mdeg == 0 {
        current.pan_mdeg
    } else {
        (libm::atan2(target.y, target.x) * MDEG_PER_RAD).round() as i64
    };
    Ok(JointVector::new(pan_mdeg, tilt_mdeg, insertion_um, limits))
}

pub fn is_reachable(target: &Point3, limits: &JointLimits) -> bool {
    inverse_kinematics(target, &JointVector::ZERO, limits).is_ok()
}

/// Analytic volume of the reachable spherical sector, mm³.
pub fn workspace_volume(limits: &JointLimits) -> f64 {
    let r = limits.insertion_max_mm();
    let cos_max = libm::cos(mdeg_to_rad(limits.tilt_max_mdeg));
    2.0 * PI / 3.0 * r * r * r * (1.0 - cos_max)
}

/// Full aperture of the reachable cone, degrees.
pub fn workspace_aperture_deg(limits: &JointLimits) -> f64 {
    2.0 * limits.tilt_max_deg()
}

pub fn view_frustum(joints: &JointVector, fov_deg: f64) -> Result<ViewFrustum, InvalidFov> {
    if !(fov_deg > 0.0 && fov_deg < 180.0) {
        return Err(InvalidFov(fov_deg));
    }
    let pose = forward_kinematics(joints);
    Ok(ViewFrustum {
        apex: pose.tip,
        axis: pose.axis,
        half_angle_deg: fov_deg / 2.0,
    })
}
