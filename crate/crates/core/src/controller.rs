//! Velocity-limited, tick-driven motion controller.
//!
//! One axis moves at a time, at its full speed ceiling, with no acceleration
//! ramp. Every quantity is an integer and the timestep is fixed, so a tick
//! moves the active joint by exactly `speed · dt` (750 mdeg or 800 µm at the
//! 10 ms default) unless a mechanical limit stops it first.
//!
//! The thermal model is synthetic. Each motor has an accumulator that charges
//! while the motor is driven and decays otherwise; crossing the budget latches
//! a [`FaultCause::Thermal`] fault. The defaults (charge 1 unit/s, decay
//! 0.25 unit/s, budget 60 units) give about a minute of continuous full-speed
//! running before the interlock trips.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::kinematics::Axis;
use crate::kinematics::{JointLimits, JointVector, LimitsError};

/// Thermal accumulators count micro-units so per-tick charge and decay stay
/// integral at 10 ms.
pub const THERMAL_UNIT: i64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MotionMode {
    /// Move until stopped.
    Continuous,
    /// Move by one fixed increment.
    Step,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Negative,
    Positive,
}

impl Direction {
    pub fn sign(self) -> i64 {
        match self {
            Direction::Negative => -1,
            Direction::Positive => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MotionRequest {
    pub axis: Axis,
    pub direction: Direction,
    pub mode: MotionMode,
}

impl MotionRequest {
    pub fn new(axis: Axis, direction: Direction, mode: MotionMode) -> Self {
        MotionRequest {
            axis,
            direction,
            mode,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    Idle,
    Moving,
    Stepping,
    Manual,
    Fault,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Idle => "IDLE",
            Mode::Moving => "MOVING",
            Mode::Stepping => "STEPPING",
            Mode::Manual => "MANUAL",
            Mode::Fault => "FAULT",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FaultCause {
    /// The given motor's thermal accumulator exceeded its budget.
    Thermal(Axis),
}

impl FaultCause {
    pub fn as_str(self) -> &'static str {
        match self {
            FaultCause::Thermal(_) => "THERMAL",
        }
    }
}

/// Fixed increments for discrete-step motion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepSizes {
    pub angular_step_mdeg: i64,
    pub insertion_step_um: i64,
}

impl Default for StepSizes {
    fn default() -> Self {
        StepSizes {
            angular_step_mdeg: 2_000,
            insertion_step_um: 5_000,
        }
    }
}

impl StepSizes {
    /// Upper bound for an angular step; steps are meant to be a few degrees.
    pub const MAX_ANGULAR_STEP_MDEG: i64 = 10_000;

    pub fn for_axis(&self, axis: Axis) -> i64 {
        match axis {
            Axis::Pan | Axis::Tilt => self.angular_step_mdeg,
            Axis::Insertion => self.insertion_step_um,
        }
    }
}

/// Synthetic motor heating constants, in micro-units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThermalModel {
    pub charge_per_s: i64,
    pub decay_per_s: i64,
    pub budget: i64,
}

impl Default for ThermalModel {
    fn default() -> Self {
        ThermalModel {
            charge_per_s: THERMAL_UNIT,
            decay_per_s: THERMAL_UNIT / 4,
            budget: 60 * THERMAL_UNIT,
        }
    }
}

impl ThermalModel {
    /// A fault may be cleared once the faulted accumulator is below this.
    pub fn clear_threshold(&self) -> i64 {
        self.budget / 2
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Limits(#[from] LimitsError),
    #[error("timestep must be positive, got {0} ms")]
    Timestep(i64),
    #[error("{name} = {value} does not divide into whole increments per {dt_ms} ms tick")]
    NotIntegral {
        name: &'static str,
        value: i64,
        dt_ms: i64,
    },
    #[error("{0} must be strictly positive")]
    NotPositive(&'static str),
    #[error("angular step {0} mdeg exceeds the 10° maximum")]
    StepTooLarge(i64),
}

/// Everything the controller needs besides its state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub limits: JointLimits,
    pub steps: StepSizes,
    pub thermal: ThermalModel,
    pub dt_ms: i64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            limits: JointLimits::default(),
            steps: StepSizes::default(),
            thermal: ThermalModel::default(),
            dt_ms: 10,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.limits.validate()?;
        if self.dt_ms <= 0 {
            return Err(ConfigError::Timestep(self.dt_ms));
        }
        let rates = [
            ("pan_speed_mdeg_s", self.limits.pan_speed_mdeg_s),
            ("tilt_speed_mdeg_s", self.limits.tilt_speed_mdeg_s),
            ("insertion_speed_um_s", self.limits.insertion_speed_um_s),
            ("thermal.charge_per_s", self.thermal.charge_per_s),
            ("thermal.decay_per_s", self.thermal.decay_per_s),
        ];
        for (name, value) in rates {
            if value <= 0 {
                return Err(ConfigError::NotPositive(name));
            }
            if (value * self.dt_ms) % 1000 != 0 {
                return Err(ConfigError::NotIntegral {
                    name,
                    value,
                    dt_ms: self.dt_ms,
                });
            }
        }
        for (name, value) in [
            ("thermal.budget", self.thermal.budget),
            ("steps.angular_step_mdeg", self.steps.angular_step_mdeg),
            ("steps.insertion_step_um", self.steps.insertion_step_um),
        ] {
            if value <= 0 {
                return Err(ConfigError::NotPositive(name));
            }
        }
        if self.steps.angular_step_mdeg > StepSizes::MAX_ANGULAR_STEP_MDEG {
            return Err(ConfigError::StepTooLarge(self.steps.angular_step_mdeg));
        }
        Ok(())
    }

    /// Joint increment per tick at full speed.
    pub fn per_tick(&self, axis: Axis) -> i64 {
        self.limits.speed(axis) * self.dt_ms / 1000
    }

    pub fn charge_per_tick(&self) -> i64 {
        self.thermal.charge_per_s * self.dt_ms / 1000
    }

    pub fn decay_per_tick(&self) -> i64 {
        self.thermal.decay_per_s * self.dt_ms / 1000
    }

    /// Idle ticks that always suffice for a thermal fault to become
    /// clearable, counted from the tick the fault latched.
    pub fn thermal_recovery_ticks(&self) -> u64 {
        let peak = self.thermal.budget + self.charge_per_tick();
        // strictly below the threshold
        let excess = peak - self.thermal.clear_threshold() + 1;
        let decay = self.decay_per_tick();
        ((excess + decay - 1) / decay) as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ControlError {
    #[error("command rejected: controller is in {0} mode")]
    CommandRejected(Mode),
    #[error("joints can only be set by hand in MANUAL mode (currently {0})")]
    NotInManualMode(Mode),
    #[error("{axis} motor still too hot to clear fault ({level} of {threshold} micro-units)")]
    FaultNotClearable {
        axis: Axis,
        level: i64,
        threshold: i64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Motion {
    Idle,
    Moving(MotionRequest),
    Stepping {
        request: MotionRequest,
        remaining: i64,
    },
    /// Motors off. A fault raised before entering manual mode stays latched.
    Manual {
        latched: Option<FaultCause>,
    },
    Fault(FaultCause),
}

/// Full controller state. A plain value: every operation returns a new one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ControllerState {
    joints: JointVector,
    motion: Motion,
    thermal: [i64; 3],
}

impl Default for ControllerState {
    fn default() -> Self {
        ControllerState::new(JointVector::ZERO)
    }
}

impl ControllerState {
    pub fn new(joints: JointVector) -> Self {
        ControllerState {
            joints,
            motion: Motion::Idle,
            thermal: [0; 3],
        }
    }

    pub fn joints(&self) -> JointVector {
        self.joints
    }

    pub fn mode(&self) -> Mode {
        match self.motion {
            Motion::Idle => Mode::Idle,
            Motion::Moving(_) => Mode::Moving,
            Motion::Stepping { .. } => Mode::Stepping,
            Motion::Manual { .. } => Mode::Manual,
            Motion::Fault(_) => Mode::Fault,
        }
    }

    /// Present exactly when the mode is MOVING or STEPPING.
    pub fn active(&self) -> Option<MotionRequest> {
        match self.motion {
            Motion::Moving(r) | Motion::Stepping { request: r, .. } => Some(r),
            _ => None,
        }
    }

    pub fn step_remaining(&self) -> i64 {
        match self.motion {
            Motion::Stepping { remaining, .. } => remaining,
            _ => 0,
        }
    }

    /// Active or latched fault.
    pub fn fault_cause(&self) -> Option<FaultCause> {
        match self.motion {
            Motion::Fault(c) => Some(c),
            Motion::Manual { latched } => latched,
            _ => None,
        }
    }

    pub fn thermal(&self, axis: Axis) -> i64 {
        self.thermal[axis.index()]
    }

    /// Advances one fixed timestep.
    pub fn tick(&self, cfg: &ControllerConfig) -> ControllerState {
        let mut next = *self;
        let driven = self.active().map(|r| r.axis);

        match self.motion {
            Motion::Moving(req) => {
                next.joints = self.advanced(req, cfg.per_tick(req.axis), cfg);
            }
            Motion::Stepping { request, remaining } => {
                let want = cfg.per_tick(request.axis).min(remaining);
                next.joints = self.advanced(request, want, cfg);
                let moved = next.joints.delta(&self.joints, request.axis).abs();
                let remaining = remaining - want;
                next.motion = if remaining == 0 || moved < want {
                    Motion::Idle
                } else {
                    Motion::Stepping { request, remaining }
                };
            }
            Motion::Idle | Motion::Manual { .. } | Motion::Fault(_) => {}
        }

        for axis in Axis::ALL {
            let level = &mut next.thermal[axis.index()];
            if Some(axis) == driven {
                *level += cfg.charge_per_tick();
            } else {
                *level = (*level - cfg.decay_per_tick()).max(0);
            }
        }
        if let Some(axis) = driven {
            if next.thermal[axis.index()] > cfg.thermal.budget {
                next.motion = Motion::Fault(FaultCause::Thermal(axis));
            }
        }
        next
    }

    fn advanced(&self, req: MotionRequest, amount: i64, cfg: &ControllerConfig) -> JointVector {
        let target = self.joints.get(req.axis) + req.direction.sign() * amount;
        self.joints.with(req.axis, target, &cfg.limits)
    }

    /// Starts a motion, preempting whatever was running.
    pub fn command(
        &self,
        req: MotionRequest,
        cfg: &ControllerConfig,
    ) -> Result<ControllerState, ControlError> {
        match self.motion {
            Motion::Fault(_) => return Err(ControlError::CommandRejected(Mode::Fault)),
            Motion::Manual { .. } => return Err(ControlError::CommandRejected(Mode::Manual)),
            _ => {}
        }
        let motion = match req.mode {
            MotionMode::Continuous => Motion::Moving(req),
            MotionMode::Step => Motion::Stepping {
                request: req,
                remaining: cfg.steps.for_axis(req.axis),
            },
        };
        Ok(ControllerState { motion, ..*self })
    }

    pub fn stop(&self) -> ControllerState {
        match self.motion {
            Motion::Moving(_) | Motion::Stepping { .. } => ControllerState {
                motion: Motion::Idle,
                ..*self
            },
            _ => *self,
        }
    }

    /// Motors off (`true`) or back on (`false`).
    ///
    /// Entering manual mode from FAULT keeps the fault latched; leaving
    /// manual mode then returns to FAULT rather than IDLE.
    pub fn set_manual(&self, on: bool) -> ControllerState {
        let motion = match (on, self.motion) {
            (true, Motion::Manual { .. }) => self.motion,
            (true, Motion::Fault(c)) => Motion::Manual { latched: Some(c) },
            (true, _) => Motion::Manual { latched: None },
            (false, Motion::Manual { latched: Some(c) }) => Motion::Fault(c),
            (false, Motion::Manual { latched: None }) => Motion::Idle,
            (false, _) => self.motion,
        };
        ControllerState { motion, ..*self }
    }

    /// Hand repositioning of the back-driveable joints.
    pub fn set_joints_manual(
        &self,
        joints: JointVector,
        cfg: &ControllerConfig,
    ) -> Result<ControllerState, ControlError> {
        match self.motion {
            Motion::Manual { .. } => Ok(ControllerState {
                joints: JointVector::new(
                    joints.pan_mdeg(),
                    joints.tilt_mdeg(),
                    joints.insertion_um(),
                    &cfg.limits,
                ),
                ..*self
            }),
            _ => Err(ControlError::NotInManualMode(self.mode())),
        }
    }

    /// Clears a thermal fault once the motor has cooled below half budget.
    /// A no-op outside FAULT.
    pub fn reset_fault(&self, cfg: &ControllerConfig) -> Result<ControllerState, ControlError> {
        let Some(FaultCause::Thermal(axis)) = self.fault_cause() else {
            return Ok(*self);
        };
        let level = self.thermal[axis.index()];
        let threshold = cfg.thermal.clear_threshold();
        if level >= threshold {
            return Err(ControlError::FaultNotClearable {
                axis,
                level,
                threshold,
            });
        }
        let motion = match self.motion {
            Motion::Manual { .. } => Motion::Manual { latched: None },
            _ => Motion::Idle,
        };
        Ok(ControllerState { motion, ..*self })
    }
}
