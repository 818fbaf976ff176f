//! Simulation and control stack for the LER light endoscope robot, a
//! three-joint endoscope holder that pivots the scope about its trocar.
//!
//! * [`kinematics`]: pivot geometry, forward/inverse kinematics, workspace.
//! * [`controller`]: velocity-limited tick controller with STEP, MANUAL and
//!   thermal-fault handling.
//! * [`command`]: grammar lookup, token dispatch, input arbitration.
//! * [`scene`]: cavity coverage, trocar clearance, camera visibility.
//! * [`service`]: sessions, telemetry, scripts, logs and replay.
//!
//! ```
//! use ler_core::kinematics::{forward_kinematics, JointLimits, JointVector};
//!
//! let limits = JointLimits::default();
//! let pose = forward_kinematics(&JointVector::from_degrees_mm(0.0, 0.0, 100.0, &limits));
//! assert_eq!(pose.tip.z, -100.0);
//! ```

pub mod command;
pub mod controller;
pub mod kinematics;
pub mod scene;
pub mod service;

// The guide's code blocks run as doctests so the book cannot drift from the
// code.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/kinematics.md")]
    mod kinematics {}
    #[doc = include_str!("../../../book/src/workspace.md")]
    mod workspace {}
    #[doc = include_str!("../../../book/src/controller.md")]
    mod controller {}
    #[doc = include_str!("../../../book/src/commands.md")]
    mod commands {}
    #[doc = include_str!("../../../book/src/scene.md")]
    mod scene {}
    #[doc = include_str!("../../../book/src/sessions.md")]
    mod sessions {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
