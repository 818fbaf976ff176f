//! Session orchestration: the fixed-timestep loop, wire messages, scenario
//! scripts and bit-exact record/replay.
//!
//! Logical ticks are 10 ms and telemetry goes out every second tick (50 Hz).
//! Everything downstream of input stamping is deterministic; in live mode the
//! only nondeterminism is which tick an arriving input is stamped with.

mod log;
mod script;
mod session;
pub mod wire;

pub use self::log::{
    input_record_line, replay, replay_text, run_scenario, Divergence, LogCorrupt, LogEntry,
    LogHeader, Recorder, ReplayError, SessionLog, Verdict, ARTIFACT_VERSION,
};
pub use self::script::{ScenarioScript, ScriptError, ScriptEvent, DEFAULT_TAIL_TICKS};
pub use self::session::{
    InputOutcome, Session, SessionConfig, SessionConfigError, DEFAULT_TELEMETRY_EVERY,
};
pub use self::wire::{Inbound, TelemetryFrame};
