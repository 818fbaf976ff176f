//! The simulation loop shared by scripted runs, replay and the live server.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::command::{
    Action, Arbiter, CommandToken, GrammarConfig, InputEvent, InputSource, UnknownPhrase,
    DEFAULT_DEBOUNCE_MS,
};
use crate::controller::{ConfigError, ControlError, ControllerConfig, ControllerState, MotionMode};

use super::wire::{echo_line, error_line, TelemetryFrame};

pub const DEFAULT_TELEMETRY_EVERY: u64 = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionConfigError {
    #[error(transparent)]
    Controller(#[from] ConfigError),
    #[error("telemetry interval must be at least one tick")]
    TelemetryInterval,
}

/// Complete configuration of a session; recorded verbatim in log headers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub controller: ControllerConfig,
    pub grammar: GrammarConfig,
    /// Ticks between telemetry frames.
    pub telemetry_every: u64,
    pub debounce_ms: u64,
    /// Recorded for reproducibility; the controller itself draws no randomness.
    pub seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            controller: ControllerConfig::default(),
            grammar: GrammarConfig::default(),
            telemetry_every: DEFAULT_TELEMETRY_EVERY,
            debounce_ms: DEFAULT_DEBOUNCE_MS,
            seed: 0,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), SessionConfigError> {
        self.controller.validate()?;
        if self.telemetry_every == 0 {
            return Err(SessionConfigError::TelemetryInterval);
        }
        Ok(())
    }
}

/// What happened to one submitted input line.
#[derive(Debug, Clone, PartialEq)]
pub enum InputOutcome {
    Applied(CommandToken),
    /// Dropped by the arbiter as a duplicate.
    Debounced(CommandToken),
    Unknown(UnknownPhrase),
    Rejected(CommandToken, ControlError),
}

impl InputOutcome {
    /// Reply message for the client that sent the input.
    pub fn reply_line(&self, tick: u64, source: InputSource, line: &str) -> String {
        match self {
            InputOutcome::Applied(t) => echo_line(tick, source, line, t.as_str(), "applied"),
            InputOutcome::Debounced(t) => echo_line(tick, source, line, t.as_str(), "debounced"),
            InputOutcome::Unknown(e) => error_line("UnknownPhrase", &e.0),
            InputOutcome::Rejected(_, e) => {
                let code = match e {
                    ControlError::CommandRejected(_) => "CommandRejected",
                    ControlError::NotInManualMode(_) => "NotInManualMode",
                    ControlError::FaultNotClearable { .. } => "FaultNotClearable",
                };
                error_line(code, &e.to_string())
            }
        }
    }
}

/// A running simulation on the logical clock.
///
/// Inputs submitted between two [`Session::advance`] calls are stamped with
/// the current tick and take effect before the next controller step.
#[derive(Debug, Clone)]
pub struct Session {
    config: SessionConfig,
    state: ControllerState,
    arbiter: Arbiter,
    motion_mode: MotionMode,
    tick: u64,
}

impl Session {
    pub fn new(config: SessionConfig) -> Result<Self, SessionConfigError> {
        config.validate()?;
        Ok(Session {
            arbiter: Arbiter::new(config.debounce_ms),
            config,
            state: ControllerState::default(),
            motion_mode: MotionMode::Continuous,
            tick: 0,
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn state(&self) -> &ControllerState {
        &self.state
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn motion_mode(&self) -> MotionMode {
        self.motion_mode
    }

    /// Runs one input line through parse, arbitration and dispatch.
    pub fn submit(&mut self, source: InputSource, line: &str) -> InputOutcome {
        let token = match self.config.grammar.parse(line) {
            Ok(t) => t,
            Err(e) => return InputOutcome::Unknown(e),
        };
        let event = InputEvent {
            at_ms: self.tick * self.config.controller.dt_ms as u64,
            source,
            token,
        };
        if self.arbiter.push(event).is_none() {
            return InputOutcome::Debounced(token);
        }
        let cfg = &self.config.controller;
        let result = match self.config.grammar.dispatch(token, self.motion_mode) {
            Action::Move(req) => self.state.command(req, cfg),
            Action::Stop => Ok(self.state.stop()),
            Action::SetMotionMode(mode) => {
                self.motion_mode = mode;
                Ok(self.state)
            }
            Action::Manual(on) => Ok(self.state.set_manual(on)),
            Action::ResetFault => self.state.reset_fault(cfg),
        };
        match result {
            Ok(next) => {
                self.state = next;
                InputOutcome::Applied(token)
            }
            Err(e) => InputOutcome::Rejected(token, e),
        }
    }

    /// Advances one tick; returns a frame when the tick lands on the
    /// telemetry interval.
    pub fn advance(&mut self) -> Option<TelemetryFrame> {
        self.state = self.state.tick(&self.config.controller);
        self.tick += 1;
        self.tick.is_multiple_of(self.config.telemetry_every).then(|| self.frame())
    }

    pub fn frame(&self) -> TelemetryFrame {
        TelemetryFrame::capture(self.tick, &self.state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::Mode;

    #[test]
    fn frames_on_interval() {
        let mut s = Session::new(SessionConfig::default()).unwrap();
        let frames: Vec<_> = (0..100).filter_map(|_| s.advance()).collect();
        assert_eq!(frames.len(), 50);
        assert_eq!(frames[0].tick, 2);
        assert_eq!(frames[49].tick, 100);
    }

    #[test]
    fn step_mode_switch_applies_to_later_motion() {
        let mut s = Session::new(SessionConfig::default()).unwrap();
        assert_eq!(
            s.submit(InputSource::Voice, "step"),
            InputOutcome::Applied(CommandToken::StepMode)
        );
        s.submit(InputSource::Voice, "right");
        assert_eq!(s.state().mode(), Mode::Stepping);
        for _ in 0..10 {
            s.advance();
        }
        assert_eq!(s.state().joints().pan_mdeg(), 2_000);
    }

    #[test]
    fn outcomes_become_replies() {
        let mut s = Session::new(SessionConfig::default()).unwrap();
        let out = s.submit(InputSource::Voice, "cauterize");
        assert_eq!(
            out.reply_line(0, InputSource::Voice, "cauterize"),
            r#"{"type":"error","code":"UnknownPhrase","detail":"cauterize"}"#
        );
        s.submit(InputSource::Voice, "manual");
        let out = s.submit(InputSource::Keypad, "left");
        assert!(matches!(
            out,
            InputOutcome::Rejected(
                CommandToken::Left,
                ControlError::CommandRejected(Mode::Manual)
            )
        ));
        assert!(out
            .reply_line(0, InputSource::Keypad, "left")
            .contains("CommandRejected"));
    }

    #[test]
    fn duplicate_inputs_debounce() {
        let mut s = Session::new(SessionConfig::default()).unwrap();
        assert_eq!(
            s.submit(InputSource::Keypad, "in"),
            InputOutcome::Applied(CommandToken::In)
        );
        for _ in 0..8 {
            s.advance();
        }
        assert_eq!(
            s.submit(InputSource::Voice, "zoom in"),
            InputOutcome::Debounced(CommandToken::In)
        );
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = SessionConfig {
            telemetry_every: 0,
            ..SessionConfig::default()
        };
        assert!(Session::new(cfg).is_err());
    }
}
