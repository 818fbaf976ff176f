//! Scenario script files.
//!
//! ```text
//! # header: `key: value` lines
//! grammar: default
//! ticks: 600
//! pan_speed_mdeg_s: 75000
//!
//! # rows: tick<TAB>line, or tick<TAB>SOURCE<TAB>line
//! 0<TAB>right
//! 480<TAB>PEDAL<TAB>stop
//! ```
//!
//! Header keys: `grammar` and `limits` (file paths relative to the script,
//! or `default`), any [`JointLimits`](crate::kinematics::JointLimits) field,
//! `angular_step_mdeg`, `insertion_step_um`, `dt_ms`, `telemetry_every`,
//! `debounce_ms`, `seed` and `ticks`. Rows without a source are VOICE.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::command::{GrammarConfig, GrammarError, InputSource};
use crate::kinematics::JointLimits;

use super::session::{SessionConfig, SessionConfigError};

/// Settle time appended after the last event when `ticks` is not given.
pub const DEFAULT_TAIL_TICKS: u64 = 100;

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("line {line}: tick {tick} is earlier than the previous row's tick {previous}")]
    TickOrder {
        line: usize,
        tick: u64,
        previous: u64,
    },
    #[error("line {line}: event at tick {tick} is past the end of the run ({ticks} ticks)")]
    PastEnd { line: usize, tick: u64, ticks: u64 },
    #[error("grammar {path}: {source}")]
    Grammar {
        path: PathBuf,
        #[source]
        source: GrammarError,
    },
    #[error("limits {path}: {reason}")]
    Limits { path: PathBuf, reason: String },
    #[error("invalid configuration: {0}")]
    Config(#[from] SessionConfigError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptEvent {
    pub tick: u64,
    pub source: InputSource,
    pub line: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioScript {
    pub config: SessionConfig,
    pub ticks: u64,
    pub events: Vec<ScriptEvent>,
}

fn read(path: &Path) -> Result<String, ScriptError> {
    std::fs::read_to_string(path).map_err(|source| ScriptError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_int<T: std::str::FromStr>(value: &str, line: usize) -> Result<T, ScriptError> {
    value.parse().map_err(|_| ScriptError::Syntax {
        line,
        reason: format!("expected an integer, got `{value}`"),
    })
}

impl ScenarioScript {
    pub fn new(
        config: SessionConfig,
        ticks: u64,
        events: Vec<ScriptEvent>,
    ) -> Result<Self, ScriptError> {
        config.validate()?;
        let mut previous = 0;
        for (i, e) in events.iter().enumerate() {
            if e.tick < previous {
                return Err(ScriptError::TickOrder {
                    line: i + 1,
                    tick: e.tick,
                    previous,
                });
            }
            if e.tick >= ticks {
                return Err(ScriptError::PastEnd {
                    line: i + 1,
                    tick: e.tick,
                    ticks,
                });
            }
            previous = e.tick;
        }
        Ok(ScenarioScript {
            config,
            ticks,
            events,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ScriptError> {
        let text = read(path)?;
        ScenarioScript::parse(&text, path.parent())
    }

    /// Parses script text; header file references resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: Option<&Path>) -> Result<Self, ScriptError> {
        let resolve = |p: &str| match base_dir {
            Some(dir) => dir.join(p),
            None => PathBuf::from(p),
        };
        let mut config = SessionConfig::default();
        let mut ticks: Option<u64> = None;
        let mut events = Vec::new();
        // Overrides apply after a limits file, whatever the header order.
        let mut overrides: Vec<(usize, String, String)> = Vec::new();
        let mut previous = 0u64;

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim_end_matches('\r');
            if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
                continue;
            }
            if trimmed.starts_with(|c: char| c.is_ascii_digit()) {
                let mut parts = trimmed.splitn(3, '\t');
                let tick: u64 = parse_int(parts.next().unwrap_or_default().trim(), line)?;
                let (source, input) = match (parts.next(), parts.next()) {
                    (Some(input), None) => (InputSource::Voice, input.to_string()),
                    (Some(src), Some(rest)) => match src.parse::<InputSource>() {
                        Ok(s) => (s, rest.to_string()),
                        Err(_) => (InputSource::Voice, format!("{src}\t{rest}")),
                    },
                    (None, _) => {
                        return Err(ScriptError::Syntax {
                            line,
                            reason: "expected `tick<TAB>line`".into(),
                        })
                    }
                };
                if tick < previous {
                    return Err(ScriptError::TickOrder {
                        line,
                        tick,
                        previous,
                    });
                }
                previous = tick;
                events.push((
                    line,
                    ScriptEvent {
                        tick,
                        source,
                        line: input,
                    },
                ));
                continue;
            }
            if !events.is_empty() {
                return Err(ScriptError::Syntax {
                    line,
                    reason: "header lines must come before event rows".into(),
                });
            }
            let (key, value) = trimmed.split_once(':').ok_or_else(|| ScriptError::Syntax {
                line,
                reason: "expected `key: value`".into(),
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "grammar" if value == "default" => config.grammar = GrammarConfig::default(),
                "grammar" => {
                    let path = resolve(value);
                    config.grammar = GrammarConfig::parse_file(&read(&path)?)
                        .map_err(|source| ScriptError::Grammar { path, source })?;
                }
                "limits" if value == "default" => config.controller.limits = JointLimits::default(),
                "limits" => {
                    let path = resolve(value);
                    config.controller.limits =
                        serde_json::from_str(&read(&path)?).map_err(|e| ScriptError::Limits {
                            path,
                            reason: e.to_string(),
                        })?;
                }
                "ticks" => ticks = Some(parse_int(value, line)?),
                _ => overrides.push((line, key.to_string(), value.to_string())),
            }
        }

        for (line, key, value) in overrides {
            let c = &mut config;
            match key.as_str() {
                "tilt_max_mdeg" => c.controller.limits.tilt_max_mdeg = parse_int(&value, line)?,
                "insertion_max_um" => {
                    c.controller.limits.insertion_max_um = parse_int(&value, line)?
                }
                "pan_speed_mdeg_s" => {
                    c.controller.limits.pan_speed_mdeg_s = parse_int(&value, line)?
                }
                "tilt_speed_mdeg_s" => {
                    c.controller.limits.tilt_speed_mdeg_s = parse_int(&value, line)?
                }
                "insertion_speed_um_s" => {
                    c.controller.limits.insertion_speed_um_s = parse_int(&value, line)?
                }
                "angular_step_mdeg" => {
                    c.controller.steps.angular_step_mdeg = parse_int(&value, line)?
                }
                "insertion_step_um" => {
                    c.controller.steps.insertion_step_um = parse_int(&value, line)?
                }
                "dt_ms" => c.controller.dt_ms = parse_int(&value, line)?,
                "telemetry_every" => c.telemetry_every = parse_int(&value, line)?,
                "debounce_ms" => c.debounce_ms = parse_int(&value, line)?,
                "seed" => c.seed = parse_int(&value, line)?,
                other => {
                    return Err(ScriptError::Syntax {
                        line,
                        reason: format!("unknown header key `{other}`"),
                    })
                }
            }
        }

        let ticks =
            ticks.unwrap_or_else(|| events.last().map_or(0, |(_, e)| e.tick) + DEFAULT_TAIL_TICKS);
        if let Some((line, e)) = events.iter().find(|(_, e)| e.tick >= ticks) {
            return Err(ScriptError::PastEnd {
                line: *line,
                tick: e.tick,
                ticks,
            });
        }
        config.validate()?;
        Ok(ScenarioScript {
            config,
            ticks,
            events: events.into_iter().map(|(_, e)| e).collect(),
        })
    }

    /// Renders a self-contained script. Only the controller settings that the
    /// header format can express are written; the grammar must be the
    /// default or supplied separately.
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let l = &c.controller.limits;
        let mut out = String::new();
        let header = [
            ("tilt_max_mdeg", l.tilt_max_mdeg),
            ("insertion_max_um", l.insertion_max_um),
            ("pan_speed_mdeg_s", l.pan_speed_mdeg_s),
            ("tilt_speed_mdeg_s", l.tilt_speed_mdeg_s),
            ("insertion_speed_um_s", l.insertion_speed_um_s),
            ("angular_step_mdeg", c.controller.steps.angular_step_mdeg),
            ("insertion_step_um", c.controller.steps.insertion_step_um),
            ("dt_ms", c.controller.dt_ms),
        ];
        for (k, v) in header {
            out.push_str(&format!("{k}: {v}\n"));
        }
        out.push_str(&format!(
            "telemetry_every: {}\ndebounce_ms: {}\nseed: {}\nticks: {}\n",
            c.telemetry_every, c.debounce_ms, c.seed, self.ticks
        ));
        for e in &self.events {
            out.push_str(&format!("{}\t{}\t{}\n", e.tick, e.source.as_str(), e.line));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_header_and_rows() {
        let text =
            "# demo\nticks: 600\npan_speed_mdeg_s: 50000\nseed: 7\n\n0\tright\n480\tPEDAL\tstop\n";
        let s = ScenarioScript::parse(text, None).unwrap();
        assert_eq!(s.ticks, 600);
        assert_eq!(s.config.controller.limits.pan_speed_mdeg_s, 50_000);
        assert_eq!(s.config.seed, 7);
        assert_eq!(
            s.events,
            vec![
                ScriptEvent {
                    tick: 0,
                    source: InputSource::Voice,
                    line: "right".into()
                },
                ScriptEvent {
                    tick: 480,
                    source: InputSource::Pedal,
                    line: "stop".into()
                },
            ]
        );
    }

    #[test]
    fn default_length_follows_last_event() {
        let s = ScenarioScript::parse("5\tleft\n", None).unwrap();
        assert_eq!(s.ticks, 105);
        let s = ScenarioScript::parse("", None).unwrap();
        assert_eq!(s.ticks, DEFAULT_TAIL_TICKS);
    }

    #[test]
    fn rejects_bad_scripts() {
        assert!(matches!(
            ScenarioScript::parse("10\tleft\n5\tright\n", None),
            Err(ScriptError::TickOrder { line: 2, .. })
        ));
        assert!(matches!(
            ScenarioScript::parse("ticks: 10\n10\tleft\n", None),
            Err(ScriptError::PastEnd { .. })
        ));
        assert!(matches!(
            ScenarioScript::parse("grammar: /no/such/file.grammar\n", None),
            Err(ScriptError::Io { .. })
        ));
        assert!(matches!(
            ScenarioScript::parse("colour: red\n", None),
            Err(ScriptError::Syntax { .. })
        ));
        assert!(matches!(
            ScenarioScript::parse("pan_speed_mdeg_s: 75001\n", None),
            Err(ScriptError::Config(_))
        ));
        assert!(matches!(
            ScenarioScript::parse("0\tleft\nseed: 3\n", None),
            Err(ScriptError::Syntax { line: 2, .. })
        ));
    }

    #[test]
    fn loads_relative_files() {
        let dir = tempfile::tempdir().unwrap();
        let grammar = crate::command::DEFAULT_GRAMMAR.replace("pedal = STOP", "enough = STOP");
        std::fs::write(dir.path().join("g.grammar"), grammar).unwrap();
        std::fs::write(
            dir.path().join("limits.json"),
            r#"{"insertion_max_um": 150000}"#,
        )
        .unwrap();
        std::fs::write(
            dir.path().join("s.script"),
            "grammar: g.grammar\nlimits: limits.json\ntilt_max_mdeg: 70000\n0\tenough\n",
        )
        .unwrap();
        let s = ScenarioScript::load(&dir.path().join("s.script")).unwrap();
        assert_eq!(s.config.controller.limits.insertion_max_um, 150_000);
        assert_eq!(s.config.controller.limits.tilt_max_mdeg, 70_000);
        assert!(s.config.grammar.parse("enough").is_ok());
    }

    #[test]
    fn text_round_trip() {
        let s = ScenarioScript::parse("ticks: 50\nseed: 4\n0\tKEYPAD\tin\n3\tup\n", None).unwrap();
        assert_eq!(ScenarioScript::parse(&s.to_text(), None).unwrap(), s);
    }
}
