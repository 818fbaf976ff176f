//! Session logs, scripted runs and replay verification.
//!
//! A log is a header JSON line followed by input and telemetry lines in the
//! order they occurred. The header carries the full configuration, grammar
//! included, so a log replays without any other file.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::command::InputSource;

use super::script::{ScenarioScript, ScriptError, ScriptEvent};
use super::session::{Session, SessionConfig};
use super::wire::telemetry_fields;

pub const ARTIFACT_VERSION: &str = concat!("ler-core ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogHeader {
    #[serde(rename = "type")]
    pub kind: String,
    pub version: String,
    pub ticks: u64,
    pub config: SessionConfig,
}

impl LogHeader {
    pub fn new(config: SessionConfig, ticks: u64) -> Self {
        LogHeader {
            kind: "header".into(),
            version: ARTIFACT_VERSION.into(),
            ticks,
            config,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InputRecord {
    #[serde(rename = "type")]
    kind: String,
    tick: u64,
    source: InputSource,
    line: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LogEntry {
    Input(ScriptEvent),
    /// Exact telemetry line text.
    Telemetry(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionLog {
    pub header: LogHeader,
    pub entries: Vec<LogEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("log corrupt at line {line}: {reason}")]
pub struct LogCorrupt {
    pub line: usize,
    pub reason: String,
}

pub fn input_record_line(e: &ScriptEvent) -> String {
    serde_json::to_string(&InputRecord {
        kind: "input".into(),
        tick: e.tick,
        source: e.source,
        line: e.line.clone(),
    })
    .expect("input records serialize")
}

impl SessionLog {
    pub fn header_line(&self) -> String {
        serde_json::to_string(&self.header).expect("headers serialize")
    }

    pub fn to_text(&self) -> String {
        let mut out = self.header_line();
        out.push('\n');
        for entry in &self.entries {
            match entry {
                LogEntry::Input(e) => out.push_str(&input_record_line(e)),
                LogEntry::Telemetry(line) => out.push_str(line),
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<SessionLog, LogCorrupt> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or(LogCorrupt {
            line: 1,
            reason: "empty log".into(),
        })?;
        let header: LogHeader = serde_json::from_str(first).map_err(|e| LogCorrupt {
            line: 1,
            reason: format!("bad header: {e}"),
        })?;
        if header.kind != "header" {
            return Err(LogCorrupt {
                line: 1,
                reason: "first line is not a header".into(),
            });
        }
        let mut entries = Vec::new();
        for (idx, line) in lines {
            let corrupt = |reason: String| LogCorrupt {
                line: idx + 1,
                reason,
            };
            let value: Value = serde_json::from_str(line).map_err(|e| corrupt(e.to_string()))?;
            match value.get("type").and_then(Value::as_str) {
                Some("input") => {
                    let r: InputRecord =
                        serde_json::from_value(value).map_err(|e| corrupt(e.to_string()))?;
                    entries.push(LogEntry::Input(ScriptEvent {
                        tick: r.tick,
                        source: r.source,
                        line: r.line,
                    }));
                }
                Some("telemetry") => entries.push(LogEntry::Telemetry(line.to_string())),
                other => return Err(corrupt(format!("unexpected record type {other:?}"))),
            }
        }
        Ok(SessionLog { header, entries })
    }

    pub fn inputs(&self) -> impl Iterator<Item = &ScriptEvent> {
        self.entries.iter().filter_map(|e| match e {
            LogEntry::Input(ev) => Some(ev),
            _ => None,
        })
    }

    pub fn telemetry(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().filter_map(|e| match e {
            LogEntry::Telemetry(l) => Some(l.as_str()),
            _ => None,
        })
    }

    /// The recorded inputs as a script under the recorded configuration.
    pub fn to_script(&self) -> Result<ScenarioScript, ScriptError> {
        ScenarioScript::new(
            self.header.config.clone(),
            self.header.ticks,
            self.inputs().cloned().collect(),
        )
    }
}

/// Incrementally builds a log while a session runs.
#[derive(Debug, Clone)]
pub struct Recorder {
    log: SessionLog,
}

impl Recorder {
    pub fn new(config: SessionConfig) -> Self {
        Recorder {
            log: SessionLog {
                header: LogHeader::new(config, 0),
                entries: Vec::new(),
            },
        }
    }

    pub fn input(&mut self, tick: u64, source: InputSource, line: &str) -> &LogEntry {
        self.log.entries.push(LogEntry::Input(ScriptEvent {
            tick,
            source,
            line: line.to_string(),
        }));
        self.log.entries.last().expect("just pushed")
    }

    pub fn telemetry(&mut self, line: String) -> &LogEntry {
        self.log.entries.push(LogEntry::Telemetry(line));
        self.log.entries.last().expect("just pushed")
    }

    /// Closes the log after `ticks` simulated ticks.
    pub fn finish(mut self, ticks: u64) -> SessionLog {
        self.log.header.ticks = ticks;
        self.log
    }
}

/// Runs a script on the logical clock as fast as possible.
pub fn run_scenario(script: &ScenarioScript) -> Result<SessionLog, ScriptError> {
    let mut session = Session::new(script.config.clone())?;
    let mut recorder = Recorder::new(script.config.clone());
    let mut events = script.events.iter().peekable();
    for _ in 0..script.ticks {
        while let Some(e) = events.next_if(|e| e.tick == session.tick()) {
            recorder.input(e.tick, e.source, &e.line);
            session.submit(e.source, &e.line);
        }
        if let Some(frame) = session.advance() {
            recorder.telemetry(frame.to_json_line());
        }
    }
    Ok(recorder.finish(script.ticks))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    /// Tick of the regenerated frame (or of the logged one when the
    /// regenerated run ended early).
    pub tick: u64,
    pub field: String,
    pub expected: String,
    pub actual: String,
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "divergence at tick {} in `{}`: log has {}, replay produced {}",
            self.tick, self.field, self.expected, self.actual
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Ok { frames: usize },
    Diverged(Divergence),
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error(transparent)]
    Corrupt(#[from] LogCorrupt),
    #[error("log header does not describe a runnable session: {0}")]
    Script(#[from] ScriptError),
}

fn first_field_difference(logged: &str, regenerated: &str) -> (String, String, String) {
    match (telemetry_fields(logged), telemetry_fields(regenerated)) {
        (Some(a), Some(b)) => {
            for (key, va) in &b {
                let found = a.get(key);
                if found != Some(va) {
                    let expected = found.map_or("<missing>".to_string(), Value::to_string);
                    return (key.clone(), expected, va.to_string());
                }
            }
            if let Some(key) = a.keys().find(|k| !b.contains_key(*k)) {
                return (key.clone(), a[key].to_string(), "<missing>".into());
            }
            // same values, different bytes
            (
                "<encoding>".into(),
                logged.to_string(),
                regenerated.to_string(),
            )
        }
        _ => ("<line>".into(), logged.to_string(), regenerated.to_string()),
    }
}

/// Re-runs a log's inputs and compares every telemetry line byte for byte.
pub fn replay(log: &SessionLog) -> Result<Verdict, ReplayError> {
    let regenerated = run_scenario(&log.to_script()?)?;
    let mut ours = regenerated.telemetry();
    let mut theirs = log.telemetry();
    let mut frames = 0;
    loop {
        match (theirs.next(), ours.next()) {
            (None, None) => return Ok(Verdict::Ok { frames }),
            (Some(logged), Some(fresh)) => {
                if logged != fresh {
                    let tick = telemetry_fields(fresh)
                        .and_then(|m| m.get("tick").and_then(Value::as_u64))
                        .unwrap_or_default();
                    let (field, expected, actual) = first_field_difference(logged, fresh);
                    return Ok(Verdict::Diverged(Divergence {
                        tick,
                        field,
                        expected,
                        actual,
                    }));
                }
            }
            (Some(logged), None) => {
                let tick = telemetry_fields(logged)
                    .and_then(|m| m.get("tick").and_then(Value::as_u64))
                    .unwrap_or_default();
                return Ok(Verdict::Diverged(Divergence {
                    tick,
                    field: "<frame>".into(),
                    expected: logged.to_string(),
                    actual: "<none>".into(),
                }));
            }
            (None, Some(fresh)) => {
                let tick = telemetry_fields(fresh)
                    .and_then(|m| m.get("tick").and_then(Value::as_u64))
                    .unwrap_or_default();
                return Ok(Verdict::Diverged(Divergence {
                    tick,
                    field: "<frame>".into(),
                    expected: "<none>".into(),
                    actual: fresh.to_string(),
                }));
            }
        }
        frames += 1;
    }
}

/// Convenience: parse then replay.
pub fn replay_text(text: &str) -> Result<Verdict, ReplayError> {
    replay(&SessionLog::parse(text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn script(text: &str) -> ScenarioScript {
        ScenarioScript::parse(text, None).unwrap()
    }

    #[test]
    fn empty_script_gives_idle_frames() {
        let log = run_scenario(&script("ticks: 100\n")).unwrap();
        let frames: Vec<_> = log.telemetry().collect();
        assert_eq!(frames.len(), 50);
        for (i, f) in frames.iter().enumerate() {
            let m = telemetry_fields(f).unwrap();
            assert_eq!(m["tick"], (2 * (i + 1)) as u64);
            assert_eq!(m["mode"], "IDLE");
            assert_eq!(m["pan_mdeg"], 0);
        }
    }

    #[test]
    fn log_text_round_trip() {
        let log = run_scenario(&script("ticks: 40\n0\tright\n10\tKEYPAD\tstop\n")).unwrap();
        let parsed = SessionLog::parse(&log.to_text()).unwrap();
        assert_eq!(parsed, log);
        assert_eq!(replay(&parsed).unwrap(), Verdict::Ok { frames: 20 });
    }

    #[test]
    fn edited_joint_diverges_at_that_tick() {
        let log = run_scenario(&script("ticks: 40\n0\tright\n")).unwrap();
        let text = log.to_text().replace(
            r#""tick":20,"pan_mdeg":15000"#,
            r#""tick":20,"pan_mdeg":15001"#,
        );
        match replay_text(&text).unwrap() {
            Verdict::Diverged(d) => {
                assert_eq!(d.tick, 20);
                assert_eq!(d.field, "pan_mdeg");
                assert_eq!(d.expected, "15001");
                assert_eq!(d.actual, "15000");
            }
            v => panic!("expected divergence, got {v:?}"),
        }
    }

    #[test]
    fn header_speed_change_diverges() {
        let log = run_scenario(&script("ticks: 40\n0\tright\n")).unwrap();
        let text = log.to_text().replacen(
            r#""pan_speed_mdeg_s":75000"#,
            r#""pan_speed_mdeg_s":70000"#,
            1,
        );
        match replay_text(&text).unwrap() {
            Verdict::Diverged(d) => {
                assert_eq!(d.tick, 2);
                assert_eq!(d.field, "pan_mdeg");
            }
            v => panic!("expected divergence, got {v:?}"),
        }
    }

    #[test]
    fn truncated_log_diverges() {
        let log = run_scenario(&script("ticks: 10\n")).unwrap();
        let text = log.to_text();
        let cut: Vec<_> = text.lines().take(3).collect();
        match replay_text(&cut.join("\n")).unwrap() {
            Verdict::Diverged(d) => {
                assert_eq!(d.tick, 6);
                assert_eq!(d.field, "<frame>");
            }
            v => panic!("expected divergence, got {v:?}"),
        }
    }

    #[test]
    fn corrupt_logs_are_reported() {
        assert!(matches!(replay_text(""), Err(ReplayError::Corrupt(_))));
        assert!(matches!(
            replay_text("not json"),
            Err(ReplayError::Corrupt(_))
        ));
        let log = run_scenario(&script("ticks: 4\n")).unwrap();
        let text = format!("{}{{\"type\":\"gossip\"}}\n", log.to_text());
        assert!(matches!(
            replay_text(&text),
            Err(ReplayError::Corrupt(LogCorrupt { line: 4, .. }))
        ));
    }
}
