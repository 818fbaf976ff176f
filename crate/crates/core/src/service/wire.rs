//! Newline-delimited JSON messages.
//!
//! Telemetry is rendered by hand rather than through serde so every number
//! has a fixed textual form: joints as integers, tip millimeters with exactly
//! three decimals, axis components with exactly six. Logs built from these
//! lines are byte-stable.

use std::fmt::Write as _;

use serde::Deserialize;
use serde_json::{json, Value};

use crate::command::InputSource;
use crate::controller::{ControllerState, FaultCause, Mode};
use crate::kinematics::{forward_kinematics, Axis, JointVector, Point3, Vec3};

/// One tick of simulator output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TelemetryFrame {
    pub tick: u64,
    pub joints: JointVector,
    pub tip: Point3,
    pub axis: Vec3,
    pub mode: Mode,
    pub fault: Option<FaultCause>,
    pub active: Option<Axis>,
}

impl TelemetryFrame {
    pub fn capture(tick: u64, state: &ControllerState) -> Self {
        let joints = state.joints();
        let pose = forward_kinematics(&joints);
        TelemetryFrame {
            tick,
            joints,
            tip: pose.tip,
            axis: pose.axis,
            mode: state.mode(),
            fault: state.fault_cause(),
            active: state.active().map(|r| r.axis),
        }
    }

    pub fn to_json_line(&self) -> String {
        let mut s = String::with_capacity(256);
        write!(
            s,
            r#"{{"type":"telemetry","tick":{},"pan_mdeg":{},"tilt_mdeg":{},"ins_um":{},"tip_mm":[{},{},{}],"axis":[{},{},{}],"mode":"{}","fault":{},"active":{}}}"#,
            self.tick,
            self.joints.pan_mdeg(),
            self.joints.tilt_mdeg(),
            self.joints.insertion_um(),
            fixed(self.tip.x, 3),
            fixed(self.tip.y, 3),
            fixed(self.tip.z, 3),
            fixed(self.axis.x, 6),
            fixed(self.axis.y, 6),
            fixed(self.axis.z, 6),
            self.mode,
            quoted_or_null(self.fault.map(FaultCause::as_str)),
            quoted_or_null(self.active.map(Axis::as_str)),
        )
        .expect("writing to a String cannot fail");
        s
    }
}

/// Fixed-decimal rendering with negative zero folded to zero.
pub fn fixed(value: f64, decimals: usize) -> String {
    let s = format!("{value:.decimals$}");
    if s.starts_with('-') && s[1..].bytes().all(|b| b == b'0' || b == b'.') {
        s[1..].to_string()
    } else {
        s
    }
}

fn quoted_or_null(v: Option<&str>) -> String {
    match v {
        Some(s) => format!("\"{s}\""),
        None => "null".to_string(),
    }
}

/// Client-to-server message.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Inbound {
    Input { source: InputSource, line: String },
}

impl Inbound {
    pub fn parse(text: &str) -> Result<Inbound, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }
}

pub fn input_line(source: InputSource, line: &str) -> String {
    json!({"type": "input", "source": source.as_str(), "line": line}).to_string()
}

pub fn error_line(code: &str, detail: &str) -> String {
    json!({"type": "error", "code": code, "detail": detail}).to_string()
}

/// Confirms which token the server parsed from an input.
pub fn echo_line(tick: u64, source: InputSource, line: &str, token: &str, status: &str) -> String {
    json!({
        "type": "echo",
        "tick": tick,
        "source": source.as_str(),
        "line": line,
        "token": token,
        "status": status,
    })
    .to_string()
}

/// Parses a telemetry line into a field map, for comparison and display.
pub fn telemetry_fields(line: &str) -> Option<serde_json::Map<String, Value>> {
    match serde_json::from_str::<Value>(line).ok()? {
        Value::Object(map) if map.get("type").and_then(Value::as_str) == Some("telemetry") => {
            Some(map)
        }
        _ => None,
    }
}
