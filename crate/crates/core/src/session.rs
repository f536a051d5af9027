//! Recorded-session data model and its JSON Lines file format.
//!
//! A session file carries one event per line. Every line is a JSON object with
//! a `kind` discriminator (`"log"`, `"plan"` or `"image"`) followed by the
//! fields of the matching record type:
//!
//! ```text
//! {"kind":"log","t":0.0,"level":"INFO","node":"nav","msg":"goal accepted"}
//! {"kind":"plan","t":0.0,"poses":[[0.0,0.0],[10.0,0.0]]}
//! {"kind":"image","t":1.0,"image_ref":"frames/0001.png"}
//! ```
//!
//! Unknown keys are rejected. Timestamps are seconds since session start and
//! must be non-decreasing (a step back of at most [`TIME_EPSILON`] is accepted).

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

/// Slack allowed when comparing timestamps for ordering.
pub const TIME_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum LogLevel {
    Debug,
    Info,
    Warn,
    Error,
}

impl LogLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            LogLevel::Debug => "DEBUG",
            LogLevel::Info => "INFO",
            LogLevel::Warn => "WARN",
            LogLevel::Error => "ERROR",
        }
    }
}

impl fmt::Display for LogLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for LogLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "DEBUG" => Ok(LogLevel::Debug),
            "INFO" => Ok(LogLevel::Info),
            "WARN" => Ok(LogLevel::Warn),
            "ERROR" => Ok(LogLevel::Error),
            other => Err(format!("unknown log level {other:?}")),
        }
    }
}

/// One line of the robot's textual log stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogRecord {
    pub t: f64,
    pub level: LogLevel,
    pub node: String,
    pub msg: String,
}

impl LogRecord {
    pub fn new(t: f64, level: LogLevel, node: impl Into<String>, msg: impl Into<String>) -> Self {
        Self {
            t,
            level,
            node: node.into(),
            msg: msg.into(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        check_time(self.t)?;
        if self.node.is_empty() {
            return Err("node must not be empty".into());
        }
        if self.msg.is_empty() {
            return Err("msg must not be empty".into());
        }
        Ok(())
    }
}

/// A 2D position in meters. Serialized as a two-element array `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (other.x - self.x).hypot(other.y - self.y)
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Self { x, y }
    }
}

/// A planned path as published by the navigation stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSnapshot {
    pub t: f64,
    pub poses: Vec<Point>,
}

impl PlanSnapshot {
    pub fn new(t: f64, poses: impl IntoIterator<Item = Point>) -> Self {
        Self {
            t,
            poses: poses.into_iter().collect(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        check_time(self.t)?;
        if self.poses.is_empty() {
            return Err("poses must not be empty".into());
        }
        if let Some(i) = self
            .poses
            .iter()
            .position(|p| !p.x.is_finite() || !p.y.is_finite())
        {
            return Err(format!("pose {i} has a non-finite coordinate"));
        }
        Ok(())
    }
}

/// A camera frame reference. Frames are opaque; only the path is carried.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRecord {
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
    /// Only consulted by the fake caption backend.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption_hint: Option<String>,
}

impl FrameRecord {
    pub fn with_hint(t: f64, hint: impl Into<String>) -> Self {
        Self {
            t,
            image_ref: None,
            caption_hint: Some(hint.into()),
        }
    }

    pub fn with_image(t: f64, image_ref: impl Into<String>) -> Self {
        Self {
            t,
            image_ref: Some(image_ref.into()),
            caption_hint: None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        check_time(self.t)?;
        if self.image_ref.is_none() && self.caption_hint.is_none() {
            return Err("frame needs image_ref or caption_hint".into());
        }
        if self.image_ref.as_deref() == Some("") {
            return Err("image_ref must not be empty".into());
        }
        if self.caption_hint.as_deref() == Some("") {
            return Err("caption_hint must not be empty".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum SessionEvent {
    #[serde(rename = "log")]
    Log(LogRecord),
    #[serde(rename = "plan")]
    Plan(PlanSnapshot),
    #[serde(rename = "image")]
    Frame(FrameRecord),
}

impl SessionEvent {
    pub fn t(&self) -> f64 {
        match self {
            SessionEvent::Log(r) => r.t,
            SessionEvent::Plan(p) => p.t,
            SessionEvent::Frame(f) => f.t,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            SessionEvent::Log(_) => "log",
            SessionEvent::Plan(_) => "plan",
            SessionEvent::Frame(_) => "image",
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            SessionEvent::Log(r) => r.validate(),
            SessionEvent::Plan(p) => p.validate(),
            SessionEvent::Frame(f) => f.validate(),
        }
    }
}

impl From<LogRecord> for SessionEvent {
    fn from(r: LogRecord) -> Self {
        SessionEvent::Log(r)
    }
}

impl From<PlanSnapshot> for SessionEvent {
    fn from(p: PlanSnapshot) -> Self {
        SessionEvent::Plan(p)
    }
}

impl From<FrameRecord> for SessionEvent {
    fn from(f: FrameRecord) -> Self {
        SessionEvent::Frame(f)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("line {line}: malformed event: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: timestamp goes backwards")]
    NonMonotonicTimestamp { line: usize },
    #[error("line {line}: unknown event kind {kind:?}")]
    UnknownKind { line: usize, kind: String },
    #[error("event {index}: {reason}")]
    InvariantViolation { index: usize, reason: String },
}

fn check_time(t: f64) -> Result<(), String> {
    if !t.is_finite() || t < 0.0 {
        return Err(format!("t must be finite and non-negative, got {t}"));
    }
    Ok(())
}

fn parse_line(line: usize, text: &str) -> Result<SessionEvent, SessionError> {
    let malformed = |reason: String| SessionError::MalformedLine { line, reason };

    let mut obj: Map<String, Value> = match serde_json::from_str(text) {
        Ok(Value::Object(obj)) => obj,
        Ok(_) => return Err(malformed("expected a JSON object".into())),
        Err(e) => return Err(malformed(e.to_string())),
    };
    let kind = match obj.remove("kind") {
        Some(Value::String(kind)) => kind,
        Some(_) => return Err(malformed("\"kind\" must be a string".into())),
        None => return Err(malformed("missing \"kind\"".into())),
    };
    let body = Value::Object(obj);
    let event = match kind.as_str() {
        "log" => serde_json::from_value(body).map(SessionEvent::Log),
        "plan" => serde_json::from_value(body).map(SessionEvent::Plan),
        "image" => serde_json::from_value(body).map(SessionEvent::Frame),
        _ => return Err(SessionError::UnknownKind { line, kind }),
    }
    .map_err(|e| malformed(e.to_string()))?;
    event.validate().map_err(malformed)?;
    Ok(event)
}

/// Parses a JSON Lines session. Line numbers in errors are 1-based.
pub fn parse_session(input: &str) -> Result<Vec<SessionEvent>, SessionError> {
    let mut events = Vec::new();
    let mut last_t: Option<f64> = None;
    for (idx, text) in input.lines().enumerate() {
        let line = idx + 1;
        if text.trim().is_empty() {
            return Err(SessionError::MalformedLine {
                line,
                reason: "empty line".into(),
            });
        }
        let event = parse_line(line, text)?;
        let t = event.t();
        if matches!(last_t, Some(prev) if t < prev - TIME_EPSILON) {
            return Err(SessionError::NonMonotonicTimestamp { line });
        }
        last_t = Some(t);
        events.push(event);
    }
    Ok(events)
}

/// Parses a session from raw bytes, rejecting invalid UTF-8 as line 1.
pub fn parse_session_bytes(bytes: &[u8]) -> Result<Vec<SessionEvent>, SessionError> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        let line = bytes[..e.valid_up_to()]
            .iter()
            .filter(|&&b| b == b'\n')
            .count()
            + 1;
        SessionError::MalformedLine {
            line,
            reason: "invalid UTF-8".into(),
        }
    })?;
    parse_session(text)
}

/// Serializes events as JSON Lines, one LF-terminated line per event.
pub fn write_session(events: &[SessionEvent]) -> Result<String, SessionError> {
    let mut out = String::new();
    let mut last_t: Option<f64> = None;
    for (index, event) in events.iter().enumerate() {
        event
            .validate()
            .map_err(|reason| SessionError::InvariantViolation { index, reason })?;
        let t = event.t();
        if matches!(last_t, Some(prev) if t < prev - TIME_EPSILON) {
            return Err(SessionError::InvariantViolation {
                index,
                reason: "timestamp goes backwards".into(),
            });
        }
        last_t = Some(t);
        let line = serde_json::to_string(event).map_err(|e| SessionError::InvariantViolation {
            index,
            reason: e.to_string(),
        })?;
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}
