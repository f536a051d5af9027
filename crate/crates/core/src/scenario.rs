//! Synthetic start-to-goal navigation session with one obstacle-induced
//! replan.
//!
//! The straight plan runs `start -> 40% -> 60% -> goal` along the segment;
//! the detour plan swaps in `start -> 40% -> apex -> 60% -> goal`. With the
//! defaults this is a 10 m corridor and a 4 + 2*sqrt(5) + 4 m detour.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::path_monitor::{path_length, MonitorConfig};
use crate::session::{FrameRecord, LogLevel, LogRecord, PlanSnapshot, Point, SessionEvent};

pub const DEFAULT_CAPTION_HINT: &str =
    "a person's arm with blue and white stripes blocking the corridor";

/// Seconds between the replan and the final "goal reached" log.
pub const GOAL_DELAY: f64 = 3.0;

const NAV_NODE: &str = "bt_navigator";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub start: Point,
    pub goal: Point,
    pub obstacle_time: f64,
    pub detour_apex: Point,
    pub frame_period: f64,
    pub caption_hint: String,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            start: Point::new(0.0, 0.0),
            goal: Point::new(10.0, 0.0),
            obstacle_time: 2.0,
            detour_apex: Point::new(5.0, 2.0),
            frame_period: 1.0,
            caption_hint: DEFAULT_CAPTION_HINT.to_string(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

fn lerp(a: Point, b: Point, f: f64) -> Point {
    Point::new(a.x + (b.x - a.x) * f, a.y + (b.y - a.y) * f)
}

impl ScenarioConfig {
    pub fn straight_plan(&self, t: f64) -> PlanSnapshot {
        PlanSnapshot::new(
            t,
            [
                self.start,
                lerp(self.start, self.goal, 0.4),
                lerp(self.start, self.goal, 0.6),
                self.goal,
            ],
        )
    }

    pub fn detour_plan(&self, t: f64) -> PlanSnapshot {
        PlanSnapshot::new(
            t,
            [
                self.start,
                lerp(self.start, self.goal, 0.4),
                self.detour_apex,
                lerp(self.start, self.goal, 0.6),
                self.goal,
            ],
        )
    }

    fn validate(&self, thresholds: &MonitorConfig) -> Result<(), ScenarioError> {
        let invalid = |reason: String| Err(ScenarioError::InvalidScenario(reason));
        let finite = |p: Point| p.x.is_finite() && p.y.is_finite();
        if !finite(self.start) || !finite(self.goal) || !finite(self.detour_apex) {
            return invalid("coordinates must be finite".into());
        }
        if self.start == self.goal {
            return invalid("start and goal coincide".into());
        }
        if !(self.frame_period.is_finite() && self.frame_period > 0.0) {
            return invalid("frame_period must be positive".into());
        }
        if !(self.obstacle_time.is_finite() && self.obstacle_time >= 0.0) {
            return invalid("obstacle_time must be non-negative".into());
        }
        if self.caption_hint.is_empty() {
            return invalid("caption_hint must not be empty".into());
        }
        let straight = path_length(&self.straight_plan(0.0));
        let detour = path_length(&self.detour_plan(0.0));
        if !thresholds.is_significant_increase(straight, detour) {
            return invalid(format!(
                "detour length {detour:.4} m is not a detectable increase over {straight:.4} m \
                 (needs > {:.2}x and >= {} m more)",
                thresholds.ratio_threshold, thresholds.min_abs_increase
            ));
        }
        Ok(())
    }
}

/// Generates the session against the default detection thresholds.
pub fn generate(cfg: &ScenarioConfig) -> Result<Vec<SessionEvent>, ScenarioError> {
    generate_with_thresholds(cfg, &MonitorConfig::default())
}

/// Generates the session, refusing geometries the given thresholds would not
/// flag as a deviation.
///
/// Frames are laid on a grid anchored at `obstacle_time`, so a frame always
/// coincides with the replan. At equal timestamps the frame precedes the plan.
pub fn generate_with_thresholds(
    cfg: &ScenarioConfig,
    thresholds: &MonitorConfig,
) -> Result<Vec<SessionEvent>, ScenarioError> {
    cfg.validate(thresholds)?;

    let end = cfg.obstacle_time + GOAL_DELAY;
    let first_step = -(cfg.obstacle_time / cfg.frame_period).floor() as i64;
    let frame_times: Vec<f64> = (first_step..)
        .map(|j| cfg.obstacle_time + j as f64 * cfg.frame_period)
        .map(|t| t.max(0.0))
        .take_while(|&t| t <= end)
        .collect();

    let mut events: Vec<SessionEvent> = vec![
        LogRecord::new(0.0, LogLevel::Info, NAV_NODE, "navigation started from S to G").into(),
        cfg.straight_plan(0.0).into(),
    ];
    let mut replanned = false;
    for t in frame_times {
        if !replanned && t > cfg.obstacle_time {
            events.push(cfg.detour_plan(cfg.obstacle_time).into());
            replanned = true;
        }
        events.push(FrameRecord::with_hint(t, cfg.caption_hint.clone()).into());
        if !replanned && t == cfg.obstacle_time {
            events.push(cfg.detour_plan(cfg.obstacle_time).into());
            replanned = true;
        }
    }
    if !replanned {
        events.push(cfg.detour_plan(cfg.obstacle_time).into());
    }
    events.push(LogRecord::new(end, LogLevel::Info, NAV_NODE, "goal reached").into());
    Ok(events)
}
