//! Replanning detection over the stream of planned paths.
//!
//! The monitored scalar is the length of the remaining planned path. The
//! monitor keeps a baseline equal to the shortest length seen since the last
//! event; a new plan raises a [`DeviationEvent`] when it is both relatively
//! and absolutely longer than that baseline.

use thiserror::Error;

use crate::session::{FrameRecord, PlanSnapshot, TIME_EPSILON};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorConfig {
    /// Minimum `new / baseline` ratio, exclusive.
    pub ratio_threshold: f64,
    /// Minimum `new - baseline` increase in meters, inclusive.
    pub min_abs_increase: f64,
    /// Maximum distance in seconds between an event and its camera frame.
    pub sync_tolerance: f64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            ratio_threshold: 1.2,
            min_abs_increase: 0.25,
            sync_tolerance: 0.5,
        }
    }
}

impl MonitorConfig {
    pub fn validate(&self) -> Result<(), MonitorError> {
        let bad = |reason: &str| Err(MonitorError::InvalidConfig(reason.to_string()));
        if !(self.ratio_threshold.is_finite() && self.ratio_threshold > 1.0) {
            return bad("ratio_threshold must be finite and > 1");
        }
        if !(self.min_abs_increase.is_finite() && self.min_abs_increase >= 0.0) {
            return bad("min_abs_increase must be finite and >= 0");
        }
        if !(self.sync_tolerance.is_finite() && self.sync_tolerance > 0.0) {
            return bad("sync_tolerance must be finite and > 0");
        }
        Ok(())
    }

    /// The deviation rule applied to a single (baseline, candidate) pair.
    pub fn is_significant_increase(&self, baseline: f64, new_length: f64) -> bool {
        new_length > self.ratio_threshold * baseline
            && new_length - baseline >= self.min_abs_increase
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationEvent {
    /// Timestamp of the plan that triggered the event.
    pub t: f64,
    pub old_length: f64,
    pub new_length: f64,
    pub frame: Option<FrameRecord>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MonitorError {
    #[error("plan at t={t} arrived after a plan at t={last}")]
    OutOfOrderPlan { t: f64, last: f64 },
    #[error("no camera frame within tolerance of t={event_t}")]
    NoFrameInTolerance { event_t: f64 },
    #[error("invalid monitor configuration: {0}")]
    InvalidConfig(String),
}

/// Sum of Euclidean segment lengths; zero for a single pose.
pub fn path_length(plan: &PlanSnapshot) -> f64 {
    plan.poses
        .windows(2)
        .map(|pair| pair[0].distance(pair[1]))
        .sum()
}

/// Picks the frame closest in time to `event_t`, preferring the earlier one
/// on an exact tie. `frames` must be sorted by `t`.
pub fn sync_frame(
    event_t: f64,
    frames: &[FrameRecord],
    tolerance: f64,
) -> Result<&FrameRecord, MonitorError> {
    let none = MonitorError::NoFrameInTolerance { event_t };
    // First frame at or after the event.
    let after = frames.partition_point(|f| f.t < event_t);
    let before = after.checked_sub(1).map(|i| {
        // Earliest frame sharing the timestamp of the last frame before the event.
        let t = frames[i].t;
        frames[..i].partition_point(|f| f.t < t)
    });

    let best = match (before, frames.get(after)) {
        (Some(b), Some(a)) => {
            if event_t - frames[b].t <= a.t - event_t {
                b
            } else {
                after
            }
        }
        (Some(b), None) => b,
        (None, Some(_)) => after,
        (None, None) => return Err(none),
    };
    let frame = &frames[best];
    if (frame.t - event_t).abs() <= tolerance {
        Ok(frame)
    } else {
        Err(none)
    }
}

/// Streaming deviation detector. One instance follows one plan stream.
#[derive(Debug, Clone, Default)]
pub struct PathMonitor {
    baseline: Option<f64>,
    last_t: Option<f64>,
}

impl PathMonitor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn baseline(&self) -> Option<f64> {
        self.baseline
    }

    /// Feeds the next plan. `frames` are the camera frames available for
    /// pairing; only those within `cfg.sync_tolerance` of the plan are used.
    pub fn observe_plan(
        &mut self,
        plan: &PlanSnapshot,
        frames: &[FrameRecord],
        cfg: &MonitorConfig,
    ) -> Result<Option<DeviationEvent>, MonitorError> {
        if let Some(last) = self.last_t {
            if plan.t < last - TIME_EPSILON {
                return Err(MonitorError::OutOfOrderPlan { t: plan.t, last });
            }
        }
        self.last_t = Some(plan.t);

        let length = path_length(plan);
        let Some(baseline) = self.baseline else {
            self.baseline = Some(length);
            return Ok(None);
        };

        if cfg.is_significant_increase(baseline, length) {
            self.baseline = Some(length);
            let frame = sync_frame(plan.t, frames, cfg.sync_tolerance).ok().cloned();
            return Ok(Some(DeviationEvent {
                t: plan.t,
                old_length: baseline,
                new_length: length,
                frame,
            }));
        }
        if length < baseline {
            self.baseline = Some(length);
        }
        Ok(None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::Point;

    fn plan(t: f64, pts: &[(f64, f64)]) -> PlanSnapshot {
        PlanSnapshot::new(t, pts.iter().map(|&p| Point::from(p)))
    }

    fn straight(t: f64, len: f64) -> PlanSnapshot {
        plan(t, &[(0.0, 0.0), (len, 0.0)])
    }

    fn frames(ts: &[f64]) -> Vec<FrameRecord> {
        ts.iter()
            .map(|&t| FrameRecord::with_hint(t, format!("frame@{t}")))
            .collect()
    }

    #[test]
    fn lengths() {
        assert_eq!(path_length(&plan(0.0, &[(0.0, 0.0)])), 0.0);
        assert_eq!(path_length(&plan(0.0, &[(0.0, 0.0), (3.0, 4.0)])), 5.0);
        let detour = plan(
            0.0,
            &[(0.0, 0.0), (4.0, 0.0), (5.0, 2.0), (6.0, 0.0), (10.0, 0.0)],
        );
        assert!((path_length(&detour) - 12.472_135_954_999_58).abs() < 1e-12);
    }

    #[test]
    fn first_plan_sets_baseline() {
        let mut m = PathMonitor::new();
        let cfg = MonitorConfig::default();
        assert_eq!(m.observe_plan(&straight(0.0, 10.0), &[], &cfg).unwrap(), None);
        assert_eq!(m.baseline(), Some(10.0));
    }

    #[test]
    fn detour_raises_event() {
        let mut m = PathMonitor::new();
        let cfg = MonitorConfig::default();
        m.observe_plan(&straight(0.0, 10.0), &[], &cfg).unwrap();
        let fs = frames(&[1.0, 2.0]);
        let ev = m
            .observe_plan(&straight(2.0, 12.4721), &fs, &cfg)
            .unwrap()
            .expect("event");
        assert_eq!(ev.old_length, 10.0);
        assert_eq!(ev.new_length, 12.4721);
        assert_eq!(ev.frame.unwrap().t, 2.0);
        assert_eq!(m.baseline(), Some(12.4721));
    }

    #[test]
    fn small_growth_is_ignored() {
        let mut m = PathMonitor::new();
        let cfg = MonitorConfig::default();
        m.observe_plan(&straight(0.0, 10.0), &[], &cfg).unwrap();
        assert_eq!(m.observe_plan(&straight(1.0, 10.1), &[], &cfg).unwrap(), None);
        // Growth does not move the baseline up.
        assert_eq!(m.baseline(), Some(10.0));
    }

    #[test]
    fn ratio_alone_is_not_enough() {
        // 0.1 -> 0.3 is a 3x jump but only 0.2 m.
        let mut m = PathMonitor::new();
        let cfg = MonitorConfig::default();
        m.observe_plan(&straight(0.0, 0.1), &[], &cfg).unwrap();
        assert_eq!(m.observe_plan(&straight(1.0, 0.3), &[], &cfg).unwrap(), None);
    }

    #[test]
    fn shrinking_baseline_tracks_progress() {
        let mut m = PathMonitor::new();
        let cfg = MonitorConfig::default();
        m.observe_plan(&straight(0.0, 10.0), &[], &cfg).unwrap();
        m.observe_plan(&straight(1.0, 8.0), &[], &cfg).unwrap();
        m.observe_plan(&straight(2.0, 6.0), &[], &cfg).unwrap();
        assert_eq!(m.baseline(), Some(6.0));
        // 7.5 would not beat a 10 m baseline but does beat 6 m.
        let ev = m.observe_plan(&straight(3.0, 7.5), &[], &cfg).unwrap().unwrap();
        assert_eq!(ev.old_length, 6.0);
        assert_eq!(ev.frame, None);
    }

    #[test]
    fn out_of_order_plan() {
        let mut m = PathMonitor::new();
        let cfg = MonitorConfig::default();
        m.observe_plan(&straight(2.0, 10.0), &[], &cfg).unwrap();
        assert!(matches!(
            m.observe_plan(&straight(1.0, 10.0), &[], &cfg),
            Err(MonitorError::OutOfOrderPlan { .. })
        ));
        // Within epsilon is fine.
        assert!(m.observe_plan(&straight(2.0 - 1e-12, 10.0), &[], &cfg).is_ok());
    }

    #[test]
    fn sync_examples() {
        let fs = frames(&[1.0, 2.0, 3.0]);
        assert_eq!(sync_frame(2.2, &fs, 0.5).unwrap().t, 2.0);

        let fs = frames(&[2.0, 3.0]);
        assert_eq!(sync_frame(2.5, &fs, 0.5).unwrap().t, 2.0);

        let fs = frames(&[0.0]);
        assert_eq!(
            sync_frame(5.0, &fs, 0.5).unwrap_err(),
            MonitorError::NoFrameInTolerance { event_t: 5.0 }
        );
        assert!(sync_frame(1.0, &[], 0.5).is_err());
    }

    #[test]
    fn sync_prefers_first_of_duplicate_timestamps() {
        let mut fs = frames(&[1.0, 1.0, 1.0, 4.0]);
        fs[0].caption_hint = Some("first".into());
        assert_eq!(
            sync_frame(1.2, &fs, 0.5).unwrap().caption_hint.as_deref(),
            Some("first")
        );
        assert_eq!(
            sync_frame(0.9, &fs, 0.5).unwrap().caption_hint.as_deref(),
            Some("first")
        );
    }

    #[test]
    fn config_validation() {
        assert!(MonitorConfig::default().validate().is_ok());
        for cfg in [
            MonitorConfig { ratio_threshold: 1.0, ..Default::default() },
            MonitorConfig { min_abs_increase: -0.1, ..Default::default() },
            MonitorConfig { sync_tolerance: 0.0, ..Default::default() },
        ] {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }
}
