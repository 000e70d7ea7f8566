use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::IoError;
use crate::geometry::{cross, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    FollowRow,
    Turn,
    Done,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::FollowRow => "FOLLOW_ROW",
            Mode::Turn => "TURN",
            Mode::Done => "DONE",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisorConfig {
    /// Arrival radius, meters.
    pub waypoint_th: f64,
    /// Largest lateral distance at which crossing a waypoint's normal
    /// line counts as passing it, meters.
    pub watchdog_lateral: f64,
    /// An empty camera view this close before a corridor exit (along
    /// track, meters) counts as reaching it.
    pub row_end_handover: f64,
}

impl Default for SupervisorConfig {
    fn default() -> Self {
        Self {
            waypoint_th: 0.5,
            watchdog_lateral: 1.0,
            row_end_handover: 1.5,
        }
    }
}

/// What consumed a waypoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    /// Estimate inside the arrival radius.
    Arrival,
    /// Waypoint passed outside the radius.
    Crossing,
    /// Row controller lost the rows just before the exit.
    RowEnd,
}

impl fmt::Display for Trigger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Trigger::Arrival => "arrival",
            Trigger::Crossing => "crossing",
            Trigger::RowEnd => "row_end",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeEvent {
    pub t: f64,
    /// Waypoint that caused the transition.
    pub index: usize,
    pub old: Mode,
    pub new: Mode,
    /// Estimated distance to the waypoint when the event fired.
    pub distance: f64,
    pub trigger: Trigger,
}

impl ModeEvent {
    /// The waypoint was consumed outside the arrival radius.
    pub fn missed(&self) -> bool {
        self.trigger != Trigger::Arrival
    }
}

/// Waypoint-driven mode switching over `W_ord` (meters). Even indices are
/// corridor entries, odd ones exits. The initial mode is `Turn`: the
/// robot approaches the first entry with the path follower.
#[derive(Debug, Clone)]
pub struct Supervisor {
    pub cfg: SupervisorConfig,
    waypoints: Vec<Vec2>,
    next: usize,
    mode: Mode,
    prev_along: Option<f64>,
    pub events: Vec<ModeEvent>,
}

impl Supervisor {
    pub fn new(waypoints: Vec<Vec2>, cfg: SupervisorConfig) -> Self {
        assert!(waypoints.len() >= 2 && waypoints.len().is_multiple_of(2), "waypoints come in corridor pairs");
        Self {
            cfg,
            waypoints,
            next: 0,
            mode: Mode::Turn,
            prev_along: None,
            events: Vec::new(),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn next_index(&self) -> usize {
        self.next
    }

    /// Corridor rank the robot is in or heading to.
    pub fn corridor(&self) -> usize {
        (self.next.min(self.waypoints.len() - 1)) / 2
    }

    /// Direction of travel through waypoint `k`.
    fn travel_dir(&self, k: usize) -> Vec2 {
        let d = if k.is_multiple_of(2) {
            self.waypoints[k + 1] - self.waypoints[k]
        } else {
            self.waypoints[k] - self.waypoints[k - 1]
        };
        d / d.norm().max(1e-12)
    }

    fn relative(&self, est: Vec2) -> (f64, f64, f64) {
        let k = self.next;
        let rel = est - self.waypoints[k];
        let dir = self.travel_dir(k);
        (rel.norm(), rel.dot(&dir), cross(dir, rel))
    }

    /// Checks arrival at the next waypoint; returns the transition if one
    /// happened. At most one waypoint is consumed per call.
    pub fn update(&mut self, est: Vec2, t: f64) -> Option<ModeEvent> {
        if self.mode == Mode::Done {
            return None;
        }
        let (distance, along, lateral) = self.relative(est);
        let arrived = distance < self.cfg.waypoint_th;
        let crossed = self.prev_along.is_some_and(|a| a <= 0.0) && along > 0.0 && lateral.abs() < self.cfg.watchdog_lateral;
        self.prev_along = Some(along);
        match (arrived, crossed) {
            (true, _) => Some(self.advance(t, distance, Trigger::Arrival)),
            (false, true) => Some(self.advance(t, distance, Trigger::Crossing)),
            _ => None,
        }
    }

    /// Called when the row controller reports an empty view. Inside a
    /// corridor and close enough before its exit, the exit is taken as
    /// reached; elsewhere the stop stands.
    pub fn row_end_anomaly(&mut self, est: Vec2, t: f64) -> Option<ModeEvent> {
        if self.mode != Mode::FollowRow || self.next.is_multiple_of(2) {
            return None;
        }
        let (distance, along, lateral) = self.relative(est);
        let near = along <= 0.0 && along >= -self.cfg.row_end_handover && lateral.abs() < self.cfg.watchdog_lateral;
        near.then(|| self.advance(t, distance, Trigger::RowEnd))
    }

    fn advance(&mut self, t: f64, distance: f64, trigger: Trigger) -> ModeEvent {
        let k = self.next;
        let new = if k + 1 == self.waypoints.len() {
            Mode::Done
        } else if k.is_multiple_of(2) {
            Mode::FollowRow
        } else {
            Mode::Turn
        };
        let ev = ModeEvent {
            t,
            index: k,
            old: self.mode,
            new,
            distance,
            trigger,
        };
        self.mode = new;
        self.next += 1;
        self.prev_along = None;
        self.events.push(ev);
        ev
    }
}

pub fn write_mode_log(events: &[ModeEvent], path: &Path) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "index", "old_mode", "new_mode", "distance", "trigger"])?;
    for e in events {
        w.write_record([
            format!("{:.4}", e.t),
            e.index.to_string(),
            e.old.to_string(),
            e.new.to_string(),
            format!("{:.6}", e.distance),
            e.trigger.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Vec<Vec2> {
        vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(10.0, 0.0),
            Vec2::new(10.0, 3.0),
            Vec2::new(0.0, 3.0),
        ]
    }

    #[test]
    fn arrival_is_strict() {
        let mut s = Supervisor::new(square(), SupervisorConfig::default());
        assert!(s.update(Vec2::new(0.0, 0.51), 0.0).is_none());
        assert!(s.update(Vec2::new(0.0, 0.5), 0.1).is_none());
        let ev = s.update(Vec2::new(0.0, 0.0), 0.2).unwrap();
        assert_eq!((ev.old, ev.new, ev.index), (Mode::Turn, Mode::FollowRow, 0));
        assert_eq!(s.mode(), Mode::FollowRow);
    }

    #[test]
    fn full_trace() {
        let mut s = Supervisor::new(square(), SupervisorConfig::default());
        let mut modes = Vec::new();
        for p in square() {
            // never more than one waypoint per call
            modes.push(s.update(p, 0.0).unwrap().new);
            assert!(s.update(p, 0.0).is_none() || s.mode() == Mode::Done);
        }
        assert_eq!(modes, vec![Mode::FollowRow, Mode::Turn, Mode::FollowRow, Mode::Done]);
        assert!(s.update(Vec2::zeros(), 1.0).is_none());
    }

    #[test]
    fn watchdog_catches_a_pass_outside_the_radius() {
        let mut s = Supervisor::new(square(), SupervisorConfig::default());
        s.update(Vec2::new(0.0, 0.0), 0.0);
        // drive along y = 0.7, past the exit at x = 10
        let mut fired = None;
        for i in 0..120 {
            if let Some(ev) = s.update(Vec2::new(i as f64 * 0.1, 0.7), 0.0) {
                fired = Some((i, ev));
                break;
            }
        }
        let (i, ev) = fired.unwrap();
        assert_eq!(i, 101);
        assert!(ev.trigger == Trigger::Crossing && ev.new == Mode::Turn);
        // too far laterally: no event
        let mut s = Supervisor::new(square(), SupervisorConfig::default());
        s.update(Vec2::new(0.0, 0.0), 0.0);
        for i in 0..120 {
            assert!(s.update(Vec2::new(i as f64 * 0.1, 1.2), 0.0).is_none());
        }
    }

    #[test]
    fn empty_view_hands_over_only_near_the_exit() {
        let mut s = Supervisor::new(square(), SupervisorConfig::default());
        assert!(s.row_end_anomaly(Vec2::new(9.0, 0.0), 0.0).is_none());
        s.update(Vec2::new(0.0, 0.0), 0.0);
        // mid-row: the stop stands
        assert!(s.row_end_anomaly(Vec2::new(5.0, 0.0), 1.0).is_none());
        assert!(s.row_end_anomaly(Vec2::new(8.4, 0.0), 1.0).is_none());
        let ev = s.row_end_anomaly(Vec2::new(8.6, 0.2), 2.0).unwrap();
        assert_eq!((ev.index, ev.new, ev.trigger), (1, Mode::Turn, Trigger::RowEnd));
        // not while turning
        assert!(s.row_end_anomaly(Vec2::new(10.0, 2.0), 3.0).is_none());
    }

    #[test]
    fn mode_log_csv() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Supervisor::new(square(), SupervisorConfig::default());
        for p in square() {
            s.update(p, 1.0);
        }
        let file = dir.path().join("modes.csv");
        write_mode_log(&s.events, &file).unwrap();
        let text = std::fs::read_to_string(file).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.lines().nth(1).unwrap().contains("TURN,FOLLOW_ROW"));
    }
}
