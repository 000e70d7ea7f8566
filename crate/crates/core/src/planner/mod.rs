//! Global path planning from an occupancy grid and a set of corridor
//! waypoints: orientation estimate, side clustering, A-B-B-A ordering,
//! corridor centering and headland turns.

mod dbscan;
mod hough;
mod intra;
mod order;
mod path;
mod turn;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::OccupancyGrid;
use crate::geometry::Vec2;

pub use dbscan::{dbscan, median_nearest_neighbor, Labels};
pub use hough::{detect_segments, estimate_row_orientation, mean_orientation, HoughConfig, LineSegment};
pub use intra::{plan_intra_row, IntraRowConfig};
pub use order::{cluster_and_order, FieldSide, OrderedWaypoint, OrderedWaypoints, OrderingConfig};
pub use path::{build_global_path, GlobalPath, SegmentTag};
pub use turn::{plan_turn, TurnPath};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("no row lines found in the occupancy grid")]
    NoLinesFound,
    #[error("at least 4 waypoints are needed, got {0}")]
    TooFewWaypoints(usize),
    #[error("field sides differ in size ({a} vs {b}); {} waypoint(s) unmatched", unmatched.len())]
    SideImbalance { a: usize, b: usize, unmatched: Vec<Vec2> },
    #[error("turn endpoints coincide after shifting")]
    DegenerateTurn,
    #[error("corridor {segment} is blocked near ({:.1}, {:.1})", at.x, at.y)]
    BlockedCorridor { segment: usize, at: Vec2 },
    #[error("path passes {clearance:.2} px from vegetation near ({:.1}, {:.1}) in {tag}", at.x, at.y)]
    UnsafePath { tag: SegmentTag, at: Vec2, clearance: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub hough: HoughConfig,
    pub ordering: OrderingConfig,
    /// Distance driven past the row ends before turning, pixels.
    pub end_row_distance: f64,
    /// Path sample spacing, meters.
    pub step: f64,
    /// Meters.
    pub robot_diameter: f64,
    /// Minimum distance from any path point to occupied cells, pixels.
    pub safety_margin: f64,
    /// Lateral search half-width for corridor centering, pixels. Defaults
    /// to the corridor spacing estimated from the waypoints.
    pub search_radius: Option<f64>,
    pub smoothing: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            hough: HoughConfig::default(),
            ordering: OrderingConfig::default(),
            end_row_distance: 20.0,
            step: 0.1,
            robot_diameter: 0.5,
            safety_margin: 4.0,
            search_radius: None,
            smoothing: 5,
        }
    }
}

/// Everything the planner produced for one field.
#[derive(Debug, Clone)]
pub struct Plan {
    pub orientation: f64,
    pub ordered: OrderedWaypoints,
    pub path: GlobalPath,
}

/// Runs the whole planner. Waypoints are in pixels.
pub fn plan(grid: &OccupancyGrid, waypoints: &[Vec2], cfg: &PlannerConfig) -> Result<Plan, PlanError> {
    let orientation = estimate_row_orientation(grid, &cfg.hough)?;
    let ordered = cluster_and_order(waypoints, orientation, &cfg.ordering)?;
    let path = build_global_path(&ordered, grid, cfg)?;
    Ok(Plan {
        orientation,
        ordered,
        path,
    })
}
