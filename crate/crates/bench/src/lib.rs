//! Fixtures shared by the benchmarks.

use rowpilot_core::field::{generate_field, FieldSpec, FieldWorld};
use rowpilot_core::planner::{plan, Plan, PlannerConfig};
use rowpilot_core::Vec2;

/// A straight vineyard-like field on an 800 x 800 raster.
pub fn field(n_rows: usize) -> FieldWorld {
    generate_field(&FieldSpec {
        n_rows,
        row_orientation: 0.35,
        row_length: 30.0,
        grid_width: 800,
        grid_height: 800,
        ..FieldSpec::default()
    })
    .expect("fixture field fits")
}

pub fn truth(world: &FieldWorld) -> Vec<Vec2> {
    world.ground_truth_waypoints().iter().map(|w| w.position).collect()
}

pub fn plan_for(world: &FieldWorld) -> Plan {
    plan(&world.occupancy, &truth(world), &PlannerConfig::default()).expect("fixture field plans")
}
