use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use rowpilot_bench::{field, plan_for, truth};
use rowpilot_core::planner::{estimate_row_orientation, plan, HoughConfig, PlannerConfig};
use rowpilot_core::rowctl::{RowControlConfig, RowController};
use rowpilot_core::sim::{render_mask, CameraConfig, DebugDump, NavConfig, SimConfig, SimWorld};
use rowpilot_core::waymap::{decode_waypoint_map, encode_waypoint_map};
use rowpilot_core::{nav::Policy, sim::run_mission};

fn hough(c: &mut Criterion) {
    let world = field(8);
    c.bench_function("hough_orientation_800px", |b| {
        b.iter(|| estimate_row_orientation(&world.occupancy, &HoughConfig::default()).unwrap())
    });
}

fn decode(c: &mut Criterion) {
    let world = field(8);
    let map = encode_waypoint_map(&truth(&world), 800, 800, 8, None).unwrap();
    c.bench_function("decode_100x100", |b| b.iter(|| decode_waypoint_map(&map, 0.9, 8.0)));
}

fn planning(c: &mut Criterion) {
    let world = field(8);
    let wps = truth(&world);
    c.bench_function("plan_7_corridors", |b| {
        b.iter(|| plan(&world.occupancy, &wps, &PlannerConfig::default()).unwrap())
    });
}

fn mission_step(c: &mut Criterion) {
    let world = field(8);
    let sim = SimWorld::new(&world);
    let cam = CameraConfig::default();
    let (a, b) = world.row_endpoints[3];
    let mid = (a + b) * 0.5;
    let heading = (b - a).y.atan2((b - a).x);
    // pose between rows 3 and 4
    let o = world.field_coords(mid);
    let p = world.field_point(o.0, o.1 + 0.5 * world.spec.inter_row_spacing);
    c.bench_function("render_mask_224", |bch| bch.iter(|| render_mask(&sim.plants, (p.x, p.y, heading), &cam, 0.0)));
    let frame = render_mask(&sim.plants, (p.x, p.y, heading), &cam, 0.0);
    c.bench_function("row_controller_step", |bch| {
        let mut ctl = RowController::new(RowControlConfig::default());
        bch.iter_batched(|| frame.clone(), |f| ctl.step(f), BatchSize::SmallInput)
    });
}

fn mission(c: &mut Criterion) {
    let world = field(3);
    let p = plan_for(&world);
    let sim = SimWorld::new(&world);
    let mut group = c.benchmark_group("mission");
    group.sample_size(10);
    group.bench_function("hybrid_2_corridors", |b| {
        b.iter(|| {
            run_mission(&sim, &p.path, &p.ordered, Policy::Hybrid, &SimConfig::default(), &NavConfig::default(), &DebugDump::default())
        })
    });
    group.finish();
}

criterion_group!(benches, hough, decode, planning, mission_step, mission);
criterion_main!(benches);
