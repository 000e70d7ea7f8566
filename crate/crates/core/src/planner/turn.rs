use super::PlanError;
use crate::geometry::{densify, unit, Vec2};

/// Headland turn between the exit of one corridor and the entry of the next.
#[derive(Debug, Clone, PartialEq)]
pub struct TurnPath {
    /// Exit point, straight stub, semicircle, stub, entry point.
    pub points: Vec<Vec2>,
    /// Exit and entry pushed past the row ends; the arc endpoints.
    pub shifted: [Vec2; 2],
    pub center: Vec2,
    pub radius: f64,
    /// Longitudinal offset of the exit relative to the entry.
    pub delta_d: f64,
    /// Arc point farthest out along the turn direction.
    pub apex: Vec2,
}

/// Plans a turn. `direction` is the outward row direction at the field
/// side where the turn happens, `margin` the distance driven past the
/// exit before curving. Units are whatever the inputs use; `step` bounds
/// the spacing of the returned samples.
pub fn plan_turn(
    exit: Vec2,
    entry: Vec2,
    direction: f64,
    margin: f64,
    step: f64,
) -> Result<TurnPath, PlanError> {
    let d = unit(direction);
    let delta_d = (exit - entry).dot(&d);
    // push both points to the same longitudinal position past the exit
    let s0 = exit + d * margin;
    let s1 = entry + d * (margin + delta_d);
    if (s1 - s0).norm() < 1e-9 {
        return Err(PlanError::DegenerateTurn);
    }
    let center = (s0 + s1) * 0.5;
    let radius = (s0 - center).norm();
    let theta0 = (s0.y - center.y).atan2(s0.x - center.x);
    // the endpoints are antipodal; sweep through the outward side
    let ccw_mid = theta0 + std::f64::consts::FRAC_PI_2;
    let sweep = if unit(ccw_mid).dot(&d) >= 0.0 {
        std::f64::consts::PI
    } else {
        -std::f64::consts::PI
    };
    let apex = center + unit(theta0 + 0.5 * sweep) * radius;

    let mut n = ((radius * std::f64::consts::PI) / step).ceil().max(2.0) as usize;
    n += n % 2;
    let mut points = densify(&[exit, s0], step);
    points.pop();
    points.extend((0..=n).map(|j| {
        if j == n {
            s1
        } else {
            center + unit(theta0 + sweep * j as f64 / n as f64) * radius
        }
    }));
    let tail = densify(&[s1, entry], step);
    points.extend_from_slice(&tail[1..]);
    Ok(TurnPath {
        points,
        shifted: [s0, s1],
        center,
        radius,
        delta_d,
        apex,
    })
}
