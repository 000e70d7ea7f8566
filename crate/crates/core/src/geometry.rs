//! Small planar geometry helpers shared by every module.

use std::f64::consts::PI;

pub type Vec2 = nalgebra::Vector2<f64>;

/// Wraps an angle into `(-π, π]`.
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a % (2.0 * PI);
    if r <= -PI {
        r += 2.0 * PI;
    } else if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Wraps an undirected line angle into `[0, π)`.
pub fn wrap_half_turn(a: f64) -> f64 {
    let r = a.rem_euclid(PI);
    if r >= PI {
        0.0
    } else {
        r
    }
}

pub fn unit(angle: f64) -> Vec2 {
    Vec2::new(angle.cos(), angle.sin())
}

/// Left-hand normal of a direction angle: `(-sin a, cos a)`.
pub fn normal(angle: f64) -> Vec2 {
    Vec2::new(-angle.sin(), angle.cos())
}

pub fn rotate(v: Vec2, angle: f64) -> Vec2 {
    let (s, c) = angle.sin_cos();
    Vec2::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

pub fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Distance from `p` to the closed segment `[a, b]`.
pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

pub fn polyline_length(points: &[Vec2]) -> f64 {
    points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

/// Inserts evenly spaced points so that no two consecutive points are
/// farther apart than `step`. Original vertices are kept.
pub fn densify(points: &[Vec2], step: f64) -> Vec<Vec2> {
    assert!(step > 0.0, "densify step must be positive");
    let mut out = Vec::with_capacity(points.len());
    let Some(first) = points.first() else {
        return out;
    };
    out.push(*first);
    for w in points.windows(2) {
        let d = (w[1] - w[0]).norm();
        let n = (d / step).ceil().max(1.0) as usize;
        for i in 1..n {
            let t = i as f64 / n as f64;
            out.push(w[0] + (w[1] - w[0]) * t);
        }
        out.push(w[1]);
    }
    out
}

/// Length-parameterized straight segment samples, including both ends.
pub fn sample_segment(a: Vec2, b: Vec2, step: f64) -> Vec<Vec2> {
    densify(&[a, b], step)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angle_wrapping() {
        assert!((normalize_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(-PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(0.5) - 0.5).abs() < 1e-15);
        assert!((wrap_half_turn(-0.1) - (PI - 0.1)).abs() < 1e-12);
        assert!((wrap_half_turn(PI + 0.2) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn densify_respects_step() {
        let pts = [Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(1.0, 3.3)];
        let d = densify(&pts, 0.25);
        assert!(d.windows(2).all(|w| (w[1] - w[0]).norm() <= 0.25 + 1e-12));
        assert_eq!(d.first(), pts.first());
        assert_eq!(d.last(), pts.last());
    }

    #[test]
    fn segment_distance() {
        let a = Vec2::new(0.0, 0.0);
        let b = Vec2::new(2.0, 0.0);
        assert!((point_segment_distance(Vec2::new(1.0, 1.0), a, b) - 1.0).abs() < 1e-15);
        assert!((point_segment_distance(Vec2::new(3.0, 0.0), a, b) - 1.0).abs() < 1e-15);
        assert!((point_segment_distance(Vec2::new(5.0, 5.0), a, a) - 50f64.sqrt()).abs() < 1e-12);
    }
}
