use crate::geometry::Vec2;

/// Cluster label per point; `None` marks noise.
pub type Labels = Vec<Option<usize>>;

/// Plain DBSCAN over 2D points. A point is core when at least `min_pts`
/// points (itself included) lie within `eps`. Cluster ids follow the
/// order in which the first core point of each cluster appears.
pub fn dbscan(points: &[Vec2], eps: f64, min_pts: usize) -> Labels {
    let n = points.len();
    let neighbors = |i: usize| -> Vec<usize> {
        (0..n)
            .filter(|&j| (points[i] - points[j]).norm() <= eps)
            .collect()
    };
    let mut labels: Labels = vec![None; n];
    let mut visited = vec![false; n];
    let mut next_id = 0;
    for i in 0..n {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        let seeds = neighbors(i);
        if seeds.len() < min_pts {
            continue;
        }
        let id = next_id;
        next_id += 1;
        labels[i] = Some(id);
        let mut queue = seeds;
        while let Some(j) = queue.pop() {
            if labels[j].is_none() {
                labels[j] = Some(id);
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            let more = neighbors(j);
            if more.len() >= min_pts {
                queue.extend(more.into_iter().filter(|&m| !visited[m] || labels[m].is_none()));
            }
        }
    }
    labels
}

/// Median distance from each point to its nearest other point.
pub fn median_nearest_neighbor(points: &[Vec2]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let mut d: Vec<f64> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            points
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, q)| (p - q).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    d.sort_by(f64::total_cmp);
    let m = d.len() / 2;
    Some(if d.len().is_multiple_of(2) { 0.5 * (d[m - 1] + d[m]) } else { d[m] })
}
