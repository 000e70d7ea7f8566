//! SVG overlay: occupancy in white on black, waypoints in yellow, the
//! global path in red, the driven trajectory in blue, and a metrics table.

use std::fmt::Write;

use rowpilot_core::eval::RunMetrics;
use rowpilot_core::field::OccupancyGrid;
use rowpilot_core::Vec2;

const PANEL: usize = 300;
const LINE: usize = 18;

/// Everything drawn, in grid pixels.
pub struct Layers<'a> {
    pub grid: &'a OccupancyGrid,
    pub waypoints: &'a [Vec2],
    pub path: &'a [Vec2],
    pub trajectory: &'a [Vec2],
    pub metrics: Option<&'a RunMetrics>,
    pub title: &'a str,
}

fn polyline(out: &mut String, points: &[Vec2], color: &str, width: f64, id: &str) {
    if points.len() < 2 {
        return;
    }
    let _ = write!(out, r#"<polyline id="{id}" fill="none" stroke="{color}" stroke-width="{width}" points=""#);
    for (i, p) in points.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{:.2},{:.2}", p.x, p.y);
    }
    out.push_str("\"/>\n");
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn metric_rows(m: &RunMetrics) -> Vec<(String, String)> {
    let mut rows = vec![
        ("rows visited".to_string(), m.n_rows.to_string()),
        ("min error (m)".into(), format!("{:.3}", m.min_error)),
        ("max error (m)".into(), format!("{:.3}", m.max_error)),
        ("MAE (m)".into(), format!("{:.3}", m.mae)),
        ("RMSE (m)".into(), format!("{:.3}", m.rmse)),
        ("sigma (m)".into(), format!("{:.3}", m.sigma)),
    ];
    if let Some(s) = &m.intra_row {
        rows.push(("intra-row MAE (m)".into(), format!("{:.3}", s.mae)));
        rows.push(("intra-row RMSE (m)".into(), format!("{:.3}", s.rmse)));
    }
    rows.extend([
        ("collisions".into(), m.collisions.to_string()),
        ("completed".into(), m.completion.to_string()),
        ("duration (s)".into(), format!("{:.1}", m.duration)),
        ("min clearance (m)".into(), format!("{:.3}", m.coverage.min_clearance)),
        ("row order conformant".into(), m.coverage.abba_conformant.to_string()),
    ]);
    rows
}

pub fn render(layers: &Layers<'_>) -> String {
    let g = layers.grid;
    let (w, h) = (g.width(), g.height());
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{tw}" height="{h}" viewBox="0 0 {tw} {h}">"#,
        tw = w + PANEL
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="black"/>"#);

    // occupied cells as horizontal runs
    out.push_str("<g id=\"grid\" fill=\"white\">\n");
    for y in 0..h {
        let mut x = 0;
        while x < w {
            if g.get(x, y) == 0 {
                x += 1;
                continue;
            }
            let start = x;
            while x < w && g.get(x, y) != 0 {
                x += 1;
            }
            let _ = writeln!(out, r#"<rect x="{start}" y="{y}" width="{}" height="1"/>"#, x - start);
        }
    }
    out.push_str("</g>\n");

    polyline(&mut out, layers.path, "red", 1.5, "path");
    polyline(&mut out, layers.trajectory, "#1e90ff", 1.0, "trajectory");
    out.push_str("<g id=\"waypoints\" fill=\"yellow\">\n");
    for p in layers.waypoints {
        let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="3"/>"#, p.x, p.y);
    }
    out.push_str("</g>\n");

    // side panel
    let px = w + 12;
    let _ = writeln!(out, r#"<rect x="{w}" y="0" width="{PANEL}" height="{h}" fill="white"/>"#);
    let _ = writeln!(out, r#"<g id="legend" font-family="monospace" font-size="12" fill="black">"#);
    let mut y = LINE;
    let _ = writeln!(out, r#"<text x="{px}" y="{y}" font-weight="bold">{}</text>"#, escape(layers.title));
    y += LINE;
    for (color, label) in [("red", "global path"), ("#1e90ff", "trajectory"), ("#c8b400", "waypoints")] {
        let _ = writeln!(out, r#"<rect x="{px}" y="{}" width="14" height="4" fill="{color}"/>"#, y - 6);
        let _ = writeln!(out, r#"<text x="{}" y="{y}">{label}</text>"#, px + 20);
        y += LINE;
    }
    out.push_str("</g>\n");
    if let Some(m) = layers.metrics {
        out.push_str("<g id=\"metrics\" font-family=\"monospace\" font-size=\"12\" fill=\"black\">\n");
        y += LINE / 2;
        for (k, v) in metric_rows(m) {
            let _ = writeln!(out, r#"<text x="{px}" y="{y}">{k}</text>"#);
            let _ = writeln!(out, r#"<text x="{}" y="{y}" text-anchor="end">{v}</text>"#, w + PANEL - 12);
            y += LINE;
        }
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    out
}
