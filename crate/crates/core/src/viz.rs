//! SVG and PGM renderings of nodal data on 2-D slices.

use std::fmt::Write as _;

use crate::dirichlet::Field;
use crate::grid::{DomainMask, NodeStatus, Slice};

/// Node values on a 2-D slice, top row first; `None` marks exterior nodes.
#[derive(Debug, Clone)]
pub struct Heatmap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<Option<f64>>,
    /// Coordinate ranges of the two slice axes.
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
}

impl Heatmap {
    pub fn from_nodes(mask: &DomainMask, slice: &Slice, value: impl Fn(usize) -> Option<f64>) -> Heatmap {
        let grid = mask.grid();
        let (width, height, nodes) = slice.nodes(grid);
        let values = nodes.iter().map(|&n| if mask.in_closure(n) { value(n) } else { None }).collect();
        let b = grid.bounds();
        Heatmap { width, height, values, x_range: b[slice.axes.0], y_range: b[slice.axes.1] }
    }

    pub fn from_field(field: &Field, slice: &Slice) -> Heatmap {
        Heatmap::from_nodes(field.mask(), slice, |n| Some(field.get(n)))
    }

    pub fn range(&self) -> (f64, f64) {
        let (lo, hi) = self
            .values
            .iter()
            .flatten()
            .filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        if lo > hi {
            (0.0, 1.0)
        } else if lo == hi {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    }
}

const STOPS: [(f64, [f64; 3]); 5] = [
    (0.0, [68.0, 1.0, 84.0]),
    (0.25, [59.0, 82.0, 139.0]),
    (0.5, [33.0, 145.0, 140.0]),
    (0.75, [94.0, 201.0, 98.0]),
    (1.0, [253.0, 231.0, 37.0]),
];

fn color(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let k = STOPS.iter().position(|(s, _)| *s >= t).unwrap_or(STOPS.len() - 1).max(1);
    let ((s0, c0), (s1, c1)) = (STOPS[k - 1], STOPS[k]);
    let f = (t - s0) / (s1 - s0);
    let c: Vec<u8> = (0..3).map(|i| (c0[i] + f * (c1[i] - c0[i])).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// Renders `map` with a color-scale legend, the title and the config hash.
/// `overlays` are polylines in slice coordinates.
pub fn heatmap_svg(map: &Heatmap, title: &str, config_hash: &str, overlays: &[Vec<(f64, f64)>]) -> String {
    const CELL: f64 = 8.0;
    const MARGIN: f64 = 30.0;
    const LEGEND: f64 = 90.0;
    let (lo, hi) = map.range();
    let pw = map.width as f64 * CELL;
    let ph = map.height as f64 * CELL;
    let total_w = pw + 2.0 * MARGIN + LEGEND;
    let total_h = ph + 2.0 * MARGIN + 20.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total_w}" height="{total_h}" viewBox="0 0 {total_w} {total_h}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{MARGIN}" y="18" font-family="sans-serif" font-size="13">{}</text>"#, escape(title));
    for r in 0..map.height {
        for c in 0..map.width {
            let fill = match map.values[r * map.width + c] {
                Some(v) if v.is_finite() => color((v - lo) / (hi - lo)),
                Some(_) => "#ff00ff".to_string(),
                None => continue,
            };
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{CELL}" height="{CELL}" fill="{fill}"/>"#,
                MARGIN + c as f64 * CELL,
                MARGIN + r as f64 * CELL
            );
        }
    }
    let (x0, x1) = map.x_range;
    let (y0, y1) = map.y_range;
    let to_px = |x: f64, y: f64| {
        let cx = if map.width > 1 { (x - x0) / (x1 - x0) * (pw - CELL) } else { 0.0 };
        let cy = if map.height > 1 { (y1 - y) / (y1 - y0) * (ph - CELL) } else { 0.0 };
        (MARGIN + CELL / 2.0 + cx, MARGIN + CELL / 2.0 + cy)
    };
    for line in overlays {
        let pts: Vec<String> = line
            .iter()
            .map(|&(x, y)| {
                let (px, py) = to_px(x, y);
                format!("{px:.2},{py:.2}")
            })
            .collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="white" stroke-width="1"/>"#, pts.join(" "));
    }
    // Legend: vertical gradient with end labels.
    let lx = MARGIN * 1.5 + pw;
    let _ = writeln!(s, r#"<defs><linearGradient id="scale" x1="0" y1="1" x2="0" y2="0">"#);
    for (t, _) in STOPS {
        let _ = writeln!(s, r#"<stop offset="{t}" stop-color="{}"/>"#, color(t));
    }
    let _ = writeln!(s, "</linearGradient></defs>");
    let _ = writeln!(s, r#"<rect x="{lx}" y="{MARGIN}" width="16" height="{ph}" fill="url(#scale)" stroke="black"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="10">{hi:.4e}</text>"#, lx + 20.0, MARGIN + 8.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="10">{lo:.4e}</text>"#, lx + 20.0, MARGIN + ph);
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN}" y="{}" font-family="monospace" font-size="9">config {}</text>"#,
        total_h - 8.0,
        escape(config_hash)
    );
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Binary 8-bit PGM; exterior nodes are black, values scale to 1..=255.
pub fn heatmap_pgm(map: &Heatmap) -> Vec<u8> {
    let (lo, hi) = map.range();
    let mut out = format!("P5\n{} {}\n255\n", map.width, map.height).into_bytes();
    out.extend(map.values.iter().map(|v| match v {
        Some(v) if v.is_finite() => 1 + ((v - lo) / (hi - lo) * 254.0).round().clamp(0.0, 254.0) as u8,
        _ => 0,
    }));
    out
}

/// Node status on a slice as three gray levels (exterior 0, boundary 128,
/// interior 255).
pub fn mask_pgm(mask: &DomainMask, slice: &Slice) -> Vec<u8> {
    let (w, h, nodes) = slice.nodes(mask.grid());
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(nodes.iter().map(|&n| match mask.status(n) {
        NodeStatus::Exterior => 0u8,
        NodeStatus::Boundary => 128,
        NodeStatus::Interior => 255,
    }));
    out
}
