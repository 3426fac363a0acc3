//! Static SVG and PGM rendering of grids, fields, paths, and executed runs.
//! SVG output is plain text with fixed float formatting, so renders diff
//! cleanly and rerun bitwise-identically.

use std::fmt::Write as _;

use crate::dynamics::RobotState;
use crate::grid::{Footprint, GridGeometry, OccupancyGrid, PotentialGrid};
use crate::world::{propagate_obstacle, DynamicObstacle};

/// Pixels per grid cell in SVG renders.
const CELL_PX: f64 = 12.0;

fn svg_open(out: &mut String, geom: &GridGeometry) {
    let w = geom.width as f64 * CELL_PX;
    let h = geom.height as f64 * CELL_PX;
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {w:.0} {h:.0}" width="{w:.0}" height="{h:.0}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
}

/// World y grows upward; SVG y grows downward.
fn to_px(geom: &GridGeometry, x: f64, y: f64) -> (f64, f64) {
    let u = (x - geom.origin_x) / geom.resolution + 0.5;
    let v = (y - geom.origin_y) / geom.resolution + 0.5;
    (u * CELL_PX, (geom.height as f64 - v) * CELL_PX)
}

fn cell_rect(out: &mut String, geom: &GridGeometry, row: usize, col: usize, fill: &str) {
    let x = col as f64 * CELL_PX;
    let y = (geom.height - 1 - row) as f64 * CELL_PX;
    let _ = writeln!(
        out,
        r#"<rect x="{x:.1}" y="{y:.1}" width="{CELL_PX:.1}" height="{CELL_PX:.1}" fill="{fill}"/>"#
    );
}

/// Grayscale heatmap of a scalar raster: the minimum value renders white,
/// the maximum black, linearly in between (monotone by construction).
pub fn scalar_field_svg(geom: &GridGeometry, values: &[f64]) -> String {
    assert_eq!(values.len(), geom.len());
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = String::new();
    svg_open(&mut out, geom);
    for row in 0..geom.height {
        for col in 0..geom.width {
            let t = (values[geom.index(row, col)] - lo) / span;
            let shade = (255.0 * (1.0 - t)).round() as u8;
            cell_rect(&mut out, geom, row, col, &format!("rgb({shade},{shade},{shade})"));
        }
    }
    out.push_str("</svg>\n");
    out
}

fn polyline(out: &mut String, geom: &GridGeometry, points: &[(f64, f64)], stroke: &str, width: f64) {
    if points.len() < 2 {
        return;
    }
    let mut attr = String::new();
    for &(x, y) in points {
        let (px, py) = to_px(geom, x, y);
        let _ = write!(attr, "{px:.1},{py:.1} ");
    }
    let _ = writeln!(
        out,
        r#"<polyline fill="none" stroke="{stroke}" stroke-width="{width:.1}" points="{}"/>"#,
        attr.trim_end()
    );
}

fn marker(out: &mut String, geom: &GridGeometry, x: f64, y: f64, fill: &str, r: f64) {
    let (px, py) = to_px(geom, x, y);
    let _ = writeln!(out, r#"<circle cx="{px:.1}" cy="{py:.1}" r="{r:.1}" fill="{fill}"/>"#);
}

fn obstacle_outline(out: &mut String, geom: &GridGeometry, ob: &DynamicObstacle, opacity: f64) {
    let (s, c) = ob.heading.sin_cos();
    let corners = [
        (ob.half_length, ob.half_width),
        (ob.half_length, -ob.half_width),
        (-ob.half_length, -ob.half_width),
        (-ob.half_length, ob.half_width),
    ];
    let mut attr = String::new();
    for (dx, dy) in corners {
        let (px, py) = to_px(geom, ob.x + c * dx - s * dy, ob.y + s * dx + c * dy);
        let _ = write!(attr, "{px:.1},{py:.1} ");
    }
    let _ = writeln!(
        out,
        r#"<polygon fill="rgb(200,60,60)" fill-opacity="{opacity:.2}" points="{}"/>"#,
        attr.trim_end()
    );
}

fn footprint_outline(
    out: &mut String,
    geom: &GridGeometry,
    footprint: &Footprint,
    pose: (f64, f64, f64),
    stroke: &str,
) {
    let mut attr = String::new();
    for v in footprint.transformed(pose.0, pose.1, pose.2) {
        let (px, py) = to_px(geom, v[0], v[1]);
        let _ = write!(attr, "{px:.1},{py:.1} ");
    }
    let _ = writeln!(
        out,
        r#"<polygon fill="none" stroke="{stroke}" stroke-width="1.5" points="{}"/>"#,
        attr.trim_end()
    );
}

/// Everything a planning run produces, drawn in one overlay: the potential
/// heatmap of frame 0 (max over heading bins), occupied cells, the global
/// polyline, the executed path, obstacle poses over the executed steps, and
/// the start/goal markers.
#[allow(clippy::too_many_arguments)]
pub fn plan_overlay_svg(
    map: &OccupancyGrid,
    potential: Option<&PotentialGrid>,
    global_path: &[(f64, f64)],
    executed: &[RobotState],
    obstacles: &[DynamicObstacle],
    footprint: &Footprint,
    dt: f64,
    goal: (f64, f64),
) -> String {
    let geom = map.geometry;
    let mut out = String::new();
    svg_open(&mut out, &geom);

    if let Some(field) = potential {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for row in 0..geom.height {
            for col in 0..geom.width {
                let v = field.max_over_bins(row, col);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        let span = if hi > lo { hi - lo } else { 1.0 };
        for row in 0..geom.height {
            for col in 0..geom.width {
                let t = (field.max_over_bins(row, col) - lo) / span;
                // White to warm orange ramp.
                let g = (235.0 - 150.0 * t).round() as u8;
                let b = (235.0 - 215.0 * t).round() as u8;
                cell_rect(&mut out, &geom, row, col, &format!("rgb(255,{g},{b})"));
            }
        }
    }
    for row in 0..geom.height {
        for col in 0..geom.width {
            if map.is_occupied(row, col) {
                cell_rect(&mut out, &geom, row, col, "rgb(40,40,40)");
            }
        }
    }

    // Obstacle poses per executed step, fading with time.
    let steps = executed.len().max(1);
    for (k, alpha) in (0..steps).map(|k| (k, 0.08 + 0.5 * (1.0 - k as f64 / steps as f64))) {
        for ob in obstacles {
            let moved = propagate_obstacle(ob, k, dt);
            obstacle_outline(&mut out, &geom, &moved, alpha * 0.5);
        }
    }

    polyline(&mut out, &geom, global_path, "rgb(60,120,220)", 2.0);
    let executed_pts: Vec<(f64, f64)> = executed.iter().map(|s| (s.x, s.y)).collect();
    polyline(&mut out, &geom, &executed_pts, "rgb(30,150,60)", 2.5);

    if let Some(first) = executed.first() {
        footprint_outline(&mut out, &geom, footprint, (first.x, first.y, first.theta), "rgb(30,150,60)");
        marker(&mut out, &geom, first.x, first.y, "rgb(30,150,60)", 4.0);
    }
    if let Some(last) = executed.last() {
        footprint_outline(&mut out, &geom, footprint, (last.x, last.y, last.theta), "rgb(20,90,40)");
    }
    marker(&mut out, &geom, goal.0, goal.1, "rgb(60,120,220)", 4.0);

    out.push_str("</svg>\n");
    out
}

/// 8-bit PGM of a scalar raster, min mapped to 0 and max to 255.
pub fn scalar_field_pgm(geom: &GridGeometry, values: &[f64]) -> Vec<u8> {
    assert_eq!(values.len(), geom.len());
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = format!("P5\n{} {}\n255\n", geom.width, geom.height).into_bytes();
    out.extend(
        values
            .iter()
            .map(|v| (255.0 * (v - lo) / span).round() as u8),
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_potential_grid, PotentialWeights};

    fn geom(w: usize, h: usize) -> GridGeometry {
        GridGeometry::new(w, h, 0.1, 0.0, 0.0).unwrap()
    }

    /// Extract the gray level of the n-th cell rect in document order.
    fn gray_levels(svg: &str) -> Vec<u8> {
        svg.lines()
            .filter_map(|l| {
                let start = l.find("fill=\"rgb(")? + "fill=\"rgb(".len();
                let end = l[start..].find(',')? + start;
                l[start..end].parse().ok()
            })
            .collect()
    }

    #[test]
    fn scalar_svg_maps_values_monotonically() {
        let g = geom(3, 1);
        let svg = scalar_field_svg(&g, &[0.0, 0.5, 1.0]);
        let grays = gray_levels(&svg);
        assert_eq!(grays.len(), 3);
        // Higher value, darker pixel.
        assert!(grays[0] > grays[1] && grays[1] > grays[2]);
        assert_eq!(grays[0], 255);
        assert_eq!(grays[2], 0);
    }

    #[test]
    fn scalar_pgm_spans_full_range() {
        let g = geom(2, 2);
        let pgm = scalar_field_pgm(&g, &[1.0, 2.0, 3.0, 4.0]);
        let pixels = &pgm[pgm.len() - 4..];
        assert_eq!(pixels[0], 0);
        assert_eq!(pixels[3], 255);
        assert!(pixels[0] < pixels[1] && pixels[1] < pixels[2] && pixels[2] < pixels[3]);
    }

    #[test]
    fn overlay_renders_deterministically() {
        let mut map = OccupancyGrid::empty(geom(20, 20));
        map.fill_rect(5, 5, 8, 8, true);
        let fp = Footprint::rectangle(0.3, 0.2, "t").unwrap();
        let field = build_potential_grid(&map, &fp, PotentialWeights::default(), 4).unwrap();
        let ob = DynamicObstacle::agent(1.0, 1.0, 0.5);
        let executed = vec![
            RobotState::at_rest(0.3, 0.3, 0.0),
            RobotState::at_rest(0.5, 0.4, 0.1),
        ];
        let render = || {
            plan_overlay_svg(
                &map,
                Some(&field),
                &[(0.3, 0.3), (1.8, 1.8)],
                &executed,
                &[ob],
                &fp,
                1.0 / 3.0,
                (1.8, 1.8),
            )
        };
        let a = render();
        assert_eq!(a, render());
        assert!(a.contains("<svg"));
        assert!(a.contains("polyline"));
        assert!(a.contains("polygon"));
    }
}
