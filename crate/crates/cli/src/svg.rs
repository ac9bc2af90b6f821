//! Minimal static SVG plots.

use std::fmt::Write;

const SIZE: f64 = 600.0;
const MARGIN: f64 = 30.0;
/// Larger clouds are drawn from an evenly strided subset.
const MAX_DOTS: usize = 20_000;

/// Top-down (x, y) scatter centred on the arm axis, with an optional circle
/// of radius `ring`.
pub fn planar_scatter(points: &[(f64, f64)], ring: Option<f64>, title: &str) -> String {
    let extent = points
        .iter()
        .map(|&(x, y)| x.abs().max(y.abs()))
        .chain(ring)
        .fold(0.0_f64, f64::max)
        .max(1e-9);
    let scale = (SIZE / 2.0 - MARGIN) / extent;
    let c = SIZE / 2.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="10" y="20" font-family="sans-serif" font-size="14">{}</text>"#, escape(title));
    let _ = writeln!(
        s,
        r##"<line x1="{MARGIN}" y1="{c}" x2="{}" y2="{c}" stroke="#bbb"/><line x1="{c}" y1="{MARGIN}" x2="{c}" y2="{}" stroke="#bbb"/>"##,
        SIZE - MARGIN,
        SIZE - MARGIN
    );
    if let Some(r) = ring {
        let _ = writeln!(
            s,
            r##"<circle cx="{c}" cy="{c}" r="{:.2}" fill="none" stroke="#c33" stroke-dasharray="4 3"/>"##,
            r * scale
        );
    }
    let stride = points.len().div_ceil(MAX_DOTS).max(1);
    for &(x, y) in points.iter().step_by(stride) {
        let _ = writeln!(
            s,
            r##"<circle cx="{:.2}" cy="{:.2}" r="1.2" fill="#236"/>"##,
            c + x * scale,
            c - y * scale
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
