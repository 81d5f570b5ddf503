use std::fmt::Write;

use cuffbench::PolarMap;

const SIZE: f64 = 480.0;
const PLOT_RADIUS: f64 = 200.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Screen coordinates with 0° to the right and angles increasing counter-clockwise.
fn to_screen(angle_deg: f64, radius: f64) -> (f64, f64) {
    let (s, c) = angle_deg.to_radians().sin_cos();
    (SIZE / 2.0 + PLOT_RADIUS * radius * c, SIZE / 2.0 - PLOT_RADIUS * radius * s)
}

/// Static polar plot of every muscle at one intensity. Full recruitment is drawn
/// at the centre.
pub fn polar_plot(map: &PolarMap, intensity_ua: f64) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for ring in [0.25, 0.5, 0.75, 1.0] {
        let _ = writeln!(
            out,
            r##"<circle cx="{c}" cy="{c}" r="{r}" fill="none" stroke="#bbbbbb"/>"##,
            c = SIZE / 2.0,
            r = PLOT_RADIUS * ring
        );
    }
    for k in 0..6 {
        let angle = f64::from(k) * 60.0;
        let (x, y) = to_screen(angle, 1.0);
        let (lx, ly) = to_screen(angle, 1.12);
        let _ = writeln!(out, r##"<line x1="{c}" y1="{c}" x2="{x:.2}" y2="{y:.2}" stroke="#dddddd"/>"##, c = SIZE / 2.0);
        let _ = writeln!(out, r#"<text x="{lx:.2}" y="{ly:.2}" text-anchor="middle">STR{}</text>"#, k + 1);
    }
    for (i, muscle) in map.muscles.iter().enumerate() {
        let line = map.polyline(intensity_ua, muscle);
        if line.is_empty() {
            continue;
        }
        let color = COLORS[i % COLORS.len()];
        let points: Vec<String> = line
            .iter()
            .map(|&(a, r)| {
                let (x, y) = to_screen(a, r);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(out, r#"<polygon points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, points.join(" "));
        let _ = writeln!(out, r#"<text x="10" y="{}" fill="{color}">{}</text>"#, 20 + 16 * i, muscle.label());
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="end">{intensity_ua} µA, {} normalization</text>"#,
        SIZE - 10.0,
        SIZE - 10.0,
        map.scope
    );
    out.push_str("</svg>\n");
    out
}
