//! Minimal SVG line charts of gate trajectories.

use std::collections::BTreeMap;
use std::fmt::Write;

use ifnas_core::search::GateRecord;
use ifnas_core::Connection;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 48.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// One polyline per connection; x is the iteration, y the gate in [0, 1].
pub fn gate_chart(title: &str, records: &[GateRecord]) -> String {
    let mut series: BTreeMap<Connection, Vec<(u64, f64)>> = BTreeMap::new();
    for r in records {
        series.entry(r.connection).or_default().push((r.iteration, r.gate));
    }
    let (lo, hi) = records
        .iter()
        .fold((u64::MAX, 0), |(lo, hi), r| (lo.min(r.iteration), hi.max(r.iteration)));
    let span = hi.saturating_sub(lo).max(1) as f64;
    let x = |it: u64| MARGIN + (it - lo) as f64 / span * (WIDTH - 2.0 * MARGIN);
    let y = |g: f64| HEIGHT - MARGIN - g.clamp(0.0, 1.0) * (HEIGHT - 2.0 * MARGIN);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#, WIDTH / 2.0, escape(title));
    let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN, y(0.0), y(1.0));
    let _ = writeln!(out, r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" fill="none" stroke="black"/>"#);
    for g in [0.0, 0.5, 1.0] {
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{g:.1}</text>"#, x0 - 6.0, y(g) + 4.0);
    }
    let _ = writeln!(out, r#"<text x="{x0}" y="{}" text-anchor="middle">{lo}</text>"#, y0 + 16.0);
    let _ = writeln!(out, r#"<text x="{x1}" y="{}" text-anchor="middle">{hi}</text>"#, y0 + 16.0);
    for (k, (c, pts)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let path: Vec<String> = pts.iter().map(|&(it, g)| format!("{:.2},{:.2}", x(it), y(g))).collect();
        let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
        let ly = MARGIN + 14.0 * k as f64;
        let _ = writeln!(out, r#"<text x="{}" y="{ly}" fill="{color}">{c}</text>"#, x1 - 70.0);
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
