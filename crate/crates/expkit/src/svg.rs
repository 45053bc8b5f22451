//! Minimal self-contained SVG line and bar charts.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = if lo.abs() > 1e-12 { lo.abs() * 0.1 } else { 1.0 };
        return (lo - pad, hi + pad);
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="15">{}</text>"#, (W - RIGHT + LEFT) / 2.0, esc(title));
}

fn axes(out: &mut String, x_label: &str, y_label: &str, (y0, y1): (f64, f64), x_ticks: &[(f64, String)], sy: &dyn Fn(f64) -> f64) {
    let (px0, px1, py0, py1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
    let _ = writeln!(out, r#"<line x1="{px0}" y1="{py0}" x2="{px1}" y2="{py0}" stroke="black"/>"#);
    let _ = writeln!(out, r#"<line x1="{px0}" y1="{py0}" x2="{px0}" y2="{py1}" stroke="black"/>"#);
    for i in 0..=4 {
        let v = y0 + (y1 - y0) * i as f64 / 4.0;
        let y = sy(v);
        let _ = writeln!(out, r#"<line x1="{:.1}" y1="{y:.1}" x2="{px0}" y2="{y:.1}" stroke="black"/>"#, px0 - 4.0);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.3}</text>"#, px0 - 6.0, y + 4.0);
    }
    for (x, label) in x_ticks {
        let _ = writeln!(out, r#"<line x1="{x:.1}" y1="{py0}" x2="{x:.1}" y2="{:.1}" stroke="black"/>"#, py0 + 4.0);
        let _ = writeln!(out, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, py0 + 18.0, esc(label));
    }
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, (px0 + px1) / 2.0, H - 12.0, esc(x_label));
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        (py0 + py1) / 2.0,
        (py0 + py1) / 2.0,
        esc(y_label)
    );
}

fn legend(out: &mut String, names: &[&str]) {
    for (i, name) in names.iter().enumerate() {
        let y = TOP + 14.0 + 18.0 * i as f64;
        let x = W - RIGHT + 12.0;
        let _ = writeln!(out, r#"<rect x="{x:.1}" y="{:.1}" width="12" height="12" fill="{}"/>"#, y - 10.0, PALETTE[i % PALETTE.len()]);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{y:.1}">{}</text>"#, x + 18.0, esc(name));
    }
}

/// Line plot with markers; `guides` are horizontal dashed lines.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series], guides: &[f64]) -> String {
    let xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
    let (x0, x1) = range(xs);
    let ys = series.iter().flat_map(|s| s.points.iter().map(|p| p.1)).chain(guides.iter().copied());
    let (y0, y1) = range(ys);
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * (W - RIGHT - LEFT);
    let sy = |y: f64| H - BOTTOM - (y - y0) / (y1 - y0) * (H - BOTTOM - TOP);
    let mut out = String::new();
    header(&mut out, title);
    let ticks: Vec<(f64, String)> = (0..=4)
        .map(|i| {
            let v = x0 + (x1 - x0) * i as f64 / 4.0;
            (sx(v), format!("{v:.2}"))
        })
        .collect();
    axes(&mut out, x_label, y_label, (y0, y1), &ticks, &sy);
    for g in guides {
        let y = sy(*g);
        let _ = writeln!(
            out,
            r#"<line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="gray" stroke-dasharray="4 4"/>"#,
            W - RIGHT
        );
    }
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
        if pts.len() > 1 {
            let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, pts.join(" "));
        }
        for &(x, y) in &s.points {
            let _ = writeln!(out, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#, sx(x), sy(y));
        }
    }
    legend(&mut out, &series.iter().map(|s| s.name.as_str()).collect::<Vec<_>>());
    out.push_str("</svg>\n");
    out
}

/// Grouped bar chart: one bar per group inside each category.
pub fn bar_plot(title: &str, y_label: &str, categories: &[String], groups: &[(String, Vec<f64>)]) -> String {
    let (_, y1) = range(groups.iter().flat_map(|g| g.1.iter().copied()).chain([0.0]));
    let y0 = 0.0;
    let sy = |y: f64| H - BOTTOM - (y - y0) / (y1 - y0) * (H - BOTTOM - TOP);
    let slot = (W - RIGHT - LEFT) / categories.len().max(1) as f64;
    let bar = slot * 0.8 / groups.len().max(1) as f64;
    let mut out = String::new();
    header(&mut out, title);
    let ticks: Vec<(f64, String)> =
        categories.iter().enumerate().map(|(i, c)| (LEFT + slot * (i as f64 + 0.5), c.clone())).collect();
    axes(&mut out, "", y_label, (y0, y1), &ticks, &sy);
    for (g, (_, values)) in groups.iter().enumerate() {
        let color = PALETTE[g % PALETTE.len()];
        for (i, v) in values.iter().enumerate() {
            let x = LEFT + slot * i as f64 + slot * 0.1 + bar * g as f64;
            let (top, base) = (sy(*v), sy(0.0));
            let _ = writeln!(
                out,
                r#"<rect x="{x:.1}" y="{top:.1}" width="{bar:.1}" height="{:.1}" fill="{color}"/>"#,
                (base - top).max(0.0)
            );
        }
    }
    legend(&mut out, &groups.iter().map(|g| g.0.as_str()).collect::<Vec<_>>());
    out.push_str("</svg>\n");
    out
}
