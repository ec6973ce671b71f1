//! Minimal SVG line and interval plots.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Scale {
    #[default]
    Linear,
    Log10,
}

impl Scale {
    fn map(self, v: f64) -> f64 {
        match self {
            Scale::Linear => v,
            Scale::Log10 => v.log10(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Axes {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_scale: Scale,
    pub y_scale: Scale,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

fn header(out: &mut String, axes: &Axes) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(&axes.title)
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0,
        escape(&axes.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(&axes.y_label)
    );
    let _ = writeln!(
        out,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
}

fn ticks(out: &mut String, lo: f64, hi: f64, scale: Scale, horizontal: bool) {
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let v = lo + f * (hi - lo);
        let label = match scale {
            Scale::Linear => format!("{v:.3}"),
            Scale::Log10 => format!("1e{v:.1}"),
        };
        if horizontal {
            let x = MARGIN + f * (WIDTH - 2.0 * MARGIN);
            let _ = writeln!(out, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{label}</text>"#, HEIGHT - MARGIN + 16.0);
        } else {
            let y = HEIGHT - MARGIN - f * (HEIGHT - 2.0 * MARGIN);
            let _ = writeln!(out, r#"<text x="{:.1}" y="{y:.1}" text-anchor="end">{label}</text>"#, MARGIN - 4.0);
        }
    }
}

/// Line plot of one or more series.
pub fn line_plot(axes: &Axes, series: &[Series]) -> String {
    let mut out = String::new();
    header(&mut out, axes);
    let (x0, x1) = range(series.iter().flat_map(|s| s.x.iter().map(|v| axes.x_scale.map(*v))));
    let (y0, y1) = range(series.iter().flat_map(|s| s.y.iter().map(|v| axes.y_scale.map(*v))));
    ticks(&mut out, x0, x1, axes.x_scale, true);
    ticks(&mut out, y0, y1, axes.y_scale, false);
    let px = |v: f64| MARGIN + (axes.x_scale.map(v) - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |v: f64| HEIGHT - MARGIN - (axes.y_scale.map(v) - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = s
            .x
            .iter()
            .zip(&s.y)
            .filter(|(x, y)| axes.x_scale.map(**x).is_finite() && axes.y_scale.map(**y).is_finite())
            .map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y)))
            .collect();
        let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" fill="{color}">{}</text>"#,
            WIDTH - MARGIN + 4.0 - 120.0,
            MARGIN + 16.0 + 14.0 * i as f64,
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// One horizontal row per item: a thick inner interval, a thin outer
/// interval and a marker at the centre value.
#[derive(Clone, Debug, PartialEq)]
pub struct Interval {
    pub label: String,
    pub outer: (f64, f64),
    pub inner: (f64, f64),
    pub center: f64,
    pub highlight: bool,
}

pub fn interval_plot(axes: &Axes, items: &[Interval]) -> String {
    let mut out = String::new();
    header(&mut out, axes);
    let (x0, x1) = range(items.iter().flat_map(|i| [i.outer.0, i.outer.1]).map(|v| axes.x_scale.map(v)));
    ticks(&mut out, x0, x1, axes.x_scale, true);
    let px = |v: f64| MARGIN + (axes.x_scale.map(v) - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let row = (HEIGHT - 2.0 * MARGIN) / items.len().max(1) as f64;
    for (i, it) in items.iter().enumerate() {
        let y = MARGIN + row * (i as f64 + 0.5);
        let color = if it.highlight { COLORS[0] } else { "#888" };
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" x2="{:.2}" y1="{y:.2}" y2="{y:.2}" stroke="{color}" stroke-width="1"/>"#,
            px(it.outer.0),
            px(it.outer.1)
        );
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" x2="{:.2}" y1="{y:.2}" y2="{y:.2}" stroke="{color}" stroke-width="4"/>"#,
            px(it.inner.0),
            px(it.inner.1)
        );
        let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#, px(it.center));
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-size="{}">{}</text>"#,
            MARGIN - 4.0,
            y + 4.0,
            if items.len() > 30 { 8 } else { 11 },
            escape(&it.label)
        );
    }
    out.push_str("</svg>\n");
    out
}
