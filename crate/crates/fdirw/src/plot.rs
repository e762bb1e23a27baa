//! Dependency-free SVG line charts for kinetics curves, error series and
//! scaling fits. Polyline rendering with linear or log axes; nothing
//! fancier than the emitted reports need.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>) -> Series {
        Series { label: label.into(), points }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Linear,
    Log,
}

pub struct ChartSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_scale: Scale,
    pub y_scale: Scale,
}

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 78.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 42.0;
const MARGIN_B: f64 = 58.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn transform(v: f64, scale: Scale) -> Option<f64> {
    match scale {
        Scale::Linear => v.is_finite().then_some(v),
        Scale::Log => (v > 0.0 && v.is_finite()).then(|| v.log10()),
    }
}

fn tick_values(lo: f64, hi: f64, scale: Scale) -> Vec<(f64, String)> {
    match scale {
        Scale::Linear => {
            let span = (hi - lo).abs().max(f64::MIN_POSITIVE);
            let raw = span / 5.0;
            let mag = 10f64.powf(raw.log10().floor());
            let step = [1.0, 2.0, 5.0, 10.0]
                .iter()
                .map(|m| m * mag)
                .find(|&s| span / s <= 6.0)
                .unwrap_or(mag * 10.0);
            let first = (lo / step).ceil() * step;
            let mut out = Vec::new();
            let mut v = first;
            while v <= hi + 1.0e-12 * span {
                out.push((v, format!("{:.6}", v).trim_end_matches('0').trim_end_matches('.').to_string()));
                v += step;
            }
            out
        }
        Scale::Log => {
            let (dlo, dhi) = (lo.floor() as i32, hi.ceil() as i32);
            (dlo..=dhi).map(|d| (d as f64, format!("1e{d}"))).collect()
        }
    }
}

/// Renders the chart to an SVG string. Points that cannot be placed on the
/// requested scales (non-positive on a log axis, non-finite anywhere) are
/// dropped from their polylines.
pub fn render(spec: &ChartSpec, series: &[Series]) -> String {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for s in series {
        for &(x, y) in &s.points {
            if let (Some(tx), Some(ty)) = (transform(x, spec.x_scale), transform(y, spec.y_scale)) {
                xs.push(tx);
                ys.push(ty);
            }
        }
    }
    let (x_lo, x_hi) = bounds(&xs);
    let (y_lo, y_hi) = bounds(&ys);
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let px = |tx: f64| MARGIN_L + (tx - x_lo) / (x_hi - x_lo) * plot_w;
    let py = |ty: f64| MARGIN_T + plot_h - (ty - y_lo) / (y_hi - y_lo) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(&spec.title)
    );

    // Axes box.
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black" stroke-width="1"/>"#
    );

    for (v, label) in tick_values(x_lo, x_hi, spec.x_scale) {
        if v < x_lo - 1.0e-9 || v > x_hi + 1.0e-9 {
            continue;
        }
        let x = px(v);
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="#cccccc" stroke-width="0.5"/>"##,
            MARGIN_T,
            MARGIN_T + plot_h
        );
        let _ = writeln!(
            svg,
            r#"<text x="{x:.2}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{label}</text>"#,
            MARGIN_T + plot_h + 16.0
        );
    }
    for (v, label) in tick_values(y_lo, y_hi, spec.y_scale) {
        if v < y_lo - 1.0e-9 || v > y_hi + 1.0e-9 {
            continue;
        }
        let y = py(v);
        let _ = writeln!(
            svg,
            r##"<line x1="{MARGIN_L}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#cccccc" stroke-width="0.5"/>"##,
            MARGIN_L + plot_w
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{label}</text>"#,
            MARGIN_L - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#,
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 14.0,
        escape(&spec.x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0,
        escape(&spec.y_label)
    );

    for (idx, s) in series.iter().enumerate() {
        let color = COLORS[idx % COLORS.len()];
        let mut path = String::new();
        for &(x, y) in &s.points {
            if let (Some(tx), Some(ty)) = (transform(x, spec.x_scale), transform(y, spec.y_scale)) {
                let _ = write!(path, "{:.2},{:.2} ", px(tx), py(ty));
            }
        }
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.6" points="{}"/>"#,
            path.trim_end()
        );
        let ly = MARGIN_T + 16.0 + 18.0 * idx as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{ly:.2}" x2="{}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            MARGIN_L + plot_w - 150.0,
            MARGIN_L + plot_w - 120.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.2}" font-family="sans-serif" font-size="12">{}</text>"#,
            MARGIN_L + plot_w - 114.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn bounds(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = (hi - lo) * 0.04;
        (lo - pad, hi + pad)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn write_svg(path: &Path, spec: &ChartSpec, series: &[Series]) -> Result<()> {
    std::fs::write(path, render(spec, series))
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_valid_polylines() {
        let spec = ChartSpec {
            title: "uptake".into(),
            x_label: "t [s]".into(),
            y_label: "Q".into(),
            x_scale: Scale::Linear,
            y_scale: Scale::Linear,
        };
        let s = Series::new("solid", (0..10).map(|i| (i as f64, (i * i) as f64)).collect());
        let svg = render(&spec, &[s]);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("polyline"));
        assert!(svg.contains("uptake"));
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn log_scale_drops_nonpositive_points() {
        let spec = ChartSpec {
            title: "errors".into(),
            x_label: "t".into(),
            y_label: "RE".into(),
            x_scale: Scale::Linear,
            y_scale: Scale::Log,
        };
        let s = Series::new("re", vec![(0.0, 0.0), (1.0, 1.0e-6), (2.0, 1.0e-5)]);
        let svg = render(&spec, &[s]);
        // Two placeable points remain.
        let line = svg.lines().find(|l| l.contains("polyline")).unwrap();
        assert_eq!(line.matches(',').count(), 2);
    }

    #[test]
    fn deterministic_output() {
        let spec = ChartSpec {
            title: "t".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            x_scale: Scale::Log,
            y_scale: Scale::Log,
        };
        let s = vec![Series::new("a", vec![(1.0e3, 0.1), (1.0e4, 1.0)])];
        assert_eq!(render(&spec, &s), render(&spec, &s));
    }
}
