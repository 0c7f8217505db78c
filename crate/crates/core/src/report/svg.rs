//! Minimal SVG 1.1 line charts: probability in [0, 1] against noise magnitude.

use std::fmt::Write as _;

const PANEL_W: f64 = 280.0;
const PANEL_H: f64 = 210.0;
const PAD_L: f64 = 46.0;
const PAD_R: f64 = 12.0;
const PAD_T: f64 = 28.0;
const PAD_B: f64 = 36.0;
const HEADER: f64 = 34.0;
const LEGEND: f64 = 26.0;

pub const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Debug, Clone, Default)]
pub struct Series {
    pub label: String,
    pub color: String,
    /// Averaged curve; `None` breaks the line.
    pub line: Vec<(f64, Option<f64>)>,
    /// Scatter points, e.g. one per network.
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Default)]
pub struct Panel {
    pub title: String,
    pub series: Vec<Series>,
}

#[derive(Debug, Clone)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub columns: usize,
    pub panels: Vec<Panel>,
}

pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn x_max(chart: &Chart) -> f64 {
    let m = chart
        .panels
        .iter()
        .flat_map(|p| &p.series)
        .flat_map(|s| s.line.iter().map(|p| p.0).chain(s.points.iter().map(|p| p.0)))
        .fold(0.0_f64, f64::max);
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

/// Pixel y of probability `p` inside a panel whose plot area starts at `top`.
pub fn y_pixel(top: f64, p: f64) -> f64 {
    top + PAD_T + (1.0 - p) * (PANEL_H - PAD_T - PAD_B)
}

impl Chart {
    pub fn render(&self) -> String {
        let cols = self.columns.max(1).min(self.panels.len().max(1));
        let rows = self.panels.len().div_ceil(cols).max(1);
        let width = cols as f64 * PANEL_W;
        let height = HEADER + rows as f64 * PANEL_H + LEGEND;
        let xmax = x_max(self);
        let mut s = String::new();
        let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="22" font-size="15" text-anchor="middle">{}</text>"#,
            width / 2.0,
            escape(&self.title)
        );
        for (i, panel) in self.panels.iter().enumerate() {
            let left = (i % cols) as f64 * PANEL_W;
            let top = HEADER + (i / cols) as f64 * PANEL_H;
            self.panel(&mut s, panel, left, top, xmax);
        }
        let mut seen: Vec<(&str, &str)> = Vec::new();
        for series in self.panels.iter().flat_map(|p| &p.series) {
            if !seen.iter().any(|(l, _)| *l == series.label) {
                seen.push((&series.label, &series.color));
            }
        }
        let ly = height - 9.0;
        for (k, (label, color)) in seen.iter().enumerate() {
            let lx = 14.0 + k as f64 * 120.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}" stroke-width="2"/>"#,
                ly - 4.0,
                lx + 18.0,
                ly - 4.0
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{ly:.1}" font-size="11">{}</text>"#,
                lx + 23.0,
                escape(label)
            );
        }
        s.push_str("</svg>\n");
        s
    }

    fn panel(&self, s: &mut String, panel: &Panel, left: f64, top: f64, xmax: f64) {
        let x0 = left + PAD_L;
        let x1 = left + PANEL_W - PAD_R;
        let px = |x: f64| x0 + x / xmax * (x1 - x0);
        let _ = writeln!(s, "<g>");
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            top + 16.0,
            escape(&panel.title)
        );
        for k in 0..=4 {
            let p = f64::from(k) / 4.0;
            let y = y_pixel(top, p);
            let (stroke, dash) = if k == 0 || k == 4 { ("#888888", "") } else { ("#dddddd", r#" stroke-dasharray="3,3""#) };
            let _ = writeln!(
                s,
                r#"<line class="grid" data-p="{p}" x1="{x0:.2}" y1="{y:.2}" x2="{x1:.2}" y2="{y:.2}" stroke="{stroke}"{dash}/>"#
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end">{p:.2}</text>"#,
                x0 - 4.0,
                y + 3.5
            );
        }
        let base = y_pixel(top, 0.0);
        for k in 0..=4 {
            let x = xmax * f64::from(k) / 4.0;
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="middle">{}</text>"#,
                px(x),
                base + 13.0,
                trim_number(x)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            base + 27.0,
            escape(&self.x_label)
        );
        for series in &panel.series {
            for &(x, y) in &series.points {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="2.2" fill="{}" fill-opacity="0.45"/>"#,
                    px(x),
                    y_pixel(top, y),
                    series.color
                );
            }
            for run in series.line.split(|p| p.1.is_none()).filter(|r| !r.is_empty()) {
                let pts: Vec<String> = run
                    .iter()
                    .map(|&(x, y)| format!("{:.2},{:.2}", px(x), y_pixel(top, y.unwrap_or(0.0))))
                    .collect();
                let _ = writeln!(
                    s,
                    r#"<polyline fill="none" stroke="{}" stroke-width="1.8" points="{}"><title>{}</title></polyline>"#,
                    series.color,
                    pts.join(" "),
                    escape(&series.label)
                );
            }
        }
        let _ = writeln!(s, "</g>");
    }
}

fn trim_number(x: f64) -> String {
    let t = format!("{x:.3}");
    let t = t.trim_end_matches('0').trim_end_matches('.');
    if t.is_empty() { "0".into() } else { t.to_string() }
}
