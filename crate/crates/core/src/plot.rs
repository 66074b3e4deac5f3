//! Minimal SVG rendering of metric curves and abnormality maps.

use std::fmt::Write as _;

use ndarray::Array2;

use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// One line, optionally with a shaded band (lower, upper) around it.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub values: Vec<f64>,
    pub band: Option<(Vec<f64>, Vec<f64>)>,
}

impl Series {
    pub fn line(label: impl Into<String>, values: Vec<f64>) -> Self {
        Series {
            label: label.into(),
            values,
            band: None,
        }
    }

    pub fn with_band(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        self.band = Some((lower, upper));
        self
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn nice_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Curves against the penalty grid on a logarithmic x axis.
pub fn curve_svg(title: &str, y_label: &str, rho_grid: &[f64], series: &[Series]) -> Result<String> {
    if rho_grid.is_empty() || rho_grid.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
        return Err(Error::InvalidArgument("plot grid must be positive and finite".into()));
    }
    for s in series {
        let band_ok = s
            .band
            .as_ref()
            .is_none_or(|(lo, hi)| lo.len() == rho_grid.len() && hi.len() == rho_grid.len());
        if s.values.len() != rho_grid.len() || !band_ok {
            return Err(Error::Dimension(format!("series '{}' does not match the grid", s.label)));
        }
    }
    let finite = series
        .iter()
        .flat_map(|s| {
            let band = s.band.iter().flat_map(|(lo, hi)| lo.iter().chain(hi));
            s.values.iter().chain(band)
        })
        .copied()
        .filter(|v| v.is_finite());
    let (mut y_min, mut y_max) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !y_min.is_finite() {
        (y_min, y_max) = (0.0, 1.0);
    }
    if y_max - y_min < 1e-12 {
        y_min -= 0.5;
        y_max += 0.5;
    }
    let pad = 0.05 * (y_max - y_min);
    let (y_min, y_max) = (y_min - pad, y_max + pad);
    let (lx_min, lx_max) = (rho_grid[0].log10(), rho_grid[rho_grid.len() - 1].log10());
    let lx_span = if lx_max > lx_min { lx_max - lx_min } else { 1.0 };
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let px = |rho: f64| MARGIN_LEFT + (rho.log10() - lx_min) / lx_span * plot_w;
    let py = |v: f64| MARGIN_TOP + (y_max - v) / (y_max - y_min) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    let first_decade = lx_min.floor() as i32;
    let last_decade = lx_max.ceil() as i32;
    for e in first_decade..=last_decade {
        let rho = 10f64.powi(e);
        if rho.log10() < lx_min - 1e-9 || rho.log10() > lx_max + 1e-9 {
            continue;
        }
        let x = px(rho);
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="black"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            MARGIN_TOP + plot_h,
            MARGIN_TOP + plot_h + 5.0,
            MARGIN_TOP + plot_h + 18.0,
            nice_label(rho)
        );
    }
    for t in 0..=4 {
        let v = y_min + (y_max - y_min) * t as f64 / 4.0;
        let y = py(v);
        let _ = writeln!(
            svg,
            r#"<line x1="{:.1}" y1="{y:.1}" x2="{MARGIN_LEFT}" y2="{y:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            MARGIN_LEFT - 5.0,
            MARGIN_LEFT - 8.0,
            y + 4.0,
            nice_label(v)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">ρ</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0,
        escape(y_label)
    );

    for (idx, s) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        if let Some((lo, hi)) = &s.band {
            let pts: Vec<(f64, f64)> = rho_grid
                .iter()
                .zip(hi)
                .filter(|(_, v)| v.is_finite())
                .map(|(r, v)| (px(*r), py(*v)))
                .chain(
                    rho_grid
                        .iter()
                        .zip(lo)
                        .rev()
                        .filter(|(_, v)| v.is_finite())
                        .map(|(r, v)| (px(*r), py(*v))),
                )
                .collect();
            if pts.len() >= 3 {
                let path: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
                let _ = writeln!(
                    svg,
                    r#"<polygon points="{}" fill="{color}" fill-opacity="0.18" stroke="none"/>"#,
                    path.join(" ")
                );
            }
        }
        let pts: Vec<String> = rho_grid
            .iter()
            .zip(&s.values)
            .filter(|(_, v)| v.is_finite())
            .map(|(r, v)| format!("{:.1},{:.1}", px(*r), py(*v)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            pts.join(" ")
        );
        let ly = MARGIN_TOP + 14.0 + 18.0 * idx as f64;
        let lx = WIDTH - MARGIN_RIGHT + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Heat map of a regions × subjects matrix; NaN cells are drawn grey.
pub fn heatmap_svg(title: &str, values: &Array2<f64>, row_labels: &[String], col_labels: &[String]) -> Result<String> {
    let (rows, cols) = values.dim();
    if rows != row_labels.len() || cols != col_labels.len() {
        return Err(Error::Dimension("heat map labels do not match the matrix".into()));
    }
    let cell = 14.0;
    let left = 90.0;
    let top = 70.0;
    let width = left + cell * cols as f64 + 20.0;
    let height = top + cell * rows as f64 + 20.0;
    let max = values.iter().copied().filter(|v| v.is_finite()).fold(0.0f64, |a, v| a.max(v.abs()));
    let scale = if max > 0.0 { max } else { 1.0 };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="9">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{left}" y="18" font-size="13">{} (max {})</text>"#, escape(title), nice_label(max));
    for (c, label) in col_labels.iter().enumerate() {
        let x = left + cell * (c as f64 + 0.5);
        let _ = writeln!(
            svg,
            r#"<text x="{x:.1}" y="{:.1}" transform="rotate(-60 {x:.1} {:.1})">{}</text>"#,
            top - 4.0,
            top - 4.0,
            escape(label)
        );
    }
    for (r, label) in row_labels.iter().enumerate() {
        let y = top + cell * r as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            left - 4.0,
            y + cell - 3.0,
            escape(label)
        );
        for c in 0..cols {
            let v = values[[r, c]];
            let fill = if v.is_finite() {
                // White to red by magnitude.
                let t = (v.abs() / scale).clamp(0.0, 1.0);
                let gb = (255.0 * (1.0 - t)).round() as u8;
                format!("#ff{gb:02x}{gb:02x}")
            } else {
                "#bbbbbb".into()
            };
            let _ = writeln!(
                svg,
                r##"<rect x="{:.1}" y="{y:.1}" width="{cell}" height="{cell}" fill="{fill}" stroke="#eeeeee"/>"##,
                left + cell * c as f64
            );
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
