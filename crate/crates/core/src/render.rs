//! B plot and B_q plot rendering.
//!
//! Output is plain SVG text with a fixed element order and every coordinate
//! printed to 4 decimals, so identical inputs give identical bytes.

use std::fmt::Write;

use crate::calibrate::{AcceptanceBand, BandSide};
use crate::ccurve::{bq_transform, CcSeries};
use crate::error::Result;

/// Individual two-sided 90% reference lines.
pub const REFERENCE_LINE: f64 = 1.645;

#[derive(Debug, Clone, PartialEq)]
pub struct PlotStyle {
    pub width: f64,
    pub height: f64,
    pub title: Option<String>,
}

impl Default for PlotStyle {
    fn default() -> Self {
        PlotStyle { width: 720.0, height: 360.0, title: None }
    }
}

const MARGIN_L: f64 = 48.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 28.0;
const MARGIN_B: f64 = 36.0;

fn f4(x: f64) -> String {
    let s = format!("{x:.4}");
    if s == "-0.0000" {
        "0.0000".into()
    } else {
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Bars flagged by any band, as (1-based index, band position) pairs in
/// index order.
pub fn flagged(bars: &[f64], bands: &[AcceptanceBand]) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> =
        bands.iter().enumerate().flat_map(|(b, band)| band.violations(bars).into_iter().map(move |j| (j, b))).collect();
    out.sort_unstable();
    out
}

fn band_label(b: &AcceptanceBand) -> String {
    let side = match b.side {
        BandSide::Upper => "upper",
        BandSide::Lower => "lower",
    };
    format!("{}:{}:{}", b.first, b.last, side)
}

struct Frame {
    x0: f64,
    x1: f64,
    y_top: f64,
    y_bot: f64,
    ymax: f64,
    xmin: f64,
    xmax: f64,
}

impl Frame {
    fn new(style: &PlotStyle, xmin: f64, xmax: f64, ymax: f64) -> Self {
        Frame {
            x0: MARGIN_L,
            x1: style.width - MARGIN_R,
            y_top: MARGIN_T,
            y_bot: style.height - MARGIN_B,
            ymax,
            xmin,
            xmax,
        }
    }

    fn x(&self, v: f64) -> f64 {
        let span = (self.xmax - self.xmin).max(f64::MIN_POSITIVE);
        self.x0 + (v - self.xmin) / span * (self.x1 - self.x0)
    }

    fn y(&self, v: f64) -> f64 {
        let mid = 0.5 * (self.y_top + self.y_bot);
        mid - v / self.ymax * 0.5 * (self.y_bot - self.y_top)
    }
}

fn y_extent(values: impl Iterator<Item = f64>, bands: &[AcceptanceBand]) -> f64 {
    let m = values.chain(bands.iter().map(|b| b.bound)).fold(REFERENCE_LINE, |m, v| m.max(v.abs()));
    // round up to a half unit so the axis labels stay tidy
    (m * 1.1 * 2.0).ceil() / 2.0
}

fn header(out: &mut String, style: &PlotStyle, kind: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" data-plot="{kind}">"#,
        w = f4(style.width),
        h = f4(style.height)
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{}" height="{}" fill="white"/>"#, f4(style.width), f4(style.height));
    if let Some(t) = &style.title {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="18" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#,
            f4(style.width / 2.0),
            escape(t)
        );
    }
}

fn axes(out: &mut String, fr: &Frame, x_labels: &[(f64, String)]) {
    let _ = writeln!(
        out,
        r#"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="black" stroke-width="1"/>"#,
        f4(fr.x0),
        f4(fr.y_top),
        f4(fr.y_bot)
    );
    let _ = writeln!(
        out,
        r#"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="black" stroke-width="1"/>"#,
        f4(fr.x0),
        f4(fr.x1),
        y = f4(fr.y(0.0))
    );
    let mut tick = -fr.ymax.floor();
    while tick <= fr.ymax.floor() {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="10" text-anchor="end">{}</text>"#,
            f4(fr.x0 - 4.0),
            f4(fr.y(tick) + 3.0),
            tick
        );
        tick += 1.0;
    }
    for (v, label) in x_labels {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="10" text-anchor="middle">{}</text>"#,
            f4(fr.x(*v)),
            f4(fr.y_bot + 14.0),
            escape(label)
        );
    }
}

fn reference_lines(out: &mut String, fr: &Frame) {
    for v in [REFERENCE_LINE, -REFERENCE_LINE] {
        let _ = writeln!(
            out,
            r##"<line class="ref" x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="#888888" stroke-width="1" stroke-dasharray="5,4"/>"##,
            f4(fr.x0),
            f4(fr.x1),
            y = f4(fr.y(v))
        );
    }
}

fn stripes(out: &mut String, fr: &Frame, bands: &[AcceptanceBand], left: &[f64], right: &[f64]) {
    for b in bands {
        if b.first == 0 || b.last > left.len() || b.first > b.last {
            continue;
        }
        let xa = left[b.first - 1];
        let xb = right[b.last - 1];
        let y = fr.y(b.bound);
        let _ = writeln!(
            out,
            r##"<rect class="stripe" data-band="{}" data-bound="{}" x="{}" y="{}" width="{}" height="4.0000" fill="#bbbbbb" fill-opacity="0.6"/>"##,
            band_label(b),
            f4(b.bound),
            f4(xa),
            f4(y - 2.0),
            f4(xb - xa)
        );
    }
}

fn bars_svg(out: &mut String, fr: &Frame, bars: &[f64], centers: &[f64], width: f64, bands: &[AcceptanceBand]) {
    let flags = flagged(bars, bands);
    let y0 = fr.y(0.0);
    for (i, (&b, &cx)) in bars.iter().zip(centers).enumerate() {
        let y = fr.y(b);
        let (top, h) = if y < y0 { (y, y0 - y) } else { (y0, y - y0) };
        let hits: Vec<String> = flags.iter().filter(|f| f.0 == i + 1).map(|f| band_label(&bands[f.1])).collect();
        let flag = if hits.is_empty() { String::new() } else { format!(r#" data-flag="{}""#, hits.join(" ")) };
        let fill = if hits.is_empty() { "#3b6ea5" } else { "#c0392b" };
        let _ = writeln!(
            out,
            r#"<rect class="bar" data-index="{}" data-value="{}"{} x="{}" y="{}" width="{}" height="{}" fill="{}"/>"#,
            i + 1,
            f4(b),
            flag,
            f4(cx - width / 2.0),
            f4(top),
            f4(width),
            f4(h),
            fill
        );
    }
}

/// B plot: bars √n·ĈC(p_{S,j}) over the grid points, ±1.645 reference
/// lines and one stripe per acceptance band.
pub fn render_bplot(series: &CcSeries, bands: &[AcceptanceBand], style: &PlotStyle) -> String {
    let fr = Frame::new(style, 0.0, 1.0, y_extent(series.bars.iter().copied(), bands));
    let d = series.bars.len().max(1);
    let step = (fr.x1 - fr.x0) / (d + 1) as f64;
    let width = step * 0.8;
    let centers: Vec<f64> = series.points.iter().map(|&p| fr.x(p)).collect();
    let left: Vec<f64> = centers.iter().map(|c| c - width / 2.0).collect();
    let right: Vec<f64> = centers.iter().map(|c| c + width / 2.0).collect();

    let mut out = String::new();
    header(&mut out, style, "B");
    axes(&mut out, &fr, &[(0.0, "0".into()), (0.25, "0.25".into()), (0.5, "0.5".into()), (0.75, "0.75".into()), (1.0, "1".into())]);
    reference_lines(&mut out, &fr);
    stripes(&mut out, &fr, bands, &left, &right);
    bars_svg(&mut out, &fr, &series.bars, &centers, width, bands);
    out.push_str("</svg>\n");
    out
}

/// B_q plot: the composite-mode bars placed at q̃ = β̃₂Φ⁻¹(p) + β̃₁.
pub fn render_bqplot(series: &CcSeries, bands: &[AcceptanceBand], style: &PlotStyle) -> Result<String> {
    let pts = bq_transform(series)?;
    let qmin = pts.first().map(|p| p.0).unwrap_or(0.0);
    let qmax = pts.last().map(|p| p.0).unwrap_or(1.0);
    let pad = 0.03 * (qmax - qmin).max(1e-12);
    let fr = Frame::new(style, qmin - pad, qmax + pad, y_extent(series.bars.iter().copied(), bands));
    let centers: Vec<f64> = pts.iter().map(|p| fr.x(p.0)).collect();
    let gap = centers.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let width = if gap.is_finite() { (gap * 0.8).max(1.0) } else { 4.0 };
    let left: Vec<f64> = centers.iter().map(|c| c - width / 2.0).collect();
    let right: Vec<f64> = centers.iter().map(|c| c + width / 2.0).collect();

    let labels: Vec<(f64, String)> = (0..=4)
        .map(|k| {
            let v = qmin + (qmax - qmin) * k as f64 / 4.0;
            (v, format!("{v:.2}"))
        })
        .collect();
    let mut out = String::new();
    header(&mut out, style, "Bq");
    axes(&mut out, &fr, &labels);
    reference_lines(&mut out, &fr);
    stripes(&mut out, &fr, bands, &left, &right);
    bars_svg(&mut out, &fr, &series.bars, &centers, width, bands);
    out.push_str("</svg>\n");
    Ok(out)
}

/// A curve p ↦ y on [0, 1] as a polyline, e.g. a population CC.
pub fn render_curve(points: &[(f64, f64)], style: &PlotStyle) -> String {
    let ymax = y_extent(points.iter().map(|p| p.1), &[]).min(50.0);
    let fr = Frame::new(style, 0.0, 1.0, ymax);
    let mut out = String::new();
    header(&mut out, style, "curve");
    axes(&mut out, &fr, &[(0.0, "0".into()), (0.5, "0.5".into()), (1.0, "1".into())]);
    let path: Vec<String> =
        points.iter().map(|&(x, y)| format!("{},{}", f4(fr.x(x)), f4(fr.y(y.clamp(-ymax, ymax))))).collect();
    let _ = writeln!(
        out,
        r##"<polyline class="curve" points="{}" fill="none" stroke="#3b6ea5" stroke-width="1.5"/>"##,
        path.join(" ")
    );
    out.push_str("</svg>\n");
    out
}

/// Monospaced sketch of a B plot: one column per bar, `#` for the bar,
/// `.` on the ±1.645 rows, `=` where a stripe sits and `!` atop flagged bars.
pub fn terminal_sketch(series: &CcSeries, bands: &[AcceptanceBand], half_rows: usize) -> String {
    let bars = &series.bars;
    let half = half_rows.max(2);
    let ymax = y_extent(bars.iter().copied(), bands);
    let row_of = |v: f64| -> i64 { (v / ymax * half as f64).round() as i64 };
    let flags = flagged(bars, bands);
    let ref_row = row_of(REFERENCE_LINE);

    let mut out = String::new();
    for r in (-(half as i64)..=half as i64).rev() {
        let label = if r == ref_row {
            format!("{:>7}", format!("{REFERENCE_LINE:+.3}"))
        } else if r == -ref_row {
            format!("{:>7}", format!("{:+.3}", -REFERENCE_LINE))
        } else if r == 0 {
            format!("{:>7}", "0")
        } else {
            " ".repeat(7)
        };
        out.push_str(&label);
        out.push_str(" |");
        for (i, &b) in bars.iter().enumerate() {
            let br = row_of(b);
            let is_flag = flags.iter().any(|f| f.0 == i + 1);
            let on_bar = (br > 0 && r > 0 && r <= br) || (br < 0 && r < 0 && r >= br);
            let stripe = bands.iter().any(|bd| (bd.first..=bd.last).contains(&(i + 1)) && row_of(bd.bound) == r);
            let c = if on_bar && is_flag && r == br {
                '!'
            } else if on_bar {
                '#'
            } else if stripe {
                '='
            } else if r == ref_row || r == -ref_row {
                '.'
            } else if r == 0 {
                '-'
            } else {
                ' '
            };
            out.push(c);
        }
        out.push('\n');
    }
    out
}
