//! Static SVG 1.1 plots. Output is a pure function of the inputs: fixed
//! iteration order and fixed-precision coordinates.

use std::fmt::Write as _;

use crate::estimation::{silverman_bandwidth, ColumnSelector, SampleMatrix};
use crate::harness::CoverageSummary;
use crate::plotio::report::Report;
use crate::region::RegionMethod;
use crate::{Error, Result};

const CURVE_POINTS: usize = 256;
const BINS: usize = 2048;
const PANEL_COLUMNS: usize = 4;

struct Frame {
    left: f64,
    top: f64,
    width: f64,
    height: f64,
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn sx(&self, x: f64) -> f64 {
        self.left + (x - self.x.0) / (self.x.1 - self.x.0) * self.width
    }

    fn sy(&self, y: f64) -> f64 {
        self.top + self.height - (y - self.y.0) / (self.y.1 - self.y.0) * self.height
    }

    fn bottom(&self) -> f64 {
        self.top + self.height
    }

    fn axes(&self, out: &mut String, x_ticks: &[f64], y_ticks: &[f64], y_fmt: impl Fn(f64) -> String) {
        let _ = writeln!(
            out,
            r#"<path class="axis" d="M{:.2},{:.2}V{:.2}H{:.2}" fill="none" stroke="black"/>"#,
            self.left,
            self.top,
            self.bottom(),
            self.left + self.width
        );
        for &t in x_ticks {
            let x = self.sx(t);
            let _ = writeln!(
                out,
                r#"<text class="tick" x="{x:.2}" y="{:.2}" text-anchor="middle" font-size="10">{}</text>"#,
                self.bottom() + 14.0,
                tick_label(t)
            );
        }
        for &t in y_ticks {
            let _ = writeln!(
                out,
                r#"<text class="tick" x="{:.2}" y="{:.2}" text-anchor="end" font-size="10">{}</text>"#,
                self.left - 4.0,
                self.sy(t) + 3.0,
                y_fmt(t)
            );
        }
    }
}

fn tick_label(t: f64) -> String {
    let s = format!("{t:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

/// Roughly five round-numbered ticks covering [lo, hi].
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn header(out: &mut String, width: f64, height: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Gaussian KDE on an even grid, Silverman bandwidth, computed from linearly
/// binned data.
pub fn density_curve(values: &[f64], points: usize) -> Result<Vec<(f64, f64)>> {
    let h = silverman_bandwidth(values);
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Plot("cannot draw a density for a constant column".into()));
    }
    let (min, max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let (lo, hi) = (min - 3.0 * h, max + 3.0 * h);
    let delta = (hi - lo) / (BINS - 1) as f64;
    let mut weights = vec![0.0; BINS];
    for &v in values {
        let pos = (v - lo) / delta;
        let k = (pos.floor() as usize).min(BINS - 2);
        let frac = pos - k as f64;
        weights[k] += 1.0 - frac;
        weights[k + 1] += frac;
    }
    let norm = 1.0 / (values.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let step = (hi - lo) / (points - 1) as f64;
    Ok((0..points)
        .map(|i| {
            let x = lo + i as f64 * step;
            let y: f64 = weights
                .iter()
                .enumerate()
                .filter(|(_, w)| **w > 0.0)
                .map(|(k, w)| {
                    let u = (x - (lo + k as f64 * delta)) / h;
                    if u.abs() > 8.0 {
                        0.0
                    } else {
                        w * (-0.5 * u * u).exp()
                    }
                })
                .sum();
            (x, y * norm)
        })
        .collect())
}

fn curve_path(frame: &Frame, curve: &[(f64, f64)]) -> String {
    let mut d = String::new();
    for (i, &(x, y)) in curve.iter().enumerate() {
        let _ = write!(d, "{}{:.2},{:.2}", if i == 0 { "M" } else { "L" }, frame.sx(x), frame.sy(y));
    }
    d
}

/// Estimate index with its simultaneous interval.
struct Marked {
    estimate: f64,
    lower: f64,
    upper: f64,
}

fn marked(report: &Report, index: usize) -> Result<Marked> {
    let si = report
        .region(RegionMethod::Simultaneous)
        .ok_or_else(|| Error::Plot("report has no simultaneous region".into()))?;
    Ok(Marked {
        estimate: report.estimate.nu_hat[index],
        lower: si.lower[index],
        upper: si.upper[index],
    })
}

fn draw_density_panel(
    out: &mut String,
    frame_box: (f64, f64, f64, f64),
    values: &[f64],
    marks: &[Marked],
    title: &str,
) -> Result<()> {
    let curve = density_curve(values, CURVE_POINTS)?;
    let mut x = (curve[0].0, curve[curve.len() - 1].0);
    for m in marks {
        x.0 = x.0.min(m.lower);
        x.1 = x.1.max(m.upper);
    }
    let ymax = curve.iter().map(|p| p.1).fold(0.0, f64::max) * 1.05;
    let (left, top, width, height) = frame_box;
    let frame = Frame {
        left,
        top,
        width,
        height,
        x,
        y: (0.0, ymax),
    };
    let _ = writeln!(
        out,
        r#"<text class="title" x="{:.2}" y="{:.2}" text-anchor="middle" font-size="12">{}</text>"#,
        left + width / 2.0,
        top - 6.0,
        escape(title)
    );
    for m in marks {
        let (a, b) = (frame.sx(m.lower), frame.sx(m.upper));
        let _ = writeln!(
            out,
            r##"<rect class="band" x="{a:.2}" y="{top:.2}" width="{:.2}" height="{height:.2}" fill="#4477aa" fill-opacity="0.3"/>"##,
            b - a
        );
    }
    let _ = writeln!(
        out,
        r#"<path class="density" d="{}" fill="none" stroke="black" stroke-width="1.5"/>"#,
        curve_path(&frame, &curve)
    );
    for m in marks {
        let e = frame.sx(m.estimate);
        let _ = writeln!(
            out,
            r##"<line class="estimate" x1="{e:.2}" y1="{top:.2}" x2="{e:.2}" y2="{:.2}" stroke="#aa3377"/>"##,
            frame.bottom()
        );
    }
    frame.axes(out, &ticks(x.0, x.1), &[], |_| String::new());
    Ok(())
}

fn resolve_plot_column(samples: &SampleMatrix<f64>, column: Option<&ColumnSelector>) -> Result<usize> {
    match column {
        Some(c) => c.resolve(samples),
        None if samples.d() == 1 => Ok(0),
        None => Err(Error::Plot(format!(
            "samples have {} columns; choose the column to plot",
            samples.d()
        ))),
    }
}

/// Density of one column with a vertical line per estimate on that column and
/// a shaded band per simultaneous interval.
pub fn plot_density_bands(samples: &SampleMatrix<f64>, report: &Report, column: Option<&ColumnSelector>) -> Result<String> {
    let col = resolve_plot_column(samples, column)?;
    let spec = &report.estimate.spec;
    let resolved = spec.resolve(samples)?;
    let indices: Vec<usize> = resolved
        .mean_columns
        .iter()
        .chain(&resolved.quantile_columns)
        .enumerate()
        .filter(|(_, &c)| c == col)
        .map(|(i, _)| i)
        .collect();
    if indices.is_empty() {
        return Err(Error::Plot(format!("no estimates on column {}", samples.column_label(col))));
    }
    let marks = indices.iter().map(|&i| marked(report, i)).collect::<Result<Vec<_>>>()?;
    let (w, h) = (640.0, 400.0);
    let mut out = String::new();
    header(&mut out, w, h);
    let title = format!(
        "{}: simultaneous {}% intervals",
        samples.column_label(col),
        tick_label(100.0 * (1.0 - report.alpha))
    );
    draw_density_panel(&mut out, (50.0, 40.0, w - 80.0, h - 90.0), samples.column(col), &marks, &title)?;
    out.push_str("</svg>\n");
    Ok(out)
}

/// One panel per pair of quantile estimates on the same column. `pairs`
/// indexes the quantile targets; by default consecutive targets are paired.
pub fn plot_credible_panels(samples: &SampleMatrix<f64>, report: &Report, pairs: Option<&[(usize, usize)]>) -> Result<String> {
    let resolved = report.estimate.spec.resolve(samples)?;
    let p1 = resolved.p1();
    let p2 = resolved.p2();
    let pairs: Vec<(usize, usize)> = match pairs {
        Some(p) => p.to_vec(),
        None if p2 % 2 == 1 => {
            return Err(Error::Plot(format!(
                "{p2} quantile targets cannot be paired; give the pairs explicitly"
            )))
        }
        None => (0..p2 / 2).map(|k| (2 * k, 2 * k + 1)).collect(),
    };
    if pairs.is_empty() {
        return Err(Error::Plot("no quantile pairs to plot".into()));
    }
    for &(a, b) in &pairs {
        if a >= p2 || b >= p2 {
            return Err(Error::Plot(format!("pair ({a}, {b}) out of range for {p2} quantiles")));
        }
        if resolved.quantile_columns[a] != resolved.quantile_columns[b] {
            return Err(Error::Plot(format!("pair ({a}, {b}) mixes columns")));
        }
    }
    let cols = pairs.len().min(PANEL_COLUMNS);
    let rows = pairs.len().div_ceil(PANEL_COLUMNS);
    let (pw, ph) = (300.0, 220.0);
    let mut out = String::new();
    header(&mut out, cols as f64 * pw, rows as f64 * ph);
    for (k, &(a, b)) in pairs.iter().enumerate() {
        let col = resolved.quantile_columns[a];
        let (gx, gy) = ((k % PANEL_COLUMNS) as f64 * pw, (k / PANEL_COLUMNS) as f64 * ph);
        let _ = writeln!(out, r#"<g class="panel" transform="translate({gx:.0},{gy:.0})">"#);
        let marks = [marked(report, p1 + a)?, marked(report, p1 + b)?];
        draw_density_panel(&mut out, (20.0, 30.0, pw - 40.0, ph - 60.0), samples.column(col), &marks, &samples.column_label(col))?;
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Point-and-interval glyph per cell, grouped by alpha, with a dashed
/// reference line at each nominal level.
pub fn plot_coverage_chart(summary: &CoverageSummary) -> String {
    let mut alphas: Vec<f64> = summary.cells.iter().map(|c| c.alpha).collect();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();
    let lowest = summary
        .cells
        .iter()
        .map(|c| c.lower)
        .chain(alphas.iter().map(|a| 1.0 - a))
        .fold(f64::INFINITY, f64::min);
    let highest = summary.cells.iter().map(|c| c.upper).fold(1.0, f64::max);
    let y = ((lowest - 0.02).max(0.0), highest + 0.01);
    let (w, h) = (120.0 + 150.0 * alphas.len() as f64, 400.0);
    let frame = Frame {
        left: 60.0,
        top: 40.0,
        width: w - 90.0,
        height: h - 90.0,
        x: (0.0, 4.0 * alphas.len() as f64),
        y,
    };
    let mut out = String::new();
    header(&mut out, w, h);
    let _ = writeln!(
        out,
        r#"<text class="title" x="{:.2}" y="20" text-anchor="middle" font-size="12">Coverage, simultaneous {}% intervals</text>"#,
        w / 2.0,
        tick_label(100.0 * (1.0 - summary.meta_alpha))
    );
    for a in &alphas {
        let ry = frame.sy(1.0 - a);
        let _ = writeln!(
            out,
            r#"<line class="reference" x1="{:.2}" y1="{ry:.2}" x2="{:.2}" y2="{ry:.2}" stroke="gray" stroke-dasharray="4,3"/>"#,
            frame.left,
            frame.left + frame.width
        );
    }
    for c in &summary.cells {
        let group = alphas.iter().position(|a| *a == c.alpha).unwrap_or(0);
        let slot = RegionMethod::ALL.iter().position(|m| *m == c.method).unwrap_or(0);
        let x = frame.sx(4.0 * group as f64 + 1.0 + slot as f64);
        let _ = writeln!(out, r#"<g class="glyph">"#);
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black" stroke-width="2"/>"#,
            frame.sy(c.lower),
            frame.sy(c.upper)
        );
        let cy = frame.sy(c.estimate);
        let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{cy:.2}" r="4" fill="black"/>"#);
        if c.degenerate {
            let _ = writeln!(
                out,
                r##"<path class="flag" d="M{:.2},{:.2}l8,-8m-8,0l8,8" stroke="#cc3311" stroke-width="1.5"/>"##,
                x + 6.0,
                cy + 4.0
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle" font-size="10">{}</text>"#,
            frame.bottom() + 14.0,
            c.method.tag()
        );
        out.push_str("</g>\n");
    }
    for (g, a) in alphas.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<text class="group" x="{:.2}" y="{:.2}" text-anchor="middle" font-size="11">nominal {}</text>"#,
            frame.sx(4.0 * g as f64 + 2.0),
            frame.bottom() + 30.0,
            tick_label(1.0 - a)
        );
    }
    frame.axes(&mut out, &[], &ticks(y.0, y.1), tick_label);
    out.push_str("</svg>\n");
    out
}
