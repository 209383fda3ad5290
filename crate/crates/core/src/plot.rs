//! Plot data for cumulative-effect curves: a long-format CSV (the data of
//! record) and a static SVG with one step line and 95% band per estimator.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hazards::{CoefficientCurve, EffectSummary};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN: (f64, f64, f64, f64) = (70.0, 20.0, 30.0, 50.0); // left, right, top, bottom
const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

#[derive(Debug, Clone, Copy)]
pub struct PlotSeries<'a> {
    pub label: &'a str,
    pub curve: &'a CoefficientCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub estimator: String,
    pub time_days: f64,
    pub estimate_pct_points: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

pub fn plot_rows(series: &[PlotSeries<'_>]) -> Vec<PlotRow> {
    series
        .iter()
        .flat_map(|s| {
            s.curve.steps.iter().map(move |step| {
                let e = EffectSummary::from_coefficient(step.time, step.treatment(), step.treatment_var().max(0.0).sqrt());
                PlotRow {
                    estimator: s.label.to_string(),
                    time_days: step.time,
                    estimate_pct_points: e.estimate,
                    ci_low: e.ci_low,
                    ci_high: e.ci_high,
                }
            })
        })
        .collect()
}

pub fn write_plot_csv(path: impl AsRef<Path>, rows: &[PlotRow]) -> Result<()> {
    let path = path.as_ref();
    let mut wtr = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    if rows.is_empty() {
        wtr.write_record(["estimator", "time_days", "estimate_pct_points", "ci_low", "ci_high"])
            .map_err(|e| Error::csv(path, e))?;
    }
    for r in rows {
        wtr.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

pub fn read_plot_csv(path: impl AsRef<Path>) -> Result<Vec<PlotRow>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    rdr.deserialize()
        .map(|r| r.map_err(|e| Error::csv(path, e)))
        .collect()
}

struct Frame {
    t_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn x(&self, t: f64) -> f64 {
        MARGIN.0 + t / self.t_max * (WIDTH - MARGIN.0 - MARGIN.1)
    }

    fn y(&self, v: f64) -> f64 {
        let h = HEIGHT - MARGIN.2 - MARGIN.3;
        MARGIN.2 + (self.y_max - v) / (self.y_max - self.y_min) * h
    }
}

/// Vertices of a right-continuous step function.
fn step_path(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(points.len() * 2);
    for (i, &(t, v)) in points.iter().enumerate() {
        if i > 0 {
            out.push((t, points[i - 1].1));
        }
        out.push((t, v));
    }
    out
}

fn coords(frame: &Frame, pts: impl IntoIterator<Item = (f64, f64)>) -> String {
    pts.into_iter()
        .map(|(t, v)| format!("{:.2},{:.2}", frame.x(t), frame.y(v)))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn render_svg(rows: &[PlotRow], title: &str) -> String {
    let mut labels: Vec<&str> = Vec::new();
    for r in rows {
        if !labels.contains(&r.estimator.as_str()) {
            labels.push(&r.estimator);
        }
    }
    let t_max = rows.iter().map(|r| r.time_days).fold(0.0, f64::max).max(1e-9);
    let mut y_min = rows.iter().map(|r| r.ci_low).fold(0.0, f64::min);
    let mut y_max = rows.iter().map(|r| r.ci_high).fold(0.0, f64::max);
    if y_max - y_min < 1e-12 {
        y_min -= 1.0;
        y_max += 1.0;
    }
    let pad = 0.05 * (y_max - y_min);
    let frame = Frame {
        t_max,
        y_min: y_min - pad,
        y_max: y_max + pad,
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{:.2}" y="18" text-anchor="middle">{}</text>"#, WIDTH / 2.0, escape(title));
    let (x0, x1) = (frame.x(0.0), frame.x(t_max));
    let (y0, y1) = (frame.y(frame.y_min), frame.y(frame.y_max));
    let _ = writeln!(svg, r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y0:.2}" stroke="black"/>"#);
    let _ = writeln!(svg, r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x0:.2}" y2="{y1:.2}" stroke="black"/>"#);
    let zero = frame.y(0.0);
    let _ = writeln!(svg, r#"<line x1="{x0:.2}" y1="{zero:.2}" x2="{x1:.2}" y2="{zero:.2}" stroke="gray" stroke-dasharray="4 3"/>"#);
    for i in 0..=4 {
        let t = t_max * i as f64 / 4.0;
        let v = frame.y_min + (frame.y_max - frame.y_min) * i as f64 / 4.0;
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{:.0}</text>"#, frame.x(t), y0 + 18.0, t);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{:.2}</text>"#, x0 - 6.0, frame.y(v) + 4.0, v);
    }
    let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">days of follow-up</text>"#, (x0 + x1) / 2.0, HEIGHT - 10.0);
    let _ = writeln!(
        svg,
        r#"<text transform="translate(16 {:.2}) rotate(-90)" text-anchor="middle">difference in cumulative incidence (pct points)</text>"#,
        (y0 + y1) / 2.0
    );

    for (i, label) in labels.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let own: Vec<&PlotRow> = rows.iter().filter(|r| r.estimator == *label).collect();
        let band = own.iter().any(|r| r.ci_high > r.ci_low);
        if band {
            let upper = step_path(&own.iter().map(|r| (r.time_days, r.ci_high)).collect::<Vec<_>>());
            let mut lower = step_path(&own.iter().map(|r| (r.time_days, r.ci_low)).collect::<Vec<_>>());
            lower.reverse();
            let _ = writeln!(
                svg,
                r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                coords(&frame, upper.into_iter().chain(lower))
            );
        }
        let line = step_path(&own.iter().map(|r| (r.time_days, r.estimate_pct_points)).collect::<Vec<_>>());
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            coords(&frame, line)
        );
        let ly = MARGIN.2 + 16.0 * (i as f64 + 1.0);
        let _ = writeln!(svg, r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#, x1 - 120.0, x1 - 100.0);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, x1 - 94.0, ly + 4.0, escape(label));
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes the CSV and, if asked, the SVG. Returns the rows written.
pub fn emit_plot_data(series: &[PlotSeries<'_>], csv_path: &Path, svg_path: Option<&Path>) -> Result<Vec<PlotRow>> {
    let rows = plot_rows(series);
    write_plot_csv(csv_path, &rows)?;
    if let Some(svg) = svg_path {
        std::fs::write(svg, render_svg(&rows, "Cumulative treatment effect")).map_err(|e| Error::io(svg, e))?;
    }
    Ok(rows)
}
