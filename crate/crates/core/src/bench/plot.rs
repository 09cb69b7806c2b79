//! Deterministic SVG emission for sweep curves and std profiles.

use super::{LatentStd, RateAccuracyPoint};
use crate::error::Result;
use std::collections::BTreeMap;
use std::path::Path;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 32.0;
const MARGIN_B: f64 = 48.0;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        let w = WIDTH - MARGIN_L - MARGIN_R;
        MARGIN_L + (v - self.x_min) / (self.x_max - self.x_min) * w
    }

    fn y(&self, v: f64) -> f64 {
        let h = HEIGHT - MARGIN_T - MARGIN_B;
        HEIGHT - MARGIN_B - (v - self.y_min) / (self.y_max - self.y_min) * h
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

fn svg_open(out: &mut String) {
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));
}

fn svg_axes(out: &mut String, frame: &Frame, x_label: &str, y_label: &str) {
    let x0 = MARGIN_L;
    let x1 = WIDTH - MARGIN_R;
    let y0 = HEIGHT - MARGIN_B;
    let y1 = MARGIN_T;
    out.push_str(&format!(
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>\n"
    ));
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let xv = frame.x_min + t * (frame.x_max - frame.x_min);
        let yv = frame.y_min + t * (frame.y_max - frame.y_min);
        let xp = frame.x(xv);
        let yp = frame.y(yv);
        out.push_str(&format!(
            "<line x1=\"{xp}\" y1=\"{y0}\" x2=\"{xp}\" y2=\"{}\" stroke=\"black\"/>\n",
            y0 + 4.0
        ));
        out.push_str(&format!(
            "<text x=\"{xp}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
            y0 + 18.0,
            fmt(xv)
        ));
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{yp}\" x2=\"{x0}\" y2=\"{yp}\" stroke=\"black\"/>\n",
            x0 - 4.0
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
            x0 - 8.0,
            yp + 4.0,
            fmt(yv)
        ));
    }
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
        (x0 + x1) / 2.0,
        HEIGHT - 10.0,
        xml_escape(x_label)
    ));
    out.push_str(&format!(
        "<text x=\"16\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        xml_escape(y_label)
    ));
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Accuracy-versus-total-entropy figure: one polyline per model tag, fixed
/// palette and formatting, byte-identical output for identical input.
pub fn plot_svg(points: &[RateAccuracyPoint]) -> String {
    let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for p in points {
        series
            .entry(p.model.name().to_string())
            .or_default()
            .push((p.total_entropy_bits, p.accuracy));
    }
    for pts in series.values_mut() {
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    }

    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for pts in series.values() {
        for &(x, _) in pts {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
        }
    }
    if !x_min.is_finite() || x_min == x_max {
        x_min = 0.0;
        x_max = x_max.max(1.0).max(x_min + 1.0);
    }
    let frame = Frame { x_min, x_max, y_min: 0.0, y_max: 1.0 };

    let mut out = String::new();
    svg_open(&mut out);
    svg_axes(&mut out, &frame, "total entropy (bits)", "accuracy");
    for (i, (tag, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{},{}", fmt(frame.x(x)), fmt(frame.y(y))))
            .collect();
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            coords.join(" ")
        ));
        let ly = MARGIN_T + 16.0 * i as f64;
        out.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"3\" fill=\"{color}\"/>\n",
            WIDTH - 150.0,
            ly - 4.0
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\">{}</text>\n",
            WIDTH - 132.0,
            ly,
            xml_escape(tag)
        ));
    }
    out.push_str("</svg>\n");
    out
}

/// Writes the accuracy-vs-entropy figure.
pub fn emit_plot(points: &[RateAccuracyPoint], path: &Path) -> Result<()> {
    std::fs::write(path, plot_svg(points))?;
    Ok(())
}

/// Sorted per-entry std profile figure.
pub fn std_profile_svg(table: &[LatentStd]) -> String {
    let x_max = table.len().saturating_sub(1).max(1) as f64;
    let y_max = table.iter().map(|r| r.std).fold(0.0f64, f64::max).max(1e-12);
    let frame = Frame { x_min: 0.0, x_max, y_min: 0.0, y_max };
    let mut out = String::new();
    svg_open(&mut out);
    svg_axes(&mut out, &frame, "entry rank", "std");
    let coords: Vec<String> = table
        .iter()
        .map(|r| format!("{},{}", fmt(frame.x(r.rank as f64)), fmt(frame.y(r.std))))
        .collect();
    if !coords.is_empty() {
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            PALETTE[0],
            coords.join(" ")
        ));
    }
    out.push_str("</svg>\n");
    out
}
