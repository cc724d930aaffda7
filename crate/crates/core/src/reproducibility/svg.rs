//! Deterministic Bland-Altman plots: controls in red, bias solid, limits
//! dashed, patient differences overlaid in blue.

use std::fmt::Write as _;
use std::path::Path;

use super::{classify_change, AgreementModel, PlotPoint, ReproError};
use crate::io::format_significant;

const PANEL_W: f64 = 320.0;
const PANEL_H: f64 = 260.0;
const MARGIN_L: f64 = 62.0;
const MARGIN_R: f64 = 14.0;
const MARGIN_T: f64 = 28.0;
const MARGIN_B: f64 = 46.0;
const COLUMNS: usize = 4;
const TICKS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct PatientPoint {
    pub label: String,
    pub point: PlotPoint,
}

/// One metric's plot.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub model: AgreementModel,
    pub controls: Vec<PlotPoint>,
    pub patients: Vec<PatientPoint>,
}

struct Axis {
    lo: f64,
    hi: f64,
    px_lo: f64,
    px_hi: f64,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64>, px_lo: f64, px_hi: f64) -> Self {
        let (mut lo, mut hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
        if !lo.is_finite() {
            (lo, hi) = (-1.0, 1.0);
        }
        let span = hi - lo;
        let pad = if span > 0.0 { 0.08 * span } else { 0.1 * lo.abs().max(1e-6) };
        Self { lo: lo - pad, hi: hi + pad, px_lo, px_hi }
    }

    fn px(&self, v: f64) -> f64 {
        self.px_lo + (v - self.lo) / (self.hi - self.lo) * (self.px_hi - self.px_lo)
    }

    fn ticks(&self) -> impl Iterator<Item = f64> + '_ {
        (0..TICKS).map(move |i| self.lo + (self.hi - self.lo) * i as f64 / (TICKS - 1) as f64)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn panel_svg(out: &mut String, panel: &Panel, x0: f64, y0: f64) {
    let m = &panel.model;
    let patient_points = panel.patients.iter().map(|p| &p.point);
    let all = || panel.controls.iter().chain(patient_points.clone());
    let (left, right) = (x0 + MARGIN_L, x0 + PANEL_W - MARGIN_R);
    let (top, bottom) = (y0 + MARGIN_T, y0 + PANEL_H - MARGIN_B);
    let xa = Axis::new(all().map(|p| p.mean), left, right);
    let ya = Axis::new(all().map(|p| p.diff).chain([m.loa_low, m.loa_high, m.bias]), bottom, top);
    let unit = m.metric.unit();
    let unit = if unit.is_empty() { String::new() } else { format!(" ({unit})") };

    let _ = writeln!(out, r#"<g class="panel" data-metric="{}" data-level="{}">"#, m.metric, m.level);
    let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-weight="bold">{} {}</text>"#, (left + right) / 2.0, y0 + 18.0, m.metric, m.level);
    let _ = writeln!(out, r##"<rect x="{left:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#444"/>"##, right - left, bottom - top);
    for t in xa.ticks() {
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="9">{}</text>"#, xa.px(t), bottom + 12.0, format_significant(t, 3));
    }
    for t in ya.ticks() {
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-size="9">{}</text>"#, left - 4.0, ya.px(t) + 3.0, format_significant(t, 3));
    }
    let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="10">Mean of sessions, {}{}</text>"#, (left + right) / 2.0, bottom + 30.0, m.metric, escape(&unit));
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="10" transform="rotate(-90 {:.2} {:.2})">Difference, {}{}</text>"#,
        x0 + 14.0, (top + bottom) / 2.0, x0 + 14.0, (top + bottom) / 2.0, m.metric, escape(&unit)
    );
    let hline = |out: &mut String, v: f64, class: &str, dash: &str| {
        let _ = writeln!(out, r##"<line class="{class}" x1="{left:.2}" y1="{y:.2}" x2="{right:.2}" y2="{y:.2}" stroke="#d62728"{dash}/>"##, y = ya.px(v));
    };
    hline(out, m.bias, "bias", "");
    hline(out, m.loa_low, "loa", r#" stroke-dasharray="6 4""#);
    hline(out, m.loa_high, "loa", r#" stroke-dasharray="6 4""#);
    for p in &panel.controls {
        let _ = writeln!(out, r##"<circle class="control" cx="{:.2}" cy="{:.2}" r="3" fill="#d62728"/>"##, xa.px(p.mean), ya.px(p.diff));
    }
    for p in &panel.patients {
        let verdict = classify_change(p.point.diff, m);
        let (class, stroke) = if verdict.is_significant() { ("patient significant", r##" stroke="#000" stroke-width="1.5""##) } else { ("patient", "") };
        let _ = writeln!(
            out,
            r##"<rect class="{class}" data-patient="{}" data-verdict="{verdict}" x="{:.2}" y="{:.2}" width="6" height="6" fill="#1f77b4"{stroke}/>"##,
            escape(&p.label), xa.px(p.point.mean) - 3.0, ya.px(p.point.diff) - 3.0
        );
    }
    out.push_str("</g>\n");
}

/// Panels laid out row-major, four per row.
pub fn bland_altman_svg(panels: &[Panel]) -> String {
    let cols = panels.len().clamp(1, COLUMNS);
    let rows = panels.len().div_ceil(COLUMNS).max(1);
    let (w, h) = (PANEL_W * cols as f64, PANEL_H * rows as f64);
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, panel) in panels.iter().enumerate() {
        panel_svg(&mut out, panel, PANEL_W * (i % COLUMNS) as f64, PANEL_H * (i / COLUMNS) as f64);
    }
    out.push_str("</svg>\n");
    out
}

pub fn write_bland_altman_svg(panels: &[Panel], path: &Path) -> Result<(), ReproError> {
    std::fs::write(path, bland_altman_svg(panels))?;
    Ok(())
}

/// Single-panel convenience wrapper.
pub fn render_bland_altman_svg(
    model: &AgreementModel,
    control_points: &[PlotPoint],
    patient_points: &[PatientPoint],
    path: &Path,
) -> Result<(), ReproError> {
    let panel = Panel { model: *model, controls: control_points.to_vec(), patients: patient_points.to_vec() };
    write_bland_altman_svg(&[panel], path)
}
