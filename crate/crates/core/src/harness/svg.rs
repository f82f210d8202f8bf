use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::table::{CurveRow, CurveTable};
use crate::error::{RepairError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    RepairProb,
    MseW,
    MseBeta,
}

impl Metric {
    fn value(self, row: &CurveRow) -> Option<f64> {
        match self {
            Metric::RepairProb => Some(row.repair_prob),
            Metric::MseW => row.mse_w,
            Metric::MseBeta => row.mse_beta,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Metric::RepairProb => "probability of exact repair",
            Metric::MseW => "mean squared error, W",
            Metric::MseBeta => "mean squared error, beta",
        }
    }
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"];
const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 50.0;

/// Line chart of `metric` against epsilon, one polyline per curve that has
/// values for the metric.
pub fn render_svg(table: &CurveTable, metric: Metric) -> Result<String> {
    let curves: Vec<(String, Vec<(f64, f64)>)> = table
        .curves()
        .into_iter()
        .filter_map(|(name, rows)| {
            let mut pts: Vec<(f64, f64)> = rows.iter().filter_map(|r| Some((r.eps, metric.value(r)?))).collect();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            (!pts.is_empty()).then_some((name, pts))
        })
        .collect();
    if curves.is_empty() {
        return Err(RepairError::Parameter(format!("no rows carry {metric:?}")));
    }
    let all = curves.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        ymax = ymax.max(y);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    let ymax = if metric == Metric::RepairProb || ymax <= 0.0 { 1.0 } else { ymax * 1.05 };
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + ph - y / ymax * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, TOP + ph, LEFT + pw, TOP + ph);
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}" stroke="black"/>"#, TOP + ph);
    for i in 0..=5 {
        let t = i as f64 / 5.0;
        let (xv, yv) = (x0 + t * (x1 - x0), t * ymax);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, sx(xv), TOP + ph + 16.0, fmt_tick(xv));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, LEFT - 6.0, sy(yv) + 4.0, fmt_tick(yv));
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">corruption fraction ε</text>"#, LEFT + pw / 2.0, H - 12.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        metric.label()
    );
    for (i, (name, pts)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, coords.join(" "));
        let ly = TOP + 14.0 + 18.0 * i as f64;
        let _ = writeln!(s, r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#, W - RIGHT + 10.0, W - RIGHT + 30.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, W - RIGHT + 36.0, ly + 4.0, escape(name));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.1e}")
    } else {
        format!("{}", (v * 1000.0).round() / 1000.0)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn emit_svg(table: &CurveTable, metric: Metric, path: impl AsRef<Path>) -> Result<()> {
    if table.rows.is_empty() {
        return Err(RepairError::Parameter("refusing to plot an empty table".into()));
    }
    std::fs::write(path, render_svg(table, metric)?)?;
    Ok(())
}
