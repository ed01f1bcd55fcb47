//! Report writers for the metric table (CSV, JSON) and SVG curve plots.

use std::fmt::Write as _;
use std::path::Path;

use crate::eval::metrics::{pr_points, roc_points};
use crate::eval::{Estimate, EvalError, MetricReport, RunResult};

pub const REPORT_COLUMNS: [&str; 10] = ["Model", "AUC ROC", "AUC PRC", "Acc", "Kappa", "Sens", "Spec", "Prec", "NPV", "F1"];

/// `0.622 ± 0.006`, or the bare mean without an interval.
pub fn format_estimate(e: &Estimate) -> String {
    match e.half_width {
        Some(h) => format!("{:.3} ± {:.3}", e.mean, h),
        None => format!("{:.3}", e.mean),
    }
}

fn rate(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "NA".into())
}

pub fn table_row(r: &MetricReport) -> [String; 10] {
    let m = &r.metrics;
    [
        r.model.clone(),
        format_estimate(&r.auc_roc),
        format_estimate(&r.auc_prc),
        m.acc.map(|a| format!("{:.2}", a * 100.0)).unwrap_or_else(|| "NA".into()),
        rate(m.kappa),
        rate(m.sens),
        rate(m.spec),
        rate(m.prec),
        rate(m.npv),
        rate(m.f1),
    ]
}

pub fn report_csv(reports: &[MetricReport]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_COLUMNS)?;
    for r in reports {
        w.write_record(table_row(r))?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_report_csv(path: &Path, reports: &[MetricReport]) -> std::io::Result<()> {
    let text = report_csv(reports).map_err(std::io::Error::other)?;
    std::fs::write(path, text)
}

pub fn write_report_json(path: &Path, report: &MetricReport) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(report).map_err(std::io::Error::other)?;
    std::fs::write(path, text + "\n")
}

pub fn read_report_json(path: &Path) -> std::io::Result<MetricReport> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(std::io::Error::other)
}

pub const CURVE_POINTS: usize = 101;

/// Mean curve with a confidence band on a fixed x grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanCurve {
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

fn interp(points: &[(f64, f64)], x: f64) -> f64 {
    // points sorted by x; take the highest y among ties at the left edge
    let mut prev = points[0];
    for &p in points {
        if p.0 >= x {
            if p.0 == prev.0 {
                return p.1.max(prev.1);
            }
            let t = (x - prev.0) / (p.0 - prev.0);
            return prev.1 + t * (p.1 - prev.1);
        }
        prev = p;
    }
    prev.1
}

fn mean_curve(per_run: Vec<Vec<f64>>, x: Vec<f64>, z: f64) -> MeanCurve {
    let mut mean = Vec::with_capacity(x.len());
    let mut lower = Vec::with_capacity(x.len());
    let mut upper = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        let vals: Vec<f64> = per_run.iter().map(|c| c[k]).collect();
        let e = Estimate::from_values(&vals, z);
        let h = e.half_width.unwrap_or(0.0);
        mean.push(e.mean);
        lower.push((e.mean - h).max(0.0));
        upper.push((e.mean + h).min(1.0));
    }
    MeanCurve { x, mean, lower, upper }
}

fn grid() -> Vec<f64> {
    (0..CURVE_POINTS).map(|i| i as f64 / (CURVE_POINTS - 1) as f64).collect()
}

pub fn mean_roc(runs: &[RunResult], z: f64) -> Result<MeanCurve, EvalError> {
    let x = grid();
    let mut per_run = Vec::with_capacity(runs.len());
    for run in runs {
        let pts = roc_points(&run.scores(), &run.labels())?;
        per_run.push(x.iter().map(|&v| interp(&pts, v)).collect());
    }
    Ok(mean_curve(per_run, x, z))
}

/// Precision is interpolated as the best precision at recall at least `r`.
pub fn mean_prc(runs: &[RunResult], z: f64) -> Result<MeanCurve, EvalError> {
    let x = grid();
    let mut per_run = Vec::with_capacity(runs.len());
    for run in runs {
        let pts = pr_points(&run.scores(), &run.labels())?;
        per_run.push(
            x.iter()
                .map(|&r| pts.iter().filter(|p| p.0 >= r).map(|p| p.1).fold(0.0, f64::max))
                .collect(),
        );
    }
    Ok(mean_curve(per_run, x, z))
}

const SIZE: f64 = 360.0;
const MARGIN: f64 = 48.0;

fn px(v: f64) -> f64 {
    MARGIN + v * SIZE
}

fn py(v: f64) -> f64 {
    MARGIN + (1.0 - v) * SIZE
}

/// Line plot of a mean curve with its shaded band.
pub fn curve_svg(curve: &MeanCurve, title: &str, x_label: &str, y_label: &str, diagonal: bool) -> String {
    let w = SIZE + 2.0 * MARGIN;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{w}" viewBox="0 0 {w} {w}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect x="{MARGIN}" y="{MARGIN}" width="{SIZE}" height="{SIZE}" fill="white" stroke="black"/>"#);
    for k in 0..=5 {
        let v = k as f64 / 5.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{v:.1}</text>"#, px(v), py(0.0) + 16.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.1}</text>"#, px(0.0) - 6.0, py(v) + 4.0);
    }
    if diagonal {
        let _ = writeln!(s, r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#999" stroke-dasharray="4 4"/>"##, px(0.0), py(0.0), px(1.0), py(1.0));
    }
    let mut band = String::new();
    for (x, u) in curve.x.iter().zip(&curve.upper) {
        let _ = write!(band, "{:.2},{:.2} ", px(*x), py(*u));
    }
    for (x, l) in curve.x.iter().zip(&curve.lower).rev() {
        let _ = write!(band, "{:.2},{:.2} ", px(*x), py(*l));
    }
    let _ = writeln!(s, r##"<polygon points="{}" fill="#1f77b4" fill-opacity="0.25" stroke="none"/>"##, band.trim_end());
    let line: Vec<String> = curve.x.iter().zip(&curve.mean).map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y))).collect();
    let _ = writeln!(s, r##"<polyline points="{}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##, line.join(" "));
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, MARGIN - 16.0, escape(title));
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, w / 2.0, w - 10.0, escape(x_label));
    let _ = writeln!(s, r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">{}</text>"#, w / 2.0, w / 2.0, escape(y_label));
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
