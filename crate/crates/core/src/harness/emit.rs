use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Result, SpiError};
use crate::harness::{aggregate, AggregateStats, NWedgeReport, RunRecord};

pub const RECORD_COLUMNS: [&str; 17] = [
    "trial",
    "benchmark",
    "algorithm",
    "params",
    "data_size",
    "performance",
    "normalized",
    "baseline_performance",
    "optimal_performance",
    "bound",
    "bound_violated",
    "pi_iterations",
    "converged",
    "mean_budget_used",
    "bootstrapped_fraction",
    "failed",
    "error",
];

const AGGREGATE_COLUMNS: [&str; 9] =
    ["algorithm", "params", "data_size", "metric", "n", "n_failed", "mean", "cvar_1pct", "bound_violation_rate"];

fn csv_err(e: csv::Error) -> SpiError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => SpiError::Io { path: PathBuf::from("<csv>"), source: io },
        other => SpiError::Parse { line: 0, message: format!("{other:?}") },
    }
}

fn write_rows<W: Write, T: serde::Serialize>(out: W, header: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| SpiError::Io { path: PathBuf::from("<csv>"), source: e })
}

pub fn write_records_csv<W: Write>(out: W, records: &[RunRecord]) -> Result<()> {
    write_rows(out, &RECORD_COLUMNS, records)
}

pub fn write_aggregate_csv<W: Write>(out: W, stats: &[AggregateStats]) -> Result<()> {
    write_rows(out, &AGGREGATE_COLUMNS, stats)
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| SpiError::io(path, e))
}

/// Writes `records.csv`, `aggregate.csv`, `mean.svg` and `cvar.svg`.
pub fn emit(records: &[RunRecord], output_dir: &Path) -> Result<Vec<AggregateStats>> {
    std::fs::create_dir_all(output_dir).map_err(|e| SpiError::io(output_dir, e))?;
    let stats = aggregate(records);
    let mut buf = Vec::new();
    write_records_csv(&mut buf, records)?;
    write_file(&output_dir.join("records.csv"), &buf)?;
    buf.clear();
    write_aggregate_csv(&mut buf, &stats)?;
    write_file(&output_dir.join("aggregate.csv"), &buf)?;
    write_file(&output_dir.join("mean.svg"), line_plot(&stats, "mean", |s| s.mean).as_bytes())?;
    write_file(&output_dir.join("cvar.svg"), line_plot(&stats, "1%-CVaR", |s| s.cvar_1pct).as_bytes())?;
    Ok(stats)
}

pub fn emit_n_wedge(report: &NWedgeReport, output_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(output_dir).map_err(|e| SpiError::io(output_dir, e))?;
    write_file(&output_dir.join("n_wedge.txt"), report.to_text().as_bytes())
}

const COLORS: [&str; 10] =
    ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];

/// One line per algorithm configuration, data size on a log axis.
fn line_plot(stats: &[AggregateStats], title: &str, value: impl Fn(&AggregateStats) -> Option<f64>) -> String {
    let (w, h, margin, legend) = (720.0, 420.0, 60.0, 260.0);
    let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for s in stats {
        let label = if s.params.is_empty() { s.algorithm.clone() } else { format!("{} {}", s.algorithm, s.params) };
        let Some(v) = value(s) else { continue };
        let point = ((s.data_size as f64).log10(), v);
        match series.iter_mut().find(|(l, _)| *l == label) {
            Some((_, pts)) => pts.push(point),
            None => series.push((label, vec![point])),
        }
    }
    let pts = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| margin + (x - x0) / (x1 - x0) * (w - 2.0 * margin);
    let sy = |y: f64| h - margin - (y - y0) / (y1 - y0) * (h - 2.0 * margin);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{h}" font-family="sans-serif" font-size="12">"#,
        w + legend
    );
    let _ = writeln!(svg, r#"<text x="{}" y="20" text-anchor="middle">{title}</text>"#, w / 2.0);
    let _ = writeln!(
        svg,
        r#"<rect x="{margin}" y="{margin}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - 2.0 * margin,
        h - 2.0 * margin
    );
    let _ = writeln!(svg, r#"<text x="{margin}" y="{}">{:.3}</text>"#, h - margin + 30.0, 10f64.powf(x0));
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="end">{:.3}</text>"#,
        w - margin,
        h - margin + 30.0,
        10f64.powf(x1)
    );
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{y0:.3}</text>"#, margin - 4.0, h - margin);
    let _ = writeln!(svg, r#"<text x="{}" y="{margin}" text-anchor="end">{y1:.3}</text>"#, margin - 4.0);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">data size (log scale)</text>"#,
        w / 2.0,
        h - 15.0
    );
    for (k, (label, points)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let coords: Vec<String> = points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            coords.join(" ")
        );
        let ly = margin + 16.0 * k as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            w + 5.0,
            w + 25.0
        );
        let _ = writeln!(svg, r#"<text x="{}" y="{}">{}</text>"#, w + 30.0, ly + 4.0, escape(label));
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
