//! Cross-run reports: a joined metrics CSV and one SVG line chart per metric.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use latprot_core::eval::METRIC_COLUMNS;

use crate::campaign::io_error;
use crate::error::{CliError, CliResult};

/// Metrics table of one run directory.
#[derive(Clone, Debug, PartialEq)]
pub struct RunTable {
    pub label: String,
    pub rows: Vec<Vec<String>>,
}

impl RunTable {
    /// Values of `column` against round number, skipping empty cells.
    pub fn series(&self, column: usize) -> CliResult<Vec<(f64, f64)>> {
        let mut points = Vec::new();
        for row in &self.rows {
            if row[column].is_empty() {
                continue;
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| CliError::validation(format!("{}: non-numeric value {s:?}", self.label)))
            };
            points.push((parse(&row[0])?, parse(&row[column])?));
        }
        Ok(points)
    }
}

/// Reads `metrics.csv` of a run, checking its columns.
pub fn read_run(dir: &Path) -> CliResult<RunTable> {
    let path = dir.join("metrics.csv");
    let mut reader = csv::Reader::from_path(&path)
        .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != METRIC_COLUMNS {
        let missing: Vec<&str> = METRIC_COLUMNS.iter().copied().filter(|c| !header.iter().any(|h| h == c)).collect();
        let extra: Vec<&str> = header
            .iter()
            .map(String::as_str)
            .filter(|h| !METRIC_COLUMNS.contains(h))
            .collect();
        return Err(CliError::validation(format!(
            "{}: metric schema mismatch (missing columns [{}], unexpected columns [{}], expected order [{}])",
            path.display(),
            missing.join(", "),
            extra.join(", "),
            METRIC_COLUMNS.join(", ")
        )));
    }
    let rows = reader
        .records()
        .map(|r| r.map(|rec| rec.iter().map(str::to_string).collect()))
        .collect::<Result<Vec<Vec<String>>, _>>()
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    Ok(RunTable {
        label: run_label(dir),
        rows,
    })
}

fn run_label(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

/// Writes `combined_metrics.csv` and `<metric>.svg` for every metric column
/// except `round`; returns the written paths.
pub fn write_report(runs: &[PathBuf], out: &Path) -> CliResult<Vec<PathBuf>> {
    if runs.is_empty() {
        return Err(CliError::validation("report needs at least one run directory"));
    }
    let mut tables = runs.iter().map(|d| read_run(d)).collect::<CliResult<Vec<_>>>()?;
    disambiguate(&mut tables);
    fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    let mut written = Vec::new();

    let path = out.join("combined_metrics.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    let csv_err = |e: csv::Error| CliError::runtime(format!("{}: {e}", path.display()));
    let header: Vec<&str> = std::iter::once("run").chain(METRIC_COLUMNS).collect();
    w.write_record(&header).map_err(csv_err)?;
    for t in &tables {
        for row in &t.rows {
            w.write_record(std::iter::once(t.label.as_str()).chain(row.iter().map(String::as_str)))
                .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| io_error(&path, e))?;
    written.push(path);

    for (col, name) in METRIC_COLUMNS.iter().enumerate().skip(1) {
        let series = tables
            .iter()
            .map(|t| Ok((t.label.clone(), t.series(col)?)))
            .collect::<CliResult<Vec<_>>>()?;
        let path = out.join(format!("{name}.svg"));
        fs::write(&path, line_chart(name, &series)).map_err(|e| io_error(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

fn disambiguate(tables: &mut [RunTable]) {
    let labels: Vec<String> = tables.iter().map(|t| t.label.clone()).collect();
    for (i, t) in tables.iter_mut().enumerate() {
        if labels.iter().filter(|l| **l == t.label).count() > 1 {
            t.label = format!("{}#{i}", t.label);
        }
    }
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// SVG chart with one polyline per non-empty series.
pub fn line_chart(title: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let all = series.iter().flat_map(|(_, pts)| pts.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
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
        y0 -= 0.5;
        y1 += 0.5;
    }
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        svg,
        r#"<path d="M{left} {top} L{left} {bottom} L{right} {bottom}" fill="none" stroke="black"/>"#
    );
    for (v, y) in [(y0, bottom), (y1, top)] {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end" font-family="sans-serif" font-size="11">{}</text>"#,
            left - 4.0,
            y + 4.0,
            format_tick(v)
        );
    }
    for (v, x) in [(x0, left), (x1, right)] {
        let _ = writeln!(
            svg,
            r#"<text x="{x}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="11">{}</text>"#,
            bottom + 16.0,
            format_tick(v)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">round</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0
    );
    let mut drawn = 0;
    for (label, pts) in series {
        if pts.is_empty() {
            continue;
        }
        let color = PALETTE[drawn % PALETTE.len()];
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline data-run="{}" fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            escape(label),
            coords.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="{color}">{}</text>"#,
            right - 120.0,
            top + 14.0 * (drawn as f64 + 1.0),
            escape(label)
        );
        drawn += 1;
    }
    svg.push_str("</svg>\n");
    svg
}

fn format_tick(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e9 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Number of points in every `<polyline>` of an SVG document.
pub fn polyline_point_counts(svg: &str) -> Vec<usize> {
    svg.match_indices("<polyline")
        .filter_map(|(i, _)| {
            let rest = &svg[i..];
            let start = rest.find("points=\"")? + 8;
            let end = rest[start..].find('"')?;
            Some(rest[start..start + end].split_whitespace().count())
        })
        .collect()
}
