//! SVG line charts of probe gap against sample size.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{CliError, Result};
use crate::sweep::{SweepRow, COLUMNS};

const PANEL_W: f64 = 360.0;
const PANEL_H: f64 = 260.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 32.0;
const MARGIN_B: f64 = 44.0;
const LEGEND_W: f64 = 140.0;

const PALETTE: [&str; 10] =
    ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];

/// Parses a sweep CSV, insisting on the exact header.
pub fn read_rows(bytes: &[u8]) -> Result<Vec<SweepRow>> {
    let mut reader = csv::Reader::from_reader(bytes);
    let header = reader.headers().map_err(|e| CliError::SchemaMismatch(e.to_string()))?;
    if header.iter().ne(COLUMNS) {
        return Err(CliError::SchemaMismatch(format!("header {:?} differs from {:?}", header.iter().collect::<Vec<_>>(), COLUMNS)));
    }
    let rows: Vec<SweepRow> = reader
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| CliError::SchemaMismatch(e.to_string()))?;
    if rows.is_empty() {
        return Err(CliError::SchemaMismatch("no data rows".into()));
    }
    Ok(rows)
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for ch in text.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Mean gap over seeds for one `(n, alpha)` cell, ignoring failed rows.
type Series = BTreeMap<u64, BTreeMap<usize, (f64, usize)>>;

struct Panel {
    title: String,
    series: Series,
}

/// `[lo, hi]` in decades, padded so single points get a visible range.
fn decade_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn axis_label(exp: i32) -> String {
    format!("1e{exp}")
}

/// One panel per `(method, lambda_gamma_max)` in row order, one line per alpha.
pub fn render_svg(rows: &[SweepRow]) -> Result<String> {
    if rows.is_empty() {
        return Err(CliError::SchemaMismatch("no data rows".into()));
    }
    let mut panels: Vec<((String, u64), Panel)> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    for row in rows {
        if !alphas.iter().any(|a| a.to_bits() == row.alpha.to_bits()) {
            alphas.push(row.alpha);
        }
        let key = (row.method.to_string(), row.lambda_gamma_max.to_bits());
        let idx = match panels.iter().position(|(k, _)| *k == key) {
            Some(i) => i,
            None => {
                let title = format!("{} / {}, lambda_gamma_max = {}", row.dataset_id, row.method, row.lambda_gamma_max);
                panels.push((key, Panel { title, series: Series::new() }));
                panels.len() - 1
            }
        };
        if row.probe_gap.is_finite() && row.n > 0 {
            let cell = panels[idx].1.series.entry(row.alpha.to_bits()).or_default().entry(row.n).or_insert((0.0, 0));
            cell.0 += row.probe_gap;
            cell.1 += 1;
        }
    }
    alphas.sort_by(f64::total_cmp);

    let positive_floor = rows.iter().map(|r| r.probe_gap).filter(|g| g.is_finite() && *g > 0.0).fold(f64::INFINITY, f64::min);
    let floor = if positive_floor.is_finite() { positive_floor } else { 1e-16 };
    let y_of = |gap: f64| gap.max(floor).log10();

    let mut points = Vec::new();
    for (_, panel) in &panels {
        for cells in panel.series.values() {
            for (&n, &(sum, count)) in cells {
                points.push(((n as f64).log10(), y_of(sum / count as f64)));
            }
        }
    }
    let (x_lo, x_hi) = decade_range(points.iter().map(|p| p.0));
    let (y_lo, y_hi) = decade_range(points.iter().map(|p| p.1));

    // Columns follow the first appearance of each method, rows the noise scales.
    let mut method_order: Vec<String> = Vec::new();
    let mut lambda_order: Vec<u64> = Vec::new();
    for ((m, l), _) in &panels {
        if !method_order.contains(m) {
            method_order.push(m.clone());
        }
        if !lambda_order.contains(l) {
            lambda_order.push(*l);
        }
    }
    let cols = method_order.len();
    let rows_n = lambda_order.len();
    let width = cols as f64 * PANEL_W + LEGEND_W;
    let height = rows_n as f64 * PANEL_H;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="{width}" height="{height}" fill="white"/>"#);

    for ((method, lambda), panel) in &panels {
        let col = method_order.iter().position(|m| m == method).unwrap_or(0);
        let row = lambda_order.iter().position(|l| l == lambda).unwrap_or(0);
        let ox = col as f64 * PANEL_W;
        let oy = row as f64 * PANEL_H;
        let plot_w = PANEL_W - MARGIN_L - MARGIN_R;
        let plot_h = PANEL_H - MARGIN_T - MARGIN_B;
        let px = |x: f64| ox + MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w;
        let py = |y: f64| oy + MARGIN_T + (1.0 - (y - y_lo) / (y_hi - y_lo)) * plot_h;

        let _ = writeln!(
            svg,
            r##"<rect x="{:.2}" y="{:.2}" width="{plot_w:.2}" height="{plot_h:.2}" fill="none" stroke="#444"/>"##,
            ox + MARGIN_L,
            oy + MARGIN_T
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="12">{}</text>"#,
            ox + MARGIN_L + plot_w / 2.0,
            oy + MARGIN_T - 10.0,
            escape(&panel.title)
        );
        for exp in (x_lo.ceil() as i32)..=(x_hi.floor() as i32) {
            let x = px(exp as f64);
            let base = oy + MARGIN_T + plot_h;
            let _ = writeln!(svg, r##"<line x1="{x:.2}" y1="{base:.2}" x2="{x:.2}" y2="{:.2}" stroke="#444"/>"##, base + 4.0);
            let _ = writeln!(
                svg,
                r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                base + 16.0,
                axis_label(exp)
            );
        }
        for exp in (y_lo.ceil() as i32)..=(y_hi.floor() as i32) {
            let y = py(exp as f64);
            let left = ox + MARGIN_L;
            let _ = writeln!(svg, r##"<line x1="{:.2}" y1="{y:.2}" x2="{left:.2}" y2="{y:.2}" stroke="#444"/>"##, left - 4.0);
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                left - 6.0,
                y + 4.0,
                axis_label(exp)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">n</text>"#,
            ox + MARGIN_L + plot_w / 2.0,
            oy + PANEL_H - 8.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" transform="rotate(-90 {:.2} {:.2})">probe gap</text>"#,
            ox + 14.0,
            oy + MARGIN_T + plot_h / 2.0,
            ox + 14.0,
            oy + MARGIN_T + plot_h / 2.0
        );

        for (bits, cells) in &panel.series {
            let ai = alphas.iter().position(|a| a.to_bits() == *bits).unwrap_or(0);
            let color = PALETTE[ai % PALETTE.len()];
            let coords: Vec<(f64, f64)> =
                cells.iter().map(|(&n, &(sum, count))| (px((n as f64).log10()), py(y_of(sum / count as f64)))).collect();
            if coords.len() > 1 {
                let path: Vec<String> = coords
                    .iter()
                    .enumerate()
                    .map(|(i, (x, y))| format!("{}{x:.2},{y:.2}", if i == 0 { 'M' } else { 'L' }))
                    .collect();
                let _ = writeln!(svg, r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, path.join(" "));
            }
            for (x, y) in coords {
                let _ = writeln!(svg, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2.5" fill="{color}"/>"#);
            }
        }
    }

    let lx = cols as f64 * PANEL_W + 12.0;
    let _ = writeln!(svg, r#"<text x="{lx:.2}" y="{:.2}" font-size="12">alpha</text>"#, MARGIN_T);
    for (i, alpha) in alphas.iter().enumerate() {
        let y = MARGIN_T + 16.0 * (i + 1) as f64;
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(svg, r#"<line x1="{lx:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/>"#, y - 4.0, lx + 18.0, y - 4.0);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{y:.2}">{}</text>"#, lx + 24.0, escape(&alpha.to_string()));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn cmd_plot(csv_path: &Path, out: &Path) -> Result<()> {
    let bytes = std::fs::read(csv_path).map_err(|e| CliError::io(csv_path, e))?;
    let svg = render_svg(&read_rows(&bytes)?)?;
    std::fs::write(out, svg).map_err(|e| CliError::io(out, e))
}
