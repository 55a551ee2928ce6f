//! Minimal SVG 1.1 charts rendered from report tables. Values are plotted on
//! a fixed [0, 1] axis; all coordinates are printed with two decimals so the
//! output is byte-stable.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::report::{Cell, Report, Table};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    /// Per-center dots over per-metric boxes (tables `per_center`, `dispersion`).
    Boxplot,
    /// One line per criterion over the threshold grid (table `sweep`).
    Curve,
    /// Paired bars per criterion (table `agreement`).
    Bars,
}

const W: f64 = 640.0;
const H: f64 = 360.0;
const LEFT: f64 = 50.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn y_of(v: f64) -> f64 {
    let plot_h = H - TOP - BOTTOM;
    TOP + plot_h * (1.0 - v.clamp(0.0, 1.0))
}

fn header(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, r##"<?xml version="1.0" encoding="UTF-8"?>"##);
    let _ = writeln!(
        s,
        r##"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"##
    );
    let _ = writeln!(s, r##"<title>{}</title>"##, esc(title));
    // y axis with ticks at 0, 0.25, ..., 1
    let _ = writeln!(s, r##"<g class="axis" stroke="#000">"##);
    let _ = writeln!(s, r##"<line x1="{LEFT:.2}" y1="{:.2}" x2="{LEFT:.2}" y2="{:.2}"/>"##, y_of(0.0), y_of(1.0));
    let _ = writeln!(s, r##"<line x1="{LEFT:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/>"##, y_of(0.0), W - RIGHT, y_of(0.0));
    for k in 0..=4 {
        let v = f64::from(k) / 4.0;
        let _ = writeln!(
            s,
            r##"<text x="{:.2}" y="{:.2}" stroke="none" text-anchor="end">{v}</text>"##,
            LEFT - 4.0,
            y_of(v) + 4.0
        );
    }
    let _ = writeln!(s, "</g>");
    s
}

fn numeric(cell: &Cell) -> Option<f64> {
    cell.as_f64().filter(|v| v.is_finite())
}

fn label(row: &[Cell]) -> String {
    match row.first() {
        Some(Cell::Text(s)) => s.clone(),
        Some(Cell::Number(x)) => x.to_string(),
        _ => String::new(),
    }
}

/// Boxes per metric from `dispersion` (rows = metrics, columns min, q1,
/// median, q3, max) and one `<g class="center">` group per `per_center` row.
pub fn boxplot_svg(per_center: &Table, dispersion: &Table, title: &str) -> String {
    let metrics: Vec<&str> = dispersion.rows.iter().filter_map(|r| r.first()?.as_str()).collect();
    let slot = (W - LEFT - RIGHT) / metrics.len().max(1) as f64;
    let x_of = |j: usize| LEFT + slot * (j as f64 + 0.5);
    let mut s = header(title);

    let _ = writeln!(s, r##"<g class="boxes" fill="none" stroke="#444">"##);
    for (j, m) in metrics.iter().enumerate() {
        let stat = |c: &str| dispersion.get(m, c).and_then(numeric);
        let x = x_of(j);
        let half = slot * 0.2;
        if let (Some(lo), Some(q1), Some(med), Some(q3), Some(hi)) =
            (stat("min"), stat("q1"), stat("median"), stat("q3"), stat("max"))
        {
            let _ = writeln!(s, r##"<g class="box" data-metric="{}">"##, esc(m));
            let _ = writeln!(s, r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}"/>"##, y_of(lo), y_of(q1));
            let _ = writeln!(s, r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}"/>"##, y_of(q3), y_of(hi));
            let _ = writeln!(
                s,
                r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}"/>"##,
                x - half,
                y_of(q3),
                2.0 * half,
                y_of(q1) - y_of(q3)
            );
            let _ = writeln!(
                s,
                r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke-width="2"/>"##,
                x - half,
                y_of(med),
                x + half,
                y_of(med)
            );
            let _ = writeln!(s, "</g>");
        }
        let _ = writeln!(
            s,
            r##"<text x="{x:.2}" y="{:.2}" stroke="none" fill="#000" text-anchor="middle">{}</text>"##,
            H - BOTTOM + 16.0,
            esc(m)
        );
    }
    let _ = writeln!(s, "</g>");

    let n_centers = per_center.rows.len();
    for (i, row) in per_center.rows.iter().enumerate() {
        let name = label(row);
        let color = PALETTE[i % PALETTE.len()];
        // spread centers horizontally inside each metric slot
        let dx = if n_centers > 1 {
            slot * 0.3 * (i as f64 / (n_centers - 1) as f64 - 0.5)
        } else {
            0.0
        };
        let _ = writeln!(s, r##"<g class="center" data-center="{}" fill="{color}">"##, esc(&name));
        for (j, m) in metrics.iter().enumerate() {
            let Some(v) = per_center.column(m).and_then(|c| numeric(&row[c])) else { continue };
            let _ = writeln!(s, r##"<circle cx="{:.2}" cy="{:.2}" r="3"/>"##, x_of(j) + dx, y_of(v));
        }
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}

/// First column is the x value in [0, 1]; every other column is a series.
pub fn curves_svg(table: &Table, title: &str) -> String {
    let plot_w = W - LEFT - RIGHT;
    let x_of = |v: f64| LEFT + plot_w * v.clamp(0.0, 1.0);
    let mut s = header(title);
    for (k, name) in table.columns.iter().enumerate().skip(1) {
        let color = PALETTE[(k - 1) % PALETTE.len()];
        let pts: Vec<String> = table
            .rows
            .iter()
            .filter_map(|r| Some((numeric(&r[0])?, numeric(&r[k])?)))
            .map(|(x, y)| format!("{:.2},{:.2}", x_of(x), y_of(y)))
            .collect();
        let _ = writeln!(s, r##"<g class="series" data-series="{}">"##, esc(name));
        let _ = writeln!(
            s,
            r##"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"##,
            pts.join(" ")
        );
        let _ = writeln!(
            s,
            r##"<text x="{:.2}" y="{:.2}" fill="{color}">{}</text>"##,
            W - RIGHT - 120.0,
            TOP + 14.0 * k as f64,
            esc(name)
        );
        let _ = writeln!(s, "</g>");
    }
    for k in 0..=4 {
        let v = f64::from(k) / 4.0;
        let _ = writeln!(
            s,
            r##"<text x="{:.2}" y="{:.2}" text-anchor="middle">{v}</text>"##,
            x_of(v),
            H - BOTTOM + 16.0
        );
    }
    s.push_str("</svg>\n");
    s
}

/// One `<g class="category">` per row, with a bar for each of `series`.
pub fn bars_svg(table: &Table, series: &[&str], title: &str) -> String {
    let slot = (W - LEFT - RIGHT) / table.rows.len().max(1) as f64;
    let bar_w = slot * 0.8 / series.len().max(1) as f64;
    let mut s = header(title);
    for (i, row) in table.rows.iter().enumerate() {
        let name = label(row);
        let x0 = LEFT + slot * i as f64 + slot * 0.1;
        let _ = writeln!(s, r##"<g class="category" data-category="{}">"##, esc(&name));
        for (k, col) in series.iter().enumerate() {
            let Some(v) = table.column(col).and_then(|c| numeric(&row[c])) else { continue };
            let _ = writeln!(
                s,
                r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"><title>{}: {}</title></rect>"##,
                x0 + bar_w * k as f64,
                y_of(v),
                bar_w,
                y_of(0.0) - y_of(v),
                PALETTE[k % PALETTE.len()],
                esc(col),
                v
            );
        }
        let _ = writeln!(
            s,
            r##"<text x="{:.2}" y="{:.2}" text-anchor="end" transform="rotate(-30 {:.2} {:.2})">{}</text>"##,
            x0 + slot * 0.4,
            H - BOTTOM + 14.0,
            x0 + slot * 0.4,
            H - BOTTOM + 14.0,
            esc(&name)
        );
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}

fn need<'r>(report: &'r Report, name: &str) -> Result<&'r Table> {
    report
        .table(name)
        .ok_or_else(|| Error::config(format!("report of `{}` has no table {name:?}", report.command)))
}

/// Renders `kind` from the matching report tables and writes it to `path`.
pub fn emit_plot(report: &Report, kind: PlotKind, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let svg = match kind {
        PlotKind::Boxplot => boxplot_svg(
            need(report, "per_center")?,
            need(report, "dispersion")?,
            "Metric values per center",
        ),
        PlotKind::Curve => curves_svg(need(report, "sweep")?, "AP over the localization threshold"),
        PlotKind::Bars => bars_svg(
            need(report, "agreement")?,
            &["accepted_useful", "rejected_not_useful"],
            "Agreement with clinical ratings",
        ),
    };
    fs::write(path, svg).map_err(|e| Error::io(path, e))
}
