use std::path::{Path, PathBuf};

use plotters::prelude::*;

use super::table::Table;
use super::ExperimentError;

fn plot_err(e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Io(std::io::Error::other(e.to_string()))
}

/// Picks the abscissa column: `epsilon`, then `delta`, then `radius_bins`.
fn abscissa(table: &Table) -> Option<usize> {
    ["epsilon", "delta", "radius_bins"].iter().find_map(|c| table.column_index(c))
}

/// Writes one SVG per plottable metric as `<dir>/<experiment>_<metric>.svg`.
///
/// Sweep tables get a log-log line per metric against ε (or δ). Histogram tables
/// (a `mass` column next to `bin_*` columns) get a bar chart over the flat bin
/// index. An empty table only logs a warning.
pub fn emit_plots(table: &Table, experiment: &str, dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    if table.is_empty() {
        log::warn!("{experiment}: empty table, no plots written");
        return Ok(Vec::new());
    }
    std::fs::create_dir_all(dir)?;
    if table.column_index("bin_0").is_some() {
        if let Some(k) = table.column_index("mass") {
            let path = dir.join(format!("{experiment}_mass.svg"));
            histogram(table, k, &path)?;
            return Ok(vec![path]);
        }
    }
    let Some(xk) = abscissa(table) else {
        log::warn!("{experiment}: no epsilon or delta column, no plots written");
        return Ok(Vec::new());
    };
    let mut written = Vec::new();
    for (k, name) in table.header.iter().enumerate() {
        if k == xk || name == "instance" {
            continue;
        }
        let pts: Vec<(f64, f64)> = table
            .rows
            .iter()
            .filter_map(|r| Some((r[xk]?, r[k]?)))
            .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
            .collect();
        if pts.is_empty() {
            continue;
        }
        let path = dir.join(format!("{experiment}_{name}.svg"));
        loglog(&pts, &table.header[xk], name, &path)?;
        written.push(path);
    }
    Ok(written)
}

fn padded_range(lo: f64, hi: f64) -> std::ops::Range<f64> {
    if hi > lo {
        lo / 1.5..hi * 1.5
    } else {
        lo / 2.0..hi * 2.0
    }
}

fn loglog(pts: &[(f64, f64)], xname: &str, yname: &str, path: &Path) -> Result<(), ExperimentError> {
    let (xmin, xmax) = pts.iter().fold((f64::INFINITY, 0.0f64), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (ymin, ymax) = pts.iter().fold((f64::INFINITY, 0.0f64), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let root = SVGBackend::new(path, (640, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("{yname} vs {xname}"), ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(padded_range(xmin, xmax).log_scale(), padded_range(ymin, ymax).log_scale())
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc(xname)
        .y_desc(yname)
        .x_label_formatter(&|x| format!("{x:.0e}"))
        .y_label_formatter(&|y| format!("{y:.0e}"))
        .draw()
        .map_err(plot_err)?;
    let mut sorted = pts.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    chart.draw_series(LineSeries::new(sorted.iter().copied(), &BLUE)).map_err(plot_err)?;
    chart.draw_series(sorted.iter().map(|&p| Circle::new(p, 3, BLUE.filled()))).map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}

fn histogram(table: &Table, k: usize, path: &Path) -> Result<(), ExperimentError> {
    let mass: Vec<f64> = table.rows.iter().map(|r| r[k].unwrap_or(0.0)).collect();
    let top = mass.iter().cloned().fold(0.0, f64::max).max(1e-12);
    let root = SVGBackend::new(path, (640, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("occupational mass", ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(0.0..mass.len() as f64, 0.0..top * 1.05)
        .map_err(plot_err)?;
    chart.configure_mesh().x_desc("bin").y_desc("mass").draw().map_err(plot_err)?;
    chart
        .draw_series(
            mass.iter()
                .enumerate()
                .filter(|(_, &m)| m > 0.0)
                .map(|(i, &m)| Rectangle::new([(i as f64, 0.0), (i as f64 + 1.0, m)], BLUE.filled())),
        )
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}
