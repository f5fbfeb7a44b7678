//! SVG convergence plots from a history CSV: the residual panel with the
//! estimate levels overlaid, and the iterative solution difference panel.

use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::error::{Error, Result};
use crate::solver::ConvergenceHistory;
use crate::state::{Vec4, NEQ};

pub const RESIDUAL_PLOT: &str = "residual.svg";
pub const DW_PLOT: &str = "dw.svg";

const SIZE: (u32, u32) = (900, 600);
const NAMES: [&str; NEQ] = ["p'", "u", "v", "T"];
const COLORS: [RGBColor; NEQ] = [RGBColor(31, 119, 180), RGBColor(214, 39, 40), RGBColor(44, 160, 44), RGBColor(148, 103, 189)];

fn plot_err(e: impl std::fmt::Display) -> Error {
    Error::Plot(e.to_string())
}

/// `(lo, hi)` decades enclosing the positive finite values, or `None`.
fn log_range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values
        .filter(|v| v.is_finite() && *v > 0.0)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo > hi {
        return None;
    }
    Some((10f64.powf(lo.log10().floor()), 10f64.powf(hi.log10().ceil().max(lo.log10().floor() + 1.0))))
}

fn iter_range(history: &ConvergenceHistory) -> (f64, f64) {
    let first = history.records.first().map_or(0, |r| r.iter) as f64;
    let last = history.last().map_or(0, |r| r.iter) as f64;
    (first, last.max(first + 1.0))
}

fn positive(points: impl Iterator<Item = (f64, f64)>) -> Vec<(f64, f64)> {
    points.filter(|(_, y)| y.is_finite() && *y > 0.0).collect()
}

/// Residual panel: `res_i` solid, sampled `R_m(i)` thin, `R_c(i)` dashed.
/// `estimates` is `(R_c, R_m)` as echoed in the CSV; the final `R_m` is drawn
/// as a level when the history has no sampled rows.
pub fn residual_svg(history: &ConvergenceHistory, estimates: Option<&(Vec4, Vec4)>) -> Result<String> {
    if history.is_empty() {
        return Err(Error::Plot("empty history".into()));
    }
    let sampled = history.records.iter().any(|r| r.rm.is_some());
    let mut all: Vec<f64> = history.records.iter().flat_map(|r| r.res.into_iter().chain(r.rm.into_iter().flatten())).collect();
    if let Some((rc, rm)) = estimates {
        all.extend(rc);
        all.extend(rm);
    }
    let (ylo, yhi) = log_range(all.into_iter()).unwrap_or((1e-20, 1.0));
    let (x0, x1) = iter_range(history);

    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, SIZE).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let mut chart = ChartBuilder::on(&root)
            .caption("L1 residual norm", ("sans-serif", 22))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(60)
            .build_cartesian_2d(x0..x1, (ylo..yhi).log_scale())
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_desc("iteration")
            .y_desc("residual")
            .x_label_formatter(&|x| format!("{x:.0}"))
            .y_label_formatter(&|y| format!("{y:.0e}"))
            .draw()
            .map_err(plot_err)?;

        for i in 0..NEQ {
            let c = COLORS[i];
            let res = positive(history.records.iter().map(|r| (r.iter as f64, r.res[i])));
            chart
                .draw_series(LineSeries::new(res, c.stroke_width(2)))
                .map_err(plot_err)?
                .label(format!("Res({})", NAMES[i]))
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], c.stroke_width(2)));

            let rm = positive(history.records.iter().filter_map(|r| r.rm.map(|m| (r.iter as f64, m[i]))));
            let rm = if sampled {
                rm
            } else {
                estimates.map_or_else(Vec::new, |(_, m)| positive([(x0, m[i]), (x1, m[i])].into_iter()))
            };
            chart
                .draw_series(LineSeries::new(rm, c.mix(0.5).stroke_width(1)))
                .map_err(plot_err)?
                .label(format!("R_m({})", NAMES[i]))
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], c.mix(0.5).stroke_width(1)));

            if let Some((rc, _)) = estimates {
                let line = positive([(x0, rc[i]), (x1, rc[i])].into_iter());
                chart
                    .draw_series(DashedLineSeries::new(line, 8, 5, c.stroke_width(1)))
                    .map_err(plot_err)?
                    .label(format!("R_c({})", NAMES[i]))
                    .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 8, y), (x + 13, y), (x + 20, y)], c.stroke_width(1)));
            }
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .position(SeriesLabelPosition::UpperRight)
            .draw()
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    Ok(svg)
}

/// Iterative solution difference panel, one curve per variable. The initial
/// record (which carries `dw = 0`) falls off the log axis.
pub fn dw_svg(history: &ConvergenceHistory) -> Result<String> {
    if history.is_empty() {
        return Err(Error::Plot("empty history".into()));
    }
    let (ylo, yhi) = log_range(history.records.iter().flat_map(|r| r.dw)).unwrap_or((1e-20, 1.0));
    let (x0, x1) = iter_range(history);
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, SIZE).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let mut chart = ChartBuilder::on(&root)
            .caption("Iterative solution difference", ("sans-serif", 22))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(60)
            .build_cartesian_2d(x0..x1, (ylo..yhi).log_scale())
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_desc("iteration")
            .y_desc("dw")
            .x_label_formatter(&|x| format!("{x:.0}"))
            .y_label_formatter(&|y| format!("{y:.0e}"))
            .draw()
            .map_err(plot_err)?;
        for i in 0..NEQ {
            let c = COLORS[i];
            let dw = positive(history.records.iter().map(|r| (r.iter as f64, r.dw[i])));
            chart
                .draw_series(LineSeries::new(dw, c.stroke_width(2)))
                .map_err(plot_err)?
                .label(format!("dw({})", NAMES[i]))
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], c.stroke_width(2)));
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    Ok(svg)
}

/// Reads a history CSV and writes [`RESIDUAL_PLOT`] and [`DW_PLOT`] into
/// `out_dir`. Nothing is written unless both plots render.
pub fn report_figures(csv: &Path, out_dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let text = std::fs::read_to_string(csv).map_err(|e| Error::io(csv, e))?;
    let (history, estimates) = ConvergenceHistory::parse_csv(&text, csv)?;
    let residual = residual_svg(&history, estimates.as_ref())?;
    let dw = dw_svg(&history)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let (rp, dp) = (out_dir.join(RESIDUAL_PLOT), out_dir.join(DW_PLOT));
    std::fs::write(&rp, residual).map_err(|e| Error::io(&rp, e))?;
    std::fs::write(&dp, dw).map_err(|e| Error::io(&dp, e))?;
    Ok((rp, dp))
}
