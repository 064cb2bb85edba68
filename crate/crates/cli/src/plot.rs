//! SVG figures of a [`SweepTable`].

use std::path::Path;

use anyhow::{bail, Context};
use dcrab_core::SweepTable;
use plotters::prelude::*;

/// Column drawn on the ordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    /// Success probability, linear axis on `[0, 1]`.
    Probability,
    /// Effort metric, log axis.
    Effort,
    /// Mean final infidelity, log axis.
    Infidelity,
    /// Mean realized `max |f|`, linear axis.
    PulseMax,
}

impl Quantity {
    pub fn log_scale(self) -> bool {
        matches!(self, Quantity::Effort | Quantity::Infidelity)
    }

    fn label(self) -> &'static str {
        match self {
            Quantity::Probability => "success probability",
            Quantity::Effort => "effort",
            Quantity::Infidelity => "final infidelity",
            Quantity::PulseMax => "max |f|",
        }
    }
}

/// `(x, y, low, high)` for every row whose value is finite.
fn points(table: &SweepTable, quantity: Quantity) -> Vec<(f64, f64, f64, f64)> {
    table
        .rows
        .iter()
        .filter_map(|r| {
            let (y, lo, hi) = match quantity {
                Quantity::Probability => (r.p, (r.p - r.p_std).max(0.0), (r.p + r.p_std).min(1.0)),
                Quantity::Effort => {
                    let k = 10f64.powf(r.effort_logstd);
                    (r.effort, r.effort / k, r.effort * k)
                }
                Quantity::Infidelity => {
                    let k = 10f64.powf(r.infidelity_logstd);
                    (r.infidelity_mean, r.infidelity_mean / k, r.infidelity_mean * k)
                }
                Quantity::PulseMax => (
                    r.pulse_max_mean,
                    r.pulse_max_mean - r.pulse_max_std,
                    r.pulse_max_mean + r.pulse_max_std,
                ),
            };
            if !y.is_finite() || (quantity.log_scale() && y <= 0.0) {
                return None;
            }
            let (lo, hi) = if lo.is_finite() && hi.is_finite() { (lo, hi) } else { (y, y) };
            Some((r.swept_value, y, lo, hi))
        })
        .collect()
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

/// Writes one panel with error bars to `path` as SVG.
pub fn emit_plot(table: &SweepTable, path: &Path, quantity: Quantity, x_label: &str) -> anyhow::Result<()> {
    if table.rows.is_empty() {
        bail!("cannot plot an empty table");
    }
    let pts = points(table, quantity);
    let xs = table.rows.iter().map(|r| r.swept_value);
    let (x0, x1) = padded(
        xs.clone().fold(f64::INFINITY, f64::min),
        xs.fold(f64::NEG_INFINITY, f64::max),
    );

    let root = SVGBackend::new(path, (800, 560)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut builder = ChartBuilder::on(&root);
    builder
        .margin(20)
        .x_label_area_size(50)
        .y_label_area_size(70);

    if quantity.log_scale() {
        let lo = pts.iter().map(|p| p.2).filter(|v| *v > 0.0).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(|p| p.3).fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if lo.is_finite() && hi.is_finite() { (lo / 2.0, hi * 2.0) } else { (1e-6, 1.0) };
        let mut chart = builder.build_cartesian_2d(x0..x1, (lo..hi).log_scale())?;
        chart
            .configure_mesh()
            .x_desc(x_label)
            .y_desc(quantity.label())
            .draw()?;
        chart.draw_series(pts.iter().map(|&(x, y, l, h)| ErrorBar::new_vertical(x, l.max(lo), y, h, BLUE.filled(), 8)))?;
        chart.draw_series(LineSeries::new(pts.iter().map(|p| (p.0, p.1)), &BLUE))?;
        chart.draw_series(pts.iter().map(|p| Circle::new((p.0, p.1), 4, BLUE.filled())))?;
    } else {
        let (y0, y1) = match quantity {
            Quantity::Probability => (0.0, 1.0),
            _ => padded(
                pts.iter().map(|p| p.2).fold(f64::INFINITY, f64::min).min(0.0),
                pts.iter().map(|p| p.3).fold(0.0, f64::max),
            ),
        };
        let mut chart = builder.build_cartesian_2d(x0..x1, y0..y1)?;
        chart
            .configure_mesh()
            .x_desc(x_label)
            .y_desc(quantity.label())
            .draw()?;
        chart.draw_series(pts.iter().map(|&(x, y, l, h)| ErrorBar::new_vertical(x, l, y, h, BLUE.filled(), 8)))?;
        chart.draw_series(LineSeries::new(pts.iter().map(|p| (p.0, p.1)), &BLUE))?;
        chart.draw_series(pts.iter().map(|p| Circle::new((p.0, p.1), 4, BLUE.filled())))?;
    }
    root.present().with_context(|| format!("{}: cannot write plot", path.display()))?;
    Ok(())
}
