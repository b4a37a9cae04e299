//! Standard monocular depth metrics over valid ground-truth pixels.

use serde::Serialize;

use crate::distribution::DepthRange;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::loss::is_valid_depth;

/// Predictions are floored here after clamping so the log metric stays finite
/// when the clamp range starts at zero.
pub const MIN_PREDICTION: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricReport {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub valid_count: usize,
}

impl MetricReport {
    pub const HEADER: [&'static str; 8] =
        ["abs_rel", "sq_rel", "rmse", "rmse_log", "delta1", "delta2", "delta3", "valid_count"];

    pub fn values(&self) -> [f64; 7] {
        [
            self.abs_rel,
            self.sq_rel,
            self.rmse,
            self.rmse_log,
            self.delta1,
            self.delta2,
            self.delta3,
        ]
    }

    pub fn csv_header() -> String {
        Self::HEADER.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut fields: Vec<String> = self.values().iter().map(|v| format!("{v:.6}")).collect();
        fields.push(self.valid_count.to_string());
        fields.join(",")
    }

    /// Aligned two-line text table.
    pub fn table(&self) -> String {
        let header: Vec<String> = Self::HEADER.iter().map(|h| format!("{h:>11}")).collect();
        let mut row: Vec<String> = self.values().iter().map(|v| format!("{v:>11.4}")).collect();
        row.push(format!("{:>11}", self.valid_count));
        format!("{}\n{}", header.join(" "), row.join(" "))
    }
}

fn clamp_prediction(p: f64, clamp: DepthRange) -> f64 {
    let p = if p.is_nan() { clamp.d_min } else { p };
    p.clamp(clamp.d_min, clamp.d_max).max(MIN_PREDICTION)
}

fn evaluate_rows(pred: &Grid, gt: &Grid, rows: std::ops::Range<usize>, clamp: DepthRange) -> Result<MetricReport> {
    pred.same_shape(gt)?;
    if gt.channels() != 1 {
        return Err(Error::DimensionMismatch(format!("depth maps must have 1 channel, got {}", gt.channels())));
    }
    let w = gt.width();
    let span = rows.start * w..rows.end * w;
    let (mut abs_rel, mut sq_rel, mut sq, mut sq_log) = (0.0, 0.0, 0.0, 0.0);
    let mut within = [0usize; 3];
    let mut n = 0usize;
    for (&p, &g) in pred.data()[span.clone()].iter().zip(&gt.data()[span]) {
        let g = g as f64;
        if !is_valid_depth(g) {
            continue;
        }
        let p = clamp_prediction(p as f64, clamp);
        let d = p - g;
        abs_rel += d.abs() / g;
        sq_rel += d * d / g;
        sq += d * d;
        let dl = p.ln() - g.ln();
        sq_log += dl * dl;
        let ratio = (p / g).max(g / p);
        for (t, count) in within.iter_mut().enumerate() {
            if ratio < 1.25f64.powi(t as i32 + 1) {
                *count += 1;
            }
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::NoValidPixels);
    }
    let nf = n as f64;
    Ok(MetricReport {
        abs_rel: abs_rel / nf,
        sq_rel: sq_rel / nf,
        rmse: (sq / nf).sqrt(),
        rmse_log: (sq_log / nf).sqrt(),
        delta1: within[0] as f64 / nf,
        delta2: within[1] as f64 / nf,
        delta3: within[2] as f64 / nf,
        valid_count: n,
    })
}

/// Metrics over every valid pixel, with predictions clamped to `clamp`.
pub fn evaluate(pred: &Grid, gt: &Grid, clamp: DepthRange) -> Result<MetricReport> {
    evaluate_rows(pred, gt, 0..gt.height(), clamp)
}

/// Rows excluded at the top and bottom of an `height`-row map: the first
/// `floor(top * height)` and the last `floor(bottom * height)`.
pub fn masked_rows(height: usize, top_frac: f64, bottom_frac: f64) -> Result<std::ops::Range<usize>> {
    for f in [top_frac, bottom_frac] {
        if !(0.0..=0.5).contains(&f) {
            return Err(Error::InvalidArgument(format!("mask fraction {f} outside [0, 0.5]")));
        }
    }
    let top = (height as f64 * top_frac) as usize;
    let bottom = (height as f64 * bottom_frac) as usize;
    Ok(top..height.saturating_sub(bottom).max(top))
}

/// [`evaluate`] after excluding polar bands of rows.
pub fn evaluate_masked(
    pred: &Grid,
    gt: &Grid,
    top_frac: f64,
    bottom_frac: f64,
    clamp: DepthRange,
) -> Result<MetricReport> {
    let rows = masked_rows(gt.height(), top_frac, bottom_frac)?;
    evaluate_rows(pred, gt, rows, clamp)
}
