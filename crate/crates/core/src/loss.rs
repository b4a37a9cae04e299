//! Adaptive fusion of the holistic and regional depth maps, and the training
//! losses: reverse Huber (BerHu) on depth and bidirectional Chamfer between
//! ground-truth depths and bin centers.

use serde::{Deserialize, Serialize};

use crate::distribution::DepthHistogram;
use crate::error::{Error, Result};
use crate::grid::Grid;

/// Two raw parameters mapped through a normalized exponential, so the
/// effective weights are positive and sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FusionWeights {
    pub raw: [f64; 2],
}

impl FusionWeights {
    pub fn new(raw0: f64, raw1: f64) -> Self {
        Self { raw: [raw0, raw1] }
    }

    pub fn effective(&self) -> (f64, f64) {
        let d = self.raw[0] - self.raw[1];
        let w0 = 1.0 / (1.0 + (-d).exp());
        let w1 = 1.0 / (1.0 + d.exp());
        (w0, w1)
    }
}

/// `D = w0 D_holistic + w1 D_regional`, pixel-wise.
pub fn adaptive_fuse(holistic: &Grid, regional: &Grid, w: FusionWeights) -> Result<Grid> {
    holistic.same_shape(regional)?;
    let (w0, w1) = w.effective();
    let data = holistic
        .data()
        .iter()
        .zip(regional.data())
        .map(|(&h, &r)| (w0 * h as f64 + w1 * r as f64) as f32)
        .collect();
    Grid::new(holistic.height(), holistic.width(), holistic.channels(), data)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum BerhuMode {
    /// Fixed threshold `c`.
    FixedC(f64),
    /// `c = fraction * max |pred - gt|` over valid pixels, held constant in
    /// the gradient.
    MaxFraction(f64),
}

impl Default for BerhuMode {
    fn default() -> Self {
        BerhuMode::FixedC(0.2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    #[default]
    Sum,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Weight of the histogram (Chamfer) term.
    pub lambda: f64,
    pub berhu: BerhuMode,
    pub reduction: Reduction,
    /// Every `stride`-th valid ground-truth pixel enters the Chamfer set.
    pub chamfer_stride: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            berhu: BerhuMode::default(),
            reduction: Reduction::Sum,
            chamfer_stride: 8,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.chamfer_stride == 0 {
            return Err(Error::InvalidArgument("chamfer stride must be positive".into()));
        }
        match self.berhu {
            BerhuMode::FixedC(c) | BerhuMode::MaxFraction(c) if !(c > 0.0) => {
                Err(Error::InvalidArgument(format!("berhu threshold must be positive, got {c}")))
            }
            _ => Ok(()),
        }
    }
}

/// Reverse Huber penalty: `|x|` inside the threshold, `(x^2 + c^2) / 2c` outside.
#[inline]
pub fn berhu_value(x: f64, c: f64) -> f64 {
    let a = x.abs();
    if a <= c {
        a
    } else {
        (x * x + c * c) / (2.0 * c)
    }
}

/// Derivative of [`berhu_value`]; zero at `x = 0`.
#[inline]
pub fn berhu_derivative(x: f64, c: f64) -> f64 {
    if x.abs() <= c {
        if x > 0.0 {
            1.0
        } else if x < 0.0 {
            -1.0
        } else {
            0.0
        }
    } else {
        x / c
    }
}

/// A ground-truth depth counts only when it is finite and positive.
#[inline]
pub fn is_valid_depth(d: f64) -> bool {
    d.is_finite() && d > 0.0
}

/// BerHu over slices. Invalid ground-truth entries contribute neither loss
/// nor gradient.
pub fn berhu_slices(pred: &[f64], gt: &[f64], mode: BerhuMode, reduction: Reduction) -> Result<(f64, Vec<f64>)> {
    if pred.len() != gt.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions for {} targets",
            pred.len(),
            gt.len()
        )));
    }
    let valid = gt.iter().filter(|g| is_valid_depth(**g)).count();
    if valid == 0 {
        return Err(Error::NoValidPixels);
    }
    let c = match mode {
        BerhuMode::FixedC(c) => c,
        BerhuMode::MaxFraction(f) => {
            let max = pred
                .iter()
                .zip(gt)
                .filter(|(_, g)| is_valid_depth(**g))
                .map(|(p, g)| (p - g).abs())
                .fold(0.0, f64::max);
            f * max
        }
    };
    let mut grad = vec![0.0; pred.len()];
    if !(c > 0.0) {
        // only reachable with MaxFraction when every residual is zero
        return Ok((0.0, grad));
    }
    let scale = match reduction {
        Reduction::Sum => 1.0,
        Reduction::Mean => 1.0 / valid as f64,
    };
    let mut loss = 0.0;
    for ((p, g), d) in pred.iter().zip(gt).zip(grad.iter_mut()) {
        if is_valid_depth(*g) {
            let x = p - g;
            loss += berhu_value(x, c);
            *d = scale * berhu_derivative(x, c);
        }
    }
    Ok((loss * scale, grad))
}

/// BerHu between a predicted and a ground-truth depth map, with the gradient
/// with respect to the prediction.
pub fn berhu(pred: &Grid, gt: &Grid, cfg: &LossConfig) -> Result<(f64, Grid)> {
    pred.same_shape(gt)?;
    let p: Vec<f64> = pred.data().iter().map(|&v| v as f64).collect();
    let g: Vec<f64> = gt.data().iter().map(|&v| v as f64).collect();
    let (loss, grad) = berhu_slices(&p, &g, cfg.berhu, cfg.reduction)?;
    let grad = Grid::new(
        pred.height(),
        pred.width(),
        pred.channels(),
        grad.into_iter().map(|v| v as f32).collect(),
    )?;
    Ok((loss, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChamferResult {
    pub loss: f64,
    /// Gradient with respect to each center, in the caller's order.
    pub grad: Option<Vec<f64>>,
}

/// For each query (ascending), the index into `sorted` of its nearest value;
/// ties go to the smaller value.
fn nearest_sorted(queries: &[(f64, usize)], sorted: &[(f64, usize)]) -> Vec<usize> {
    let mut j = 0;
    queries
        .iter()
        .map(|&(q, _)| {
            while j + 1 < sorted.len() {
                let (here, next) = (sorted[j].0, sorted[j + 1].0);
                // equal values are stepped over so duplicates cannot stall the scan
                if (next - q).abs() < (here - q).abs() || next == here {
                    j += 1;
                } else {
                    break;
                }
            }
            j
        })
        .collect()
}

fn sorted_with_index(v: &[f64]) -> Vec<(f64, usize)> {
    let mut s: Vec<(f64, usize)> = v.iter().cloned().zip(0..).collect();
    s.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    s
}

/// Bidirectional squared Chamfer distance between two 1-D sets:
/// `sum_x min_c (x - c)^2 + sum_c min_x (x - c)^2`.
pub fn chamfer_1d(x: &[f64], centers: &[f64], with_grad: bool) -> Result<ChamferResult> {
    if x.is_empty() {
        return Err(Error::EmptySet("depth samples"));
    }
    if centers.is_empty() {
        return Err(Error::EmptySet("bin centers"));
    }
    if x.iter().chain(centers).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("chamfer inputs must be finite".into()));
    }
    let xs = sorted_with_index(x);
    let cs = sorted_with_index(centers);
    let mut grad = with_grad.then(|| vec![0.0; centers.len()]);
    let mut loss = 0.0;

    for (&(xv, _), ci) in xs.iter().zip(nearest_sorted(&xs, &cs)) {
        let (cv, orig) = cs[ci];
        let d = xv - cv;
        loss += d * d;
        if let Some(g) = grad.as_mut() {
            g[orig] -= 2.0 * d;
        }
    }
    for (&(cv, orig), xi) in cs.iter().zip(nearest_sorted(&cs, &xs)) {
        let d = cv - xs[xi].0;
        loss += d * d;
        if let Some(g) = grad.as_mut() {
            g[orig] += 2.0 * d;
        }
    }
    Ok(ChamferResult { loss, grad })
}

/// Valid ground-truth depths, keeping every `stride`-th valid pixel in
/// row-major order.
pub fn chamfer_samples(gt: &Grid, stride: usize) -> Vec<f64> {
    gt.data()
        .iter()
        .map(|&v| v as f64)
        .filter(|v| is_valid_depth(*v))
        .step_by(stride.max(1))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub depth: f64,
    pub histogram: f64,
    pub total: f64,
}

/// `L = L_depth + lambda * L_hist`.
pub fn total_loss(pred: &Grid, gt: &Grid, hist: &DepthHistogram, cfg: &LossConfig) -> Result<LossBreakdown> {
    cfg.validate()?;
    let (depth, _) = berhu(pred, gt, cfg)?;
    let samples = chamfer_samples(gt, cfg.chamfer_stride);
    let histogram = chamfer_1d(&samples, hist.centers(), false)?.loss;
    Ok(LossBreakdown {
        depth,
        histogram,
        total: depth + cfg.lambda * histogram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::DepthRange;

    #[test]
    fn equal_raw_weights_average() {
        let w = FusionWeights::new(0.3, 0.3);
        assert_eq!(w.effective(), (0.5, 0.5));
        let a = Grid::new(1, 2, 1, vec![1.0, 2.0]).unwrap();
        let b = Grid::new(1, 2, 1, vec![3.0, 5.0]).unwrap();
        assert_eq!(adaptive_fuse(&a, &b, w).unwrap().data(), &[2.0, 3.5]);
    }

    #[test]
    fn weights_sum_to_one() {
        for (a, b) in [(0.0, 1.0), (-3.0, 2.5), (10.0, -10.0)] {
            let (w0, w1) = FusionWeights::new(a, b).effective();
            assert!(w0 > 0.0 && w1 > 0.0);
            assert!((w0 + w1 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dominant_raw_weight_selects_holistic() {
        let a = Grid::new(1, 2, 1, vec![1.0, 2.0]).unwrap();
        let b = Grid::new(1, 2, 1, vec![3.0, 5.0]).unwrap();
        let d = adaptive_fuse(&a, &b, FusionWeights::new(50.0, 0.0)).unwrap();
        assert_eq!(d, a);
        let c = Grid::new(1, 3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        assert!(adaptive_fuse(&a, &c, FusionWeights::default()).is_err());
    }

    #[test]
    fn berhu_examples() {
        assert!((berhu_value(0.4, 0.2) - 0.5).abs() < 1e-15);
        assert!((berhu_value(0.2 - 1e-12, 0.2) - 0.2).abs() < 1e-9);
        assert!((berhu_value(0.2 + 1e-12, 0.2) - 0.2).abs() < 1e-9);
        assert_eq!(berhu_derivative(0.0, 0.2), 0.0);
        assert_eq!(berhu_derivative(-0.1, 0.2), -1.0);
        assert_eq!(berhu_derivative(0.4, 0.2), 2.0);

        let cfg = LossConfig::default();
        let pred = Grid::new(1, 2, 1, vec![1.4, 9.0]).unwrap();
        let gt = Grid::new(1, 2, 1, vec![1.0, 0.0]).unwrap();
        let (loss, grad) = berhu(&pred, &gt, &cfg).unwrap();
        assert!((loss - 0.5).abs() < 1e-6);
        assert_eq!(grad.data()[1], 0.0);

        let (loss, _) = berhu(&gt, &gt, &cfg).unwrap();
        assert_eq!(loss, 0.0);
        let none = Grid::new(1, 2, 1, vec![0.0, f32::NAN]).unwrap();
        assert!(matches!(berhu(&pred, &none, &cfg), Err(Error::NoValidPixels)));
    }

    #[test]
    fn berhu_max_fraction_and_mean() {
        let (loss, grad) =
            berhu_slices(&[2.0, 1.5], &[1.0, 1.0], BerhuMode::MaxFraction(0.2), Reduction::Mean).unwrap();
        // c = 0.2; x = 1.0 -> 2.6, x = 0.5 -> 0.725
        assert!((loss - (2.6 + 0.725) / 2.0).abs() < 1e-12);
        assert!((grad[0] - 2.5).abs() < 1e-12 && (grad[1] - 1.25).abs() < 1e-12);
        let (loss, _) = berhu_slices(&[1.0], &[1.0], BerhuMode::MaxFraction(0.2), Reduction::Sum).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn chamfer_examples() {
        assert_eq!(chamfer_1d(&[1.0, 2.0], &[2.0, 1.0], false).unwrap().loss, 0.0);
        assert_eq!(chamfer_1d(&[0.0], &[1.0], false).unwrap().loss, 2.0);
        let r = chamfer_1d(&[0.0, 2.0], &[1.0], true).unwrap();
        assert_eq!(r.loss, 3.0);
        // forward: -2(0-1) - 2(2-1) = 0; backward: 2(1-0) = 2 (tie picks the lower sample)
        assert_eq!(r.grad.unwrap(), vec![2.0]);
        assert!(matches!(chamfer_1d(&[], &[1.0], false), Err(Error::EmptySet(_))));
        assert!(matches!(chamfer_1d(&[1.0], &[], false), Err(Error::EmptySet(_))));
    }

    #[test]
    fn chamfer_gradient_keeps_caller_order() {
        let r = chamfer_1d(&[0.0, 10.0], &[9.0, 1.0], true).unwrap();
        // center 9 pulled toward 10, center 1 toward 0
        let g = r.grad.unwrap();
        assert_eq!(g, vec![-4.0, 4.0]);
    }

    #[test]
    fn total_loss_cases() {
        let range = DepthRange::new(0.0, 4.0).unwrap();
        let gt = Grid::new(2, 2, 1, vec![1.0, 3.0, 1.0, 3.0]).unwrap();
        let hist = DepthHistogram::from_widths(range, vec![2.0, 2.0]).unwrap();
        let cfg = LossConfig { chamfer_stride: 1, ..LossConfig::default() };
        let l = total_loss(&gt, &gt, &hist, &cfg).unwrap();
        assert_eq!(l.total, 0.0);

        let pred = Grid::filled(2, 2, 1, 2.0);
        let no_hist = LossConfig { lambda: 0.0, ..cfg };
        let l = total_loss(&pred, &gt, &hist, &no_hist).unwrap();
        assert_eq!(l.total, berhu(&pred, &gt, &no_hist).unwrap().0);
        assert_eq!(LossConfig::default().lambda, 0.1);
    }
}
