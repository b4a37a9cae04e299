//! End-to-end run on a synthetic scene with oracle features standing in for
//! the learned encoders.
//!
//! * Features are pixel and patch-center directions, so the index map is the
//!   spherical Voronoi partition of the layout.
//! * The holistic histogram is fitted to ground-truth samples. Its keymap is
//!   the one-hot nearest bin of the half-resolution ground truth.
//! * Each regional histogram puts one bin center on the median ground-truth
//!   depth of its cell, and the patch token selects that bin.
//! * Queries are the identity and the projection head is a scaled identity,
//!   so the softmax is one-hot to within `exp(-ORACLE_HEAD_SCALE)`.

use crate::alignment::{build_index_map, IndexMap};
use crate::binfit::{fit_bins, FitTrace};
use crate::config::Config;
use crate::distribution::{holistic_depth, regional_depth, DepthHistogram, DepthRange, ProjectionHead, QueryEmbedding};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::loss::{adaptive_fuse, chamfer_samples, total_loss, LossBreakdown};
use crate::metrics::{evaluate_masked, MetricReport};
use crate::sphere::{ErpGeometry, PatchLayout};
use crate::synth::{nearest_bin, oracle_direction_features, oracle_patch_vectors, render_depth, SceneSpec};

pub const ORACLE_HEAD_SCALE: f32 = 1000.0;

#[derive(Debug, Clone)]
pub struct OracleRun {
    pub layout: PatchLayout,
    pub geometry: ErpGeometry,
    pub gt: Grid,
    pub index_map: IndexMap,
    pub holistic_fit: FitTrace,
    pub regional_histograms: Vec<DepthHistogram>,
    pub holistic: Grid,
    pub regional: Grid,
    pub fused: Grid,
    pub loss: LossBreakdown,
    pub metrics: [(&'static str, MetricReport); 3],
}

/// Histogram with `bins` bins over `range` where one bin is centered exactly
/// on `d`: the first bin when `d` lies in the lower half of the range,
/// otherwise the last. Returns the histogram and that bin's index.
pub fn histogram_centered_on(range: DepthRange, bins: usize, d: f64) -> Result<(DepthHistogram, usize)> {
    if !(d > range.d_min && d < range.d_max) || bins < 2 {
        return Err(Error::InvalidArgument(format!("cannot center a bin on {d} in [{}, {}]", range.d_min, range.d_max)));
    }
    let span = range.span();
    let lower = d - range.d_min <= span / 2.0;
    let w = if lower { 2.0 * (d - range.d_min) } else { 2.0 * (range.d_max - d) };
    let rest = (span - w) / (bins - 1) as f64;
    let mut widths = vec![rest; bins];
    let k = if lower { 0 } else { bins - 1 };
    widths[k] = w;
    Ok((DepthHistogram::from_widths(range, widths)?, k))
}

fn one_hot(bins: usize, k: usize) -> impl Iterator<Item = f32> {
    (0..bins).map(move |b| if b == k { 1.0 } else { 0.0 })
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

fn oracle_head(bins: usize) -> Result<ProjectionHead> {
    let matrix = (0..bins).flat_map(|r| one_hot(bins, r).map(|v| v * ORACLE_HEAD_SCALE)).collect();
    ProjectionHead::new(bins, bins, matrix, vec![0.0; bins])
}

pub fn run_oracle(cfg: &Config, scene: &SceneSpec) -> Result<OracleRun> {
    cfg.validate()?;
    let layout = cfg.layout.build()?;
    let range = cfg.depth.range()?;
    let bins = cfg.depth.bins;
    let height = cfg.scene.erp_height;
    if height < 2 || !height.is_multiple_of(2) {
        return Err(Error::Config(format!("scene.erp_height must be even and >= 2, got {height}")));
    }
    let geometry = ErpGeometry::from_height(height)?;
    let half = ErpGeometry::from_height(height / 2)?;

    let gt = render_depth(scene, geometry);
    let gt_half = render_depth(scene, half);

    let index_map = build_index_map(&oracle_direction_features(half), &oracle_patch_vectors(&layout))?;
    let query = QueryEmbedding::identity(bins);
    let head = oracle_head(bins)?;

    // holistic path
    let samples = chamfer_samples(&gt, cfg.loss.chamfer_stride);
    let holistic_fit = fit_bins(&samples, range, &cfg.fit_config(), cfg.seed)?;
    let centers = holistic_fit.histogram.centers();
    let keymap_data = gt_half
        .data()
        .iter()
        .flat_map(|&d| one_hot(bins, nearest_bin(d as f64, centers)))
        .collect();
    let keymap = Grid::new(half.height, half.width, bins, keymap_data)?;
    let holistic = holistic_depth(&keymap, &query, &head, &holistic_fit.histogram, geometry)?;

    // regional path
    let mut cell_depths = vec![Vec::new(); layout.len()];
    for (&label, &d) in index_map.assignment().iter().zip(gt_half.data()) {
        cell_depths[label as usize].push(d as f64);
    }
    let mut regional_histograms = Vec::with_capacity(layout.len());
    let mut token_means = Vec::with_capacity(layout.len() * bins);
    for depths in cell_depths {
        let d = median(depths).unwrap_or(range.d_min + range.span() / 2.0);
        let d = d.clamp(range.d_min + 1e-6 * range.span(), range.d_max - 1e-6 * range.span());
        let (h, k) = histogram_centered_on(range, bins, d)?;
        regional_histograms.push(h);
        token_means.extend(one_hot(bins, k));
    }
    let regional = regional_depth(&index_map, &regional_histograms, &token_means, &query, &head, geometry)?;

    let fused = adaptive_fuse(&holistic, &regional, cfg.fusion.weights())?;
    let loss = total_loss(&fused, &gt, &holistic_fit.histogram, &cfg.loss)?;
    let m = |pred: &Grid| evaluate_masked(pred, &gt, cfg.eval.mask_frac, cfg.eval.mask_frac, range);
    let metrics = [("holistic", m(&holistic)?), ("regional", m(&regional)?), ("fused", m(&fused)?)];

    Ok(OracleRun {
        layout,
        geometry,
        gt,
        index_map,
        holistic_fit,
        regional_histograms,
        holistic,
        regional,
        fused,
        loss,
        metrics,
    })
}
