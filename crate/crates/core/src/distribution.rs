//! Depth-distribution classification: adaptive bin histograms, range
//! attention, per-pixel bin probabilities, and the holistic and regional
//! depth paths that blend bin centers with those probabilities.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::{aggregate_by_index, IndexMap};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::resample::upsample_bilinear;
use crate::sphere::ErpGeometry;

/// Positivity constant added to every bin logit.
pub const DEFAULT_EPSILON: f64 = 1e-3;
pub const DEFAULT_BINS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthRange {
    pub d_min: f64,
    pub d_max: f64,
}

impl DepthRange {
    pub fn new(d_min: f64, d_max: f64) -> Result<Self> {
        if !(d_min >= 0.0 && d_min < d_max && d_max.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "depth range needs 0 <= d_min < d_max, got [{d_min}, {d_max}]"
            )));
        }
        Ok(Self { d_min, d_max })
    }

    pub fn span(&self) -> f64 {
        self.d_max - self.d_min
    }

    pub fn contains(&self, d: f64) -> bool {
        d >= self.d_min && d <= self.d_max
    }
}

/// Nonnegative bin scores (the post-ReLU output of a bin head).
#[derive(Debug, Clone, PartialEq)]
pub struct BinLogits(Vec<f64>);

impl BinLogits {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 bins, got {}", values.len())));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument(format!("bin logit {v} is not a finite nonnegative value")));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Bin widths and centers partitioning a depth range.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthHistogram {
    range: DepthRange,
    widths: Vec<f64>,
    centers: Vec<f64>,
}

impl DepthHistogram {
    /// Builds a histogram from explicit widths, which must be positive and sum
    /// to the range span.
    pub fn from_widths(range: DepthRange, widths: Vec<f64>) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidArgument("histogram needs at least 2 bins".into()));
        }
        if widths.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::InvalidArgument("bin widths must be positive".into()));
        }
        let sum: f64 = widths.iter().sum();
        if (sum - range.span()).abs() > 1e-5 * range.span() {
            return Err(Error::InvalidArgument(format!(
                "bin widths sum to {sum}, range spans {}",
                range.span()
            )));
        }
        let centers = centers_from_widths(range.d_min, &widths);
        Ok(Self {
            range,
            widths,
            centers,
        })
    }

    /// Evenly spaced bins.
    pub fn uniform(range: DepthRange, bins: usize) -> Result<Self> {
        Self::from_widths(range, vec![range.span() / bins as f64; bins])
    }

    pub fn range(&self) -> DepthRange {
        self.range
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn bins(&self) -> usize {
        self.widths.len()
    }

    pub fn max_width(&self) -> f64 {
        self.widths.iter().cloned().fold(0.0, f64::max)
    }
}

pub(crate) fn centers_from_widths(d_min: f64, widths: &[f64]) -> Vec<f64> {
    let mut edge = d_min;
    widths
        .iter()
        .map(|w| {
            let c = edge + w / 2.0;
            edge += w;
            c
        })
        .collect()
}

/// Normalized bin widths `w_i = span (l_i + eps) / sum_j (l_j + eps)` and
/// their centers.
pub fn bin_centers(logits: &BinLogits, range: DepthRange, epsilon: f64) -> Result<DepthHistogram> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    let shifted: Vec<f64> = logits.values().iter().map(|l| l + epsilon).collect();
    let total: f64 = shifted.iter().sum();
    let widths: Vec<f64> = shifted.iter().map(|s| range.span() * s / total).collect();
    let centers = centers_from_widths(range.d_min, &widths);
    Ok(DepthHistogram {
        range,
        widths,
        centers,
    })
}

/// Selected encoder tokens used as attention queries, `c2 x c1` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryEmbedding {
    c2: usize,
    c1: usize,
    data: Vec<f32>,
}

impl QueryEmbedding {
    pub fn new(c2: usize, c1: usize, data: Vec<f32>) -> Result<Self> {
        if c2 == 0 || c1 == 0 || data.len() != c2 * c1 {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {c2}x{c1} query embedding",
                data.len()
            )));
        }
        Ok(Self { c2, c1, data })
    }

    pub fn identity(c: usize) -> Self {
        let mut data = vec![0.0; c * c];
        (0..c).for_each(|i| data[i * c + i] = 1.0);
        Self { c2: c, c1: c, data }
    }

    pub fn queries(&self) -> usize {
        self.c2
    }

    pub fn key_dim(&self) -> usize {
        self.c1
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }
}

/// A 1x1 convolution from `c2` attention channels to `bins` logits.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    bins: usize,
    c2: usize,
    matrix: Vec<f32>,
    bias: Vec<f32>,
}

impl ProjectionHead {
    pub fn new(bins: usize, c2: usize, matrix: Vec<f32>, bias: Vec<f32>) -> Result<Self> {
        if bins == 0 || c2 == 0 || matrix.len() != bins * c2 || bias.len() != bins {
            return Err(Error::DimensionMismatch(format!(
                "head with {} weights and {} biases is not {bins}x{c2}",
                matrix.len(),
                bias.len()
            )));
        }
        if matrix.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("projection head must be finite".into()));
        }
        Ok(Self {
            bins,
            c2,
            matrix,
            bias,
        })
    }

    pub fn zeros(bins: usize, c2: usize) -> Self {
        Self {
            bins,
            c2,
            matrix: vec![0.0; bins * c2],
            bias: vec![0.0; bins],
        }
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn inputs(&self) -> usize {
        self.c2
    }

    pub fn matrix(&self) -> &[f32] {
        &self.matrix
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }
}

/// Per-pixel probabilities over depth bins; each pixel sums to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap(Grid);

impl ProbabilityMap {
    /// Wraps a grid of nonnegative values, rescaling every pixel to unit sum.
    pub fn normalized(mut grid: Grid) -> Result<Self> {
        for px in grid.pixels_mut() {
            let sum: f64 = px.iter().map(|&v| v as f64).sum();
            if px.iter().any(|v| !(*v >= 0.0)) || !(sum > 0.0) || !sum.is_finite() {
                return Err(Error::InvalidArgument(
                    "probability pixel must be nonnegative with positive sum".into(),
                ));
            }
            px.iter_mut().for_each(|v| *v = (*v as f64 / sum) as f32);
        }
        Ok(Self(grid))
    }

    pub fn grid(&self) -> &Grid {
        &self.0
    }

    pub fn into_grid(self) -> Grid {
        self.0
    }

    pub fn bins(&self) -> usize {
        self.0.channels()
    }

    /// Bilinear ERP upsampling followed by per-pixel renormalization.
    pub fn upsample(&self, factor: usize) -> Result<Self> {
        Self::normalized(upsample_bilinear(&self.0, factor)?)
    }
}

/// `R(i, j, q) = sum_k query[q, k] * key(i, j, k)`.
pub fn range_attention(keymap: &Grid, query: &QueryEmbedding) -> Result<Grid> {
    let c1 = keymap.channels();
    if c1 != query.key_dim() {
        return Err(Error::DimensionMismatch(format!(
            "keymap has {c1} channels, query expects {}",
            query.key_dim()
        )));
    }
    let c2 = query.queries();
    let mut out = Grid::zeros(keymap.height(), keymap.width(), c2);
    out.data_mut()
        .par_chunks_exact_mut(c2)
        .zip(keymap.data().par_chunks_exact(c1))
        .for_each(|(o, key)| {
            for (q, v) in o.iter_mut().enumerate() {
                let row = &query.data()[q * c1..(q + 1) * c1];
                *v = row.iter().zip(key).map(|(&a, &b)| a as f64 * b as f64).sum::<f64>() as f32;
            }
        });
    Ok(out)
}

/// Projects attention channels to bin logits and applies a softmax per pixel.
pub fn probability_map(r: &Grid, head: &ProjectionHead) -> Result<ProbabilityMap> {
    let c2 = r.channels();
    if c2 != head.inputs() {
        return Err(Error::DimensionMismatch(format!(
            "attention map has {c2} channels, head expects {}",
            head.inputs()
        )));
    }
    let b = head.bins();
    let mut out = Grid::zeros(r.height(), r.width(), b);
    out.data_mut()
        .par_chunks_exact_mut(b)
        .zip(r.data().par_chunks_exact(c2))
        .for_each(|(o, x)| {
            let logits: Vec<f64> = (0..b)
                .map(|k| {
                    let row = &head.matrix()[k * c2..(k + 1) * c2];
                    head.bias()[k] as f64
                        + row.iter().zip(x).map(|(&w, &v)| w as f64 * v as f64).sum::<f64>()
                })
                .collect();
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            o.iter_mut().zip(&exps).for_each(|(o, e)| *o = (e / sum) as f32);
        });
    Ok(ProbabilityMap(out))
}

/// Bin centers used to turn probabilities into depth.
#[derive(Debug, Clone, Copy)]
pub enum BinCenters<'a> {
    /// One set of centers shared by every pixel.
    Global(&'a [f64]),
    /// A `h x w x B` grid of per-pixel centers.
    PerPixel(&'a Grid),
}

/// `D(i, j) = sum_b P(i, j, b) c_b`.
pub fn depth_from_distribution(p: &ProbabilityMap, centers: BinCenters<'_>) -> Result<Grid> {
    let grid = p.grid();
    let b = grid.channels();
    let mut out = Grid::zeros(grid.height(), grid.width(), 1);
    match centers {
        BinCenters::Global(c) => {
            if c.len() != b {
                return Err(Error::DimensionMismatch(format!("{} centers for {b} bins", c.len())));
            }
            out.data_mut()
                .par_iter_mut()
                .zip(grid.data().par_chunks_exact(b))
                .for_each(|(d, probs)| {
                    *d = probs.iter().zip(c).map(|(&pb, &cb)| pb as f64 * cb).sum::<f64>() as f32;
                });
        }
        BinCenters::PerPixel(map) => {
            if map.channels() != b || map.height() != grid.height() || map.width() != grid.width() {
                return Err(Error::DimensionMismatch(format!(
                    "center map {:?} does not match probability map {:?}",
                    map.shape(),
                    grid.shape()
                )));
            }
            out.data_mut()
                .par_iter_mut()
                .zip(grid.data().par_chunks_exact(b))
                .zip(map.data().par_chunks_exact(b))
                .for_each(|((d, probs), c)| {
                    *d = probs
                        .iter()
                        .zip(c)
                        .map(|(&pb, &cb)| pb as f64 * cb as f64)
                        .sum::<f64>() as f32;
                });
        }
    }
    Ok(out)
}

/// Stacks per-patch centers and scatters them through the index map,
/// giving each pixel the centers of the patch it is assigned to.
pub fn regional_center_map(m: &IndexMap, hists: &[DepthHistogram]) -> Result<Grid> {
    if hists.len() != m.patch_count() {
        return Err(Error::DimensionMismatch(format!(
            "{} histograms for {} patches",
            hists.len(),
            m.patch_count()
        )));
    }
    let b = hists[0].bins();
    let range = hists[0].range();
    if hists.iter().any(|h| h.bins() != b || h.range() != range) {
        return Err(Error::DimensionMismatch(
            "regional histograms must share bin count and depth range".into(),
        ));
    }
    let table: Vec<f32> = hists
        .iter()
        .flat_map(|h| h.centers().iter().map(|&c| c as f32))
        .collect();
    aggregate_by_index(m, &table, b)
}

/// Averages a `tokens x dim` block over the token axis.
pub fn mean_tokens(tokens: &[f32], dim: usize) -> Result<Vec<f32>> {
    if dim == 0 || tokens.is_empty() || !tokens.len().is_multiple_of(dim) {
        return Err(Error::DimensionMismatch(format!(
            "{} token values do not form rows of dim {dim}",
            tokens.len()
        )));
    }
    let count = tokens.len() / dim;
    let mut acc = vec![0.0f64; dim];
    for row in tokens.chunks_exact(dim) {
        acc.iter_mut().zip(row).for_each(|(a, &v)| *a += v as f64);
    }
    Ok(acc.into_iter().map(|a| (a / count as f64) as f32).collect())
}

/// Scatters per-patch mean tokens (`N x c1`) through the index map.
pub fn regional_keymap(m: &IndexMap, token_means: &[f32], c1: usize) -> Result<Grid> {
    aggregate_by_index(m, token_means, c1)
}

fn check_upsampled(features: &Grid, out: ErpGeometry) -> Result<()> {
    if out.height != 2 * features.height() || out.width != 2 * features.width() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} output is not twice the {}x{} feature resolution",
            out.width,
            out.height,
            features.width(),
            features.height()
        )));
    }
    Ok(())
}

/// Holistic path: attention against the ERP keymap, softmax over bins,
/// 2x upsampling, then blending with the holistic bin centers.
pub fn holistic_depth(
    keymap: &Grid,
    query: &QueryEmbedding,
    head: &ProjectionHead,
    hist: &DepthHistogram,
    out: ErpGeometry,
) -> Result<Grid> {
    check_upsampled(keymap, out)?;
    let r = range_attention(keymap, query)?;
    let p = probability_map(&r, head)?.upsample(2)?;
    depth_from_distribution(&p, BinCenters::Global(hist.centers()))
}

/// Regional path: the keymap comes from per-patch mean tokens scattered by
/// the index map, and each pixel blends the centers of its own patch.
pub fn regional_depth(
    m: &IndexMap,
    hists: &[DepthHistogram],
    token_means: &[f32],
    query: &QueryEmbedding,
    head: &ProjectionHead,
    out: ErpGeometry,
) -> Result<Grid> {
    let keymap = regional_keymap(m, token_means, query.key_dim())?;
    check_upsampled(&keymap, out)?;
    let r = range_attention(&keymap, query)?;
    let p = probability_map(&r, head)?.upsample(2)?;
    let centers = upsample_bilinear(&regional_center_map(m, hists)?, 2)?;
    depth_from_distribution(&p, BinCenters::PerPixel(&centers))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn range(a: f64, b: f64) -> DepthRange {
        DepthRange::new(a, b).unwrap()
    }

    #[test]
    fn equal_logits_give_uniform_bins() {
        for eps in [1e-3, 0.5, 7.0] {
            let h = bin_centers(&BinLogits::new(vec![2.0; 4]).unwrap(), range(0.0, 8.0), eps).unwrap();
            assert!(h.widths().iter().all(|w| (w - 2.0).abs() < 1e-12));
            for (c, e) in h.centers().iter().zip([1.0, 3.0, 5.0, 7.0]) {
                assert!((c - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_bin_closed_form() {
        let h = bin_centers(&BinLogits::new(vec![1.0, 3.0]).unwrap(), range(0.0, 10.0), 1e-12).unwrap();
        assert!((h.widths()[0] - 2.5).abs() < 1e-6 && (h.widths()[1] - 7.5).abs() < 1e-6);
        assert!((h.centers()[0] - 1.25).abs() < 1e-6 && (h.centers()[1] - 6.25).abs() < 1e-6);
    }

    #[test]
    fn zero_logits_are_uniform() {
        let h = bin_centers(&BinLogits::new(vec![0.0; 5]).unwrap(), range(1.0, 6.0), 1e-3).unwrap();
        assert!(h.widths().iter().all(|w| (w - 1.0).abs() < 1e-12));
    }

    #[test]
    fn logits_and_ranges_validated() {
        assert!(BinLogits::new(vec![1.0]).is_err());
        assert!(BinLogits::new(vec![1.0, -0.1]).is_err());
        assert!(DepthRange::new(2.0, 1.0).is_err());
        assert!(DepthRange::new(-1.0, 1.0).is_err());
        let l = BinLogits::new(vec![1.0, 1.0]).unwrap();
        assert!(bin_centers(&l, range(0.0, 1.0), 0.0).is_err());
    }

    #[test]
    fn range_attention_examples() {
        let key = Grid::new(1, 1, 2, vec![5.0, 6.0]).unwrap();
        let q = QueryEmbedding::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(range_attention(&key, &q).unwrap().data(), &[17.0, 39.0]);

        let key = Grid::from_fn(2, 4, 3, |r, c, px| px.iter_mut().enumerate().for_each(|(k, v)| *v = (r + c + k) as f32));
        assert_eq!(range_attention(&key, &QueryEmbedding::identity(3)).unwrap(), key);

        let q = QueryEmbedding::new(2, 3, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        let r = range_attention(&key, &q).unwrap();
        assert!(r.channel(0).data().iter().all(|&v| v == 0.0));
        assert!(range_attention(&key, &QueryEmbedding::identity(2)).is_err());
    }

    #[test]
    fn softmax_examples() {
        let r = Grid::filled(2, 4, 3, 1.5);
        let p = probability_map(&r, &ProjectionHead::zeros(4, 3)).unwrap();
        assert!(p.grid().data().iter().all(|&v| (v - 0.25).abs() < 1e-7));

        let bias: Vec<f32> = [1.0f64, 2.0, 3.0].iter().map(|v| v.ln() as f32).collect();
        let head = ProjectionHead::new(3, 3, vec![0.0; 9], bias.clone()).unwrap();
        let p = probability_map(&r, &head).unwrap();
        for (v, e) in p.grid().pixel(0, 0).iter().zip([1.0 / 6.0, 1.0 / 3.0, 0.5]) {
            assert!((*v as f64 - e).abs() < 1e-6);
        }
        let shifted: Vec<f32> = bias.iter().map(|b| b + 5.0).collect();
        let head2 = ProjectionHead::new(3, 3, vec![0.0; 9], shifted).unwrap();
        let p2 = probability_map(&r, &head2).unwrap();
        for (a, b) in p.grid().data().iter().zip(p2.grid().data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn blend_examples() {
        let centers = [1.0, 3.0, 5.0, 7.0];
        let onehot = ProbabilityMap::normalized(Grid::from_fn(1, 2, 4, |_, c, px| px[c + 1] = 1.0)).unwrap();
        let d = depth_from_distribution(&onehot, BinCenters::Global(&centers)).unwrap();
        assert_eq!(d.data(), &[3.0, 5.0]);

        let uniform = ProbabilityMap::normalized(Grid::filled(1, 2, 4, 1.0)).unwrap();
        let d = depth_from_distribution(&uniform, BinCenters::Global(&centers)).unwrap();
        assert!(d.data().iter().all(|&v| v == 4.0));
        assert!(depth_from_distribution(&uniform, BinCenters::Global(&centers[..3])).is_err());
    }

    #[test]
    fn holistic_constant_cases() {
        let hist = bin_centers(&BinLogits::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap(), range(0.0, 10.0), 1e-3).unwrap();
        let key = Grid::filled(4, 8, 2, 0.3);
        let q = QueryEmbedding::identity(2);
        let out = ErpGeometry::from_height(8).unwrap();
        let mean = hist.centers().iter().sum::<f64>() / 4.0;
        let d = holistic_depth(&key, &q, &ProjectionHead::zeros(4, 2), &hist, out).unwrap();
        assert_eq!(d.shape(), (8, 16, 1));
        assert!(d.data().iter().all(|&v| (v as f64 - mean).abs() < 1e-5));

        let head = ProjectionHead::new(4, 2, vec![0.0; 8], vec![0.0, 0.0, 1e3, 0.0]).unwrap();
        let d = holistic_depth(&key, &q, &head, &hist, out).unwrap();
        assert!(d.data().iter().all(|&v| v == hist.centers()[2] as f32));

        let wrong = ErpGeometry::from_height(4).unwrap();
        assert!(holistic_depth(&key, &q, &head, &hist, wrong).is_err());
    }

    #[test]
    fn regional_matches_holistic_for_single_patch() {
        let hist = bin_centers(&BinLogits::new(vec![0.5, 2.0, 1.0]).unwrap(), range(0.5, 9.0), 1e-3).unwrap();
        let token = vec![0.2f32, -1.0];
        let m = IndexMap::new(4, 8, 1, vec![0; 32]).unwrap();
        let q = QueryEmbedding::new(3, 2, vec![1.0, 0.0, 0.5, 0.5, -1.0, 2.0]).unwrap();
        let head = ProjectionHead::new(3, 3, (0..9).map(|k| k as f32 * 0.1 - 0.3).collect(), vec![0.1, 0.0, -0.2]).unwrap();
        let out = ErpGeometry::from_height(8).unwrap();
        let regional = regional_depth(&m, std::slice::from_ref(&hist), &token, &q, &head, out).unwrap();
        let keymap = regional_keymap(&m, &token, 2).unwrap();
        let holistic = holistic_depth(&keymap, &q, &head, &hist, out).unwrap();
        for (a, b) in regional.data().iter().zip(holistic.data()) {
            assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0));
        }
    }

    #[test]
    fn regional_uniform_probabilities_give_patch_mean() {
        let r = range(0.0, 10.0);
        let hists = vec![
            DepthHistogram::from_widths(r, vec![2.0, 8.0]).unwrap(),
            DepthHistogram::from_widths(r, vec![6.0, 4.0]).unwrap(),
        ];
        let assignment: Vec<u32> = (0..32).map(|k| ((k % 8) / 4) as u32).collect();
        let m = IndexMap::new(4, 8, 2, assignment).unwrap();
        let out = ErpGeometry::from_height(8).unwrap();
        let d = regional_depth(&m, &hists, &[1.0, 1.0], &QueryEmbedding::identity(1), &ProjectionHead::zeros(2, 1), out)
            .unwrap();
        // interior columns away from the patch boundary and the seam
        assert!((d.get(3, 2, 0) - 3.5).abs() < 1e-6); // (1 + 6) / 2
        assert!((d.get(3, 10, 0) - 5.5).abs() < 1e-6); // (3 + 8) / 2
    }

    #[test]
    fn mean_tokens_averages_rows() {
        assert_eq!(mean_tokens(&[1.0, 2.0, 3.0, 6.0], 2).unwrap(), vec![2.0, 4.0]);
        assert!(mean_tokens(&[1.0, 2.0, 3.0], 2).is_err());
    }

    #[test]
    fn upsampled_probabilities_stay_normalized() {
        let g = Grid::from_fn(4, 8, 5, |r, c, px| px.iter_mut().enumerate().for_each(|(k, v)| *v = ((r * 3 + c * 7 + k) % 4) as f32 + 0.1));
        let p = ProbabilityMap::normalized(g).unwrap().upsample(2).unwrap();
        for px in p.grid().pixels() {
            assert!((px.iter().map(|&v| v as f64).sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }
}
