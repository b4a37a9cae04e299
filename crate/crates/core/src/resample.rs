//! Bilinear resampling between ERP grids and tangent patches.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::sphere::{erp_to_sphere, sphere_to_erp, ErpGeometry, Gnomonic, PatchLayout, TangentCoord};

/// Depth value marking pixels with no data.
pub const INVALID_DEPTH: f32 = 0.0;

/// Tangent patches sampled for every center of a layout.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentPatchSet {
    layout: PatchLayout,
    patches: Vec<Grid>,
}

impl TangentPatchSet {
    pub fn new(layout: PatchLayout, patches: Vec<Grid>) -> Result<Self> {
        if patches.len() != layout.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} patches for a layout of {}",
                patches.len(),
                layout.len()
            )));
        }
        let p = layout.patch_size();
        let channels = patches[0].channels();
        for (i, patch) in patches.iter().enumerate() {
            if patch.height() != p || patch.width() != p || patch.channels() != channels {
                return Err(Error::DimensionMismatch(format!(
                    "patch {i} is {:?}, expected {p}x{p}x{channels}",
                    patch.shape()
                )));
            }
        }
        Ok(Self { layout, patches })
    }

    pub fn layout(&self) -> &PatchLayout {
        &self.layout
    }

    pub fn patches(&self) -> &[Grid] {
        &self.patches
    }

    pub fn channels(&self) -> usize {
        self.patches[0].channels()
    }

    pub fn into_parts(self) -> (PatchLayout, Vec<Grid>) {
        (self.layout, self.patches)
    }
}

/// Per-patch weight used when overlapping patches are merged back to ERP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionWeighting {
    Uniform,
    /// `cos(c)^2`, where `c` is the angle from the patch center.
    #[default]
    CosineFalloff,
}

impl FusionWeighting {
    #[inline]
    fn weight(self, cos_c: f64) -> f64 {
        match self {
            FusionWeighting::Uniform => 1.0,
            FusionWeighting::CosineFalloff => cos_c * cos_c,
        }
    }
}

#[inline]
fn lerp_weights(coord: f64) -> (isize, f64) {
    let f = coord - 0.5;
    let i0 = f.floor();
    (i0 as isize, f - i0)
}

#[inline]
#[allow(clippy::too_many_arguments)]
fn blend(grid: &Grid, x0: usize, x1: usize, y0: usize, y1: usize, tx: f64, ty: f64, out: &mut [f32]) {
    for (ch, o) in out.iter_mut().enumerate() {
        let a = grid.get(y0, x0, ch) as f64;
        let b = grid.get(y0, x1, ch) as f64;
        let c = grid.get(y1, x0, ch) as f64;
        let d = grid.get(y1, x1, ch) as f64;
        let top = a + (b - a) * tx;
        let bottom = c + (d - c) * tx;
        *o = (top + (bottom - top) * ty) as f32;
    }
}

/// Bilinear sample at continuous pixel coordinates, where texel `(i, j)` has
/// its center at `(j + 0.5, i + 0.5)`. Out-of-range coordinates clamp to the
/// border.
pub fn sample_planar(grid: &Grid, x: f64, y: f64, out: &mut [f32]) {
    let (w, h) = (grid.width() as isize, grid.height() as isize);
    let (ix, tx) = lerp_weights(x);
    let (iy, ty) = lerp_weights(y);
    let cx = |i: isize| i.clamp(0, w - 1) as usize;
    let cy = |i: isize| i.clamp(0, h - 1) as usize;
    blend(grid, cx(ix), cx(ix + 1), cy(iy), cy(iy + 1), tx, ty, out);
}

/// Like [`sample_planar`] but wraps horizontally across the ERP seam.
pub fn sample_erp(grid: &Grid, x: f64, y: f64, out: &mut [f32]) {
    let (w, h) = (grid.width() as isize, grid.height() as isize);
    let (ix, tx) = lerp_weights(x);
    let (iy, ty) = lerp_weights(y);
    let wx = |i: isize| i.rem_euclid(w) as usize;
    let cy = |i: isize| i.clamp(0, h - 1) as usize;
    blend(grid, wx(ix), wx(ix + 1), cy(iy), cy(iy + 1), tx, ty, out);
}

/// First-channel convenience over [`sample_planar`].
pub fn bilinear_sample(grid: &Grid, x: f64, y: f64) -> f32 {
    let mut out = vec![0.0f32; grid.channels()];
    sample_planar(grid, x, y, &mut out);
    out[0]
}

/// First-channel convenience over [`sample_erp`].
pub fn bilinear_sample_erp(grid: &Grid, x: f64, y: f64) -> f32 {
    let mut out = vec![0.0f32; grid.channels()];
    sample_erp(grid, x, y, &mut out);
    out[0]
}

/// Tangent-plane coordinate of the center of patch pixel `(x, y)`.
pub fn patch_pixel_to_tangent(x: f64, y: f64, patch_size: usize, half_extent: f64) -> TangentCoord {
    let p = patch_size as f64;
    TangentCoord {
        u: (2.0 * x / p - 1.0) * half_extent,
        v: (1.0 - 2.0 * y / p) * half_extent,
    }
}

/// Continuous patch pixel coordinates of a tangent coordinate.
pub fn tangent_to_patch_pixel(t: TangentCoord, patch_size: usize, half_extent: f64) -> (f64, f64) {
    let p = patch_size as f64;
    ((t.u / half_extent + 1.0) * p / 2.0, (1.0 - t.v / half_extent) * p / 2.0)
}

/// Samples one gnomonic patch per layout center from an ERP grid.
pub fn extract_patches(src: &Grid, layout: &PatchLayout) -> Result<TangentPatchSet> {
    let g = src.erp_geometry()?;
    let p = layout.patch_size();
    let c = src.channels();
    let t = layout.half_extent();
    let patches: Vec<Grid> = layout
        .centers()
        .par_iter()
        .map(|&center| {
            let proj = Gnomonic::new(center);
            let mut patch = Grid::zeros(p, p, c);
            patch
                .data_mut()
                .par_chunks_mut(p * c)
                .enumerate()
                .for_each(|(y, row)| {
                    for (x, px) in row.chunks_exact_mut(c).enumerate() {
                        let tc = patch_pixel_to_tangent(x as f64 + 0.5, y as f64 + 0.5, p, t);
                        let dir = proj.inverse(tc);
                        let (u, v) = sphere_to_erp(dir, g);
                        sample_erp(src, u, v, px);
                    }
                });
            patch
        })
        .collect();
    TangentPatchSet::new(layout.clone(), patches)
}

/// Result of merging patches back onto the sphere.
#[derive(Debug, Clone)]
pub struct FusedErp {
    pub grid: Grid,
    /// Number of patches covering each ERP pixel.
    pub coverage: Vec<u16>,
}

/// Re-projects patches to ERP and averages overlapping samples.
///
/// Pixels that no patch covers get [`INVALID_DEPTH`] in every channel.
pub fn geometric_fuse(set: &TangentPatchSet, g: ErpGeometry, weighting: FusionWeighting) -> Grid {
    geometric_fuse_with_coverage(set, g, weighting).grid
}

pub fn geometric_fuse_with_coverage(
    set: &TangentPatchSet,
    g: ErpGeometry,
    weighting: FusionWeighting,
) -> FusedErp {
    let layout = set.layout();
    let p = layout.patch_size();
    let t = layout.half_extent();
    let c = set.channels();
    let projections: Vec<Gnomonic> = layout.centers().iter().map(|&d| Gnomonic::new(d)).collect();

    let mut grid = Grid::erp(g, c, INVALID_DEPTH);
    let mut coverage = vec![0u16; g.pixel_count()];
    grid.data_mut()
        .par_chunks_mut(g.width * c)
        .zip(coverage.par_chunks_mut(g.width))
        .enumerate()
        .for_each(|(row, (out_row, cov_row))| {
            let mut acc = vec![0.0f64; c];
            let mut sample = vec![0.0f32; c];
            for col in 0..g.width {
                let dir = g.pixel_dir(row, col);
                acc.iter_mut().for_each(|a| *a = 0.0);
                let mut total = 0.0f64;
                let mut hits = 0u16;
                for (proj, patch) in projections.iter().zip(set.patches()) {
                    let Ok((tc, cos_c)) = proj.forward(dir) else { continue };
                    if tc.u.abs() > t || tc.v.abs() > t {
                        continue;
                    }
                    let (x, y) = tangent_to_patch_pixel(tc, p, t);
                    sample_planar(patch, x, y, &mut sample);
                    let w = weighting.weight(cos_c);
                    for (a, s) in acc.iter_mut().zip(&sample) {
                        *a += w * *s as f64;
                    }
                    total += w;
                    hits += 1;
                }
                cov_row[col] = hits;
                if hits > 0 {
                    for (o, a) in out_row[col * c..(col + 1) * c].iter_mut().zip(&acc) {
                        *o = (a / total) as f32;
                    }
                }
            }
        });
    FusedErp { grid, coverage }
}

/// Bilinear ERP upsampling by an integer factor (the pipeline uses 2).
pub fn upsample_bilinear(src: &Grid, factor: usize) -> Result<Grid> {
    if factor == 0 {
        return Err(Error::InvalidArgument("upsampling factor must be positive".into()));
    }
    src.erp_geometry()?;
    let (h, w, c) = src.shape();
    let (oh, ow) = (h * factor, w * factor);
    let f = factor as f64;
    let mut out = Grid::zeros(oh, ow, c);
    out.data_mut()
        .par_chunks_mut(ow * c)
        .enumerate()
        .for_each(|(row, out_row)| {
            let y = (row as f64 + 0.5) / f;
            for (col, px) in out_row.chunks_exact_mut(c).enumerate() {
                sample_erp(src, (col as f64 + 0.5) / f, y, px);
            }
        });
    Ok(out)
}

/// Direction of every ERP pixel center, flattened row-major.
pub fn erp_pixel_dirs(g: ErpGeometry) -> Vec<crate::sphere::SphereDir> {
    (0..g.height)
        .flat_map(|r| (0..g.width).map(move |c| (r, c)))
        .map(|(r, c)| {
            erp_to_sphere(c as f64 + 0.5, r as f64 + 0.5, g).expect("pixel centers are in bounds")
        })
        .collect()
}
