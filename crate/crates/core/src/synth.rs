//! Procedural scenes with closed-form depth, plus oracle features and
//! probabilities that stand in for a trained network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::alignment::PatchVectors;
use crate::distribution::{BinCenters, DepthRange, ProbabilityMap};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::sphere::{ErpGeometry, PatchLayout, SphereDir};

/// Name of the generator behind every seeded draw in this crate.
pub const RNG_NAME: &str = "ChaCha8";

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq)]
pub enum SceneKind {
    /// Camera at the center of a sphere of radius `depth`.
    ConstantSphere { depth: f64 },
    /// Camera at the center of an axis-aligned box.
    AxisBox { half_extents: [f64; 3] },
    /// Each pixel takes the depth of its nearest layout center.
    VoronoiCells { layout: PatchLayout, depths: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub kind: SceneKind,
    pub range: DepthRange,
    pub seed: u64,
}

impl SceneSpec {
    pub fn new(kind: SceneKind, range: DepthRange, seed: u64) -> Result<Self> {
        let spec = Self { kind, range, seed };
        spec.validate()?;
        Ok(spec)
    }

    /// A Voronoi scene whose per-cell depths are drawn uniformly from the
    /// inner 80% of `range`.
    pub fn random_voronoi(layout: PatchLayout, range: DepthRange, seed: u64) -> Result<Self> {
        let mut r = rng(seed);
        let lo = range.d_min + 0.1 * range.span();
        let hi = range.d_max - 0.1 * range.span();
        let depths = (0..layout.len()).map(|_| r.random_range(lo..hi)).collect();
        Self::new(SceneKind::VoronoiCells { layout, depths }, range, seed)
    }

    fn validate(&self) -> Result<()> {
        let out_of_range = |d: f64| !(self.range.contains(d) && d > 0.0);
        match &self.kind {
            SceneKind::ConstantSphere { depth } => {
                if out_of_range(*depth) {
                    return Err(Error::InvalidArgument(format!("sphere depth {depth} outside range")));
                }
            }
            SceneKind::AxisBox { half_extents } => {
                if half_extents.iter().any(|h| !(*h > 0.0)) {
                    return Err(Error::InvalidArgument("box half extents must be positive".into()));
                }
                let nearest = half_extents.iter().cloned().fold(f64::INFINITY, f64::min);
                let corner = half_extents.iter().map(|h| h * h).sum::<f64>().sqrt();
                if out_of_range(nearest) || out_of_range(corner) {
                    return Err(Error::InvalidArgument(format!(
                        "box depths [{nearest}, {corner}] exceed the declared range"
                    )));
                }
            }
            SceneKind::VoronoiCells { layout, depths } => {
                if depths.len() != layout.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "{} cell depths for {} centers",
                        depths.len(),
                        layout.len()
                    )));
                }
                if let Some(d) = depths.iter().find(|d| out_of_range(**d)) {
                    return Err(Error::InvalidArgument(format!("cell depth {d} outside range")));
                }
            }
        }
        Ok(())
    }
}

#[inline]
fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Index of the center with the largest dot product against `dir`; ties go
/// to the lowest index.
pub fn nearest_center(dir: [f64; 3], centers: &[[f64; 3]]) -> usize {
    let mut best = 0;
    let mut best_dot = f64::NEG_INFINITY;
    for (k, c) in centers.iter().enumerate() {
        let d = dot3(dir, *c);
        if d > best_dot {
            best_dot = d;
            best = k;
        }
    }
    best
}

/// Distance from the origin along unit `dir` to the box surface.
pub fn ray_box_distance(dir: [f64; 3], half_extents: [f64; 3]) -> f64 {
    dir.iter()
        .zip(half_extents)
        .filter(|(d, _)| **d != 0.0)
        .map(|(d, h)| h / d.abs())
        .fold(f64::INFINITY, f64::min)
}

/// Ray-casts the scene from the sphere center through every pixel center.
pub fn render_depth(spec: &SceneSpec, g: ErpGeometry) -> Grid {
    let centers: Vec<[f64; 3]> = match &spec.kind {
        SceneKind::VoronoiCells { layout, .. } => {
            layout.centers().iter().map(|c| c.to_unit_vector()).collect()
        }
        _ => Vec::new(),
    };
    let mut out = Grid::erp(g, 1, 0.0);
    out.data_mut()
        .par_chunks_mut(g.width)
        .enumerate()
        .for_each(|(row, line)| {
            for (col, d) in line.iter_mut().enumerate() {
                let dir = g.pixel_dir(row, col).to_unit_vector();
                *d = match &spec.kind {
                    SceneKind::ConstantSphere { depth } => *depth,
                    SceneKind::AxisBox { half_extents } => ray_box_distance(dir, *half_extents),
                    SceneKind::VoronoiCells { depths, .. } => depths[nearest_center(dir, &centers)],
                } as f32;
            }
        });
    out
}

/// Unit direction of every pixel center as a 3-channel feature map.
pub fn oracle_direction_features(g: ErpGeometry) -> Grid {
    Grid::from_fn(g.height, g.width, 3, |r, c, px| {
        let v = g.pixel_dir(r, c).to_unit_vector();
        px.iter_mut().zip(v).for_each(|(o, x)| *o = x as f32);
    })
}

/// Unit direction of every patch center.
pub fn oracle_patch_vectors(layout: &PatchLayout) -> PatchVectors {
    let data = layout
        .centers()
        .iter()
        .flat_map(|c| c.to_unit_vector().map(|x| x as f32))
        .collect();
    PatchVectors::new(layout.len(), 3, data).expect("unit vectors are nonzero")
}

/// Brute-force spherical Voronoi label of every pixel of `g`.
pub fn voronoi_labels(g: ErpGeometry, centers: &[SphereDir]) -> Vec<u32> {
    let cs: Vec<[f64; 3]> = centers.iter().map(|c| c.to_unit_vector()).collect();
    (0..g.pixel_count())
        .map(|k| nearest_center(g.pixel_dir(k / g.width, k % g.width).to_unit_vector(), &cs) as u32)
        .collect()
}

/// Index of the center closest to `d`; ties go to the lowest index.
pub fn nearest_bin(d: f64, centers: &[f64]) -> usize {
    let mut best = 0;
    for (b, c) in centers.iter().enumerate() {
        if (d - c).abs() < (d - centers[best]).abs() {
            best = b;
        }
    }
    best
}

/// One-hot probabilities at the bin nearest to each ground-truth depth.
/// Invalid ground-truth pixels get the first bin.
pub fn oracle_onehot_probability(gt: &Grid, centers: BinCenters<'_>) -> Result<ProbabilityMap> {
    let bins = match centers {
        BinCenters::Global(c) => c.len(),
        BinCenters::PerPixel(m) => {
            if m.height() != gt.height() || m.width() != gt.width() {
                return Err(Error::GeometryMismatch {
                    a: (gt.height(), gt.width()),
                    b: (m.height(), m.width()),
                });
            }
            m.channels()
        }
    };
    if bins == 0 {
        return Err(Error::EmptySet("bin centers"));
    }
    let grid = Grid::from_fn(gt.height(), gt.width(), bins, |r, c, px| {
        let d = gt.get(r, c, 0) as f64;
        let b = match centers {
            BinCenters::Global(cs) => nearest_bin(d, cs),
            BinCenters::PerPixel(m) => {
                let cs: Vec<f64> = m.pixel(r, c).iter().map(|&v| v as f64).collect();
                nearest_bin(d, &cs)
            }
        };
        px[if d.is_finite() { b } else { 0 }] = 1.0;
    });
    ProbabilityMap::normalized(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::{depth_from_distribution, DepthHistogram};
    use crate::sphere::make_layout;

    fn range() -> DepthRange {
        DepthRange::new(0.1, 10.0).unwrap()
    }

    #[test]
    fn constant_sphere_renders_constant() {
        let spec = SceneSpec::new(SceneKind::ConstantSphere { depth: 3.0 }, range(), 0).unwrap();
        let d = render_depth(&spec, ErpGeometry::from_height(16).unwrap());
        assert!(d.data().iter().all(|&v| v == 3.0));
    }

    #[test]
    fn box_distances() {
        assert_eq!(ray_box_distance([1.0, 0.0, 0.0], [2.0; 3]), 2.0);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((ray_box_distance([s, s, 0.0], [2.0; 3]) - 2.828427).abs() < 1e-6);

        let spec = SceneSpec::new(SceneKind::AxisBox { half_extents: [2.0; 3] }, range(), 0).unwrap();
        let g = ErpGeometry::from_height(64).unwrap();
        let d = render_depth(&spec, g);
        assert!(d.data().iter().all(|&v| (2.0..=2.0 * 3f32.sqrt() + 1e-5).contains(&v)));
        assert!(SceneSpec::new(SceneKind::AxisBox { half_extents: [9.0; 3] }, range(), 0).is_err());
    }

    #[test]
    fn direction_features_are_unit() {
        let g = ErpGeometry::from_height(8).unwrap();
        let f = oracle_direction_features(g);
        for px in f.pixels() {
            let n: f64 = px.iter().map(|&v| v as f64 * v as f64).sum();
            assert!((n - 1.0).abs() < 1e-6);
        }
        assert_eq!(SphereDir::new(0.0, 0.0).to_unit_vector(), [1.0, 0.0, 0.0]);
    }

    #[test]
    fn voronoi_scene_within_range() {
        let layout = make_layout(18, 80f64.to_radians()).unwrap();
        let spec = SceneSpec::random_voronoi(layout, range(), 7).unwrap();
        let d = render_depth(&spec, ErpGeometry::from_height(16).unwrap());
        assert!(d.data().iter().all(|&v| range().contains(v as f64)));
        let again = SceneSpec::random_voronoi(make_layout(18, 80f64.to_radians()).unwrap(), range(), 7).unwrap();
        assert_eq!(spec, again);
    }

    #[test]
    fn onehot_oracle() {
        let hist = DepthHistogram::uniform(DepthRange::new(0.0, 10.0).unwrap(), 4).unwrap();
        let gt = Grid::new(1, 3, 1, vec![1.25, 3.75, 9.0]).unwrap();
        let p = oracle_onehot_probability(&gt, BinCenters::Global(hist.centers())).unwrap();
        assert_eq!(p.grid().pixel(0, 0), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(p.grid().pixel(0, 1), &[0.0, 1.0, 0.0, 0.0]);
        let d = depth_from_distribution(&p, BinCenters::Global(hist.centers())).unwrap();
        for (a, b) in d.data().iter().zip(gt.data()) {
            assert!((a - b).abs() as f64 <= hist.max_width() / 2.0);
        }
        // midpoint tie resolves to the lower bin
        assert_eq!(nearest_bin(2.5, hist.centers()), 0);
    }
}
