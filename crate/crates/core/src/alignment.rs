//! Spatial feature alignment: assigns every ERP feature pixel to the tangent
//! patch whose feature vector it is most similar to, and scatters per-patch
//! tables back onto the ERP grid through that assignment.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Cosine similarity, accumulated in `f64` and clamped to `[-1, 1]`.
pub fn cosine_similarity(f: &[f32], v: &[f32]) -> Result<f64> {
    if f.len() != v.len() {
        return Err(Error::DimensionMismatch(format!(
            "vectors of length {} and {}",
            f.len(),
            v.len()
        )));
    }
    let nf = norm(f);
    let nv = norm(v);
    if nf == 0.0 || nv == 0.0 {
        return Err(Error::ZeroNormVector(None));
    }
    Ok((dot(f, v) / (nf * nv)).clamp(-1.0, 1.0))
}

#[inline]
fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

#[inline]
fn norm(a: &[f32]) -> f64 {
    dot(a, a).sqrt()
}

/// One feature vector per tangent patch (`n x dim`, row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct PatchVectors {
    n: usize,
    dim: usize,
    data: Vec<f32>,
}

impl PatchVectors {
    pub fn new(n: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if n == 0 || dim == 0 {
            return Err(Error::DimensionMismatch("patch vectors need n >= 1 and dim >= 1".into()));
        }
        if data.len() != n * dim {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {n} patch vectors of dim {dim}",
                data.len()
            )));
        }
        if let Some(i) = data.chunks_exact(dim).position(|row| norm(row) == 0.0) {
            return Err(Error::ZeroNormVector(Some(i)));
        }
        Ok(Self { n, dim, data })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, k: usize) -> &[f32] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }
}

/// Per-pixel patch assignment. The one-hot form is exposed as a view.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexMap {
    height: usize,
    width: usize,
    patches: usize,
    assignment: Vec<u32>,
}

impl IndexMap {
    pub fn new(height: usize, width: usize, patches: usize, assignment: Vec<u32>) -> Result<Self> {
        if assignment.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for a {height}x{width} index map",
                assignment.len()
            )));
        }
        if let Some(&bad) = assignment.iter().find(|&&a| a as usize >= patches) {
            return Err(Error::DimensionMismatch(format!(
                "label {bad} out of range for {patches} patches"
            )));
        }
        Ok(Self {
            height,
            width,
            patches,
            assignment,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn patch_count(&self) -> usize {
        self.patches
    }

    pub fn assignment(&self) -> &[u32] {
        &self.assignment
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> usize {
        self.assignment[row * self.width + col] as usize
    }

    /// One-hot vector of pixel `(row, col)`.
    pub fn one_hot(&self, row: usize, col: usize) -> Vec<f32> {
        let mut v = vec![0.0; self.patches];
        v[self.get(row, col)] = 1.0;
        v
    }

    /// Materialized `height x width x N` one-hot grid.
    pub fn one_hot_grid(&self) -> Grid {
        Grid::from_fn(self.height, self.width, self.patches, |r, c, px| {
            px[self.get(r, c)] = 1.0;
        })
    }

    /// Number of pixels assigned to each patch.
    pub fn histogram(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.patches];
        for &a in &self.assignment {
            counts[a as usize] += 1;
        }
        counts
    }
}

/// Argmax of cosine similarity between each pixel feature and every patch
/// vector. Ties go to the lowest patch index.
pub fn build_index_map(features: &Grid, vectors: &PatchVectors) -> Result<IndexMap> {
    let c = features.channels();
    if c != vectors.dim() {
        return Err(Error::DimensionMismatch(format!(
            "feature map has {c} channels, patch vectors have dim {}",
            vectors.dim()
        )));
    }
    let norms: Vec<f64> = (0..vectors.len()).map(|k| norm(vectors.row(k))).collect();
    let assignment: Vec<u32> = features
        .data()
        .par_chunks_exact(c)
        .enumerate()
        .map(|(idx, f)| {
            let nf = norm(f);
            if nf == 0.0 {
                return Err(Error::ZeroNormVector(Some(idx)));
            }
            let mut best = 0usize;
            let mut best_score = f64::NEG_INFINITY;
            for (k, nv) in norms.iter().enumerate() {
                let score = (dot(f, vectors.row(k)) / (nf * nv)).clamp(-1.0, 1.0);
                if score > best_score {
                    best_score = score;
                    best = k;
                }
            }
            Ok(best as u32)
        })
        .collect::<Result<_>>()?;
    IndexMap::new(features.height(), features.width(), vectors.len(), assignment)
}

/// Scatters per-patch rows onto the grid: pixel `(i, j)` receives row
/// `assignment(i, j)` of the `N x dim` table.
pub fn aggregate_by_index(m: &IndexMap, table: &[f32], dim: usize) -> Result<Grid> {
    if dim == 0 || table.len() != m.patch_count() * dim {
        return Err(Error::DimensionMismatch(format!(
            "table of {} values is not {} rows of dim {dim}",
            table.len(),
            m.patch_count()
        )));
    }
    let mut out = Grid::zeros(m.height(), m.width(), dim);
    out.pixels_mut().zip(m.assignment()).for_each(|(px, &a)| {
        let a = a as usize;
        px.copy_from_slice(&table[a * dim..(a + 1) * dim]);
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[2.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        let s = cosine_similarity(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((s - 0.5f64.sqrt()).abs() < 1e-6);
        assert!(matches!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::ZeroNormVector(_))
        ));
    }

    #[test]
    fn zero_patch_vector_rejected() {
        let err = PatchVectors::new(2, 2, vec![1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(err, Err(Error::ZeroNormVector(Some(1)))));
    }

    #[test]
    fn identity_vectors_select_axis() {
        let vs = PatchVectors::new(3, 3, vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap();
        let f = Grid::new(1, 1, 3, vec![0.0, 0.0, 1.0]).unwrap();
        let m = build_index_map(&f, &vs).unwrap();
        assert_eq!(m.get(0, 0), 2);
        assert_eq!(m.one_hot(0, 0), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let vs = PatchVectors::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let f = Grid::new(1, 1, 2, vec![1.0, 1.0]).unwrap();
        assert_eq!(build_index_map(&f, &vs).unwrap().get(0, 0), 0);
    }

    #[test]
    fn zero_feature_pixel_is_an_error() {
        let vs = PatchVectors::new(1, 2, vec![1.0, 0.0]).unwrap();
        let f = Grid::new(1, 2, 2, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(build_index_map(&f, &vs), Err(Error::ZeroNormVector(Some(1)))));
    }

    #[test]
    fn aggregate_single_patch_and_lookup() {
        let m = IndexMap::new(2, 2, 1, vec![0; 4]).unwrap();
        let out = aggregate_by_index(&m, &[4.0, 5.0], 2).unwrap();
        assert!(out.pixels().all(|p| p == [4.0, 5.0]));

        let m = IndexMap::new(1, 3, 3, vec![2, 0, 1]).unwrap();
        let table = [10.0, 20.0, 30.0];
        let out = aggregate_by_index(&m, &table, 1).unwrap();
        assert_eq!(out.data(), &[30.0, 10.0, 20.0]);
        assert!(aggregate_by_index(&m, &table[..2], 1).is_err());
        assert_eq!(m.histogram(), vec![1, 1, 1]);
        let oh = m.one_hot_grid();
        assert!(oh.pixels().all(|p| p.iter().sum::<f32>() == 1.0));
    }
}
