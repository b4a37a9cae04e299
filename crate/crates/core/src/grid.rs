use crate::error::{Error, Result};
use crate::sphere::ErpGeometry;

/// A row-major `height x width x channels` grid of `f32` values.
///
/// The same type carries ERP images, depth maps, feature maps, probability
/// maps and tangent patches; ERP-specific operations check the 2:1 shape
/// through [`Grid::erp_geometry`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

/// A [`Grid`] whose dimensions form an [`ErpGeometry`].
pub type ErpGrid = Grid;

/// Feature maps are plain grids; `channels` is the feature dimension.
pub type FeatureMap = Grid;

impl Grid {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::DimensionMismatch("grid needs at least one channel".into()));
        }
        if data.len() != height * width * channels {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {height}x{width}x{channels} grid",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Self {
        assert!(channels > 0);
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, 0.0)
    }

    /// Fills each pixel from `f(row, col, out)` where `out` holds the channels.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, &mut [f32]),
    ) -> Self {
        let mut g = Self::zeros(height, width, channels);
        for (k, px) in g.data.chunks_exact_mut(channels).enumerate() {
            f(k / width, k % width, px);
        }
        g
    }

    pub fn erp(geometry: ErpGeometry, channels: usize, value: f32) -> Self {
        Self::filled(geometry.height, geometry.width, channels, value)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn erp_geometry(&self) -> Result<ErpGeometry> {
        ErpGeometry::new(self.width, self.height)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f32 {
        self.data[(row * self.width + col) * self.channels + ch]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, value: f32) {
        self.data[(row * self.width + col) * self.channels + ch] = value;
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> &[f32] {
        let start = (row * self.width + col) * self.channels;
        &self.data[start..start + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, row: usize, col: usize) -> &mut [f32] {
        let start = (row * self.width + col) * self.channels;
        &mut self.data[start..start + self.channels]
    }

    pub fn pixels(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.channels)
    }

    pub fn pixels_mut(&mut self) -> std::slice::ChunksExactMut<'_, f32> {
        self.data.chunks_exact_mut(self.channels)
    }

    /// Copies out a single channel.
    pub fn channel(&self, ch: usize) -> Grid {
        assert!(ch < self.channels);
        let data = self.pixels().map(|p| p[ch]).collect();
        Grid {
            height: self.height,
            width: self.width,
            channels: 1,
            data,
        }
    }

    pub fn same_shape(&self, other: &Grid) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::GeometryMismatch {
                a: (self.height, self.width),
                b: (other.height, other.width),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_is_row_major() {
        let g = Grid::from_fn(2, 3, 2, |r, c, px| {
            px[0] = (r * 10 + c) as f32;
            px[1] = -1.0;
        });
        assert_eq!(g.get(1, 2, 0), 12.0);
        assert_eq!(g.data()[(3 + 2) * 2], 12.0);
        assert_eq!(g.pixel(0, 1), &[1.0, -1.0]);
        assert_eq!(g.channel(0).data(), &[0.0, 1.0, 2.0, 10.0, 11.0, 12.0]);
    }

    #[test]
    fn rejects_bad_lengths() {
        assert!(Grid::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(Grid::new(2, 2, 0, vec![]).is_err());
    }
}
