use crate::error::{Error, Result};

/// Tiling of sampled blocks into a near-square picture: `⌈√S⌉` blocks per
/// row, filled row-major. Slots past the last sample wrap around to the
/// first samples so the picture has no empty cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MosaicLayout {
    pub samples: usize,
    pub channels: usize,
    pub cols: usize,
    pub rows: usize,
}

impl MosaicLayout {
    pub fn new(samples: usize, channels: usize) -> Result<Self> {
        if samples == 0 || channels == 0 {
            return Err(Error::InvalidInput("mosaic needs at least one block".into()));
        }
        let mut cols = (samples as f64).sqrt() as usize;
        while cols * cols < samples {
            cols += 1;
        }
        Ok(Self {
            samples,
            channels,
            cols,
            rows: samples.div_ceil(cols),
        })
    }

    pub fn height(&self) -> usize {
        self.rows * 8
    }

    pub fn width(&self) -> usize {
        self.cols * 8
    }

    /// Sample shown in mosaic cell `slot`.
    pub fn sample_at(&self, slot: usize) -> usize {
        slot % self.samples
    }

    /// For each pixel of the `[channels, 1, height, width]` mosaic, its flat
    /// index in a `[samples, channels, 64]` block array.
    pub fn gather_indices(&self) -> Vec<usize> {
        let (h, w) = (self.height(), self.width());
        let mut out = Vec::with_capacity(self.channels * h * w);
        for c in 0..self.channels {
            for y in 0..h {
                for x in 0..w {
                    let s = self.sample_at((y / 8) * self.cols + x / 8);
                    out.push((s * self.channels + c) * 64 + (y % 8) * 8 + x % 8);
                }
            }
        }
        out
    }

    /// Plain version of the gather for blocks indexed `sample * channels + channel`.
    pub fn assemble(&self, blocks: &[[f64; 64]]) -> Vec<f64> {
        self.gather_indices().into_iter().map(|i| blocks[i / 64][i % 64]).collect()
    }
}
