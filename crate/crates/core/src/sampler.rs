//! Variance-biased selection of the 8×8 blocks the network trains on.

use crate::codec::forward_dct;
use crate::error::{Error, Result};
use crate::image::{ColorSpace, ImagePlanes};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub total_samples: usize,
    /// Share of the samples taken from the highest-variance blocks.
    pub top_fraction: f64,
    pub seed: u64,
}

impl Default for SamplePlan {
    fn default() -> Self {
        Self {
            total_samples: 256,
            top_fraction: 0.75,
            seed: 0,
        }
    }
}

impl SamplePlan {
    pub fn validate(&self, block_count: usize) -> Result<()> {
        if self.total_samples == 0 {
            return Err(Error::InvalidPlan("at least one sample is required".into()));
        }
        if self.total_samples > block_count {
            return Err(Error::InvalidPlan(format!(
                "{} samples requested but the image has {block_count} blocks",
                self.total_samples
            )));
        }
        if !(0.0..=1.0).contains(&self.top_fraction) {
            return Err(Error::InvalidPlan(format!(
                "top fraction {} outside [0, 1]",
                self.top_fraction
            )));
        }
        Ok(())
    }

    /// The same plan with the sample count capped at `block_count`.
    pub fn clamped(&self, block_count: usize) -> Self {
        Self {
            total_samples: self.total_samples.min(block_count),
            ..*self
        }
    }

    pub fn top_count(&self) -> usize {
        (self.top_fraction * self.total_samples as f64).ceil() as usize
    }
}

/// Sampled blocks, one entry per `(sample, channel)` at index
/// `sample * channels + channel`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSet {
    pub channels: usize,
    /// Block coordinates `(row, col)`, in row-major order.
    pub coords: Vec<(usize, usize)>,
    /// Source pixels, edge-replicated past the image border.
    pub pixels: Vec<[f64; 64]>,
    /// Level-shifted DCT coefficients in natural order.
    pub coeffs: Vec<[f64; 64]>,
}

impl BlockSet {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }
}

/// Population variance of each luma block, row-major over block coordinates.
pub fn block_variance(img: &ImagePlanes) -> Vec<f64> {
    let luma = img.luma();
    let (w, h) = (img.width(), img.height());
    let (bw, bh) = (img.blocks_wide(), img.blocks_high());
    let mut out = Vec::with_capacity(bw * bh);
    for br in 0..bh {
        for bc in 0..bw {
            let mut px = [0.0; 64];
            for r in 0..8 {
                let y = (br * 8 + r).min(h - 1);
                for k in 0..8 {
                    px[r * 8 + k] = luma[y * w + (bc * 8 + k).min(w - 1)];
                }
            }
            let mean = px.iter().sum::<f64>() / 64.0;
            out.push(px.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 64.0);
        }
    }
    out
}

/// Block indices (row-major) chosen by `plan`: the top-variance share
/// first, ties resolved toward earlier blocks, then a seeded uniform draw
/// from the rest. Returned sorted.
pub fn select_blocks(variance: &[f64], plan: &SamplePlan) -> Result<Vec<usize>> {
    plan.validate(variance.len())?;
    let mut order: Vec<usize> = (0..variance.len()).collect();
    order.sort_by(|&a, &b| variance[b].total_cmp(&variance[a]).then(a.cmp(&b)));
    let top = plan.top_count().min(plan.total_samples);
    let mut chosen: Vec<usize> = order[..top].to_vec();
    let rest = &order[top..];
    let mut rest_sorted = rest.to_vec();
    rest_sorted.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let picks = rand::seq::index::sample(&mut rng, rest_sorted.len(), plan.total_samples - top);
    chosen.extend(picks.into_iter().map(|i| rest_sorted[i]));
    chosen.sort_unstable();
    Ok(chosen)
}

/// `img` must be Gray or YCbCr.
pub fn sample_blocks(img: &ImagePlanes, plan: &SamplePlan) -> Result<BlockSet> {
    if img.colorspace() == ColorSpace::Rgb {
        return Err(Error::MustConvert("RGB".into()));
    }
    let chosen = select_blocks(&block_variance(img), plan)?;
    let bw = img.blocks_wide();
    let channels = img.channels();
    let mut set = BlockSet {
        channels,
        coords: Vec::with_capacity(chosen.len()),
        pixels: Vec::with_capacity(chosen.len() * channels),
        coeffs: Vec::with_capacity(chosen.len() * channels),
    };
    for idx in chosen {
        let (br, bc) = (idx / bw, idx % bw);
        set.coords.push((br, bc));
        for c in 0..channels {
            let px = img.block(c, br, bc);
            set.coeffs.push(forward_dct(&px, true));
            set.pixels.push(px);
        }
    }
    Ok(set)
}
