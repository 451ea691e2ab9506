//! Whole-image block pipeline: blockify + DCT, quantize, reconstruct.

use super::dct::forward_dct;
use super::entropy::QuantizedBlocks;
use super::idct_int::dequantize_idct;
use super::quant::{quantize_int, QuantTableSet};
use super::zigzag::{inverse_zigzag, zigzag};
use crate::error::{Error, Result};
use crate::image::{ColorSpace, ImagePlanes};

/// One 8×8 block of level-shifted DCT coefficients (natural order).
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffBlock {
    pub values: [f64; 64],
    /// Block coordinates `(row, col)` on the 8-pixel grid.
    pub origin: (usize, usize),
    pub channel: usize,
}

/// DCT coefficients of every block of an image in codec colorspace, laid out
/// in MCU order (`unit * channels + channel`). Quantizing against new tables
/// reuses these, so they are computed once per image.
#[derive(Debug, Clone)]
pub struct CoefficientImage {
    pub width: usize,
    pub height: usize,
    pub colorspace: ColorSpace,
    pub channels: usize,
    pub blocks_wide: usize,
    pub blocks_high: usize,
    pub coeffs: Vec<[f64; 64]>,
}

impl CoefficientImage {
    /// `img` must already be Gray or YCbCr.
    pub fn new(img: &ImagePlanes) -> Result<Self> {
        if img.colorspace() == ColorSpace::Rgb {
            return Err(Error::MustConvert("RGB".into()));
        }
        let (bw, bh) = (img.blocks_wide(), img.blocks_high());
        let channels = img.channels();
        let mut coeffs = Vec::with_capacity(bw * bh * channels);
        for br in 0..bh {
            for bc in 0..bw {
                for c in 0..channels {
                    coeffs.push(forward_dct(&img.block(c, br, bc), true));
                }
            }
        }
        Ok(Self {
            width: img.width(),
            height: img.height(),
            colorspace: img.colorspace(),
            channels,
            blocks_wide: bw,
            blocks_high: bh,
            coeffs,
        })
    }

    pub fn units(&self) -> usize {
        self.blocks_wide * self.blocks_high
    }

    pub fn block(&self, unit: usize, channel: usize) -> CoeffBlock {
        CoeffBlock {
            values: self.coeffs[unit * self.channels + channel],
            origin: (unit / self.blocks_wide, unit % self.blocks_wide),
            channel,
        }
    }

    /// Quantizes every block with the exported integer tables; output is in
    /// zigzag order, clamped to the baseline-representable range.
    pub fn quantize(&self, tables: &QuantTableSet) -> Result<QuantizedBlocks> {
        let per_channel: Vec<&[u16; 64]> = (0..self.channels)
            .map(|c| tables.exported_for_channel(c))
            .collect::<Result<_>>()?;
        let blocks = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, coeffs)| {
                let mut q = quantize_int(coeffs, per_channel[i % self.channels]);
                q[0] = q[0].clamp(-2047, 2047);
                for v in &mut q[1..] {
                    *v = (*v).clamp(-1023, 1023);
                }
                zigzag(&q)
            })
            .collect();
        Ok(QuantizedBlocks {
            channels: self.channels,
            blocks,
        })
    }
}

/// Decode path: dequantize → fixed-point inverse DCT → clamp, cropped to
/// `width × height`.
pub fn reconstruct(
    quantized: &QuantizedBlocks,
    tables: &[&[u16; 64]],
    width: usize,
    height: usize,
    blocks_wide: usize,
    colorspace: ColorSpace,
) -> Result<ImagePlanes> {
    let channels = quantized.channels;
    if tables.len() != channels {
        return Err(Error::InvalidInput(format!(
            "{} tables for {channels} channels",
            tables.len()
        )));
    }
    let mut planes = vec![vec![0.0; width * height]; channels];
    for (i, zz) in quantized.blocks.iter().enumerate() {
        let (unit, c) = (i / channels, i % channels);
        let (br, bc) = (unit / blocks_wide, unit % blocks_wide);
        let natural = inverse_zigzag(zz)?;
        let px = dequantize_idct(&natural, tables[c]);
        for r in 0..8 {
            let y = br * 8 + r;
            if y >= height {
                break;
            }
            for k in 0..8 {
                let x = bc * 8 + k;
                if x >= width {
                    break;
                }
                planes[c][y * width + x] = px[r * 8 + k] as f64;
            }
        }
    }
    ImagePlanes::new(width, height, colorspace, planes)
}

impl CoefficientImage {
    /// Hard encode-decode roundtrip in the codec colorspace.
    pub fn roundtrip(&self, tables: &QuantTableSet) -> Result<(QuantizedBlocks, ImagePlanes)> {
        let q = self.quantize(tables)?;
        let per_channel: Vec<&[u16; 64]> = (0..self.channels)
            .map(|c| tables.exported_for_channel(c))
            .collect::<Result<_>>()?;
        let img = reconstruct(
            &q,
            &per_channel,
            self.width,
            self.height,
            self.blocks_wide,
            self.colorspace,
        )?;
        Ok((q, img))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rgb_rejected() {
        let img = ImagePlanes::from_rgb8(1, 1, &[1, 2, 3]).unwrap();
        assert!(matches!(CoefficientImage::new(&img), Err(Error::MustConvert(_))));
    }

    #[test]
    fn layout_and_origins() {
        let img = ImagePlanes::from_gray8(17, 9, &[7; 17 * 9]).unwrap();
        let ci = CoefficientImage::new(&img).unwrap();
        assert_eq!((ci.blocks_wide, ci.blocks_high), (3, 2));
        assert_eq!(ci.units(), 6);
        assert_eq!(ci.block(4, 0).origin, (1, 1));
    }

    #[test]
    fn all_ones_roundtrip_of_integer_image_is_near_lossless() {
        let data: Vec<u8> = (0..24 * 16).map(|i| ((i * 37) % 251) as u8).collect();
        let img = ImagePlanes::from_gray8(24, 16, &data).unwrap();
        let ci = CoefficientImage::new(&img).unwrap();
        let tables = QuantTableSet::standard(100, 1, 1).unwrap();
        let (_, back) = ci.roundtrip(&tables).unwrap();
        let max_err = img
            .plane(0)
            .iter()
            .zip(back.plane(0))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_err <= 2.0, "max err {max_err}");
    }
}
