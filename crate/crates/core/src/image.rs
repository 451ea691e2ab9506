//! Planar image container, color transforms and file ingestion.
//!
//! Pixels are stored as `f64` planes in `[0, 255]`. PNG and BMP files are read
//! through the `image` crate; a small raw planar format exists for tests and
//! for callers that already hold decoded samples.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColorSpace {
    Gray,
    Rgb,
    YCbCr,
}

/// `width × height × channels` real-valued planes.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePlanes {
    width: usize,
    height: usize,
    colorspace: ColorSpace,
    planes: Vec<Vec<f64>>,
}

impl ImagePlanes {
    /// Builds an image, validating plane sizes, sample range and the
    /// channel/colorspace pairing.
    pub fn new(
        width: usize,
        height: usize,
        colorspace: ColorSpace,
        planes: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!(
                "image dimensions must be nonzero, got {width}x{height}"
            )));
        }
        let expected_channels = match colorspace {
            ColorSpace::Gray => 1,
            ColorSpace::Rgb | ColorSpace::YCbCr => 3,
        };
        if planes.len() != expected_channels {
            return Err(Error::InvalidInput(format!(
                "{colorspace:?} needs {expected_channels} planes, got {}",
                planes.len()
            )));
        }
        for (c, plane) in planes.iter().enumerate() {
            if plane.len() != width * height {
                return Err(Error::InvalidInput(format!(
                    "plane {c} has {} samples, expected {}",
                    plane.len(),
                    width * height
                )));
            }
            if let Some(bad) = plane.iter().find(|v| !(0.0..=255.0).contains(*v)) {
                return Err(Error::InvalidInput(format!(
                    "plane {c} sample {bad} outside [0, 255]"
                )));
            }
        }
        Ok(Self {
            width,
            height,
            colorspace,
            planes,
        })
    }

    pub fn from_gray8(width: usize, height: usize, data: &[u8]) -> Result<Self> {
        Self::new(
            width,
            height,
            ColorSpace::Gray,
            vec![data.iter().map(|&v| v as f64).collect()],
        )
    }

    /// Interleaved RGB8 input.
    pub fn from_rgb8(width: usize, height: usize, data: &[u8]) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::InvalidInput(format!(
                "rgb buffer has {} bytes, expected {}",
                data.len(),
                width * height * 3
            )));
        }
        let mut planes = vec![Vec::with_capacity(width * height); 3];
        for px in data.chunks_exact(3) {
            for c in 0..3 {
                planes[c].push(px[c] as f64);
            }
        }
        Self::new(width, height, ColorSpace::Rgb, planes)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.planes.len()
    }

    pub fn colorspace(&self) -> ColorSpace {
        self.colorspace
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        &self.planes[c]
    }

    pub fn planes(&self) -> &[Vec<f64>] {
        &self.planes
    }

    #[inline]
    pub fn at(&self, c: usize, row: usize, col: usize) -> f64 {
        self.planes[c][row * self.width + col]
    }

    /// Width and height rounded up to the next multiple of 8.
    pub fn padded_dims(&self) -> (usize, usize) {
        (self.width.div_ceil(8) * 8, self.height.div_ceil(8) * 8)
    }

    pub fn blocks_wide(&self) -> usize {
        self.width.div_ceil(8)
    }

    pub fn blocks_high(&self) -> usize {
        self.height.div_ceil(8)
    }

    /// Copies the 8×8 block at block coordinates `(brow, bcol)` of channel `c`,
    /// replicating the last row/column past the image edge.
    pub fn block(&self, c: usize, brow: usize, bcol: usize) -> [f64; 64] {
        let mut out = [0.0; 64];
        let plane = &self.planes[c];
        for r in 0..8 {
            let y = (brow * 8 + r).min(self.height - 1);
            for k in 0..8 {
                let x = (bcol * 8 + k).min(self.width - 1);
                out[r * 8 + k] = plane[y * self.width + x];
            }
        }
        out
    }

    /// Converts to the colorspace the codec works in: RGB becomes YCbCr,
    /// Gray and YCbCr pass through.
    pub fn to_codec_space(&self) -> ImagePlanes {
        match self.colorspace {
            ColorSpace::Rgb => rgb_to_ycbcr(self).expect("colorspace checked"),
            _ => self.clone(),
        }
    }

    /// Luma plane: the sole plane for gray, Y for YCbCr, computed Y for RGB.
    pub fn luma(&self) -> Vec<f64> {
        match self.colorspace {
            ColorSpace::Gray | ColorSpace::YCbCr => self.planes[0].clone(),
            ColorSpace::Rgb => (0..self.width * self.height)
                .map(|i| {
                    rgb_pixel_to_ycbcr(self.planes[0][i], self.planes[1][i], self.planes[2][i])[0]
                })
                .collect(),
        }
    }

    /// Interleaved 8-bit RGB (or gray replicated) for previews.
    pub fn to_rgb8(&self) -> Vec<u8> {
        let rgb = match self.colorspace {
            ColorSpace::YCbCr => ycbcr_to_rgb(self).expect("colorspace checked"),
            _ => self.clone(),
        };
        let n = self.width * self.height;
        let mut out = Vec::with_capacity(n * 3);
        for i in 0..n {
            for c in 0..3 {
                let plane = &rgb.planes[c.min(rgb.planes.len() - 1)];
                out.push(plane[i].round().clamp(0.0, 255.0) as u8);
            }
        }
        out
    }
}

const KR: f64 = 0.299;
const KG: f64 = 0.587;
const KB: f64 = 0.114;

fn rgb_pixel_to_ycbcr(r: f64, g: f64, b: f64) -> [f64; 3] {
    let y = KR * r + KG * g + KB * b;
    let cb = 128.0 + (b - y) / (2.0 * (1.0 - KB));
    let cr = 128.0 + (r - y) / (2.0 * (1.0 - KR));
    [y, cb, cr]
}

fn ycbcr_pixel_to_rgb(y: f64, cb: f64, cr: f64) -> [f64; 3] {
    let r = y + 2.0 * (1.0 - KR) * (cr - 128.0);
    let b = y + 2.0 * (1.0 - KB) * (cb - 128.0);
    let g = (y - KR * r - KB * b) / KG;
    [r, g, b]
}

/// BT.601 full-range (JFIF) RGB → YCbCr, clamped to `[0, 255]`.
pub fn rgb_to_ycbcr(img: &ImagePlanes) -> Result<ImagePlanes> {
    if img.colorspace != ColorSpace::Rgb {
        return Err(Error::InvalidInput(format!(
            "rgb_to_ycbcr expects RGB, got {:?}",
            img.colorspace
        )));
    }
    convert(img, ColorSpace::YCbCr, rgb_pixel_to_ycbcr)
}

/// Inverse of [`rgb_to_ycbcr`], clamped to `[0, 255]`.
pub fn ycbcr_to_rgb(img: &ImagePlanes) -> Result<ImagePlanes> {
    if img.colorspace != ColorSpace::YCbCr {
        return Err(Error::InvalidInput(format!(
            "ycbcr_to_rgb expects YCbCr, got {:?}",
            img.colorspace
        )));
    }
    convert(img, ColorSpace::Rgb, ycbcr_pixel_to_rgb)
}

fn convert(
    img: &ImagePlanes,
    target: ColorSpace,
    f: fn(f64, f64, f64) -> [f64; 3],
) -> Result<ImagePlanes> {
    let n = img.width * img.height;
    let mut planes = vec![Vec::with_capacity(n); 3];
    for i in 0..n {
        let px = f(img.planes[0][i], img.planes[1][i], img.planes[2][i]);
        for c in 0..3 {
            planes[c].push(px[c].clamp(0.0, 255.0));
        }
    }
    ImagePlanes::new(img.width, img.height, target, planes)
}

const RAW_MAGIC: &[u8; 4] = b"QRAW";

/// Raw planar layout: `QRAW`, then width, height and channel count as
/// little-endian `u32`, then `channels` planes of `u8` samples in row-major
/// order. One channel is read as Gray, three as RGB.
pub fn decode_raw(bytes: &[u8]) -> Result<ImagePlanes> {
    if bytes.len() < 16 || &bytes[..4] != RAW_MAGIC {
        return Err(Error::InvalidInput("not a QRAW file".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let (w, h, c) = (word(0) as usize, word(1) as usize, word(2) as usize);
    let colorspace = match c {
        1 => ColorSpace::Gray,
        3 => ColorSpace::Rgb,
        _ => return Err(Error::InvalidInput(format!("raw channel count {c}"))),
    };
    let body = &bytes[16..];
    if body.len() != w * h * c {
        return Err(Error::InvalidInput(format!(
            "raw body has {} bytes, header implies {}",
            body.len(),
            w * h * c
        )));
    }
    let planes = body
        .chunks_exact(w * h)
        .map(|p| p.iter().map(|&v| v as f64).collect())
        .collect();
    ImagePlanes::new(w, h, colorspace, planes)
}

pub fn encode_raw(img: &ImagePlanes) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + img.width * img.height * img.channels());
    out.extend_from_slice(RAW_MAGIC);
    for v in [img.width, img.height, img.channels()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for plane in &img.planes {
        out.extend(plane.iter().map(|v| v.round().clamp(0.0, 255.0) as u8));
    }
    out
}

/// Reads a PNG, BMP or QRAW file. Alpha is dropped; 16-bit inputs are reduced
/// to 8 bits.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImagePlanes> {
    let bytes = fs::read(path.as_ref())?;
    load_image_bytes(&bytes)
}

pub fn load_image_bytes(bytes: &[u8]) -> Result<ImagePlanes> {
    if bytes.starts_with(RAW_MAGIC) {
        return decode_raw(bytes);
    }
    let format = image::guess_format(bytes)?;
    if !matches!(format, image::ImageFormat::Png | image::ImageFormat::Bmp) {
        return Err(Error::InvalidInput(format!(
            "unsupported input format {format:?}; expected PNG, BMP or QRAW"
        )));
    }
    let dynimg = image::load_from_memory_with_format(bytes, format)?;
    let (w, h) = (dynimg.width() as usize, dynimg.height() as usize);
    if dynimg.color().has_color() {
        ImagePlanes::from_rgb8(w, h, dynimg.to_rgb8().as_raw())
    } else {
        ImagePlanes::from_gray8(w, h, dynimg.to_luma8().as_raw())
    }
}

pub fn save_png(img: &ImagePlanes, path: impl AsRef<Path>) -> Result<()> {
    let (w, h) = (img.width as u32, img.height as u32);
    if img.colorspace == ColorSpace::Gray {
        let data: Vec<u8> = img.planes[0]
            .iter()
            .map(|v| v.round().clamp(0.0, 255.0) as u8)
            .collect();
        image::save_buffer(path, &data, w, h, image::ExtendedColorType::L8)?;
    } else {
        image::save_buffer(path, &img.to_rgb8(), w, h, image::ExtendedColorType::Rgb8)?;
    }
    Ok(())
}
