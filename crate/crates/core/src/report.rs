//! Rate/distortion comparison rows and their CSV form.

use crate::codec::{decode_jpeg, encode_jpeg, QuantTableSet};
use crate::error::Result;
use crate::image::{load_image_bytes, ImagePlanes};
use crate::loss::{ms_ssim_images, MsSsimParams};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

/// Qualities of the scaled Annex K baselines.
pub const BASELINE_QUALITIES: [u8; 3] = [50, 75, 90];

pub const CSV_HEADER: [&str; 5] = ["image_id", "method", "size_bytes", "ms_ssim", "bpp"];

/// One compared file. A failed row keeps its label and leaves the measured
/// fields empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub image_id: String,
    pub method: String,
    pub size_bytes: Option<usize>,
    pub ms_ssim: Option<f64>,
    pub bpp: Option<f64>,
}

impl ReportRow {
    pub fn failed(image_id: &str, method: &str) -> Self {
        Self {
            image_id: image_id.into(),
            method: method.into(),
            size_bytes: None,
            ms_ssim: None,
            bpp: None,
        }
    }

    pub fn is_failed(&self) -> bool {
        self.ms_ssim.is_none()
    }
}

pub fn baseline_label(quality: u8) -> String {
    format!("annexk_q{quality}")
}

/// JPEG goes through [`decode_jpeg`]; anything else through the generic
/// image loader.
pub fn decode_file(bytes: &[u8]) -> Result<ImagePlanes> {
    if bytes.starts_with(&[0xFF, 0xD8]) {
        Ok(decode_jpeg(bytes)?.0)
    } else {
        load_image_bytes(bytes)
    }
}

/// Scores a file against the reference image in the codec colorspace.
pub fn measure_file(reference: &ImagePlanes, image_id: &str, method: &str, bytes: &[u8], p: &MsSsimParams) -> Result<ReportRow> {
    let reference = reference.to_codec_space();
    let decoded = decode_file(bytes)?;
    let ms = ms_ssim_images(&reference, &decoded.to_codec_space(), p)?;
    Ok(ReportRow {
        image_id: image_id.into(),
        method: method.into(),
        size_bytes: Some(bytes.len()),
        ms_ssim: Some(ms),
        bpp: Some(bytes.len() as f64 * 8.0 / (reference.width() * reference.height()) as f64),
    })
}

/// Standard tables scaled to `quality`, one luma and (for color) one chroma.
pub fn baseline_tables(quality: u8, channels: usize) -> Result<QuantTableSet> {
    QuantTableSet::standard(quality, channels, channels.min(2))
}

pub fn encode_baseline(img: &ImagePlanes, quality: u8) -> Result<Vec<u8>> {
    let codec = img.to_codec_space();
    Ok(encode_jpeg(&codec, &baseline_tables(quality, codec.channels())?)?.bytes)
}

pub fn baseline_rows(img: &ImagePlanes, image_id: &str, p: &MsSsimParams) -> Result<Vec<ReportRow>> {
    BASELINE_QUALITIES
        .iter()
        .map(|&q| measure_file(img, image_id, &baseline_label(q), &encode_baseline(img, q)?, p))
        .collect()
}

/// Rows for each labelled file followed by the baseline rows. Files that do
/// not decode become failed rows; the second value lists their errors.
pub fn compare(
    img: &ImagePlanes,
    image_id: &str,
    files: &[(String, Vec<u8>)],
    p: &MsSsimParams,
) -> Result<(Vec<ReportRow>, Vec<(String, String)>)> {
    let mut rows = Vec::with_capacity(files.len() + BASELINE_QUALITIES.len());
    let mut failures = Vec::new();
    for (method, bytes) in files {
        match measure_file(img, image_id, method, bytes, p) {
            Ok(r) => rows.push(r),
            Err(e) => {
                failures.push((method.clone(), e.to_string()));
                rows.push(ReportRow::failed(image_id, method));
            }
        }
    }
    rows.extend(baseline_rows(img, image_id, p)?);
    Ok((rows, failures))
}

pub fn write_csv<W: Write>(rows: &[ReportRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| Ok(row?)).collect()
}
