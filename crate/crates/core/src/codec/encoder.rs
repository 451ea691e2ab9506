//! Baseline sequential JFIF writer: 8-bit, 4:4:4, Annex K Huffman tables.

use super::blocks::CoefficientImage;
use super::entropy::{codes_for_channel, BitWriter, HuffmanSpec, QuantizedBlocks};
use super::entropy::{AC_CHROMA, AC_LUMA, DC_CHROMA, DC_LUMA};
use super::quant::QuantTableSet;
use super::zigzag::zigzag;
use crate::error::{Error, Result};
use crate::image::{ColorSpace, ImagePlanes};

pub const SOI: u16 = 0xFFD8;
pub const EOI: u16 = 0xFFD9;
pub const APP0: u16 = 0xFFE0;
pub const DQT: u16 = 0xFFDB;
pub const SOF0: u16 = 0xFFC0;
pub const DHT: u16 = 0xFFC4;
pub const SOS: u16 = 0xFFDA;

#[derive(Debug, Clone)]
pub struct EncodedJpeg {
    pub bytes: Vec<u8>,
    pub size_bytes: usize,
    pub tables_used: QuantTableSet,
    /// Entropy-coded segment length in bits, before stuffing and padding.
    pub scan_bits: u64,
}

fn marker(out: &mut Vec<u8>, m: u16) {
    out.extend_from_slice(&m.to_be_bytes());
}

fn segment(out: &mut Vec<u8>, m: u16, body: &[u8]) {
    marker(out, m);
    out.extend_from_slice(&((body.len() + 2) as u16).to_be_bytes());
    out.extend_from_slice(body);
}

fn dht_body(body: &mut Vec<u8>, class: u8, id: u8, spec: &HuffmanSpec) {
    body.push((class << 4) | id);
    body.extend_from_slice(&spec.bits);
    body.extend_from_slice(spec.values);
}

/// Everything from SOI through the SOS header.
pub fn write_headers(
    width: usize,
    height: usize,
    channels: usize,
    tables: &QuantTableSet,
) -> Result<Vec<u8>> {
    let exported = tables
        .quantized_export()
        .ok_or_else(|| Error::InvalidTable("tables have not been exported".into()))?;
    if width > u16::MAX as usize || height > u16::MAX as usize {
        return Err(Error::InvalidInput(format!(
            "{width}x{height} exceeds baseline JPEG limits"
        )));
    }
    if tables.assignment().len() < channels {
        return Err(Error::InvalidTable(format!(
            "assignment covers {} channels, image has {channels}",
            tables.assignment().len()
        )));
    }
    let mut out = Vec::with_capacity(1024);
    marker(&mut out, SOI);
    segment(
        &mut out,
        APP0,
        &[b'J', b'F', b'I', b'F', 0, 1, 1, 0, 0, 1, 0, 1, 0, 0],
    );

    let mut dqt = Vec::with_capacity(65 * exported.len());
    for (id, t) in exported.iter().enumerate() {
        dqt.push(id as u8); // Pq = 0 (8-bit), Tq = id
        dqt.extend(zigzag(t).iter().map(|&v| v as u8));
    }
    segment(&mut out, DQT, &dqt);

    let mut sof = vec![8];
    sof.extend_from_slice(&(height as u16).to_be_bytes());
    sof.extend_from_slice(&(width as u16).to_be_bytes());
    sof.push(channels as u8);
    for c in 0..channels {
        sof.extend_from_slice(&[c as u8 + 1, 0x11, tables.assignment()[c] as u8]);
    }
    segment(&mut out, SOF0, &sof);

    let mut dht = Vec::with_capacity(432);
    dht_body(&mut dht, 0, 0, &DC_LUMA);
    dht_body(&mut dht, 1, 0, &AC_LUMA);
    if channels > 1 {
        dht_body(&mut dht, 0, 1, &DC_CHROMA);
        dht_body(&mut dht, 1, 1, &AC_CHROMA);
    }
    segment(&mut out, DHT, &dht);

    let mut sos = vec![channels as u8];
    for c in 0..channels {
        let t = c.min(1) as u8;
        sos.extend_from_slice(&[c as u8 + 1, (t << 4) | t]);
    }
    sos.extend_from_slice(&[0, 63, 0]);
    segment(&mut out, SOS, &sos);
    Ok(out)
}

/// Writes a complete file from already-quantized blocks in MCU order.
pub fn encode_quantized(
    width: usize,
    height: usize,
    quantized: &QuantizedBlocks,
    tables: &QuantTableSet,
) -> Result<EncodedJpeg> {
    let channels = quantized.channels;
    let mut bytes = write_headers(width, height, channels, tables)?;
    let mut writer = BitWriter::new();
    let mut prev = vec![0i32; channels];
    for (i, zz) in quantized.blocks.iter().enumerate() {
        let c = i % channels;
        writer.encode_block(zz, prev[c], codes_for_channel(c));
        prev[c] = zz[0];
    }
    let (scan, scan_bits) = writer.finish();
    bytes.extend_from_slice(&scan);
    marker(&mut bytes, EOI);
    Ok(EncodedJpeg {
        size_bytes: bytes.len(),
        bytes,
        tables_used: tables.clone(),
        scan_bits,
    })
}

/// Encodes a Gray or YCbCr image with the exported tables in `tables`.
pub fn encode_jpeg(img: &ImagePlanes, tables: &QuantTableSet) -> Result<EncodedJpeg> {
    if img.colorspace() == ColorSpace::Rgb {
        return Err(Error::MustConvert("RGB".into()));
    }
    if tables.quantized_export().is_none() {
        return Err(Error::InvalidTable("tables have not been exported".into()));
    }
    let coeffs = CoefficientImage::new(img)?;
    encode_coefficients(&coeffs, tables)
}

pub fn encode_coefficients(coeffs: &CoefficientImage, tables: &QuantTableSet) -> Result<EncodedJpeg> {
    let q = coeffs.quantize(tables)?;
    encode_quantized(coeffs.width, coeffs.height, &q, tables)
}

/// Predicted file size: exact header length plus the scan rounded up to whole
/// bytes. Only byte stuffing is left out.
pub fn estimated_file_bytes(
    scan_bits: u64,
    width: usize,
    height: usize,
    channels: usize,
    tables: &QuantTableSet,
) -> Result<u64> {
    let header = write_headers(width, height, channels, tables)?.len() as u64;
    Ok(header + scan_bits.div_ceil(8) + 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::entropy::{estimate_size_bits, DcPrediction};

    fn gray(w: usize, h: usize, f: impl Fn(usize, usize) -> u8) -> ImagePlanes {
        let data: Vec<u8> = (0..w * h).map(|i| f(i % w, i / w)).collect();
        ImagePlanes::from_gray8(w, h, &data).unwrap()
    }

    #[test]
    fn markers_and_size() {
        let img = gray(8, 8, |_, _| 90);
        let t = QuantTableSet::standard(75, 1, 1).unwrap();
        let enc = encode_jpeg(&img, &t).unwrap();
        assert_eq!(&enc.bytes[..2], &[0xFF, 0xD8]);
        assert_eq!(&enc.bytes[enc.bytes.len() - 2..], &[0xFF, 0xD9]);
        assert_eq!(enc.size_bytes, enc.bytes.len());
    }

    #[test]
    fn errors() {
        let rgb = ImagePlanes::from_rgb8(1, 1, &[1, 2, 3]).unwrap();
        let t = QuantTableSet::standard(75, 3, 2).unwrap();
        assert!(matches!(encode_jpeg(&rgb, &t), Err(Error::MustConvert(_))));
        let img = gray(8, 8, |_, _| 1);
        let raw = QuantTableSet::new(vec![[2.0; 64]], vec![0]).unwrap();
        assert!(matches!(encode_jpeg(&img, &raw), Err(Error::InvalidTable(_))));
    }

    #[test]
    fn estimator_matches_scan_and_file_size() {
        let img = gray(40, 24, |x, y| ((x * 13 + y * 7) % 256) as u8);
        let t = QuantTableSet::standard(60, 1, 1).unwrap();
        let ci = CoefficientImage::new(&img).unwrap();
        let q = ci.quantize(&t).unwrap();
        let enc = encode_quantized(40, 24, &q, &t).unwrap();
        assert_eq!(estimate_size_bits(&q, DcPrediction::Sequential), enc.scan_bits);
        let est = estimated_file_bytes(enc.scan_bits, 40, 24, 1, &t).unwrap();
        let stuffed = enc.size_bytes as u64 - est;
        assert!(stuffed < enc.size_bytes as u64 / 20);
    }

    #[test]
    fn coarser_tables_never_grow_file() {
        let img = gray(64, 64, |x, y| (((x as f64 * 0.3).sin() * 60.0 + (y * x) as f64 % 97.0) as i32 + 100) as u8);
        let base = QuantTableSet::standard(80, 1, 1).unwrap();
        let doubled: Vec<[u16; 64]> = base
            .quantized_export()
            .unwrap()
            .iter()
            .map(|t| std::array::from_fn(|k| (t[k] * 2).min(255)))
            .collect();
        let doubled = QuantTableSet::from_integer(doubled, vec![0]).unwrap();
        let a = encode_jpeg(&img, &base).unwrap();
        let b = encode_jpeg(&img, &doubled).unwrap();
        assert!(b.size_bytes <= a.size_bytes);
    }
}
