//! Baseline JPEG decoding.
//!
//! Files in the subset we emit (baseline Huffman, 8-bit, gray or 4:4:4, no
//! restart intervals) are decoded internally down to the coefficients and
//! reconstructed with [`super::blocks::reconstruct`]. Anything else, such as
//! subsampled or progressive files from other encoders, is handed to the
//! `jpeg-decoder` crate.

use super::blocks::reconstruct;
use super::entropy::{decode_amplitude, QuantizedBlocks};
use super::zigzag::inverse_zigzag;
use crate::error::{Error, Result};
use crate::image::{ColorSpace, ImagePlanes};

#[derive(Debug)]
enum Failure {
    Unsupported(String),
    Corrupt(String),
}

type DResult<T> = std::result::Result<T, Failure>;

fn corrupt<T>(msg: impl Into<String>) -> DResult<T> {
    Err(Failure::Corrupt(msg.into()))
}

#[derive(Debug, Clone)]
struct HuffmanDecoder {
    // per code length 1..=16: smallest code, largest code (-1 if none), index of first value
    mincode: [i32; 17],
    maxcode: [i32; 18],
    valptr: [usize; 17],
    values: Vec<u8>,
}

impl HuffmanDecoder {
    fn new(bits: &[u8; 16], values: Vec<u8>) -> DResult<Self> {
        let total: usize = bits.iter().map(|&b| b as usize).sum();
        if total != values.len() || total > 256 {
            return corrupt("huffman table counts do not match values");
        }
        let mut mincode = [0i32; 17];
        let mut maxcode = [-1i32; 18];
        let mut valptr = [0usize; 17];
        let mut code = 0i32;
        let mut k = 0usize;
        for len in 1..=16 {
            let n = bits[len - 1] as usize;
            if n > 0 {
                valptr[len] = k;
                mincode[len] = code;
                code += n as i32;
                k += n;
                maxcode[len] = code - 1;
            }
            code <<= 1;
        }
        maxcode[17] = i32::MAX;
        Ok(Self {
            mincode,
            maxcode,
            valptr,
            values,
        })
    }

    fn decode(&self, reader: &mut BitReader) -> DResult<u8> {
        let mut code = 0i32;
        for len in 1..=16 {
            code = (code << 1) | reader.bit()? as i32;
            if code <= self.maxcode[len] {
                return Ok(self.values[self.valptr[len] + (code - self.mincode[len]) as usize]);
            }
        }
        corrupt("invalid huffman code")
    }
}

struct BitReader<'a> {
    data: &'a [u8],
    pos: usize,
    acc: u32,
    nbits: u32,
    hit_marker: bool,
}

impl<'a> BitReader<'a> {
    fn new(data: &'a [u8]) -> Self {
        Self {
            data,
            pos: 0,
            acc: 0,
            nbits: 0,
            hit_marker: false,
        }
    }

    fn fill(&mut self) {
        let byte = if self.hit_marker || self.pos >= self.data.len() {
            0
        } else if self.data[self.pos] == 0xFF {
            match self.data.get(self.pos + 1) {
                Some(0x00) => {
                    self.pos += 2;
                    0xFF
                }
                _ => {
                    self.hit_marker = true;
                    0
                }
            }
        } else {
            self.pos += 1;
            self.data[self.pos - 1]
        };
        self.acc = (self.acc << 8) | byte as u32;
        self.nbits += 8;
    }

    fn bit(&mut self) -> DResult<u32> {
        if self.nbits == 0 {
            self.fill();
        }
        self.nbits -= 1;
        Ok((self.acc >> self.nbits) & 1)
    }

    fn bits(&mut self, n: u8) -> DResult<u16> {
        let mut v = 0u16;
        for _ in 0..n {
            v = (v << 1) | self.bit()? as u16;
        }
        Ok(v)
    }

    /// Offset just past the consumed scan bytes.
    fn consumed(&self) -> usize {
        self.pos
    }
}

#[derive(Debug, Clone, Copy)]
struct Component {
    id: u8,
    h: u8,
    v: u8,
    tq: usize,
}

/// Coefficients, tables and geometry recovered from a baseline file.
#[derive(Debug, Clone)]
pub struct DecodedCoefficients {
    pub width: usize,
    pub height: usize,
    pub colorspace: ColorSpace,
    pub quantized: QuantizedBlocks,
    /// Quantization table for each component, natural order.
    pub tables: Vec<[u16; 64]>,
}

impl DecodedCoefficients {
    pub fn reconstruct(&self) -> Result<ImagePlanes> {
        let tables: Vec<&[u16; 64]> = self.tables.iter().collect();
        reconstruct(
            &self.quantized,
            &tables,
            self.width,
            self.height,
            self.width.div_ceil(8),
            self.colorspace,
        )
    }
}

fn read_u16(data: &[u8], at: usize) -> DResult<u16> {
    match data.get(at..at + 2) {
        Some(b) => Ok(u16::from_be_bytes([b[0], b[1]])),
        None => corrupt("unexpected end of data"),
    }
}

fn parse(data: &[u8]) -> DResult<DecodedCoefficients> {
    if data.len() < 4 || data[0] != 0xFF || data[1] != 0xD8 {
        return corrupt("missing SOI marker");
    }
    let mut pos = 2;
    let mut qtables: [Option<[u16; 64]>; 4] = [None; 4];
    let mut dc_tables: [Option<HuffmanDecoder>; 4] = Default::default();
    let mut ac_tables: [Option<HuffmanDecoder>; 4] = Default::default();
    let mut frame: Option<(usize, usize, Vec<Component>)> = None;
    let mut result: Option<QuantizedBlocks> = None;

    loop {
        // skip fill bytes
        while pos < data.len() && data[pos] != 0xFF {
            pos += 1;
        }
        while pos < data.len() && data[pos] == 0xFF {
            pos += 1;
        }
        let Some(&m) = data.get(pos) else {
            return corrupt("missing EOI marker");
        };
        pos += 1;
        match m {
            0xD9 => break,
            0xD0..=0xD7 | 0x01 => continue,
            _ => {}
        }
        let len = read_u16(data, pos)? as usize;
        if len < 2 || pos + len > data.len() {
            return corrupt("segment length out of range");
        }
        let body = &data[pos + 2..pos + len];
        pos += len;
        match m {
            0xDB => {
                let mut i = 0;
                while i < body.len() {
                    let pq = body[i] >> 4;
                    let tq = (body[i] & 15) as usize;
                    if tq > 3 {
                        return corrupt("quantization table id > 3");
                    }
                    i += 1;
                    let mut zz = [0u16; 64];
                    for v in zz.iter_mut() {
                        *v = if pq == 0 {
                            let b = *body.get(i).ok_or(Failure::Corrupt("short DQT".into()))?;
                            i += 1;
                            b as u16
                        } else {
                            let w = read_u16(body, i)?;
                            i += 2;
                            w
                        };
                    }
                    qtables[tq] = Some(inverse_zigzag(&zz).expect("64 entries"));
                }
            }
            0xC4 => {
                let mut i = 0;
                while i < body.len() {
                    let class = body[i] >> 4;
                    let id = (body[i] & 15) as usize;
                    if id > 3 || class > 1 {
                        return corrupt("bad huffman table id");
                    }
                    let Some(bits) = body.get(i + 1..i + 17) else {
                        return corrupt("short DHT");
                    };
                    let bits: [u8; 16] = bits.try_into().unwrap();
                    let n: usize = bits.iter().map(|&b| b as usize).sum();
                    let Some(values) = body.get(i + 17..i + 17 + n) else {
                        return corrupt("short DHT");
                    };
                    let dec = HuffmanDecoder::new(&bits, values.to_vec())?;
                    if class == 0 {
                        dc_tables[id] = Some(dec);
                    } else {
                        ac_tables[id] = Some(dec);
                    }
                    i += 17 + n;
                }
            }
            0xC0 | 0xC1 => {
                if body.len() < 6 || body[0] != 8 {
                    return Err(Failure::Unsupported("only 8-bit precision".into()));
                }
                let height = read_u16(body, 1)? as usize;
                let width = read_u16(body, 3)? as usize;
                let n = body[5] as usize;
                if height == 0 || width == 0 {
                    return Err(Failure::Unsupported("DNL-defined height".into()));
                }
                if body.len() < 6 + 3 * n || !(n == 1 || n == 3) {
                    return Err(Failure::Unsupported(format!("{n} components")));
                }
                let comps: Vec<Component> = (0..n)
                    .map(|c| Component {
                        id: body[6 + 3 * c],
                        h: body[7 + 3 * c] >> 4,
                        v: body[7 + 3 * c] & 15,
                        tq: (body[8 + 3 * c] & 3) as usize,
                    })
                    .collect();
                if n == 3 && comps.iter().any(|c| c.h != 1 || c.v != 1) {
                    return Err(Failure::Unsupported("chroma subsampling".into()));
                }
                if n == 3 && comps.iter().map(|c| c.id).eq(*b"RGB") {
                    return Err(Failure::Unsupported("RGB component ids".into()));
                }
                frame = Some((width, height, comps));
            }
            0xC2 | 0xC3 | 0xC5..=0xC7 | 0xC9..=0xCB | 0xCD..=0xCF => {
                return Err(Failure::Unsupported(format!("SOF marker 0x{m:02X}")));
            }
            0xDD => {
                if read_u16(body, 0)? != 0 {
                    return Err(Failure::Unsupported("restart intervals".into()));
                }
            }
            0xEE => {
                // Adobe: transform flag 0 on 3 components means RGB
                if body.len() >= 12 && &body[..5] == b"Adobe" && body[11] == 0 {
                    return Err(Failure::Unsupported("Adobe RGB transform".into()));
                }
            }
            0xDA => {
                let Some((width, height, comps)) = frame.as_ref() else {
                    return corrupt("SOS before SOF");
                };
                let ns = *body.first().unwrap_or(&0) as usize;
                if ns != comps.len() || body.len() < 1 + 2 * ns + 3 {
                    return Err(Failure::Unsupported("non-interleaved multi-scan".into()));
                }
                let mut order = Vec::with_capacity(ns);
                for s in 0..ns {
                    let id = body[1 + 2 * s];
                    let sel = body[2 + 2 * s];
                    let Some(ci) = comps.iter().position(|c| c.id == id) else {
                        return corrupt("scan references unknown component");
                    };
                    if ci != s {
                        return Err(Failure::Unsupported("reordered scan components".into()));
                    }
                    let (td, ta) = ((sel >> 4) as usize & 3, (sel & 15) as usize & 3);
                    let dc = dc_tables[td].clone().ok_or(Failure::Corrupt("missing DC table".into()))?;
                    let ac = ac_tables[ta].clone().ok_or(Failure::Corrupt("missing AC table".into()))?;
                    order.push((dc, ac));
                }
                let (ss, se) = (body[1 + 2 * ns], body[2 + 2 * ns]);
                if ss != 0 || se != 63 {
                    return Err(Failure::Unsupported("spectral selection".into()));
                }
                let units = width.div_ceil(8) * height.div_ceil(8);
                let mut reader = BitReader::new(&data[pos..]);
                let mut blocks = Vec::with_capacity(units * ns);
                let mut prev = vec![0i32; ns];
                for _ in 0..units {
                    for (c, (dc, ac)) in order.iter().enumerate() {
                        let mut zz = [0i32; 64];
                        let size = dc.decode(&mut reader)?;
                        if size > 11 {
                            return corrupt("DC category > 11");
                        }
                        let diff = decode_amplitude(reader.bits(size)?, size);
                        prev[c] += diff;
                        zz[0] = prev[c];
                        let mut k = 1;
                        while k < 64 {
                            let rs = ac.decode(&mut reader)?;
                            let (run, size) = ((rs >> 4) as usize, rs & 15);
                            if size == 0 {
                                if run == 15 {
                                    k += 16;
                                    continue;
                                }
                                break;
                            }
                            k += run;
                            if k > 63 {
                                return corrupt("AC run past end of block");
                            }
                            zz[k] = decode_amplitude(reader.bits(size)?, size);
                            k += 1;
                        }
                        if k > 64 {
                            return corrupt("ZRL past end of block");
                        }
                        blocks.push(zz);
                    }
                }
                pos += reader.consumed();
                result = Some(QuantizedBlocks {
                    channels: ns,
                    blocks,
                });
            }
            _ => {}
        }
    }

    let (width, height, comps) = frame.ok_or(Failure::Corrupt("no frame header".into()))?;
    let quantized = result.ok_or(Failure::Corrupt("no scan".into()))?;
    let tables = comps
        .iter()
        .map(|c| qtables[c.tq].ok_or(Failure::Corrupt("missing quantization table".into())))
        .collect::<DResult<Vec<_>>>()?;
    Ok(DecodedCoefficients {
        width,
        height,
        colorspace: if comps.len() == 1 {
            ColorSpace::Gray
        } else {
            ColorSpace::YCbCr
        },
        quantized,
        tables,
    })
}

/// Decodes the coefficients of a file in the internally supported subset.
pub fn decode_coefficients(bytes: &[u8]) -> Result<DecodedCoefficients> {
    parse(bytes).map_err(|f| match f {
        Failure::Unsupported(m) => Error::Decode(format!("unsupported by internal decoder: {m}")),
        Failure::Corrupt(m) => Error::Decode(m),
    })
}

/// Internal decode path only: coefficients → dequantize → inverse DCT → clamp.
pub fn decode_baseline(bytes: &[u8]) -> Result<ImagePlanes> {
    decode_coefficients(bytes)?.reconstruct()
}

/// Which decoder produced an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecoderUsed {
    Internal,
    External,
}

/// Decodes any JPEG: internally when possible, otherwise via `jpeg-decoder`.
/// Internal results stay in their coded colorspace (Gray or YCbCr); external
/// results are Gray or RGB.
pub fn decode_jpeg(bytes: &[u8]) -> Result<(ImagePlanes, DecoderUsed)> {
    match parse(bytes) {
        Ok(coeffs) => Ok((coeffs.reconstruct()?, DecoderUsed::Internal)),
        Err(Failure::Corrupt(m)) => Err(Error::Decode(m)),
        Err(Failure::Unsupported(_)) => Ok((decode_external(bytes)?, DecoderUsed::External)),
    }
}

fn decode_external(bytes: &[u8]) -> Result<ImagePlanes> {
    let mut dec = jpeg_decoder::Decoder::new(bytes);
    let pixels = dec.decode().map_err(|e| Error::Decode(e.to_string()))?;
    let info = dec
        .info()
        .ok_or_else(|| Error::Decode("decoder returned no image info".into()))?;
    let (w, h) = (info.width as usize, info.height as usize);
    match info.pixel_format {
        jpeg_decoder::PixelFormat::L8 => ImagePlanes::from_gray8(w, h, &pixels),
        jpeg_decoder::PixelFormat::RGB24 => ImagePlanes::from_rgb8(w, h, &pixels),
        other => Err(Error::Decode(format!("unsupported pixel format {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::encoder::encode_jpeg;
    use crate::codec::quant::QuantTableSet;

    #[test]
    fn constant_gray_reconstructs_exactly() {
        let img = ImagePlanes::from_gray8(8, 8, &[100; 64]).unwrap();
        let t = QuantTableSet::standard(100, 1, 1).unwrap();
        let enc = encode_jpeg(&img, &t).unwrap();
        let back = decode_baseline(&enc.bytes).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn coefficients_roundtrip_through_bitstream() {
        let data: Vec<u8> = (0..21 * 13 * 3).map(|i| ((i * 91) % 256) as u8).collect();
        let img = ImagePlanes::from_rgb8(21, 13, &data).unwrap().to_codec_space();
        let t = QuantTableSet::standard(85, 3, 3).unwrap();
        let ci = crate::codec::blocks::CoefficientImage::new(&img).unwrap();
        let q = ci.quantize(&t).unwrap();
        let enc = encode_jpeg(&img, &t).unwrap();
        let dec = decode_coefficients(&enc.bytes).unwrap();
        assert_eq!(dec.quantized, q);
        assert_eq!((dec.width, dec.height), (21, 13));
        assert_eq!(dec.colorspace, ColorSpace::YCbCr);
        assert_eq!(dec.tables[2], t.quantized_export().unwrap()[2]);
    }

    #[test]
    fn garbage_is_an_error() {
        assert!(decode_jpeg(b"not a jpeg").is_err());
        assert!(decode_baseline(&[0xFF, 0xD8, 0xFF, 0xD9]).is_err());
    }
}
