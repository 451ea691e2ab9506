//! Baseline run-length tokenization and Huffman coding with the Annex K
//! default tables.

/// Code-length counts (`bits`) and symbol values for one Huffman table, as
/// carried in a DHT segment.
#[derive(Debug, Clone, Copy)]
pub struct HuffmanSpec {
    pub bits: [u8; 16],
    pub values: &'static [u8],
}

pub const DC_LUMA: HuffmanSpec = HuffmanSpec {
    bits: [0, 1, 5, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0],
    values: &[0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11],
};

pub const DC_CHROMA: HuffmanSpec = HuffmanSpec {
    bits: [0, 3, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0],
    values: &[0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11],
};

pub const AC_LUMA: HuffmanSpec = HuffmanSpec {
    bits: [0, 2, 1, 3, 3, 2, 4, 3, 5, 5, 4, 4, 0, 0, 1, 0x7d],
    values: &[
        0x01, 0x02, 0x03, 0x00, 0x04, 0x11, 0x05, 0x12, 0x21, 0x31, 0x41, 0x06, 0x13, 0x51, 0x61,
        0x07, 0x22, 0x71, 0x14, 0x32, 0x81, 0x91, 0xA1, 0x08, 0x23, 0x42, 0xB1, 0xC1, 0x15, 0x52,
        0xD1, 0xF0, 0x24, 0x33, 0x62, 0x72, 0x82, 0x09, 0x0A, 0x16, 0x17, 0x18, 0x19, 0x1A, 0x25,
        0x26, 0x27, 0x28, 0x29, 0x2A, 0x34, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3A, 0x43, 0x44, 0x45,
        0x46, 0x47, 0x48, 0x49, 0x4A, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59, 0x5A, 0x63, 0x64,
        0x65, 0x66, 0x67, 0x68, 0x69, 0x6A, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79, 0x7A, 0x83,
        0x84, 0x85, 0x86, 0x87, 0x88, 0x89, 0x8A, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99,
        0x9A, 0xA2, 0xA3, 0xA4, 0xA5, 0xA6, 0xA7, 0xA8, 0xA9, 0xAA, 0xB2, 0xB3, 0xB4, 0xB5, 0xB6,
        0xB7, 0xB8, 0xB9, 0xBA, 0xC2, 0xC3, 0xC4, 0xC5, 0xC6, 0xC7, 0xC8, 0xC9, 0xCA, 0xD2, 0xD3,
        0xD4, 0xD5, 0xD6, 0xD7, 0xD8, 0xD9, 0xDA, 0xE1, 0xE2, 0xE3, 0xE4, 0xE5, 0xE6, 0xE7, 0xE8,
        0xE9, 0xEA, 0xF1, 0xF2, 0xF3, 0xF4, 0xF5, 0xF6, 0xF7, 0xF8, 0xF9, 0xFA,
    ],
};

pub const AC_CHROMA: HuffmanSpec = HuffmanSpec {
    bits: [0, 2, 1, 2, 4, 4, 3, 4, 7, 5, 4, 4, 0, 1, 2, 0x77],
    values: &[
        0x00, 0x01, 0x02, 0x03, 0x11, 0x04, 0x05, 0x21, 0x31, 0x06, 0x12, 0x41, 0x51, 0x07, 0x61,
        0x71, 0x13, 0x22, 0x32, 0x81, 0x08, 0x14, 0x42, 0x91, 0xA1, 0xB1, 0xC1, 0x09, 0x23, 0x33,
        0x52, 0xF0, 0x15, 0x62, 0x72, 0xD1, 0x0A, 0x16, 0x24, 0x34, 0xE1, 0x25, 0xF1, 0x17, 0x18,
        0x19, 0x1A, 0x26, 0x27, 0x28, 0x29, 0x2A, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3A, 0x43, 0x44,
        0x45, 0x46, 0x47, 0x48, 0x49, 0x4A, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59, 0x5A, 0x63,
        0x64, 0x65, 0x66, 0x67, 0x68, 0x69, 0x6A, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79, 0x7A,
        0x82, 0x83, 0x84, 0x85, 0x86, 0x87, 0x88, 0x89, 0x8A, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97,
        0x98, 0x99, 0x9A, 0xA2, 0xA3, 0xA4, 0xA5, 0xA6, 0xA7, 0xA8, 0xA9, 0xAA, 0xB2, 0xB3, 0xB4,
        0xB5, 0xB6, 0xB7, 0xB8, 0xB9, 0xBA, 0xC2, 0xC3, 0xC4, 0xC5, 0xC6, 0xC7, 0xC8, 0xC9, 0xCA,
        0xD2, 0xD3, 0xD4, 0xD5, 0xD6, 0xD7, 0xD8, 0xD9, 0xDA, 0xE2, 0xE3, 0xE4, 0xE5, 0xE6, 0xE7,
        0xE8, 0xE9, 0xEA, 0xF2, 0xF3, 0xF4, 0xF5, 0xF6, 0xF7, 0xF8, 0xF9, 0xFA,
    ],
};

/// Canonical code assignment (JPEG Annex C) for encoding.
#[derive(Debug, Clone)]
pub struct HuffmanCodes {
    code: [u16; 256],
    len: [u8; 256],
}

impl HuffmanCodes {
    pub fn from_spec(spec: &HuffmanSpec) -> Self {
        let mut code = [0u16; 256];
        let mut len = [0u8; 256];
        let mut next = 0u16;
        let mut k = 0usize;
        for (i, &count) in spec.bits.iter().enumerate() {
            for _ in 0..count {
                let sym = spec.values[k] as usize;
                code[sym] = next;
                len[sym] = (i + 1) as u8;
                next += 1;
                k += 1;
            }
            next <<= 1;
        }
        Self { code, len }
    }

    #[inline]
    pub fn get(&self, symbol: u8) -> (u16, u8) {
        (self.code[symbol as usize], self.len[symbol as usize])
    }

    #[inline]
    pub fn len(&self, symbol: u8) -> u8 {
        self.len[symbol as usize]
    }
}

/// DC and AC code tables for one component class.
#[derive(Debug, Clone)]
pub struct ComponentCodes {
    pub dc: HuffmanCodes,
    pub ac: HuffmanCodes,
}

/// Luma codes for channel 0, chroma codes for the rest.
pub fn standard_codes() -> &'static [ComponentCodes; 2] {
    use std::sync::OnceLock;
    static CODES: OnceLock<[ComponentCodes; 2]> = OnceLock::new();
    CODES.get_or_init(|| {
        [
            ComponentCodes {
                dc: HuffmanCodes::from_spec(&DC_LUMA),
                ac: HuffmanCodes::from_spec(&AC_LUMA),
            },
            ComponentCodes {
                dc: HuffmanCodes::from_spec(&DC_CHROMA),
                ac: HuffmanCodes::from_spec(&AC_CHROMA),
            },
        ]
    })
}

#[inline]
pub fn codes_for_channel(c: usize) -> &'static ComponentCodes {
    &standard_codes()[c.min(1)]
}

/// Magnitude category: number of bits needed for `|v|`.
#[inline]
pub fn size_category(v: i32) -> u8 {
    (32 - v.unsigned_abs().leading_zeros()) as u8
}

/// The `size` low bits appended after a Huffman symbol.
#[inline]
pub fn amplitude_bits(v: i32, size: u8) -> u16 {
    if v >= 0 {
        v as u16
    } else {
        (v + (1 << size) - 1) as u16
    }
}

#[inline]
pub fn decode_amplitude(bits: u16, size: u8) -> i32 {
    if size == 0 {
        0
    } else if bits >> (size - 1) != 0 {
        bits as i32
    } else {
        bits as i32 - (1 << size) + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Token {
    /// DC difference from the previous block of the same component.
    Dc { diff: i32, size: u8 },
    /// `run` zeros followed by a nonzero `value`.
    Ac { run: u8, size: u8, value: i32 },
    /// Sixteen zeros.
    Zrl,
    /// All remaining coefficients are zero.
    Eob,
}

/// Tokenizes one zigzag-ordered block. `prev_dc` is the DC value of the
/// previous block of the same component (0 for the first or for independent
/// coding).
pub fn rle_tokenize(zz: &[i32; 64], prev_dc: i32) -> Vec<Token> {
    let mut tokens = Vec::with_capacity(16);
    visit_tokens(zz, prev_dc, |t| tokens.push(t));
    tokens
}

#[inline]
fn visit_tokens(zz: &[i32; 64], prev_dc: i32, mut emit: impl FnMut(Token)) {
    let diff = zz[0] - prev_dc;
    emit(Token::Dc {
        diff,
        size: size_category(diff),
    });
    let mut run = 0u8;
    for &v in &zz[1..] {
        if v == 0 {
            run += 1;
            continue;
        }
        while run >= 16 {
            emit(Token::Zrl);
            run -= 16;
        }
        emit(Token::Ac {
            run,
            size: size_category(v),
            value: v,
        });
        run = 0;
    }
    if run > 0 {
        emit(Token::Eob);
    }
}

#[inline]
fn token_bits(t: Token, codes: &ComponentCodes) -> u64 {
    match t {
        Token::Dc { size, .. } => (codes.dc.len(size) + size) as u64,
        Token::Ac { run, size, .. } => (codes.ac.len((run << 4) | size) + size) as u64,
        Token::Zrl => codes.ac.len(0xF0) as u64,
        Token::Eob => codes.ac.len(0x00) as u64,
    }
}

/// Entropy-coded bits for one block.
pub fn block_bits(zz: &[i32; 64], prev_dc: i32, channel: usize) -> u64 {
    let codes = codes_for_channel(channel);
    let mut bits = 0;
    visit_tokens(zz, prev_dc, |t| bits += token_bits(t, codes));
    bits
}

/// How DC values are predicted when sizing a set of blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DcPrediction {
    /// Each block's DC is coded against the previous block of the same
    /// channel, as in a real scan. Use for full images in MCU order.
    Sequential,
    /// Each block's DC is coded against zero. Use for sampled blocks, which
    /// have no defined predecessor.
    Independent,
}

/// Quantized, zigzag-ordered blocks. Block `u * channels + c` is channel `c`
/// of unit `u`; for full images units are in raster (MCU) order.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedBlocks {
    pub channels: usize,
    pub blocks: Vec<[i32; 64]>,
}

impl QuantizedBlocks {
    pub fn units(&self) -> usize {
        self.blocks.len() / self.channels.max(1)
    }
}

/// Sum of Huffman code lengths and amplitude bits under the Annex K tables.
/// With [`DcPrediction::Sequential`] on a full image this equals the number
/// of scan bits the encoder writes before byte stuffing and final padding.
pub fn estimate_size_bits(blocks: &QuantizedBlocks, dc: DcPrediction) -> u64 {
    let mut prev = vec![0i32; blocks.channels];
    let mut total = 0;
    for (i, zz) in blocks.blocks.iter().enumerate() {
        let c = i % blocks.channels;
        let pred = match dc {
            DcPrediction::Sequential => prev[c],
            DcPrediction::Independent => 0,
        };
        total += block_bits(zz, pred, c);
        prev[c] = zz[0];
    }
    total
}

/// Bit sink with JPEG byte stuffing. `bits_written` counts payload bits
/// before stuffing and padding.
#[derive(Debug, Default)]
pub struct BitWriter {
    out: Vec<u8>,
    acc: u64,
    nbits: u32,
    bits_written: u64,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn put(&mut self, value: u16, len: u8) {
        if len == 0 {
            return;
        }
        let mask = (1u64 << len) - 1;
        self.acc = (self.acc << len) | (value as u64 & mask);
        self.nbits += len as u32;
        self.bits_written += len as u64;
        while self.nbits >= 8 {
            let byte = (self.acc >> (self.nbits - 8)) as u8;
            self.out.push(byte);
            if byte == 0xFF {
                self.out.push(0x00);
            }
            self.nbits -= 8;
        }
        self.acc &= (1u64 << self.nbits) - 1;
    }

    pub fn bits_written(&self) -> u64 {
        self.bits_written
    }

    /// Pads the final byte with 1-bits and returns the stuffed bytes.
    pub fn finish(mut self) -> (Vec<u8>, u64) {
        let payload = self.bits_written;
        if self.nbits > 0 {
            let pad = 8 - self.nbits as u8;
            self.put((1u16 << pad) - 1, pad);
        }
        (self.out, payload)
    }

    pub fn encode_block(&mut self, zz: &[i32; 64], prev_dc: i32, codes: &ComponentCodes) {
        visit_tokens(zz, prev_dc, |t| match t {
            Token::Dc { diff, size } => {
                let (code, len) = codes.dc.get(size);
                self.put(code, len);
                self.put(amplitude_bits(diff, size), size);
            }
            Token::Ac { run, size, value } => {
                let (code, len) = codes.ac.get((run << 4) | size);
                self.put(code, len);
                self.put(amplitude_bits(value, size), size);
            }
            Token::Zrl => {
                let (code, len) = codes.ac.get(0xF0);
                self.put(code, len);
            }
            Token::Eob => {
                let (code, len) = codes.ac.get(0x00);
                self.put(code, len);
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn categories() {
        assert_eq!(size_category(0), 0);
        assert_eq!(size_category(1), 1);
        assert_eq!(size_category(-1), 1);
        assert_eq!(size_category(5), 3);
        assert_eq!(size_category(-1023), 10);
        assert_eq!(size_category(2047), 11);
        for v in -2047..=2047 {
            let s = size_category(v);
            assert_eq!(decode_amplitude(amplitude_bits(v, s), s), v);
        }
    }

    #[test]
    fn zero_ac_is_single_eob() {
        let tokens = rle_tokenize(&[0; 64], 0);
        assert_eq!(tokens, vec![Token::Dc { diff: 0, size: 0 }, Token::Eob]);
    }

    #[test]
    fn dc_only_block() {
        let mut zz = [0; 64];
        zz[0] = 5;
        let tokens = rle_tokenize(&zz, 0);
        assert_eq!(tokens, vec![Token::Dc { diff: 5, size: 3 }, Token::Eob]);
        // luma DC category 3 has a 3-bit code "100"; EOB is the 4-bit "1010"
        assert_eq!(block_bits(&zz, 0, 0), 3 + 3 + 4);
        assert_eq!(rle_tokenize(&zz, 7)[0], Token::Dc { diff: -2, size: 2 });
    }

    #[test]
    fn long_zero_run_uses_zrl() {
        let mut zz = [0; 64];
        zz[18] = 3; // 17 zeros at scan positions 1..=17
        let tokens = rle_tokenize(&zz, 0);
        assert_eq!(
            tokens[1..],
            [
                Token::Zrl,
                Token::Ac {
                    run: 1,
                    size: 2,
                    value: 3
                },
                Token::Eob
            ]
        );
    }

    #[test]
    fn no_eob_when_last_coefficient_nonzero() {
        let mut zz = [0; 64];
        zz[63] = -1;
        let tokens = rle_tokenize(&zz, 0);
        assert_eq!(tokens.len(), 1 + 3 + 1); // DC, ZRL x3, (14, -1)
        assert_eq!(*tokens.last().unwrap(), Token::Ac { run: 14, size: 1, value: -1 });
    }

    #[test]
    fn canonical_codes_for_luma_dc() {
        let codes = HuffmanCodes::from_spec(&DC_LUMA);
        assert_eq!(codes.get(0), (0b00, 2));
        assert_eq!(codes.get(1), (0b010, 3));
        assert_eq!(codes.get(5), (0b110, 3));
        assert_eq!(codes.get(6), (0b1110, 4));
        assert_eq!(codes.get(11), (0b1_1111_1110, 9));
        let ac = HuffmanCodes::from_spec(&AC_LUMA);
        assert_eq!(ac.get(0x00), (0b1010, 4));
        assert_eq!(ac.get(0xF0), (0b111_1111_1001, 11));
    }

    #[test]
    fn writer_counts_and_stuffs() {
        let mut w = BitWriter::new();
        w.put(0xFF, 8);
        w.put(0b1, 1);
        assert_eq!(w.bits_written(), 9);
        let (bytes, payload) = w.finish();
        assert_eq!(payload, 9);
        assert_eq!(bytes, vec![0xFF, 0x00, 0xFF, 0x00]);
    }

    #[test]
    fn estimate_matches_writer_on_random_blocks() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let blocks: Vec<[i32; 64]> = (0..60)
            .map(|_| {
                let mut b = [0i32; 64];
                for (k, v) in b.iter_mut().enumerate() {
                    if rng.random_bool(0.8_f64.powi(k as i32 / 4 + 1)) {
                        *v = rng.random_range(-200..=200);
                    }
                }
                b
            })
            .collect();
        let set = QuantizedBlocks {
            channels: 3,
            blocks: blocks.clone(),
        };
        let mut w = BitWriter::new();
        let mut prev = [0i32; 3];
        for (i, b) in blocks.iter().enumerate() {
            let c = i % 3;
            w.encode_block(b, prev[c], codes_for_channel(c));
            prev[c] = b[0];
        }
        let (_, payload) = w.finish();
        assert_eq!(estimate_size_bits(&set, DcPrediction::Sequential), payload);
    }
}
