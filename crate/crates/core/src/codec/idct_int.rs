//! Fixed-point dequantize + inverse DCT producing 8-bit samples.
//!
//! This is the 12-bit-constant LLM kernel used by stb_image and the pure-Rust
//! decoders derived from it. Reconstructing pixels with the same arithmetic as
//! those decoders makes our decode path sample-exact against them; the `f64`
//! transform in [`super::dct`] remains the one used for training and analysis.

const fn f2f(x: f32) -> i32 {
    (x * 4096.0 + 0.5) as i32
}

#[inline]
fn fsh(x: i32) -> i32 {
    x.wrapping_shl(12)
}

#[inline]
fn clamp_u8(x: i32) -> u8 {
    x.clamp(0, 255) as u8
}

#[inline]
fn kernel(s: [i32; 8], bias: i32) -> ([i32; 4], [i32; 4]) {
    let [s0, s1, s2, s3, s4, s5, s6, s7] = s;
    // even part
    let p1 = s2.wrapping_add(s6).wrapping_mul(f2f(0.5411961));
    let t2 = p1.wrapping_add(s6.wrapping_mul(f2f(-1.847759065)));
    let t3 = p1.wrapping_add(s2.wrapping_mul(f2f(0.765366865)));
    let t0 = fsh(s0.wrapping_add(s4));
    let t1 = fsh(s0.wrapping_sub(s4));
    let x0 = t0.wrapping_add(t3).wrapping_add(bias);
    let x3 = t0.wrapping_sub(t3).wrapping_add(bias);
    let x1 = t1.wrapping_add(t2).wrapping_add(bias);
    let x2 = t1.wrapping_sub(t2).wrapping_add(bias);

    // odd part
    let (mut o0, mut o1, mut o2, mut o3) = (s7, s5, s3, s1);
    let p3 = o0.wrapping_add(o2);
    let p4 = o1.wrapping_add(o3);
    let p1 = o0.wrapping_add(o3);
    let p2 = o1.wrapping_add(o2);
    let p5 = p3.wrapping_add(p4).wrapping_mul(f2f(1.175875602));
    o0 = o0.wrapping_mul(f2f(0.298631336));
    o1 = o1.wrapping_mul(f2f(2.053119869));
    o2 = o2.wrapping_mul(f2f(3.072711026));
    o3 = o3.wrapping_mul(f2f(1.501321110));
    let p1 = p5.wrapping_add(p1.wrapping_mul(f2f(-0.899976223)));
    let p2 = p5.wrapping_add(p2.wrapping_mul(f2f(-2.562915447)));
    let p3 = p3.wrapping_mul(f2f(-1.961570560));
    let p4 = p4.wrapping_mul(f2f(-0.390180644));
    o3 = o3.wrapping_add(p1.wrapping_add(p4));
    o2 = o2.wrapping_add(p2.wrapping_add(p3));
    o1 = o1.wrapping_add(p2.wrapping_add(p4));
    o0 = o0.wrapping_add(p1.wrapping_add(p3));

    ([x0, x1, x2, x3], [o0, o1, o2, o3])
}

/// Dequantizes `coeffs` (natural order) with `table` and returns the 8×8
/// block of level-shifted, clamped samples.
pub fn dequantize_idct(coeffs: &[i32; 64], table: &[u16; 64]) -> [u8; 64] {
    let mut temp = [0i32; 64];
    for i in 0..8 {
        let s: [i32; 8] =
            std::array::from_fn(|r| coeffs[i + 8 * r].wrapping_mul(table[i + 8 * r] as i32));
        let ([x0, x1, x2, x3], [t0, t1, t2, t3]) = kernel(s, 512);
        temp[i] = x0.wrapping_add(t3) >> 10;
        temp[i + 56] = x0.wrapping_sub(t3) >> 10;
        temp[i + 8] = x1.wrapping_add(t2) >> 10;
        temp[i + 48] = x1.wrapping_sub(t2) >> 10;
        temp[i + 16] = x2.wrapping_add(t1) >> 10;
        temp[i + 40] = x2.wrapping_sub(t1) >> 10;
        temp[i + 24] = x3.wrapping_add(t0) >> 10;
        temp[i + 32] = x3.wrapping_sub(t0) >> 10;
    }

    // 1<<17 total scale to remove, rounding, plus the +128 level shift
    const X_SCALE: i32 = 65536 + (128 << 17);
    let mut out = [0u8; 64];
    for r in 0..8 {
        let s: [i32; 8] = std::array::from_fn(|k| temp[r * 8 + k]);
        let ([x0, x1, x2, x3], [t0, t1, t2, t3]) = kernel(s, X_SCALE);
        let row = &mut out[r * 8..r * 8 + 8];
        row[0] = clamp_u8(x0.wrapping_add(t3) >> 17);
        row[7] = clamp_u8(x0.wrapping_sub(t3) >> 17);
        row[1] = clamp_u8(x1.wrapping_add(t2) >> 17);
        row[6] = clamp_u8(x1.wrapping_sub(t2) >> 17);
        row[2] = clamp_u8(x2.wrapping_add(t1) >> 17);
        row[5] = clamp_u8(x2.wrapping_sub(t1) >> 17);
        row[3] = clamp_u8(x3.wrapping_add(t0) >> 17);
        row[4] = clamp_u8(x3.wrapping_sub(t0) >> 17);
    }
    out
}
