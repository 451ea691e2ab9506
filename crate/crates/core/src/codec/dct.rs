//! Orthonormal 8×8 type-II DCT and its inverse, in `f64`.
//!
//! The scaling is orthonormal (DC basis is `1/8` per sample), so energy is
//! preserved and a constant block of value `v` has DC `8 * v`.

use std::sync::OnceLock;

fn cos_table() -> &'static [[f64; 8]; 8] {
    static TABLE: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [[0.0; 8]; 8];
        for (u, row) in t.iter_mut().enumerate() {
            let scale = if u == 0 { (0.125f64).sqrt() } else { 0.5 };
            for (x, v) in row.iter_mut().enumerate() {
                *v = scale * (((2 * x + 1) * u) as f64 * std::f64::consts::PI / 16.0).cos();
            }
        }
        t
    })
}

/// 1-D basis value `c(u) cos((2x+1)uπ/16)` with orthonormal scaling.
#[inline]
pub fn basis(u: usize, x: usize) -> f64 {
    cos_table()[u][x]
}

/// The 2-D inverse transform as a 64×64 row-major matrix: row `k` (coefficient,
/// natural order) holds the weights it contributes to each of the 64 samples.
pub fn idct_matrix() -> &'static [f64] {
    static M: OnceLock<Vec<f64>> = OnceLock::new();
    M.get_or_init(|| {
        let mut m = vec![0.0; 64 * 64];
        for u in 0..8 {
            for v in 0..8 {
                for y in 0..8 {
                    for x in 0..8 {
                        m[(u * 8 + v) * 64 + y * 8 + x] = basis(u, y) * basis(v, x);
                    }
                }
            }
        }
        m
    })
}

fn transform(input: &[f64; 64], forward: bool) -> [f64; 64] {
    let t = cos_table();
    let mut tmp = [0.0; 64];
    let mut out = [0.0; 64];
    // rows
    for r in 0..8 {
        for k in 0..8 {
            let mut acc = 0.0;
            for n in 0..8 {
                let w = if forward { t[k][n] } else { t[n][k] };
                acc += w * input[r * 8 + n];
            }
            tmp[r * 8 + k] = acc;
        }
    }
    // columns
    for c in 0..8 {
        for k in 0..8 {
            let mut acc = 0.0;
            for n in 0..8 {
                let w = if forward { t[k][n] } else { t[n][k] };
                acc += w * tmp[n * 8 + c];
            }
            out[k * 8 + c] = acc;
        }
    }
    out
}

pub fn forward_dct(block: &[f64; 64], level_shift: bool) -> [f64; 64] {
    if level_shift {
        let mut shifted = *block;
        shifted.iter_mut().for_each(|v| *v -= 128.0);
        transform(&shifted, true)
    } else {
        transform(block, true)
    }
}

pub fn inverse_dct(coeffs: &[f64; 64], level_shift: bool) -> [f64; 64] {
    let mut out = transform(coeffs, false);
    if level_shift {
        out.iter_mut().for_each(|v| *v += 128.0);
    }
    out
}
