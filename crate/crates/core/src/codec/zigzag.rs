use crate::error::{Error, Result};

/// `ZIGZAG[i]` is the natural (row-major) index of the i-th coefficient in
/// scan order.
pub const ZIGZAG: [usize; 64] = [
    0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5, 12, 19, 26, 33, 40, 48, 41, 34, 27,
    20, 13, 6, 7, 14, 21, 28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51, 58,
    59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63,
];

/// Inverse permutation: scan position of each natural index.
pub const UNZIGZAG: [usize; 64] = {
    let mut inv = [0usize; 64];
    let mut i = 0;
    while i < 64 {
        inv[ZIGZAG[i]] = i;
        i += 1;
    }
    inv
};

pub fn zigzag<T: Copy + Default>(block: &[T; 64]) -> [T; 64] {
    let mut out = [T::default(); 64];
    for (i, &n) in ZIGZAG.iter().enumerate() {
        out[i] = block[n];
    }
    out
}

pub fn inverse_zigzag<T: Copy + Default>(scan: &[T]) -> Result<[T; 64]> {
    if scan.len() != 64 {
        return Err(Error::InvalidInput(format!(
            "zigzag vector must have 64 entries, got {}",
            scan.len()
        )));
    }
    let mut out = [T::default(); 64];
    for (i, &n) in ZIGZAG.iter().enumerate() {
        out[n] = scan[i];
    }
    Ok(out)
}
