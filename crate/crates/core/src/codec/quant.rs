//! Quantization, the Annex K example tables, and the table set that the
//! optimizer produces.

use serde::{Deserialize, Serialize};

use super::zigzag::{inverse_zigzag, zigzag};
use crate::error::{Error, Result};

/// Annex K luminance table, natural order.
pub const ANNEX_K_LUMA: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Annex K chrominance table, natural order.
pub const ANNEX_K_CHROMA: [u16; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99, //
    18, 21, 26, 66, 99, 99, 99, 99, //
    24, 26, 56, 99, 99, 99, 99, 99, //
    47, 66, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99,
];

/// libjpeg quality scaling: `5000/q` below 50, `200 - 2q` otherwise, applied
/// as a percentage with rounding and clamped to `[1, 255]`.
pub fn scale_table(base: &[u16; 64], quality: u8) -> [u16; 64] {
    let q = quality.clamp(1, 100) as u32;
    let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
    let mut out = [0u16; 64];
    for (o, &b) in out.iter_mut().zip(base) {
        *o = ((b as u32 * scale + 50) / 100).clamp(1, 255) as u16;
    }
    out
}

/// Round half away from zero.
#[inline]
pub fn round_half_away(x: f64) -> f64 {
    x.round()
}

pub fn quantize(coeffs: &[f64; 64], table: &[f64; 64]) -> Result<[i32; 64]> {
    let mut out = [0i32; 64];
    for k in 0..64 {
        if !(table[k] > 0.0) {
            return Err(Error::InvalidTable(format!(
                "entry {k} is {} (must be positive)",
                table[k]
            )));
        }
        out[k] = round_half_away(coeffs[k] / table[k]) as i32;
    }
    Ok(out)
}

/// Unchecked integer-table variant used on the hot encode path.
#[inline]
pub(crate) fn quantize_int(coeffs: &[f64; 64], table: &[u16; 64]) -> [i32; 64] {
    let mut out = [0i32; 64];
    for k in 0..64 {
        out[k] = round_half_away(coeffs[k] / table[k] as f64) as i32;
    }
    out
}

/// Default channel → table mapping for `channels` channels and `count` tables.
pub fn default_assignment(channels: usize, count: usize) -> Vec<usize> {
    (0..channels).map(|c| c.min(count.saturating_sub(1))).collect()
}

/// `Q` quantization tables (natural order) plus the channel assignment.
///
/// Continuous entries are kept during training; `quantized_export` holds the
/// integer DQT values once [`QuantTableSet::export`] has run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TableSetRepr", into = "TableSetRepr")]
pub struct QuantTableSet {
    tables: Vec<[f64; 64]>,
    assignment: Vec<usize>,
    quantized_export: Option<Vec<[u16; 64]>>,
}

impl QuantTableSet {
    /// Continuous tables; entries below 1 are clamped up to 1.
    pub fn new(tables: Vec<[f64; 64]>, assignment: Vec<usize>) -> Result<Self> {
        if tables.is_empty() || tables.len() > 4 {
            return Err(Error::InvalidTable(format!(
                "table count must be 1..=4, got {}",
                tables.len()
            )));
        }
        if assignment.is_empty() {
            return Err(Error::InvalidTable("empty channel assignment".into()));
        }
        if let Some(&bad) = assignment.iter().find(|&&a| a >= tables.len()) {
            return Err(Error::InvalidTable(format!(
                "assignment references table {bad} but only {} exist",
                tables.len()
            )));
        }
        let mut tables = tables;
        for t in &mut tables {
            for v in t.iter_mut() {
                if !v.is_finite() {
                    return Err(Error::InvalidTable(format!("non-finite entry {v}")));
                }
                *v = v.max(1.0);
            }
        }
        Ok(Self {
            tables,
            assignment,
            quantized_export: None,
        })
    }

    /// Integer tables, already exported.
    pub fn from_integer(tables: Vec<[u16; 64]>, assignment: Vec<usize>) -> Result<Self> {
        for t in &tables {
            if let Some(bad) = t.iter().find(|&&v| !(1..=255).contains(&v)) {
                return Err(Error::InvalidTable(format!("entry {bad} outside 1..=255")));
            }
        }
        let cont = tables
            .iter()
            .map(|t| {
                let mut f = [0.0; 64];
                for k in 0..64 {
                    f[k] = t[k] as f64;
                }
                f
            })
            .collect();
        Ok(Self::new(cont, assignment)?.export())
    }

    /// Annex K tables scaled to `quality`. Table 0 is luminance; further
    /// tables use the chrominance base.
    pub fn standard(quality: u8, channels: usize, count: usize) -> Result<Self> {
        let tables = (0..count.max(1))
            .map(|i| {
                let base = if i == 0 { &ANNEX_K_LUMA } else { &ANNEX_K_CHROMA };
                scale_table(base, quality)
            })
            .collect();
        Self::from_integer(tables, default_assignment(channels, count.max(1)))
    }

    /// Rounds and clamps every entry to `[1, 255]` for DQT emission.
    pub fn export(mut self) -> Self {
        let q = self
            .tables
            .iter()
            .map(|t| {
                let mut out = [0u16; 64];
                for k in 0..64 {
                    out[k] = round_half_away(t[k].clamp(1.0, 255.0)) as u16;
                }
                out
            })
            .collect();
        self.quantized_export = Some(q);
        self
    }

    pub fn tables(&self) -> &[[f64; 64]] {
        &self.tables
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn quantized_export(&self) -> Option<&[[u16; 64]]> {
        self.quantized_export.as_deref()
    }

    pub fn table_count(&self) -> usize {
        self.tables.len()
    }

    /// Integer table used for channel `c`.
    pub fn exported_for_channel(&self, c: usize) -> Result<&[u16; 64]> {
        let q = self
            .quantized_export
            .as_ref()
            .ok_or_else(|| Error::InvalidTable("tables have not been exported".into()))?;
        let idx = *self
            .assignment
            .get(c)
            .ok_or_else(|| Error::InvalidTable(format!("no table assigned to channel {c}")))?;
        Ok(&q[idx])
    }

    pub fn to_json(&self) -> Result<String> {
        let q = self
            .quantized_export
            .as_ref()
            .ok_or_else(|| Error::InvalidTable("tables have not been exported".into()))?;
        let doc = TableJson {
            tables: q.iter().map(|t| zigzag(t).to_vec()).collect(),
            assignment: self.assignment.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: TableJson = serde_json::from_str(text)?;
        let tables = doc
            .tables
            .iter()
            .map(|t| inverse_zigzag(t))
            .collect::<Result<Vec<_>>>()?;
        Self::from_integer(tables, doc.assignment)
    }
}

/// Serde form of [`QuantTableSet`] (natural order).
#[derive(Serialize, Deserialize)]
struct TableSetRepr {
    tables: Vec<Vec<f64>>,
    assignment: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    quantized_export: Option<Vec<Vec<u16>>>,
}

impl From<QuantTableSet> for TableSetRepr {
    fn from(t: QuantTableSet) -> Self {
        Self {
            tables: t.tables.iter().map(|t| t.to_vec()).collect(),
            assignment: t.assignment,
            quantized_export: t
                .quantized_export
                .map(|q| q.iter().map(|t| t.to_vec()).collect()),
        }
    }
}

impl TryFrom<TableSetRepr> for QuantTableSet {
    type Error = Error;

    fn try_from(r: TableSetRepr) -> Result<Self> {
        let tables = r
            .tables
            .iter()
            .map(|t| {
                <[f64; 64]>::try_from(t.as_slice())
                    .map_err(|_| Error::InvalidTable(format!("table has {} entries", t.len())))
            })
            .collect::<Result<Vec<_>>>()?;
        let set = QuantTableSet::new(tables, r.assignment)?;
        match r.quantized_export {
            None => Ok(set),
            Some(_) => {
                let exported = set.export();
                let want: Option<Vec<Vec<u16>>> = exported
                    .quantized_export
                    .as_ref()
                    .map(|q| q.iter().map(|t| t.to_vec()).collect());
                if want != r.quantized_export {
                    return Err(Error::InvalidTable(
                        "quantized_export does not match the continuous tables".into(),
                    ));
                }
                Ok(exported)
            }
        }
    }
}

/// Exchange format: integer tables in zigzag order plus the assignment.
#[derive(Debug, Serialize, Deserialize)]
struct TableJson {
    tables: Vec<Vec<u16>>,
    assignment: Vec<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantize_examples() {
        let ones = [1.0; 64];
        assert_eq!(quantize(&[0.0; 64], &ones).unwrap(), [0; 64]);
        let mut c = [0.0; 64];
        c[0] = 100.0;
        c[1] = -25.0;
        c[2] = 25.0;
        c[3] = -24.9;
        let q = quantize(&c, &[10.0; 64]).unwrap();
        assert_eq!(&q[..4], &[10, -3, 3, -2]);
    }

    #[test]
    fn all_ones_table_is_plain_rounding() {
        let c: Vec<f64> = (0..64).map(|i| i as f64 * 1.37 - 40.5).collect();
        let c: [f64; 64] = c.try_into().unwrap();
        let q = quantize(&c, &[1.0; 64]).unwrap();
        for k in 0..64 {
            assert_eq!(q[k], c[k].round() as i32);
        }
    }

    #[test]
    fn nonpositive_entry_rejected() {
        let mut t = [1.0; 64];
        t[5] = 0.0;
        assert!(matches!(quantize(&[0.0; 64], &t), Err(Error::InvalidTable(_))));
    }

    #[test]
    fn quality_scaling_matches_libjpeg() {
        assert_eq!(scale_table(&ANNEX_K_LUMA, 50), ANNEX_K_LUMA);
        let q75 = scale_table(&ANNEX_K_LUMA, 75);
        assert_eq!(q75[0], 8);
        assert_eq!(q75[2], 5);
        let q100 = scale_table(&ANNEX_K_LUMA, 100);
        assert!(q100.iter().all(|&v| v == 1));
        let q1 = scale_table(&ANNEX_K_LUMA, 1);
        assert!(q1.iter().all(|&v| v == 255));
    }

    #[test]
    fn export_rounds_and_clamps() {
        let mut t = [16.5; 64];
        t[0] = 1.2;
        t[1] = 300.0;
        t[2] = 0.3;
        let set = QuantTableSet::new(vec![t], vec![0]).unwrap().export();
        let q = set.quantized_export().unwrap()[0];
        assert_eq!(q[0], 1);
        assert_eq!(q[1], 255);
        assert_eq!(q[2], 1);
        assert_eq!(q[3], 17);
        assert_eq!(set.tables()[0][2], 1.0);
        assert_eq!(set.tables()[0][1], 300.0);
    }

    #[test]
    fn bad_assignment_rejected() {
        assert!(QuantTableSet::new(vec![[1.0; 64]], vec![0, 1]).is_err());
        assert!(QuantTableSet::new(vec![], vec![0]).is_err());
    }

    #[test]
    fn json_roundtrip_uses_zigzag_order() {
        let set = QuantTableSet::standard(75, 3, 2).unwrap();
        let text = set.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        // second zigzag entry is natural index 1
        assert_eq!(v["tables"][0][1], 6); // (11 * 50 + 50) / 100
        assert_eq!(v["tables"][0][2], 6); // natural index 8: (12 * 50 + 50) / 100
        assert_eq!(v["assignment"], serde_json::json!([0, 1, 1]));
        let back = QuantTableSet::from_json(&text).unwrap();
        assert_eq!(back.quantized_export(), set.quantized_export());
        assert!(QuantTableSet::from_json(r#"{"tables":[[0]],"assignment":[0]}"#).is_err());
    }

    #[test]
    fn channel_lookup_requires_export() {
        let set = QuantTableSet::new(vec![[2.0; 64]], vec![0]).unwrap();
        assert!(set.exported_for_channel(0).is_err());
        assert_eq!(set.export().exported_for_channel(0).unwrap()[0], 2);
    }
}
