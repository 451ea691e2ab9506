//! The network that maps sampled coefficient blocks to quantization tables.
//!
//! Shape pipeline for `S` samples, `C` channels and `Q` tables:
//! `[S·C, 64]` zigzag input → linear embed `[S, C, E]` → strided 1-D conv
//! `[S, C, 64]` → reduction over samples `[1, C·64]` → inverse zigzag
//! `[1, C, 8, 8]` → two 3×3 convs → `[1, Q, 8, 8]` → softplus, clamp at 1.

use crate::autodiff::{Graph, Tensor, Var};
use crate::codec::quant::{default_assignment, scale_table, ANNEX_K_CHROMA, ANNEX_K_LUMA};
use crate::codec::zigzag::{zigzag, UNZIGZAG};
use crate::codec::QuantTableSet;
use crate::error::{shape_err, Error, Result};
use crate::sampler::BlockSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

/// Input coefficients are divided by this before the embedding.
pub const INPUT_SCALE: f64 = 1024.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Collapse {
    /// Plain mean over samples; the output ignores sample order.
    Mean,
    /// Learned per-sample weights, starting at the mean.
    WeightedSum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNetConfig {
    pub channels: usize,
    pub samples: usize,
    pub tables: usize,
    pub embed_dim: usize,
    pub hidden_channels: usize,
    pub kernel: usize,
    pub collapse: Collapse,
    /// Annex K quality the output starts near.
    pub warm_start_quality: u8,
    pub seed: u64,
}

impl Default for QNetConfig {
    fn default() -> Self {
        Self {
            channels: 3,
            samples: 256,
            tables: 2,
            embed_dim: 256,
            hidden_channels: 16,
            kernel: 3,
            collapse: Collapse::Mean,
            warm_start_quality: 75,
            seed: 0,
        }
    }
}

impl QNetConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if !matches!(self.channels, 1 | 3) {
            return bad(format!("{} channels; expected 1 or 3", self.channels));
        }
        if self.samples == 0 {
            return bad("at least one sample is required".into());
        }
        if !(1..=3).contains(&self.tables) {
            return bad(format!("{} tables; expected 1 to 3", self.tables));
        }
        if self.embed_dim < 64 || self.embed_dim % 64 != 0 {
            return bad(format!("embed dim {} must be a positive multiple of 64", self.embed_dim));
        }
        if self.hidden_channels == 0 {
            return bad("hidden channel count must be positive".into());
        }
        if self.kernel % 2 == 0 || self.kernel > 7 {
            return bad(format!("kernel {} must be odd and at most 7", self.kernel));
        }
        if !(1..=100).contains(&self.warm_start_quality) {
            return bad(format!("warm start quality {} outside 1..=100", self.warm_start_quality));
        }
        Ok(())
    }

    /// Channel → table mapping used for the exported tables.
    pub fn assignment(&self) -> Vec<usize> {
        default_assignment(self.channels, self.tables)
    }

    fn shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        let (c, e, h, q, k) = (self.channels, self.embed_dim, self.hidden_channels, self.tables, self.kernel);
        let mut out = vec![
            ("embed_weight", vec![64, e]),
            ("embed_bias", vec![e]),
            ("collapse_weight", vec![c, c, e / 64]),
            ("collapse_bias", vec![c, 1]),
            ("conv1_weight", vec![h, c, k, k]),
            ("conv1_bias", vec![h, 1, 1]),
            ("conv2_weight", vec![q, h, k, k]),
            ("table_bias", vec![q, 8, 8]),
        ];
        if self.collapse == Collapse::WeightedSum {
            out.push(("sample_weight", vec![1, self.samples]));
        }
        out
    }
}

/// Trainable tensors in a fixed order (see [`QNetParams::names`]).
#[derive(Debug, Clone, PartialEq)]
pub struct QNetParams {
    pub tensors: Vec<Tensor>,
    names: Vec<&'static str>,
}

const EMBED_W: usize = 0;
const EMBED_B: usize = 1;
const COLLAPSE_W: usize = 2;
const COLLAPSE_B: usize = 3;
const CONV1_W: usize = 4;
const CONV1_B: usize = 5;
const CONV2_W: usize = 6;
const TABLE_B: usize = 7;
const SAMPLE_W: usize = 8;

fn inverse_softplus(y: f64) -> f64 {
    // ln(e^y − 1), written to stay accurate for large y
    y + (-(-y).exp_m1()).ln()
}

impl QNetParams {
    pub fn names(&self) -> &[&'static str] {
        &self.names
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    fn check(&self, cfg: &QNetConfig) -> Result<()> {
        let shapes = cfg.shapes();
        if shapes.len() != self.tensors.len() {
            return Err(Error::InvalidParams(format!(
                "{} tensors for a model with {}",
                self.tensors.len(),
                shapes.len()
            )));
        }
        for ((name, shape), t) in shapes.iter().zip(&self.tensors) {
            if t.shape() != &shape[..] {
                return Err(shape_err(t.shape(), shape, format!("parameter {name}")));
            }
        }
        Ok(())
    }
}

/// He-uniform weights from `cfg.seed`, zero hidden biases, final layer
/// scaled down, and a table bias that puts the output near the warm-start
/// Annex K tables.
pub fn init_params(cfg: &QNetConfig) -> Result<QNetParams> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut uniform = |shape: &[usize], fan_in: usize, gain: f64| -> Tensor {
        let bound = gain * (6.0 / fan_in as f64).sqrt();
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
        Tensor::param(shape.to_vec(), data).expect("sizes agree")
    };
    let shapes = cfg.shapes();
    let (c, k, h) = (cfg.channels, cfg.kernel, cfg.hidden_channels);
    let mut tensors = vec![
        uniform(&shapes[EMBED_W].1, 64, 1.0),
        Tensor::param(shapes[EMBED_B].1.clone(), vec![0.0; cfg.embed_dim])?,
        uniform(&shapes[COLLAPSE_W].1, c * cfg.embed_dim / 64, 1.0),
        Tensor::param(shapes[COLLAPSE_B].1.clone(), vec![0.0; c])?,
        uniform(&shapes[CONV1_W].1, c * k * k, 1.0),
        Tensor::param(shapes[CONV1_B].1.clone(), vec![0.0; h])?,
        uniform(&shapes[CONV2_W].1, h * k * k, 0.1),
    ];
    let bias: Vec<f64> = (0..cfg.tables)
        .flat_map(|i| {
            let base = if i == 0 { &ANNEX_K_LUMA } else { &ANNEX_K_CHROMA };
            scale_table(base, cfg.warm_start_quality).map(|v| inverse_softplus(v as f64))
        })
        .collect();
    tensors.push(Tensor::param(vec![cfg.tables, 8, 8], bias)?);
    if cfg.collapse == Collapse::WeightedSum {
        tensors.push(Tensor::param(vec![1, cfg.samples], vec![1.0 / cfg.samples as f64; cfg.samples])?);
    }
    Ok(QNetParams {
        tensors,
        names: shapes.iter().map(|(n, _)| *n).collect(),
    })
}

/// Zigzag-ordered, scaled coefficients as a `[S·C, 64]` tensor.
pub fn model_input(blocks: &BlockSet) -> Tensor {
    let data = blocks
        .coeffs
        .iter()
        .flat_map(|b| zigzag(b).map(|v| v / INPUT_SCALE))
        .collect();
    Tensor::new(vec![blocks.coeffs.len(), 64], data).expect("sizes agree")
}

/// Nodes recorded by one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// Parameter leaves, in [`QNetParams`] order.
    pub params: Vec<Var>,
    /// `[1, Q, 8, 8]`, natural order, every entry ≥ 1.
    pub tables: Var,
}

pub fn forward(g: &mut Graph, cfg: &QNetConfig, params: &QNetParams, blocks: &BlockSet) -> Result<Forward> {
    params.check(cfg)?;
    let (s, c, e) = (cfg.samples, cfg.channels, cfg.embed_dim);
    if blocks.len() != s || blocks.channels != c {
        return Err(shape_err(
            &[blocks.len(), blocks.channels, 64],
            &[s, c, 64],
            "block set does not match the model",
        ));
    }
    let p: Vec<Var> = params.tensors.iter().map(|t| g.leaf(t)).collect();
    let x = g.leaf(&model_input(blocks));

    let h = g.matmul(x, p[EMBED_W])?;
    let h = g.add(h, p[EMBED_B])?;
    let h = g.softplus(h);
    let h = g.reshape(h, [s, c, e])?;

    let h = g.conv1d(h, p[COLLAPSE_W], e / 64, 0)?;
    let h = g.add(h, p[COLLAPSE_B])?;
    let h = g.softplus(h);
    let h = g.reshape(h, [s, c * 64])?;
    let weights = match cfg.collapse {
        Collapse::Mean => g.constant([1, s], vec![1.0 / s as f64; s])?,
        Collapse::WeightedSum => p[SAMPLE_W],
    };
    let h = g.matmul(weights, h)?;

    let unzig: Vec<usize> = (0..c).flat_map(|ch| UNZIGZAG.map(|z| ch * 64 + z)).collect();
    let h = g.gather(h, &unzig, [1, c, 8, 8])?;

    let pad = cfg.kernel / 2;
    let h = g.conv2d(h, p[CONV1_W], 1, pad)?;
    let h = g.add(h, p[CONV1_B])?;
    let h = g.softplus(h);
    let h = g.conv2d(h, p[CONV2_W], 1, pad)?;
    let h = g.add(h, p[TABLE_B])?;
    let h = g.softplus(h);
    let tables = g.clamp_min(h, 1.0);
    Ok(Forward { params: p, tables })
}

/// Continuous table set from the `[1, Q, 8, 8]` output values.
pub fn tables_from_output(cfg: &QNetConfig, values: &[f64]) -> Result<QuantTableSet> {
    if values.len() != cfg.tables * 64 {
        return Err(shape_err(&[values.len()], &[cfg.tables * 64], "table output"));
    }
    let tables = values
        .chunks_exact(64)
        .map(|c| c.try_into().expect("chunk of 64"))
        .collect();
    QuantTableSet::new(tables, cfg.assignment())
}

/// Value-only forward pass.
pub fn predict(cfg: &QNetConfig, params: &QNetParams, blocks: &BlockSet) -> Result<QuantTableSet> {
    let mut g = Graph::new();
    let f = forward(&mut g, cfg, params, blocks)?;
    tables_from_output(cfg, g.value(f.tables))
}

/// Integer tables for emission, continuous values kept alongside.
pub fn export_tables(tables: QuantTableSet) -> QuantTableSet {
    tables.export()
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    config: QNetConfig,
    seed: u64,
    data_file: String,
    tensors: Vec<TensorEntry>,
}

pub const CHECKPOINT_MANIFEST: &str = "params.json";
pub const CHECKPOINT_DATA: &str = "params.bin";

/// Writes `params.json` (config and layout) and `params.bin` (little-endian
/// `f64` values, tensors back to back) into `dir`.
pub fn save_checkpoint(dir: &Path, cfg: &QNetConfig, params: &QNetParams) -> Result<()> {
    params.check(cfg)?;
    fs::create_dir_all(dir)?;
    let mut blob = Vec::new();
    let mut entries = Vec::new();
    let mut offset = 0;
    for (name, t) in params.names.iter().zip(&params.tensors) {
        entries.push(TensorEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            offset,
            len: t.numel(),
        });
        offset += t.numel();
        for v in t.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = Manifest {
        config: cfg.clone(),
        seed: cfg.seed,
        data_file: CHECKPOINT_DATA.into(),
        tensors: entries,
    };
    fs::write(dir.join(CHECKPOINT_MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    fs::write(dir.join(CHECKPOINT_DATA), blob)?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<(QNetConfig, QNetParams)> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(CHECKPOINT_MANIFEST))?)?;
    manifest.config.validate()?;
    let blob = fs::read(dir.join(&manifest.data_file))?;
    if blob.len() % 8 != 0 {
        return Err(Error::InvalidParams("parameter blob is not a whole number of f64 values".into()));
    }
    let values: Vec<f64> = blob
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8")))
        .collect();
    let shapes = manifest.config.shapes();
    if shapes.len() != manifest.tensors.len() {
        return Err(Error::InvalidParams("manifest tensor count does not match its config".into()));
    }
    let mut tensors = Vec::new();
    for ((name, shape), entry) in shapes.iter().zip(&manifest.tensors) {
        if entry.name != *name || entry.shape != *shape || entry.len != shape.iter().product::<usize>() {
            return Err(Error::InvalidParams(format!("manifest entry {} does not match {name}", entry.name)));
        }
        let data = values
            .get(entry.offset..entry.offset + entry.len)
            .ok_or_else(|| Error::InvalidParams(format!("blob too short for {name}")))?;
        tensors.push(Tensor::param(shape.clone(), data.to_vec())?);
    }
    let params = QNetParams {
        tensors,
        names: shapes.iter().map(|(n, _)| *n).collect(),
    };
    if !params.is_finite() {
        return Err(Error::InvalidParams("checkpoint holds non-finite values".into()));
    }
    Ok((manifest.config, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Rounding;
    use crate::codec::dct::idct_matrix;
    use crate::loss::{combined_loss, LossParams, MosaicLayout, MsSsimParams, RateParams};

    fn random_blocks(rng: &mut ChaCha8Rng, samples: usize, channels: usize) -> BlockSet {
        let pixels: Vec<[f64; 64]> = (0..samples * channels)
            .map(|_| {
                let base = rng.random_range(30.0..220.0);
                std::array::from_fn(|i| (base + (i as f64 * 0.7).sin() * 25.0 + rng.random_range(-20.0..20.0)).clamp(0.0, 255.0))
            })
            .collect();
        BlockSet {
            channels,
            coords: (0..samples).map(|i| (i, 0)).collect(),
            coeffs: pixels.iter().map(|p| crate::codec::forward_dct(p, true)).collect(),
            pixels,
        }
    }

    fn small_cfg(samples: usize, channels: usize) -> QNetConfig {
        QNetConfig {
            channels,
            samples,
            ..QNetConfig::default()
        }
    }

    #[test]
    fn output_shape_for_default_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = QNetConfig::default();
        let params = init_params(&cfg).unwrap();
        let blocks = random_blocks(&mut rng, 256, 3);
        let mut g = Graph::new();
        let f = forward(&mut g, &cfg, &params, &blocks).unwrap();
        assert_eq!(g.shape(f.tables), &[1, 2, 8, 8]);
    }

    #[test]
    fn init_is_deterministic_and_shaped() {
        let cfg = small_cfg(8, 3);
        let a = init_params(&cfg).unwrap();
        assert_eq!(a, init_params(&cfg).unwrap());
        for ((_, shape), t) in cfg.shapes().iter().zip(&a.tensors) {
            assert_eq!(t.shape(), &shape[..]);
            assert!(t.requires_grad());
        }
        let other = init_params(&QNetConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn warm_start_near_quality_75() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for seed in 0..5 {
            let cfg = QNetConfig { seed, ..small_cfg(16, 3) };
            let params = init_params(&cfg).unwrap();
            let tables = predict(&cfg, &params, &random_blocks(&mut rng, 16, 3)).unwrap();
            for (i, t) in tables.tables().iter().enumerate() {
                let base = scale_table(if i == 0 { &ANNEX_K_LUMA } else { &ANNEX_K_CHROMA }, 75);
                for k in 0..64 {
                    let r = t[k] / base[k] as f64;
                    assert!((0.7..=1.3).contains(&r), "table {i} entry {k}: {} vs {}", t[k], base[k]);
                }
            }
        }
    }

    #[test]
    fn entries_at_least_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = small_cfg(4, 1);
        for trial in 0..1000u64 {
            let mut params = init_params(&QNetConfig { seed: trial, ..cfg.clone() }).unwrap();
            for t in &mut params.tensors {
                t.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-3.0..3.0));
            }
            let tables = predict(&cfg, &params, &random_blocks(&mut rng, 4, 1)).unwrap();
            assert!(tables.tables().iter().flatten().all(|&v| v >= 1.0));
        }
    }

    #[test]
    fn mean_collapse_ignores_sample_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = small_cfg(6, 3);
        let params = init_params(&cfg).unwrap();
        let blocks = random_blocks(&mut rng, 6, 3);
        let mut shuffled = blocks.clone();
        let order = [3, 0, 5, 1, 4, 2];
        shuffled.coeffs = order.iter().flat_map(|&s| blocks.coeffs[s * 3..s * 3 + 3].to_vec()).collect();
        let a = predict(&cfg, &params, &blocks).unwrap();
        let b = predict(&cfg, &params, &shuffled).unwrap();
        for (x, y) in a.tables().iter().flatten().zip(b.tables().iter().flatten()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn weighted_collapse_depends_on_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = QNetConfig {
            collapse: Collapse::WeightedSum,
            ..small_cfg(4, 1)
        };
        let mut params = init_params(&cfg).unwrap();
        params.tensors[SAMPLE_W].data_mut().copy_from_slice(&[0.7, 0.1, 0.1, 0.1]);
        let blocks = random_blocks(&mut rng, 4, 1);
        let mut swapped = blocks.clone();
        swapped.coeffs.swap(0, 3);
        assert_ne!(predict(&cfg, &params, &blocks).unwrap(), predict(&cfg, &params, &swapped).unwrap());
    }

    #[test]
    fn block_count_mismatch_is_a_shape_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cfg = small_cfg(8, 3);
        let params = init_params(&cfg).unwrap();
        let mut g = Graph::new();
        let r = forward(&mut g, &cfg, &params, &random_blocks(&mut rng, 7, 3));
        assert!(matches!(r, Err(Error::Shape { .. })));
    }

    #[test]
    fn export_rounding() {
        let mut t = [1.2; 64];
        t[1] = 300.0;
        t[2] = 16.5;
        let set = export_tables(QuantTableSet::new(vec![t], vec![0]).unwrap());
        let q = set.quantized_export().unwrap()[0];
        assert_eq!((q[0], q[1], q[2]), (1, 255, 17));
        assert_eq!(set.tables()[0][1], 300.0);
    }

    #[test]
    fn inverse_softplus_roundtrip() {
        for y in [0.5, 1.0, 8.0, 40.0, 255.0] {
            let x = inverse_softplus(y);
            assert!((x.max(0.0) + (-x.abs()).exp().ln_1p() - y).abs() < 1e-12);
        }
    }

    #[test]
    fn checkpoint_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = QNetConfig {
            collapse: Collapse::WeightedSum,
            ..small_cfg(5, 3)
        };
        let params = init_params(&cfg).unwrap();
        save_checkpoint(dir.path(), &cfg, &params).unwrap();
        let (cfg2, params2) = load_checkpoint(dir.path()).unwrap();
        assert_eq!(cfg, cfg2);
        assert_eq!(params, params2);
        let len = fs::metadata(dir.path().join(CHECKPOINT_DATA)).unwrap().len() as usize;
        assert_eq!(len, 8 * params.tensors.iter().map(Tensor::numel).sum::<usize>());
    }

    /// Loss gradients reach every parameter tensor.
    #[test]
    fn every_parameter_receives_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = QNetConfig {
            collapse: Collapse::WeightedSum,
            ..small_cfg(9, 3)
        };
        let params = init_params(&cfg).unwrap();
        let blocks = random_blocks(&mut rng, 9, 3);
        let mut g = Graph::new();
        let f = forward(&mut g, &cfg, &params, &blocks).unwrap();
        let layout = MosaicLayout::new(9, 3).unwrap();
        let (h, w) = (layout.height(), layout.width());
        let assignment = cfg.assignment();
        let assign: Vec<usize> = (0..3).flat_map(|c| (0..64).map(|k| assignment[c] * 64 + k).collect::<Vec<_>>()).collect();
        let t = g.gather(f.tables, &assign, [1, 3, 64]).unwrap();
        let c = g.constant([9, 3, 64], blocks.coeffs.iter().flatten().copied().collect()).unwrap();
        let q = g.soft_quantize(c, t, Rounding::StraightThrough).unwrap();
        let deq = g.mul(q, t).unwrap();
        let deq = g.reshape(deq, [27, 64]).unwrap();
        let m = g.constant([64, 64], idct_matrix().to_vec()).unwrap();
        let px = g.matmul(deq, m).unwrap();
        let px = g.add_scalar(px, 128.0);
        let px = g.scale(px, 1.0 / 255.0);
        let y = g.gather(px, &layout.gather_indices(), [3, 1, h, w]).unwrap();
        let orig: Vec<f64> = layout.assemble(&blocks.pixels).iter().map(|v| v / 255.0).collect();
        let x = g.constant([3, 1, h, w], orig).unwrap();
        let lp = LossParams { beta: 0.84, gamma: 0.01 };
        let (loss, _) = combined_loss(&mut g, x, y, q, &lp, &MsSsimParams::default(), &RateParams::default()).unwrap();
        g.backward(loss).unwrap();
        for (name, v) in params.names().iter().zip(&f.params) {
            let grad = g.grad(*v).unwrap();
            assert!(grad.iter().all(|x| x.is_finite()), "{name}");
            assert!(grad.iter().any(|&x| x != 0.0), "{name} has zero gradient");
        }
    }
}
