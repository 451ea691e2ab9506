//! Per-image optimization: the epoch loop, annealing of the loss weights,
//! and MS-SSIM binning of the measured candidates.

mod anneal;
mod bins;

pub use anneal::{anneal_update, AnnealConfig, AnnealState};
pub use bins::{BinConfig, BinOutcome, Candidate, CandidateBins};

use crate::autodiff::{adam_step, AdamState, Graph, Rounding, Tensor, Var};
use crate::codec::dct::idct_matrix;
use crate::codec::encoder::encode_quantized;
use crate::codec::entropy::{estimate_size_bits, DcPrediction};
use crate::codec::zigzag::{zigzag, ZIGZAG};
use crate::codec::{CoefficientImage, QuantTableSet};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::image::{ColorSpace, ImagePlanes};
use crate::loss::{combined_loss, ms_ssim_images, LossBreakdown, LossParams, MosaicLayout, MsSsimParams};
use crate::qnet::{self, QNetConfig, QNetParams};
use crate::sampler::{sample_blocks, BlockSet};
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Whole-image hard measurement of table sets against one image.
#[derive(Debug, Clone)]
pub struct Measurer {
    original: ImagePlanes,
    coeffs: CoefficientImage,
    params: MsSsimParams,
}

impl Measurer {
    pub fn new(img: &ImagePlanes, params: &MsSsimParams) -> Result<Self> {
        let original = img.to_codec_space();
        Ok(Self {
            coeffs: CoefficientImage::new(&original)?,
            params: params.clone(),
            original,
        })
    }

    pub fn image(&self) -> &ImagePlanes {
        &self.original
    }

    /// Encodes with the exported integer tables, decodes, and scores the
    /// result. Returns the candidate and the emitted file.
    pub fn measure(&self, tables: &QuantTableSet, epoch: usize) -> Result<(Candidate, Vec<u8>)> {
        let (quantized, decoded) = self.coeffs.roundtrip(tables)?;
        let estimated_bits = estimate_size_bits(&quantized, DcPrediction::Sequential);
        let file = encode_quantized(self.coeffs.width, self.coeffs.height, &quantized, tables)?;
        let ms_ssim = ms_ssim_images(&self.original, &decoded, &self.params)?;
        let cand = Candidate {
            epoch,
            tables: tables.clone(),
            ms_ssim,
            estimated_bits,
            size_bytes: file.size_bytes,
        };
        Ok((cand, file.bytes))
    }
}

/// One-off measurement; see [`Measurer`] for repeated use.
pub fn measure_candidate(img: &ImagePlanes, tables: &QuantTableSet, params: &MsSsimParams) -> Result<Candidate> {
    Ok(Measurer::new(img, params)?.measure(tables, 0)?.0)
}

/// Compact candidate description for epoch traces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub ms_ssim: f64,
    pub estimated_bits: u64,
    pub size_bytes: usize,
    pub outcome: BinOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: LossBreakdown,
    /// Annealing state after this epoch's update.
    pub anneal: AnnealState,
    pub candidate: Option<CandidateSummary>,
    /// Stored estimated rate per bin after this epoch.
    pub bin_rates: Vec<Option<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub colorspace: ColorSpace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: RunConfig,
    pub sampler_seed: u64,
    pub init_seed: u64,
    pub image: ImageInfo,
    pub samples_used: usize,
    pub sampled_blocks: Vec<(usize, usize)>,
    pub mosaic: (usize, usize),
    /// MS-SSIM settings after fitting to the training mosaic.
    pub training_ms_ssim: MsSsimParams,
    pub initial_anneal: AnnealState,
    /// Rate term of the first epoch, the reference for the rate ratio.
    pub rate_original: Option<f64>,
    pub warm_start: CandidateSummary,
    pub epochs: Vec<EpochRecord>,
    pub bins: CandidateBins,
    /// Seconds spent in the run; kept out of the serialized record so it
    /// stays reproducible.
    #[serde(skip)]
    pub wall_clock_seconds: f64,
}

/// A finished run with the trained model.
#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub record: RunRecord,
    pub model: QNetConfig,
    pub params: QNetParams,
}

/// The differentiable stand-in for the codec used in training: sampled
/// blocks are quantized with the predicted tables, dequantized, inverse
/// transformed and tiled into a mosaic.
pub struct TrainingProxy {
    layout: MosaicLayout,
    coeffs: Tensor,
    original: Tensor,
    idct: Tensor,
    table_index: Vec<usize>,
    mosaic_index: Vec<usize>,
}

impl TrainingProxy {
    pub fn new(blocks: &BlockSet, model: &QNetConfig) -> Result<Self> {
        let (s, c) = (blocks.len(), blocks.channels);
        let layout = MosaicLayout::new(s, c)?;
        let coeffs = Tensor::new(vec![s, c, 64], blocks.coeffs.iter().flat_map(zigzag).collect())?;
        let original = Tensor::new(
            vec![c, 1, layout.height(), layout.width()],
            layout.assemble(&blocks.pixels).iter().map(|v| v / 255.0).collect(),
        )?;
        // inverse transform with rows in zigzag order
        let m = idct_matrix();
        let idct = Tensor::new(vec![64, 64], ZIGZAG.iter().flat_map(|&n| m[n * 64..n * 64 + 64].to_vec()).collect())?;
        let assignment = model.assignment();
        let table_index = (0..c).flat_map(|ch| ZIGZAG.map(|n| assignment[ch] * 64 + n)).collect();
        Ok(Self {
            mosaic_index: layout.gather_indices(),
            layout,
            coeffs,
            original,
            idct,
            table_index,
        })
    }

    pub fn layout(&self) -> &MosaicLayout {
        &self.layout
    }

    /// Sampled coefficients, `[S, C, 64]` in zigzag order.
    pub fn coefficients(&self) -> &Tensor {
        &self.coeffs
    }

    /// Mosaic of the original blocks, `[C, 1, H, W]` scaled to `[0, 1]`.
    pub fn original(&self) -> &Tensor {
        &self.original
    }

    /// Quantizes the sampled coefficients with `tables` (`[1, Q, 8, 8]`) and
    /// returns the zigzag quantized values and the `[0, 1]` mosaic of the
    /// reconstruction.
    pub fn reconstruct(&self, g: &mut Graph, tables: Var, rounding: Rounding) -> Result<(Var, Var)> {
        self.reconstruct_with(g, tables, |g, c, t| g.soft_quantize(c, t, rounding))
    }

    /// As [`Self::reconstruct`] with a caller-supplied quantizer taking the
    /// coefficients and the per-coefficient tables (`[1, C, 64]`).
    pub fn reconstruct_with(
        &self,
        g: &mut Graph,
        tables: Var,
        quantize: impl FnOnce(&mut Graph, Var, Var) -> Result<Var>,
    ) -> Result<(Var, Var)> {
        let (s, c) = (self.layout.samples, self.layout.channels);
        let t = g.gather(tables, &self.table_index, [1, c, 64])?;
        let coeffs = g.leaf(&self.coeffs);
        let q = quantize(g, coeffs, t)?;
        let deq = g.mul(q, t)?;
        let deq = g.reshape(deq, [s * c, 64])?;
        let idct = g.leaf(&self.idct);
        let px = g.matmul(deq, idct)?;
        let px = g.add_scalar(px, 128.0);
        let px = g.scale(px, 1.0 / 255.0);
        let y = g.gather(px, &self.mosaic_index, [c, 1, self.layout.height(), self.layout.width()])?;
        Ok((q, y))
    }
}

fn summary(c: &Candidate, outcome: BinOutcome) -> CandidateSummary {
    CandidateSummary {
        ms_ssim: c.ms_ssim,
        estimated_bits: c.estimated_bits,
        size_bytes: c.size_bytes,
        outcome,
    }
}

/// Optimizes tables for one image. See [`train`] for the model as well.
pub fn train_image(img: &ImagePlanes, cfg: &RunConfig) -> Result<RunRecord> {
    Ok(train(img, cfg)?.record)
}

pub fn train(img: &ImagePlanes, cfg: &RunConfig) -> Result<TrainedRun> {
    let started = Instant::now();
    cfg.validate()?;
    let measurer = Measurer::new(img, &cfg.ms_ssim)?;
    let codec_img = measurer.image();
    let block_count = codec_img.blocks_wide() * codec_img.blocks_high();
    let plan = cfg.sample_plan().clamped(block_count);
    let blocks = sample_blocks(codec_img, &plan)?;
    let model = cfg.qnet(codec_img.channels(), blocks.len());
    let mut params = qnet::init_params(&model)?;
    let mut adam = AdamState::new(&params.tensors, cfg.adam);
    let proxy = TrainingProxy::new(&blocks, &model)?;
    let ms_params = cfg.ms_ssim.fitted(proxy.layout.height(), proxy.layout.width())?;
    let mut bins = CandidateBins::new(cfg.bins)?;

    let warm = qnet::predict(&model, &params, &blocks)?.export();
    let (cand, _) = measurer.measure(&warm, 0)?;
    let outcome = bins.bin_candidate(cand.clone())?;
    let warm_start = summary(&cand, outcome);

    let initial_anneal = AnnealState::new(&cfg.anneal);
    let mut anneal = initial_anneal;
    let mut rate_original = None;
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let mut g = Graph::new();
        let fwd = qnet::forward(&mut g, &model, &params, &blocks)?;
        let (q, y) = proxy.reconstruct(&mut g, fwd.tables, cfg.rounding)?;
        let x = g.leaf(&proxy.original);
        let lp = LossParams {
            beta: anneal.beta,
            gamma: anneal.gamma,
        };
        let (loss, breakdown) = combined_loss(&mut g, x, y, q, &lp, &ms_params, &cfg.rate)
            .map_err(|e| Error::Numerical(format!("epoch {epoch}: {e}")))?;
        g.backward(loss)?;
        for (t, v) in params.tensors.iter_mut().zip(&fwd.params) {
            let grad = g
                .grad(*v)
                .ok_or_else(|| Error::InvalidState("parameter without gradient".into()))?;
            t.set_grad(grad.to_vec())?;
        }
        adam_step(&mut params.tensors, &mut adam)?;
        if !params.is_finite() {
            return Err(Error::Numerical(format!("epoch {epoch}: parameters became non-finite; last loss {breakdown:?}")));
        }

        let r0 = *rate_original.get_or_insert(breakdown.rate);
        anneal = anneal_update(&anneal, breakdown.ms_ssim, breakdown.rate, r0.max(f64::MIN_POSITIVE))?;

        let candidate = if epoch % cfg.measure_stride == 0 || epoch == cfg.epochs {
            let tables = qnet::predict(&model, &params, &blocks)?.export();
            let (cand, _) = measurer.measure(&tables, epoch)?;
            let s = summary(&cand, BinOutcome::Dropped);
            let outcome = bins.bin_candidate(cand)?;
            Some(CandidateSummary { outcome, ..s })
        } else {
            None
        };
        epochs.push(EpochRecord {
            epoch,
            loss: breakdown,
            anneal,
            candidate,
            bin_rates: bins.rates(),
        });
    }

    let record = RunRecord {
        config: cfg.clone(),
        sampler_seed: plan.seed,
        init_seed: model.seed,
        image: ImageInfo {
            width: codec_img.width(),
            height: codec_img.height(),
            channels: codec_img.channels(),
            colorspace: codec_img.colorspace(),
        },
        samples_used: blocks.len(),
        sampled_blocks: blocks.coords.clone(),
        mosaic: (proxy.layout.height(), proxy.layout.width()),
        training_ms_ssim: ms_params,
        initial_anneal,
        rate_original,
        warm_start,
        epochs,
        bins,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    Ok(TrainedRun { record, model, params })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(w: usize, h: usize) -> ImagePlanes {
        let data: Vec<u8> = (0..w * h * 3)
            .map(|i| {
                let (p, ch) = (i / 3, i % 3);
                let (x, y) = (p % w, p / w);
                ((x * 255 / w + y * 3 + ch * 40 + (x * y) % 7) % 256) as u8
            })
            .collect();
        ImagePlanes::from_rgb8(w, h, &data).unwrap()
    }

    fn quick(epochs: usize) -> RunConfig {
        RunConfig {
            epochs,
            samples: 16,
            embed_dim: 64,
            hidden_channels: 4,
            ..RunConfig::default()
        }
    }

    #[test]
    fn zero_epochs_bins_only_the_warm_start() {
        let r = train_image(&gradient(32, 32), &quick(0)).unwrap();
        assert!(r.epochs.is_empty());
        assert_eq!(r.warm_start.outcome, BinOutcome::Stored);
        assert_eq!(r.bins.populated(), 1);
        assert_eq!(r.bins.candidates().next().unwrap().1.epoch, 0);
    }

    #[test]
    fn runs_are_reproducible() {
        let img = gradient(40, 24);
        let a = train_image(&img, &quick(3)).unwrap();
        let b = train_image(&img, &quick(3)).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.epochs.len(), 3);
    }

    #[test]
    fn stride_skips_measurements() {
        let cfg = RunConfig { measure_stride: 2, ..quick(5) };
        let r = train_image(&gradient(32, 32), &cfg).unwrap();
        let measured: Vec<usize> = r.epochs.iter().filter(|e| e.candidate.is_some()).map(|e| e.epoch).collect();
        assert_eq!(measured, vec![2, 4, 5]);
    }

    #[test]
    fn all_ones_tables_near_lossless() {
        let img = gradient(48, 40);
        let p = MsSsimParams::default();
        let ones = QuantTableSet::from_integer(vec![[1; 64]], vec![0, 0, 0]).unwrap();
        let coarse = QuantTableSet::from_integer(vec![[255; 64]], vec![0, 0, 0]).unwrap();
        let c = measure_candidate(&img, &ones, &p).unwrap();
        // rounding-only reference: the codec-space image rounded to integers
        let codec = img.to_codec_space();
        let rounded = ImagePlanes::new(
            codec.width(),
            codec.height(),
            codec.colorspace(),
            codec.planes().iter().map(|pl| pl.iter().map(|v| v.round()).collect()).collect(),
        )
        .unwrap();
        let reference = ms_ssim_images(&codec, &rounded, &p).unwrap();
        assert!((c.ms_ssim - reference).abs() < 1e-3, "{} vs {reference}", c.ms_ssim);
        let d = measure_candidate(&img, &coarse, &p).unwrap();
        assert!(d.ms_ssim < c.ms_ssim);
    }

    #[test]
    fn measured_size_matches_file() {
        let img = gradient(24, 24);
        let t = QuantTableSet::standard(60, 3, 2).unwrap();
        let m = Measurer::new(&img, &MsSsimParams::default()).unwrap();
        let (c, bytes) = m.measure(&t, 4).unwrap();
        assert_eq!(c.size_bytes, bytes.len());
        assert_eq!(c.epoch, 4);
    }

    #[test]
    fn proxy_matches_hard_quantization() {
        // the straight-through forward path reproduces the codec's quantized values
        let img = gradient(32, 32).to_codec_space();
        let cfg = quick(0);
        let blocks = sample_blocks(&img, &cfg.sample_plan()).unwrap();
        let model = cfg.qnet(3, blocks.len());
        let params = qnet::init_params(&model).unwrap();
        let proxy = TrainingProxy::new(&blocks, &model).unwrap();
        let mut g = Graph::new();
        let fwd = qnet::forward(&mut g, &model, &params, &blocks).unwrap();
        let (q, _) = proxy.reconstruct(&mut g, fwd.tables, cfg.rounding).unwrap();
        let tables = qnet::tables_from_output(&model, g.value(fwd.tables)).unwrap();
        for (i, b) in blocks.coeffs.iter().enumerate() {
            let table = &tables.tables()[model.assignment()[i % 3]];
            let expected = zigzag(&crate::codec::quantize(b, table).unwrap());
            let got = &g.value(q)[i * 64..i * 64 + 64];
            for k in 0..64 {
                assert_eq!(got[k], expected[k] as f64);
            }
        }
    }
}
