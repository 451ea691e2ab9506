//! Run configuration and its flat `key = value` text form.

use crate::autodiff::{AdamConfig, Rounding};
use crate::error::{Error, Result};
use crate::loss::{MsSsimParams, RateParams};
use crate::qnet::{Collapse, QNetConfig};
use crate::sampler::SamplePlan;
use crate::train::{AnnealConfig, BinConfig};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub epochs: usize,
    pub seed: u64,
    pub samples: usize,
    pub top_fraction: f64,
    pub tables: usize,
    pub embed_dim: usize,
    pub hidden_channels: usize,
    pub kernel: usize,
    pub collapse: Collapse,
    pub warm_start_quality: u8,
    pub rounding: Rounding,
    pub adam: AdamConfig,
    pub ms_ssim: MsSsimParams,
    pub rate: RateParams,
    pub anneal: AnnealConfig,
    pub bins: BinConfig,
    /// Measure and bin a candidate every this many epochs (the last epoch
    /// is always measured).
    pub measure_stride: usize,
}

/// Adam step size of the per-image runs.
pub const DEFAULT_LR: f64 = 5e-3;

impl Default for RunConfig {
    fn default() -> Self {
        let q = QNetConfig::default();
        let plan = SamplePlan::default();
        Self {
            epochs: 100,
            seed: 0,
            samples: plan.total_samples,
            top_fraction: plan.top_fraction,
            tables: q.tables,
            embed_dim: q.embed_dim,
            hidden_channels: q.hidden_channels,
            kernel: q.kernel,
            collapse: q.collapse,
            warm_start_quality: q.warm_start_quality,
            rounding: Rounding::StraightThrough,
            adam: AdamConfig {
                lr: DEFAULT_LR,
                ..AdamConfig::default()
            },
            ms_ssim: MsSsimParams::default(),
            rate: RateParams::default(),
            anneal: AnnealConfig::default(),
            bins: BinConfig::default(),
            measure_stride: 1,
        }
    }
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| cfg_err(format!("{key}: cannot parse {value:?}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|v| parse_num(key, v.trim()))
        .collect()
}

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "epochs" => self.epochs = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "samples" => self.samples = parse_num(key, v)?,
            "top_frac" => self.top_fraction = parse_num(key, v)?,
            "tables" => self.tables = parse_num(key, v)?,
            "embed_dim" => self.embed_dim = parse_num(key, v)?,
            "hidden_channels" => self.hidden_channels = parse_num(key, v)?,
            "kernel" => self.kernel = parse_num(key, v)?,
            "collapse" => {
                self.collapse = match v {
                    "mean" => Collapse::Mean,
                    "weighted_sum" => Collapse::WeightedSum,
                    _ => return Err(cfg_err(format!("collapse: expected mean or weighted_sum, got {v:?}"))),
                }
            }
            "warm_start_quality" => self.warm_start_quality = parse_num(key, v)?,
            "rounding" => {
                self.rounding = match v {
                    "ste" => Rounding::StraightThrough,
                    "soft_round" => match self.rounding {
                        Rounding::SoftRound { .. } => self.rounding,
                        Rounding::StraightThrough => Rounding::SoftRound { alpha: 4.0 },
                    },
                    _ => return Err(cfg_err(format!("rounding: expected ste or soft_round, got {v:?}"))),
                }
            }
            "soft_round_alpha" => {
                let alpha = parse_num(key, v)?;
                if let Rounding::SoftRound { alpha: a } = &mut self.rounding {
                    *a = alpha;
                } else {
                    self.rounding = Rounding::SoftRound { alpha };
                }
            }
            "lr" => self.adam.lr = parse_num(key, v)?,
            "adam_beta1" => self.adam.beta1 = parse_num(key, v)?,
            "adam_beta2" => self.adam.beta2 = parse_num(key, v)?,
            "adam_eps" => self.adam.eps = parse_num(key, v)?,
            "ms_ssim_scales" => {
                let m: usize = parse_num(key, v)?;
                self.ms_ssim.scales = m;
                self.ms_ssim.weights = vec![1.0 / m.max(1) as f64; m];
            }
            "ms_ssim_weights" => self.ms_ssim.weights = parse_list(key, v)?,
            "ssim_c1" => self.ms_ssim.c1 = parse_num(key, v)?,
            "ssim_c2" => self.ms_ssim.c2 = parse_num(key, v)?,
            "ssim_window" => self.ms_ssim.window = parse_num(key, v)?,
            "rate_alpha" => self.rate.alpha = parse_list(key, v)?,
            "beta0" => self.anneal.beta0 = parse_num(key, v)?,
            "gamma0" => self.anneal.gamma0 = parse_num(key, v)?,
            "tau" => self.anneal.tau = parse_num(key, v)?,
            "temperature0" => self.anneal.temperature0 = parse_num(key, v)?,
            "kappa" => self.anneal.kappa = parse_num(key, v)?,
            "heavy_factor" => self.anneal.heavy_factor = parse_num(key, v)?,
            "beta_floor" => self.anneal.beta_floor = parse_num(key, v)?,
            "gamma_cap" => self.anneal.gamma_cap = parse_num(key, v)?,
            "bins_low" => self.bins.low = parse_num(key, v)?,
            "bins_high" => self.bins.high = parse_num(key, v)?,
            "bins_width" => self.bins.width = parse_num(key, v)?,
            "measure_stride" => self.measure_stride = parse_num(key, v)?,
            other => return Err(cfg_err(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| cfg_err(format!("line {}: expected key = value", n + 1)))?;
            self.set(k, v)
                .map_err(|e| cfg_err(format!("line {}: {}", n + 1, e.to_string().trim_start_matches("invalid configuration: "))))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Text form that [`RunConfig::parse`] reads back to an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("epochs", self.epochs.to_string());
        put("seed", self.seed.to_string());
        put("samples", self.samples.to_string());
        put("top_frac", self.top_fraction.to_string());
        put("tables", self.tables.to_string());
        put("embed_dim", self.embed_dim.to_string());
        put("hidden_channels", self.hidden_channels.to_string());
        put("kernel", self.kernel.to_string());
        put(
            "collapse",
            match self.collapse {
                Collapse::Mean => "mean",
                Collapse::WeightedSum => "weighted_sum",
            }
            .into(),
        );
        put("warm_start_quality", self.warm_start_quality.to_string());
        match self.rounding {
            Rounding::StraightThrough => put("rounding", "ste".into()),
            Rounding::SoftRound { alpha } => {
                put("rounding", "soft_round".into());
                put("soft_round_alpha", alpha.to_string());
            }
        }
        put("lr", self.adam.lr.to_string());
        put("adam_beta1", self.adam.beta1.to_string());
        put("adam_beta2", self.adam.beta2.to_string());
        put("adam_eps", self.adam.eps.to_string());
        put("ms_ssim_scales", self.ms_ssim.scales.to_string());
        put("ms_ssim_weights", join(&self.ms_ssim.weights));
        put("ssim_c1", self.ms_ssim.c1.to_string());
        put("ssim_c2", self.ms_ssim.c2.to_string());
        put("ssim_window", self.ms_ssim.window.to_string());
        put("rate_alpha", join(&self.rate.alpha));
        put("beta0", self.anneal.beta0.to_string());
        put("gamma0", self.anneal.gamma0.to_string());
        put("tau", self.anneal.tau.to_string());
        put("temperature0", self.anneal.temperature0.to_string());
        put("kappa", self.anneal.kappa.to_string());
        put("heavy_factor", self.anneal.heavy_factor.to_string());
        put("beta_floor", self.anneal.beta_floor.to_string());
        put("gamma_cap", self.anneal.gamma_cap.to_string());
        put("bins_low", self.bins.low.to_string());
        put("bins_high", self.bins.high.to_string());
        put("bins_width", self.bins.width.to_string());
        put("measure_stride", self.measure_stride.to_string());
        s
    }

    pub fn sample_plan(&self) -> SamplePlan {
        SamplePlan {
            total_samples: self.samples,
            top_fraction: self.top_fraction,
            seed: self.seed,
        }
    }

    pub fn qnet(&self, channels: usize, samples: usize) -> QNetConfig {
        QNetConfig {
            channels,
            samples,
            tables: self.tables,
            embed_dim: self.embed_dim,
            hidden_channels: self.hidden_channels,
            kernel: self.kernel,
            collapse: self.collapse,
            warm_start_quality: self.warm_start_quality,
            seed: self.seed,
        }
    }

    /// Checks every setting that does not depend on the image.
    pub fn validate(&self) -> Result<()> {
        let wrap = |r: Result<()>| r.map_err(|e| cfg_err(e.to_string()));
        if self.samples == 0 {
            return Err(cfg_err("samples must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.top_fraction) {
            return Err(cfg_err(format!("top_frac {} outside [0, 1]", self.top_fraction)));
        }
        if self.measure_stride == 0 {
            return Err(cfg_err("measure_stride must be at least 1"));
        }
        let a = self.adam;
        if !(a.lr >= 0.0 && a.lr.is_finite()) || !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
            return Err(cfg_err(format!("invalid Adam settings {a:?}")));
        }
        if let Rounding::SoftRound { alpha } = self.rounding {
            if !(alpha > 0.0 && alpha.is_finite()) {
                return Err(cfg_err(format!("soft_round_alpha {alpha} must be positive")));
            }
        }
        wrap(self.qnet(3, self.samples).validate())?;
        wrap(self.ms_ssim.validate())?;
        wrap(self.rate.validate())?;
        wrap(self.anneal.validate())?;
        wrap(self.bins.validate())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(c.epochs, 100);
        assert_eq!(c.samples, 256);
        assert_eq!(c.anneal.tau, 0.97);
        assert_eq!(c.adam.lr, DEFAULT_LR);
    }

    #[test]
    fn text_roundtrip() {
        let mut c = RunConfig::default();
        c.set("epochs", "7").unwrap();
        c.set("collapse", "weighted_sum").unwrap();
        c.set("soft_round_alpha", "6.5").unwrap();
        c.set("ms_ssim_weights", "0.2, 0.3, 0.5").unwrap();
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
        assert_eq!(RunConfig::parse(&RunConfig::default().to_text()).unwrap(), RunConfig::default());
    }

    #[test]
    fn comments_and_blank_lines() {
        let c = RunConfig::parse("# run\n\nepochs = 3  # short\n tau=0.95\n").unwrap();
        assert_eq!((c.epochs, c.anneal.tau), (3, 0.95));
    }

    #[test]
    fn errors_name_the_line() {
        let e = RunConfig::parse("epochs = 3\nbogus = 1\n").unwrap_err().to_string();
        assert!(e.contains("line 2") && e.contains("bogus"), "{e}");
        assert!(RunConfig::parse("epochs 3").is_err());
        assert!(RunConfig::parse("epochs = many").is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        for (k, v) in [
            ("samples", "0"),
            ("top_frac", "1.5"),
            ("tables", "4"),
            ("kappa", "1.2"),
            ("bins_width", "0"),
            ("ssim_window", "4"),
            ("rate_alpha", "1,2,3"),
            ("measure_stride", "0"),
            ("lr", "-1"),
        ] {
            let mut c = RunConfig::default();
            c.set(k, v).unwrap();
            assert!(matches!(c.validate(), Err(Error::Config(_))), "{k}={v}");
        }
    }

    #[test]
    fn scales_reset_weights() {
        let mut c = RunConfig::default();
        c.set("ms_ssim_scales", "2").unwrap();
        assert_eq!(c.ms_ssim.weights, vec![0.5, 0.5]);
        c.validate().unwrap();
    }
}
