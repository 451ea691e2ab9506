//! Training objective: MS-SSIM, l1 and the coefficient-magnitude rate proxy.

mod mosaic;
mod msssim;

pub use mosaic::MosaicLayout;
pub use msssim::{ms_ssim, ms_ssim_images, ms_ssim_planes, ssim_cs, MsSsimParams, TERM_FLOOR};

use crate::autodiff::{Graph, Var};
use crate::error::{shape_err, Error, Result};
use serde::{Deserialize, Serialize};

/// MS-SSIM values are floored here before the log.
pub const LOG_FLOOR: f64 = 1e-8;

/// Per-coefficient weights of the rate proxy, in zigzag order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateParams {
    pub alpha: Vec<f64>,
}

impl Default for RateParams {
    fn default() -> Self {
        Self {
            alpha: (0..64).map(|i| 1.0 + i as f64 / 63.0).collect(),
        }
    }
}

impl RateParams {
    pub fn validate(&self) -> Result<()> {
        if self.alpha.len() != 64 {
            return Err(Error::InvalidParams(format!("alpha needs 64 weights, got {}", self.alpha.len())));
        }
        if self.alpha.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::InvalidParams("alpha weights must be finite and >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParams {
    pub beta: f64,
    pub gamma: f64,
}

impl LossParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) || !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "beta {} must lie in [0, 1] and gamma {} must be >= 0",
                self.beta, self.gamma
            )));
        }
        Ok(())
    }
}

/// Value of each loss term for one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub loss: f64,
    pub ms_ssim: f64,
    pub l1: f64,
    pub rate: f64,
    pub ms_ssim_term: f64,
    pub l1_term: f64,
    pub rate_term: f64,
    pub beta: f64,
    pub gamma: f64,
    /// MS-SSIM fell below [`LOG_FLOOR`] and was floored before the log.
    pub ms_ssim_floored: bool,
}

impl LossBreakdown {
    /// The same measured terms combined under other weights.
    pub fn reweighted(&self, beta: f64, gamma: f64) -> f64 {
        -beta * self.ms_ssim.max(LOG_FLOOR).ln() + (1.0 - beta) * self.l1 + gamma * self.rate
    }
}

/// `(1/N) Σ_n Σ_i α_i |q_n[i]|` where the first axis of `q` indexes the N
/// samples and the last axis holds 64 zigzag-ordered coefficients. Any axes
/// in between (channels) are summed.
pub fn rate_estimate(g: &mut Graph, q: Var, p: &RateParams) -> Result<Var> {
    p.validate()?;
    let shape = g.shape(q).to_vec();
    if shape.len() < 2 || shape[shape.len() - 1] != 64 {
        return Err(shape_err(&shape, &[64], "rate input must end in 64 coefficients"));
    }
    if shape[0] == 0 {
        return Err(Error::InvalidInput("rate of an empty block set".into()));
    }
    let alpha = g.constant([64], p.alpha.clone())?;
    let mag = g.abs(q);
    let weighted = g.mul(mag, alpha)?;
    let total = g.sum(weighted);
    Ok(g.scale(total, 1.0 / shape[0] as f64))
}

/// `−β·log(MS-SSIM(x, y)) + (1−β)·mean|x − y| + γ·R(q)` on `[n, 1, h, w]`
/// mosaics scaled to `[0, 1]` and zigzag-ordered quantized coefficients `q`.
pub fn combined_loss(
    g: &mut Graph,
    x: Var,
    y: Var,
    q: Var,
    lp: &LossParams,
    mp: &MsSsimParams,
    rp: &RateParams,
) -> Result<(Var, LossBreakdown)> {
    lp.validate()?;
    let ms = ms_ssim(g, x, y, mp)?;
    let ms_value = g.item(ms);
    let floored = g.clamp_min(ms, LOG_FLOOR);
    let log = g.log(floored);
    let ms_term = g.scale(log, -lp.beta);

    let diff = g.sub(x, y)?;
    let abs = g.abs(diff);
    let l1 = g.mean(abs);
    let l1_term = g.scale(l1, 1.0 - lp.beta);

    let rate = rate_estimate(g, q, rp)?;
    let rate_term = g.scale(rate, lp.gamma);

    let partial = g.add(ms_term, l1_term)?;
    let loss = g.add(partial, rate_term)?;
    let breakdown = LossBreakdown {
        loss: g.item(loss),
        ms_ssim: ms_value,
        l1: g.item(l1),
        rate: g.item(rate),
        ms_ssim_term: g.item(ms_term),
        l1_term: g.item(l1_term),
        rate_term: g.item(rate_term),
        beta: lp.beta,
        gamma: lp.gamma,
        ms_ssim_floored: ms_value < LOG_FLOOR,
    };
    if !breakdown.loss.is_finite() {
        return Err(Error::Numerical(format!("non-finite loss: {breakdown:?}")));
    }
    Ok((loss, breakdown))
}
