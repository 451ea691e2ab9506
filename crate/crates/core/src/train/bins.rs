use crate::codec::QuantTableSet;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Slack when locating a bin so values sitting on an edge land above it.
const EDGE_SLACK: f64 = 1e-9;

/// Hard-quantized measurement of one table set on the whole image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// Epoch that proposed the tables; 0 is the warm start.
    pub epoch: usize,
    pub tables: QuantTableSet,
    pub ms_ssim: f64,
    /// Entropy-coded scan length from the size estimator.
    pub estimated_bits: u64,
    /// Byte length of the emitted file.
    pub size_bytes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinConfig {
    pub low: f64,
    pub high: f64,
    pub width: f64,
}

impl Default for BinConfig {
    fn default() -> Self {
        Self {
            low: 0.80,
            high: 1.00,
            width: 0.01,
        }
    }
}

impl BinConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.low && self.low < self.high && self.high <= 1.0) {
            return Err(Error::InvalidParams(format!("bin range [{}, {}] invalid", self.low, self.high)));
        }
        if !(self.width > 0.0 && self.width <= self.high - self.low) {
            return Err(Error::InvalidParams(format!("bin width {} invalid", self.width)));
        }
        Ok(())
    }

    pub fn count(&self) -> usize {
        ((self.high - self.low) / self.width - EDGE_SLACK).ceil() as usize
    }

    /// `[lower, upper)` edges of bin `i`; the last bin is closed at `high`.
    pub fn edges(&self, i: usize) -> (f64, f64) {
        let lo = self.low + i as f64 * self.width;
        (lo, (lo + self.width).min(self.high))
    }

    pub fn index(&self, ms_ssim: f64) -> Option<usize> {
        if ms_ssim < self.low || ms_ssim > self.high {
            return None;
        }
        let i = ((ms_ssim - self.low) / self.width + EDGE_SLACK).floor() as usize;
        Some(i.min(self.count() - 1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinOutcome {
    Stored,
    Kept,
    Dropped,
}

/// Lowest-rate candidate per MS-SSIM interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateBins {
    pub config: BinConfig,
    pub best: Vec<Option<Candidate>>,
    pub dropped: usize,
}

impl CandidateBins {
    pub fn new(config: BinConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            best: vec![None; config.count()],
            config,
            dropped: 0,
        })
    }

    /// Files the candidate; it replaces the incumbent only with a strictly
    /// lower estimated rate.
    pub fn bin_candidate(&mut self, cand: Candidate) -> Result<BinOutcome> {
        if !(0.0..=1.0).contains(&cand.ms_ssim) {
            return Err(Error::InvalidCandidate(format!("MS-SSIM {} outside [0, 1]", cand.ms_ssim)));
        }
        let Some(i) = self.config.index(cand.ms_ssim) else {
            self.dropped += 1;
            return Ok(BinOutcome::Dropped);
        };
        match &self.best[i] {
            Some(inc) if inc.estimated_bits <= cand.estimated_bits => Ok(BinOutcome::Kept),
            _ => {
                self.best[i] = Some(cand);
                Ok(BinOutcome::Stored)
            }
        }
    }

    pub fn populated(&self) -> usize {
        self.best.iter().flatten().count()
    }

    /// Stored estimated rate per bin.
    pub fn rates(&self) -> Vec<Option<u64>> {
        self.best.iter().map(|b| b.as_ref().map(|c| c.estimated_bits)).collect()
    }

    /// Stored candidates with their bin index, finest quality last.
    pub fn candidates(&self) -> impl Iterator<Item = (usize, &Candidate)> {
        self.best.iter().enumerate().filter_map(|(i, c)| c.as_ref().map(|c| (i, c)))
    }
}
