use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealConfig {
    pub beta0: f64,
    pub gamma0: f64,
    /// MS-SSIM at or above which a solution counts as acceptable.
    pub tau: f64,
    pub temperature0: f64,
    pub kappa: f64,
    pub heavy_factor: f64,
    pub beta_floor: f64,
    pub gamma_cap: f64,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        Self {
            beta0: 0.84,
            gamma0: 0.01,
            tau: 0.97,
            temperature0: 1.0,
            kappa: 0.95,
            heavy_factor: 10.0,
            beta_floor: 0.5,
            gamma_cap: 1.0,
        }
    }
}

impl AnnealConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if !(0.0..=1.0).contains(&self.beta_floor) || !(self.beta_floor..=1.0).contains(&self.beta0) {
            return bad(format!("need 0 <= beta_floor {} <= beta0 {} <= 1", self.beta_floor, self.beta0));
        }
        if !(self.gamma_cap >= 0.0 && self.gamma_cap.is_finite()) || !(0.0..=self.gamma_cap).contains(&self.gamma0) {
            return bad(format!("need 0 <= gamma0 {} <= gamma_cap {}", self.gamma0, self.gamma_cap));
        }
        if !(self.temperature0 > 0.0 && self.temperature0.is_finite()) {
            return bad(format!("temperature {} must be positive", self.temperature0));
        }
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return bad(format!("kappa {} must lie in (0, 1)", self.kappa));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad(format!("tau {} must lie in [0, 1]", self.tau));
        }
        if !(self.heavy_factor >= 0.0 && self.heavy_factor.is_finite()) {
            return bad(format!("heavy factor {} must be >= 0", self.heavy_factor));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealState {
    pub beta: f64,
    pub gamma: f64,
    pub temperature: f64,
    pub tau: f64,
    pub kappa: f64,
    pub heavy_factor: f64,
    pub beta_floor: f64,
    pub gamma_cap: f64,
}

impl AnnealState {
    pub fn new(cfg: &AnnealConfig) -> Self {
        Self {
            beta: cfg.beta0,
            gamma: cfg.gamma0,
            temperature: cfg.temperature0,
            tau: cfg.tau,
            kappa: cfg.kappa,
            heavy_factor: cfg.heavy_factor,
            beta_floor: cfg.beta_floor,
            gamma_cap: cfg.gamma_cap,
        }
    }

    pub fn is_acceptable(&self, ms_ssim: f64) -> bool {
        ms_ssim >= self.tau
    }
}

/// Below `tau` the distortion weight rises sharply; at or above it the
/// distortion weight relaxes, the rate weight grows with the current/original
/// rate ratio and the temperature cools.
pub fn anneal_update(state: &AnnealState, ms_ssim: f64, rate_current: f64, rate_original: f64) -> Result<AnnealState> {
    if !(rate_original > 0.0) {
        return Err(Error::InvalidInput(format!("original rate {rate_original} must be positive")));
    }
    let mut next = *state;
    let t = state.temperature;
    if !state.is_acceptable(ms_ssim) {
        next.beta = (state.beta + t * (state.tau - ms_ssim) * state.heavy_factor).min(1.0);
    } else {
        next.beta = (state.beta - t * (1.0 - ms_ssim)).max(state.beta_floor);
        next.gamma = (state.gamma + t * (rate_current / rate_original)).min(state.gamma_cap);
        next.temperature = t * state.kappa;
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn state() -> AnnealState {
        AnnealState::new(&AnnealConfig::default())
    }

    #[test]
    fn perfect_quality_branch() {
        let s = state();
        let n = anneal_update(&s, 1.0, 50.0, 100.0).unwrap();
        assert_eq!(n.beta, s.beta);
        assert_eq!(n.gamma, (s.gamma + 0.5).min(1.0));
        assert_eq!(n.temperature, 0.95);
    }

    #[test]
    fn penalty_branch() {
        let s = state();
        let n = anneal_update(&s, 0.5, 50.0, 100.0).unwrap();
        assert!(n.beta > s.beta);
        assert_eq!(n.beta, 1.0);
        assert_eq!(n.gamma, s.gamma);
        assert_eq!(n.temperature, s.temperature);
        let n = anneal_update(&s, 0.969, 50.0, 100.0).unwrap();
        assert!((n.beta - (0.84 + 0.001 * 10.0)).abs() < 1e-12);
    }

    #[test]
    fn geometric_cooling() {
        let mut s = state();
        for _ in 0..10 {
            s = anneal_update(&s, 0.99, 1.0, 1.0).unwrap();
        }
        assert!((s.temperature - 0.95f64.powi(10)).abs() < 1e-12);
    }

    #[test]
    fn zero_original_rate_rejected() {
        assert!(anneal_update(&state(), 0.99, 1.0, 0.0).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(AnnealConfig::default().validate().is_ok());
        assert!(AnnealConfig { kappa: 1.0, ..Default::default() }.validate().is_err());
        assert!(AnnealConfig { beta0: 0.4, ..Default::default() }.validate().is_err());
        assert!(AnnealConfig { gamma0: 2.0, ..Default::default() }.validate().is_err());
    }

    proptest! {
        #[test]
        fn clamps_and_cooling_hold(
            trace in proptest::collection::vec((0.0f64..=1.0, 0.0f64..500.0), 1..60),
            orig in 0.1f64..500.0,
        ) {
            let mut s = state();
            for (ms, rate) in trace {
                let n = anneal_update(&s, ms, rate, orig).unwrap();
                prop_assert!(n.temperature <= s.temperature);
                if ms >= s.tau {
                    prop_assert!(n.temperature < s.temperature);
                }
                prop_assert!((s.beta_floor..=1.0).contains(&n.beta));
                prop_assert!((0.0..=s.gamma_cap).contains(&n.gamma));
                s = n;
            }
        }
    }
}
