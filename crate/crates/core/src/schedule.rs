//! DDIM-style beta schedules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaSchedule {
    /// Linear in √β, squared.
    ScaledLinear,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DdimScheduleConfig {
    pub beta_start: f64,
    pub beta_end: f64,
    pub beta_schedule: BetaSchedule,
    pub steps: usize,
    pub clip_sample: bool,
    pub set_alpha_to_one: bool,
}

impl Default for DdimScheduleConfig {
    fn default() -> Self {
        DdimScheduleConfig {
            beta_start: 0.00085,
            beta_end: 0.012,
            beta_schedule: BetaSchedule::ScaledLinear,
            steps: 50,
            clip_sample: false,
            set_alpha_to_one: false,
        }
    }
}

impl DdimScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.beta_start && self.beta_start < self.beta_end && self.beta_end < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < beta_start < beta_end < 1, got {} and {}",
                self.beta_start, self.beta_end
            )));
        }
        if self.steps < 1 {
            return Err(Error::InvalidParameter("steps must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DdimSchedule {
    pub betas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub alpha_cumprod: Vec<f64>,
}

impl DdimSchedule {
    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }
}

pub fn build_schedule(cfg: &DdimScheduleConfig) -> Result<DdimSchedule> {
    cfg.validate()?;
    let n = cfg.steps;
    let frac = |t: usize| {
        if n == 1 {
            0.0
        } else {
            t as f64 / (n - 1) as f64
        }
    };
    let mut betas: Vec<f64> = match cfg.beta_schedule {
        BetaSchedule::ScaledLinear => {
            let (a, b) = (cfg.beta_start.sqrt(), cfg.beta_end.sqrt());
            (0..n).map(|t| (a + frac(t) * (b - a)).powi(2)).collect()
        }
        BetaSchedule::Linear => (0..n)
            .map(|t| cfg.beta_start + frac(t) * (cfg.beta_end - cfg.beta_start))
            .collect(),
    };
    // Pin the endpoints to the configured values; √x² need not round-trip.
    betas[0] = cfg.beta_start;
    if n > 1 {
        betas[n - 1] = cfg.beta_end;
    }
    let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
    let alpha_cumprod = alphas
        .iter()
        .scan(1.0, |acc, a| {
            *acc *= a;
            Some(*acc)
        })
        .collect();
    Ok(DdimSchedule {
        betas,
        alphas,
        alpha_cumprod,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_endpoints() {
        let s = build_schedule(&DdimScheduleConfig::default()).unwrap();
        assert_eq!(s.len(), 50);
        assert_eq!(s.betas[0], 0.00085);
        assert_eq!(s.betas[49], 0.012);
        assert!(s.alpha_cumprod.windows(2).all(|w| w[1] < w[0]));
        assert!(s.alpha_cumprod.iter().all(|a| *a > 0.0 && *a < 1.0));
    }

    #[test]
    fn single_step() {
        let cfg = DdimScheduleConfig {
            steps: 1,
            ..Default::default()
        };
        assert_eq!(build_schedule(&cfg).unwrap().betas, vec![0.00085]);
    }

    #[test]
    fn linear_midpoint() {
        let cfg = DdimScheduleConfig {
            beta_schedule: BetaSchedule::Linear,
            beta_start: 0.1,
            beta_end: 0.3,
            steps: 3,
            ..Default::default()
        };
        let s = build_schedule(&cfg).unwrap();
        assert!((s.betas[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn invalid_configs() {
        let bad = DdimScheduleConfig {
            beta_start: 0.02,
            beta_end: 0.01,
            ..Default::default()
        };
        assert!(build_schedule(&bad).is_err());
        let bad = DdimScheduleConfig {
            steps: 0,
            ..Default::default()
        };
        assert!(build_schedule(&bad).is_err());
    }
}
