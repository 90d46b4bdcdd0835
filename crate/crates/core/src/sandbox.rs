//! A seeded toy generation loop that makes shared attention observable without a
//! diffusion model.
//!
//! Image 0 is a frozen reference feature map: a Gaussian content pattern with
//! per-channel style statistics applied. The generated maps start as unit-variance
//! noise correlated with the same content pattern but carrying no style. Each step applies a fixed random channel-mixing map (the
//! pseudo-denoiser), runs shared attention of every generated map against the
//! reference, and moves the map toward the attention output with a strength
//! that grows with the guidance scale and the noise level. The report tracks
//! how far each generated map's channel statistics are from the reference's.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::adain::AdainConfig;
use crate::attention::{shared_attention, QkvBlock, RescaleParams};
use crate::error::{Error, Result};
use crate::par;
use crate::schedule::{build_schedule, DdimSchedule, DdimScheduleConfig};
use crate::tensor::{channel_stats, ChannelStats, FeatureMap, Matrix};

/// Guidance values swept by [`guidance_sweep`].
pub const GUIDANCE_GRID: [f64; 6] = [5.0, 10.0, 15.0, 20.0, 25.0, 30.0];

/// Guidance scale at which a step's update strength equals its noise level.
const GUIDANCE_NORM: f64 = 10.0;
/// Magnitude of the pseudo-denoiser's deviation from identity.
const DENOISER_GAIN: f64 = 0.05;
/// Correlation between the reference's content pattern and each generated map's start.
const CONTENT_CORRELATION: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SandboxConfig {
    pub guidance_scale: f64,
    pub seed: u64,
    /// Reference image plus generated images.
    pub n_images: usize,
    pub channels: usize,
    pub positions: usize,
    pub schedule: DdimScheduleConfig,
    pub rescale: RescaleParams,
    pub eps_std: f64,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        SandboxConfig {
            guidance_scale: 10.0,
            seed: 7,
            n_images: 4,
            channels: 32,
            positions: 64,
            schedule: DdimScheduleConfig::default(),
            rescale: RescaleParams::NORMAL,
            eps_std: crate::tensor::DEFAULT_EPS_STD,
        }
    }
}

impl SandboxConfig {
    pub fn validate(&self) -> Result<()> {
        if (self.guidance_scale.is_nan() || self.guidance_scale <= 0.0)
            || !self.guidance_scale.is_finite()
        {
            return Err(Error::InvalidParameter(format!(
                "guidance_scale must be > 0, got {}",
                self.guidance_scale
            )));
        }
        if self.n_images < 2 {
            return Err(Error::InvalidParameter(
                "n_images must be >= 2 (one reference plus generated)".into(),
            ));
        }
        if self.channels < 1 || self.positions < 1 {
            return Err(Error::InvalidParameter(
                "feature shape must be at least 1x1".into(),
            ));
        }
        self.rescale.validate()?;
        self.schedule.validate()?;
        if self.eps_std.is_nan() || self.eps_std <= 0.0 {
            return Err(Error::InvalidParameter("eps_std must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandboxReport {
    pub initial_stat_distance: f64,
    pub per_step_stat_distance: Vec<f64>,
    pub per_step_ref_mass: Vec<f64>,
    pub final_ref_mass: f64,
    pub final_stat_distance: f64,
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Vec<f64> {
    (0..rows * cols)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

struct World {
    reference: Matrix,
    generated: Vec<Matrix>,
    denoise: Matrix,
    /// Shared query/key projection.
    projection: Matrix,
}

/// Tokens are stored as positions × channels matrices.
fn init_world(cfg: &SandboxConfig) -> World {
    let (c, n) = (cfg.channels, cfg.positions);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let means: Vec<f64> = (0..c).map(|_| rng.random_range(1.0..3.0)).collect();
    let stds: Vec<f64> = (0..c).map(|_| rng.random_range(1.5..2.5)).collect();
    let content = gaussian_matrix(&mut rng, n, c, 1.0);
    let reference: Vec<f64> = content
        .iter()
        .enumerate()
        .map(|(i, z)| means[i % c] + stds[i % c] * z)
        .collect();

    let rho = CONTENT_CORRELATION;
    let mix = (1.0 - rho * rho).sqrt();
    let generated = (1..cfg.n_images)
        .map(|_| {
            let noise = gaussian_matrix(&mut rng, n, c, 1.0);
            let data = content
                .iter()
                .zip(&noise)
                .map(|(a, b)| rho * a + mix * b)
                .collect();
            Matrix::from_raw(n, c, data)
        })
        .collect();

    let inv_sqrt_c = 1.0 / (c as f64).sqrt();
    let mut denoise = gaussian_matrix(&mut rng, c, c, DENOISER_GAIN * inv_sqrt_c);
    for i in 0..c {
        denoise[i * c + i] += 1.0;
    }
    let projection = gaussian_matrix(&mut rng, c, c, inv_sqrt_c);

    World {
        reference: Matrix::from_raw(n, c, reference),
        generated,
        denoise: Matrix::from_raw(c, c, denoise),
        projection: Matrix::from_raw(c, c, projection),
    }
}

fn token_stats(tokens: &Matrix, eps_std: f64) -> Result<ChannelStats> {
    channel_stats(&FeatureMap::from_matrix(tokens.transpose()), eps_std)
}

fn mean_distance(generated: &[Matrix], target: &ChannelStats, eps_std: f64) -> Result<f64> {
    let d = par::try_map_slice(generated, |g| token_stats(g, eps_std)?.distance(target))?;
    Ok(par::ordered_sum(&d) / d.len() as f64)
}

/// Queries and keys are projected from channel-centred tokens; values keep the raw tokens.
fn qkv(x: &Matrix, w: &World) -> Result<QkvBlock> {
    let (n, c) = (x.rows(), x.cols());
    let mut means = vec![0.0; c];
    for row in x.iter_rows() {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    let centred: Vec<f64> = x
        .iter_rows()
        .flat_map(|row| row.iter().zip(&means).map(move |(v, m)| v - m / n as f64))
        .collect();
    let centred = Matrix::from_raw(n, c, centred);
    Ok(QkvBlock {
        q: centred.matmul(&w.projection)?,
        k: centred.matmul(&w.projection)?,
        v: x.clone(),
    })
}

/// Update strength at schedule index `t`, clamped to 1.
pub fn step_strength(guidance: f64, schedule: &DdimSchedule, t: usize) -> f64 {
    (guidance * (1.0 - schedule.alpha_cumprod[t]) / GUIDANCE_NORM).min(1.0)
}

pub fn run_sandbox(cfg: &SandboxConfig) -> Result<SandboxReport> {
    cfg.validate()?;
    let schedule = build_schedule(&cfg.schedule)?;
    let mut world = init_world(cfg);
    let adain_cfg = AdainConfig {
        eps_std: cfg.eps_std,
    };
    let target = token_stats(&world.reference, cfg.eps_std)?;
    let reference = qkv(&world.reference, &world)?;
    let noise_max = 1.0 - schedule.alpha_cumprod[schedule.len() - 1];
    let denoise_t = world.denoise.transpose();

    let initial = mean_distance(&world.generated, &target, cfg.eps_std)?;
    let mut per_step_stat_distance = Vec::with_capacity(schedule.len());
    let mut per_step_ref_mass = Vec::with_capacity(schedule.len());

    // Sampling runs from the noisiest index down to zero.
    for t in (0..schedule.len()).rev() {
        let noise_level = (1.0 - schedule.alpha_cumprod[t]) / noise_max;
        let strength = step_strength(cfg.guidance_scale, &schedule, t);
        let w = &world;
        let stepped = par::try_map_slice(&world.generated, |x| -> Result<(Matrix, f64)> {
            let mixed = x.matmul(&denoise_t)?;
            let denoised = lerp(x, &mixed, noise_level);
            let own = qkv(&denoised, w)?;
            let shared = shared_attention(&own, &reference, cfg.rescale, &adain_cfg)?;
            Ok((lerp(&denoised, &shared.updated, strength), shared.ref_mass))
        })?;
        let (next, masses): (Vec<Matrix>, Vec<f64>) = stepped.into_iter().unzip();
        world.generated = next;
        per_step_ref_mass.push(par::ordered_sum(&masses) / masses.len() as f64);
        per_step_stat_distance.push(mean_distance(&world.generated, &target, cfg.eps_std)?);
    }

    Ok(SandboxReport {
        initial_stat_distance: initial,
        final_stat_distance: *per_step_stat_distance.last().expect("steps >= 1"),
        final_ref_mass: *per_step_ref_mass.last().expect("steps >= 1"),
        per_step_stat_distance,
        per_step_ref_mass,
    })
}

fn lerp(a: &Matrix, b: &Matrix, t: f64) -> Matrix {
    let data = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| x + t * (y - x))
        .collect();
    Matrix::from_raw(a.rows(), a.cols(), data)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub guidance_scale: f64,
    pub initial_stat_distance: f64,
    pub final_stat_distance: f64,
    pub final_ref_mass: f64,
}

/// Runs the sandbox once per guidance value, everything else fixed.
pub fn guidance_sweep(cfg: &SandboxConfig, grid: &[f64]) -> Result<Vec<SweepRow>> {
    par::try_map_slice(grid, |g| {
        let r = run_sandbox(&SandboxConfig {
            guidance_scale: *g,
            ..*cfg
        })?;
        Ok(SweepRow {
            guidance_scale: *g,
            initial_stat_distance: r.initial_stat_distance,
            final_stat_distance: r.final_stat_distance,
            final_ref_mass: r.final_ref_mass,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_config() {
        let bad = SandboxConfig {
            n_images: 1,
            ..Default::default()
        };
        assert!(run_sandbox(&bad).is_err());
        let bad = SandboxConfig {
            guidance_scale: 0.0,
            ..Default::default()
        };
        assert!(run_sandbox(&bad).is_err());
    }

    #[test]
    fn report_has_one_entry_per_step() {
        let cfg = SandboxConfig {
            schedule: DdimScheduleConfig {
                steps: 5,
                ..Default::default()
            },
            ..Default::default()
        };
        let r = run_sandbox(&cfg).unwrap();
        assert_eq!(r.per_step_stat_distance.len(), 5);
        assert!(r.final_ref_mass > 0.0 && r.final_ref_mass < 1.0);
    }

    #[test]
    fn strength_is_clamped() {
        let s = build_schedule(&DdimScheduleConfig::default()).unwrap();
        assert_eq!(step_strength(1e6, &s, 49), 1.0);
        assert!(step_strength(5.0, &s, 0) < step_strength(5.0, &s, 49));
    }
}
