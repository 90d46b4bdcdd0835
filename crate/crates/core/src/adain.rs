//! Adaptive instance normalization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{slice_stats, FeatureMap, Matrix, DEFAULT_EPS_STD};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdainConfig {
    /// Floor applied to every standard deviation.
    pub eps_std: f64,
}

impl Default for AdainConfig {
    fn default() -> Self {
        AdainConfig {
            eps_std: DEFAULT_EPS_STD,
        }
    }
}

impl AdainConfig {
    fn validate(&self) -> Result<()> {
        if self.eps_std > 0.0 && self.eps_std.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "eps_std must be positive, got {}",
                self.eps_std
            )))
        }
    }
}

/// Re-standardises each channel of `g` to the mean and std of the matching
/// channel of `s`. Spatial sizes may differ; the output has `g`'s shape.
pub fn adain(g: &FeatureMap, s: &FeatureMap, cfg: &AdainConfig) -> Result<FeatureMap> {
    cfg.validate()?;
    if g.channels() != s.channels() {
        return Err(Error::ChannelMismatch {
            expected: g.channels(),
            found: s.channels(),
        });
    }
    let mut out = Vec::with_capacity(g.as_slice().len());
    for c in 0..g.channels() {
        let (g_mean, g_std) = slice_stats(g.channel(c), cfg.eps_std);
        let (s_mean, s_std) = slice_stats(s.channel(c), cfg.eps_std);
        out.extend(
            g.channel(c)
                .iter()
                .map(|v| s_std * (v - g_mean) / g_std + s_mean),
        );
    }
    FeatureMap::new(g.channels(), g.positions(), out)
}

/// AdaIN over token matrices: columns are channels, rows are positions.
pub fn adain_rows(x: &Matrix, reference: &Matrix, cfg: &AdainConfig) -> Result<Matrix> {
    if x.cols() != reference.cols() {
        return Err(Error::DimensionMismatch {
            expected: x.cols(),
            found: reference.cols(),
        });
    }
    let g = FeatureMap::from_matrix(x.transpose());
    let s = FeatureMap::from_matrix(reference.transpose());
    Ok(adain(&g, &s, cfg)?.into_matrix().transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::channel_stats;

    fn cfg() -> AdainConfig {
        AdainConfig::default()
    }

    #[test]
    fn self_normalization() {
        let g = FeatureMap::from_channels(&[vec![1.0, 4.0, -2.0], vec![0.5, 0.25, 3.0]]).unwrap();
        let out = adain(&g, &g, &cfg()).unwrap();
        let (a, b) = (
            channel_stats(&out, 1e-5).unwrap(),
            channel_stats(&g, 1e-5).unwrap(),
        );
        for c in 0..2 {
            assert!((a.mean[c] - b.mean[c]).abs() < 1e-9);
            assert!((a.std[c] - b.std[c]).abs() < 1e-9);
        }
    }

    #[test]
    fn affine_identity() {
        let g = FeatureMap::new(1, 4, vec![-1.0, 1.0, -1.0, 1.0]).unwrap();
        // mean 3, population std 2
        let s = FeatureMap::new(1, 2, vec![1.0, 5.0]).unwrap();
        let out = adain(&g, &s, &cfg()).unwrap();
        for (o, x) in out.as_slice().iter().zip(g.as_slice()) {
            assert!((o - (2.0 * x + 3.0)).abs() < 1e-12);
        }
        assert_eq!(out.positions(), 4);
    }

    #[test]
    fn two_point_example() {
        let g = FeatureMap::new(1, 2, vec![1.0, 3.0]).unwrap();
        let s = FeatureMap::new(1, 2, vec![10.0, 14.0]).unwrap();
        assert_eq!(adain(&g, &s, &cfg()).unwrap().as_slice(), &[10.0, 14.0]);
    }

    #[test]
    fn channel_mismatch() {
        let g = FeatureMap::new(2, 1, vec![1.0, 2.0]).unwrap();
        let s = FeatureMap::new(1, 2, vec![1.0, 2.0]).unwrap();
        assert!(matches!(
            adain(&g, &s, &cfg()),
            Err(Error::ChannelMismatch { .. })
        ));
    }

    #[test]
    fn rows_examples() {
        let x = Matrix::from_rows(&[vec![0.0], vec![2.0]]).unwrap();
        let r = Matrix::from_rows(&[vec![5.0], vec![9.0]]).unwrap();
        assert_eq!(adain_rows(&x, &r, &cfg()).unwrap().as_slice(), &[5.0, 9.0]);

        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 2.0]]).unwrap();
        let bad = Matrix::from_rows(&[vec![1.0]]).unwrap();
        assert!(adain_rows(&x, &bad, &cfg()).is_err());
    }

    #[test]
    fn constant_reference_collapses_to_row() {
        let x = Matrix::from_rows(&[vec![1.0, -4.0], vec![2.0, 0.0], vec![6.0, 1.0]]).unwrap();
        let r = Matrix::from_rows(&[vec![0.5, 7.0], vec![0.5, 7.0]]).unwrap();
        let out = adain_rows(&x, &r, &cfg()).unwrap();
        let xt = FeatureMap::from_matrix(x.transpose());
        let stats = channel_stats(&xt, 1e-5).unwrap();
        for j in 0..2 {
            let max_z = xt
                .channel(j)
                .iter()
                .map(|v| ((v - stats.mean[j]) / stats.std[j]).abs())
                .fold(0.0, f64::max);
            for i in 0..3 {
                assert!((out.get(i, j) - r.get(0, j)).abs() <= 1e-5 * max_z + 1e-15);
            }
        }
    }
}
