//! Weighted blending of latent style vectors.
//!
//! Two schemes are provided: a plain weighted sum ([`linear_blend`]) and a
//! spherical scheme ([`sli_blend`]) that folds the styles in one at a time along
//! great-circle arcs, heaviest weight first.

use std::cmp::Ordering;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::LatentVector;

/// Below this angle (radians) the spherical formula falls back to lerp.
pub const DEFAULT_EPS_OMEGA: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct StyleEntry {
    pub vector: LatentVector,
    pub weight: f64,
    pub source_index: usize,
}

/// Ordered (vector, weight) pairs sharing one dimension, with at least one
/// positive weight.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedStyleSet {
    entries: Vec<StyleEntry>,
}

impl WeightedStyleSet {
    /// Builds a set whose source indices are the input positions.
    pub fn new(styles: Vec<(LatentVector, f64)>) -> Result<Self> {
        Self::from_entries(
            styles
                .into_iter()
                .enumerate()
                .map(|(source_index, (vector, weight))| StyleEntry {
                    vector,
                    weight,
                    source_index,
                })
                .collect(),
        )
    }

    pub fn from_entries(entries: Vec<StyleEntry>) -> Result<Self> {
        let first = entries
            .first()
            .ok_or_else(|| Error::EmptySet("style set has no entries".into()))?;
        let dim = first.vector.dim();
        for e in &entries {
            if e.vector.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: e.vector.dim(),
                });
            }
            if !e.weight.is_finite() || e.weight < 0.0 {
                return Err(Error::InvalidWeight(e.weight));
            }
        }
        if entries.iter().all(|e| e.weight == 0.0) {
            return Err(Error::AllZeroWeights);
        }
        Ok(WeightedStyleSet { entries })
    }

    pub fn entries(&self) -> &[StyleEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.weight).collect()
    }

    pub fn total_weight(&self) -> f64 {
        self.entries.iter().map(|e| e.weight).sum()
    }

    /// Scales weights to sum to one; order and vectors are untouched.
    pub fn normalize_weights(&self) -> Result<WeightedStyleSet> {
        let total = self.total_weight();
        if total <= 0.0 {
            return Err(Error::AllZeroWeights);
        }
        Ok(WeightedStyleSet {
            entries: self
                .entries
                .iter()
                .map(|e| StyleEntry {
                    weight: e.weight / total,
                    ..e.clone()
                })
                .collect(),
        })
    }

    /// Entries sorted by weight descending, ties by ascending source index.
    pub fn sorted_by_weight(&self) -> Vec<&StyleEntry> {
        let mut sorted: Vec<&StyleEntry> = self.entries.iter().collect();
        sorted.sort_by(|a, b| {
            b.weight
                .partial_cmp(&a.weight)
                .unwrap_or(Ordering::Equal)
                .then(a.source_index.cmp(&b.source_index))
        });
        sorted
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlendMethod {
    Linear,
    Sli,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlendResult {
    pub vector: LatentVector,
    pub method: BlendMethod,
    pub order_used: Vec<usize>,
    /// Angle of each pairwise spherical step, radians. Empty for linear blends.
    pub omega_trace: Vec<f64>,
}

/// Weighted sum `Σ wᵢ zᵢ` in source order. Weights are used as given; call
/// [`WeightedStyleSet::normalize_weights`] first for a convex combination.
pub fn linear_blend(set: &WeightedStyleSet) -> Result<BlendResult> {
    let entries = set.entries();
    let dim = entries[0].vector.dim();
    let mut acc = vec![0.0; dim];
    for e in entries {
        for (a, z) in acc.iter_mut().zip(e.vector.as_slice()) {
            *a += e.weight * z;
        }
    }
    Ok(BlendResult {
        vector: LatentVector::new(acc)?,
        method: BlendMethod::Linear,
        order_used: entries.iter().map(|e| e.source_index).collect(),
        omega_trace: Vec::new(),
    })
}

/// Angle between the directions of two nonzero vectors, in `[0, π]`.
pub fn angle_between(z1: &LatentVector, z2: &LatentVector) -> Result<f64> {
    let dot = z1.dot(z2)?;
    let (n1, n2) = (z1.norm(), z2.norm());
    if n1 == 0.0 || n2 == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot / (n1 * n2)).clamp(-1.0, 1.0).acos())
}

/// Spherical interpolation from `z1` (t = 0) to `z2` (t = 1).
///
/// The angle comes from the normalised directions but the sine weights are
/// applied to the raw vectors, so magnitudes interpolate sinusoidally too.
/// Nearly parallel inputs (ω < `eps_omega`) fall back to lerp; nearly
/// antipodal ones are rejected.
pub fn slerp_pair(
    z1: &LatentVector,
    z2: &LatentVector,
    t: f64,
    eps_omega: f64,
) -> Result<(LatentVector, f64)> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidParameter(format!(
            "t must lie in [0, 1], got {t}"
        )));
    }
    if eps_omega.is_nan() || eps_omega <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "eps_omega must be positive, got {eps_omega}"
        )));
    }
    let omega = angle_between(z1, z2)?;
    if PI - omega < eps_omega {
        return Err(Error::AntipodalVectors { omega });
    }
    // Endpoints are returned verbatim so they are bit-identical to the inputs.
    if t == 0.0 {
        return Ok((z1.clone(), omega));
    }
    if t == 1.0 {
        return Ok((z2.clone(), omega));
    }
    let out = if omega < eps_omega {
        z1.combine(1.0 - t, z2, t)?
    } else {
        let s = omega.sin();
        z1.combine(((1.0 - t) * omega).sin() / s, z2, (t * omega).sin() / s)?
    };
    Ok((out, omega))
}

/// k-way spherical blend: styles sorted by descending weight, then folded in
/// with `t = w_{i+1} / Σ_{m ≤ i+1} w_m`.
pub fn sli_blend(set: &WeightedStyleSet, eps_omega: f64) -> Result<BlendResult> {
    let sorted = set.sorted_by_weight();
    fold_sli(&sorted, eps_omega)
}

/// Folds entries in the given order without sorting. Exposed so callers can
/// observe that the spherical fold is order dependent.
pub fn sli_blend_in_order(set: &WeightedStyleSet, eps_omega: f64) -> Result<BlendResult> {
    let entries: Vec<&StyleEntry> = set.entries().iter().collect();
    fold_sli(&entries, eps_omega)
}

fn fold_sli(order: &[&StyleEntry], eps_omega: f64) -> Result<BlendResult> {
    let first = order[0];
    let mut cumulative = first.vector.clone();
    let mut running = first.weight;
    let mut omega_trace = Vec::with_capacity(order.len().saturating_sub(1));
    for entry in &order[1..] {
        running += entry.weight;
        let t = if running > 0.0 {
            entry.weight / running
        } else {
            0.0
        };
        let (next, omega) =
            slerp_pair(&cumulative, &entry.vector, t, eps_omega).map_err(|e| Error::AtStyle {
                source_index: entry.source_index,
                inner: Box::new(e),
            })?;
        cumulative = next;
        omega_trace.push(omega);
    }
    Ok(BlendResult {
        vector: cumulative,
        method: BlendMethod::Sli,
        order_used: order.iter().map(|e| e.source_index).collect(),
        omega_trace,
    })
}

/// Chord length `2 sin(ω/2)` and arc length `ω` between the directions of two
/// vectors on the unit sphere.
pub fn chord_and_arc(z1: &LatentVector, z2: &LatentVector) -> Result<(f64, f64)> {
    let omega = angle_between(z1, z2)?;
    Ok((2.0 * (omega / 2.0).sin(), omega))
}
