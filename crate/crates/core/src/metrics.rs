//! Cosine-similarity style metrics over embedding sets.
//!
//! `MS` is the mean cosine similarity between a set of generated embeddings and
//! one reference embedding; `WMS` is the blend-weighted sum of the per-style MS
//! values.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::par;
use crate::tensor::LatentVector;

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &LatentVector, b: &LatentVector) -> Result<f64> {
    let dot = a.dot(b)?;
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Mean of `cosine_similarity(g, reference)` over `generated`, summed in order.
pub fn mean_similarity(generated: &[LatentVector], reference: &LatentVector) -> Result<f64> {
    if generated.is_empty() {
        return Err(Error::EmptySet("generated embedding set is empty".into()));
    }
    let sims = par::try_map_range(generated.len(), |i| {
        cosine_similarity(&generated[i], reference)
    })?;
    Ok(par::ordered_sum(&sims) / generated.len() as f64)
}

/// `Σ wᵢ·msᵢ` with weights used as given.
pub fn weighted_score(ms: &[f64], weights: &[f64]) -> Result<f64> {
    if ms.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: ms.len(),
            found: weights.len(),
        });
    }
    Ok(ms.iter().zip(weights).fold(0.0, |acc, (m, w)| acc + m * w))
}

/// Largest pairwise gap `max |MSᵢ − MSⱼ|`; zero for a single style.
pub fn ms_gap(ms: &[f64]) -> f64 {
    let max = ms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = ms.iter().copied().fold(f64::INFINITY, f64::min);
    if ms.is_empty() {
        0.0
    } else {
        max - min
    }
}

fn normalized(weights: &[f64]) -> Result<Vec<f64>> {
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(Error::InvalidWeight(*w));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::AllZeroWeights);
    }
    Ok(weights.iter().map(|w| w / total).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceStyle {
    pub name: String,
    pub embedding: LatentVector,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub generated: Vec<LatentVector>,
    pub references: Vec<ReferenceStyle>,
}

impl EmbeddingSet {
    pub fn new(generated: Vec<LatentVector>, references: Vec<ReferenceStyle>) -> Result<Self> {
        if generated.is_empty() {
            return Err(Error::EmptySet("generated embedding set is empty".into()));
        }
        if references.is_empty() {
            return Err(Error::EmptySet("no reference styles".into()));
        }
        let dim = generated[0].dim();
        let all = generated
            .iter()
            .chain(references.iter().map(|r| &r.embedding));
        for v in all {
            if v.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: v.dim(),
                });
            }
            if v.is_zero() {
                return Err(Error::ZeroVector);
            }
        }
        normalized(&references.iter().map(|r| r.weight).collect::<Vec<_>>())?;
        Ok(EmbeddingSet {
            generated,
            references,
        })
    }

    pub fn with_weights(&self, weights: &[f64]) -> Result<EmbeddingSet> {
        if weights.len() != self.references.len() {
            return Err(Error::DimensionMismatch {
                expected: self.references.len(),
                found: weights.len(),
            });
        }
        let references = self
            .references
            .iter()
            .zip(weights)
            .map(|(r, w)| ReferenceStyle {
                weight: *w,
                ..r.clone()
            })
            .collect();
        EmbeddingSet::new(self.generated.clone(), references)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StyleScore {
    pub name: String,
    pub weight: f64,
    pub ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WmsReport {
    pub per_style: Vec<StyleScore>,
    pub wms: f64,
    pub ms_gap: f64,
}

impl WmsReport {
    pub fn ms(&self, name: &str) -> Option<f64> {
        self.per_style.iter().find(|s| s.name == name).map(|s| s.ms)
    }
}

/// Per-style mean similarities and their weighted sum. Weights are normalised
/// to sum to one first.
pub fn wms_score(es: &EmbeddingSet) -> Result<WmsReport> {
    let weights = normalized(&es.references.iter().map(|r| r.weight).collect::<Vec<_>>())?;
    let ms = par::try_map_range(es.references.len(), |i| {
        mean_similarity(&es.generated, &es.references[i].embedding)
    })?;
    Ok(report_from_ms(
        es.references.iter().map(|r| r.name.clone()),
        &ms,
        &weights,
    ))
}

/// Builds a report straight from per-style MS values, for when the
/// similarities were measured elsewhere.
pub fn wms_from_ms(names: &[&str], ms: &[f64], weights: &[f64]) -> Result<WmsReport> {
    if names.len() != ms.len() {
        return Err(Error::DimensionMismatch {
            expected: ms.len(),
            found: names.len(),
        });
    }
    let weights = normalized(weights)?;
    weighted_score(ms, &weights)?;
    Ok(report_from_ms(
        names.iter().map(|n| n.to_string()),
        ms,
        &weights,
    ))
}

fn report_from_ms(names: impl Iterator<Item = String>, ms: &[f64], weights: &[f64]) -> WmsReport {
    let wms = ms.iter().zip(weights).fold(0.0, |acc, (m, w)| acc + m * w);
    WmsReport {
        per_style: names
            .zip(ms.iter().zip(weights))
            .map(|(name, (ms, weight))| StyleScore {
                name,
                weight: *weight,
                ms: *ms,
            })
            .collect(),
        wms,
        ms_gap: ms_gap(ms),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoreDropBound {
    pub wms: f64,
    pub max_ms: f64,
    pub holds: bool,
}

/// The weighted multi-style score never exceeds the best single-style MS.
pub fn score_drop_bound(es: &EmbeddingSet) -> Result<ScoreDropBound> {
    let report = wms_score(es)?;
    let max_ms = report
        .per_style
        .iter()
        .map(|s| s.ms)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(ScoreDropBound {
        wms: report.wms,
        max_ms,
        holds: report.wms <= max_ms + 1e-12,
    })
}
