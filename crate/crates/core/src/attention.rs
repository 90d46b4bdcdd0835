//! Scaled dot-product attention and the style-aligned variants built on it.
//!
//! Shared attention lets a generated image's queries attend over the reference
//! image's keys/values concatenated with its own. The reference block's logits
//! can be tempered with an affine map (`logit·σ + μ`), and multi-style attention
//! can weight each style block's logits by its relative blend weight.

use serde::{Deserialize, Serialize};

use crate::adain::{adain_rows, AdainConfig};
use crate::error::{Error, Result};
use crate::par;
use crate::tensor::{dot_slices, softmax_into, Matrix};

/// Default key-norm threshold separating "normal" from "famous" styles.
pub const DEFAULT_FAMOUS_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct AttentionInputs {
    pub q: Matrix,
    pub k: Matrix,
    pub v: Matrix,
}

impl AttentionInputs {
    pub fn new(q: Matrix, k: Matrix, v: Matrix) -> Result<Self> {
        if q.cols() != k.cols() {
            return Err(Error::DimensionMismatch {
                expected: q.cols(),
                found: k.cols(),
            });
        }
        if k.rows() != v.rows() {
            return Err(Error::DimensionMismatch {
                expected: k.rows(),
                found: v.rows(),
            });
        }
        Ok(AttentionInputs { q, k, v })
    }

    /// Identity projections: queries, keys and values are all `x`.
    pub fn from_tokens(x: &Matrix) -> Self {
        AttentionInputs {
            q: x.clone(),
            k: x.clone(),
            v: x.clone(),
        }
    }
}

/// Affine transform applied to reference-block logits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RescaleParams {
    pub mu: f64,
    pub sigma: f64,
}

impl RescaleParams {
    pub const IDENTITY: RescaleParams = RescaleParams {
        mu: 0.0,
        sigma: 1.0,
    };
    /// `{ln 2, 1}`
    pub const NORMAL: RescaleParams = RescaleParams {
        mu: std::f64::consts::LN_2,
        sigma: 1.0,
    };
    /// `{ln 1, 0.5}`
    pub const FAMOUS: RescaleParams = RescaleParams {
        mu: 0.0,
        sigma: 0.5,
    };

    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        let p = RescaleParams { mu, sigma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite()
            || (self.sigma.is_nan() || self.sigma <= 0.0)
            || !self.sigma.is_finite()
        {
            return Err(Error::InvalidParameter(format!(
                "rescale needs finite mu and sigma > 0, got mu={} sigma={}",
                self.mu, self.sigma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StyleClass {
    Normal,
    Famous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StyleClassifierConfig {
    pub threshold: f64,
    pub params_normal: RescaleParams,
    pub params_famous: RescaleParams,
}

impl Default for StyleClassifierConfig {
    fn default() -> Self {
        StyleClassifierConfig {
            threshold: DEFAULT_FAMOUS_THRESHOLD,
            params_normal: RescaleParams::NORMAL,
            params_famous: RescaleParams::FAMOUS,
        }
    }
}

impl StyleClassifierConfig {
    pub fn params_for(&self, class: StyleClass) -> RescaleParams {
        match class {
            StyleClass::Normal => self.params_normal,
            StyleClass::Famous => self.params_famous,
        }
    }
}

/// Famous iff the mean row norm of the reference keys exceeds the threshold.
pub fn classify_style(ref_keys: &Matrix, cfg: &StyleClassifierConfig) -> StyleClass {
    if ref_keys.mean_row_norm() > cfg.threshold {
        StyleClass::Famous
    } else {
        StyleClass::Normal
    }
}

/// One key/value block of a joint attention call. Its logits `q·k/√d` are
/// mapped through `logit·scale + shift` before the joint softmax.
#[derive(Debug, Clone, Copy)]
pub struct LogitBlock<'a> {
    pub keys: &'a Matrix,
    pub values: &'a Matrix,
    pub scale: f64,
    pub shift: f64,
}

impl<'a> LogitBlock<'a> {
    pub fn plain(keys: &'a Matrix, values: &'a Matrix) -> Self {
        LogitBlock {
            keys,
            values,
            scale: 1.0,
            shift: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BlockAttention {
    pub output: Matrix,
    /// Row-stochastic, columns ordered block by block.
    pub weights: Matrix,
    /// Attention probability landing on each block, averaged over query rows.
    pub block_mass: Vec<f64>,
}

/// Joint softmax attention over several key/value blocks.
pub fn block_attention(q: &Matrix, blocks: &[LogitBlock<'_>]) -> Result<BlockAttention> {
    let first = blocks
        .first()
        .ok_or_else(|| Error::EmptySet("attention needs at least one key block".into()))?;
    let d = q.cols();
    let dv = first.values.cols();
    for b in blocks {
        if b.keys.cols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: b.keys.cols(),
            });
        }
        if b.values.rows() != b.keys.rows() {
            return Err(Error::DimensionMismatch {
                expected: b.keys.rows(),
                found: b.values.rows(),
            });
        }
        if b.values.cols() != dv {
            return Err(Error::DimensionMismatch {
                expected: dv,
                found: b.values.cols(),
            });
        }
    }
    let inv_sqrt_d = 1.0 / (d as f64).sqrt();
    let total_keys: usize = blocks.iter().map(|b| b.keys.rows()).sum();

    let rows = par::map_range(q.rows(), |i| {
        let query = q.row(i);
        let mut logits = Vec::with_capacity(total_keys);
        for b in blocks {
            logits.extend(
                b.keys
                    .iter_rows()
                    .map(|k| dot_slices(query, k) * inv_sqrt_d * b.scale + b.shift),
            );
        }
        let mut weights = Vec::with_capacity(total_keys);
        softmax_into(&logits, &mut weights);

        let mut out = vec![0.0; dv];
        let mut mass = Vec::with_capacity(blocks.len());
        let mut offset = 0;
        for b in blocks {
            let w = &weights[offset..offset + b.keys.rows()];
            for (p, v) in w.iter().zip(b.values.iter_rows()) {
                for (o, x) in out.iter_mut().zip(v) {
                    *o += p * x;
                }
            }
            mass.push(w.iter().sum::<f64>());
            offset += b.keys.rows();
        }
        (weights, out, mass)
    });

    let n = q.rows();
    let mut weights = Vec::with_capacity(n * total_keys);
    let mut output = Vec::with_capacity(n * dv);
    let mut block_mass = vec![0.0; blocks.len()];
    for (w, o, m) in rows {
        weights.extend(w);
        output.extend(o);
        for (acc, x) in block_mass.iter_mut().zip(m) {
            *acc += x;
        }
    }
    for m in &mut block_mass {
        *m /= n as f64;
    }
    Ok(BlockAttention {
        output: Matrix::from_raw(n, dv, output),
        weights: Matrix::from_raw(n, total_keys, weights),
        block_mass,
    })
}

/// `softmax(Q·Kᵀ/√d)·V`, returning the output and the attention weights.
pub fn attention(inp: &AttentionInputs) -> Result<(Matrix, Matrix)> {
    let r = block_attention(&inp.q, &[LogitBlock::plain(&inp.k, &inp.v)])?;
    Ok((r.output, r.weights))
}

/// Query/key/value projections for one image.
#[derive(Debug, Clone)]
pub struct QkvBlock {
    pub q: Matrix,
    pub k: Matrix,
    pub v: Matrix,
}

impl QkvBlock {
    pub fn from_tokens(x: &Matrix) -> Self {
        QkvBlock {
            q: x.clone(),
            k: x.clone(),
            v: x.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SharedAttentionOutput {
    pub updated: Matrix,
    /// Columns: reference keys first, then self keys (or style blocks in order).
    pub weights: Matrix,
    /// Mean attention probability on reference keys.
    pub ref_mass: f64,
    pub block_mass: Vec<f64>,
}

/// Style-aligned shared attention.
///
/// Self queries and keys are AdaIN-normalised against the reference's, then
/// attend over `[K_ref ‖ K̂_self]` with values `[V_ref ‖ V_self]`. Only the
/// reference logits go through `rescale`.
pub fn shared_attention(
    own: &QkvBlock,
    reference: &QkvBlock,
    rescale: RescaleParams,
    adain_cfg: &AdainConfig,
) -> Result<SharedAttentionOutput> {
    rescale.validate()?;
    let q_hat = adain_rows(&own.q, &reference.q, adain_cfg)?;
    let k_hat = adain_rows(&own.k, &reference.k, adain_cfg)?;
    let blocks = [
        LogitBlock {
            keys: &reference.k,
            values: &reference.v,
            scale: rescale.sigma,
            shift: rescale.mu,
        },
        LogitBlock::plain(&k_hat, &own.v),
    ];
    let r = block_attention(&q_hat, &blocks)?;
    Ok(SharedAttentionOutput {
        updated: r.output,
        weights: r.weights,
        ref_mass: r.block_mass[0],
        block_mass: r.block_mass,
    })
}

#[derive(Debug, Clone)]
pub struct StyleBlock {
    pub keys: Matrix,
    pub values: Matrix,
    pub weight: f64,
}

/// `λᵢ = wᵢ / Σⱼ wⱼ`
pub fn lambda_weights(weights: &[f64]) -> Result<Vec<f64>> {
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(Error::InvalidWeight(*w));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::AllZeroWeights);
    }
    Ok(weights.iter().map(|w| w / total).collect())
}

/// Multi-style attention where block `i`'s logits are scaled by `λᵢ` before a
/// joint softmax. `ref_mass` is always 1 here; see `block_mass`.
pub fn lambda_rescaled_attention(
    q: &Matrix,
    styles: &[StyleBlock],
) -> Result<SharedAttentionOutput> {
    if styles.is_empty() {
        return Err(Error::EmptySet("need at least one style block".into()));
    }
    let lambdas = lambda_weights(&styles.iter().map(|s| s.weight).collect::<Vec<_>>())?;
    let blocks: Vec<LogitBlock<'_>> = styles
        .iter()
        .zip(&lambdas)
        .map(|(s, l)| LogitBlock {
            keys: &s.keys,
            values: &s.values,
            scale: *l,
            shift: 0.0,
        })
        .collect();
    let r = block_attention(q, &blocks)?;
    Ok(SharedAttentionOutput {
        updated: r.output,
        weights: r.weights,
        ref_mass: r.block_mass.iter().sum(),
        block_mass: r.block_mass,
    })
}

/// Shannon entropy (nats) of each attention row.
pub fn row_entropy(weights: &Matrix) -> Vec<f64> {
    weights
        .iter_rows()
        .map(|r| {
            -r.iter()
                .filter(|p| **p > 0.0)
                .map(|p| p * p.ln())
                .sum::<f64>()
        })
        .collect()
}
