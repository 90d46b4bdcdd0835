#![allow(dead_code)]

use lbk::{LatentVector, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

pub fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> LatentVector {
    loop {
        let v = gaussian(rng, dim);
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return LatentVector::new(v.iter().map(|x| x / n).collect()).unwrap();
        }
    }
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = gaussian(rng, rows * cols)
        .into_iter()
        .map(|x| x * scale)
        .collect();
    Matrix::new(rows, cols, data).unwrap()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Geodesic interpolation between unit vectors built from an explicit
/// orthonormal frame: `cos(tω) u + sin(tω) v` with `v ⟂ u` in the plane of the
/// two inputs.
pub fn frame_slerp(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    let na = norm(a);
    let u: Vec<f64> = a.iter().map(|x| x / na).collect();
    let proj = dot(b, &u);
    let perp: Vec<f64> = b.iter().zip(&u).map(|(x, y)| x - proj * y).collect();
    let np = norm(&perp);
    let omega = np.atan2(proj);
    if np == 0.0 {
        return u;
    }
    let v: Vec<f64> = perp.iter().map(|x| x / np).collect();
    let (s, c) = (t * omega).sin_cos();
    u.iter().zip(&v).map(|(x, y)| c * x + s * y).collect()
}

/// Scaled dot-product attention evaluated one row at a time, with no
/// stabilising max shift beyond what is needed for f64 range.
pub fn naive_attention(
    q: &[Vec<f64>],
    keys: &[Vec<f64>],
    values: &[Vec<f64>],
    logit_map: impl Fn(usize, f64) -> f64,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let d = q[0].len() as f64;
    let mut outs = Vec::new();
    let mut weights = Vec::new();
    for qi in q {
        let logits: Vec<f64> = keys
            .iter()
            .enumerate()
            .map(|(j, k)| logit_map(j, dot(qi, k) / d.sqrt()))
            .collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let z: f64 = e.iter().sum();
        let w: Vec<f64> = e.iter().map(|x| x / z).collect();
        let mut o = vec![0.0; values[0].len()];
        for (wj, vj) in w.iter().zip(values) {
            for (oc, vc) in o.iter_mut().zip(vj) {
                *oc += wj * vc;
            }
        }
        outs.push(o);
        weights.push(w);
    }
    (outs, weights)
}

/// Population mean and standard deviation, two-pass.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.iter_rows().map(|r| r.to_vec()).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
