mod common;

use lbk::adain::{adain, AdainConfig};
use lbk::attention::{block_attention, LogitBlock};
use lbk::blend::{
    chord_and_arc, linear_blend, slerp_pair, sli_blend, StyleEntry, WeightedStyleSet,
    DEFAULT_EPS_OMEGA,
};
use lbk::io::npy::{decode, encode, Dtype, NpyArray};
use lbk::metrics::{cosine_similarity, wms_from_ms};
use lbk::tensor::DEFAULT_EPS_STD;
use lbk::{channel_stats, softmax_rows, FeatureMap, LatentVector, Matrix};
use proptest::prelude::*;

fn finite_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, len)
}

fn nonzero_vec(len: usize) -> impl Strategy<Value = LatentVector> {
    finite_vec(len)
        .prop_filter("non-zero", |v| common::norm(v) > 1e-3)
        .prop_map(|v| LatentVector::new(v).unwrap())
}

fn unit_vec(len: usize) -> impl Strategy<Value = LatentVector> {
    nonzero_vec(len).prop_map(|v| {
        let n = v.norm();
        v.scale(1.0 / n)
    })
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    finite_vec(rows * cols).prop_map(move |d| Matrix::new(rows, cols, d).unwrap())
}

fn angle(a: &LatentVector, b: &LatentVector) -> f64 {
    let c = a.dot(b).unwrap() / (a.norm() * b.norm());
    c.clamp(-1.0, 1.0).acos()
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(m in (1usize..6, 1usize..9).prop_flat_map(|(r, c)| matrix(r, c))) {
        let s = softmax_rows(&m);
        for row in s.iter_rows() {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }

    #[test]
    fn softmax_ignores_row_shift(m in matrix(3, 5), shift in -50.0..50.0f64) {
        let shifted = Matrix::new(3, 5, m.as_slice().iter().map(|v| v + shift).collect()).unwrap();
        let a = softmax_rows(&m);
        let b = softmax_rows(&shifted);
        prop_assert!(common::max_abs_diff(a.as_slice(), b.as_slice()) < 1e-12);
    }

    #[test]
    fn channel_stats_shift(data in finite_vec(3 * 7), offset in -5.0..5.0f64) {
        let f = FeatureMap::new(3, 7, data.clone()).unwrap();
        let g = FeatureMap::new(3, 7, data.iter().map(|v| v + offset).collect()).unwrap();
        let a = channel_stats(&f, DEFAULT_EPS_STD).unwrap();
        let b = channel_stats(&g, DEFAULT_EPS_STD).unwrap();
        for c in 0..3 {
            prop_assert!((b.mean[c] - a.mean[c] - offset).abs() < 1e-9);
            prop_assert!((b.std[c] - a.std[c]).abs() < 1e-9);
        }
    }

    #[test]
    fn cosine_is_bounded_and_scale_invariant(
        a in nonzero_vec(6),
        b in nonzero_vec(6),
        s in 0.01..100.0f64,
    ) {
        let c = cosine_similarity(&a, &b).unwrap();
        prop_assert!((-1.0..=1.0).contains(&c));
        let cs = cosine_similarity(&a.scale(s), &b).unwrap();
        prop_assert!((c - cs).abs() < 1e-12);
    }

    #[test]
    fn slerp_endpoints_are_exact(a in nonzero_vec(5), b in nonzero_vec(5)) {
        prop_assume!(std::f64::consts::PI - angle(&a, &b) > 1e-6);
        let (start, _) = slerp_pair(&a, &b, 0.0, DEFAULT_EPS_OMEGA).unwrap();
        let (end, _) = slerp_pair(&a, &b, 1.0, DEFAULT_EPS_OMEGA).unwrap();
        prop_assert_eq!(start, a);
        prop_assert_eq!(end, b);
    }

    #[test]
    fn slerp_follows_the_great_circle(a in unit_vec(4), b in unit_vec(4), t in 0.0..=1.0f64) {
        let omega = angle(&a, &b);
        prop_assume!(std::f64::consts::PI - omega > 1e-3);
        let (z, w) = slerp_pair(&a, &b, t, DEFAULT_EPS_OMEGA).unwrap();
        prop_assert!((z.norm() - 1.0).abs() < 1e-9);
        prop_assert!((w - omega).abs() < 1e-12);
        let expected = common::frame_slerp(a.as_slice(), b.as_slice(), t);
        prop_assert!(common::max_abs_diff(z.as_slice(), &expected) < 1e-9);
        // Angle from the start grows linearly in t.
        prop_assert!((angle(&a, &z) - t * omega).abs() < 1e-6);
    }

    #[test]
    fn chord_never_exceeds_arc(a in nonzero_vec(3), b in nonzero_vec(3)) {
        let (chord, arc) = chord_and_arc(&a, &b).unwrap();
        prop_assert!(chord <= arc + 1e-15);
    }

    #[test]
    fn linear_blend_shrinks_distinct_unit_inputs(
        a in unit_vec(4),
        b in unit_vec(4),
        w in 0.01..0.99f64,
    ) {
        prop_assume!(angle(&a, &b) > 1e-4);
        let set = WeightedStyleSet::new(vec![(a, w), (b, 1.0 - w)]).unwrap();
        prop_assert!(linear_blend(&set).unwrap().vector.norm() < 1.0);
    }

    #[test]
    fn two_way_sli_is_one_slerp(a in unit_vec(4), b in unit_vec(4), wa in 0.0..1.0f64, wb in 0.0..1.0f64) {
        prop_assume!(wa + wb > 0.0);
        prop_assume!(std::f64::consts::PI - angle(&a, &b) > 1e-6);
        let set = WeightedStyleSet::new(vec![(a.clone(), wa), (b.clone(), wb)]).unwrap();
        let r = sli_blend(&set, DEFAULT_EPS_OMEGA).unwrap();
        let (heavy, light, wl) = if wa >= wb { (&a, &b, wb) } else { (&b, &a, wa) };
        let (expected, _) = slerp_pair(heavy, light, wl / (wa + wb), DEFAULT_EPS_OMEGA).unwrap();
        prop_assert_eq!(r.vector, expected);
    }

    #[test]
    fn sli_ignores_input_order(
        vs in prop::collection::vec(unit_vec(5), 2..6),
        ws in prop::collection::vec(0.05..1.0f64, 6),
        rot in 0usize..6,
    ) {
        let entries: Vec<StyleEntry> = vs
            .into_iter()
            .zip(ws)
            .enumerate()
            .map(|(i, (vector, weight))| StyleEntry { vector, weight, source_index: i })
            .collect();
        let mut rotated = entries.clone();
        let len = rotated.len();
        rotated.rotate_left(rot % len);
        rotated.reverse();
        let a = sli_blend(&WeightedStyleSet::from_entries(entries).unwrap(), DEFAULT_EPS_OMEGA);
        let b = sli_blend(&WeightedStyleSet::from_entries(rotated).unwrap(), DEFAULT_EPS_OMEGA);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(a.vector, b.vector);
                prop_assert_eq!(a.order_used, b.order_used);
            }
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "order changed success"),
        }
    }

    #[test]
    fn adain_transfers_statistics(g in finite_vec(4 * 9), s in finite_vec(4 * 6)) {
        let g = FeatureMap::new(4, 9, g).unwrap();
        let s = FeatureMap::new(4, 6, s).unwrap();
        let cfg = AdainConfig::default();
        let out = adain(&g, &s, &cfg).unwrap();
        let got = channel_stats(&out, cfg.eps_std).unwrap();
        let want = channel_stats(&s, cfg.eps_std).unwrap();
        let g_stats = channel_stats(&g, cfg.eps_std).unwrap();
        for c in 0..4 {
            prop_assert!((got.mean[c] - want.mean[c]).abs() < 1e-9);
            // Only meaningful when the source channel is not floored.
            if g_stats.std[c] > 1e-3 && want.std[c] > 1e-3 {
                prop_assert!((got.std[c] / want.std[c] - 1.0).abs() < 1e-6);
            }
        }
        let again = adain(&out, &s, &cfg).unwrap();
        prop_assert!(common::max_abs_diff(again.as_slice(), out.as_slice()) < 1e-9);
    }

    #[test]
    fn attention_ignores_uniform_logit_shift(
        q in matrix(3, 4),
        k1 in matrix(5, 4),
        k2 in matrix(2, 4),
        shift in -20.0..20.0f64,
    ) {
        let v1 = k1.clone();
        let v2 = k2.clone();
        let plain = block_attention(&q, &[LogitBlock::plain(&k1, &v1), LogitBlock::plain(&k2, &v2)]).unwrap();
        let shifted = block_attention(&q, &[
            LogitBlock { shift, ..LogitBlock::plain(&k1, &v1) },
            LogitBlock { shift, ..LogitBlock::plain(&k2, &v2) },
        ]).unwrap();
        prop_assert!(common::max_abs_diff(plain.weights.as_slice(), shifted.weights.as_slice()) < 1e-9);
        prop_assert!(common::max_abs_diff(plain.output.as_slice(), shifted.output.as_slice()) < 1e-9);
    }

    #[test]
    fn attention_matches_naive_rows(q in matrix(3, 4), k in matrix(6, 4), v in matrix(6, 2), scale in 0.1..3.0f64, shift in -2.0..2.0f64) {
        let r = block_attention(&q, &[LogitBlock { keys: &k, values: &v, scale, shift }]).unwrap();
        let (out, w) = common::naive_attention(&common::rows(&q), &common::rows(&k), &common::rows(&v), |_, l| l * scale + shift);
        prop_assert!(common::max_abs_diff(r.output.as_slice(), &out.concat()) < 1e-9);
        prop_assert!(common::max_abs_diff(r.weights.as_slice(), &w.concat()) < 1e-12);
    }

    #[test]
    fn reference_mass_grows_with_shift(q in matrix(2, 3), k in matrix(4, 3), own in matrix(4, 3), mu in -3.0..3.0f64, step in 0.01..2.0f64) {
        let mass = |m: f64| {
            block_attention(&q, &[
                LogitBlock { shift: m, ..LogitBlock::plain(&k, &k) },
                LogitBlock::plain(&own, &own),
            ]).unwrap().block_mass[0]
        };
        prop_assert!(mass(mu + step) >= mass(mu));
    }

    #[test]
    fn wms_is_the_weighted_mean(ms in prop::collection::vec(-1.0..1.0f64, 1..6), raw in prop::collection::vec(0.01..1.0f64, 6)) {
        let w = &raw[..ms.len()];
        let total: f64 = w.iter().sum();
        let names: Vec<String> = (0..ms.len()).map(|i| format!("s{i}")).collect();
        let names: Vec<&str> = names.iter().map(String::as_str).collect();
        let r = wms_from_ms(&names, &ms, w).unwrap();
        let expected: f64 = ms.iter().zip(w).map(|(m, w)| m * w / total).sum();
        prop_assert!((r.wms - expected).abs() < 1e-12);
        let lo = ms.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(r.wms >= lo - 1e-12 && r.wms <= hi + 1e-12);
        prop_assert!((r.ms_gap - (hi - lo)).abs() < 1e-15);
    }

    #[test]
    fn npy_round_trip(
        (shape, data) in prop::collection::vec(1usize..5, 1..=2)
            .prop_flat_map(|shape| {
                let n: usize = shape.iter().product();
                (Just(shape), prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), n))
            })
    ) {
        let a = NpyArray::new(shape.clone(), data.clone()).unwrap();
        let back = decode(&encode(&a, Dtype::F8)).unwrap();
        prop_assert_eq!(back.shape(), &shape[..]);
        prop_assert_eq!(back.data(), &data[..]);

        let narrow: Vec<f64> = data.iter().map(|v| (*v as f32) as f64).filter(|v| v.is_finite()).collect();
        prop_assume!(narrow.len() == data.len());
        let a = NpyArray::new(shape, narrow.clone()).unwrap();
        let back = decode(&encode(&a, Dtype::F4)).unwrap();
        prop_assert_eq!(back.data(), &narrow[..]);
    }
}

#[test]
fn folding_order_changes_the_result() {
    let e = |i| LatentVector::basis(3, i).unwrap();
    let set = WeightedStyleSet::new(vec![(e(0), 0.5), (e(1), 0.3), (e(2), 0.2)]).unwrap();
    let reordered = WeightedStyleSet::new(vec![(e(2), 0.2), (e(1), 0.3), (e(0), 0.5)]).unwrap();
    let a = lbk::blend::sli_blend_in_order(&set, DEFAULT_EPS_OMEGA).unwrap();
    let b = lbk::blend::sli_blend_in_order(&reordered, DEFAULT_EPS_OMEGA).unwrap();
    assert!(common::max_abs_diff(a.vector.as_slice(), b.vector.as_slice()) > 1e-3);
    // The sorted fold does not care.
    let c = sli_blend(&set, DEFAULT_EPS_OMEGA).unwrap();
    let d = sli_blend(&reordered, DEFAULT_EPS_OMEGA).unwrap();
    assert_eq!(a.vector, c.vector);
    assert_eq!(c.vector, d.vector);
}
