use maskgen_core::dataset::{SamplerWeights, WeightedSampler};
use maskgen_core::eval::{
    class_distribution, extract_features, frechet_distance, total_variation, FeatureStats,
};
use maskgen_core::label::{argmax_decode, onehot, resize_nearest, LabelMap};
use maskgen_core::rng;
use proptest::prelude::*;

fn label_map(classes: u8) -> impl Strategy<Value = LabelMap> {
    (1usize..20, 1usize..20).prop_flat_map(move |(h, w)| {
        proptest::collection::vec(0..classes, h * w)
            .prop_map(move |d| LabelMap::new(h, w, d).unwrap())
    })
}

fn simplex(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.01f64..1.0, n).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

proptest! {
    #[test]
    fn argmax_inverts_onehot(m in label_map(7)) {
        let x = onehot(&m, 7).unwrap();
        prop_assert_eq!(argmax_decode(&x.as_logits(3.0f32)).unwrap(), m);
    }

    #[test]
    fn resize_keeps_label_set(m in label_map(7), h in 1usize..40, w in 1usize..40) {
        let r = resize_nearest(&m, h, w).unwrap();
        prop_assert_eq!((r.height(), r.width()), (h, w));
        prop_assert!(r.as_bytes().iter().all(|v| m.as_bytes().contains(v)));
    }

    #[test]
    fn class_distribution_matches_counting(maps in proptest::collection::vec(label_map(7), 1..6)) {
        let same: Vec<LabelMap> = maps.iter().map(|m| resize_nearest(m, 8, 8).unwrap()).collect();
        let d = class_distribution(&same, 7).unwrap();
        let total = (same.len() * 64) as f64;
        for c in 0..7u8 {
            let count = same.iter().flat_map(|m| m.as_bytes()).filter(|&&v| v == c).count() as f64;
            prop_assert!((d.fractions[c as usize] - count / total).abs() < 1e-12);
        }
    }

    #[test]
    fn total_variation_is_a_bounded_metric(p in simplex(7), q in simplex(7), r in simplex(7)) {
        let pq = total_variation(&p, &q);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&pq));
        prop_assert!((pq - total_variation(&q, &p)).abs() < 1e-15);
        prop_assert!(total_variation(&p, &p) == 0.0);
        prop_assert!(pq <= total_variation(&p, &r) + total_variation(&r, &q) + 1e-12);
    }

    #[test]
    fn geometric_features_are_bounded(m in label_map(7)) {
        let f = extract_features(&m, 7).unwrap();
        prop_assert_eq!(f.len(), 35);
        prop_assert!((f[..7].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(f.iter().all(|v| v.is_finite() && *v >= 0.0 && *v <= 1.0));
    }

    #[test]
    fn sampler_frequency_follows_weights(lesions in 1usize..40, rest in 1usize..60, wl in 0.5f64..5.0) {
        let flags: Vec<bool> = (0..lesions + rest).map(|i| i < lesions).collect();
        let s = WeightedSampler::new(&flags, SamplerWeights::new(wl, 1.0).unwrap()).unwrap();
        let mut r = rng::stream(lesions as u64, "prop-sampler", rest as u64);
        let hits = s.draw_many(&mut r, 20_000).into_iter().filter(|&i| flags[i]).count() as f64 / 20_000.0;
        let expect = wl * lesions as f64 / (wl * lesions as f64 + rest as f64);
        prop_assert!((hits - expect).abs() < 0.03, "observed {hits}, expected {expect}");
    }
}

fn stats(rows: &[Vec<f64>]) -> FeatureStats {
    FeatureStats::from_features(rows).unwrap()
}

#[test]
fn frechet_distance_grows_with_mean_shift() {
    let mut r = rng::stream(4, "shift", 0);
    let base: Vec<Vec<f64>> = (0..300)
        .map(|_| {
            (0..3)
                .map(|_| rand::Rng::gen_range(&mut r, -1.0..1.0))
                .collect()
        })
        .collect();
    let a = stats(&base);
    let mut last = -1.0;
    for shift in [0.0, 0.25, 0.5, 1.0, 2.0] {
        let moved: Vec<Vec<f64>> = base
            .iter()
            .map(|v| v.iter().map(|x| x + shift).collect())
            .collect();
        let d = frechet_distance(&a, &stats(&moved)).unwrap();
        // A pure translation costs exactly |shift|^2 per dimension.
        assert!((d - 3.0 * shift * shift).abs() < 1e-6, "shift {shift}: {d}");
        assert!(d > last);
        last = d;
    }
}

#[test]
fn frechet_distance_of_scaled_gaussians() {
    let mut r = rng::stream(5, "scale", 0);
    let base: Vec<Vec<f64>> = (0..400)
        .map(|_| {
            (0..2)
                .map(|_| rand::Rng::gen_range(&mut r, -1.0..1.0))
                .collect()
        })
        .collect();
    let scaled: Vec<Vec<f64>> = base
        .iter()
        .map(|v| v.iter().map(|x| 3.0 * x).collect())
        .collect();
    let (a, b) = (stats(&base), stats(&scaled));
    // Sb = 9 Sa and mb = 3 ma: |2 ma|^2 + trace(Sa + 9Sa - 2*3Sa).
    let expect = 4.0 * a.mean.norm_squared() + 4.0 * a.covariance.trace();
    let d = frechet_distance(&a, &b).unwrap();
    assert!((d - expect).abs() < 1e-4 * expect, "{d} vs {expect}");
}
