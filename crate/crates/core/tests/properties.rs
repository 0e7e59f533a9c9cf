use labelfix::ensemble::max_prob_from_logits;
use labelfix::learner::Learner;
use labelfix::manifest::{manifest_string, read_manifest};
use labelfix::util::sigmoid;
use labelfix::{
    evaluate, generate_synthetic, group_aware_split, select_topk, smooth_targets, top3_decision, Ensemble,
    EpistemicScore, LabelSet, LearnerConfig, NoiseSpec, WeightedLoader,
};
use proptest::collection::vec;
use proptest::prelude::*;

fn labels(max: usize) -> impl Strategy<Value = (usize, Vec<usize>)> {
    (4..=max).prop_flat_map(|t| (Just(t), proptest::sample::subsequence((0..t).collect::<Vec<_>>(), 0..=3)))
}

fn small_ensemble(seed: u64, d: usize, t: usize, params: &[f64]) -> Ensemble {
    let configs: Vec<LearnerConfig> = [0, 4, 8].iter().map(|&h| LearnerConfig::new(h, seed)).collect();
    let mut e = Ensemble::from_configs(&configs, d, t).unwrap();
    let mut k = 0;
    for m in e.members_mut() {
        for p in m.params_mut() {
            *p = params[k % params.len()];
            k += 1;
        }
    }
    e
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn smoothing_keeps_label_mass((t, ids) in labels(64), p in 0.5001f64..=1.0) {
        prop_assume!(!ids.is_empty());
        let set = LabelSet::from_ids(&ids, t).unwrap();
        let s = smooth_targets(set, p, t).unwrap();
        prop_assert!((s.as_slice().iter().sum::<f64>() - ids.len() as f64).abs() <= 1e-12);
        // Negatives exceed one only when the redistributed mass outweighs
        // the negative count.
        let bounded = (1.0 - p) * ids.len() as f64 <= (t - ids.len()) as f64;
        for (c, v) in s.as_slice().iter().enumerate() {
            prop_assert!(*v >= 0.0 && (!bounded || *v <= 1.0));
            if set.contains(c) {
                prop_assert_eq!(*v, p);
            }
        }
    }

    #[test]
    fn top3_ignores_monotone_transforms(probs in vec(0.0f64..1.0, 3..20), a in 0.1f64..5.0, b in -3.0f64..3.0) {
        let transformed: Vec<f64> = probs.iter().map(|p| (a * p + b).exp()).collect();
        prop_assert_eq!(top3_decision(&probs).unwrap(), top3_decision(&transformed).unwrap());
        prop_assert_eq!(top3_decision(&probs).unwrap().len(), 3);
    }

    #[test]
    fn max_prob_dominates_members(logits in vec(vec(-20.0f64..20.0, 6), 1..5)) {
        let out = max_prob_from_logits(&logits);
        for z in &logits {
            for (o, zi) in out.iter().zip(z) {
                prop_assert!(*o >= sigmoid(*zi));
            }
        }
    }

    #[test]
    fn mean_logit_output_is_open_unit(params in vec(-2.0f64..2.0, 1..40), x in vec(-3.0f64..3.0, 5)) {
        let e = small_ensemble(1, 5, 6, &params);
        for v in e.mean_logit_sigmoid(&x).unwrap() {
            prop_assert!(v > 0.0 && v < 1.0);
        }
    }

    #[test]
    fn ensemble_loss_is_linear_in_weights(params in vec(-2.0f64..2.0, 1..40), x in vec(-3.0f64..3.0, 5), lambda in 0.01f64..10.0) {
        let mut e = small_ensemble(2, 5, 6, &params);
        let target = [1.0, 0.0, 0.0, 1.0, 0.0, 1.0];
        let base = e.ensemble_loss(&x, &target).unwrap();
        let scaled: Vec<f64> = e.weights().iter().map(|w| w * lambda).collect();
        e.set_weights(scaled).unwrap();
        let after = e.ensemble_loss(&x, &target).unwrap();
        prop_assert!((after - lambda * base).abs() <= 1e-9 * (1.0 + after.abs()));
    }

    #[test]
    fn loader_sequence_is_scale_invariant(weights in vec(0.01f64..100.0, 1..50), scale in 0.001f64..1000.0, seed in any::<u64>()) {
        let mut a = WeightedLoader::new(weights.clone(), 8, seed).unwrap();
        let mut b = WeightedLoader::new(weights.iter().map(|w| w * scale).collect(), 8, seed).unwrap();
        for _ in 0..20 {
            prop_assert_eq!(a.draw_indices(), b.draw_indices());
        }
    }

    #[test]
    fn topk_is_sorted_and_distinct(scores in vec(0.0f64..5.0, 0..80), k_frac in 0.0f64..=1.0) {
        let items: Vec<EpistemicScore> = scores.iter().enumerate().map(|(i, &s)| EpistemicScore { sample_id: i as u64, score: s }).collect();
        let k = (k_frac * items.len() as f64) as usize;
        let picked = select_topk(&items, k).unwrap();
        prop_assert_eq!(picked.len(), k);
        let vals: Vec<f64> = picked.iter().map(|&id| scores[id as usize]).collect();
        prop_assert!(vals.windows(2).all(|w| w[0] >= w[1]));
        let min_picked = vals.last().copied().unwrap_or(f64::INFINITY);
        let unpicked_max = (0..items.len() as u64).filter(|id| !picked.contains(id)).map(|id| scores[id as usize]).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(k == 0 || min_picked >= unpicked_max);
        prop_assert!(select_topk(&items, items.len() + 1).is_err());
    }

    #[test]
    fn metrics_are_bounded(sets in vec(((0u64..64), (0u64..64)), 1..40)) {
        let t = 6;
        let mask = (1u64 << t) - 1;
        let as_set = |b: u64| LabelSet::from_ids(&(0..t).filter(|c| b & mask & (1 << c) != 0).take(3).collect::<Vec<_>>(), t).unwrap();
        let preds: Vec<LabelSet> = sets.iter().map(|s| as_set(s.0)).collect();
        let truths: Vec<LabelSet> = sets.iter().map(|s| as_set(s.1)).collect();
        let r = evaluate(&preds, &truths, t).unwrap();
        for v in [r.map, r.mar, r.maa, r.maf1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        let perfect = evaluate(&truths, &truths, t).unwrap();
        prop_assert_eq!(perfect.maa, 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn manifest_roundtrip(seed in 0u64..1000, groups in 2usize..12) {
        let spec = NoiseSpec { groups, frames_min: 1, frames_max: 4, ..NoiseSpec::default() };
        let ds = generate_synthetic(&spec, 3, 8, seed).unwrap();
        let text = manifest_string(&ds);
        let back = read_manifest(text.as_bytes()).unwrap();
        prop_assert_eq!(&back, &ds);
        prop_assert_eq!(manifest_string(&back), text);
    }

    #[test]
    fn split_is_a_partition(seed in any::<u64>(), frac in 0.05f64..0.6) {
        let spec = NoiseSpec { groups: 40, frames_min: 2, frames_max: 6, ..NoiseSpec::default() };
        let ds = generate_synthetic(&spec, 3, 10, seed % 1000).unwrap();
        let split = group_aware_split(&ds, frac, seed).unwrap();
        let mut all: Vec<u64> = split.train_ids.iter().chain(&split.test_ids).copied().collect();
        all.sort_unstable();
        let expected: Vec<u64> = ds.sample_ids().collect();
        let mut expected_sorted = expected.clone();
        expected_sorted.sort_unstable();
        prop_assert_eq!(all, expected_sorted);
    }
}
