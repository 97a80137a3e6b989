mod common;

use proptest::prelude::*;

use morphlab::langgen::{build_lexicon, lexicon_to_text, parse_lexicon, syllabify};
use morphlab::phonfeat::{SegmentInventory, FEATURE_COUNT};
use morphlab::srn::{finite_diff_check, random_check_case, TrainConfig};
use morphlab::xfer::{mean_stderr, sign_test};

fn binomial_tail(wins: usize, n: usize) -> f64 {
    // independent oracle: sum of exact binomial coefficients via Pascal's triangle
    let mut row = vec![1.0f64];
    for _ in 0..n {
        let mut next = vec![1.0; row.len() + 1];
        for k in 1..row.len() {
            next[k] = row[k - 1] + row[k];
        }
        row = next;
    }
    row[wins..].iter().sum::<f64>() / 2f64.powi(n as i32)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generator_invariants(seed in any::<u64>(), which in 0usize..64) {
        let recipes = common::all_recipes();
        let r = &recipes[which % recipes.len()];
        prop_assert_eq!(common::check_generator(r, seed), Ok(()));
    }

    #[test]
    fn gradients_match_finite_differences(seed in any::<u64>()) {
        let (net, xs, ts) = random_check_case(seed).unwrap();
        let r = finite_diff_check(&net, &xs, &ts).unwrap();
        prop_assert!(r.max_relative < 1e-4, "{:?}", r);
        prop_assert_eq!(r.max_masked, 0.0);
    }

    #[test]
    fn training_keeps_masked_weights_zero(seed in any::<u64>(), steps in 1usize..30) {
        let (mut net, xs, ts) = random_check_case(seed).unwrap();
        let groups = net.topology().outputs.len();
        let cfg = TrainConfig { learning_rate: 0.5, momentum: 0.9, ..TrainConfig::default() };
        for i in 0..steps {
            if i % 3 == 0 {
                net.reset_context();
            }
            let k = i % xs.len();
            net.forward(&xs[k]).unwrap();
            let active: Vec<bool> = (0..groups).map(|g| (g + i) % 2 == 0 || groups == 1).collect();
            net.backward(&ts[k], &active, &cfg).unwrap();
        }
        prop_assert!(net.masks_respected());
    }

    #[test]
    fn same_seed_same_outputs(seed in any::<u64>()) {
        let (mut a, xs, _) = random_check_case(seed).unwrap();
        let (mut b, _, _) = random_check_case(seed).unwrap();
        for x in &xs {
            prop_assert_eq!(a.forward(x).unwrap().to_vec(), b.forward(x).unwrap().to_vec());
        }
    }

    #[test]
    fn decode_tolerates_small_noise(idx in 0usize..20, bit in 0usize..FEATURE_COUNT, noise in -0.45f64..0.45) {
        let inv = SegmentInventory::large();
        let seg = &inv.segments()[idx];
        let mut v = seg.features.to_f64();
        v[bit] += if v[bit] > 0.5 { -noise.abs() } else { noise.abs() };
        prop_assert_eq!(inv.decode(&v).unwrap().symbol, seg.symbol);
    }

    #[test]
    fn syllabification_is_total(cs in proptest::collection::vec(0usize..20, 1..12)) {
        let inv = SegmentInventory::large();
        let mut phones: String = cs.iter().map(|&i| inv.segments()[i].symbol).collect();
        if !phones.chars().any(|c| inv.is_vowel(c).unwrap()) {
            phones.push('a');
        }
        let b = syllabify(&phones, &inv).unwrap();
        let vowels = phones.chars().filter(|&c| inv.is_vowel(c).unwrap()).count();
        prop_assert_eq!(b.len() + 1, vowels);
        prop_assert!(b.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(b.iter().all(|&x| x > 0 && x < phones.len()));
    }

    #[test]
    fn lexicon_text_round_trips(seed in any::<u64>(), which in 0usize..64) {
        let recipes = common::all_recipes();
        let spec = recipes[which % recipes.len()].instantiate(seed).unwrap();
        let words = build_lexicon(&spec).unwrap();
        prop_assert_eq!(parse_lexicon(&lexicon_to_text(&words)).unwrap(), words);
    }

    #[test]
    fn sign_test_matches_binomial_tail(wins in 0usize..30, losses in 0usize..30) {
        let p = sign_test(wins, losses);
        if wins + losses == 0 {
            prop_assert_eq!(p, 1.0);
        } else {
            prop_assert!((p - binomial_tail(wins, wins + losses)).abs() < 1e-12);
        }
        prop_assert!(sign_test(wins + 1, losses) <= p);
    }

    #[test]
    fn stderr_is_scale_equivariant(xs in proptest::collection::vec(0.0f64..1.0, 2..12), k in 0.1f64..10.0) {
        let (m, s) = mean_stderr(&xs);
        let ys: Vec<f64> = xs.iter().map(|x| x * k).collect();
        let (m2, s2) = mean_stderr(&ys);
        prop_assert!((m2 - k * m).abs() < 1e-9);
        prop_assert!((s2 - k * s).abs() < 1e-9);
    }
}
