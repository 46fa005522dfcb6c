use lombard_core::eval::{cosine_similarity, mix_at_snr, relative_wer, Audio, SnrSpec, SnrTarget};
use lombard_core::style::{displacement_norm, shift_embedding};
use lombard_core::{count_syllables, target_duration, ComponentCount, EmbeddingCorpus, PcaModel, StyleEmbedding};
use proptest::prelude::*;

fn corpus_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (3usize..10, 1usize..6).prop_flat_map(|(n, d)| {
        prop::collection::vec(prop::collection::vec(-5.0f64..5.0, d), n)
    })
}

proptest! {
    #[test]
    fn shift_moves_scores_exactly(rows in corpus_strategy(), e_seed in -3.0f64..3.0, c in -2.0f64..2.0, k_pick in 0usize..8) {
        let m = PcaModel::<f64>::fit_rows(&rows, ComponentCount::Max).unwrap();
        let k = k_pick % m.n_components();
        let e: Vec<f64> = rows[0].iter().map(|v| v + e_seed).collect();
        let before = m.project(&e).unwrap();
        let shifted = shift_embedding(&e, &m, &[(k, c)]).unwrap();
        let after = m.project(&shifted).unwrap();
        for j in 0..m.n_components() {
            let expect = if j == k { c * m.sigma()[k] } else { 0.0 };
            prop_assert!((after[j] - before[j] - expect).abs() <= 1e-9);
        }
        // linearity: {k: a} then {k: b} == {k: a + b}
        let twice = shift_embedding(&shifted, &m, &[(k, 0.5)]).unwrap();
        let once = shift_embedding(&e, &m, &[(k, c + 0.5)]).unwrap();
        for (a, b) in twice.iter().zip(&once) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
        let disp: f64 = shifted.iter().zip(&e).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        prop_assert!((disp - displacement_norm(&m, &[(k, c)]).unwrap()).abs() <= 1e-9);
    }

    #[test]
    fn duration_decreases_with_speed(syll in 1usize..200, a in 0.05f64..4.0, b in 0.05f64..4.0) {
        prop_assume!(a != b);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let slow = target_duration(syll, lo, 4.0, 50.0).unwrap();
        let fast = target_duration(syll, hi, 4.0, 50.0).unwrap();
        prop_assert!(fast.seconds < slow.seconds);
        prop_assert!(fast.frames <= slow.frames && fast.frames >= 1);
    }

    #[test]
    fn syllables_are_additive(a in "[a-zA-Z ,.'0-9]{0,30}", b in "[a-zA-Z ,.'0-9]{0,30}") {
        prop_assert_eq!(count_syllables(&format!("{a} {b}")), count_syllables(&a) + count_syllables(&b));
        for w in a.split_whitespace().filter(|w| w.chars().any(char::is_alphabetic)) {
            prop_assert!(count_syllables(w) >= 1);
        }
    }

    #[test]
    fn relative_wer_scale_invariant(a in 0.0f64..100.0, b in 0.01f64..100.0, k in 0.01f64..100.0) {
        let base = relative_wer(a, b).unwrap();
        let scaled = relative_wer(k * a, k * b).unwrap();
        prop_assert!((base - scaled).abs() <= 1e-12 * (1.0 + base));
    }

    #[test]
    fn cosine_scale_invariant(v in prop::collection::vec(-10.0f64..10.0, 4), w in prop::collection::vec(-10.0f64..10.0, 4), k in 0.001f64..1000.0) {
        prop_assume!(v.iter().any(|x| x.abs() > 1e-3) && w.iter().any(|x| x.abs() > 1e-3));
        let base = cosine_similarity(&v, &w).unwrap().cosine;
        let scaled: Vec<f64> = v.iter().map(|x| x * k).collect();
        prop_assert!((cosine_similarity(&scaled, &w).unwrap().cosine - base).abs() <= 1e-12);
        prop_assert!(base.abs() <= 1.0 + 1e-9);
    }

    #[test]
    fn snr_is_hit(clean in prop::collection::vec(-0.5f64..0.5, 16..200), noise in prop::collection::vec(-1.0f64..1.0, 8..300), snr in -5.0f64..30.0, seed in any::<u64>()) {
        prop_assume!(clean.iter().any(|x| x.abs() > 1e-3) && noise.iter().any(|x| x.abs() > 1e-3));
        let out = mix_at_snr(
            &Audio { sample_rate: 16_000, samples: clean },
            &Audio { sample_rate: 16_000, samples: noise },
            &SnrSpec { target: SnrTarget::Db(snr), seed },
        );
        // a segment of the looped noise can still be silent
        if let Ok(out) = out {
            prop_assert!((out.achieved_snr_db.unwrap() - snr).abs() < 0.1);
        }
    }

    #[test]
    fn semb_roundtrip_is_bitwise(values in prop::collection::vec(prop::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), 3), 1..8)) {
        let corpus = EmbeddingCorpus::new(
            values.into_iter().enumerate().map(|(i, v)| StyleEmbedding::new(format!("utt-{i}"), v)).collect(),
        ).unwrap();
        let bytes = corpus.to_semb_bytes().unwrap();
        let back = EmbeddingCorpus::from_semb_bytes(&bytes).unwrap();
        for (a, b) in corpus.embeddings().iter().zip(back.embeddings()) {
            prop_assert_eq!(&a.id, &b.id);
            prop_assert!(a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        let via_csv = EmbeddingCorpus::parse_csv(&back.to_csv_string()).unwrap();
        prop_assert_eq!(via_csv, corpus);
    }
}
