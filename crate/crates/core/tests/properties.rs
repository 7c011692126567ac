use latesearch::encoder::EmbeddingMatrix;
use latesearch::eval::{average_precision, holm_bonferroni, paired_t_test, QrelSet};
use latesearch::queryprep::{strip_stop_structures, StopStructureList};
use latesearch::retrieval::{maxsim, RankedList};
use latesearch::segmenter::SegmenterConfig;
use proptest::prelude::*;

fn segmenter() -> impl Strategy<Value = SegmenterConfig> {
    (1usize..40).prop_flat_map(|w| (Just(w), 1..=w)).prop_map(|(window_len, stride)| {
        SegmenterConfig { window_len, stride }
    })
}

/// `1 + max(0, ceil((n - w) / s))` for n >= 1.
fn expected_count(n: usize, w: usize, s: usize) -> usize {
    if n <= w {
        1
    } else {
        1 + (n - w).div_ceil(s)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn window_count_law(cfg in segmenter(), n in 1usize..600) {
        prop_assert_eq!(cfg.windows(n).len(), expected_count(n, cfg.window_len, cfg.stride));
    }

    #[test]
    fn windows_cover_every_token_once_started(cfg in segmenter(), n in 1usize..600) {
        let ws = cfg.windows(n);
        let mut covered = vec![false; n];
        for (i, w) in ws.iter().enumerate() {
            prop_assert_eq!(w.start, i * cfg.stride);
            prop_assert!(w.end <= n && w.len() <= cfg.window_len && !w.is_empty());
            for c in &mut covered[w.clone()] {
                *c = true;
            }
        }
        prop_assert!(covered.iter().all(|&c| c));
        prop_assert_eq!(ws.last().unwrap().end, n);
    }

    #[test]
    fn window_count_is_monotone_in_length(cfg in segmenter(), n in 1usize..600) {
        prop_assert!(cfg.windows(n).len() <= cfg.windows(n + 1).len());
    }

    #[test]
    fn stripping_is_idempotent(words in prop::collection::vec("[a-c]{1,2}|find|documents|on|reports|of|,", 0..20)) {
        let list = StopStructureList::from_phrases(["find documents on", "reports of", "a b", "b"]);
        let text = words.join(" ");
        let once = strip_stop_structures(&text, &list);
        prop_assert_eq!(strip_stop_structures(&once, &list), once.clone());
        prop_assert!(once.split_whitespace().count() <= words.len());
    }

    #[test]
    fn holm_sits_between_bonferroni_and_unadjusted(
        pvals in prop::collection::vec(0.0f64..=1.0, 1..12),
        alpha in 0.001f64..0.2,
    ) {
        let m = pvals.len() as f64;
        let holm = holm_bonferroni(&pvals, alpha);
        for (i, &p) in pvals.iter().enumerate() {
            if p <= alpha / m {
                prop_assert!(holm[i], "bonferroni rejection {} not kept", p);
            }
            if holm[i] {
                prop_assert!(p <= alpha);
            }
        }
        // Rejections are a prefix of the sorted p-values.
        for (i, &p) in pvals.iter().enumerate() {
            for (j, &q) in pvals.iter().enumerate() {
                if holm[j] && p < q {
                    prop_assert!(holm[i]);
                }
            }
        }
    }

    #[test]
    fn holm_is_monotone_in_alpha(pvals in prop::collection::vec(0.0f64..=1.0, 1..12), a in 0.001f64..0.1, extra in 0.0f64..0.1) {
        let low = holm_bonferroni(&pvals, a);
        let high = holm_bonferroni(&pvals, a + extra);
        for (l, h) in low.iter().zip(&high) {
            prop_assert!(!l || *h);
        }
    }

    #[test]
    fn t_test_is_antisymmetric(pairs in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 2..30)) {
        let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let ab = paired_t_test(&a, &b).unwrap();
        let ba = paired_t_test(&b, &a).unwrap();
        prop_assert_eq!(ab.p_value, ba.p_value);
        prop_assert_eq!(ab.t, -ba.t);
        prop_assert!((0.0..=1.0).contains(&ab.p_value));
    }

    #[test]
    fn t_test_ignores_a_common_shift(pairs in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 2..30), shift in -1.0f64..1.0) {
        let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let a2: Vec<f64> = a.iter().map(|x| x + shift).collect();
        let b2: Vec<f64> = b.iter().map(|x| x + shift).collect();
        let p1 = paired_t_test(&a, &b).unwrap().p_value;
        let p2 = paired_t_test(&a2, &b2).unwrap().p_value;
        prop_assert!((p1 - p2).abs() < 1e-6, "{} vs {}", p1, p2);
    }

    #[test]
    fn ap_is_bounded_and_ignores_trailing_nonrelevant(
        rel in prop::collection::vec(any::<bool>(), 1..40),
        unretrieved in 0usize..5,
        tail in 0usize..10,
    ) {
        let mut qrels = QrelSet::new();
        let mut scores = Vec::new();
        for (i, &r) in rel.iter().enumerate() {
            let doc = format!("d{i:03}");
            if r {
                qrels.insert("q", &doc, 1);
            }
            scores.push((doc, -(i as f32)));
        }
        for i in 0..unretrieved {
            qrels.insert("q", &format!("missing{i}"), 1);
        }
        let run = RankedList::from_scores("q", scores.clone(), usize::MAX);
        let ap = average_precision(&run, &qrels).unwrap();
        prop_assert!((0.0..=1.0).contains(&ap));
        if qrels.relevant_count("q") > 0 && rel.iter().all(|&r| r) && unretrieved == 0 {
            prop_assert_eq!(ap, 1.0);
        }
        for i in 0..tail {
            scores.push((format!("tail{i}"), -1000.0 - i as f32));
        }
        let longer = RankedList::from_scores("q", scores, usize::MAX);
        prop_assert_eq!(average_precision(&longer, &qrels).unwrap(), ap);
    }

    #[test]
    fn appending_mask_rows_leaves_maxsim_unchanged(
        q in prop::collection::vec(prop::collection::vec(-1.0f32..1.0, 8), 1..6),
        d in prop::collection::vec(prop::collection::vec(-1.0f32..1.0, 8), 1..6),
        pad in 0usize..30,
    ) {
        let query = EmbeddingMatrix::from_rows(8, &q).unwrap();
        let doc = EmbeddingMatrix::from_rows(8, &d).unwrap();
        let mut padded = query.clone();
        padded.fit_rows(q.len() + pad);
        prop_assert_eq!(
            maxsim(&query, &doc).unwrap().to_bits(),
            maxsim(&padded, &doc).unwrap().to_bits()
        );
    }
}
