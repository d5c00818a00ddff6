use proptest::prelude::*;

use super::*;

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

#[test]
fn bleu_identical_corpus_is_100() {
    let corpus = vec![toks("the cat sat on the mat"), toks("a b c d e")];
    assert!((bleu4(&corpus, &corpus).unwrap() - 100.0).abs() < 1e-9);
}

#[test]
fn bleu_without_shared_four_grams_is_zero() {
    let h = vec![toks("a b c d e")];
    let r = vec![toks("a b c x e")];
    assert_eq!(bleu4(&h, &r).unwrap(), 0.0);
}

#[test]
fn bleu_hand_case() {
    let h = vec![toks("the cat sat on the mat")];
    let r = vec![toks("the cat is on the mat")];
    assert_eq!(bleu4(&h, &r).unwrap(), 0.0);
    let expected = 100.0 * (5.0f64 / 6.0 * 3.0 / 5.0 * 1.0 / 4.0).powf(1.0 / 3.0);
    assert!((corpus_bleu(&h, &r, 3).unwrap() - expected).abs() < 1e-6);
    assert!((expected - 50.0).abs() < 1e-9);
}

#[test]
fn bleu_brevity_penalty_and_clipping() {
    let h = vec![toks("the the the")];
    let r = vec![toks("the cat the mat")];
    let expected = 100.0 * (2.0f64 / 3.0) * (1.0f64 - 4.0 / 3.0).exp();
    assert!((corpus_bleu(&h, &r, 1).unwrap() - expected).abs() < 1e-9);
}

#[test]
fn bleu_length_mismatch_is_usage_error() {
    let h = vec![toks("a")];
    assert!(bleu4::<String>(&h, &[]).is_err());
}

#[test]
fn smoothed_sentence_bleu_is_positive_without_four_gram_matches() {
    let h = toks("the cat sat on the mat");
    let r = toks("the cat is on the mat");
    let s = sentence_bleu_smoothed(&h, &r, 4);
    let expected = 100.0 * (5.0f64 / 6.0 * 4.0 / 6.0 * 2.0 / 5.0 * 1.0 / 4.0).powf(0.25);
    assert!((s - expected).abs() < 1e-9);
}

#[test]
fn wer_examples() {
    assert!((word_error_rate(&[toks("a c")], &[toks("a b c")]).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    assert_eq!(word_error_rate(&[toks("x y")], &[toks("x y")]).unwrap(), 0.0);
    assert!(word_error_rate(&[toks("x")], &[vec![]]).is_err());
}

#[test]
fn edit_distance_known_values() {
    assert_eq!(edit_distance(b"kitten", b"sitting"), 3);
    assert_eq!(edit_distance::<u8>(b"", b"abc"), 3);
    assert_eq!(edit_distance(b"abc", b""), 3);
}

fn brute_edit(a: &[u8], b: &[u8]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let sub = brute_edit(&a[1..], &b[1..]) + usize::from(a[0] != b[0]);
    sub.min(brute_edit(&a[1..], b) + 1).min(brute_edit(a, &b[1..]) + 1)
}

#[test]
fn kappa_confusion_example() {
    let k = kappa_from_confusion(&[vec![20, 5], vec![10, 15]]).unwrap();
    assert!((k - 0.4).abs() < 1e-9);
}

#[test]
fn kappa_perfect_and_degenerate() {
    let mut t = AnnotationTable::new();
    for (i, r) in [1u8, 3, 5, 2, 4].iter().enumerate() {
        t.insert(&i.to_string(), "a", *r).unwrap();
        t.insert(&i.to_string(), "b", *r).unwrap();
    }
    assert!((cohen_kappa(&t, false).unwrap() - 1.0).abs() < 1e-12);
    let mut c = AnnotationTable::new();
    for i in 0..4 {
        c.insert(&i.to_string(), "a", 3).unwrap();
        c.insert(&i.to_string(), "b", 3).unwrap();
    }
    assert!(matches!(cohen_kappa(&c, false), Err(crate::Error::Undefined(_))));
}

#[test]
fn collapsing_merges_high_ratings() {
    let mut t = AnnotationTable::new();
    let rows = [(4u8, 5u8), (5, 4), (1, 2), (3, 3), (2, 1), (4, 4)];
    for (i, (a, b)) in rows.iter().enumerate() {
        t.insert(&i.to_string(), "a", *a).unwrap();
        t.insert(&i.to_string(), "b", *b).unwrap();
    }
    assert!((cohen_kappa(&t, true).unwrap() - 1.0).abs() < 1e-12);
    assert!(cohen_kappa(&t, false).unwrap() < 1.0);
}

#[test]
fn annotation_csv_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("a.csv");
    std::fs::write(&good, "item_id,annotator_id,rating\n1,x,4\n1,y,5\n2,x,2\n2,y,2\n").unwrap();
    let t = AnnotationTable::from_csv(&good).unwrap();
    assert_eq!(t.items(), 2);
    assert_eq!(t.annotators(), vec!["x", "y"]);
    let bad = dir.path().join("b.csv");
    std::fs::write(&bad, "item_id,annotator_id,rating\n1,x,4\n1,y,9\n").unwrap();
    match AnnotationTable::from_csv(&bad) {
        Err(crate::Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn kappa_needs_two_annotators() {
    let mut t = AnnotationTable::new();
    t.insert("1", "a", 3).unwrap();
    assert!(cohen_kappa(&t, false).is_err());
}

#[test]
fn correlation_extremes_and_spearman_example() {
    let a = [1.0, 2.0, 3.0, 4.0];
    let neg: Vec<f64> = a.iter().map(|x| -x).collect();
    for kind in [CorrelationKind::Pearson, CorrelationKind::Spearman] {
        assert_eq!(correlate(&a, &a, kind).unwrap().r, 1.0);
        assert_eq!(correlate(&a, &neg, kind).unwrap().r, -1.0);
    }
    let s = correlate(&a, &[1.0, 3.0, 2.0, 4.0], CorrelationKind::Spearman).unwrap();
    assert!((s.r - 0.8).abs() < 1e-9);
    let n = 4.0;
    let d2 = 0.0 + 1.0 + 1.0 + 0.0;
    assert!((s.r - (1.0 - 6.0 * d2 / (n * (n * n - 1.0)))).abs() < 1e-12);
}

#[test]
fn correlation_errors() {
    assert!(correlate(&[1.0, 2.0], &[1.0, 2.0], CorrelationKind::Pearson).is_err());
    assert!(matches!(
        correlate(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0], CorrelationKind::Pearson),
        Err(crate::Error::Undefined(_))
    ));
    assert!(correlate(&[1.0, 2.0, 3.0], &[1.0, 2.0], CorrelationKind::Spearman).is_err());
}

#[test]
fn ties_get_average_ranks() {
    assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
}

#[test]
fn report_json_has_schema_and_counts() {
    let mut r = EvalReport::new(ReportMetadata {
        seed: 7,
        dataset: "test.jsonl".into(),
        config_hash: None,
    });
    r.models.push(ModelScores {
        name: "base".into(),
        politeness: Some(Scored::new(0.5, 10)),
        bleu4: Some(Scored::new(1.2, 10)),
        ..Default::default()
    });
    let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
    assert_eq!(v["schema_version"], REPORT_SCHEMA_VERSION);
    assert_eq!(v["models"][0]["politeness"]["n"], 10);
    assert!(r.render_text().contains("base"));
}

proptest! {
    #[test]
    fn bleu_of_self_is_100(corpus in prop::collection::vec(prop::collection::vec(0u8..6, 4..10), 1..5)) {
        prop_assert!((bleu4(&corpus, &corpus).unwrap() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn bleu_is_order_invariant(
        pairs in prop::collection::vec((prop::collection::vec(0u8..4, 0..8), prop::collection::vec(0u8..4, 1..8)), 1..6),
        seed in any::<u64>(),
    ) {
        let (h, r): (Vec<_>, Vec<_>) = pairs.iter().cloned().unzip();
        let mut idx: Vec<usize> = (0..pairs.len()).collect();
        crate::Rng::seed(seed).shuffle(&mut idx);
        let hs: Vec<_> = idx.iter().map(|&i| h[i].clone()).collect();
        let rs: Vec<_> = idx.iter().map(|&i| r[i].clone()).collect();
        let a = bleu4(&h, &r).unwrap();
        let b = bleu4(&hs, &rs).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
        prop_assert!((0.0..=100.0 + 1e-9).contains(&a));
    }

    #[test]
    fn edit_distance_matches_recursion(a in prop::collection::vec(0u8..3, 0..6), b in prop::collection::vec(0u8..3, 0..6)) {
        prop_assert_eq!(edit_distance(&a, &b), brute_edit(&a, &b));
    }

    #[test]
    fn correlations_bounded_and_spearman_monotone_invariant(
        a in prop::collection::vec(-50i32..50, 3..12),
        b_seed in prop::collection::vec(-50i32..50, 12),
    ) {
        let a: Vec<f64> = a.into_iter().map(f64::from).collect();
        let b: Vec<f64> = b_seed[..a.len()].iter().map(|&x| f64::from(x)).collect();
        for kind in [CorrelationKind::Pearson, CorrelationKind::Spearman] {
            if let Ok(c) = correlate(&a, &b, kind) {
                prop_assert!(c.r.abs() <= 1.0);
            }
        }
        let t: Vec<f64> = a.iter().map(|x| (x / 10.0).exp() + 3.0 * x).collect();
        if let (Ok(x), Ok(y)) = (
            correlate(&a, &b, CorrelationKind::Spearman),
            correlate(&t, &b, CorrelationKind::Spearman),
        ) {
            prop_assert!((x.r - y.r).abs() < 1e-12);
        }
    }

    #[test]
    fn kappa_at_most_one_and_one_iff_total_agreement(
        rows in prop::collection::vec((1u8..=5, 1u8..=5), 1..30),
    ) {
        let mut t = AnnotationTable::new();
        for (i, (a, b)) in rows.iter().enumerate() {
            t.insert(&i.to_string(), "a", *a).unwrap();
            t.insert(&i.to_string(), "b", *b).unwrap();
        }
        if let Ok(k) = cohen_kappa(&t, false) {
            prop_assert!(k <= 1.0 + 1e-12);
            let agree = rows.iter().all(|(a, b)| a == b);
            prop_assert_eq!((k - 1.0).abs() < 1e-12, agree);
        }
    }
}
