use cer_core::eval::{metrics, percent, verdict_from_labels, VideoLabel};
use cer_core::model::{EvidencePassage, Retriever, VerdictLabel};
use cer_core::retrieval::{
    bm25_idf, bm25_term, format_claim_evidence, strip_separator, Bm25Params, DenseIndex, DenseMode, EmbeddingVector, HnswParams,
};
use cer_core::veracity::{ClassifierInput, ClassifierOutput, TERNARY};
use proptest::prelude::*;

const SEP: &str = "[SEP]";

fn label() -> impl Strategy<Value = VerdictLabel> {
    prop_oneof![Just(VerdictLabel::True), Just(VerdictLabel::False), Just(VerdictLabel::Nei)]
}

fn passage(text: String) -> EvidencePassage {
    EvidencePassage { doc_id: "d".into(), title: "t".into(), text, score: 0.0, retriever: Retriever::Sparse }
}

fn vectors(dim: usize, n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Vec<f32>>> {
    proptest::collection::vec(proptest::collection::vec(-1.0f32..1.0, dim), n)
}

/// Text that likes to contain separators and their fragments.
fn noisy_text() -> impl Strategy<Value = String> {
    proptest::collection::vec(prop_oneof![Just("[SEP]"), Just("[SE"), Just("P]"), Just(" "), Just("fever"), Just("[")], 0..8)
        .prop_map(|parts| parts.concat())
}

proptest! {
    #[test]
    fn exact_search_is_sorted_and_bounded(
        (dim, rows) in (1usize..8).prop_flat_map(|d| (Just(d), vectors(d, 1..40))),
        k in 1usize..50,
        qi in 0usize..40,
    ) {
        let entries: Vec<(String, EmbeddingVector)> = rows
            .into_iter()
            .enumerate()
            .filter_map(|(i, v)| EmbeddingVector::normalized(v).ok().map(|e| (format!("id{:03}", (i * 7) % 41), e)))
            .collect();
        prop_assume!(!entries.is_empty());
        let mut seen = std::collections::BTreeSet::new();
        let entries: Vec<_> = entries.into_iter().filter(|(id, _)| seen.insert(id.clone())).collect();
        let q = entries[qi % entries.len()].1.clone();
        let index = DenseIndex::build(entries.clone(), DenseMode::ExactFlat, HnswParams::default()).unwrap();
        let hits = index.search(&q, k).unwrap();
        prop_assert_eq!(hits.len(), k.min(entries.len()));
        prop_assert_eq!(index.dim(), dim);
        for pair in hits.windows(2) {
            let ordered = pair[0].1 > pair[1].1 || (pair[0].1 == pair[1].1 && pair[0].0 < pair[1].0);
            prop_assert!(ordered, "{:?} before {:?}", pair[0], pair[1]);
        }
        for (_, s) in &hits {
            prop_assert!(s.abs() <= 1.0 + 1e-5);
        }
        // the query is in the corpus, so the best score is its self-similarity
        prop_assert!((hits[0].1 - q.dot(&q)).abs() <= 1e-12);
    }

    #[test]
    fn bm25_term_grows_with_tf(tf in 1u32..50, len in 1u32..500, avg in 1.0f64..300.0, df in 1usize..100, extra in 0usize..1000) {
        let p = Bm25Params::default();
        let idf = bm25_idf(df + extra, df);
        prop_assert!(idf > 0.0);
        let lo = bm25_term(p, idf, tf, len, avg);
        let hi = bm25_term(p, idf, tf + 1, len, avg);
        prop_assert!(hi > lo);
        // saturates below idf * (k1 + 1)
        prop_assert!(hi < idf * (p.k1 + 1.0));
        // rarer terms weigh more
        prop_assert!(bm25_idf(df + extra + 1, df) > bm25_idf(df + extra, df) - 1e-15);
    }

    #[test]
    fn bm25_term_shrinks_with_length(tf in 1u32..20, len in 1u32..500, avg in 1.0f64..300.0) {
        let p = Bm25Params::default();
        prop_assert!(bm25_term(p, 1.0, tf, len + 1, avg) < bm25_term(p, 1.0, tf, len, avg));
    }

    #[test]
    fn joined_evidence_has_one_separator_per_passage(claim in noisy_text(), texts in proptest::collection::vec(noisy_text(), 0..4)) {
        let evidence: Vec<_> = texts.into_iter().map(passage).collect();
        let joined = format_claim_evidence(&claim, &evidence, SEP);
        prop_assert_eq!(joined.matches(SEP).count(), evidence.len());
    }

    #[test]
    fn classifier_input_has_at_most_one_separator(claim in noisy_text(), justification in noisy_text()) {
        let input = ClassifierInput::new(&claim, &justification, SEP);
        let kept = !strip_separator(justification.trim(), SEP).is_empty();
        prop_assert_eq!(input.text.matches(SEP).count(), usize::from(kept));
    }

    #[test]
    fn metrics_are_bounded(pairs in proptest::collection::vec((label(), label()), 1..80)) {
        let (golds, preds): (Vec<_>, Vec<_>) = pairs.iter().copied().unzip();
        let r = metrics(&golds, &preds, &TERNARY).unwrap();
        let total: usize = r.confusion.iter().flatten().sum();
        prop_assert_eq!(total, pairs.len());
        let mut support = 0;
        for c in r.per_class.values() {
            for v in [c.precision, c.recall, c.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            prop_assert!(c.f1 <= c.precision.max(c.recall) + 1e-12);
            prop_assert!(c.f1 >= c.precision.min(c.recall) - 1e-12 || c.f1 == 0.0);
            support += c.support;
        }
        prop_assert_eq!(support, pairs.len());
        for v in [r.macro_avg.precision, r.macro_avg.recall, r.macro_avg.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn perfect_predictions_score_one_on_present_classes(golds in proptest::collection::vec(label(), 1..40)) {
        let r = metrics(&golds, &golds, &TERNARY).unwrap();
        for c in r.per_class.values() {
            let expected = if c.support > 0 { 1.0 } else { 0.0 };
            prop_assert_eq!(c.f1, expected);
        }
    }

    #[test]
    fn video_is_fake_iff_a_claim_is_false(labels in proptest::collection::vec(label(), 0..12)) {
        let v = verdict_from_labels(labels.iter().copied());
        prop_assert_eq!(v.verdict == VideoLabel::Fake, labels.contains(&VerdictLabel::False));
    }

    #[test]
    fn percent_rounds_to_hundredths(x in 0.0f64..=1.0) {
        let p = percent(x);
        prop_assert!((p - x * 100.0).abs() <= 0.005 + 1e-9);
        prop_assert!(((p * 100.0).round() - p * 100.0).abs() < 1e-6);
    }

    #[test]
    fn normalized_vectors_have_unit_norm(v in proptest::collection::vec(-10.0f32..10.0, 1..64)) {
        if let Ok(e) = EmbeddingVector::normalized(v) {
            prop_assert!((e.norm() - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn classifier_scores_become_a_distribution(scores in proptest::collection::vec(0.001f64..20.0, 3)) {
        let out = ClassifierOutput::from_scores(&TERNARY, &scores).unwrap();
        prop_assert!(out.check_invariants());
        prop_assert!(out.confidence() >= 1.0 / 3.0 - 1e-12 && out.confidence() <= 1.0);
        let best = scores.iter().cloned().fold(f64::MIN, f64::max);
        let idx = TERNARY.iter().position(|l| *l == out.label).unwrap();
        prop_assert_eq!(scores[idx], best);
    }
}
