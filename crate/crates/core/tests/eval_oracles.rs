//! Scoring and retrieval against independent oracles.

use std::collections::HashMap;

use proptest::prelude::*;
use taskdisc::corpus::{build_oov_split, generate_micro_world, AnswerVocabulary, SceneBank, VqaTriple, WorldConfig};
use taskdisc::eval::{evaluate, rank_by_similarity, summarize, vqa_score, EvalError};
use taskdisc::model::{ModelError, Predictor};

/// Answers every question with its most frequent ground truth.
struct Oracle(AnswerVocabulary);

impl Predictor for Oracle {
    fn vocab(&self) -> &AnswerVocabulary {
        &self.0
    }

    fn predict(&self, _: &SceneBank, triples: &[&VqaTriple]) -> Result<Vec<usize>, ModelError> {
        Ok(triples
            .iter()
            .map(|t| self.0.index_of(t.modal_answer()).unwrap())
            .collect())
    }
}

fn gt(spec: &[(&str, usize)]) -> Vec<String> {
    spec.iter()
        .flat_map(|(a, n)| std::iter::repeat_n(a.to_string(), *n))
        .collect()
}

#[test]
fn score_formula_cases() {
    let g = gt(&[("x", 2), ("y", 3), ("z", 5)]);
    assert_eq!(vqa_score("w", &g), 0.0);
    assert!((vqa_score("x", &g) - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(vqa_score("y", &g), 1.0);
    assert_eq!(vqa_score("z", &g), 1.0);
}

#[test]
fn oracle_model_scores_the_modal_ceiling() {
    let world = generate_micro_world(&WorldConfig {
        n_scenes: 300,
        ..WorldConfig::default()
    })
    .unwrap();
    let (split, vocab) = build_oov_split(&world.triples, &world.vocab, 0.25, 0).unwrap();
    let by_id: HashMap<u64, &VqaTriple> = world.triples.iter().map(|t| (t.id, t)).collect();
    let test: Vec<&VqaTriple> = split.test_mixed.iter().map(|i| by_id[i]).collect();
    let oracle = Oracle(vocab.clone());

    let mut expected = 0.0;
    for t in &test {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for a in &t.gt {
            *counts.entry(a).or_default() += 1;
        }
        let top = *counts.values().max().unwrap();
        expected += (top as f64 / 3.0).min(1.0);
    }
    expected /= test.len() as f64;

    let report = evaluate(&oracle, &world.bank, &test, &vocab, None, 1).unwrap();
    let agg = report.aggregates.as_ref().unwrap();
    assert!((agg.overall - expected).abs() < 1e-12, "{} vs {expected}", agg.overall);

    let mut one = Vec::new();
    report.write_csv(&mut one).unwrap();
    let mut four = Vec::new();
    evaluate(&oracle, &world.bank, &test, &vocab, None, 4)
        .unwrap()
        .write_csv(&mut four)
        .unwrap();
    assert_eq!(one, four);
    assert!(String::from_utf8(one)
        .unwrap()
        .starts_with("id,prediction,score,stratum\n"));
}

#[test]
fn oracle_ceiling_below_one_for_split_votes() {
    let vocab = AnswerVocabulary::new(["a", "b", "c", "d", "e", "f"].map(String::from).to_vec()).unwrap();
    let t = |id, g| VqaTriple {
        id,
        question: vec!["q".into()],
        scene: 0,
        gt: g,
    };
    let triples = [
        t(0, gt(&[("a", 2), ("b", 2), ("c", 2), ("d", 2), ("e", 1), ("f", 1)])),
        t(1, gt(&[("a", 1), ("b", 1), ("c", 1), ("d", 1), ("e", 3), ("f", 3)])),
        t(2, gt(&[("a", 10)])),
    ];
    let refs: Vec<&VqaTriple> = triples.iter().collect();
    let r = evaluate(&Oracle(vocab.clone()), &SceneBank::new(4), &refs, &vocab, None, 1).unwrap();
    let expected = (2.0 / 3.0 + 1.0 + 1.0) / 3.0;
    assert!((r.aggregates.unwrap().overall - expected).abs() < 1e-12);
    // Ties go to the answer listed first.
    assert_eq!(r.questions[0].prediction, "a");
    assert_eq!(r.questions[1].prediction, "e");
}

#[test]
fn empty_input_and_misaligned_vocabularies() {
    let vocab = AnswerVocabulary::new(vec!["a".into(), "b".into()]).unwrap();
    let bank = SceneBank::new(4);
    let r = evaluate(&Oracle(vocab.clone()), &bank, &[], &vocab, None, 1).unwrap();
    assert!(r.empty && r.aggregates.is_none() && r.questions.is_empty());
    let other = AnswerVocabulary::new(vec!["a".into(), "c".into()]).unwrap();
    assert!(matches!(
        evaluate(&Oracle(other), &bank, &[], &vocab, None, 1),
        Err(EvalError::VocabularyMisaligned(_))
    ));
}

#[test]
fn retrieval_equals_brute_force_projection_order() {
    // Integer coordinates keep every dot product exact.
    let dim = 6;
    let items: Vec<(u64, Vec<f32>)> = (0..200u64)
        .map(|i| {
            let v = (0..dim).map(|j| ((i * 7 + j as u64 * 13) % 9) as f32 - 4.0).collect();
            (1000 - i, v)
        })
        .collect();
    for axis in 0..dim {
        let mut query = vec![0.0f32; dim];
        query[axis] = 1.0;
        let mut brute: Vec<(u64, f32)> = items.iter().map(|(id, v)| (*id, v[axis])).collect();
        // Selection sort: highest projection first, then smallest id.
        for i in 0..brute.len() {
            let mut best = i;
            for j in i + 1..brute.len() {
                let (a, b) = (brute[j], brute[best]);
                if a.1 > b.1 || (a.1 == b.1 && a.0 < b.0) {
                    best = j;
                }
            }
            brute.swap(i, best);
        }
        let ranked = rank_by_similarity(&query, &items, 200).unwrap();
        assert_eq!(ranked, brute);
        for w in ranked.windows(2) {
            assert!(w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0 < w[1].0));
        }
        assert_eq!(rank_by_similarity(&query, &items, 10).unwrap(), brute[..10]);
    }
    assert_eq!(rank_by_similarity(&[0.3], &[(9, vec![-2.0])], 5).unwrap(), [(9, -0.6)]);
    assert!(matches!(
        rank_by_similarity(&[1.0, 0.0], &items, 3),
        Err(EvalError::DimensionMismatch(_))
    ));
}

#[test]
fn seed_summary_uses_population_std() {
    let s = summarize(&[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(s.mean, 2.5);
    assert!((s.std - 1.25f64.sqrt()).abs() < 1e-15);
}

proptest! {
    #[test]
    fn score_is_bounded_and_order_invariant(
        picks in prop::collection::vec(0usize..4, 10),
        predicted in 0usize..5,
        rotate in 0usize..10,
    ) {
        let names = ["a", "b", "c", "d", "e"];
        let g: Vec<String> = picks.iter().map(|&i| names[i].to_string()).collect();
        let mut h = g.clone();
        h.rotate_left(rotate);
        h.reverse();
        let s = vqa_score(names[predicted], &g);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert_eq!(s, vqa_score(names[predicted], &h));
        let n = g.iter().filter(|a| *a == names[predicted]).count();
        prop_assert_eq!(s, (n as f64 / 3.0).min(1.0));
    }
}
