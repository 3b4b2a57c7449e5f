//! Monte Carlo checks of the task-specification sampler.

use std::collections::BTreeMap;

use taskdisc::corpus::VisualQuadruple;
use taskdisc::lexical_graph::{build_inverted_table, build_word_groups, random_dag, SynsetId};
use taskdisc::task_discovery::{blank, task_given_answer, Mode, TaskSampler, TaskSpec};
use taskdisc::text::tokenize;

const TOL: f64 = 0.02;

fn datum(answer: &str, description: &str) -> VisualQuadruple {
    VisualQuadruple {
        answer: answer.into(),
        scene: 0,
        bbox: [0.0, 0.0, 0.5, 0.5],
        description: tokenize(description),
        region: Some(0),
    }
}

#[test]
fn wordnet_draws_are_uniform_over_word_groups() {
    let g = random_dag(500, 0.004, 11);
    let inverted = build_inverted_table(&build_word_groups(&g));
    let words: Vec<&String> = inverted.iter().map(|(w, _)| w).take(30).collect();
    assert_eq!(words.len(), 30);
    let mut sampler = TaskSampler::new(&inverted, Mode::Wordnet, 3);
    for w in words {
        let p = task_given_answer(w, &inverted).unwrap();
        let d = datum(w, w);
        let draws = 20_000;
        let mut counts: BTreeMap<SynsetId, usize> = BTreeMap::new();
        for _ in 0..draws {
            match sampler.sample(&d).unwrap().unwrap().task {
                TaskSpec::Synset { id } => *counts.entry(id).or_default() += 1,
                other => panic!("wordnet mode drew {other}"),
            }
        }
        for (s, &ps) in &p {
            assert!((ps - 1.0 / p.len() as f64).abs() < 1e-12);
            let f = counts.get(s).copied().unwrap_or(0) as f64 / draws as f64;
            assert!((f - ps).abs() <= TOL, "{w} {s}: {f} vs {ps}");
        }
        assert!(
            counts.keys().all(|s| p.contains_key(s)),
            "{w}: draw outside the support"
        );
    }
}

#[test]
fn both_mode_coin_is_fair() {
    let g = random_dag(500, 0.004, 11);
    let inverted = build_inverted_table(&build_word_groups(&g));
    let (w, _) = inverted.iter().next().unwrap();
    let d = datum(w, &format!("a {w} on the table"));
    let mut sampler = TaskSampler::new(&inverted, Mode::Both, 9);
    let draws = 10_000;
    let mut descriptions = 0;
    for _ in 0..draws {
        let t = sampler.sample(&d).unwrap().unwrap().task;
        if let TaskSpec::Description { .. } = t {
            assert_eq!(t, blank(&d.description, w).unwrap());
            descriptions += 1;
        }
    }
    let f = descriptions as f64 / draws as f64;
    assert!((f - 0.5).abs() <= TOL, "description share {f}");
}

#[test]
fn equal_seeds_give_equal_streams() {
    let g = random_dag(200, 0.01, 4);
    let inverted = build_inverted_table(&build_word_groups(&g));
    let data: Vec<VisualQuadruple> = inverted
        .iter()
        .take(20)
        .map(|(w, _)| datum(w, &format!("the {w}")))
        .collect();
    let run = |seed| {
        let mut s = TaskSampler::new(&inverted, Mode::Both, seed);
        data.iter().map(|d| s.sample(d).unwrap()).collect::<Vec<_>>()
    };
    assert_eq!(run(5), run(5));
    assert_ne!(run(5), run(6));
}
