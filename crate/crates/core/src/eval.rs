//! VQA scoring, score reports and task-regression retrieval.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::{AnswerVocabulary, SceneBank, Stratum, VqaTriple};
use crate::lexical_graph::SynsetId;
use crate::model::{ModelError, Predictor, Pretrained, VqaModel};
use crate::task_discovery::TaskSpec;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("vocabulary misaligned: {0}")]
    VocabularyMisaligned(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

/// `min(#matches / 3, 1)`.
pub fn vqa_score(predicted: &str, gt: &[String]) -> f64 {
    let n = gt.iter().filter(|g| *g == predicted).count();
    (n as f64 / 3.0).min(1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuestionScore {
    pub id: u64,
    pub prediction: String,
    pub score: f64,
    pub stratum: Stratum,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot: Option<String>,
    /// Modal ground truth, the key of the per-answer table.
    pub answer: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnswerStat {
    pub questions: usize,
    pub mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub questions: usize,
    pub overall: f64,
    /// Absent when the stratum has no questions.
    pub oov: Option<f64>,
    pub in_vocab: Option<f64>,
    pub per_slot: BTreeMap<String, f64>,
    /// Keyed by stratum then slot, for slot-level OOV comparisons.
    pub per_stratum_slot: BTreeMap<String, BTreeMap<String, f64>>,
    pub per_answer: BTreeMap<String, AnswerStat>,
}

/// Scores for one model on one question set. An empty question set gives
/// `empty = true` and no aggregates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub empty: bool,
    pub aggregates: Option<Aggregates>,
    pub questions: Vec<QuestionScore>,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

impl ScoreReport {
    pub fn from_questions(questions: Vec<QuestionScore>) -> Self {
        if questions.is_empty() {
            return Self {
                empty: true,
                aggregates: None,
                questions,
            };
        }
        let of = |st: Stratum| mean(questions.iter().filter(|q| q.stratum == st).map(|q| q.score));
        let mut slots: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut strata: BTreeMap<String, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
        let mut answers: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for q in &questions {
            if let Some(s) = &q.slot {
                slots.entry(s.clone()).or_default().push(q.score);
                strata
                    .entry(q.stratum.as_str().to_string())
                    .or_default()
                    .entry(s.clone())
                    .or_default()
                    .push(q.score);
            }
            answers.entry(q.answer.clone()).or_default().push(q.score);
        }
        let avg = |v: &Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
        let aggregates = Aggregates {
            questions: questions.len(),
            overall: mean(questions.iter().map(|q| q.score)).expect("nonempty"),
            oov: of(Stratum::Oov),
            in_vocab: of(Stratum::InVocab),
            per_slot: slots.iter().map(|(k, v)| (k.clone(), avg(v))).collect(),
            per_stratum_slot: strata
                .iter()
                .map(|(k, m)| (k.clone(), m.iter().map(|(s, v)| (s.clone(), avg(v))).collect()))
                .collect(),
            per_answer: answers
                .iter()
                .map(|(k, v)| {
                    (
                        k.clone(),
                        AnswerStat {
                            questions: v.len(),
                            mean: avg(v),
                        },
                    )
                })
                .collect(),
        };
        Self {
            empty: false,
            aggregates: Some(aggregates),
            questions,
        }
    }

    /// Per-question rows: `id,prediction,score,stratum`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "id,prediction,score,stratum")?;
        for q in &self.questions {
            writeln!(
                w,
                "{},{},{},{}",
                q.id,
                csv_field(&q.prediction),
                q.score,
                q.stratum.as_str()
            )?;
        }
        Ok(())
    }

    /// Per-answer rows: `answer,questions,mean_score`.
    pub fn write_answer_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "answer,questions,mean_score")?;
        if let Some(a) = &self.aggregates {
            for (ans, s) in &a.per_answer {
                writeln!(w, "{},{},{}", csv_field(ans), s.questions, s.mean)?;
            }
        }
        Ok(())
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Number of evaluation threads: `TASKDISC_THREADS`, else the machine's
/// parallelism.
pub fn eval_threads() -> usize {
    std::env::var("TASKDISC_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Predicts with up to `threads` workers over contiguous chunks; the result
/// is independent of the thread count.
pub fn predict_parallel(
    model: &dyn Predictor,
    bank: &SceneBank,
    triples: &[&VqaTriple],
    threads: usize,
) -> Result<Vec<usize>> {
    let threads = threads.max(1).min(triples.len().max(1));
    if threads == 1 {
        return Ok(model.predict(bank, triples)?);
    }
    let size = triples.len().div_ceil(threads);
    let parts: Vec<std::result::Result<Vec<usize>, ModelError>> = std::thread::scope(|s| {
        let handles: Vec<_> = triples
            .chunks(size)
            .map(|chunk| s.spawn(move || model.predict(bank, chunk)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("prediction worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(triples.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Scores `model` on `triples`. Strata follow `vocab`'s OOV marks; `slots`
/// optionally labels question ids for the per-slot breakdown.
pub fn evaluate(
    model: &dyn Predictor,
    bank: &SceneBank,
    triples: &[&VqaTriple],
    vocab: &AnswerVocabulary,
    slots: Option<&BTreeMap<u64, String>>,
    threads: usize,
) -> Result<ScoreReport> {
    if model.vocab().answers() != vocab.answers() {
        return Err(EvalError::VocabularyMisaligned(format!(
            "model knows {} answers, split vocabulary has {}",
            model.vocab().len(),
            vocab.len()
        )));
    }
    let pred = predict_parallel(model, bank, triples, threads)?;
    let questions = triples
        .iter()
        .zip(pred)
        .map(|(t, p)| {
            let prediction = vocab.answer(p).to_string();
            QuestionScore {
                id: t.id,
                score: vqa_score(&prediction, &t.gt),
                prediction,
                stratum: Stratum::of(t, vocab),
                slot: slots.and_then(|m| m.get(&t.id).cloned()),
                answer: t.modal_answer().to_string(),
            }
        })
        .collect();
    Ok(ScoreReport::from_questions(questions))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub values: Vec<f64>,
}

pub fn summarize(values: &[f64]) -> SeedSummary {
    let n = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    SeedSummary {
        mean,
        std: var.sqrt(),
        values: values.to_vec(),
    }
}

/// Questions per synset, most similar first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalTable {
    pub entries: BTreeMap<String, Vec<(u64, f32)>>,
}

fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The `top_k` items by dot product with `query`; ties go to the smaller id.
pub fn rank_by_similarity(query: &[f32], items: &[(u64, Vec<f32>)], top_k: usize) -> Result<Vec<(u64, f32)>> {
    if let Some((id, v)) = items.iter().find(|(_, v)| v.len() != query.len()) {
        return Err(EvalError::DimensionMismatch(format!(
            "question {id} has a {}-wide feature, the task feature is {}-wide",
            v.len(),
            query.len()
        )));
    }
    let mut scored: Vec<(u64, f32)> = items.iter().map(|(id, v)| (*id, dot(query, v))).collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(top_k);
    Ok(scored)
}

/// Ranks `questions` for each synset by `τ_{η_pre}(t_w) · τ_{η_vqa}(q)`.
pub fn retrieve_questions(
    pre: &Pretrained,
    vqa: &VqaModel,
    synsets: &[SynsetId],
    questions: &[&VqaTriple],
    top_k: usize,
) -> Result<RetrievalTable> {
    let tasks: Vec<TaskSpec> = synsets.iter().map(|id| TaskSpec::Synset { id: id.clone() }).collect();
    let task_feats = pre.task_features(&tasks)?;
    let mut items = Vec::with_capacity(questions.len());
    for chunk in questions.chunks(256) {
        let f = vqa.question_features(chunk)?;
        items.extend(chunk.iter().enumerate().map(|(i, t)| (t.id, f.row(i).to_vec())));
    }
    let mut entries = BTreeMap::new();
    for (i, s) in synsets.iter().enumerate() {
        entries.insert(s.to_string(), rank_by_similarity(task_feats.row(i), &items, top_k)?);
    }
    Ok(RetrievalTable { entries })
}
