//! Question answering models and their training loop.
//!
//! | kind               | head                                   | output space |
//! |--------------------|----------------------------------------|--------------|
//! | `transfer`         | pretrained θ, frozen                   | 𝒜            |
//! | `standard`         | fresh classifier                       | ℬ            |
//! | `answer_embedding` | fresh projection scored against fixed answer vectors | all answers (trained on ℬ) |
//! | `dual`             | frozen θ plus a fine-tuned copy, logits summed | 𝒜 plus extras (trained on ℬ) |
//!
//! All kinds use the same question encoders φ_vqa and η_vqa and are trained
//! with a soft cross-entropy whose targets weight each ground-truth answer by
//! `min(count / 3, 1)`. Training keeps the parameters with the best
//! validation VQA score and stops after `patience` epochs without a gain.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use taskdisc_neural::{argmax, checkpoint, Bindings, Graph, Optimizer, ParamBundle, Rule, Tensor, Var};

use super::classifier::{head_logits, init_head, joint_hidden, Head};
use super::encoders::{init_vqa_encoders, vqa_task, vqa_visual, SceneRegions};
use super::pretrain::Pretrained;
use super::{EpochLog, ModelConfig, ModelError, Result, TokenVocab};
use crate::corpus::{AnswerVocabulary, SceneBank, VqaTriple};
use crate::eval::vqa_score;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VqaKind {
    Transfer,
    Standard,
    AnswerEmbedding,
    Dual,
}

/// Which logits a dual model answers with.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualView {
    #[default]
    Combined,
    /// The frozen classifier alone, over 𝒜.
    Frozen,
    /// The fine-tuned classifier alone.
    Finetuned,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VqaTrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub clip_norm: f32,
}

impl Default for VqaTrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 80,
            patience: 15,
            batch_size: 32,
            learning_rate: 2e-3,
            clip_norm: 5.0,
        }
    }
}

pub struct VqaData<'a> {
    pub bank: &'a SceneBank,
    pub train: &'a [&'a VqaTriple],
    pub val: &'a [&'a VqaTriple],
}

/// Anything that answers questions with indices into its vocabulary.
pub trait Predictor: Sync {
    fn vocab(&self) -> &AnswerVocabulary;
    fn predict(&self, bank: &SceneBank, triples: &[&VqaTriple]) -> Result<Vec<usize>>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct VqaModel {
    pub kind: VqaKind,
    pub head: Head,
    pub model: ModelConfig,
    pub d_v: usize,
    pub params: ParamBundle,
    pub tokens: TokenVocab,
    pub vocab: AnswerVocabulary,
    pub seed: u64,
    pub view: DualView,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    kind: String,
    vqa_kind: VqaKind,
    head: Head,
    model: ModelConfig,
    d_v: usize,
    tokens: TokenVocab,
    vocab: AnswerVocabulary,
}

const KIND: &str = "vqa";

struct Batch {
    regions: SceneRegions,
    questions: Vec<Vec<usize>>,
}

impl VqaModel {
    /// Vocabulary indices of the output columns.
    pub fn output_columns(&self, training: bool) -> Vec<usize> {
        let all_pretrain = (0..self.vocab.pretrain_len()).collect();
        match self.kind {
            VqaKind::Transfer => all_pretrain,
            VqaKind::Standard => self.vocab.trained_indices(),
            VqaKind::AnswerEmbedding if training => self.vocab.trained_indices(),
            VqaKind::AnswerEmbedding => (0..self.vocab.len()).collect(),
            VqaKind::Dual if training => self.vocab.trained_indices(),
            VqaKind::Dual if self.view == DualView::Frozen => all_pretrain,
            VqaKind::Dual => (0..self.vocab.len()).collect(),
        }
    }

    pub fn with_view(&self, view: DualView) -> Self {
        Self { view, ..self.clone() }
    }

    fn batch(&self, bank: &SceneBank, triples: &[&VqaTriple]) -> Result<Batch> {
        if bank.d_v() != self.d_v {
            return Err(ModelError::DimensionMismatch(format!(
                "scene features have width {}, model expects {}",
                bank.d_v(),
                self.d_v
            )));
        }
        let scenes: Vec<u32> = triples.iter().map(|t| t.scene).collect();
        Ok(Batch {
            regions: SceneRegions::gather(bank, &scenes)?,
            questions: triples.iter().map(|t| self.tokens.encode(&t.question)).collect(),
        })
    }

    fn encode(&self, g: &mut Graph, b: &Bindings, batch: &Batch) -> Result<(Var, Var)> {
        let v = vqa_visual(g, b, &batch.regions, &batch.questions)?;
        let tau = vqa_task(g, b, &batch.questions)?;
        Ok((v, tau))
    }

    fn logits(&self, g: &mut Graph, b: &Bindings, batch: &Batch, training: bool) -> Result<Var> {
        let (v, tau) = self.encode(g, b, batch)?;
        let n = batch.questions.len();
        match self.kind {
            VqaKind::Transfer | VqaKind::Standard => head_logits(g, b, "theta", self.head, v, tau),
            VqaKind::AnswerEmbedding => {
                let h = joint_hidden(g, b, "theta", v, tau)?;
                let w = b.var("theta.out_w")?;
                let bias = b.var("theta.out_b")?;
                let proj = g.affine(h, w, bias)?;
                let table = self.params.get("answer_embedding.table").ok_or_else(|| {
                    ModelError::Checkpoint("answer-embedding model without an embedding table".into())
                })?;
                let cols = self.output_columns(training);
                let mut t = Tensor::zeros(table.cols(), cols.len());
                for (j, &a) in cols.iter().enumerate() {
                    for (i, x) in table.row(a).iter().enumerate() {
                        t.row_mut(i)[j] = *x;
                    }
                }
                let t = g.constant(t);
                Ok(g.matmul(proj, t)?)
            }
            VqaKind::Dual => {
                let frozen = head_logits(g, b, "theta", self.head, v, tau)?;
                if !training && self.view == DualView::Frozen {
                    return Ok(frozen);
                }
                let tuned = head_logits(g, b, "theta_ft", self.head, v, tau)?;
                if !training && self.view == DualView::Finetuned {
                    return Ok(tuned);
                }
                let extras = self.vocab.len() - self.vocab.pretrain_len();
                let padded = if extras > 0 {
                    let pad = g.constant(Tensor::zeros(n, extras));
                    g.concat_cols(&[frozen, pad])?
                } else {
                    frozen
                };
                let sum = g.add(padded, tuned)?;
                if !training {
                    return Ok(sum);
                }
                // Training sees only answers with VQA supervision, so neither
                // classifier is pushed away from the out-of-vocabulary ones.
                let cols = self.output_columns(true);
                let mut select = Tensor::zeros(self.vocab.len(), cols.len());
                for (j, &a) in cols.iter().enumerate() {
                    select.row_mut(a)[j] = 1.0;
                }
                let select = g.constant(select);
                Ok(g.matmul(sum, select)?)
            }
        }
    }

    /// Output logits per question, over [`output_columns(false)`](Self::output_columns).
    pub fn predict_logits(&self, bank: &SceneBank, triples: &[&VqaTriple]) -> Result<Tensor> {
        let batch = self.batch(bank, triples)?;
        let mut g = Graph::new();
        let b = self.params.bind(&mut g);
        let l = self.logits(&mut g, &b, &batch, false)?;
        Ok(g.value(l).clone())
    }

    /// `τ_{η_vqa}(q)` per question.
    pub fn question_features(&self, triples: &[&VqaTriple]) -> Result<Tensor> {
        let questions: Vec<Vec<usize>> = triples.iter().map(|t| self.tokens.encode(&t.question)).collect();
        let mut g = Graph::new();
        let b = self.params.subset(&["eta_vqa"]).bind(&mut g);
        let tau = vqa_task(&mut g, &b, &questions)?;
        Ok(g.value(tau).clone())
    }

    /// `v_{φ_vqa}(I, q)` per question.
    pub fn visual_features(&self, bank: &SceneBank, triples: &[&VqaTriple]) -> Result<Tensor> {
        let batch = self.batch(bank, triples)?;
        let mut g = Graph::new();
        let b = self.params.subset(&["phi_vqa"]).bind(&mut g);
        let v = vqa_visual(&mut g, &b, &batch.regions, &batch.questions)?;
        Ok(g.value(v).clone())
    }

    pub fn save(&self, stem: &Path, step: u64) -> Result<()> {
        let meta = Meta {
            kind: KIND.into(),
            vqa_kind: self.kind,
            head: self.head,
            model: self.model.clone(),
            d_v: self.d_v,
            tokens: self.tokens.clone(),
            vocab: self.vocab.clone(),
        };
        checkpoint::save(stem, &self.params, self.seed, step, serde_json::to_value(meta)?)?;
        Ok(())
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let (params, manifest) = checkpoint::load(stem)?;
        let meta: Meta = serde_json::from_value(manifest.extra)?;
        if meta.kind != KIND {
            return Err(ModelError::Checkpoint(format!(
                "expected a {KIND} checkpoint, found {}",
                meta.kind
            )));
        }
        Ok(Self {
            kind: meta.vqa_kind,
            head: meta.head,
            model: meta.model,
            d_v: meta.d_v,
            params,
            tokens: meta.tokens,
            vocab: meta.vocab,
            seed: manifest.seed,
            view: DualView::Combined,
        })
    }
}

impl Predictor for VqaModel {
    fn vocab(&self) -> &AnswerVocabulary {
        &self.vocab
    }

    fn predict(&self, bank: &SceneBank, triples: &[&VqaTriple]) -> Result<Vec<usize>> {
        let cols = self.output_columns(false);
        let mut out = Vec::with_capacity(triples.len());
        for chunk in triples.chunks(128) {
            let l = self.predict_logits(bank, chunk)?;
            out.extend((0..chunk.len()).map(|i| cols[argmax(l.row(i))]));
        }
        Ok(out)
    }
}

/// Soft target row over `cols`, or `None` when no ground truth is among them.
fn soft_target(t: &VqaTriple, col_of: &HashMap<&str, usize>, n: usize) -> Option<Vec<f32>> {
    let mut row = vec![0.0f32; n];
    let mut seen = std::collections::BTreeSet::new();
    for a in &t.gt {
        if seen.insert(a.as_str()) {
            if let Some(&j) = col_of.get(a.as_str()) {
                row[j] = (t.count(a) as f32 / 3.0).min(1.0);
            }
        }
    }
    let total: f32 = row.iter().sum();
    (total > 0.0).then(|| row.into_iter().map(|x| x / total).collect())
}

pub fn mean_score(p: &dyn Predictor, bank: &SceneBank, triples: &[&VqaTriple]) -> Result<f64> {
    if triples.is_empty() {
        return Ok(0.0);
    }
    let pred = p.predict(bank, triples)?;
    let total: f64 = triples
        .iter()
        .zip(&pred)
        .map(|(t, &i)| vqa_score(p.vocab().answer(i), &t.gt))
        .sum();
    Ok(total / triples.len() as f64)
}

fn fit(
    model: &mut VqaModel,
    data: &VqaData<'_>,
    cfg: &VqaTrainConfig,
    observer: &mut dyn FnMut(&EpochLog, &VqaModel) -> Result<()>,
) -> Result<Vec<EpochLog>> {
    let cols = model.output_columns(true);
    let col_of: HashMap<&str, usize> = cols
        .iter()
        .enumerate()
        .map(|(j, &a)| (model.vocab.answer(a), j))
        .collect();
    let examples: Vec<(&VqaTriple, Vec<f32>)> = data
        .train
        .iter()
        .filter_map(|t| soft_target(t, &col_of, cols.len()).map(|r| (*t, r)))
        .collect();
    if examples.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    rng.set_stream(31);
    let mut opt = Optimizer::new(Rule::adam(), Some(cfg.clip_norm));
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut best: Option<(f64, ParamBundle)> = None;
    let mut stale = 0;
    let mut trace = Vec::new();
    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0f64;
        for idx in order.chunks(cfg.batch_size) {
            let triples: Vec<&VqaTriple> = idx.iter().map(|&i| examples[i].0).collect();
            let rows: Vec<&[f32]> = idx.iter().map(|&i| examples[i].1.as_slice()).collect();
            let target = Tensor::from_rows(&rows)?;
            let batch = model.batch(data.bank, &triples)?;
            let mut g = Graph::new();
            let b = model.params.bind(&mut g);
            let logits = model.logits(&mut g, &b, &batch, true)?;
            let loss = g.softmax_xent(logits, target)?;
            loss_sum += g.value(loss).item() as f64 * idx.len() as f64;
            let mut grads = g.backward(loss);
            let grads = b.gradients(&mut grads);
            opt.step(&mut model.params, &grads, cfg.learning_rate)?;
        }
        let score = mean_score(model, data.bank, data.val)?;
        let log = EpochLog {
            epoch,
            loss: loss_sum / examples.len() as f64,
            score,
            examples: examples.len(),
        };
        log::info!(
            "{:?} epoch {epoch}: loss {:.4}, val score {:.4}",
            model.kind,
            log.loss,
            score
        );
        observer(&log, model)?;
        trace.push(log);
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, model.params.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    if let Some((_, params)) = best {
        model.params = params;
    }
    Ok(trace)
}

fn check_alignment(pre: &Pretrained, vocab: &AnswerVocabulary, bank: &SceneBank) -> Result<()> {
    if !pre.params.is_group_frozen("theta") {
        return Err(ModelError::ThetaNotFrozen);
    }
    if vocab.answers()[..vocab.pretrain_len()] != pre.answers[..] {
        return Err(ModelError::VocabularyMisaligned(format!(
            "the classifier was pretrained on {} answers that differ from the vocabulary's {}",
            pre.answers.len(),
            vocab.pretrain_len()
        )));
    }
    if bank.d_v() != pre.d_v {
        return Err(ModelError::DimensionMismatch(format!(
            "scene features have width {}, the classifier expects {}",
            bank.d_v(),
            pre.d_v
        )));
    }
    Ok(())
}

fn init_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(32);
    rng
}

/// Learns φ_vqa and η_vqa under the pretrained classifier, whose θ must be
/// frozen and stays bit-identical.
pub fn transfer(
    pre: &Pretrained,
    vocab: &AnswerVocabulary,
    data: &VqaData<'_>,
    cfg: &VqaTrainConfig,
    seed: u64,
    observer: &mut dyn FnMut(&EpochLog, &VqaModel) -> Result<()>,
) -> Result<(VqaModel, Vec<EpochLog>)> {
    check_alignment(pre, vocab, data.bank)?;
    let mut params = pre.params.subset(&["theta"]);
    init_vqa_encoders(&mut params, &pre.model, pre.d_v, pre.tokens.len(), &mut init_rng(seed))?;
    let mut model = VqaModel {
        kind: VqaKind::Transfer,
        head: pre.head,
        model: pre.model.clone(),
        d_v: pre.d_v,
        params,
        tokens: pre.tokens.clone(),
        vocab: vocab.clone(),
        seed,
        view: DualView::Combined,
    };
    let trace = fit(&mut model, data, cfg, observer)?;
    Ok((model, trace))
}

/// End-to-end VQA model whose classifier only knows ℬ.
pub fn train_standard(
    vocab: &AnswerVocabulary,
    tokens: &TokenVocab,
    model_cfg: &ModelConfig,
    data: &VqaData<'_>,
    cfg: &VqaTrainConfig,
    seed: u64,
    observer: &mut dyn FnMut(&EpochLog, &VqaModel) -> Result<()>,
) -> Result<(VqaModel, Vec<EpochLog>)> {
    let d_v = data.bank.d_v();
    let mut rng = init_rng(seed);
    let mut params = ParamBundle::new();
    let n_out = vocab.trained_indices().len();
    init_head(
        &mut params,
        "theta",
        Head::TaskConditional,
        d_v,
        model_cfg,
        n_out,
        &mut rng,
    )?;
    init_vqa_encoders(&mut params, model_cfg, d_v, tokens.len(), &mut rng)?;
    let mut model = VqaModel {
        kind: VqaKind::Standard,
        head: Head::TaskConditional,
        model: model_cfg.clone(),
        d_v,
        params,
        tokens: tokens.clone(),
        vocab: vocab.clone(),
        seed,
        view: DualView::Combined,
    };
    let trace = fit(&mut model, data, cfg, observer)?;
    Ok((model, trace))
}

/// Fixed answer vectors for the answer-embedding baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct AnswerEmbeddings {
    dim: usize,
    vectors: HashMap<String, Vec<f32>>,
}

impl AnswerEmbeddings {
    pub fn new(pairs: Vec<(String, Vec<f32>)>) -> Result<Self> {
        let dim = pairs.first().map_or(0, |(_, v)| v.len());
        let mut vectors = HashMap::with_capacity(pairs.len());
        for (i, (w, v)) in pairs.into_iter().enumerate() {
            if v.len() != dim || dim == 0 {
                return Err(ModelError::EmbeddingFormat {
                    line: i + 1,
                    reason: format!("{} values, expected {dim}", v.len()),
                });
            }
            vectors.insert(w, v);
        }
        Ok(Self { dim, vectors })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, answer: &str) -> Option<&[f32]> {
        self.vectors.get(answer).map(Vec::as_slice)
    }

    /// Reads one vector per line. The answer is separated from its values
    /// by a tab, or, for single-word answers, by the first space.
    pub fn read<R: BufRead>(source: R) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in source.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (word, rest) = match line.split_once('\t') {
                Some(p) => p,
                None => line.split_once(' ').ok_or(ModelError::EmbeddingFormat {
                    line: i + 1,
                    reason: "no values".into(),
                })?,
            };
            let values = rest
                .split_whitespace()
                .map(|x| x.parse::<f32>())
                .collect::<std::result::Result<Vec<f32>, _>>()
                .map_err(|e| ModelError::EmbeddingFormat {
                    line: i + 1,
                    reason: e.to_string(),
                })?;
            pairs.push((word.trim().to_string(), values));
        }
        Self::new(pairs)
    }

    /// Writes the tab-separated form read by [`read`](Self::read), in `order`.
    pub fn write<W: Write>(&self, order: &[String], mut w: W) -> Result<()> {
        for a in order {
            let v = self
                .get(a)
                .ok_or_else(|| ModelError::MissingAnswerEmbedding(a.clone()))?;
            let vals: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            writeln!(w, "{a}\t{}", vals.join(" "))?;
        }
        Ok(())
    }

    /// One row per vocabulary entry.
    pub fn matrix(&self, vocab: &AnswerVocabulary) -> Result<Tensor> {
        let rows = vocab
            .answers()
            .iter()
            .map(|a| self.get(a).ok_or_else(|| ModelError::MissingAnswerEmbedding(a.clone())))
            .collect::<Result<Vec<_>>>()?;
        Ok(Tensor::from_rows(&rows)?)
    }
}

/// Maps question features to the answer-embedding space; any answer with a
/// vector can be predicted, though only ℬ is seen in training.
#[allow(clippy::too_many_arguments)]
pub fn train_answer_embedding(
    vocab: &AnswerVocabulary,
    tokens: &TokenVocab,
    embeddings: &AnswerEmbeddings,
    model_cfg: &ModelConfig,
    data: &VqaData<'_>,
    cfg: &VqaTrainConfig,
    seed: u64,
    observer: &mut dyn FnMut(&EpochLog, &VqaModel) -> Result<()>,
) -> Result<(VqaModel, Vec<EpochLog>)> {
    let table = embeddings.matrix(vocab)?;
    let d_v = data.bank.d_v();
    let mut rng = init_rng(seed);
    let mut params = ParamBundle::new();
    init_head(
        &mut params,
        "theta",
        Head::TaskConditional,
        d_v,
        model_cfg,
        embeddings.dim(),
        &mut rng,
    )?;
    init_vqa_encoders(&mut params, model_cfg, d_v, tokens.len(), &mut rng)?;
    params.insert("answer_embedding.table", table)?;
    params.freeze("answer_embedding");
    let mut model = VqaModel {
        kind: VqaKind::AnswerEmbedding,
        head: Head::TaskConditional,
        model: model_cfg.clone(),
        d_v,
        params,
        tokens: tokens.clone(),
        vocab: vocab.clone(),
        seed,
        view: DualView::Combined,
    };
    let trace = fit(&mut model, data, cfg, observer)?;
    Ok((model, trace))
}

/// Appends `extra` zero columns to an `r x c` matrix.
fn widen(t: &Tensor, extra: usize) -> Result<Tensor> {
    let rows: Vec<Vec<f32>> = (0..t.rows())
        .map(|i| {
            t.row(i)
                .iter()
                .copied()
                .chain(std::iter::repeat_n(0.0, extra))
                .collect()
        })
        .collect();
    Ok(Tensor::from_rows(&rows)?)
}

/// Trains the question encoders under two classifiers: the pretrained θ,
/// frozen, and a copy `theta_ft` that is fine-tuned and also covers the
/// VQA-only extras. Logits are summed.
pub fn train_dual(
    pre: &Pretrained,
    vocab: &AnswerVocabulary,
    data: &VqaData<'_>,
    cfg: &VqaTrainConfig,
    seed: u64,
    observer: &mut dyn FnMut(&EpochLog, &VqaModel) -> Result<()>,
) -> Result<(VqaModel, Vec<EpochLog>)> {
    check_alignment(pre, vocab, data.bank)?;
    let extras = vocab.len() - vocab.pretrain_len();
    let mut params = pre.params.subset(&["theta"]);
    let mut tuned = pre.params.subset(&["theta"]);
    tuned.rename_group("theta", "theta_ft");
    tuned.unfreeze("theta_ft");
    let names: Vec<String> = tuned
        .names()
        .filter(|n| n.ends_with("out_w") || n.ends_with("out_b"))
        .map(str::to_string)
        .collect();
    for n in names {
        let t = tuned.get_mut(&n).expect("listed");
        *t = widen(t, extras)?;
    }
    params.merge(tuned)?;
    init_vqa_encoders(&mut params, &pre.model, pre.d_v, pre.tokens.len(), &mut init_rng(seed))?;
    let mut model = VqaModel {
        kind: VqaKind::Dual,
        head: pre.head,
        model: pre.model.clone(),
        d_v: pre.d_v,
        params,
        tokens: pre.tokens.clone(),
        vocab: vocab.clone(),
        seed,
        view: DualView::Combined,
    };
    let trace = fit(&mut model, data, cfg, observer)?;
    Ok((model, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_targets_follow_the_score_rule() {
        let gt: Vec<String> = ["a", "a", "a", "a", "a", "a", "a", "b", "b", "c"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let t = VqaTriple {
            id: 0,
            question: vec![],
            scene: 0,
            gt,
        };
        let col_of = HashMap::from([("a", 0), ("b", 1), ("c", 2)]);
        let row = soft_target(&t, &col_of, 3).unwrap();
        let total = 1.0 + 2.0 / 3.0 + 1.0 / 3.0;
        assert!((row[0] - 1.0 / total).abs() < 1e-6);
        assert!((row[1] - (2.0 / 3.0) / total).abs() < 1e-6);
        let only_b = HashMap::from([("z", 0)]);
        assert!(soft_target(&t, &only_b, 1).is_none());
    }

    #[test]
    fn embedding_text_format() {
        let src = "red 1 0\ndark red\t0.5 0.5\n\n";
        let e = AnswerEmbeddings::read(src.as_bytes()).unwrap();
        assert_eq!(e.get("dark red").unwrap(), &[0.5, 0.5]);
        let mut out = Vec::new();
        e.write(&["red".into(), "dark red".into()], &mut out).unwrap();
        assert_eq!(AnswerEmbeddings::read(out.as_slice()).unwrap(), e);
        assert!(matches!(
            AnswerEmbeddings::read("red 1 x".as_bytes()),
            Err(ModelError::EmbeddingFormat { line: 1, .. })
        ));
        let vocab = AnswerVocabulary::new(vec!["red".into(), "blue".into()]).unwrap();
        assert!(matches!(e.matrix(&vocab), Err(ModelError::MissingAnswerEmbedding(a)) if a == "blue"));
    }
}
