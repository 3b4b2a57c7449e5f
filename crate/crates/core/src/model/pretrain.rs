//! Pretraining the classifier and its encoders on discovered tasks.
//!
//! Every step draws quadruples, asks the [`TaskSampler`] for a task, and
//! maximizes `log p_θ(a | v_{φ_pre}(I, b), τ_{η_pre}(t))` jointly over θ,
//! φ_pre and η_pre.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use taskdisc_neural::{argmax, checkpoint, Graph, Optimizer, ParamBundle, Rule, Tensor};

use super::classifier::{head_logits, init_head, separable_logits, Head};
use super::encoders::{init_pre_encoders, pre_task, pre_visual, SceneRegions, TaskInput};
use super::{EpochLog, ModelConfig, ModelError, Result, TokenVocab};
use crate::corpus::{AnswerVocabulary, CorpusError, SceneBank, VisualQuadruple};
use crate::lexical_graph::{build_inverted_table, build_word_groups, LexicalGraph, SynsetId, WordGroupTable};
use crate::task_discovery::{blank, Mode, TaskSampler, TaskSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub epochs: usize,
    /// Quadruples drawn per epoch.
    pub samples_per_epoch: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub clip_norm: f32,
    /// Scenes with `id % holdout_every == holdout_every - 1` are held out
    /// for the accuracy check; 0 disables the holdout.
    pub holdout_every: u32,
    /// Chance of a description task in `both` mode.
    pub description_weight: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            samples_per_epoch: 6000,
            batch_size: 32,
            learning_rate: 2e-3,
            clip_norm: 5.0,
            holdout_every: 10,
            description_weight: 0.5,
        }
    }
}

pub struct PretrainData<'a> {
    pub quadruples: &'a [VisualQuadruple],
    pub bank: &'a SceneBank,
    pub graph: &'a LexicalGraph,
    pub vocab: &'a AnswerVocabulary,
    pub tokens: &'a TokenVocab,
}

/// A pretrained classifier with its pretraining encoders.
#[derive(Clone, Debug, PartialEq)]
pub struct Pretrained {
    pub head: Head,
    pub mode: Mode,
    pub model: ModelConfig,
    pub d_v: usize,
    pub params: ParamBundle,
    pub tokens: TokenVocab,
    pub synsets: Vec<SynsetId>,
    /// The pretraining answers 𝒜, in output order.
    pub answers: Vec<String>,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    kind: String,
    head: Head,
    mode: Mode,
    model: ModelConfig,
    d_v: usize,
    tokens: TokenVocab,
    synsets: Vec<SynsetId>,
    answers: Vec<String>,
}

const KIND: &str = "pretrained";

/// One held-out or sampled example, resolved to ids.
#[derive(Clone, Debug)]
struct Example {
    scene: u32,
    region: usize,
    task: TaskInput,
    answer: usize,
}

impl Pretrained {
    pub fn freeze_theta(&mut self) {
        self.params.freeze("theta");
    }

    pub fn synset_index(&self, id: &SynsetId) -> Option<usize> {
        self.synsets.iter().position(|s| s == id)
    }

    fn task_input(&self, task: &TaskSpec, synsets: &HashMap<&SynsetId, usize>) -> Result<TaskInput> {
        Ok(match task {
            TaskSpec::Description { tokens } => TaskInput::Tokens(self.tokens.encode(tokens)),
            TaskSpec::Synset { id } => TaskInput::Synset(
                *synsets
                    .get(id)
                    .ok_or_else(|| ModelError::DimensionMismatch(format!("synset {id} has no embedding")))?,
            ),
        })
    }

    fn synset_map(&self) -> HashMap<&SynsetId, usize> {
        self.synsets.iter().enumerate().map(|(i, s)| (s, i)).collect()
    }

    /// `τ_{η_pre}(t)` for each task, one row each.
    pub fn task_features(&self, tasks: &[TaskSpec]) -> Result<Tensor> {
        let map = self.synset_map();
        let inputs = tasks
            .iter()
            .map(|t| self.task_input(t, &map))
            .collect::<Result<Vec<_>>>()?;
        let mut g = Graph::new();
        let b = self.params.subset(&["eta_pre_desc", "eta_pre_synset"]).bind(&mut g);
        let tau = pre_task(&mut g, &b, &inputs)?;
        Ok(g.value(tau).clone())
    }

    /// Answer logits for `(scene, region, task)` triples.
    pub fn logits(&self, bank: &SceneBank, items: &[(u32, usize, TaskSpec)]) -> Result<Tensor> {
        let map = self.synset_map();
        let examples = items
            .iter()
            .map(|(scene, region, t)| {
                Ok(Example {
                    scene: *scene,
                    region: *region,
                    task: self.task_input(t, &map)?,
                    answer: 0,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut g = Graph::new();
        let b = self.params.bind(&mut g);
        let logits = forward_logits(&mut g, &b, self.head, bank, &examples)?;
        Ok(g.value(logits).clone())
    }

    pub fn save(&self, stem: &Path, step: u64) -> Result<()> {
        let meta = Meta {
            kind: KIND.into(),
            head: self.head,
            mode: self.mode,
            model: self.model.clone(),
            d_v: self.d_v,
            tokens: self.tokens.clone(),
            synsets: self.synsets.clone(),
            answers: self.answers.clone(),
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
            head: meta.head,
            mode: meta.mode,
            model: meta.model,
            d_v: meta.d_v,
            params,
            tokens: meta.tokens,
            synsets: meta.synsets,
            answers: meta.answers,
            seed: manifest.seed,
        })
    }
}

fn forward_parts(
    g: &mut Graph,
    b: &taskdisc_neural::Bindings,
    bank: &SceneBank,
    batch: &[Example],
) -> Result<(taskdisc_neural::Var, taskdisc_neural::Var)> {
    let scenes: Vec<u32> = batch.iter().map(|e| e.scene).collect();
    let regions = SceneRegions::gather(bank, &scenes)?;
    let query = batch
        .iter()
        .map(|e| {
            Ok(bank
                .boxes(e.scene)?
                .get(e.region)
                .copied()
                .ok_or(CorpusError::Bank(format!(
                    "scene {} has no region {}",
                    e.scene, e.region
                )))?)
        })
        .collect::<Result<Vec<_>>>()?;
    let v = pre_visual(g, b, &regions, &query)?;
    let tasks: Vec<TaskInput> = batch.iter().map(|e| e.task.clone()).collect();
    let tau = pre_task(g, b, &tasks)?;
    Ok((v, tau))
}

fn forward_logits(
    g: &mut Graph,
    b: &taskdisc_neural::Bindings,
    head: Head,
    bank: &SceneBank,
    batch: &[Example],
) -> Result<taskdisc_neural::Var> {
    let (v, tau) = forward_parts(g, b, bank, batch)?;
    head_logits(g, b, "theta", head, v, tau)
}

fn one_hot(answers: impl ExactSizeIterator<Item = usize>, n: usize) -> Tensor {
    let rows = answers.len();
    let mut t = Tensor::zeros(rows, n);
    for (i, a) in answers.enumerate() {
        t.row_mut(i)[a] = 1.0;
    }
    t
}

/// The widest synset task that singles out `answer` among the answers of
/// its own region; falls back to the narrowest group when none does.
fn canonical_synset(
    answer: &str,
    others: &BTreeSet<&str>,
    groups: &WordGroupTable,
    support: &BTreeSet<SynsetId>,
) -> Option<SynsetId> {
    let size = |s: &SynsetId| groups.get(s).map_or(0, BTreeSet::len);
    let separating = support
        .iter()
        .filter(|s| {
            groups
                .get(s)
                .is_some_and(|g| others.iter().all(|o| *o == answer || !g.contains(*o)))
        })
        .max_by(|a, b| size(a).cmp(&size(b)).then_with(|| b.cmp(a)));
    separating
        .or_else(|| {
            support
                .iter()
                .min_by(|a, b| size(a).cmp(&size(b)).then_with(|| a.cmp(b)))
        })
        .cloned()
}

/// Pretrains a head of kind `head` on tasks from `mode`. `observer` sees
/// every finished epoch with the model as it stands.
pub fn pretrain(
    data: &PretrainData<'_>,
    head: Head,
    mode: Mode,
    model: &ModelConfig,
    cfg: &PretrainConfig,
    seed: u64,
    observer: &mut dyn FnMut(&EpochLog, &Pretrained) -> Result<()>,
) -> Result<(Pretrained, Vec<EpochLog>)> {
    let d_v = data.bank.d_v();
    let answers: Vec<String> = data.vocab.answers()[..data.vocab.pretrain_len()].to_vec();
    let answer_index: HashMap<&str, usize> = answers.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();
    let groups = build_word_groups(data.graph);
    let inverted = build_inverted_table(&groups);

    let mut quads = data.quadruples.to_vec();
    data.bank.resolve_regions(&mut quads)?;
    for q in &quads {
        if !answer_index.contains_key(q.answer.as_str()) {
            return Err(CorpusError::UnknownAnswer(q.answer.clone()).into());
        }
    }
    let held_out = |q: &VisualQuadruple| cfg.holdout_every > 1 && q.scene % cfg.holdout_every == cfg.holdout_every - 1;
    let (test, train): (Vec<VisualQuadruple>, Vec<VisualQuadruple>) = quads.into_iter().partition(held_out);
    if train.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }

    let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
    init_rng.set_stream(22);
    let mut params = ParamBundle::new();
    init_head(&mut params, "theta", head, d_v, model, answers.len(), &mut init_rng)?;
    init_pre_encoders(&mut params, model, data.tokens.len(), data.graph.len(), &mut init_rng)?;
    let mut state = Pretrained {
        head,
        mode,
        model: model.clone(),
        d_v,
        params,
        tokens: data.tokens.clone(),
        synsets: data.graph.synsets().to_vec(),
        answers: answers.clone(),
        seed,
    };
    let synset_ids: HashMap<SynsetId, usize> = state.synsets.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
    let synset_refs: HashMap<&SynsetId, usize> = synset_ids.iter().map(|(s, i)| (s, *i)).collect();

    let mut region_answers: BTreeMap<(u32, usize), BTreeSet<&str>> = BTreeMap::new();
    for q in &test {
        region_answers
            .entry((q.scene, q.region.expect("resolved")))
            .or_default()
            .insert(q.answer.as_str());
    }
    let mut held = Vec::with_capacity(test.len());
    for q in &test {
        let region = q.region.expect("resolved");
        let support = inverted.get(&q.answer);
        let synset = match (mode.uses_wordnet(), support) {
            (true, Some(s)) => canonical_synset(&q.answer, &region_answers[&(q.scene, region)], &groups, s),
            _ => None,
        };
        let task = match synset {
            Some(id) => TaskSpec::Synset { id },
            None if mode.uses_descriptions() => blank(&q.description, &q.answer)?,
            None => continue,
        };
        held.push(Example {
            scene: q.scene,
            region,
            task: state.task_input(&task, &synset_refs)?,
            answer: answer_index[q.answer.as_str()],
        });
    }

    let mut sampler = TaskSampler::new(&inverted, mode, seed).with_description_weight(cfg.description_weight);
    let mut order_rng = ChaCha8Rng::seed_from_u64(seed);
    order_rng.set_stream(21);
    let mut opt = Optimizer::new(Rule::adam(), Some(cfg.clip_norm));
    let mut order: Vec<usize> = Vec::new();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let (mut loss_sum, mut seen) = (0.0f64, 0usize);
        let mut drawn = 0;
        while drawn < cfg.samples_per_epoch {
            let take = cfg.batch_size.min(cfg.samples_per_epoch - drawn);
            let mut batch = Vec::with_capacity(take);
            for _ in 0..take {
                if order.is_empty() {
                    order = (0..train.len()).collect();
                    order.shuffle(&mut order_rng);
                }
                let q = &train[order.pop().expect("refilled")];
                if let Some(t) = sampler.sample(q)? {
                    batch.push(Example {
                        scene: t.scene,
                        region: t.region,
                        task: state.task_input(&t.task, &synset_refs)?,
                        answer: answer_index[t.answer.as_str()],
                    });
                }
            }
            drawn += take;
            if batch.is_empty() {
                continue;
            }
            let mut g = Graph::new();
            let b = state.params.bind(&mut g);
            let (v, tau) = forward_parts(&mut g, &b, data.bank, &batch)?;
            let target = || one_hot(batch.iter().map(|e| e.answer), answers.len());
            let loss = match head {
                Head::TaskConditional => {
                    let logits = head_logits(&mut g, &b, "theta", head, v, tau)?;
                    g.softmax_xent(logits, target())?
                }
                Head::Separable => {
                    let (lv, lt) = separable_logits(&mut g, &b, "theta", v, tau)?;
                    let a = g.softmax_xent(lv, target())?;
                    let c = g.softmax_xent(lt, target())?;
                    g.add(a, c)?
                }
            };
            loss_sum += g.value(loss).item() as f64 * batch.len() as f64;
            seen += batch.len();
            let mut grads = g.backward(loss);
            let grads = b.gradients(&mut grads);
            opt.step(&mut state.params, &grads, cfg.learning_rate)?;
        }
        let accuracy = accuracy(&state, data.bank, &held)?;
        let log = EpochLog {
            epoch,
            loss: if seen > 0 { loss_sum / seen as f64 } else { 0.0 },
            score: accuracy,
            examples: seen,
        };
        log::info!(
            "pretrain {:?}/{} epoch {epoch}: loss {:.4}, held-out accuracy {:.4}",
            head,
            mode,
            log.loss,
            log.score
        );
        observer(&log, &state)?;
        trace.push(log);
    }
    Ok((state, trace))
}

fn accuracy(state: &Pretrained, bank: &SceneBank, held: &[Example]) -> Result<f64> {
    if held.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for chunk in held.chunks(256) {
        let mut g = Graph::new();
        let b = state.params.bind(&mut g);
        let logits = forward_logits(&mut g, &b, state.head, bank, chunk)?;
        let l = g.value(logits);
        correct += chunk
            .iter()
            .enumerate()
            .filter(|(i, e)| argmax(l.row(*i)) == e.answer)
            .count();
    }
    Ok(correct as f64 / held.len() as f64)
}

/// Held-out accuracy with caller-chosen tasks, for analysis.
pub fn task_accuracy(state: &Pretrained, bank: &SceneBank, items: &[(u32, usize, TaskSpec, String)]) -> Result<f64> {
    if items.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0;
    for chunk in items.chunks(256) {
        let keys: Vec<(u32, usize, TaskSpec)> = chunk.iter().map(|(s, r, t, _)| (*s, *r, t.clone())).collect();
        let logits = state.logits(bank, &keys)?;
        for (i, (_, _, _, a)) in chunk.iter().enumerate() {
            if state.answers[argmax(logits.row(i))] == *a {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / items.len() as f64)
}
