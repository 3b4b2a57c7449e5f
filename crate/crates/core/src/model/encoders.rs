//! Visual and task encoders for pretraining and for VQA.

use std::ops::Range;

use rand::Rng;
use taskdisc_neural::init::{uniform, xavier_uniform};
use taskdisc_neural::{gru_encode, init_gru, Bindings, Graph, ParamBundle, Tensor, Var};

use super::{ModelConfig, Result};
use crate::corpus::{BoundingBox, SceneBank};

const EMBED_SCALE: f32 = 0.5;
/// Box centres are mapped to `SCALE * (c - 0.5)` before the attention keys.
const BOX_SCALE: f32 = 4.0;

/// Region features of a batch of scenes, stacked, with one row range per
/// scene.
#[derive(Clone, Debug)]
pub struct SceneRegions {
    pub features: Tensor,
    pub boxes: Vec<BoundingBox>,
    pub segments: Vec<Range<usize>>,
}

impl SceneRegions {
    pub fn gather(bank: &SceneBank, scenes: &[u32]) -> Result<Self> {
        let mut data = Vec::new();
        let mut boxes = Vec::new();
        let mut segments = Vec::with_capacity(scenes.len());
        for &s in scenes {
            let start = boxes.len();
            data.extend_from_slice(bank.regions(s)?);
            boxes.extend_from_slice(bank.boxes(s)?);
            segments.push(start..boxes.len());
        }
        let features = Tensor::matrix(boxes.len(), bank.d_v(), data)?;
        Ok(Self {
            features,
            boxes,
            segments,
        })
    }
}

fn box_key(b: &BoundingBox) -> [f32; 2] {
    [
        BOX_SCALE * (b[0] + b[2] / 2.0 - 0.5),
        BOX_SCALE * (b[1] + b[3] / 2.0 - 0.5),
    ]
}

fn box_keys(boxes: &[BoundingBox]) -> Result<Tensor> {
    let rows: Vec<[f32; 2]> = boxes.iter().map(box_key).collect();
    Ok(Tensor::from_rows(&rows)?)
}

pub fn init_pre_encoders<R: Rng + ?Sized>(
    bundle: &mut ParamBundle,
    cfg: &ModelConfig,
    n_tokens: usize,
    n_synsets: usize,
    rng: &mut R,
) -> Result<()> {
    bundle.insert("phi_pre.wq", xavier_uniform(rng, 2, cfg.attention_dim))?;
    bundle.insert("phi_pre.wk", xavier_uniform(rng, 2, cfg.attention_dim))?;
    bundle.insert("eta_pre_desc.emb", uniform(rng, n_tokens, cfg.word_dim, EMBED_SCALE))?;
    init_gru(bundle, "eta_pre_desc.gru", cfg.word_dim, cfg.task_dim, rng)?;
    bundle.insert(
        "eta_pre_synset.table",
        uniform(rng, n_synsets, cfg.task_dim, EMBED_SCALE),
    )?;
    Ok(())
}

pub fn init_vqa_encoders<R: Rng + ?Sized>(
    bundle: &mut ParamBundle,
    cfg: &ModelConfig,
    d_v: usize,
    n_tokens: usize,
    rng: &mut R,
) -> Result<()> {
    bundle.insert("phi_vqa.emb", uniform(rng, n_tokens, cfg.word_dim, EMBED_SCALE))?;
    bundle.insert("phi_vqa.wq", xavier_uniform(rng, cfg.word_dim, cfg.attention_dim))?;
    bundle.insert("phi_vqa.wk", xavier_uniform(rng, d_v, cfg.attention_dim))?;
    bundle.insert("eta_vqa.emb", uniform(rng, n_tokens, cfg.word_dim, EMBED_SCALE))?;
    init_gru(bundle, "eta_vqa.gru", cfg.word_dim, cfg.task_dim, rng)?;
    Ok(())
}

/// `v_{φ_pre}(I, b)`: attention over each scene's regions keyed by box
/// position, one query box per scene.
pub fn pre_visual(g: &mut Graph, b: &Bindings, regions: &SceneRegions, query: &[BoundingBox]) -> Result<Var> {
    let q = g.constant(box_keys(query)?);
    let k = g.constant(box_keys(&regions.boxes)?);
    let wq = b.var("phi_pre.wq")?;
    let wk = b.var("phi_pre.wk")?;
    let q = g.matmul(q, wq)?;
    let k = g.matmul(k, wk)?;
    let values = g.constant(regions.features.clone());
    Ok(g.attend(q, k, values, &regions.segments)?)
}

/// A task specification resolved to ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TaskInput {
    Tokens(Vec<usize>),
    Synset(usize),
}

/// `τ_{η_pre}(t)` for a batch mixing both kinds of task.
pub fn pre_task(g: &mut Graph, b: &Bindings, tasks: &[TaskInput]) -> Result<Var> {
    let mut seqs = Vec::new();
    let mut synsets = Vec::new();
    for t in tasks {
        match t {
            TaskInput::Tokens(s) => seqs.push(s.clone()),
            TaskInput::Synset(i) => synsets.push(*i),
        }
    }
    let mut parts = Vec::new();
    if !seqs.is_empty() {
        let emb = b.var("eta_pre_desc.emb")?;
        parts.push(gru_encode(g, b, "eta_pre_desc.gru", emb, &seqs)?);
    }
    if !synsets.is_empty() {
        let table = b.var("eta_pre_synset.table")?;
        parts.push(g.gather_rows(table, &synsets)?);
    }
    if parts.len() == 1 && (synsets.is_empty() || seqs.is_empty()) {
        return Ok(parts[0]);
    }
    let stacked = g.concat_rows(&parts)?;
    let (mut di, mut si) = (0, seqs.len());
    let order: Vec<usize> = tasks
        .iter()
        .map(|t| match t {
            TaskInput::Tokens(_) => {
                di += 1;
                di - 1
            }
            TaskInput::Synset(_) => {
                si += 1;
                si - 1
            }
        })
        .collect();
    Ok(g.gather_rows(stacked, &order)?)
}

/// `v_{φ_vqa}(I, q)`: attention over each scene's regions, keyed by the
/// mean embedding of the question.
pub fn vqa_visual(g: &mut Graph, b: &Bindings, regions: &SceneRegions, questions: &[Vec<usize>]) -> Result<Var> {
    let emb = b.var("phi_vqa.emb")?;
    let flat: Vec<usize> = questions.iter().flatten().copied().collect();
    let mut spans = Vec::with_capacity(questions.len());
    let mut at = 0;
    for q in questions {
        spans.push(at..at + q.len());
        at += q.len();
    }
    let words = g.embed(&flat, emb)?;
    let bag = g.segment_mean(words, &spans)?;
    let wq = b.var("phi_vqa.wq")?;
    let wk = b.var("phi_vqa.wk")?;
    let q = g.matmul(bag, wq)?;
    let values = g.constant(regions.features.clone());
    let k = g.matmul(values, wk)?;
    Ok(g.attend(q, k, values, &regions.segments)?)
}

/// `τ_{η_vqa}(q)`.
pub fn vqa_task(g: &mut Graph, b: &Bindings, questions: &[Vec<usize>]) -> Result<Var> {
    let emb = b.var("eta_vqa.emb")?;
    Ok(gru_encode(g, b, "eta_vqa.gru", emb, questions)?)
}
