//! Classifier heads over a visual feature `v` and a task feature `τ`.
//!
//! The task-conditional head projects both inputs to a common width,
//! multiplies them element-wise and feeds `[v; τ; pv ⊙ pτ]` through two
//! ReLU layers to answer logits. The separable head has no interaction at
//! all: a visual MLP and a task MLP each produce logits and the two are
//! summed.

use rand::Rng;
use serde::{Deserialize, Serialize};
use taskdisc_neural::init::xavier_uniform;
use taskdisc_neural::{argmax, softmax, Bindings, Graph, ParamBundle, Tensor, Var};

use super::{ModelConfig, ModelError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    TaskConditional,
    Separable,
}

fn dense<R: Rng + ?Sized>(b: &mut ParamBundle, name: &str, i: usize, o: usize, rng: &mut R) -> Result<()> {
    b.insert(format!("{name}_w"), xavier_uniform(rng, i, o))?;
    b.insert(format!("{name}_b"), Tensor::zeros(1, o))?;
    Ok(())
}

fn layer(g: &mut Graph, b: &Bindings, name: &str, x: Var) -> Result<Var> {
    let w = b.var(&format!("{name}_w"))?;
    let bias = b.var(&format!("{name}_b"))?;
    Ok(g.affine(x, w, bias)?)
}

/// Adds the parameters of a head named `group` with `n_out` outputs.
pub fn init_head<R: Rng + ?Sized>(
    bundle: &mut ParamBundle,
    group: &str,
    head: Head,
    d_v: usize,
    cfg: &ModelConfig,
    n_out: usize,
    rng: &mut R,
) -> Result<()> {
    let (k, p, h) = (cfg.task_dim, cfg.joint_dim, cfg.hidden);
    match head {
        Head::TaskConditional => {
            dense(bundle, &format!("{group}.v"), d_v, p, rng)?;
            dense(bundle, &format!("{group}.t"), k, p, rng)?;
            dense(bundle, &format!("{group}.fc1"), d_v + k + p, h, rng)?;
            dense(bundle, &format!("{group}.fc2"), h, h, rng)?;
            dense(bundle, &format!("{group}.out"), h, n_out, rng)?;
        }
        Head::Separable => {
            dense(bundle, &format!("{group}.vis_fc1"), d_v, h, rng)?;
            dense(bundle, &format!("{group}.vis_out"), h, n_out, rng)?;
            dense(bundle, &format!("{group}.task_fc1"), k, h, rng)?;
            dense(bundle, &format!("{group}.task_out"), h, n_out, rng)?;
        }
    }
    Ok(())
}

/// Second hidden layer of the task-conditional head.
pub fn joint_hidden(g: &mut Graph, b: &Bindings, group: &str, v: Var, tau: Var) -> Result<Var> {
    let pv = layer(g, b, &format!("{group}.v"), v)?;
    let pt = layer(g, b, &format!("{group}.t"), tau)?;
    let joint = g.mul(pv, pt)?;
    let x = g.concat_cols(&[v, tau, joint])?;
    let h1 = layer(g, b, &format!("{group}.fc1"), x)?;
    let h1 = g.relu(h1);
    let h2 = layer(g, b, &format!("{group}.fc2"), h1)?;
    Ok(g.relu(h2))
}

/// Visual and task logits of a separable head.
pub fn separable_logits(g: &mut Graph, b: &Bindings, group: &str, v: Var, tau: Var) -> Result<(Var, Var)> {
    let hv = layer(g, b, &format!("{group}.vis_fc1"), v)?;
    let hv = g.relu(hv);
    let lv = layer(g, b, &format!("{group}.vis_out"), hv)?;
    let ht = layer(g, b, &format!("{group}.task_fc1"), tau)?;
    let ht = g.relu(ht);
    let lt = layer(g, b, &format!("{group}.task_out"), ht)?;
    Ok((lv, lt))
}

/// Answer logits, `n x n_out`.
pub fn head_logits(g: &mut Graph, b: &Bindings, group: &str, head: Head, v: Var, tau: Var) -> Result<Var> {
    match head {
        Head::TaskConditional => {
            let h = joint_hidden(g, b, group, v, tau)?;
            layer(g, b, &format!("{group}.out"), h)
        }
        Head::Separable => {
            let (lv, lt) = separable_logits(g, b, group, v, tau)?;
            Ok(g.add(lv, lt)?)
        }
    }
}

/// `p_θ(a | v, τ)` for a single pair, using the head stored under `group`.
pub fn classify(params: &ParamBundle, group: &str, head: Head, v: &[f32], tau: &[f32]) -> Result<Vec<f32>> {
    let mut g = Graph::new();
    let b = params.subset(&[group]).bind(&mut g);
    let v = g.constant(Tensor::row_vector(v.to_vec())?);
    let tau = g.constant(Tensor::row_vector(tau.to_vec())?);
    let logits = head_logits(&mut g, &b, group, head, v, tau)?;
    Ok(softmax(g.value(logits).data()))
}

/// Index of the largest element-wise sum of two aligned logit vectors.
pub fn combine_dual(frozen: &[f32], finetuned: &[f32]) -> Result<usize> {
    if frozen.len() != finetuned.len() || frozen.is_empty() {
        return Err(ModelError::VocabularyMisaligned(format!(
            "{} frozen logits against {} fine-tuned logits",
            frozen.len(),
            finetuned.len()
        )));
    }
    let sum: Vec<f32> = frozen.iter().zip(finetuned).map(|(a, b)| a + b).collect();
    Ok(argmax(&sum))
}
