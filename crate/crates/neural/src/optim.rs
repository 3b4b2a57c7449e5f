//! First-order update rules.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{NeuralError, Result};
use crate::params::ParamBundle;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Rule {
    Sgd,
    Adam { beta1: f32, beta2: f32, eps: f32 },
}

impl Rule {
    pub fn adam() -> Self {
        Rule::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Mutable optimizer state owned by a single trainer.
#[derive(Clone, Debug)]
pub struct Optimizer {
    rule: Rule,
    clip_norm: Option<f32>,
    steps: u64,
    moments: BTreeMap<String, (Vec<f32>, Vec<f32>)>,
}

impl Optimizer {
    pub fn new(rule: Rule, clip_norm: Option<f32>) -> Self {
        Self {
            rule,
            clip_norm,
            steps: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update. Gradients for frozen groups are ignored; every
    /// gradient name must exist in `bundle`. When a clip norm is set, the
    /// gradients of trainable tensors are rescaled jointly so their global
    /// L2 norm does not exceed it.
    pub fn step(&mut self, bundle: &mut ParamBundle, grads: &BTreeMap<String, Tensor>, lr: f32) -> Result<()> {
        for (name, g) in grads {
            let Some(p) = bundle.get(name) else {
                return Err(NeuralError::NameMismatch(format!(
                    "gradient for unknown parameter {name}"
                )));
            };
            if p.shape() != g.shape() {
                return Err(NeuralError::NameMismatch(format!(
                    "gradient shape {:?} for {name} of shape {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
        }
        let live: Vec<(&String, &Tensor)> = grads.iter().filter(|(n, _)| !bundle.is_frozen(n)).collect();
        if live.is_empty() {
            return Ok(());
        }
        let mut scale = 1.0f32;
        if let Some(max) = self.clip_norm {
            let norm = live.iter().map(|(_, g)| g.norm_sq()).sum::<f32>().sqrt();
            if norm > max {
                scale = max / norm;
            }
        }
        self.steps += 1;
        let t = self.steps as i32;
        for (name, g) in live {
            let p = bundle.get_mut(name).expect("checked above").data_mut();
            match self.rule {
                Rule::Sgd => {
                    for (w, gv) in p.iter_mut().zip(g.data()) {
                        *w -= lr * scale * gv;
                    }
                }
                Rule::Adam { beta1, beta2, eps } => {
                    let (m, v) = self
                        .moments
                        .entry(name.clone())
                        .or_insert_with(|| (vec![0.0; p.len()], vec![0.0; p.len()]));
                    let c1 = 1.0 - beta1.powi(t);
                    let c2 = 1.0 - beta2.powi(t);
                    for i in 0..p.len() {
                        let gv = g.data()[i] * scale;
                        m[i] = beta1 * m[i] + (1.0 - beta1) * gv;
                        v[i] = beta2 * v[i] + (1.0 - beta2) * gv * gv;
                        let mh = m[i] / c1;
                        let vh = v[i] / c2;
                        p[i] -= lr * mh / (vh.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(name: &str, v: f32) -> ParamBundle {
        let mut b = ParamBundle::new();
        b.insert(name, Tensor::scalar(v)).unwrap();
        b
    }

    #[test]
    fn sgd_arithmetic() {
        let mut b = one("theta.w", 1.0);
        let grads = BTreeMap::from([("theta.w".to_string(), Tensor::scalar(2.0))]);
        Optimizer::new(Rule::Sgd, Some(5.0)).step(&mut b, &grads, 0.1).unwrap();
        assert_eq!(b.get("theta.w").unwrap().item(), 0.8);
    }

    #[test]
    fn frozen_bundle_is_untouched() {
        let mut b = one("theta.w", 1.5);
        b.freeze("theta");
        let before = b.clone();
        let grads = BTreeMap::from([("theta.w".to_string(), Tensor::scalar(-7.0))]);
        let mut opt = Optimizer::new(Rule::adam(), Some(5.0));
        for _ in 0..10 {
            opt.step(&mut b, &grads, 0.1).unwrap();
        }
        assert_eq!(b, before);
        assert_eq!(b.hash(), before.hash());
    }

    #[test]
    fn unknown_gradient_name_is_rejected() {
        let mut b = one("theta.w", 1.0);
        let grads = BTreeMap::from([("eta.w".to_string(), Tensor::scalar(1.0))]);
        let err = Optimizer::new(Rule::Sgd, None).step(&mut b, &grads, 0.1);
        assert!(matches!(err, Err(NeuralError::NameMismatch(_))));
    }

    #[test]
    fn clipping_bounds_the_update() {
        let mut b = one("theta.w", 0.0);
        let grads = BTreeMap::from([("theta.w".to_string(), Tensor::scalar(100.0))]);
        Optimizer::new(Rule::Sgd, Some(5.0)).step(&mut b, &grads, 1.0).unwrap();
        assert_eq!(b.get("theta.w").unwrap().item(), -5.0);
    }

    #[test]
    fn adam_moves_against_the_gradient() {
        let mut b = one("theta.w", 0.0);
        let grads = BTreeMap::from([("theta.w".to_string(), Tensor::scalar(0.3))]);
        Optimizer::new(Rule::adam(), None).step(&mut b, &grads, 0.01).unwrap();
        // First Adam step has magnitude ~lr regardless of gradient scale.
        assert!((b.get("theta.w").unwrap().item() + 0.01).abs() < 1e-5);
    }
}
