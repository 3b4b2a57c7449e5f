use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use taskdisc_neural::{init, softmax, Graph, Optimizer, ParamBundle, Rule, Tensor};

proptest! {
    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-50.0f32..50.0, 1..40)) {
        let p = softmax(&logits);
        let s: f64 = p.iter().map(|v| *v as f64).sum();
        prop_assert!((s - 1.0).abs() <= 1e-6);
        // Strict positivity holds as long as the spread stays within f32 exp range.
        prop_assert!(p.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn attention_weights_sum_to_one(
        rows in 1usize..8,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = Graph::new();
        let key = g.constant(init::uniform(&mut rng, 1, 5, 2.0));
        let values = g.constant(init::uniform(&mut rng, rows, 5, 2.0));
        let out = g.dot_attention(key, values).unwrap();
        let w = g.attention_weights(out).unwrap();
        let s: f64 = w.iter().map(|v| *v as f64).sum();
        prop_assert!((s - 1.0).abs() <= 1e-6);
        prop_assert!(g.value(out).is_finite());
    }

    #[test]
    fn forward_passes_stay_finite(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = Graph::new();
        let x = g.variable(init::uniform(&mut rng, 4, 6, 30.0));
        let w = g.variable(init::xavier_uniform(&mut rng, 6, 3));
        let b = g.variable(Tensor::zeros(1, 3));
        let y = g.affine(x, w, b).unwrap();
        let y = g.tanh(y);
        let p = g.softmax(y);
        let t = Tensor::filled(4, 3, 1.0 / 3.0);
        let loss = g.softmax_xent(y, t).unwrap();
        prop_assert!(g.value(p).is_finite());
        prop_assert!(g.value(loss).is_finite());
    }
}

#[test]
fn one_value_row_attends_fully() {
    let mut g = Graph::new();
    let key = g.constant(Tensor::row_vector(vec![3.0, -1.0]).unwrap());
    let values = g.constant(Tensor::row_vector(vec![0.25, 7.0]).unwrap());
    let out = g.dot_attention(key, values).unwrap();
    assert_eq!(g.attention_weights(out).unwrap(), &[1.0]);
    assert_eq!(g.value(out).data(), &[0.25, 7.0]);
}

#[test]
fn uniform_logits_give_uniform_softmax() {
    assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
}

#[test]
fn quadratic_bowl_decays_geometrically() {
    // f(w) = |w|^2, grad = 2w, so SGD with lr 0.1 multiplies w by exactly 0.8.
    let mut b = ParamBundle::new();
    b.insert("theta.w", Tensor::row_vector(vec![3.0, -4.0, 0.5]).unwrap())
        .unwrap();
    let mut opt = Optimizer::new(Rule::Sgd, None);
    let mut prev = b.get("theta.w").unwrap().norm_sq().sqrt();
    for _ in 0..100 {
        let mut g = Graph::new();
        let binds = b.bind(&mut g);
        let w = binds.var("theta.w").unwrap();
        let sq = g.mul(w, w).unwrap();
        let loss = g.sum(sq);
        let mut grads = g.backward(loss);
        let grads = binds.gradients(&mut grads);
        opt.step(&mut b, &grads, 0.1).unwrap();
        let norm = b.get("theta.w").unwrap().norm_sq().sqrt();
        if prev > 1e-30 {
            let ratio = norm / prev;
            assert!((ratio - 0.8).abs() < 1e-4, "ratio {ratio}");
        }
        prev = norm;
    }
    let start = (9.0f32 + 16.0 + 0.25).sqrt();
    assert!(prev <= start * 0.8f32.powi(100) * 1.001);
}

fn train_curve(seed: u64, freeze: bool) -> (Vec<f32>, String, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = ParamBundle::new();
    b.insert("theta.w", init::xavier_uniform(&mut rng, 4, 3)).unwrap();
    b.insert("theta.b", Tensor::zeros(1, 3)).unwrap();
    b.insert("eta.e", init::uniform(&mut rng, 5, 4, 0.5)).unwrap();
    if freeze {
        b.freeze("theta");
        b.freeze("eta");
    }
    let before = b.hash();
    let mut opt = Optimizer::new(Rule::adam(), Some(5.0));
    let mut curve = Vec::new();
    for step in 0..30 {
        let mut g = Graph::new();
        let binds = b.bind(&mut g);
        let ids = [step % 5, (step * 3) % 5, 1];
        let x = g.embed(&ids, binds.var("eta.e").unwrap()).unwrap();
        let y = g
            .affine(x, binds.var("theta.w").unwrap(), binds.var("theta.b").unwrap())
            .unwrap();
        let mut t = Tensor::zeros(3, 3);
        for (i, id) in ids.iter().enumerate() {
            t.row_mut(i)[id % 3] = 1.0;
        }
        let loss = g.softmax_xent(y, t).unwrap();
        curve.push(g.value(loss).item());
        let mut grads = g.backward(loss);
        let grads = binds.gradients(&mut grads);
        opt.step(&mut b, &grads, 0.05).unwrap();
    }
    (curve, before, b.hash())
}

#[test]
fn fixed_seed_gives_bit_identical_curves() {
    let (a, _, ha) = train_curve(9, false);
    let (b, _, hb) = train_curve(9, false);
    assert_eq!(
        a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
    assert_eq!(ha, hb);
    assert!(a.last() < a.first());
}

#[test]
fn training_with_everything_frozen_changes_nothing() {
    let (_, before, after) = train_curve(4, true);
    assert_eq!(before, after);
}
