//! Central finite-difference checks for every differentiable graph op.
//!
//! The numeric side does not reuse the graph: every check carries an
//! independent `f64` reference forward pass, and the central difference
//! `(L(x+H) - L(x-H)) / 2H` is taken on that reference. The analytic side is
//! the graph's reverse pass in `f32`. The graph forward value is also checked
//! against the reference.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use taskdisc_neural::{gru_encode, init_gru, Bindings, Graph, ParamBundle, Tensor, Var};

const H: f64 = 1e-3;
const TOL: f64 = 1e-3;
const PROBES: usize = 24;
/// Below this magnitude both gradients count as zero.
const FLOOR: f64 = 1e-4;

type Build = dyn Fn(&mut Graph, &[Var]) -> Var;
type Reference = dyn Fn(&[M]) -> f64;

/// Plain `f64` row-major matrix for the reference computations.
#[derive(Clone, Debug)]
struct M {
    r: usize,
    c: usize,
    d: Vec<f64>,
}

impl M {
    fn from(t: &Tensor) -> Self {
        M {
            r: t.rows(),
            c: t.cols(),
            d: t.data().iter().map(|v| *v as f64).collect(),
        }
    }

    fn zeros(r: usize, c: usize) -> Self {
        M {
            r,
            c,
            d: vec![0.0; r * c],
        }
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.c + j]
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.d[i * self.c..(i + 1) * self.c]
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> M {
        M {
            r: self.r,
            c: self.c,
            d: self.d.iter().map(|v| f(*v)).collect(),
        }
    }

    fn zip(&self, o: &M, f: impl Fn(f64, f64) -> f64) -> M {
        assert_eq!((self.r, self.c), (o.r, o.c));
        M {
            r: self.r,
            c: self.c,
            d: self.d.iter().zip(&o.d).map(|(a, b)| f(*a, *b)).collect(),
        }
    }

    fn mm(&self, o: &M) -> M {
        assert_eq!(self.c, o.r);
        let mut out = M::zeros(self.r, o.c);
        for i in 0..self.r {
            for j in 0..o.c {
                out.d[i * o.c + j] = (0..self.c).map(|p| self.at(i, p) * o.at(p, j)).sum();
            }
        }
        out
    }

    fn bias(&self, b: &M) -> M {
        let mut out = self.clone();
        for i in 0..self.r {
            for j in 0..self.c {
                out.d[i * self.c + j] += b.d[j];
            }
        }
        out
    }

    fn cols(&self, range: std::ops::Range<usize>) -> M {
        let w = range.len();
        let mut d = Vec::with_capacity(self.r * w);
        for i in 0..self.r {
            d.extend_from_slice(&self.row(i)[range.clone()]);
        }
        M { r: self.r, c: w, d }
    }

    fn rows_of(&self, ids: &[usize]) -> M {
        let mut d = Vec::new();
        for &i in ids {
            d.extend_from_slice(self.row(i));
        }
        M {
            r: ids.len(),
            c: self.c,
            d,
        }
    }

    fn softmax_rows(&self) -> M {
        let mut out = self.clone();
        for i in 0..self.r {
            let max = self.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = self.row(i).iter().map(|v| (v - max).exp()).collect();
            let s: f64 = e.iter().sum();
            for (j, ej) in e.iter().enumerate() {
                out.d[i * self.c + j] = ej / s;
            }
        }
        out
    }
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

/// Entries bounded away from zero, for ops with a kink at zero.
fn away_from_zero(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| {
            let m = rng.random_range(0.1..1.0f32);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

fn weights(seed: u64, rows: usize, cols: usize) -> Tensor {
    random(&mut ChaCha8Rng::seed_from_u64(seed), rows, cols)
}

/// Reduces an output to a scalar with fixed random weights so every output
/// entry contributes a distinct gradient.
fn weighted_sum(g: &mut Graph, y: Var, seed: u64) -> Var {
    let v = g.value(y);
    let w = weights(seed, v.rows(), v.cols());
    let w = Tensor::new(v.shape().to_vec(), w.into_data()).unwrap();
    let w = g.constant(w);
    let p = g.mul(y, w).unwrap();
    g.sum(p)
}

fn ref_weighted_sum(y: &M, seed: u64) -> f64 {
    let w = M::from(&weights(seed, y.r, y.c));
    y.d.iter().zip(&w.d).map(|(a, b)| a * b).sum()
}

/// Returns the worst relative error over the probes.
fn check(name: &str, build: &Build, reference: &Reference, inputs: Vec<Tensor>, seed: u64) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.variable(t.clone())).collect();
    let loss = build(&mut g, &vars);
    let base: Vec<M> = inputs.iter().map(M::from).collect();
    let expected = reference(&base);
    let got = g.value(loss).item() as f64;
    assert!(
        (got - expected).abs() <= 1e-4 * expected.abs().max(1.0),
        "{name}: forward {got} vs reference {expected}"
    );

    let grads = g.backward(loss);
    let analytic: Vec<Vec<f32>> = vars
        .iter()
        .zip(&inputs)
        .map(|(v, t)| grads.get(*v).map(|g| g.data().to_vec()).unwrap_or(vec![0.0; t.len()]))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..PROBES {
        let which = rng.random_range(0..inputs.len());
        let k = rng.random_range(0..inputs[which].len());
        let mut plus = base.clone();
        plus[which].d[k] += H;
        let mut minus = base.clone();
        minus[which].d[k] -= H;
        let numeric = (reference(&plus) - reference(&minus)) / (2.0 * H);
        let a = analytic[which][k] as f64;
        let scale = a.abs().max(numeric.abs());
        let rel = if scale < FLOOR {
            0.0
        } else {
            (a - numeric).abs() / scale
        };
        worst = worst.max(rel);
    }
    println!("{name}: worst relative error {worst:.2e} over {PROBES} probes");
    worst
}

fn assert_check(name: &str, build: &Build, reference: &Reference, inputs: Vec<Tensor>, seed: u64) {
    let worst = check(name, build, reference, inputs, seed);
    assert!(worst <= TOL, "{name}: relative error {worst} > {TOL}");
}

#[test]
fn affine_5x7() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let inputs = vec![random(&mut rng, 3, 5), random(&mut rng, 5, 7), random(&mut rng, 1, 7)];
    assert_check(
        "affine",
        &|g, v| {
            let y = g.affine(v[0], v[1], v[2]).unwrap();
            weighted_sum(g, y, 11)
        },
        &|m| ref_weighted_sum(&m[0].mm(&m[1]).bias(&m[2]), 11),
        inputs,
        2,
    );
}

#[test]
fn matmul_and_bias() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let inputs = vec![random(&mut rng, 3, 6), random(&mut rng, 6, 2), random(&mut rng, 1, 2)];
    assert_check(
        "matmul+add_bias",
        &|g, v| {
            let y = g.matmul(v[0], v[1]).unwrap();
            let y = g.add_bias(y, v[2]).unwrap();
            let y = g.tanh(y);
            weighted_sum(g, y, 12)
        },
        &|m| ref_weighted_sum(&m[0].mm(&m[1]).bias(&m[2]).map(f64::tanh), 12),
        inputs,
        4,
    );
}

#[test]
fn elementwise_binary() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let inputs = vec![random(&mut rng, 4, 5), random(&mut rng, 4, 5)];
    assert_check(
        "add/sub/mul",
        &|g, v| {
            let s = g.add(v[0], v[1]).unwrap();
            let d = g.sub(v[0], v[1]).unwrap();
            let p = g.mul(s, d).unwrap();
            let p = g.mul(p, v[1]).unwrap();
            weighted_sum(g, p, 13)
        },
        &|m| {
            let s = m[0].zip(&m[1], |a, b| a + b);
            let d = m[0].zip(&m[1], |a, b| a - b);
            let p = s.zip(&d, |a, b| a * b).zip(&m[1], |a, b| a * b);
            ref_weighted_sum(&p, 13)
        },
        inputs,
        6,
    );
}

#[test]
fn scalar_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let inputs = vec![random(&mut rng, 3, 8)];
    assert_check(
        "scale/add_scalar",
        &|g, v| {
            let y = g.scale(v[0], -1.7);
            let y = g.add_scalar(y, 0.3);
            let y = g.mul(y, y).unwrap();
            weighted_sum(g, y, 14)
        },
        &|m| ref_weighted_sum(&m[0].map(|x| (-1.7f32 as f64 * x + 0.3f32 as f64).powi(2)), 14),
        inputs,
        8,
    );
}

#[test]
fn tanh_sigmoid() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let inputs = vec![random(&mut rng, 4, 6)];
    assert_check(
        "tanh",
        &|g, v| {
            let y = g.scale(v[0], 2.0);
            let y = g.tanh(y);
            weighted_sum(g, y, 15)
        },
        &|m| ref_weighted_sum(&m[0].map(|x| (2.0 * x).tanh()), 15),
        inputs.clone(),
        10,
    );
    assert_check(
        "sigmoid",
        &|g, v| {
            let y = g.scale(v[0], 3.0);
            let y = g.sigmoid(y);
            weighted_sum(g, y, 16)
        },
        &|m| ref_weighted_sum(&m[0].map(|x| sig(3.0 * x)), 16),
        inputs,
        11,
    );
}

#[test]
fn relu_away_from_kink() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let inputs = vec![away_from_zero(&mut rng, 5, 5)];
    assert_check(
        "relu",
        &|g, v| {
            let y = g.relu(v[0]);
            weighted_sum(g, y, 17)
        },
        &|m| ref_weighted_sum(&m[0].map(|x| x.max(0.0)), 17),
        inputs,
        14,
    );
}

#[test]
fn concat_and_slice() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let inputs = vec![random(&mut rng, 3, 2), random(&mut rng, 3, 4), random(&mut rng, 2, 6)];
    assert_check(
        "concat_cols/concat_rows/slice_cols",
        &|g, v| {
            let c = g.concat_cols(&[v[0], v[1]]).unwrap();
            let r = g.concat_rows(&[c, v[2]]).unwrap();
            let s = g.slice_cols(r, 1..5).unwrap();
            let s = g.mul(s, s).unwrap();
            weighted_sum(g, s, 18)
        },
        &|m| {
            let mut d = Vec::new();
            for i in 0..3 {
                d.extend_from_slice(m[0].row(i));
                d.extend_from_slice(m[1].row(i));
            }
            d.extend_from_slice(&m[2].d);
            let r = M { r: 5, c: 6, d };
            ref_weighted_sum(&r.cols(1..5).map(|x| x * x), 18)
        },
        inputs,
        16,
    );
}

#[test]
fn gather_and_segment_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let inputs = vec![random(&mut rng, 6, 4)];
    assert_check(
        "embed/segment_mean",
        &|g, v| {
            // Repeated ids accumulate gradient into the same row.
            let e = g.embed(&[0, 3, 3, 5, 1], v[0]).unwrap();
            let m = g.segment_mean(e, &[0..2, 2..5]).unwrap();
            let m = g.tanh(m);
            weighted_sum(g, m, 19)
        },
        &|m| {
            let e = m[0].rows_of(&[0, 3, 3, 5, 1]);
            let mut out = M::zeros(2, 4);
            for (i, seg) in [0..2usize, 2..5].into_iter().enumerate() {
                let n = seg.len() as f64;
                for r in seg {
                    for j in 0..4 {
                        out.d[i * 4 + j] += e.at(r, j) / n;
                    }
                }
            }
            ref_weighted_sum(&out.map(f64::tanh), 19)
        },
        inputs,
        18,
    );
}

#[test]
fn select_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let inputs = vec![random(&mut rng, 4, 3), random(&mut rng, 4, 3)];
    let mask = [true, false, false, true];
    assert_check(
        "select_rows",
        &move |g, v| {
            let s = g.select_rows(v[0], v[1], &mask).unwrap();
            let s = g.mul(s, v[0]).unwrap();
            weighted_sum(g, s, 20)
        },
        &move |m| {
            let mut s = m[0].clone();
            for (i, take) in mask.iter().enumerate() {
                if *take {
                    s.d[i * 3..i * 3 + 3].copy_from_slice(m[1].row(i));
                }
            }
            ref_weighted_sum(&s.zip(&m[0], |a, b| a * b), 20)
        },
        inputs,
        20,
    );
}

#[test]
fn softmax_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let inputs = vec![random(&mut rng, 3, 5)];
    assert_check(
        "softmax",
        &|g, v| {
            let s = g.scale(v[0], 2.0);
            let p = g.softmax(s);
            weighted_sum(g, p, 21)
        },
        &|m| ref_weighted_sum(&m[0].map(|x| 2.0 * x).softmax_rows(), 21),
        inputs,
        22,
    );
}

#[test]
fn softmax_cross_entropy() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let inputs = vec![random(&mut rng, 4, 6)];
    // Mix of one-hot and soft targets.
    let mut t = Tensor::zeros(4, 6);
    t.row_mut(0)[2] = 1.0;
    t.row_mut(1)[0] = 0.25;
    t.row_mut(1)[5] = 0.75;
    t.row_mut(2).iter_mut().for_each(|x| *x = 1.0 / 6.0);
    t.row_mut(3)[4] = 1.0;
    let tm = M::from(&t);
    assert_check(
        "softmax_xent",
        &move |g, v| {
            let s = g.scale(v[0], 2.0);
            g.softmax_xent(s, t.clone()).unwrap()
        },
        &move |m| {
            let p = m[0].map(|x| 2.0 * x).softmax_rows();
            -p.zip(&tm, |p, t| t * p.ln()).d.iter().sum::<f64>() / 4.0
        },
        inputs,
        24,
    );
}

fn ref_attend(q: &M, k: &M, v: &M, segments: &[std::ops::Range<usize>]) -> M {
    let mut out = M::zeros(q.r, v.c);
    for (i, seg) in segments.iter().enumerate() {
        let scores: Vec<f64> = seg
            .clone()
            .map(|r| q.row(i).iter().zip(k.row(r)).map(|(a, b)| a * b).sum())
            .collect();
        let w = M {
            r: 1,
            c: scores.len(),
            d: scores,
        }
        .softmax_rows();
        for (n, r) in seg.clone().enumerate() {
            for j in 0..v.c {
                out.d[i * v.c + j] += w.d[n] * v.at(r, j);
            }
        }
    }
    out
}

#[test]
fn segmented_attention() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let inputs = vec![random(&mut rng, 2, 3), random(&mut rng, 5, 3), random(&mut rng, 5, 4)];
    assert_check(
        "attend",
        &|g, v| {
            let q = g.scale(v[0], 2.0);
            let y = g.attend(q, v[1], v[2], &[0..3, 3..5]).unwrap();
            weighted_sum(g, y, 22)
        },
        &|m| ref_weighted_sum(&ref_attend(&m[0].map(|x| 2.0 * x), &m[1], &m[2], &[0..3, 3..5]), 22),
        inputs,
        26,
    );
}

#[test]
fn dot_attention_values_as_keys() {
    let mut rng = ChaCha8Rng::seed_from_u64(27);
    let inputs = vec![random(&mut rng, 1, 4), random(&mut rng, 4, 4)];
    assert_check(
        "dot_attention",
        &|g, v| {
            let y = g.dot_attention(v[0], v[1]).unwrap();
            weighted_sum(g, y, 23)
        },
        &|m| ref_weighted_sum(&ref_attend(&m[0], &m[1], &m[1], std::slice::from_ref(&(0..4))), 23),
        inputs,
        28,
    );
}

#[test]
fn mean_reduction_and_fan_out() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let inputs = vec![random(&mut rng, 3, 3)];
    assert_check(
        "mean + fan-out",
        &|g, v| {
            // `x` feeds three consumers; gradients must add up.
            let a = g.tanh(v[0]);
            let b = g.mul(v[0], a).unwrap();
            let c = g.add(b, v[0]).unwrap();
            g.mean(c)
        },
        &|m| m[0].d.iter().map(|x| x * x.tanh() + x).sum::<f64>() / 9.0,
        inputs,
        30,
    );
}

/// Reference GRU over one sequence; parameters in bundle name order
/// (`b`, `u_h`, `u_zr`, `w_x`), then the embedding table.
fn ref_gru(m: &[M], seq: &[usize]) -> Vec<f64> {
    let (b, u_h, u_zr, w_x, table) = (&m[0], &m[1], &m[2], &m[3], &m[4]);
    let hdim = u_h.r;
    let mut h = M::zeros(1, hdim);
    for &id in seq {
        let x = table.rows_of(&[id]);
        let gx = x.mm(w_x).bias(b);
        let gh = h.mm(u_zr);
        let z = gx.cols(0..hdim).zip(&gh.cols(0..hdim), |a, b| sig(a + b));
        let r = gx.cols(hdim..2 * hdim).zip(&gh.cols(hdim..2 * hdim), |a, b| sig(a + b));
        let rh = r.zip(&h, |a, b| a * b);
        let cand = gx.cols(2 * hdim..3 * hdim).zip(&rh.mm(u_h), |a, b| (a + b).tanh());
        let step = z.zip(&cand.zip(&h, |c, h| c - h), |z, d| z * d);
        h = h.zip(&step, |a, b| a + b);
    }
    h.d
}

#[test]
fn gru_every_parameter_length_four() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut bundle = ParamBundle::new();
    init_gru(&mut bundle, "enc", 3, 4, &mut rng).unwrap();
    // Nonzero bias so its gradient is exercised away from the init point.
    bundle
        .get_mut("enc.b")
        .unwrap()
        .data_mut()
        .iter_mut()
        .for_each(|b| *b = rng.random_range(-0.5..0.5));
    let names: Vec<String> = bundle.names().map(str::to_string).collect();
    assert_eq!(names, ["enc.b", "enc.u_h", "enc.u_zr", "enc.w_x"]);
    let table = random(&mut rng, 5, 3);
    let mut inputs: Vec<Tensor> = names.iter().map(|n| bundle.get(n).unwrap().clone()).collect();
    inputs.push(table);
    let seqs = vec![vec![1, 4, 0, 2], vec![3, 3]];
    let build = {
        let seqs = seqs.clone();
        move |g: &mut Graph, v: &[Var]| -> Var {
            let map: BTreeMap<String, Var> = names.iter().cloned().zip(v.iter().copied()).collect();
            let binds = Bindings::from_vars(map);
            let h = gru_encode(g, &binds, "enc", v[4], &seqs).unwrap();
            weighted_sum(g, h, 24)
        }
    };
    let reference = move |m: &[M]| -> f64 {
        let d: Vec<f64> = seqs.iter().flat_map(|s| ref_gru(m, s)).collect();
        ref_weighted_sum(&M { r: seqs.len(), c: 4, d }, 24)
    };
    // Several probe rounds so every parameter tensor gets sampled.
    for (i, seed) in (40..44).enumerate() {
        let worst = check(&format!("gru round {i}"), &build, &reference, inputs.clone(), seed);
        assert!(worst <= TOL, "gru: relative error {worst} > {TOL}");
    }
}
