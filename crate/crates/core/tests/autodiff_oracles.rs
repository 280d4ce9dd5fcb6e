mod common;

use common::{gradient_check, rel_err, FD_STEP, FD_TOLERANCE};
use ifnas_core::autodiff::{apply_operator, sigmoid, Graph, Var};
use ifnas_core::{OperatorKind, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tensor(rng: &mut ChaCha8Rng, shape: [usize; 4]) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn at(t: &Tensor, b: usize, c: usize, i: usize, j: usize) -> f64 {
    let [_, cc, h, w] = t.shape();
    t.data()[((b * cc + c) * h + i) * w + j]
}

fn naive_depthwise(x: &Tensor, w: &Tensor) -> Vec<f64> {
    let [b, c, h, wd] = x.shape();
    let mut out = Vec::new();
    for bi in 0..b {
        for ci in 0..c {
            for i in 0..h as i64 {
                for j in 0..wd as i64 {
                    let mut s = 0.0;
                    for di in -1..=1i64 {
                        for dj in -1..=1i64 {
                            let (y, z) = (i + di, j + dj);
                            if y >= 0 && z >= 0 && y < h as i64 && z < wd as i64 {
                                let k = w.data()[ci * 9 + ((di + 1) * 3 + dj + 1) as usize];
                                s += k * at(x, bi, ci, y as usize, z as usize);
                            }
                        }
                    }
                    out.push(s);
                }
            }
        }
    }
    out
}

fn naive_pointwise(x: &Tensor, w: &Tensor, stride: usize) -> Vec<f64> {
    let [b, c, h, wd] = x.shape();
    let co = w.shape()[0];
    let mut out = Vec::new();
    for bi in 0..b {
        for oc in 0..co {
            for i in (0..h).step_by(stride) {
                for j in (0..wd).step_by(stride) {
                    out.push((0..c).map(|ic| w.data()[oc * c + ic] * at(x, bi, ic, i, j)).sum());
                }
            }
        }
    }
    out
}

fn naive_batch_norm(x: &Tensor) -> Vec<f64> {
    let [b, c, h, w] = x.shape();
    let mut out = x.data().to_vec();
    for ci in 0..c {
        let vals: Vec<f64> = (0..b)
            .flat_map(|bi| (0..h).flat_map(move |i| (0..w).map(move |j| (bi, i, j))))
            .map(|(bi, i, j)| at(x, bi, ci, i, j))
            .collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vals.len() as f64;
        for bi in 0..b {
            for i in 0..h {
                for j in 0..w {
                    let k = ((bi * c + ci) * h + i) * w + j;
                    out[k] = (x.data()[k] - m) / (var + 1e-5).sqrt();
                }
            }
        }
    }
    out
}

fn assert_close(got: &[f64], want: &[f64], tol: f64) {
    assert_eq!(got.len(), want.len());
    for (k, (g, w)) in got.iter().zip(want).enumerate() {
        assert!((g - w).abs() <= tol, "element {k}: {g} vs {w}");
    }
}

#[test]
fn depthwise_matches_direct_convolution() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (h, w) in [(1, 1), (2, 3), (4, 4), (5, 2)] {
        let x = random_tensor(&mut rng, [2, 3, h, w]);
        let k = random_tensor(&mut rng, [3, 1, 3, 3]);
        let mut g = Graph::detached();
        let (xv, kv) = (g.constant(x.clone()).unwrap(), g.constant(k.clone()).unwrap());
        let y = g.depthwise3x3(xv, kv).unwrap();
        assert_close(g.value(y).data(), &naive_depthwise(&x, &k), 1e-12);
    }
}

#[test]
fn pointwise_matches_direct_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for stride in [1, 2, 3] {
        let x = random_tensor(&mut rng, [2, 3, 5, 4]);
        let k = random_tensor(&mut rng, [6, 3, 1, 1]);
        let mut g = Graph::detached();
        let (xv, kv) = (g.constant(x.clone()).unwrap(), g.constant(k.clone()).unwrap());
        let y = g.pointwise(xv, kv, stride).unwrap();
        assert_eq!(g.value(y).shape(), [2, 6, 5usize.div_ceil(stride), 4usize.div_ceil(stride)]);
        assert_close(g.value(y).data(), &naive_pointwise(&x, &k, stride), 1e-12);
    }
}

#[test]
fn batch_norm_matches_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_tensor(&mut rng, [4, 3, 2, 2]);
    let mut g = Graph::detached();
    let xv = g.constant(x.clone()).unwrap();
    let y = g.batch_norm(xv).unwrap();
    assert_close(g.value(y).data(), &naive_batch_norm(&x), 1e-12);
}

#[test]
fn skip_is_identity_and_sep_conv_composes() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random_tensor(&mut rng, [3, 2, 3, 3]);
    assert_eq!(apply_operator(OperatorKind::Skip, &x, &[]).unwrap(), x);
    let dw = random_tensor(&mut rng, [2, 1, 3, 3]);
    let pw = random_tensor(&mut rng, [2, 2, 1, 1]);
    let omega: Vec<f64> = dw.data().iter().chain(pw.data()).copied().collect();
    let got = apply_operator(OperatorKind::SepConv3x3, &x, &omega).unwrap();
    let relu = Tensor::from_vec(x.shape(), x.data().iter().map(|v| v.max(0.0)).collect()).unwrap();
    let d = Tensor::from_vec(x.shape(), naive_depthwise(&relu, &dw)).unwrap();
    let p = Tensor::from_vec(x.shape(), naive_pointwise(&d, &pw, 1)).unwrap();
    assert_close(got.data(), &naive_batch_norm(&p), 1e-10);
    assert!(apply_operator(OperatorKind::SepConv3x3, &x, &omega[1..]).is_err());
}

/// Central-difference check of every input element of a graph whose loss is
/// rebuilt from perturbed inputs.
fn check_graph(inputs: Vec<Tensor>, build: impl Fn(&mut Graph, &[Var]) -> Var) {
    let run = |ins: &[Tensor]| {
        let mut g = Graph::detached();
        let vars: Vec<Var> = ins.iter().map(|t| g.constant(t.clone()).unwrap()).collect();
        let loss = build(&mut g, &vars);
        (g, vars, loss)
    };
    let (g, _, loss) = run(&inputs);
    let grads = g.gradients(loss).unwrap();
    for (k, t) in inputs.iter().enumerate() {
        let analytic = grads[k].clone().unwrap_or_else(|| Tensor::zeros(t.shape()));
        for e in 0..t.len() {
            let f = |d: f64| {
                let mut ins = inputs.clone();
                ins[k].data_mut()[e] += d;
                let (g, _, l) = run(&ins);
                g.value(l).item()
            };
            let numeric = (f(FD_STEP) - f(-FD_STEP)) / (2.0 * FD_STEP);
            let r = rel_err(analytic.data()[e], numeric);
            assert!(r <= FD_TOLERANCE, "input {k} element {e}: {} vs {numeric}", analytic.data()[e]);
        }
    }
}

#[test]
fn graph_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let labels = [0, 2, 1];
    let x = random_tensor(&mut rng, [3, 3, 3, 3]);
    let dw = random_tensor(&mut rng, [3, 1, 3, 3]);
    let pw = random_tensor(&mut rng, [3, 3, 1, 1]);
    check_graph(vec![x.clone(), dw, pw.clone()], |g, v| {
        let h = g.depthwise3x3(v[0], v[1]).unwrap();
        let h = g.pointwise(h, v[2], 1).unwrap();
        let h = g.batch_norm(h).unwrap();
        let p = g.global_avg_pool(h).unwrap();
        g.cross_entropy(p, &labels).unwrap()
    });
    check_graph(vec![x.clone(), pw], |g, v| {
        let h = g.pointwise(v[0], v[1], 2).unwrap();
        let p = g.global_avg_pool(h).unwrap();
        g.cross_entropy(p, &labels).unwrap()
    });
    let dense_w = random_tensor(&mut rng, [3, 27, 1, 1]);
    let bias = random_tensor(&mut rng, [3, 1, 1, 1]);
    let s = random_tensor(&mut rng, [1, 1, 1, 1]);
    check_graph(vec![x, dense_w, bias, s], |g, v| {
        let a = g.sigmoid(v[3]).unwrap();
        let h = g.scale(v[0], a).unwrap();
        let h2 = g.sum(vec![h, v[0]]).unwrap();
        let d = g.dense(h2, v[1], v[2], [3, 1, 1]).unwrap();
        g.cross_entropy(d, &labels).unwrap()
    });
}

#[test]
fn scalar_chain_matches_hand_derivative() {
    // loss = CE([s·x, 0], class 0) with s = sigmoid(a):
    // dL/da = -(1 - softmax_0) · x · s(1 - s).
    for (a, x) in [(0.3, 1.5), (-2.0, 0.7), (1.0, -3.0)] {
        let mut g = Graph::detached();
        let av = g.constant(Tensor::scalar(a)).unwrap();
        let xv = g.constant(Tensor::from_vec([1, 2, 1, 1], vec![x, 0.0]).unwrap()).unwrap();
        let s = g.sigmoid(av).unwrap();
        let z = g.scale(xv, s).unwrap();
        let l = g.cross_entropy(z, &[0]).unwrap();
        let grads = g.gradients(l).unwrap();
        let sv = sigmoid(a);
        let p0 = 1.0 / (1.0 + (-sv * x).exp());
        let want = -(1.0 - p0) * x * sv * (1.0 - sv);
        assert!((grads[0].as_ref().unwrap().item() - want).abs() < 1e-12);
    }
}

#[test]
fn supernet_gradients_match_finite_differences() {
    for seed in 0..12 {
        let r = gradient_check(seed, 4);
        assert!(r.checked >= 9, "seed {seed}: only {} parameters checked", r.checked);
        assert!(r.max_rel <= FD_TOLERANCE, "{}", r.worst);
    }
}
