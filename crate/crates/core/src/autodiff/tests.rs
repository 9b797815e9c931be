//! Finite-difference checks for every tape operation.

use std::rc::Rc;

use proptest::prelude::*;

use super::*;
use crate::error::Error;
use crate::rng::Rng;

fn random(rows: usize, cols: usize, rng: &mut Rng) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.uniform_in(-1.0, 1.0)).collect()).unwrap()
}

/// Largest relative error between tape and central-difference gradients of
/// `sum(weights ⊙ op(inputs))` with respect to every input.
fn op_error(
    inputs: &[Tensor],
    op: impl Fn(&mut Graph, &[Var]) -> Var,
    seed: u64,
) -> f64 {
    let mut rng = Rng::seeded(seed);
    let probe = {
        let mut g = Graph::new();
        let vs: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
        let out = op(&mut g, &vs);
        let o = g.value(out);
        random(o.rows(), o.cols(), &mut rng)
    };
    let eval = |xs: &[Tensor]| {
        let mut g = Graph::new();
        let vs: Vec<Var> = xs.iter().map(|t| g.variable(t.clone())).collect();
        let out = op(&mut g, &vs);
        let w = g.constant(probe.clone());
        let prod = g.mul(out, w).unwrap();
        let loss = g.sum(prod);
        (g, vs, loss)
    };
    let (g, vs, loss) = eval(inputs);
    let adj = g.backward_full(loss).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (k, v) in vs.iter().enumerate() {
        let analytic = adj[v.index()].clone().unwrap_or_else(|| Tensor::zeros(inputs[k].shape()));
        for j in 0..inputs[k].len() {
            let mut xs = inputs.to_vec();
            xs[k].data_mut()[j] += h;
            let (gp, _, lp) = eval(&xs);
            xs[k].data_mut()[j] -= 2.0 * h;
            let (gm, _, lm) = eval(&xs);
            let numeric = (gp.value(lp).item().unwrap() - gm.value(lm).item().unwrap()) / (2.0 * h);
            worst = worst.max(relative_error(analytic.data()[j], numeric, 1e-8));
        }
    }
    worst
}

#[test]
fn sum_gradient_is_ones() {
    let mut g = Graph::new();
    let x = g.variable(Tensor::matrix(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.0, 9.0]).unwrap());
    let s = g.sum(x);
    let adj = g.backward_full(s).unwrap();
    assert_eq!(adj[x.index()].as_ref().unwrap().data(), &[1.0; 6]);
}

#[test]
fn squared_norm_of_wx_gradient() {
    // d ||W x||² / dW = 2 (W x) xᵀ
    let w0 = Tensor::matrix(2, 3, vec![0.5, -1.0, 2.0, 1.5, 0.25, -0.75]).unwrap();
    let x0 = Tensor::matrix(3, 1, vec![1.0, 2.0, -1.0]).unwrap();
    let mut store = ParamStore::new();
    let wid = store.add("w", w0.clone());
    let mut g = Graph::new();
    let w = g.param(&store, wid);
    let x = g.constant(x0.clone());
    let wx = g.matmul(w, x).unwrap();
    let sq = g.square(wx);
    let loss = g.sum(sq);
    let grads = g.backward(loss, &store).unwrap();
    let wx_v = [0.5 - 2.0 - 2.0, 1.5 + 0.5 + 0.75];
    let mut expected = vec![];
    for r in wx_v {
        for c in x0.data() {
            expected.push(2.0 * r * c);
        }
    }
    assert_eq!(grads.get(wid).data(), expected.as_slice());
}

#[test]
fn non_scalar_root_is_contract_error() {
    let mut g = Graph::new();
    let x = g.variable(Tensor::zeros(&[2, 2]));
    assert!(matches!(g.backward_full(x), Err(Error::Contract(_))));
}

#[test]
fn untouched_parameter_gets_zero_gradient() {
    let mut store = ParamStore::new();
    let a = store.add("a", Tensor::scalar(2.0));
    let b = store.add("b", Tensor::matrix(2, 2, vec![1.0; 4]).unwrap());
    let mut g = Graph::new();
    let av = g.param(&store, a);
    let sq = g.square(av);
    let loss = g.sum(sq);
    let grads = g.backward(loss, &store).unwrap();
    assert_eq!(grads.get(a).data(), &[4.0]);
    assert_eq!(grads.get(b).data(), &[0.0; 4]);
    assert_eq!(grads.get(b).shape(), &[2, 2]);
}

#[test]
fn shared_parameter_accumulates() {
    // (p * p) through two separate leaves of the same parameter: d/dp = 2p.
    let mut store = ParamStore::new();
    let p = store.add("p", Tensor::scalar(3.0));
    let mut g = Graph::new();
    let a = g.param(&store, p);
    let b = g.param(&store, p);
    let prod = g.mul(a, b).unwrap();
    let loss = g.sum(prod);
    assert_eq!(g.backward(loss, &store).unwrap().get(p).data(), &[6.0]);
}

#[test]
fn linear_matches_finite_differences() {
    let mut rng = Rng::seeded(3);
    let ins = [random(4, 3, &mut rng), random(3, 5, &mut rng), random(1, 5, &mut rng)];
    let e = op_error(&ins, |g, v| g.linear(v[0], v[1], v[2]).unwrap(), 1);
    assert!(e < 1e-6, "{e}");
}

#[test]
fn matmuls_match_finite_differences() {
    let mut rng = Rng::seeded(4);
    let ins = [random(3, 4, &mut rng), random(4, 2, &mut rng)];
    assert!(op_error(&ins, |g, v| g.matmul(v[0], v[1]).unwrap(), 2) < 1e-6);
    let ins = [random(3, 4, &mut rng), random(5, 4, &mut rng)];
    assert!(op_error(&ins, |g, v| g.matmul_nt(v[0], v[1]).unwrap(), 3) < 1e-6);
}

#[test]
fn elementwise_ops_match_finite_differences() {
    let mut rng = Rng::seeded(5);
    let a = random(3, 3, &mut rng);
    let b = random(3, 3, &mut rng);
    let pos = Tensor::new(a.shape().to_vec(), a.data().iter().map(|x| x.abs() + 0.5).collect()).unwrap();
    let pair = [a.clone(), b];
    assert!(op_error(&pair, |g, v| g.add(v[0], v[1]).unwrap(), 1) < 1e-6);
    assert!(op_error(&pair, |g, v| g.sub(v[0], v[1]).unwrap(), 2) < 1e-6);
    assert!(op_error(&pair, |g, v| g.mul(v[0], v[1]).unwrap(), 3) < 1e-6);
    let one = [a];
    assert!(op_error(&one, |g, v| g.scale(v[0], -1.7), 4) < 1e-6);
    assert!(op_error(&one, |g, v| g.div_const(v[0], 3.1), 4) < 1e-6);
    assert!(op_error(&one, |g, v| g.tanh(v[0]), 5) < 1e-6);
    assert!(op_error(&one, |g, v| g.exp(v[0]), 6) < 1e-6);
    assert!(op_error(&one, |g, v| g.square(v[0]), 7) < 1e-6);
    assert!(op_error(&[pos], |g, v| g.sqrt(v[0]), 8) < 1e-6);
}

#[test]
fn structural_ops_match_finite_differences() {
    let mut rng = Rng::seeded(6);
    let ins = [random(3, 2, &mut rng), random(3, 4, &mut rng)];
    assert!(op_error(&ins, |g, v| g.concat_cols(&[v[0], v[1]]).unwrap(), 1) < 1e-6);
    let one = [random(3, 5, &mut rng)];
    assert!(op_error(&one, |g, v| g.slice_cols(v[0], 1, 4).unwrap(), 2) < 1e-6);
}

#[test]
fn segment_ops_match_finite_differences() {
    let mut rng = Rng::seeded(7);
    let offsets: Rc<[usize]> = Rc::from(vec![0, 2, 3, 6]);
    let ins = [random(6, 1, &mut rng), random(6, 3, &mut rng)];
    let o1 = offsets.clone();
    assert!(op_error(&ins[..1], move |g, v| g.segment_softmax(v[0], o1.clone()).unwrap(), 1) < 1e-6);
    let o2 = offsets.clone();
    assert!(
        op_error(&ins, move |g, v| g.segment_weighted_sum(v[0], v[1], o2.clone()).unwrap(), 2)
            < 1e-6
    );
    let o3 = offsets;
    let pooled = move |g: &mut Graph, v: &[Var]| {
        let a = g.segment_softmax(v[0], o3.clone()).unwrap();
        g.segment_weighted_sum(a, v[1], o3.clone()).unwrap()
    };
    assert!(op_error(&ins, pooled, 3) < 1e-6);
}

#[test]
fn bad_segments_rejected() {
    let mut g = Graph::new();
    let x = g.variable(Tensor::zeros(&[4, 1]));
    for bad in [vec![0, 2], vec![1, 4], vec![0, 2, 2, 4], vec![0]] {
        assert!(g.segment_softmax(x, Rc::from(bad)).is_err());
    }
}

#[test]
fn mlp_gradients_match_finite_differences() {
    let mut store = ParamStore::new();
    let mut rng = Rng::seeded(8);
    let net = Mlp::new(&mut store, "net", &[3, 7, 5, 2], &mut rng).unwrap();
    let x = random(4, 3, &mut rng);
    let target = random(4, 2, &mut rng);
    let report = grad_check(&store, 1e-5, |g, s| {
        let xv = g.constant(x.clone());
        let y = net.forward(g, s, xv)?;
        let t = g.constant(target.clone());
        let d = g.sub(y, t)?;
        let sq = g.square(d);
        Ok(g.sum(sq))
    })
    .unwrap();
    assert_eq!(report.components, net.num_params());
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}

#[test]
fn grad_check_linear_function_is_exact() {
    let mut store = ParamStore::new();
    store.add("a", Tensor::matrix(1, 3, vec![0.5, -2.0, 4.0]).unwrap());
    let report = grad_check(&store, 1e-5, |g, s| {
        let a = g.param(s, ParamId(0));
        let w = g.constant(Tensor::matrix(1, 3, vec![1.0, 2.0, -3.0]).unwrap());
        let p = g.mul(a, w)?;
        Ok(g.sum(p))
    })
    .unwrap();
    assert!(report.max_rel_error < 1e-10, "{report:?}");
}

#[test]
fn grad_check_dead_parameter_reports_zero() {
    let mut store = ParamStore::new();
    store.add("used", Tensor::scalar(1.0));
    store.add("dead", Tensor::scalar(5.0));
    let report = grad_check(&store, 1e-5, |g, s| {
        let a = g.param(s, ParamId(0));
        Ok(g.sum(a))
    })
    .unwrap();
    assert_eq!(report.components, 2);
    assert!(report.max_rel_error < 1e-10);
    assert_eq!(relative_error(0.0, 0.0, 1e-8), 0.0);
}

#[test]
fn forward_and_backward_are_deterministic() {
    let run = || {
        let mut store = ParamStore::new();
        let mut rng = Rng::seeded(9);
        let net = Mlp::new(&mut store, "net", &[2, 16, 16, 3], &mut rng).unwrap();
        let x = random(10, 2, &mut rng);
        let mut g = Graph::new();
        let xv = g.constant(x);
        let y = net.forward(&mut g, &store, xv).unwrap();
        let sq = g.square(y);
        let l = g.sum(sq);
        let grads = g.backward(l, &store).unwrap();
        grads.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(xs in proptest::collection::vec(-30.0f64..30.0, 1..40), cut in 0usize..40) {
        let n = xs.len();
        let cut = cut % n;
        let offsets: Vec<usize> = if cut == 0 { vec![0, n] } else { vec![0, cut, n] };
        let mut g = Graph::new();
        let x = g.constant(Tensor::matrix(n, 1, xs).unwrap());
        let y = g.segment_softmax(x, Rc::from(offsets.clone())).unwrap();
        let yv = g.value(y).data();
        for w in offsets.windows(2) {
            let s: f64 = yv[w[0]..w[1]].iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(yv[w[0]..w[1]].iter().all(|&p| p > 0.0));
        }
    }

    #[test]
    fn tanh_mlp_gradients_on_random_inputs(seed in 0u64..1000) {
        let mut store = ParamStore::new();
        let mut rng = Rng::seeded(seed);
        let net = Mlp::new(&mut store, "net", &[2, 4, 3], &mut rng).unwrap();
        let x = random(3, 2, &mut rng);
        let report = grad_check(&store, 1e-5, |g, s| {
            let xv = g.constant(x.clone());
            let y = net.forward(g, s, xv)?;
            let e = g.exp(y);
            Ok(g.sum(e))
        }).unwrap();
        prop_assert!(report.max_rel_error < 1e-4);
    }
}
