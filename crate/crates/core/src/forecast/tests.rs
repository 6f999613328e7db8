use proptest::prelude::*;
use rand_distr::{Distribution, Normal};

use super::*;
use crate::autodiff::{finite_difference_check, AdamState, ParamStore, RngStream, Tape, Tensor, Var};

fn random(shape: &[usize], rng: &mut RngStream) -> Tensor {
    let n = shape.iter().product();
    let normal = Normal::new(0.0, 1.0).unwrap();
    Tensor::new(shape.to_vec(), (0..n).map(|_| normal.sample(rng)).collect()).unwrap()
}

fn random_adj(n: usize, rng: &mut RngStream) -> Tensor {
    let mut a = random(&[n, n], rng).map(|v| if v > 0.0 { v.abs() } else { 0.0 });
    for i in 0..n {
        a.set(&[i, i], 0.0);
    }
    a
}

fn matmul(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * m];
    for i in 0..n {
        for l in 0..k {
            for j in 0..m {
                c[i * m + j] += a[i * k + l] * b[l * m + j];
            }
        }
    }
    c
}

/// Dense evaluation of the order-2 diffusion sum with explicit matrix powers.
fn dense_diffusion(z: &[f64], a: &[f64], w: &[f64], n: usize, din: usize, dout: usize) -> Vec<f64> {
    let mut out_deg = vec![0.0; n];
    let mut in_deg = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            out_deg[i] += a[i * n + j];
            in_deg[j] += a[i * n + j];
        }
    }
    let inv = |d: f64| if d == 0.0 { 0.0 } else { 1.0 / d };
    let so: Vec<f64> = (0..n * n).map(|k| a[k] * inv(out_deg[k / n])).collect();
    let si: Vec<f64> = (0..n * n).map(|k| a[k] * inv(in_deg[k / n])).collect();
    let mut out = vec![0.0; n * dout];
    let block = din * dout;
    for (s_idx, s) in [so, si].iter().enumerate() {
        let s2 = matmul(s, s, n, n, n);
        for (k, pow) in [s.clone(), s2].iter().enumerate() {
            let sz = matmul(pow, z, n, n, din);
            let wk = &w[(s_idx * 2 + k) * block..(s_idx * 2 + k + 1) * block];
            for (o, v) in out.iter_mut().zip(matmul(&sz, wk, n, din, dout)) {
                *o += v;
            }
        }
    }
    out
}

fn run_conv(z: &Tensor, a: &Tensor, w: &Tensor) -> Tensor {
    let mut tape = Tape::new();
    let z = tape.constant(z.clone());
    let a = tape.constant(a.clone());
    let w = tape.constant(w.clone());
    let y = graph_diffusion_conv(&mut tape, z, a, w, 2).unwrap();
    tape.value(y).clone()
}

#[test]
fn diffusion_of_empty_graph_is_zero() {
    let mut rng = RngStream::new(1);
    let y = run_conv(&random(&[4, 3], &mut rng), &Tensor::zeros([4, 4]), &random(&[12, 2], &mut rng));
    assert!(y.data().iter().all(|&v| v == 0.0));
}

#[test]
fn diffusion_with_self_loops_sums_all_blocks() {
    let mut rng = RngStream::new(2);
    let z = random(&[3, 2], &mut rng);
    let w = random(&[8, 2], &mut rng);
    let y = run_conv(&z, &Tensor::eye(3), &w);
    let mut wsum = vec![0.0; 4];
    for blk in w.data().chunks(4) {
        wsum.iter_mut().zip(blk).for_each(|(s, v)| *s += v);
    }
    let expected = matmul(z.data(), &wsum, 3, 2, 2);
    for (a, b) in y.data().iter().zip(&expected) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn diffusion_on_directed_path_matches_dense() {
    let mut rng = RngStream::new(3);
    let mut a = Tensor::zeros([3, 3]);
    a.set(&[1, 0], 1.0);
    a.set(&[2, 1], 1.0);
    let z = random(&[3, 2], &mut rng);
    let w = random(&[8, 3], &mut rng);
    let y = run_conv(&z, &a, &w);
    let d = dense_diffusion(z.data(), a.data(), w.data(), 3, 2, 3);
    for (x, e) in y.data().iter().zip(&d) {
        assert!((x - e).abs() < 1e-12);
    }
}

#[test]
fn diffusion_rejects_negative_weights() {
    let mut a = Tensor::zeros([2, 2]);
    a.set(&[0, 1], -1.0);
    let mut tape = Tape::new();
    let z = tape.constant(Tensor::ones([2, 1]));
    let a = tape.constant(a);
    let w = tape.constant(Tensor::ones([4, 1]));
    assert!(graph_diffusion_conv(&mut tape, z, a, w, 2).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn diffusion_matches_dense_on_random_graphs(seed in 0u64..10_000) {
        let mut rng = RngStream::new(seed);
        let a = random_adj(5, &mut rng);
        let z = random(&[5, 3], &mut rng);
        let w = random(&[12, 2], &mut rng);
        let y = run_conv(&z, &a, &w);
        let d = dense_diffusion(z.data(), a.data(), w.data(), 5, 3, 2);
        for (x, e) in y.data().iter().zip(&d) {
            prop_assert!((x - e).abs() < 1e-10);
        }
    }
}

fn zero_params(store: &mut ParamStore) {
    for t in store.tensors_mut() {
        t.data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
}

fn cell_step(store: &ParamStore, cell: &DcrnnCell, z: &Tensor, h: &Tensor, a: &Tensor) -> Tensor {
    let mut tape = Tape::new();
    let p = store.bind(&mut tape);
    let a = tape.constant(a.clone());
    let sup = diffusion_supports(&mut tape, a).unwrap();
    let z = tape.constant(z.clone());
    let h = tape.constant(h.clone());
    let out = cell.step(&mut tape, &p, &sup, z, h).unwrap();
    tape.value(out).clone()
}

#[test]
fn dcrnn_empty_graph_halves_hidden_state() {
    let mut rng = RngStream::new(4);
    let mut store = ParamStore::new();
    let cell = DcrnnCell::new(&mut store, "c", 1, 4, &mut rng);
    *store.get_mut(cell.b_ru) = Tensor::zeros([8]);
    let h = random(&[1, 3, 4], &mut rng);
    let out = cell_step(&store, &cell, &random(&[1, 3, 1], &mut rng), &h, &Tensor::zeros([3, 3]));
    for (o, x) in out.data().iter().zip(h.data()) {
        assert!((o - 0.5 * x).abs() < 1e-15);
    }
}

#[test]
fn dcrnn_saturated_update_gate_carries_state() {
    let mut rng = RngStream::new(5);
    let mut store = ParamStore::new();
    let cell = DcrnnCell::new(&mut store, "c", 1, 4, &mut rng);
    let b = store.get_mut(cell.b_ru);
    b.data_mut()[4..].iter_mut().for_each(|v| *v = 50.0);
    let h = random(&[2, 3, 4], &mut rng);
    let out = cell_step(&store, &cell, &random(&[2, 3, 1], &mut rng), &h, &random_adj(3, &mut rng));
    assert!(out.max_abs_diff(&h) < 1e-12);
}

fn permute_nodes(t: &Tensor, perm: &[usize]) -> Tensor {
    // axis 1 of [B, N, ...]
    let s = t.shape();
    let (b, n) = (s[0], s[1]);
    let inner: usize = s[2..].iter().product();
    let mut out = vec![0.0; t.numel()];
    for bi in 0..b {
        for (new, &old) in perm.iter().enumerate() {
            let src = (bi * n + old) * inner;
            let dst = (bi * n + new) * inner;
            out[dst..dst + inner].copy_from_slice(&t.data()[src..src + inner]);
        }
    }
    Tensor::new(s.to_vec(), out).unwrap()
}

fn permute_adj(a: &Tensor, perm: &[usize]) -> Tensor {
    let n = perm.len();
    let mut out = Tensor::zeros([n, n]);
    for i in 0..n {
        for j in 0..n {
            out.set(&[i, j], a.at(&[perm[i], perm[j]]));
        }
    }
    out
}

#[test]
fn dcrnn_step_is_equivariant() {
    let mut rng = RngStream::new(6);
    let mut store = ParamStore::new();
    let cell = DcrnnCell::new(&mut store, "c", 1, 3, &mut rng);
    let z = random(&[2, 4, 1], &mut rng);
    let h = random(&[2, 4, 3], &mut rng);
    let a = random_adj(4, &mut rng);
    let perm = [2, 0, 3, 1];
    let base = cell_step(&store, &cell, &z, &h, &a);
    let moved = cell_step(&store, &cell, &permute_nodes(&z, &perm), &permute_nodes(&h, &perm), &permute_adj(&a, &perm));
    assert!(moved.max_abs_diff(&permute_nodes(&base, &perm)) < 1e-12);
}

/// Model under test: forward closure over a fresh tape.
type Forward<'a> = Box<dyn Fn(&mut Tape, &crate::autodiff::Bound, Var, Var) -> crate::Result<Var> + 'a>;

fn predict(store: &ParamStore, f: &Forward, windows: &Tensor, adj: &Tensor) -> Tensor {
    let mut tape = Tape::new();
    let p = store.bind(&mut tape);
    let x = tape.constant(windows.clone());
    let a = tape.constant(adj.clone());
    let y = f(&mut tape, &p, x, a).unwrap();
    tape.value(y).clone()
}

#[test]
fn dcrnn_constant_rollout_from_output_bias() {
    let mut rng = RngStream::new(7);
    let mut store = ParamStore::new();
    let m = Dcrnn::new(&mut store, 6, 4, &mut rng);
    zero_params(&mut store);
    let beta = m.output.bias.unwrap();
    *store.get_mut(beta) = Tensor::vector(vec![0.7]);
    let f: Forward = Box::new(|t, p, x, a| m.forward(t, p, x, a));
    let y = predict(&store, &f, &Tensor::zeros([2, 3, 6]), &random_adj(3, &mut rng));
    assert_eq!(y.shape(), &[2, 3, HORIZON]);
    assert!(y.data().iter().all(|&v| v == 0.7));
}

#[test]
fn dcrnn_symmetric_nodes_get_identical_forecasts() {
    let mut rng = RngStream::new(8);
    let mut store = ParamStore::new();
    let m = Dcrnn::new(&mut store, 5, 4, &mut rng);
    let row = random(&[5], &mut rng);
    let other = random(&[5], &mut rng);
    let mut data = row.data().to_vec();
    data.extend_from_slice(row.data());
    data.extend_from_slice(other.data());
    let x = Tensor::new([1, 3, 5], data).unwrap();
    let a = Tensor::new([3, 3], vec![0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0]).unwrap();
    let f: Forward = Box::new(|t, p, x, a| m.forward(t, p, x, a));
    let y = predict(&store, &f, &x, &a);
    for h in 0..HORIZON {
        assert!((y.at(&[0, 0, h]) - y.at(&[0, 1, h])).abs() < 1e-12);
    }
}

fn train_steps(store: &mut ParamStore, f: &Forward, x: &Tensor, a: &Tensor, target: &Tensor, steps: usize, lr: f64) -> Vec<f64> {
    let mut adam = AdamState::new(store, lr);
    let mask = vec![true; target.numel()];
    let mut losses = Vec::new();
    for _ in 0..steps {
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let xv = tape.constant(x.clone());
        let av = tape.constant(a.clone());
        let y = f(&mut tape, &p, xv, av).unwrap();
        let loss = tape.masked_mae(y, target, &mask).unwrap();
        losses.push(tape.value(loss).item());
        let mut g = tape.backward(loss).unwrap();
        let grads: Vec<Tensor> = p.vars().iter().map(|&v| g.take(v).unwrap()).collect();
        adam.step(store, &grads).unwrap();
    }
    losses
}

#[test]
fn dcrnn_one_step_reduces_batch_loss() {
    let mut rng = RngStream::new(9);
    let mut store = ParamStore::new();
    let m = Dcrnn::new(&mut store, 4, 4, &mut rng);
    let x = random(&[2, 3, 4], &mut rng);
    let target = random(&[2, 3, HORIZON], &mut rng);
    let a = random_adj(3, &mut rng);
    let f: Forward = Box::new(|t, p, x, a| m.forward(t, p, x, a));
    let losses = train_steps(&mut store, &f, &x, &a, &target, 2, 1e-2);
    assert!(losses[1] < losses[0]);
}

#[test]
fn dcrnn_prefix_consistency() {
    let mut rng = RngStream::new(10);
    let mut store = ParamStore::new();
    let m = Dcrnn::new(&mut store, 4, 4, &mut rng);
    let x = random(&[1, 3, 4], &mut rng);
    let a = random_adj(3, &mut rng);
    let full = {
        let f: Forward = Box::new(|t, p, x, a| m.forward(t, p, x, a));
        predict(&store, &f, &x, &a)
    };
    for h in [3, 6] {
        let short = m.clone().with_horizon(h);
        let f: Forward = Box::new(|t, p, x, a| short.forward(t, p, x, a));
        let y = predict(&store, &f, &x, &a);
        for i in 0..3 {
            for s in 0..h {
                assert_eq!(y.at(&[0, i, s]), full.at(&[0, i, s]));
            }
        }
    }
}

fn gdn_model(n: usize, w: usize, d: usize, seed: u64) -> (ParamStore, GdnForecaster) {
    let mut rng = RngStream::new(seed);
    let mut store = ParamStore::new();
    let v = store.glorot("v", n, d, &mut rng);
    let m = GdnForecaster::new(&mut store, v, w, d, &mut rng);
    (store, m)
}

fn gdn_attention(store: &ParamStore, m: &GdnForecaster, x: &Tensor, a: &Tensor) -> (Tensor, Tensor) {
    let mut tape = Tape::new();
    let p = store.bind(&mut tape);
    let xv = tape.constant(x.clone());
    let av = tape.constant(a.clone());
    let (alpha, h) = m.attend(&mut tape, &p, xv, av).unwrap();
    (tape.value(alpha).clone(), tape.value(h).clone())
}

#[test]
fn gdn_empty_graph_attends_to_self() {
    let (store, m) = gdn_model(3, 4, 5, 11);
    let x = random(&[1, 3, 4], &mut RngStream::new(1));
    let (alpha, h) = gdn_attention(&store, &m, &x, &Tensor::zeros([3, 3]));
    assert_eq!(alpha.data(), Tensor::eye(3).data());
    let wz = matmul(x.data(), store.get(m.w).data(), 3, 4, 5);
    for (a, b) in h.data().iter().zip(&wz) {
        assert!((a - b.max(0.0)).abs() < 1e-12);
    }
}

#[test]
fn gdn_identical_mutual_nodes_attend_uniformly() {
    let (mut store, m) = gdn_model(2, 3, 4, 12);
    let v = store.get(m.v).data()[..4].to_vec();
    let both: Vec<f64> = v.iter().chain(&v).copied().collect();
    *store.get_mut(m.v) = Tensor::new([2, 4], both).unwrap();
    let x = Tensor::new([1, 2, 3], vec![0.1, 0.5, -0.3, 0.1, 0.5, -0.3]).unwrap();
    let a = Tensor::new([2, 2], vec![0.0, 1.0, 1.0, 0.0]).unwrap();
    let (alpha, _) = gdn_attention(&store, &m, &x, &a);
    assert!(alpha.data().iter().all(|&v| (v - 0.5).abs() < 1e-12));
}

#[test]
fn gdn_three_node_hand_evaluation() {
    let (mut store, m) = gdn_model(3, 2, 2, 13);
    *store.get_mut(m.w) = Tensor::new([2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    *store.get_mut(m.v) = Tensor::new([3, 2], vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
    *store.get_mut(m.a_dst) = Tensor::new([4, 1], vec![0.5, 0.0, 1.0, 0.0]).unwrap();
    *store.get_mut(m.a_src) = Tensor::new([4, 1], vec![0.0, -1.0, 0.0, 2.0]).unwrap();
    let x = Tensor::new([1, 3, 2], vec![1.0, 2.0, -1.0, 0.5, 0.0, 3.0]).unwrap();
    // node 0 aggregates from 1 and 2; node 1 from 2; node 2 only itself
    let a = Tensor::new([3, 3], vec![0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
    let (alpha, h) = gdn_attention(&store, &m, &x, &a);

    let z = [[1.0, 2.0], [-1.0, 0.5], [0.0, 3.0]];
    let v = [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
    let g: Vec<[f64; 4]> = (0..3).map(|i| [v[i][0], v[i][1], z[i][0], z[i][1]]).collect();
    let a_full = [0.5, 0.0, 1.0, 0.0, 0.0, -1.0, 0.0, 2.0];
    let score = |i: usize, j: usize| {
        let s: f64 = (0..4).map(|k| a_full[k] * g[i][k] + a_full[4 + k] * g[j][k]).sum();
        if s > 0.0 { s } else { 0.2 * s }
    };
    let nbrs: [&[usize]; 3] = [&[0, 1, 2], &[1, 2], &[2]];
    for i in 0..3 {
        let ex: Vec<f64> = nbrs[i].iter().map(|&j| score(i, j).exp()).collect();
        let total: f64 = ex.iter().sum();
        let mut hi = [0.0; 2];
        for (k, &j) in nbrs[i].iter().enumerate() {
            let w = ex[k] / total;
            assert!((alpha.at(&[0, i, j]) - w).abs() < 1e-12);
            hi[0] += w * z[j][0];
            hi[1] += w * z[j][1];
        }
        for c in 0..2 {
            assert!((h.at(&[0, i, c]) - hi[c].max(0.0)).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn gdn_attention_rows_sum_to_one(seed in 0u64..10_000) {
        let (store, m) = gdn_model(5, 4, 3, seed);
        let mut rng = RngStream::new(seed + 1);
        let x = random(&[2, 5, 4], &mut rng);
        let a = random_adj(5, &mut rng);
        let (alpha, _) = gdn_attention(&store, &m, &x, &a);
        for row in alpha.data().chunks(5) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn mtgnn_inert_graph_path_matches_temporal_only() {
    let mut rng = RngStream::new(14);
    let mut store = ParamStore::new();
    let m = MtgnnForecaster::new(&mut store, 16, 4, &mut rng).unwrap();
    let x = random(&[2, 3, 16], &mut rng);
    let f: Forward = Box::new(|t, p, x, a| m.forward(t, p, x, a));
    let empty = predict(&store, &f, &x, &Tensor::zeros([3, 3]));
    let mut inert = store.clone();
    for blk in &m.blocks {
        *inert.get_mut(blk.graph_w) = Tensor::zeros([4, 4, 1]);
    }
    let dense = predict(&inert, &f, &x, &random_adj(3, &mut rng));
    assert!(empty.max_abs_diff(&dense) < 1e-12);
    // node forecasts are then independent of the other nodes
    let mut x2 = x.clone();
    x2.set(&[0, 2, 5], 9.0);
    let moved = predict(&inert, &f, &x2, &random_adj(3, &mut rng));
    for h in 0..HORIZON {
        assert_eq!(moved.at(&[0, 0, h]), dense.at(&[0, 0, h]));
    }
}

#[test]
fn mtgnn_short_window_is_padded() {
    let mut rng = RngStream::new(15);
    let mut store = ParamStore::new();
    let m = MtgnnForecaster::new(&mut store, 8, 4, &mut rng).unwrap();
    assert_eq!(receptive_field(), 13);
    let f: Forward = Box::new(|t, p, x, a| m.forward(t, p, x, a));
    let y = predict(&store, &f, &random(&[1, 4, 8], &mut rng), &random_adj(4, &mut rng));
    assert_eq!(y.shape(), &[1, 4, HORIZON]);
    assert!(MtgnnForecaster::new(&mut store, 0, 4, &mut rng).is_err());
}

#[test]
fn mtgnn_overfits_single_batch() {
    let mut rng = RngStream::new(16);
    let mut store = ParamStore::new();
    let m = MtgnnForecaster::new(&mut store, 13, 8, &mut rng).unwrap();
    let x = random(&[2, 5, 13], &mut rng);
    let target = random(&[2, 5, HORIZON], &mut rng);
    let a = random_adj(5, &mut rng);
    let f: Forward = Box::new(|t, p, x, a| m.forward(t, p, x, a));
    let losses = train_steps(&mut store, &f, &x, &a, &target, 50, 3e-3);
    assert!(losses[49] < 0.7 * losses[0], "{losses:?}");
    let ups = losses.windows(2).filter(|w| w[1] > w[0]).count();
    assert!(ups <= 5, "{losses:?}");
}

fn onehots(b: usize, pairs: usize, edge: impl Fn(usize) -> bool) -> Tensor {
    let data = (0..b * pairs).flat_map(|k| if edge(k % pairs) { [0.0, 1.0] } else { [1.0, 0.0] }).collect();
    Tensor::new([b, pairs, 2], data).unwrap()
}

#[test]
fn nri_silent_pairs_isolate_nodes() {
    let mut rng = RngStream::new(17);
    let mut store = ParamStore::new();
    let m = NriDecoder::new(&mut store, 3, 4, 5, 2, &mut rng).unwrap();
    let f: Forward = Box::new(|t, p, x, a| m.forward(t, p, x, a));
    let types = onehots(1, 6, |_| false);
    let x = random(&[1, 3, 4], &mut rng);
    let mut x2 = x.clone();
    x2.set(&[0, 1, 2], 5.0);
    let y1 = predict(&store, &f, &x, &types);
    let y2 = predict(&store, &f, &x2, &types);
    for h in 0..HORIZON {
        assert_eq!(y1.at(&[0, 0, h]), y2.at(&[0, 0, h]));
        assert_eq!(y1.at(&[0, 2, h]), y2.at(&[0, 2, h]));
    }
    let full = onehots(1, 6, |_| true);
    let y3 = predict(&store, &f, &x2, &full);
    let y4 = predict(&store, &f, &x, &full);
    assert_ne!(y3.at(&[0, 0, 0]), y4.at(&[0, 0, 0]));
}

#[test]
fn nri_zero_window_is_a_fixed_point() {
    let mut rng = RngStream::new(18);
    let mut store = ParamStore::new();
    let m = NriDecoder::new(&mut store, 3, 4, 5, 2, &mut rng).unwrap();
    for id in store.ids().collect::<Vec<_>>() {
        if store.name(id).ends_with(".b") {
            let s = store.get(id).shape().to_vec();
            *store.get_mut(id) = Tensor::zeros(s);
        }
    }
    let f: Forward = Box::new(|t, p, x, a| m.forward(t, p, x, a));
    let y = predict(&store, &f, &Tensor::zeros([2, 3, 4]), &onehots(2, 6, |k| k % 2 == 0));
    assert!(y.data().iter().all(|&v| v == 0.0));
}

#[test]
fn nri_hand_set_message_sum() {
    // window 1, hidden 1, every MLP weight 1 and bias 0
    let mut rng = RngStream::new(19);
    let mut store = ParamStore::new();
    let m = NriDecoder::new(&mut store, 3, 1, 1, 2, &mut rng).unwrap().with_horizon(1);
    for id in store.ids().collect::<Vec<_>>() {
        let s = store.get(id).shape().to_vec();
        let fill = if store.name(id).ends_with(".w") { 1.0 } else { 0.0 };
        *store.get_mut(id) = Tensor::full(s, fill);
    }
    let x = Tensor::new([1, 3, 1], vec![1.0, 2.0, 3.0]).unwrap();
    // edges 0 -> 1 and 2 -> 1 only (pairs: (0,1) idx 0, (2,1) idx 5)
    let types = onehots(1, 6, |k| k == 0 || k == 5);
    let f: Forward = Box::new(|t, p, x, a| m.forward(t, p, x, a));
    let y = predict(&store, &f, &x, &types);
    let relu = |v: f64| v.max(0.0);
    let msg = |s: f64, r: f64| relu(s + r);
    let agg = [0.0, msg(1.0, 2.0) + msg(3.0, 2.0), 0.0];
    for i in 0..3 {
        let zi = x.data()[i];
        let delta = relu(zi + agg[i]);
        assert!((y.at(&[0, i, 0]) - (zi + delta)).abs() < 1e-12);
    }
}

#[test]
fn nri_rejects_malformed_onehots() {
    let mut rng = RngStream::new(20);
    let mut store = ParamStore::new();
    let m = NriDecoder::new(&mut store, 3, 4, 5, 2, &mut rng).unwrap();
    let mut tape = Tape::new();
    let p = store.bind(&mut tape);
    let x = tape.constant(Tensor::zeros([1, 3, 4]));
    let t = tape.constant(Tensor::ones([1, 6, 2]));
    assert!(m.forward(&mut tape, &p, x, t).is_err());
}

#[test]
fn lstm_u_series_are_independent() {
    let mut rng = RngStream::new(21);
    let mut store = ParamStore::new();
    let m = LstmU::new(&mut store, 3, 5, 4, &mut rng);
    let f: Forward = Box::new(|t, p, x, _| m.forward(t, p, x));
    let x = random(&[2, 3, 5], &mut rng);
    let mut x2 = x.clone();
    x2.set(&[1, 1, 3], 4.0);
    let a = Tensor::zeros([3, 3]);
    let y1 = predict(&store, &f, &x, &a);
    let y2 = predict(&store, &f, &x2, &a);
    for b in 0..2 {
        for i in [0, 2] {
            for h in 0..HORIZON {
                assert_eq!(y1.at(&[b, i, h]), y2.at(&[b, i, h]));
            }
        }
    }
    assert_ne!(y1.at(&[1, 1, 0]), y2.at(&[1, 1, 0]));
}

#[test]
fn joint_lstm_couples_series() {
    let mut rng = RngStream::new(22);
    let mut store = ParamStore::new();
    let m = JointLstm::new(&mut store, 3, 5, 4, &mut rng);
    let mut tape = Tape::new();
    let p = store.bind(&mut tape);
    let x = tape.leaf(random(&[1, 3, 5], &mut rng));
    let y = m.forward(&mut tape, &p, x).unwrap();
    let y0 = tape.slice(y, 1, 0, 1).unwrap();
    let s = tape.sum(y0, None).unwrap();
    let g = tape.backward(s).unwrap();
    let gx = g.get(x).unwrap();
    let cross: f64 = (0..5).map(|t| gx.at(&[0, 2, t]).abs()).sum();
    assert!(cross > 0.0);
}

#[test]
fn lstms_map_zero_to_zero() {
    let mut rng = RngStream::new(23);
    let mut store = ParamStore::new();
    let j = JointLstm::new(&mut store, 3, 4, 4, &mut rng);
    let u = LstmU::new(&mut store, 3, 4, 4, &mut rng);
    zero_params(&mut store);
    let x = Tensor::zeros([2, 3, 4]);
    let a = Tensor::zeros([3, 3]);
    let fj: Forward = Box::new(|t, p, x, _| j.forward(t, p, x));
    let fu: Forward = Box::new(|t, p, x, _| u.forward(t, p, x));
    assert!(predict(&store, &fj, &x, &a).data().iter().all(|&v| v == 0.0));
    assert!(predict(&store, &fu, &x, &a).data().iter().all(|&v| v == 0.0));
}

fn assert_equivariant(store: &ParamStore, f: &Forward, n: usize, w: usize, seed: u64) {
    let mut rng = RngStream::new(seed);
    let x = random(&[2, n, w], &mut rng);
    let a = random_adj(n, &mut rng);
    let perm: Vec<usize> = (0..n).rev().collect();
    let base = predict(store, f, &x, &a);
    let moved = predict(store, f, &permute_nodes(&x, &perm), &permute_adj(&a, &perm));
    assert!(moved.max_abs_diff(&permute_nodes(&base, &perm)) < 1e-10);
}

#[test]
fn graph_forecasters_are_equivariant() {
    let mut rng = RngStream::new(24);
    let mut store = ParamStore::new();
    let d = Dcrnn::new(&mut store, 5, 4, &mut rng);
    let mt = MtgnnForecaster::new(&mut store, 5, 4, &mut rng).unwrap();
    let f: Forward = Box::new(|t, p, x, a| d.forward(t, p, x, a));
    assert_equivariant(&store, &f, 4, 5, 1);
    let f: Forward = Box::new(|t, p, x, a| mt.forward(t, p, x, a));
    assert_equivariant(&store, &f, 4, 5, 2);

    let mut store = ParamStore::new();
    let nri = NriDecoder::new(&mut store, 4, 5, 4, 2, &mut rng).unwrap();
    let x = random(&[1, 4, 5], &mut rng);
    let types = onehots(1, 12, |k| k % 3 == 0);
    let f: Forward = Box::new(|t, p, x, a| nri.forward(t, p, x, a));
    let base = predict(&store, &f, &x, &types);
    // reversing node order maps pair (i, j) to (3-i, 3-j)
    let pairs = crate::graph::PairIndex::new(4);
    let mut moved_types = vec![0.0; 24];
    for k in 0..12 {
        let (s, r) = (3 - pairs.senders()[k], 3 - pairs.receivers()[k]);
        let dst = (0..12).find(|&q| pairs.senders()[q] == s && pairs.receivers()[q] == r).unwrap();
        moved_types[2 * dst..2 * dst + 2].copy_from_slice(&types.data()[2 * k..2 * k + 2]);
    }
    let perm = [3, 2, 1, 0];
    let moved = predict(&store, &f, &permute_nodes(&x, &perm), &Tensor::new([1, 12, 2], moved_types).unwrap());
    assert!(moved.max_abs_diff(&permute_nodes(&base, &perm)) < 1e-10);
}

#[test]
fn gdn_and_lstm_u_equivariant_with_permuted_node_parameters() {
    let perm = [2, 0, 1];
    let (store, m) = gdn_model(3, 4, 3, 25);
    let mut moved_store = store.clone();
    let v = store.get(m.v).clone().reshape([1, 3, 3]).unwrap();
    *moved_store.get_mut(m.v) = permute_nodes(&v, &perm).reshape([3, 3]).unwrap();
    let mut rng = RngStream::new(26);
    let x = random(&[2, 3, 4], &mut rng);
    let a = random_adj(3, &mut rng);
    let f: Forward = Box::new(|t, p, x, a| m.forward(t, p, x, a));
    let base = predict(&store, &f, &x, &a);
    let moved = predict(&moved_store, &f, &permute_nodes(&x, &perm), &permute_adj(&a, &perm));
    assert!(moved.max_abs_diff(&permute_nodes(&base, &perm)) < 1e-10);

    let mut store = ParamStore::new();
    let u = LstmU::new(&mut store, 3, 4, 2, &mut rng);
    let mut moved_store = store.clone();
    for id in store.ids().collect::<Vec<_>>() {
        let t = store.get(id);
        let s = t.shape().to_vec();
        let as_batch = t.clone().reshape([1, s[0], s[1..].iter().product()]).unwrap();
        *moved_store.get_mut(id) = permute_nodes(&as_batch, &perm).reshape(s).unwrap();
    }
    let f: Forward = Box::new(|t, p, x, _| u.forward(t, p, x));
    let base = predict(&store, &f, &x, &a);
    let moved = predict(&moved_store, &f, &permute_nodes(&x, &perm), &a);
    assert!(moved.max_abs_diff(&permute_nodes(&base, &perm)) < 1e-12);
}

#[test]
fn forecaster_gradients_match_finite_differences() {
    let mut rng = RngStream::new(27);
    let x = random(&[2, 3, 4], &mut rng);
    let target = random(&[2, 3, HORIZON], &mut rng);
    let a = random_adj(3, &mut rng);
    let mask: Vec<bool> = (0..target.numel()).map(|k| k % 7 != 0).collect();
    let check = |store: &ParamStore, f: &Forward, adj: &Tensor| {
        let err = finite_difference_check(store, 1e-6, |tape, p| {
            let xv = tape.constant(x.clone());
            let av = tape.constant(adj.clone());
            let y = f(tape, p, xv, av)?;
            tape.masked_mae(y, &target, &mask)
        })
        .unwrap();
        assert!(err < 1e-4, "relative error {err}");
    };
    let mut store = ParamStore::new();
    let d = Dcrnn::new(&mut store, 4, 2, &mut rng);
    let f: Forward = Box::new(|t, p, x, a| d.forward(t, p, x, a));
    check(&store, &f, &a);

    let (store, g) = gdn_model(3, 4, 2, 28);
    let f: Forward = Box::new(|t, p, x, a| g.forward(t, p, x, a));
    check(&store, &f, &a);

    let mut store = ParamStore::new();
    let u = LstmU::new(&mut store, 3, 4, 2, &mut rng);
    let f: Forward = Box::new(|t, p, x, _| u.forward(t, p, x));
    check(&store, &f, &a);

    let mut store = ParamStore::new();
    let nri = NriDecoder::new(&mut store, 3, 4, 3, 2, &mut rng).unwrap();
    let types = onehots(2, 6, |k| k % 2 == 1);
    let f: Forward = Box::new(|t, p, x, _| {
        let ty = t.constant(types.clone());
        nri.forward(t, p, x, ty)
    });
    check(&store, &f, &a);
}
