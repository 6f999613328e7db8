use rand_distr::{Distribution, Normal};

use super::*;
use crate::Result;

fn t(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

fn random(shape: &[usize], rng: &mut RngStream) -> Tensor {
    let n = shape.iter().product();
    let normal = Normal::new(0.0, 1.0).unwrap();
    Tensor::new(shape.to_vec(), (0..n).map(|_| normal.sample(rng)).collect()).unwrap()
}

/// Projects an op output onto fixed random weights so every output element
/// contributes a distinct gradient.
fn project(tape: &mut Tape, y: Var, seed: u64) -> Result<Var> {
    let mut rng = RngStream::new(seed);
    let w = random(tape.shape(y), &mut rng);
    let w = tape.constant(w);
    let p = tape.mul(y, w)?;
    tape.sum(p, None)
}

fn check_op<F>(shapes: &[&[usize]], mut op: F)
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
{
    for point in 0..5u64 {
        let mut rng = RngStream::new(100 + point);
        let mut store = ParamStore::new();
        for (i, s) in shapes.iter().enumerate() {
            store.add(format!("p{i}"), random(s, &mut rng));
        }
        let err = finite_difference_check(&store, 1e-5, |tape, bound| {
            let y = op(tape, bound.vars())?;
            project(tape, y, 77)
        })
        .unwrap();
        assert!(err < 1e-4, "point {point}: relative error {err}");
    }
}

#[test]
fn matmul_identity() {
    let mut tape = Tape::new();
    let a = tape.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
    let i = tape.constant(Tensor::eye(2));
    let y = tape.matmul(a, i).unwrap();
    assert_eq!(tape.value(y).data(), &[1.0, 2.0, 3.0, 4.0]);
}

#[test]
fn softmax_of_equal_logits_is_uniform() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::zeros([3]));
    let y = tape.softmax(x, None).unwrap();
    for &v in tape.value(y).data() {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }
}

#[test]
fn conv1d_sliding_sum() {
    // hand-evaluated: [1+2, 2+3, 3+4]
    let mut tape = Tape::new();
    let x = tape.constant(t(&[1, 1, 4], &[1.0, 2.0, 3.0, 4.0]));
    let k = tape.constant(t(&[1, 1, 2], &[1.0, 1.0]));
    let y = tape.conv1d(x, k, None, 1, 1).unwrap();
    assert_eq!(tape.shape(y), &[1, 1, 3]);
    assert_eq!(tape.value(y).data(), &[3.0, 5.0, 7.0]);
}

#[test]
fn conv1d_rejects_kernel_longer_than_series() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::zeros([1, 1, 3]));
    let k = tape.constant(Tensor::zeros([1, 1, 4]));
    assert!(tape.conv1d(x, k, None, 1, 1).is_err());
}

#[test]
fn matmul_shape_error_names_op() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::zeros([2, 3]));
    let b = tape.constant(Tensor::zeros([2, 3]));
    let err = tape.matmul(a, b).unwrap_err().to_string();
    assert!(err.contains("matmul") && err.contains("[2, 3]"), "{err}");
}

#[test]
fn unknown_op_kind() {
    assert!(matches!("fft".parse::<OpKind>(), Err(crate::Error::UnknownOp(_))));
    assert_eq!("conv1d".parse::<OpKind>().unwrap(), OpKind::Conv1d);
}

#[test]
fn generic_dispatch_matches_typed_methods() {
    let mut tape = Tape::new();
    let x = tape.constant(t(&[1, 1, 4], &[1.0, 2.0, 3.0, 4.0]));
    let k = tape.constant(t(&[1, 1, 2], &[1.0, 1.0]));
    let y = tape.forward("conv1d".parse().unwrap(), &[x, k], &Attrs::default()).unwrap();
    assert_eq!(tape.value(y).data(), &[3.0, 5.0, 7.0]);
    let s = tape
        .forward(OpKind::Sum, &[y], &Attrs { axis: None, ..Attrs::default() })
        .unwrap();
    assert_eq!(tape.value(s).item(), 15.0);
}

#[test]
fn grad_of_sum_is_ones() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::vector(vec![0.5, -1.0, 2.0]));
    let l = tape.sum(x, None).unwrap();
    let g = tape.backward(l).unwrap();
    assert_eq!(g.get(x).unwrap().data(), &[1.0, 1.0, 1.0]);
    assert_eq!(g.get(l).unwrap().item(), 1.0);
}

#[test]
fn grad_of_sum_of_squares() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::vector(vec![1.0, 2.0, 3.0]));
    let sq = tape.mul(x, x).unwrap();
    let l = tape.sum(sq, None).unwrap();
    let g = tape.backward(l).unwrap();
    assert_eq!(g.get(x).unwrap().data(), &[2.0, 4.0, 6.0]);
}

#[test]
fn constant_loss_gives_zero_gradients() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
    let c = tape.constant(Tensor::vector(vec![3.0, 4.0]));
    let l = tape.sum(c, None).unwrap();
    let g = tape.backward(l).unwrap();
    assert_eq!(g.get(x).unwrap().data(), &[0.0, 0.0]);
}

#[test]
fn two_paths_accumulate() {
    // L = sum(3x + x*y), dL/dx = 3 + y, dL/dy = x
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::vector(vec![1.0, -2.0]));
    let y = tape.leaf(Tensor::vector(vec![0.5, 4.0]));
    let a = tape.scale(x, 3.0);
    let b = tape.mul(x, y).unwrap();
    let s = tape.add(a, b).unwrap();
    let l = tape.sum(s, None).unwrap();
    let g = tape.backward(l).unwrap();
    assert_eq!(g.get(x).unwrap().data(), &[3.5, 7.0]);
    assert_eq!(g.get(y).unwrap().data(), &[1.0, -2.0]);
}

#[test]
fn backward_errors() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
    assert!(matches!(tape.backward(x), Err(crate::Error::NonScalarLoss(_))));
    let mut other = Tape::new();
    let foreign = other.leaf(Tensor::scalar(1.0));
    let _ = tape.leaf(Tensor::scalar(0.0));
    let _ = tape.leaf(Tensor::scalar(0.0));
    assert!(matches!(tape.backward(foreign), Err(crate::Error::NotOnTape)));
}

#[test]
fn gradcheck_of_linear_function_is_exact() {
    let mut store = ParamStore::new();
    store.add("x", Tensor::vector(vec![0.1, 0.2, 0.3]));
    let err = finite_difference_check(&store, 1e-5, |tape, b| tape.sum(b.vars()[0], None)).unwrap();
    assert!(err < 1e-9, "{err}");
}

#[test]
fn gradcheck_detects_nondeterminism() {
    let mut store = ParamStore::new();
    store.add("x", Tensor::vector(vec![0.1]));
    let mut calls = 0.0;
    let res = finite_difference_check(&store, 1e-5, |tape, b| {
        calls += 1.0;
        let c = tape.constant(Tensor::vector(vec![calls]));
        let y = tape.add(b.vars()[0], c)?;
        tape.sum(y, None)
    });
    assert!(matches!(res, Err(crate::Error::NonDeterministic { .. })));
}

#[test]
fn gradcheck_rejects_eps_outside_range() {
    let store = ParamStore::new();
    assert!(finite_difference_check(&store, 1e-2, |tape, _| Ok(tape.constant(Tensor::scalar(0.0)))).is_err());
}

#[test]
fn softmax_rows_are_distributions() {
    let mut rng = RngStream::new(4);
    let mut tape = Tape::new();
    let x = tape.constant(random(&[6, 5], &mut rng));
    let y = tape.softmax(x, None).unwrap();
    for row in tape.value(y).data().chunks(5) {
        assert!(row.iter().all(|&v| v >= 0.0));
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn masked_softmax_zeroes_masked_entries() {
    let mut tape = Tape::new();
    let x = tape.constant(t(&[2, 3], &[1.0, 2.0, 3.0, 0.0, 0.0, 0.0]));
    let mask = vec![true, false, true, false, false, false];
    let y = tape.softmax(x, Some(mask)).unwrap();
    let v = tape.value(y).data();
    assert_eq!(v[1], 0.0);
    assert!((v[0] + v[2] - 1.0).abs() < 1e-15);
    assert_eq!(&v[3..], &[0.0, 0.0, 0.0]);
}

#[test]
fn degree_normalize_zero_rows_stay_zero() {
    let mut tape = Tape::new();
    let a = tape.constant(t(&[3, 3], &[0.0, 2.0, 2.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]));
    let out = tape.degree_normalize(a, Degree::Out).unwrap();
    assert_eq!(tape.value(out).data(), &[0.0, 0.5, 0.5, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    let inn = tape.degree_normalize(a, Degree::In).unwrap();
    // in-degrees: col sums = [1, 2, 2]; row i scaled by 1/indeg(i)
    assert_eq!(tape.value(inn).data(), &[0.0, 2.0, 2.0, 0.0, 0.0, 0.0, 0.5, 0.0, 0.0]);
    let neg = tape.constant(t(&[2, 2], &[0.0, -1.0, 1.0, 0.0]));
    assert!(tape.degree_normalize(neg, Degree::Out).is_err());
}

#[test]
fn masked_mae_ignores_masked_entries() {
    let mut tape = Tape::new();
    let p = tape.leaf(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
    let target = t(&[2, 2], &[0.0, 2.5, 3.0, 0.0]);
    let l = tape.masked_mae(p, &target, &[false, true, true, false]).unwrap();
    assert_eq!(tape.value(l).item(), 0.25);
    let l0 = tape.masked_mae(p, &target, &[false; 4]).unwrap();
    assert_eq!(tape.value(l0).item(), 0.0);
    let g = tape.backward(l0).unwrap();
    assert!(g.get(p).unwrap().data().iter().all(|&v| v == 0.0));
}

#[test]
fn gumbel_bernoulli_certain_and_impossible_edges() {
    let mut rng = RngStream::new(1);
    for _ in 0..200 {
        let mut tape = Tape::new();
        let th = tape.leaf(Tensor::vector(vec![1.0, 0.0]));
        let s = tape.gumbel_bernoulli(th, 0.5, true, &mut rng).unwrap();
        assert_eq!(tape.value(s).data(), &[1.0, 0.0]);
    }
}

// ------------------------------------------------------------ finite differences per op

#[test]
fn fd_matmul() {
    check_op(&[&[2, 3, 4], &[4, 5]], |t, v| t.matmul(v[0], v[1]));
}

#[test]
fn fd_bmm_shared_and_batched() {
    check_op(&[&[3, 3], &[2, 3, 4]], |t, v| t.bmm(v[0], v[1]));
    check_op(&[&[2, 3, 4], &[2, 4, 2]], |t, v| t.bmm(v[0], v[1]));
}

#[test]
fn fd_broadcast_elementwise() {
    check_op(&[&[2, 3, 4], &[4]], |t, v| t.add(v[0], v[1]));
    check_op(&[&[2, 3, 1], &[1, 3, 4]], |t, v| t.sub(v[0], v[1]));
    check_op(&[&[2, 3, 4], &[3, 1]], |t, v| t.mul(v[0], v[1]));
}

#[test]
fn fd_scale_concat_gather_permute_reshape() {
    check_op(&[&[3, 2]], |t, v| Ok(t.scale(v[0], -1.7)));
    check_op(&[&[2, 3, 2], &[2, 3, 4]], |t, v| t.concat(&[v[0], v[1]], 2));
    check_op(&[&[2, 3, 2], &[2, 1, 2]], |t, v| t.concat(&[v[0], v[1]], 1));
    check_op(&[&[4, 3]], |t, v| t.gather(v[0], 0, &[3, 0, 3, 1]));
    check_op(&[&[2, 4, 3]], |t, v| t.slice(v[0], 1, 1, 3));
    check_op(&[&[2, 3, 4]], |t, v| t.permute(v[0], &[2, 0, 1]));
    check_op(&[&[2, 6]], |t, v| t.reshape(v[0], &[3, 4]));
}

#[test]
fn fd_conv1d() {
    check_op(&[&[2, 3, 11], &[4, 3, 3], &[4]], |t, v| t.conv1d(v[0], v[1], Some(v[2]), 2, 1));
    check_op(&[&[1, 2, 9], &[2, 2, 2]], |t, v| t.conv1d(v[0], v[1], None, 1, 3));
}

#[test]
fn fd_activations() {
    check_op(&[&[3, 4]], |t, v| Ok(t.sigmoid(v[0])));
    check_op(&[&[3, 4]], |t, v| Ok(t.tanh(v[0])));
    check_op(&[&[3, 4]], |t, v| Ok(t.relu(v[0])));
    check_op(&[&[3, 4]], |t, v| Ok(t.leaky_relu(v[0])));
}

#[test]
fn fd_softmax_and_reductions() {
    check_op(&[&[3, 4]], |t, v| t.softmax(v[0], None));
    check_op(&[&[2, 3]], |t, v| t.softmax(v[0], Some(vec![true, false, true, true, true, false])));
    check_op(&[&[2, 3, 4]], |t, v| t.sum(v[0], Some(1)));
    check_op(&[&[2, 3, 4]], |t, v| t.mean(v[0], Some(2)));
    check_op(&[&[2, 3]], |t, v| t.mean(v[0], None));
}

#[test]
fn fd_degree_normalize() {
    // strictly positive entries keep degrees away from zero
    let pos = |t: &mut Tape, v: Var| {
        let s = t.sigmoid(v);
        Ok::<_, crate::Error>(s)
    };
    check_op(&[&[4, 4]], |t, v| {
        let a = pos(t, v[0])?;
        t.degree_normalize(a, Degree::Out)
    });
    check_op(&[&[2, 4, 4]], |t, v| {
        let a = pos(t, v[0])?;
        t.degree_normalize(a, Degree::In)
    });
}

#[test]
fn fd_losses_and_soft_sampling() {
    let target = Tensor::new([2, 3], vec![0.3, -0.2, 1.5, 0.0, 2.0, -1.0]).unwrap();
    let mask = [true, true, false, true, true, true];
    check_op(&[&[2, 3]], |t, v| t.masked_mae(v[0], &target, &mask));
    let bin = Tensor::new([2, 3], vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
    check_op(&[&[2, 3]], |t, v| {
        let p = t.sigmoid(v[0]);
        t.bce(p, &bin, &mask)
    });
    let frozen = RngStream::new(21);
    check_op(&[&[3, 3]], |t, v| {
        let p = t.sigmoid(v[0]);
        t.gumbel_bernoulli(p, 0.5, false, &mut frozen.clone())
    });
    check_op(&[&[3, 2]], |t, v| gumbel_softmax(t, v[0], 0.5, false, &mut frozen.clone()));
}

mod props {
    use proptest::prelude::*;

    use super::super::*;

    proptest! {
        #[test]
        fn softmax_sums_to_one(xs in proptest::collection::vec(-30.0f64..30.0, 1..12)) {
            let mut tape = Tape::new();
            let x = tape.constant(Tensor::vector(xs));
            let y = tape.softmax(x, None).unwrap();
            let v = tape.value(y).data();
            prop_assert!(v.iter().all(|&p| p >= 0.0));
            prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn adam_with_zero_grads_is_identity(xs in proptest::collection::vec(-5.0f64..5.0, 1..8), steps in 1usize..5) {
            let mut store = ParamStore::new();
            store.add("p", Tensor::vector(xs.clone()));
            let before = store.clone();
            let mut adam = AdamState::new(&store, 0.05);
            for _ in 0..steps {
                adam.step(&mut store, &[Tensor::zeros([xs.len()])]).unwrap();
            }
            prop_assert_eq!(store, before);
        }

        #[test]
        fn hard_gumbel_rows_are_one_hot(seed in 0u64..1000, rows in 1usize..6, classes in 2usize..5) {
            let mut rng = RngStream::new(seed);
            let mut tape = Tape::new();
            let logits: Vec<f64> = (0..rows * classes).map(|i| ((i as f64) * 0.37).sin()).collect();
            let l = tape.constant(Tensor::new([rows, classes], logits).unwrap());
            let y = gumbel_softmax(&mut tape, l, DEFAULT_TEMPERATURE, true, &mut rng).unwrap();
            for row in tape.value(y).data().chunks(classes) {
                prop_assert_eq!(row.iter().filter(|&&v| v == 1.0).count(), 1);
                prop_assert_eq!(row.iter().filter(|&&v| v == 0.0).count(), classes - 1);
            }
        }
    }
}
