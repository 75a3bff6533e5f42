mod common;

use common::random_tensor;
use cortexforge::netcore::{joint_objective, NetworkConfig, NetworkParams, StageGrads, StageSpec};
use cortexforge::optim::{maximize_on_sphere, sgd_step, train_local, LineSearchConfig, SgdConfig};
use cortexforge::Tensor;
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

fn toy_net(seed: u64) -> NetworkParams {
    let spec = StageSpec {
        rf_size: 4,
        stride: 2,
        num_maps: 3,
        pool_size: 2,
        lcn_window: 3,
        ..StageSpec::default()
    };
    let cfg = NetworkConfig::chain([8, 8, 1], &[spec]).unwrap();
    NetworkParams::init(cfg, seed).unwrap()
}

fn toy_data(n: usize) -> Vec<Tensor> {
    (0..n).map(|i| random_tensor(&[8, 8, 1], i as u64, "toy")).collect()
}

#[test]
fn quadratic_form_aligns_with_dominant_eigenvector() {
    let b = random_tensor(&[5, 5], 11, "a");
    let raw = DMatrix::from_iterator(5, 5, b.data().iter().map(|&v| v as f64));
    let a = (&raw + raw.transpose()) * 0.5;
    let eig = SymmetricEigen::new(a.clone());
    let top = (0..5)
        .max_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap())
        .unwrap();
    let v = eig.eigenvectors.column(top).into_owned();

    let am = a.clone();
    let f = move |x: &Tensor| {
        let xv = nalgebra::DVector::from_iterator(5, x.data().iter().map(|&v| v as f64));
        let ax = &am * &xv;
        Ok((xv.dot(&ax), ax.iter().map(|g| 2.0 * g).collect()))
    };
    let x0 = Tensor::new(vec![5], vec![1.0, 0.5, -0.3, 0.2, 0.9]).unwrap();
    let r = maximize_on_sphere(f, &x0, &LineSearchConfig::default()).unwrap();
    let cos: f64 = r.x.to_f64().iter().zip(v.iter()).map(|(a, b)| a * b).sum::<f64>() / v.norm();
    assert!(cos.abs() > 0.999, "cosine {cos}");
    assert!((r.x.norm() - 1.0).abs() < 1e-6);
    assert!(r.trace.windows(2).all(|p| p[1] >= p[0]));
    assert!(r.value >= r.trace[0]);
}

#[test]
fn zero_steps_returns_initial_params() {
    let net = toy_net(1);
    let cfg = SgdConfig { max_steps: 0, minibatch_size: 5, ..SgdConfig::default() };
    let (out, trace) = train_local(&toy_data(10), net.clone(), &cfg).unwrap();
    assert_eq!(out, net);
    assert!(trace.is_empty());
}

#[test]
fn empty_dataset_and_oversized_batch_rejected() {
    let cfg = SgdConfig { max_steps: 1, minibatch_size: 5, ..SgdConfig::default() };
    assert!(train_local(&[], toy_net(1), &cfg).is_err());
    assert!(train_local(&toy_data(3), toy_net(1), &cfg).is_err());
}

#[test]
fn fixed_seed_is_bit_reproducible() {
    let data = toy_data(20);
    let cfg = SgdConfig { learning_rate: 0.01, minibatch_size: 5, max_steps: 15, seed: 4 };
    let (a, ta) = train_local(&data, toy_net(2), &cfg).unwrap();
    let (b, tb) = train_local(&data, toy_net(2), &cfg).unwrap();
    assert_eq!(a, b);
    let oa: Vec<u64> = ta.iter().map(|r| r.objective.to_bits()).collect();
    let ob: Vec<u64> = tb.iter().map(|r| r.objective.to_bits()).collect();
    assert_eq!(oa, ob);
}

#[test]
fn two_hundred_steps_reduce_the_objective() {
    let data = toy_data(50);
    let net = toy_net(3);
    let cfg = SgdConfig { learning_rate: 0.01, minibatch_size: 10, max_steps: 200, seed: 5 };
    let before = joint_objective(&data, &net).unwrap();
    let (trained, trace) = train_local(&data, net, &cfg).unwrap();
    let after = joint_objective(&data, &trained).unwrap();
    assert_eq!(trace.len(), 200);
    assert!(after < before, "{after} !< {before}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sgd_step_is_linear_in_the_gradient(seed in 0u64..10_000, lr in 0.0f32..0.5) {
        let net = toy_net(seed);
        let shape = net.stages[0].w1_encode.shape().to_vec();
        let g = |p: &str| StageGrads { w1: random_tensor(&shape, seed, p), w2: random_tensor(&shape, seed, &format!("{p}2")) };
        let (g1, g2) = (g("a"), g("b"));
        let mut sum = g1.clone();
        sum.w1.add_scaled(&g2.w1, 1.0).unwrap();
        sum.w2.add_scaled(&g2.w2, 1.0).unwrap();

        let mut once = net.clone();
        sgd_step(&mut once, &[sum], lr).unwrap();
        let mut twice = net;
        sgd_step(&mut twice, &[g1], lr).unwrap();
        sgd_step(&mut twice, &[g2], lr).unwrap();
        // Both paths round in f32, so agreement is up to a few ulps.
        prop_assert!(once.stages[0].w1_encode.max_abs_diff(&twice.stages[0].w1_encode) < 1e-6);
        prop_assert!(once.stages[0].w2_decode.max_abs_diff(&twice.stages[0].w2_decode) < 1e-6);
    }
}
