mod common;

use cip_core::hscic::{hscic_grad_y, hscic_sq, hsic, hsic_value_and_grad, HscicConfig};
use cip_core::kernel::{gram, KernelSpec};
use cip_core::learner::{mlp_backward, mlp_forward, Activation};
use cip_core::rng::{stream, Domain};
use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn matches_tensor_expansion_on_random_instances() {
    let mut rng = stream(11, Domain::Aux, 0);
    for case in 0..50 {
        let n = rng.gen_range(1..=8);
        let inst = hscic_instance(&mut rng, n);
        let fast = hscic_sq(&inst.cfg, &inst.ys, &inst.aws, &inst.ss).unwrap();
        let slow = hscic_oracle(inst.kernels, &inst.ys, &inst.aws, &inst.ss);
        for (a, b) in fast.per_point.iter().zip(&slow) {
            assert!(rel_close(*a, *b) < 1e-8, "case {case}: {a} vs {b}");
        }
    }
}

#[test]
fn single_point_closed_form() {
    // w = 1/(1 + λ), H² = w²(1 − w)²
    let one = DMatrix::from_element(1, 1, 0.3);
    let v = hscic_sq(&HscicConfig::default(), &one, &one, &one).unwrap();
    let w = 1.0 / 1.01;
    let expected = w * w * (1.0 - w) * (1.0 - w);
    assert!((v.mean - expected).abs() < 1e-15);
    assert!((v.mean - 9.610e-5).abs() < 1e-8);
}

#[test]
fn hsic_two_point_closed_form() {
    let spec = KernelSpec::gaussian(1.0, 0.5);
    let ys = DMatrix::from_column_slice(2, 1, &[0.0, 0.4]);
    let aws = DMatrix::from_column_slice(2, 1, &[0.1, 0.9]);
    let a = (-0.16f64 / 0.5).exp();
    let b = (-0.64f64 / 0.5).exp();
    let v = hsic(&ys, &aws, &spec, &spec).unwrap();
    assert!((v - (1.0 - a) * (1.0 - b) / 4.0).abs() < 1e-15);
}

#[test]
fn hsic_matches_explicit_centering() {
    let mut rng = stream(12, Domain::Aux, 0);
    for _ in 0..10 {
        let n = rng.gen_range(2..9);
        let ys = uniform_matrix(&mut rng, n, 1, -1.0, 1.0);
        let aws = uniform_matrix(&mut rng, n, 2, -1.0, 1.0);
        let (sy, sa) = (
            KernelSpec::gaussian(1.0, 0.7),
            KernelSpec::gaussian(1.3, 0.4),
        );
        let fast = hsic(&ys, &aws, &sy, &sa).unwrap();
        let slow = hsic_oracle(&gram_oracle(1.0, 0.7, &ys), &gram_oracle(1.3, 0.4, &aws));
        assert!(rel_close(fast, slow) < 1e-10);
        assert!(fast >= 0.0);
    }
}

#[test]
fn hscic_gradient_matches_finite_differences() {
    let mut rng = stream(13, Domain::Aux, 0);
    for case in 0..25 {
        let n = rng.gen_range(3..=16);
        let inst = hscic_instance(&mut rng, n);
        let analytic = hscic_grad_y(&inst.cfg, &inst.ys, &inst.aws, &inst.ss).unwrap();
        let numeric = central_diff(&inst.ys, 1e-5, |y| {
            hscic_sq(&inst.cfg, y, &inst.aws, &inst.ss).unwrap().mean
        });
        let err = rel_err(&analytic, &numeric, 1e-8);
        assert!(err < 1e-4, "case {case}: relative error {err}");
    }
}

#[test]
fn hsic_gradient_matches_finite_differences() {
    let mut rng = stream(14, Domain::Aux, 0);
    for case in 0..20 {
        let n = rng.gen_range(2..=12);
        let dy = rng.gen_range(1..3);
        let ys = uniform_matrix(&mut rng, n, dy, -1.0, 1.0);
        let aws = uniform_matrix(&mut rng, n, 2, -1.0, 1.0);
        let (sy, sa) = (
            KernelSpec::gaussian(1.0, 0.6),
            KernelSpec::gaussian(1.0, 0.8),
        );
        let (_, analytic) = hsic_value_and_grad(&ys, &aws, &sy, &sa).unwrap();
        let numeric = central_diff(&ys, 1e-5, |y| hsic(y, &aws, &sy, &sa).unwrap());
        assert!(rel_err(&analytic, &numeric, 1e-8) < 1e-4, "case {case}");
    }
}

#[test]
fn mlp_backward_matches_finite_differences() {
    let mut rng = stream(15, Domain::Aux, 0);
    for case in 0..30 {
        let head = if case % 2 == 0 {
            Activation::Identity
        } else {
            Activation::Logistic
        };
        let mlp = random_mlp(&mut rng, head);
        let rows = rng.gen_range(1..6);
        let x = uniform_matrix(&mut rng, rows, mlp.input_dim(), -1.0, 1.0);
        let up = uniform_matrix(&mut rng, rows, mlp.output_dim(), -1.0, 1.0);
        let grads = mlp_backward(&mlp, &x, &up).unwrap();

        let objective = |m: &cip_core::Mlp, x: &DMatrix<f64>| {
            mlp_forward(m, x).unwrap().component_mul(&up).sum()
        };
        let dx = central_diff(&x, 1e-5, |x| objective(&mlp, x));
        assert!(
            rel_err(&grads.input, &dx, 1e-8) < 1e-4,
            "case {case}: input"
        );

        let theta = DMatrix::from_column_slice(mlp.params().len(), 1, mlp.params());
        let dtheta = central_diff(&theta, 1e-5, |t| {
            let mut m = mlp.clone();
            m.params_mut().copy_from_slice(t.as_slice());
            objective(&m, &x)
        });
        let analytic = DMatrix::from_column_slice(grads.params.len(), 1, &grads.params);
        assert!(
            rel_err(&analytic, &dtheta, 1e-8) < 1e-4,
            "case {case}: params"
        );
    }
}

#[test]
fn gradient_vanishes_for_identical_predictions() {
    let mut rng = stream(16, Domain::Aux, 0);
    let inst = hscic_instance(&mut rng, 10);
    let ys = DMatrix::from_element(10, 1, 0.25);
    let g = hscic_grad_y(&inst.cfg, &ys, &inst.aws, &inst.ss).unwrap();
    assert!(g.amax() < 1e-12);
}

#[test]
fn aw_amplitude_scales_value_linearly_in_each_term() {
    // Every term of H² is linear in K_AW, so scaling its amplitude scales H².
    let mut rng = stream(17, Domain::Aux, 0);
    let inst = hscic_instance(&mut rng, 7);
    let mut scaled = inst.cfg;
    scaled.aw_kernel.amplitude *= 3.0;
    let a = hscic_sq(&inst.cfg, &inst.ys, &inst.aws, &inst.ss)
        .unwrap()
        .mean;
    let b = hscic_sq(&scaled, &inst.ys, &inst.aws, &inst.ss)
        .unwrap()
        .mean;
    assert!(rel_close(b, 3.0 * a) < 1e-10);
    let ga = hscic_grad_y(&inst.cfg, &inst.ys, &inst.aws, &inst.ss).unwrap();
    let gb = hscic_grad_y(&scaled, &inst.ys, &inst.aws, &inst.ss).unwrap();
    assert!(rel_err(&gb, &(ga * 3.0), 1e-12) < 1e-10);
}

#[test]
fn gram_matches_closed_form() {
    let mut rng = stream(18, Domain::Aux, 0);
    let xs = uniform_matrix(&mut rng, 9, 3, -2.0, 2.0);
    let fast = gram(&KernelSpec::gaussian(1.7, 0.9), &xs).unwrap();
    assert!((fast - gram_oracle(1.7, 0.9, &xs)).amax() < 1e-14);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn permutation_equivariance(seed in any::<u64>(), n in 2usize..10) {
        let mut rng = stream(seed, Domain::Aux, 1);
        let inst = hscic_instance(&mut rng, n);
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let permute = |m: &DMatrix<f64>| m.select_rows(&perm);
        let base = hscic_sq(&inst.cfg, &inst.ys, &inst.aws, &inst.ss).unwrap();
        let moved = hscic_sq(&inst.cfg, &permute(&inst.ys), &permute(&inst.aws), &permute(&inst.ss)).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            prop_assert!((moved.per_point[k] - base.per_point[i]).abs() < 1e-12);
        }
        prop_assert!((moved.mean - base.mean).abs() < 1e-12);
    }

    #[test]
    fn values_are_nonnegative(seed in any::<u64>(), n in 1usize..12) {
        let mut rng = stream(seed, Domain::Aux, 2);
        let inst = hscic_instance(&mut rng, n);
        let v = hscic_sq(&inst.cfg, &inst.ys, &inst.aws, &inst.ss).unwrap();
        prop_assert!(v.per_point.iter().all(|&h| h >= -1e-10));
    }
}
