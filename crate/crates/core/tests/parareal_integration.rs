//! Cross-module runs of the parareal iterations against the reference
//! oracles: invariant-subspace collapse, subspace-enhanced dominance on the
//! trigonometric block flow, and the matrix-function drivers end to end.

use parafun::flows::{stack, FlowSpec, Propagator, Scheme, TimeGrid};
use parafun::matcore::DenseMatrix;
use parafun::matfun::{
    self, cos_sin_via_ode, exp_via_ode, inverse_via_ode, MatFunRequest, MatFunction, Method,
};
use parafun::parareal::{classical_parareal, modified_parareal_homogeneous};
use parafun::reference::{
    laplacian_1d, reference_cos, reference_exp, reference_inverse, sequential_fine,
    spd_random_shifted,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

#[test]
fn invariant_subspace_collapses_to_dimension_one() {
    // x' = 0: every iterate stays proportional to u0, so the enhancement
    // basis has dimension one and the first update already reproduces the
    // (trivial) fine solution.
    let n = 4;
    let flow = FlowSpec::LinearHomogeneous {
        b: DenseMatrix::zeros(n, n),
    };
    let grid = TimeGrid::new(0.0, 1.0, 6, 8).unwrap();
    let f = Propagator::new(Scheme::Euler, 8, flow.clone()).unwrap();
    let g = Propagator::new(Scheme::Euler, 1, flow).unwrap();
    let mut rng = StdRng::seed_from_u64(5);
    let mut u0 = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            u0.set(i, j, rng.gen_range(0.5..2.0));
        }
    }
    let run = modified_parareal_homogeneous(&f, &g, &grid, &u0, 4, 1e-12).unwrap();
    assert_eq!(run.converged_at, Some(1));
    assert_eq!(run.subspace_dims[0], 1);
    let scale = u0.max_abs();
    for node in run.final_iterate() {
        assert!(node.sub(&u0).max_abs() <= 1e-14 * scale);
    }
}

#[test]
fn modified_dominates_classical_on_trig_flow() {
    // Scaled-down cosine-figure setup: n=4, N=10, J=100, explicit Euler.
    let n = 4;
    let a = spd_random_shifted(n, 3).unwrap();
    let m = matfun::scaling_exponent(&a);
    let a_s = a.scaled(0.5f64.powi(m as i32));
    let flow = FlowSpec::TrigBlock {
        a: a_s.clone(),
        x0ref: DenseMatrix::zeros(n, n),
    };
    let grid = TimeGrid::new(0.0, 1.0, 10, 100).unwrap();
    let f = Propagator::new(Scheme::Euler, 100, flow.clone()).unwrap();
    let g = Propagator::new(Scheme::Euler, 1, flow.clone()).unwrap();
    let u0 = stack(&DenseMatrix::zeros(n, n), &DenseMatrix::identity(n));
    let fine = sequential_fine(&flow, &grid, Scheme::Euler, &u0).unwrap();
    let k_max = 8;
    let mut classical = classical_parareal(&f, &g, &grid, &u0, k_max, 0.0).unwrap();
    let mut modified = modified_parareal_homogeneous(&f, &g, &grid, &u0, k_max, 0.0).unwrap();
    classical.attach_fine_reference(&fine).unwrap();
    modified.attach_fine_reference(&fine).unwrap();
    // The modified run may stop early; past its last row it has converged
    // and its final error stands in for the remaining iterations.
    let err_m = |k: usize| {
        modified
            .errors_vs_fine
            .get(k)
            .or(modified.errors_vs_fine.last())
            .copied()
            .unwrap()
    };
    // Additive slack keeps the comparison meaningful once both schemes sit
    // at the round-off floor.
    for k in 1..=k_max {
        assert!(
            err_m(k) <= classical.errors_vs_fine[k] * (1.0 + 1e-9) + 1e-13,
            "iteration {k}: modified {} vs classical {}",
            err_m(k),
            classical.errors_vs_fine[k]
        );
    }
    let (cm, cc) = (
        (1..=k_max).find(|&k| err_m(k) <= 1e-10),
        (1..=k_max).find(|&k| classical.errors_vs_fine[k] <= 1e-10),
    );
    match (cm, cc) {
        (Some(im), Some(ic)) => assert!(im < ic, "modified at {im}, classical at {ic}"),
        (Some(_), None) => {}
        other => panic!("modified should reach 1e-10 first, got {other:?}"),
    }
}

#[test]
fn exp_driver_agrees_with_reference_and_fine() {
    let b = laplacian_1d(16).unwrap().scaled(-1.0 / 16.0);
    let mut req = MatFunRequest::new(
        MatFunction::Exponential,
        TimeGrid::new(0.0, 1.0, 10, 40).unwrap(),
    );
    req.fine_scheme = Scheme::CrankNicolson;
    req.coarse_scheme = Scheme::CrankNicolson;
    let report = exp_via_ode(&b, &req).unwrap();
    assert!(report.converged);
    let exact = reference_exp(&b).unwrap();
    let rel = matfun::relative_maxabs_error(&report.result, &exact).unwrap();
    assert!(rel <= 1e-6, "relative error {rel}");

    let mut seq = req.clone();
    seq.method = Method::SequentialFine;
    let seq_report = exp_via_ode(&b, &seq).unwrap();
    let gap = matfun::relative_maxabs_error(&report.result, &seq_report.result).unwrap();
    assert!(gap <= 1e-12, "parareal vs sequential fine {gap}");
}

#[test]
fn inverse_driver_on_shifted_spd_matrix() {
    let a = spd_random_shifted(16, 7).unwrap();
    let mut req = MatFunRequest::new(
        MatFunction::Inverse,
        TimeGrid::new(0.0, 1.0, 10, 2000).unwrap(),
    );
    req.scale_pow = matfun::scaling_exponent(&a);
    req.k_max = 25;
    req.residual_bound = 1e-2;
    let mut report = inverse_via_ode(&a, &req).unwrap();
    assert!(report.converged, "residual {:?}", report.residual_inf);
    let exact = reference_inverse(&a).unwrap();
    report.attach_reference(&exact).unwrap();
    assert!(report.error_vs_reference.unwrap() <= 1e-2);
}

#[test]
fn cos_driver_matches_reference_on_spd_matrix() {
    let a = spd_random_shifted(6, 11).unwrap();
    let mut req = MatFunRequest::new(
        MatFunction::Cosine,
        TimeGrid::new(0.0, 1.0, 10, 1000).unwrap(),
    );
    req.fine_scheme = Scheme::CrankNicolson;
    req.coarse_scheme = Scheme::CrankNicolson;
    req.method = Method::Modified;
    let report = cos_sin_via_ode(&a, &req).unwrap();
    let exact = reference_cos(&a).unwrap();
    let rel = matfun::relative_maxabs_error(&report.result, &exact).unwrap();
    assert!(rel <= 1e-5, "relative error {rel}");
}
