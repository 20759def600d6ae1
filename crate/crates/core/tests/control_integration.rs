//! End-to-end checks of the virtual-control solver against independent
//! oracles: finite-difference gradients on a structured problem and
//! steady-state capture of a matrix inverse.

use parafun::control::{
    adjoint_sweep, cost_eval, forward_sweep, gradients, initial_state, solve_steady_control,
    ControlProblem,
};
use parafun::flows::{FlowSpec, Scheme, TimeGrid};
use parafun::matcore::{frobenius_inner, DenseMatrix};
use parafun::reference::{laplacian_1d, reference_inverse, sequential_fine};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

#[test]
fn adjoint_gradient_matches_finite_differences_on_laplacian() {
    let n = 8;
    let a = laplacian_1d(n).unwrap();
    let s = 3;
    let mut b_ctrl = DenseMatrix::zeros(n, 2);
    b_ctrl.set(0, 0, 1.0);
    b_ctrl.set(4, 1, 1.0);
    let mut rng = StdRng::seed_from_u64(17);
    let mut rhs = DenseMatrix::zeros(n, s);
    let mut x0 = DenseMatrix::zeros(n, s);
    for i in 0..n {
        for j in 0..s {
            rhs.set(i, j, rng.gen_range(-1.0..1.0));
            x0.set(i, j, rng.gen_range(-1.0..1.0));
        }
    }
    let prob = ControlProblem {
        a,
        rhs,
        b_ctrl,
        x0,
        grid: TimeGrid::new(0.0, 1.0, 4, 5).unwrap(),
        alpha: 3.0,
        epsilon: 0.05,
        rho: 0.1,
    };
    let mut state = initial_state(&prob).unwrap();
    for k in 0..4 {
        for j in 0..5 {
            for r in 0..2 {
                for c in 0..s {
                    state.u[k][j].set(r, c, rng.gen_range(-0.5..0.5));
                }
            }
        }
    }
    forward_sweep(&prob, &mut state).unwrap();
    adjoint_sweep(&prob, &mut state).unwrap();
    let (gu, glam) = gradients(&prob, &state).unwrap();
    let delta = 1e-6;
    for trial in 0..5 {
        let du: Vec<Vec<DenseMatrix>> = (0..4)
            .map(|_| {
                (0..5)
                    .map(|_| {
                        let mut d = DenseMatrix::zeros(2, s);
                        for r in 0..2 {
                            for c in 0..s {
                                d.set(r, c, rng.gen_range(-1.0..1.0));
                            }
                        }
                        d
                    })
                    .collect()
            })
            .collect();
        let dlam: Vec<DenseMatrix> = (0..4)
            .map(|k| {
                let mut d = DenseMatrix::zeros(n, s);
                if k > 0 {
                    for r in 0..n {
                        for c in 0..s {
                            d.set(r, c, rng.gen_range(-1.0..1.0));
                        }
                    }
                }
                d
            })
            .collect();
        let mut predicted = 0.0;
        for k in 0..4 {
            for j in 0..5 {
                predicted += frobenius_inner(&gu[k][j], &du[k][j]).unwrap();
            }
            predicted += frobenius_inner(&glam[k], &dlam[k]).unwrap();
        }
        let eval = |sign: f64| {
            let mut probe = state.clone();
            for k in 0..4 {
                for j in 0..5 {
                    probe.u[k][j].add_assign_scaled(&du[k][j], sign * delta);
                }
                probe.lambdas[k].add_assign_scaled(&dlam[k], sign * delta);
            }
            forward_sweep(&prob, &mut probe).unwrap();
            cost_eval(&prob, &probe)
        };
        let fd = (eval(1.0) - eval(-1.0)) / (2.0 * delta);
        let rel = (predicted - fd).abs() / fd.abs().max(1e-12);
        assert!(rel <= 1e-5, "trial {trial}: adjoint {predicted} vs fd {fd}");
    }
}

#[test]
fn control_improves_inverse_capture_over_free_flow() {
    let n = 8;
    let a = laplacian_1d(n).unwrap();
    let eye = DenseMatrix::identity(n);
    let prob = ControlProblem {
        a: a.clone(),
        rhs: eye.clone(),
        b_ctrl: eye.clone(),
        x0: DenseMatrix::zeros(n, n),
        grid: TimeGrid::new(0.0, 1.0, 4, 10).unwrap(),
        alpha: 20.0,
        epsilon: 0.1,
        rho: 0.4,
    };
    let flow = FlowSpec::SteadyResidual {
        a: a.clone(),
        rhs: eye.clone(),
    };
    let fine = sequential_fine(&flow, &prob.grid, Scheme::Euler, &prob.x0).unwrap();
    let free_end = fine.last().unwrap();
    let exact = reference_inverse(&a).unwrap();
    let (x, diag) = solve_steady_control(&prob, 150, 1e-16).unwrap();
    let controlled_residual = prob.residual(&x).frobenius_norm();
    let free_residual = prob.residual(free_end).frobenius_norm();
    assert!(
        controlled_residual < free_residual,
        "controlled {controlled_residual} vs free {free_residual}"
    );
    let controlled_err = x.sub(&exact).frobenius_norm();
    let free_err = free_end.sub(&exact).frobenius_norm();
    assert!(
        controlled_err < free_err,
        "controlled {controlled_err} vs free {free_err}"
    );
    for w in diag.costs.windows(2) {
        assert!(w[1] < w[0], "cost history must decrease");
    }
}
