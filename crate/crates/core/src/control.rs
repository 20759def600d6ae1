//! Virtual-control capture of a steady state across time intervals.
//!
//! The flow `dX/dt = RHS - A X` is split over the coarse intervals of a
//! grid. Each interval gets its own initial value `λ_k` and a
//! piecewise-constant control `u` injected through a map `B`; matching of
//! the interval endpoints is not imposed but penalized. The merit function
//!
//! ```text
//! J_ε = α/2 ‖RHS - A y_{N-1}(T)‖_F²
//!     + 1/2 Σ_k Σ_j h ‖u_{k,j}‖_F²
//!     + 1/(2εΔT) Σ_{k=1}^{N-1} ‖y_{k-1}(T_k⁻) - λ_k‖_F²
//! ```
//!
//! is driven down by a gradient method whose derivatives come from adjoint
//! sweeps. Forward and adjoint integrations use explicit Euler and the
//! adjoint is the exact transpose of the discrete forward step, so the
//! computed gradient is the exact gradient of the discrete cost: the
//! control integral uses the left-endpoint rule, which integrates a
//! piecewise-constant control exactly. All interval integrations are
//! independent and run as parallel maps; reductions are sequential in a
//! fixed order.

use crate::error::{Error, Result};
use crate::exec;
use crate::flows::{FlowSpec, Propagator, Scheme, TimeGrid};
use crate::matcore::DenseMatrix;
use crate::parareal::coarse_sweep;

/// Problem data for the controlled steady-state capture.
#[derive(Debug, Clone)]
pub struct ControlProblem {
    /// System operator of the flow `RHS - A X`.
    pub a: DenseMatrix,
    /// Constant source; its column count fixes the state width.
    pub rhs: DenseMatrix,
    /// Control injection map `B` (rows match `a`, columns set the control
    /// height).
    pub b_ctrl: DenseMatrix,
    /// Initial state, pinned as `λ_0`.
    pub x0: DenseMatrix,
    pub grid: TimeGrid,
    /// Weight of the terminal-residual term; positive.
    pub alpha: f64,
    /// Jump penalty; positive, smaller values enforce matching harder.
    pub epsilon: f64,
    /// Gradient step length; positive.
    pub rho: f64,
}

impl ControlProblem {
    fn validate(&self) -> Result<()> {
        if self.a.rows() != self.a.cols() {
            return Err(Error::Dimension {
                op: "ControlProblem",
                detail: format!("a must be square, got {:?}", self.a.shape()),
            });
        }
        if self.rhs.rows() != self.a.rows()
            || !self.rhs.same_shape(&self.x0)
            || self.b_ctrl.rows() != self.a.rows()
        {
            return Err(Error::Dimension {
                op: "ControlProblem",
                detail: format!(
                    "conformability: a {:?}, rhs {:?}, x0 {:?}, b_ctrl {:?}",
                    self.a.shape(),
                    self.rhs.shape(),
                    self.x0.shape(),
                    self.b_ctrl.shape()
                ),
            });
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("epsilon", self.epsilon),
            ("rho", self.rho),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument {
                    op: "ControlProblem",
                    detail: format!("{name} must be positive and finite, got {v}"),
                });
            }
        }
        Ok(())
    }

    fn flow(&self) -> FlowSpec {
        FlowSpec::SteadyResidual {
            a: self.a.clone(),
            rhs: self.rhs.clone(),
        }
    }

    /// `RHS - A x`, the flow value whose norm measures steadiness.
    pub fn residual(&self, x: &DenseMatrix) -> DenseMatrix {
        self.rhs.sub(&self.a.mul(x))
    }
}

/// Controls, interval states, and the trajectories of the latest sweeps.
#[derive(Debug, Clone)]
pub struct ControlState {
    /// `u[k][j]`: control on fine substep `j` of interval `k`.
    pub u: Vec<Vec<DenseMatrix>>,
    /// Interval initial values; `lambdas[0]` stays equal to the problem's
    /// initial state.
    pub lambdas: Vec<DenseMatrix>,
    /// Forward trajectories, `y[k][j]` for `j = 0..=J`; filled by
    /// [`forward_sweep`].
    pub y: Vec<Vec<DenseMatrix>>,
    /// Adjoint trajectories, same layout; filled by [`adjoint_sweep`].
    pub p: Vec<Vec<DenseMatrix>>,
    /// Latest evaluated cost.
    pub cost: f64,
}

/// Initial state for the outer iteration: zero controls and interval values
/// seeded by a coarse sweep of the uncontrolled flow.
pub fn initial_state(prob: &ControlProblem) -> Result<ControlState> {
    prob.validate()?;
    let n_int = prob.grid.n_coarse();
    let j = prob.grid.fine_per_interval();
    let g = Propagator::new(Scheme::Euler, 1, prob.flow())?;
    let mut lambdas = coarse_sweep(&g, &prob.grid, &prob.x0)?;
    lambdas.truncate(n_int);
    let u_zero = DenseMatrix::zeros(prob.b_ctrl.cols(), prob.rhs.cols());
    Ok(ControlState {
        u: vec![vec![u_zero; j]; n_int],
        lambdas,
        y: Vec::new(),
        p: Vec::new(),
        cost: f64::INFINITY,
    })
}

/// Integrates every interval forward from its `λ_k` under the current
/// controls (explicit Euler), filling `state.y`. Intervals run in parallel.
pub fn forward_sweep(prob: &ControlProblem, state: &mut ControlState) -> Result<()> {
    prob.validate()?;
    let h = prob.grid.fine_dt();
    let j = prob.grid.fine_per_interval();
    let idx: Vec<usize> = (0..prob.grid.n_coarse()).collect();
    let rows: Vec<Result<Vec<DenseMatrix>>> = exec::par_map(&idx, |&k| {
        let mut traj = Vec::with_capacity(j + 1);
        traj.push(state.lambdas[k].clone());
        for step in 0..j {
            let mut drive = prob.residual(&traj[step]);
            let u = &state.u[k][step];
            if u.max_abs() != 0.0 {
                drive = drive.add(&prob.b_ctrl.mul(u));
            }
            let mut next = traj[step].clone();
            next.add_assign_scaled(&drive, h);
            if !next.is_finite() {
                return Err(Error::Numeric {
                    context: format!("forward sweep produced a non-finite state (interval {k})"),
                });
            }
            traj.push(next);
        }
        Ok(traj)
    });
    state.y = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(())
}

/// Evaluates the merit function from the trajectories of the last forward
/// sweep: terminal residual, control energy (left-endpoint rule, exact for
/// piecewise-constant controls), and interval jumps.
pub fn cost_eval(prob: &ControlProblem, state: &ControlState) -> f64 {
    let h = prob.grid.fine_dt();
    let dt = prob.grid.coarse_dt();
    let n_int = prob.grid.n_coarse();
    let terminal = prob
        .residual(state.y[n_int - 1].last().expect("forward sweep ran"))
        .frobenius_norm();
    let mut cost = 0.5 * prob.alpha * terminal * terminal;
    for interval in &state.u {
        for u in interval {
            let norm = u.frobenius_norm();
            cost += 0.5 * h * norm * norm;
        }
    }
    for k in 1..n_int {
        let jump = state.y[k - 1]
            .last()
            .expect("forward sweep ran")
            .sub(&state.lambdas[k])
            .frobenius_norm();
        cost += jump * jump / (2.0 * prob.epsilon * dt);
    }
    cost
}

/// Largest interval jump `max_k ‖y_{k-1}(T_k⁻) - λ_k‖_F` of the last sweep.
pub fn max_jump(prob: &ControlProblem, state: &ControlState) -> f64 {
    (1..prob.grid.n_coarse())
        .map(|k| {
            state.y[k - 1]
                .last()
                .expect("forward sweep ran")
                .sub(&state.lambdas[k])
                .frobenius_norm()
        })
        .fold(0.0, f64::max)
}

/// Integrates the adjoint of every interval backward (the exact transpose
/// `p_j = (I - h Aᵀ) p_{j+1}` of the forward Euler step), filling
/// `state.p`. Terminal data: the last interval is seeded by the gradient of
/// the terminal term, `-α Aᵀ (RHS - A y(T))`; interior intervals by their
/// jump penalty, `(y_k(T_{k+1}⁻) - λ_{k+1}) / (εΔT)`.
pub fn adjoint_sweep(prob: &ControlProblem, state: &mut ControlState) -> Result<()> {
    prob.validate()?;
    if state.y.len() != prob.grid.n_coarse() {
        return Err(Error::InvalidArgument {
            op: "adjoint_sweep",
            detail: "run forward_sweep first".into(),
        });
    }
    let h = prob.grid.fine_dt();
    let dt = prob.grid.coarse_dt();
    let j = prob.grid.fine_per_interval();
    let n_int = prob.grid.n_coarse();
    let at = prob.a.transpose();
    let seeds: Vec<DenseMatrix> = (0..n_int)
        .map(|k| {
            let y_end = state.y[k].last().expect("forward sweep ran");
            if k == n_int - 1 {
                at.mul(&prob.residual(y_end)).scaled(-prob.alpha)
            } else {
                y_end
                    .sub(&state.lambdas[k + 1])
                    .scaled(1.0 / (prob.epsilon * dt))
            }
        })
        .collect();
    let rows: Vec<Result<Vec<DenseMatrix>>> = exec::par_map(&seeds, |seed| {
        let mut traj = vec![seed.clone(); j + 1];
        for step in (0..j).rev() {
            let mut prev = traj[step + 1].clone();
            prev.add_assign_scaled(&at.mul(&traj[step + 1]), -h);
            if !prev.is_finite() {
                return Err(Error::Numeric {
                    context: "adjoint sweep produced a non-finite state".into(),
                });
            }
            traj[step] = prev;
        }
        Ok(traj)
    });
    state.p = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(())
}

/// Exact gradient of the discrete cost with respect to the controls and the
/// interval values, assembled from the adjoint trajectories:
/// `∂J/∂u_{k,j} = h (u_{k,j} + Bᵀ p_{j+1})` and
/// `∂J/∂λ_k = p_k(T_k⁺) - p_{k-1}(T_k⁻)` for `k ≥ 1` (zero for the pinned
/// `λ_0`).
pub fn gradients(
    prob: &ControlProblem,
    state: &ControlState,
) -> Result<(Vec<Vec<DenseMatrix>>, Vec<DenseMatrix>)> {
    if state.p.len() != prob.grid.n_coarse() {
        return Err(Error::InvalidArgument {
            op: "gradients",
            detail: "run adjoint_sweep first".into(),
        });
    }
    let h = prob.grid.fine_dt();
    let dt = prob.grid.coarse_dt();
    let bt = prob.b_ctrl.transpose();
    let n_int = prob.grid.n_coarse();
    let gu: Vec<Vec<DenseMatrix>> = (0..n_int)
        .map(|k| {
            (0..prob.grid.fine_per_interval())
                .map(|j| {
                    let mut g = state.u[k][j].clone();
                    g = g.add(&bt.mul(&state.p[k][j + 1]));
                    g.scaled(h)
                })
                .collect()
        })
        .collect();
    let mut glam = vec![DenseMatrix::zeros(prob.x0.rows(), prob.x0.cols()); n_int];
    for (k, g) in glam.iter_mut().enumerate().skip(1) {
        let jump_grad = state.y[k - 1]
            .last()
            .expect("forward sweep ran")
            .sub(&state.lambdas[k])
            .scaled(-1.0 / (prob.epsilon * dt));
        *g = state.p[k][0].add(&jump_grad);
    }
    Ok((gu, glam))
}

/// Block lower-bidiagonal propagation matrix `M`: identity diagonal and
/// `-F_k` subdiagonal, the linear part of marching interval values forward.
/// `blocks[k]` is the propagator from node `k` to node `k+1`, so a system
/// with `N` interval values carries `N - 1` blocks.
#[derive(Debug, Clone)]
pub struct PropagationMatrix {
    blocks: Vec<DenseMatrix>,
}

impl PropagationMatrix {
    pub fn new(blocks: Vec<DenseMatrix>) -> Result<Self> {
        for b in &blocks {
            if b.rows() != b.cols() || b.rows() != blocks[0].rows() {
                return Err(Error::Dimension {
                    op: "PropagationMatrix",
                    detail: "blocks must be square and equally sized".into(),
                });
            }
        }
        Ok(PropagationMatrix { blocks })
    }

    /// Number of block rows the matrix acts on.
    pub fn len(&self) -> usize {
        self.blocks.len() + 1
    }

    /// True for the degenerate single-value case.
    pub fn is_empty(&self) -> bool {
        false
    }

    fn check(&self, v: &[DenseMatrix], op: &'static str) -> Result<()> {
        if v.len() != self.len() {
            return Err(Error::Dimension {
                op,
                detail: format!("expected {} stacked blocks, got {}", self.len(), v.len()),
            });
        }
        Ok(())
    }

    /// `(Mv)_0 = v_0`, `(Mv)_k = v_k - F_{k-1} v_{k-1}`.
    pub fn apply(&self, v: &[DenseMatrix]) -> Result<Vec<DenseMatrix>> {
        self.check(v, "PropagationMatrix::apply")?;
        let mut out = Vec::with_capacity(v.len());
        out.push(v[0].clone());
        for k in 1..v.len() {
            out.push(v[k].sub(&self.blocks[k - 1].mul(&v[k - 1])));
        }
        Ok(out)
    }

    /// Forward substitution: the unique `w` with `Mw = v`.
    pub fn solve(&self, v: &[DenseMatrix]) -> Result<Vec<DenseMatrix>> {
        self.check(v, "PropagationMatrix::solve")?;
        let mut out: Vec<DenseMatrix> = Vec::with_capacity(v.len());
        out.push(v[0].clone());
        for k in 1..v.len() {
            let w = v[k].add(&self.blocks[k - 1].mul(&out[k - 1]));
            out.push(w);
        }
        Ok(out)
    }

    /// `(Mᵀv)_k = v_k - F_kᵀ v_{k+1}` (last block row is the identity).
    pub fn apply_transpose(&self, v: &[DenseMatrix]) -> Result<Vec<DenseMatrix>> {
        self.check(v, "PropagationMatrix::apply_transpose")?;
        let n = v.len();
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            if k + 1 < n {
                out.push(v[k].sub(&self.blocks[k].transpose().mul(&v[k + 1])));
            } else {
                out.push(v[k].clone());
            }
        }
        Ok(out)
    }

    /// Backward substitution: the unique `w` with `Mᵀw = v`.
    pub fn solve_transpose(&self, v: &[DenseMatrix]) -> Result<Vec<DenseMatrix>> {
        self.check(v, "PropagationMatrix::solve_transpose")?;
        let n = v.len();
        let mut out = vec![DenseMatrix::zeros(1, 1); n];
        out[n - 1] = v[n - 1].clone();
        for k in (0..n - 1).rev() {
            out[k] = v[k].add(&self.blocks[k].transpose().mul(&out[k + 1]));
        }
        Ok(out)
    }
}

/// Applies the propagation matrix built from `prop_blocks` to stacked
/// interval values: the residual of the sequential marching relation.
pub fn apply_propagation_matrix(
    prop_blocks: &[DenseMatrix],
    lambdas: &[DenseMatrix],
) -> Result<Vec<DenseMatrix>> {
    PropagationMatrix::new(prop_blocks.to_vec())?.apply(lambdas)
}

/// Coarse preconditioner blocks for the λ update: one explicit Euler step
/// of the homogeneous part, `I - ΔT·A`, per interval.
fn coarse_blocks(prob: &ControlProblem) -> Vec<DenseMatrix> {
    let dt = prob.grid.coarse_dt();
    let n = prob.a.rows();
    let mut g = DenseMatrix::identity(n);
    g.add_assign_scaled(&prob.a, -dt);
    vec![g; prob.grid.n_coarse() - 1]
}

/// One gradient update of controls and interval values.
///
/// Controls move along the L² form of their gradient,
/// `u ← u - ρ (u + Bᵀ p_{j+1})`; interval values move along the jump
/// gradient preconditioned by the coarse propagation matrix,
/// `λ ← λ - ρ M̃⁻¹ (M̃⁻ᵀ g)`, applied jointly to the stacked sequence with
/// the pinned `λ_0` carrying a zero gradient. Both are positive rescalings
/// of the exact gradient, so small steps descend.
pub fn gradient_step(prob: &ControlProblem, state: &mut ControlState) -> Result<()> {
    gradient_step_with_rho(prob, state, prob.rho)
}

/// [`gradient_step`] with an explicit step length (used by the backtracking
/// outer loop).
pub fn gradient_step_with_rho(
    prob: &ControlProblem,
    state: &mut ControlState,
    rho: f64,
) -> Result<()> {
    let (_, glam) = gradients(prob, state)?;
    let bt = prob.b_ctrl.transpose();
    for k in 0..prob.grid.n_coarse() {
        for j in 0..prob.grid.fine_per_interval() {
            let l2_grad = state.u[k][j].add(&bt.mul(&state.p[k][j + 1]));
            state.u[k][j].add_assign_scaled(&l2_grad, -rho);
        }
    }
    if prob.grid.n_coarse() > 1 {
        let precond = PropagationMatrix::new(coarse_blocks(prob))?;
        let v = precond.solve(&precond.solve_transpose(&glam)?)?;
        for (lam, vk) in state.lambdas.iter_mut().zip(&v).skip(1) {
            lam.add_assign_scaled(vk, -rho);
        }
    }
    Ok(())
}

/// Outcome summary of [`solve_steady_control`]; entry `i` of each sequence
/// describes the accepted state after `i` gradient updates.
#[derive(Debug, Clone)]
pub struct ControlDiagnostics {
    pub costs: Vec<f64>,
    pub terminal_residuals: Vec<f64>,
    pub max_jumps: Vec<f64>,
    /// Accepted gradient steps.
    pub iterations: usize,
    /// Step length in effect at the end (backtracking halves it on
    /// rejected trials).
    pub final_rho: f64,
}

/// Drives the merit function down by repeated forward/adjoint/gradient
/// rounds with backtracked step lengths, starting from zero controls and
/// coarse-sweep interval values.
///
/// A trial step that fails to decrease the cost is rejected and the step
/// length halved; ten consecutive rejections abort with a stall error
/// (choose a smaller `rho`). Returns the terminal state `y_{N-1}(T)` of the
/// best iterate together with per-iteration diagnostics.
pub fn solve_steady_control(
    prob: &ControlProblem,
    m_max: usize,
    tol: f64,
) -> Result<(DenseMatrix, ControlDiagnostics)> {
    let mut state = initial_state(prob)?;
    forward_sweep(prob, &mut state)?;
    state.cost = cost_eval(prob, &state);
    if !state.cost.is_finite() {
        return Err(Error::Numeric {
            context: "initial control state has non-finite cost".into(),
        });
    }
    let terminal = |s: &ControlState| -> f64 {
        prob.residual(s.y[prob.grid.n_coarse() - 1].last().expect("forward sweep ran"))
            .frobenius_norm()
    };
    let mut diag = ControlDiagnostics {
        costs: vec![state.cost],
        terminal_residuals: vec![terminal(&state)],
        max_jumps: vec![max_jump(prob, &state)],
        iterations: 0,
        final_rho: prob.rho,
    };
    let mut rho = prob.rho;
    let mut strikes = 0usize;
    while diag.iterations < m_max && state.cost > tol {
        adjoint_sweep(prob, &mut state)?;
        let mut trial = state.clone();
        gradient_step_with_rho(prob, &mut trial, rho)?;
        let accepted = match forward_sweep(prob, &mut trial) {
            Ok(()) => {
                trial.cost = cost_eval(prob, &trial);
                // A rejected trial that is float-flat against the current
                // cost means the iterate is numerically stationary.
                if trial.cost >= state.cost
                    && trial.cost - state.cost <= 1e-13 * state.cost.max(f64::MIN_POSITIVE)
                {
                    break;
                }
                trial.cost < state.cost
            }
            // A blown-up trial is just a rejected step, not a failure of
            // the outer iteration.
            Err(Error::Numeric { .. }) => false,
            Err(other) => return Err(other),
        };
        if accepted {
            state = trial;
            strikes = 0;
            diag.iterations += 1;
            diag.costs.push(state.cost);
            diag.terminal_residuals.push(terminal(&state));
            diag.max_jumps.push(max_jump(prob, &state));
        } else {
            strikes += 1;
            rho /= 2.0;
            if strikes >= 10 {
                return Err(Error::Stalled {
                    context: format!(
                        "cost failed to decrease for {strikes} consecutive trials; \
                         restart with a smaller rho (last tried {rho:e})"
                    ),
                });
            }
        }
    }
    diag.final_rho = rho;
    let x = state.y[prob.grid.n_coarse() - 1]
        .last()
        .expect("forward sweep ran")
        .clone();
    Ok((x, diag))
}
