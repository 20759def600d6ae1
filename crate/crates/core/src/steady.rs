//! Steady-state capture with convergence acceleration.
//!
//! The linear system `A X = b` is viewed as the steady state of the gradient
//! flow `dX/dt = b - A X`. Convergence of the explicit time march is
//! accelerated by adding a control term `u` that is transported by the same
//! dynamics, `u ← (I - Δt A) u`, from the initial guess `u⁰ = X̃ - X⁰`
//! built out of an approximate solution `X̃`. Each accelerated iteration
//! runs a plain (uncontrolled) twin alongside and records the residual
//! ratio, which is the quantity the method is judged by.
//!
//! Three marches are provided: a fixed-step gradient iteration, a steepest
//! descent iteration with the optimal per-step length, and the same flow
//! specialised to inverse-matrix approximation (`dX/dt = I - A X`). A
//! conjugate-gradient form closes the set: choosing the control as the
//! conjugate-direction correction turns the march into standard CG with its
//! finite termination.

use crate::error::{Error, Result};
use crate::matcore::{frobenius_inner, DenseMatrix};

/// Residual size beyond which an iteration is declared divergent.
const DIVERGENCE_BOUND: f64 = 1e12;

/// Relative drift allowed between the recursively updated steepest-descent
/// residual and its direct recomputation.
const SD_DRIFT_TOL: f64 = 1e-10;

/// State of one accelerated march.
#[derive(Debug, Clone)]
pub struct AccelState {
    /// Current iterate.
    pub x: DenseMatrix,
    /// Accelerator (control) term, same shape as `x`.
    pub u: DenseMatrix,
    /// Current residual `b - A x`.
    pub r: DenseMatrix,
    /// Completed iteration count.
    pub k: usize,
    /// Step sizes taken so far (constant for the fixed-step marches).
    pub dt_history: Vec<f64>,
}

/// Residual diagnostics of an accelerated run and its unaccelerated twin.
///
/// Entry `i` describes the state after `i` iterations; all four sequences
/// have equal length. Norms are Frobenius, which coincides with the 2-norm
/// for single-column problems.
#[derive(Debug, Clone, Default)]
pub struct RatioHistory {
    /// Accumulated time of the accelerated march.
    pub times: Vec<f64>,
    /// `residual_accel / residual_plain`, guarded so an exactly converged
    /// pair reports 1.
    pub ratio: Vec<f64>,
    pub residual_plain: Vec<f64>,
    pub residual_accel: Vec<f64>,
}

impl RatioHistory {
    fn record(&mut self, t: f64, plain: f64, accel: f64) {
        self.times.push(t);
        self.residual_plain.push(plain);
        self.residual_accel.push(accel);
        self.ratio.push(if plain == 0.0 {
            if accel == 0.0 {
                1.0
            } else {
                f64::INFINITY
            }
        } else {
            accel / plain
        });
    }

    /// Number of recorded states.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    /// True when nothing has been recorded.
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Tuning knobs shared by the accelerated marches.
#[derive(Debug, Clone, Copy, Default)]
pub struct AccelOptions {
    /// Zero the accelerator once its accumulated time exceeds 1, mirroring
    /// the unit support of the continuous control it samples. Off by
    /// default, matching the plain iteration as printed; switching it on is
    /// what makes the long-time residual ratio collapse.
    pub cutoff: bool,
}

/// Initial accelerator `u⁰ = X̃ - X⁰`.
pub fn accelerator_init(x_tilde: &DenseMatrix, x0: &DenseMatrix) -> Result<DenseMatrix> {
    if !x_tilde.same_shape(x0) {
        return Err(Error::Dimension {
            op: "accelerator_init",
            detail: format!(
                "x_tilde is {:?}, x0 is {:?}",
                x_tilde.shape(),
                x0.shape()
            ),
        });
    }
    Ok(x_tilde.sub(x0))
}

/// One transport step of the accelerator: `(I - dt·A) u`.
pub fn accelerator_step(u: &DenseMatrix, a: &DenseMatrix, dt: f64) -> Result<DenseMatrix> {
    if a.rows() != a.cols() || a.cols() != u.rows() {
        return Err(Error::Dimension {
            op: "accelerator_step",
            detail: format!("a is {:?}, u is {:?}", a.shape(), u.shape()),
        });
    }
    let mut next = u.clone();
    next.add_assign_scaled(&a.mul(u), -dt);
    Ok(next)
}

fn validate_system(
    a: &DenseMatrix,
    b: &DenseMatrix,
    x0: &DenseMatrix,
    x_tilde: &DenseMatrix,
    op: &'static str,
) -> Result<()> {
    if a.rows() != a.cols() {
        return Err(Error::Dimension {
            op,
            detail: format!("a must be square, got {:?}", a.shape()),
        });
    }
    if b.rows() != a.rows() || !b.same_shape(x0) || !b.same_shape(x_tilde) {
        return Err(Error::Dimension {
            op,
            detail: format!(
                "conformability: a {:?}, b {:?}, x0 {:?}, x_tilde {:?}",
                a.shape(),
                b.shape(),
                x0.shape(),
                x_tilde.shape()
            ),
        });
    }
    Ok(())
}

/// One march (iterate plus control). The plain twin is the same structure
/// with a permanently zero control, so the accelerated and unaccelerated
/// paths execute identical arithmetic and a zero accelerator reproduces the
/// plain iteration bit for bit.
struct GradientTrack {
    x: DenseMatrix,
    u: DenseMatrix,
    u_live: bool,
    t: f64,
}

impl GradientTrack {
    fn new(x: DenseMatrix, u: DenseMatrix) -> Self {
        let u_live = u.max_abs() != 0.0;
        GradientTrack {
            x,
            u,
            u_live,
            t: 0.0,
        }
    }

    fn residual(&self, a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
        b.sub(&a.mul(&self.x))
    }

    /// Fixed-step update `x ← x + dt (r + u)`, `u ← (I - dt A) u`.
    fn advance(&mut self, a: &DenseMatrix, dt: f64, r: &DenseMatrix, cutoff: bool) {
        let drive = r.add(&self.u);
        self.x.add_assign_scaled(&drive, dt);
        if self.u_live {
            let au = a.mul(&self.u);
            self.u.add_assign_scaled(&au, -dt);
        }
        self.t += dt;
        if cutoff && self.u_live && self.t > 1.0 {
            self.u = DenseMatrix::zeros(self.u.rows(), self.u.cols());
            self.u_live = false;
        }
    }
}

fn fixed_step_march(
    a: &DenseMatrix,
    b: &DenseMatrix,
    x0: &DenseMatrix,
    x_tilde: &DenseMatrix,
    dt: f64,
    k_max: usize,
    opts: AccelOptions,
    op: &'static str,
) -> Result<(AccelState, RatioHistory)> {
    validate_system(a, b, x0, x_tilde, op)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument {
            op,
            detail: format!("dt must be positive and finite, got {dt}"),
        });
    }
    let mut accel = GradientTrack::new(x0.clone(), accelerator_init(x_tilde, x0)?);
    let mut plain = GradientTrack::new(x0.clone(), DenseMatrix::zeros(x0.rows(), x0.cols()));
    let mut hist = RatioHistory::default();
    let mut r_accel = accel.residual(a, b);
    for k in 0..=k_max {
        let r_plain = plain.residual(a, b);
        let na = r_accel.frobenius_norm();
        let np = r_plain.frobenius_norm();
        hist.record(k as f64 * dt, np, na);
        if !(na <= DIVERGENCE_BOUND && np <= DIVERGENCE_BOUND) {
            return Err(Error::Numeric {
                context: format!("{op} diverged at iteration {k} (residual {na:e})"),
            });
        }
        if k == k_max {
            break;
        }
        accel.advance(a, dt, &r_accel, opts.cutoff);
        plain.advance(a, dt, &r_plain, opts.cutoff);
        r_accel = accel.residual(a, b);
    }
    let state = AccelState {
        x: accel.x,
        u: accel.u,
        r: r_accel,
        k: k_max,
        dt_history: vec![dt; k_max],
    };
    Ok((state, hist))
}

/// Fixed-step accelerated gradient march for `A X = b`.
///
/// Iterates `X ← X + Δt (b - A X + u)` with the accelerator seeded by the
/// approximate solution `x_tilde`, running the unaccelerated twin alongside.
/// Returns the accelerated iterate and the residual-ratio history. The step
/// must satisfy the explicit stability bound of the caller's problem.
pub fn simple_gradient_accelerated(
    a: &DenseMatrix,
    b: &DenseMatrix,
    x0: &DenseMatrix,
    x_tilde: &DenseMatrix,
    dt: f64,
    k_max: usize,
) -> Result<(DenseMatrix, RatioHistory)> {
    simple_gradient_accelerated_with_options(a, b, x0, x_tilde, dt, k_max, AccelOptions::default())
}

/// [`simple_gradient_accelerated`] with explicit options.
pub fn simple_gradient_accelerated_with_options(
    a: &DenseMatrix,
    b: &DenseMatrix,
    x0: &DenseMatrix,
    x_tilde: &DenseMatrix,
    dt: f64,
    k_max: usize,
    opts: AccelOptions,
) -> Result<(DenseMatrix, RatioHistory)> {
    let (state, hist) = fixed_step_march(
        a,
        b,
        x0,
        x_tilde,
        dt,
        k_max,
        opts,
        "simple_gradient_accelerated",
    )?;
    Ok((state.x, hist))
}

/// Accelerated march toward `A^{-1}`: the flow `dX/dt = I - A X` with the
/// same control construction, recorded in the Frobenius norm.
pub fn inverse_accelerated(
    a: &DenseMatrix,
    x0: &DenseMatrix,
    x_tilde: &DenseMatrix,
    dt: f64,
    k_max: usize,
) -> Result<(DenseMatrix, RatioHistory)> {
    inverse_accelerated_with_options(a, x0, x_tilde, dt, k_max, AccelOptions::default())
}

/// [`inverse_accelerated`] with explicit options.
pub fn inverse_accelerated_with_options(
    a: &DenseMatrix,
    x0: &DenseMatrix,
    x_tilde: &DenseMatrix,
    dt: f64,
    k_max: usize,
    opts: AccelOptions,
) -> Result<(DenseMatrix, RatioHistory)> {
    let eye = DenseMatrix::identity(a.rows());
    let (state, hist) =
        fixed_step_march(a, &eye, x0, x_tilde, dt, k_max, opts, "inverse_accelerated")?;
    Ok((state.x, hist))
}

struct SdTrack {
    x: DenseMatrix,
    u: DenseMatrix,
    r: DenseMatrix,
    u_live: bool,
    t: f64,
}

impl SdTrack {
    /// One steepest-descent step with the optimal length
    /// `Δt = ⟨r,r⟩ / ⟨Ar,r⟩`; the residual is updated by recursion and
    /// checked against its direct recomputation. Returns the step taken.
    fn advance(
        &mut self,
        a: &DenseMatrix,
        b: &DenseMatrix,
        cutoff: bool,
        op: &'static str,
    ) -> Result<f64> {
        let num = frobenius_inner(&self.r, &self.r)?;
        if num == 0.0 {
            return Ok(0.0);
        }
        let ar = a.mul(&self.r);
        let denom = frobenius_inner(&ar, &self.r)?;
        if denom <= 0.0 {
            return Err(Error::NotSpd {
                context: format!("{op}: ⟨Ar, r⟩ = {denom:e} is not positive"),
            });
        }
        let dt = num / denom;
        let drive = self.r.add(&self.u);
        self.x.add_assign_scaled(&drive, dt);
        if self.u_live {
            let au = a.mul(&self.u);
            self.r.add_assign_scaled(&ar.add(&au), -dt);
            self.u.add_assign_scaled(&au, -dt);
        } else {
            self.r.add_assign_scaled(&ar, -dt);
        }
        let direct = b.sub(&a.mul(&self.x));
        let drift = self.r.sub(&direct).frobenius_norm();
        if drift > SD_DRIFT_TOL * f64::max(1.0, direct.frobenius_norm()) {
            return Err(Error::Numeric {
                context: format!("{op}: residual recursion drifted by {drift:e}"),
            });
        }
        self.t += dt;
        if cutoff && self.u_live && self.t > 1.0 {
            self.u = DenseMatrix::zeros(self.u.rows(), self.u.cols());
            self.u_live = false;
        }
        Ok(dt)
    }
}

/// Steepest-descent march with acceleration: the step length is the exact
/// line-search value `⟨r,r⟩/⟨Ar,r⟩` of the plain method, the iterate moves
/// along `r + u`, and both residual and accelerator are updated with the
/// same step. The unaccelerated twin performs classic steepest descent with
/// its own optimal steps.
pub fn steepest_descent_accelerated(
    a: &DenseMatrix,
    b: &DenseMatrix,
    x0: &DenseMatrix,
    x_tilde: &DenseMatrix,
    k_max: usize,
) -> Result<(DenseMatrix, RatioHistory)> {
    steepest_descent_accelerated_with_options(a, b, x0, x_tilde, k_max, AccelOptions::default())
}

/// [`steepest_descent_accelerated`] with explicit options; the cutoff uses
/// the accumulated variable steps.
pub fn steepest_descent_accelerated_with_options(
    a: &DenseMatrix,
    b: &DenseMatrix,
    x0: &DenseMatrix,
    x_tilde: &DenseMatrix,
    k_max: usize,
    opts: AccelOptions,
) -> Result<(DenseMatrix, RatioHistory)> {
    let op = "steepest_descent_accelerated";
    validate_system(a, b, x0, x_tilde, op)?;
    let u0 = accelerator_init(x_tilde, x0)?;
    let r0 = b.sub(&a.mul(x0));
    let mut accel = SdTrack {
        x: x0.clone(),
        u_live: u0.max_abs() != 0.0,
        u: u0,
        r: r0.clone(),
        t: 0.0,
    };
    let mut plain = SdTrack {
        x: x0.clone(),
        u: DenseMatrix::zeros(x0.rows(), x0.cols()),
        r: r0,
        u_live: false,
        t: 0.0,
    };
    let mut hist = RatioHistory::default();
    for k in 0..=k_max {
        let na = accel.r.frobenius_norm();
        let np = plain.r.frobenius_norm();
        hist.record(accel.t, np, na);
        if !(na <= DIVERGENCE_BOUND && np <= DIVERGENCE_BOUND) {
            return Err(Error::Numeric {
                context: format!("{op} diverged at iteration {k} (residual {na:e})"),
            });
        }
        if k == k_max {
            break;
        }
        accel.advance(a, b, opts.cutoff, op)?;
        plain.advance(a, b, opts.cutoff, op)?;
    }
    Ok((accel.x, hist))
}

/// Conjugate-gradient form of the accelerated march.
///
/// Reading CG as `X ← X + α_k (b - A X + V)` identifies the control `V`
/// with the conjugate-direction correction `β_{k-1} p_{k-1}`; the iteration
/// below is therefore standard CG (steps `α_k = ⟨r,r⟩/⟨p,Ap⟩`) and inherits
/// its finite termination in at most `n` steps. Stops when
/// `‖r‖_F ≤ tol · max(1, ‖b‖_F)` or after `k_max` iterations.
pub fn cg_accelerated(
    a: &DenseMatrix,
    b: &DenseMatrix,
    x0: &DenseMatrix,
    k_max: usize,
    tol: f64,
) -> Result<DenseMatrix> {
    let (x, _) = cg_accelerated_with_history(a, b, x0, k_max, tol)?;
    Ok(x)
}

/// [`cg_accelerated`] returning every iterate (starting with `x0`), for
/// step-by-step comparison against other implementations.
pub fn cg_accelerated_with_history(
    a: &DenseMatrix,
    b: &DenseMatrix,
    x0: &DenseMatrix,
    k_max: usize,
    tol: f64,
) -> Result<(DenseMatrix, Vec<DenseMatrix>)> {
    let op = "cg_accelerated";
    validate_system(a, b, x0, x0, op)?;
    let stop = tol * f64::max(1.0, b.frobenius_norm());
    let mut x = x0.clone();
    let mut r = b.sub(&a.mul(&x));
    let mut p = r.clone();
    let mut rs = frobenius_inner(&r, &r)?;
    let mut history = vec![x.clone()];
    for _ in 0..k_max {
        if rs.sqrt() <= stop {
            break;
        }
        let ap = a.mul(&p);
        let pap = frobenius_inner(&p, &ap)?;
        if pap <= 0.0 {
            return Err(Error::NotSpd {
                context: format!("{op}: ⟨p, Ap⟩ = {pap:e} is not positive"),
            });
        }
        let alpha = rs / pap;
        x.add_assign_scaled(&p, alpha);
        r.add_assign_scaled(&ap, -alpha);
        let rs_next = frobenius_inner(&r, &r)?;
        let beta = rs_next / rs;
        let mut p_next = r.clone();
        p_next.add_assign_scaled(&p, beta);
        p = p_next;
        rs = rs_next;
        history.push(x.clone());
    }
    Ok((x, history))
}
