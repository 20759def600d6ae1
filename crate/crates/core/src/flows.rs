//! Matrix ODE right-hand sides and one-interval propagators.
//!
//! Each matrix function corresponds to an initial-value flow along the
//! homotopy path `A(t) = X0 + t (A - X0)`:
//!
//! - inverse: `dQ/dt = -Q (A - X0) Q`, `Q(0) = X0^-1` (Riccati type);
//! - exponential: `dX/dt = B X`, `X(0) = I`;
//! - cosine/sine: the stacked block system `d(X;Y)/dt = ((A-X0) Y; -(A-X0) X)`
//!   whose components follow sine and cosine along the path;
//! - steady-state capture: `dX/dt = RHS - A X`, whose equilibrium solves
//!   `A X = RHS`.
//!
//! Propagators advance a state across one time span with a fixed number of
//! explicit Euler or Crank-Nicolson substeps. All sources are constant in
//! time, so every flow here is autonomous: the result of a propagation
//! depends only on the span length, never on its absolute position.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::exec;
use crate::matcore::{BlockFamily, DenseMatrix, LuFactors};

/// Right-hand side of a matrix initial-value problem.
#[derive(Debug, Clone, PartialEq)]
pub enum FlowSpec {
    /// `dX/dt = B X`.
    LinearHomogeneous { b: DenseMatrix },
    /// `dX/dt = A X + G` with a constant source `G`.
    LinearInhomogeneous { a_op: DenseMatrix, g_source: DenseMatrix },
    /// `dQ/dt = -Q (A - X0) Q`, the inverse-function flow.
    InverseRiccati { a: DenseMatrix, x0ref: DenseMatrix },
    /// Stacked `(X; Y)` system `d(X;Y)/dt = ((A-X0) Y; -(A-X0) X)`.
    TrigBlock { a: DenseMatrix, x0ref: DenseMatrix },
    /// `dX/dt = RHS - A X`, the steady-state flow for `A X = RHS`.
    SteadyResidual { a: DenseMatrix, rhs: DenseMatrix },
}

impl FlowSpec {
    /// Validates internal shape consistency of the specification itself.
    pub fn validate(&self) -> Result<()> {
        let check_square = |m: &DenseMatrix, what: &str| -> Result<()> {
            if !m.is_square() {
                return Err(Error::Dimension {
                    op: "FlowSpec::validate",
                    detail: format!("{what} must be square, got {:?}", m.shape()),
                });
            }
            Ok(())
        };
        match self {
            FlowSpec::LinearHomogeneous { b } => check_square(b, "operator b"),
            FlowSpec::LinearInhomogeneous { a_op, g_source } => {
                check_square(a_op, "operator a_op")?;
                if g_source.rows() != a_op.rows() {
                    return Err(Error::Dimension {
                        op: "FlowSpec::validate",
                        detail: format!(
                            "source has {} rows, operator is {}x{}",
                            g_source.rows(),
                            a_op.rows(),
                            a_op.cols()
                        ),
                    });
                }
                Ok(())
            }
            FlowSpec::InverseRiccati { a, x0ref } | FlowSpec::TrigBlock { a, x0ref } => {
                check_square(a, "matrix a")?;
                if x0ref.shape() != a.shape() {
                    return Err(Error::Dimension {
                        op: "FlowSpec::validate",
                        detail: format!(
                            "x0ref shape {:?} differs from a shape {:?}",
                            x0ref.shape(),
                            a.shape()
                        ),
                    });
                }
                Ok(())
            }
            FlowSpec::SteadyResidual { a, rhs } => {
                check_square(a, "operator a")?;
                if rhs.rows() != a.rows() {
                    return Err(Error::Dimension {
                        op: "FlowSpec::validate",
                        detail: format!(
                            "rhs has {} rows, operator is {}x{}",
                            rhs.rows(),
                            a.rows(),
                            a.cols()
                        ),
                    });
                }
                Ok(())
            }
        }
    }

    /// Shape a state matrix must have for this flow, given its column count.
    pub fn state_rows(&self) -> usize {
        match self {
            FlowSpec::LinearHomogeneous { b } => b.rows(),
            FlowSpec::LinearInhomogeneous { a_op, .. } => a_op.rows(),
            FlowSpec::InverseRiccati { a, .. } => a.rows(),
            FlowSpec::TrigBlock { a, .. } => 2 * a.rows(),
            FlowSpec::SteadyResidual { a, .. } => a.rows(),
        }
    }

    /// Checks that `x` is a valid state for this flow.
    pub fn validate_state(&self, x: &DenseMatrix) -> Result<()> {
        let rows = self.state_rows();
        let cols_ok = match self {
            // The Riccati flow multiplies Q on both sides: Q must be square.
            FlowSpec::InverseRiccati { a, .. } => x.cols() == a.cols(),
            // The trig block stacks two square blocks.
            FlowSpec::TrigBlock { a, .. } => x.cols() == a.cols(),
            FlowSpec::LinearInhomogeneous { g_source, .. } => x.cols() == g_source.cols(),
            FlowSpec::SteadyResidual { rhs, .. } => x.cols() == rhs.cols(),
            FlowSpec::LinearHomogeneous { .. } => true,
        };
        if x.rows() != rows || !cols_ok {
            return Err(Error::Dimension {
                op: "FlowSpec::validate_state",
                detail: format!("state shape {:?} incompatible with flow", x.shape()),
            });
        }
        Ok(())
    }

    /// True for flows whose right-hand side is linear (or affine) in the state.
    pub fn is_linear(&self) -> bool {
        !matches!(self, FlowSpec::InverseRiccati { .. })
    }

    /// True when the right-hand side is linear with zero constant part.
    pub fn is_linear_homogeneous(&self) -> bool {
        matches!(
            self,
            FlowSpec::LinearHomogeneous { .. } | FlowSpec::TrigBlock { .. }
        )
    }

    /// Linear part `L` and constant part `C` for flows of the form
    /// `dX/dt = L X + C`, as used by the Crank-Nicolson scheme.
    fn cn_parts(&self) -> Option<(DenseMatrix, Option<DenseMatrix>)> {
        match self {
            FlowSpec::LinearHomogeneous { b } => Some((b.clone(), None)),
            FlowSpec::LinearInhomogeneous { a_op, g_source } => {
                Some((a_op.clone(), Some(g_source.clone())))
            }
            FlowSpec::SteadyResidual { a, rhs } => Some((a.scaled(-1.0), Some(rhs.clone()))),
            _ => None,
        }
    }
}

/// Evaluates the right-hand side of `flow` at state `x`.
///
/// The time argument is accepted for interface uniformity; every flow here
/// is autonomous (sources are constant in time by design).
pub fn rhs_eval(flow: &FlowSpec, _t: f64, x: &DenseMatrix) -> Result<DenseMatrix> {
    flow.validate_state(x)?;
    Ok(match flow {
        FlowSpec::LinearHomogeneous { b } => b.mul(x),
        FlowSpec::LinearInhomogeneous { a_op, g_source } => a_op.mul(x).add(g_source),
        FlowSpec::InverseRiccati { a, x0ref } => {
            let m = a.sub(x0ref);
            x.mul(&m).mul(x).scaled(-1.0)
        }
        FlowSpec::TrigBlock { a, x0ref } => {
            let n = a.rows();
            let s = x.cols();
            let m = a.sub(x0ref);
            let (xs, ys) = split_stacked(x, n, s);
            let top = m.mul(&ys);
            let bottom = m.mul(&xs).scaled(-1.0);
            stack(&top, &bottom)
        }
        FlowSpec::SteadyResidual { a, rhs } => rhs.sub(&a.mul(x)),
    })
}

/// Splits a stacked `(X; Y)` state into its two blocks.
pub fn split_stacked(u: &DenseMatrix, n: usize, s: usize) -> (DenseMatrix, DenseMatrix) {
    let mut x = DenseMatrix::zeros(n, s);
    let mut y = DenseMatrix::zeros(n, s);
    for i in 0..n {
        for j in 0..s {
            x.set(i, j, u.get(i, j));
            y.set(i, j, u.get(n + i, j));
        }
    }
    (x, y)
}

/// Stacks two equally shaped blocks vertically.
pub fn stack(top: &DenseMatrix, bottom: &DenseMatrix) -> DenseMatrix {
    assert!(top.same_shape(bottom), "stack: shape mismatch");
    let (n, s) = top.shape();
    let mut u = DenseMatrix::zeros(2 * n, s);
    for i in 0..n {
        for j in 0..s {
            u.set(i, j, top.get(i, j));
            u.set(n + i, j, bottom.get(i, j));
        }
    }
    u
}

/// Uniform two-level time grid: `n_coarse` intervals, each refined into
/// `fine_per_interval` substeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_start: f64,
    t_end: f64,
    n_coarse: usize,
    fine_per_interval: usize,
}

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, n_coarse: usize, fine_per_interval: usize) -> Result<Self> {
        if !(t_end > t_start) || !t_start.is_finite() || !t_end.is_finite() {
            return Err(Error::InvalidArgument {
                op: "TimeGrid::new",
                detail: format!("need finite t_end > t_start, got [{t_start}, {t_end}]"),
            });
        }
        if n_coarse == 0 || fine_per_interval == 0 {
            return Err(Error::InvalidArgument {
                op: "TimeGrid::new",
                detail: "interval and substep counts must be at least 1".into(),
            });
        }
        Ok(TimeGrid {
            t_start,
            t_end,
            n_coarse,
            fine_per_interval,
        })
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_coarse(&self) -> usize {
        self.n_coarse
    }

    pub fn fine_per_interval(&self) -> usize {
        self.fine_per_interval
    }

    /// Coarse step `(t_end - t_start) / N`.
    pub fn coarse_dt(&self) -> f64 {
        (self.t_end - self.t_start) / self.n_coarse as f64
    }

    /// Fine step `coarse_dt / J`.
    pub fn fine_dt(&self) -> f64 {
        self.coarse_dt() / self.fine_per_interval as f64
    }

    /// Node `T_n = t_start + n * coarse_dt`, for `n = 0..=N`.
    pub fn t_node(&self, n: usize) -> f64 {
        debug_assert!(n <= self.n_coarse);
        self.t_start + n as f64 * self.coarse_dt()
    }
}

/// Time scheme of a propagator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Explicit Euler, first order; works with every flow.
    Euler,
    /// Crank-Nicolson, second order; linear flows with constant sources only.
    CrankNicolson,
}

/// Precomputed Crank-Nicolson operators for one substep size.
#[derive(Debug)]
struct CnOp {
    /// LU factors of `I - (h/2) L`.
    lu: LuFactors,
    /// Explicit half `I + (h/2) L`.
    rhs_op: DenseMatrix,
    /// `h * C` for the constant source `C` (trapezoid of a constant).
    source: Option<DenseMatrix>,
}

/// Advances states of one flow across a time span with a fixed substep count.
///
/// Crank-Nicolson factors `I - (h/2) L` once per distinct substep size and
/// reuses the cached LU for every subsequent call; the cache is internally
/// synchronized, so a propagator can be shared freely across threads.
#[derive(Debug)]
pub struct Propagator {
    scheme: Scheme,
    steps: usize,
    flow: FlowSpec,
    cn_cache: Mutex<HashMap<u64, Arc<CnOp>>>,
}

impl Propagator {
    pub fn new(scheme: Scheme, steps: usize, flow: FlowSpec) -> Result<Self> {
        flow.validate()?;
        if steps == 0 {
            return Err(Error::InvalidArgument {
                op: "Propagator::new",
                detail: "substep count must be at least 1".into(),
            });
        }
        if scheme == Scheme::CrankNicolson && flow.cn_parts().is_none() {
            return Err(Error::UnsupportedScheme {
                scheme: "crank_nicolson",
                detail: "only linear flows with constant sources are supported".into(),
            });
        }
        Ok(Propagator {
            scheme,
            steps,
            flow,
            cn_cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn flow(&self) -> &FlowSpec {
        &self.flow
    }

    /// Builds (and caches) the Crank-Nicolson operators for substep `h`.
    fn cn_op(&self, h: f64) -> Result<Arc<CnOp>> {
        let key = h.to_bits();
        if let Some(op) = self.cn_cache.lock().unwrap().get(&key) {
            return Ok(op.clone());
        }
        let (l, c) = self
            .flow
            .cn_parts()
            .expect("scheme validation guarantees linearity");
        let n = l.rows();
        let mut implicit = DenseMatrix::identity(n);
        implicit.add_assign_scaled(&l, -0.5 * h);
        let mut rhs_op = DenseMatrix::identity(n);
        rhs_op.add_assign_scaled(&l, 0.5 * h);
        let lu = implicit.lu_factor().map_err(|_| Error::Singular {
            context: format!("crank_nicolson system matrix I - (h/2)L with h = {h}"),
        })?;
        let op = Arc::new(CnOp {
            lu,
            rhs_op,
            source: c.map(|c| c.scaled(h)),
        });
        self.cn_cache.lock().unwrap().insert(key, op.clone());
        Ok(op)
    }

    /// Eagerly builds the Crank-Nicolson cache for a span of length
    /// `t1 - t0`, so that later concurrent calls never contend on it.
    pub fn prewarm(&self, t0: f64, t1: f64) -> Result<()> {
        if self.scheme == Scheme::CrankNicolson {
            let h = (t1 - t0) / self.steps as f64;
            self.cn_op(h)?;
        }
        Ok(())
    }

    /// Propagates `x0` from `t0` to `t1` using the configured substeps.
    pub fn propagate(&self, t0: f64, t1: f64, x0: &DenseMatrix) -> Result<DenseMatrix> {
        if !(t1 > t0) {
            return Err(Error::InvalidArgument {
                op: "Propagator::propagate",
                detail: format!("need t1 > t0, got [{t0}, {t1}]"),
            });
        }
        self.flow.validate_state(x0)?;
        let h = (t1 - t0) / self.steps as f64;
        let mut x = x0.clone();
        match self.scheme {
            Scheme::Euler => {
                for j in 0..self.steps {
                    let t = t0 + j as f64 * h;
                    let rhs = rhs_eval(&self.flow, t, &x)?;
                    x.add_assign_scaled(&rhs, h);
                }
            }
            Scheme::CrankNicolson => {
                let op = self.cn_op(h)?;
                for _ in 0..self.steps {
                    let mut staged = op.rhs_op.mul(&x);
                    if let Some(src) = &op.source {
                        staged = staged.add(src);
                    }
                    x = op.lu.solve_matrix(&staged)?;
                }
            }
        }
        if !x.is_finite() {
            return Err(Error::Numeric {
                context: format!("non-finite state while propagating [{t0}, {t1}]"),
            });
        }
        Ok(x)
    }
}

/// Evaluates `sum_i coeffs[i] * (F(basis_i) - zero_image) + zero_image`,
/// the affine recombination that replaces a fine solve of a projected state
/// for linear flows. Pass `zero_image = None` for homogeneous flows (where
/// the image of zero is zero) and `Some(F(0))` for inhomogeneous ones.
///
/// The basis blocks are propagated internally (in parallel when available).
pub fn propagate_affine(
    p: &Propagator,
    t0: f64,
    t1: f64,
    basis: &BlockFamily,
    coeffs: &[f64],
    zero_image: Option<&DenseMatrix>,
) -> Result<DenseMatrix> {
    if !p.flow().is_linear() {
        return Err(Error::UnsupportedMethod {
            method: "propagate_affine",
            detail: "affine recombination requires a linear flow".into(),
        });
    }
    if coeffs.len() != basis.len() {
        return Err(Error::Dimension {
            op: "propagate_affine",
            detail: format!("{} coefficients for {} blocks", coeffs.len(), basis.len()),
        });
    }
    let images: Vec<Result<DenseMatrix>> =
        exec::par_map(basis.blocks(), |b| p.propagate(t0, t1, b));
    let (n, s) = basis.block_shape();
    let mut out = DenseMatrix::zeros(n, s);
    for (img, &alpha) in images.into_iter().zip(coeffs) {
        let img = img?;
        match zero_image {
            Some(z) => out.add_assign_scaled(&img.sub(z), alpha),
            None => out.add_assign_scaled(&img, alpha),
        }
    }
    if let Some(z) = zero_image {
        out = out.add(z);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m1(v: f64) -> DenseMatrix {
        DenseMatrix::from_vec(1, 1, vec![v]).unwrap()
    }

    #[test]
    fn rhs_linear_homogeneous() {
        let b = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![-1.0, 0.0]]).unwrap();
        let x = DenseMatrix::from_rows(&[vec![2.0], vec![3.0]]).unwrap();
        let r = rhs_eval(&FlowSpec::LinearHomogeneous { b }, 0.0, &x).unwrap();
        assert_eq!(r.get(0, 0), 3.0);
        assert_eq!(r.get(1, 0), -2.0);
    }

    #[test]
    fn rhs_inverse_riccati_scalar() {
        // a = 2, x0 = 1, q = 3: rhs = -q (a - x0) q = -9.
        let flow = FlowSpec::InverseRiccati {
            a: m1(2.0),
            x0ref: m1(1.0),
        };
        let r = rhs_eval(&flow, 0.0, &m1(3.0)).unwrap();
        assert_eq!(r.get(0, 0), -9.0);
    }

    #[test]
    fn rhs_trig_block_structure() {
        // With X0 = 0 the stacked system reads (X; Y)' = (A Y; -A X).
        let a = DenseMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 3.0]]).unwrap();
        let flow = FlowSpec::TrigBlock {
            a: a.clone(),
            x0ref: DenseMatrix::zeros(2, 2),
        };
        let x = DenseMatrix::identity(2);
        let y = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let u = stack(&x, &y);
        let r = rhs_eval(&flow, 0.0, &u).unwrap();
        let (top, bottom) = split_stacked(&r, 2, 2);
        assert!(top.sub(&a.mul(&y)).max_abs() == 0.0);
        assert!(bottom.sub(&a.mul(&x).scaled(-1.0)).max_abs() == 0.0);
    }

    #[test]
    fn rhs_steady_residual() {
        let a = DenseMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 4.0]]).unwrap();
        let rhs = DenseMatrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        let x = DenseMatrix::from_rows(&[vec![0.5], vec![0.25]]).unwrap();
        let flow = FlowSpec::SteadyResidual { a, rhs };
        let r = rhs_eval(&flow, 0.0, &x).unwrap();
        // x solves the system, so the residual flow vanishes.
        assert_eq!(r.max_abs(), 0.0);
    }

    #[test]
    fn euler_geometric_decay() {
        // dx/dt = -x over [0,1] with J steps: x_J = (1 - 1/J)^J; J = 4 gives
        // 0.75^4 = 0.31640625 exactly.
        let flow = FlowSpec::LinearHomogeneous { b: m1(-1.0) };
        let p = Propagator::new(Scheme::Euler, 4, flow).unwrap();
        let x = p.propagate(0.0, 1.0, &m1(1.0)).unwrap();
        assert_eq!(x.get(0, 0), 0.31640625);
    }

    #[test]
    fn crank_nicolson_scalar_step() {
        // One CN step for dx/dt = -x with h = 0.1: x1 = 0.95 / 1.05 = 19/21.
        let flow = FlowSpec::LinearHomogeneous { b: m1(-1.0) };
        let p = Propagator::new(Scheme::CrankNicolson, 1, flow).unwrap();
        let x = p.propagate(0.0, 0.1, &m1(1.0)).unwrap();
        assert!((x.get(0, 0) - 19.0 / 21.0).abs() < 1e-15);
    }

    #[test]
    fn crank_nicolson_rejects_nonlinear_flow() {
        let flow = FlowSpec::InverseRiccati {
            a: m1(2.0),
            x0ref: m1(1.0),
        };
        let err = Propagator::new(Scheme::CrankNicolson, 1, flow).unwrap_err();
        assert!(matches!(err, Error::UnsupportedScheme { .. }));
    }

    #[test]
    fn crank_nicolson_singular_system_matrix() {
        // h = 0.1, L = 20: I - (h/2) L = 0, which cannot be factored.
        let flow = FlowSpec::LinearHomogeneous { b: m1(20.0) };
        let p = Propagator::new(Scheme::CrankNicolson, 1, flow).unwrap();
        let err = p.propagate(0.0, 0.1, &m1(1.0)).unwrap_err();
        assert!(matches!(err, Error::Singular { .. }));
    }

    #[test]
    fn propagate_rejects_empty_span() {
        let flow = FlowSpec::LinearHomogeneous { b: m1(-1.0) };
        let p = Propagator::new(Scheme::Euler, 1, flow).unwrap();
        assert!(p.propagate(1.0, 1.0, &m1(1.0)).is_err());
    }

    #[test]
    fn propagation_composes_bitwise_for_matching_substeps() {
        let b = DenseMatrix::from_rows(&[vec![-1.0, 0.25], vec![0.5, -2.0]]).unwrap();
        let x0 = DenseMatrix::from_rows(&[vec![1.0], vec![-1.0]]).unwrap();
        let flow = FlowSpec::LinearHomogeneous { b };
        let whole = Propagator::new(Scheme::Euler, 8, flow.clone()).unwrap();
        let half = Propagator::new(Scheme::Euler, 4, flow).unwrap();
        // Same substep h = 0.125 in both variants: identical arithmetic.
        let direct = whole.propagate(0.0, 1.0, &x0).unwrap();
        let mid = half.propagate(0.0, 0.5, &x0).unwrap();
        let composed = half.propagate(0.5, 1.0, &mid).unwrap();
        assert_eq!(direct, composed);
    }

    #[test]
    fn euler_flags_non_finite_states() {
        // Quadratic growth from a huge start overflows immediately.
        let flow = FlowSpec::InverseRiccati {
            a: m1(0.0),
            x0ref: m1(1.0),
        };
        let p = Propagator::new(Scheme::Euler, 1, flow).unwrap();
        let err = p.propagate(0.0, 1.0, &m1(1e200)).unwrap_err();
        assert!(matches!(err, Error::Numeric { .. }));
    }

    #[test]
    fn affine_recombination_matches_direct_propagation() {
        let b = DenseMatrix::from_rows(&[vec![-0.5, 0.125], vec![0.25, -1.0]]).unwrap();
        let flow = FlowSpec::LinearHomogeneous { b };
        let p = Propagator::new(Scheme::Euler, 16, flow).unwrap();
        let q1 = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let q2 = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let basis = BlockFamily::new(vec![q1.clone(), q2.clone()]).unwrap();
        let coeffs = [0.75, -1.5];
        let recombined = propagate_affine(&p, 0.0, 1.0, &basis, &coeffs, None).unwrap();
        let combo = q1.scaled(coeffs[0]).add(&q2.scaled(coeffs[1]));
        let direct = p.propagate(0.0, 1.0, &combo).unwrap();
        let scale = direct.frobenius_norm().max(1.0);
        assert!(recombined.sub(&direct).frobenius_norm() <= 1e-12 * scale);
    }

    #[test]
    fn affine_recombination_with_source_term() {
        let a_op = DenseMatrix::from_rows(&[vec![-1.0, 0.0], vec![0.0, -0.5]]).unwrap();
        let g = DenseMatrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let flow = FlowSpec::LinearInhomogeneous { a_op, g_source: g };
        let p = Propagator::new(Scheme::Euler, 16, flow).unwrap();
        let q1 = DenseMatrix::from_rows(&[vec![1.0], vec![0.0]]).unwrap();
        let q2 = DenseMatrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let basis = BlockFamily::new(vec![q1.clone(), q2.clone()]).unwrap();
        let coeffs = [2.0, -0.5];
        let zero_image = p.propagate(0.0, 1.0, &DenseMatrix::zeros(2, 1)).unwrap();
        let recombined =
            propagate_affine(&p, 0.0, 1.0, &basis, &coeffs, Some(&zero_image)).unwrap();
        let combo = q1.scaled(coeffs[0]).add(&q2.scaled(coeffs[1]));
        let direct = p.propagate(0.0, 1.0, &combo).unwrap();
        let scale = direct.frobenius_norm().max(1.0);
        assert!(recombined.sub(&direct).frobenius_norm() <= 1e-12 * scale);
    }

    #[test]
    fn affine_recombination_requires_linearity() {
        let flow = FlowSpec::InverseRiccati {
            a: m1(2.0),
            x0ref: m1(1.0),
        };
        let p = Propagator::new(Scheme::Euler, 4, flow).unwrap();
        let basis = BlockFamily::new(vec![m1(1.0)]).unwrap();
        let err = propagate_affine(&p, 0.0, 1.0, &basis, &[1.0], None).unwrap_err();
        assert!(matches!(err, Error::UnsupportedMethod { .. }));
    }

    #[test]
    fn time_grid_nodes_and_steps() {
        let g = TimeGrid::new(0.0, 1.0, 4, 8).unwrap();
        assert_eq!(g.coarse_dt(), 0.25);
        assert_eq!(g.fine_dt(), 0.03125);
        assert_eq!(g.t_node(0), 0.0);
        assert_eq!(g.t_node(4), 1.0);
        assert!(TimeGrid::new(1.0, 1.0, 4, 8).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 0, 8).is_err());
    }
}
