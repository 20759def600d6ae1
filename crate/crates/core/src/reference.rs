//! Problem generators and slow-but-sure reference oracles.
//!
//! The oracles deliberately use a different algorithm family than the ODE
//! solvers they validate: Taylor series with scaling and squaring for the
//! exponential and trigonometric functions, pivoted LU for the inverse.
//! `sequential_fine` is the canonical fine trajectory that every parareal
//! variant converges to on its grid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::flows::{FlowSpec, Propagator, Scheme, TimeGrid};
use crate::matcore::{global_qr, BlockFamily, DenseMatrix};

/// Built-in test matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    /// Tridiagonal (-1, 2, -1) of order `n`.
    Laplacian1d { n: usize },
    /// Five-point stencil on an `n` by `n` interior grid (order `n*n`).
    Laplacian2d { n: usize },
    /// `Q^T diag(1..n) Q` with a seeded random orthogonal `Q`.
    SpdRandomShifted { n: usize, seed: u64 },
}

/// Optional normalization applied after generation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scaling {
    None,
    /// Divide by the Frobenius norm.
    Frobenius,
    /// Divide by `2^m` (exact in floating point).
    Pow2(u32),
}

/// A generator request: which matrix, and how to scale it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub scaling: Scaling,
}

/// Generates the requested matrix.
pub fn generate(spec: &ProblemSpec) -> Result<DenseMatrix> {
    let a = match spec.kind {
        ProblemKind::Laplacian1d { n } => laplacian_1d(n)?,
        ProblemKind::Laplacian2d { n } => laplacian_2d(n)?,
        ProblemKind::SpdRandomShifted { n, seed } => spd_random_shifted(n, seed)?,
    };
    Ok(match spec.scaling {
        Scaling::None => a,
        Scaling::Frobenius => {
            let nrm = a.frobenius_norm();
            a.scaled(1.0 / nrm)
        }
        Scaling::Pow2(m) => a.scaled(0.5f64.powi(m as i32)),
    })
}

/// Tridiagonal (-1, 2, -1) matrix of order `n`.
pub fn laplacian_1d(n: usize) -> Result<DenseMatrix> {
    if n == 0 {
        return Err(Error::InvalidArgument {
            op: "laplacian_1d",
            detail: "order must be positive".into(),
        });
    }
    let mut a = DenseMatrix::zeros(n, n);
    for i in 0..n {
        a.set(i, i, 2.0);
        if i + 1 < n {
            a.set(i, i + 1, -1.0);
            a.set(i + 1, i, -1.0);
        }
    }
    Ok(a)
}

/// Five-point stencil on an `n` by `n` interior grid; the matrix has order
/// `n * n`, diagonal 4 and -1 couplings to grid neighbours.
pub fn laplacian_2d(n: usize) -> Result<DenseMatrix> {
    if n == 0 {
        return Err(Error::InvalidArgument {
            op: "laplacian_2d",
            detail: "grid size must be positive".into(),
        });
    }
    let order = n * n;
    let mut a = DenseMatrix::zeros(order, order);
    for iy in 0..n {
        for ix in 0..n {
            let row = iy * n + ix;
            a.set(row, row, 4.0);
            if ix + 1 < n {
                a.set(row, row + 1, -1.0);
                a.set(row + 1, row, -1.0);
            }
            if iy + 1 < n {
                a.set(row, row + n, -1.0);
                a.set(row + n, row, -1.0);
            }
        }
    }
    Ok(a)
}

/// SPD matrix with spectrum exactly `{1, ..., n}`: `Q^T diag(1..n) Q` for a
/// seeded random orthogonal `Q`. Deterministic in `(n, seed)`.
pub fn spd_random_shifted(n: usize, seed: u64) -> Result<DenseMatrix> {
    if n == 0 {
        return Err(Error::InvalidArgument {
            op: "spd_random_shifted",
            detail: "order must be positive".into(),
        });
    }
    let mut attempt = 0u64;
    loop {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt));
        let cols: Vec<DenseMatrix> = (0..n)
            .map(|_| {
                DenseMatrix::from_vec(n, 1, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
                    .expect("valid column")
            })
            .collect();
        let qr = global_qr(&BlockFamily::new(cols)?)?;
        if qr.kept.len() < n {
            // A random family is dependent with probability zero, but stay
            // deterministic and just reseed.
            attempt += 1;
            continue;
        }
        let mut q = DenseMatrix::zeros(n, n);
        for (j, col) in qr.q.blocks().iter().enumerate() {
            for i in 0..n {
                q.set(i, j, col.get(i, 0));
            }
        }
        let d = DenseMatrix::diagonal(&(1..=n).map(|k| k as f64).collect::<Vec<_>>());
        return Ok(q.transpose().mul(&d).mul(&q));
    }
}

/// Smallest `m >= 0` such that `2^-m * ||a||_inf <= 1` (private copy of the
/// scaling rule, so the oracles do not depend on the solver modules).
fn pow2_exponent(a: &DenseMatrix) -> u32 {
    let mut norm = a.inf_norm();
    let mut m = 0;
    while norm > 1.0 {
        norm *= 0.5;
        m += 1;
    }
    m
}

/// Matrix inverse by LU with partial pivoting.
pub fn reference_inverse(a: &DenseMatrix) -> Result<DenseMatrix> {
    if !a.is_square() {
        return Err(Error::Dimension {
            op: "reference_inverse",
            detail: format!("matrix is {:?}, expected square", a.shape()),
        });
    }
    a.lu_factor()?.solve_matrix(&DenseMatrix::identity(a.rows()))
}

/// Series cutoff: terms below this Frobenius norm are dropped.
const TERM_TOL: f64 = 1e-20;
/// Hard cap on series length (the scaled argument has norm at most one, so
/// the factorial decay reaches `TERM_TOL` long before this).
const MAX_TERMS: usize = 120;

/// Matrix exponential by Taylor series with scaling and squaring.
pub fn reference_exp(a: &DenseMatrix) -> Result<DenseMatrix> {
    if !a.is_square() {
        return Err(Error::Dimension {
            op: "reference_exp",
            detail: format!("matrix is {:?}, expected square", a.shape()),
        });
    }
    let m = pow2_exponent(a);
    let t = a.scaled(0.5f64.powi(m as i32));
    let n = a.rows();
    let mut sum = DenseMatrix::identity(n);
    let mut term = DenseMatrix::identity(n);
    for k in 1..=MAX_TERMS {
        term = term.mul(&t).scaled(1.0 / k as f64);
        sum = sum.add(&term);
        if term.frobenius_norm() < TERM_TOL {
            break;
        }
    }
    let mut result = sum;
    for _ in 0..m {
        result = result.mul(&result);
        if !result.is_finite() {
            return Err(Error::Numeric {
                context: "overflow while squaring in reference_exp".into(),
            });
        }
    }
    Ok(result)
}

/// Matrix cosine and sine, computed jointly: Taylor series on the scaled
/// argument, then `m` double-angle steps `sin' = 2 sin cos`,
/// `cos' = 2 cos^2 - I`.
pub fn reference_cos_sin(a: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
    if !a.is_square() {
        return Err(Error::Dimension {
            op: "reference_cos_sin",
            detail: format!("matrix is {:?}, expected square", a.shape()),
        });
    }
    let m = pow2_exponent(a);
    let t = a.scaled(0.5f64.powi(m as i32));
    let n = a.rows();
    let t2 = t.mul(&t);
    let mut cos = DenseMatrix::identity(n);
    let mut sin = t.clone();
    let mut cos_term = DenseMatrix::identity(n);
    let mut sin_term = t;
    for k in 0..MAX_TERMS {
        let k = k as f64;
        // cos: (-1)^(k+1) T^(2k+2) / (2k+2)!; sin analogous one power up.
        cos_term = cos_term
            .mul(&t2)
            .scaled(-1.0 / ((2.0 * k + 1.0) * (2.0 * k + 2.0)));
        sin_term = sin_term
            .mul(&t2)
            .scaled(-1.0 / ((2.0 * k + 2.0) * (2.0 * k + 3.0)));
        cos = cos.add(&cos_term);
        sin = sin.add(&sin_term);
        if cos_term.frobenius_norm() < TERM_TOL && sin_term.frobenius_norm() < TERM_TOL {
            break;
        }
    }
    let ident = DenseMatrix::identity(n);
    for _ in 0..m {
        let new_sin = sin.mul(&cos).scaled(2.0);
        let new_cos = cos.mul(&cos).scaled(2.0).sub(&ident);
        sin = new_sin;
        cos = new_cos;
    }
    Ok((cos, sin))
}

/// Matrix cosine (see [`reference_cos_sin`]).
pub fn reference_cos(a: &DenseMatrix) -> Result<DenseMatrix> {
    reference_cos_sin(a).map(|(c, _)| c)
}

/// Matrix sine (see [`reference_cos_sin`]).
pub fn reference_sin(a: &DenseMatrix) -> Result<DenseMatrix> {
    reference_cos_sin(a).map(|(_, s)| s)
}

/// How to build an approximate inverse for acceleration targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ApproxMethod {
    /// Incomplete LU with zero fill on the sparsity pattern of the matrix,
    /// then exact triangular solves against the identity.
    Ilu0,
    /// Exact inverse with entries below `p * max|entry|` zeroed.
    Threshold(f64),
}

/// Approximate inverse of `a` by the requested method.
pub fn approx_inverse(a: &DenseMatrix, method: ApproxMethod) -> Result<DenseMatrix> {
    if !a.is_square() {
        return Err(Error::Dimension {
            op: "approx_inverse",
            detail: format!("matrix is {:?}, expected square", a.shape()),
        });
    }
    match method {
        ApproxMethod::Ilu0 => ilu0_inverse(a),
        ApproxMethod::Threshold(p) => {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument {
                    op: "approx_inverse",
                    detail: format!("threshold fraction must lie in [0, 1], got {p}"),
                });
            }
            let inv = reference_inverse(a)?;
            let cut = p * inv.max_abs();
            let n = inv.rows();
            let mut out = DenseMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    let v = inv.get(i, j);
                    if v.abs() >= cut {
                        out.set(i, j, v);
                    }
                }
            }
            Ok(out)
        }
    }
}

/// ILU(0) factorization (fill restricted to the pattern of `a`), followed by
/// triangular solves against the identity.
fn ilu0_inverse(a: &DenseMatrix) -> Result<DenseMatrix> {
    let n = a.rows();
    let pattern = |i: usize, j: usize| a.get(i, j) != 0.0;
    let mut lu = a.clone();
    for i in 1..n {
        for k in 0..i {
            if !pattern(i, k) {
                continue;
            }
            let pivot = lu.get(k, k);
            if pivot == 0.0 {
                return Err(Error::Singular {
                    context: format!("ilu0 zero pivot at {k}"),
                });
            }
            let factor = lu.get(i, k) / pivot;
            lu.set(i, k, factor);
            for j in (k + 1)..n {
                if pattern(i, j) {
                    lu.set(i, j, lu.get(i, j) - factor * lu.get(k, j));
                }
            }
        }
    }
    if lu.get(n - 1, n - 1) == 0.0 {
        return Err(Error::Singular {
            context: format!("ilu0 zero pivot at {}", n - 1),
        });
    }
    // Solve L U X = I using the incomplete factors (entries outside the
    // pattern are zero and skipped naturally).
    let mut x = DenseMatrix::identity(n);
    for i in 1..n {
        for k in 0..i {
            let l = if pattern(i, k) { lu.get(i, k) } else { 0.0 };
            if l != 0.0 {
                for j in 0..n {
                    let v = x.get(i, j) - l * x.get(k, j);
                    x.set(i, j, v);
                }
            }
        }
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            let u = if pattern(i, k) { lu.get(i, k) } else { 0.0 };
            if u != 0.0 {
                for j in 0..n {
                    let v = x.get(i, j) - u * x.get(k, j);
                    x.set(i, j, v);
                }
            }
        }
        let d = lu.get(i, i);
        for j in 0..n {
            x.set(i, j, x.get(i, j) / d);
        }
    }
    Ok(x)
}

/// Sequential fine propagation across the whole grid: the trajectory every
/// parareal variant converges to. Returns the `N + 1` interval endpoints,
/// starting with `u0` itself.
///
/// All flows are autonomous, so each interval is advanced over a span of the
/// same length; this keeps the per-interval maps bitwise identical to the
/// ones used inside the parareal iterations.
pub fn sequential_fine(
    flow: &FlowSpec,
    grid: &TimeGrid,
    scheme: Scheme,
    u0: &DenseMatrix,
) -> Result<Vec<DenseMatrix>> {
    flow.validate_state(u0)?;
    let fine = Propagator::new(scheme, grid.fine_per_interval(), flow.clone())?;
    let dt = grid.coarse_dt();
    fine.prewarm(0.0, dt)?;
    let mut out = Vec::with_capacity(grid.n_coarse() + 1);
    out.push(u0.clone());
    for n in 0..grid.n_coarse() {
        let next = fine.propagate(0.0, dt, &out[n]).map_err(|e| Error::Numeric {
            context: format!("fine propagation failed on interval {n}: {e}"),
        })?;
        out.push(next);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laplacian_1d_order_two() {
        let a = laplacian_1d(2).unwrap();
        assert_eq!(a, DenseMatrix::from_rows(&[vec![2.0, -1.0], vec![-1.0, 2.0]]).unwrap());
        // Eigenvalues of this matrix are exactly {1, 3}: check via trace and
        // determinant.
        let trace = a.get(0, 0) + a.get(1, 1);
        let det = a.get(0, 0) * a.get(1, 1) - a.get(0, 1) * a.get(1, 0);
        assert_eq!(trace, 4.0);
        assert_eq!(det, 3.0);
    }

    #[test]
    fn laplacian_2d_smallest_grid() {
        let a = laplacian_2d(2).unwrap();
        assert_eq!(a.shape(), (4, 4));
        for i in 0..4 {
            assert_eq!(a.get(i, i), 4.0);
        }
        // Corner node 0 couples to nodes 1 and 2 only.
        assert_eq!(a.get(0, 1), -1.0);
        assert_eq!(a.get(0, 2), -1.0);
        assert_eq!(a.get(0, 3), 0.0);
    }

    #[test]
    fn spd_random_shifted_properties() {
        let n = 12;
        let a = spd_random_shifted(n, 7).unwrap();
        // Symmetry and the invariant trace of diag(1..n) under the
        // orthogonal similarity.
        assert!(a.sub(&a.transpose()).max_abs() < 1e-12);
        let trace: f64 = (0..n).map(|i| a.get(i, i)).sum();
        let expect = (n * (n + 1) / 2) as f64;
        assert!((trace - expect).abs() < 1e-10, "trace {trace}");
        // Deterministic in the seed.
        assert_eq!(a, spd_random_shifted(n, 7).unwrap());
        assert_ne!(a, spd_random_shifted(n, 8).unwrap());
    }

    #[test]
    fn scaling_variants() {
        let spec = ProblemSpec {
            kind: ProblemKind::Laplacian1d { n: 5 },
            scaling: Scaling::Frobenius,
        };
        let a = generate(&spec).unwrap();
        assert!((a.frobenius_norm() - 1.0).abs() < 1e-15);
        let spec = ProblemSpec {
            kind: ProblemKind::Laplacian1d { n: 5 },
            scaling: Scaling::Pow2(3),
        };
        let a = generate(&spec).unwrap();
        assert_eq!(a.get(0, 0), 0.25);
    }

    #[test]
    fn reference_inverse_residual() {
        let a = laplacian_1d(10).unwrap();
        let inv = reference_inverse(&a).unwrap();
        let resid = a.mul(&inv).sub(&DenseMatrix::identity(10)).inf_norm();
        assert!(resid < 1e-12, "residual {resid}");
    }

    #[test]
    fn reference_inverse_singular() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(matches!(reference_inverse(&a), Err(Error::Singular { .. })));
    }

    #[test]
    fn reference_exp_diagonal_matches_scalar_exp() {
        let a = DenseMatrix::diagonal(&[0.3, -1.2, 2.5]);
        let e = reference_exp(&a).unwrap();
        for (i, &d) in [0.3f64, -1.2, 2.5].iter().enumerate() {
            assert!((e.get(i, i) - d.exp()).abs() < 1e-14 * d.exp().max(1.0));
        }
        assert!(e.get(0, 1) == 0.0 && e.get(1, 2) == 0.0);
    }

    #[test]
    fn reference_exp_nilpotent() {
        // exp([[0,1],[0,0]]) = I + N exactly.
        let a = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let e = reference_exp(&a).unwrap();
        assert!((e.get(0, 0) - 1.0).abs() < 1e-15);
        assert!((e.get(0, 1) - 1.0).abs() < 1e-15);
        assert!(e.get(1, 0).abs() < 1e-15);
    }

    #[test]
    fn reference_cos_sin_scalar_pi() {
        let a = DenseMatrix::from_vec(1, 1, vec![std::f64::consts::PI]).unwrap();
        let (c, s) = reference_cos_sin(&a).unwrap();
        assert!((c.get(0, 0) + 1.0).abs() < 1e-13);
        assert!(s.get(0, 0).abs() < 1e-13);
    }

    #[test]
    fn reference_cos_sin_pythagorean_identity() {
        let a = DenseMatrix::from_rows(&[vec![1.7, 0.4], vec![0.4, -2.3]]).unwrap();
        let (c, s) = reference_cos_sin(&a).unwrap();
        let ident = c.mul(&c).add(&s.mul(&s));
        let err = ident.sub(&DenseMatrix::identity(2)).max_abs();
        assert!(err < 1e-13, "cos^2 + sin^2 deviates by {err}");
    }

    #[test]
    fn ilu0_is_exact_on_tridiagonal() {
        // A tridiagonal matrix factors without fill-in, so ILU(0)
        // reproduces the exact inverse.
        let a = laplacian_1d(8).unwrap();
        let approx = approx_inverse(&a, ApproxMethod::Ilu0).unwrap();
        let exact = reference_inverse(&a).unwrap();
        assert!(approx.sub(&exact).max_abs() < 1e-12);
    }

    #[test]
    fn approx_inverse_exact_for_diagonal() {
        let a = DenseMatrix::diagonal(&[2.0, 4.0, 8.0]);
        let want = DenseMatrix::diagonal(&[0.5, 0.25, 0.125]);
        let ilu = approx_inverse(&a, ApproxMethod::Ilu0).unwrap();
        assert!(ilu.sub(&want).max_abs() < 1e-15);
        let th = approx_inverse(&a, ApproxMethod::Threshold(0.0)).unwrap();
        assert!(th.sub(&want).max_abs() < 1e-15);
    }

    #[test]
    fn threshold_one_keeps_only_peak_entries() {
        let a = DenseMatrix::diagonal(&[1.0, 2.0, 4.0]);
        // Inverse diag: 1, 0.5, 0.25; only the unit entry survives p = 1.
        let t = approx_inverse(&a, ApproxMethod::Threshold(1.0)).unwrap();
        assert_eq!(t.get(0, 0), 1.0);
        assert_eq!(t.get(1, 1), 0.0);
        assert_eq!(t.get(2, 2), 0.0);
    }

    #[test]
    fn sequential_fine_geometric_sequence() {
        let flow = FlowSpec::LinearHomogeneous {
            b: DenseMatrix::from_vec(1, 1, vec![-1.0]).unwrap(),
        };
        let grid = TimeGrid::new(0.0, 1.0, 2, 2).unwrap();
        let u0 = DenseMatrix::from_vec(1, 1, vec![1.0]).unwrap();
        let traj = sequential_fine(&flow, &grid, Scheme::Euler, &u0).unwrap();
        assert_eq!(traj.len(), 3);
        assert_eq!(traj[0], u0);
        // h = 0.25: nodes carry (1-h)^(2n).
        assert_eq!(traj[1].get(0, 0), 0.5625);
        assert_eq!(traj[2].get(0, 0), 0.31640625);
    }
}
