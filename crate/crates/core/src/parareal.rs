//! Parallel-in-time (parareal) iterations for the matrix flows.
//!
//! The classical scheme starts from a coarse sweep `U^0` and refines it via
//!
//! ```text
//! U^{k+1}_{n+1} = G(U^{k+1}_n) + F(U^k_n) - G(U^k_n)
//! ```
//!
//! where the fine solves `F(., U^k_n)` of one iteration are independent and
//! run in parallel, while the correction sweep is strictly sequential. After
//! `k` iterations the first `k` nodes coincide with the sequential fine
//! trajectory, which also gives finite termination at `k = N`.
//!
//! The modified scheme additionally maintains an F-orthonormal basis of the
//! subspace spanned by all previous iterates. Only the genuinely new
//! directions of each iteration are propagated with the fine solver; the
//! projected part of a state is advanced by linearity as a combination of
//! stored basis images, so the per-iteration fine work shrinks as the
//! subspace saturates. For inhomogeneous (affine) flows the images of the
//! zero state are precomputed once and the update subtracts the doubly
//! counted source contribution.
//!
//! Everything here assumes the autonomous flows of this crate: each interval
//! of the uniform grid is advanced over a span of identical length, so one
//! set of basis images serves every interval, and results are bitwise
//! reproducible for any worker count.

use crate::error::{Error, Result};
use crate::exec;
use crate::flows::{Propagator, TimeGrid};
use crate::matcore::{frobenius_inner, project, BlockFamily, DenseMatrix, RANK_TOL};

/// History of one parareal run.
#[derive(Debug, Clone)]
pub struct PararealRun {
    /// `iterates[k][n]` is the value at node `T_n` after `k` iterations;
    /// row 0 is the initial coarse sweep.
    pub iterates: Vec<Vec<DenseMatrix>>,
    /// Dimension of the enhancement subspace after each iteration
    /// (modified variants only; empty for the classical scheme).
    pub subspace_dims: Vec<usize>,
    /// First iteration whose successive-iterate change met the stop rule.
    pub converged_at: Option<usize>,
    /// Per-iteration error against an attached fine trajectory (see
    /// [`PararealRun::attach_fine_reference`]); empty until attached.
    pub errors_vs_fine: Vec<f64>,
}

impl PararealRun {
    /// Number of correction iterations performed (row 0 excluded).
    pub fn n_iterations(&self) -> usize {
        self.iterates.len() - 1
    }

    /// The last iterate row.
    pub fn final_iterate(&self) -> &[DenseMatrix] {
        self.iterates.last().expect("runs hold at least the coarse sweep")
    }

    /// Terminal value of the last iterate row.
    pub fn final_value(&self) -> &DenseMatrix {
        self.final_iterate().last().expect("rows hold N+1 nodes")
    }

    /// Computes the per-iteration trajectory errors against a reference
    /// trajectory (normally the sequential fine solution).
    pub fn attach_fine_reference(&mut self, fine: &[DenseMatrix]) -> Result<()> {
        if fine.len() != self.iterates[0].len() {
            return Err(Error::Dimension {
                op: "attach_fine_reference",
                detail: format!(
                    "reference has {} nodes, run has {}",
                    fine.len(),
                    self.iterates[0].len()
                ),
            });
        }
        self.errors_vs_fine = self
            .iterates
            .iter()
            .map(|row| trajectory_maxabs_error(row, fine))
            .collect();
        Ok(())
    }
}

/// Relative max-abs error of a trajectory against a reference trajectory:
/// `max_n max_ij |row - ref| / max_n max_ij |ref|`.
pub fn trajectory_maxabs_error(row: &[DenseMatrix], reference: &[DenseMatrix]) -> f64 {
    let num = row
        .iter()
        .zip(reference)
        .map(|(x, r)| x.sub(r).max_abs())
        .fold(0.0, f64::max);
    let den = reference.iter().map(|r| r.max_abs()).fold(0.0, f64::max);
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// Sequential sweep of the coarse propagator across the grid; the starting
/// row `U^0` of every parareal variant. Returns the `N + 1` node values.
pub fn coarse_sweep(g: &Propagator, grid: &TimeGrid, u0: &DenseMatrix) -> Result<Vec<DenseMatrix>> {
    g.flow().validate_state(u0)?;
    let dt = grid.coarse_dt();
    g.prewarm(0.0, dt)?;
    let mut out = Vec::with_capacity(grid.n_coarse() + 1);
    out.push(u0.clone());
    for n in 0..grid.n_coarse() {
        let next = g.propagate(0.0, dt, &out[n]).map_err(|e| Error::Numeric {
            context: format!("coarse propagation failed on interval {n}: {e}"),
        })?;
        out.push(next);
    }
    Ok(out)
}

fn validate_pair(f: &Propagator, g: &Propagator, grid: &TimeGrid, k_max: usize) -> Result<()> {
    if k_max < 1 {
        return Err(Error::InvalidArgument {
            op: "parareal",
            detail: "k_max must be at least 1".into(),
        });
    }
    if f.flow() != g.flow() {
        return Err(Error::InvalidArgument {
            op: "parareal",
            detail: "fine and coarse propagators must share one flow".into(),
        });
    }
    if f.steps() != grid.fine_per_interval() {
        return Err(Error::InvalidArgument {
            op: "parareal",
            detail: format!(
                "fine propagator uses {} substeps but the grid prescribes {}",
                f.steps(),
                grid.fine_per_interval()
            ),
        });
    }
    Ok(())
}

/// Stop rule shared by all variants: the largest node-wise change between
/// consecutive iterates, measured against `max(1, ||U0||_F)`.
fn reached_stop(prev: &[DenseMatrix], next: &[DenseMatrix], u0: &DenseMatrix, tol: f64) -> bool {
    let diff = prev
        .iter()
        .zip(next)
        .map(|(a, b)| a.sub(b).frobenius_norm())
        .fold(0.0, f64::max);
    diff <= tol * f64::max(1.0, u0.frobenius_norm())
}

/// Fine solves of one classical iteration, reusing the image of any interval
/// whose input is unchanged from the previous iteration (bitwise identical
/// inputs give bitwise identical images, so this is a pure optimization; in
/// particular the already-exact prefix is never recomputed).
struct FineMemo {
    inputs: Vec<Option<DenseMatrix>>,
    images: Vec<DenseMatrix>,
}

impl FineMemo {
    fn new(n: usize) -> Self {
        FineMemo {
            inputs: vec![None; n],
            images: Vec::new(),
        }
    }

    fn advance(&mut self, f: &Propagator, dt: f64, states: &[DenseMatrix]) -> Result<()> {
        let n = states.len();
        let todo: Vec<usize> = (0..n)
            .filter(|&i| self.inputs[i].as_ref() != Some(&states[i]))
            .collect();
        let fresh: Vec<(usize, Result<DenseMatrix>)> =
            exec::par_map(&todo, |&i| (i, f.propagate(0.0, dt, &states[i])));
        if self.images.is_empty() {
            self.images = vec![DenseMatrix::zeros(1, 1); n];
        }
        for (i, image) in fresh {
            self.images[i] = image.map_err(|e| Error::Numeric {
                context: format!("fine propagation failed on interval {i}: {e}"),
            })?;
            self.inputs[i] = Some(states[i].clone());
        }
        Ok(())
    }
}

/// Classical parareal iteration.
///
/// `f` must use the grid's fine substep count; `g` is the coarse propagator
/// (typically a single step per interval). Iterations stop when the
/// successive-iterate change satisfies the relative `stop_tol` rule or after
/// `k_max` corrections, whichever comes first.
pub fn classical_parareal(
    f: &Propagator,
    g: &Propagator,
    grid: &TimeGrid,
    u0: &DenseMatrix,
    k_max: usize,
    stop_tol: f64,
) -> Result<PararealRun> {
    validate_pair(f, g, grid, k_max)?;
    let n = grid.n_coarse();
    let dt = grid.coarse_dt();
    f.prewarm(0.0, dt)?;
    let first = coarse_sweep(g, grid, u0)?;
    // The coarse sweep already evaluated G at every node it produced.
    let mut g_prev: Vec<DenseMatrix> = first[1..].to_vec();
    let mut iterates = vec![first];
    let mut memo = FineMemo::new(n);
    let mut converged_at = None;
    for k in 0..k_max {
        let prev = &iterates[k];
        memo.advance(f, dt, &prev[..n])?;
        let mut row = Vec::with_capacity(n + 1);
        row.push(u0.clone());
        let mut g_new_all = Vec::with_capacity(n);
        for i in 0..n {
            let g_new = g.propagate(0.0, dt, &row[i]).map_err(|e| Error::Numeric {
                context: format!("coarse propagation failed on interval {i}: {e}"),
            })?;
            // Adding the coarse difference to the fine image (rather than
            // the fine difference to the coarse image) lets the two coarse
            // terms cancel exactly once a node has settled, which makes the
            // converged prefix bitwise equal to the sequential fine sweep.
            let correction = g_new.sub(&g_prev[i]);
            row.push(memo.images[i].add(&correction));
            g_new_all.push(g_new);
        }
        g_prev = g_new_all;
        let stop = reached_stop(prev, &row, u0, stop_tol);
        iterates.push(row);
        if stop {
            converged_at = Some(k + 1);
            break;
        }
    }
    Ok(PararealRun {
        iterates,
        subspace_dims: Vec::new(),
        converged_at,
        errors_vs_fine: Vec::new(),
    })
}

/// Orthonormal enhancement subspace shared by the modified variants.
struct Subspace {
    basis: BlockFamily,
    /// Fine image of each basis block over one interval span.
    images: Vec<DenseMatrix>,
    cap: usize,
}

impl Subspace {
    /// Orthogonalizes the candidates against the basis in order, keeps the
    /// genuinely new directions, and fine-propagates only those (in
    /// parallel). Uses the same rank tolerance as the global QR.
    fn extend(&mut self, f: &Propagator, dt: f64, candidates: &[DenseMatrix]) -> Result<()> {
        let mut fresh: Vec<DenseMatrix> = Vec::new();
        for cand in candidates {
            if self.basis.len() + fresh.len() >= self.cap {
                break;
            }
            let mut work = cand.clone();
            for q in self.basis.blocks().iter().chain(fresh.iter()) {
                let r = frobenius_inner(q, &work)?;
                work.add_assign_scaled(q, -r);
            }
            // Second sweep: without it, orthogonality degrades with the
            // conditioning of the candidate family and the recombined
            // updates stall near the coarse error level.
            for q in self.basis.blocks().iter().chain(fresh.iter()) {
                let r = frobenius_inner(q, &work)?;
                work.add_assign_scaled(q, -r);
            }
            let norm = work.frobenius_norm();
            if norm > RANK_TOL * f64::max(1.0, cand.frobenius_norm()) {
                fresh.push(work.scaled(1.0 / norm));
            }
        }
        let fresh_images: Vec<Result<DenseMatrix>> =
            exec::par_map(&fresh, |q| f.propagate(0.0, dt, q));
        for (q, image) in fresh.into_iter().zip(fresh_images) {
            self.basis.push(q)?;
            self.images.push(image.map_err(|e| Error::Numeric {
                context: format!("fine propagation of a basis block failed: {e}"),
            })?);
        }
        Ok(())
    }
}

fn modified_core(
    f: &Propagator,
    g: &Propagator,
    grid: &TimeGrid,
    u0: &DenseMatrix,
    k_max: usize,
    stop_tol: f64,
    affine: bool,
) -> Result<PararealRun> {
    validate_pair(f, g, grid, k_max)?;
    f.flow().validate_state(u0)?;
    let n = grid.n_coarse();
    let dt = grid.coarse_dt();
    f.prewarm(0.0, dt)?;
    g.prewarm(0.0, dt)?;
    // Images of the zero state, needed once per run for affine flows. For
    // homogeneous flows zero maps to zero and the terms vanish identically.
    let zero_images = if affine {
        let zero = DenseMatrix::zeros(u0.rows(), u0.cols());
        Some((f.propagate(0.0, dt, &zero)?, g.propagate(0.0, dt, &zero)?))
    } else {
        None
    };
    let mut subspace = Subspace {
        basis: BlockFamily::empty(u0.rows(), u0.cols())?,
        images: Vec::new(),
        cap: (n + 1) * (k_max + 1),
    };
    let mut iterates = vec![coarse_sweep(g, grid, u0)?];
    let mut subspace_dims = Vec::with_capacity(k_max);
    let mut converged_at = None;
    for k in 0..k_max {
        subspace.extend(f, dt, &iterates[k])?;
        let mut row = Vec::with_capacity(n + 1);
        row.push(u0.clone());
        for i in 0..n {
            let (projected, coeffs) = project(&subspace.basis, &row[i])?;
            // Fine image of the projected part, by linearity of the flow.
            let mut fine_part = DenseMatrix::zeros(u0.rows(), u0.cols());
            match &zero_images {
                Some((f0, _)) => {
                    for (img, &alpha) in subspace.images.iter().zip(&coeffs) {
                        fine_part.add_assign_scaled(&img.sub(f0), alpha);
                    }
                    fine_part = fine_part.add(f0);
                }
                None => {
                    for (img, &alpha) in subspace.images.iter().zip(&coeffs) {
                        fine_part.add_assign_scaled(img, alpha);
                    }
                }
            }
            // Coarse image of the unresolved complement: the only
            // sequential propagation in the sweep.
            let complement = row[i].sub(&projected);
            let coarse_part = g.propagate(0.0, dt, &complement).map_err(|e| Error::Numeric {
                context: format!("coarse propagation failed on interval {i}: {e}"),
            })?;
            let mut next = fine_part.add(&coarse_part);
            if let Some((_, g0)) = &zero_images {
                next = next.sub(g0);
            }
            if !next.is_finite() {
                return Err(Error::Numeric {
                    context: format!("non-finite iterate at interval {i}"),
                });
            }
            row.push(next);
        }
        subspace_dims.push(subspace.basis.len());
        let stop = reached_stop(&iterates[k], &row, u0, stop_tol);
        iterates.push(row);
        if stop {
            converged_at = Some(k + 1);
            break;
        }
    }
    Ok(PararealRun {
        iterates,
        subspace_dims,
        converged_at,
        errors_vs_fine: Vec::new(),
    })
}

/// Modified parareal for linear homogeneous flows: earlier iterates span an
/// enhancement subspace whose fine images are reused by linearity.
pub fn modified_parareal_homogeneous(
    f: &Propagator,
    g: &Propagator,
    grid: &TimeGrid,
    u0: &DenseMatrix,
    k_max: usize,
    stop_tol: f64,
) -> Result<PararealRun> {
    if !f.flow().is_linear_homogeneous() {
        return Err(Error::UnsupportedMethod {
            method: "modified_parareal_homogeneous",
            detail: "flow must be linear homogeneous".into(),
        });
    }
    modified_core(f, g, grid, u0, k_max, stop_tol, false)
}

/// Modified parareal for linear flows with a constant source. The images of
/// the zero state under both propagators are precomputed, the projected part
/// is advanced by affine recombination, and the update subtracts `G(0)`.
///
/// With a zero source this reproduces the homogeneous variant bitwise on
/// generic data (the zero images vanish identically).
pub fn modified_parareal_inhomogeneous(
    f: &Propagator,
    g: &Propagator,
    grid: &TimeGrid,
    u0: &DenseMatrix,
    k_max: usize,
    stop_tol: f64,
) -> Result<PararealRun> {
    if !f.flow().is_linear() {
        return Err(Error::UnsupportedMethod {
            method: "modified_parareal_inhomogeneous",
            detail: "flow must be linear (affine) in the state".into(),
        });
    }
    modified_core(f, g, grid, u0, k_max, stop_tol, true)
}
