//! Experiment catalogue and runner.
//!
//! Each experiment resolves its defaults together with the validated
//! command-line overrides into a concrete job, runs it, and renders the
//! artifacts: `errors.csv` (iteration histories), `config.resolved.txt`
//! (every resolved parameter), `plot.gp` (a gnuplot script with the axes of
//! the matching figure) and `result.mtx` (the computed matrix). Artifacts
//! are written only after the computation finished, so failed or rejected
//! runs leave no partial outputs.
//!
//! The parareal experiments default to the printed figure setups: the
//! matrix inverse and the exponential integrate flows derived from the 1D
//! Laplacian scaled by `2^10` on an `N = 25`, `J = 200` grid, and the
//! cosine runs the subspace-enhanced solver on an `N = 10`, `J = 100` grid.
//! The acceleration experiments march the heat steady state (`n = 127`,
//! `dt = h^2/4`, incomplete-LU seed) or the inverse flow of a 2D Laplacian,
//! and the control demo captures an inverse through the penalized
//! interval-matching iteration.

use std::fs;
use std::path::{Path, PathBuf};

use parafun::control::{solve_steady_control, ControlProblem};
use parafun::exec;
use parafun::flows::{split_stacked, stack, FlowSpec, Scheme, TimeGrid};
use parafun::matcore::DenseMatrix;
use parafun::matfun::{
    cos_sin_via_ode, exp_via_ode, inverse_via_ode, relative_maxabs_error, scaling_exponent,
    MatFunReport, MatFunRequest, MatFunction, Method,
};
use parafun::reference::{
    approx_inverse, laplacian_1d, laplacian_2d, reference_cos, reference_exp, reference_inverse,
    reference_sin, sequential_fine, spd_random_shifted, ApproxMethod,
};
use parafun::steady::{
    inverse_accelerated_with_options, simple_gradient_accelerated_with_options,
    steepest_descent_accelerated_with_options, AccelOptions,
};

use crate::args::{FunctionArg, MethodArg, RunArgs, SchemeArg};
use crate::error::{CliError, CliResult};
use crate::mtx;

/// Valid experiment names, in the order they are listed to the user.
pub const EXPERIMENT_NAMES: [&str; 9] = [
    "fig_inverse",
    "fig_exp",
    "fig_cos",
    "acc_grad",
    "acc_sd",
    "acc_inv_approx",
    "acc_inv_exact",
    "control_demo",
    "custom",
];

const PARAREAL_HEADER: &str = "iteration,error_vs_fine,error_vs_exact";
const ACCEL_HEADER: &str = "step,time,residual_plain,residual_accel,ratio";
const CONTROL_HEADER: &str = "outer_iter,cost,terminal_residual,max_jump";

/// Everything produced by a finished run, still in memory.
pub struct Artifacts {
    pub header: &'static str,
    pub rows: Vec<String>,
    pub resolved: Vec<(String, String)>,
    pub plot: String,
    pub result: Option<DenseMatrix>,
}

/// A validated experiment with all parameters fixed.
pub struct ResolvedRun {
    job: Job,
    pub workers: usize,
    pub out_dir: PathBuf,
}

enum Job {
    Parareal(PararealJob),
    Accel(AccelJob),
    Control(ControlJob),
}

/// Full-precision float formatting; 17 significant digits round-trip
/// every finite double, so equal CSV bytes mean equal results.
fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn ones(n: usize) -> DenseMatrix {
    DenseMatrix::from_vec(n, 1, vec![1.0; n]).expect("shape matches data length")
}

/// Resolves arguments, runs the experiment, writes the artifacts, and
/// returns the output directory.
pub fn run_to_disk(args: &RunArgs) -> CliResult<PathBuf> {
    let run = resolve(args)?;
    let artifacts = exec::with_workers(run.workers, || run.job.run())?;
    write_artifacts(&run, &artifacts)?;
    Ok(run.out_dir)
}

/// Validates the overrides against the experiment's parameter domain and
/// produces the concrete job. No numerical work happens here beyond
/// loading or generating the input matrix.
pub fn resolve(args: &RunArgs) -> CliResult<ResolvedRun> {
    let job = match args.experiment.as_str() {
        "fig_inverse" => resolve_fig_inverse(args)?,
        "fig_exp" => resolve_fig_exp(args)?,
        "fig_cos" => resolve_fig_cos(args)?,
        "acc_grad" => resolve_acc_heat(args, AccelVariant::Gradient)?,
        "acc_sd" => resolve_acc_heat(args, AccelVariant::SteepestDescent)?,
        "acc_inv_approx" => resolve_acc_inv(args, false)?,
        "acc_inv_exact" => resolve_acc_inv(args, true)?,
        "control_demo" => resolve_control_demo(args)?,
        "custom" => resolve_custom(args)?,
        other => {
            return Err(CliError::Config(format!(
                "unknown experiment '{other}'; valid names: {}",
                EXPERIMENT_NAMES.join(", ")
            )))
        }
    };
    let out_dir = match &args.out {
        Some(dir) => dir.clone(),
        None => std::env::var_os("PARAFUN_OUT")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(".")),
    };
    Ok(ResolvedRun {
        job,
        workers: args.workers.unwrap_or(0),
        out_dir,
    })
}

/// Rejects flags outside the experiment's parameter domain before any
/// compute happens.
fn check_domain(args: &RunArgs, experiment: &str, allowed: &[&str]) -> CliResult<()> {
    let present = [
        ("--n", args.n.is_some()),
        ("--N", args.big_n.is_some()),
        ("--J", args.j.is_some()),
        ("--dt", args.dt.is_some()),
        ("--scheme", args.scheme.is_some()),
        ("--method", args.method.is_some()),
        ("--scale-pow", args.scale_pow.is_some()),
        ("--stop-tol", args.stop_tol.is_some()),
        ("--k-max", args.k_max.is_some()),
        ("--matrix", args.matrix.is_some()),
        ("--function", args.function.is_some()),
    ];
    for (flag, set) in present {
        if set && !allowed.contains(&flag) {
            return Err(CliError::Config(format!(
                "{flag} is not a parameter of the {experiment} experiment"
            )));
        }
    }
    Ok(())
}

fn positive(value: f64, what: &str) -> CliResult<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(CliError::Config(format!(
            "{what} must be positive and finite, got {value}"
        )))
    }
}

fn scheme_of(arg: Option<SchemeArg>, default: Scheme) -> Scheme {
    match arg {
        None => default,
        Some(SchemeArg::Euler) => Scheme::Euler,
        Some(SchemeArg::Cn) => Scheme::CrankNicolson,
    }
}

fn method_of(arg: Option<MethodArg>, default: Method) -> Method {
    match arg {
        None => default,
        Some(MethodArg::Classical) => Method::Classical,
        Some(MethodArg::Modified) => Method::Modified,
        Some(MethodArg::Sequential) => Method::SequentialFine,
    }
}

fn scheme_name(scheme: Scheme) -> &'static str {
    match scheme {
        Scheme::Euler => "euler",
        Scheme::CrankNicolson => "cn",
    }
}

fn method_name(method: Method) -> &'static str {
    match method {
        Method::Classical => "classical",
        Method::Modified => "modified",
        Method::SequentialFine => "sequential",
    }
}

fn function_name(function: MatFunction) -> &'static str {
    match function {
        MatFunction::Inverse => "inverse",
        MatFunction::Exponential => "exp",
        MatFunction::Cosine => "cos",
        MatFunction::Sine => "sin",
    }
}

// ---------------------------------------------------------------------------
// Parareal experiments
// ---------------------------------------------------------------------------

struct PararealJob {
    name: &'static str,
    function: MatFunction,
    a: DenseMatrix,
    matrix_desc: String,
    big_n: usize,
    j: usize,
    scheme: Scheme,
    method: Method,
    /// Scaling exponent passed to the driver.
    req_scale_pow: u32,
    /// Scaling exponent reported in the resolved configuration (differs
    /// from the driver value when the input matrix is pre-scaled).
    scale_pow_echo: u32,
    stop_tol: f64,
    k_max: usize,
    residual_bound: f64,
}

fn reject_modified_inverse(method: Method, experiment: &str) -> CliResult<()> {
    if method == Method::Modified {
        return Err(CliError::Config(format!(
            "--method modified is not a parameter of the {experiment} experiment: \
             the subspace-enhanced solver needs a linear flow and the inverse flow \
             is quadratic"
        )));
    }
    Ok(())
}

fn resolve_fig_inverse(args: &RunArgs) -> CliResult<Job> {
    check_domain(
        args,
        "fig_inverse",
        &["--n", "--N", "--J", "--scheme", "--method", "--scale-pow", "--stop-tol", "--k-max"],
    )?;
    let n = args.n.unwrap_or(80);
    let big_n = args.big_n.unwrap_or(25);
    let method = method_of(args.method, Method::Classical);
    reject_modified_inverse(method, "fig_inverse")?;
    let scale_pow = args.scale_pow.unwrap_or(10);
    Ok(Job::Parareal(PararealJob {
        name: "fig_inverse",
        function: MatFunction::Inverse,
        a: laplacian_1d(n)?,
        matrix_desc: format!("laplacian_1d({n})"),
        big_n,
        j: args.j.unwrap_or(200),
        scheme: scheme_of(args.scheme, Scheme::Euler),
        method,
        req_scale_pow: scale_pow,
        scale_pow_echo: scale_pow,
        stop_tol: args.stop_tol.unwrap_or(1e-12),
        k_max: args.k_max.unwrap_or(big_n),
        // The residual of the scaled Laplacian setup is dominated by the
        // fine discretization, not by the parareal iteration; it is
        // reported, not gated.
        residual_bound: f64::INFINITY,
    }))
}

fn resolve_fig_exp(args: &RunArgs) -> CliResult<Job> {
    check_domain(
        args,
        "fig_exp",
        &["--n", "--N", "--J", "--scheme", "--method", "--scale-pow", "--stop-tol", "--k-max"],
    )?;
    let n = args.n.unwrap_or(80);
    let big_n = args.big_n.unwrap_or(25);
    // The figure computes exp(B) for B = -A/2^m directly: the scaling is
    // part of the matrix definition, so the driver applies no squaring.
    let scale_pow = args.scale_pow.unwrap_or(10);
    let b = laplacian_1d(n)?.scaled(-(2f64.powi(-(scale_pow as i32))));
    Ok(Job::Parareal(PararealJob {
        name: "fig_exp",
        function: MatFunction::Exponential,
        a: b,
        matrix_desc: format!("-laplacian_1d({n}) / 2^{scale_pow}"),
        big_n,
        j: args.j.unwrap_or(200),
        scheme: scheme_of(args.scheme, Scheme::CrankNicolson),
        method: method_of(args.method, Method::Classical),
        req_scale_pow: 0,
        scale_pow_echo: scale_pow,
        stop_tol: args.stop_tol.unwrap_or(1e-12),
        k_max: args.k_max.unwrap_or(big_n),
        residual_bound: f64::INFINITY,
    }))
}

fn resolve_fig_cos(args: &RunArgs) -> CliResult<Job> {
    check_domain(
        args,
        "fig_cos",
        &["--n", "--N", "--J", "--scheme", "--method", "--scale-pow", "--stop-tol", "--k-max"],
    )?;
    let n = args.n.unwrap_or(16);
    let big_n = args.big_n.unwrap_or(10);
    let a = spd_random_shifted(n, 3)?;
    // Mirror the driver's rule so the echoed exponent is the one in effect.
    let scale_pow = scaling_exponent(&a).max(args.scale_pow.unwrap_or(0));
    Ok(Job::Parareal(PararealJob {
        name: "fig_cos",
        function: MatFunction::Cosine,
        a,
        matrix_desc: format!("spd_random_shifted({n}, 3)"),
        big_n,
        j: args.j.unwrap_or(100),
        scheme: scheme_of(args.scheme, Scheme::Euler),
        method: method_of(args.method, Method::Modified),
        req_scale_pow: scale_pow,
        scale_pow_echo: scale_pow,
        stop_tol: args.stop_tol.unwrap_or(1e-12),
        k_max: args.k_max.unwrap_or(big_n),
        residual_bound: f64::INFINITY,
    }))
}

fn resolve_custom(args: &RunArgs) -> CliResult<Job> {
    check_domain(
        args,
        "custom",
        &[
            "--N", "--J", "--scheme", "--method", "--scale-pow", "--stop-tol", "--k-max",
            "--matrix", "--function",
        ],
    )?;
    let path = args.matrix.as_ref().ok_or_else(|| {
        CliError::Config("the custom experiment requires --matrix <file.mtx>".into())
    })?;
    let function = match args.function {
        Some(FunctionArg::Inverse) => MatFunction::Inverse,
        Some(FunctionArg::Exp) => MatFunction::Exponential,
        Some(FunctionArg::Cos) => MatFunction::Cosine,
        Some(FunctionArg::Sin) => MatFunction::Sine,
        None => {
            return Err(CliError::Config(
                "the custom experiment requires --function inverse|exp|cos|sin".into(),
            ))
        }
    };
    let a = mtx::read_matrix(path)?;
    if !a.is_square() {
        return Err(CliError::Config(format!(
            "matrix functions need a square input, {} is {}x{}",
            path.display(),
            a.rows(),
            a.cols()
        )));
    }
    let method = method_of(args.method, Method::Classical);
    if function == MatFunction::Inverse {
        reject_modified_inverse(method, "custom inverse")?;
    }
    let minimal = scaling_exponent(&a);
    let scale_pow = match function {
        // The trig driver enforces the norm-based minimum itself; the
        // others take the exponent as given, so default to that minimum.
        MatFunction::Cosine => minimal.max(args.scale_pow.unwrap_or(0)),
        MatFunction::Sine => {
            let requested = args.scale_pow.unwrap_or(0);
            if minimal > 0 || requested > 0 {
                return Err(CliError::Config(
                    "--function sin needs an unscaled flow (the double-angle recovery \
                     restores the cosine only); supply a matrix with max row sum at \
                     most 1 and omit --scale-pow"
                        .into(),
                ));
            }
            0
        }
        _ => args.scale_pow.unwrap_or(minimal),
    };
    let big_n = args.big_n.unwrap_or(10);
    Ok(Job::Parareal(PararealJob {
        name: "custom",
        function,
        a,
        matrix_desc: path.display().to_string(),
        big_n,
        j: args.j.unwrap_or(100),
        scheme: scheme_of(args.scheme, Scheme::Euler),
        method,
        req_scale_pow: scale_pow,
        scale_pow_echo: scale_pow,
        stop_tol: args.stop_tol.unwrap_or(1e-12),
        k_max: args.k_max.unwrap_or(big_n),
        residual_bound: f64::INFINITY,
    }))
}

impl PararealJob {
    fn run(&self) -> CliResult<Artifacts> {
        let grid = TimeGrid::new(0.0, 1.0, self.big_n, self.j)?;
        let mut req = MatFunRequest::new(self.function, grid.clone());
        req.method = self.method;
        req.fine_scheme = self.scheme;
        req.coarse_scheme = self.scheme;
        req.scale_pow = self.req_scale_pow;
        req.stop_tol = self.stop_tol;
        req.k_max = self.k_max;
        req.residual_bound = self.residual_bound;

        let report = match self.function {
            MatFunction::Inverse => inverse_via_ode(&self.a, &req)?,
            MatFunction::Exponential => exp_via_ode(&self.a, &req)?,
            MatFunction::Cosine | MatFunction::Sine => cos_sin_via_ode(&self.a, &req)?,
        };
        let rows = self.error_rows(&grid, &report)?;

        let result = match self.function {
            MatFunction::Sine => report.sine.clone().ok_or_else(|| {
                CliError::Numeric("the sine block was not recovered".into())
            })?,
            _ => report.result.clone(),
        };
        let mut resolved = vec![
            ("experiment".into(), self.name.to_string()),
            ("function".into(), function_name(self.function).into()),
            ("matrix".into(), self.matrix_desc.clone()),
            ("n".into(), self.a.rows().to_string()),
            ("N".into(), self.big_n.to_string()),
            ("J".into(), self.j.to_string()),
            ("t_span".into(), "[0, 1]".into()),
            ("scheme".into(), scheme_name(self.scheme).into()),
            ("method".into(), method_name(self.method).into()),
            ("scale_pow".into(), self.scale_pow_echo.to_string()),
            ("stop_tol".into(), fmt(self.stop_tol)),
            ("k_max".into(), self.k_max.to_string()),
        ];
        if let Some(residual) = report.residual_inf {
            resolved.push(("residual_inf".into(), fmt(residual)));
        }
        Ok(Artifacts {
            header: PARAREAL_HEADER,
            rows,
            resolved,
            plot: plot_parareal(self.name),
            result: Some(result),
        })
    }

    /// One CSV row per parareal iteration: the trajectory error against
    /// the sequential fine solution and the recovered function value's
    /// error against an independently computed reference.
    fn error_rows(&self, grid: &TimeGrid, report: &MatFunReport) -> CliResult<Vec<String>> {
        let n = self.a.rows();
        let m = report.scale_pow_used;
        let exact: DenseMatrix = match self.function {
            MatFunction::Inverse => reference_inverse(&self.a)?,
            MatFunction::Exponential => reference_exp(&self.a)?,
            MatFunction::Cosine => reference_cos(&self.a)?,
            MatFunction::Sine => reference_sin(&self.a)?,
        };
        // Recovery of the function value from one trajectory endpoint,
        // mirroring the driver.
        let recover = |endpoint: &DenseMatrix| -> DenseMatrix {
            match self.function {
                MatFunction::Inverse => endpoint.scaled(2f64.powi(-(m as i32))),
                MatFunction::Exponential => {
                    let mut r = endpoint.clone();
                    for _ in 0..m {
                        r = r.mul(&r);
                    }
                    r
                }
                MatFunction::Cosine => {
                    let (_, mut c) = split_stacked(endpoint, n, n);
                    let eye = DenseMatrix::identity(n);
                    for _ in 0..m {
                        c = c.mul(&c).scaled(2.0).sub(&eye);
                    }
                    c
                }
                MatFunction::Sine => split_stacked(endpoint, n, n).0,
            }
        };
        let err_exact = |endpoint: &DenseMatrix| -> CliResult<f64> {
            let value = recover(endpoint);
            if !value.is_finite() {
                return Ok(f64::INFINITY);
            }
            Ok(relative_maxabs_error(&value, &exact)?)
        };

        match &report.run {
            None => {
                // Sequential fine run: a single row, zero error against the
                // fine solution by definition.
                let value = match self.function {
                    MatFunction::Sine => report.sine.clone().ok_or_else(|| {
                        CliError::Numeric("the sine block was not recovered".into())
                    })?,
                    _ => report.result.clone(),
                };
                let err = relative_maxabs_error(&value, &exact)?;
                Ok(vec![format!("0,{},{}", fmt(0.0), fmt(err))])
            }
            Some(run) => {
                let (flow, u0) = self.flow_and_start(m)?;
                let fine = sequential_fine(&flow, grid, self.scheme, &u0)?;
                let mut run = run.clone();
                run.attach_fine_reference(&fine)?;
                let mut rows = Vec::with_capacity(run.n_iterations());
                for k in 1..=run.n_iterations() {
                    let endpoint = run.iterates[k].last().expect("rows hold N+1 nodes");
                    rows.push(format!(
                        "{k},{},{}",
                        fmt(run.errors_vs_fine[k]),
                        fmt(err_exact(endpoint)?)
                    ));
                }
                Ok(rows)
            }
        }
    }

    /// The flow and initial block the driver integrated, reconstructed for
    /// the sequential fine reference.
    fn flow_and_start(&self, m: u32) -> CliResult<(FlowSpec, DenseMatrix)> {
        let n = self.a.rows();
        let a_s = self.a.scaled(2f64.powi(-(m as i32)));
        let eye = DenseMatrix::identity(n);
        Ok(match self.function {
            MatFunction::Inverse => (
                FlowSpec::InverseRiccati {
                    a: a_s,
                    x0ref: eye.clone(),
                },
                eye,
            ),
            MatFunction::Exponential => (FlowSpec::LinearHomogeneous { b: a_s }, eye),
            MatFunction::Cosine | MatFunction::Sine => {
                let zero = DenseMatrix::zeros(n, n);
                let u0 = stack(&zero, &eye);
                let flow = match self.scheme {
                    Scheme::Euler => FlowSpec::TrigBlock {
                        a: a_s,
                        x0ref: zero,
                    },
                    Scheme::CrankNicolson => {
                        let mut b = DenseMatrix::zeros(2 * n, 2 * n);
                        for i in 0..n {
                            for j in 0..n {
                                b.set(i, n + j, a_s.get(i, j));
                                b.set(n + i, j, -a_s.get(i, j));
                            }
                        }
                        FlowSpec::LinearHomogeneous { b }
                    }
                };
                (flow, u0)
            }
        })
    }
}

// ---------------------------------------------------------------------------
// Acceleration experiments
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq)]
enum AccelVariant {
    Gradient,
    SteepestDescent,
    Inverse,
}

struct AccelJob {
    name: &'static str,
    variant: AccelVariant,
    a: DenseMatrix,
    matrix_desc: String,
    /// Right-hand side for the linear-system marches; the inverse march
    /// targets the identity implicitly.
    b: Option<DenseMatrix>,
    x0: DenseMatrix,
    x_tilde: DenseMatrix,
    x_tilde_desc: &'static str,
    dt: Option<f64>,
    k_max: usize,
}

fn resolve_acc_heat(args: &RunArgs, variant: AccelVariant) -> CliResult<Job> {
    let name = if variant == AccelVariant::Gradient {
        "acc_grad"
    } else {
        "acc_sd"
    };
    let allowed: &[&str] = if variant == AccelVariant::Gradient {
        &["--n", "--dt", "--k-max"]
    } else {
        &["--n", "--k-max"]
    };
    check_domain(args, name, allowed)?;
    let n = args.n.unwrap_or(127);
    let h = 1.0 / (n as f64 + 1.0);
    let a = laplacian_1d(n)?.scaled(1.0 / (h * h));
    let b = ones(n);
    let x0 = DenseMatrix::zeros(n, 1);
    let x_tilde = approx_inverse(&a, ApproxMethod::Ilu0)?.mul(&b);
    let (dt, k_max) = match variant {
        AccelVariant::Gradient => {
            let dt = positive(args.dt.unwrap_or(h * h / 4.0), "--dt")?;
            // Default horizon: march to t = 2, where the accelerated
            // residual has long left its unaccelerated twin behind.
            let k_max = args.k_max.unwrap_or_else(|| (2.0 / dt).ceil() as usize);
            (Some(dt), k_max)
        }
        _ => (None, args.k_max.unwrap_or(5000)),
    };
    Ok(Job::Accel(AccelJob {
        name,
        variant,
        a,
        matrix_desc: format!("laplacian_1d({n}) / h^2, h = 1/{}", n + 1),
        b: Some(b),
        x0,
        x_tilde,
        x_tilde_desc: "ilu0",
        dt,
        k_max,
    }))
}

fn resolve_acc_inv(args: &RunArgs, exact: bool) -> CliResult<Job> {
    let name = if exact { "acc_inv_exact" } else { "acc_inv_approx" };
    check_domain(args, name, &["--n", "--dt", "--k-max"])?;
    let n = args.n.unwrap_or(15);
    let a = laplacian_2d(n)?;
    let order = a.rows();
    let (x_tilde, x_tilde_desc) = if exact {
        (reference_inverse(&a)?, "exact inverse")
    } else {
        (approx_inverse(&a, ApproxMethod::Threshold(0.01))?, "threshold(0.01)")
    };
    Ok(Job::Accel(AccelJob {
        name,
        variant: AccelVariant::Inverse,
        a,
        matrix_desc: format!("laplacian_2d({n}) ({order}x{order})"),
        b: None,
        x0: DenseMatrix::zeros(order, order),
        x_tilde,
        x_tilde_desc,
        dt: Some(positive(args.dt.unwrap_or(0.1), "--dt")?),
        k_max: args.k_max.unwrap_or(300),
    }))
}

impl AccelJob {
    fn run(&self) -> CliResult<Artifacts> {
        let opts = AccelOptions { cutoff: true };
        let (x, hist) = match self.variant {
            AccelVariant::Gradient => simple_gradient_accelerated_with_options(
                &self.a,
                self.b.as_ref().expect("heat marches carry a right-hand side"),
                &self.x0,
                &self.x_tilde,
                self.dt.expect("the gradient march has a fixed step"),
                self.k_max,
                opts,
            )?,
            AccelVariant::SteepestDescent => steepest_descent_accelerated_with_options(
                &self.a,
                self.b.as_ref().expect("heat marches carry a right-hand side"),
                &self.x0,
                &self.x_tilde,
                self.k_max,
                opts,
            )?,
            AccelVariant::Inverse => inverse_accelerated_with_options(
                &self.a,
                &self.x0,
                &self.x_tilde,
                self.dt.expect("the inverse march has a fixed step"),
                self.k_max,
                opts,
            )?,
        };
        let rows = (0..hist.len())
            .map(|i| {
                format!(
                    "{i},{},{},{},{}",
                    fmt(hist.times[i]),
                    fmt(hist.residual_plain[i]),
                    fmt(hist.residual_accel[i]),
                    fmt(hist.ratio[i])
                )
            })
            .collect();
        let mut resolved = vec![
            ("experiment".into(), self.name.to_string()),
            ("matrix".into(), self.matrix_desc.clone()),
            ("n".into(), self.a.rows().to_string()),
            ("x_tilde".into(), self.x_tilde_desc.to_string()),
            ("x0".into(), "zero".into()),
            ("cutoff".into(), "true".into()),
            ("k_max".into(), self.k_max.to_string()),
        ];
        if let Some(dt) = self.dt {
            resolved.insert(5, ("dt".into(), fmt(dt)));
        }
        Ok(Artifacts {
            header: ACCEL_HEADER,
            rows,
            resolved,
            plot: plot_accel(self.name),
            result: Some(x),
        })
    }
}

// ---------------------------------------------------------------------------
// Control experiment
// ---------------------------------------------------------------------------

struct ControlJob {
    name: &'static str,
    prob: ControlProblem,
    matrix_desc: String,
    m_max: usize,
}

fn resolve_control_demo(args: &RunArgs) -> CliResult<Job> {
    check_domain(args, "control_demo", &["--n", "--N", "--J", "--k-max"])?;
    let n = args.n.unwrap_or(16);
    let big_n = args.big_n.unwrap_or(4);
    let j = args.j.unwrap_or(10);
    let a = laplacian_1d(n)?;
    let prob = ControlProblem {
        a,
        rhs: DenseMatrix::identity(n),
        b_ctrl: DenseMatrix::identity(n),
        x0: DenseMatrix::zeros(n, n),
        grid: TimeGrid::new(0.0, 1.0, big_n, j)?,
        alpha: 20.0,
        epsilon: 0.1,
        rho: 0.4,
    };
    Ok(Job::Control(ControlJob {
        name: "control_demo",
        prob,
        matrix_desc: format!("laplacian_1d({n})"),
        m_max: args.k_max.unwrap_or(100),
    }))
}

impl ControlJob {
    fn run(&self) -> CliResult<Artifacts> {
        let (terminal, diag) = solve_steady_control(&self.prob, self.m_max, 0.0)?;
        let rows = (0..diag.costs.len())
            .map(|i| {
                format!(
                    "{i},{},{},{}",
                    fmt(diag.costs[i]),
                    fmt(diag.terminal_residuals[i]),
                    fmt(diag.max_jumps[i])
                )
            })
            .collect();
        let resolved = vec![
            ("experiment".into(), self.name.to_string()),
            ("matrix".into(), self.matrix_desc.clone()),
            ("n".into(), self.prob.a.rows().to_string()),
            ("N".into(), self.prob.grid.n_coarse().to_string()),
            ("J".into(), self.prob.grid.fine_per_interval().to_string()),
            ("t_span".into(), "[0, 1]".into()),
            ("alpha".into(), fmt(self.prob.alpha)),
            ("epsilon".into(), fmt(self.prob.epsilon)),
            ("rho".into(), fmt(self.prob.rho)),
            ("m_max".into(), self.m_max.to_string()),
            ("final_rho".into(), fmt(diag.final_rho)),
        ];
        Ok(Artifacts {
            header: CONTROL_HEADER,
            rows,
            resolved,
            plot: plot_control(self.name),
            result: Some(terminal),
        })
    }
}

impl Job {
    fn run(&self) -> CliResult<Artifacts> {
        match self {
            Job::Parareal(job) => job.run(),
            Job::Accel(job) => job.run(),
            Job::Control(job) => job.run(),
        }
    }
}

// ---------------------------------------------------------------------------
// Artifact rendering
// ---------------------------------------------------------------------------

/// Writes errors.csv, config.resolved.txt, plot.gp and result.mtx into the
/// run's output directory, creating it if needed.
pub fn write_artifacts(run: &ResolvedRun, artifacts: &Artifacts) -> CliResult<()> {
    let dir = &run.out_dir;
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))?;

    let mut csv = String::with_capacity(32 * (artifacts.rows.len() + 1));
    csv.push_str(artifacts.header);
    csv.push('\n');
    for row in &artifacts.rows {
        csv.push_str(row);
        csv.push('\n');
    }
    write_text(&dir.join("errors.csv"), &csv)?;

    let mut txt = String::new();
    for (key, value) in &artifacts.resolved {
        txt.push_str(&format!("{key} = {value}\n"));
    }
    txt.push_str(&format!("workers = {}\n", run.workers));
    txt.push_str(&format!("out = {}\n", dir.display()));
    write_text(&dir.join("config.resolved.txt"), &txt)?;

    write_text(&dir.join("plot.gp"), &artifacts.plot)?;

    if let Some(result) = &artifacts.result {
        mtx::write_matrix(&dir.join("result.mtx"), result)?;
    }
    Ok(())
}

fn write_text(path: &Path, content: &str) -> CliResult<()> {
    fs::write(path, content)
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}

fn plot_parareal(name: &str) -> String {
    format!(
        "# Error history of the {name} experiment; render with: gnuplot plot.gp
set datafile separator ','
set terminal pngcairo size 900,600
set output 'errors.png'
set key top right
set logscale y
set format y '10^{{%T}}'
set xlabel 'iteration'
set ylabel 'relative max-abs error'
plot 'errors.csv' skip 1 using 1:2 with linespoints pointtype 7 title 'vs fine', \\
     'errors.csv' skip 1 using 1:3 with linespoints pointtype 5 title 'vs exact'
"
    )
}

fn plot_accel(name: &str) -> String {
    format!(
        "# Residual history of the {name} experiment; render with: gnuplot plot.gp
set datafile separator ','
set terminal pngcairo size 900,600
set output 'errors.png'
set key top right
set logscale y
set format y '10^{{%T}}'
set xlabel 'time'
set ylabel 'residual (Frobenius)'
plot 'errors.csv' skip 1 using 2:3 with lines title 'plain', \\
     'errors.csv' skip 1 using 2:4 with lines title 'accelerated'
"
    )
}

fn plot_control(name: &str) -> String {
    format!(
        "# Descent history of the {name} experiment; render with: gnuplot plot.gp
set datafile separator ','
set terminal pngcairo size 900,600
set output 'errors.png'
set key top right
set logscale y
set format y '10^{{%T}}'
set xlabel 'outer iteration'
set ylabel 'value'
plot 'errors.csv' skip 1 using 1:2 with linespoints pointtype 7 title 'cost', \\
     'errors.csv' skip 1 using 1:3 with linespoints pointtype 5 title 'terminal residual', \\
     'errors.csv' skip 1 using 1:4 with linespoints pointtype 9 title 'max jump'
"
    )
}
