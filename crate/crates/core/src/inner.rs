//! Solvers for the inner concave maximization that defines `g(U)`:
//!
//! ```text
//! g(U) = max_{Z = Z_Omega, s}  <Z, Y> - ||Z||^2 / (4C) - sum_k lambda_k/2 ||U_k^T (Z_k + A*(s)_k)||^2
//! ```
//!
//! and for the linearized optimality system that yields `(Z', s')` along a
//! direction `V`, needed by Hessian-vector products.
//!
//! Write `T_U(X) = sum_k lambda_k fold_k(U_k U_k^T X_k)` (restricted to the
//! relevant support). Then:
//!
//! * no constraint: `Z/(2C) + P_Omega T_U(Z) = Y`, solved by linear CG;
//! * nonnegative: a bound-constrained quadratic in `(Z, S)`, `S >= 0` over the
//!   whole grid, solved by gradient projection with CG on faces;
//! * Hankel: projected CG over the stacked `(Z, S)` with the closed-form
//!   coupling projection onto `H*(S) = Z` applied at every step.

use nalgebra::DMatrix;

use crate::constraint::DualMultiplier;
use crate::error::{Error, Result};
use crate::factors::Factors;
use crate::operator::RegularizedLayout;
use crate::problem::{Problem, Structure};
use crate::tensor::{DenseTensor, SparseTensor};

/// Tolerances and iteration caps of the inner solvers.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverParams {
    /// CG stops once the (projected) residual is below `cg_tol * ||Y_Omega||`.
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    /// Complementarity level reported as acceptable, relative to `(1 + ||Y_Omega||)^2`.
    pub nnls_tol: f64,
    /// Cap on projected-gradient steps per nonnegative cycle.
    pub nnls_max_iter: usize,
    /// Cap on nonnegative cycles (projection phase plus face CG).
    pub alternation_max_rounds: usize,
    /// Joint projected-gradient norm target, relative to `1 + ||Y_Omega||`.
    pub alternation_tol: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            cg_tol: 1e-10,
            cg_max_iter: 2000,
            nnls_tol: 1e-10,
            nnls_max_iter: 500,
            alternation_max_rounds: 500,
            alternation_tol: 1e-8,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        let tols = [self.cg_tol, self.nnls_tol, self.alternation_tol];
        if tols.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::InvalidParameter(format!("solver tolerances must be positive: {tols:?}")));
        }
        if self.cg_max_iter == 0 || self.nnls_max_iter == 0 || self.alternation_max_rounds == 0 {
            return Err(Error::InvalidParameter("solver iteration caps must be >= 1".into()));
        }
        Ok(())
    }

    /// All tolerances multiplied by `factor`, floored at `1e-15`.
    pub fn tightened(&self, factor: f64) -> Self {
        Self {
            cg_tol: (self.cg_tol * factor).max(1e-15),
            nnls_tol: (self.nnls_tol * factor).max(1e-15),
            alternation_tol: (self.alternation_tol * factor).max(1e-15),
            ..self.clone()
        }
    }
}

/// The maximizer `(Z, s)` of the inner problem at some `U`, with diagnostics.
#[derive(Clone, Debug)]
pub struct InnerSolution {
    z: Vec<f64>,
    s: Vec<f64>,
    x: Vec<f64>,
    /// Inner objective value, which equals `g(U)` at convergence.
    pub objective: f64,
    /// Norm of the (projected) gradient of the inner objective.
    pub stationarity: f64,
    /// Nonnegative kind: `sum_i S_i |grad_i|` over the grid.
    pub complementarity: f64,
    /// Hankel kind: `||H*(S) - Z||`.
    pub feasibility: f64,
    pub cg_iterations: usize,
    pub nnls_iterations: usize,
    pub rounds: usize,
    pub converged: bool,
    /// Number of CG curvature breakdowns that forced a steepest-ascent restart.
    pub breakdowns: usize,
    /// Stopped early because the objective exceeded the caller's cutoff.
    pub cut_off: bool,
}

impl InnerSolution {
    /// `Z` values aligned with the Omega support order.
    pub fn z_values(&self) -> &[f64] {
        &self.z
    }

    /// Multiplier values: grid-ordered for nonnegative, lift-ordered for Hankel, empty otherwise.
    pub fn s_values(&self) -> &[f64] {
        &self.s
    }

    /// `Z + A*(s)` on the regularized layout (the lifted `S` for Hankel).
    pub fn combined(&self) -> &[f64] {
        &self.x
    }

    pub fn inner_iterations(&self) -> usize {
        self.cg_iterations + self.nnls_iterations
    }

    pub fn z(&self, problem: &Problem) -> SparseTensor {
        SparseTensor::from_support(problem.observed().support().clone(), self.z.clone()).expect("aligned with Omega")
    }

    pub fn multiplier(&self, problem: &Problem) -> DualMultiplier {
        match problem.structure() {
            Structure::None => DualMultiplier::Zero {
                dims: problem.dims().to_vec(),
            },
            Structure::Nonnegative { grid, .. } => {
                DualMultiplier::Nonnegative(grid_to_dense(grid, &self.s, problem.dims()))
            }
            Structure::Hankel { lift, .. } => DualMultiplier::Hankel {
                tau: lift.tau().to_vec(),
                s: SparseTensor::from_support(lift.support().clone(), self.s.clone()).expect("aligned with lift"),
            },
        }
    }

    /// The all-zero starting point for `problem`.
    pub fn zeros(problem: &Problem) -> Self {
        let (ns, nx) = match problem.structure() {
            Structure::None => (0, problem.omega_len()),
            Structure::Nonnegative { grid, .. } => (grid.len(), grid.len()),
            Structure::Hankel { layout, .. } => (layout.len(), layout.len()),
        };
        Self {
            z: vec![0.0; problem.omega_len()],
            s: vec![0.0; ns],
            x: vec![0.0; nx],
            objective: 0.0,
            stationarity: 0.0,
            complementarity: 0.0,
            feasibility: 0.0,
            cg_iterations: 0,
            nnls_iterations: 0,
            rounds: 0,
            converged: false,
            breakdowns: 0,
            cut_off: false,
        }
    }
}

pub(crate) fn grid_to_dense(grid: &RegularizedLayout, values: &[f64], dims: &[usize]) -> DenseTensor {
    let mut t = DenseTensor::zeros(dims).expect("valid dims");
    for (idx, &v) in grid.support().iter().zip(values) {
        t.set(idx, v);
    }
    t
}

/// Derivatives `(Z', s')` of the inner maximizer along a direction `V`.
#[derive(Clone, Debug)]
pub struct DirectionalSolution {
    zdot: Vec<f64>,
    sdot: Vec<f64>,
    xdot: Vec<f64>,
    /// Multiplier entries with both value and gradient at zero, treated as free.
    pub degenerate: usize,
    /// Multiplier entries held at zero (nonnegative kind).
    pub active: usize,
    pub cg_iterations: usize,
    pub converged: bool,
}

impl DirectionalSolution {
    pub fn zdot_values(&self) -> &[f64] {
        &self.zdot
    }

    pub fn sdot_values(&self) -> &[f64] {
        &self.sdot
    }

    /// `Z' + A*(s')` on the regularized layout.
    pub fn combined(&self) -> &[f64] {
        &self.xdot
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct CgReport {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub breakdowns: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Linear CG for `A x = rhs` with `A` symmetric positive semidefinite on the
/// subspace fixed by `project` (an orthogonal projector; pass a no-op for the
/// unconstrained case). `x` is the warm start and is overwritten.
pub(crate) fn conjugate_gradient<A, P>(
    mut apply: A,
    rhs: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
    mut project: P,
) -> CgReport
where
    A: FnMut(&[f64], &mut [f64]),
    P: FnMut(&mut [f64]),
{
    let n = rhs.len();
    let mut ax = vec![0.0; n];
    let residual = |x: &[f64], ax: &mut Vec<f64>, apply: &mut A, project: &mut P| {
        ax.iter_mut().for_each(|v| *v = 0.0);
        apply(x, ax);
        let mut r: Vec<f64> = rhs.iter().zip(ax.iter()).map(|(b, a)| b - a).collect();
        project(&mut r);
        r
    };
    project(x);
    let mut r = residual(x, &mut ax, &mut apply, &mut project);
    let mut rr = dot(&r, &r);
    let mut report = CgReport {
        iterations: 0,
        residual: rr.sqrt(),
        converged: rr.sqrt() <= tol,
        breakdowns: 0,
    };
    if report.converged {
        return report;
    }
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut steepest = true;
    for it in 1..=max_iter {
        report.iterations = it;
        ap.iter_mut().for_each(|v| *v = 0.0);
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > f64::MIN_POSITIVE) {
            report.breakdowns += 1;
            if steepest {
                break;
            }
            p.copy_from_slice(&r);
            steepest = true;
            continue;
        }
        let alpha = rr / pap;
        x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        project(x);
        if it % 50 == 0 {
            r = residual(x, &mut ax, &mut apply, &mut project);
        } else {
            project(&mut ap);
            r.iter_mut().zip(&ap).for_each(|(ri, a)| *ri -= alpha * a);
        }
        let rr_new = dot(&r, &r);
        report.residual = rr_new.sqrt();
        if report.residual <= tol {
            report.converged = true;
            break;
        }
        let beta = rr_new / rr;
        p.iter_mut().zip(&r).for_each(|(pi, ri)| *pi = ri + beta * *pi);
        project(&mut p);
        steepest = false;
        rr = rr_new;
    }
    if !report.converged {
        // final residual from scratch so the report never understates it
        r = residual(x, &mut ax, &mut apply, &mut project);
        report.residual = norm(&r);
        report.converged = report.residual <= tol;
    }
    report
}

fn objective(problem: &Problem, uts: &[DMatrix<f64>], z: &[f64], x: &[f64]) -> f64 {
    let c = problem.cost();
    let energy = problem
        .regularized_layout()
        .regularizer_energy(uts, problem.lambdas(), x);
    dot(z, problem.y()) - dot(z, z) / (4.0 * c) - 0.5 * energy
}

fn cg_tolerance(params: &SolverParams, problem: &Problem, rhs_norm: f64) -> f64 {
    params.cg_tol * problem.y_norm().max(rhs_norm).max(f64::MIN_POSITIVE)
}

/// Solves the inner problem for whichever constraint kind `problem` carries,
/// warm-started from `warm` when given.
pub fn solve_inner(problem: &Problem, u: &Factors, params: &SolverParams, warm: Option<&InnerSolution>) -> Result<InnerSolution> {
    solve_inner_below(problem, u, params, warm, f64::INFINITY)
}

/// Like [`solve_inner`], but an iterative solver may stop as soon as its
/// objective, a lower bound on `g(U)`, exceeds `cutoff`. The result is then
/// flagged [`InnerSolution::cut_off`] and is not a maximizer.
pub fn solve_inner_below(
    problem: &Problem,
    u: &Factors,
    params: &SolverParams,
    warm: Option<&InnerSolution>,
    cutoff: f64,
) -> Result<InnerSolution> {
    problem.check_factors(u)?;
    params.validate()?;
    match problem.structure() {
        Structure::None => Ok(solve_none_impl(problem, u, params, warm)),
        Structure::Nonnegative { .. } => Ok(solve_nonneg_impl(problem, u, params, warm, cutoff)),
        Structure::Hankel { .. } => Ok(solve_hankel_impl(problem, u, params, warm)),
    }
}

fn require(problem: &Problem, name: &str) -> Result<()> {
    if problem.constraint().name() != name {
        return Err(Error::InvalidParameter(format!(
            "solver for `{name}` called on a `{}` problem",
            problem.constraint().name()
        )));
    }
    Ok(())
}

/// Inner solve with no structural constraint.
pub fn solve_inner_none(problem: &Problem, u: &Factors, params: &SolverParams) -> Result<InnerSolution> {
    require(problem, "none")?;
    solve_inner(problem, u, params, None)
}

/// Inner solve with the nonnegativity constraint.
pub fn solve_inner_nonneg(problem: &Problem, u: &Factors, params: &SolverParams) -> Result<InnerSolution> {
    require(problem, "nonneg")?;
    solve_inner(problem, u, params, None)
}

/// Inner solve with the Hankel constraint.
pub fn solve_inner_hankel(problem: &Problem, u: &Factors, params: &SolverParams) -> Result<InnerSolution> {
    require(problem, "hankel")?;
    solve_inner(problem, u, params, None)
}

fn omega_operator<'a>(
    problem: &'a Problem,
    uts: &'a [DMatrix<f64>],
) -> impl FnMut(&[f64], &mut [f64]) + 'a {
    let inv2c = 1.0 / (2.0 * problem.cost());
    let layout = problem.omega_layout();
    let lambdas = problem.lambdas();
    move |z: &[f64], out: &mut [f64]| {
        out.iter_mut().zip(z).for_each(|(o, zi)| *o += inv2c * zi);
        layout.apply_regularizer(uts, lambdas, z, out);
    }
}

fn solve_none_impl(problem: &Problem, u: &Factors, params: &SolverParams, warm: Option<&InnerSolution>) -> InnerSolution {
    let uts = u.transposes();
    let mut z = match warm {
        Some(w) if w.z.len() == problem.omega_len() => w.z.clone(),
        _ => vec![0.0; problem.omega_len()],
    };
    let tol = cg_tolerance(params, problem, 0.0);
    let report = conjugate_gradient(omega_operator(problem, &uts), problem.y(), &mut z, tol, params.cg_max_iter, |_| {});
    let objective = objective(problem, &uts, &z, &z);
    InnerSolution {
        x: z.clone(),
        z,
        s: Vec::new(),
        objective,
        stationarity: report.residual,
        complementarity: 0.0,
        feasibility: 0.0,
        cg_iterations: report.iterations,
        nnls_iterations: 0,
        rounds: 1,
        converged: report.converged,
        breakdowns: report.breakdowns,
        cut_off: false,
    }
}

/// Gradient projection with conjugate gradients on faces (Moré-Toraldo) for
/// the joint problem `min_{z, s >= 0} 1/2 <v, A v> - <b, v>`, `v = (z, s)`.
///
/// `A v = (z/(2C) + P_Omega T(x), T(x))` with `x = E z + s` on the grid and
/// `b = (Y, 0)`. Each cycle takes projected Cauchy steps until the active set
/// settles, then runs CG on the free variables and a projected search along
/// the CG step.
struct Gpcg<'a> {
    grid: &'a RegularizedLayout,
    omega_in_grid: &'a [usize],
    uts: &'a [DMatrix<f64>],
    lambdas: &'a [f64],
    inv2c: f64,
    nz: usize,
}

impl Gpcg<'_> {
    fn apply(&self, v: &[f64], out: &mut [f64]) {
        let (vz, vs) = v.split_at(self.nz);
        let mut x = vs.to_vec();
        for (&p, &zv) in self.omega_in_grid.iter().zip(vz) {
            x[p] += zv;
        }
        let mut t = vec![0.0; x.len()];
        self.grid.apply_regularizer(self.uts, self.lambdas, &x, &mut t);
        let (oz, os) = out.split_at_mut(self.nz);
        for ((o, &p), zv) in oz.iter_mut().zip(self.omega_in_grid).zip(vz) {
            *o += self.inv2c * zv + t[p];
        }
        os.iter_mut().zip(&t).for_each(|(o, tv)| *o += tv);
    }

    fn applied(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        self.apply(v, &mut out);
        out
    }

    fn projected_gradient(&self, v: &[f64], g: &[f64]) -> Vec<f64> {
        let mut pg = g.to_vec();
        for (p, &si) in pg[self.nz..].iter_mut().zip(&v[self.nz..]) {
            if si <= 0.0 {
                *p = p.min(0.0);
            }
        }
        pg
    }

    /// CG on `min_w <-rhs, w> + 1/2 <w, A w>` over the free coordinates, stopped
    /// once an iteration's decrease falls below a tenth of the best one or the
    /// residual reaches `tol`.
    fn face_cg(&self, free: &[bool], rhs: &[f64], tol: f64, max_iter: usize) -> FaceStep {
        const ETA: f64 = 0.1;
        let n = rhs.len();
        let mut w = vec![0.0; n];
        let mut r = rhs.to_vec();
        let mut p = r.clone();
        let mut rr = dot(&r, &r);
        let mut best = 0.0f64;
        let mut ap = vec![0.0; n];
        let mut out = FaceStep {
            step: Vec::new(),
            iterations: 0,
            breakdown: false,
        };
        while out.iterations < max_iter && rr.sqrt() > tol {
            out.iterations += 1;
            ap.iter_mut().for_each(|a| *a = 0.0);
            self.apply(&p, &mut ap);
            ap.iter_mut().zip(free).for_each(|(a, &f)| {
                if !f {
                    *a = 0.0
                }
            });
            let pap = dot(&p, &ap);
            if !(pap > 1e-14 * dot(&p, &p) * self.inv2c) {
                out.breakdown = true;
                break;
            }
            let alpha = rr / pap;
            w.iter_mut().zip(&p).for_each(|(wi, pi)| *wi += alpha * pi);
            r.iter_mut().zip(&ap).for_each(|(ri, a)| *ri -= alpha * a);
            let decrease = 0.5 * alpha * rr;
            best = best.max(decrease);
            let rr_next = dot(&r, &r);
            if decrease <= ETA * best && out.iterations > 1 {
                break;
            }
            let beta = rr_next / rr;
            p.iter_mut().zip(&r).for_each(|(pi, ri)| *pi = ri + beta * *pi);
            rr = rr_next;
        }
        out.step = w;
        out
    }

    /// Projected Armijo search along `d` from `v`; updates `v`, `g` and returns the decrease.
    fn projected_search(&self, v: &mut [f64], g: &mut [f64], d: &[f64], mut alpha: f64) -> f64 {
        const MU: f64 = 1e-4;
        for _ in 0..60 {
            let mut step: Vec<f64> = d.iter().map(|di| alpha * di).collect();
            for (st, &si) in step[self.nz..].iter_mut().zip(&v[self.nz..]) {
                if si + *st < 0.0 {
                    *st = -si;
                }
            }
            let gs = dot(g, &step);
            if gs >= 0.0 {
                alpha *= 0.5;
                continue;
            }
            let as_ = self.applied(&step);
            let change = gs + 0.5 * dot(&step, &as_);
            if change <= MU * gs {
                v.iter_mut().zip(&step).for_each(|(vi, st)| *vi += st);
                for vi in v[self.nz..].iter_mut() {
                    *vi = vi.max(0.0);
                }
                g.iter_mut().zip(&as_).for_each(|(gi, a)| *gi += a);
                return -change;
            }
            alpha *= 0.5;
        }
        0.0
    }
}

struct FaceStep {
    step: Vec<f64>,
    iterations: usize,
    breakdown: bool,
}

struct GpcgReport {
    cg_iterations: usize,
    projection_steps: usize,
    cycles: usize,
    breakdowns: usize,
    cut_off: bool,
}

fn gpcg(
    op: &Gpcg<'_>,
    b: &[f64],
    v: &mut [f64],
    g: &mut Vec<f64>,
    tol: f64,
    cutoff: f64,
    params: &SolverParams,
) -> GpcgReport {
    const ETA: f64 = 0.25;
    let n = v.len();
    let nz = op.nz;
    for vi in v[nz..].iter_mut() {
        *vi = vi.max(0.0);
    }
    let refresh = |v: &[f64], g: &mut Vec<f64>| {
        *g = op.applied(v);
        g.iter_mut().zip(b).for_each(|(gi, bi)| *gi -= bi);
    };
    refresh(v, g);
    let mut report = GpcgReport {
        cg_iterations: 0,
        projection_steps: 0,
        cycles: 0,
        breakdowns: 0,
        cut_off: false,
    };
    while report.cycles < params.alternation_max_rounds {
        let pg = op.projected_gradient(v, g);
        if norm(&pg) <= tol {
            break;
        }
        report.cycles += 1;
        // gradient projection until the active set settles
        let mut best = 0.0f64;
        for _ in 0..params.nnls_max_iter {
            let pg = op.projected_gradient(v, g);
            let pp = dot(&pg, &pg);
            if pp.sqrt() <= tol {
                break;
            }
            let apg = op.applied(&pg);
            let curv = dot(&pg, &apg);
            let alpha = if curv > 0.0 { pp / curv } else { 1.0 };
            let active: Vec<bool> = v[nz..].iter().map(|s| *s <= 0.0).collect();
            let d: Vec<f64> = g.iter().map(|gi| -gi).collect();
            let dec = op.projected_search(v, g, &d, alpha);
            report.projection_steps += 1;
            let settled = v[nz..].iter().zip(&active).all(|(s, &a)| (*s <= 0.0) == a);
            best = best.max(dec);
            if settled || dec <= ETA * best {
                break;
            }
        }
        // conjugate gradients on the face of free variables
        let free: Vec<bool> = (0..n)
            .map(|i| i < nz || v[i] > 0.0 || g[i] < 0.0)
            .collect();
        let rhs: Vec<f64> = g.iter().zip(&free).map(|(gi, &f)| if f { -gi } else { 0.0 }).collect();
        let rnorm = norm(&rhs);
        if rnorm == 0.0 {
            continue;
        }
        let face = op.face_cg(&free, &rhs, (0.1 * rnorm).max(0.1 * tol), params.cg_max_iter);
        report.cg_iterations += face.iterations;
        report.breakdowns += face.breakdown as usize;
        let w = face.step;
        op.projected_search(v, g, &w, 1.0);
        if 0.5 * (dot(b, v) - dot(v, g)) > cutoff {
            report.cut_off = true;
            break;
        }
        if report.cycles % 20 == 0 {
            refresh(v, g);
        }
    }
    refresh(v, g);
    report
}

fn solve_nonneg_impl(
    problem: &Problem,
    u: &Factors,
    params: &SolverParams,
    warm: Option<&InnerSolution>,
    cutoff: f64,
) -> InnerSolution {
    let Structure::Nonnegative { grid, omega_in_grid } = problem.structure() else {
        unreachable!("nonnegative structure")
    };
    let uts = u.transposes();
    let y = problem.y();
    let nz = y.len();
    let ng = grid.len();
    let scale = 1.0 + problem.y_norm();
    let op = Gpcg {
        grid,
        omega_in_grid,
        uts: &uts,
        lambdas: problem.lambdas(),
        inv2c: 1.0 / (2.0 * problem.cost()),
        nz,
    };
    let mut v = vec![0.0; nz + ng];
    if let Some(w) = warm.filter(|w| w.s.len() == ng && w.z.len() == nz) {
        v[..nz].copy_from_slice(&w.z);
        v[nz..].copy_from_slice(&w.s);
    }
    let mut b = vec![0.0; nz + ng];
    b[..nz].copy_from_slice(y);
    let mut g = Vec::new();
    let tol = params.alternation_tol * scale;
    let report = gpcg(&op, &b, &mut v, &mut g, tol, cutoff, params);

    let pg = op.projected_gradient(&v, &g);
    let residual = norm(&pg);
    let (z, s) = v.split_at(nz);
    let (z, s) = (z.to_vec(), s.to_vec());
    let grad_s = &g[nz..];
    let complementarity: f64 = s.iter().zip(grad_s).map(|(si, gi)| si * gi.max(0.0)).sum();
    let mut x = s.clone();
    for (&p, &zv) in omega_in_grid.iter().zip(&z) {
        x[p] += zv;
    }
    let objective = objective(problem, &uts, &z, &x);
    InnerSolution {
        z,
        s,
        x,
        objective,
        stationarity: residual,
        complementarity,
        feasibility: 0.0,
        cg_iterations: report.cg_iterations,
        nnls_iterations: report.projection_steps,
        rounds: report.cycles,
        converged: residual <= tol,
        breakdowns: report.breakdowns,
        cut_off: report.cut_off,
    }
}

fn solve_hankel_impl(problem: &Problem, u: &Factors, params: &SolverParams, warm: Option<&InnerSolution>) -> InnerSolution {
    let Structure::Hankel { lift, layout } = problem.structure() else {
        unreachable!("hankel structure")
    };
    let uts = u.transposes();
    let lambdas = problem.lambdas();
    let nz = problem.omega_len();
    let ns = layout.len();
    let inv2c = 1.0 / (2.0 * problem.cost());

    let mut v = vec![0.0; nz + ns];
    if let Some(w) = warm.filter(|w| w.z.len() == nz && w.s.len() == ns) {
        v[..nz].copy_from_slice(&w.z);
        v[nz..].copy_from_slice(&w.s);
    }
    let mut rhs = vec![0.0; nz + ns];
    rhs[..nz].copy_from_slice(problem.y());

    let apply = |x: &[f64], out: &mut [f64]| {
        let (xz, xs) = x.split_at(nz);
        let (oz, os) = out.split_at_mut(nz);
        oz.iter_mut().zip(xz).for_each(|(o, zi)| *o += inv2c * zi);
        layout.apply_regularizer(&uts, lambdas, xs, os);
    };
    let project = |x: &mut [f64]| {
        let (xz, xs) = x.split_at_mut(nz);
        lift.project(xz, xs);
    };
    let tol = cg_tolerance(params, problem, 0.0);
    let report = conjugate_gradient(apply, &rhs, &mut v, tol, params.cg_max_iter, project);
    let (z, s) = v.split_at(nz);
    let (z, s) = (z.to_vec(), s.to_vec());
    let feasibility = lift.feasibility(&z, &s);
    let objective = objective(problem, &uts, &z, &s);
    InnerSolution {
        x: s.clone(),
        z,
        s,
        objective,
        stationarity: report.residual,
        complementarity: 0.0,
        feasibility,
        cg_iterations: report.iterations,
        nnls_iterations: 0,
        rounds: 1,
        converged: report.converged,
        breakdowns: report.breakdowns,
        cut_off: false,
    }
}

/// Solves the linearized inner optimality system at `sol` along `v`.
///
/// For the nonnegative kind the active set (entries with `S = 0` and a
/// strictly positive objective gradient) is frozen; entries where both vanish
/// are counted in [`DirectionalSolution::degenerate`] and treated as free.
pub fn solve_directional(
    problem: &Problem,
    u: &Factors,
    v: &Factors,
    sol: &InnerSolution,
    params: &SolverParams,
) -> Result<DirectionalSolution> {
    problem.check_factors(u)?;
    problem.check_factors(v)?;
    let uts = u.transposes();
    let vts = v.transposes();
    let lambdas = problem.lambdas();
    let inv2c = 1.0 / (2.0 * problem.cost());
    Ok(match problem.structure() {
        Structure::None => {
            let mut rhs = vec![0.0; problem.omega_len()];
            problem
                .omega_layout()
                .apply_regularizer_derivative(&uts, &vts, lambdas, &sol.x, &mut rhs);
            rhs.iter_mut().for_each(|r| *r = -*r);
            let mut zdot = vec![0.0; rhs.len()];
            let tol = params.cg_tol * norm(&rhs).max(f64::MIN_POSITIVE);
            let report = conjugate_gradient(omega_operator(problem, &uts), &rhs, &mut zdot, tol, params.cg_max_iter, |_| {});
            DirectionalSolution {
                xdot: zdot.clone(),
                zdot,
                sdot: Vec::new(),
                degenerate: 0,
                active: 0,
                cg_iterations: report.iterations,
                converged: report.converged,
            }
        }
        Structure::Nonnegative { grid, omega_in_grid } => {
            let mut grad = vec![0.0; grid.len()];
            grid.apply_regularizer(&uts, lambdas, &sol.x, &mut grad);
            let gmax = grad.iter().fold(0.0, |m: f64, g| m.max(g.abs()));
            let threshold = 1e-9 * (1.0 + gmax);
            let mut free = vec![true; grid.len()];
            let mut degenerate = 0;
            let mut active = 0;
            for ((f, &si), &g) in free.iter_mut().zip(&sol.s).zip(&grad) {
                if si <= 0.0 {
                    if g > threshold {
                        *f = false;
                        active += 1;
                    } else if g.abs() <= threshold {
                        degenerate += 1;
                    }
                }
            }
            let nz = problem.omega_len();
            let ng = grid.len();
            let mut dx = vec![0.0; ng];
            grid.apply_regularizer_derivative(&uts, &vts, lambdas, &sol.x, &mut dx);
            let mut rhs = vec![0.0; nz + ng];
            for (w, &p) in omega_in_grid.iter().enumerate() {
                rhs[w] = -dx[p];
            }
            for ((r, d), &f) in rhs[nz..].iter_mut().zip(&dx).zip(&free) {
                *r = if f { -d } else { 0.0 };
            }
            let apply = |x: &[f64], out: &mut [f64]| {
                let (xz, xs) = x.split_at(nz);
                let mut combined = xs.to_vec();
                for (&p, &zv) in omega_in_grid.iter().zip(xz) {
                    combined[p] += zv;
                }
                let mut t = vec![0.0; ng];
                grid.apply_regularizer(&uts, lambdas, &combined, &mut t);
                let (oz, os) = out.split_at_mut(nz);
                for ((o, &p), zv) in oz.iter_mut().zip(omega_in_grid).zip(xz) {
                    *o += inv2c * zv + t[p];
                }
                for ((o, tv), &f) in os.iter_mut().zip(&t).zip(&free) {
                    if f {
                        *o += tv;
                    }
                }
            };
            let project = |x: &mut [f64]| {
                for (xs, &f) in x[nz..].iter_mut().zip(&free) {
                    if !f {
                        *xs = 0.0;
                    }
                }
            };
            let mut sol_vec = vec![0.0; nz + ng];
            let tol = params.cg_tol * norm(&rhs).max(f64::MIN_POSITIVE);
            let report = conjugate_gradient(apply, &rhs, &mut sol_vec, tol, params.cg_max_iter, project);
            let zdot = sol_vec[..nz].to_vec();
            let sdot = sol_vec[nz..].to_vec();
            let mut xdot = sdot.clone();
            for (&p, &zv) in omega_in_grid.iter().zip(&zdot) {
                xdot[p] += zv;
            }
            DirectionalSolution {
                zdot,
                sdot,
                xdot,
                degenerate,
                active,
                cg_iterations: report.iterations,
                converged: report.converged,
            }
        }
        Structure::Hankel { lift, layout } => {
            let nz = problem.omega_len();
            let ns = layout.len();
            let mut rhs = vec![0.0; nz + ns];
            layout.apply_regularizer_derivative(&uts, &vts, lambdas, &sol.s, &mut rhs[nz..]);
            rhs.iter_mut().for_each(|r| *r = -*r);
            let apply = |x: &[f64], out: &mut [f64]| {
                let (xz, xs) = x.split_at(nz);
                let (oz, os) = out.split_at_mut(nz);
                oz.iter_mut().zip(xz).for_each(|(o, zi)| *o += inv2c * zi);
                layout.apply_regularizer(&uts, lambdas, xs, os);
            };
            let project = |x: &mut [f64]| {
                let (xz, xs) = x.split_at_mut(nz);
                lift.project(xz, xs);
            };
            let mut sol_vec = vec![0.0; nz + ns];
            let mut projected_rhs = rhs.clone();
            project(&mut projected_rhs);
            let tol = params.cg_tol * norm(&projected_rhs).max(f64::MIN_POSITIVE);
            let report = conjugate_gradient(apply, &rhs, &mut sol_vec, tol, params.cg_max_iter, project);
            let zdot = sol_vec[..nz].to_vec();
            let sdot = sol_vec[nz..].to_vec();
            DirectionalSolution {
                xdot: sdot.clone(),
                zdot,
                sdot,
                degenerate: 0,
                active: 0,
                cg_iterations: report.iterations,
                converged: report.converged,
            }
        }
    })
}
