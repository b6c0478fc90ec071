//! Outer minimization of `g(U)` over the sphere product: Riemannian
//! conjugate gradient and Riemannian trust region.
//!
//! Each iteration solves the inner problem at the current iterate, forms the
//! cost, gradient (and Hessian-vector products for the trust region), takes
//! one step and logs the duality gap.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::constraint::ConstraintKind;
use crate::dual::{duality_gap_with, eval_g, euclidean_grad, euclidean_hess_vec, PowerIterationParams};
use crate::error::{Error, Result};
use crate::factors::{FactorPoint, GradientTuple, TangentVector};
use crate::inner::{solve_directional, solve_inner_below, InnerSolution, SolverParams};
use crate::manifold::SphereProductManifold;
use crate::problem::Problem;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverKind {
    Rcg,
    Rtr,
}

impl SolverKind {
    /// Conjugate gradient unless the problem is Hankel-constrained.
    pub fn default_for(kind: &ConstraintKind) -> Self {
        match kind {
            ConstraintKind::Hankel { .. } => SolverKind::Rtr,
            _ => SolverKind::Rcg,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SolverKind::Rcg => "rcg",
            SolverKind::Rtr => "rtr",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rcg" => Ok(SolverKind::Rcg),
            "rtr" => Ok(SolverKind::Rtr),
            other => Err(Error::InvalidParameter(format!("unknown solver `{other}` (expected rcg or rtr)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OuterStatus {
    /// Riemannian gradient norm reached `eps`.
    Converged,
    MaxIterations,
    /// The cost stopped decreasing, or the trust radius collapsed.
    Stagnated,
    /// Too many consecutive failed line searches.
    LineSearchFailed,
    TimeLimit,
}

impl OuterStatus {
    pub fn name(&self) -> &'static str {
        match self {
            OuterStatus::Converged => "converged",
            OuterStatus::MaxIterations => "max_iterations",
            OuterStatus::Stagnated => "stagnated",
            OuterStatus::LineSearchFailed => "line_search_failed",
            OuterStatus::TimeLimit => "time_limit",
        }
    }

    /// Whether the run ended at an acceptable point.
    pub fn is_success(&self) -> bool {
        matches!(self, OuterStatus::Converged | OuterStatus::Stagnated)
    }
}

impl fmt::Display for OuterStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OuterParams {
    /// `None` picks [`SolverKind::default_for`] the constraint.
    pub solver: Option<SolverKind>,
    pub eps: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub inner: SolverParams,
    pub power: PowerIterationParams,
    pub armijo: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    pub max_line_search_failures: usize,
    pub initial_radius: f64,
    /// `None` means `2 sqrt(K)`.
    pub max_radius: Option<f64>,
    pub tcg_max_iter: usize,
    pub tcg_kappa: f64,
    pub tcg_theta: f64,
    pub stagnation_window: usize,
    pub stagnation_tol: f64,
    /// Factor applied to the inner tolerances after a stalled step.
    pub stall_tightening: f64,
    pub compute_gap: bool,
    /// Stop with [`OuterStatus::TimeLimit`] once this many seconds have passed.
    pub time_limit: Option<f64>,
}

impl Default for OuterParams {
    fn default() -> Self {
        Self {
            solver: None,
            eps: 1e-6,
            max_iter: 200,
            seed: 0,
            inner: SolverParams::default(),
            power: PowerIterationParams::default(),
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 30,
            max_line_search_failures: 30,
            initial_radius: 0.1,
            max_radius: None,
            tcg_max_iter: 100,
            tcg_kappa: 0.1,
            tcg_theta: 1.0,
            stagnation_window: 5,
            stagnation_tol: 1e-12,
            stall_tightening: 0.1,
            compute_gap: true,
            time_limit: None,
        }
    }
}

impl OuterParams {
    pub fn validate(&self) -> Result<()> {
        self.inner.validate()?;
        let positive = [
            ("eps", self.eps),
            ("armijo", self.armijo),
            ("initial_radius", self.initial_radius),
            ("tcg_kappa", self.tcg_kappa),
            ("stagnation_tol", self.stagnation_tol),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::InvalidParameter(format!("backtrack factor must lie in (0, 1), got {}", self.backtrack)));
        }
        if !(self.stall_tightening > 0.0 && self.stall_tightening <= 1.0) {
            return Err(Error::InvalidParameter("stall_tightening must lie in (0, 1]".into()));
        }
        if let Some(t) = self.time_limit {
            if !(t > 0.0) {
                return Err(Error::InvalidParameter(format!("time limit must be positive, got {t}")));
            }
        }
        if let Some(m) = self.max_radius {
            if !(m.is_finite() && m >= self.initial_radius) {
                return Err(Error::InvalidParameter(format!("max_radius {m} below initial radius")));
            }
        }
        Ok(())
    }
}

/// One row of the convergence history.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub g_value: f64,
    /// Norm of the Riemannian gradient.
    pub grad_norm: f64,
    pub duality_gap: f64,
    pub rel_gap: f64,
    pub inner_iters: usize,
    pub wall_ms: f64,
    pub accepted: bool,
    /// Norm of the accepted tangent step.
    pub step_norm: f64,
    /// Trust radius the step was computed with.
    pub radius: Option<f64>,
    pub rho: Option<f64>,
    pub model_decrease: Option<f64>,
    pub cauchy_decrease: Option<f64>,
    /// Hankel kind: `||H*(S) - Z||`.
    pub feasibility: f64,
    pub z_norm: f64,
    /// Largest `| ||U_k||_F - 1 |`.
    pub manifold_error: f64,
    /// Largest `|<U_k, grad_k>|` of the Riemannian gradient.
    pub tangency_error: f64,
    pub inner_converged: bool,
    pub gap_confident: bool,
}

#[derive(Clone, Debug)]
pub struct OuterResult {
    pub u: FactorPoint,
    pub solution: InnerSolution,
    pub history: Vec<IterationRecord>,
    pub status: OuterStatus,
    pub solver: SolverKind,
    /// Inner tolerances in force at the end (after any tightening).
    pub inner: SolverParams,
}

struct Point {
    u: FactorPoint,
    sol: InnerSolution,
    g: f64,
    egrad: GradientTuple,
    rgrad: TangentVector,
    rgrad_norm: f64,
}

struct Context<'a> {
    problem: &'a Problem,
    manifold: SphereProductManifold,
    params: &'a OuterParams,
    inner: SolverParams,
    inner_iters: usize,
}

impl Context<'_> {
    fn solve(&mut self, u: &FactorPoint, warm: Option<&InnerSolution>) -> Result<InnerSolution> {
        self.solve_below(u, warm, f64::INFINITY)
    }

    /// A trial solve that may stop once `g` at `u` provably exceeds `cutoff`.
    fn solve_below(&mut self, u: &FactorPoint, warm: Option<&InnerSolution>, cutoff: f64) -> Result<InnerSolution> {
        let sol = solve_inner_below(self.problem, u, &self.inner, warm, cutoff)?;
        self.inner_iters += sol.inner_iterations();
        Ok(sol)
    }

    fn complete(&self, u: FactorPoint, sol: InnerSolution) -> Result<Point> {
        let g = eval_g(self.problem, &u, &sol)?.value;
        let egrad = euclidean_grad(self.problem, &u, &sol)?;
        let rgrad = self.manifold.riemannian_grad(&u, &egrad);
        let rgrad_norm = rgrad.norm();
        Ok(Point {
            u,
            sol,
            g,
            egrad,
            rgrad,
            rgrad_norm,
        })
    }

    fn evaluate(&mut self, u: FactorPoint, warm: Option<&InnerSolution>) -> Result<Point> {
        let sol = self.solve(&u, warm)?;
        self.complete(u, sol)
    }

    fn hess(&mut self, p: &Point, v: &TangentVector) -> Result<TangentVector> {
        let dsol = solve_directional(self.problem, &p.u, v, &p.sol, &self.inner)?;
        self.inner_iters += dsol.cg_iterations;
        let eh = euclidean_hess_vec(self.problem, &p.u, v, &p.sol, &dsol)?;
        let h = self.manifold.riemannian_hess_vec(&p.u, v, &p.egrad, &eh);
        Ok(self.manifold.tangent_project(&p.u, &h))
    }

    fn tighten(&mut self, cur: &mut Point) -> Result<()> {
        let next = self.inner.tightened(self.params.stall_tightening);
        if next == self.inner {
            return Ok(());
        }
        self.inner = next;
        let u = cur.u.clone();
        *cur = self.evaluate(u, Some(&cur.sol))?;
        Ok(())
    }

    fn record(&self, iter: usize, p: &Point, started: Instant, step: StepInfo) -> Result<IterationRecord> {
        let (gap, rel, confident) = if self.params.compute_gap {
            let report = duality_gap_with(self.problem, &p.u, &p.sol, &self.params.power)?;
            (report.gap, report.rel_gap, report.confident)
        } else {
            (f64::NAN, f64::NAN, false)
        };
        Ok(IterationRecord {
            iter,
            g_value: p.g,
            grad_norm: p.rgrad_norm,
            duality_gap: gap,
            rel_gap: rel,
            inner_iters: self.inner_iters,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
            accepted: step.accepted,
            step_norm: step.step_norm,
            radius: step.radius,
            rho: step.rho,
            model_decrease: step.model_decrease,
            cauchy_decrease: step.cauchy_decrease,
            feasibility: p.sol.feasibility,
            z_norm: p.sol.z_values().iter().map(|v| v * v).sum::<f64>().sqrt(),
            manifold_error: self.manifold.feasibility(&p.u),
            tangency_error: self.manifold.tangency(&p.u, &p.rgrad),
            inner_converged: p.sol.converged,
            gap_confident: confident,
        })
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct StepInfo {
    accepted: bool,
    step_norm: f64,
    radius: Option<f64>,
    rho: Option<f64>,
    model_decrease: Option<f64>,
    cauchy_decrease: Option<f64>,
}

#[derive(Default)]
struct RcgMemory {
    prev_dir: Option<TangentVector>,
    prev_grad: Option<TangentVector>,
    prev_step: Option<f64>,
    failures: usize,
}

/// One Riemannian CG iteration: PR+ direction with projection transport and
/// Armijo backtracking. Returns the new point (or the old one on failure).
fn rcg_step(ctx: &mut Context<'_>, cur: Point, mem: &mut RcgMemory) -> Result<(Point, StepInfo)> {
    let m = &ctx.manifold;
    let g = &cur.rgrad;
    let mut dir = g.scaled(-1.0);
    if let (Some(pd), Some(pg)) = (&mem.prev_dir, &mem.prev_grad) {
        let pg_t = m.transport(&cur.u, pg);
        let pd_t = m.transport(&cur.u, pd);
        let denom = pg.inner(pg);
        let beta = if denom > 0.0 { (g.inner(g) - g.inner(&pg_t)) / denom } else { 0.0 };
        if beta > 0.0 {
            dir.axpy(beta, &pd_t);
        }
        if dir.inner(g) >= 0.0 {
            dir = g.scaled(-1.0);
        }
    }
    let slope = dir.inner(g);
    let dnorm = dir.norm();
    // the remembered quantity is the step length on the manifold
    let max_len = 2.0 * (ctx.problem.order() as f64).sqrt();
    let mut t = mem.prev_step.map_or(1.0, |s| (2.0 * s).min(max_len)) / dnorm;
    for _ in 0..ctx.params.max_backtracks {
        let step = dir.scaled(t);
        if let Ok(cand_u) = ctx.manifold.retract(&cur.u, &step) {
            let bound = cur.g + ctx.params.armijo * t * slope;
            let sol = ctx.solve_below(&cand_u, Some(&cur.sol), bound)?;
            let value = eval_g(ctx.problem, &cand_u, &sol)?.value;
            if !sol.cut_off && value <= bound {
                let next = ctx.complete(cand_u, sol)?;
                mem.prev_dir = Some(dir);
                mem.prev_grad = Some(cur.rgrad);
                mem.prev_step = Some(t * dnorm);
                mem.failures = 0;
                let info = StepInfo {
                    accepted: true,
                    step_norm: t * dnorm,
                    ..Default::default()
                };
                return Ok((next, info));
            }
        }
        t *= ctx.params.backtrack;
    }
    mem.prev_dir = None;
    mem.prev_grad = None;
    mem.prev_step = None;
    mem.failures += 1;
    let mut cur = cur;
    ctx.tighten(&mut cur)?;
    Ok((cur, StepInfo::default()))
}

/// Outcome of the truncated-CG trust-region subproblem.
struct Subproblem {
    eta: TangentVector,
    boundary: bool,
    model_decrease: f64,
    cauchy_decrease: f64,
}

/// Steihaug-Toint truncated CG on `min <g, eta> + 1/2 <eta, H eta>` with
/// `||eta|| <= radius`, falling back to the Cauchy point if the result does
/// worse than it.
fn truncated_cg(ctx: &mut Context<'_>, p: &Point, radius: f64) -> Result<Subproblem> {
    let g = &p.rgrad;
    let gnorm = p.rgrad_norm;
    let max_iter = ctx.params.tcg_max_iter.min(ctx.manifold.dim()).max(1);
    let mut eta = g.zeros_like();
    let mut heta = g.zeros_like();
    let mut r = g.clone();
    let mut rr = r.inner(&r);
    let mut d = g.scaled(-1.0);
    let mut boundary = false;
    let stop = gnorm * gnorm.powf(ctx.params.tcg_theta).min(ctx.params.tcg_kappa);
    let mut cauchy: Option<(f64, f64, TangentVector)> = None;
    for j in 0..max_iter {
        let hd = ctx.hess(p, &d)?;
        let dhd = d.inner(&hd);
        if j == 0 {
            // d = -g, so <d, Hd> = <g, Hg>
            let tau = if dhd <= 0.0 { 1.0 } else { (gnorm.powi(3) / (radius * dhd)).min(1.0) };
            let s = tau * radius / gnorm;
            let dec = s * gnorm * gnorm - 0.5 * s * s * dhd;
            cauchy = Some((dec, s, hd.clone()));
        }
        let ed = eta.inner(&d);
        let dd = d.inner(&d);
        let ee = eta.inner(&eta);
        let alpha = rr / dhd;
        let next_ee = ee + 2.0 * alpha * ed + alpha * alpha * dd;
        if !(dhd > 0.0) || next_ee >= radius * radius {
            let tau = (-ed + (ed * ed + dd * (radius * radius - ee)).max(0.0).sqrt()) / dd;
            eta.axpy(tau, &d);
            heta.axpy(tau, &hd);
            boundary = true;
            break;
        }
        eta.axpy(alpha, &d);
        heta.axpy(alpha, &hd);
        r.axpy(alpha, &hd);
        r = ctx.manifold.tangent_project(&p.u, &r);
        let rr_next = r.inner(&r);
        if rr_next.sqrt() <= stop {
            break;
        }
        let beta = rr_next / rr;
        d = d.scaled(beta);
        d.axpy(-1.0, &r);
        d = ctx.manifold.tangent_project(&p.u, &d);
        rr = rr_next;
    }
    let model_decrease = -(g.inner(&eta) + 0.5 * eta.inner(&heta));
    let (cauchy_decrease, s, _) = cauchy.expect("at least one tCG iteration");
    if !(model_decrease.is_finite() && model_decrease >= cauchy_decrease) {
        return Ok(Subproblem {
            eta: g.scaled(-s),
            boundary: (s * gnorm - radius).abs() <= 1e-12 * radius,
            model_decrease: cauchy_decrease,
            cauchy_decrease,
        });
    }
    Ok(Subproblem {
        eta,
        boundary,
        model_decrease,
        cauchy_decrease,
    })
}

/// One trust-region iteration; the radius is updated in place.
fn rtr_step(ctx: &mut Context<'_>, cur: Point, radius: &mut f64, max_radius: f64) -> Result<(Point, StepInfo)> {
    let used = *radius;
    let sub = truncated_cg(ctx, &cur, used)?;
    let mut info = StepInfo {
        radius: Some(used),
        model_decrease: Some(sub.model_decrease),
        cauchy_decrease: Some(sub.cauchy_decrease),
        ..Default::default()
    };
    let cand = match ctx.manifold.retract(&cur.u, &sub.eta) {
        Ok(u) => {
            // anything above this bound gives rho < 0.1 and is rejected
            let sol = ctx.solve_below(&u, Some(&cur.sol), cur.g - 0.1 * sub.model_decrease.max(0.0))?;
            let value = eval_g(ctx.problem, &u, &sol)?.value;
            Some((u, sol, value))
        }
        Err(_) => None,
    };
    let rho = match &cand {
        Some((_, _, value)) if sub.model_decrease > 0.0 => (cur.g - value) / sub.model_decrease,
        _ => f64::NEG_INFINITY,
    };
    info.rho = Some(rho);
    if rho < 0.1 {
        *radius *= 0.25;
    } else if rho > 0.75 && sub.boundary {
        *radius = (2.0 * *radius).min(max_radius);
    }
    if rho > 0.1 {
        let (u, sol, _) = cand.expect("finite rho has a candidate");
        let next = ctx.complete(u, sol)?;
        info.accepted = true;
        info.step_norm = sub.eta.norm();
        return Ok((next, info));
    }
    let mut cur = cur;
    if rho < 0.0 {
        ctx.tighten(&mut cur)?;
    }
    Ok((cur, info))
}

/// Runs the outer solver from a seeded random point.
pub fn outer_solve(problem: &Problem, params: &OuterParams) -> Result<OuterResult> {
    outer_solve_with(problem, params, None, |_| {})
}

/// Runs the outer solver from `initial` (or a seeded random point), handing
/// every history record to `observer` as it is produced.
pub fn outer_solve_with(
    problem: &Problem,
    params: &OuterParams,
    initial: Option<FactorPoint>,
    mut observer: impl FnMut(&IterationRecord),
) -> Result<OuterResult> {
    params.validate()?;
    let manifold = SphereProductManifold::new(problem.factor_shapes())?;
    let solver = params.solver.unwrap_or_else(|| SolverKind::default_for(problem.constraint()));
    let max_radius = params.max_radius.unwrap_or(2.0 * (problem.order() as f64).sqrt());
    let u0 = match initial {
        Some(u) => {
            problem.check_factors(&u)?;
            if manifold.feasibility(&u) > 1e-10 {
                return Err(Error::InvalidParameter("initial point is not on the sphere product".into()));
            }
            u
        }
        None => manifold.random_point(params.seed),
    };
    let mut ctx = Context {
        problem,
        manifold,
        params,
        inner: params.inner.clone(),
        inner_iters: 0,
    };

    let run_started = Instant::now();
    let started = run_started;
    let mut cur = ctx.evaluate(u0, None)?;
    let mut history = Vec::with_capacity(params.max_iter + 1);
    let first = ctx.record(0, &cur, started, StepInfo::default())?;
    observer(&first);
    history.push(first);

    let mut status = OuterStatus::MaxIterations;
    let mut rcg = RcgMemory::default();
    let mut radius = params.initial_radius;
    let mut flat = 0;
    for iter in 1..=params.max_iter {
        if cur.rgrad_norm <= params.eps {
            status = OuterStatus::Converged;
            break;
        }
        let started = Instant::now();
        ctx.inner_iters = 0;
        let before = cur.g;
        let (next, info) = match solver {
            SolverKind::Rcg => rcg_step(&mut ctx, cur, &mut rcg)?,
            SolverKind::Rtr => rtr_step(&mut ctx, cur, &mut radius, max_radius)?,
        };
        cur = next;
        let rec = ctx.record(iter, &cur, started, info)?;
        observer(&rec);
        history.push(rec);

        if info.accepted {
            if (before - cur.g).abs() < params.stagnation_tol * (1.0 + cur.g.abs()) {
                flat += 1;
            } else {
                flat = 0;
            }
        }
        if flat >= params.stagnation_window || radius < f64::EPSILON * params.initial_radius {
            status = OuterStatus::Stagnated;
            break;
        }
        if rcg.failures >= params.max_line_search_failures {
            status = OuterStatus::LineSearchFailed;
            break;
        }
        if params.time_limit.is_some_and(|t| run_started.elapsed().as_secs_f64() >= t) {
            status = OuterStatus::TimeLimit;
            break;
        }
    }
    if status == OuterStatus::MaxIterations && cur.rgrad_norm <= params.eps {
        status = OuterStatus::Converged;
    }
    Ok(OuterResult {
        u: cur.u,
        solution: cur.sol,
        history,
        status,
        solver,
        inner: ctx.inner,
    })
}
