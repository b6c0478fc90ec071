//! Finite-difference checks of the dual gradient and Hessian on a live problem.

use stlt_core::{
    eval_g, euclidean_grad, euclidean_hess_vec, solve_directional, solve_inner, ConstraintKind, Factors, Problem,
    Result, SolverParams, SphereProductManifold,
};

pub const GRAD_TOL: f64 = 1e-4;
pub const HESS_TOL: f64 = 1e-3;
pub const TAYLOR_SLOPE: f64 = 2.9;

#[derive(Clone, Debug, PartialEq)]
pub struct DerivReport {
    pub trials: usize,
    /// Worst `|fd - <grad, V>| / max(|<grad, V>|, 1)` over the trials.
    pub grad_err: f64,
    /// Worst `||fd - Hess[V]|| / max(||Hess[V]||, 1)`; `None` for the nonnegative kind.
    pub hess_err: Option<f64>,
    /// Smallest log-log slope of the second-order Taylor remainder.
    pub taylor_slope: Option<f64>,
}

impl DerivReport {
    pub fn grad_ok(&self) -> bool {
        self.grad_err <= GRAD_TOL
    }

    pub fn hess_ok(&self) -> bool {
        self.hess_err.is_none_or(|e| e <= HESS_TOL) && self.taylor_slope.is_none_or(|s| s >= TAYLOR_SLOPE)
    }

    pub fn passed(&self) -> bool {
        self.grad_ok() && self.hess_ok()
    }
}

/// Inner tolerances tight enough for differences at `h = 1e-6`.
pub fn tight_params() -> SolverParams {
    SolverParams {
        cg_tol: 1e-14,
        cg_max_iter: 20_000,
        nnls_tol: 1e-14,
        nnls_max_iter: 20_000,
        alternation_max_rounds: 2_000,
        alternation_tol: 1e-13,
    }
}

fn g_at(p: &Problem, u: &Factors, params: &SolverParams) -> Result<f64> {
    let sol = solve_inner(p, u, params, None)?;
    Ok(eval_g(p, u, &sol)?.value)
}

fn grad_at(p: &Problem, u: &Factors, params: &SolverParams) -> Result<Factors> {
    let sol = solve_inner(p, u, params, None)?;
    euclidean_grad(p, u, &sol)
}

/// Least-squares slope of `log err` against `log h`; zero errors are skipped.
fn loglog_slope(hs: &[f64], errs: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = hs.iter().zip(errs).filter(|(_, e)| **e > 0.0).map(|(h, e)| (h.ln(), e.ln())).collect();
    if pts.len() < 2 {
        return f64::INFINITY;
    }
    let n = pts.len() as f64;
    let xm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
    pts.iter().map(|(x, y)| (x - xm) * (y - ym)).sum::<f64>() / pts.iter().map(|(x, _)| (x - xm).powi(2)).sum::<f64>()
}

/// Runs `trials` seeded (point, tangent) pairs.
pub fn check_derivatives(problem: &Problem, seed: u64, trials: usize) -> Result<DerivReport> {
    let params = tight_params();
    let m = SphereProductManifold::new(problem.factor_shapes())?;
    let smooth = *problem.constraint() != ConstraintKind::Nonnegative;
    let mut report = DerivReport {
        trials,
        grad_err: 0.0,
        hess_err: smooth.then_some(0.0),
        taylor_slope: smooth.then_some(f64::INFINITY),
    };
    for t in 0..trials as u64 {
        let u = m.random_point(seed.wrapping_add(2 * t));
        let v = m.random_tangent(&u, seed.wrapping_add(2 * t + 1));

        let h = 1e-6;
        let fd = (g_at(problem, &m.retract(&u, &v.scaled(h))?, &params)? - g_at(problem, &m.retract(&u, &v.scaled(-h))?, &params)?)
            / (2.0 * h);
        let sol = solve_inner(problem, &u, &params, None)?;
        let egrad = euclidean_grad(problem, &u, &sol)?;
        let an = egrad.inner(&v);
        report.grad_err = report.grad_err.max((fd - an).abs() / an.abs().max(1.0));
        if !smooth {
            continue;
        }

        let h = 1e-5;
        let fd = grad_at(problem, &u.plus(h, &v), &params)?
            .plus(-1.0, &grad_at(problem, &u.plus(-h, &v), &params)?)
            .scaled(0.5 / h);
        let dsol = solve_directional(problem, &u, &v, &sol, &params)?;
        let eh = euclidean_hess_vec(problem, &u, &v, &sol, &dsol)?;
        let err = fd.plus(-1.0, &eh).norm() / eh.norm().max(1.0);
        report.hess_err = report.hess_err.map(|e| e.max(err));

        let g0 = eval_g(problem, &u, &sol)?.value;
        let slope = m.riemannian_grad(&u, &egrad).inner(&v);
        let curv = m.riemannian_hess_vec(&u, &v, &egrad, &eh).inner(&v);
        let hs = [2e-2, 1e-2, 5e-3, 2.5e-3];
        let mut errs = Vec::with_capacity(hs.len());
        for &h in &hs {
            let g = g_at(problem, &m.retract(&u, &v.scaled(h))?, &params)?;
            errs.push((g - g0 - h * slope - 0.5 * h * h * curv).abs());
        }
        // A remainder already at rounding level carries no slope information.
        let floor = 1e-12 * (1.0 + g0.abs());
        let order = if errs.iter().all(|&e| e <= floor) { f64::INFINITY } else { loglog_slope(&hs, &errs) };
        report.taylor_slope = report.taylor_slope.map(|s| s.min(order));
    }
    Ok(report)
}
