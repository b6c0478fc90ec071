//! The dual objective `g(U)`, its Euclidean gradient and Hessian-vector
//! product, the duality-gap certificate, and primal recovery.
//!
//! With `X = Z + A*(s)` (for Hankel, the lifted `S` unfolded along mode `2k`):
//!
//! * `grad_k g = -lambda_k X_k X_k^T U_k`
//! * `D grad_k g [V] = -lambda_k (X_k X_k^T V_k + 2 sym(X'_k X_k^T) U_k)`
//! * `Delta = sum_k lambda_k/2 (sigma_max(X_k)^2 - ||U_k^T X_k||^2)`
//!
//! The gradient treats the inner maximizer as fixed (Danskin).

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::constraint::{hankel_adjoint, hankel_multiplicity, hankelize, ConstraintKind};
use crate::error::{Error, Result};
use crate::factors::{Factors, GradientTuple};
use crate::inner::{grid_to_dense, DirectionalSolution, InnerSolution};
use crate::operator::SparseUnfolding;
use crate::problem::{Problem, Structure};
use crate::tensor::{project_omega, DenseTensor};

/// `g(U)` together with whether the inner solve behind it converged.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualValue {
    pub value: f64,
    pub inner_converged: bool,
}

/// `<Z, Y> - ||Z||^2/(4C) - sum_k lambda_k/2 ||U_k^T (Z_k + A*(s)_k)||^2` at the inner solution.
pub fn eval_g(problem: &Problem, u: &Factors, sol: &InnerSolution) -> Result<DualValue> {
    problem.check_factors(u)?;
    let uts = u.transposes();
    let z = sol.z_values();
    let y = problem.y();
    let energy = problem
        .regularized_layout()
        .regularizer_energy(&uts, problem.lambdas(), sol.combined());
    let value = z.iter().zip(y).map(|(a, b)| a * b).sum::<f64>()
        - z.iter().map(|v| v * v).sum::<f64>() / (4.0 * problem.cost())
        - 0.5 * energy;
    Ok(DualValue {
        value,
        inner_converged: sol.converged,
    })
}

/// Euclidean gradient `-(lambda_1 P_1, ..., lambda_K P_K)` with `P_k = X_k X_k^T U_k`.
pub fn euclidean_grad(problem: &Problem, u: &Factors, sol: &InnerSolution) -> Result<GradientTuple> {
    problem.check_factors(u)?;
    let layout = problem.regularized_layout();
    let x = sol.combined();
    let mats = u
        .iter()
        .zip(layout.plans())
        .zip(problem.lambdas())
        .map(|((uk, plan), &lam)| {
            if lam == 0.0 {
                return DMatrix::zeros(uk.nrows(), uk.ncols());
            }
            let b = plan.project(&uk.transpose(), x);
            plan.times_transposed(x, &b) * (-lam)
        })
        .collect();
    Ok(Factors::new(mats))
}

/// Directional derivative of the Euclidean gradient along `v`, given the
/// linearized inner solution `dsol` computed at `(u, v)`.
pub fn euclidean_hess_vec(
    problem: &Problem,
    u: &Factors,
    v: &Factors,
    sol: &InnerSolution,
    dsol: &DirectionalSolution,
) -> Result<GradientTuple> {
    problem.check_factors(u)?;
    problem.check_factors(v)?;
    let layout = problem.regularized_layout();
    let x = sol.combined();
    let xdot = dsol.combined();
    let mats = u
        .iter()
        .zip(v.iter())
        .zip(layout.plans())
        .zip(problem.lambdas())
        .map(|(((uk, vk), plan), &lam)| {
            if lam == 0.0 {
                return DMatrix::zeros(uk.nrows(), uk.ncols());
            }
            let ut = uk.transpose();
            let bv = plan.project(&vk.transpose(), x);
            let bu = plan.project(&ut, x);
            let bdu = plan.project(&ut, xdot);
            let q = plan.times_transposed(x, &bv) + plan.times_transposed(xdot, &bu) + plan.times_transposed(x, &bdu);
            q * (-lam)
        })
        .collect();
    Ok(Factors::new(mats))
}

/// Settings of the power iteration behind `sigma_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerIterationParams {
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub restarts: usize,
}

impl Default for PowerIterationParams {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 1000,
            seed: 0x5eed,
            restarts: 3,
        }
    }
}

/// Per-mode and total duality gap at an inner solution.
#[derive(Clone, Debug, PartialEq)]
pub struct GapReport {
    /// Largest singular value of `Z_k + A_k`.
    pub sigma: Vec<f64>,
    /// `||U_k^T (Z_k + A_k)||^2`.
    pub captured: Vec<f64>,
    /// `lambda_k/2 (sigma_k^2 - captured_k)`.
    pub per_mode: Vec<f64>,
    pub gap: f64,
    /// `gap / (1 + |g(U)|)`.
    pub rel_gap: f64,
    pub power_iterations: usize,
    /// False when some power iteration had to fall back to random restarts
    /// without meeting its tolerance.
    pub confident: bool,
}

#[derive(Clone, Copy, Debug)]
struct TopEigen {
    value: f64,
    iterations: usize,
    converged: bool,
}

fn gram_apply(plan: &SparseUnfolding, x: &[f64], v: &[f64]) -> Vec<f64> {
    plan.times_vec(x, &plan.transpose_times_vec(x, v))
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|a| *a /= n);
    }
    n
}

fn power_from(plan: &SparseUnfolding, x: &[f64], mut v: Vec<f64>, params: &PowerIterationParams) -> TopEigen {
    if normalize(&mut v) == 0.0 {
        return TopEigen {
            value: 0.0,
            iterations: 0,
            converged: false,
        };
    }
    let mut w = gram_apply(plan, x, &v);
    let mut mu: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
    for it in 1..=params.max_iter {
        if normalize(&mut w) == 0.0 {
            return TopEigen {
                value: 0.0,
                iterations: it,
                converged: true,
            };
        }
        v = w;
        w = gram_apply(plan, x, &v);
        let next: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        let done = (next - mu).abs() <= params.tol * next.abs().max(f64::MIN_POSITIVE);
        mu = next.max(mu);
        if done {
            return TopEigen {
                value: mu,
                iterations: it,
                converged: true,
            };
        }
    }
    TopEigen {
        value: mu,
        iterations: params.max_iter,
        converged: false,
    }
}

/// Largest eigenvalue of `X_k X_k^T` by power iteration.
///
/// Two starts are run: the top Ritz vector of `span(U_k)`, which makes the
/// estimate at least `||U_k^T X_k||^2` for unit-Frobenius `U_k`, and a seeded
/// Gaussian vector. The larger Rayleigh quotient wins.
fn top_eigenvalue(plan: &SparseUnfolding, x: &[f64], uk: &DMatrix<f64>, params: &PowerIterationParams, mode: usize) -> TopEigen {
    let n = plan.n_rows();
    let q = uk.clone().qr().q();
    let b = plan.project(&q.transpose(), x);
    let aq = plan.times_transposed(x, &b);
    let t = q.transpose() * aq;
    let t = (&t + t.transpose()) * 0.5;
    let eig = t.symmetric_eigen();
    let (imax, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &l)| if l > best.1 { (i, l) } else { best });
    let ritz: DVector<f64> = &q * eig.eigenvectors.column(imax);
    let mut best = power_from(plan, x, ritz.as_slice().to_vec(), params);

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ (mode as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let random_start = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect()
    };
    let seeded = power_from(plan, x, random_start(&mut rng), params);
    let mut iterations = best.iterations + seeded.iterations;
    let mut converged = best.converged || seeded.converged;
    if seeded.value > best.value {
        best = seeded;
    }
    let mut restarts = 0;
    while !converged && restarts < params.restarts {
        restarts += 1;
        let next = power_from(plan, x, random_start(&mut rng), params);
        iterations += next.iterations;
        converged = next.converged;
        if next.value > best.value {
            best = next;
        }
    }
    TopEigen {
        value: best.value,
        iterations,
        converged,
    }
}

/// Duality gap `Delta` with `sigma_k` from power iteration (default settings).
pub fn duality_gap(problem: &Problem, u: &Factors, sol: &InnerSolution) -> Result<GapReport> {
    duality_gap_with(problem, u, sol, &PowerIterationParams::default())
}

pub fn duality_gap_with(problem: &Problem, u: &Factors, sol: &InnerSolution, params: &PowerIterationParams) -> Result<GapReport> {
    problem.check_factors(u)?;
    let layout = problem.regularized_layout();
    let x = sol.combined();
    let mut report = GapReport {
        sigma: Vec::new(),
        captured: Vec::new(),
        per_mode: Vec::new(),
        gap: 0.0,
        rel_gap: 0.0,
        power_iterations: 0,
        confident: true,
    };
    for (k, ((uk, plan), &lam)) in u.iter().zip(layout.plans()).zip(problem.lambdas()).enumerate() {
        let captured = plan.project(&uk.transpose(), x).norm_squared();
        let top = top_eigenvalue(plan, x, uk, params, k);
        report.power_iterations += top.iterations;
        report.confident &= top.converged;
        let term = 0.5 * lam * (top.value - captured);
        report.sigma.push(top.value.max(0.0).sqrt());
        report.captured.push(captured);
        report.per_mode.push(term);
        report.gap += term;
    }
    let g = eval_g(problem, u, sol)?.value;
    report.rel_gap = report.gap / (1.0 + g.abs());
    Ok(report)
}

fn combined_dense(problem: &Problem, sol: &InnerSolution) -> DenseTensor {
    match problem.structure() {
        Structure::None => sol.z(problem).to_dense(),
        Structure::Nonnegative { grid, .. } => grid_to_dense(grid, sol.combined(), problem.dims()),
        Structure::Hankel { lift, .. } => lift.to_dense(sol.combined()),
    }
}

/// `W = sum_k lambda_k (Z + A*(s)) x_k (U_k U_k^T)`.
///
/// For Hankel the mode products act on modes `2k` of the lifted `S`; the sum
/// is mapped back by `H*` and divided entrywise by the duplication
/// multiplicities, i.e. each anti-diagonal block is averaged.
pub fn recover_primal(problem: &Problem, u: &Factors, sol: &InnerSolution) -> Result<DenseTensor> {
    Ok(recover_components(problem, u, sol)?.into_iter().fold(
        DenseTensor::zeros(problem.dims()).expect("valid dims"),
        |mut acc, c| {
            acc.axpy(1.0, &c).expect("same dims");
            acc
        },
    ))
}

/// The latent summands `W^(k) = lambda_k (Z + A*(s)) x_k (U_k U_k^T)` whose sum is [`recover_primal`].
pub fn recover_components(problem: &Problem, u: &Factors, sol: &InnerSolution) -> Result<Vec<DenseTensor>> {
    problem.check_factors(u)?;
    let x = combined_dense(problem, sol);
    let dims = problem.dims();
    let lifted_mode = |k: usize| match problem.constraint() {
        ConstraintKind::Hankel { .. } => 2 * k + 1,
        _ => k,
    };
    let mut out = Vec::with_capacity(u.len());
    for (k, (uk, &lam)) in u.iter().zip(problem.lambdas()).enumerate() {
        let m = lifted_mode(k);
        let mut part = x.mode_product(&uk.transpose(), m)?.mode_product(uk, m)?;
        part.scale(lam);
        let part = match problem.constraint() {
            ConstraintKind::Hankel { tau } => {
                let mut w = hankel_adjoint(&part, tau, dims)?;
                let mut idx = vec![0; dims.len()];
                for off in 0..w.len() {
                    crate::tensor::multi_index(dims, off, &mut idx);
                    w.as_mut_slice()[off] /= hankel_multiplicity(dims, tau, &idx) as f64;
                }
                w
            }
            _ => part,
        };
        out.push(part);
    }
    Ok(out)
}

/// Minimizer `Theta = sqrt(X X^T) / tr(sqrt(X X^T))` of the variational
/// nuclear-norm identity and the attained value `<Theta^+ X, X>`, which equals
/// `||X||_*^2`.
pub fn nuclear_certificate(x: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    if x.iter().all(|v| *v == 0.0) {
        return Err(Error::InvalidParameter("certificate undefined for a zero matrix".into()));
    }
    let gram = x * x.transpose();
    let eig = gram.symmetric_eigen();
    // Gram eigenvalues carry absolute errors near eps * max; below that they are zero
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, l| m.max(*l));
    let cutoff = top * 16.0 * x.nrows().max(x.ncols()) as f64 * f64::EPSILON;
    let roots: Vec<f64> = eig.eigenvalues.iter().map(|&l| if l > cutoff { l.sqrt() } else { 0.0 }).collect();
    let trace: f64 = roots.iter().sum();
    let n = x.nrows();
    let mut theta = DMatrix::zeros(n, n);
    let mut pinv = DMatrix::zeros(n, n);
    for (i, &r) in roots.iter().enumerate() {
        if r > 0.0 {
            let v = eig.eigenvectors.column(i);
            let outer = v * v.transpose();
            theta += &outer * (r / trace);
            pinv += outer * (trace / r);
        }
    }
    let value = (&pinv * x).dot(x);
    Ok((theta, value))
}

/// Nuclear norm by dense SVD.
pub fn nuclear_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().singular_values().iter().sum()
}

/// Terms of the primal objective
/// `C ||W_Omega - Y_Omega||^2 + sum_k ||W^(k)_(k)||_*^2 / lambda_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct PrimalValue {
    pub data_fit: f64,
    /// `||W^(k)_(k)||_*^2 / lambda_k` per mode; empty without a decomposition.
    pub regularizer: Vec<f64>,
    pub total: f64,
}

/// Evaluates the primal objective at `w`. The regularizer is only added when
/// a latent decomposition `W^(1) + ... + W^(K)` is supplied; for the Hankel
/// kind it uses the mode-`2k` unfolding of `H(W^(k))`. Dense SVDs make this a
/// desk-scale diagnostic.
pub fn primal_objective(problem: &Problem, w: &DenseTensor, decomposition: Option<&[DenseTensor]>) -> Result<PrimalValue> {
    if w.dims() != problem.dims() {
        return Err(Error::DimensionMismatch(format!("W has dims {:?}, problem {:?}", w.dims(), problem.dims())));
    }
    let fitted = project_omega(w, problem.observed().support())?;
    let data_fit = problem.cost()
        * fitted
            .values()
            .iter()
            .zip(problem.y())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>();
    let mut regularizer = Vec::new();
    if let Some(parts) = decomposition {
        if parts.len() != problem.order() {
            return Err(Error::DimensionMismatch(format!(
                "decomposition has {} parts for an order-{} tensor",
                parts.len(),
                problem.order()
            )));
        }
        for (k, (part, &lam)) in parts.iter().zip(problem.lambdas()).enumerate() {
            if part.dims() != problem.dims() {
                return Err(Error::DimensionMismatch(format!("component {k} has dims {:?}", part.dims())));
            }
            let unfolded = match problem.constraint() {
                ConstraintKind::Hankel { tau } => hankelize(part, tau)?.unfold(2 * k + 1)?,
                _ => part.unfold(k)?,
            };
            let nn = nuclear_norm(&unfolded);
            regularizer.push(if nn == 0.0 { 0.0 } else { nn * nn / lam });
        }
    }
    let total = data_fit + regularizer.iter().sum::<f64>();
    Ok(PrimalValue {
        data_fit,
        regularizer,
        total,
    })
}
