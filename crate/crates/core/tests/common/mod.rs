#![allow(dead_code)]

use stlt_core::{
    generate_synthetic, ConstraintKind, Problem, ProblemSpec, SolverParams, SparseTensor, SyntheticKind,
};

pub fn problem(kind: ConstraintKind, dims: &[usize], ranks: &[usize], fraction: f64, lambda: f64, seed: u64) -> Problem {
    let synth = match kind {
        ConstraintKind::Hankel { .. } => SyntheticKind::Exponential,
        ConstraintKind::Nonnegative => SyntheticKind::Nonnegative,
        ConstraintKind::None => SyntheticKind::Gaussian,
    };
    let truth_ranks = vec![2; dims.len()];
    let s = generate_synthetic(synth, dims, &truth_ranks, fraction, seed).unwrap();
    let lambdas = vec![lambda / dims.len() as f64; dims.len()];
    Problem::new(ProblemSpec::new(s.observed, 1.0, lambdas, ranks.to_vec(), kind).unwrap()).unwrap()
}

pub fn from_observed(observed: SparseTensor, kind: ConstraintKind, ranks: &[usize], cost: f64, lambdas: Vec<f64>) -> Problem {
    Problem::new(ProblemSpec::new(observed, cost, lambdas, ranks.to_vec(), kind).unwrap()).unwrap()
}

pub fn tight() -> SolverParams {
    SolverParams {
        cg_tol: 1e-14,
        cg_max_iter: 20_000,
        nnls_tol: 1e-14,
        nnls_max_iter: 20_000,
        alternation_max_rounds: 2_000,
        alternation_tol: 1e-13,
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Least-squares slope of log(err) against log(h).
pub fn loglog_slope(hs: &[f64], errs: &[f64]) -> f64 {
    let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum::<f64>() / xs.iter().map(|x| (x - xm).powi(2)).sum::<f64>()
}

use nalgebra::{DMatrix, DVector};
use stlt_core::{DenseTensor, Factors, Support};

/// Dense matrix of `x -> sum_k lambda_k fold(U_k U_k^T unfold_{modes[k]}(x))`
/// sampled on `indices` of a tensor with `dims`, built column by column.
pub fn dense_regularizer(dims: &[usize], indices: &[Vec<usize>], u: &Factors, lambdas: &[f64], modes: &[usize]) -> DMatrix<f64> {
    let n = indices.len();
    let mut out = DMatrix::zeros(n, n);
    for (j, idx) in indices.iter().enumerate() {
        let mut e = DenseTensor::zeros(dims).unwrap();
        e.set(idx, 1.0);
        let mut t = DenseTensor::zeros(dims).unwrap();
        for (k, &m) in modes.iter().enumerate() {
            let uk = u.get(k);
            let img = DenseTensor::fold(&(uk * (uk.transpose() * e.unfold(m).unwrap())), m, dims).unwrap();
            t.axpy(lambdas[k], &img).unwrap();
        }
        for (i, row) in indices.iter().enumerate() {
            out[(i, j)] = t.get(row);
        }
    }
    out
}

/// Maximum of `<b, v> - 1/2 <v, Q v>` over `v` with the trailing `n_bound`
/// coordinates nonnegative, by accelerated projected gradient with restarts.
pub fn projected_ascent(q: &DMatrix<f64>, b: &DVector<f64>, n_bound: usize, iterations: usize) -> f64 {
    let n = b.len();
    let free = n - n_bound;
    let step = 1.0 / q.symmetric_eigenvalues().max();
    let project = |v: &mut DVector<f64>| {
        for i in free..n {
            v[i] = v[i].max(0.0);
        }
    };
    let value = |v: &DVector<f64>| b.dot(v) - 0.5 * v.dot(&(q * v));
    let mut x = DVector::zeros(n);
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut best = value(&x);
    for _ in 0..iterations {
        let mut next = &y + (b - q * &y) * step;
        project(&mut next);
        let v = value(&next);
        if v < best {
            // restart momentum on non-monotone steps
            t = 1.0;
            y = x.clone();
            continue;
        }
        best = v;
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &next + (&next - &x) * ((t - 1.0) / t_next);
        x = next;
        t = t_next;
    }
    best
}

pub fn all_indices(dims: &[usize]) -> Vec<Vec<usize>> {
    Support::full(dims).unwrap().iter().map(|i| i.to_vec()).collect()
}

pub fn omega_indices(p: &Problem) -> Vec<Vec<usize>> {
    p.observed().support().iter().map(|i| i.to_vec()).collect()
}

pub fn none_oracle(p: &Problem, u: &Factors) -> (DVector<f64>, f64) {
    let idx = omega_indices(p);
    let modes: Vec<usize> = (0..p.order()).collect();
    let t = dense_regularizer(p.dims(), &idx, u, p.lambdas(), &modes);
    let a = t + DMatrix::identity(idx.len(), idx.len()) / (2.0 * p.cost());
    let y = DVector::from_column_slice(p.y());
    let z = a.clone().cholesky().expect("SPD").solve(&y);
    let value = y.dot(&z) - 0.5 * z.dot(&(&a * &z));
    (z, value)
}

/// Joint quadratic of the nonnegative inner problem in `v = (z, s)`.
pub fn nonneg_quadratic(p: &Problem, u: &Factors) -> (DMatrix<f64>, DVector<f64>) {
    let grid = all_indices(p.dims());
    let modes: Vec<usize> = (0..p.order()).collect();
    let t = dense_regularizer(p.dims(), &grid, u, p.lambdas(), &modes);
    let nz = p.omega_len();
    let ng = grid.len();
    // x = E z + s
    let mut e = DMatrix::zeros(ng, nz + ng);
    for (w, idx) in p.observed().support().iter().enumerate() {
        let g = grid.iter().position(|i| i.as_slice() == idx).unwrap();
        e[(g, w)] = 1.0;
    }
    for g in 0..ng {
        e[(g, nz + g)] = 1.0;
    }
    let mut q = e.transpose() * t * &e;
    for w in 0..nz {
        q[(w, w)] += 1.0 / (2.0 * p.cost());
    }
    let mut b = DVector::zeros(nz + ng);
    b.rows_mut(0, nz).copy_from(&DVector::from_column_slice(p.y()));
    (q, b)
}

pub fn hankel_oracle(p: &Problem, u: &Factors) -> f64 {
    let lift = p.hankel_lift().unwrap();
    let lifted_dims = lift.support().dims().to_vec();
    let idx: Vec<Vec<usize>> = lift.support().iter().map(|i| i.to_vec()).collect();
    let modes: Vec<usize> = (0..p.order()).map(|k| 2 * k + 1).collect();
    let t = dense_regularizer(&lifted_dims, &idx, u, p.lambdas(), &modes);
    let nz = p.omega_len();
    let ns = idx.len();
    let n = nz + ns;
    // KKT system of max <b, v> - 1/2 <v, Q v> s.t. z - H*(s) = 0
    let mut kkt = DMatrix::zeros(n + nz, n + nz);
    for w in 0..nz {
        kkt[(w, w)] = 1.0 / (2.0 * p.cost());
    }
    kkt.view_mut((nz, nz), (ns, ns)).copy_from(&t);
    for w in 0..nz {
        kkt[(n + w, w)] = 1.0;
        kkt[(w, n + w)] = 1.0;
    }
    for (j, &par) in lift.parent().iter().enumerate() {
        kkt[(n + par, nz + j)] = -1.0;
        kkt[(nz + j, n + par)] = -1.0;
    }
    let mut rhs = DVector::zeros(n + nz);
    rhs.rows_mut(0, nz).copy_from(&DVector::from_column_slice(p.y()));
    let sol = kkt.svd(true, true).solve(&rhs, 1e-12).unwrap();
    let z = sol.rows(0, nz);
    let s = sol.rows(nz, ns);
    DVector::from_column_slice(p.y()).dot(&z) - z.norm_squared() / (4.0 * p.cost()) - 0.5 * s.dot(&(&t * s))
}

