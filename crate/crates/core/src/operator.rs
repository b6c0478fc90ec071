//! Mode-k unfoldings of tensors living on a fixed sparse support.
//!
//! Every product the solvers need (`U^T X_k`, `P(fold_k(U U^T X_k))`,
//! `X_k X_k^T U`) is evaluated by iterating the support entries, so each
//! application costs `O(nnz * r)` and no `n_k x prod_{m != k} n_m` matrix is
//! ever formed. Columns of the unfolding that the support never touches are
//! dropped, which keeps the intermediate `r x cols` blocks bounded by `nnz`.

use nalgebra::DMatrix;

use crate::tensor::{Support, UnfoldIndexMap};

/// Row and compressed-column coordinates of a support under one unfolding.
#[derive(Clone, Debug)]
pub struct SparseUnfolding {
    rows: Vec<usize>,
    cols: Vec<usize>,
    n_rows: usize,
    n_cols: usize,
}

impl SparseUnfolding {
    /// Panics if `mode` is out of range for the support.
    pub fn new(support: &Support, mode: usize) -> Self {
        let map = UnfoldIndexMap::new(support.dims(), mode).expect("mode within support order");
        let mut rows = Vec::with_capacity(support.len());
        let mut raw = Vec::with_capacity(support.len());
        for idx in support.iter() {
            let (r, c) = map.row_col(idx);
            rows.push(r);
            raw.push(c);
        }
        let mut distinct = raw.clone();
        distinct.sort_unstable();
        distinct.dedup();
        let cols = raw
            .iter()
            .map(|c| distinct.binary_search(c).expect("column present"))
            .collect();
        Self {
            rows,
            cols,
            n_rows: map.n_rows(),
            n_cols: distinct.len(),
        }
    }

    pub fn nnz(&self) -> usize {
        self.rows.len()
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    /// Number of distinct unfolding columns touched by the support.
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    /// `U^T X_k` as an `r x n_cols` block, given `ut = U^T` (`r x n_rows`).
    pub fn project(&self, ut: &DMatrix<f64>, x: &[f64]) -> DMatrix<f64> {
        debug_assert_eq!(ut.ncols(), self.n_rows);
        debug_assert_eq!(x.len(), self.nnz());
        let r = ut.nrows();
        let mut b = DMatrix::zeros(r, self.n_cols);
        let us = ut.as_slice();
        let bs = b.as_mut_slice();
        for ((&row, &col), &v) in self.rows.iter().zip(&self.cols).zip(x) {
            if v == 0.0 {
                continue;
            }
            let u = &us[row * r..(row + 1) * r];
            let dst = &mut bs[col * r..(col + 1) * r];
            for (d, ui) in dst.iter_mut().zip(u) {
                *d += ui * v;
            }
        }
        b
    }

    /// `out_e += alpha * (U B)[row_e, col_e]` for every support entry.
    pub fn expand_into(&self, ut: &DMatrix<f64>, b: &DMatrix<f64>, alpha: f64, out: &mut [f64]) {
        let r = ut.nrows();
        debug_assert_eq!(b.nrows(), r);
        let us = ut.as_slice();
        let bs = b.as_slice();
        for ((&row, &col), o) in self.rows.iter().zip(&self.cols).zip(out.iter_mut()) {
            let u = &us[row * r..(row + 1) * r];
            let bc = &bs[col * r..(col + 1) * r];
            let dot: f64 = u.iter().zip(bc).map(|(a, b)| a * b).sum();
            *o += alpha * dot;
        }
    }

    /// `X_k B^T` (`n_rows x r`) for an `r x n_cols` block `B`.
    pub fn times_transposed(&self, x: &[f64], b: &DMatrix<f64>) -> DMatrix<f64> {
        let r = b.nrows();
        let mut acc = vec![0.0; r * self.n_rows];
        let bs = b.as_slice();
        for ((&row, &col), &v) in self.rows.iter().zip(&self.cols).zip(x) {
            if v == 0.0 {
                continue;
            }
            let bc = &bs[col * r..(col + 1) * r];
            let dst = &mut acc[row * r..(row + 1) * r];
            for (d, bi) in dst.iter_mut().zip(bc) {
                *d += v * bi;
            }
        }
        DMatrix::from_vec(r, self.n_rows, acc).transpose()
    }

    /// `X_k^T v` over the compressed columns.
    pub fn transpose_times_vec(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_cols];
        for ((&row, &col), &xv) in self.rows.iter().zip(&self.cols).zip(x) {
            out[col] += xv * v[row];
        }
        out
    }

    /// `X_k y` for `y` over the compressed columns.
    pub fn times_vec(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rows];
        for ((&row, &col), &xv) in self.rows.iter().zip(&self.cols).zip(x) {
            out[row] += xv * y[col];
        }
        out
    }

    /// Dense `n_rows x n_cols` matrix of the compressed unfolding.
    pub fn to_dense(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_rows, self.n_cols);
        for ((&row, &col), &v) in self.rows.iter().zip(&self.cols).zip(x) {
            m[(row, col)] += v;
        }
        m
    }
}

/// A support together with the unfoldings that carry the regularizer: factor
/// `k` acts on mode `modes[k]` of the support's tensor.
#[derive(Clone, Debug)]
pub struct RegularizedLayout {
    support: Support,
    plans: Vec<SparseUnfolding>,
}

impl RegularizedLayout {
    pub fn new(support: Support, modes: &[usize]) -> Self {
        let plans = modes.iter().map(|&m| SparseUnfolding::new(&support, m)).collect();
        Self { support, plans }
    }

    pub fn support(&self) -> &Support {
        &self.support
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn plan(&self, k: usize) -> &SparseUnfolding {
        &self.plans[k]
    }

    pub fn plans(&self) -> &[SparseUnfolding] {
        &self.plans
    }

    /// `out += sum_k lambda_k P(fold_k(U_k U_k^T X_k))`, with `uts[k] = U_k^T`.
    pub fn apply_regularizer(&self, uts: &[DMatrix<f64>], lambdas: &[f64], x: &[f64], out: &mut [f64]) {
        for ((plan, ut), &lam) in self.plans.iter().zip(uts).zip(lambdas) {
            if lam == 0.0 {
                continue;
            }
            let b = plan.project(ut, x);
            plan.expand_into(ut, &b, lam, out);
        }
    }

    /// `out += sum_k lambda_k P(fold_k((V_k U_k^T + U_k V_k^T) X_k))`: the
    /// derivative of the regularizer operator along `V`.
    pub fn apply_regularizer_derivative(
        &self,
        uts: &[DMatrix<f64>],
        vts: &[DMatrix<f64>],
        lambdas: &[f64],
        x: &[f64],
        out: &mut [f64],
    ) {
        for (((plan, ut), vt), &lam) in self.plans.iter().zip(uts).zip(vts).zip(lambdas) {
            if lam == 0.0 {
                continue;
            }
            let bu = plan.project(ut, x);
            let bv = plan.project(vt, x);
            plan.expand_into(vt, &bu, lam, out);
            plan.expand_into(ut, &bv, lam, out);
        }
    }

    /// `sum_k lambda_k ||U_k^T X_k||^2`.
    pub fn regularizer_energy(&self, uts: &[DMatrix<f64>], lambdas: &[f64], x: &[f64]) -> f64 {
        self.plans
            .iter()
            .zip(uts)
            .zip(lambdas)
            .map(|((plan, ut), &lam)| {
                if lam == 0.0 {
                    0.0
                } else {
                    lam * plan.project(ut, x).norm_squared()
                }
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::DenseTensor;

    fn toy() -> (Support, Vec<f64>, DenseTensor) {
        let dims = [3, 4, 2];
        let support = Support::new(
            &dims,
            vec![vec![0, 0, 0], vec![2, 1, 0], vec![1, 3, 1], vec![0, 2, 1], vec![2, 2, 1], vec![1, 0, 0]],
        )
        .unwrap();
        let vals = vec![1.0, -2.0, 0.5, 3.0, -1.5, 2.0];
        let mut dense = DenseTensor::zeros(&dims).unwrap();
        for (idx, v) in support.iter().zip(&vals) {
            dense.set(idx, *v);
        }
        (support, vals, dense)
    }

    #[test]
    fn projections_match_dense_unfolding() {
        let (support, x, dense) = toy();
        for k in 0..3 {
            let plan = SparseUnfolding::new(&support, k);
            let full = dense.unfold(k).unwrap();
            let n = full.nrows();
            let u = DMatrix::from_fn(n, 2, |i, j| (i as f64 + 1.0) * 0.3 - j as f64 * 0.7);
            let ut = u.transpose();
            // energies agree because dropped columns are all zero
            let b = plan.project(&ut, &x);
            assert!((b.norm_squared() - (&ut * &full).norm_squared()).abs() < 1e-12);
            let g_sparse = plan.times_transposed(&x, &b);
            let g_dense = &full * full.transpose() * &u;
            assert!((g_sparse - g_dense).norm() < 1e-12);

            let mut out = vec![0.0; x.len()];
            plan.expand_into(&ut, &b, 1.0, &mut out);
            let proj = DenseTensor::fold(&(&u * &ut * &full), k, dense.dims()).unwrap();
            for (idx, o) in support.iter().zip(&out) {
                assert!((proj.get(idx) - o).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn vector_products_are_adjoint() {
        let (support, x, _) = toy();
        let plan = SparseUnfolding::new(&support, 1);
        let v = vec![0.3, -1.0, 2.0, 0.5];
        let y: Vec<f64> = (0..plan.n_cols()).map(|i| i as f64 - 1.5).collect();
        let lhs: f64 = plan.times_vec(&x, &y).iter().zip(&v).map(|(a, b)| a * b).sum();
        let rhs: f64 = plan.transpose_times_vec(&x, &v).iter().zip(&y).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
