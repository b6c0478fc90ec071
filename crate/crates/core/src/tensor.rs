//! Dense and coordinate-form tensors with the unfolding, folding, mode-product
//! and inner-product primitives.
//!
//! Dense tensors are stored column-major (first index fastest). The mode-k
//! unfolding places entry `(i_1, ..., i_K)` at row `i_k` and column
//! `sum_{m != k} i_m * J_m` with `J_m = prod_{l < m, l != k} n_l`, i.e. the
//! ordering of Kolda and Bader. All indices in this module are 0-based; the
//! text file formats in [`crate::io`] are 1-based.

use std::cmp::Ordering;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.is_empty() {
        return Err(Error::DimensionMismatch("tensor must have at least one mode".into()));
    }
    if dims.iter().any(|&n| n == 0) {
        return Err(Error::DimensionMismatch(format!("all dims must be >= 1, got {dims:?}")));
    }
    Ok(())
}

/// Column-major strides for `dims`.
pub fn strides(dims: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(dims.len());
    let mut acc = 1;
    for &n in dims {
        out.push(acc);
        acc *= n;
    }
    out
}

/// Column-major linear offset of a multi-index. No bounds checks.
#[inline]
pub fn linear_index(dims: &[usize], index: &[usize]) -> usize {
    let mut offset = 0;
    let mut stride = 1;
    for (&i, &n) in index.iter().zip(dims) {
        offset += i * stride;
        stride *= n;
    }
    offset
}

/// Inverse of [`linear_index`].
pub fn multi_index(dims: &[usize], mut offset: usize, out: &mut [usize]) {
    for (slot, &n) in out.iter_mut().zip(dims) {
        *slot = offset % n;
        offset /= n;
    }
}

/// A dense K-way array of `f64` in column-major layout.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        check_dims(dims)?;
        Ok(Self {
            dims: dims.to_vec(),
            data: vec![0.0; dims.iter().product()],
        })
    }

    /// Wraps column-major `data`; its length must equal the product of `dims`.
    pub fn from_vec(dims: &[usize], data: Vec<f64>) -> Result<Self> {
        check_dims(dims)?;
        let len: usize = dims.iter().product();
        if data.len() != len {
            return Err(Error::DimensionMismatch(format!(
                "expected {len} values for dims {dims:?}, got {}",
                data.len()
            )));
        }
        Ok(Self { dims: dims.to_vec(), data })
    }

    pub fn from_fn(dims: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let mut t = Self::zeros(dims)?;
        let mut idx = vec![0; dims.len()];
        for offset in 0..t.data.len() {
            multi_index(dims, offset, &mut idx);
            t.data[offset] = f(&idx);
        }
        Ok(t)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[linear_index(&self.dims, index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let offset = linear_index(&self.dims, index);
        self.data[offset] = value;
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Frobenius inner product with a tensor of the same shape.
    pub fn inner(&self, other: &DenseTensor) -> Result<f64> {
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch(format!(
                "inner product of {:?} and {:?}",
                self.dims, other.dims
            )));
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    /// Mode-k unfolding `W_k` with Kolda column ordering.
    pub fn unfold(&self, mode: usize) -> Result<DMatrix<f64>> {
        let (left, n, right) = split_dims(&self.dims, mode)?;
        let mut m = DMatrix::zeros(n, left * right);
        for b in 0..right {
            for i in 0..n {
                let src = &self.data[left * (i + n * b)..left * (i + n * b) + left];
                for (a, &v) in src.iter().enumerate() {
                    m[(i, a + left * b)] = v;
                }
            }
        }
        Ok(m)
    }

    /// Inverse of [`DenseTensor::unfold`].
    pub fn fold(matrix: &DMatrix<f64>, mode: usize, dims: &[usize]) -> Result<Self> {
        check_dims(dims)?;
        let (left, n, right) = split_dims(dims, mode)?;
        if matrix.nrows() != n || matrix.ncols() != left * right {
            return Err(Error::DimensionMismatch(format!(
                "cannot fold a {}x{} matrix along mode {mode} into {dims:?}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let mut t = Self::zeros(dims)?;
        for b in 0..right {
            for i in 0..n {
                let dst = &mut t.data[left * (i + n * b)..left * (i + n * b) + left];
                for (a, slot) in dst.iter_mut().enumerate() {
                    *slot = matrix[(i, a + left * b)];
                }
            }
        }
        Ok(t)
    }

    /// `self x_k U` for `U` of shape `m x n_k`.
    pub fn mode_product(&self, u: &DMatrix<f64>, mode: usize) -> Result<Self> {
        let (left, n, right) = split_dims(&self.dims, mode)?;
        if u.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "mode-{mode} product needs a matrix with {n} columns, got {}",
                u.ncols()
            )));
        }
        let m = u.nrows();
        let mut dims = self.dims.clone();
        dims[mode] = m;
        if m == 0 {
            return Err(Error::DimensionMismatch("mode product with an empty matrix".into()));
        }
        let mut out = vec![0.0; left * m * right];
        for b in 0..right {
            for i in 0..n {
                let src = &self.data[left * (i + n * b)..left * (i + n * b) + left];
                for j in 0..m {
                    let w = u[(j, i)];
                    if w == 0.0 {
                        continue;
                    }
                    let dst = &mut out[left * (j + m * b)..left * (j + m * b) + left];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += w * s;
                    }
                }
            }
        }
        Ok(Self { dims, data: out })
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn axpy(&mut self, alpha: f64, x: &DenseTensor) -> Result<()> {
        if self.dims != x.dims {
            return Err(Error::DimensionMismatch(format!("axpy of {:?} into {:?}", x.dims, self.dims)));
        }
        self.data.iter_mut().zip(&x.data).for_each(|(y, x)| *y += alpha * x);
        Ok(())
    }
}

/// `(prod of dims before mode, n_mode, prod of dims after mode)`.
pub(crate) fn split_dims(dims: &[usize], mode: usize) -> Result<(usize, usize, usize)> {
    if mode >= dims.len() {
        return Err(Error::ModeOutOfRange { mode, order: dims.len() });
    }
    let left = dims[..mode].iter().product();
    let right = dims[mode + 1..].iter().product();
    Ok((left, dims[mode], right))
}

/// Bijection between tensor multi-indices and `(row, column)` of the mode-k unfolding.
#[derive(Clone, Debug)]
pub struct UnfoldIndexMap {
    mode: usize,
    dims: Vec<usize>,
    col_strides: Vec<usize>,
}

impl UnfoldIndexMap {
    pub fn new(dims: &[usize], mode: usize) -> Result<Self> {
        check_dims(dims)?;
        if mode >= dims.len() {
            return Err(Error::ModeOutOfRange { mode, order: dims.len() });
        }
        let mut col_strides = vec![0; dims.len()];
        let mut acc = 1;
        for (m, &n) in dims.iter().enumerate() {
            if m != mode {
                col_strides[m] = acc;
                acc *= n;
            }
        }
        Ok(Self { mode, dims: dims.to_vec(), col_strides })
    }

    pub fn mode(&self) -> usize {
        self.mode
    }

    pub fn n_rows(&self) -> usize {
        self.dims[self.mode]
    }

    pub fn n_cols(&self) -> usize {
        self.dims.iter().product::<usize>() / self.dims[self.mode]
    }

    #[inline]
    pub fn row_col(&self, index: &[usize]) -> (usize, usize) {
        let col = index.iter().zip(&self.col_strides).map(|(i, s)| i * s).sum();
        (index[self.mode], col)
    }

    pub fn index(&self, row: usize, mut col: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims.len()];
        for (m, &n) in self.dims.iter().enumerate() {
            if m == self.mode {
                out[m] = row;
            } else {
                out[m] = col % n;
                col /= n;
            }
        }
        out
    }
}

/// A sorted, duplicate-free set of multi-indices (an observation pattern such as Omega).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Support {
    dims: Vec<usize>,
    coords: Vec<usize>,
}

fn lex_cmp(a: &[usize], b: &[usize]) -> Ordering {
    a.cmp(b)
}

impl Support {
    /// Builds a support from arbitrary-order indices; sorts them lexicographically
    /// and rejects duplicates or out-of-range entries.
    pub fn new(dims: &[usize], indices: Vec<Vec<usize>>) -> Result<Self> {
        check_dims(dims)?;
        let mut indices = indices;
        for idx in &indices {
            validate_index(dims, idx)?;
        }
        indices.sort_by(|a, b| lex_cmp(a, b));
        for w in indices.windows(2) {
            if w[0] == w[1] {
                return Err(Error::DuplicateIndex(w[0].clone()));
            }
        }
        Ok(Self {
            dims: dims.to_vec(),
            coords: indices.into_iter().flatten().collect(),
        })
    }

    pub fn empty(dims: &[usize]) -> Result<Self> {
        Self::new(dims, Vec::new())
    }

    /// Every index of the grid, in lexicographic order.
    pub fn full(dims: &[usize]) -> Result<Self> {
        check_dims(dims)?;
        let total: usize = dims.iter().product();
        let k = dims.len();
        let mut coords = Vec::with_capacity(total * k);
        let mut idx = vec![0usize; k];
        for _ in 0..total {
            coords.extend_from_slice(&idx);
            for m in (0..k).rev() {
                idx[m] += 1;
                if idx[m] < dims[m] {
                    break;
                }
                idx[m] = 0;
            }
        }
        Ok(Self { dims: dims.to_vec(), coords })
    }

    pub(crate) fn from_sorted_unchecked(dims: Vec<usize>, coords: Vec<usize>) -> Self {
        Self { dims, coords }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn index(&self, e: usize) -> &[usize] {
        let k = self.dims.len();
        &self.coords[e * k..(e + 1) * k]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> + '_ {
        self.coords.chunks_exact(self.dims.len())
    }

    pub fn coords(&self) -> &[usize] {
        &self.coords
    }

    /// Position of `index` in the support, by binary search.
    pub fn position(&self, index: &[usize]) -> Option<usize> {
        let k = self.dims.len();
        let n = self.len();
        let (mut lo, mut hi) = (0, n);
        while lo < hi {
            let mid = (lo + hi) / 2;
            match lex_cmp(&self.coords[mid * k..(mid + 1) * k], index) {
                Ordering::Less => lo = mid + 1,
                Ordering::Greater => hi = mid,
                Ordering::Equal => return Some(mid),
            }
        }
        None
    }

    pub fn contains(&self, index: &[usize]) -> bool {
        self.position(index).is_some()
    }

    /// Column-major offsets of every entry.
    pub fn linear_offsets(&self) -> Vec<usize> {
        self.iter().map(|idx| linear_index(&self.dims, idx)).collect()
    }
}

fn validate_index(dims: &[usize], index: &[usize]) -> Result<()> {
    if index.len() != dims.len() || index.iter().zip(dims).any(|(&i, &n)| i >= n) {
        return Err(Error::IndexOutOfRange { index: index.to_vec(), dims: dims.to_vec() });
    }
    Ok(())
}

/// A partially observed tensor in coordinate form: a [`Support`] and one value per entry.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseTensor {
    support: Support,
    values: Vec<f64>,
}

impl SparseTensor {
    pub fn new(dims: &[usize], entries: Vec<(Vec<usize>, f64)>) -> Result<Self> {
        check_dims(dims)?;
        let mut entries = entries;
        for (idx, _) in &entries {
            validate_index(dims, idx)?;
        }
        entries.sort_by(|a, b| lex_cmp(&a.0, &b.0));
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::DuplicateIndex(w[0].0.clone()));
            }
        }
        let mut coords = Vec::with_capacity(entries.len() * dims.len());
        let mut values = Vec::with_capacity(entries.len());
        for (idx, v) in entries {
            coords.extend(idx);
            values.push(v);
        }
        Ok(Self {
            support: Support::from_sorted_unchecked(dims.to_vec(), coords),
            values,
        })
    }

    /// Values aligned with `support` order.
    pub fn from_support(support: Support, values: Vec<f64>) -> Result<Self> {
        if values.len() != support.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a support of size {}",
                values.len(),
                support.len()
            )));
        }
        Ok(Self { support, values })
    }

    pub fn zeros(support: Support) -> Self {
        let n = support.len();
        Self { support, values: vec![0.0; n] }
    }

    pub fn dims(&self) -> &[usize] {
        self.support.dims()
    }

    pub fn support(&self) -> &Support {
        &self.support
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[usize], f64)> + '_ {
        self.support.iter().zip(self.values.iter().copied())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Zero-filled dense embedding.
    pub fn to_dense(&self) -> DenseTensor {
        let mut t = DenseTensor::zeros(self.dims()).expect("valid dims");
        for (idx, v) in self.iter() {
            t.set(idx, v);
        }
        t
    }

    /// Inner product with a dense tensor, summed over the sparse support.
    pub fn inner_dense(&self, dense: &DenseTensor) -> Result<f64> {
        if self.dims() != dense.dims() {
            return Err(Error::DimensionMismatch(format!(
                "inner product of {:?} and {:?}",
                self.dims(),
                dense.dims()
            )));
        }
        Ok(self.iter().map(|(idx, v)| v * dense.get(idx)).sum())
    }

    /// Inner product of two sparse tensors, summed over the intersection of supports.
    pub fn inner_sparse(&self, other: &SparseTensor) -> Result<f64> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch(format!(
                "inner product of {:?} and {:?}",
                self.dims(),
                other.dims()
            )));
        }
        let (mut a, mut b) = (0, 0);
        let mut acc = 0.0;
        while a < self.nnz() && b < other.nnz() {
            match lex_cmp(self.support.index(a), other.support.index(b)) {
                Ordering::Less => a += 1,
                Ordering::Greater => b += 1,
                Ordering::Equal => {
                    acc += self.values[a] * other.values[b];
                    a += 1;
                    b += 1;
                }
            }
        }
        Ok(acc)
    }
}

/// `W_Omega`: the entries of `dense` on `support`.
pub fn project_omega(dense: &DenseTensor, support: &Support) -> Result<SparseTensor> {
    if dense.dims() != support.dims() {
        return Err(Error::DimensionMismatch(format!(
            "support dims {:?} differ from tensor dims {:?}",
            support.dims(),
            dense.dims()
        )));
    }
    let values = support.iter().map(|idx| dense.get(idx)).collect();
    Ok(SparseTensor { support: support.clone(), values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq_tensor(dims: &[usize]) -> DenseTensor {
        let n: usize = dims.iter().product();
        DenseTensor::from_vec(dims, (1..=n).map(|v| v as f64).collect()).unwrap()
    }

    #[test]
    fn unfold_2x2x2_matches_enumerated_index_map() {
        let w = seq_tensor(&[2, 2, 2]);
        // brute force: place each entry via the explicit Kolda formula
        let dims = [2usize, 2, 2];
        let mut expect = DMatrix::zeros(2, 4);
        for i1 in 0..2 {
            for i2 in 0..2 {
                for i3 in 0..2 {
                    let col = i2 + 2 * i3;
                    expect[(i1, col)] = w.get(&[i1, i2, i3]);
                }
            }
        }
        assert_eq!(w.unfold(0).unwrap(), expect);
        let frozen = DMatrix::from_row_slice(2, 4, &[1.0, 3.0, 5.0, 7.0, 2.0, 4.0, 6.0, 8.0]);
        assert_eq!(w.unfold(0).unwrap(), frozen);
        assert_eq!(UnfoldIndexMap::new(&dims, 0).unwrap().n_cols(), 4);
    }

    #[test]
    fn single_entry_unfolds_to_corner() {
        let mut w = DenseTensor::zeros(&[3, 2, 4]).unwrap();
        w.set(&[0, 0, 0], 2.5);
        for k in 0..3 {
            let m = w.unfold(k).unwrap();
            assert_eq!(m[(0, 0)], 2.5);
            assert_eq!(m.iter().filter(|v| **v != 0.0).count(), 1);
        }
    }

    #[test]
    fn unfold_rejects_bad_mode() {
        let w = seq_tensor(&[2, 3]);
        assert!(matches!(w.unfold(2), Err(Error::ModeOutOfRange { .. })));
    }

    #[test]
    fn fold_rejects_shape_mismatch() {
        let m = DMatrix::zeros(2, 5);
        assert!(DenseTensor::fold(&m, 0, &[2, 2, 2]).is_err());
    }

    #[test]
    fn fold_of_zero_matrix_is_zero() {
        let t = DenseTensor::fold(&DMatrix::zeros(3, 20), 1, &[4, 3, 5]).unwrap();
        assert_eq!(t.norm(), 0.0);
    }

    #[test]
    fn index_map_is_a_bijection() {
        let dims = [3, 4, 2, 2];
        for k in 0..4 {
            let map = UnfoldIndexMap::new(&dims, k).unwrap();
            let mut seen = vec![false; 48];
            let mut idx = vec![0; 4];
            for off in 0..48 {
                multi_index(&dims, off, &mut idx);
                let (r, c) = map.row_col(&idx);
                assert!(r < map.n_rows() && c < map.n_cols());
                assert!(!seen[r + map.n_rows() * c]);
                seen[r + map.n_rows() * c] = true;
                assert_eq!(map.index(r, c), idx);
            }
        }
    }

    #[test]
    fn mode_product_identity_and_vector_case() {
        let w = seq_tensor(&[3, 4, 2]);
        assert_eq!(w.mode_product(&DMatrix::identity(4, 4), 1).unwrap(), w);

        let v = DenseTensor::from_vec(&[3], vec![1.0, -2.0, 0.5]).unwrap();
        let u = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 0.0, -1.0, 4.0]);
        let r = v.mode_product(&u, 0).unwrap();
        let mv = &u * nalgebra::DVector::from_vec(vec![1.0, -2.0, 0.5]);
        assert_eq!(r.as_slice(), mv.as_slice());
    }

    #[test]
    fn mode_product_matches_definitional_sum() {
        let w = DenseTensor::from_fn(&[3, 4, 2], |i| ((i[0] * 7 + i[1] * 3 + i[2] * 5) % 11) as f64 - 5.0).unwrap();
        let u = DMatrix::from_fn(5, 4, |j, i| ((j * 4 + i * 3) % 7) as f64 * 0.5 - 1.0);
        let r = w.mode_product(&u, 1).unwrap();
        assert_eq!(r.dims(), &[3, 5, 2]);
        for i1 in 0..3 {
            for j in 0..5 {
                for i3 in 0..2 {
                    let mut s = 0.0;
                    for i2 in 0..4 {
                        s += w.get(&[i1, i2, i3]) * u[(j, i2)];
                    }
                    assert!((r.get(&[i1, j, i3]) - s).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn support_sorts_and_rejects_duplicates() {
        let s = Support::new(&[3, 3], vec![vec![2, 0], vec![0, 1], vec![0, 0]]).unwrap();
        assert_eq!(s.index(0), &[0, 0]);
        assert_eq!(s.index(2), &[2, 0]);
        assert_eq!(s.position(&[0, 1]), Some(1));
        assert!(Support::new(&[3, 3], vec![vec![1, 1], vec![1, 1]]).is_err());
        assert!(Support::new(&[3, 3], vec![vec![3, 1]]).is_err());
    }

    #[test]
    fn project_omega_full_and_empty() {
        let w = seq_tensor(&[2, 3]);
        let full = project_omega(&w, &Support::full(&[2, 3]).unwrap()).unwrap();
        assert_eq!(full.to_dense(), w);
        let empty = project_omega(&w, &Support::empty(&[2, 3]).unwrap()).unwrap();
        assert_eq!(empty.nnz(), 0);
        assert!(project_omega(&w, &Support::full(&[3, 2]).unwrap()).is_err());
    }

    #[test]
    fn sparse_inner_products_agree_with_dense() {
        let w = seq_tensor(&[3, 3]);
        let a = SparseTensor::new(&[3, 3], vec![(vec![0, 0], 2.0), (vec![2, 1], -1.0), (vec![1, 2], 0.5)]).unwrap();
        let b = SparseTensor::new(&[3, 3], vec![(vec![2, 1], 4.0), (vec![1, 1], 3.0), (vec![1, 2], 2.0)]).unwrap();
        assert_eq!(a.inner_dense(&w).unwrap(), a.to_dense().inner(&w).unwrap());
        assert_eq!(a.inner_sparse(&b).unwrap(), a.to_dense().inner(&b.to_dense()).unwrap());
        assert_eq!(w.inner(&DenseTensor::zeros(&[3, 3]).unwrap()).unwrap(), 0.0);
        assert!((w.inner(&w).unwrap() - w.norm().powi(2)).abs() < 1e-12);
    }

    fn dims_strategy() -> impl Strategy<Value = Vec<usize>> {
        prop::collection::vec(1usize..5, 1..=4)
    }

    fn tensor_strategy() -> impl Strategy<Value = DenseTensor> {
        dims_strategy().prop_flat_map(|dims| {
            let n: usize = dims.iter().product();
            prop::collection::vec(-10.0f64..10.0, n)
                .prop_map(move |data| DenseTensor::from_vec(&dims, data).unwrap())
        })
    }

    proptest! {
        #[test]
        fn fold_inverts_unfold(w in tensor_strategy()) {
            for k in 0..w.order() {
                let m = w.unfold(k).unwrap();
                prop_assert_eq!(DenseTensor::fold(&m, k, w.dims()).unwrap(), w.clone());
            }
        }

        #[test]
        fn mode_product_unfolding_law(w in tensor_strategy(), rows in 1usize..4, seed in 0u64..1000) {
            for k in 0..w.order() {
                let n = w.dims()[k];
                let u = DMatrix::from_fn(rows, n, |i, j| (((i * 31 + j * 17) as u64 + seed) % 13) as f64 - 6.0);
                let lhs = w.mode_product(&u, k).unwrap().unfold(k).unwrap();
                let rhs = &u * w.unfold(k).unwrap();
                prop_assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + w.norm() * u.norm()));
            }
        }

        #[test]
        fn inner_matches_flattened_dot(w in tensor_strategy(), shift in -3.0f64..3.0) {
            let mut x = w.clone();
            x.as_mut_slice().iter_mut().enumerate().for_each(|(i, v)| *v = *v * 0.5 + shift * i as f64);
            let flat: f64 = w.as_slice().iter().zip(x.as_slice()).map(|(a, b)| a * b).sum();
            prop_assert!((w.inner(&x).unwrap() - flat).abs() <= 1e-12 * (1.0 + flat.abs()));
        }
    }
}
