use nalgebra::DMatrix;

/// A tuple `(U_1, ..., U_K)` of real matrices.
///
/// The same container holds manifold points, tangent vectors and Euclidean
/// gradients; the aliases below name the role.
#[derive(Clone, Debug, PartialEq)]
pub struct Factors {
    mats: Vec<DMatrix<f64>>,
}

/// A point on the product of unit-Frobenius spheres.
pub type FactorPoint = Factors;
/// A gradient or Hessian-vector product, shaped like the factors.
pub type GradientTuple = Factors;
/// A tangent vector at a [`FactorPoint`].
pub type TangentVector = Factors;

impl Factors {
    pub fn new(mats: Vec<DMatrix<f64>>) -> Self {
        Self { mats }
    }

    pub fn zeros(shapes: &[(usize, usize)]) -> Self {
        Self {
            mats: shapes.iter().map(|&(n, r)| DMatrix::zeros(n, r)).collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.shapes())
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.mats.iter().map(|m| (m.nrows(), m.ncols())).collect()
    }

    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    pub fn get(&self, k: usize) -> &DMatrix<f64> {
        &self.mats[k]
    }

    pub fn get_mut(&mut self, k: usize) -> &mut DMatrix<f64> {
        &mut self.mats[k]
    }

    pub fn iter(&self) -> impl Iterator<Item = &DMatrix<f64>> {
        self.mats.iter()
    }

    pub fn into_inner(self) -> Vec<DMatrix<f64>> {
        self.mats
    }

    /// Product (trace) inner product.
    pub fn inner(&self, other: &Factors) -> f64 {
        self.mats.iter().zip(&other.mats).map(|(a, b)| a.dot(b)).sum()
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn scale(&mut self, alpha: f64) {
        self.mats.iter_mut().for_each(|m| *m *= alpha);
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.scale(alpha);
        out
    }

    /// `self += alpha * x`.
    pub fn axpy(&mut self, alpha: f64, x: &Factors) {
        for (m, xm) in self.mats.iter_mut().zip(&x.mats) {
            *m += xm * alpha;
        }
    }

    /// `self + alpha * x`.
    pub fn plus(&self, alpha: f64, x: &Factors) -> Self {
        let mut out = self.clone();
        out.axpy(alpha, x);
        out
    }

    pub fn transposes(&self) -> Vec<DMatrix<f64>> {
        self.mats.iter().map(|m| m.transpose()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.mats.iter().all(|m| m.iter().all(|v| v.is_finite()))
    }
}
