//! Product of unit Frobenius spheres `{U_k : ||U_k||_F = 1}` with the
//! embedded trace metric.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::factors::{FactorPoint, Factors, GradientTuple, TangentVector};

#[derive(Clone, Debug, PartialEq)]
pub struct SphereProductManifold {
    shapes: Vec<(usize, usize)>,
}

fn gaussian(n: usize, r: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, r, |_, _| rng.sample::<f64, _>(StandardNormal))
}

impl SphereProductManifold {
    pub fn new(shapes: Vec<(usize, usize)>) -> Result<Self> {
        if shapes.is_empty() {
            return Err(Error::InvalidParameter("manifold needs at least one factor".into()));
        }
        if let Some(&(n, r)) = shapes.iter().find(|&&(n, r)| n == 0 || r == 0 || r > n) {
            return Err(Error::InvalidParameter(format!("factor shape {n}x{r} needs 1 <= r <= n")));
        }
        Ok(Self { shapes })
    }

    pub fn shapes(&self) -> &[(usize, usize)] {
        &self.shapes
    }

    pub fn order(&self) -> usize {
        self.shapes.len()
    }

    /// Dimension of the manifold, `sum_k (n_k r_k - 1)`.
    pub fn dim(&self) -> usize {
        self.shapes.iter().map(|(n, r)| n * r - 1).sum()
    }

    fn check(&self, x: &Factors) -> Result<()> {
        if x.shapes() != self.shapes {
            return Err(Error::DimensionMismatch(format!(
                "tuple shapes {:?} differ from manifold shapes {:?}",
                x.shapes(),
                self.shapes
            )));
        }
        Ok(())
    }

    /// `U_k = Q_k / sqrt(r_k)` with `Q_k` the orthonormal factor of a seeded Gaussian matrix.
    pub fn random_point(&self, seed: u64) -> FactorPoint {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Factors::new(
            self.shapes
                .iter()
                .map(|&(n, r)| {
                    let q = gaussian(n, r, &mut rng).qr().q();
                    let norm = q.norm();
                    q / norm
                })
                .collect(),
        )
    }

    /// A seeded tangent vector at `u` with unit norm.
    pub fn random_tangent(&self, u: &FactorPoint, seed: u64) -> TangentVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ambient = Factors::new(self.shapes.iter().map(|&(n, r)| gaussian(n, r, &mut rng)).collect());
        let mut v = self.tangent_project(u, &ambient);
        let n = v.norm();
        if n > 0.0 {
            v.scale(1.0 / n);
        }
        v
    }

    /// Largest deviation `| ||U_k||_F - 1 |`.
    pub fn feasibility(&self, u: &FactorPoint) -> f64 {
        u.iter().map(|m| (m.norm() - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Largest `|<U_k, V_k>|`.
    pub fn tangency(&self, u: &FactorPoint, v: &TangentVector) -> f64 {
        u.iter().zip(v.iter()).map(|(a, b)| a.dot(b).abs()).fold(0.0, f64::max)
    }

    /// `V_k - <U_k, V_k> U_k` per mode.
    pub fn tangent_project(&self, u: &FactorPoint, v: &Factors) -> TangentVector {
        Factors::new(u.iter().zip(v.iter()).map(|(uk, vk)| vk - uk * uk.dot(vk)).collect())
    }

    /// `(U_k + xi_k) / ||U_k + xi_k||_F` per mode.
    pub fn retract(&self, u: &FactorPoint, xi: &TangentVector) -> Result<FactorPoint> {
        self.check(u)?;
        self.check(xi)?;
        let mut out = Vec::with_capacity(u.len());
        for (k, (uk, xk)) in u.iter().zip(xi.iter()).enumerate() {
            let radial = uk.dot(xk);
            if radial.abs() > 1e-8 * (1.0 + xk.norm()) {
                return Err(Error::InvalidParameter(format!(
                    "retraction direction is not tangent in mode {k} (<U, xi> = {radial:e})"
                )));
            }
            let p = uk + xk;
            let n = p.norm();
            if !(n > 0.0 && n.is_finite()) {
                return Err(Error::InvalidParameter(format!("retraction hits a zero factor in mode {k}")));
            }
            out.push(p / n);
        }
        Ok(Factors::new(out))
    }

    pub fn riemannian_grad(&self, u: &FactorPoint, egrad: &GradientTuple) -> TangentVector {
        self.tangent_project(u, egrad)
    }

    /// `P_U(D grad[V]) - <U_k, grad_k> V_k` per mode.
    pub fn riemannian_hess_vec(
        &self,
        u: &FactorPoint,
        v: &TangentVector,
        egrad: &GradientTuple,
        ehess: &GradientTuple,
    ) -> TangentVector {
        let mut out = self.tangent_project(u, ehess);
        for (k, (uk, gk)) in u.iter().zip(egrad.iter()).enumerate() {
            let c = uk.dot(gk);
            *out.get_mut(k) -= v.get(k) * c;
        }
        out
    }

    /// Vector transport by projection onto the tangent space at `to`.
    pub fn transport(&self, to: &FactorPoint, v: &TangentVector) -> TangentVector {
        self.tangent_project(to, v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifold() -> SphereProductManifold {
        SphereProductManifold::new(vec![(4, 2), (3, 3), (5, 1)]).unwrap()
    }

    #[test]
    fn random_point_is_feasible_and_seeded() {
        let m = manifold();
        let u = m.random_point(7);
        assert!(m.feasibility(&u) < 1e-14);
        assert_eq!(u, m.random_point(7));
        assert_ne!(u, m.random_point(8));
        // columns orthogonal with equal norms
        let g = u.get(0).transpose() * u.get(0);
        assert!((g - DMatrix::identity(2, 2) * 0.5).norm() < 1e-14);
    }

    #[test]
    fn projecting_the_point_gives_zero() {
        let m = manifold();
        let u = m.random_point(1);
        assert!(m.tangent_project(&u, &u).norm() < 1e-15);
    }

    #[test]
    fn projection_is_idempotent_and_orthogonal() {
        let m = manifold();
        let u = m.random_point(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = Factors::new(m.shapes().iter().map(|&(n, r)| gaussian(n, r, &mut rng)).collect());
        let p = m.tangent_project(&u, &v);
        assert!(m.tangency(&u, &p) < 1e-14);
        let pp = m.tangent_project(&u, &p);
        assert!((pp.plus(-1.0, &p)).norm() < 1e-15);
    }

    #[test]
    fn retract_zero_is_identity() {
        let m = manifold();
        let u = m.random_point(4);
        let r = m.retract(&u, &u.zeros_like()).unwrap();
        assert!(r.plus(-1.0, &u).norm() < 1e-15);
    }

    #[test]
    fn retract_rejects_radial_direction() {
        let m = manifold();
        let u = m.random_point(5);
        assert!(m.retract(&u, &u.scaled(-1.0)).is_err());
        assert!(m.retract(&u, &Factors::zeros(&[(2, 2)])).is_err());
    }

    #[test]
    fn retraction_is_second_order_close_to_the_line() {
        let m = manifold();
        let u = m.random_point(6);
        let v = m.random_tangent(&u, 9);
        let hs = [1e-2, 1e-3, 1e-4, 1e-5];
        let errs: Vec<f64> = hs
            .iter()
            .map(|&h| m.retract(&u, &v.scaled(h)).unwrap().plus(-1.0, &u.plus(h, &v)).norm())
            .collect();
        let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
        let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
        let xm = xs.iter().sum::<f64>() / 4.0;
        let ym = ys.iter().sum::<f64>() / 4.0;
        let slope = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum::<f64>()
            / xs.iter().map(|x| (x - xm).powi(2)).sum::<f64>();
        assert!(slope >= 1.9, "slope {slope}");
    }

    #[test]
    fn riemannian_hessian_of_zero_direction_is_zero() {
        let m = manifold();
        let u = m.random_point(10);
        let g = m.random_tangent(&u, 11).plus(0.3, &u);
        let h = m.riemannian_hess_vec(&u, &u.zeros_like(), &g, &u.zeros_like());
        assert_eq!(h.norm(), 0.0);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(SphereProductManifold::new(vec![]).is_err());
        assert!(SphereProductManifold::new(vec![(2, 3)]).is_err());
        assert!(SphereProductManifold::new(vec![(2, 0)]).is_err());
    }
}
