mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use stlt_core::constraint::{hankel_adjoint, hankel_dims, hankelize};
use stlt_core::operator::SparseUnfolding;
use stlt_core::{
    duality_gap, solve_inner, ConstraintKind, DenseTensor, Factors, SolverParams, SphereProductManifold, Support,
};

fn tensor(dims: Vec<usize>, salt: u64) -> DenseTensor {
    let mut state = salt.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    DenseTensor::from_fn(&dims, |_| {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    })
    .unwrap()
}

fn matrix(rows: usize, cols: usize, salt: u64) -> DMatrix<f64> {
    let t = tensor(vec![rows, cols], salt);
    DMatrix::from_column_slice(rows, cols, t.as_slice())
}

fn dims_strategy() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..6, 1..=4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mode_product_adjoint(dims in dims_strategy(), rows in 1usize..5, salt in any::<u64>()) {
        let x = tensor(dims.clone(), salt);
        for k in 0..dims.len() {
            let u = matrix(rows, dims[k], salt ^ 1);
            let mut out_dims = dims.clone();
            out_dims[k] = rows;
            let y = tensor(out_dims, salt ^ 2);
            let lhs = x.mode_product(&u, k).unwrap().inner(&y).unwrap();
            let rhs = x.inner(&y.mode_product(&u.transpose(), k).unwrap()).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs().max(rhs.abs())));
        }
    }

    #[test]
    fn hankel_adjoint_identity(dims in prop::collection::vec(1usize..7, 1..=3), salt in any::<u64>(), pick in any::<u64>()) {
        let tau: Vec<usize> = dims.iter().enumerate().map(|(i, &n)| 1 + ((pick >> (8 * i)) as usize) % n).collect();
        let w = tensor(dims.clone(), salt);
        let s = tensor(hankel_dims(&dims, &tau), salt ^ 3);
        let lhs = hankelize(&w, &tau).unwrap().inner(&s).unwrap();
        let rhs = w.inner(&hankel_adjoint(&s, &tau, &dims).unwrap()).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs().max(rhs.abs())));
    }

    #[test]
    fn sparse_unfolding_pair_is_adjoint(dims in dims_strategy(), rows in 1usize..4, salt in any::<u64>(), keep in 0.1f64..1.0) {
        let full = Support::full(&dims).unwrap();
        let indices: Vec<Vec<usize>> = full
            .iter()
            .enumerate()
            .filter(|(e, _)| ((*e as u64).wrapping_mul(2654435761) ^ salt) % 1000 < (keep * 1000.0) as u64)
            .map(|(_, i)| i.to_vec())
            .collect();
        prop_assume!(!indices.is_empty());
        let support = Support::new(&dims, indices).unwrap();
        let x: Vec<f64> = tensor(vec![support.len()], salt ^ 5).into_vec();
        for k in 0..dims.len() {
            let plan = SparseUnfolding::new(&support, k);
            let ut = matrix(rows, dims[k], salt ^ 7);
            let b = matrix(rows, plan.n_cols(), salt ^ 11);
            let lhs = plan.project(&ut, &x).dot(&b);
            let mut expanded = vec![0.0; support.len()];
            plan.expand_into(&ut, &b, 1.0, &mut expanded);
            let rhs: f64 = x.iter().zip(&expanded).map(|(a, c)| a * c).sum();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn tangent_projection_and_retraction(shapes in prop::collection::vec((1usize..6).prop_flat_map(|n| (Just(n), 1..=n.min(3))), 1..=3), seed in any::<u64>(), scale in 0.0f64..3.0) {
        let m = SphereProductManifold::new(shapes.clone()).unwrap();
        let u = m.random_point(seed);
        prop_assert!(m.feasibility(&u) <= 1e-12);
        let raw = Factors::new(shapes.iter().enumerate().map(|(k, &(r, c))| matrix(r, c, seed ^ k as u64)).collect());
        let v = m.tangent_project(&u, &raw);
        prop_assert!(m.tangency(&u, &v) <= 1e-12 * (1.0 + raw.norm()));
        let again = m.tangent_project(&u, &v);
        prop_assert!(again.plus(-1.0, &v).norm() <= 1e-12 * (1.0 + v.norm()));
        let moved = m.retract(&u, &v.scaled(scale)).unwrap();
        prop_assert!(m.feasibility(&moved) <= 1e-12);
    }

    #[test]
    fn gap_is_nonnegative(seed in 0u64..500, nonneg in any::<bool>(), lambda in 0.05f64..5.0) {
        let kind = if nonneg { ConstraintKind::Nonnegative } else { ConstraintKind::None };
        let p = common::problem(kind, &[4, 3, 3], &[2, 2, 2], 0.5, lambda, seed);
        let u = SphereProductManifold::new(p.factor_shapes()).unwrap().random_point(seed + 1);
        let sol = solve_inner(&p, &u, &SolverParams::default(), None).unwrap();
        let report = duality_gap(&p, &u, &sol).unwrap();
        let g = stlt_core::eval_g(&p, &u, &sol).unwrap().value;
        prop_assert!(report.gap >= -1e-8 * (1.0 + g.abs()), "gap {} at g {}", report.gap, g);
        if nonneg {
            let s = sol.s_values();
            prop_assert!(s.iter().all(|&v| v >= 0.0));
        }
    }
}
