//! Seeded problem fixtures shared by the benchmarks.

use stlt_core::{generate_synthetic, ConstraintKind, FactorPoint, Problem, ProblemSpec, SphereProductManifold, SyntheticKind};

/// A synthetic problem with the generator matching `kind` and `lambda = K / ||Y_Omega||`.
pub fn fixture(kind: ConstraintKind, dims: &[usize], ranks: &[usize], fraction: f64) -> (Problem, FactorPoint) {
    let synth = match kind {
        ConstraintKind::None => SyntheticKind::Gaussian,
        ConstraintKind::Nonnegative => SyntheticKind::Nonnegative,
        ConstraintKind::Hankel { .. } => SyntheticKind::Exponential,
    };
    let truth: Vec<usize> = ranks.iter().map(|&r| r.min(3)).collect();
    let s = generate_synthetic(synth, dims, &truth, fraction, 1).expect("valid fixture");
    let k = dims.len();
    let lambda = k as f64 / s.observed.norm();
    let spec = ProblemSpec::new(s.observed, 1.0, vec![lambda / k as f64; k], ranks.to_vec(), kind).expect("valid fixture");
    let problem = Problem::new(spec).expect("valid fixture");
    let u = SphereProductManifold::new(problem.factor_shapes()).expect("valid shapes").random_point(7);
    (problem, u)
}
