//! Problem data and the precomputed operator layouts derived from it.

use crate::constraint::{ConstraintKind, HankelLift};
use crate::error::{Error, Result};
use crate::factors::Factors;
use crate::operator::RegularizedLayout;
use crate::tensor::{SparseTensor, Support};

/// Dimensions, observations `Y_Omega`, cost `C`, weights `lambda_k`, ranks and constraint.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub observed: SparseTensor,
    pub cost: f64,
    pub lambdas: Vec<f64>,
    pub ranks: Vec<usize>,
    pub constraint: ConstraintKind,
}

impl ProblemSpec {
    pub fn new(
        observed: SparseTensor,
        cost: f64,
        lambdas: Vec<f64>,
        ranks: Vec<usize>,
        constraint: ConstraintKind,
    ) -> Result<Self> {
        let spec = Self {
            observed,
            cost,
            lambdas,
            ranks,
            constraint,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let dims = self.dims();
        let k = dims.len();
        if self.observed.nnz() == 0 {
            return Err(Error::InvalidParameter("the observation set Omega is empty".into()));
        }
        if !(self.cost > 0.0 && self.cost.is_finite()) {
            return Err(Error::InvalidParameter(format!("cost C must be positive, got {}", self.cost)));
        }
        if self.lambdas.len() != k {
            return Err(Error::InvalidParameter(format!("expected {k} lambdas, got {}", self.lambdas.len())));
        }
        if self.lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::InvalidParameter(format!("lambdas must be finite and >= 0: {:?}", self.lambdas)));
        }
        self.constraint.validate(dims)?;
        if self.ranks.len() != k {
            return Err(Error::InvalidParameter(format!("expected {k} ranks, got {}", self.ranks.len())));
        }
        for (r, n) in self.ranks.iter().zip(self.constraint.factor_rows(dims)) {
            if *r == 0 || *r > n {
                return Err(Error::InvalidParameter(format!("rank {r} outside 1..={n}")));
            }
        }
        if self.observed.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("observations contain non-finite values".into()));
        }
        Ok(())
    }

    pub fn dims(&self) -> &[usize] {
        self.observed.dims()
    }

    pub fn order(&self) -> usize {
        self.dims().len()
    }

    /// `(rows, rank)` of each factor `U_k`.
    pub fn factor_shapes(&self) -> Vec<(usize, usize)> {
        self.constraint
            .factor_rows(self.dims())
            .into_iter()
            .zip(self.ranks.iter().copied())
            .collect()
    }

    /// `lambda_k = lambda / K`, the split used when a single scalar is configured.
    pub fn split_lambda(lambda: f64, order: usize) -> Vec<f64> {
        vec![lambda / order as f64; order]
    }
}

#[derive(Clone, Debug)]
pub(crate) enum Structure {
    None,
    Nonnegative {
        grid: RegularizedLayout,
        /// Position of each Omega entry inside the grid layout.
        omega_in_grid: Vec<usize>,
    },
    Hankel {
        lift: HankelLift,
        layout: RegularizedLayout,
    },
}

/// A validated [`ProblemSpec`] with the sparse unfolding plans every solver uses.
#[derive(Clone, Debug)]
pub struct Problem {
    spec: ProblemSpec,
    omega: RegularizedLayout,
    structure: Structure,
    y_norm: f64,
}

impl Problem {
    pub fn new(spec: ProblemSpec) -> Result<Self> {
        spec.validate()?;
        let k = spec.order();
        let modes: Vec<usize> = (0..k).collect();
        let omega_support = spec.observed.support().clone();
        let omega = RegularizedLayout::new(omega_support.clone(), &modes);
        let structure = match &spec.constraint {
            ConstraintKind::None => Structure::None,
            ConstraintKind::Nonnegative => {
                let full = Support::full(spec.dims())?;
                let omega_in_grid = omega_support
                    .iter()
                    .map(|idx| full.position(idx).expect("Omega index within grid"))
                    .collect();
                Structure::Nonnegative {
                    grid: RegularizedLayout::new(full, &modes),
                    omega_in_grid,
                }
            }
            ConstraintKind::Hankel { tau } => {
                let lift = HankelLift::new(&omega_support, tau)?;
                let lifted_modes: Vec<usize> = (0..k).map(|m| 2 * m + 1).collect();
                let layout = RegularizedLayout::new(lift.support().clone(), &lifted_modes);
                Structure::Hankel { lift, layout }
            }
        };
        let y_norm = spec.observed.norm();
        Ok(Self {
            spec,
            omega,
            structure,
            y_norm,
        })
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn dims(&self) -> &[usize] {
        self.spec.dims()
    }

    pub fn order(&self) -> usize {
        self.spec.order()
    }

    pub fn cost(&self) -> f64 {
        self.spec.cost
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.spec.lambdas
    }

    pub fn constraint(&self) -> &ConstraintKind {
        &self.spec.constraint
    }

    pub fn observed(&self) -> &SparseTensor {
        &self.spec.observed
    }

    pub fn y(&self) -> &[f64] {
        self.spec.observed.values()
    }

    pub fn y_norm(&self) -> f64 {
        self.y_norm
    }

    pub fn omega_len(&self) -> usize {
        self.spec.observed.nnz()
    }

    pub fn factor_shapes(&self) -> Vec<(usize, usize)> {
        self.spec.factor_shapes()
    }

    pub(crate) fn omega_layout(&self) -> &RegularizedLayout {
        &self.omega
    }

    pub(crate) fn structure(&self) -> &Structure {
        &self.structure
    }

    /// The layout on which `Z + A*(s)` (or the Hankel `S`) lives and whose
    /// unfoldings carry the regularizer.
    pub fn regularized_layout(&self) -> &RegularizedLayout {
        match &self.structure {
            Structure::None => &self.omega,
            Structure::Nonnegative { grid, .. } => grid,
            Structure::Hankel { layout, .. } => layout,
        }
    }

    pub fn hankel_lift(&self) -> Option<&HankelLift> {
        match &self.structure {
            Structure::Hankel { lift, .. } => Some(lift),
            _ => None,
        }
    }

    /// Checks that `u` has the factor shapes this problem expects.
    pub fn check_factors(&self, u: &Factors) -> Result<()> {
        if u.shapes() != self.factor_shapes() {
            return Err(Error::DimensionMismatch(format!(
                "factor shapes {:?} differ from expected {:?}",
                u.shapes(),
                self.factor_shapes()
            )));
        }
        Ok(())
    }
}
