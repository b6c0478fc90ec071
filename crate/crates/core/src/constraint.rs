//! Structural constraint maps `A` and their adjoints.
//!
//! Two instances are supported: entrywise nonnegativity, where `A` is the
//! identity and the multiplier `S` enters the dual directly, and the Hankel
//! transform `H`, which lifts a K-way tensor to a 2K-way tensor by
//! anti-diagonal duplication with window sizes `tau_k`.
//!
//! Lifted indices are interleaved as `(j_1, l_1, ..., j_K, l_K)` with
//! `j_k < tau_k`, `l_k < n_k - tau_k + 1` and image index `i_k = j_k + l_k`
//! (0-based here; the 1-based form is `i_k = j_k + l_k - 1`).

use crate::error::{Error, Result};
use crate::tensor::{linear_index, DenseTensor, SparseTensor, Support};

/// Which structural constraint the completion problem carries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ConstraintKind {
    None,
    Nonnegative,
    Hankel { tau: Vec<usize> },
}

impl ConstraintKind {
    pub fn validate(&self, dims: &[usize]) -> Result<()> {
        if let ConstraintKind::Hankel { tau } = self {
            if tau.len() != dims.len() {
                return Err(Error::InvalidParameter(format!(
                    "tau has {} entries but the tensor has order {}",
                    tau.len(),
                    dims.len()
                )));
            }
            if let Some((t, n)) = tau.iter().zip(dims).find(|(&t, &n)| t == 0 || t > n) {
                return Err(Error::InvalidParameter(format!("tau entry {t} outside 1..={n}")));
            }
        }
        Ok(())
    }

    /// Row dimension of each factor `U_k`: `n_k`, or `n_k - tau_k + 1` for Hankel.
    pub fn factor_rows(&self, dims: &[usize]) -> Vec<usize> {
        match self {
            ConstraintKind::Hankel { tau } => dims.iter().zip(tau).map(|(n, t)| n - t + 1).collect(),
            _ => dims.to_vec(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ConstraintKind::None => "none",
            ConstraintKind::Nonnegative => "nonneg",
            ConstraintKind::Hankel { .. } => "hankel",
        }
    }
}

/// Dimensions of the 2K-order Hankel tensor.
pub fn hankel_dims(dims: &[usize], tau: &[usize]) -> Vec<usize> {
    dims.iter().zip(tau).flat_map(|(&n, &t)| [t, n - t + 1]).collect()
}

fn check_tau(dims: &[usize], tau: &[usize]) -> Result<()> {
    ConstraintKind::Hankel { tau: tau.to_vec() }.validate(dims)
}

/// Number of lifted entries that duplicate tensor entry `index`.
pub fn hankel_multiplicity(dims: &[usize], tau: &[usize], index: &[usize]) -> usize {
    dims.iter()
        .zip(tau)
        .zip(index)
        .map(|((&n, &t), &i)| t.min(n - t + 1).min(i + 1).min(n - i))
        .product()
}

/// `H(W)[j_1, l_1, ..., j_K, l_K] = W[j_1 + l_1, ..., j_K + l_K]`.
pub fn hankelize(w: &DenseTensor, tau: &[usize]) -> Result<DenseTensor> {
    check_tau(w.dims(), tau)?;
    let k = w.order();
    let mut img = vec![0; k];
    DenseTensor::from_fn(&hankel_dims(w.dims(), tau), |lifted| {
        for (m, slot) in img.iter_mut().enumerate() {
            *slot = lifted[2 * m] + lifted[2 * m + 1];
        }
        w.get(&img)
    })
}

/// Adjoint of [`hankelize`]: scatter-adds every lifted entry onto its image index.
pub fn hankel_adjoint(s: &DenseTensor, tau: &[usize], dims: &[usize]) -> Result<DenseTensor> {
    check_tau(dims, tau)?;
    let lifted = hankel_dims(dims, tau);
    if s.dims() != lifted.as_slice() {
        return Err(Error::DimensionMismatch(format!(
            "Hankel multiplier has dims {:?}, expected {lifted:?}",
            s.dims()
        )));
    }
    let mut out = DenseTensor::zeros(dims)?;
    let full = Support::full(&lifted)?;
    let mut img = vec![0; dims.len()];
    for (idx, &v) in full.iter().zip(full_values(s, &full).iter()) {
        for (m, slot) in img.iter_mut().enumerate() {
            *slot = idx[2 * m] + idx[2 * m + 1];
        }
        let off = linear_index(dims, &img);
        out.as_mut_slice()[off] += v;
    }
    Ok(out)
}

fn full_values(s: &DenseTensor, full: &Support) -> Vec<f64> {
    full.iter().map(|idx| s.get(idx)).collect()
}

/// All lifted indices whose image lies in `omega`, sorted lexicographically.
pub fn lift_support(omega: &Support, tau: &[usize]) -> Result<Support> {
    Ok(HankelLift::new(omega, tau)?.support().clone())
}

/// The Hankel lift of an observation pattern together with the block
/// structure of the coupling constraint `H*(S) = Z`, `Z = Z_Omega`.
#[derive(Clone, Debug)]
pub struct HankelLift {
    dims: Vec<usize>,
    tau: Vec<usize>,
    support: Support,
    parent: Vec<usize>,
    block_size: Vec<usize>,
}

impl HankelLift {
    pub fn new(omega: &Support, tau: &[usize]) -> Result<Self> {
        let dims = omega.dims().to_vec();
        check_tau(&dims, tau)?;
        let k = dims.len();
        let mut entries: Vec<(Vec<usize>, usize)> = Vec::new();
        let mut block_size = Vec::with_capacity(omega.len());
        for (w, idx) in omega.iter().enumerate() {
            // per-mode admissible window offsets j with l = i - j in range
            let ranges: Vec<(usize, usize)> = (0..k)
                .map(|m| {
                    let lo = idx[m].saturating_sub(dims[m] - tau[m]);
                    let hi = idx[m].min(tau[m] - 1);
                    (lo, hi)
                })
                .collect();
            let count: usize = ranges.iter().map(|(lo, hi)| hi - lo + 1).product();
            block_size.push(count);
            let mut j: Vec<usize> = ranges.iter().map(|r| r.0).collect();
            for _ in 0..count {
                let lifted: Vec<usize> = (0..k).flat_map(|m| [j[m], idx[m] - j[m]]).collect();
                entries.push((lifted, w));
                for m in (0..k).rev() {
                    if j[m] < ranges[m].1 {
                        j[m] += 1;
                        break;
                    }
                    j[m] = ranges[m].0;
                }
            }
        }
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        let parent = entries.iter().map(|e| e.1).collect();
        let coords = entries.into_iter().flat_map(|e| e.0).collect();
        let support = Support::from_sorted_unchecked(hankel_dims(&dims, tau), coords);
        Ok(Self {
            dims,
            tau: tau.to_vec(),
            support,
            parent,
            block_size,
        })
    }

    pub fn support(&self) -> &Support {
        &self.support
    }

    pub fn tau(&self) -> &[usize] {
        &self.tau
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Index into Omega of the image of each lifted entry.
    pub fn parent(&self) -> &[usize] {
        &self.parent
    }

    pub fn omega_len(&self) -> usize {
        self.block_size.len()
    }

    /// `H*(S)` restricted to Omega, for `s` aligned with the lifted support.
    pub fn adjoint(&self, s: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.block_size.len()];
        for (&p, &v) in self.parent.iter().zip(s) {
            out[p] += v;
        }
        out
    }

    /// `H(W)` sampled on the lifted support, for `w` aligned with Omega.
    pub fn lift(&self, w: &[f64]) -> Vec<f64> {
        self.parent.iter().map(|&p| w[p]).collect()
    }

    /// Euclidean projection of `(z, s)` onto `{H*(S) = Z}`, in place.
    ///
    /// Each Omega entry couples only with its own anti-diagonal block, so the
    /// projection is the closed-form hyperplane projection per block.
    pub fn project(&self, z: &mut [f64], s: &mut [f64]) {
        let sums = self.adjoint(s);
        let shift: Vec<f64> = z
            .iter()
            .zip(&sums)
            .zip(&self.block_size)
            .map(|((zv, sv), &m)| (zv - sv) / (1.0 + m as f64))
            .collect();
        for (zv, d) in z.iter_mut().zip(&shift) {
            *zv -= d;
        }
        for (sv, &p) in s.iter_mut().zip(&self.parent) {
            *sv += shift[p];
        }
    }

    /// `||H*(S) - Z||`.
    pub fn feasibility(&self, z: &[f64], s: &[f64]) -> f64 {
        self.adjoint(s)
            .iter()
            .zip(z)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Scatter lifted values into a dense 2K-order tensor.
    pub fn to_dense(&self, s: &[f64]) -> DenseTensor {
        let mut t = DenseTensor::zeros(self.support.dims()).expect("valid lifted dims");
        for (idx, &v) in self.support.iter().zip(s) {
            t.set(idx, v);
        }
        t
    }

    /// Gathers a dense 2K-order tensor onto the lifted support, failing when
    /// it has a nonzero entry outside the support.
    pub fn gather(&self, s: &DenseTensor) -> Result<Vec<f64>> {
        if s.dims() != self.support.dims() {
            return Err(Error::DimensionMismatch(format!(
                "Hankel multiplier has dims {:?}, expected {:?}",
                s.dims(),
                self.support.dims()
            )));
        }
        let mut outside = s.clone();
        let vals: Vec<f64> = self
            .support
            .iter()
            .map(|idx| {
                let v = s.get(idx);
                outside.set(idx, 0.0);
                v
            })
            .collect();
        if outside.max_abs() != 0.0 {
            return Err(Error::SupportViolation(
                "Hankel multiplier has nonzero entries outside the lifted support".into(),
            ));
        }
        Ok(vals)
    }
}

/// Euclidean projection of `(Z, S)` onto
/// `{(Z, S) : H*(S) = Z, Z = Z_Omega, supp(S) in lift(Omega)}`.
pub fn project_coupling(z: &SparseTensor, s: &DenseTensor, tau: &[usize]) -> Result<(SparseTensor, DenseTensor)> {
    let lift = HankelLift::new(z.support(), tau)?;
    let mut sv = lift.gather(s)?;
    let mut zv = z.values().to_vec();
    lift.project(&mut zv, &mut sv);
    Ok((SparseTensor::from_support(z.support().clone(), zv)?, lift.to_dense(&sv)))
}

/// The dual multiplier `s` attached to the structural constraint.
#[derive(Clone, Debug, PartialEq)]
pub enum DualMultiplier {
    /// No structural constraint: `s` is absent and `A*(s) = 0`.
    Zero { dims: Vec<usize> },
    /// Entrywise-nonnegative `S` over the whole grid.
    Nonnegative(DenseTensor),
    /// 2K-order `S` supported on the Hankel lift of Omega.
    Hankel { tau: Vec<usize>, s: SparseTensor },
}

/// `A*(s)` as a dense tensor of the data dimensions.
pub fn apply_adjoint(kind: &ConstraintKind, s: &DualMultiplier) -> Result<DenseTensor> {
    match (kind, s) {
        (ConstraintKind::None, DualMultiplier::Zero { dims }) => DenseTensor::zeros(dims),
        (ConstraintKind::Nonnegative, DualMultiplier::Nonnegative(t)) => Ok(t.clone()),
        (ConstraintKind::Hankel { tau }, DualMultiplier::Hankel { tau: t2, s }) => {
            if tau != t2 {
                return Err(Error::DimensionMismatch(format!("multiplier built for tau {t2:?}, kind has {tau:?}")));
            }
            let dims: Vec<usize> = s.dims().chunks(2).map(|p| p[0] + p[1] - 1).collect();
            hankel_adjoint(&s.to_dense(), tau, &dims)
        }
        _ => Err(Error::DimensionMismatch(format!(
            "multiplier variant does not match constraint kind `{}`",
            kind.name()
        ))),
    }
}
