//! Seeded synthetic completion problems and recovery metrics.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::tensor::{project_omega, DenseTensor, SparseTensor, Support};

/// Which kind of ground truth to draw.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SyntheticKind {
    /// Latent sum of mode-wise low-rank tensors with Gaussian factors.
    Gaussian,
    /// Latent sum of mode-wise low-rank tensors with uniform `[0, 1)` factors.
    Nonnegative,
    /// Products of exponentially damped sinusoids, Hankel low-rank in every mode.
    Exponential,
}

#[derive(Clone, Debug)]
pub struct SyntheticProblem {
    pub observed: SparseTensor,
    pub truth: DenseTensor,
    /// Latent summands of `truth`; component `k` has mode-`k` rank at most `r_k`.
    /// For [`SyntheticKind::Exponential`] there is a single component, the truth itself.
    pub components: Vec<DenseTensor>,
}

/// Draws a ground truth of the given kind, rescales it to unit RMS and samples
/// `round(fraction * N)` entries uniformly without replacement.
pub fn generate_synthetic(kind: SyntheticKind, dims: &[usize], ranks: &[usize], fraction: f64, seed: u64) -> Result<SyntheticProblem> {
    if dims.is_empty() || dims.contains(&0) {
        return Err(Error::InvalidParameter(format!("invalid dims {dims:?}")));
    }
    if ranks.len() != dims.len() || ranks.contains(&0) {
        return Err(Error::InvalidParameter(format!("need one positive rank per mode, got {ranks:?}")));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!("fraction must lie in (0, 1], got {fraction}")));
    }
    let total: usize = dims.iter().product();
    let count = (fraction * total as f64).round() as usize;
    if count == 0 {
        return Err(Error::InvalidParameter(format!(
            "fraction {fraction} of {total} entries observes nothing"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut components = match kind {
        SyntheticKind::Gaussian => latent(dims, ranks, &mut rng, |r| r.sample::<f64, _>(StandardNormal))?,
        SyntheticKind::Nonnegative => {
            let unit = Uniform::new(0.0, 1.0).expect("valid range");
            latent(dims, ranks, &mut rng, |r| r.sample(unit))?
        }
        SyntheticKind::Exponential => vec![exponential(dims, ranks, &mut rng)?],
    };
    let mut truth = DenseTensor::zeros(dims)?;
    for c in &components {
        truth.axpy(1.0, c)?;
    }
    let rms = truth.norm() / (total as f64).sqrt();
    if rms > 0.0 {
        truth.scale(1.0 / rms);
        components.iter_mut().for_each(|c| c.scale(1.0 / rms));
    }
    let mut picked = rand::seq::index::sample(&mut rng, total, count).into_vec();
    picked.sort_unstable();
    let mut idx = vec![0; dims.len()];
    let indices = picked
        .into_iter()
        .map(|off| {
            crate::tensor::multi_index(dims, off, &mut idx);
            idx.clone()
        })
        .collect();
    let support = Support::new(dims, indices)?;
    let observed = project_omega(&truth, &support)?;
    Ok(SyntheticProblem {
        observed,
        truth,
        components,
    })
}

fn latent(dims: &[usize], ranks: &[usize], rng: &mut ChaCha8Rng, mut draw: impl FnMut(&mut ChaCha8Rng) -> f64) -> Result<Vec<DenseTensor>> {
    let total: usize = dims.iter().product();
    dims.iter()
        .zip(ranks)
        .enumerate()
        .map(|(k, (&n, &r))| {
            let cols = total / n;
            let b = DMatrix::from_fn(n, r, |_, _| draw(rng));
            let c = DMatrix::from_fn(cols, r, |_, _| draw(rng));
            DenseTensor::fold(&(b * c.transpose()), k, dims)
        })
        .collect()
}

/// `sum_j a_j prod_k rho_jk^i_k cos(omega_jk i_k + phi_jk)`.
///
/// With `J = max(1, min_k floor(r_k / 2))` terms, a mode with `r_k >= 2J`
/// gets damped cosines (two exponentials each) and any other mode pure
/// exponentials, so every mode has Hankel rank at most `r_k`.
fn exponential(dims: &[usize], ranks: &[usize], rng: &mut ChaCha8Rng) -> Result<DenseTensor> {
    let terms = ranks.iter().map(|r| r / 2).min().unwrap_or(0).max(1);
    if ranks.iter().any(|&r| r < terms) {
        return Err(Error::InvalidParameter(format!("ranks {ranks:?} too small for {terms} terms")));
    }
    let mut factors: Vec<Vec<Vec<f64>>> = Vec::with_capacity(terms);
    let mut amplitudes = Vec::with_capacity(terms);
    for _ in 0..terms {
        amplitudes.push(rng.random_range(0.5..1.5));
        let per_mode = dims
            .iter()
            .zip(ranks)
            .map(|(&n, &r)| {
                let rho: f64 = rng.random_range(0.97..1.0);
                let (omega, phi) = if r >= 2 * terms {
                    (rng.random_range(0.1..1.0) * std::f64::consts::PI, rng.random_range(0.0..std::f64::consts::TAU))
                } else {
                    (0.0, 0.0)
                };
                (0..n).map(|i| rho.powi(i as i32) * (omega * i as f64 + phi).cos()).collect()
            })
            .collect();
        factors.push(per_mode);
    }
    DenseTensor::from_fn(dims, |idx| {
        factors
            .iter()
            .zip(&amplitudes)
            .map(|(modes, a)| a * modes.iter().zip(idx).map(|(f, &i)| f[i]).product::<f64>())
            .sum()
    })
}

/// Errors of a completed tensor against the ground truth, split by Omega.
#[derive(Clone, Debug, PartialEq)]
pub struct RecoveryMetrics {
    /// RMSE over entries outside Omega.
    pub rmse_test: f64,
    pub rmse_train: f64,
    /// RMS of the ground truth outside Omega.
    pub rms_truth_test: f64,
    pub rms_truth_train: f64,
    pub min_entry: f64,
    pub max_abs: f64,
    pub n_test: usize,
    pub n_train: usize,
}

pub fn eval_recovery(w_hat: &DenseTensor, truth: &DenseTensor, omega: &Support) -> Result<RecoveryMetrics> {
    if w_hat.dims() != truth.dims() || omega.dims() != truth.dims() {
        return Err(Error::DimensionMismatch(format!(
            "W_hat {:?}, truth {:?}, Omega {:?}",
            w_hat.dims(),
            truth.dims(),
            omega.dims()
        )));
    }
    let mut in_omega = vec![false; truth.len()];
    for off in omega.linear_offsets() {
        in_omega[off] = true;
    }
    let (mut err_train, mut err_test, mut ref_train, mut ref_test) = (0.0, 0.0, 0.0, 0.0);
    for ((w, t), &train) in w_hat.as_slice().iter().zip(truth.as_slice()).zip(&in_omega) {
        let (e, r) = if train { (&mut err_train, &mut ref_train) } else { (&mut err_test, &mut ref_test) };
        *e += (w - t).powi(2);
        *r += t * t;
    }
    let n_train = omega.len();
    let n_test = truth.len() - n_train;
    let rms = |s: f64, n: usize| if n == 0 { 0.0 } else { (s / n as f64).sqrt() };
    Ok(RecoveryMetrics {
        rmse_test: rms(err_test, n_test),
        rmse_train: rms(err_train, n_train),
        rms_truth_test: rms(ref_test, n_test),
        rms_truth_train: rms(ref_train, n_train),
        min_entry: w_hat.min_value(),
        max_abs: w_hat.max_abs(),
        n_test,
        n_train,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::hankelize;

    fn rank(m: &DMatrix<f64>) -> usize {
        let sv = m.clone().singular_values();
        let top = sv.iter().fold(0.0f64, |a, b| a.max(*b));
        sv.iter().filter(|s| **s > 1e-9 * top).count()
    }

    #[test]
    fn full_fraction_observes_everything() {
        let p = generate_synthetic(SyntheticKind::Nonnegative, &[3, 4, 2], &[1, 2, 1], 1.0, 0).unwrap();
        assert_eq!(p.observed.nnz(), 24);
        assert_eq!(p.observed.to_dense(), p.truth);
    }

    #[test]
    fn seeded_output_is_bit_identical() {
        let a = generate_synthetic(SyntheticKind::Exponential, &[6, 5], &[2, 2], 0.4, 11).unwrap();
        let b = generate_synthetic(SyntheticKind::Exponential, &[6, 5], &[2, 2], 0.4, 11).unwrap();
        assert_eq!(a.observed, b.observed);
        assert_eq!(a.truth.as_slice(), b.truth.as_slice());
        let c = generate_synthetic(SyntheticKind::Exponential, &[6, 5], &[2, 2], 0.4, 12).unwrap();
        assert_ne!(a.truth.as_slice(), c.truth.as_slice());
    }

    #[test]
    fn nonnegative_components_have_bounded_mode_rank() {
        let ranks = [2, 3, 1];
        let p = generate_synthetic(SyntheticKind::Nonnegative, &[6, 7, 5], &ranks, 0.3, 4).unwrap();
        assert!(p.truth.min_value() >= 0.0);
        for (k, c) in p.components.iter().enumerate() {
            assert!(rank(&c.unfold(k).unwrap()) <= ranks[k]);
        }
        assert!((p.truth.norm() / (210f64).sqrt() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exponential_truth_is_hankel_low_rank() {
        let ranks = [4, 3];
        let tau = [4, 5];
        let p = generate_synthetic(SyntheticKind::Exponential, &[12, 10], &ranks, 0.5, 2).unwrap();
        let lifted = hankelize(&p.truth, &tau).unwrap();
        for k in 0..2 {
            assert!(rank(&lifted.unfold(2 * k + 1).unwrap()) <= ranks[k]);
        }
    }

    #[test]
    fn rejects_bad_fractions() {
        assert!(generate_synthetic(SyntheticKind::Gaussian, &[3, 3], &[1, 1], 0.0, 0).is_err());
        assert!(generate_synthetic(SyntheticKind::Gaussian, &[3, 3], &[1, 1], 1.5, 0).is_err());
        assert!(generate_synthetic(SyntheticKind::Gaussian, &[3, 3], &[1, 1], 0.01, 0).is_err());
    }

    #[test]
    fn recovery_of_truth_is_exact() {
        let p = generate_synthetic(SyntheticKind::Gaussian, &[4, 5, 3], &[2, 2, 2], 0.5, 3).unwrap();
        let m = eval_recovery(&p.truth, &p.truth, p.observed.support()).unwrap();
        assert_eq!(m.rmse_test, 0.0);
        assert_eq!(m.rmse_train, 0.0);
        assert_eq!(m.n_test + m.n_train, 60);
    }

    #[test]
    fn zero_recovery_reports_truth_rms() {
        let p = generate_synthetic(SyntheticKind::Gaussian, &[4, 5, 3], &[2, 2, 2], 0.5, 3).unwrap();
        let zero = DenseTensor::zeros(&[4, 5, 3]).unwrap();
        let m = eval_recovery(&zero, &p.truth, p.observed.support()).unwrap();
        assert!((m.rmse_test - m.rms_truth_test).abs() < 1e-15);
        assert!((m.rmse_train - m.rms_truth_train).abs() < 1e-15);
        assert!(eval_recovery(&zero, &DenseTensor::zeros(&[4, 5]).unwrap(), p.observed.support()).is_err());
    }
}
