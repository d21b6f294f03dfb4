//! The symmetric joint measurement on n copies: exact success probability and
//! moment operators (computed along two independent paths), outcome sampling,
//! and the rank-one shadow estimator built from a successful outcome.
//!
//! The measurement has a continuous family of outcomes `F_psi` proportional to
//! `|psi><psi|^(x)n` plus one failure element `I - Pi_sym`. On success the
//! outcome variable `Psi = |psi><psi|`; on failure it is the zero operator.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, binomial, sym_dim, CMatrix, CVector};
use crate::states::{Observable, SpectralState};
use crate::typedist::{self, exact_dist};

/// Proposal cap for the rejection sampler; hitting it indicates a bug, not a
/// valid outcome.
pub const REJECTION_CAP: u64 = 10_000_000;

/// Default weight on the Delta remainder in the variance bound.
pub const C_DELTA_DEFAULT: f64 = 1.0;

/// Outcome of one joint measurement on `n` copies.
#[derive(Debug, Clone)]
pub enum MeasurementOutcome {
    /// The measurement produced a pure state estimate.
    Success { psi: CVector, copies_consumed: usize },
    /// The failure element fired; the outcome variable is the zero operator.
    Failure { copies_consumed: usize },
}

impl MeasurementOutcome {
    pub fn is_success(&self) -> bool {
        matches!(self, MeasurementOutcome::Success { .. })
    }

    pub fn copies_consumed(&self) -> usize {
        match self {
            MeasurementOutcome::Success { copies_consumed, .. } => *copies_consumed,
            MeasurementOutcome::Failure { copies_consumed } => *copies_consumed,
        }
    }
}

/// A (possibly averaged) shadow estimate of the principal eigenstate.
///
/// The matrix has unit trace but need not be positive semidefinite.
#[derive(Debug, Clone)]
pub struct ShadowEstimate {
    pub matrix: CMatrix,
    pub n_used: usize,
    pub b_averaged: usize,
    /// All copies consumed, including those burned by failed measurements.
    pub samples_spent: usize,
}

/// Success probability `Z = Tr(Pi_sym rho^(x)n) = sum_e lambda^e`, evaluated
/// as the type-vector sum (no dense matrices).
pub fn success_probability(rho: &SpectralState, n: usize) -> Result<f64> {
    let types = typedist::enumerate_types(rho.d(), n)?;
    Ok(types.iter().map(|e| e.monomial(rho.eigenvalues())).sum())
}

/// Brute-force success probability `Tr(Pi_sym rho^(x)n)` with dense matrices;
/// oracle for [`success_probability`].
pub fn z_brute_force(rho: &SpectralState, n: usize) -> Result<f64> {
    let p = linalg::sym_projector(rho.d(), n)?;
    let power = linalg::kron_power(&rho.density(), n);
    Ok(linalg::trace(&(p * power)).re)
}

/// Exact moment operator `M_k = Tr_{n->k}(rho^(x)n) / Z` for k in {1, 2},
/// via the type-vector closed forms (no dense n-qudit matrices).
pub fn m_k_exact(rho: &SpectralState, n: usize, k: usize) -> Result<CMatrix> {
    if !(k == 1 || k == 2) || n < k {
        return Err(Error::InvalidParameter {
            msg: format!("moment order k = {k} must be 1 or 2 with n >= k (n = {n})"),
        });
    }
    let dist = exact_dist(rho.eigenvalues(), n)?;
    let dim = if k == 1 { rho.d() } else { rho.d() * rho.d() };
    let mut acc = CMatrix::zeros(dim, dim);
    for (e, &mass) in dist.types().iter().zip(dist.masses()) {
        let term = if k == 1 {
            typedist::m1_of_type(e, rho)
        } else {
            typedist::m2_of_type(e, rho)?
        };
        acc += term.scale(mass);
    }
    Ok(acc)
}

/// Brute-force moment operator: trace out the first n-k positions of
/// `Pi_sym rho^(x)n` and normalize by Z. Oracle for [`m_k_exact`].
pub fn m_k_brute_force(rho: &SpectralState, n: usize, k: usize) -> Result<CMatrix> {
    let d = rho.d();
    let p = linalg::sym_projector(d, n)?;
    let power = linalg::kron_power(&rho.density(), n);
    let pa = p * power;
    let traced: Vec<usize> = (0..n - k).collect();
    let reduced = linalg::partial_trace(&pa, &traced, d)?;
    let z = linalg::trace(&linalg::partial_trace(&reduced, &(0..k).collect::<Vec<_>>(), d)?).re;
    Ok(reduced.scale(1.0 / z))
}

/// Error unless `A` commutes with all adjacent-transposition operators (which
/// generate every permutation) to tolerance 1e-10.
pub fn check_exchangeable(a: &CMatrix, d: usize, n: usize) -> Result<()> {
    let mut worst = 0.0f64;
    for i in 0..n.saturating_sub(1) {
        let w = linalg::permutation_operator(&linalg::Permutation::transposition(n, i, i + 1), d)?;
        worst = worst.max(linalg::max_abs_diff(&(&w * a), &(a * &w)));
    }
    if worst > 1e-10 {
        return Err(Error::NotExchangeable { dev: worst });
    }
    Ok(())
}

/// Symmetric partial trace `Tr_{n->s}(A) = Tr_{[n-s]}(Pi_sym A)` (first n-s
/// positions traced out).
fn sym_partial_trace(a: &CMatrix, d: usize, n: usize, s: usize) -> Result<CMatrix> {
    let p = linalg::sym_projector(d, n)?;
    let pa = p * a;
    let traced: Vec<usize> = (0..n - s).collect();
    linalg::partial_trace(&pa, &traced, d)
}

/// Both evaluations of the unconditioned k-th outcome moment
/// `E[Psi^(x)k] = MP(A)` for an exchangeable n-qudit state `A`.
pub struct MpPaths {
    /// Partial trace of the (n+k)-system symmetric projector applied to
    /// `A (x) I^(x)k`, scaled by the ratio of symmetric dimensions.
    pub direct: CMatrix,
    /// The binomial sum over s = 0..k of embedded symmetric partial traces,
    /// conjugated by the k-system projector, rescaled to the unconditioned
    /// moment.
    pub expansion: CMatrix,
    /// Max entrywise difference between the two paths.
    pub discrepancy: f64,
    /// Success probability `Tr_{n->0}(A)` (conditioning factor).
    pub success: f64,
}

/// Evaluate the measure-and-prepare map `A -> E[Psi^(x)k]` along its two
/// independent formulations and report their agreement.
pub fn mp_map(a: &CMatrix, d: usize, n: usize, k: usize) -> Result<MpPaths> {
    check_exchangeable(a, d, n)?;

    // path 1: definition. The contraction
    //   Tr_{[n]}(P (A (x) I))[r, c] = sum_{t, t'} P[(t, r), (t', c)] A[t', t]
    // is evaluated directly instead of forming the d^{n+k}-dim product.
    let big = linalg::sym_projector(d, n + k)?;
    let dn = d.pow(n as u32);
    let dk = d.pow(k as u32);
    let scale = sym_dim(d, n) as f64 / sym_dim(d, n + k) as f64;
    let mut direct = CMatrix::zeros(dk, dk);
    for r in 0..dk {
        for c in 0..dk {
            let mut s = Complex64::new(0.0, 0.0);
            for t in 0..dn {
                for tp in 0..dn {
                    s += big[(t * dk + r, tp * dk + c)] * a[(tp, t)];
                }
            }
            direct[(r, c)] = s * scale;
        }
    }

    // path 2: binomial expansion over s, conditioned form times Pr[success]
    let success = linalg::trace(&sym_partial_trace(a, d, n, 0)?).re;
    let dim_k = d.pow(k as u32);
    let mut inner = CMatrix::zeros(dim_k, dim_k);
    for s in 0..=k.min(n) {
        let m_s = sym_partial_trace(a, d, n, s)?.scale(1.0 / success);
        let embedded = linalg::kron(&m_s, &linalg::identity(d.pow((k - s) as u32)));
        let coeff = (binomial(n as u64, s as u64) * binomial(k as u64, s as u64)) as f64;
        inner += embedded.scale(coeff);
    }
    let expansion = if k == 0 {
        inner.scale(success / sym_dim(d + n, k) as f64)
    } else {
        let pk = linalg::sym_projector(d, k)?;
        (&pk * inner * &pk).scale(success / sym_dim(d + n, k) as f64)
    };

    let discrepancy = linalg::max_abs_diff(&direct, &expansion);
    Ok(MpPaths { direct, expansion, discrepancy, success })
}

/// Conditional outcome mean `E[Psi | success] = (I + n M_1) / (d + n)`.
pub fn psi_mean(rho: &SpectralState, n: usize) -> Result<CMatrix> {
    let m1 = m_k_exact(rho, n, 1)?;
    let d = rho.d();
    Ok((linalg::identity(d) + m1.scale(n as f64)).scale(1.0 / (d + n) as f64))
}

/// Reusable sampler for a fixed instance and width: precomputes the success
/// probability and the acceptance normalization.
pub struct Sampler {
    rho: SpectralState,
    n: usize,
    z: f64,
}

impl Sampler {
    pub fn new(rho: &SpectralState, n: usize) -> Result<Self> {
        let z = success_probability(rho, n)?;
        Ok(Sampler { rho: rho.clone(), n, z })
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    /// Draw one measurement outcome.
    ///
    /// Two-stage rejection: a Bernoulli(Z) flip decides success, then Haar
    /// proposals are accepted with probability `(<psi|rho|psi> / lambda_1)^n`,
    /// which realizes the conditional outcome density proportional to
    /// `<psi|rho|psi>^n`.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<MeasurementOutcome> {
        let n = self.n;
        if rng.gen::<f64>() >= self.z {
            return Ok(MeasurementOutcome::Failure { copies_consumed: n });
        }
        let d = self.rho.d();
        let lambda = self.rho.eigenvalues();
        for _ in 0..REJECTION_CAP {
            let psi = linalg::haar_state(d, rng);
            // <psi|rho|psi> = sum_i lambda_i |<v_i|psi>|^2
            let mut quad = 0.0;
            for i in 0..d {
                let overlap: Complex64 =
                    self.rho.eigenvector(i).iter().zip(psi.iter()).map(|(a, b)| a.conj() * b).sum();
                quad += lambda[i] * overlap.norm_sqr();
            }
            let accept = (quad / lambda[0]).powi(n as i32);
            if rng.gen::<f64>() < accept {
                return Ok(MeasurementOutcome::Success { psi, copies_consumed: n });
            }
        }
        Err(Error::SamplerStuck { cap: REJECTION_CAP })
    }
}

/// Draw one outcome of the n-copy joint measurement on `rho`.
pub fn sample_outcome<R: Rng>(
    rho: &SpectralState,
    n: usize,
    rng: &mut R,
) -> Result<MeasurementOutcome> {
    Sampler::new(rho, n)?.sample(rng)
}

/// The shadow estimator `((d+n) Psi - I) / n` from a successful outcome.
pub fn estimator(outcome: &MeasurementOutcome, d: usize, n: usize) -> Result<ShadowEstimate> {
    match outcome {
        MeasurementOutcome::Failure { .. } => Err(Error::FailedOutcome),
        MeasurementOutcome::Success { psi, copies_consumed } => {
            let proj = psi * psi.adjoint();
            let matrix =
                (proj.scale((d + n) as f64) - linalg::identity(d)).scale(1.0 / n as f64);
            Ok(ShadowEstimate { matrix, n_used: n, b_averaged: 1, samples_spent: *copies_consumed })
        }
    }
}

/// Upper bound on `Var[Tr(O phi_hat)]`:
/// `Tr(O^2)/n^2 + 6 ||O||^2/n + 8 ||O||^2/n^2 + c_Delta * Delta`.
pub fn estimator_variance_bound(
    rho: &SpectralState,
    o: &Observable,
    n: usize,
    c_delta: f64,
) -> Result<f64> {
    rho.require_protocol_valid()?;
    let delta = typedist::delta_bound(rho.lambda1(), n)?;
    let inf2 = o.infinity_norm() * o.infinity_norm();
    let nf = n as f64;
    Ok(o.frobenius_sq() / (nf * nf) + 6.0 * inf2 / nf + 8.0 * inf2 / (nf * nf) + c_delta * delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::states::{depolarized_instance, random_density, random_gapped_state, spectral_decompose};
    use crate::linalg::{identity, kron, max_abs_diff, trace};
    use rand::Rng;

    fn e0(d: usize) -> CVector {
        let mut v = CVector::zeros(d);
        v[0] = Complex64::new(1.0, 0.0);
        v
    }

    #[test]
    fn pure_state_always_succeeds() {
        let mut rng = stream(20, 0);
        let pure = depolarized_instance(3, 0.0, &e0(3), &mut rng).unwrap();
        for n in 1..=5 {
            assert!((success_probability(&pure, n).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn qubit_success_probability_closed_form() {
        let rho = spectral_decompose(&CMatrix::from_fn(2, 2, |i, j| {
            if i == j && i == 0 {
                Complex64::new(0.8, 0.0)
            } else if i == j {
                Complex64::new(0.2, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        }))
        .unwrap();
        let z = success_probability(&rho, 2).unwrap();
        assert!((z - 0.84).abs() < 1e-12);
        // lambda1^2 + lambda1 lambda2 + lambda2^2
        assert!((z - (0.64 + 0.16 + 0.04)).abs() < 1e-12);
        assert!((z_brute_force(&rho, 2).unwrap() - z).abs() < 1e-10);
    }

    #[test]
    fn success_probability_bounds() {
        let mut rng = stream(21, 0);
        for _ in 0..100 {
            let d = rng.gen_range(2..=4);
            let rho = random_gapped_state(d, (0.55, 0.999), &mut rng);
            let n = rng.gen_range(1..=8);
            let z = success_probability(&rho, n).unwrap();
            let l1 = rho.lambda1();
            assert!(l1.powi(n as i32 - 1) <= z + 1e-12);
            assert!(z <= l1.powi(n as i32 + 1) / (2.0 * l1 - 1.0) + 1e-12);
        }
    }

    #[test]
    fn moments_of_pure_state() {
        let mut rng = stream(22, 0);
        let pure = depolarized_instance(2, 0.0, &e0(2), &mut rng).unwrap();
        let rho = pure.density();
        let m1 = m_k_exact(&pure, 3, 1).unwrap();
        assert!(max_abs_diff(&m1, &rho) < 1e-10);
        let m2 = m_k_exact(&pure, 3, 2).unwrap();
        assert!(max_abs_diff(&m2, &kron(&rho, &rho)) < 1e-10);
    }

    #[test]
    fn moment_of_maximally_mixed_is_maximally_mixed() {
        let mm = spectral_decompose(&identity(3).scale(1.0 / 3.0)).unwrap();
        let m1 = m_k_exact(&mm, 3, 1).unwrap();
        assert!(max_abs_diff(&m1, &identity(3).scale(1.0 / 3.0)) < 1e-10);
    }

    #[test]
    fn type_sum_matches_brute_force_moments() {
        let mut rng = stream(23, 0);
        for (d, n) in [(2usize, 2usize), (2, 4), (3, 2), (3, 3)] {
            let rho = random_density(d, &mut rng);
            for k in [1usize, 2] {
                if n < k {
                    continue;
                }
                let fast = m_k_exact(&rho, n, k).unwrap();
                let slow = m_k_brute_force(&rho, n, k).unwrap();
                assert!(
                    max_abs_diff(&fast, &slow) < 1e-9,
                    "moment mismatch d={d} n={n} k={k}"
                );
                // moments are density matrices
                assert!((trace(&fast).re - 1.0).abs() < 1e-9);
                let min = linalg::hermitian_eigenvalues(&fast).unwrap().last().copied().unwrap();
                assert!(min >= -1e-9);
            }
        }
    }

    #[test]
    fn quartic_reduction_polynomial() {
        // Tr_{4->1}(rho^(x)4) = (1/24)(rho (1 + 3 Tr rho^2 + 2 Tr rho^3)
        //   + 3 rho^2 (1 + Tr rho^2) + 6 rho^3 + 6 rho^4)
        let mut rng = stream(24, 0);
        for _ in 0..5 {
            let s = random_density(3, &mut rng);
            let rho = s.density();
            let t2 = trace(&(&rho * &rho)).re;
            let t3 = trace(&(&rho * &rho * &rho)).re;
            let poly = (rho.scale(1.0 + 3.0 * t2 + 2.0 * t3)
                + (&rho * &rho).scale(3.0 * (1.0 + t2))
                + (&rho * &rho * &rho).scale(6.0)
                + (&rho * &rho * &rho * &rho).scale(6.0))
            .scale(1.0 / 24.0);
            let direct = sym_partial_trace(&linalg::kron_power(&rho, 4), 3, 4, 1).unwrap();
            assert!(max_abs_diff(&poly, &direct) < 1e-9);
        }
    }

    #[test]
    fn mp_map_zeroth_moment_is_success_probability() {
        let mut rng = stream(25, 0);
        let rho = random_density(2, &mut rng);
        let a = linalg::kron_power(&rho.density(), 3);
        let paths = mp_map(&a, 2, 3, 0).unwrap();
        let z = success_probability(&rho, 3).unwrap();
        assert!(paths.discrepancy < 1e-10);
        assert!((paths.direct[(0, 0)].re - z).abs() < 1e-10);
    }

    #[test]
    fn mp_map_conditional_mean_formula() {
        let mut rng = stream(26, 0);
        let pure = depolarized_instance(2, 0.0, &e0(2), &mut rng).unwrap();
        let n = 3;
        let a = linalg::kron_power(&pure.density(), n);
        let paths = mp_map(&a, 2, n, 1).unwrap();
        let expect = (identity(2) + pure.density().scale(n as f64)).scale(1.0 / (2 + n) as f64);
        // conditional mean = unconditioned / Z, and Z = 1 for a pure state
        assert!(max_abs_diff(&paths.direct, &expect) < 1e-10);
        assert!(paths.discrepancy < 1e-9);
    }

    #[test]
    fn mp_map_paths_agree_on_random_exchangeable_states() {
        let mut rng = stream(27, 0);
        let (d, n, k) = (2usize, 3usize, 2usize);
        let rho = random_density(d, &mut rng);
        let a = linalg::kron_power(&rho.density(), n);
        let paths = mp_map(&a, d, n, k).unwrap();
        assert!(paths.discrepancy < 1e-9, "discrepancy {}", paths.discrepancy);
        // non-exchangeable input is rejected
        let bad = linalg::kron(
            &rho.density(),
            &linalg::kron(&random_density(d, &mut rng).density(), &rho.density()),
        );
        assert!(matches!(mp_map(&bad, d, n, 1), Err(Error::NotExchangeable { .. })));
    }

    #[test]
    fn conditional_mean_via_types_matches_mp() {
        let mut rng = stream(28, 0);
        let rho = random_density(3, &mut rng);
        let n = 3;
        let a = linalg::kron_power(&rho.density(), n);
        let paths = mp_map(&a, 3, n, 1).unwrap();
        let conditional = paths.direct.scale(1.0 / paths.success);
        assert!(max_abs_diff(&conditional, &psi_mean(&rho, n).unwrap()) < 1e-9);
    }

    #[test]
    fn sampler_success_rate_matches_z() {
        let mut rng = stream(29, 0);
        let rho = spectral_decompose(&CMatrix::from_fn(2, 2, |i, j| {
            if i == j && i == 0 {
                Complex64::new(0.9, 0.0)
            } else if i == j {
                Complex64::new(0.1, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        }))
        .unwrap();
        let n = 10;
        let sampler = Sampler::new(&rho, n).unwrap();
        let trials = 20_000;
        let mut successes = 0usize;
        for _ in 0..trials {
            if sampler.sample(&mut rng).unwrap().is_success() {
                successes += 1;
            }
        }
        let z = sampler.z();
        let rate = successes as f64 / trials as f64;
        let sigma = (z * (1.0 - z) / trials as f64).sqrt();
        assert!((rate - z).abs() < 4.0 * sigma, "rate {rate} vs Z {z}");
    }

    #[test]
    fn pure_state_overlap_law() {
        // for pure rho, x = |<psi|phi>|^2 has CDF x^{n+1} on a qubit
        let mut rng = stream(30, 0);
        let pure = depolarized_instance(2, 0.0, &e0(2), &mut rng).unwrap();
        let n = 4;
        let sampler = Sampler::new(&pure, n).unwrap();
        let trials = 30_000;
        let mut xs = Vec::with_capacity(trials);
        for _ in 0..trials {
            if let MeasurementOutcome::Success { psi, .. } = sampler.sample(&mut rng).unwrap() {
                xs.push(psi[0].norm_sqr());
            }
        }
        assert_eq!(xs.len(), trials, "pure state must always succeed");
        for q in [0.3, 0.5, 0.7, 0.9] {
            let cdf = q as f64;
            let threshold = cdf.powf(1.0 / (n as f64 + 1.0));
            let emp = xs.iter().filter(|&&x| x <= threshold).count() as f64 / trials as f64;
            let sigma = (cdf * (1.0 - cdf) / trials as f64).sqrt();
            assert!((emp - cdf).abs() < 4.0 * sigma, "CDF mismatch at q={q}: {emp}");
        }
    }

    #[test]
    fn maximally_mixed_gives_haar_outcomes() {
        let mut rng = stream(31, 0);
        let mm = spectral_decompose(&identity(2).scale(0.5)).unwrap();
        let sampler = Sampler::new(&mm, 2).unwrap();
        let mut acc = CMatrix::zeros(2, 2);
        let mut count = 0;
        for _ in 0..40_000 {
            if let MeasurementOutcome::Success { psi, .. } = sampler.sample(&mut rng).unwrap() {
                acc += &psi * psi.adjoint();
                count += 1;
            }
        }
        acc /= Complex64::new(count as f64, 0.0);
        let tol = 4.0 / (count as f64).sqrt();
        assert!(max_abs_diff(&acc, &identity(2).scale(0.5)) < tol);
    }

    #[test]
    fn estimator_arithmetic_and_trace() {
        let outcome = MeasurementOutcome::Success { psi: e0(2), copies_consumed: 4 };
        let est = estimator(&outcome, 2, 4).unwrap();
        assert!((est.matrix[(0, 0)].re - 1.25).abs() < 1e-12);
        assert!((est.matrix[(1, 1)].re + 0.25).abs() < 1e-12);
        assert!((trace(&est.matrix).re - 1.0).abs() < 1e-12);
        assert!(matches!(
            estimator(&MeasurementOutcome::Failure { copies_consumed: 4 }, 2, 4),
            Err(Error::FailedOutcome)
        ));
    }

    #[test]
    fn estimator_is_unbiased_for_m1() {
        let mut rng = stream(32, 0);
        let rho = spectral_decompose(&CMatrix::from_fn(2, 2, |i, j| {
            if i == j && i == 0 {
                Complex64::new(0.9, 0.0)
            } else if i == j {
                Complex64::new(0.1, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        }))
        .unwrap();
        let n = 10;
        let sampler = Sampler::new(&rho, n).unwrap();
        let m1 = m_k_exact(&rho, n, 1).unwrap();
        let mut acc = CMatrix::zeros(2, 2);
        let mut count = 0usize;
        while count < 50_000 {
            let out = sampler.sample(&mut rng).unwrap();
            if out.is_success() {
                acc += estimator(&out, 2, n).unwrap().matrix;
                count += 1;
            }
        }
        acc /= Complex64::new(count as f64, 0.0);
        // single-shot sd of each entry is O((d+n)/n) ~ 1.2; 4 sigma of the mean
        let tol = 4.0 * 1.2 / (count as f64).sqrt();
        assert!(max_abs_diff(&acc, &m1) < tol, "mean deviates by {}", max_abs_diff(&acc, &m1));
    }

    #[test]
    fn variance_bound_values_and_monotonicity() {
        let mut rng = stream(33, 0);
        let pure = depolarized_instance(2, 0.0, &e0(2), &mut rng).unwrap();
        let o = Observable::new(CMatrix::from_fn(2, 2, |i, j| {
            if i == 0 && j == 0 { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) }
        }))
        .unwrap();
        let b = estimator_variance_bound(&pure, &o, 100, C_DELTA_DEFAULT).unwrap();
        assert!((b - (1e-4 + 6e-2 + 8e-4)).abs() < 1e-12);
        let mut prev = f64::INFINITY;
        let rho = random_gapped_state(2, (0.8, 0.9), &mut rng);
        for n in 2..20 {
            let v = estimator_variance_bound(&rho, &o, n, C_DELTA_DEFAULT).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn empirical_variance_within_bound() {
        let mut rng = stream(34, 0);
        let rho = spectral_decompose(&CMatrix::from_fn(2, 2, |i, j| {
            if i == j && i == 0 {
                Complex64::new(0.9, 0.0)
            } else if i == j {
                Complex64::new(0.1, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        }))
        .unwrap();
        let n = 10;
        let o = crate::states::random_observable(2, 1.5, &mut rng).unwrap();
        let sampler = Sampler::new(&rho, n).unwrap();
        let mut values = Vec::new();
        while values.len() < 20_000 {
            let out = sampler.sample(&mut rng).unwrap();
            if out.is_success() {
                values.push(o.expectation(&estimator(&out, 2, n).unwrap().matrix));
            }
        }
        let mean: f64 = values.iter().sum::<f64>() / values.len() as f64;
        let var: f64 =
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (values.len() - 1) as f64;
        let bound = estimator_variance_bound(&rho, &o, n, C_DELTA_DEFAULT).unwrap();
        assert!(var <= bound, "empirical variance {var} exceeds bound {bound}");
    }
}
