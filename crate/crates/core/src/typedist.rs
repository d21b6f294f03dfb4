//! Type-vector combinatorics for products of a fixed spectral basis.
//!
//! Expanding `rho^(x)n = (sum_i lambda_i Phi_i)^(x)n` and grouping terms by how
//! many factors use each eigenstate gives one symmetrized state `sigma(e)` per
//! occupancy vector `e`. This module enumerates the vectors, evaluates the
//! closed forms for the success weight and the first two symmetric partial
//! traces of `sigma(e)`, and implements the success-conditioned distribution
//! over `e` together with its independent-geometric approximation and the
//! total-variation / moment gap bounds between the two.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, binomial, factorial, sym_dim, CMatrix};
use crate::states::{Observable, SpectralState};

/// Cap on the number of enumerated type vectors.
pub const ENUMERATION_CAP: u128 = 1_000_000;

/// Per-coordinate geometric tail truncation threshold.
pub const GEOM_TRUNCATION: f64 = 1e-14;

/// Occupancy vector `e = (e_1, .., e_d)` with `sum e_i = n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TypeVector {
    counts: Vec<usize>,
}

impl TypeVector {
    pub fn new(counts: Vec<usize>) -> Self {
        TypeVector { counts }
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn d(&self) -> usize {
        self.counts.len()
    }

    pub fn n(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Multinomial coefficient binom(n, e) = n! / prod e_i!.
    pub fn multinomial(&self) -> u128 {
        let mut rem = self.n() as u64;
        let mut acc: u128 = 1;
        for &c in &self.counts {
            acc *= binomial(rem, c as u64);
            rem -= c as u64;
        }
        acc
    }

    /// The monomial `lambda^e = prod_i lambda_i^{e_i}`.
    pub fn monomial(&self, lambda: &[f64]) -> f64 {
        self.counts.iter().zip(lambda).map(|(&e, &l)| l.powi(e as i32)).product()
    }
}

/// All compositions of `n` into `d` non-negative parts, in lexicographic order
/// (first coordinate decreasing).
pub fn enumerate_types(d: usize, n: usize) -> Result<Vec<TypeVector>> {
    let count = sym_dim(d, n);
    if count > ENUMERATION_CAP {
        return Err(Error::EnumerationOverflow { count, cap: ENUMERATION_CAP });
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut current = vec![0usize; d];
    fill(&mut out, &mut current, 0, n);
    fn fill(out: &mut Vec<TypeVector>, current: &mut Vec<usize>, pos: usize, rem: usize) {
        if pos + 1 == current.len() {
            current[pos] = rem;
            out.push(TypeVector::new(current.clone()));
            return;
        }
        for v in (0..=rem).rev() {
            current[pos] = v;
            fill(out, current, pos + 1, rem - v);
        }
    }
    debug_assert_eq!(out.len() as u128, count);
    Ok(out)
}

/// The symmetrized state `sigma(e) = (1/n!) sum_pi W_pi (Phi_1^(x)e_1 (x) ...
/// (x) Phi_d^(x)e_d) W_pi^dag`, built densely (for oracle checks only).
pub fn sigma_state(e: &TypeVector, basis: &SpectralState) -> Result<CMatrix> {
    let d = e.d();
    let n = e.n();
    let dim = linalg::qudit_dim(d, n)?;
    // base product state in a fixed factor order
    let mut base = CMatrix::identity(1, 1);
    for (i, &c) in e.counts().iter().enumerate() {
        let phi = basis.projector(i);
        for _ in 0..c {
            base = linalg::kron(&base, &phi);
        }
    }
    let mut acc = CMatrix::zeros(dim, dim);
    let mut count: u128 = 0;
    for perm in itertools::Itertools::permutations(0..n, n) {
        let pi = linalg::Permutation::from_map(perm).expect("valid image list");
        let w = linalg::permutation_operator(&pi, d)?;
        acc += &w * &base * w.adjoint();
        count += 1;
    }
    debug_assert_eq!(count, factorial(n as u64));
    Ok(acc.scale(1.0 / count as f64))
}

/// Success weight of `sigma(e)`: `Tr(Pi_sym sigma(e)) = e!/n! = 1/binom(n,e)`.
pub fn z_of_type(e: &TypeVector) -> f64 {
    1.0 / e.multinomial() as f64
}

/// First symmetric moment of `sigma(e)`: `(1/n) sum_i e_i Phi_i`.
pub fn m1_of_type(e: &TypeVector, basis: &SpectralState) -> CMatrix {
    let d = e.d();
    let n = e.n() as f64;
    let mut out = CMatrix::zeros(d, d);
    for (i, &c) in e.counts().iter().enumerate() {
        if c > 0 {
            out += basis.projector(i).scale(c as f64 / n);
        }
    }
    out
}

/// Second symmetric moment of `sigma(e)`:
/// `(2/(n(n-1))) Pi_sym^(2) (sum_{i != j} e_i e_j Phi_i (x) Phi_j
///  + sum_k binom(e_k, 2) Phi_k^(x)2)`.
pub fn m2_of_type(e: &TypeVector, basis: &SpectralState) -> Result<CMatrix> {
    let d = e.d();
    let n = e.n();
    if n < 2 {
        return Err(Error::InvalidParameter { msg: "second moment needs n >= 2".into() });
    }
    let mut inner = CMatrix::zeros(d * d, d * d);
    let projs: Vec<CMatrix> = (0..d).map(|i| basis.projector(i)).collect();
    for i in 0..d {
        for j in 0..d {
            let weight = if i != j {
                (e.counts()[i] * e.counts()[j]) as f64
            } else {
                binomial(e.counts()[i] as u64, 2) as f64
            };
            if weight > 0.0 {
                inner += linalg::kron(&projs[i], &projs[j]).scale(weight);
            }
        }
    }
    let p2 = linalg::sym_projector(d, 2)?;
    Ok((p2 * inner).scale(2.0 / (n * (n - 1)) as f64))
}

/// The success-conditioned distribution over type vectors:
/// `mass(e) = lambda^e / Z` with `Z = sum_e lambda^e`.
#[derive(Debug, Clone)]
pub struct ExactDist {
    lambda: Vec<f64>,
    n: usize,
    types: Vec<TypeVector>,
    mass: Vec<f64>,
    z: f64,
}

impl ExactDist {
    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Normalization constant: the measurement success probability.
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn types(&self) -> &[TypeVector] {
        &self.types
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn mass_of(&self, counts: &[usize]) -> f64 {
        self.types
            .iter()
            .position(|t| t.counts() == counts)
            .map(|i| self.mass[i])
            .unwrap_or(0.0)
    }

    /// Mean occupancy vector `E[e]` (length d).
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.lambda.len()];
        for (t, &p) in self.types.iter().zip(&self.mass) {
            for (mi, &c) in m.iter_mut().zip(t.counts()) {
                *mi += p * c as f64;
            }
        }
        m
    }

    /// Covariance matrix of `e` (d x d, rank at most d-1).
    pub fn covariance(&self) -> DMatrix<f64> {
        let d = self.lambda.len();
        let mean = self.mean();
        let mut cov = DMatrix::zeros(d, d);
        for (t, &p) in self.types.iter().zip(&self.mass) {
            for i in 0..d {
                for j in 0..d {
                    cov[(i, j)] +=
                        p * (t.counts()[i] as f64 - mean[i]) * (t.counts()[j] as f64 - mean[j]);
                }
            }
        }
        cov
    }

    /// Sample a type vector.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> &TypeVector {
        let mut u: f64 = rng.gen();
        for (t, &p) in self.types.iter().zip(&self.mass) {
            u -= p;
            if u <= 0.0 {
                return t;
            }
        }
        self.types.last().expect("non-empty support")
    }
}

/// Build the exact distribution for spectrum `lambda` at width `n`.
pub fn exact_dist(lambda: &[f64], n: usize) -> Result<ExactDist> {
    let d = lambda.len();
    let types = enumerate_types(d, n)?;
    let weights: Vec<f64> = types.iter().map(|t| t.monomial(lambda)).collect();
    let z: f64 = weights.iter().sum();
    let mass = weights.iter().map(|w| w / z).collect();
    Ok(ExactDist { lambda: lambda.to_vec(), n, types, mass, z })
}

/// Independent-geometric approximation: tail occupancies `e_i`, i >= 2, are
/// independent geometric with ratio `q_i = lambda_i / lambda_1`, and
/// `e_1 = n - sum_{i>=2} e_i` (possibly negative).
///
/// For enumeration each coordinate is truncated once its remaining mass drops
/// below [`GEOM_TRUNCATION`]; the total truncated mass is tracked in
/// `truncation_error` and must be added to any comparison tolerance.
#[derive(Debug, Clone)]
pub struct GeomDist {
    lambda: Vec<f64>,
    n: usize,
    /// q_i = lambda_{i+2} / lambda_1 for tail coordinate i (0-based).
    ratios: Vec<f64>,
    /// inclusive enumeration cut per tail coordinate
    cuts: Vec<usize>,
    truncation_error: f64,
}

impl GeomDist {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn ratios(&self) -> &[f64] {
        &self.ratios
    }

    pub fn truncation_error(&self) -> f64 {
        self.truncation_error
    }

    /// Probability of tail occupancies `t = (e_2, .., e_d)`.
    pub fn tail_mass(&self, t: &[usize]) -> f64 {
        t.iter()
            .zip(&self.ratios)
            .map(|(&j, &q)| if q == 0.0 { if j == 0 { 1.0 } else { 0.0 } } else { (1.0 - q) * q.powi(j as i32) })
            .product()
    }

    /// Enumerate all tail vectors within the truncation box.
    pub fn enumerate_tails(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new()];
        for &cut in &self.cuts {
            let mut next = Vec::with_capacity(out.len() * (cut + 1));
            for prefix in &out {
                for j in 0..=cut {
                    let mut t = prefix.clone();
                    t.push(j);
                    next.push(t);
                }
            }
            out = next;
        }
        out
    }

    /// Enumerated probability that `e_1 = n - sum t < 0`.
    pub fn pr_e1_negative(&self) -> f64 {
        self.enumerate_tails()
            .iter()
            .filter(|t| t.iter().sum::<usize>() > self.n)
            .map(|t| self.tail_mass(t))
            .sum()
    }

    /// Enumerated probability that the tail sum equals `j` exactly.
    pub fn pr_tail_sum_equals(&self, j: usize) -> f64 {
        self.enumerate_tails()
            .iter()
            .filter(|t| t.iter().sum::<usize>() == j)
            .map(|t| self.tail_mass(t))
            .sum()
    }

    /// Closed-form mean of the full occupancy vector `(e_1, .., e_d)`:
    /// `E[e_i] = lambda_i / (lambda_1 - lambda_i)` for i >= 2 and
    /// `E[e_1] = n - sum`.
    pub fn mean_closed_form(&self) -> Vec<f64> {
        let tail: Vec<f64> = self.ratios.iter().map(|&q| q / (1.0 - q)).collect();
        let mut out = vec![self.n as f64 - tail.iter().sum::<f64>()];
        out.extend(tail);
        out
    }

    /// Closed-form per-coordinate variance for i >= 2:
    /// `Var[e_i] = lambda_i lambda_1 / (lambda_1 - lambda_i)^2 = q/(1-q)^2`.
    pub fn variance_closed_form(&self) -> Vec<f64> {
        self.ratios.iter().map(|&q| q / ((1.0 - q) * (1.0 - q))).collect()
    }

    /// Enumerated mean of the full occupancy vector (within truncation error).
    pub fn mean_enumerated(&self) -> Vec<f64> {
        let d = self.lambda.len();
        let mut m = vec![0.0; d];
        for t in self.enumerate_tails() {
            let p = self.tail_mass(&t);
            let tail_sum: usize = t.iter().sum();
            m[0] += p * (self.n as f64 - tail_sum as f64);
            for (i, &j) in t.iter().enumerate() {
                m[i + 1] += p * j as f64;
            }
        }
        m
    }

    /// Enumerated covariance of the full occupancy vector.
    pub fn covariance(&self) -> DMatrix<f64> {
        let d = self.lambda.len();
        let mean = self.mean_enumerated();
        let mut cov = DMatrix::zeros(d, d);
        for t in self.enumerate_tails() {
            let p = self.tail_mass(&t);
            let tail_sum: usize = t.iter().sum();
            let mut full = vec![self.n as f64 - tail_sum as f64];
            full.extend(t.iter().map(|&j| j as f64));
            for i in 0..d {
                for j in 0..d {
                    cov[(i, j)] += p * (full[i] - mean[i]) * (full[j] - mean[j]);
                }
            }
        }
        cov
    }
}

/// Build the geometric approximation for spectrum `lambda` at width `n`.
/// Requires a strict gap `lambda_1 > lambda_i` for all i >= 2.
pub fn geom_dist(lambda: &[f64], n: usize) -> Result<GeomDist> {
    let l1 = lambda[0];
    let mut ratios = Vec::with_capacity(lambda.len() - 1);
    for (i, &li) in lambda.iter().enumerate().skip(1) {
        if li >= l1 {
            return Err(Error::SpectralGap { lambda1: l1, i: i + 1, lambda_i: li });
        }
        ratios.push(li / l1);
    }
    let mut truncation_error = 0.0;
    let cuts: Vec<usize> = ratios
        .iter()
        .map(|&q| {
            if q <= 0.0 {
                return 0;
            }
            // smallest c with remaining mass q^{c+1} <= threshold
            let c = (GEOM_TRUNCATION.ln() / q.ln()).ceil().max(1.0) as usize;
            truncation_error += q.powi(c as i32 + 1);
            c
        })
        .collect();
    Ok(GeomDist { lambda: lambda.to_vec(), n, ratios, cuts, truncation_error })
}

/// Total-variation bound `Delta = ((1-lambda_1)/lambda_1)^{n+1} *
/// lambda_1 / (2 lambda_1 - 1)`; valid for `lambda_1 > 1/2`.
pub fn delta_bound(lambda1: f64, n: usize) -> Result<f64> {
    if lambda1 <= 0.5 {
        return Err(Error::SubcriticalSpectrum { lambda1 });
    }
    let r = (1.0 - lambda1) / lambda1;
    Ok(r.powi(n as i32 + 1) * lambda1 / (2.0 * lambda1 - 1.0))
}

/// Exact total-variation distance between the conditioned distribution and its
/// geometric approximation, by enumeration. Returns `(tv, truncation_error)`.
///
/// Since the exact law is the approximation conditioned on `e_1 >= 0`, the TV
/// distance equals the approximation's mass on `e_1 < 0`; both quantities are
/// computed independently here and cross-checked by callers.
pub fn tv_distance(exact: &ExactDist, geom: &GeomDist) -> (f64, f64) {
    assert_eq!(exact.n(), geom.n(), "distributions must share n");
    let n = geom.n;
    let mut half_sum = 0.0;
    let mut covered_exact = 0.0;
    for t in geom.enumerate_tails() {
        let p_geom = geom.tail_mass(&t);
        let tail_sum: usize = t.iter().sum();
        let p_exact = if tail_sum <= n {
            let mut counts = vec![n - tail_sum];
            counts.extend(t.iter().copied());
            let m = exact.mass_of(&counts);
            covered_exact += m;
            m
        } else {
            0.0
        };
        half_sum += (p_exact - p_geom).abs();
    }
    // exact mass outside the truncation box counts fully toward TV
    half_sum += 1.0 - covered_exact;
    (half_sum / 2.0, geom.truncation_error())
}

/// First-order mean-gap bound `(2 Delta / (1 - Delta)) (n + 1/(2 lambda_1 - 1))`.
pub fn mean_gap_bound(lambda: &[f64], n: usize) -> Result<f64> {
    let delta = delta_bound(lambda[0], n)?;
    Ok(2.0 * delta / (1.0 - delta) * (n as f64 + 1.0 / (2.0 * lambda[0] - 1.0)))
}

/// Result of comparing the two covariance matrices.
pub struct CovarianceCheck {
    pub passed: bool,
    pub min_eigenvalue: f64,
    pub exact: DMatrix<f64>,
    pub geometric: DMatrix<f64>,
}

/// Verify that `Sigma_geom - (1 - Delta)^2 Sigma_exact` is positive
/// semidefinite (min eigenvalue >= -1e-9), returning both matrices.
pub fn covariance_check(lambda: &[f64], n: usize) -> Result<CovarianceCheck> {
    let exact = exact_dist(lambda, n)?.covariance();
    let geom = geom_dist(lambda, n)?.covariance();
    let delta = delta_bound(lambda[0], n)?;
    let diff = &geom - exact.scale((1.0 - delta) * (1.0 - delta));
    let sym = (&diff + diff.transpose()).scale(0.5);
    let min_eigenvalue =
        sym.symmetric_eigen().eigenvalues.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    Ok(CovarianceCheck { passed: min_eigenvalue >= -1e-9, min_eigenvalue, exact, geometric: geom })
}

/// Diagonal observable coefficients `O_i = Tr(O Phi_i)` in the state's basis.
pub fn obs_coeff_single(o: &Observable, basis: &SpectralState) -> Vec<f64> {
    (0..basis.d()).map(|i| o.expectation(&basis.projector(i))).collect()
}

/// Pair coefficients `O_ij = Tr(O Phi_i O Phi_j) = |<v_i|O|v_j>|^2`.
pub fn obs_coeff_pair(o: &Observable, basis: &SpectralState) -> DMatrix<f64> {
    let d = basis.d();
    DMatrix::from_fn(d, d, |i, j| {
        let vi = basis.eigenvector(i);
        let vj = basis.eigenvector(j);
        let amp: Complex64 = (vi.adjoint() * o.matrix() * vj)[(0, 0)];
        amp.norm_sqr()
    })
}

/// Distribution table rows for CSV export: occupancy counts (e_1 may be
/// negative on approximation-only rows), exact mass, approximate mass.
pub fn dist_table(exact: &ExactDist, geom: &GeomDist) -> Vec<(Vec<i64>, f64, f64)> {
    let n = geom.n as i64;
    let mut rows = Vec::new();
    for t in geom.enumerate_tails() {
        let tail_sum: i64 = t.iter().map(|&j| j as i64).sum();
        let e1 = n - tail_sum;
        let mut counts: Vec<i64> = vec![e1];
        counts.extend(t.iter().map(|&j| j as i64));
        let p_geom = geom.tail_mass(&t);
        let p_exact = if e1 >= 0 {
            let u: Vec<usize> = counts.iter().map(|&c| c as usize).collect();
            exact.mass_of(&u)
        } else {
            0.0
        };
        rows.push((counts, p_exact, p_geom));
    }
    rows.sort_by(|a, b| b.0.cmp(&a.0));
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::states::{random_density, random_gapped_state};
    use crate::linalg::{max_abs_diff, partial_trace, sym_projector, trace};

    #[test]
    fn enumerate_small_cases() {
        let t22 = enumerate_types(2, 2).unwrap();
        let counts: Vec<&[usize]> = t22.iter().map(|t| t.counts()).collect();
        assert_eq!(counts, vec![&[2, 0][..], &[1, 1], &[0, 2]]);
        assert_eq!(enumerate_types(3, 4).unwrap().len() as u128, sym_dim(3, 4));
        let t41 = enumerate_types(4, 1).unwrap();
        assert_eq!(t41.len(), 4);
        assert!(t41.iter().all(|t| t.n() == 1));
    }

    #[test]
    fn sigma_of_concentrated_type_is_pure_power() {
        let mut rng = stream(11, 0);
        let basis = random_density(2, &mut rng);
        let e = TypeVector::new(vec![3, 0]);
        let s = sigma_state(&e, &basis).unwrap();
        let expect = linalg::kron_power(&basis.projector(0), 3);
        assert!(max_abs_diff(&s, &expect) < 1e-12);
    }

    #[test]
    fn mixture_identity_reconstructs_tensor_power() {
        let mut rng = stream(12, 0);
        for (d, n) in [(2usize, 2usize), (2, 3), (3, 2), (3, 3)] {
            let basis = random_density(d, &mut rng);
            let lambda = basis.eigenvalues().to_vec();
            let mut acc = CMatrix::zeros(d.pow(n as u32), d.pow(n as u32));
            for e in enumerate_types(d, n).unwrap() {
                let coeff = e.multinomial() as f64 * e.monomial(&lambda);
                acc += sigma_state(&e, &basis).unwrap().scale(coeff);
            }
            let expect = linalg::kron_power(&basis.density(), n);
            assert!(max_abs_diff(&acc, &expect) < 1e-10, "mixture identity failed d={d} n={n}");
        }
    }

    #[test]
    fn sigma_is_exchangeable() {
        let mut rng = stream(13, 0);
        let basis = random_density(2, &mut rng);
        let e = TypeVector::new(vec![2, 2]);
        let s = sigma_state(&e, &basis).unwrap();
        for _ in 0..6 {
            let pi = linalg::Permutation::random(4, &mut rng);
            let w = linalg::permutation_operator(&pi, 2).unwrap();
            assert!(max_abs_diff(&(&w * &s), &(&s * &w)) < 1e-10);
        }
    }

    #[test]
    fn z_of_type_matches_projector_oracle() {
        let mut rng = stream(14, 0);
        assert_eq!(z_of_type(&TypeVector::new(vec![5, 0])), 1.0);
        for (d, e) in [(2usize, vec![1usize, 1]), (2, vec![2, 1]), (3, vec![1, 1, 1]), (3, vec![2, 0, 1])] {
            let basis = random_density(d, &mut rng);
            let tv = TypeVector::new(e);
            let s = sigma_state(&tv, &basis).unwrap();
            let p = sym_projector(d, tv.n()).unwrap();
            let oracle = trace(&(p * s)).re;
            assert!((z_of_type(&tv) - oracle).abs() < 1e-10, "z mismatch at {:?}", tv);
        }
        assert!((z_of_type(&TypeVector::new(vec![1, 1])) - 0.5).abs() < 1e-12);
        assert!((z_of_type(&TypeVector::new(vec![2, 1])) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn m1_of_type_matches_partial_trace_oracle() {
        let mut rng = stream(15, 0);
        for (d, e) in [(2usize, vec![1usize, 1]), (2, vec![2, 1]), (2, vec![1, 2]), (3, vec![2, 1, 0]), (3, vec![1, 1, 1])] {
            let basis = random_density(d, &mut rng);
            let tv = TypeVector::new(e);
            let n = tv.n();
            let s = sigma_state(&tv, &basis).unwrap();
            let p = sym_projector(d, n).unwrap();
            let traced: Vec<usize> = (1..n).collect();
            let oracle = partial_trace(&(p * s), &traced, d).unwrap().scale(1.0 / z_of_type(&tv));
            let closed = m1_of_type(&tv, &basis);
            assert!(max_abs_diff(&closed, &oracle) < 1e-10, "m1 mismatch at {:?}", tv);
            assert!((trace(&closed).re - 1.0).abs() < 1e-12);
        }
        // concentrated type gives the principal projector
        let basis = random_density(2, &mut rng);
        let e = TypeVector::new(vec![4, 0]);
        assert!(max_abs_diff(&m1_of_type(&e, &basis), &basis.projector(0)) < 1e-12);
    }

    #[test]
    fn m2_of_type_matches_partial_trace_oracle() {
        let mut rng = stream(16, 0);
        for (d, e) in [(2usize, vec![1usize, 1]), (2, vec![2, 1]), (2, vec![2, 2]), (3, vec![1, 1, 1]), (3, vec![2, 1, 1])] {
            let basis = random_density(d, &mut rng);
            let tv = TypeVector::new(e);
            let n = tv.n();
            let s = sigma_state(&tv, &basis).unwrap();
            let p = sym_projector(d, n).unwrap();
            let traced: Vec<usize> = (2..n).collect();
            let oracle = partial_trace(&(p * s), &traced, d).unwrap().scale(1.0 / z_of_type(&tv));
            let closed = m2_of_type(&tv, &basis).unwrap();
            assert!(max_abs_diff(&closed, &oracle) < 1e-10, "m2 mismatch at {:?}", tv);
            assert!((trace(&closed).re - 1.0).abs() < 1e-10);
            // SWAP invariance
            let swap =
                linalg::permutation_operator(&linalg::Permutation::transposition(2, 0, 1), d).unwrap();
            assert!(max_abs_diff(&(&swap * &closed * &swap), &closed) < 1e-10);
        }
        // concentrated type gives the pure tensor square
        let basis = random_density(2, &mut rng);
        let e = TypeVector::new(vec![3, 0]);
        let phi = basis.projector(0);
        assert!(max_abs_diff(&m2_of_type(&e, &basis).unwrap(), &linalg::kron(&phi, &phi)) < 1e-10);
    }

    #[test]
    fn exact_dist_small_case() {
        let d = exact_dist(&[0.8, 0.2], 2).unwrap();
        assert!((d.z() - 0.84).abs() < 1e-12);
        let expect = [0.64 / 0.84, 0.16 / 0.84, 0.04 / 0.84];
        for (m, e) in d.masses().iter().zip(expect) {
            assert!((m - e).abs() < 1e-12);
        }
        assert!((d.masses().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // pure spectrum: point mass
        let p = exact_dist(&[1.0, 0.0], 3).unwrap();
        assert!((p.mass_of(&[3, 0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn geometric_moments_closed_forms() {
        let lambda = [0.7, 0.2, 0.1];
        let g = geom_dist(&lambda, 5).unwrap();
        let mean = g.mean_closed_form();
        let var = g.variance_closed_form();
        for i in 1..3 {
            let li = lambda[i];
            let l1 = lambda[0];
            assert!((mean[i] - li / (l1 - li)).abs() < 1e-12);
            assert!((var[i - 1] - li * l1 / ((l1 - li) * (l1 - li))).abs() < 1e-12);
        }
        // enumerated moments agree within truncation
        let me = g.mean_enumerated();
        for i in 0..3 {
            assert!((me[i] - mean[i]).abs() < 1e-9, "coordinate {i}: {} vs {}", me[i], mean[i]);
        }
        // zero eigenvalue pins the coordinate at zero
        let g0 = geom_dist(&[0.9, 0.1, 0.0], 4).unwrap();
        assert_eq!(g0.mean_closed_form()[2], 0.0);
        assert!(geom_dist(&[0.5, 0.5], 3).is_err());
    }

    #[test]
    fn conditioning_recovers_exact_distribution() {
        for (lambda, ns) in [
            (vec![0.8, 0.2], vec![2usize, 4, 6]),
            (vec![0.6, 0.25, 0.15], vec![2, 4, 6]),
        ] {
            for n in ns {
                let ex = exact_dist(&lambda, n).unwrap();
                let g = geom_dist(&lambda, n).unwrap();
                let keep = 1.0 - g.pr_e1_negative();
                for (t, &mass) in ex.types().iter().zip(ex.masses()) {
                    let tail: Vec<usize> = t.counts()[1..].to_vec();
                    let cond = g.tail_mass(&tail) / keep;
                    assert!(
                        (cond - mass).abs() < 1e-10 + g.truncation_error(),
                        "conditioning mismatch at {:?} (n={n})",
                        t
                    );
                }
            }
        }
    }

    #[test]
    fn tv_equals_negative_mass_and_respects_bound() {
        for (lambda, n) in [(vec![0.9, 0.1], 5usize), (vec![0.7, 0.2, 0.1], 4), (vec![0.62, 0.38], 6)] {
            let ex = exact_dist(&lambda, n).unwrap();
            let g = geom_dist(&lambda, n).unwrap();
            let (tv, trunc) = tv_distance(&ex, &g);
            let neg = g.pr_e1_negative();
            assert!((tv - neg).abs() <= 1e-12 + trunc, "tv {tv} vs neg mass {neg}");
            assert!(tv <= delta_bound(lambda[0], n).unwrap() + trunc);
        }
        // TV decreases in n
        let lambda = [0.8, 0.2];
        let mut prev = f64::INFINITY;
        for n in 2..=8 {
            let (tv, _) = tv_distance(&exact_dist(&lambda, n).unwrap(), &geom_dist(&lambda, n).unwrap());
            assert!(tv <= prev + 1e-13, "TV not monotone at n={n}");
            prev = tv;
        }
    }

    #[test]
    fn delta_bound_values() {
        assert_eq!(delta_bound(1.0, 5).unwrap(), 0.0);
        let v = delta_bound(0.9, 10).unwrap();
        let expect = (1.0f64 / 9.0).powi(11) * 0.9 / 0.8;
        assert!((v - expect).abs() < 1e-22);
        assert!((v - 3.59e-11).abs() < 0.01e-11);
        assert!(delta_bound(0.5, 3).is_err());
    }

    #[test]
    fn mean_gap_within_bound() {
        // pure spectrum: zero gap
        let g = geom_dist(&[1.0, 0.0], 4).unwrap();
        let ex = exact_dist(&[1.0, 0.0], 4).unwrap();
        let gap: f64 =
            g.mean_enumerated().iter().zip(ex.mean()).map(|(a, b)| (a - b).abs()).sum();
        assert!(gap < 1e-12);
        for (lambda, n) in [(vec![0.9, 0.1], 5usize), (vec![0.7, 0.2, 0.1], 4)] {
            let ex = exact_dist(&lambda, n).unwrap();
            let g = geom_dist(&lambda, n).unwrap();
            let gap: f64 =
                g.mean_enumerated().iter().zip(ex.mean()).map(|(a, b)| (a - b).abs()).sum();
            let bound = mean_gap_bound(&lambda, n).unwrap();
            assert!(gap <= bound + g.truncation_error(), "gap {gap} > bound {bound}");
        }
        // bound vanishes as n grows
        assert!(mean_gap_bound(&[0.8, 0.2], 40).unwrap() < 1e-15);
    }

    #[test]
    fn covariance_dominance() {
        for (lambda, n) in [(vec![0.8, 0.2], 4usize), (vec![0.7, 0.2, 0.1], 4)] {
            let check = covariance_check(&lambda, n).unwrap();
            assert!(check.passed, "min eigenvalue {}", check.min_eigenvalue);
        }
        let pure = covariance_check(&[1.0, 0.0], 3).unwrap();
        assert!(pure.exact.amax() < 1e-12 && pure.geometric.amax() < 1e-12);
    }

    #[test]
    fn tail_sum_tail_bound() {
        let lambda = [0.75, 0.15, 0.1];
        let g = geom_dist(&lambda, 6).unwrap();
        let r = (1.0 - lambda[0]) / lambda[0];
        for j in 0..=20usize {
            let p = g.pr_tail_sum_equals(j);
            assert!(p <= r.powi(j as i32) + 1e-12, "j={j}: {p} > {}", r.powi(j as i32));
        }
    }

    #[test]
    fn obs_coeffs_match_definitions() {
        let mut rng = stream(17, 0);
        let basis = random_density(3, &mut rng);
        let o = crate::states::random_observable(3, 2.0, &mut rng).unwrap();
        let singles = obs_coeff_single(&o, &basis);
        let pairs = obs_coeff_pair(&o, &basis);
        for i in 0..3 {
            let phi = basis.projector(i);
            assert!((singles[i] - trace(&(o.matrix() * &phi)).re).abs() < 1e-10);
            for j in 0..3 {
                let phj = basis.projector(j);
                let direct = trace(&(o.matrix() * &phi * o.matrix() * &phj)).re;
                assert!((pairs[(i, j)] - direct).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn enumeration_cap_enforced() {
        assert!(matches!(enumerate_types(20, 30), Err(Error::EnumerationOverflow { .. })));
    }

    #[test]
    fn dist_table_covers_both_supports() {
        let lambda = [0.8, 0.2];
        let ex = exact_dist(&lambda, 3).unwrap();
        let g = geom_dist(&lambda, 3).unwrap();
        let rows = dist_table(&ex, &g);
        let total_exact: f64 = rows.iter().map(|r| r.1).sum();
        let total_geom: f64 = rows.iter().map(|r| r.2).sum();
        assert!((total_exact - 1.0).abs() < 1e-10);
        assert!((total_geom - 1.0).abs() < 1e-10 + g.truncation_error());
        assert!(rows.iter().any(|r| r.0[0] < 0), "approximation-only rows present");
    }

    #[test]
    fn random_gapped_spectra_have_valid_dists() {
        let mut rng = stream(18, 0);
        for _ in 0..20 {
            let s = random_gapped_state(3, (0.55, 0.95), &mut rng);
            let ex = exact_dist(s.eigenvalues(), 4).unwrap();
            assert!((ex.masses().iter().sum::<f64>() - 1.0).abs() < 1e-10);
            geom_dist(s.eigenvalues(), 4).unwrap();
        }
    }
}
