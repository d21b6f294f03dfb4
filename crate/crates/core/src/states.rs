//! Planted problem instances `rho = (1-eta) phi + eta sigma` and observables.
//!
//! A [`SpectralState`] is a density matrix carried together with its
//! eigendecomposition (eigenvalues sorted descending, orthonormal
//! eigenvectors), so downstream code never re-diagonalizes. Protocol-valid
//! instances have principal eigenvalue above 1/2 and a strict gap to the tail;
//! the strict gap is required because the geometric approximation divides by
//! `lambda_1 - lambda_i`.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector};

/// A density matrix with its spectral decomposition.
///
/// `eigenvalues[i]` pairs with column `i` of `eigenvectors`; eigenvalues are
/// sorted non-increasing. The principal deviation is `eta = 1 - lambda_1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "SpectralStateRepr", into = "SpectralStateRepr")]
pub struct SpectralState {
    d: usize,
    eigenvalues: Vec<f64>,
    eigenvectors: CMatrix,
}

/// JSON wire format: eigenvectors as rows of [re, im] pairs, one row per
/// eigenvector.
#[derive(Serialize, Deserialize)]
struct SpectralStateRepr {
    d: usize,
    eta: f64,
    eigenvalues: Vec<f64>,
    eigenvectors: Vec<Vec<[f64; 2]>>,
}

impl From<SpectralState> for SpectralStateRepr {
    fn from(s: SpectralState) -> Self {
        let eigenvectors = (0..s.d)
            .map(|i| s.eigenvectors.column(i).iter().map(|z| [z.re, z.im]).collect())
            .collect();
        SpectralStateRepr { d: s.d, eta: s.eta(), eigenvalues: s.eigenvalues, eigenvectors }
    }
}

impl TryFrom<SpectralStateRepr> for SpectralState {
    type Error = Error;

    fn try_from(r: SpectralStateRepr) -> Result<Self> {
        if r.eigenvalues.len() != r.d || r.eigenvectors.len() != r.d {
            return Err(Error::InvalidParameter {
                msg: format!("expected {} eigenpairs", r.d),
            });
        }
        let mut vecs = CMatrix::zeros(r.d, r.d);
        for (i, col) in r.eigenvectors.iter().enumerate() {
            if col.len() != r.d {
                return Err(Error::InvalidParameter {
                    msg: format!("eigenvector {i} has length {} != {}", col.len(), r.d),
                });
            }
            for (j, &[re, im]) in col.iter().enumerate() {
                vecs[(j, i)] = Complex64::new(re, im);
            }
        }
        SpectralState::new(r.eigenvalues, vecs)
    }
}

impl SpectralState {
    /// Build from an explicit eigendecomposition, validating the invariants:
    /// eigenvalues non-negative, sorted descending, summing to 1; eigenvector
    /// matrix unitary.
    pub fn new(eigenvalues: Vec<f64>, eigenvectors: CMatrix) -> Result<Self> {
        let d = eigenvalues.len();
        if d == 0 || eigenvectors.nrows() != d || eigenvectors.ncols() != d {
            return Err(Error::InvalidParameter {
                msg: "eigenvector matrix shape must match spectrum length".into(),
            });
        }
        if eigenvalues.iter().any(|l| !l.is_finite()) {
            return Err(Error::NotDensity { msg: "non-finite eigenvalue".into() });
        }
        for w in eigenvalues.windows(2) {
            if w[0] < w[1] {
                return Err(Error::SpectrumOrder {
                    msg: format!("eigenvalues not sorted descending: {} < {}", w[0], w[1]),
                });
            }
        }
        if eigenvalues.iter().any(|&l| l < -1e-10) {
            return Err(Error::NotDensity { msg: "negative eigenvalue".into() });
        }
        let total: f64 = eigenvalues.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::NotDensity { msg: format!("eigenvalues sum to {total}") });
        }
        let gram = eigenvectors.adjoint() * &eigenvectors;
        let dev = linalg::max_abs_diff(&gram, &linalg::identity(d));
        if dev > 1e-10 {
            return Err(Error::InvalidParameter {
                msg: format!("eigenvectors not orthonormal (defect {dev:.3e})"),
            });
        }
        Ok(SpectralState { d, eigenvalues, eigenvectors })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn lambda1(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// Principal deviation `eta = 1 - lambda_1`.
    pub fn eta(&self) -> f64 {
        1.0 - self.eigenvalues[0]
    }

    /// The i-th eigenvector (0-based, sorted by descending eigenvalue).
    pub fn eigenvector(&self, i: usize) -> CVector {
        self.eigenvectors.column(i).into_owned()
    }

    /// Rank-one projector onto the i-th eigenvector.
    pub fn projector(&self, i: usize) -> CMatrix {
        let v = self.eigenvectors.column(i);
        &v * v.adjoint()
    }

    /// Projector onto the principal eigenstate.
    pub fn principal_projector(&self) -> CMatrix {
        self.projector(0)
    }

    /// Reconstruct the density matrix `sum_i lambda_i Phi_i`.
    pub fn density(&self) -> CMatrix {
        let mut rho = CMatrix::zeros(self.d, self.d);
        for i in 0..self.d {
            rho += self.projector(i).scale(self.eigenvalues[i]);
        }
        rho
    }

    /// Whether the protocol's requirement `lambda_1 > 1/2` holds.
    pub fn is_protocol_valid(&self) -> bool {
        self.eigenvalues[0] > 0.5
    }

    /// Whether the tail is uniform (depolarized instance), up to 1e-10.
    pub fn is_depolarized(&self) -> bool {
        if self.d == 1 {
            return true;
        }
        let eta = self.eta();
        let uniform = eta / (self.d - 1) as f64;
        self.eigenvalues[1..].iter().all(|&l| (l - uniform).abs() <= 1e-10)
    }

    /// Error unless the strict spectral gap `lambda_1 > lambda_i` holds for
    /// all i >= 2 (the geometric approximation divides by the gap).
    pub fn require_strict_gap(&self) -> Result<()> {
        let l1 = self.eigenvalues[0];
        for (i, &li) in self.eigenvalues.iter().enumerate().skip(1) {
            if li >= l1 {
                return Err(Error::SpectralGap { lambda1: l1, i: i + 1, lambda_i: li });
            }
        }
        Ok(())
    }

    /// Error unless `lambda_1 > 1/2`.
    pub fn require_protocol_valid(&self) -> Result<()> {
        if self.is_protocol_valid() {
            Ok(())
        } else {
            Err(Error::SubcriticalSpectrum { lambda1: self.eigenvalues[0] })
        }
    }
}

/// Build the planted instance `rho = (1-eta) |phi><phi| + eta sigma` where
/// `sigma` lives in the orthogonal complement of the principal vector `phi`
/// with spectrum `eta * tail_spectrum` (so `Tr(phi sigma) = 0` exactly).
///
/// The complement basis is drawn Haar-uniformly from `rng`, so two calls with
/// different streams give different (equally valid) instances.
pub fn planted_instance<R: Rng>(
    d: usize,
    eta: f64,
    principal: &CVector,
    tail_spectrum: &[f64],
    rng: &mut R,
) -> Result<SpectralState> {
    if !(0.0..0.5).contains(&eta) {
        return Err(Error::InvalidDeviation { eta });
    }
    if principal.len() != d || tail_spectrum.len() != d - 1 {
        return Err(Error::InvalidParameter {
            msg: format!("need a length-{d} principal and {} tail entries", d - 1),
        });
    }
    if (principal.norm() - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidParameter { msg: "principal vector must be normalized".into() });
    }
    let tail_sum: f64 = tail_spectrum.iter().sum();
    if tail_spectrum.iter().any(|&t| t < 0.0) || (d > 1 && (tail_sum - 1.0).abs() > 1e-10) {
        return Err(Error::InvalidParameter {
            msg: "tail spectrum must be a probability vector".into(),
        });
    }
    let lambda1 = 1.0 - eta;
    let mut eigenvalues = vec![lambda1];
    let mut tail: Vec<f64> = tail_spectrum.iter().map(|&t| eta * t).collect();
    tail.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if let Some(&top_tail) = tail.first() {
        if top_tail >= lambda1 {
            return Err(Error::SpectrumOrder {
                msg: format!("tail eigenvalue {top_tail} >= lambda_1 = {lambda1}"),
            });
        }
    }
    eigenvalues.extend(tail);

    // Gram-Schmidt a Haar-random frame against the principal vector.
    let mut vectors = CMatrix::zeros(d, d);
    vectors.set_column(0, principal);
    let mut filled = 1;
    while filled < d {
        let mut v = linalg::haar_state(d, rng);
        for j in 0..filled {
            let col = vectors.column(j);
            let overlap: Complex64 = col.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum();
            v -= col.into_owned() * overlap;
        }
        let norm = v.norm();
        if norm > 1e-6 {
            vectors.set_column(filled, &(v / Complex64::new(norm, 0.0)));
            filled += 1;
        }
    }
    SpectralState::new(eigenvalues, vectors)
}

/// Depolarized planted instance: uniform tail, `rho = (1-eta) phi + eta (I - phi)/(d-1)`.
pub fn depolarized_instance<R: Rng>(
    d: usize,
    eta: f64,
    principal: &CVector,
    rng: &mut R,
) -> Result<SpectralState> {
    let tail = vec![1.0 / (d - 1) as f64; d - 1];
    planted_instance(d, eta, principal, &tail, rng)
}

/// A Hermitian observable with its recorded norms.
#[derive(Debug, Clone)]
pub struct Observable {
    matrix: CMatrix,
    infinity_norm: f64,
    frobenius_sq: f64,
}

impl Observable {
    /// Wrap a Hermitian matrix, computing `||O||_inf` and `B = Tr(O^2)` and
    /// enforcing the protocol requirement `||O||_inf <= 1`.
    pub fn new(matrix: CMatrix) -> Result<Self> {
        let defect = linalg::hermiticity_defect(&matrix);
        if defect > 1e-10 {
            return Err(Error::NotHermitian { dev: defect });
        }
        let eigenvalues = linalg::hermitian_eigenvalues(&matrix)?;
        let infinity_norm = eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l.abs()));
        if infinity_norm > 1.0 + 1e-10 {
            return Err(Error::InvalidParameter {
                msg: format!("observable infinity norm {infinity_norm} exceeds 1"),
            });
        }
        let frobenius_sq: f64 = eigenvalues.iter().map(|l| l * l).sum();
        Ok(Observable { matrix, infinity_norm, frobenius_sq })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn infinity_norm(&self) -> f64 {
        self.infinity_norm
    }

    /// Squared Frobenius norm `B = Tr(O^2)`.
    pub fn frobenius_sq(&self) -> f64 {
        self.frobenius_sq
    }

    /// `Tr(O A)` as a real number (A Hermitian).
    pub fn expectation(&self, a: &CMatrix) -> f64 {
        linalg::trace(&(&self.matrix * a)).re
    }
}

/// Haar-random unitary via QR of a complex Gaussian matrix with the standard
/// phase fix (R's diagonal made positive real).
pub fn random_unitary<R: Rng>(d: usize, rng: &mut R) -> CMatrix {
    use rand_distr::StandardNormal;
    let g = CMatrix::from_fn(d, d, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for i in 0..d {
        let rii = r[(i, i)];
        let phase = if rii.norm() > 0.0 { rii / rii.norm() } else { Complex64::new(1.0, 0.0) };
        let col = q.column(i) * phase;
        q.set_column(i, &col);
    }
    q
}

/// Random Hermitian observable with `||O||_inf <= 1` and `Tr(O^2)` within 5%
/// of `target_B`: a Haar-random eigenbasis with eigenvalues drawn uniformly in
/// [-1, 1], then rescaled (clipping at +-1 and re-solving for the residual) to
/// hit the target Frobenius weight.
pub fn random_observable<R: Rng>(d: usize, target_b: f64, rng: &mut R) -> Result<Observable> {
    if !(1.0..=d as f64).contains(&target_b) {
        return Err(Error::InfeasibleObservable { target: target_b, d });
    }
    let mut vals: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    // avoid degenerate all-tiny draws
    if vals.iter().map(|v| v * v).sum::<f64>() < 1e-6 {
        vals[0] = 1.0;
    }
    // Iterative water-filling: scale free entries to meet the residual budget,
    // clip any that exceed 1 in magnitude, repeat. Terminates because the
    // clipped set only grows; feasible since target_b <= d.
    let mut clipped = vec![false; d];
    for _ in 0..=d {
        let clipped_weight: f64 =
            vals.iter().zip(&clipped).filter(|(_, &c)| c).map(|(v, _)| v * v).sum();
        let free_weight: f64 =
            vals.iter().zip(&clipped).filter(|(_, &c)| !c).map(|(v, _)| v * v).sum();
        let residual = (target_b - clipped_weight).max(0.0);
        if free_weight <= 0.0 {
            break;
        }
        let scale = (residual / free_weight).sqrt();
        let mut newly_clipped = false;
        for i in 0..d {
            if !clipped[i] {
                let s = vals[i] * scale;
                if s.abs() >= 1.0 {
                    vals[i] = s.signum();
                    clipped[i] = true;
                    newly_clipped = true;
                } else {
                    vals[i] = s;
                }
            }
        }
        if !newly_clipped {
            break;
        }
    }
    let u = random_unitary(d, rng);
    let diag = CMatrix::from_fn(d, d, |i, j| {
        if i == j { Complex64::new(vals[i], 0.0) } else { Complex64::new(0.0, 0.0) }
    });
    let m = &u * diag * u.adjoint();
    // symmetrize away round-off before validation
    let m = (&m + m.adjoint()).scale(0.5);
    Observable::new(m)
}

/// Spectrally decompose a density matrix, validating Hermiticity, unit trace
/// and positivity (up to tolerance).
pub fn spectral_decompose(m: &CMatrix) -> Result<SpectralState> {
    let defect = linalg::hermiticity_defect(m);
    if defect > 1e-10 {
        return Err(Error::NotHermitian { dev: defect });
    }
    let tr = linalg::trace(m);
    if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
        return Err(Error::NotDensity { msg: format!("trace = {tr}") });
    }
    let (mut values, vectors) = linalg::hermitian_eigen(m)?;
    if values.last().copied().unwrap_or(0.0) < -1e-10 {
        return Err(Error::NotDensity {
            msg: format!("smallest eigenvalue {}", values.last().unwrap()),
        });
    }
    // clamp round-off negatives and renormalize the tiny drift
    for v in values.iter_mut() {
        *v = v.max(0.0);
    }
    let total: f64 = values.iter().sum();
    for v in values.iter_mut() {
        *v /= total;
    }
    SpectralState::new(values, vectors)
}

/// Random density matrix of full support (Hilbert-Schmidt-style: G G†
/// normalized), decomposed.
pub fn random_density<R: Rng>(d: usize, rng: &mut R) -> SpectralState {
    use rand_distr::StandardNormal;
    let g = CMatrix::from_fn(d, d, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let h = &g * g.adjoint();
    let t = linalg::trace(&h).re;
    spectral_decompose(&h.scale(1.0 / t)).expect("G G† / Tr is always a density matrix")
}

/// Random spectrum with `lambda_1` drawn from `lambda1_range`, the tail
/// uniform-random and strictly below `lambda_1`. Eigenbasis Haar-random.
pub fn random_gapped_state<R: Rng>(
    d: usize,
    lambda1_range: (f64, f64),
    rng: &mut R,
) -> SpectralState {
    let l1 = rng.gen_range(lambda1_range.0..lambda1_range.1);
    let mut tail: Vec<f64> = (0..d - 1).map(|_| rng.gen::<f64>()).collect();
    let s: f64 = tail.iter().sum();
    for t in tail.iter_mut() {
        *t *= (1.0 - l1) / s;
    }
    tail.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut values = vec![l1];
    values.extend(tail);
    let u = random_unitary(d, rng);
    SpectralState::new(values, u).expect("constructed spectrum is valid")
}
