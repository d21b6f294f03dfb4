//! Dense complex linear algebra for multi-qudit systems: Kronecker products,
//! permutation operators, symmetric-subspace projectors, partial traces and
//! Haar-random pure states.
//!
//! Everything here is a pure function on immutable inputs. Matrices are dense
//! `nalgebra` matrices over `Complex64`; the total dimension is capped at
//! [`DENSE_CAP`] so a misconfigured call fails fast instead of allocating
//! gigabytes.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Hard cap on the dimension d^n of any dense operator we build.
pub const DENSE_CAP: usize = 4096;

/// Cap on n for projector construction (the n! permutation sum).
pub const PERM_SUM_N_CAP: usize = 10;

/// A permutation of {0, .., n-1}, stored as the image list: `map[i] = pi(i)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    map: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Permutation { map: (0..n).collect() }
    }

    /// Build from an image list, checking bijectivity.
    pub fn from_map(map: Vec<usize>) -> Result<Self> {
        let n = map.len();
        let mut seen = vec![false; n];
        for &v in &map {
            if v >= n || seen[v] {
                return Err(Error::InvalidParameter {
                    msg: format!("{map:?} is not a bijection on 0..{n}"),
                });
            }
            seen[v] = true;
        }
        Ok(Permutation { map })
    }

    /// The transposition (a b) on n elements.
    pub fn transposition(n: usize, a: usize, b: usize) -> Self {
        let mut map: Vec<usize> = (0..n).collect();
        map.swap(a, b);
        Permutation { map }
    }

    pub fn random<R: Rng>(n: usize, rng: &mut R) -> Self {
        use rand::seq::SliceRandom;
        let mut map: Vec<usize> = (0..n).collect();
        map.shuffle(rng);
        Permutation { map }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn apply(&self, i: usize) -> usize {
        self.map[i]
    }

    /// self ∘ other: first apply `other`, then `self`.
    pub fn compose(&self, other: &Permutation) -> Permutation {
        let map = (0..self.map.len()).map(|i| self.map[other.map[i]]).collect();
        Permutation { map }
    }

    pub fn inverse(&self) -> Permutation {
        let mut map = vec![0; self.map.len()];
        for (i, &v) in self.map.iter().enumerate() {
            map[v] = i;
        }
        Permutation { map }
    }
}

/// Binomial coefficient as u128; panics on overflow (far beyond our caps).
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

pub fn factorial(n: u64) -> u128 {
    (1..=n as u128).product()
}

/// Dimension of the symmetric subspace of n qudits: binom(n+d-1, d-1).
pub fn sym_dim(d: usize, n: usize) -> u128 {
    binomial((n + d - 1) as u64, (d - 1) as u64)
}

pub fn identity(dim: usize) -> CMatrix {
    CMatrix::identity(dim, dim)
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// n-fold Kronecker power of `a` (n = 0 gives the 1x1 identity).
pub fn kron_power(a: &CMatrix, n: usize) -> CMatrix {
    let mut out = CMatrix::identity(1, 1);
    for _ in 0..n {
        out = out.kronecker(a);
    }
    out
}

pub fn trace(a: &CMatrix) -> Complex64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)]).sum()
}

pub fn dagger(a: &CMatrix) -> CMatrix {
    a.adjoint()
}

/// Largest entrywise deviation |A - B|.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Largest entrywise deviation from Hermiticity, |A - A†|.
pub fn hermiticity_defect(a: &CMatrix) -> f64 {
    max_abs_diff(a, &a.adjoint())
}

fn check_dim(dim: usize) -> Result<()> {
    if dim > DENSE_CAP {
        Err(Error::DimensionOverflow { dim, cap: DENSE_CAP })
    } else {
        Ok(())
    }
}

/// Total dimension d^n, checked against the cap.
pub fn qudit_dim(d: usize, n: usize) -> Result<usize> {
    let mut dim: usize = 1;
    for _ in 0..n {
        dim = dim.checked_mul(d).ok_or(Error::DimensionOverflow { dim: usize::MAX, cap: DENSE_CAP })?;
        check_dim(dim)?;
    }
    Ok(dim)
}

/// Decompose a basis index into per-qudit digits, position 0 most significant.
fn digits(mut index: usize, d: usize, n: usize) -> Vec<usize> {
    let mut out = vec![0; n];
    for i in (0..n).rev() {
        out[i] = index % d;
        index /= d;
    }
    out
}

fn index_of(digits: &[usize], d: usize) -> usize {
    digits.iter().fold(0, |acc, &x| acc * d + x)
}

/// The operator W_pi permuting n qudits of dimension d: it sends the qudit in
/// position i to position pi(i), so W_pi |x_1..x_n> = |x_{pi^-1(1)}..x_{pi^-1(n)}>.
pub fn permutation_operator(pi: &Permutation, d: usize) -> Result<CMatrix> {
    let n = pi.len();
    let dim = qudit_dim(d, n)?;
    let mut w = CMatrix::zeros(dim, dim);
    let one = Complex64::new(1.0, 0.0);
    for x in 0..dim {
        let xs = digits(x, d, n);
        let mut ys = vec![0; n];
        for i in 0..n {
            ys[pi.apply(i)] = xs[i];
        }
        w[(index_of(&ys, d), x)] = one;
    }
    Ok(w)
}

/// Projector onto the symmetric subspace of (C^d)^{⊗n}: the average of all
/// n! permutation operators.
pub fn sym_projector(d: usize, n: usize) -> Result<CMatrix> {
    if n > PERM_SUM_N_CAP {
        return Err(Error::InvalidParameter {
            msg: format!("sym_projector: n = {n} exceeds the permutation-sum cap {PERM_SUM_N_CAP}"),
        });
    }
    let dim = qudit_dim(d, n)?;
    let mut p = CMatrix::zeros(dim, dim);
    let weight = Complex64::new(1.0 / factorial(n as u64) as f64, 0.0);
    for perm in (0..n).permutations(n) {
        // perm is the image list of a permutation pi
        for x in 0..dim {
            let xs = digits(x, d, n);
            let mut ys = vec![0; n];
            for i in 0..n {
                ys[perm[i]] = xs[i];
            }
            p[(index_of(&ys, d), x)] += weight;
        }
    }
    Ok(p)
}

/// Partial trace over the given qudit positions (0-based) of an operator on
/// n qudits of dimension d. Positions may be given in any order.
pub fn partial_trace(a: &CMatrix, traced: &[usize], d: usize) -> Result<CMatrix> {
    let dim = a.nrows();
    assert_eq!(a.ncols(), dim, "partial_trace expects a square matrix");
    // infer n from dim = d^n
    let mut n = 0;
    let mut acc = 1;
    while acc < dim {
        acc *= d;
        n += 1;
    }
    assert_eq!(acc, dim, "matrix dimension is not a power of d");

    let mut is_traced = vec![false; n];
    for &pos in traced {
        if pos >= n {
            return Err(Error::IndexOutOfRange { pos, n });
        }
        is_traced[pos] = true;
    }
    let kept: Vec<usize> = (0..n).filter(|&i| !is_traced[i]).collect();
    let traced_pos: Vec<usize> = (0..n).filter(|&i| is_traced[i]).collect();

    let stride: Vec<usize> = (0..n).map(|i| d.pow((n - 1 - i) as u32)).collect();
    let kd = d.pow(kept.len() as u32);
    let td = d.pow(traced_pos.len() as u32);

    // base offsets for kept-index r and traced-index t
    let offset = |positions: &[usize], idx: usize| -> usize {
        let ds = digits(idx, d, positions.len());
        positions.iter().zip(ds.iter()).map(|(&p, &x)| x * stride[p]).sum()
    };
    let kept_off: Vec<usize> = (0..kd).map(|r| offset(&kept, r)).collect();
    let traced_off: Vec<usize> = (0..td).map(|t| offset(&traced_pos, t)).collect();

    let mut out = CMatrix::zeros(kd, kd);
    for r in 0..kd {
        for c in 0..kd {
            let mut s = Complex64::new(0.0, 0.0);
            for t in 0..td {
                s += a[(kept_off[r] + traced_off[t], kept_off[c] + traced_off[t])];
            }
            out[(r, c)] = s;
        }
    }
    Ok(out)
}

/// Haar-random pure state on C^d: a normalized complex Gaussian vector.
pub fn haar_state<R: Rng>(d: usize, rng: &mut R) -> CVector {
    loop {
        let v = CVector::from_fn(d, |_, _| {
            Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        let norm = v.norm();
        if norm > 1e-12 {
            return v / Complex64::new(norm, 0.0);
        }
    }
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues sorted descending.
/// Returns (eigenvalues, eigenvector matrix with matching columns).
pub fn hermitian_eigen(m: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    let defect = hermiticity_defect(m);
    if defect > 1e-9 {
        return Err(Error::NotHermitian { dev: defect });
    }
    let sym = (m + m.adjoint()).scale(0.5);
    let eig = sym.symmetric_eigen();
    let d = m.nrows();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(d, d);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i).into_owned());
    }
    Ok((values, vectors))
}

/// Eigenvalues only, sorted descending.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Result<Vec<f64>> {
    hermitian_eigen(m).map(|(v, _)| v)
}
