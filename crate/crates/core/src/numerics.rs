//! Complex dense matrix helpers.
//!
//! Everything downstream works on [`CMatrix`], a thin wrapper over a dense
//! `nalgebra` matrix of `Complex64`. The wrapper adds the few checked
//! operations the link model needs (Hermitian square root, Hermitian
//! positive-definite solve) and seeded Gaussian sampling.

use std::ops::{Add, Deref, Mul, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

/// Tolerance on `max |a_ij - conj(a_ji)|` for accepting a matrix as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Eigenvalues in `[-PSD_TOL, 0)` are clipped to zero by [`hermitian_sqrt`].
pub const PSD_TOL: f64 = 1e-10;

const SOLVE_RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("matrix is not Hermitian (max asymmetry {asymmetry:.3e})")]
    NotHermitian { asymmetry: f64 },
    #[error("matrix is not positive semidefinite (eigenvalue {min_eigenvalue:.3e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("matrix is singular or not positive definite")]
    Singular,
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: String, found: String },
    #[error("non-finite entry produced by {operation}")]
    NonFinite { operation: &'static str },
}

/// Dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix(DMatrix<Complex64>);

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> Complex64) -> Self {
        Self(DMatrix::from_fn(rows, cols, f))
    }

    /// Builds a matrix from row-major entries.
    pub fn from_row_slice(rows: usize, cols: usize, entries: &[Complex64]) -> Self {
        Self(DMatrix::from_row_slice(rows, cols, entries))
    }

    /// Diagonal matrix from real entries.
    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(diag[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    /// Column vector from entries.
    pub fn column(entries: &[Complex64]) -> Self {
        Self(DMatrix::from_column_slice(entries.len(), 1, entries))
    }

    pub fn inner(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<Complex64> {
        self.0
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.0.nrows(), self.0.ncols())
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn conjugate(&self) -> Self {
        Self(self.0.conjugate())
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    /// Squared Frobenius norm.
    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self(self.0.map(|z| z * factor))
    }

    pub fn scale_complex(&self, factor: Complex64) -> Self {
        Self(self.0.map(|z| z * factor))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Largest `|a_ij - conj(a_ji)|`; infinite for non-square input.
    pub fn hermitian_asymmetry(&self) -> f64 {
        let (r, c) = self.dims();
        if r != c {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for i in 0..r {
            for j in i..c {
                worst = worst.max((self.0[(i, j)] - self.0[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// `(A + A^H) / 2`.
    pub fn hermitian_part(&self) -> Self {
        Self((&self.0 + self.0.adjoint()).map(|z| z * 0.5))
    }

    /// Column-stacking vectorisation.
    pub fn vec(&self) -> Self {
        let (r, c) = self.dims();
        Self(DMatrix::from_column_slice(r * c, 1, self.0.as_slice()))
    }

    /// Inverse of [`CMatrix::vec`].
    pub fn unvec(&self, rows: usize, cols: usize) -> Result<Self, NumericsError> {
        if self.0.len() != rows * cols {
            return Err(NumericsError::DimensionMismatch {
                expected: format!("{} entries", rows * cols),
                found: format!("{} entries", self.0.len()),
            });
        }
        Ok(Self(DMatrix::from_column_slice(rows, cols, self.0.as_slice())))
    }

    /// Sub-matrix copy.
    pub fn block(&self, row: usize, col: usize, rows: usize, cols: usize) -> Self {
        Self(self.0.view((row, col), (rows, cols)).into_owned())
    }

    pub fn column_at(&self, j: usize) -> Self {
        self.block(0, j, self.0.nrows(), 1)
    }

    /// `Tr{self * other}` without forming the product.
    pub fn trace_product(&self, other: &CMatrix) -> Complex64 {
        let (r, c) = self.dims();
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..r {
            for k in 0..c {
                acc += self.0[(i, k)] * other.0[(k, i)];
            }
        }
        acc
    }

    fn check_same_dims(&self, other: &CMatrix) -> Result<(), NumericsError> {
        if self.dims() != other.dims() {
            return Err(NumericsError::DimensionMismatch {
                expected: format!("{:?}", self.dims()),
                found: format!("{:?}", other.dims()),
            });
        }
        Ok(())
    }

    pub fn checked_add(&self, other: &CMatrix) -> Result<Self, NumericsError> {
        self.check_same_dims(other)?;
        Ok(Self(&self.0 + &other.0))
    }

    pub fn checked_mul(&self, other: &CMatrix) -> Result<Self, NumericsError> {
        if self.0.ncols() != other.0.nrows() {
            return Err(NumericsError::DimensionMismatch {
                expected: format!("{} rows", self.0.ncols()),
                found: format!("{} rows", other.0.nrows()),
            });
        }
        Ok(Self(&self.0 * &other.0))
    }
}

impl Deref for CMatrix {
    type Target = DMatrix<Complex64>;
    fn deref(&self) -> &Self::Target {
        &self.0
    }
}

impl From<DMatrix<Complex64>> for CMatrix {
    fn from(m: DMatrix<Complex64>) -> Self {
        Self(m)
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        CMatrix(&self.0 + &rhs.0)
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        CMatrix(&self.0 - &rhs.0)
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        CMatrix(&self.0 * &rhs.0)
    }
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    CMatrix(a.0.kronecker(&b.0))
}

/// Eigendecomposition of a Hermitian matrix: `(eigenvalues, eigenvectors)`.
pub fn hermitian_eigen(a: &CMatrix) -> Result<(Vec<f64>, CMatrix), NumericsError> {
    let asymmetry = a.hermitian_asymmetry();
    let scale = a.0.iter().map(|z| z.norm()).fold(1.0f64, f64::max);
    if asymmetry > HERMITIAN_TOL * scale {
        return Err(NumericsError::NotHermitian { asymmetry });
    }
    let eig = a.hermitian_part().0.symmetric_eigen();
    let values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(NumericsError::NonFinite { operation: "hermitian_eigen" });
    }
    Ok((values, CMatrix(eig.eigenvectors)))
}

/// Hermitian positive semidefinite square root.
pub fn hermitian_sqrt(a: &CMatrix) -> Result<CMatrix, NumericsError> {
    let (values, vectors) = hermitian_eigen(a)?;
    let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut roots = Vec::with_capacity(values.len());
    for &v in &values {
        if v < -PSD_TOL * scale {
            return Err(NumericsError::NotPsd { min_eigenvalue: v });
        }
        roots.push(v.max(0.0).sqrt());
    }
    Ok(spectral_map(&vectors, &roots))
}

/// `U diag(d) U^H`.
pub fn spectral_map(vectors: &CMatrix, diag: &[f64]) -> CMatrix {
    let scaled = DMatrix::from_fn(vectors.nrows(), vectors.ncols(), |i, j| vectors.0[(i, j)] * diag[j]);
    CMatrix(scaled * vectors.0.adjoint()).hermitian_part()
}

/// Solves `a x = b` for Hermitian positive-definite `a`.
pub fn solve_hpd(a: &CMatrix, b: &CMatrix) -> Result<CMatrix, NumericsError> {
    let (n, m) = a.dims();
    if n != m || b.nrows() != n {
        return Err(NumericsError::DimensionMismatch {
            expected: format!("square {n}x{n} with {n}-row rhs"),
            found: format!("{:?} and {:?}", a.dims(), b.dims()),
        });
    }
    let chol = a.hermitian_part().0.cholesky().ok_or(NumericsError::Singular)?;
    let diag: Vec<f64> = (0..n).map(|i| chol.l_dirty()[(i, i)].re.powi(2)).collect();
    let max = diag.iter().cloned().fold(0.0f64, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if n > 0 && !(min > 1e-14 * max) {
        return Err(NumericsError::Singular);
    }
    let x = CMatrix(chol.solve(&b.0));
    if !x.is_finite() {
        return Err(NumericsError::Singular);
    }
    let residual = (&(a * &x) - b).frobenius_norm();
    let reference = b.frobenius_norm().max(f64::MIN_POSITIVE);
    if residual > SOLVE_RESIDUAL_TOL * reference.max(a.frobenius_norm() * x.frobenius_norm()) {
        return Err(NumericsError::Singular);
    }
    Ok(x)
}

/// A reproducible random stream addressed by `(master_seed, stream_id)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self { master_seed, stream_id }
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn generator(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// A stream family derived from this one, for nesting (e.g. point, trial).
    pub fn derive(&self, label: u64) -> RngStream {
        RngStream::new(splitmix64(self.master_seed ^ splitmix64(self.stream_id.wrapping_add(0x5851_f42d))), label)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// One circularly-symmetric CN(0, 1) draw.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Matrix of i.i.d. CN(0, 1) entries drawn from `rng`.
pub fn gaussian_matrix_with<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    // Fill column-major so the draw order matches the vec ordering.
    let data: Vec<Complex64> = (0..rows * cols).map(|_| complex_gaussian(rng)).collect();
    CMatrix(DMatrix::from_vec(rows, cols, data))
}

/// Matrix of i.i.d. CN(0, 1) entries from the start of `stream`.
pub fn gaussian_matrix(rows: usize, cols: usize, stream: &RngStream) -> CMatrix {
    gaussian_matrix_with(rows, cols, &mut stream.generator())
}

/// Pairwise summation, stable regardless of how the input was produced.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n if n <= 8 => values.iter().sum(),
        n => {
            let (lo, hi) = values.split_at(n / 2);
            pairwise_sum(lo) + pairwise_sum(hi)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_hpd(n: usize, stream: &RngStream) -> CMatrix {
        let g = gaussian_matrix(n, n, stream);
        &(&g * &g.adjoint()) + &CMatrix::identity(n)
    }

    #[test]
    fn kron_identities() {
        assert_eq!(kron(&CMatrix::identity(2), &CMatrix::identity(3)), CMatrix::identity(6));
        let b = gaussian_matrix(2, 3, &RngStream::new(1, 0));
        let two = CMatrix::from_row_slice(1, 1, &[c(2.0, 0.0)]);
        assert_eq!(kron(&two, &b), b.scale(2.0));
    }

    #[test]
    fn kron_matches_nested_loops() {
        let a = gaussian_matrix(2, 2, &RngStream::new(3, 1));
        let b = gaussian_matrix(2, 2, &RngStream::new(3, 2));
        let k = kron(&a, &b);
        for i in 0..2 {
            for j in 0..2 {
                for p in 0..2 {
                    for q in 0..2 {
                        let expected = a[(i, j)] * b[(p, q)];
                        assert!((k[(i * 2 + p, j * 2 + q)] - expected).norm() < 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn sqrt_of_identity_and_diagonal() {
        let s = hermitian_sqrt(&CMatrix::identity(4)).unwrap();
        assert!((&s - &CMatrix::identity(4)).frobenius_norm() < 1e-12);
        let s = hermitian_sqrt(&CMatrix::from_real_diagonal(&[4.0, 9.0])).unwrap();
        assert!((&s - &CMatrix::from_real_diagonal(&[2.0, 3.0])).frobenius_norm() < 1e-12);
    }

    #[test]
    fn sqrt_multiplies_back_on_correlation_matrix() {
        let r = CMatrix::from_fn(4, 4, |i, j| c(0.5f64.powi((i as i32 - j as i32).abs()), 0.0));
        let s = hermitian_sqrt(&r).unwrap();
        assert!((&(&s * &s) - &r).frobenius_norm() < 1e-8);
    }

    #[test]
    fn sqrt_rejects_bad_input() {
        let skew = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.5, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        assert!(matches!(hermitian_sqrt(&skew), Err(NumericsError::NotHermitian { .. })));
        let neg = CMatrix::from_real_diagonal(&[1.0, -0.5]);
        assert!(matches!(hermitian_sqrt(&neg), Err(NumericsError::NotPsd { .. })));
        let tiny = CMatrix::from_real_diagonal(&[1.0, -1e-12]);
        let s = hermitian_sqrt(&tiny).unwrap();
        assert!(s[(1, 1)].norm() < 1e-12);
    }

    #[test]
    fn solve_trivial_cases() {
        let b = gaussian_matrix(3, 2, &RngStream::new(5, 0));
        let x = solve_hpd(&CMatrix::identity(3), &b).unwrap();
        assert!((&x - &b).frobenius_norm() < 1e-14);
        let x = solve_hpd(&CMatrix::identity(3).scale(2.0), &CMatrix::identity(3)).unwrap();
        assert!((&x - &CMatrix::identity(3).scale(0.5)).frobenius_norm() < 1e-14);
    }

    #[test]
    fn solve_random_residual() {
        let a = random_hpd(6, &RngStream::new(7, 0));
        let b = gaussian_matrix(6, 1, &RngStream::new(7, 1));
        let x = solve_hpd(&a, &b).unwrap();
        assert!((&(&a * &x) - &b).frobenius_norm() / b.frobenius_norm() < 1e-8);
    }

    #[test]
    fn solve_rejects_singular() {
        let a = CMatrix::from_real_diagonal(&[1.0, 0.0]);
        assert_eq!(solve_hpd(&a, &CMatrix::identity(2)), Err(NumericsError::Singular));
    }

    #[test]
    fn gaussian_moments() {
        let g = gaussian_matrix(100_000, 1, &RngStream::new(11, 0));
        let n = g.len() as f64;
        let mean: Complex64 = g.iter().sum::<Complex64>() / n;
        let var = g.iter().map(|z| (z - mean).norm_sqr()).sum::<f64>() / n;
        let re_var = g.iter().map(|z| z.re * z.re).sum::<f64>() / n;
        assert!(mean.norm() < 0.02);
        assert!((0.98..=1.02).contains(&var));
        assert!((re_var - 0.5).abs() < 0.02);
    }

    #[test]
    fn gaussian_streams_are_deterministic_and_independent() {
        let s = RngStream::new(42, 0);
        assert_eq!(gaussian_matrix(3, 3, &s), gaussian_matrix(3, 3, &s));
        let a = gaussian_matrix(10_000, 1, &RngStream::new(42, 0));
        let b = gaussian_matrix(10_000, 1, &RngStream::new(42, 1));
        let cross: Complex64 = a.iter().zip(b.iter()).map(|(x, y)| x * y.conj()).sum::<Complex64>() / 10_000.0;
        assert!(cross.norm() < 0.05);
    }

    #[test]
    fn derived_streams_differ() {
        let s = RngStream::new(9, 3);
        assert_ne!(s.derive(0), s.derive(1));
        assert_ne!(gaussian_matrix(2, 2, &s.derive(0)), gaussian_matrix(2, 2, &s.derive(1)));
        assert_eq!(s.derive(4), RngStream::new(9, 3).derive(4));
    }

    #[test]
    fn vec_round_trip_and_trace_product() {
        let a = gaussian_matrix(3, 2, &RngStream::new(1, 1));
        assert_eq!(a.vec().unvec(3, 2).unwrap(), a);
        assert_eq!(a.vec()[(3, 0)], a[(0, 1)]);
        let b = gaussian_matrix(2, 3, &RngStream::new(1, 2));
        assert!((a.trace_product(&b) - (&a * &b).trace()).norm() < 1e-12);
    }

    #[test]
    fn pairwise_sum_matches_naive() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64 * 0.5).collect();
        assert!((pairwise_sum(&v) - v.iter().sum::<f64>()).abs() < 1e-9);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }
}
