//! Dense complex linear algebra for small spin clusters.
//!
//! Everything here works with ħ = 1. Operators on a cluster of `M` spins
//! live on the product space of dimension `d^M`, `d = 2s + 1`, with the
//! local basis ordered `m = s, s-1, ..., -s` and site 0 as the most
//! significant tensor factor (the `kron(A, B)` convention).

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::{Add, Mul, Sub};
use thiserror::Error;

pub type C64 = Complex<f64>;

/// Largest Hilbert-space dimension accepted for dense storage.
pub const MAX_DIM: usize = 4096;

/// Relative Frobenius tolerance for accepting a matrix as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("spin quantum number must be a positive multiple of 1/2, got {0}")]
    InvalidSpin(f64),
    #[error("site {site} out of range for a cluster of {sites} sites")]
    SiteOutOfRange { site: usize, sites: usize },
    #[error("cluster must contain at least one site")]
    NoSites,
    #[error("expected a {expected}x{expected} operator, got {rows}x{cols}")]
    Shape {
        expected: usize,
        rows: usize,
        cols: usize,
    },
    #[error("matrix is not Hermitian (relative deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("Hilbert space dimension {dim} exceeds the dense limit {limit}")]
    DimensionTooLarge { dim: usize, limit: usize },
    #[error("axis vector has zero length")]
    ZeroAxis,
    #[error("dimension mismatch: operator is {operator}, state is {state}")]
    DimensionMismatch { operator: usize, state: usize },
    #[error("state has zero norm")]
    ZeroState,
}

/// Spin quantum number and gyromagnetic ratio of the sensing species.
///
/// The spin is stored as `2s` so that half-integers are exact.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpecies", into = "RawSpecies")]
pub struct SpinSpecies {
    twice_spin: u32,
    gamma: f64,
}

#[derive(Serialize, Deserialize)]
struct RawSpecies {
    spin: f64,
    gamma: f64,
}

impl TryFrom<RawSpecies> for SpinSpecies {
    type Error = KernelError;

    fn try_from(raw: RawSpecies) -> Result<Self, Self::Error> {
        SpinSpecies::new(raw.spin, raw.gamma)
    }
}

impl From<SpinSpecies> for RawSpecies {
    fn from(s: SpinSpecies) -> Self {
        RawSpecies {
            spin: s.spin(),
            gamma: s.gamma,
        }
    }
}

/// Electron gyromagnetic ratio magnitude, rad s^-1 T^-1.
pub const ELECTRON_GAMMA: f64 = 1.760_859_630_23e11;

impl SpinSpecies {
    pub fn new(spin: f64, gamma: f64) -> Result<Self, KernelError> {
        let twice = 2.0 * spin;
        if !(twice >= 1.0) || (twice - twice.round()).abs() > 1e-9 || twice > 64.0 {
            return Err(KernelError::InvalidSpin(spin));
        }
        Ok(Self {
            twice_spin: twice.round() as u32,
            gamma,
        })
    }

    pub fn from_twice_spin(twice_spin: u32, gamma: f64) -> Result<Self, KernelError> {
        if twice_spin == 0 {
            return Err(KernelError::InvalidSpin(0.0));
        }
        Ok(Self { twice_spin, gamma })
    }

    pub fn spin_half() -> Self {
        Self {
            twice_spin: 1,
            gamma: ELECTRON_GAMMA,
        }
    }

    pub fn spin(&self) -> f64 {
        self.twice_spin as f64 / 2.0
    }

    pub fn twice_spin(&self) -> u32 {
        self.twice_spin
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn with_gamma(self, gamma: f64) -> Self {
        Self { gamma, ..self }
    }

    /// Local Hilbert dimension `2s + 1`.
    pub fn dim(&self) -> usize {
        self.twice_spin as usize + 1
    }

    /// Magnetic quantum numbers in basis order: `s, s-1, ..., -s`.
    pub fn m_values(&self) -> Vec<f64> {
        let s = self.spin();
        (0..self.dim()).map(|k| s - k as f64).collect()
    }

    /// Dimension of an `sites`-spin cluster, or an error above [`MAX_DIM`].
    pub fn cluster_dim(&self, sites: usize) -> Result<usize, KernelError> {
        if sites == 0 {
            return Err(KernelError::NoSites);
        }
        let mut dim: usize = 1;
        for _ in 0..sites {
            dim = dim.saturating_mul(self.dim());
            if dim > MAX_DIM {
                return Err(KernelError::DimensionTooLarge {
                    dim,
                    limit: MAX_DIM,
                });
            }
        }
        Ok(dim)
    }
}

impl fmt::Display for SpinSpecies {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.twice_spin.is_multiple_of(2) {
            write!(f, "{}", self.twice_spin / 2)
        } else {
            write!(f, "{}/2", self.twice_spin)
        }
    }
}

/// Dense complex square matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix(DMatrix<C64>);

impl OperatorMatrix {
    pub fn from_matrix(m: DMatrix<C64>) -> Result<Self, KernelError> {
        if m.nrows() != m.ncols() {
            return Err(KernelError::Shape {
                expected: m.nrows(),
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        Ok(Self(m))
    }

    pub fn from_real(m: &DMatrix<f64>) -> Result<Self, KernelError> {
        Self::from_matrix(m.map(|x| C64::new(x, 0.0)))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn as_matrix_mut(&mut self) -> &mut DMatrix<C64> {
        &mut self.0
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.0
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    /// `‖A − A†‖_F / ‖A‖_F` (zero for the zero matrix).
    pub fn hermiticity_defect(&self) -> f64 {
        let norm = self.0.norm();
        if norm == 0.0 {
            return 0.0;
        }
        (&self.0 - self.0.adjoint()).norm() / norm
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermiticity_defect() <= HERMITIAN_TOL
    }

    /// `‖U†U − I‖_F`.
    pub fn unitarity_defect(&self) -> f64 {
        let n = self.dim();
        (self.0.adjoint() * &self.0 - DMatrix::<C64>::identity(n, n)).norm()
    }

    pub fn commutator(&self, other: &Self) -> Self {
        Self(&self.0 * &other.0 - &other.0 * &self.0)
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self(self.0.map(|z| z * factor))
    }

    pub fn kron(&self, other: &Self) -> Self {
        Self(self.0.kronecker(&other.0))
    }

    pub fn apply(&self, psi: &StateVector) -> Result<DVector<C64>, KernelError> {
        if psi.dim() != self.dim() {
            return Err(KernelError::DimensionMismatch {
                operator: self.dim(),
                state: psi.dim(),
            });
        }
        Ok(&self.0 * psi.amplitudes())
    }
}

impl Add for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn add(self, rhs: Self) -> OperatorMatrix {
        OperatorMatrix(&self.0 + &rhs.0)
    }
}

impl Sub for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn sub(self, rhs: Self) -> OperatorMatrix {
        OperatorMatrix(&self.0 - &rhs.0)
    }
}

impl Mul for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn mul(self, rhs: Self) -> OperatorMatrix {
        OperatorMatrix(&self.0 * &rhs.0)
    }
}

/// Normalized pure state.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector(DVector<C64>);

impl StateVector {
    /// Normalizes the given amplitudes.
    pub fn new(amplitudes: DVector<C64>) -> Result<Self, KernelError> {
        let norm = amplitudes.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(KernelError::ZeroState);
        }
        Ok(Self(amplitudes / C64::new(norm, 0.0)))
    }

    /// Wraps amplitudes that are already normalized (propagated states).
    pub(crate) fn from_normalized(amplitudes: DVector<C64>) -> Self {
        Self(amplitudes)
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = DVector::zeros(dim);
        v[index] = C64::new(1.0, 0.0);
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.0
    }

    pub fn as_slice(&self) -> &[C64] {
        self.0.as_slice()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.norm_squared()
    }

    pub fn kron(&self, other: &Self) -> Self {
        Self(self.0.kronecker(&other.0))
    }

    pub fn expectation(&self, op: &OperatorMatrix) -> Result<C64, KernelError> {
        let v = op.apply(self)?;
        Ok(self.0.dotc(&v))
    }

    pub fn overlap(&self, other: &Self) -> C64 {
        self.0.dotc(&other.0)
    }
}

/// The three spin components of a single spin.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinOperators {
    pub x: OperatorMatrix,
    pub y: OperatorMatrix,
    pub z: OperatorMatrix,
}

impl SpinOperators {
    pub fn components(&self) -> [&OperatorMatrix; 3] {
        [&self.x, &self.y, &self.z]
    }

    /// `n · S` for a (not necessarily unit) vector `n`.
    pub fn along(&self, n: &Vector3<f64>) -> OperatorMatrix {
        let mut m = self.x.0.map(|z| z * n.x);
        m += self.y.0.map(|z| z * n.y);
        m += self.z.0.map(|z| z * n.z);
        OperatorMatrix(m)
    }
}

/// Ladder coefficient `⟨m+1|S+|m⟩ = sqrt(s(s+1) − m(m+1))`.
pub fn raising_coefficient(s: f64, m: f64) -> f64 {
    (s * (s + 1.0) - m * (m + 1.0)).max(0.0).sqrt()
}

/// Angular-momentum matrices for spin `s` in the `m = s, ..., -s` basis.
pub fn spin_operators(species: SpinSpecies) -> SpinOperators {
    let d = species.dim();
    let s = species.spin();
    let m = species.m_values();
    let mut plus = DMatrix::<C64>::zeros(d, d);
    for k in 1..d {
        // |m_k> -> |m_{k-1}> raises m by one
        plus[(k - 1, k)] = C64::new(raising_coefficient(s, m[k]), 0.0);
    }
    let minus = plus.adjoint();
    let x = (&plus + &minus).map(|z| z * 0.5);
    let y = (&plus - &minus).map(|z| z * C64::new(0.0, -0.5));
    let z = DMatrix::from_diagonal(&DVector::from_iterator(
        d,
        m.iter().map(|&v| C64::new(v, 0.0)),
    ));
    SpinOperators {
        x: OperatorMatrix(x),
        y: OperatorMatrix(y),
        z: OperatorMatrix(z),
    }
}

/// Embeds a single-site operator at `site` (0-based) of a `sites`-spin cluster.
pub fn embed_operator(
    op: &OperatorMatrix,
    site: usize,
    sites: usize,
) -> Result<OperatorMatrix, KernelError> {
    if site >= sites {
        return Err(KernelError::SiteOutOfRange { site, sites });
    }
    let d = op.dim();
    let total = d
        .checked_pow(sites as u32)
        .filter(|&n| n <= MAX_DIM)
        .ok_or(KernelError::DimensionTooLarge {
            dim: usize::MAX,
            limit: MAX_DIM,
        })?;
    let left = d.pow(site as u32);
    let right = total / (left * d);
    let out = DMatrix::<C64>::identity(left, left)
        .kronecker(&op.0)
        .kronecker(&DMatrix::<C64>::identity(right, right));
    Ok(OperatorMatrix(out))
}

/// Eigendecomposition `H = V diag(λ) V†` of a Hermitian matrix, reused to
/// build `exp(−iHτ)` at any number of times.
#[derive(Clone, Debug)]
pub struct Spectrum {
    values: DVector<f64>,
    vectors: DMatrix<C64>,
}

impl Spectrum {
    pub fn new(h: &OperatorMatrix) -> Result<Self, KernelError> {
        let defect = h.hermiticity_defect();
        if defect > HERMITIAN_TOL {
            return Err(KernelError::NotHermitian(defect));
        }
        Ok(Self::new_unchecked(h.0.clone()))
    }

    pub(crate) fn new_unchecked(h: DMatrix<C64>) -> Self {
        let eig = SymmetricEigen::new(h);
        Self {
            values: eig.eigenvalues,
            vectors: eig.eigenvectors,
        }
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn eigenvectors(&self) -> &DMatrix<C64> {
        &self.vectors
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    fn phases(&self, tau: f64) -> DVector<C64> {
        self.values.map(|l| C64::from_polar(1.0, -l * tau))
    }

    pub fn propagator(&self, tau: f64) -> OperatorMatrix {
        let mut scaled = self.vectors.clone();
        let phases = self.phases(tau);
        for (mut col, p) in scaled.column_iter_mut().zip(phases.iter()) {
            col *= *p;
        }
        OperatorMatrix(scaled * self.vectors.adjoint())
    }

    /// `exp(−iHτ) ψ` without forming the propagator.
    pub fn evolve(&self, psi: &DVector<C64>, tau: f64) -> DVector<C64> {
        let mut coeffs = self.vectors.ad_mul(psi);
        for (c, l) in coeffs.iter_mut().zip(self.values.iter()) {
            *c *= C64::from_polar(1.0, -l * tau);
        }
        &self.vectors * coeffs
    }
}

/// `U = exp(−iHτ)` by spectral decomposition.
pub fn hermitian_propagator(h: &OperatorMatrix, tau: f64) -> Result<OperatorMatrix, KernelError> {
    Ok(Spectrum::new(h)?.propagator(tau))
}

/// Single-spin coherent state with maximal projection `s` along `axis`.
pub fn coherent_state(axis: &Vector3<f64>, species: SpinSpecies) -> Result<StateVector, KernelError> {
    let norm = axis.norm();
    if !(norm > 0.0) {
        return Err(KernelError::ZeroAxis);
    }
    let n = axis / norm;
    let theta = n.z.clamp(-1.0, 1.0).acos();
    let phi = n.y.atan2(n.x);
    let ops = spin_operators(species);
    let top = StateVector::basis(species.dim(), 0);
    // exp(-iφSz) exp(-iθSy) |s, s>
    let tilted = Spectrum::new_unchecked(ops.y.0.clone()).evolve(top.amplitudes(), theta);
    let rotated = Spectrum::new_unchecked(ops.z.0.clone()).evolve(&tilted, phi);
    StateVector::new(rotated)
}

/// Product of identical spin-coherent states along `axis` over `sites` spins.
pub fn coherent_product_state(
    axis: &Vector3<f64>,
    species: SpinSpecies,
    sites: usize,
) -> Result<StateVector, KernelError> {
    species.cluster_dim(sites)?;
    let single = coherent_state(axis, species)?;
    let mut psi = single.clone();
    for _ in 1..sites {
        psi = psi.kron(&single);
    }
    Ok(psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn species(twice: u32) -> SpinSpecies {
        SpinSpecies::from_twice_spin(twice, ELECTRON_GAMMA).unwrap()
    }

    fn max_abs_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn spin_half_is_half_pauli() {
        let ops = spin_operators(SpinSpecies::spin_half());
        let h = C64::new(0.5, 0.0);
        let i = C64::new(0.0, 0.5);
        let z = C64::new(0.0, 0.0);
        assert_eq!(ops.z.as_matrix(), &DMatrix::from_row_slice(2, 2, &[h, z, z, -h]));
        assert_eq!(ops.x.as_matrix(), &DMatrix::from_row_slice(2, 2, &[z, h, h, z]));
        assert_eq!(ops.y.as_matrix(), &DMatrix::from_row_slice(2, 2, &[z, -i, i, z]));
    }

    #[test]
    fn spin_one_sz_diagonal() {
        let ops = spin_operators(species(2));
        let diag: Vec<f64> = ops.z.as_matrix().diagonal().iter().map(|z| z.re).collect();
        assert_eq!(diag, vec![1.0, 0.0, -1.0]);
    }

    #[test]
    fn commutation_and_casimir() {
        for twice in 1..=6 {
            let sp = species(twice);
            let s = sp.spin();
            let ops = spin_operators(sp);
            let comm = ops.x.commutator(&ops.y);
            let isz = ops.z.as_matrix().map(|z| z * C64::new(0.0, 1.0));
            assert!(max_abs_diff(comm.as_matrix(), &isz) < 1e-13);
            let cas = &(&(&ops.x * &ops.x) + &(&ops.y * &ops.y)) + &(&ops.z * &ops.z);
            let expect = DMatrix::<C64>::identity(sp.dim(), sp.dim()).map(|z| z * s * (s + 1.0));
            assert!(max_abs_diff(cas.as_matrix(), &expect) < 1e-12);
            for op in ops.components() {
                assert!(op.is_hermitian());
            }
        }
    }

    #[test]
    fn invalid_spins_rejected() {
        assert!(SpinSpecies::new(0.0, 1.0).is_err());
        assert!(SpinSpecies::new(0.3, 1.0).is_err());
        assert!(SpinSpecies::new(-0.5, 1.0).is_err());
        assert_eq!(SpinSpecies::new(1.5, 1.0).unwrap().dim(), 4);
        assert_eq!(SpinSpecies::new(1.5, 1.0).unwrap().to_string(), "3/2");
    }

    #[test]
    fn embedding_properties() {
        let ops = spin_operators(SpinSpecies::spin_half());
        assert_eq!(embed_operator(&ops.z, 0, 1).unwrap(), ops.z);
        let a = embed_operator(&ops.z, 0, 2).unwrap();
        let b = embed_operator(&ops.x, 1, 2).unwrap();
        assert!(a.commutator(&b).frobenius_norm() < 1e-15);
        let c = embed_operator(&ops.z, 1, 2).unwrap();
        assert_abs_diff_eq!(c.trace().norm(), 0.0, epsilon = 1e-15);
        assert!(matches!(
            embed_operator(&ops.z, 2, 2),
            Err(KernelError::SiteOutOfRange { site: 2, sites: 2 })
        ));
        assert!(embed_operator(&ops.z, 0, 13).is_err());
    }

    #[test]
    fn propagator_trivial_cases() {
        let ops = spin_operators(SpinSpecies::spin_half());
        let u0 = hermitian_propagator(&ops.z, 0.0).unwrap();
        assert!(max_abs_diff(u0.as_matrix(), &DMatrix::identity(2, 2)) < 1e-15);
        let u = hermitian_propagator(&ops.z, std::f64::consts::PI).unwrap();
        let expect = DMatrix::from_row_slice(
            2,
            2,
            &[C64::new(0.0, -1.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 1.0)],
        );
        assert!(max_abs_diff(u.as_matrix(), &expect) < 1e-14);
    }

    #[test]
    fn non_hermitian_rejected() {
        let mut m = DMatrix::<C64>::zeros(2, 2);
        m[(0, 1)] = C64::new(1.0, 0.0);
        let op = OperatorMatrix::from_matrix(m).unwrap();
        assert!(matches!(hermitian_propagator(&op, 1.0), Err(KernelError::NotHermitian(_))));
    }

    /// Truncated Taylor series of exp(-iHτ); independent of any eigensolver.
    fn taylor_exp(h: &DMatrix<C64>, tau: f64, terms: usize) -> DMatrix<C64> {
        let n = h.nrows();
        let a = h.map(|z| z * C64::new(0.0, -tau));
        let mut term = DMatrix::<C64>::identity(n, n);
        let mut sum = term.clone();
        for k in 1..terms {
            term = &term * &a / C64::new(k as f64, 0.0);
            sum += &term;
        }
        sum
    }

    fn random_hermitian(n: usize, seed: u64) -> DMatrix<C64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::<C64>::from_fn(n, n, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        (&a + a.adjoint()).map(|z| z * 0.5)
    }

    #[test]
    fn spectral_matches_taylor_oracle() {
        let h = random_hermitian(8, 11);
        let u = hermitian_propagator(&OperatorMatrix(h.clone()), 0.37).unwrap();
        let oracle = taylor_exp(&h, 0.37, 50);
        assert!(max_abs_diff(u.as_matrix(), &oracle) < 1e-10);
        assert!(u.unitarity_defect() < 1e-10);
    }

    #[test]
    fn coherent_states_match_definitions() {
        let z = coherent_product_state(&Vector3::z(), SpinSpecies::spin_half(), 1).unwrap();
        assert_abs_diff_eq!(z.as_slice()[0].norm(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(z.as_slice()[1].norm(), 0.0, epsilon = 1e-14);

        let x2 = coherent_product_state(&Vector3::x(), SpinSpecies::spin_half(), 2).unwrap();
        let ops = spin_operators(SpinSpecies::spin_half());
        let total = |op: &OperatorMatrix| {
            &embed_operator(op, 0, 2).unwrap() + &embed_operator(op, 1, 2).unwrap()
        };
        let sx = total(&ops.x);
        let mean_x = x2.expectation(&sx).unwrap().re;
        let sq = x2.expectation(&(&sx * &sx)).unwrap().re;
        assert_abs_diff_eq!(mean_x, 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(sq - mean_x * mean_x, 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(x2.expectation(&total(&ops.y)).unwrap().norm(), 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(x2.expectation(&total(&ops.z)).unwrap().norm(), 0.0, epsilon = 1e-13);
        assert!(coherent_state(&Vector3::zeros(), SpinSpecies::spin_half()).is_err());
    }

    #[test]
    fn spin_one_coherent_state_matches_wigner_rotation() {
        // Wigner d^1(π/2) applied to |1,1>: (1/2, 1/√2, 1/2)
        let expect = [0.5, std::f64::consts::FRAC_1_SQRT_2, 0.5];
        let sp = species(2);
        let psi = coherent_state(&Vector3::x(), sp).unwrap();
        let phase = psi.as_slice()[0] / psi.as_slice()[0].norm();
        for (a, e) in psi.as_slice().iter().zip(expect) {
            assert_abs_diff_eq!((a / phase).re, e, epsilon = 1e-13);
            assert_abs_diff_eq!((a / phase).im, 0.0, epsilon = 1e-13);
        }
        let ops = spin_operators(sp);
        let var = |op: &OperatorMatrix| {
            let m = psi.expectation(op).unwrap().re;
            psi.expectation(&(op * op)).unwrap().re - m * m
        };
        assert_abs_diff_eq!(psi.expectation(&ops.x).unwrap().re, 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(var(&ops.y), 0.5, epsilon = 1e-13);
        assert_abs_diff_eq!(var(&ops.z), 0.5, epsilon = 1e-13);
    }

    proptest! {
        #[test]
        fn coherent_state_projection_is_maximal(
            twice in 1u32..6,
            x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0,
        ) {
            let axis = Vector3::new(x, y, z);
            prop_assume!(axis.norm() > 1e-3);
            let sp = species(twice);
            let psi = coherent_state(&axis, sp).unwrap();
            let proj = spin_operators(sp).along(&(axis / axis.norm()));
            let e = psi.expectation(&proj).unwrap();
            prop_assert!((e.re - sp.spin()).abs() < 1e-12);
            prop_assert!((psi.norm_sqr() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn propagators_are_unitary(seed in 0u64..1000, tau in -5.0f64..5.0) {
            let h = OperatorMatrix(random_hermitian(6, seed));
            let u = hermitian_propagator(&h, tau).unwrap();
            prop_assert!(u.unitarity_defect() < 1e-10);
        }
    }
}
