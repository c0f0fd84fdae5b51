//! Time evolution under static and Larmor-periodic cluster Hamiltonians.

use crate::geometry::ClusterGeometry;
use crate::hamiltonians::{HamiltonianError, RotatingHamiltonian};
use crate::kernel::{KernelError, OperatorMatrix, SpinSpecies, Spectrum, StateVector, C64};
use crate::space::ClusterSpace;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use std::f64::consts::PI;
use thiserror::Error;

/// Smallest accepted number of midpoint steps per Larmor period.
pub const MIN_STEPS_PER_PERIOD: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Hamiltonian(#[from] HamiltonianError),
    #[error("time grid must be non-empty, finite, non-negative and strictly increasing")]
    InvalidGrid,
    #[error("steps per period must be at least {MIN_STEPS_PER_PERIOD}, got {0}")]
    TooFewSteps(usize),
    #[error("omega_ratio must be positive and finite, got {0}")]
    InvalidRatio(f64),
}

/// States on an ascending grid that starts at `τ = 0`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    tau: Vec<f64>,
    states: Vec<StateVector>,
}

impl Trajectory {
    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn states(&self) -> &[StateVector] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    pub fn last(&self) -> &StateVector {
        self.states.last().expect("trajectory holds at least the initial state")
    }
}

/// Validates a grid and prepends `τ = 0` when absent.
pub fn anchored_grid(grid: &[f64]) -> Result<Vec<f64>, DynamicsError> {
    if grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(DynamicsError::InvalidGrid);
    }
    let mut out = Vec::with_capacity(grid.len() + 1);
    if grid.first() != Some(&0.0) {
        out.push(0.0);
    }
    out.extend_from_slice(grid);
    Ok(out)
}

/// `ψ(τ) = exp(−iHτ)ψ₀` from one spectral factorization.
pub fn evolve_static(h: &OperatorMatrix, psi0: &StateVector, grid: &[f64]) -> Result<Trajectory, DynamicsError> {
    if h.dim() != psi0.dim() {
        return Err(KernelError::DimensionMismatch {
            operator: h.dim(),
            state: psi0.dim(),
        }
        .into());
    }
    let tau = anchored_grid(grid)?;
    let spectrum = Spectrum::new(h)?;
    let mut coeffs = spectrum.eigenvectors().ad_mul(psi0.amplitudes());
    let mut states = Vec::with_capacity(tau.len());
    let mut prev = 0.0;
    for &t in &tau {
        for (c, l) in coeffs.iter_mut().zip(spectrum.eigenvalues().iter()) {
            *c *= C64::from_polar(1.0, -l * (t - prev));
        }
        prev = t;
        states.push(StateVector::from_normalized(spectrum.eigenvectors() * &coeffs));
    }
    Ok(Trajectory { tau, states })
}

/// Exponential-midpoint integrator for `H̃(ωτ)` with `ω = omega_ratio`.
/// Steps are at most `2π/(K·max(2ω + ‖H̃‖, 1))`: `H̃` carries the second
/// harmonic of the drive, and the couplings add their own frequency.
#[derive(Clone, Debug)]
pub struct PeriodicPropagator {
    hamiltonian: RotatingHamiltonian,
    omega_ratio: f64,
    max_step: f64,
}

impl PeriodicPropagator {
    pub fn new(
        hamiltonian: RotatingHamiltonian,
        omega_ratio: f64,
        steps_per_period: usize,
    ) -> Result<Self, DynamicsError> {
        if steps_per_period < MIN_STEPS_PER_PERIOD {
            return Err(DynamicsError::TooFewSteps(steps_per_period));
        }
        if !(omega_ratio > 0.0 && omega_ratio.is_finite()) {
            return Err(DynamicsError::InvalidRatio(omega_ratio));
        }
        let rate = (2.0 * omega_ratio + hamiltonian.norm_bound()).max(1.0);
        Ok(Self {
            hamiltonian,
            omega_ratio,
            max_step: 2.0 * PI / (steps_per_period as f64 * rate),
        })
    }

    pub fn max_step(&self) -> f64 {
        self.max_step
    }

    /// Advances `psi` from `t0` to `t1` in equal substeps no longer than
    /// the maximum step.
    pub fn advance(&self, psi: &mut DVector<C64>, t0: f64, t1: f64) {
        let span = t1 - t0;
        if span <= 0.0 {
            return;
        }
        let n = (span / self.max_step).ceil().max(1.0) as usize;
        let dt = span / n as f64;
        for k in 0..n {
            let mid = t0 + (k as f64 + 0.5) * dt;
            let h = self.hamiltonian.at(self.omega_ratio * mid);
            *psi = Spectrum::new_unchecked(h).evolve(psi, dt);
        }
    }

    /// States at every point of an anchored grid.
    pub fn evolve_grid(&self, psi0: &DVector<C64>, tau: &[f64]) -> Vec<DVector<C64>> {
        let mut psi = psi0.clone();
        let mut prev = 0.0;
        let mut out = Vec::with_capacity(tau.len());
        for &t in tau {
            self.advance(&mut psi, prev, t);
            prev = t;
            out.push(psi.clone());
        }
        out
    }
}

/// Evolution under the rotating-frame dipolar Hamiltonian `H̃(ω τ)`.
pub fn evolve_periodic(
    c: &ClusterGeometry,
    species: SpinSpecies,
    omega_ratio: f64,
    psi0: &StateVector,
    grid: &[f64],
    steps_per_period: usize,
) -> Result<Trajectory, DynamicsError> {
    let h = RotatingHamiltonian::new(c, species)?;
    if h.dim() != psi0.dim() {
        return Err(KernelError::DimensionMismatch {
            operator: h.dim(),
            state: psi0.dim(),
        }
        .into());
    }
    let tau = anchored_grid(grid)?;
    let prop = PeriodicPropagator::new(h, omega_ratio, steps_per_period)?;
    let states = prop
        .evolve_grid(psi0.amplitudes(), &tau)
        .into_iter()
        .map(StateVector::from_normalized)
        .collect();
    Ok(Trajectory { tau, states })
}

#[derive(Clone, Debug)]
struct Block {
    indices: Vec<usize>,
    values: DVector<f64>,
    vectors: DMatrix<f64>,
}

/// Spectral factorization of a real symmetric Hamiltonian that is block
/// diagonal over known index sets. States stay complex.
#[derive(Clone, Debug)]
pub struct BlockSpectrum {
    dim: usize,
    blocks: Vec<Block>,
}

/// Initial state expressed in the eigenbases of a [`BlockSpectrum`].
#[derive(Clone, Debug)]
pub struct BlockCoefficients {
    re: Vec<DVector<f64>>,
    im: Vec<DVector<f64>>,
}

impl BlockSpectrum {
    /// One block per fixed-`Sz` sector of `space`.
    pub fn from_sectors(space: &ClusterSpace, blocks: Vec<DMatrix<f64>>) -> Self {
        let blocks = space
            .sectors()
            .iter()
            .zip(blocks)
            .map(|(idx, m)| {
                let eig = SymmetricEigen::new(m);
                Block {
                    indices: idx.clone(),
                    values: eig.eigenvalues,
                    vectors: eig.eigenvectors,
                }
            })
            .collect();
        Self { dim: space.dim(), blocks }
    }

    /// A single dense block.
    pub fn dense(h: DMatrix<f64>) -> Self {
        let dim = h.nrows();
        let eig = SymmetricEigen::new(h);
        Self {
            dim,
            blocks: vec![Block {
                indices: (0..dim).collect(),
                values: eig.eigenvalues,
                vectors: eig.eigenvectors,
            }],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.blocks.iter().flat_map(|b| b.values.iter().copied()).collect()
    }

    pub fn prepare(&self, psi0: &[C64]) -> BlockCoefficients {
        let mut re = Vec::with_capacity(self.blocks.len());
        let mut im = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let r = DVector::from_iterator(b.indices.len(), b.indices.iter().map(|&k| psi0[k].re));
            let i = DVector::from_iterator(b.indices.len(), b.indices.iter().map(|&k| psi0[k].im));
            re.push(b.vectors.tr_mul(&r));
            im.push(b.vectors.tr_mul(&i));
        }
        BlockCoefficients { re, im }
    }

    /// Writes `exp(−iHτ)ψ₀` into `out`.
    pub fn evolve_into(&self, coeffs: &BlockCoefficients, tau: f64, out: &mut [C64]) {
        for (n, b) in self.blocks.iter().enumerate() {
            let len = b.indices.len();
            let mut cr = DVector::zeros(len);
            let mut ci = DVector::zeros(len);
            for k in 0..len {
                let (s, c) = (-b.values[k] * tau).sin_cos();
                let (a, bb) = (coeffs.re[n][k], coeffs.im[n][k]);
                cr[k] = a * c - bb * s;
                ci[k] = a * s + bb * c;
            }
            let vr = &b.vectors * cr;
            let vi = &b.vectors * ci;
            for (k, &idx) in b.indices.iter().enumerate() {
                out[idx] = C64::new(vr[k], vi[k]);
            }
        }
    }
}
