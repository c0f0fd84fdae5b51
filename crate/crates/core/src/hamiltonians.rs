//! Dimensionless dipolar Hamiltonians of a cluster, in units of `ħω_dd`.
//!
//! With `ω_dd = s²γ²ħμ₀ρ` and lengths in units of `ρ^{-1/3}`, each unordered
//! pair contributes `(1/(4π s² u³)) [sᵢ·sⱼ − 3(sᵢ·r̂)(sⱼ·r̂)]`.

use crate::geometry::ClusterGeometry;
use crate::kernel::{embed_operator, spin_operators, KernelError, OperatorMatrix, SpinSpecies, C64};
use crate::space::ClusterSpace;
use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

pub const HBAR: f64 = 1.054_571_817e-34;
pub const MU0: f64 = 1.256_637_062_12e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HamiltonianError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("cluster has {geometry} sites but the basis has {space}")]
    SiteMismatch { geometry: usize, space: usize },
    #[error("sites {0} and {1} coincide")]
    Coincident(usize, usize),
    #[error("density must be positive and finite, got {0}")]
    InvalidDensity(f64),
    #[error("gyromagnetic ratio must be non-zero and finite, got {0}")]
    InvalidGamma(f64),
    #[error("{0}")]
    InvalidProtocol(String),
}

/// SI boundary: converts between physical and dimensionless quantities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitSystem {
    species: SpinSpecies,
    rho: f64,
    omega_dd: f64,
}

impl UnitSystem {
    pub fn new(species: SpinSpecies, rho: f64) -> Result<Self, HamiltonianError> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(HamiltonianError::InvalidDensity(rho));
        }
        let g = species.gamma();
        if !(g != 0.0 && g.is_finite()) {
            return Err(HamiltonianError::InvalidGamma(g));
        }
        let s = species.spin();
        let omega_dd = s * s * g * g * HBAR * MU0 * rho;
        Ok(Self { species, rho, omega_dd })
    }

    pub fn omega_dd(&self) -> f64 {
        self.omega_dd
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn tau_from_seconds(&self, t: f64) -> f64 {
        self.omega_dd * t
    }

    pub fn seconds_from_tau(&self, tau: f64) -> f64 {
        tau / self.omega_dd
    }

    /// `b = γB/ω_dd`.
    pub fn field_to_dimensionless(&self, tesla: f64) -> f64 {
        self.species.gamma() * tesla / self.omega_dd
    }

    pub fn field_from_dimensionless(&self, b: f64) -> f64 {
        b * self.omega_dd / self.species.gamma()
    }

    /// Volume occupied by `n` spins, in m³.
    pub fn volume(&self, n: f64) -> f64 {
        n / self.rho
    }

    /// `E_R/ħ = ⟨δB²⟩VT/(2μ₀ħ)` evaluated through SI quantities, for a
    /// dimensionless field variance `var_b` of `n` spins read out at `tau`.
    pub fn energy_resolution_over_hbar(&self, var_b: f64, n: f64, tau: f64) -> f64 {
        let scale = self.field_from_dimensionless(1.0);
        let var_tesla = var_b * scale * scale;
        var_tesla * self.volume(n) * self.seconds_from_tau(tau) / (2.0 * MU0) / HBAR
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Dc,
    Rf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Secular,
    Full,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Dc => "dc",
            Protocol::Rf => "rf",
        })
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::Secular => "secular",
            Model::Full => "full",
        })
    }
}

impl FromStr for Protocol {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "dc" => Ok(Protocol::Dc),
            "rf" => Ok(Protocol::Rf),
            other => Err(format!("unknown protocol '{other}' (expected dc or rf)")),
        }
    }
}

impl FromStr for Model {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "secular" => Ok(Model::Secular),
            "full" => Ok(Model::Full),
            other => Err(format!("unknown model '{other}' (expected secular or full)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub protocol: Protocol,
    pub model: Model,
    /// `ω_L/ω_dd`, DC full model only.
    pub omega_ratio: f64,
    /// `γB_RF/ω_dd`, RF only.
    pub b_rf: f64,
}

impl ProtocolParams {
    pub fn validate(&self) -> Result<(), HamiltonianError> {
        match (self.protocol, self.model) {
            (Protocol::Rf, Model::Full) => Err(HamiltonianError::InvalidProtocol(
                "the rf protocol is only defined for the secular model".into(),
            )),
            (Protocol::Rf, _) if !(self.b_rf >= 0.0 && self.b_rf.is_finite()) => Err(
                HamiltonianError::InvalidProtocol(format!("b_rf must be >= 0, got {}", self.b_rf)),
            ),
            (Protocol::Dc, Model::Full) if !(self.omega_ratio > 0.0 && self.omega_ratio.is_finite()) => {
                Err(HamiltonianError::InvalidProtocol(format!(
                    "omega_ratio must be > 0 for the full model, got {}",
                    self.omega_ratio
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Unordered pair `(i, j)` with unit vector `r̂` from `i` to `j` and
/// coupling `1/(4π s² u³)`.
#[derive(Clone, Copy, Debug)]
pub struct PairCoupling {
    pub i: usize,
    pub j: usize,
    pub unit: Vector3<f64>,
    pub strength: f64,
}

pub fn pair_couplings(c: &ClusterGeometry, species: SpinSpecies) -> Result<Vec<PairCoupling>, HamiltonianError> {
    let s = species.spin();
    let m = c.sites();
    let mut out = Vec::with_capacity(m * m.saturating_sub(1) / 2);
    for i in 0..m {
        for j in i + 1..m {
            let r = c.separation(i, j);
            let u = r.norm();
            if u == 0.0 {
                return Err(HamiltonianError::Coincident(i, j));
            }
            out.push(PairCoupling {
                i,
                j,
                unit: r / u,
                strength: 1.0 / (4.0 * PI * s * s * u * u * u),
            });
        }
    }
    Ok(out)
}

fn rotate_z(v: &Vector3<f64>, phi: f64) -> Vector3<f64> {
    let (s, c) = phi.sin_cos();
    Vector3::new(c * v.x - s * v.y, s * v.x + c * v.y, v.z)
}

/// Dipolar tensor `δ_ab − 3 r̂_a r̂_b`.
fn dipolar_tensor(r: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::identity() - r * r.transpose() * 3.0
}

fn assemble_tensor_sum(
    space: &ClusterSpace,
    pairs: &[PairCoupling],
    tensor: impl Fn(&PairCoupling) -> Matrix3<f64>,
) -> OperatorMatrix {
    let products = space.pair_products();
    let d2 = space.local_dim() * space.local_dim();
    let mut h = DMatrix::zeros(space.dim(), space.dim());
    for p in pairs {
        let t = tensor(p);
        let mut local = DMatrix::<C64>::zeros(d2, d2);
        for a in 0..3 {
            for b in 0..3 {
                if t[(a, b)] != 0.0 {
                    local += products[a][b].as_matrix() * C64::new(t[(a, b)], 0.0);
                }
            }
        }
        space.add_pair_operator(&mut h, p.i, p.j, &local, p.strength);
    }
    symmetrized(h)
}

fn symmetrized(h: DMatrix<C64>) -> OperatorMatrix {
    let h = (&h + h.adjoint()) * C64::new(0.5, 0.0);
    OperatorMatrix::from_matrix(h).expect("square")
}

fn checked_space(c: &ClusterGeometry, species: SpinSpecies) -> Result<ClusterSpace, HamiltonianError> {
    Ok(ClusterSpace::new(species, c.sites())?)
}

/// `H̃(φ)`: the dipolar Hamiltonian with every pair direction rotated by
/// `R_z(φ)`. At `φ = 0` this is the lab-frame dipolar term.
pub fn rotating_dd_hamiltonian(
    c: &ClusterGeometry,
    species: SpinSpecies,
    phi: f64,
) -> Result<OperatorMatrix, HamiltonianError> {
    let space = checked_space(c, species)?;
    let pairs = pair_couplings(c, species)?;
    Ok(assemble_tensor_sum(&space, &pairs, |p| dipolar_tensor(&rotate_z(&p.unit, phi))))
}

/// Secular couplings `(i, j, K_ij (1 − 3r̂_z²)/2)` multiplying `3s_iz s_jz − sᵢ·sⱼ`.
pub fn secular_couplings(pairs: &[PairCoupling]) -> Vec<(usize, usize, f64)> {
    pairs
        .iter()
        .map(|p| (p.i, p.j, p.strength * (1.0 - 3.0 * p.unit.z * p.unit.z) / 2.0))
        .collect()
}

/// `H̄`: the Larmor-cycle average of [`rotating_dd_hamiltonian`].
pub fn secular_dd_hamiltonian(c: &ClusterGeometry, species: SpinSpecies) -> Result<OperatorMatrix, HamiltonianError> {
    let space = checked_space(c, species)?;
    let blocks = secular_sector_blocks(&space, c)?;
    Ok(OperatorMatrix::from_real(&space.assemble_blocks(&blocks))?)
}

/// `H̄` restricted to each fixed-`Sz` sector of `space`, as real symmetric blocks.
pub fn secular_sector_blocks(space: &ClusterSpace, c: &ClusterGeometry) -> Result<Vec<DMatrix<f64>>, HamiltonianError> {
    if space.sites() != c.sites() {
        return Err(HamiltonianError::SiteMismatch {
            geometry: c.sites(),
            space: space.sites(),
        });
    }
    let pairs = pair_couplings(c, space.species())?;
    Ok(space.zz_exchange_blocks(&secular_couplings(&pairs)))
}

/// `−b_rf Σᵢ Sx,ᵢ`.
pub fn rf_drive(species: SpinSpecies, sites: usize, b_rf: f64) -> Result<OperatorMatrix, HamiltonianError> {
    let ops = spin_operators(species);
    let dim = species.cluster_dim(sites)?;
    let mut h = OperatorMatrix::zeros(dim);
    for i in 0..sites {
        h = &h + &embed_operator(&ops.x, i, sites)?;
    }
    Ok(h.scale(-b_rf))
}

/// Fourier decomposition `H̃(φ) = H₀ + Σ_{k=1,2} (C_k cos kφ + S_k sin kφ)`.
/// `H̃` is exactly a degree-2 trigonometric polynomial in `φ`, so the five
/// harmonics are obtained without truncation.
#[derive(Clone, Debug)]
pub struct RotatingHamiltonian {
    harmonics: [DMatrix<C64>; 5],
}

impl RotatingHamiltonian {
    pub fn new(c: &ClusterGeometry, species: SpinSpecies) -> Result<Self, HamiltonianError> {
        let space = checked_space(c, species)?;
        let pairs = pair_couplings(c, species)?;
        // 5-point DFT of each pair tensor; exact for degree 2.
        let nodes: Vec<f64> = (0..5).map(|k| 2.0 * PI * k as f64 / 5.0).collect();
        let tensor_harmonic = |p: &PairCoupling, h: usize| -> Matrix3<f64> {
            let mut acc = Matrix3::zeros();
            for &phi in &nodes {
                let t = dipolar_tensor(&rotate_z(&p.unit, phi));
                let w = match h {
                    0 => 1.0 / 5.0,
                    1 => 2.0 / 5.0 * phi.cos(),
                    2 => 2.0 / 5.0 * phi.sin(),
                    3 => 2.0 / 5.0 * (2.0 * phi).cos(),
                    _ => 2.0 / 5.0 * (2.0 * phi).sin(),
                };
                acc += t * w;
            }
            acc
        };
        let harmonics =
            std::array::from_fn(|h| assemble_tensor_sum(&space, &pairs, |p| tensor_harmonic(p, h)).into_matrix());
        Ok(Self { harmonics })
    }

    pub fn dim(&self) -> usize {
        self.harmonics[0].nrows()
    }

    /// Upper bound on `‖H̃(φ)‖₂` over all phases.
    pub fn norm_bound(&self) -> f64 {
        self.harmonics.iter().map(|h| h.norm()).sum()
    }

    /// The cycle average `H₀`.
    pub fn average(&self) -> &DMatrix<C64> {
        &self.harmonics[0]
    }

    pub fn at(&self, phi: f64) -> DMatrix<C64> {
        let w = [1.0, phi.cos(), phi.sin(), (2.0 * phi).cos(), (2.0 * phi).sin()];
        let mut h = self.harmonics[0].clone();
        for (hk, wk) in self.harmonics.iter().zip(w).skip(1) {
            h += hk * C64::new(wk, 0.0);
        }
        h
    }
}
