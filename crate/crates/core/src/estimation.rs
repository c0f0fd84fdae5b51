//! Collective-spin statistics, signal gradients, optimal readout and the
//! energy-resolution curve.

use crate::kernel::{KernelError, SpinSpecies, StateVector};
use crate::space::ClusterSpace;
use nalgebra::{Matrix2, Matrix3, SymmetricEigen, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Relative eigenvalue cutoff used for the pseudo-inverse of `Γ`.
pub const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("at least {needed} samples are required, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("curve needs at least three finite points")]
    ShortCurve,
    #[error("curve has no interior minimum")]
    NoInteriorMinimum,
    #[error("tau and value arrays differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

/// Quantum moments of the collective spin of one cluster.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentSample {
    pub mean: Vector3<f64>,
    /// `⟨(SₐS_b + S_bSₐ)/2⟩`.
    pub second: Matrix3<f64>,
    /// Field derivative of `mean`, when computed directly.
    pub grad_mean: Option<Vector3<f64>>,
}

impl MomentSample {
    pub fn covariance(&self) -> Matrix3<f64> {
        self.second - self.mean * self.mean.transpose()
    }
}

pub fn collective_moments(psi: &StateVector, species: SpinSpecies, sites: usize) -> Result<MomentSample, EstimationError> {
    let space = ClusterSpace::new(species, sites)?;
    if psi.dim() != space.dim() {
        return Err(KernelError::DimensionMismatch {
            operator: space.dim(),
            state: psi.dim(),
        }
        .into());
    }
    Ok(space.moments(psi.as_slice()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceMode {
    /// `E[second] − E[mean]E[mean]ᵀ`, including the spread of cluster means.
    Joint,
    /// `E[second − mean meanᵀ]`, quantum noise only.
    Averaged,
}

impl fmt::Display for CovarianceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CovarianceMode::Joint => "joint",
            CovarianceMode::Averaged => "averaged",
        })
    }
}

impl FromStr for CovarianceMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "joint" => Ok(CovarianceMode::Joint),
            "averaged" => Ok(CovarianceMode::Averaged),
            other => Err(format!("unknown covariance mode '{other}' (expected joint or averaged)")),
        }
    }
}

/// Totals `(Q·E[mean], Q·Γ₁)` for `q` clusters with per-cluster statistics
/// estimated from `samples`.
pub fn ensemble_covariance(
    samples: &[MomentSample],
    q: f64,
    mode: CovarianceMode,
) -> Result<(Vector3<f64>, Matrix3<f64>), EstimationError> {
    if samples.len() < 2 {
        return Err(EstimationError::TooFewSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    let n = samples.len() as f64;
    let mean: Vector3<f64> = samples.iter().map(|s| s.mean).sum::<Vector3<f64>>() / n;
    let second: Matrix3<f64> = samples.iter().map(|s| s.second).sum::<Matrix3<f64>>() / n;
    let gamma1 = match mode {
        CovarianceMode::Joint => second - mean * mean.transpose(),
        CovarianceMode::Averaged => {
            let outer: Matrix3<f64> = samples.iter().map(|s| s.mean * s.mean.transpose()).sum::<Matrix3<f64>>() / n;
            second - outer
        }
    };
    Ok((mean * q, gamma1 * q))
}

/// Frame-rotation gradient `τ ẑ × ⟨S⟩` (dimensionless).
pub fn dc_gradient(mean: &Vector3<f64>, tau: f64) -> Vector3<f64> {
    Vector3::z().cross(mean) * tau
}

pub fn central_difference(plus: &Vector3<f64>, minus: &Vector3<f64>, step: f64) -> Vector3<f64> {
    (plus - minus) / (2.0 * step)
}

/// Relative change between a step-`h` and a step-`h/2` derivative estimate.
pub fn richardson_discrepancy(coarse: &Vector3<f64>, fine: &Vector3<f64>) -> f64 {
    let scale = coarse.norm().max(fine.norm());
    if scale == 0.0 {
        0.0
    } else {
        (coarse - fine).norm() / scale
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Readout {
    /// Readout direction restricted to the xy plane.
    Plane,
    /// Unrestricted readout direction.
    Full,
}

impl fmt::Display for Readout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Readout::Plane => "plane",
            Readout::Full => "full",
        })
    }
}

impl FromStr for Readout {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "plane" => Ok(Readout::Plane),
            "full" => Ok(Readout::Full),
            other => Err(format!("unknown readout '{other}' (expected plane or full)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimalReadout {
    /// Minimum of `nᵀΓn/(g·n)²`; infinite when no direction carries signal.
    pub variance: f64,
    pub direction: Vector3<f64>,
    /// Rank of `Γ` on the space the optimization ran over.
    pub rank: usize,
}

impl OptimalReadout {
    fn no_signal(rank: usize) -> Self {
        Self {
            variance: f64::INFINITY,
            direction: Vector3::zeros(),
            rank,
        }
    }
}

/// Generalized Rayleigh optimum `var = 1/(gᵀΓ⁺g)`, `n ∝ Γ⁺g`, over all
/// directions.
pub fn optimal_variance(gamma: &Matrix3<f64>, g: &Vector3<f64>) -> OptimalReadout {
    let eig = SymmetricEigen::new(gamma.symmetric_part());
    let cutoff = RANK_TOL * eig.eigenvalues.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mut pinv = Matrix3::zeros();
    let mut rank = 0;
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        if l > cutoff {
            let v = eig.eigenvectors.column(k);
            pinv += v * v.transpose() / l;
            rank += 1;
        }
    }
    let w = pinv * g;
    let q = g.dot(&w);
    if !(q > 0.0) {
        return OptimalReadout::no_signal(rank);
    }
    OptimalReadout {
        variance: 1.0 / q,
        direction: w.normalize(),
        rank,
    }
}

/// Closed form for readout in the xy plane:
/// `var = (ΓxxΓyy − Γxy²)/Z`, `Z = gx²Γyy − 2gxgyΓxy + gy²Γxx`.
pub fn optimal_variance_plane(gamma: &Matrix3<f64>, g: &Vector3<f64>) -> OptimalReadout {
    let (xx, yy, xy) = (gamma[(0, 0)], gamma[(1, 1)], 0.5 * (gamma[(0, 1)] + gamma[(1, 0)]));
    let g2 = Vector2::new(g.x, g.y);
    let block = Matrix2::new(xx, xy, xy, yy);
    let det = xx * yy - xy * xy;
    let scale = xx.abs().max(yy.abs());
    let z = g.x * g.x * yy - 2.0 * g.x * g.y * xy + g.y * g.y * xx;
    if det > RANK_TOL * scale * scale && z > 0.0 {
        let n = Vector2::new(yy * g.x - xy * g.y, xx * g.y - xy * g.x).normalize();
        return OptimalReadout {
            variance: det / z,
            direction: Vector3::new(n.x, n.y, 0.0),
            rank: 2,
        };
    }
    // Singular plane block: fall back to the pseudo-inverse form.
    let mut embedded = Matrix3::zeros();
    embedded.fixed_view_mut::<2, 2>(0, 0).copy_from(&block);
    let r = optimal_variance(&embedded, &Vector3::new(g2.x, g2.y, 0.0));
    OptimalReadout {
        rank: r.rank.min(2),
        ..r
    }
}

pub fn optimal_readout(gamma: &Matrix3<f64>, g: &Vector3<f64>, readout: Readout) -> OptimalReadout {
    match readout {
        Readout::Plane => optimal_variance_plane(gamma, g),
        Readout::Full => optimal_variance(gamma, g),
    }
}

/// `E_R/ħ = s² N τ ⟨δb²⟩ / 2` for `N` spins and dimensionless field variance.
pub fn energy_resolution(species: SpinSpecies, n_spins: f64, tau: f64, var_b: f64) -> f64 {
    let s = species.spin();
    0.5 * s * s * n_spins * tau * var_b
}

/// Located minimum of a sampled curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub tau_opt: f64,
    pub er_min: f64,
    /// Index of the smallest grid value.
    pub grid_index: usize,
    /// Set when the smallest grid value is the first or last point.
    pub at_boundary: bool,
}

/// Grid minimum refined by the vertex of the parabola through the three
/// bracketing points. Non-finite points are skipped.
pub fn find_optimum(tau: &[f64], values: &[f64]) -> Result<Optimum, EstimationError> {
    if tau.len() != values.len() {
        return Err(EstimationError::LengthMismatch(tau.len(), values.len()));
    }
    let pts: Vec<(usize, f64, f64)> = tau
        .iter()
        .zip(values)
        .enumerate()
        .filter(|(_, (t, v))| t.is_finite() && v.is_finite())
        .map(|(i, (&t, &v))| (i, t, v))
        .collect();
    if pts.len() < 3 {
        return Err(EstimationError::ShortCurve);
    }
    let k = pts
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .2.total_cmp(&b.1 .2))
        .map(|(k, _)| k)
        .expect("non-empty");
    let (grid_index, t_min, v_min) = pts[k];
    if k == 0 || k == pts.len() - 1 {
        return Ok(Optimum {
            tau_opt: t_min,
            er_min: v_min,
            grid_index,
            at_boundary: true,
        });
    }
    let (_, t0, v0) = pts[k - 1];
    let (_, t2, v2) = pts[k + 1];
    let (t1, v1) = (t_min, v_min);
    let d0 = (t1 - t0) * (v1 - v2);
    let d2 = (t1 - t2) * (v1 - v0);
    let denom = d0 - d2;
    let (tau_opt, er_min) = if denom.abs() > 0.0 {
        let t = t1 - 0.5 * ((t1 - t0) * d0 - (t1 - t2) * d2) / denom;
        let t = t.clamp(t0, t2);
        // Lagrange interpolation at the vertex
        let l0 = (t - t1) * (t - t2) / ((t0 - t1) * (t0 - t2));
        let l1 = (t - t0) * (t - t2) / ((t1 - t0) * (t1 - t2));
        let l2 = (t - t0) * (t - t1) / ((t2 - t0) * (t2 - t1));
        (t, (v0 * l0 + v1 * l1 + v2 * l2).min(v1))
    } else {
        (t1, v1)
    };
    Ok(Optimum {
        tau_opt,
        er_min,
        grid_index,
        at_boundary: false,
    })
}

/// Energy resolution sampled on a τ grid with Monte Carlo errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityCurve {
    pub tau: Vec<f64>,
    pub er_over_hbar: Vec<f64>,
    pub stderr: Vec<f64>,
    pub optimum: Option<Optimum>,
    pub er_min_stderr: Option<f64>,
    pub tau_opt_stderr: Option<f64>,
}

impl SensitivityCurve {
    pub fn er_min(&self) -> Option<f64> {
        self.optimum.map(|o| o.er_min)
    }

    pub fn tau_opt(&self) -> Option<f64> {
        self.optimum.map(|o| o.tau_opt)
    }
}

/// Delete-one-group jackknife standard error from the leave-one-out
/// estimates.
pub fn jackknife_stderr(leave_one_out: &[f64]) -> f64 {
    let g = leave_one_out.len();
    if g < 2 {
        return f64::NAN;
    }
    let n = g as f64;
    let mean = leave_one_out.iter().sum::<f64>() / n;
    let ss: f64 = leave_one_out.iter().map(|x| (x - mean) * (x - mean)).sum();
    ((n - 1.0) / n * ss).sqrt()
}
