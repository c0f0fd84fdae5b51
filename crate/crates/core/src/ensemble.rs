//! Monte Carlo engine: per-cluster dynamics, mergeable accumulators and
//! the final sensitivity curve.
//!
//! Cluster `q` draws its geometry from a ChaCha8 stream keyed by the
//! master seed with stream id `q`, so the sampled ensemble does not depend
//! on scheduling. Clusters are processed in fixed chunks whose partial sums
//! are merged by a fixed balanced tree, which makes every result
//! bit-identical for any thread count.

use crate::config::{ConfigError, ExperimentConfig};
use crate::dynamics::{BlockSpectrum, DynamicsError, PeriodicPropagator};
use crate::estimation::{
    central_difference, dc_gradient, find_optimum, jackknife_stderr, optimal_readout, richardson_discrepancy,
    CovarianceMode, Optimum, SensitivityCurve,
};
use crate::geometry::{sample_cluster_with_floor, ClusterGeometry, GeometryError};
use crate::hamiltonians::{secular_sector_blocks, HamiltonianError, Model, Protocol, RotatingHamiltonian, UnitSystem};
use crate::kernel::{coherent_product_state, KernelError, SpinSpecies, C64};
use crate::space::ClusterSpace;
use nalgebra::{DVector, Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use std::time::Instant;
use thiserror::Error;

/// Clusters per work unit.
pub const CHUNK: usize = 16;
/// Jackknife groups (fewer when there are fewer chunks).
pub const JACKKNIFE_GROUPS: usize = 20;
/// Bytes of working memory allowed across all threads.
pub const MEMORY_LIMIT: usize = 4 << 30;
/// Step-halving discrepancy above which an RF derivative is reported.
pub const RICHARDSON_LIMIT: f64 = 0.05;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Hamiltonian(#[from] HamiltonianError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("estimated memory {needed} bytes exceeds the limit of {limit} bytes")]
    ResourceLimit { needed: usize, limit: usize },
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error("output: {0}")]
    Output(String),
}

impl From<std::io::Error> for EnsembleError {
    fn from(e: std::io::Error) -> Self {
        EnsembleError::Output(e.to_string())
    }
}

impl From<csv::Error> for EnsembleError {
    fn from(e: csv::Error) -> Self {
        EnsembleError::Output(e.to_string())
    }
}

impl From<serde_json::Error> for EnsembleError {
    fn from(e: serde_json::Error) -> Self {
        EnsembleError::Output(e.to_string())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
    /// Process clusters on the calling thread and omit wall time from the
    /// provenance so that output files are byte-identical across runs.
    pub serial: bool,
}

impl RunOptions {
    pub fn serial() -> Self {
        Self {
            threads: None,
            serial: true,
        }
    }

    pub fn threads(n: usize) -> Self {
        Self {
            threads: Some(n),
            serial: false,
        }
    }
}

/// The stream used for cluster `index`.
pub fn cluster_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

pub fn cluster_geometry(config: &ExperimentConfig, index: usize) -> Result<ClusterGeometry, GeometryError> {
    sample_cluster_with_floor(config.cluster_size, config.min_distance, &mut cluster_rng(config.seed, index))
}

/// Per-τ sums over clusters.
#[derive(Clone, Debug, PartialEq)]
struct TauSums {
    mean: Vector3<f64>,
    second: Matrix3<f64>,
    outer: Matrix3<f64>,
    shifted: [Vector3<f64>; 4],
}

impl TauSums {
    fn zero() -> Self {
        Self {
            mean: Vector3::zeros(),
            second: Matrix3::zeros(),
            outer: Matrix3::zeros(),
            shifted: [Vector3::zeros(); 4],
        }
    }

    fn add(&mut self, o: &Self) {
        self.mean += o.mean;
        self.second += o.second;
        self.outer += o.outer;
        for k in 0..4 {
            self.shifted[k] += o.shifted[k];
        }
    }

    fn sub(&mut self, o: &Self) {
        self.mean -= o.mean;
        self.second -= o.second;
        self.outer -= o.outer;
        for k in 0..4 {
            self.shifted[k] -= o.shifted[k];
        }
    }
}

/// Mergeable sums of per-cluster moments on a τ grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Accumulator {
    count: usize,
    sums: Vec<TauSums>,
}

impl Accumulator {
    pub fn new(points: usize) -> Self {
        Self {
            count: 0,
            sums: vec![TauSums::zero(); points],
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Ensemble mean of `⟨S̃⟩` at grid point `i`.
    pub fn mean(&self, i: usize) -> Vector3<f64> {
        self.sums[i].mean / self.count as f64
    }

    pub fn merge(&mut self, other: &Self) {
        self.count += other.count;
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            a.add(b);
        }
    }

    fn without(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.count -= other.count;
        for (a, b) in out.sums.iter_mut().zip(&other.sums) {
            a.sub(b);
        }
        out
    }

    fn push(&mut self, cluster: &ClusterMoments) {
        self.count += 1;
        for (s, p) in self.sums.iter_mut().zip(&cluster.points) {
            s.mean += p.mean;
            s.second += p.second;
            s.outer += p.mean * p.mean.transpose();
            for k in 0..4 {
                s.shifted[k] += p.shifted[k];
            }
        }
    }
}

#[derive(Clone, Debug)]
struct PointMoments {
    mean: Vector3<f64>,
    second: Matrix3<f64>,
    shifted: [Vector3<f64>; 4],
}

#[derive(Clone, Debug)]
struct ClusterMoments {
    points: Vec<PointMoments>,
}

/// Work shared by all clusters of one run.
struct Engine {
    config: ExperimentConfig,
    tau: Vec<f64>,
    space: ClusterSpace,
    psi0: DVector<C64>,
}

impl Engine {
    fn new(config: &ExperimentConfig, tau: Vec<f64>) -> Result<Self, EnsembleError> {
        let space = ClusterSpace::new(config.species, config.cluster_size)?;
        let axis = match config.protocol {
            Protocol::Dc => Vector3::x(),
            Protocol::Rf => Vector3::z(),
        };
        let psi0 = coherent_product_state(&axis, config.species, config.cluster_size)?
            .amplitudes()
            .clone();
        Ok(Self {
            config: config.clone(),
            tau,
            space,
            psi0,
        })
    }

    fn omega_step(&self) -> f64 {
        self.config.omega_fd_rel_step * self.config.omega_ratio
    }

    fn cluster(&self, index: usize) -> Result<ClusterMoments, EnsembleError> {
        let geometry = cluster_geometry(&self.config, index)?;
        match (self.config.protocol, self.config.model) {
            (Protocol::Dc, Model::Secular) => self.dc_secular(&geometry),
            (Protocol::Dc, Model::Full) => self.dc_full(&geometry),
            (Protocol::Rf, _) => self.rf(&geometry),
        }
    }

    fn dc_secular(&self, geometry: &ClusterGeometry) -> Result<ClusterMoments, EnsembleError> {
        let blocks = BlockSpectrum::from_sectors(&self.space, secular_sector_blocks(&self.space, geometry)?);
        let coeffs = blocks.prepare(self.psi0.as_slice());
        let mut psi = vec![C64::new(0.0, 0.0); self.space.dim()];
        let points = self
            .tau
            .iter()
            .map(|&t| {
                blocks.evolve_into(&coeffs, t, &mut psi);
                let m = self.space.moments(&psi);
                PointMoments {
                    mean: m.mean,
                    second: m.second,
                    shifted: [Vector3::zeros(); 4],
                }
            })
            .collect();
        Ok(ClusterMoments { points })
    }

    fn dc_full(&self, geometry: &ClusterGeometry) -> Result<ClusterMoments, EnsembleError> {
        let h = RotatingHamiltonian::new(geometry, self.config.species)?;
        let r = self.config.omega_ratio;
        let dr = self.omega_step();
        let k = self.config.steps_per_period;
        let run = |ratio: f64| -> Result<Vec<DVector<C64>>, EnsembleError> {
            let p = PeriodicPropagator::new(h.clone(), ratio, k)?;
            Ok(p.evolve_grid(&self.psi0, &self.tau))
        };
        let center = run(r)?;
        let plus = run(r + dr)?;
        let minus = run(r - dr)?;
        let points = (0..self.tau.len())
            .map(|i| {
                let m = self.space.moments(center[i].as_slice());
                PointMoments {
                    mean: m.mean,
                    second: m.second,
                    shifted: [
                        self.space.moments(plus[i].as_slice()).mean,
                        self.space.moments(minus[i].as_slice()).mean,
                        Vector3::zeros(),
                        Vector3::zeros(),
                    ],
                }
            })
            .collect();
        Ok(ClusterMoments { points })
    }

    fn rf(&self, geometry: &ClusterGeometry) -> Result<ClusterMoments, EnsembleError> {
        let secular = self
            .space
            .assemble_blocks(&secular_sector_blocks(&self.space, geometry)?);
        let sx = self.space.total_sx_real();
        let b0 = self.config.b_rf;
        let h = self.config.rf_fd_step;
        let fields = [b0, b0 + h, b0 - h, b0 + h / 2.0, b0 - h / 2.0];
        let mut means = vec![vec![Vector3::zeros(); self.tau.len()]; fields.len()];
        let mut center = Vec::with_capacity(self.tau.len());
        let mut psi = vec![C64::new(0.0, 0.0); self.space.dim()];
        for (f, &b) in fields.iter().enumerate() {
            let spectrum = BlockSpectrum::dense(&secular - &sx * b);
            let coeffs = spectrum.prepare(self.psi0.as_slice());
            for (i, &t) in self.tau.iter().enumerate() {
                spectrum.evolve_into(&coeffs, t, &mut psi);
                let m = self.space.moments(&psi);
                means[f][i] = m.mean;
                if f == 0 {
                    center.push(m.second);
                }
            }
        }
        let points = (0..self.tau.len())
            .map(|i| PointMoments {
                mean: means[0][i],
                second: center[i],
                shifted: [means[1][i], means[2][i], means[3][i], means[4][i]],
            })
            .collect();
        Ok(ClusterMoments { points })
    }

    fn chunk(&self, chunk: usize) -> Result<Accumulator, EnsembleError> {
        let start = chunk * CHUNK;
        let end = (start + CHUNK).min(self.config.clusters);
        let mut acc = Accumulator::new(self.tau.len());
        for q in start..end {
            acc.push(&self.cluster(q)?);
        }
        Ok(acc)
    }
}

/// Estimated peak working memory of a run.
pub fn memory_estimate(config: &ExperimentConfig, threads: usize) -> usize {
    let dim = config.species.dim().saturating_pow(config.cluster_size as u32);
    // a handful of dense dim×dim matrices per worker
    threads.saturating_mul(dim.saturating_mul(dim)).saturating_mul(16 * 6)
}

fn with_pool<T: Send>(options: RunOptions, f: impl FnOnce() -> T + Send) -> Result<T, EnsembleError> {
    match options.threads {
        Some(n) if !options.serial => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| EnsembleError::ThreadPool(e.to_string()))
            .map(|pool| pool.install(f)),
        _ => Ok(f()),
    }
}

/// Per-chunk accumulators for clusters `0..config.clusters`, in chunk order.
fn accumulate_chunks(
    config: &ExperimentConfig,
    tau: &[f64],
    options: RunOptions,
) -> Result<Vec<Accumulator>, EnsembleError> {
    config.validate()?;
    let threads = if options.serial {
        1
    } else {
        options.threads.unwrap_or_else(rayon::current_num_threads)
    };
    let needed = memory_estimate(config, threads);
    if needed > MEMORY_LIMIT {
        return Err(EnsembleError::ResourceLimit {
            needed,
            limit: MEMORY_LIMIT,
        });
    }
    let engine = Engine::new(config, tau.to_vec())?;
    let chunks = config.clusters.div_ceil(CHUNK);
    if options.serial {
        (0..chunks).map(|c| engine.chunk(c)).collect()
    } else {
        with_pool(options, || (0..chunks).into_par_iter().map(|c| engine.chunk(c)).collect())?
    }
}

/// Balanced pairwise merge, splitting at `len / 2`. Any contiguous split at
/// the top level therefore reproduces the full sum bit for bit.
pub fn tree_merge(parts: &[Accumulator], points: usize) -> Accumulator {
    match parts.len() {
        0 => Accumulator::new(points),
        1 => parts[0].clone(),
        n => {
            let mut left = tree_merge(&parts[..n / 2], points);
            left.merge(&tree_merge(&parts[n / 2..], points));
            left
        }
    }
}

/// Accumulated moments of the clusters `0..config.clusters`.
pub fn accumulate(config: &ExperimentConfig, tau: &[f64], options: RunOptions) -> Result<Accumulator, EnsembleError> {
    let chunks = accumulate_chunks(config, tau, options)?;
    Ok(tree_merge(&chunks, tau.len()))
}

/// Statistics derived from an accumulator at one τ.
#[derive(Clone, Debug, PartialEq)]
pub struct PointEstimate {
    pub tau: f64,
    pub mean: Vector3<f64>,
    pub gamma: Matrix3<f64>,
    pub gradient: Vector3<f64>,
    pub variance: f64,
    pub rank: usize,
    pub er_over_hbar: f64,
    pub fd_discrepancy: Option<f64>,
}

/// Field gradient of the per-cluster mean from accumulated sums.
fn gradient(config: &ExperimentConfig, tau: f64, mean: &Vector3<f64>, shifted: &[Vector3<f64>; 4]) -> (Vector3<f64>, Option<f64>) {
    match (config.protocol, config.model) {
        (Protocol::Dc, Model::Secular) => (dc_gradient(mean, tau), None),
        (Protocol::Dc, Model::Full) => {
            let h = config.omega_fd_rel_step * config.omega_ratio;
            // lab-frame mean is R_z(−ωτ)⟨S̃⟩(ω); the overall sign is irrelevant
            let dynamic = central_difference(&shifted[0], &shifted[1], h);
            (dc_gradient(mean, tau) - dynamic, None)
        }
        (Protocol::Rf, _) => {
            let h = config.rf_fd_step;
            let coarse = central_difference(&shifted[0], &shifted[1], h);
            let fine = central_difference(&shifted[2], &shifted[3], h / 2.0);
            (coarse, Some(richardson_discrepancy(&coarse, &fine)))
        }
    }
}

fn estimate(config: &ExperimentConfig, units: &UnitSystem, tau: &[f64], acc: &Accumulator) -> Vec<PointEstimate> {
    let n = acc.count as f64;
    tau.iter()
        .zip(&acc.sums)
        .map(|(&t, s)| {
            let mean = s.mean / n;
            let second = s.second / n;
            let gamma = match config.covariance {
                CovarianceMode::Joint => second - mean * mean.transpose(),
                CovarianceMode::Averaged => second - s.outer / n,
            };
            let shifted = s.shifted.map(|v| v / n);
            let (g, fd_discrepancy) = gradient(config, t, &mean, &shifted);
            let r = optimal_readout(&gamma, &g, config.readout);
            // totals over n clusters: Γ = nΓ₁, g = n g₁
            let var_total = r.variance / n;
            let spins = n * config.cluster_size as f64;
            PointEstimate {
                tau: t,
                mean,
                gamma,
                gradient: g,
                variance: r.variance,
                rank: r.rank,
                er_over_hbar: units.energy_resolution_over_hbar(var_total, spins, t),
                fd_discrepancy,
            }
        })
        .collect()
}

/// Per-τ diagnostics aligned with the curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `E[⟨S⟩]/M` per cluster.
    pub mean_per_spin: Vec<[f64; 3]>,
    /// Diagonal of the per-cluster covariance `Γ₁`, divided by `M`.
    pub var_per_spin: Vec<[f64; 3]>,
    /// Per-cluster field gradient `g₁`.
    pub gradient: Vec<[f64; 3]>,
    pub readout_rank: Vec<usize>,
    /// Step-halving discrepancy of the RF derivative.
    pub fd_discrepancy: Option<Vec<f64>>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub seed: u64,
    pub clusters: usize,
    pub threads: usize,
    pub serial: bool,
    pub wall_time_s: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub curve: SensitivityCurve,
    pub diagnostics: Diagnostics,
    pub provenance: Provenance,
}

fn curve_values(points: &[PointEstimate]) -> Vec<f64> {
    points.iter().map(|p| p.er_over_hbar).collect()
}

/// Runs the full Monte Carlo experiment described by `config`.
pub fn run_experiment(config: &ExperimentConfig, options: RunOptions) -> Result<ExperimentResult, EnsembleError> {
    let started = Instant::now();
    config.validate()?;
    let units = UnitSystem::new(config.species, config.rho)?;
    let tau = config.tau_grid();
    let chunks = accumulate_chunks(config, &tau, options)?;

    let groups = JACKKNIFE_GROUPS.min(chunks.len());
    let group_acc: Vec<Accumulator> = (0..groups)
        .map(|g| {
            let lo = g * chunks.len() / groups;
            let hi = (g + 1) * chunks.len() / groups;
            tree_merge(&chunks[lo..hi], tau.len())
        })
        .collect();
    let total = tree_merge(&chunks, tau.len());

    let points = estimate(config, &units, &tau, &total);
    let values = curve_values(&points);
    let leave_out: Vec<Vec<f64>> = group_acc
        .iter()
        .map(|g| curve_values(&estimate(config, &units, &tau, &total.without(g))))
        .collect();
    let stderr: Vec<f64> = (0..tau.len())
        .map(|i| jackknife_stderr(&leave_out.iter().map(|v| v[i]).collect::<Vec<_>>()))
        .collect();

    let mut warnings = Vec::new();
    let optimum = match find_optimum(&tau, &values) {
        Ok(o) => {
            if o.at_boundary {
                warnings.push(format!("minimum lies on the grid boundary at tau = {}", o.tau_opt));
            }
            Some(o)
        }
        Err(e) => {
            warnings.push(format!("no optimum: {e}"));
            None
        }
    };
    let (er_min_stderr, tau_opt_stderr) = match optimum {
        Some(_) => {
            let opts: Vec<Optimum> = leave_out.iter().filter_map(|v| find_optimum(&tau, v).ok()).collect();
            if opts.len() == leave_out.len() {
                let er: Vec<f64> = opts.iter().map(|o| o.er_min).collect();
                let t: Vec<f64> = opts.iter().map(|o| o.tau_opt).collect();
                (Some(jackknife_stderr(&er)), Some(jackknife_stderr(&t)))
            } else {
                (None, None)
            }
        }
        None => (None, None),
    };

    let fd_discrepancy: Option<Vec<f64>> = points.iter().map(|p| p.fd_discrepancy).collect();
    if let Some(d) = &fd_discrepancy {
        for (p, &x) in points.iter().zip(d) {
            if x > RICHARDSON_LIMIT {
                warnings.push(format!(
                    "rf derivative not converged at tau = {:.4}: step halving changes it by {:.1}%",
                    p.tau,
                    100.0 * x
                ));
            }
        }
    }
    let m = config.cluster_size as f64;
    let diagnostics = Diagnostics {
        mean_per_spin: points.iter().map(|p| (p.mean / m).into()).collect(),
        var_per_spin: points
            .iter()
            .map(|p| [p.gamma[(0, 0)] / m, p.gamma[(1, 1)] / m, p.gamma[(2, 2)] / m])
            .collect(),
        gradient: points.iter().map(|p| p.gradient.into()).collect(),
        readout_rank: points.iter().map(|p| p.rank).collect(),
        fd_discrepancy,
        warnings,
    };
    let provenance = Provenance {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        clusters: config.clusters,
        threads: if options.serial {
            1
        } else {
            options.threads.unwrap_or_else(rayon::current_num_threads)
        },
        serial: options.serial,
        wall_time_s: (!options.serial).then(|| started.elapsed().as_secs_f64()),
    };
    Ok(ExperimentResult {
        config: config.clone(),
        curve: SensitivityCurve {
            tau,
            er_over_hbar: values,
            stderr,
            optimum,
            er_min_stderr,
            tau_opt_stderr,
        },
        diagnostics,
        provenance,
    })
}

/// Field derivative of the ensemble-mean spin for the RF protocol at one
/// time, with its step-halving check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RfGradient {
    /// Central difference with step `h`.
    pub coarse: Vector3<f64>,
    /// Central difference with step `h/2`.
    pub fine: Vector3<f64>,
    pub discrepancy: f64,
}

impl RfGradient {
    pub fn converged(&self) -> bool {
        self.discrepancy <= RICHARDSON_LIMIT
    }
}

pub fn rf_gradient(config: &ExperimentConfig, tau: f64, options: RunOptions) -> Result<RfGradient, EnsembleError> {
    if config.protocol != Protocol::Rf {
        return Err(ConfigError::Invalid {
            key: "protocol".into(),
            reason: "rf_gradient needs the rf protocol".into(),
        }
        .into());
    }
    let acc = accumulate(config, &[tau], options)?;
    let n = acc.count as f64;
    let s = acc.sums[0].shifted.map(|v| v / n);
    let h = config.rf_fd_step;
    let coarse = central_difference(&s[0], &s[1], h);
    let fine = central_difference(&s[2], &s[3], h / 2.0);
    Ok(RfGradient {
        coarse,
        fine,
        discrepancy: richardson_discrepancy(&coarse, &fine),
    })
}

/// The two contributions to the DC full-model gradient at one time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DcGradients {
    /// Frame-rotation term `τ ẑ × ⟨S̃⟩`.
    pub generator: Vector3<f64>,
    /// Central difference of `⟨S̃⟩` over `ω_L/ω_dd`.
    pub dynamical: Vector3<f64>,
}

impl DcGradients {
    /// Derivative of the lab-frame mean, up to a common sign.
    pub fn total(&self) -> Vector3<f64> {
        self.generator - self.dynamical
    }
}

pub fn dc_full_gradients(config: &ExperimentConfig, tau: f64, options: RunOptions) -> Result<DcGradients, EnsembleError> {
    if config.protocol != Protocol::Dc || config.model != Model::Full {
        return Err(ConfigError::Invalid {
            key: "model".into(),
            reason: "dc_full_gradients needs the dc protocol with the full model".into(),
        }
        .into());
    }
    let acc = accumulate(config, &[tau], options)?;
    let n = acc.count as f64;
    let s = &acc.sums[0];
    let mean = s.mean / n;
    let h = config.omega_fd_rel_step * config.omega_ratio;
    Ok(DcGradients {
        generator: dc_gradient(&mean, tau),
        dynamical: central_difference(&(s.shifted[0] / n), &(s.shifted[1] / n), h),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    ClusterSize,
    Spin,
    OmegaRatio,
}

impl std::str::FromStr for SweepAxis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "m" | "M" | "cluster_size" => Ok(SweepAxis::ClusterSize),
            "s" | "spin" => Ok(SweepAxis::Spin),
            "omega_ratio" => Ok(SweepAxis::OmegaRatio),
            other => Err(format!("unknown sweep axis '{other}' (expected cluster_size, spin or omega_ratio)")),
        }
    }
}

impl SweepAxis {
    pub fn key(&self) -> &'static str {
        match self {
            SweepAxis::ClusterSize => "cluster_size",
            SweepAxis::Spin => "spin",
            SweepAxis::OmegaRatio => "omega_ratio",
        }
    }
}

/// Config for sweep point `index`: the axis value applied and the seed
/// offset by `index`.
pub fn sweep_config(template: &ExperimentConfig, axis: SweepAxis, value: f64, index: usize) -> Result<ExperimentConfig, ConfigError> {
    let mut c = template.clone();
    match axis {
        SweepAxis::ClusterSize => {
            if !(value >= 1.0 && value.fract() == 0.0) {
                return Err(ConfigError::Invalid {
                    key: "cluster_size".into(),
                    reason: format!("sweep value {value} is not a positive integer"),
                });
            }
            c.cluster_size = value as usize;
        }
        SweepAxis::Spin => {
            c.species = SpinSpecies::new(value, c.species.gamma()).map_err(|e| ConfigError::Invalid {
                key: "spin".into(),
                reason: e.to_string(),
            })?
        }
        SweepAxis::OmegaRatio => c.omega_ratio = value,
    }
    c.seed = template.seed.wrapping_add(index as u64);
    c.validate()?;
    Ok(c)
}

/// Independent experiments along one axis, in input order. A failing point
/// does not stop the sweep.
pub fn sweep(
    template: &ExperimentConfig,
    axis: SweepAxis,
    values: &[f64],
    options: RunOptions,
) -> Vec<Result<ExperimentResult, EnsembleError>> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let c = sweep_config(template, axis, v, i)?;
            run_experiment(&c, options)
        })
        .collect()
}

/// Column names of the result CSV.
pub const CSV_COLUMNS: [&str; 9] = [
    "tau",
    "er_over_hbar",
    "stderr",
    "mean_sx_per_spin",
    "mean_sy_per_spin",
    "mean_sz_per_spin",
    "var_sx",
    "var_sy",
    "var_sz",
];

impl ExperimentResult {
    pub fn to_json(&self) -> Result<String, EnsembleError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// CSV with the configuration echoed as `# key = value` header lines.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), EnsembleError> {
        for line in self.config.to_text().lines() {
            writeln!(out, "# {line}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_COLUMNS)?;
        for i in 0..self.curve.tau.len() {
            let m = self.diagnostics.mean_per_spin[i];
            let v = self.diagnostics.var_per_spin[i];
            let row = [
                self.curve.tau[i],
                self.curve.er_over_hbar[i],
                self.curve.stderr[i],
                m[0],
                m[1],
                m[2],
                v[0],
                v[1],
                v[2],
            ];
            w.write_record(row.iter().map(|x| x.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `<stem>.json` and `<stem>.csv` into `dir`.
    pub fn write_files(&self, dir: &Path, stem: &str) -> Result<(), EnsembleError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{stem}.json")), self.to_json()?)?;
        let f = std::fs::File::create(dir.join(format!("{stem}.csv")))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}
