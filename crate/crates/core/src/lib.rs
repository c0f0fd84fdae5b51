//! Monte Carlo estimates of the energy resolution of magnetometers built
//! from dipolar-coupled spin ensembles.
//!
//! The ensemble is split into independent clusters of `M` nearest
//! neighbours drawn from a Poisson point process. Each cluster is evolved
//! exactly, and the collective-spin statistics feed a propagation-of-error
//! bound on the field variance, reported as `E_R/ħ`.

pub mod config;
pub mod dynamics;
pub mod ensemble;
pub mod estimation;
pub mod figures;
pub mod geometry;
pub mod hamiltonians;
pub mod kernel;
pub mod space;

pub use config::{ConfigError, ExperimentConfig};
pub use dynamics::{evolve_periodic, evolve_static, DynamicsError, Trajectory};
pub use ensemble::{
    run_experiment, sweep, EnsembleError, ExperimentResult, RunOptions, SweepAxis,
};
pub use estimation::{
    collective_moments, find_optimum, optimal_variance, CovarianceMode, MomentSample, Optimum, Readout,
    SensitivityCurve,
};
pub use geometry::{rescale_cluster, sample_cluster, ClusterGeometry, GeometryError};
pub use hamiltonians::{
    rf_drive, rotating_dd_hamiltonian, secular_dd_hamiltonian, HamiltonianError, Model, Protocol,
    ProtocolParams, UnitSystem,
};
pub use kernel::{
    coherent_product_state, embed_operator, hermitian_propagator, spin_operators, KernelError,
    OperatorMatrix, SpinSpecies, StateVector, C64,
};
pub use space::ClusterSpace;

pub use nalgebra;
