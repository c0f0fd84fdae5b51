//! Fixtures shared by the benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spinlimit_core::geometry::sample_cluster;
use spinlimit_core::nalgebra::Vector3;
use spinlimit_core::{coherent_product_state, ClusterGeometry, ClusterSpace, SpinSpecies, C64};

pub const SEED: u64 = 7;

/// A fixed cluster of `sites` spins.
pub fn cluster(sites: usize) -> ClusterGeometry {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    sample_cluster(sites, &mut rng)
}

/// Space and `|+x⟩^M` initial state for spin `twice_spin/2`.
pub fn space_and_state(twice_spin: u32, sites: usize) -> (ClusterSpace, Vec<C64>) {
    let species = SpinSpecies::from_twice_spin(twice_spin, spinlimit_core::kernel::ELECTRON_GAMMA).expect("valid spin");
    let space = ClusterSpace::new(species, sites).expect("dimension within limit");
    let psi = coherent_product_state(&Vector3::x(), species, sites)
        .expect("valid state")
        .amplitudes()
        .iter()
        .copied()
        .collect();
    (space, psi)
}
