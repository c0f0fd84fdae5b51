//! Cluster geometries drawn from a unit-density Poisson point process.
//!
//! Lengths are measured in units of `ρ^{-1/3}`. Site 0 sits at the origin
//! and the remaining sites are its nearest neighbours in order of distance.

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Exp1, UnitSphere};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;
use thiserror::Error;

/// Attempts allowed when a minimum-distance floor forces resampling.
pub const MAX_FLOOR_ATTEMPTS: usize = 100_000;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("cluster must contain at least one site")]
    NoSites,
    #[error("site 0 must be at the origin")]
    NotAtOrigin,
    #[error("sites {0} and {1} coincide")]
    Coincident(usize, usize),
    #[error("sites are not ordered by distance from the origin")]
    Unsorted,
    #[error("scale factor must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("minimum distance must be non-negative and finite, got {0}")]
    InvalidFloor(f64),
    #[error("no cluster satisfied the minimum distance {floor} after {attempts} attempts")]
    FloorUnreachable { floor: f64, attempts: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterGeometry {
    positions: Vec<Vector3<f64>>,
}

impl ClusterGeometry {
    pub fn new(positions: Vec<Vector3<f64>>) -> Result<Self, GeometryError> {
        let first = positions.first().ok_or(GeometryError::NoSites)?;
        if first.norm() != 0.0 {
            return Err(GeometryError::NotAtOrigin);
        }
        for w in positions.windows(2).skip(1) {
            if w[1].norm() < w[0].norm() {
                return Err(GeometryError::Unsorted);
            }
        }
        for i in 0..positions.len() {
            for j in i + 1..positions.len() {
                if (positions[i] - positions[j]).norm() == 0.0 {
                    return Err(GeometryError::Coincident(i, j));
                }
            }
        }
        Ok(Self { positions })
    }

    pub fn sites(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }

    /// Vector from site `i` to site `j`.
    pub fn separation(&self, i: usize, j: usize) -> Vector3<f64> {
        self.positions[j] - self.positions[i]
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.separation(i, j).norm()
    }

    /// All pairwise distances `i < j`, in lexicographic pair order.
    pub fn pair_distances(&self) -> Vec<f64> {
        let m = self.sites();
        let mut out = Vec::with_capacity(m * (m - 1) / 2);
        for i in 0..m {
            for j in i + 1..m {
                out.push(self.distance(i, j));
            }
        }
        out
    }

    pub fn min_pair_distance(&self) -> f64 {
        self.pair_distances().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Rotates every position about `ẑ` by `angle`.
    pub fn rotated_about_z(&self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let positions = self
            .positions
            .iter()
            .map(|p| Vector3::new(c * p.x - s * p.y, s * p.x + c * p.y, p.z))
            .collect();
        Self { positions }
    }
}

/// Exact `M`-nearest-neighbour sample of a unit-intensity PPP around the origin.
pub fn sample_cluster<R: Rng + ?Sized>(sites: usize, rng: &mut R) -> ClusterGeometry {
    let sites = sites.max(1);
    let mut positions = Vec::with_capacity(sites);
    positions.push(Vector3::zeros());
    let mut volume = 0.0;
    for _ in 1..sites {
        let e: f64 = Exp1.sample(rng);
        volume += e;
        let r = (3.0 * volume / (4.0 * PI)).cbrt();
        let [x, y, z]: [f64; 3] = UnitSphere.sample(rng);
        positions.push(Vector3::new(x, y, z) * r);
    }
    ClusterGeometry { positions }
}

/// Like [`sample_cluster`] but redraws whole clusters until every pair is at
/// least `floor` apart. A floor of zero never rejects.
pub fn sample_cluster_with_floor<R: Rng + ?Sized>(
    sites: usize,
    floor: f64,
    rng: &mut R,
) -> Result<ClusterGeometry, GeometryError> {
    if !(floor >= 0.0 && floor.is_finite()) {
        return Err(GeometryError::InvalidFloor(floor));
    }
    for _ in 0..MAX_FLOOR_ATTEMPTS {
        let c = sample_cluster(sites, rng);
        if floor == 0.0 || c.sites() < 2 || c.min_pair_distance() >= floor {
            return Ok(c);
        }
    }
    Err(GeometryError::FloorUnreachable {
        floor,
        attempts: MAX_FLOOR_ATTEMPTS,
    })
}

/// Maps positions `x → λ^{-1/3} x`, i.e. a density change by `λ`.
pub fn rescale_cluster(c: &ClusterGeometry, lambda: f64) -> Result<ClusterGeometry, GeometryError> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(GeometryError::InvalidScale(lambda));
    }
    let f = lambda.cbrt().recip();
    Ok(ClusterGeometry {
        positions: c.positions.iter().map(|p| p * f).collect(),
    })
}

#[derive(Serialize)]
struct SiteRow {
    cluster_index: usize,
    site_index: usize,
    x: f64,
    y: f64,
    z: f64,
}

/// Writes clusters as CSV rows `cluster_index, site_index, x, y, z`.
pub fn write_clusters_csv<W: Write>(clusters: &[ClusterGeometry], writer: W) -> Result<(), GeometryError> {
    let mut w = csv::Writer::from_writer(writer);
    for (cluster_index, c) in clusters.iter().enumerate() {
        for (site_index, p) in c.positions.iter().enumerate() {
            w.serialize(SiteRow {
                cluster_index,
                site_index,
                x: p.x,
                y: p.y,
                z: p.z,
            })?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
