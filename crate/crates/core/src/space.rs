//! Product basis of an `M`-spin cluster with the bookkeeping needed for
//! sparse operator application: total magnetization per basis state,
//! collective raising transitions, and the grouping of basis states into
//! fixed-`Sz` sectors.

use crate::estimation::MomentSample;
use crate::kernel::{raising_coefficient, spin_operators, KernelError, OperatorMatrix, SpinSpecies, C64};
use nalgebra::{DMatrix, Matrix3, Vector3};

#[derive(Clone, Copy, Debug)]
struct Raise {
    from: usize,
    to: usize,
    coeff: f64,
}

/// Basis bookkeeping for `sites` spins of one species.
#[derive(Clone, Debug)]
pub struct ClusterSpace {
    species: SpinSpecies,
    sites: usize,
    dim: usize,
    strides: Vec<usize>,
    local_m: Vec<f64>,
    total_m: Vec<f64>,
    raising: Vec<Raise>,
    sectors: Vec<Vec<usize>>,
    location: Vec<(usize, usize)>,
}

impl ClusterSpace {
    pub fn new(species: SpinSpecies, sites: usize) -> Result<Self, KernelError> {
        let dim = species.cluster_dim(sites)?;
        let d = species.dim();
        let s = species.spin();
        let strides: Vec<usize> = (0..sites).map(|i| d.pow((sites - 1 - i) as u32)).collect();
        let local_m = species.m_values();

        let mut total_m = Vec::with_capacity(dim);
        let mut sectors = vec![Vec::new(); sites * (d - 1) + 1];
        let mut location = Vec::with_capacity(dim);
        let mut raising = Vec::new();
        for k in 0..dim {
            let mut lowered = 0;
            let mut m_sum = 0.0;
            for (site, &stride) in strides.iter().enumerate() {
                let p = (k / stride) % d;
                lowered += p;
                m_sum += local_m[p];
                if p > 0 {
                    raising.push(Raise {
                        from: k,
                        to: k - stride,
                        coeff: raising_coefficient(s, local_m[p]),
                    });
                }
                let _ = site;
            }
            total_m.push(m_sum);
            location.push((lowered, sectors[lowered].len()));
            sectors[lowered].push(k);
        }

        Ok(Self {
            species,
            sites,
            dim,
            strides,
            local_m,
            total_m,
            raising,
            sectors,
            location,
        })
    }

    pub fn species(&self) -> SpinSpecies {
        self.species
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn local_dim(&self) -> usize {
        self.species.dim()
    }

    /// Local basis index of `site` in basis state `k` (0 ↔ m = s).
    pub fn digit(&self, k: usize, site: usize) -> usize {
        (k / self.strides[site]) % self.local_dim()
    }

    pub fn local_m(&self, index: usize) -> f64 {
        self.local_m[index]
    }

    pub fn total_m(&self) -> &[f64] {
        &self.total_m
    }

    /// Basis indices grouped by total magnetization, highest first.
    pub fn sectors(&self) -> &[Vec<usize>] {
        &self.sectors
    }

    /// `(sector, position within sector)` of basis state `k`.
    pub fn location(&self, k: usize) -> (usize, usize) {
        self.location[k]
    }

    /// Applies the collective raising operator `S+ = Σᵢ s+ᵢ`.
    pub fn apply_raising(&self, psi: &[C64], out: &mut [C64]) {
        out.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        for r in &self.raising {
            out[r.to] += psi[r.from] * r.coeff;
        }
    }

    /// Collective `S_x` as a real matrix in this basis.
    pub fn total_sx_real(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for r in &self.raising {
            m[(r.to, r.from)] += 0.5 * r.coeff;
            m[(r.from, r.to)] += 0.5 * r.coeff;
        }
        m
    }

    /// Exact mean and symmetrized second moments of the collective spin,
    /// using only sparse ladder-operator products.
    pub fn moments(&self, psi: &[C64]) -> MomentSample {
        let mut raised = vec![C64::new(0.0, 0.0); self.dim];
        let mut twice = vec![C64::new(0.0, 0.0); self.dim];
        self.apply_raising(psi, &mut raised);
        self.apply_raising(&raised, &mut twice);

        let mut sp = C64::new(0.0, 0.0);
        let mut spsp = C64::new(0.0, 0.0);
        let mut sz_sp = C64::new(0.0, 0.0);
        let mut sz = 0.0;
        let mut sz2 = 0.0;
        let mut raised_norm = 0.0;
        for k in 0..self.dim {
            let c = psi[k].conj();
            let m = self.total_m[k];
            let p = psi[k].norm_sqr();
            sz += m * p;
            sz2 += m * m * p;
            sp += c * raised[k];
            spsp += c * twice[k];
            sz_sp += c * raised[k] * m;
            raised_norm += raised[k].norm_sqr();
        }
        // ⟨S−S+⟩ = ‖S+ψ‖², ⟨S+S−⟩ = ⟨S−S+⟩ + 2⟨Sz⟩
        let minus_plus = raised_norm;
        let plus_minus = raised_norm + 2.0 * sz;
        let xx = (2.0 * spsp.re + plus_minus + minus_plus) / 4.0;
        let yy = (-2.0 * spsp.re + plus_minus + minus_plus) / 4.0;
        let xy = spsp.im / 2.0;
        // ⟨{S+, Sz}⟩ = 2⟨Sz S+⟩ − ⟨S+⟩
        let anti = sz_sp * 2.0 - sp;
        let xz = anti.re / 2.0;
        let yz = anti.im / 2.0;
        MomentSample {
            mean: Vector3::new(sp.re, sp.im, sz),
            second: Matrix3::new(xx, xy, xz, xy, yy, yz, xz, yz, sz2),
            grad_mean: None,
        }
    }

    /// The nine local products `kron(S_a, S_b)` on a pair of sites.
    pub fn pair_products(&self) -> [[OperatorMatrix; 3]; 3] {
        let ops = spin_operators(self.species);
        let c = ops.components();
        std::array::from_fn(|a| std::array::from_fn(|b| c[a].kron(c[b])))
    }

    /// Adds `scale · op` acting on sites `(i, j)` to a full-space matrix,
    /// where `op` is a `d²×d²` operator with site `i` as the first factor.
    pub fn add_pair_operator(
        &self,
        target: &mut DMatrix<C64>,
        i: usize,
        j: usize,
        op: &DMatrix<C64>,
        scale: f64,
    ) {
        let d = self.local_dim();
        let (si, sj) = (self.strides[i] as isize, self.strides[j] as isize);
        for k in 0..self.dim {
            let p = self.digit(k, i);
            let q = self.digit(k, j);
            let col = p * d + q;
            for row in 0..d * d {
                let v = op[(row, col)];
                if v.re == 0.0 && v.im == 0.0 {
                    continue;
                }
                let (p2, q2) = (row / d, row % d);
                let k2 = k as isize + (p2 as isize - p as isize) * si + (q2 as isize - q as isize) * sj;
                target[(k2 as usize, k)] += v * scale;
            }
        }
    }

    /// Blocks of `Σ K_ij (3 s_iz s_jz − s_i·s_j)` restricted to each
    /// fixed-`Sz` sector. The operator is real in this basis.
    pub fn zz_exchange_blocks(&self, couplings: &[(usize, usize, f64)]) -> Vec<DMatrix<f64>> {
        let s = self.species.spin();
        let d = self.local_dim();
        let mut blocks: Vec<DMatrix<f64>> = self
            .sectors
            .iter()
            .map(|sec| DMatrix::zeros(sec.len(), sec.len()))
            .collect();
        for (sector, indices) in self.sectors.iter().enumerate() {
            let block = &mut blocks[sector];
            for (col, &k) in indices.iter().enumerate() {
                for &(i, j, kij) in couplings {
                    let p = self.digit(k, i);
                    let q = self.digit(k, j);
                    let (mi, mj) = (self.local_m[p], self.local_m[q]);
                    // 3 sz sz − s·s = 2 sz sz − (s+ s− + s− s+)/2
                    block[(col, col)] += kij * 2.0 * mi * mj;
                    // s_i+ s_j−
                    if p > 0 && q + 1 < d {
                        let amp = raising_coefficient(s, mi) * raising_coefficient(s, mj - 1.0);
                        let k2 = k - self.strides[i] + self.strides[j];
                        block[(self.location[k2].1, col)] -= 0.5 * kij * amp;
                    }
                    // s_i− s_j+
                    if q > 0 && p + 1 < d {
                        let amp = raising_coefficient(s, mj) * raising_coefficient(s, mi - 1.0);
                        let k2 = k + self.strides[i] - self.strides[j];
                        block[(self.location[k2].1, col)] -= 0.5 * kij * amp;
                    }
                }
            }
        }
        blocks
    }

    /// Scatters sector blocks into one full-space real matrix.
    pub fn assemble_blocks(&self, blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
        let mut full = DMatrix::zeros(self.dim, self.dim);
        for (indices, block) in self.sectors.iter().zip(blocks) {
            for (c, &kc) in indices.iter().enumerate() {
                for (r, &kr) in indices.iter().enumerate() {
                    full[(kr, kc)] = block[(r, c)];
                }
            }
        }
        full
    }
}
