//! Per-slice confinement problem: P1 finite elements on the `z` grid with
//! homogeneous Dirichlet ends, solved as a generalized symmetric eigenproblem
//! `K chi = E M chi` by Cholesky reduction.
//!
//! The mass matrix is the average of the consistent and the row-lumped P1
//! mass matrices. On uniform grids this cancels the leading `O(h^2)`
//! eigenvalue error of either choice alone; the trial space is unchanged.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::config::{DeviceSpec, NM};
use crate::error::{Error, Result};
use crate::mesh::{Material, Mesh2D};

/// Symmetric tridiagonal matrix on the interior nodes `1..nz`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl Tridiagonal {
    fn zeros(n: usize) -> Self {
        Tridiagonal {
            diag: vec![0.0; n],
            off: vec![0.0; n.saturating_sub(1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |r, c| {
            if r == c {
                self.diag[r]
            } else if r + 1 == c {
                self.off[r]
            } else if c + 1 == r {
                self.off[c]
            } else {
                0.0
            }
        })
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|r| {
                let mut y = self.diag[r] * x[r];
                if r > 0 {
                    y += self.off[r - 1] * x[r - 1];
                }
                if r + 1 < n {
                    y += self.off[r] * x[r + 1];
                }
                y
            })
            .collect()
    }

    /// Adds a 2x2 element matrix acting on full-grid nodes `(j, j+1)`;
    /// rows/columns of the Dirichlet end nodes are dropped.
    fn add_element(&mut self, j: usize, nz: usize, m: [[f64; 2]; 2]) {
        let idx = |node: usize| -> Option<usize> {
            if node == 0 || node == nz {
                None
            } else {
                Some(node - 1)
            }
        };
        let (a, b) = (idx(j), idx(j + 1));
        if let Some(a) = a {
            self.diag[a] += m[0][0];
        }
        if let Some(b) = b {
            self.diag[b] += m[1][1];
        }
        if let (Some(a), Some(_)) = (a, b) {
            self.off[a] += m[0][1];
        }
    }
}

/// Material data of one vertical slice in internal units (nm, eV).
#[derive(Debug, Clone, PartialEq)]
pub struct SliceModel {
    /// Node positions (nm), `nz + 1` entries.
    pub z: Vec<f64>,
    /// `hbar^2 / (2 m*)` per element (eV nm^2).
    pub kinetic: Vec<f64>,
    /// Band offset per element (eV): the barrier in oxide, zero in silicon.
    pub offset: Vec<f64>,
}

impl SliceModel {
    pub fn from_mesh(spec: &DeviceSpec, mesh: &Mesh2D) -> Self {
        let scales = spec.scales();
        let z: Vec<f64> = mesh.z.nodes.iter().map(|&z| z / NM).collect();
        let nz = z.len() - 1;
        let mut kinetic = Vec::with_capacity(nz);
        let mut offset = Vec::with_capacity(nz);
        for j in 0..nz {
            match mesh.slice_material(j) {
                Material::Silicon => {
                    kinetic.push(scales.hbar2_2me / spec.m_eff_si);
                    offset.push(0.0);
                }
                Material::Oxide => {
                    kinetic.push(scales.hbar2_2me / spec.m_eff_ox);
                    offset.push(spec.barrier_ev);
                }
            }
        }
        SliceModel { z, kinetic, offset }
    }

    pub fn nz(&self) -> usize {
        self.z.len() - 1
    }
}

/// Assembles `(K, M)` for a slice with nodal electrostatic potential
/// `potential` (V). The potential energy is `U = -V + offset` (eV).
pub fn assemble_slice(potential: &[f64], model: &SliceModel) -> (Tridiagonal, Tridiagonal) {
    let nz = model.nz();
    assert_eq!(potential.len(), nz + 1, "slice potential must have nz + 1 values");
    let mut k = Tridiagonal::zeros(nz - 1);
    let mut m = Tridiagonal::zeros(nz - 1);
    for j in 0..nz {
        let h = model.z[j + 1] - model.z[j];
        let c = model.kinetic[j] / h;
        let ua = -potential[j] + model.offset[j];
        let ub = -potential[j + 1] + model.offset[j];
        let q = h / 24.0;
        k.add_element(
            j,
            nz,
            [
                [c + q * (9.0 * ua + ub), -c + q * (ua + ub)],
                [-c + q * (ua + ub), c + q * (ua + 9.0 * ub)],
            ],
        );
        let r = h / 12.0;
        m.add_element(j, nz, [[5.0 * r, r], [r, 5.0 * r]]);
    }
    (k, m)
}

/// Lowest eigenpairs of one slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Subbands {
    /// Ascending subband energies (eV).
    pub energies: Vec<f64>,
    /// Mass-normalized eigenfunctions on all `nz + 1` nodes (nm^-1/2),
    /// zero at both ends.
    pub modes: Vec<Vec<f64>>,
}

/// Solves `K chi = E M chi` for the lowest `n_modes` pairs.
pub fn solve_slice(k: &Tridiagonal, m: &Tridiagonal, n_modes: usize) -> std::result::Result<Subbands, String> {
    let n = k.dim();
    if n_modes > n {
        return Err(format!("requested {n_modes} modes from a {n}-dimensional problem"));
    }
    let chol = nalgebra::Cholesky::new(m.to_dense()).ok_or("mass matrix not positive definite")?;
    let l = chol.l();
    // C = L^-1 K L^-T
    let kd = k.to_dense();
    let y = l
        .solve_lower_triangular(&kd)
        .ok_or("singular Cholesky factor")?;
    let c = l
        .solve_lower_triangular(&y.transpose())
        .ok_or("singular Cholesky factor")?;
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(c, f64::EPSILON, 10_000).ok_or("symmetric eigensolver did not converge")?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let lt = l.transpose();
    let mut energies = Vec::with_capacity(n_modes);
    let mut modes = Vec::with_capacity(n_modes);
    for &idx in order.iter().take(n_modes) {
        let yv: DVector<f64> = eig.eigenvectors.column(idx).into_owned();
        let chi = lt.solve_upper_triangular(&yv).ok_or("singular Cholesky factor")?;
        let max = chi.amax();
        let sign = chi
            .iter()
            .find(|c| c.abs() > 1e-8 * max)
            .map_or(1.0, |c| c.signum());
        let mut full = Vec::with_capacity(n + 2);
        full.push(0.0);
        full.extend(chi.iter().map(|c| sign * c));
        full.push(0.0);
        energies.push(eig.eigenvalues[idx]);
        modes.push(full);
    }
    Ok(Subbands { energies, modes })
}

/// Subband ladders on every transport node.
#[derive(Debug, Clone, PartialEq)]
pub struct SubbandLadder {
    pub slices: Vec<Subbands>,
}

impl SubbandLadder {
    pub fn energies(&self, i: usize) -> &[f64] {
        &self.slices[i].energies
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn n_modes(&self) -> usize {
        self.slices.first().map_or(0, |s| s.energies.len())
    }

    /// Lowest subband energy over all slices.
    pub fn min_ground_energy(&self) -> f64 {
        self.slices
            .iter()
            .map(|s| s.energies[0])
            .fold(f64::INFINITY, f64::min)
    }
}

/// Solves every slice `x_i` of the nodal potential field `potential`
/// (indexed like the mesh nodes, V). Slices are independent and solved in
/// parallel; the result does not depend on the thread count.
pub fn solve_ladder(potential: &[f64], model: &SliceModel, nx_nodes: usize, n_modes: usize) -> Result<SubbandLadder> {
    let nzp = model.z.len();
    assert_eq!(potential.len(), nx_nodes * nzp);
    let slices = (0..nx_nodes)
        .into_par_iter()
        .map(|i| {
            let (k, m) = assemble_slice(&potential[i * nzp..(i + 1) * nzp], model);
            solve_slice(&k, &m, n_modes).map_err(|reason| Error::Eigen { slice: i, reason })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SubbandLadder { slices })
}
