//! P1 finite elements for `div(eps_R grad V) = (e/eps0) (N_e - N_D)` on the
//! device cross-section, including the linearized Gummel variant.
//!
//! Internal units: nm, V, nm^-3. All zeroth-order and source terms use the
//! row-lumped mass, so the added density term stays diagonal and nonnegative.

use crate::banded::BandedSpd;
use crate::config::{DeviceSpec, DopingProfile, NM, PER_M3_TO_PER_NM3};
use crate::error::Result;
use crate::mesh::{BoundaryTag, Material, Mesh2D};

/// Element stiffness `eps int grad(phi_a) . grad(phi_b)` of a P1 triangle.
pub fn element_stiffness(p: [(f64, f64); 3], eps: f64) -> [[f64; 3]; 3] {
    let (x, z): (Vec<f64>, Vec<f64>) = p.iter().copied().unzip();
    let det = (x[1] - x[0]) * (z[2] - z[0]) - (x[2] - x[0]) * (z[1] - z[0]);
    let area = 0.5 * det.abs();
    // grad(phi_a) = (z_b - z_c, x_c - x_b) / det for (a, b, c) cyclic
    let grads: Vec<(f64, f64)> = (0..3)
        .map(|a| {
            let b = (a + 1) % 3;
            let c = (a + 2) % 3;
            ((z[b] - z[c]) / det, (x[c] - x[b]) / det)
        })
        .collect();
    let mut k = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            k[a][b] = eps * area * (grads[a].0 * grads[b].0 + grads[a].1 * grads[b].1);
        }
    }
    k
}

/// Assembled stiffness and lumped mass.
#[derive(Debug, Clone)]
pub struct PoissonOperator {
    pub stiffness: BandedSpd,
    /// `int phi_a` per node (nm^2).
    pub lumped_mass: Vec<f64>,
}

fn node_nm(mesh: &Mesh2D, n: usize) -> (f64, f64) {
    let (x, z) = mesh.coords(n);
    (x / NM, z / NM)
}

/// Assembles with one relative permittivity per element.
pub fn assemble_with_permittivity(mesh: &Mesh2D, eps: &[f64]) -> PoissonOperator {
    let n = mesh.num_nodes();
    let mut stiffness = BandedSpd::zeros(n, mesh.z.len() + 1);
    let mut lumped_mass = vec![0.0; n];
    for (el, &e) in mesh.elements.iter().zip(eps) {
        let p = el.nodes.map(|k| node_nm(mesh, k));
        let k = element_stiffness(p, e);
        let third = mesh.area(el) / (NM * NM) / 3.0;
        for a in 0..3 {
            lumped_mass[el.nodes[a]] += third;
            for b in 0..=a {
                let (ra, rb) = (el.nodes[a], el.nodes[b]);
                if a == b {
                    stiffness.add(ra, ra, k[a][a]);
                } else {
                    stiffness.add(ra, rb, k[a][b]);
                }
            }
        }
    }
    PoissonOperator { stiffness, lumped_mass }
}

/// Assembles with the silicon/oxide permittivities of `spec`.
pub fn assemble_poisson(mesh: &Mesh2D, spec: &DeviceSpec) -> PoissonOperator {
    let eps: Vec<f64> = mesh
        .elements
        .iter()
        .map(|el| match el.material {
            Material::Silicon => spec.eps_si,
            Material::Oxide => spec.eps_ox,
        })
        .collect();
    assemble_with_permittivity(mesh, &eps)
}

impl PoissonOperator {
    /// Solves `(K + diag(zeroth)) V = load` with `V = g` where `dirichlet` is
    /// `Some(g)`. `zeroth` and `load` are nodal, already integrated.
    pub fn solve(&self, zeroth: &[f64], load: &[f64], dirichlet: &[Option<f64>]) -> Result<Vec<f64>> {
        let n = self.stiffness.dim();
        let bw = self.stiffness.bandwidth();
        let mut a = self.stiffness.clone();
        let mut rhs = load.to_vec();
        for r in 0..n {
            a.add(r, r, zeroth[r]);
        }
        // symmetric elimination of the prescribed values
        for (r, g) in dirichlet.iter().enumerate() {
            let Some(g) = *g else { continue };
            for c in r.saturating_sub(bw)..(r + bw + 1).min(n) {
                if c != r && dirichlet[c].is_none() {
                    rhs[c] -= a.get(c, r) * g;
                }
            }
        }
        for (r, g) in dirichlet.iter().enumerate() {
            let Some(g) = *g else { continue };
            for c in r.saturating_sub(bw)..(r + bw + 1).min(n) {
                if c != r {
                    a.set(r, c, 0.0);
                }
            }
            a.set(r, r, 1.0);
            rhs[r] = g;
        }
        let mut v = a.cholesky()?.solve(&rhs);
        for (r, g) in dirichlet.iter().enumerate() {
            if let Some(g) = *g {
                v[r] = g;
            }
        }
        Ok(v)
    }
}

/// Doping source `int N_D phi_a` per node (nm^-1), lumped per rectangle: the
/// doping charge of the two triangles of a rectangle is shared equally by its
/// four corners. Unlike per-triangle lumping this does not depend on the
/// split diagonal, so mirror-symmetric doping gives a mirror-symmetric load.
pub fn doping_load(mesh: &Mesh2D, doping: &DopingProfile) -> Vec<f64> {
    let mut load = vec![0.0; mesh.num_nodes()];
    for (pair, nd) in mesh.elements.chunks(2).zip(doping.element_density.chunks(2)) {
        let charge: f64 = pair
            .iter()
            .zip(nd)
            .map(|(el, n)| mesh.area(el) / (NM * NM) * n * PER_M3_TO_PER_NM3)
            .sum();
        let (lower, upper) = (&pair[0], &pair[1]);
        // [a, b, c] and [a, c, d]
        for k in [lower.nodes[0], lower.nodes[1], lower.nodes[2], upper.nodes[2]] {
            load[k] += 0.25 * charge;
        }
    }
    load
}

/// Contact and gate values; `None` on Neumann and interior nodes.
pub fn dirichlet_values(mesh: &Mesh2D, gate_voltage: f64, drain_voltage: f64) -> Vec<Option<f64>> {
    mesh.tags
        .iter()
        .map(|tag| match tag {
            BoundaryTag::ContactSource => Some(0.0),
            BoundaryTag::ContactDrain => Some(drain_voltage),
            BoundaryTag::Gate => Some(gate_voltage),
            BoundaryTag::Interior | BoundaryTag::Neumann => None,
        })
        .collect()
}

/// One linearized Poisson solve of the Gummel loop:
///
/// `div(eps grad V) - c N_e V / V_ref = c (N_e (1 - V_old / V_ref) - N_D)`,
/// `c = e / eps0`, with nodal `N_e` (nm^-3) and `V_ref = k_B T_L / e`.
pub fn gummel_poisson_step(
    op: &PoissonOperator,
    v_old: &[f64],
    n_e: &[f64],
    doping: &[f64],
    dirichlet: &[Option<f64>],
    poisson_factor: f64,
    v_ref: f64,
) -> Result<Vec<f64>> {
    let zeroth: Vec<f64> = n_e
        .iter()
        .zip(&op.lumped_mass)
        .map(|(n, m)| poisson_factor * n / v_ref * m)
        .collect();
    let load: Vec<f64> = (0..n_e.len())
        .map(|k| -poisson_factor * (n_e[k] * (1.0 - v_old[k] / v_ref) * op.lumped_mass[k] - doping[k]))
        .collect();
    op.solve(&zeroth, &load, dirichlet)
}
