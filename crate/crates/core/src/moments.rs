//! Closed-form energy moments of the subband energy-transport model under
//! Boltzmann statistics and power-law cross-sections `phi * eps^s`.
//!
//! Every integral over total energy is reduced to tail integrals
//! `int_{E_m}^inf eps^a e^{u + v eps} d eps` by telescoping the piecewise
//! constant subband count `N(eps)` over the ladder. Energies are in eV,
//! `v` in eV^-1. Ladder energies passed here must already be shifted so
//! that the lowest level is strictly positive.

use std::f64::consts::PI;

use crate::config::DeviceSpec;
use crate::error::{Error, Result};
use crate::gamma::scaled_tail_moment;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentParams {
    /// `1 / phi0`.
    pub inv_phi0: f64,
    /// `4 pi^2 eps_ph phi_ph`.
    pub relax_prefactor: f64,
    /// Cross-section exponent `s`.
    pub s: f64,
    /// `k_B T_L` (eV).
    pub kt_lattice: f64,
}

impl MomentParams {
    pub fn from_spec(spec: &DeviceSpec) -> Self {
        MomentParams {
            inv_phi0: 1.0 / spec.phi0,
            relax_prefactor: 4.0 * PI * PI * spec.phonon_energy_ev * spec.phi_ph,
            s: spec.scattering_exponent,
            kt_lattice: spec.scales().kt,
        }
    }
}

/// Moments at one evaluation point `(u, v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentBlock {
    pub u: f64,
    pub v: f64,
    /// `D[p]` is the `p`-th diffusion moment; `D_ij = D[i + j]`.
    pub d: [f64; 4],
    pub w0: f64,
    /// Energy moment of the relaxation integrand, `dW0/dv`.
    pub w1: f64,
    /// Largest relative contribution of the highest retained subband.
    pub tail_ratio: f64,
}

impl MomentBlock {
    pub fn evaluate(u: f64, v: f64, energies: &[f64], params: &MomentParams) -> Result<Self> {
        let (d, tail_d) = diffusion_moments(u, v, energies, params)?;
        let (w0, w1, tail_w) = relaxation(u, v, energies, params)?;
        Ok(MomentBlock {
            u,
            v,
            d,
            w0,
            w1,
            tail_ratio: tail_d.max(tail_w),
        })
    }

    /// 2x2 diffusion matrix `[[D0, D1], [D1, D2]]`.
    pub fn matrix(&self) -> [[f64; 2]; 2] {
        [[self.d[0], self.d[1]], [self.d[1], self.d[2]]]
    }

    /// Derivative of the diffusion matrix with respect to `v`: `[[D1, D2], [D2, D3]]`.
    pub fn matrix_dv(&self) -> [[f64; 2]; 2] {
        [[self.d[1], self.d[2]], [self.d[2], self.d[3]]]
    }

    /// Second component of the discrete relaxation vector, `W0 (1 + kT_L v)`.
    pub fn relaxation_source(&self, kt_lattice: f64) -> f64 {
        self.w0 * lattice_factor(kt_lattice, self.v)
    }

    /// `(d/du, d/dv)` of [`Self::relaxation_source`].
    pub fn relaxation_source_grad(&self, kt_lattice: f64) -> [f64; 2] {
        let factor = lattice_factor(kt_lattice, self.v);
        [self.w0 * factor, self.w1 * factor + self.w0 * kt_lattice]
    }
}

/// `1 + kT_L v`, written so that it is exactly zero at `v = -1/kT_L`.
fn lattice_factor(kt_lattice: f64, v: f64) -> f64 {
    kt_lattice * (v + 1.0 / kt_lattice)
}

fn check_ladder(v: f64, energies: &[f64]) -> Result<()> {
    if !(v < 0.0) {
        return Err(Error::domain("moments", format!("requires v < 0, got {v}")));
    }
    match energies.first() {
        None => Err(Error::domain("moments", "empty subband ladder")),
        Some(&e1) if !(e1 > 0.0) => Err(Error::domain(
            "moments",
            format!("lowest subband energy must be > 0 after the reference shift, got {e1}"),
        )),
        _ => Ok(()),
    }
}

/// Diffusion moments `D[p]`, p = 0..3, and the truncation ratio.
///
/// `D[p] = e^u / phi0 * ( T(p+1-s, E_1) + sum_m (S_{m-1}/(m-1) - S_m/m) T(p-s, E_m) )`
/// with `S_m` the partial sums of the ladder and `T(a, E) = int_E^inf eps^a e^{v eps}`.
pub fn diffusion_moments(u: f64, v: f64, energies: &[f64], params: &MomentParams) -> Result<([f64; 4], f64)> {
    check_ladder(v, energies)?;
    let s = params.s;
    let e1 = energies[0];
    let mut d = [0.0; 4];
    let mut last = [0.0; 4];

    let lead = (u + v * e1).exp();
    for (p, dp) in d.iter_mut().enumerate() {
        *dp = lead * scaled_tail_moment(p as f64 + 1.0 - s, e1, v)?;
    }

    let mut partial = 0.0;
    let mut prev_mean = 0.0;
    for (idx, &em) in energies.iter().enumerate() {
        let m = (idx + 1) as f64;
        partial += em;
        let mean = partial / m;
        let coeff = prev_mean - mean;
        prev_mean = mean;
        let weight = (u + v * em).exp();
        for p in 0..4 {
            let term = coeff * weight * scaled_tail_moment(p as f64 - s, em, v)?;
            d[p] += term;
            last[p] = term;
        }
    }

    let mut tail_ratio: f64 = 0.0;
    for p in 0..4 {
        d[p] *= params.inv_phi0;
        if energies.len() > 1 {
            tail_ratio = tail_ratio.max((last[p] * params.inv_phi0 / d[p]).abs());
        }
    }
    Ok((d, tail_ratio))
}

/// Relaxation magnitude `W0` and its `v`-derivative `W1`.
///
/// Uses `N(eps)^2 = sum_{E_m <= eps} (2m - 1)`.
pub fn relaxation(u: f64, v: f64, energies: &[f64], params: &MomentParams) -> Result<(f64, f64, f64)> {
    check_ladder(v, energies)?;
    let s = params.s;
    let mut w0 = 0.0;
    let mut w1 = 0.0;
    let mut last = 0.0;
    for (idx, &em) in energies.iter().enumerate() {
        let mult = (2 * idx + 1) as f64;
        let weight = mult * (u + v * em).exp();
        last = weight * scaled_tail_moment(s, em, v)?;
        w0 += last;
        w1 += weight * scaled_tail_moment(s + 1.0, em, v)?;
    }
    let tail_ratio = if energies.len() > 1 { last / w0 } else { 0.0 };
    Ok((params.relax_prefactor * w0, params.relax_prefactor * w1, tail_ratio))
}

/// Sheet density `rho` (per unit `dos`) and energy density `rho E` under
/// Boltzmann statistics, with `k_B T = -1/v`.
pub fn densities(u: f64, v: f64, energies: &[f64], dos: f64) -> Result<(f64, f64)> {
    if !(v < 0.0) {
        return Err(Error::domain("densities", format!("requires v < 0, got {v}")));
    }
    let kt = -1.0 / v;
    let mut rho = 0.0;
    let mut rho_e = 0.0;
    for &en in energies {
        let w = (u + en * v).exp();
        rho += w;
        rho_e += (en + kt) * w;
    }
    Ok((dos * kt * rho, dos * kt * rho_e))
}

/// `log(sum_n exp(-E_n / kT))`, evaluated stably.
pub fn log_partition(energies: &[f64], kt: f64) -> f64 {
    let max = energies
        .iter()
        .map(|&e| -e / kt)
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = energies.iter().map(|&e| (-e / kt - max).exp()).sum();
    max + sum.ln()
}

/// Contact values of the entropy variables for a prescribed sheet density.
///
/// `v_b = -1/kT_L`, `u_b = log( N_s / (dos kT_L sum_n e^{-E_n/kT_L}) )`.
pub fn boundary_values(energies: &[f64], sheet_density: f64, dos: f64, kt_lattice: f64) -> (f64, f64) {
    let v_b = -1.0 / kt_lattice;
    let u_b = (sheet_density / (dos * kt_lattice)).ln() - log_partition(energies, kt_lattice);
    (u_b, v_b)
}

/// Effective potential energy `V_s = -kT_L log(sum_n e^{-E_n/kT_L})` (eV).
pub fn effective_potential(energies: &[f64], kt_lattice: f64) -> f64 {
    -kt_lattice * log_partition(energies, kt_lattice)
}
