//! Stationary energy-transport system in entropy variables `U = (u, v)`,
//! discretized by lowest-order hybridized mixed finite elements on the
//! transport grid and solved by damped Newton.
//!
//! After static condensation the unknowns are the nodal values `U_i`, and
//! the flux on interval `I_i = (x_{i-1}, x_i)` is
//! `J = D(Ubar_i) (U_i - U_{i-1}) / h + W(Ubar_i) (x - x_mid)` with
//! `Ubar_i` the interval average. Continuity of `J` at interior nodes gives
//!
//! `R_i = D_i (U_i - U_{i-1}) - D_{i+1} (U_{i+1} - U_i) + h^2/2 (W_i + W_{i+1}) = 0`.
//!
//! The solver works in an energy frame where the ladder is strictly
//! positive: energies `E + E_ref` and `u' = u - E_ref v`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::moments::{MomentBlock, MomentParams};

pub type Mat2 = [[f64; 2]; 2];
pub type Vec2 = [f64; 2];

/// Entropy variables on the transport nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct EtState {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl EtState {
    pub fn constant(nodes: usize, u: f64, v: f64) -> Self {
        EtState {
            u: vec![u; nodes],
            v: vec![v; nodes],
        }
    }

    /// Linear interpolation between the end values.
    pub fn linear(nodes: usize, left: Vec2, right: Vec2) -> Self {
        let n = (nodes - 1) as f64;
        let lerp = |a: f64, b: f64, i: usize| a + (b - a) * i as f64 / n;
        EtState {
            u: (0..nodes).map(|i| lerp(left[0], right[0], i)).collect(),
            v: (0..nodes).map(|i| lerp(left[1], right[1], i)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// `u -> u - shift * v`: moves the energy origin down by `shift`.
    pub fn shifted(&self, shift: f64) -> Self {
        EtState {
            u: self.u.iter().zip(&self.v).map(|(u, v)| u - shift * v).collect(),
            v: self.v.clone(),
        }
    }

    /// Overwrites both end nodes with Dirichlet data.
    pub fn pin(&mut self, left: Vec2, right: Vec2) {
        let n = self.len() - 1;
        self.u[0] = left[0];
        self.v[0] = left[1];
        self.u[n] = right[0];
        self.v[n] = right[1];
    }
}

/// Frozen data of one ET solve, already expressed in the shifted frame.
#[derive(Debug, Clone)]
pub struct EtProblem {
    /// Uniform spacing (nm).
    pub h: f64,
    /// Interval ladders (eV, shifted), one per interval.
    pub energies: Vec<Vec<f64>>,
    pub params: MomentParams,
    /// Dirichlet values `(u', v)` at `x = 0` and `x = L`.
    pub left: Vec2,
    pub right: Vec2,
}

impl EtProblem {
    /// Builds interval ladders as the average of the adjacent nodal ladders
    /// shifted by `shift`.
    pub fn from_nodal(
        h: f64,
        nodal: &[&[f64]],
        shift: f64,
        params: MomentParams,
        left: Vec2,
        right: Vec2,
    ) -> Self {
        let energies = nodal
            .windows(2)
            .map(|w| w[0].iter().zip(w[1]).map(|(a, b)| 0.5 * (a + b) + shift).collect())
            .collect();
        EtProblem {
            h,
            energies,
            params,
            left,
            right,
        }
    }

    pub fn nodes(&self) -> usize {
        self.energies.len() + 1
    }
}

/// Residual and block-tridiagonal Jacobian on the interior nodes
/// `1..N_x`; entry `k` belongs to node `k + 1`.
#[derive(Debug, Clone)]
pub struct EtSystem {
    pub residual: Vec<Vec2>,
    pub lower: Vec<Mat2>,
    pub diag: Vec<Mat2>,
    pub upper: Vec<Mat2>,
    /// Moments at the interval midpoints, one per interval.
    pub blocks: Vec<MomentBlock>,
    /// Per-node factors that make residual components comparable to
    /// changes in `u` and in `kT_L v`.
    pub scale: Vec<Vec2>,
    /// Largest share of the highest retained subband in any moment sum.
    pub tail_ratio: f64,
}

impl EtSystem {
    pub fn scaled_residual_norm(&self) -> f64 {
        self.residual
            .iter()
            .zip(&self.scale)
            .map(|(r, s)| (r[0] * s[0]).abs().max((r[1] * s[1]).abs()))
            .fold(0.0, f64::max)
    }
}

fn mat_vec(a: &Mat2, x: &Vec2) -> Vec2 {
    [a[0][0] * x[0] + a[0][1] * x[1], a[1][0] * x[0] + a[1][1] * x[1]]
}

fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut c = [[0.0; 2]; 2];
    for r in 0..2 {
        for k in 0..2 {
            c[r][k] = a[r][0] * b[0][k] + a[r][1] * b[1][k];
        }
    }
    c
}

fn mat_add(a: &Mat2, b: &Mat2, alpha: f64) -> Mat2 {
    [
        [a[0][0] + alpha * b[0][0], a[0][1] + alpha * b[0][1]],
        [a[1][0] + alpha * b[1][0], a[1][1] + alpha * b[1][1]],
    ]
}

fn mat_inv(a: &Mat2) -> Option<Mat2> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let norm = a.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
    if !det.is_finite() || det.abs() <= 1e-300_f64.max(1e-15 * norm * norm) {
        return None;
    }
    Some([[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]])
}

/// Evaluates the interval moments at `Ubar_i`.
pub fn interval_moments(state: &EtState, problem: &EtProblem) -> Result<Vec<MomentBlock>> {
    (0..problem.energies.len())
        .into_par_iter()
        .map(|k| {
            let u = 0.5 * (state.u[k] + state.u[k + 1]);
            let v = 0.5 * (state.v[k] + state.v[k + 1]);
            MomentBlock::evaluate(u, v, &problem.energies[k], &problem.params)
                .map_err(|e| e.context(format!("interval {}", k + 1)))
        })
        .collect()
}

/// Assembles `R` and its Jacobian at `state`.
pub fn assemble(state: &EtState, problem: &EtProblem) -> Result<EtSystem> {
    let nodes = problem.nodes();
    assert_eq!(state.len(), nodes);
    let blocks = interval_moments(state, problem)?;
    let kt = problem.params.kt_lattice;
    let q = 0.25 * problem.h * problem.h;

    // per interval k (0-based, spanning nodes k..k+1)
    let mut flux = Vec::with_capacity(blocks.len());
    let mut g = Vec::with_capacity(blocks.len());
    let mut dw = Vec::with_capacity(blocks.len());
    for (k, b) in blocks.iter().enumerate() {
        let du = [state.u[k + 1] - state.u[k], state.v[k + 1] - state.v[k]];
        let d = b.matrix();
        let dflux = mat_vec(&d, &du);
        let dplus = mat_vec(&b.matrix_dv(), &du);
        flux.push(dflux);
        // d(D(Ubar) dU)/dU_end through Ubar: columns (du, dv)
        g.push([[0.5 * dflux[0], 0.5 * dplus[0]], [0.5 * dflux[1], 0.5 * dplus[1]]]);
        let grad = b.relaxation_source_grad(kt);
        dw.push([[0.0, 0.0], grad]);
    }
    let tail_ratio = blocks.iter().map(|b| b.tail_ratio).fold(0.0, f64::max);

    let interior = nodes - 2;
    let mut residual = Vec::with_capacity(interior);
    let mut lower = Vec::with_capacity(interior);
    let mut diag = Vec::with_capacity(interior);
    let mut upper = Vec::with_capacity(interior);
    let mut scale = Vec::with_capacity(interior);
    for i in 1..nodes - 1 {
        let (l, r) = (i - 1, i); // intervals left and right of node i
        let wl = blocks[l].relaxation_source(kt);
        let wr = blocks[r].relaxation_source(kt);
        residual.push([
            flux[l][0] - flux[r][0],
            flux[l][1] - flux[r][1] + 2.0 * q * (wl + wr),
        ]);
        let dl = blocks[l].matrix();
        let dr = blocks[r].matrix();
        let mut lo = mat_add(&g[l], &dl, -1.0);
        lo = mat_add(&lo, &dw[l], q);
        let mut di = mat_add(&dl, &g[l], 1.0);
        di = mat_add(&di, &dr, 1.0);
        di = mat_add(&di, &g[r], -1.0);
        di = mat_add(&di, &dw[l], q);
        di = mat_add(&di, &dw[r], q);
        let mut up = mat_add(&g[r], &dr, 1.0);
        up = [[-up[0][0], -up[0][1]], [-up[1][0], -up[1][1]]];
        up = mat_add(&up, &dw[r], q);
        lower.push(lo);
        diag.push(di);
        upper.push(up);
        let relax = q * kt * (blocks[l].w0 + blocks[r].w0);
        scale.push([1.0 / (dl[0][0] + dr[0][0]), kt / (dl[1][1] + dr[1][1] + relax)]);
    }
    Ok(EtSystem {
        residual,
        lower,
        diag,
        upper,
        blocks,
        scale,
        tail_ratio,
    })
}

/// Solves the block-tridiagonal system `lower_k x_{k-1} + diag_k x_k + upper_k x_{k+1} = rhs_k`.
pub fn block_thomas(lower: &[Mat2], diag: &[Mat2], upper: &[Mat2], rhs: &[Vec2]) -> Result<Vec<Vec2>> {
    let n = diag.len();
    let mut c: Vec<Mat2> = Vec::with_capacity(n);
    let mut d: Vec<Vec2> = Vec::with_capacity(n);
    for k in 0..n {
        let (m, r) = if k == 0 {
            (diag[0], rhs[0])
        } else {
            let m = mat_add(&diag[k], &mat_mul(&lower[k], &c[k - 1]), -1.0);
            let ld = mat_vec(&lower[k], &d[k - 1]);
            (m, [rhs[k][0] - ld[0], rhs[k][1] - ld[1]])
        };
        let inv = mat_inv(&m).ok_or_else(|| Error::Linear(format!("singular pivot block at row {k}")))?;
        c.push(mat_mul(&inv, &upper[k]));
        d.push(mat_vec(&inv, &r));
    }
    let mut x = vec![[0.0; 2]; n];
    for k in (0..n).rev() {
        x[k] = if k + 1 == n {
            d[k]
        } else {
            let cx = mat_vec(&c[k], &x[k + 1]);
            [d[k][0] - cx[0], d[k][1] - cx[1]]
        };
    }
    Ok(x)
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub state: EtState,
    pub iterations: usize,
    /// Scaled residual norm after each iteration, starting with the initial one.
    pub residuals: Vec<f64>,
    /// Truncation ratio of the final assembly.
    pub tail_ratio: f64,
}

const MAX_HALVINGS: usize = 20;

/// Damped Newton iteration from `initial`; end nodes are overwritten with the
/// problem's Dirichlet data. A step is halved while it would make some
/// `v >= 0` or increase the scaled residual.
pub fn newton_solve(initial: &EtState, problem: &EtProblem, tol: f64, max_iter: usize) -> Result<NewtonOutcome> {
    let mut state = initial.clone();
    state.pin(problem.left, problem.right);
    if state.v.iter().any(|&v| !(v < 0.0)) {
        return Err(Error::domain("newton_solve", "initial state has v >= 0"));
    }
    let kt = problem.params.kt_lattice;
    let mut system = assemble(&state, problem)?;
    let mut norm = system.scaled_residual_norm();
    let mut residuals = vec![norm];
    if system.residual.is_empty() || norm < tol {
        return Ok(NewtonOutcome {
            state,
            iterations: 0,
            residuals,
            tail_ratio: system.tail_ratio,
        });
    }

    for iter in 1..=max_iter {
        let rhs: Vec<Vec2> = system.residual.iter().map(|r| [-r[0], -r[1]]).collect();
        let delta = block_thomas(&system.lower, &system.diag, &system.upper, &rhs)?;
        let step_size = delta
            .iter()
            .map(|d| d[0].abs().max((d[1] * kt).abs()))
            .fold(0.0, f64::max);

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let mut trial = state.clone();
            for (k, d) in delta.iter().enumerate() {
                trial.u[k + 1] += alpha * d[0];
                trial.v[k + 1] += alpha * d[1];
            }
            if trial.v.iter().all(|&v| v < 0.0) {
                if let Ok(sys) = assemble(&trial, problem) {
                    let n = sys.scaled_residual_norm();
                    if n.is_finite() && n <= norm {
                        accepted = Some((trial, sys, n));
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }

        match accepted {
            Some((trial, sys, n)) => {
                state = trial;
                system = sys;
                norm = n;
                residuals.push(norm);
                log::trace!("newton {iter}: |R| = {norm:.3e}, step = {:.3e}, alpha = {alpha}", step_size);
                if norm < tol || (alpha * step_size < 1e-14 && norm < 1e3 * tol) {
                    polish(&mut state, &mut system, &mut residuals, problem);
                    return Ok(NewtonOutcome {
                        state,
                        iterations: iter,
                        residuals,
                        tail_ratio: system.tail_ratio,
                    });
                }
            }
            None => {
                // residual at round-off level: nothing left to gain
                if norm < 1e3 * tol && step_size < 1e-9 {
                    return Ok(NewtonOutcome {
                        state,
                        iterations: iter,
                        residuals,
                        tail_ratio: system.tail_ratio,
                    });
                }
                return Err(Error::NewtonDiverged {
                    iterations: iter,
                    residual: norm,
                });
            }
        }
    }
    Err(Error::NewtonDiverged {
        iterations: max_iter,
        residual: norm,
    })
}

/// One more full Newton step past the tolerance, kept if the residual does not
/// grow. Near the root this drives the interval currents to round-off agreement.
fn polish(state: &mut EtState, system: &mut EtSystem, residuals: &mut Vec<f64>, problem: &EtProblem) {
    let rhs: Vec<Vec2> = system.residual.iter().map(|r| [-r[0], -r[1]]).collect();
    let Ok(delta) = block_thomas(&system.lower, &system.diag, &system.upper, &rhs) else { return };
    let mut trial = state.clone();
    for (k, d) in delta.iter().enumerate() {
        trial.u[k + 1] += d[0];
        trial.v[k + 1] += d[1];
    }
    if trial.v.iter().any(|&v| !(v < 0.0)) {
        return;
    }
    if let Ok(sys) = assemble(&trial, problem) {
        let n = sys.scaled_residual_norm();
        if n.is_finite() && n <= *residuals.last().unwrap() {
            *state = trial;
            *system = sys;
            residuals.push(n);
        }
    }
}

/// Flux `D(Ubar_i) (U_i - U_{i-1}) / h` on each interval (value at the midpoint).
pub fn interval_fluxes(state: &EtState, blocks: &[MomentBlock], h: f64) -> Vec<Vec2> {
    blocks
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let du = [(state.u[k + 1] - state.u[k]) / h, (state.v[k + 1] - state.v[k]) / h];
            mat_vec(&b.matrix(), &du)
        })
        .collect()
}

/// Model currents of a converged state: `J1` per interval, `J2` at the nodes
/// (from the left interval; the first node from the right one).
pub fn currents(state: &EtState, problem: &EtProblem) -> Result<(Vec<f64>, Vec<f64>)> {
    let blocks = interval_moments(state, problem)?;
    let fluxes = interval_fluxes(state, &blocks, problem.h);
    let kt = problem.params.kt_lattice;
    let half = 0.5 * problem.h;
    let j1 = fluxes.iter().map(|f| f[0]).collect();
    let mut j2 = Vec::with_capacity(problem.nodes());
    j2.push(fluxes[0][1] - blocks[0].relaxation_source(kt) * half);
    for (f, b) in fluxes.iter().zip(&blocks) {
        j2.push(f[1] + b.relaxation_source(kt) * half);
    }
    Ok((j1, j2))
}

/// Unit conversions needed to turn a converged state into physical profiles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalScales {
    /// 2D density of states (eV^-1 nm^-2).
    pub dos: f64,
    /// Boltzmann constant (eV/K).
    pub k_b_ev: f64,
    /// Model particle current -> particle flux per unit width (m^-1 s^-1).
    pub flux_scale: f64,
    /// Elementary charge (C).
    pub e_charge: f64,
}

/// Converged energy-transport state with derived profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct EtSolution {
    /// Entropy variables in the physical energy frame.
    pub state: EtState,
    /// Model particle current `J1` on each interval.
    pub j1: Vec<f64>,
    /// Model energy current `J2` at the nodes, physical frame.
    pub j2: Vec<f64>,
    /// Carrier temperature (K).
    pub temperature: Vec<f64>,
    /// Quasi-Fermi level `mu = u kT` (eV).
    pub mu: Vec<f64>,
    /// Sheet density (m^-2).
    pub rho: Vec<f64>,
    /// Mean velocity of the source-to-drain particle flux (m/s).
    pub velocity: Vec<f64>,
    /// Drain current per unit width (A/m), positive for electrons moving
    /// from source to drain.
    pub current: f64,
}

impl EtSolution {
    /// `state` is in the shifted frame of `problem`; `nodal` holds the
    /// unshifted nodal ladders.
    pub fn new(state: &EtState, problem: &EtProblem, shift: f64, nodal: &[&[f64]], scales: &PhysicalScales) -> Result<Self> {
        let (j1, j2s) = currents(state, problem)?;
        let mean_j1 = j1.iter().sum::<f64>() / j1.len() as f64;
        let physical = state.shifted(-shift);
        let j2 = j2s.iter().map(|j| j - shift * mean_j1).collect();
        let n = physical.len();
        let mut temperature = Vec::with_capacity(n);
        let mut mu = Vec::with_capacity(n);
        let mut rho = Vec::with_capacity(n);
        for i in 0..n {
            let (u, v) = (physical.u[i], physical.v[i]);
            let kt = -1.0 / v;
            temperature.push(kt / scales.k_b_ev);
            mu.push(u * kt);
            let (r, _) = crate::moments::densities(u, v, nodal[i], scales.dos)?;
            rho.push(r * 1e18);
        }
        let flux = -mean_j1 * scales.flux_scale;
        let velocity = rho.iter().map(|r| flux / r).collect();
        Ok(EtSolution {
            state: physical,
            j1,
            j2,
            temperature,
            mu,
            rho,
            velocity,
            current: scales.e_charge * flux,
        })
    }

    /// Relative spread `(max - min) / max|J1|` of the interval currents.
    pub fn j1_spread(&self) -> f64 {
        let max = self.j1.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = self.j1.iter().cloned().fold(f64::INFINITY, f64::min);
        let mag = self.j1.iter().fold(0.0f64, |m, j| m.max(j.abs()));
        if mag == 0.0 {
            0.0
        } else {
            (max - min) / mag
        }
    }
}
