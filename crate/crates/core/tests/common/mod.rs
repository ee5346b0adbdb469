//! Independent oracles and fixtures shared by the integration test targets.
#![allow(dead_code)]

use std::f64::consts::PI;

use dgmos::config::NM;
use dgmos::coupler::{thermal_equilibrium, Device, FullState};
use dgmos::et::{EtProblem, EtState};
use dgmos::moments::{boundary_values, MomentParams};
use dgmos::DeviceSpec;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

fn gl_panel<F: Fn(f64) -> f64>(f: &F, rule: &[(f64, f64)], a: f64, b: f64) -> f64 {
    let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
    r * rule.iter().map(|(x, w)| w * f(c + r * x)).sum::<f64>()
}

/// Adaptive 20-point Gauss-Legendre on `[a, b]`: a panel is accepted when
/// it agrees with the sum of its two halves to `tol`.
pub fn gauss<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    thread_local! {
        static RULE: Vec<(f64, f64)> = gauss_legendre(20);
    }
    RULE.with(|rule| adaptive(f, rule, a, b, gl_panel(f, rule, a, b), tol, 40))
}

fn adaptive<F: Fn(f64) -> f64>(f: &F, rule: &[(f64, f64)], a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let left = gl_panel(f, rule, a, m);
    let right = gl_panel(f, rule, m, b);
    let floor = 8.0 * f64::EPSILON * (left.abs() + right.abs());
    if depth == 0 || (left + right - whole).abs() <= tol.max(floor) {
        return left + right;
    }
    adaptive(f, rule, a, m, left, 0.5 * tol, depth - 1) + adaptive(f, rule, m, b, right, 0.5 * tol, depth - 1)
}

/// `int_a^inf f`, for integrands decaying like `e^{v eps}`, `v < 0`: the
/// range is cut at `a + 60/|v|` and split into pieces of one decay length.
pub fn tail_integral<F: Fn(f64) -> f64>(f: &F, a: f64, v: f64, rel_tol: f64) -> f64 {
    let step = 1.0 / v.abs();
    let scale = f(a).abs().max(f(a + step).abs()) * step;
    let mut total = 0.0;
    for k in 0..60 {
        let lo = a + k as f64 * step;
        total += gauss(f, lo, lo + step, rel_tol * scale / 60.0);
    }
    total
}

/// Integral of `g(eps) N(eps)`-type integrands over `[E_1, inf)`, split at
/// every ladder energy so each piece is smooth. `g` receives `(eps, m)` with
/// `m` the number of levels below `eps`.
pub fn ladder_integral<G: Fn(f64, usize) -> f64>(g: &G, energies: &[f64], v: f64, rel_tol: f64) -> f64 {
    let n = energies.len();
    let mut total = 0.0;
    for m in 1..n {
        let (lo, hi) = (energies[m - 1], energies[m]);
        if hi > lo {
            let f = |e: f64| g(e, m);
            let scale = f(lo).abs().max(f(hi).abs()).max(f(0.5 * (lo + hi)).abs()) * (hi - lo);
            total += gauss(&f, lo, hi, rel_tol * scale.max(f64::MIN_POSITIVE));
        }
    }
    let f = |e: f64| g(e, n);
    total + tail_integral(&f, energies[n - 1], v, rel_tol)
}

/// Moments computed straight from their defining energy integrals.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureMoments {
    pub d: [f64; 4],
    pub w0: f64,
    pub w1: f64,
    /// Per unit density of states.
    pub rho: f64,
    pub rho_e: f64,
}

/// Double-sum form: `D[p] = e^u/phi0 sum_n int_{E_n}^inf eps^{p-s} (eps - E_n) / N(eps) e^{v eps}`.
pub fn moments_by_quadrature(u: f64, v: f64, energies: &[f64], params: &MomentParams) -> QuadratureMoments {
    let s = params.s;
    let tol = 1e-13;
    let boltz = |e: f64| (u + v * e).exp();
    let mut d = [0.0; 4];
    for (p, slot) in d.iter_mut().enumerate() {
        let g = |e: f64, m: usize| {
            let sum: f64 = energies[..m].iter().map(|en| e - en).sum();
            e.powf(p as f64 - s) * sum / m as f64 * boltz(e)
        };
        *slot = params.inv_phi0 * ladder_integral(&g, energies, v, tol);
    }
    let n2 = |m: usize| (m * m) as f64;
    let w0 = params.relax_prefactor * ladder_integral(&|e, m| e.powf(s) * n2(m) * boltz(e), energies, v, tol);
    let w1 = params.relax_prefactor * ladder_integral(&|e, m| e.powf(s + 1.0) * n2(m) * boltz(e), energies, v, tol);
    let rho = ladder_integral(&|e, m| m as f64 * boltz(e), energies, v, tol);
    let rho_e = ladder_integral(&|e, m| e * m as f64 * boltz(e), energies, v, tol);
    QuadratureMoments { d, w0, w1, rho, rho_e }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Sorted positive ladder of `n` levels in (0.005, 2.5) eV.
pub fn random_ladder<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut e = rng.random_range(0.005..0.3);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(e);
        e += rng.random_range(0.0..0.3);
    }
    out
}

pub fn unit_params(s: f64) -> MomentParams {
    MomentParams {
        inv_phi0: 1.0,
        relax_prefactor: 1.0,
        s,
        kt_lattice: 0.025852,
    }
}

/// Eigenpairs of `K x = E M x` through the symmetric square root of `M`,
/// sorted ascending; eigenvectors are `M`-orthonormal.
pub fn generalized_eigen_oracle(k: &DMatrix<f64>, m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let me = m.clone().symmetric_eigen();
    let inv_sqrt = DVector::from_iterator(me.eigenvalues.len(), me.eigenvalues.iter().map(|l| 1.0 / l.sqrt()));
    let s = &me.eigenvectors * DMatrix::from_diagonal(&inv_sqrt) * me.eigenvectors.transpose();
    let a = &s * k * &s;
    let a = (&a + a.transpose()) * 0.5;
    let ae = a.symmetric_eigen();
    let mut order: Vec<usize> = (0..ae.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| ae.eigenvalues[i].total_cmp(&ae.eigenvalues[j]));
    let vals = order.iter().map(|&i| ae.eigenvalues[i]).collect();
    let vecs = DMatrix::from_columns(&order.iter().map(|&i| &s * ae.eigenvectors.column(i)).collect::<Vec<_>>());
    (vals, vecs)
}

/// Infinite-well levels `hbar^2/(2m) (n pi / L)^2` (eV, nm).
pub fn square_well_levels(kinetic: f64, width: f64, n: usize) -> Vec<f64> {
    (1..=n).map(|k| kinetic * (k as f64 * PI / width).powi(2)).collect()
}

pub fn small_spec() -> DeviceSpec {
    DeviceSpec {
        nx: 10,
        nz: 22,
        n_modes: 4,
        ..DeviceSpec::default()
    }
}

pub fn equilibrium(spec: DeviceSpec) -> (Device, FullState) {
    let device = Device::new(spec).expect("valid spec");
    let (state, trace) = thermal_equilibrium(&device).expect("equilibrium converges");
    assert!(trace.converged);
    (device, state)
}

/// Transport problem on the frozen ladder of `state`, with the drain
/// quasi-Fermi level lowered by `vds` volts. Returns the problem and its shift.
pub fn boundary_driven_problem(device: &Device, state: &FullState, vds: f64, params: MomentParams) -> (EtProblem, f64) {
    let ladder = &state.ladder;
    let kt = device.scales.kt;
    let ns = device.spec.boundary_sheet_density() * NM * NM;
    let (ul, vb) = boundary_values(ladder.energies(0), ns, device.scales.dos, kt);
    let (ur, _) = boundary_values(ladder.energies(ladder.len() - 1), ns, device.scales.dos, kt);
    let e_ref = device.reference_shift(ladder);
    let shift = |u: f64| [u - e_ref * vb, vb];
    let nodal: Vec<&[f64]> = ladder.slices.iter().map(|s| s.energies.as_slice()).collect();
    let problem = EtProblem::from_nodal(device.h(), &nodal, e_ref, params, shift(ul), shift(ur - vds / kt));
    (problem, e_ref)
}

pub fn linear_start(problem: &EtProblem) -> EtState {
    EtState::linear(problem.nodes(), problem.left, problem.right)
}
