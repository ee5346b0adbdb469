//! Self-consistent outer loop: subband ladders, energy transport and the
//! linearized Poisson equation, iterated until the potential settles, plus
//! the drain-bias continuation sweep.

use crate::config::{build_doping, DeviceSpec, Scales, NM};
use crate::error::{Error, Result};
use crate::et::{newton_solve, EtProblem, EtSolution, EtState, PhysicalScales};
use crate::mesh::{build_grids, Mesh2D};
use crate::moments::{boundary_values, MomentParams};
use crate::poisson::{assemble_poisson, dirichlet_values, doping_load, gummel_poisson_step, PoissonOperator};
use crate::schrodinger::{solve_ladder, SliceModel, SubbandLadder};

/// Everything that stays fixed for a given specification.
#[derive(Debug, Clone)]
pub struct Device {
    pub spec: DeviceSpec,
    pub mesh: Mesh2D,
    pub slices: SliceModel,
    pub poisson: PoissonOperator,
    /// `int N_D phi_a` per node (nm^-1).
    pub doping_load: Vec<f64>,
    pub scales: Scales,
    pub params: MomentParams,
}

impl Device {
    pub fn new(spec: DeviceSpec) -> Result<Self> {
        spec.validate()?;
        let mesh = build_grids(&spec);
        let slices = SliceModel::from_mesh(&spec, &mesh);
        let poisson = assemble_poisson(&mesh, &spec);
        let doping_load = doping_load(&mesh, &build_doping(&spec, &mesh));
        let scales = spec.scales();
        let params = MomentParams::from_spec(&spec);
        Ok(Device {
            spec,
            mesh,
            slices,
            poisson,
            doping_load,
            scales,
            params,
        })
    }

    pub fn transport_nodes(&self) -> usize {
        self.mesh.x.len()
    }

    /// Transport spacing (nm).
    pub fn h(&self) -> f64 {
        self.mesh.x.h / NM
    }

    pub fn physical_scales(&self) -> PhysicalScales {
        let c = &self.spec.constants;
        PhysicalScales {
            dos: self.scales.dos,
            k_b_ev: c.k_b / c.e_charge,
            flux_scale: self.scales.flux_scale,
            e_charge: c.e_charge,
        }
    }

    fn ladder(&self, potential: &[f64]) -> Result<SubbandLadder> {
        solve_ladder(potential, &self.slices, self.transport_nodes(), self.spec.n_modes)
    }

    /// Contact values `(u_b, v_b)` at `x = 0` and `x = L` (physical frame).
    fn contact_values(&self, ladder: &SubbandLadder) -> ([f64; 2], [f64; 2]) {
        let ns = self.spec.boundary_sheet_density() * NM * NM;
        let kt = self.scales.kt;
        let last = ladder.len() - 1;
        let (ul, vl) = boundary_values(ladder.energies(0), ns, self.scales.dos, kt);
        let (ur, vr) = boundary_values(ladder.energies(last), ns, self.scales.dos, kt);
        ([ul, vl], [ur, vr])
    }

    /// Nodal electron density (nm^-3):
    /// `N_e = dos (-1/v) sum_n e^{u + E_n v} |chi_n|^2` on each slice.
    pub fn electron_density(&self, ladder: &SubbandLadder, et: &EtState) -> Vec<f64> {
        let nzp = self.mesh.z.len();
        let mut n_e = vec![0.0; self.mesh.num_nodes()];
        for (i, slice) in ladder.slices.iter().enumerate() {
            let (u, v) = (et.u[i], et.v[i]);
            let pref = self.scales.dos * (-1.0 / v);
            for (e, chi) in slice.energies.iter().zip(&slice.modes) {
                let w = pref * (u + e * v).exp();
                for j in 0..nzp {
                    n_e[i * nzp + j] += w * chi[j] * chi[j];
                }
            }
        }
        n_e
    }

    /// Energy shift that moves the lowest subband to `kT_L`.
    pub fn reference_shift(&self, ladder: &SubbandLadder) -> f64 {
        self.scales.kt - ladder.min_ground_energy()
    }

    fn initial_potential(&self, vg: f64, vds: f64) -> Vec<f64> {
        dirichlet_values(&self.mesh, vg, vds)
            .into_iter()
            .map(|d| d.unwrap_or(0.0))
            .collect()
    }
}

/// Self-consistent solution at one bias point.
#[derive(Debug, Clone, PartialEq)]
pub struct FullState {
    pub vg: f64,
    pub vds: f64,
    /// Nodal potential (V), mesh node order.
    pub potential: Vec<f64>,
    /// Ladder of the final potential.
    pub ladder: SubbandLadder,
    /// Entropy variables, physical energy frame.
    pub et: EtState,
    /// Energy shift used by the last transport solve (eV).
    pub e_ref: f64,
    /// Nodal electron density (nm^-3) from the final ladder and state.
    pub density: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterIteration {
    /// `max |V_new - V_old|` (V).
    pub update: f64,
    pub newton_iterations: usize,
    pub newton_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolverTrace {
    pub vg: f64,
    pub vds: f64,
    pub iterations: Vec<OuterIteration>,
    pub converged: bool,
}

impl SolverTrace {
    pub fn newton_total(&self) -> usize {
        self.iterations.iter().map(|it| it.newton_iterations).sum()
    }

    pub fn last_update(&self) -> f64 {
        self.iterations.last().map_or(f64::INFINITY, |it| it.update)
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Equilibrium at `V_DS = 0`: constant Fermi level from the source contact
/// ladder and lattice temperature everywhere.
pub fn thermal_equilibrium(device: &Device) -> Result<(FullState, SolverTrace)> {
    let spec = &device.spec;
    let vg = spec.gate_voltage;
    let tol = spec.tolerances.gummel;
    let dirichlet = dirichlet_values(&device.mesh, vg, 0.0);
    let mut potential = device.initial_potential(vg, 0.0);
    let mut trace = SolverTrace {
        vg,
        vds: 0.0,
        ..SolverTrace::default()
    };
    let nodes = device.transport_nodes();
    for _ in 0..spec.tolerances.max_gummel {
        let ladder = device.ladder(&potential)?;
        let (left, _) = device.contact_values(&ladder);
        let et = EtState::constant(nodes, left[0], left[1]);
        let n_e = device.electron_density(&ladder, &et);
        let next = gummel_poisson_step(
            &device.poisson,
            &potential,
            &n_e,
            &device.doping_load,
            &dirichlet,
            device.scales.poisson_factor,
            device.scales.kt,
        )?;
        let update = max_abs_diff(&next, &potential);
        potential = next;
        trace.iterations.push(OuterIteration {
            update,
            newton_iterations: 0,
            newton_residual: 0.0,
        });
        log::debug!("equilibrium iteration {}: |dV| = {update:.3e}", trace.iterations.len());
        if update < tol {
            trace.converged = true;
            let ladder = device.ladder(&potential)?;
            let (left, _) = device.contact_values(&ladder);
            let et = EtState::constant(nodes, left[0], left[1]);
            let density = device.electron_density(&ladder, &et);
            let e_ref = device.reference_shift(&ladder);
            let state = FullState {
                vg,
                vds: 0.0,
                potential,
                ladder,
                et,
                e_ref,
                density,
            };
            return Ok((state, trace));
        }
    }
    Err(Error::GummelDiverged {
        vg,
        vds: 0.0,
        iterations: trace.iterations.len(),
        last_update: trace.last_update(),
    })
}

fn transport_problem(device: &Device, ladder: &SubbandLadder, e_ref: f64) -> EtProblem {
    let (left, right) = device.contact_values(ladder);
    let nodal: Vec<&[f64]> = ladder.slices.iter().map(|s| s.energies.as_slice()).collect();
    let shift = |b: [f64; 2]| [b[0] - e_ref * b[1], b[1]];
    EtProblem::from_nodal(device.h(), &nodal, e_ref, device.params, shift(left), shift(right))
}

struct TransportStep {
    /// Physical frame.
    state: EtState,
    e_ref: f64,
    iterations: usize,
    residual: f64,
    tail_ratio: f64,
}

/// Solves the transport problem on a frozen ladder, starting from `guess`
/// (physical frame).
fn transport_step(device: &Device, ladder: &SubbandLadder, guess: &EtState) -> Result<TransportStep> {
    let tol = &device.spec.tolerances;
    let e_ref = device.reference_shift(ladder);
    let problem = transport_problem(device, ladder, e_ref);
    let initial = guess.shifted(e_ref);
    let outcome = match newton_solve(&initial, &problem, tol.newton, tol.max_newton) {
        Ok(o) => o,
        Err(first) => {
            // a cold start from the linear profile is occasionally more robust
            log::debug!("newton from warm start failed ({first}); retrying from linear profile");
            let cold = EtState::linear(problem.nodes(), problem.left, problem.right);
            newton_solve(&cold, &problem, tol.newton, tol.max_newton).map_err(|_| first)?
        }
    };
    Ok(TransportStep {
        state: outcome.state.shifted(-e_ref),
        e_ref,
        iterations: outcome.iterations,
        residual: outcome.residuals.last().copied().unwrap_or(0.0),
        tail_ratio: outcome.tail_ratio,
    })
}

/// Outer iteration at bias `(vg, vds)` warm-started from `prev`.
pub fn outer_gummel(device: &Device, prev: &FullState, vg: f64, vds: f64) -> Result<(FullState, SolverTrace)> {
    let tol = &device.spec.tolerances;
    let dirichlet = dirichlet_values(&device.mesh, vg, vds);
    let mut potential = prev.potential.clone();
    for (v, d) in potential.iter_mut().zip(&dirichlet) {
        if let Some(d) = d {
            *v = *d;
        }
    }
    let mut et = prev.et.clone();
    let mut trace = SolverTrace {
        vg,
        vds,
        ..SolverTrace::default()
    };
    for iter in 1..=tol.max_gummel {
        let context = |e: Error| e.context(format!("V_G={vg} V, V_DS={vds} V, outer iteration {iter}"));
        let ladder = device.ladder(&potential).map_err(context)?;
        let step = transport_step(device, &ladder, &et).map_err(context)?;
        et = step.state;
        let n_e = device.electron_density(&ladder, &et);
        let next = gummel_poisson_step(
            &device.poisson,
            &potential,
            &n_e,
            &device.doping_load,
            &dirichlet,
            device.scales.poisson_factor,
            device.scales.kt,
        )
        .map_err(context)?;
        let update = max_abs_diff(&next, &potential);
        potential = next;
        trace.iterations.push(OuterIteration {
            update,
            newton_iterations: step.iterations,
            newton_residual: step.residual,
        });
        log::debug!("V_DS={vds:.3}: iteration {iter}: |dV| = {update:.3e}, newton {}", step.iterations);
        if update < tol.gummel {
            trace.converged = true;
            if step.tail_ratio > tol.tail_warn {
                log::warn!(
                    "V_DS={vds:.3} V: highest retained subband carries {:.3e} of a moment sum; consider more modes",
                    step.tail_ratio
                );
            }
            // transport on the ladder of the final potential, so the stored
            // state conserves current exactly on its own ladder
            let ladder = device.ladder(&potential).map_err(context)?;
            let step = transport_step(device, &ladder, &et).map_err(context)?;
            let (et, e_ref) = (step.state, step.e_ref);
            let density = device.electron_density(&ladder, &et);
            let state = FullState {
                vg,
                vds,
                potential,
                ladder,
                et,
                e_ref,
                density,
            };
            return Ok((state, trace));
        }
    }
    Err(Error::GummelDiverged {
        vg,
        vds,
        iterations: trace.iterations.len(),
        last_update: trace.last_update(),
    })
}

/// Profiles of a converged state, using the transport problem of its final ladder.
pub fn postprocess(device: &Device, state: &FullState) -> Result<EtSolution> {
    let e_ref = device.reference_shift(&state.ladder);
    let problem = transport_problem(device, &state.ladder, e_ref);
    let nodal: Vec<&[f64]> = state.ladder.slices.iter().map(|s| s.energies.as_slice()).collect();
    EtSolution::new(&state.et.shifted(e_ref), &problem, e_ref, &nodal, &device.physical_scales())
}

#[derive(Debug, Clone)]
pub struct BiasPoint {
    pub state: FullState,
    pub solution: EtSolution,
    pub trace: SolverTrace,
}

#[derive(Debug)]
pub struct SweepResult {
    pub equilibrium: FullState,
    pub equilibrium_trace: SolverTrace,
    pub points: Vec<BiasPoint>,
    /// First failure; the sweep stops there.
    pub failure: Option<Error>,
}

impl SweepResult {
    pub fn all_converged(&self) -> bool {
        self.failure.is_none() && self.points.iter().all(|p| p.trace.converged)
    }
}

/// Equilibrium, then `V_DS = 0, dV, ..., V_DS_max` with warm starts.
pub fn bias_sweep(device: &Device) -> Result<SweepResult> {
    let (equilibrium, equilibrium_trace) = thermal_equilibrium(device)?;
    let vg = device.spec.gate_voltage;
    let mut points: Vec<BiasPoint> = Vec::new();
    let mut failure = None;
    for vds in device.spec.bias_points() {
        let prev = points.last().map_or(&equilibrium, |p| &p.state);
        let step = outer_gummel(device, prev, vg, vds).and_then(|(state, trace)| {
            let solution = postprocess(device, &state)?;
            Ok(BiasPoint { state, solution, trace })
        });
        match step {
            Ok(point) => {
                log::info!(
                    "V_G={vg} V, V_DS={vds:.2} V: I = {:.6e} A/m ({} outer iterations)",
                    point.solution.current,
                    point.trace.iterations.len()
                );
                points.push(point);
            }
            Err(e) => {
                log::error!("sweep stopped at V_DS={vds}: {e}");
                failure = Some(e);
                break;
            }
        }
    }
    Ok(SweepResult {
        equilibrium,
        equilibrium_trace,
        points,
        failure,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> DeviceSpec {
        DeviceSpec {
            nx: 10,
            nz: 22,
            n_modes: 4,
            ..DeviceSpec::default()
        }
    }

    #[test]
    fn equilibrium_is_mirror_symmetric() {
        let device = Device::new(small_spec()).unwrap();
        let (state, trace) = thermal_equilibrium(&device).unwrap();
        assert!(trace.converged);
        let nzp = device.mesh.z.len();
        let nx = device.transport_nodes() - 1;
        let vmax = state.potential.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..=nx {
            for j in 0..nzp {
                let a = state.potential[i * nzp + j];
                let b = state.potential[(nx - i) * nzp + j];
                assert!((a - b).abs() <= 1e-6 * vmax, "({i},{j}): {a} vs {b}");
            }
        }
    }

    #[test]
    fn zero_bias_transport_is_at_rest() {
        let device = Device::new(small_spec()).unwrap();
        let (eq, _) = thermal_equilibrium(&device).unwrap();
        let (state, trace) = outer_gummel(&device, &eq, 0.0, 0.0).unwrap();
        assert_eq!(trace.iterations.len(), 1);
        let sol = postprocess(&device, &state).unwrap();
        for t in &sol.temperature {
            assert!((t - 300.0).abs() < 1e-8);
        }
        assert!(sol.current.abs() < 1e-10);
    }

    #[test]
    fn looser_tolerance_never_needs_more_iterations() {
        let mut spec = small_spec();
        let tight = thermal_equilibrium(&Device::new(spec.clone()).unwrap()).unwrap().1;
        spec.tolerances.gummel *= 2.0;
        let loose = thermal_equilibrium(&Device::new(spec).unwrap()).unwrap().1;
        assert!(loose.iterations.len() <= tight.iterations.len());
    }
}
