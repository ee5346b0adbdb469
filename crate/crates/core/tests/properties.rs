//! Property tests for the moment kernels, slice eigensolver, transport
//! scheme, Poisson operator and configuration round trip.

mod common;

use common::*;
use dgmos::et::{block_thomas, Mat2, Vec2};
use dgmos::gamma::tail_moment;
use dgmos::mesh::{build_grids, BoundaryTag};
use dgmos::moments::{densities, diffusion_moments, relaxation, MomentBlock};
use dgmos::poisson::assemble_poisson;
use dgmos::schrodinger::{assemble_slice, solve_slice, SliceModel};
use dgmos::DeviceSpec;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn ladder_strategy(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    (0.005f64..0.4, prop::collection::vec(0.0f64..0.4, 0..max_len)).prop_map(|(first, steps)| {
        let mut e = vec![first];
        for d in steps {
            let last = *e.last().unwrap();
            e.push(last + d);
        }
        e
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn diffusion_matrix_is_positive_definite(
        u in -30.0f64..5.0,
        v in -80.0f64..-2.0,
        s in -1.9f64..1.9,
        energies in ladder_strategy(8),
    ) {
        let (d, _) = diffusion_moments(u, v, &energies, &unit_params(s)).unwrap();
        prop_assert!(d[0] > 0.0);
        prop_assert!(d[0] * d[2] - d[1] * d[1] > 0.0, "D = {d:?}");
    }

    #[test]
    fn relaxation_opposes_heating(
        u in -30.0f64..5.0,
        v in -80.0f64..-2.0,
        energies in ladder_strategy(8),
    ) {
        let params = unit_params(0.5);
        let b = MomentBlock::evaluate(u, v, &energies, &params).unwrap();
        let w = -b.relaxation_source(params.kt_lattice);
        let excess = -1.0 / v - params.kt_lattice;
        prop_assert!(w * excess <= 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn telescoped_moments_match_double_sum_quadrature(
        u in -5.0f64..5.0,
        v in -80.0f64..-5.0,
        s in prop::sample::select(vec![0.0, 0.5, -0.5, 1.0, 1.3]),
        energies in ladder_strategy(8),
    ) {
        let params = unit_params(s);
        let (d, _) = diffusion_moments(u, v, &energies, &params).unwrap();
        let (w0, w1, _) = relaxation(u, v, &energies, &params).unwrap();
        let q = moments_by_quadrature(u, v, &energies, &params);
        for p in 0..4 {
            prop_assert!(rel_err(d[p], q.d[p]) <= 1e-9, "D[{p}]: {} vs {}", d[p], q.d[p]);
        }
        prop_assert!(rel_err(w0, q.w0) <= 1e-9, "W0: {w0} vs {}", q.w0);
        prop_assert!(rel_err(w1, q.w1) <= 1e-9, "W1: {w1} vs {}", q.w1);
    }

    #[test]
    fn densities_match_quadrature(
        u in -5.0f64..5.0,
        v in -80.0f64..-5.0,
        energies in ladder_strategy(8),
    ) {
        let (rho, rho_e) = densities(u, v, &energies, 1.0).unwrap();
        let q = moments_by_quadrature(u, v, &energies, &unit_params(0.0));
        prop_assert!(rel_err(rho, q.rho) <= 1e-9);
        prop_assert!(rel_err(rho_e, q.rho_e) <= 1e-9);
    }

    #[test]
    fn density_scales_exactly_with_u(
        u in -20.0f64..5.0,
        delta in -3.0f64..3.0,
        v in -80.0f64..-5.0,
        energies in ladder_strategy(8),
    ) {
        let (a, _) = densities(u, v, &energies, 1.0).unwrap();
        let (b, _) = densities(u + delta, v, &energies, 1.0).unwrap();
        prop_assert!(rel_err(b, a * delta.exp()) <= 1e-13);
    }
}

#[test]
fn half_order_tail_moment_matches_quadrature() {
    let f = |e: f64| e.sqrt() * (-2.0 * e).exp();
    let reference = tail_integral(&f, 1.0, -2.0, 1e-14);
    let value = tail_moment(0.5, 1.0, -2.0).unwrap();
    assert!(rel_err(value, reference) <= 1e-10, "{value} vs {reference}");
}

/// Dropping levels 9..12 of a device ladder changes nothing visible, for
/// carrier temperatures up to 1000 K.
#[test]
fn truncation_beyond_eight_modes_is_negligible() {
    let spec = DeviceSpec {
        n_modes: 12,
        ..DeviceSpec::default()
    };
    let (device, state) = equilibrium(spec);
    let shift = device.reference_shift(&state.ladder);
    let params = device.params;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in (0..state.ladder.len()).step_by(5) {
        let full: Vec<f64> = state.ladder.energies(i).iter().map(|e| e + shift).collect();
        for _ in 0..10 {
            let t = rand::Rng::random_range(&mut rng, 300.0..1000.0);
            let v = -1.0 / (device.physical_scales().k_b_ev * t);
            let u = rand::Rng::random_range(&mut rng, -10.0..5.0);
            let (d12, _) = diffusion_moments(u, v, &full, &params).unwrap();
            let (d8, _) = diffusion_moments(u, v, &full[..8], &params).unwrap();
            let (w12, _, _) = relaxation(u, v, &full, &params).unwrap();
            let (w8, _, _) = relaxation(u, v, &full[..8], &params).unwrap();
            for p in 0..4 {
                assert!(rel_err(d12[p], d8[p]) <= 1e-10, "slice {i}, T={t}: D[{p}]");
            }
            assert!(rel_err(w12, w8) <= 1e-10, "slice {i}, T={t}: W0");
        }
    }
}

fn slice_model(nz: usize) -> SliceModel {
    let spec = DeviceSpec {
        nx: 2,
        nz,
        n_modes: 1,
        ..DeviceSpec::default()
    };
    SliceModel::from_mesh(&spec, &build_grids(&spec))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn slice_solver_matches_dense_oracle(potential in prop::collection::vec(-0.5f64..0.5, 21)) {
        let model = slice_model(20);
        let (k, m) = assemble_slice(&potential, &model);
        let sub = solve_slice(&k, &m, 8).unwrap();
        let (vals, vecs) = generalized_eigen_oracle(&k.to_dense(), &m.to_dense());
        for n in 0..8 {
            let e = sub.energies[n];
            prop_assert!((e - vals[n]).abs() <= 1e-10 * vals[n].abs().max(1.0), "level {n}: {e} vs {}", vals[n]);
            let chi = nalgebra::DVector::from_column_slice(&sub.modes[n][1..20]);
            let oracle = vecs.column(n);
            let overlap = (chi.transpose() * m.to_dense() * oracle)[(0, 0)].abs();
            prop_assert!((overlap - 1.0).abs() <= 1e-8, "mode {n} overlap {overlap}");
        }
    }

    #[test]
    fn slice_modes_solve_the_pencil(potential in prop::collection::vec(-0.5f64..0.5, 51)) {
        let model = slice_model(50);
        let (k, m) = assemble_slice(&potential, &model);
        let sub = solve_slice(&k, &m, 8).unwrap();
        let kmax = k.to_dense().amax();
        for (e, chi) in sub.energies.iter().zip(&sub.modes) {
            let inner = &chi[1..chi.len() - 1];
            let kx = k.mul_vec(inner);
            let mx = m.mul_vec(inner);
            let res = kx.iter().zip(&mx).fold(0.0f64, |r, (a, b)| r.max((a - e * b).abs()));
            prop_assert!(res <= 1e-11 * kmax);
        }
    }

    #[test]
    fn symmetric_potential_gives_mirror_symmetric_modes(half in prop::collection::vec(-0.4f64..0.4, 26)) {
        let mut potential = half.clone();
        potential.extend(half.iter().rev().skip(1));
        let model = slice_model(50);
        let (k, m) = assemble_slice(&potential, &model);
        let sub = solve_slice(&k, &m, 6).unwrap();
        for (n, chi) in sub.modes.iter().enumerate() {
            let gap = sub.energies.get(n + 1).map_or(1.0, |e| e - sub.energies[n]);
            prop_assume!(gap > 1e-6);
            let scale = chi.iter().fold(0.0f64, |a, c| a.max(c.abs()));
            for j in 0..chi.len() {
                let mirror = chi[chi.len() - 1 - j];
                prop_assert!((chi[j].abs() - mirror.abs()).abs() <= 1e-8 * scale, "mode {n} node {j}");
            }
        }
    }
}

fn spd_block(a: f64, b: f64, c: f64) -> Mat2 {
    // a, c > 0 and |b| < sqrt(a c)
    let off = b * (a * c).sqrt();
    [[a, off], [off, c]]
}

proptest! {
    #[test]
    fn constant_coefficient_scheme_reproduces_linear_profiles(
        a in 0.1f64..10.0,
        b in -0.95f64..0.95,
        c in 0.1f64..10.0,
        left in prop::array::uniform2(-5.0f64..5.0),
        right in prop::array::uniform2(-5.0f64..5.0),
    ) {
        // N_x = 4: three interior nodes, D (U_i - U_{i-1}) - D (U_{i+1} - U_i) = 0
        let d = spd_block(a, b, c);
        let neg = [[-d[0][0], -d[0][1]], [-d[1][0], -d[1][1]]];
        let two = [[2.0 * d[0][0], 2.0 * d[0][1]], [2.0 * d[1][0], 2.0 * d[1][1]]];
        let apply = |m: &Mat2, x: &Vec2| [m[0][0] * x[0] + m[0][1] * x[1], m[1][0] * x[0] + m[1][1] * x[1]];
        let rhs = vec![apply(&d, &left), [0.0, 0.0], apply(&d, &right)];
        let x = block_thomas(&[neg; 3], &[two; 3], &[neg; 3], &rhs).unwrap();
        for (k, xk) in x.iter().enumerate() {
            let t = (k + 1) as f64 / 4.0;
            for r in 0..2 {
                let exact = left[r] + t * (right[r] - left[r]);
                prop_assert!((xk[r] - exact).abs() <= 1e-12 * (1.0 + exact.abs()));
            }
        }
    }

    #[test]
    fn density_term_keeps_poisson_operator_definite(
        nx in 2usize..12,
        nz in 2usize..12,
        seed in any::<u64>(),
    ) {
        let spec = DeviceSpec { nx, nz, n_modes: 1, ..DeviceSpec::default() };
        let mesh = build_grids(&spec);
        let op = assemble_poisson(&mesh, &spec);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let zeroth: Vec<f64> = (0..mesh.num_nodes()).map(|_| rand::Rng::random_range(&mut rng, 0.0..100.0)).collect();
        let load = vec![0.0; mesh.num_nodes()];
        let dirichlet: Vec<Option<f64>> = mesh.tags.iter().map(|t| t.is_dirichlet().then_some(0.0)).collect();
        prop_assert!(op.solve(&zeroth, &load, &dirichlet).is_ok());
        for r in 0..mesh.num_nodes() {
            for c in 0..mesh.num_nodes() {
                prop_assert_eq!(op.stiffness.get(r, c), op.stiffness.get(c, r));
            }
        }
    }

    #[test]
    fn mesh_covers_the_cross_section(nx in 2usize..30, nz in 2usize..30) {
        let spec = DeviceSpec { nx, nz, n_modes: 1, ..DeviceSpec::default() };
        let mesh = build_grids(&spec);
        let area: f64 = mesh.elements.iter().map(|el| mesh.area(el)).sum();
        let exact = spec.device_length() * spec.device_thickness();
        prop_assert!(rel_err(area, exact) <= 1e-12);
        prop_assert_eq!(mesh.elements.len(), 2 * nx * nz);
        let contacts = mesh.tags.iter().filter(|t| matches!(t, BoundaryTag::ContactSource | BoundaryTag::ContactDrain)).count();
        prop_assert_eq!(contacts, 2 * (nz + 1));
    }

    #[test]
    fn config_text_round_trips(
        lengths in prop::array::uniform3(1e-9f64..50e-9),
        oxide in 0.5e-9f64..5e-9,
        silicon in 1e-9f64..20e-9,
        n_plus in 1e24f64..1e27,
        s in -1.9f64..1.9,
        vg in -1.0f64..1.0,
        factor in 1e-6f64..1e6,
        nx in 2usize..200,
        nz in 3usize..200,
    ) {
        let mut spec = DeviceSpec {
            source_length: lengths[0],
            channel_length: lengths[1],
            drain_length: lengths[2],
            oxide_thickness: oxide,
            silicon_thickness: silicon,
            n_plus,
            scattering_exponent: s,
            gate_voltage: vg,
            nx,
            nz,
            n_modes: (nz - 1).min(8),
            ..DeviceSpec::default()
        };
        spec.phi_ph = factor / spec.phi0;
        let text = spec.to_config_string();
        let back = DeviceSpec::from_config_str(&text).unwrap();
        prop_assert_eq!(back, spec);
    }
}

/// Infinite square well of pure silicon: the lowest four levels within 0.5%.
#[test]
fn square_well_levels_within_half_percent() {
    let width = 5.0;
    let kinetic = DeviceSpec::default().scales().hbar2_2me / 0.19;
    let nz = 50;
    let model = SliceModel {
        z: (0..=nz).map(|j| width * j as f64 / nz as f64).collect(),
        kinetic: vec![kinetic; nz],
        offset: vec![0.0; nz],
    };
    let (k, m) = assemble_slice(&vec![0.0; nz + 1], &model);
    let sub = solve_slice(&k, &m, 4).unwrap();
    for (e, exact) in sub.energies.iter().zip(square_well_levels(kinetic, width, 4)) {
        assert!(rel_err(*e, exact) <= 5e-3, "{e} vs {exact}");
    }
}
