//! Device description, physical constants, unit scaling and the flat
//! `section.key = value` configuration format.
//!
//! All lengths, densities and voltages in the file are SI. Energies are
//! given in eV and effective masses in units of the free electron mass,
//! which keeps the file readable and lets every value round-trip exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::{Material, Mesh2D};

/// CODATA 2018 values, SI units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    pub hbar: f64,
    pub e_charge: f64,
    pub k_b: f64,
    pub eps0: f64,
    pub m_e: f64,
}

impl PhysicalConstants {
    pub const CODATA: PhysicalConstants = PhysicalConstants {
        hbar: 1.054_571_817e-34,
        e_charge: 1.602_176_634e-19,
        k_b: 1.380_649e-23,
        eps0: 8.854_187_812_8e-12,
        m_e: 9.109_383_701_5e-31,
    };
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::CODATA
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tolerances {
    /// Outer loop stops when `max |V_old - V_new|` drops below this (V).
    pub gummel: f64,
    /// Scaled residual threshold for the energy-transport Newton solve.
    pub newton: f64,
    pub max_gummel: usize,
    pub max_newton: usize,
    /// Relative size of the last retained subband term that triggers a
    /// truncation warning in the moment kernels.
    pub tail_warn: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            gummel: 1e-6,
            newton: 1e-10,
            max_gummel: 200,
            max_newton: 50,
            tail_warn: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceSpec {
    pub constants: PhysicalConstants,
    // geometry (m)
    pub source_length: f64,
    pub channel_length: f64,
    pub drain_length: f64,
    pub oxide_thickness: f64,
    pub silicon_thickness: f64,
    // doping (m^-3)
    pub n_plus: f64,
    pub n_minus: f64,
    // materials
    pub barrier_ev: f64,
    pub eps_si: f64,
    pub eps_ox: f64,
    /// Effective masses relative to the free electron mass.
    pub m_eff_si: f64,
    pub m_eff_ox: f64,
    // transport
    pub lattice_temperature: f64,
    /// Low-field mobility (m^2 V^-1 s^-1) used for `phi0` and the flux scale.
    pub mobility: f64,
    /// Reference density (m^-2) in `phi0 = 1 / (mobility * intrinsic_density)`.
    pub intrinsic_density: f64,
    pub phi0: f64,
    pub phi_ph: f64,
    pub phonon_energy_ev: f64,
    pub scattering_exponent: f64,
    // bias program (V)
    pub gate_voltage: f64,
    pub vds_max: f64,
    pub vds_step: f64,
    // numerics
    pub nx: usize,
    pub nz: usize,
    pub n_modes: usize,
    pub tolerances: Tolerances,
}

impl Default for DeviceSpec {
    fn default() -> Self {
        let mobility = 0.12;
        let intrinsic_density = 1e10;
        let phi0 = 1.0 / (mobility * intrinsic_density);
        DeviceSpec {
            constants: PhysicalConstants::CODATA,
            source_length: 10e-9,
            channel_length: 30e-9,
            drain_length: 10e-9,
            oxide_thickness: 3e-9,
            silicon_thickness: 5e-9,
            n_plus: 1e26,
            n_minus: 1e21,
            barrier_ev: 3.0,
            eps_si: 11.7,
            eps_ox: 3.9,
            m_eff_si: 0.19,
            m_eff_ox: 0.5,
            lattice_temperature: 300.0,
            mobility,
            intrinsic_density,
            phi0,
            phi_ph: 1e-4 / phi0,
            phonon_energy_ev: 0.063,
            scattering_exponent: 0.5,
            gate_voltage: 0.0,
            vds_max: 0.5,
            vds_step: 0.02,
            nx: 50,
            nz: 50,
            n_modes: 8,
            tolerances: Tolerances::default(),
        }
    }
}

/// Quantities in the internal unit system: lengths in nm, energies in eV,
/// potentials in V, volume densities in nm^-3, sheet densities in nm^-2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scales {
    /// k_B T_L (eV).
    pub kt: f64,
    /// hbar^2 / (2 m_e) (eV nm^2).
    pub hbar2_2me: f64,
    /// 2 pi m* / hbar^2 for silicon (eV^-1 nm^-2).
    pub dos: f64,
    /// e / eps0 (V nm) so that `div(eps_R grad V) = poisson_factor * (N_e - N_D)`.
    pub poisson_factor: f64,
    /// Converts the model particle current (per nm, moments in eV) into a
    /// physical particle flux per unit width (m^-1 s^-1).
    pub flux_scale: f64,
}

pub const NM: f64 = 1e-9;
/// m^-3 -> nm^-3
pub const PER_M3_TO_PER_NM3: f64 = 1e-27;

impl DeviceSpec {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_config_str(&text)
    }

    /// Parses the flat key/value format. Omitted keys take their defaults.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
            Error::Parse(e.to_string().trim_end().to_string())
        })?;
        let mut flat = BTreeMap::new();
        flatten("", &table, &mut flat)?;

        let mut spec = DeviceSpec::default();
        let mut phi0_given = false;
        let mut phi_ph: Option<f64> = None;
        let mut phi_ph_factor: Option<f64> = None;
        for (key, value) in &flat {
            let f = || as_f64(key, value);
            let n = || as_usize(key, value);
            match key.as_str() {
                "geometry.source_length" => spec.source_length = f()?,
                "geometry.channel_length" => spec.channel_length = f()?,
                "geometry.drain_length" => spec.drain_length = f()?,
                "geometry.oxide_thickness" => spec.oxide_thickness = f()?,
                "geometry.silicon_thickness" => spec.silicon_thickness = f()?,
                "doping.n_plus" => spec.n_plus = f()?,
                "doping.n_minus" => spec.n_minus = f()?,
                "materials.barrier_ev" => spec.barrier_ev = f()?,
                "materials.eps_si" => spec.eps_si = f()?,
                "materials.eps_ox" => spec.eps_ox = f()?,
                "materials.m_eff_si" => spec.m_eff_si = f()?,
                "materials.m_eff_ox" => spec.m_eff_ox = f()?,
                "transport.lattice_temperature" => spec.lattice_temperature = f()?,
                "transport.mobility" => spec.mobility = f()?,
                "transport.intrinsic_density" => spec.intrinsic_density = f()?,
                "transport.phi0" => {
                    spec.phi0 = f()?;
                    phi0_given = true;
                }
                "transport.phi_ph" => phi_ph = Some(f()?),
                "transport.phi_ph_factor" => phi_ph_factor = Some(f()?),
                "transport.phonon_energy_ev" => spec.phonon_energy_ev = f()?,
                "transport.scattering_exponent" => spec.scattering_exponent = f()?,
                "bias.gate_voltage" => spec.gate_voltage = f()?,
                "bias.vds_max" => spec.vds_max = f()?,
                "bias.vds_step" => spec.vds_step = f()?,
                "numerics.nx" => spec.nx = n()?,
                "numerics.nz" => spec.nz = n()?,
                "numerics.n_modes" => spec.n_modes = n()?,
                "numerics.gummel_tol" => spec.tolerances.gummel = f()?,
                "numerics.newton_tol" => spec.tolerances.newton = f()?,
                "numerics.max_gummel" => spec.tolerances.max_gummel = n()?,
                "numerics.max_newton" => spec.tolerances.max_newton = n()?,
                "numerics.tail_warn" => spec.tolerances.tail_warn = f()?,
                _ => return Err(Error::validation(key, "unknown key")),
            }
        }
        if !phi0_given {
            spec.phi0 = 1.0 / (spec.mobility * spec.intrinsic_density);
        }
        spec.phi_ph = match (phi_ph, phi_ph_factor) {
            (Some(_), Some(_)) => {
                return Err(Error::validation(
                    "transport.phi_ph",
                    "give either phi_ph or phi_ph_factor, not both",
                ))
            }
            (Some(v), None) => v,
            (None, Some(c)) => c / spec.phi0,
            (None, None) => 1e-4 / spec.phi0,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Writes every key, including derived `phi0`/`phi_ph`, so that loading
    /// the result reproduces `self` exactly.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        let f = |x: f64| format!("{x:?}");
        kv("geometry.source_length", f(self.source_length));
        kv("geometry.channel_length", f(self.channel_length));
        kv("geometry.drain_length", f(self.drain_length));
        kv("geometry.oxide_thickness", f(self.oxide_thickness));
        kv("geometry.silicon_thickness", f(self.silicon_thickness));
        kv("doping.n_plus", f(self.n_plus));
        kv("doping.n_minus", f(self.n_minus));
        kv("materials.barrier_ev", f(self.barrier_ev));
        kv("materials.eps_si", f(self.eps_si));
        kv("materials.eps_ox", f(self.eps_ox));
        kv("materials.m_eff_si", f(self.m_eff_si));
        kv("materials.m_eff_ox", f(self.m_eff_ox));
        kv("transport.lattice_temperature", f(self.lattice_temperature));
        kv("transport.mobility", f(self.mobility));
        kv("transport.intrinsic_density", f(self.intrinsic_density));
        kv("transport.phi0", f(self.phi0));
        kv("transport.phi_ph", f(self.phi_ph));
        kv("transport.phonon_energy_ev", f(self.phonon_energy_ev));
        kv("transport.scattering_exponent", f(self.scattering_exponent));
        kv("bias.gate_voltage", f(self.gate_voltage));
        kv("bias.vds_max", f(self.vds_max));
        kv("bias.vds_step", f(self.vds_step));
        kv("numerics.nx", self.nx.to_string());
        kv("numerics.nz", self.nz.to_string());
        kv("numerics.n_modes", self.n_modes.to_string());
        kv("numerics.gummel_tol", f(self.tolerances.gummel));
        kv("numerics.newton_tol", f(self.tolerances.newton));
        kv("numerics.max_gummel", self.tolerances.max_gummel.to_string());
        kv("numerics.max_newton", self.tolerances.max_newton.to_string());
        kv("numerics.tail_warn", f(self.tolerances.tail_warn));
        s
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("geometry.source_length", self.source_length),
            ("geometry.channel_length", self.channel_length),
            ("geometry.drain_length", self.drain_length),
            ("geometry.oxide_thickness", self.oxide_thickness),
            ("geometry.silicon_thickness", self.silicon_thickness),
            ("doping.n_plus", self.n_plus),
            ("materials.eps_si", self.eps_si),
            ("materials.eps_ox", self.eps_ox),
            ("materials.m_eff_si", self.m_eff_si),
            ("materials.m_eff_ox", self.m_eff_ox),
            ("transport.lattice_temperature", self.lattice_temperature),
            ("transport.mobility", self.mobility),
            ("transport.intrinsic_density", self.intrinsic_density),
            ("transport.phi0", self.phi0),
            ("transport.phi_ph", self.phi_ph),
            ("transport.phonon_energy_ev", self.phonon_energy_ev),
            ("bias.vds_step", self.vds_step),
            ("numerics.gummel_tol", self.tolerances.gummel),
            ("numerics.newton_tol", self.tolerances.newton),
            ("numerics.tail_warn", self.tolerances.tail_warn),
        ];
        for (key, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(key, format!("must be finite and > 0, got {v}")));
            }
        }
        let nonneg = [
            ("doping.n_minus", self.n_minus),
            ("materials.barrier_ev", self.barrier_ev),
            ("bias.vds_max", self.vds_max),
        ];
        for (key, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::validation(key, format!("must be finite and >= 0, got {v}")));
            }
        }
        if !self.gate_voltage.is_finite() {
            return Err(Error::validation("bias.gate_voltage", "must be finite"));
        }
        let s = self.scattering_exponent;
        if !(s > -2.0 && s < 2.0) {
            return Err(Error::validation(
                "transport.scattering_exponent",
                format!("must satisfy -2 < s < 2, got {s}"),
            ));
        }
        if self.nx < 2 {
            return Err(Error::validation("numerics.nx", "must be >= 2"));
        }
        if self.nz < 2 {
            return Err(Error::validation("numerics.nz", "must be >= 2"));
        }
        if self.n_modes < 1 || self.n_modes > self.nz - 1 {
            return Err(Error::validation(
                "numerics.n_modes",
                format!("must lie in 1..={}, got {}", self.nz - 1, self.n_modes),
            ));
        }
        if self.tolerances.max_gummel == 0 {
            return Err(Error::validation("numerics.max_gummel", "must be >= 1"));
        }
        if self.tolerances.max_newton == 0 {
            return Err(Error::validation("numerics.max_newton", "must be >= 1"));
        }
        Ok(())
    }

    pub fn device_length(&self) -> f64 {
        self.source_length + self.channel_length + self.drain_length
    }

    pub fn device_thickness(&self) -> f64 {
        self.silicon_thickness + 2.0 * self.oxide_thickness
    }

    /// Gate electrodes cover `[L_S, L_S + L_C]` on both faces.
    pub fn gate_range(&self) -> (f64, f64) {
        (self.source_length, self.source_length + self.channel_length)
    }

    /// Boundary sheet density `N_s^b = N^+ * ell_Si` (m^-2).
    pub fn boundary_sheet_density(&self) -> f64 {
        self.n_plus * self.silicon_thickness
    }

    /// Lattice thermal energy k_B T_L in joules.
    pub fn thermal_energy(&self) -> f64 {
        self.constants.k_b * self.lattice_temperature
    }

    /// Thermal voltage k_B T_L / e (V).
    pub fn thermal_voltage(&self) -> f64 {
        self.thermal_energy() / self.constants.e_charge
    }

    pub fn barrier_energy(&self) -> f64 {
        self.barrier_ev * self.constant_ev()
    }

    pub fn phonon_energy(&self) -> f64 {
        self.phonon_energy_ev * self.constant_ev()
    }

    pub fn m_eff_si_kg(&self) -> f64 {
        self.m_eff_si * self.constants.m_e
    }

    pub fn m_eff_ox_kg(&self) -> f64 {
        self.m_eff_ox * self.constants.m_e
    }

    fn constant_ev(&self) -> f64 {
        self.constants.e_charge
    }

    /// Bias points `0, dV, 2 dV, ... , V_DS_max`.
    pub fn bias_points(&self) -> Vec<f64> {
        let n = (self.vds_max / self.vds_step + 1e-9).floor() as usize;
        (0..=n).map(|k| k as f64 * self.vds_step).collect()
    }

    pub fn scales(&self) -> Scales {
        let c = &self.constants;
        let kt = self.thermal_energy() / c.e_charge;
        let hbar2_2me = c.hbar * c.hbar / (2.0 * c.m_e) / c.e_charge / (NM * NM);
        let dos_si = 2.0 * std::f64::consts::PI * self.m_eff_si_kg() / (c.hbar * c.hbar);
        let dos = dos_si * c.e_charge * NM * NM;
        let poisson_factor = c.e_charge / c.eps0 / NM;
        // model flux per nm -> per m, then the density-of-states ratio between
        // the physical 2D DOS (per eV per m^2) and the mobility reference density.
        let dos_per_ev_m2 = dos_si * c.e_charge;
        let flux_scale = 1e9 * dos_per_ev_m2 * self.mobility * self.phi0;
        Scales {
            kt,
            hbar2_2me,
            dos,
            poisson_factor,
            flux_scale,
        }
    }
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, toml::Value>) -> Result<()> {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out)?,
            other => {
                out.insert(key, other.clone());
            }
        }
    }
    Ok(())
}

fn as_f64(key: &str, v: &toml::Value) -> Result<f64> {
    match v {
        toml::Value::Float(x) => Ok(*x),
        toml::Value::Integer(i) => Ok(*i as f64),
        other => Err(Error::validation(key, format!("expected a number, got {other}"))),
    }
}

fn as_usize(key: &str, v: &toml::Value) -> Result<usize> {
    match v {
        toml::Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        other => Err(Error::validation(key, format!("expected a non-negative integer, got {other}"))),
    }
}

/// Per-element doping density (m^-3), evaluated at element centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct DopingProfile {
    pub element_density: Vec<f64>,
}

pub fn build_doping(spec: &DeviceSpec, mesh: &Mesh2D) -> DopingProfile {
    let (gate_lo, gate_hi) = spec.gate_range();
    let element_density = mesh
        .elements
        .iter()
        .map(|el| {
            if el.material == Material::Oxide {
                return 0.0;
            }
            let (cx, _) = mesh.centroid(el);
            if cx > gate_lo && cx < gate_hi {
                spec.n_minus
            } else {
                spec.n_plus
            }
        })
        .collect();
    DopingProfile { element_density }
}
