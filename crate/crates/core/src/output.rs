//! CSV writers and the run manifest. All files are SI, with fixed float
//! formatting and coordinate-ordered rows so identical runs give identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::PER_M3_TO_PER_NM3;
use crate::coupler::{BiasPoint, Device, FullState, SolverTrace, SweepResult};
use crate::error::{Error, Result};
use crate::et::EtSolution;
use crate::moments::effective_potential;
use crate::schrodinger::SubbandLadder;

/// 17 significant digits in scientific notation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn row(values: &[f64]) -> String {
    let mut s = values.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(",");
    s.push('\n');
    s
}

fn ev_to_j(device: &Device) -> f64 {
    device.spec.constants.e_charge
}

pub fn iv_csv(points: &[BiasPoint]) -> String {
    let mut s = String::from("V_G,V_DS,I\n");
    for p in points {
        s.push_str(&row(&[p.state.vg, p.state.vds, p.solution.current]));
    }
    s
}

/// `x, T, mu, u, v, velocity, rho, V_s`; `mu` and `V_s` in J, `v` in J^-1.
pub fn profiles_csv(device: &Device, state: &FullState, solution: &EtSolution) -> String {
    let j = ev_to_j(device);
    let kt = device.scales.kt;
    let mut s = String::from("x,T,mu,u,v,velocity,rho,V_s\n");
    for (i, &x) in device.mesh.x.nodes.iter().enumerate() {
        let vs = effective_potential(state.ladder.energies(i), kt);
        s.push_str(&row(&[
            x,
            solution.temperature[i],
            solution.mu[i] * j,
            solution.state.u[i],
            solution.state.v[i] / j,
            solution.velocity[i],
            solution.rho[i],
            vs * j,
        ]));
    }
    s
}

/// `x, z, N_e` (m^-3).
pub fn density_csv(device: &Device, density: &[f64]) -> String {
    let mut s = String::from("x,z,N_e\n");
    for (k, n) in density.iter().enumerate() {
        let (x, z) = device.mesh.coords(k);
        s.push_str(&row(&[x, z, n / PER_M3_TO_PER_NM3]));
    }
    s
}

/// `x, z, V` (V).
pub fn potential_csv(device: &Device, potential: &[f64]) -> String {
    let mut s = String::from("x,z,V\n");
    for (k, v) in potential.iter().enumerate() {
        let (x, z) = device.mesh.coords(k);
        s.push_str(&row(&[x, z, *v]));
    }
    s
}

/// `x, n, E_n` (J), `n` starting at 1.
pub fn subbands_csv(device: &Device, ladder: &SubbandLadder) -> String {
    let j = ev_to_j(device);
    let mut s = String::from("x,n,E_n\n");
    for (i, &x) in device.mesh.x.nodes.iter().enumerate() {
        for (n, e) in ladder.energies(i).iter().enumerate() {
            let _ = writeln!(s, "{},{},{}", fmt_f64(x), n + 1, fmt_f64(e * j));
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepSummary {
    pub vds: f64,
    pub converged: bool,
    pub outer_iterations: usize,
    pub newton_iterations: usize,
    pub last_update: f64,
    /// Energy reference shift (J).
    pub e_ref: f64,
    pub current: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub version: String,
    pub config: String,
    pub mode: String,
    pub files: Vec<String>,
    pub steps: Vec<StepSummary>,
    pub failure: Option<String>,
}

impl RunManifest {
    fn new(device: &Device, mode: &str) -> Self {
        RunManifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: device.spec.to_config_string(),
            mode: mode.to_string(),
            files: Vec::new(),
            steps: Vec::new(),
            failure: None,
        }
    }

    fn summary(device: &Device, state: &FullState, trace: &SolverTrace, current: f64) -> StepSummary {
        StepSummary {
            vds: state.vds,
            converged: trace.converged,
            outer_iterations: trace.iterations.len(),
            newton_iterations: trace.newton_total(),
            last_update: trace.last_update(),
            e_ref: state.e_ref * ev_to_j(device),
            current,
        }
    }

    pub fn to_toml_string(&self) -> String {
        let mut root = toml::Table::new();
        root.insert("version".into(), self.version.clone().into());
        root.insert("mode".into(), self.mode.clone().into());
        root.insert("config".into(), self.config.clone().into());
        root.insert(
            "files".into(),
            toml::Value::Array(self.files.iter().map(|f| f.clone().into()).collect()),
        );
        if let Some(f) = &self.failure {
            root.insert("failure".into(), f.clone().into());
        }
        let steps = self
            .steps
            .iter()
            .map(|s| {
                let mut t = toml::Table::new();
                t.insert("V_DS".into(), s.vds.into());
                t.insert("converged".into(), s.converged.into());
                t.insert("outer_iterations".into(), (s.outer_iterations as i64).into());
                t.insert("newton_iterations".into(), (s.newton_iterations as i64).into());
                t.insert("last_update".into(), s.last_update.into());
                t.insert("E_ref".into(), s.e_ref.into());
                t.insert("I".into(), s.current.into());
                toml::Value::Table(t)
            })
            .collect();
        root.insert("step".into(), toml::Value::Array(steps));
        toml::to_string(&root).expect("manifest tables serialize")
    }
}

struct Writer<'a> {
    dir: &'a Path,
    manifest: RunManifest,
}

impl Writer<'_> {
    fn write(&mut self, name: String, contents: &str) -> Result<()> {
        let path = self.dir.join(&name);
        fs::write(&path, contents).map_err(|source| Error::Io { path, source })?;
        self.manifest.files.push(name);
        Ok(())
    }

    fn finish(self) -> Result<RunManifest> {
        let path = self.dir.join("manifest.toml");
        fs::write(&path, self.manifest.to_toml_string()).map_err(|source| Error::Io { path, source })?;
        Ok(self.manifest)
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn bias_tag(vds: f64) -> String {
    format!("{vds:.3}")
}

/// Writes the sweep files and `manifest.toml`.
pub fn write_outputs(device: &Device, sweep: &SweepResult, dir: &Path) -> Result<RunManifest> {
    create_dir(dir)?;
    let mut w = Writer {
        dir,
        manifest: RunManifest::new(device, "sweep"),
    };
    w.write("iv.csv".into(), &iv_csv(&sweep.points))?;
    for p in &sweep.points {
        let tag = bias_tag(p.state.vds);
        w.write(format!("profiles_{tag}.csv"), &profiles_csv(device, &p.state, &p.solution))?;
        w.write(format!("density_{tag}.csv"), &density_csv(device, &p.state.density))?;
        w.write(format!("potential_{tag}.csv"), &potential_csv(device, &p.state.potential))?;
        w.write(format!("subbands_{tag}.csv"), &subbands_csv(device, &p.state.ladder))?;
        let summary = RunManifest::summary(device, &p.state, &p.trace, p.solution.current);
        w.manifest.steps.push(summary);
    }
    w.manifest.failure = sweep.failure.as_ref().map(|e| e.to_string());
    w.finish()
}

/// Writes the equilibrium files and `manifest.toml`.
pub fn write_equilibrium(device: &Device, state: &FullState, trace: &SolverTrace, solution: &EtSolution, dir: &Path) -> Result<RunManifest> {
    create_dir(dir)?;
    let mut w = Writer {
        dir,
        manifest: RunManifest::new(device, "equilibrium"),
    };
    w.write("potential.csv".into(), &potential_csv(device, &state.potential))?;
    w.write("density.csv".into(), &density_csv(device, &state.density))?;
    w.write("ladder.csv".into(), &subbands_csv(device, &state.ladder))?;
    w.write("profiles.csv".into(), &profiles_csv(device, state, solution))?;
    w.manifest.steps.push(RunManifest::summary(device, state, trace, solution.current));
    w.finish()
}

/// Node coordinates and boundary tags.
pub fn write_mesh(device: &Device, dir: &Path) -> Result<PathBuf> {
    create_dir(dir)?;
    let path = dir.join("mesh.csv");
    fs::write(&path, device.mesh.to_csv()).map_err(|source| Error::Io { path: path.clone(), source })?;
    Ok(path)
}
