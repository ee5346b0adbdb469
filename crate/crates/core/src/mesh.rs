//! Uniform tensor grids and the right-triangle mesh of the device cross-section.

use crate::config::DeviceSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    Interior,
    ContactSource,
    ContactDrain,
    Gate,
    Neumann,
}

impl BoundaryTag {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryTag::Interior => "interior",
            BoundaryTag::ContactSource => "contact_source",
            BoundaryTag::ContactDrain => "contact_drain",
            BoundaryTag::Gate => "gate",
            BoundaryTag::Neumann => "neumann",
        }
    }

    pub fn is_dirichlet(self) -> bool {
        matches!(
            self,
            BoundaryTag::ContactSource | BoundaryTag::ContactDrain | BoundaryTag::Gate
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Material {
    Silicon,
    Oxide,
}

/// Uniform 1D grid; positions in metres.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    pub nodes: Vec<f64>,
    pub h: f64,
}

impl Grid1D {
    pub fn uniform(length: f64, n: usize) -> Self {
        let h = length / n as f64;
        let mut nodes: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
        nodes[n] = length;
        Grid1D { nodes, h }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of intervals.
    pub fn intervals(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn midpoint(&self, interval: usize) -> f64 {
        0.5 * (self.nodes[interval] + self.nodes[interval + 1])
    }
}

pub type TransportGrid = Grid1D;
pub type SliceGrid = Grid1D;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub nodes: [usize; 3],
    pub material: Material,
}

/// Tensor-product nodes `(x_i, z_j)` with index `i * (nz + 1) + j`.
#[derive(Debug, Clone)]
pub struct Mesh2D {
    pub x: Grid1D,
    pub z: Grid1D,
    pub tags: Vec<BoundaryTag>,
    pub elements: Vec<Triangle>,
    /// `(z_lo, z_hi)` of the silicon film.
    pub si_bounds: (f64, f64),
}

impl Mesh2D {
    pub fn node(&self, i: usize, j: usize) -> usize {
        i * self.z.len() + j
    }

    pub fn num_nodes(&self) -> usize {
        self.x.len() * self.z.len()
    }

    pub fn coords(&self, node: usize) -> (f64, f64) {
        let nzp = self.z.len();
        (self.x.nodes[node / nzp], self.z.nodes[node % nzp])
    }

    pub fn centroid(&self, el: &Triangle) -> (f64, f64) {
        let mut cx = 0.0;
        let mut cz = 0.0;
        for &n in &el.nodes {
            let (x, z) = self.coords(n);
            cx += x;
            cz += z;
        }
        (cx / 3.0, cz / 3.0)
    }

    pub fn area(&self, el: &Triangle) -> f64 {
        let (x0, z0) = self.coords(el.nodes[0]);
        let (x1, z1) = self.coords(el.nodes[1]);
        let (x2, z2) = self.coords(el.nodes[2]);
        0.5 * ((x1 - x0) * (z2 - z0) - (x2 - x0) * (z1 - z0)).abs()
    }

    /// Material of slice element `[z_j, z_{j+1}]`, decided by its midpoint.
    pub fn slice_material(&self, j: usize) -> Material {
        material_at(self.z.midpoint(j), self.si_bounds)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,z,tag\n");
        for n in 0..self.num_nodes() {
            let (x, z) = self.coords(n);
            s.push_str(&format!("{},{},{}\n", crate::output::fmt_f64(x), crate::output::fmt_f64(z), self.tags[n].as_str()));
        }
        s
    }
}

fn material_at(z: f64, (lo, hi): (f64, f64)) -> Material {
    if z > lo && z < hi {
        Material::Silicon
    } else {
        Material::Oxide
    }
}

pub fn build_grids(spec: &DeviceSpec) -> Mesh2D {
    let length = spec.device_length();
    let thickness = spec.device_thickness();
    let x = Grid1D::uniform(length, spec.nx);
    let z = Grid1D::uniform(thickness, spec.nz);
    let si_bounds = (spec.oxide_thickness, spec.oxide_thickness + spec.silicon_thickness);
    let (gate_lo, gate_hi) = spec.gate_range();
    let eps = 1e-9 * x.h;

    let mut tags = Vec::with_capacity(x.len() * z.len());
    for (i, &xi) in x.nodes.iter().enumerate() {
        for j in 0..z.len() {
            let tag = if i == 0 {
                BoundaryTag::ContactSource
            } else if i == spec.nx {
                BoundaryTag::ContactDrain
            } else if j == 0 || j == spec.nz {
                if xi >= gate_lo - eps && xi <= gate_hi + eps {
                    BoundaryTag::Gate
                } else {
                    BoundaryTag::Neumann
                }
            } else {
                BoundaryTag::Interior
            };
            tags.push(tag);
        }
    }

    let nzp = z.len();
    let mut elements = Vec::with_capacity(2 * spec.nx * spec.nz);
    for i in 0..spec.nx {
        for j in 0..spec.nz {
            let a = i * nzp + j;
            let b = (i + 1) * nzp + j;
            let c = (i + 1) * nzp + j + 1;
            let d = i * nzp + j + 1;
            let zc_lower = z.nodes[j] + (z.nodes[j + 1] - z.nodes[j]) / 3.0;
            let zc_upper = z.nodes[j] + 2.0 * (z.nodes[j + 1] - z.nodes[j]) / 3.0;
            elements.push(Triangle {
                nodes: [a, b, c],
                material: material_at(zc_lower, si_bounds),
            });
            elements.push(Triangle {
                nodes: [a, c, d],
                material: material_at(zc_upper, si_bounds),
            });
        }
    }

    Mesh2D {
        x,
        z,
        tags,
        elements,
        si_bounds,
    }
}
