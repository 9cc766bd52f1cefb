//! Procedural toy-blade mesh: a tapered, twisted beam discretized with a
//! structured hexahedral lattice split into linear tetrahedra (one
//! integration point per tet). The bottom slab is the elastic "foot" and
//! carries the Dirichlet clamping; one lateral face set carries the
//! pressure load.

use crate::container::Container;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    Foot,
    Airfoil,
}

/// Boundary triangle with outward normal.
#[derive(Clone, Debug)]
pub struct Facet {
    pub nodes: [usize; 3],
    pub normal: [f64; 3],
    pub area: f64,
}

/// Geometric and discretization parameters of the toy blade.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BladeParams {
    /// Span of the blade along z.
    pub length: f64,
    pub root_chord: f64,
    pub tip_chord: f64,
    /// Section thickness as a fraction of the local chord.
    pub thickness_ratio: f64,
    /// Twist of the tip section relative to the root, in radians.
    pub twist: f64,
    /// Lattice divisions along (chord, thickness, span).
    pub divisions: [usize; 3],
    /// Fraction of the span, measured from the root, tagged as the foot.
    pub foot_fraction: f64,
    /// Distance from the root plane to the rotation axis. The axis is the
    /// line through (0, 0, -axis_offset) directed along x.
    pub axis_offset: f64,
    pub density: f64,
}

impl Default for BladeParams {
    fn default() -> Self {
        BladeParams {
            length: 80.0,
            root_chord: 30.0,
            tip_chord: 20.0,
            thickness_ratio: 0.3,
            twist: 0.3,
            divisions: [4, 2, 12],
            foot_fraction: 0.18,
            axis_offset: 240.0,
            density: 8.4e-9,
        }
    }
}

impl BladeParams {
    pub fn validate(&self) -> Result<()> {
        if self.divisions.iter().any(|&d| d < 1) {
            return Err(Error::InvalidInput("all divisions must be >= 1".into()));
        }
        if self.root_chord <= 0.0 || self.tip_chord <= 0.0 {
            return Err(Error::InvalidInput("taper must be positive".into()));
        }
        if self.length <= 0.0 || self.thickness_ratio <= 0.0 {
            return Err(Error::InvalidInput("degenerate blade dimensions".into()));
        }
        Ok(())
    }

    /// Perpendicular vector from the rotation axis to `pos`.
    pub fn radial_vector(&self, pos: &[f64; 3]) -> [f64; 3] {
        // Axis through (0,0,-axis_offset) along x: strip the x component.
        [0.0, pos[1], pos[2] + self.axis_offset]
    }
}

/// The discrete domain: nodes, tets, boundary facets and the one-point
/// quadrature table.
#[derive(Clone, Debug)]
pub struct Mesh {
    pub nodes: Vec<[f64; 3]>,
    pub tets: Vec<[usize; 4]>,
    pub surface_facets: Vec<Facet>,
    /// Indices into `surface_facets`.
    pub pressure_facets: Vec<usize>,
    /// Node index -> prescribed displacement.
    pub dirichlet_nodes: Vec<(usize, [f64; 3])>,
    pub ip_positions: Vec<[f64; 3]>,
    /// One weight per tet, equal to its volume.
    pub ip_weights: Vec<f64>,
    pub region: Vec<Region>,
}

pub fn tet_volume(a: &[f64; 3], b: &[f64; 3], c: &[f64; 3], d: &[f64; 3]) -> f64 {
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let w = [d[0] - a[0], d[1] - a[1], d[2] - a[2]];
    (u[0] * (v[1] * w[2] - v[2] * w[1]) - u[1] * (v[0] * w[2] - v[2] * w[0])
        + u[2] * (v[0] * w[1] - v[1] * w[0]))
        / 6.0
}

fn cross(u: &[f64; 3], v: &[f64; 3]) -> [f64; 3] {
    [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ]
}

impl Mesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_tets(&self) -> usize {
        self.tets.len()
    }

    pub fn n_dofs(&self) -> usize {
        3 * self.nodes.len()
    }

    pub fn total_volume(&self) -> f64 {
        self.ip_weights.iter().sum()
    }

    /// Lumped nodal volumes: each tet spreads its volume evenly over its
    /// four nodes. These weights define the discrete L²(Ω) inner product
    /// for nodal fields.
    pub fn node_volumes(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.nodes.len()];
        for (tet, &vol) in self.tets.iter().zip(self.ip_weights.iter()) {
            for &n in tet {
                w[n] += 0.25 * vol;
            }
        }
        w
    }

    /// Per-dof weights (node volume repeated for the 3 components).
    pub fn dof_weights(&self) -> Vec<f64> {
        let nv = self.node_volumes();
        let mut w = Vec::with_capacity(3 * nv.len());
        for v in nv {
            w.extend_from_slice(&[v, v, v]);
        }
        w
    }

    pub fn dirichlet_dofs(&self) -> Vec<usize> {
        let mut dofs = Vec::with_capacity(3 * self.dirichlet_nodes.len());
        for (n, _) in &self.dirichlet_nodes {
            dofs.extend_from_slice(&[3 * n, 3 * n + 1, 3 * n + 2]);
        }
        dofs
    }

    /// Nodes lying on the outer surface, in increasing index order.
    pub fn surface_nodes(&self) -> Vec<usize> {
        let mut seen = vec![false; self.nodes.len()];
        for f in &self.surface_facets {
            for &n in &f.nodes {
                seen[n] = true;
            }
        }
        (0..self.nodes.len()).filter(|&i| seen[i]).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut c = Container::new();
        let mut flat = Vec::with_capacity(3 * self.nodes.len());
        for n in &self.nodes {
            flat.extend_from_slice(n);
        }
        c.push_f64("nodes", &[self.nodes.len(), 3], flat);
        c.push_u64(
            "tets",
            &[self.tets.len(), 4],
            self.tets.iter().flatten().map(|&v| v as u64).collect(),
        );
        c.push_u64(
            "surface_facets",
            &[self.surface_facets.len(), 3],
            self.surface_facets
                .iter()
                .flat_map(|f| f.nodes.iter().map(|&v| v as u64))
                .collect(),
        );
        c.push_u64(
            "pressure_facets",
            &[self.pressure_facets.len()],
            self.pressure_facets.iter().map(|&v| v as u64).collect(),
        );
        c.push_u64(
            "dirichlet_nodes",
            &[self.dirichlet_nodes.len()],
            self.dirichlet_nodes.iter().map(|(n, _)| *n as u64).collect(),
        );
        c.push_f64(
            "dirichlet_values",
            &[self.dirichlet_nodes.len(), 3],
            self.dirichlet_nodes.iter().flat_map(|(_, v)| v.to_vec()).collect(),
        );
        let mut ips = Vec::with_capacity(3 * self.ip_positions.len());
        for p in &self.ip_positions {
            ips.extend_from_slice(p);
        }
        c.push_f64("ip_positions", &[self.ip_positions.len(), 3], ips);
        c.push_f64("ip_weights", &[self.ip_weights.len()], self.ip_weights.clone());
        c.push_u64(
            "region",
            &[self.region.len()],
            self.region
                .iter()
                .map(|r| match r {
                    Region::Foot => 0,
                    Region::Airfoil => 1,
                })
                .collect(),
        );
        c.write(path)
    }

    pub fn load(path: &Path) -> Result<Mesh> {
        let c = Container::read(path)?;
        let (_, flat) = c.f64("nodes")?;
        let nodes: Vec<[f64; 3]> = flat.chunks_exact(3).map(|v| [v[0], v[1], v[2]]).collect();
        let tets: Vec<[usize; 4]> = c
            .u64("tets")?
            .1
            .chunks_exact(4)
            .map(|v| [v[0] as usize, v[1] as usize, v[2] as usize, v[3] as usize])
            .collect();
        let facet_nodes: Vec<[usize; 3]> = c
            .u64("surface_facets")?
            .1
            .chunks_exact(3)
            .map(|v| [v[0] as usize, v[1] as usize, v[2] as usize])
            .collect();
        let pressure_facets = c.usizes("pressure_facets")?;
        let d_nodes = c.usizes("dirichlet_nodes")?;
        let (_, d_vals) = c.f64("dirichlet_values")?;
        let dirichlet_nodes = d_nodes
            .into_iter()
            .zip(d_vals.chunks_exact(3))
            .map(|(n, v)| (n, [v[0], v[1], v[2]]))
            .collect();
        let (_, ipf) = c.f64("ip_positions")?;
        let ip_positions = ipf.chunks_exact(3).map(|v| [v[0], v[1], v[2]]).collect();
        let ip_weights = c.f64("ip_weights")?.1.to_vec();
        let region = c
            .u64("region")?
            .1
            .iter()
            .map(|&v| if v == 0 { Region::Foot } else { Region::Airfoil })
            .collect();

        // Facet normals are recomputed from the geometry.
        let surface_facets = facet_nodes
            .into_iter()
            .map(|nds| facet_from_nodes(&nodes, nds))
            .collect();

        Ok(Mesh {
            nodes,
            tets,
            surface_facets,
            pressure_facets,
            dirichlet_nodes,
            ip_positions,
            ip_weights,
            region,
        })
    }
}

fn facet_from_nodes(nodes: &[[f64; 3]], nds: [usize; 3]) -> Facet {
    let a = nodes[nds[0]];
    let b = nodes[nds[1]];
    let c = nodes[nds[2]];
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let n = cross(&u, &v);
    let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    Facet {
        nodes: nds,
        normal: [n[0] / len, n[1] / len, n[2] / len],
        area: 0.5 * len,
    }
}

/// Six-tet split of a hexahedron around the main diagonal c000-c111. All
/// cells use the same diagonal directions so faces of neighbouring cells
/// triangulate identically.
const HEX_TETS: [[usize; 4]; 6] = [
    [0, 1, 3, 7],
    [0, 5, 1, 7],
    [0, 3, 2, 7],
    [0, 2, 6, 7],
    [0, 4, 5, 7],
    [0, 6, 4, 7],
];

/// Generates the structured toy-blade mesh.
pub fn generate_toy_blade_mesh(params: &BladeParams) -> Result<Mesh> {
    params.validate()?;
    let [nx, ny, nz] = params.divisions;

    let node_id = |i: usize, j: usize, k: usize| (k * (ny + 1) + j) * (nx + 1) + i;
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
    for k in 0..=nz {
        let zeta = k as f64 / nz as f64;
        let z = zeta * params.length;
        let chord = params.root_chord + (params.tip_chord - params.root_chord) * zeta;
        let thick = params.thickness_ratio * chord;
        let phi = params.twist * zeta;
        let (sin_p, cos_p) = phi.sin_cos();
        for j in 0..=ny {
            let yc = (j as f64 / ny as f64 - 0.5) * thick;
            for i in 0..=nx {
                let xc = (i as f64 / nx as f64 - 0.5) * chord;
                nodes.push([xc * cos_p - yc * sin_p, xc * sin_p + yc * cos_p, z]);
            }
        }
    }

    let mut tets = Vec::with_capacity(6 * nx * ny * nz);
    let mut region = Vec::with_capacity(6 * nx * ny * nz);
    let mut bad_cells = Vec::new();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                // Corner order c000,c100,c010,c110,c001,c101,c011,c111 with
                // (di,dj,dk) bit pattern: index = di + 2*dj + 4*dk.
                let corners = [
                    node_id(i, j, k),
                    node_id(i + 1, j, k),
                    node_id(i, j + 1, k),
                    node_id(i + 1, j + 1, k),
                    node_id(i, j, k + 1),
                    node_id(i + 1, j, k + 1),
                    node_id(i, j + 1, k + 1),
                    node_id(i + 1, j + 1, k + 1),
                ];
                for t in &HEX_TETS {
                    let tet = [corners[t[0]], corners[t[1]], corners[t[2]], corners[t[3]]];
                    let vol = tet_volume(&nodes[tet[0]], &nodes[tet[1]], &nodes[tet[2]], &nodes[tet[3]]);
                    if vol <= 0.0 {
                        bad_cells.push((i, j, k, vol));
                    }
                    tets.push(tet);
                    let z_mid = (nodes[tet[0]][2] + nodes[tet[1]][2] + nodes[tet[2]][2] + nodes[tet[3]][2]) / 4.0;
                    region.push(if z_mid <= params.foot_fraction * params.length {
                        Region::Foot
                    } else {
                        Region::Airfoil
                    });
                }
            }
        }
    }
    if !bad_cells.is_empty() {
        let mut msg = format!(
            "taper/twist produce {} inverted tetrahedra; offending cells (i,j,k,volume):",
            bad_cells.len()
        );
        for (i, j, k, v) in bad_cells.iter().take(10) {
            msg.push_str(&format!(" ({i},{j},{k},{v:.3e})"));
        }
        return Err(Error::Mesh(msg));
    }

    // Boundary facets: faces seen exactly once, oriented outward.
    let mut face_count: HashMap<[usize; 3], ([usize; 3], usize)> = HashMap::new();
    const TET_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]];
    for (e, tet) in tets.iter().enumerate() {
        for f in &TET_FACES {
            let tri = [tet[f[0]], tet[f[1]], tet[f[2]]];
            let mut key = tri;
            key.sort_unstable();
            face_count
                .entry(key)
                .and_modify(|(_, c)| *c += 1)
                .or_insert((tri, 1));
            let _ = e;
        }
    }
    let mut surface_facets: Vec<Facet> = Vec::new();
    let mut boundary: Vec<([usize; 3], [usize; 3])> = face_count
        .into_iter()
        .filter(|(_, (_, c))| *c == 1)
        .map(|(key, (tri, _))| (key, tri))
        .collect();
    boundary.sort_unstable_by_key(|(key, _)| *key);
    for (_, tri) in boundary {
        surface_facets.push(facet_from_nodes(&nodes, tri));
    }

    // Pressure facets: the +y lateral face of the lattice, airfoil part only.
    let mut on_plus_y = vec![false; nodes.len()];
    for k in 0..=nz {
        for i in 0..=nx {
            on_plus_y[node_id(i, ny, k)] = true;
        }
    }
    let z_foot = params.foot_fraction * params.length;
    let mut pressure_facets = Vec::new();
    for (fi, f) in surface_facets.iter().enumerate() {
        if f.nodes.iter().all(|&n| on_plus_y[n]) {
            let zc = f.nodes.iter().map(|&n| nodes[n][2]).sum::<f64>() / 3.0;
            if zc > z_foot {
                pressure_facets.push(fi);
            }
        }
    }

    // Clamp the bottom slab face.
    let dirichlet_nodes = (0..nodes.len())
        .filter(|&n| nodes[n][2] == 0.0)
        .map(|n| (n, [0.0; 3]))
        .collect();

    let mut ip_positions = Vec::with_capacity(tets.len());
    let mut ip_weights = Vec::with_capacity(tets.len());
    for tet in &tets {
        let mut c = [0.0; 3];
        for &n in tet {
            for d in 0..3 {
                c[d] += nodes[n][d] / 4.0;
            }
        }
        ip_positions.push(c);
        ip_weights.push(tet_volume(
            &nodes[tet[0]],
            &nodes[tet[1]],
            &nodes[tet[2]],
            &nodes[tet[3]],
        ));
    }

    Ok(Mesh {
        nodes,
        tets,
        surface_facets,
        pressure_facets,
        dirichlet_nodes,
        ip_positions,
        ip_weights,
        region,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_params(divisions: [usize; 3], twist: f64) -> BladeParams {
        BladeParams {
            length: 1.0,
            root_chord: 1.0,
            tip_chord: 1.0,
            thickness_ratio: 1.0,
            twist,
            divisions,
            foot_fraction: 0.2,
            axis_offset: 2.0,
            density: 1.0,
        }
    }

    #[test]
    fn single_cell_box() {
        let m = generate_toy_blade_mesh(&unit_params([1, 1, 1], 0.0)).unwrap();
        assert_eq!(m.n_nodes(), 8);
        assert_eq!(m.n_tets(), 6);
        assert_relative_eq!(m.total_volume(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn lattice_node_count() {
        let m = generate_toy_blade_mesh(&unit_params([3, 2, 4], 0.0)).unwrap();
        assert_eq!(m.n_nodes(), 4 * 3 * 5);
        assert_eq!(m.n_tets(), 6 * 3 * 2 * 4);
    }

    #[test]
    fn twisted_volume_agrees_under_refinement() {
        // Twist of pi/2 over a unit length; coarse and fine volumes within 1%.
        let coarse = generate_toy_blade_mesh(&unit_params([4, 4, 8], std::f64::consts::FRAC_PI_2)).unwrap();
        let fine = generate_toy_blade_mesh(&unit_params([8, 8, 16], std::f64::consts::FRAC_PI_2)).unwrap();
        let rel = (coarse.total_volume() - fine.total_volume()).abs() / fine.total_volume();
        assert!(rel < 0.01, "relative volume mismatch {rel}");
    }

    #[test]
    fn positive_volumes_and_ip_weight_sum() {
        let m = generate_toy_blade_mesh(&BladeParams::default()).unwrap();
        for (tet, &w) in m.tets.iter().zip(&m.ip_weights) {
            assert!(w > 0.0, "tet {tet:?} has non-positive volume");
        }
        let total: f64 = m.ip_weights.iter().sum();
        assert_relative_eq!(total, m.total_volume(), max_relative = 1e-10);
    }

    #[test]
    fn surface_tiles_boundary_exactly_once() {
        let m = generate_toy_blade_mesh(&unit_params([2, 2, 3], 0.4)).unwrap();
        // Each tet face is either interior (shared by two tets) or a surface
        // facet; count both ways.
        let mut counts: HashMap<[usize; 3], usize> = HashMap::new();
        const TET_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]];
        for tet in &m.tets {
            for f in &TET_FACES {
                let mut key = [tet[f[0]], tet[f[1]], tet[f[2]]];
                key.sort_unstable();
                *counts.entry(key).or_insert(0) += 1;
            }
        }
        let boundary_faces = counts.values().filter(|&&c| c == 1).count();
        assert_eq!(boundary_faces, m.surface_facets.len());
        for f in &m.surface_facets {
            let mut key = f.nodes;
            key.sort_unstable();
            assert_eq!(counts[&key], 1);
        }
    }

    #[test]
    fn outward_normals() {
        let m = generate_toy_blade_mesh(&unit_params([2, 2, 3], 0.0)).unwrap();
        let center = [0.0, 0.0, 0.5];
        for f in &m.surface_facets {
            let mut c = [0.0; 3];
            for &n in &f.nodes {
                for d in 0..3 {
                    c[d] += m.nodes[n][d] / 3.0;
                }
            }
            let dot: f64 = (0..3).map(|d| f.normal[d] * (c[d] - center[d])).sum();
            assert!(dot > 0.0, "normal points inward at facet {:?}", f.nodes);
        }
    }

    #[test]
    fn degenerate_twist_is_rejected_with_cells() {
        // An extreme twist inverts cells on a coarse lattice.
        let err = generate_toy_blade_mesh(&unit_params([1, 1, 1], 3.0)).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("inverted"), "unexpected message: {msg}");
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mesh.bin");
        let m = generate_toy_blade_mesh(&BladeParams::default()).unwrap();
        m.save(&path).unwrap();
        let back = Mesh::load(&path).unwrap();
        assert_eq!(m.nodes.len(), back.nodes.len());
        assert_eq!(m.tets, back.tets);
        assert_eq!(m.pressure_facets, back.pressure_facets);
        assert_eq!(m.ip_weights, back.ip_weights);
        assert_eq!(
            m.nodes.iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>(),
            back.nodes.iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}
