//! Stochastic model of the thermal loading.
//!
//! The maximum-rotation-speed temperature field is `T_ref + Υ₀·δT₀ +
//! Σ Υ_i·δT_i`: an analytic reference field projected onto the discrete
//! steady heat equation, a trailing-edge perturbation capped at 50 K, and
//! four Karhunen-Loève fluctuation modes built from a geodesic-distance
//! covariance on the outer surface and extended harmonically into the
//! bulk. All stored fields satisfy the discrete steady heat equation, so
//! any linear combination does too.

use crate::container::Container;
use crate::error::{Error, Result};
use crate::loading::CycleSchedule;
use crate::material::T_REFERENCE;
use crate::mesh::{BladeParams, Mesh};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::BinaryHeap;
use std::path::Path;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThermalConfig {
    /// Base level of the reference field in the foot region.
    pub t_base: f64,
    /// Airfoil heating amplitude of the reference field.
    pub t_amplitude: f64,
    /// Additional leading-edge heating.
    pub edge_boost: f64,
    /// Maximum value of the trailing-edge perturbation δT₀.
    pub bump_amplitude: f64,
    /// Geodesic radius of the δT₀ bump.
    pub bump_radius: f64,
    /// Correlation length d_G⁰ of the surface covariance. The value is a
    /// free modelling choice; the default is a quarter of the root chord.
    pub corr_length: f64,
    /// Surface standard deviation of the fluctuation field, in K.
    pub sigma_t: f64,
    pub n_modes: usize,
    pub t_melt: f64,
}

impl Default for ThermalConfig {
    fn default() -> Self {
        ThermalConfig {
            t_base: 820.0,
            t_amplitude: 260.0,
            edge_boost: 140.0,
            bump_amplitude: 50.0,
            bump_radius: 10.0,
            corr_length: 7.5,
            sigma_t: 15.0,
            n_modes: 4,
            t_melt: 1600.0,
        }
    }
}

/// P1 Laplacian with the sign structure of an M-matrix.
///
/// Positive off-diagonal couplings (produced by non-acute tetrahedra) are
/// removed and the diagonal is recomputed so row sums stay zero; harmonic
/// extensions through this operator obey the discrete maximum principle,
/// and the steady-heat invariant of the thermal model is checked against
/// this same operator.
pub struct HeatOperator {
    stiffness: DMatrix<f64>,
    is_boundary: Vec<bool>,
    interior: Vec<usize>,
    interior_lu: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl HeatOperator {
    pub fn new(mesh: &Mesh) -> Result<Self> {
        let n = mesh.n_nodes();
        let mut k = DMatrix::<f64>::zeros(n, n);
        for (e, tet) in mesh.tets.iter().enumerate() {
            let geom = crate::fem::element_geometry(mesh, e)?;
            for a in 0..4 {
                for b in 0..4 {
                    let dot: f64 = (0..3).map(|d| geom.grads[a][d] * geom.grads[b][d]).sum();
                    k[(tet[a], tet[b])] += geom.volume * dot;
                }
            }
        }
        // M-matrix filter: drop positive off-diagonals, rebuild the diagonal
        // from the row sums.
        for i in 0..n {
            k[(i, i)] = 0.0;
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && k[(i, j)] > 0.0 {
                    k[(i, j)] = 0.0;
                }
            }
        }
        for i in 0..n {
            let row_sum: f64 = (0..n).filter(|&j| j != i).map(|j| k[(i, j)]).sum();
            k[(i, i)] = -row_sum;
        }

        let mut is_boundary = vec![false; n];
        for f in &mesh.surface_facets {
            for &nd in &f.nodes {
                is_boundary[nd] = true;
            }
        }
        let interior: Vec<usize> = (0..n).filter(|&i| !is_boundary[i]).collect();
        let interior_lu = if interior.is_empty() {
            None
        } else {
            let m = interior.len();
            let mut kii = DMatrix::<f64>::zeros(m, m);
            for (a, &i) in interior.iter().enumerate() {
                for (b, &j) in interior.iter().enumerate() {
                    kii[(a, b)] = k[(i, j)];
                }
            }
            Some(kii.lu())
        };
        Ok(HeatOperator {
            stiffness: k,
            is_boundary,
            interior,
            interior_lu,
        })
    }

    /// Solves the steady heat equation with Dirichlet data given by the
    /// boundary entries of `field`; interior entries are overwritten.
    pub fn harmonic_extension(&self, field: &[f64]) -> Result<Vec<f64>> {
        let mut out = field.to_vec();
        let Some(lu) = &self.interior_lu else {
            return Ok(out);
        };
        let m = self.interior.len();
        let mut rhs = DVector::<f64>::zeros(m);
        for (a, &i) in self.interior.iter().enumerate() {
            let mut acc = 0.0;
            for (j, &bnd) in self.is_boundary.iter().enumerate() {
                if bnd {
                    acc -= self.stiffness[(i, j)] * field[j];
                }
            }
            rhs[a] = acc;
        }
        let sol = lu
            .solve(&rhs)
            .ok_or_else(|| Error::Linalg("singular interior Laplacian".into()))?;
        for (a, &i) in self.interior.iter().enumerate() {
            out[i] = sol[a];
        }
        Ok(out)
    }

    /// Maximum interior residual of `K·u`, relative to the operator and
    /// field scales.
    pub fn steady_heat_residual(&self, field: &[f64]) -> f64 {
        let n = field.len();
        let scale = (0..n)
            .map(|i| self.stiffness[(i, i)].abs())
            .fold(0.0_f64, f64::max)
            * field.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0_f64;
        for &i in &self.interior {
            let mut acc = 0.0;
            for j in 0..n {
                acc += self.stiffness[(i, j)] * field[j];
            }
            worst = worst.max(acc.abs());
        }
        worst / scale
    }
}

/// Shortest-path distances between all pairs of surface nodes, along the
/// surface edge graph.
pub fn surface_geodesic_matrix(mesh: &Mesh) -> Result<(Vec<usize>, DMatrix<f64>)> {
    let surface = mesh.surface_nodes();
    let n = surface.len();
    let local: std::collections::HashMap<usize, usize> = surface
        .iter()
        .enumerate()
        .map(|(a, &g)| (g, a))
        .collect();

    let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut seen = std::collections::HashSet::new();
    for f in &mesh.surface_facets {
        for (u, v) in [(0, 1), (1, 2), (2, 0)] {
            let (a, b) = (f.nodes[u], f.nodes[v]);
            let key = (a.min(b), a.max(b));
            if seen.insert(key) {
                let (pa, pb) = (mesh.nodes[a], mesh.nodes[b]);
                let len = ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2) + (pa[2] - pb[2]).powi(2)).sqrt();
                let (la, lb) = (local[&a], local[&b]);
                adjacency[la].push((lb, len));
                adjacency[lb].push((la, len));
            }
        }
    }

    #[derive(PartialEq)]
    struct Entry(f64, usize);
    impl Eq for Entry {}
    impl PartialOrd for Entry {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for Entry {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            other.0.total_cmp(&self.0) // min-heap
        }
    }

    let mut dist = DMatrix::<f64>::from_element(n, n, f64::INFINITY);
    for src in 0..n {
        let mut d = vec![f64::INFINITY; n];
        d[src] = 0.0;
        let mut heap = BinaryHeap::new();
        heap.push(Entry(0.0, src));
        while let Some(Entry(du, u)) = heap.pop() {
            if du > d[u] {
                continue;
            }
            for &(v, w) in &adjacency[u] {
                let alt = du + w;
                if alt < d[v] {
                    d[v] = alt;
                    heap.push(Entry(alt, v));
                }
            }
        }
        for (j, &dj) in d.iter().enumerate() {
            dist[(src, j)] = dj;
        }
    }

    if dist.iter().any(|v| v.is_infinite()) {
        let reachable = (0..n).filter(|&j| dist[(0, j)].is_finite()).count();
        return Err(Error::Mesh(format!(
            "surface graph is disconnected: component of node 0 has {reachable} of {n} nodes"
        )));
    }
    // Symmetrize exactly (Dijkstra is symmetric up to float associativity).
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (dist[(i, j)] + dist[(j, i)]);
            dist[(i, j)] = v;
            dist[(j, i)] = v;
        }
    }
    Ok((surface, dist))
}

/// Exponential covariance on the surface nodes: `σ_T² · exp(−d_G/d_G⁰)`.
pub fn surface_covariance(geodesic: &DMatrix<f64>, corr_length: f64, sigma_t: f64) -> DMatrix<f64> {
    let variance = sigma_t * sigma_t;
    geodesic.map(|d| variance * (-d / corr_length).exp())
}

/// Karhunen-Loève surface modes extended harmonically into the bulk.
/// Returns the bulk modes (scaled by √eigenvalue) and the eigenvalues, in
/// non-increasing order.
pub fn build_fluctuation_modes(
    mesh: &Mesh,
    heat: &HeatOperator,
    corr_length: f64,
    sigma_t: f64,
    n_modes: usize,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    if corr_length <= 0.0 {
        return Err(Error::InvalidInput("correlation length must be positive".into()));
    }
    let (surface, geo) = surface_geodesic_matrix(mesh)?;
    let cov = surface_covariance(&geo, corr_length, sigma_t);
    let eig = nalgebra::SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut modes = Vec::with_capacity(n_modes);
    let mut eigenvalues = Vec::with_capacity(n_modes);
    for &idx in order.iter().take(n_modes) {
        let lambda = eig.eigenvalues[idx];
        if lambda <= 0.0 {
            return Err(Error::Linalg(format!(
                "covariance eigenvalue {lambda:.3e} is not positive"
            )));
        }
        let scale = lambda.sqrt();
        let mut field = vec![0.0; mesh.n_nodes()];
        let column = eig.eigenvectors.column(idx);
        // Fix an overall sign so the decomposition is deterministic: make
        // the entry of largest magnitude positive.
        let mut anchor = 0;
        for (k, v) in column.iter().enumerate() {
            if v.abs() > column[anchor].abs() {
                anchor = k;
            }
        }
        let sign = if column[anchor] >= 0.0 { 1.0 } else { -1.0 };
        for (local, &global) in surface.iter().enumerate() {
            field[global] = sign * scale * column[local];
        }
        modes.push(heat.harmonic_extension(&field)?);
        eigenvalues.push(lambda);
    }
    Ok((modes, eigenvalues))
}

/// The trained stochastic temperature model.
pub struct ThermalModel {
    pub t_ref: Vec<f64>,
    pub delta_t0: Vec<f64>,
    pub modes: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub t0: f64,
    pub t_melt: f64,
    pub corr_length: f64,
    pub sigma_t: f64,
}

/// One realized thermal loading: the reduced coordinates and the
/// maximum-rotation-speed temperature field.
#[derive(Clone, Debug)]
pub struct ThermalSample {
    /// (Υ₀, Υ₁..Υ₄); Υ₀ ∈ {0, 1}.
    pub upsilon: Vec<f64>,
    pub t_max: Vec<f64>,
    /// Nodes where the realized field leaves [0, T_melt]; values are
    /// reported, never clamped.
    pub out_of_range: usize,
}

fn smoothstep(x: f64) -> f64 {
    let t = x.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

impl ThermalModel {
    /// Builds the full model: reference field, trailing-edge perturbation
    /// and fluctuation modes.
    pub fn build(mesh: &Mesh, blade: &BladeParams, config: &ThermalConfig) -> Result<ThermalModel> {
        let heat = HeatOperator::new(mesh)?;

        // Analytic reference field in untwisted section coordinates, then one
        // harmonic solve from its boundary trace so it satisfies the
        // discrete steady heat equation.
        let mut t_raw = vec![0.0; mesh.n_nodes()];
        for (n, p) in mesh.nodes.iter().enumerate() {
            let (chord_frac, _, span_frac) = blade_local_coords(blade, p);
            let ramp = smoothstep((span_frac - blade.foot_fraction) / 0.3);
            let leading = (-((chord_frac) / 0.35).powi(2)).exp();
            t_raw[n] = config.t_base + ramp * (config.t_amplitude + config.edge_boost * leading);
        }
        let t_ref = heat.harmonic_extension(&t_raw)?;

        // δT₀: geodesic Gaussian bump on the trailing-edge strip, extended
        // and rescaled to its configured maximum.
        let (surface, geo) = surface_geodesic_matrix(mesh)?;
        let mut best = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        for (local, &global) in surface.iter().enumerate() {
            let (chord_frac, _, span_frac) = blade_local_coords(blade, &mesh.nodes[global]);
            let score = chord_frac - (span_frac - 0.62).abs();
            if score > best_score {
                best_score = score;
                best = local;
            }
        }
        let mut bump = vec![0.0; mesh.n_nodes()];
        for (local, &global) in surface.iter().enumerate() {
            let d = geo[(best, local)];
            bump[global] = (-(d / config.bump_radius).powi(2)).exp();
        }
        let mut delta_t0 = heat.harmonic_extension(&bump)?;
        let max = delta_t0.iter().fold(0.0_f64, |m, &v| m.max(v));
        if max <= 0.0 {
            return Err(Error::InvalidInput("degenerate trailing-edge bump".into()));
        }
        let scale = config.bump_amplitude / max;
        for v in &mut delta_t0 {
            *v *= scale;
        }

        let (modes, eigenvalues) =
            build_fluctuation_modes(mesh, &heat, config.corr_length, config.sigma_t, config.n_modes)?;

        Ok(ThermalModel {
            t_ref,
            delta_t0,
            modes,
            eigenvalues,
            t0: T_REFERENCE,
            t_melt: config.t_melt,
            corr_length: config.corr_length,
            sigma_t: config.sigma_t,
        })
    }

    /// Realizes `T_max = T_ref + Υ₀·δT₀ + Σ Υ_i·δT_i`.
    pub fn sample_temperature(&self, upsilon: &[f64]) -> Result<ThermalSample> {
        if upsilon.len() != self.modes.len() + 1 {
            return Err(Error::InvalidInput(format!(
                "expected {} loading coordinates",
                self.modes.len() + 1
            )));
        }
        if upsilon[0] != 0.0 && upsilon[0] != 1.0 {
            return Err(Error::InvalidInput("Υ₀ must be 0 or 1".into()));
        }
        let mut t_max = self.t_ref.clone();
        if upsilon[0] == 1.0 {
            for (t, &d) in t_max.iter_mut().zip(&self.delta_t0) {
                *t += d;
            }
        }
        for (mode, &coef) in self.modes.iter().zip(&upsilon[1..]) {
            for (t, &m) in t_max.iter_mut().zip(mode) {
                *t += coef * m;
            }
        }
        let out_of_range = t_max
            .iter()
            .filter(|&&t| t < 0.0 || t > self.t_melt)
            .count();
        if out_of_range > 0 {
            log::warn!("{out_of_range} nodal temperatures outside [0, {}]", self.t_melt);
        }
        Ok(ThermalSample {
            upsilon: upsilon.to_vec(),
            t_max,
            out_of_range,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let n = self.t_ref.len();
        let mut c = Container::new();
        c.push_f64("t_ref", &[n], self.t_ref.clone());
        c.push_f64("delta_t0", &[n], self.delta_t0.clone());
        c.push_f64(
            "modes",
            &[self.modes.len(), n],
            self.modes.iter().flatten().copied().collect(),
        );
        c.push_f64("eigenvalues", &[self.eigenvalues.len()], self.eigenvalues.clone());
        c.push_scalar("t0", self.t0);
        c.push_scalar("t_melt", self.t_melt);
        c.push_scalar("corr_length", self.corr_length);
        c.push_scalar("sigma_t", self.sigma_t);
        c.write(path)
    }

    pub fn load(path: &Path) -> Result<ThermalModel> {
        let c = Container::read(path)?;
        let t_ref = c.f64("t_ref")?.1.to_vec();
        let n = t_ref.len();
        let (shape, flat) = c.f64("modes")?;
        let modes = flat.chunks_exact(n).map(|m| m.to_vec()).collect::<Vec<_>>();
        debug_assert_eq!(shape[0], modes.len());
        Ok(ThermalModel {
            t_ref,
            delta_t0: c.f64("delta_t0")?.1.to_vec(),
            modes,
            eigenvalues: c.f64("eigenvalues")?.1.to_vec(),
            t0: c.scalar("t0")?,
            t_melt: c.scalar("t_melt")?,
            corr_length: c.scalar("corr_length")?,
            sigma_t: c.scalar("sigma_t")?,
        })
    }
}

/// Untwisted local coordinates of a point: chord fraction in [-0.5, 0.5],
/// thickness fraction, span fraction.
pub fn blade_local_coords(blade: &BladeParams, p: &[f64; 3]) -> (f64, f64, f64) {
    let span_frac = p[2] / blade.length;
    let chord = blade.root_chord + (blade.tip_chord - blade.root_chord) * span_frac;
    let thick = blade.thickness_ratio * chord;
    let phi = blade.twist * span_frac;
    let (sin_p, cos_p) = phi.sin_cos();
    let xc = p[0] * cos_p + p[1] * sin_p;
    let yc = -p[0] * sin_p + p[1] * cos_p;
    (xc / chord, yc / thick, span_frac)
}

/// Nodal temperature field at time `t` for a realized sample,
/// `(1−ω(t))·T₀ + ω(t)·T_max`.
pub fn thermal_at_time(sample: &ThermalSample, t: f64, schedule: &CycleSchedule) -> Vec<f64> {
    crate::fem::nodal_temperatures(&sample.t_max, t, schedule)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_toy_blade_mesh;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn test_blade() -> BladeParams {
        BladeParams {
            length: 40.0,
            root_chord: 16.0,
            tip_chord: 12.0,
            thickness_ratio: 0.4,
            twist: 0.2,
            divisions: [3, 2, 6],
            foot_fraction: 0.2,
            axis_offset: 120.0,
            density: 8.4e-9,
        }
    }

    fn test_config() -> ThermalConfig {
        ThermalConfig {
            bump_radius: 6.0,
            corr_length: 4.0,
            ..ThermalConfig::default()
        }
    }

    #[test]
    fn geodesic_matrix_is_a_metric_on_the_surface() {
        let mesh = generate_toy_blade_mesh(&test_blade()).unwrap();
        let (surface, d) = surface_geodesic_matrix(&mesh).unwrap();
        let n = surface.len();
        for i in 0..n {
            assert_eq!(d[(i, i)], 0.0);
            for j in 0..n {
                assert_eq!(d[(i, j)], d[(j, i)]);
            }
        }
        // Adjacent surface nodes are at edge length.
        let f = &mesh.surface_facets[0];
        let (a, b) = (f.nodes[0], f.nodes[1]);
        let (la, lb) = (
            surface.iter().position(|&g| g == a).unwrap(),
            surface.iter().position(|&g| g == b).unwrap(),
        );
        let pa = mesh.nodes[a];
        let pb = mesh.nodes[b];
        let edge = ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2) + (pa[2] - pb[2]).powi(2)).sqrt();
        assert_relative_eq!(d[(la, lb)], edge, max_relative = 1e-12);
        // Triangle inequality on sampled triples.
        for (i, j, k) in [(0, n / 3, 2 * n / 3), (1, n / 2, n - 1), (2, n / 4, n - 2)] {
            assert!(d[(i, k)] <= d[(i, j)] + d[(j, k)] + 1e-12);
        }
        // Graph distance dominates the Euclidean distance but stays within
        // a lattice factor of it on the (locally rectangular) surface.
        let mut checked = 0;
        for i in (0..n).step_by(7) {
            for j in (0..n).step_by(11) {
                if i == j {
                    continue;
                }
                let (pi, pj) = (mesh.nodes[surface[i]], mesh.nodes[surface[j]]);
                let euclid = ((pi[0] - pj[0]).powi(2) + (pi[1] - pj[1]).powi(2) + (pi[2] - pj[2]).powi(2)).sqrt();
                assert!(d[(i, j)] >= euclid - 1e-12);
                checked += 1;
            }
        }
        assert!(checked > 10);
    }

    #[test]
    fn planar_patch_graph_distance_close_to_euclidean() {
        // On a flat rectangular lattice patch the shortest path is at most
        // 1.5x the Euclidean distance (axis steps plus cell diagonals).
        let blade = BladeParams {
            twist: 0.0,
            tip_chord: 16.0,
            divisions: [4, 1, 8],
            ..test_blade()
        };
        let mesh = generate_toy_blade_mesh(&blade).unwrap();
        let (surface, d) = surface_geodesic_matrix(&mesh).unwrap();
        // Restrict to nodes on the y = +t/2 face (a flat rectangle here).
        let face: Vec<usize> = surface
            .iter()
            .enumerate()
            .filter(|(_, &g)| {
                let (_, yf, _) = blade_local_coords(&blade, &mesh.nodes[g]);
                yf > 0.49
            })
            .map(|(l, _)| l)
            .collect();
        for &i in &face {
            for &j in &face {
                if i == j {
                    continue;
                }
                let (pi, pj) = (mesh.nodes[surface[i]], mesh.nodes[surface[j]]);
                let euclid = ((pi[0] - pj[0]).powi(2) + (pi[1] - pj[1]).powi(2) + (pi[2] - pj[2]).powi(2)).sqrt();
                assert!(d[(i, j)] >= euclid - 1e-12);
                assert!(
                    d[(i, j)] <= 1.5 * euclid + 1e-12,
                    "path {} vs euclid {}",
                    d[(i, j)],
                    euclid
                );
            }
        }
    }

    #[test]
    fn covariance_diagonal_and_mode_ordering() {
        let mesh = generate_toy_blade_mesh(&test_blade()).unwrap();
        let heat = HeatOperator::new(&mesh).unwrap();
        let (_, geo) = surface_geodesic_matrix(&mesh).unwrap();
        let cov = surface_covariance(&geo, 4.0, 15.0);
        for i in 0..cov.nrows() {
            assert_relative_eq!(cov[(i, i)], 225.0, max_relative = 1e-12);
            for j in 0..cov.ncols() {
                assert_eq!(cov[(i, j)], cov[(j, i)]);
            }
        }
        let (modes, eigenvalues) = build_fluctuation_modes(&mesh, &heat, 4.0, 15.0, 4).unwrap();
        assert_eq!(modes.len(), 4);
        for w in eigenvalues.windows(2) {
            assert!(w[0] >= w[1]);
        }
        for &l in &eigenvalues {
            assert!(l >= -1e-10);
        }
    }

    #[test]
    fn modes_are_eigenvectors_and_obey_the_maximum_principle() {
        let mesh = generate_toy_blade_mesh(&test_blade()).unwrap();
        let heat = HeatOperator::new(&mesh).unwrap();
        let (surface, geo) = surface_geodesic_matrix(&mesh).unwrap();
        let cov = surface_covariance(&geo, 4.0, 15.0);
        let (modes, eigenvalues) = build_fluctuation_modes(&mesh, &heat, 4.0, 15.0, 4).unwrap();
        for (mode, &lambda) in modes.iter().zip(&eigenvalues) {
            // Surface restriction is an eigenvector of the covariance.
            let v = DVector::from_iterator(surface.len(), surface.iter().map(|&g| mode[g]));
            let retained = &cov * &v - &v * lambda;
            assert!(
                retained.norm() <= 1e-8 * lambda * v.norm().max(1.0),
                "eigen residual {}",
                retained.norm()
            );
            // Interior values inside the boundary range.
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &g in &surface {
                lo = lo.min(mode[g]);
                hi = hi.max(mode[g]);
            }
            let mut is_boundary = vec![false; mesh.n_nodes()];
            for &g in &surface {
                is_boundary[g] = true;
            }
            for (n, &value) in mode.iter().enumerate() {
                if !is_boundary[n] {
                    assert!(
                        value >= lo - 1e-10 && value <= hi + 1e-10,
                        "interior value {value} outside [{lo}, {hi}]"
                    );
                }
            }
            // Steady heat equation holds in the interior.
            assert!(heat.steady_heat_residual(mode) <= 1e-8);
        }
    }

    #[test]
    fn harmonic_extension_is_linear() {
        let mesh = generate_toy_blade_mesh(&test_blade()).unwrap();
        let heat = HeatOperator::new(&mesh).unwrap();
        let n = mesh.n_nodes();
        let a: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.11).cos()).collect();
        let ea = heat.harmonic_extension(&a).unwrap();
        let eb = heat.harmonic_extension(&b).unwrap();
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 2.0 * x - 0.5 * y).collect();
        let esum = heat.harmonic_extension(&sum).unwrap();
        for i in 0..n {
            assert_abs_diff_eq!(esum[i], 2.0 * ea[i] - 0.5 * eb[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn model_fields_satisfy_the_heat_equation_and_bump_cap() {
        let blade = test_blade();
        let mesh = generate_toy_blade_mesh(&blade).unwrap();
        let model = ThermalModel::build(&mesh, &blade, &test_config()).unwrap();
        let heat = HeatOperator::new(&mesh).unwrap();
        assert!(heat.steady_heat_residual(&model.t_ref) <= 1e-8);
        assert!(heat.steady_heat_residual(&model.delta_t0) <= 1e-8);
        for mode in &model.modes {
            assert!(heat.steady_heat_residual(mode) <= 1e-8);
        }
        let max = model.delta_t0.iter().fold(0.0_f64, |m, &v| m.max(v));
        assert_abs_diff_eq!(max, 50.0, epsilon = 1e-10);
    }

    #[test]
    fn sampling_is_the_stated_linear_combination() {
        let blade = test_blade();
        let mesh = generate_toy_blade_mesh(&blade).unwrap();
        let model = ThermalModel::build(&mesh, &blade, &test_config()).unwrap();

        let zero = model.sample_temperature(&[0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(zero.t_max, model.t_ref);

        let bumped = model.sample_temperature(&[1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        for ((t, r), d) in bumped.t_max.iter().zip(&model.t_ref).zip(&model.delta_t0) {
            assert_abs_diff_eq!(*t, r + d, epsilon = 1e-12);
        }

        // Linearity in the Gaussian part.
        let u1 = [0.0, 0.4, -1.2, 0.0, 0.7];
        let u2 = [0.0, -0.9, 0.3, 1.5, 0.0];
        let s1 = model.sample_temperature(&u1).unwrap();
        let s2 = model.sample_temperature(&u2).unwrap();
        let sum: Vec<f64> = u1.iter().zip(&u2).map(|(a, b)| a + b).collect();
        let s12 = model.sample_temperature(&sum).unwrap();
        for i in 0..mesh.n_nodes() {
            assert_abs_diff_eq!(
                s1.t_max[i] + s2.t_max[i] - model.t_ref[i],
                s12.t_max[i],
                epsilon = 1e-9
            );
        }

        // Υ₀ outside {0,1} is rejected.
        assert!(model.sample_temperature(&[0.5, 0.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn blend_matches_schedule_endpoints() {
        let blade = test_blade();
        let mesh = generate_toy_blade_mesh(&blade).unwrap();
        let model = ThermalModel::build(&mesh, &blade, &test_config()).unwrap();
        let sample = model.sample_temperature(&[1.0, 0.3, -0.2, 0.9, 0.1]).unwrap();
        let schedule = CycleSchedule::standard(110.0, 700.0, 0.0, 0.5);
        let at0 = thermal_at_time(&sample, 0.0, &schedule);
        assert!(at0.iter().all(|&t| t == T_REFERENCE));
        let at_plateau = thermal_at_time(&sample, schedule.times[4], &schedule);
        for (a, b) in at_plateau.iter().zip(&sample.t_max) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
        let at_end = thermal_at_time(&sample, schedule.cycle_duration(), &schedule);
        assert!(at_end.iter().all(|&t| t == T_REFERENCE));
    }

    #[test]
    fn empirical_covariance_matches_truncated_model() {
        let blade = test_blade();
        let mesh = generate_toy_blade_mesh(&blade).unwrap();
        let model = ThermalModel::build(&mesh, &blade, &test_config()).unwrap();
        let surface = mesh.surface_nodes();
        let ns = surface.len();

        // Truncated covariance Σ δT_i δT_iᵀ on the surface nodes.
        let mut truth = DMatrix::<f64>::zeros(ns, ns);
        for mode in &model.modes {
            let v = DVector::from_iterator(ns, surface.iter().map(|&g| mode[g]));
            truth += &v * v.transpose();
        }

        // 10_000 samples with Υ₀ = 0, via Box-Muller on a seeded generator.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        let mut empirical = DMatrix::<f64>::zeros(ns, ns);
        let n_draws = 10_000;
        for _ in 0..n_draws {
            let mut ups = vec![0.0; 5];
            for i in 1..5 {
                let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                let u2: f64 = rng.gen_range(0.0..1.0);
                ups[i] = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
            }
            let sample = model.sample_temperature(&ups).unwrap();
            let dev = DVector::from_iterator(ns, surface.iter().map(|&g| sample.t_max[g] - model.t_ref[g]));
            empirical += &dev * dev.transpose();
        }
        empirical /= n_draws as f64;
        let rel = (&empirical - &truth).norm() / truth.norm();
        assert!(rel <= 0.05, "empirical covariance off by {rel:.3}");
    }

    #[test]
    fn save_load_roundtrip() {
        let blade = test_blade();
        let mesh = generate_toy_blade_mesh(&blade).unwrap();
        let model = ThermalModel::build(&mesh, &blade, &test_config()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("thermal.bin");
        model.save(&path).unwrap();
        let back = ThermalModel::load(&path).unwrap();
        assert_eq!(model.t_ref, back.t_ref);
        assert_eq!(model.delta_t0, back.delta_t0);
        assert_eq!(model.modes, back.modes);
        assert_eq!(model.t_melt, back.t_melt);
    }
}
