//! Quasi-static high-fidelity solver: Newton iterations over the 11 steps
//! of the loading cycle, with linear tetrahedra, one-point quadrature and
//! the crystal-plasticity update of [`crate::material`] at every
//! integration point. The foot region is purely elastic.
//!
//! Element loops run in parallel over fixed-order chunks and are reduced
//! in element order, so results are bit-identical for any worker count.

use crate::container::Container;
use crate::error::{Error, Result};
use crate::loading::CycleSchedule;
use crate::material::{
    self, integrate_point, material_tangent, MaterialParams, MaterialState, PointUpdate,
    SlipSystem, T_REFERENCE,
};
use crate::mesh::{BladeParams, Mesh, Region};
use crate::tensor::SymTensor;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::path::Path;

/// Per-element constant shape-function gradients.
#[derive(Clone, Debug)]
pub struct ElementGeometry {
    pub grads: [[f64; 3]; 4],
    pub volume: f64,
}

pub fn element_geometry(mesh: &Mesh, e: usize) -> Result<ElementGeometry> {
    let tet = mesh.tets[e];
    let a = mesh.nodes[tet[0]];
    let mut jac = nalgebra::Matrix3::<f64>::zeros();
    for k in 0..3 {
        let p = mesh.nodes[tet[k + 1]];
        for d in 0..3 {
            jac[(d, k)] = p[d] - a[d];
        }
    }
    let det = jac.determinant();
    let volume = det / 6.0;
    if volume <= 0.0 {
        return Err(Error::Mesh(format!("tet {e} has non-positive volume")));
    }
    let inv = jac
        .try_inverse()
        .ok_or_else(|| Error::Mesh(format!("tet {e} is degenerate")))?;
    // Gradients of the barycentric shape functions: rows of J^{-1} for the
    // three vertex functions, and minus their sum for the first vertex.
    let mut grads = [[0.0; 3]; 4];
    for k in 0..3 {
        for d in 0..3 {
            grads[k + 1][d] = inv[(k, d)];
            grads[0][d] -= inv[(k, d)];
        }
    }
    Ok(ElementGeometry { grads, volume })
}

/// Small strain at the element integration point (Mandel components).
pub fn element_strain(geom: &ElementGeometry, u_e: &[[f64; 3]; 4]) -> SymTensor {
    let mut g = [[0.0; 3]; 3]; // displacement gradient
    for a in 0..4 {
        for i in 0..3 {
            for j in 0..3 {
                g[i][j] += u_e[a][i] * geom.grads[a][j];
            }
        }
    }
    SymTensor::from_components(
        g[0][0],
        g[1][1],
        g[2][2],
        0.5 * (g[1][2] + g[2][1]),
        0.5 * (g[0][2] + g[2][0]),
        0.5 * (g[0][1] + g[1][0]),
    )
}

/// Nodal forces `vol · Bᵀ σ` of one element.
fn internal_force(geom: &ElementGeometry, stress: &SymTensor) -> [[f64; 3]; 4] {
    let s = &stress.0;
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    let mut f = [[0.0; 3]; 4];
    for a in 0..4 {
        let g = &geom.grads[a];
        f[a][0] = geom.volume * (s[0] * g[0] + inv_sqrt2 * (s[4] * g[2] + s[5] * g[1]));
        f[a][1] = geom.volume * (s[1] * g[1] + inv_sqrt2 * (s[3] * g[2] + s[5] * g[0]));
        f[a][2] = geom.volume * (s[2] * g[2] + inv_sqrt2 * (s[3] * g[1] + s[4] * g[0]));
    }
    f
}

/// Local volumic centrifugal force `ρ · Ω_max² · ω(t)² · r_⊥(ξ)`; the force
/// scales with the square of the rotation speed.
pub fn centrifugal_force(
    pos: &[f64; 3],
    t: f64,
    schedule: &CycleSchedule,
    blade: &BladeParams,
) -> [f64; 3] {
    let w = schedule.omega_at(t);
    let factor = blade.density * schedule.rotation_max.powi(2) * w * w;
    let r = blade.radial_vector(pos);
    [factor * r[0], factor * r[1], factor * r[2]]
}

/// Discretization context shared by all solves on one mesh.
pub struct FemContext<'a> {
    pub mesh: &'a Mesh,
    pub blade: &'a BladeParams,
    pub material: &'a MaterialParams,
    pub systems: Vec<SlipSystem>,
    pub geometries: Vec<ElementGeometry>,
}

impl<'a> FemContext<'a> {
    pub fn new(mesh: &'a Mesh, blade: &'a BladeParams, material: &'a MaterialParams) -> Result<Self> {
        let geometries = (0..mesh.n_tets())
            .map(|e| element_geometry(mesh, e))
            .collect::<Result<Vec<_>>>()?;
        Ok(FemContext {
            mesh,
            blade,
            material,
            systems: material::build_slip_systems(),
            geometries,
        })
    }

    fn gather(&self, u: &[f64], e: usize) -> [[f64; 3]; 4] {
        let tet = self.mesh.tets[e];
        let mut u_e = [[0.0; 3]; 4];
        for (a, &n) in tet.iter().enumerate() {
            u_e[a] = [u[3 * n], u[3 * n + 1], u[3 * n + 2]];
        }
        u_e
    }

    /// Mean of the four nodal temperatures (the P1 value at the centroid).
    fn ip_temperature(&self, nodal: &[f64], e: usize) -> f64 {
        let tet = self.mesh.tets[e];
        0.25 * (nodal[tet[0]] + nodal[tet[1]] + nodal[tet[2]] + nodal[tet[3]])
    }

    /// Spatial parts of the external loads: the centrifugal nodal force at
    /// full rotation speed and the pressure nodal force at unit pressure.
    /// The load at time `t` is `ω(t)²·centrifugal + p(t)·pressure`.
    pub fn external_force_components(&self, schedule: &CycleSchedule) -> (Vec<f64>, Vec<f64>) {
        let mut cent = vec![0.0; self.mesh.n_dofs()];
        let factor = self.blade.density * schedule.rotation_max * schedule.rotation_max;
        for (e, geom) in self.geometries.iter().enumerate() {
            let r = self.blade.radial_vector(&self.mesh.ip_positions[e]);
            let share = geom.volume / 4.0;
            for &n in &self.mesh.tets[e] {
                for d in 0..3 {
                    cent[3 * n + d] += share * factor * r[d];
                }
            }
        }
        let mut press = vec![0.0; self.mesh.n_dofs()];
        for &fi in &self.mesh.pressure_facets {
            let facet = &self.mesh.surface_facets[fi];
            let share = facet.area / 3.0;
            for &n in &facet.nodes {
                for d in 0..3 {
                    press[3 * n + d] -= share * facet.normal[d];
                }
            }
        }
        (cent, press)
    }

    /// External load vector at time `t`: centrifugal body force plus the
    /// pressure traction on the loaded facets.
    pub fn external_force(&self, t: f64, schedule: &CycleSchedule) -> Vec<f64> {
        let (cent, press) = self.external_force_components(schedule);
        let w = schedule.omega_at(t);
        let p = schedule.pressure_at(t);
        cent.iter()
            .zip(&press)
            .map(|(c, pr)| w * w * c + p * pr)
            .collect()
    }

    /// One constitutive evaluation per element.
    #[allow(clippy::too_many_arguments)]
    fn evaluate_elements(
        &self,
        u: &[f64],
        u_old: &[f64],
        states: &[MaterialState],
        temps_new: &[f64],
        temps_old: &[f64],
        dt: f64,
    ) -> Result<Vec<PointUpdate>> {
        (0..self.mesh.n_tets())
            .into_par_iter()
            .map(|e| {
                let geom = &self.geometries[e];
                let eps_new = element_strain(geom, &self.gather(u, e));
                let t_new = self.ip_temperature(temps_new, e);
                match self.mesh.region[e] {
                    Region::Foot => {
                        // Elastic region: Hooke on the thermal-corrected strain.
                        let p = self.material.at(t_new)?;
                        let mut eps_el = eps_new;
                        let th = p.alpha * (t_new - T_REFERENCE);
                        for k in 0..3 {
                            eps_el.0[k] -= th;
                        }
                        Ok(PointUpdate {
                            stress: material::apply_stiffness(&p.stiffness, &eps_el),
                            state: states[e].clone(),
                            dissipation: 0.0,
                            sinh_caps: 0,
                        })
                    }
                    Region::Airfoil => {
                        let eps_old = element_strain(geom, &self.gather(u_old, e));
                        let t_old = self.ip_temperature(temps_old, e);
                        integrate_point(
                            &states[e],
                            &eps_old,
                            &eps_new,
                            t_old,
                            t_new,
                            dt,
                            self.material,
                            &self.systems,
                        )
                        .map_err(|err| match err {
                            Error::Material { message, .. } => Error::Material { ip: e, message },
                            other => other,
                        })
                    }
                }
            })
            .collect()
    }

    fn scatter_internal(&self, updates: &[PointUpdate]) -> Vec<f64> {
        let mut f = vec![0.0; self.mesh.n_dofs()];
        for (e, up) in updates.iter().enumerate() {
            let fe = internal_force(&self.geometries[e], &up.stress);
            for (a, &n) in self.mesh.tets[e].iter().enumerate() {
                for d in 0..3 {
                    f[3 * n + d] += fe[a][d];
                }
            }
        }
        f
    }

    /// Tangent stiffness from forward-difference material tangents.
    #[allow(clippy::too_many_arguments)]
    fn assemble_tangent(
        &self,
        u: &[f64],
        u_old: &[f64],
        states: &[MaterialState],
        temps_new: &[f64],
        temps_old: &[f64],
        dt: f64,
        base: &[PointUpdate],
    ) -> Result<DMatrix<f64>> {
        let tangents: Vec<[[f64; 6]; 6]> = (0..self.mesh.n_tets())
            .into_par_iter()
            .map(|e| {
                let t_new = self.ip_temperature(temps_new, e);
                match self.mesh.region[e] {
                    Region::Foot => Ok(self.material.at(t_new)?.stiffness),
                    Region::Airfoil => {
                        let geom = &self.geometries[e];
                        let eps_new = element_strain(geom, &self.gather(u, e));
                        let eps_old = element_strain(geom, &self.gather(u_old, e));
                        material_tangent(
                            &states[e],
                            &eps_old,
                            &eps_new,
                            self.ip_temperature(temps_old, e),
                            t_new,
                            dt,
                            self.material,
                            &self.systems,
                            &base[e],
                        )
                    }
                }
            })
            .collect::<Result<Vec<_>>>()?;

        let n = self.mesh.n_dofs();
        let mut jac = DMatrix::<f64>::zeros(n, n);
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        for (e, d_mat) in tangents.iter().enumerate() {
            let geom = &self.geometries[e];
            // B matrix (6 Mandel rows, 12 columns).
            let mut b = [[0.0; 12]; 6];
            for a in 0..4 {
                let g = &geom.grads[a];
                b[0][3 * a] = g[0];
                b[1][3 * a + 1] = g[1];
                b[2][3 * a + 2] = g[2];
                b[3][3 * a + 1] = inv_sqrt2 * g[2];
                b[3][3 * a + 2] = inv_sqrt2 * g[1];
                b[4][3 * a] = inv_sqrt2 * g[2];
                b[4][3 * a + 2] = inv_sqrt2 * g[0];
                b[5][3 * a] = inv_sqrt2 * g[1];
                b[5][3 * a + 1] = inv_sqrt2 * g[0];
            }
            // K_e = vol · Bᵀ D B
            let mut db = [[0.0; 12]; 6];
            for i in 0..6 {
                for j in 0..12 {
                    let mut acc = 0.0;
                    for k in 0..6 {
                        acc += d_mat[i][k] * b[k][j];
                    }
                    db[i][j] = acc;
                }
            }
            let tet = self.mesh.tets[e];
            for i in 0..12 {
                let gi = 3 * tet[i / 3] + i % 3;
                for j in 0..12 {
                    let gj = 3 * tet[j / 3] + j % 3;
                    let mut acc = 0.0;
                    for k in 0..6 {
                        acc += b[k][i] * db[k][j];
                    }
                    jac[(gi, gj)] += geom.volume * acc;
                }
            }
        }
        Ok(jac)
    }
}

/// Nodal temperature field at time `t`: `(1 − ω(t))·T0 + ω(t)·T_max`.
pub fn nodal_temperatures(t_max: &[f64], t: f64, schedule: &CycleSchedule) -> Vec<f64> {
    let w = schedule.omega_at(t);
    t_max
        .iter()
        .map(|&tm| (1.0 - w) * T_REFERENCE + w * tm)
        .collect()
}

/// Residual `f_int − f_ext` with the rows of constrained dofs replaced by
/// the constraint violation (zero when `u` satisfies the prescribed
/// displacements).
#[allow(clippy::too_many_arguments)]
pub fn assemble_residual(
    ctx: &FemContext,
    u: &[f64],
    u_old: &[f64],
    states: &[MaterialState],
    t_max: &[f64],
    t_prev: f64,
    t: f64,
    schedule: &CycleSchedule,
) -> Result<Vec<f64>> {
    let temps_new = nodal_temperatures(t_max, t, schedule);
    let temps_old = nodal_temperatures(t_max, t_prev, schedule);
    let dt = (t - t_prev).max(f64::MIN_POSITIVE);
    let updates = ctx.evaluate_elements(u, u_old, states, &temps_new, &temps_old, dt)?;
    let mut r = ctx.scatter_internal(&updates);
    let f_ext = ctx.external_force(t, schedule);
    for (ri, fi) in r.iter_mut().zip(f_ext.iter()) {
        *ri -= fi;
    }
    for &(n, value) in &ctx.mesh.dirichlet_nodes {
        for d in 0..3 {
            r[3 * n + d] = u[3 * n + d] - value[d];
        }
    }
    Ok(r)
}

/// Reaction forces (`f_int − f_ext`) at the constrained dofs.
#[allow(clippy::too_many_arguments)]
pub fn reaction_forces(
    ctx: &FemContext,
    u: &[f64],
    u_old: &[f64],
    states: &[MaterialState],
    t_max: &[f64],
    t_prev: f64,
    t: f64,
    schedule: &CycleSchedule,
) -> Result<Vec<(usize, [f64; 3])>> {
    let temps_new = nodal_temperatures(t_max, t, schedule);
    let temps_old = nodal_temperatures(t_max, t_prev, schedule);
    let dt = (t - t_prev).max(f64::MIN_POSITIVE);
    let updates = ctx.evaluate_elements(u, u_old, states, &temps_new, &temps_old, dt)?;
    let f_int = ctx.scatter_internal(&updates);
    let f_ext = ctx.external_force(t, schedule);
    Ok(ctx
        .mesh
        .dirichlet_nodes
        .iter()
        .map(|&(n, _)| {
            (
                n,
                [
                    f_int[3 * n] - f_ext[3 * n],
                    f_int[3 * n + 1] - f_ext[3 * n + 1],
                    f_int[3 * n + 2] - f_ext[3 * n + 2],
                ],
            )
        })
        .collect())
}

#[derive(Clone, Copy, Debug)]
pub struct NewtonOptions {
    pub tol_rel: f64,
    pub tol_abs: f64,
    pub max_iterations: usize,
    pub max_bisections: u32,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol_rel: 1e-8,
            tol_abs: 1e-12,
            max_iterations: 25,
            max_bisections: 3,
        }
    }
}

/// Converged history of one loading cycle.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub omega: Vec<f64>,
    /// Nodal displacements at each grid point.
    pub displacements: Vec<Vec<f64>>,
    /// Stress at every integration point, at each grid point.
    pub stresses: Vec<Vec<SymTensor>>,
    /// Accumulated octahedral plastic strain at each grid point.
    pub p_cum: Vec<Vec<f64>>,
    /// Material state history at each grid point.
    pub states: Vec<Vec<MaterialState>>,
    pub sinh_caps: u64,
    pub newton_iterations: usize,
}

impl Trajectory {
    pub fn final_p_cum(&self) -> &[f64] {
        self.p_cum.last().unwrap()
    }

    pub fn stresses_at_max_speed(&self, schedule: &CycleSchedule) -> &[SymTensor] {
        &self.stresses[schedule.max_speed_step()]
    }

    pub fn displacement_at_max_speed(&self, schedule: &CycleSchedule) -> &[f64] {
        &self.displacements[schedule.max_speed_step()]
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let n_steps = self.times.len();
        let n_dofs = self.displacements[0].len();
        let n_ips = self.p_cum[0].len();
        let mut c = Container::new();
        c.push_f64("times", &[n_steps], self.times.clone());
        c.push_f64("omega", &[n_steps], self.omega.clone());
        c.push_f64(
            "displacements",
            &[n_steps, n_dofs],
            self.displacements.iter().flatten().copied().collect(),
        );
        c.push_f64(
            "stresses",
            &[n_steps, n_ips, 6],
            self.stresses
                .iter()
                .flat_map(|per_ip| per_ip.iter().flat_map(|s| s.0))
                .collect(),
        );
        c.push_f64(
            "p_cum",
            &[n_steps, n_ips],
            self.p_cum.iter().flatten().copied().collect(),
        );
        c.push_u64("sinh_caps", &[1], vec![self.sinh_caps]);
        c.push_u64("newton_iterations", &[1], vec![self.newton_iterations as u64]);
        c.write(path)
    }

    /// Loads the persisted subset of a trajectory (the per-step material
    /// states live only in memory).
    pub fn load(path: &Path) -> Result<Trajectory> {
        let c = Container::read(path)?;
        let (shape_u, flat_u) = c.f64("displacements")?;
        let n_dofs = shape_u[1];
        let displacements = flat_u.chunks_exact(n_dofs).map(|s| s.to_vec()).collect();
        let (shape_s, flat_s) = c.f64("stresses")?;
        let n_ips = shape_s[1];
        let stresses = flat_s
            .chunks_exact(6 * n_ips)
            .map(|step| {
                step.chunks_exact(6)
                    .map(|v| SymTensor([v[0], v[1], v[2], v[3], v[4], v[5]]))
                    .collect()
            })
            .collect();
        let (_, flat_p) = c.f64("p_cum")?;
        let p_cum = flat_p.chunks_exact(n_ips).map(|s| s.to_vec()).collect();
        Ok(Trajectory {
            times: c.f64("times")?.1.to_vec(),
            omega: c.f64("omega")?.1.to_vec(),
            displacements,
            stresses,
            p_cum,
            states: Vec::new(),
            sinh_caps: c.u64("sinh_caps")?.1[0],
            newton_iterations: c.u64("newton_iterations")?.1[0] as usize,
        })
    }
}

struct StepSolution {
    u: Vec<f64>,
    updates: Vec<PointUpdate>,
    iterations: usize,
}

/// Solves one implicit step from `(t_prev, u, states)` to `t`.
#[allow(clippy::too_many_arguments)]
fn solve_step(
    ctx: &FemContext,
    step_index: usize,
    u_start: &[f64],
    states: &[MaterialState],
    t_max: &[f64],
    t_prev: f64,
    t: f64,
    schedule: &CycleSchedule,
    options: &NewtonOptions,
) -> Result<StepSolution> {
    let temps_new = nodal_temperatures(t_max, t, schedule);
    let temps_old = nodal_temperatures(t_max, t_prev, schedule);
    let dt = t - t_prev;
    let f_ext = ctx.external_force(t, schedule);
    let free: Vec<bool> = {
        let mut free = vec![true; ctx.mesh.n_dofs()];
        for d in ctx.mesh.dirichlet_dofs() {
            free[d] = false;
        }
        free
    };

    let norm_free = |r: &[f64]| -> f64 {
        r.iter()
            .zip(&free)
            .filter(|(_, &f)| f)
            .map(|(v, _)| v * v)
            .sum::<f64>()
            .sqrt()
    };

    let mut u = u_start.to_vec();
    let mut updates = ctx.evaluate_elements(&u, u_start, states, &temps_new, &temps_old, dt)?;
    let residual = |updates: &[PointUpdate]| -> Vec<f64> {
        let mut r = ctx.scatter_internal(updates);
        for (ri, fi) in r.iter_mut().zip(f_ext.iter()) {
            *ri -= fi;
        }
        r
    };
    let mut r = residual(&updates);
    let r0 = norm_free(&r);
    // Relative to the larger of the initial step residual and the applied
    // load, with an absolute floor; plateau steps start almost converged.
    let f_ext_norm = f_ext.iter().map(|v| v * v).sum::<f64>().sqrt();
    let tol = (options.tol_rel * r0.max(f_ext_norm)).max(options.tol_abs * f_ext_norm.max(1.0));

    let mut rnorm = r0;
    for iter in 0..options.max_iterations {
        if rnorm <= tol {
            return Ok(StepSolution {
                u,
                updates,
                iterations: iter,
            });
        }
        let mut jac = ctx.assemble_tangent(&u, u_start, states, &temps_new, &temps_old, dt, &updates)?;
        // Eliminate constrained dofs.
        let n = ctx.mesh.n_dofs();
        for d in ctx.mesh.dirichlet_dofs() {
            for k in 0..n {
                jac[(d, k)] = 0.0;
                jac[(k, d)] = 0.0;
            }
            jac[(d, d)] = 1.0;
        }
        let mut rhs = DVector::<f64>::from_iterator(n, r.iter().map(|v| -v));
        for d in ctx.mesh.dirichlet_dofs() {
            rhs[d] = 0.0;
        }
        let delta = jac
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Linalg(format!("singular tangent at step {step_index}")))?;

        // Backtracking on the free-dof residual norm.
        let mut step = 1.0;
        let mut advanced = false;
        for _ in 0..6 {
            let u_trial: Vec<f64> = u
                .iter()
                .enumerate()
                .map(|(k, &v)| v + step * delta[k])
                .collect();
            let trial_updates =
                ctx.evaluate_elements(&u_trial, u_start, states, &temps_new, &temps_old, dt)?;
            let r_trial = residual(&trial_updates);
            let n_trial = norm_free(&r_trial);
            if n_trial < rnorm || step <= 1.0 / 32.0 {
                u = u_trial;
                updates = trial_updates;
                r = r_trial;
                rnorm = n_trial;
                advanced = true;
                break;
            }
            step *= 0.5;
        }
        if !advanced {
            break;
        }
    }

    if rnorm <= tol {
        return Ok(StepSolution {
            u,
            updates,
            iterations: options.max_iterations,
        });
    }
    Err(Error::NonConvergence {
        step: step_index,
        iterations: options.max_iterations,
        residual: rnorm,
    })
}

/// Advances from `t_prev` to `t`, bisecting the interval on Newton failure.
#[allow(clippy::too_many_arguments)]
fn advance(
    ctx: &FemContext,
    step_index: usize,
    u: &mut Vec<f64>,
    states: &mut Vec<MaterialState>,
    t_max: &[f64],
    t_prev: f64,
    t: f64,
    schedule: &CycleSchedule,
    options: &NewtonOptions,
    level: u32,
    caps: &mut u64,
    iterations: &mut usize,
) -> Result<()> {
    match solve_step(ctx, step_index, u, states, t_max, t_prev, t, schedule, options) {
        Ok(sol) => {
            *u = sol.u;
            *iterations += sol.iterations;
            for (st, up) in states.iter_mut().zip(sol.updates.iter()) {
                *st = up.state.clone();
                *caps += up.sinh_caps as u64;
            }
            Ok(())
        }
        Err(err) => {
            // Only Newton failures are retried on a bisected step.
            if level >= options.max_bisections || !matches!(err, Error::NonConvergence { .. }) {
                return Err(err);
            }
            let t_mid = 0.5 * (t_prev + t);
            advance(
                ctx, step_index, u, states, t_max, t_prev, t_mid, schedule, options,
                level + 1, caps, iterations,
            )?;
            advance(
                ctx, step_index, u, states, t_max, t_mid, t, schedule, options,
                level + 1, caps, iterations,
            )
        }
    }
}

/// Runs the full loading cycle for one realized temperature field.
pub fn solve_cycle(
    ctx: &FemContext,
    t_max: &[f64],
    schedule: &CycleSchedule,
    options: &NewtonOptions,
) -> Result<Trajectory> {
    if t_max.len() != ctx.mesh.n_nodes() {
        return Err(Error::InvalidInput(
            "temperature field does not match the mesh".into(),
        ));
    }
    let n_ips = ctx.mesh.n_tets();
    let mut u = vec![0.0; ctx.mesh.n_dofs()];
    for &(n, v) in &ctx.mesh.dirichlet_nodes {
        u[3 * n] = v[0];
        u[3 * n + 1] = v[1];
        u[3 * n + 2] = v[2];
    }
    let mut states = vec![MaterialState::default(); n_ips];
    let mut caps = 0u64;
    let mut iterations = 0usize;

    let mut trajectory = Trajectory {
        times: vec![schedule.times[0]],
        omega: vec![schedule.omega[0]],
        displacements: vec![u.clone()],
        stresses: vec![vec![SymTensor::ZERO; n_ips]],
        p_cum: vec![vec![0.0; n_ips]],
        states: vec![states.clone()],
        sinh_caps: 0,
        newton_iterations: 0,
    };

    for k in 1..schedule.times.len() {
        let t_prev = schedule.times[k - 1];
        let t = schedule.times[k];
        advance(
            ctx, k, &mut u, &mut states, t_max, t_prev, t, schedule, options, 0, &mut caps,
            &mut iterations,
        )?;
        // Recorded stresses are re-evaluated at the committed displacement
        // (identical to the last accepted Newton evaluation).
        let temps = nodal_temperatures(t_max, t, schedule);
        let stresses: Vec<SymTensor> = (0..n_ips)
            .map(|e| {
                let geom = &ctx.geometries[e];
                let eps = element_strain(geom, &ctx.gather(&u, e));
                let t_ip = ctx.ip_temperature(&temps, e);
                let p = ctx.material.at(t_ip).expect("temperature in range");
                let mut eps_el = eps - states[e].plastic_strain;
                let th = p.alpha * (t_ip - T_REFERENCE);
                for c in 0..3 {
                    eps_el.0[c] -= th;
                }
                material::apply_stiffness(&p.stiffness, &eps_el)
            })
            .collect();
        trajectory.times.push(t);
        trajectory.omega.push(schedule.omega_at(t));
        trajectory.displacements.push(u.clone());
        trajectory.stresses.push(stresses);
        trajectory.p_cum.push(states.iter().map(|s| s.p_cum_oct).collect());
        trajectory.states.push(states.clone());
    }
    trajectory.sinh_caps = caps;
    trajectory.newton_iterations = iterations;
    Ok(trajectory)
}
