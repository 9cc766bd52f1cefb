//! Local hyper-reduced order models: training (snapshot-POD of the primal
//! and dual fields, ECM reduced quadrature, reduced external loads) and
//! the online Galerkin-Newton solve with constitutive calls restricted to
//! the reduced-integration domain.

use crate::container::Container;
use crate::ecm::{ecm_quadrature, ReducedQuadrature};
use crate::error::{Error, Result};
use crate::fem::{element_strain, FemContext, NewtonOptions, Trajectory};
use crate::gappy::GappySurrogate;
use crate::loading::CycleSchedule;
use crate::material::{integrate_point, material_tangent, MaterialState, PointUpdate, T_REFERENCE};
use crate::mesh::Region;
use crate::pod::{snapshot_pod, ReducedBasis};
use crate::tensor::SymTensor;
use nalgebra::{DMatrix, DVector};
use std::path::Path;

/// Names of the dual variables carried by every local ROM: the octahedral
/// accumulated plastic strain and the six stress components (Mandel
/// order).
pub const DUAL_NAMES: [&str; 7] = ["p_cum", "s11", "s22", "s33", "s23", "s13", "s12"];

#[derive(Clone, Copy, Debug)]
pub struct RomTolerances {
    pub primal_pod: f64,
    pub dual_pod: f64,
    pub ecm: f64,
}

impl Default for RomTolerances {
    fn default() -> Self {
        RomTolerances {
            primal_pod: 1e-8,
            dual_pod: 1e-4,
            ecm: 5e-4,
        }
    }
}

/// A trained local reduced order model.
pub struct LocalRom {
    pub cluster: usize,
    pub primal: ReducedBasis,
    /// Dual bases aligned with [`DUAL_NAMES`].
    pub duals: Vec<ReducedBasis>,
    pub quadrature: ReducedQuadrature,
    /// Gappy surrogates aligned with [`DUAL_NAMES`], attached after their
    /// training stage.
    pub gappy: Vec<Option<GappySurrogate>>,
    pub tolerances: RomTolerances,
}

/// Extracts the dual-variable snapshot of one trajectory.
pub fn dual_snapshot(trajectory: &Trajectory, variable: usize, schedule: &CycleSchedule) -> Vec<f64> {
    if variable == 0 {
        trajectory.final_p_cum().to_vec()
    } else {
        trajectory
            .stresses_at_max_speed(schedule)
            .iter()
            .map(|s| s.0[variable - 1])
            .collect()
    }
}

/// Strain of each primal mode at each integration point.
fn mode_strains(ctx: &FemContext, basis: &ReducedBasis) -> Vec<Vec<SymTensor>> {
    basis
        .modes
        .iter()
        .map(|mode| {
            (0..ctx.mesh.n_tets())
                .map(|e| {
                    let tet = ctx.mesh.tets[e];
                    let mut u_e = [[0.0; 3]; 4];
                    for (a, &n) in tet.iter().enumerate() {
                        u_e[a] = [mode[3 * n], mode[3 * n + 1], mode[3 * n + 2]];
                    }
                    element_strain(&ctx.geometries[e], &u_e)
                })
                .collect()
        })
        .collect()
}

/// Trains a local ROM from the trajectories selected for one cluster.
pub fn train_local_rom(
    ctx: &FemContext,
    schedule: &CycleSchedule,
    trajectories: &[&Trajectory],
    tolerances: &RomTolerances,
    cluster: usize,
) -> Result<LocalRom> {
    if trajectories.is_empty() {
        return Err(Error::InvalidInput("no snapshots for ROM training".into()));
    }
    let dof_weights = ctx.mesh.dof_weights();
    let ip_weights = &ctx.mesh.ip_weights;

    // Primal basis from all non-initial time steps.
    let mut primal_snapshots: Vec<Vec<f64>> = Vec::new();
    for traj in trajectories {
        for step in 1..traj.displacements.len() {
            primal_snapshots.push(traj.displacements[step].clone());
        }
    }
    let primal = snapshot_pod(&primal_snapshots, tolerances.primal_pod, &dof_weights);
    if primal.is_empty() {
        return Err(Error::InvalidInput(
            "primal snapshots are numerically zero; cannot train a ROM".into(),
        ));
    }

    // Dual bases: one snapshot per trajectory per variable, taken at the
    // time step where the variable is used as a quantity of interest.
    let mut duals = Vec::with_capacity(DUAL_NAMES.len());
    for variable in 0..DUAL_NAMES.len() {
        let snapshots: Vec<Vec<f64>> = trajectories
            .iter()
            .map(|t| dual_snapshot(t, variable, schedule))
            .collect();
        duals.push(snapshot_pod(&snapshots, tolerances.dual_pod, ip_weights));
    }

    // ECM training: internal-force integrands of every recorded stress
    // state against every primal mode, plus a constant integrand that pins
    // the total volume.
    let strains = mode_strains(ctx, &primal);
    let n_ips = ctx.mesh.n_tets();
    let n_states: usize = trajectories
        .iter()
        .map(|t| t.stresses.len() - 1)
        .sum();
    let n_rows = n_states * primal.n_modes() + 1;
    let mut integrands = DMatrix::<f64>::zeros(n_rows, n_ips);
    let mut row = 0;
    for traj in trajectories {
        for step in 1..traj.stresses.len() {
            let stress = &traj.stresses[step];
            for mode_strain in &strains {
                for p in 0..n_ips {
                    integrands[(row, p)] = stress[p].dot(&mode_strain[p]);
                }
                row += 1;
            }
        }
    }
    for p in 0..n_ips {
        integrands[(row, p)] = 1.0;
    }

    let quadrature = ecm_quadrature(&integrands, ip_weights, tolerances.ecm)?;

    Ok(LocalRom {
        cluster,
        primal,
        duals,
        quadrature,
        gappy: vec![None; DUAL_NAMES.len()],
        tolerances: *tolerances,
    })
}

/// Result of one hyper-reduced cycle solve.
#[derive(Clone, Debug)]
pub struct ReducedTrajectory {
    pub times: Vec<f64>,
    pub omega: Vec<f64>,
    /// Reduced coordinates at each grid point.
    pub coordinates: Vec<Vec<f64>>,
    /// Stress at the reduced points, at the maximum-rotation-speed step.
    pub rid_stress_at_max: Vec<SymTensor>,
    /// Accumulated octahedral plastic strain at the reduced points, at the
    /// end of the cycle.
    pub rid_p_cum_final: Vec<f64>,
    pub newton_iterations: usize,
}

impl ReducedTrajectory {
    /// Full primal field at a grid point.
    pub fn displacement(&self, rom: &LocalRom, step: usize) -> Vec<f64> {
        rom.primal.reconstruct(&self.coordinates[step])
    }

    /// Reduced-point values of a dual variable, for the Gappy stage.
    pub fn rid_dual_values(&self, variable: usize) -> Vec<f64> {
        if variable == 0 {
            self.rid_p_cum_final.clone()
        } else {
            self.rid_stress_at_max.iter().map(|s| s.0[variable - 1]).collect()
        }
    }
}

struct RidPoint {
    element: usize,
    weight: f64,
    foot: bool,
}

/// Hyper-reduced Galerkin-Newton solve over the loading cycle.
pub fn reduced_solve(
    rom: &LocalRom,
    ctx: &FemContext,
    t_max: &[f64],
    schedule: &CycleSchedule,
    options: &NewtonOptions,
) -> Result<ReducedTrajectory> {
    let n_modes = rom.primal.n_modes();
    let rid: Vec<RidPoint> = rom
        .quadrature
        .indices
        .iter()
        .zip(&rom.quadrature.weights)
        .map(|(&element, &weight)| RidPoint {
            element,
            weight,
            foot: ctx.mesh.region[element] == Region::Foot,
        })
        .collect();

    // Mode strains at the reduced points only.
    let strains: Vec<Vec<SymTensor>> = rom
        .primal
        .modes
        .iter()
        .map(|mode| {
            rid.iter()
                .map(|p| {
                    let tet = ctx.mesh.tets[p.element];
                    let mut u_e = [[0.0; 3]; 4];
                    for (a, &n) in tet.iter().enumerate() {
                        u_e[a] = [mode[3 * n], mode[3 * n + 1], mode[3 * n + 2]];
                    }
                    element_strain(&ctx.geometries[p.element], &u_e)
                })
                .collect()
        })
        .collect();

    // Reduced external loads, exact (full quadrature), precomputed once.
    let (cent_unit, press_unit) = ctx.external_force_components(schedule);
    let cent_red: Vec<f64> = rom
        .primal
        .modes
        .iter()
        .map(|m| m.iter().zip(&cent_unit).map(|(a, b)| a * b).sum())
        .collect();
    let press_red: Vec<f64> = rom
        .primal
        .modes
        .iter()
        .map(|m| m.iter().zip(&press_unit).map(|(a, b)| a * b).sum())
        .collect();

    let ip_temp = |temps: &[f64], element: usize| -> f64 {
        let tet = ctx.mesh.tets[element];
        0.25 * (temps[tet[0]] + temps[tet[1]] + temps[tet[2]] + temps[tet[3]])
    };
    let strain_at = |q: &[f64], p: usize| -> SymTensor {
        let mut eps = SymTensor::ZERO;
        for (i, qi) in q.iter().enumerate() {
            eps += strains[i][p] * *qi;
        }
        eps
    };

    let mut q = vec![0.0; n_modes];
    let mut states: Vec<MaterialState> = vec![MaterialState::default(); rid.len()];
    let mut iterations = 0usize;

    let mut out = ReducedTrajectory {
        times: vec![schedule.times[0]],
        omega: vec![schedule.omega[0]],
        coordinates: vec![q.clone()],
        rid_stress_at_max: vec![SymTensor::ZERO; rid.len()],
        rid_p_cum_final: vec![0.0; rid.len()],
        newton_iterations: 0,
    };

    let max_step = schedule.max_speed_step();
    for k in 1..schedule.times.len() {
        let t_prev = schedule.times[k - 1];
        let t = schedule.times[k];
        let stresses = advance_reduced(
            rom, ctx, &rid, &strains, &cent_red, &press_red, &ip_temp, &strain_at, &mut q,
            &mut states, t_max, t_prev, t, schedule, options, 0, &mut iterations, k,
        )?;
        out.times.push(t);
        out.omega.push(schedule.omega_at(t));
        out.coordinates.push(q.clone());
        if k == max_step {
            out.rid_stress_at_max = stresses;
        }
    }
    out.rid_p_cum_final = states.iter().map(|s| s.p_cum_oct).collect();
    out.newton_iterations = iterations;
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn advance_reduced(
    rom: &LocalRom,
    ctx: &FemContext,
    rid: &[RidPoint],
    strains: &[Vec<SymTensor>],
    cent_red: &[f64],
    press_red: &[f64],
    ip_temp: &dyn Fn(&[f64], usize) -> f64,
    strain_at: &dyn Fn(&[f64], usize) -> SymTensor,
    q: &mut Vec<f64>,
    states: &mut Vec<MaterialState>,
    t_max: &[f64],
    t_prev: f64,
    t: f64,
    schedule: &CycleSchedule,
    options: &NewtonOptions,
    level: u32,
    iterations: &mut usize,
    step_index: usize,
) -> Result<Vec<SymTensor>> {
    match solve_reduced_step(
        rom, ctx, rid, strains, cent_red, press_red, ip_temp, strain_at, q, states, t_max,
        t_prev, t, schedule, options, iterations, step_index,
    ) {
        Ok(stresses) => Ok(stresses),
        Err(err) => {
            if level >= options.max_bisections || !matches!(err, Error::NonConvergence { .. }) {
                return Err(err);
            }
            let t_mid = 0.5 * (t_prev + t);
            advance_reduced(
                rom, ctx, rid, strains, cent_red, press_red, ip_temp, strain_at, q, states,
                t_max, t_prev, t_mid, schedule, options, level + 1, iterations, step_index,
            )?;
            advance_reduced(
                rom, ctx, rid, strains, cent_red, press_red, ip_temp, strain_at, q, states,
                t_max, t_mid, t, schedule, options, level + 1, iterations, step_index,
            )
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn solve_reduced_step(
    rom: &LocalRom,
    ctx: &FemContext,
    rid: &[RidPoint],
    strains: &[Vec<SymTensor>],
    cent_red: &[f64],
    press_red: &[f64],
    ip_temp: &dyn Fn(&[f64], usize) -> f64,
    strain_at: &dyn Fn(&[f64], usize) -> SymTensor,
    q: &mut Vec<f64>,
    states: &mut Vec<MaterialState>,
    t_max: &[f64],
    t_prev: f64,
    t: f64,
    schedule: &CycleSchedule,
    options: &NewtonOptions,
    iterations: &mut usize,
    step_index: usize,
) -> Result<Vec<SymTensor>> {
    let n_modes = rom.primal.n_modes();
    let temps_new = crate::fem::nodal_temperatures(t_max, t, schedule);
    let temps_old = crate::fem::nodal_temperatures(t_max, t_prev, schedule);
    let dt = t - t_prev;
    let w_t = schedule.omega_at(t);
    let p_t = schedule.pressure_at(t);
    let f_red: Vec<f64> = (0..n_modes)
        .map(|i| w_t * w_t * cent_red[i] + p_t * press_red[i])
        .collect();
    let f_norm = f_red.iter().map(|v| v * v).sum::<f64>().sqrt();

    let q_start = q.clone();
    let evaluate = |q_now: &[f64]| -> Result<Vec<PointUpdate>> {
        rid.iter()
            .enumerate()
            .map(|(p, point)| {
                let eps_new = strain_at(q_now, p);
                let t_new = ip_temp(&temps_new, point.element);
                if point.foot {
                    let params = ctx.material.at(t_new)?;
                    let mut eps_el = eps_new;
                    let th = params.alpha * (t_new - T_REFERENCE);
                    for c in 0..3 {
                        eps_el.0[c] -= th;
                    }
                    Ok(PointUpdate {
                        stress: crate::material::apply_stiffness(&params.stiffness, &eps_el),
                        state: states[p].clone(),
                        dissipation: 0.0,
                        sinh_caps: 0,
                    })
                } else {
                    let eps_old = strain_at(&q_start, p);
                    let t_old = ip_temp(&temps_old, point.element);
                    integrate_point(
                        &states[p],
                        &eps_old,
                        &eps_new,
                        t_old,
                        t_new,
                        dt,
                        ctx.material,
                        &ctx.systems,
                    )
                    .map_err(|err| match err {
                        Error::Material { message, .. } => Error::Material {
                            ip: point.element,
                            message,
                        },
                        other => other,
                    })
                }
            })
            .collect()
    };
    let residual_of = |updates: &[PointUpdate]| -> Vec<f64> {
        (0..n_modes)
            .map(|i| {
                let mut acc = 0.0;
                for (p, point) in rid.iter().enumerate() {
                    acc += point.weight * updates[p].stress.dot(&strains[i][p]);
                }
                acc - f_red[i]
            })
            .collect()
    };
    let norm = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>().sqrt();

    let mut updates = evaluate(q)?;
    let mut r = residual_of(&updates);
    let r0 = norm(&r);
    let tol = (options.tol_rel * r0.max(f_norm)).max(options.tol_abs * f_norm.max(1.0));
    let mut rnorm = r0;

    for _iter in 0..options.max_iterations {
        if rnorm <= tol {
            for (state, up) in states.iter_mut().zip(updates.iter()) {
                *state = up.state.clone();
            }
            return Ok(updates.iter().map(|u| u.stress).collect());
        }
        *iterations += 1;

        // Reduced tangent from forward-difference material tangents.
        let mut jac = DMatrix::<f64>::zeros(n_modes, n_modes);
        for (p, point) in rid.iter().enumerate() {
            let t_new = ip_temp(&temps_new, point.element);
            let d_mat = if point.foot {
                ctx.material.at(t_new)?.stiffness
            } else {
                let eps_new = strain_at(q, p);
                let eps_old = strain_at(&q_start, p);
                material_tangent(
                    &states[p],
                    &eps_old,
                    &eps_new,
                    ip_temp(&temps_old, point.element),
                    t_new,
                    dt,
                    ctx.material,
                    &ctx.systems,
                    &updates[p],
                )?
            };
            for i in 0..n_modes {
                // D : E_j then contract with E_i.
                for j in 0..n_modes {
                    let mut de = [0.0; 6];
                    for (row, de_row) in de.iter_mut().enumerate() {
                        let mut acc = 0.0;
                        for col in 0..6 {
                            acc += d_mat[row][col] * strains[j][p].0[col];
                        }
                        *de_row = acc;
                    }
                    let mut contraction = 0.0;
                    for c in 0..6 {
                        contraction += strains[i][p].0[c] * de[c];
                    }
                    jac[(i, j)] += point.weight * contraction;
                }
            }
        }

        let rhs = DVector::from_iterator(n_modes, r.iter().map(|v| -v));
        let delta = jac
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Linalg(format!("singular reduced tangent at step {step_index}")))?;

        let mut step = 1.0;
        loop {
            let q_trial: Vec<f64> = q.iter().zip(delta.iter()).map(|(a, d)| a + step * d).collect();
            let trial_updates = evaluate(&q_trial)?;
            let trial_r = residual_of(&trial_updates);
            let trial_norm = norm(&trial_r);
            if trial_norm < rnorm || step <= 1.0 / 32.0 {
                *q = q_trial;
                updates = trial_updates;
                r = trial_r;
                rnorm = trial_norm;
                break;
            }
            step *= 0.5;
        }
    }

    if rnorm <= tol {
        for (state, up) in states.iter_mut().zip(updates.iter()) {
            *state = up.state.clone();
        }
        return Ok(updates.iter().map(|u| u.stress).collect());
    }
    Err(Error::NonConvergence {
        step: step_index,
        iterations: options.max_iterations,
        residual: rnorm,
    })
}

fn push_basis(c: &mut Container, prefix: &str, basis: &ReducedBasis, field_len: usize) {
    c.push_f64(
        &format!("{prefix}_modes"),
        &[basis.n_modes(), field_len],
        basis.modes.iter().flatten().copied().collect(),
    );
    c.push_f64(
        &format!("{prefix}_eigenvalues"),
        &[basis.eigenvalues.len()],
        basis.eigenvalues.clone(),
    );
    c.push_scalar(&format!("{prefix}_tolerance"), basis.tolerance);
}

fn read_basis(c: &Container, prefix: &str) -> Result<ReducedBasis> {
    let (shape, flat) = c.f64(&format!("{prefix}_modes"))?;
    let len = if shape[0] == 0 { 0 } else { shape[1] };
    let modes = if len == 0 {
        Vec::new()
    } else {
        flat.chunks_exact(len).map(|m| m.to_vec()).collect()
    };
    Ok(ReducedBasis {
        modes,
        eigenvalues: c.f64(&format!("{prefix}_eigenvalues"))?.1.to_vec(),
        tolerance: c.scalar(&format!("{prefix}_tolerance"))?,
    })
}

impl LocalRom {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut c = Container::new();
        c.push_u64("cluster", &[1], vec![self.cluster as u64]);
        let n_dofs = self.primal.modes.first().map_or(0, |m| m.len());
        push_basis(&mut c, "primal", &self.primal, n_dofs);
        for (name, basis) in DUAL_NAMES.iter().zip(&self.duals) {
            let n_ips = basis.modes.first().map_or(0, |m| m.len());
            push_basis(&mut c, &format!("dual_{name}"), basis, n_ips);
        }
        c.push_u64(
            "rid_indices",
            &[self.quadrature.indices.len()],
            self.quadrature.indices.iter().map(|&v| v as u64).collect(),
        );
        c.push_f64(
            "rid_weights",
            &[self.quadrature.weights.len()],
            self.quadrature.weights.clone(),
        );
        c.push_scalar("rid_residual", self.quadrature.residual);
        c.push_u64("rid_converged", &[1], vec![self.quadrature.converged as u64]);
        c.push_scalar("tol_primal", self.tolerances.primal_pod);
        c.push_scalar("tol_dual", self.tolerances.dual_pod);
        c.push_scalar("tol_ecm", self.tolerances.ecm);
        for (name, surrogate) in DUAL_NAMES.iter().zip(&self.gappy) {
            if let Some(s) = surrogate {
                c.push_f64(
                    &format!("gappy_{name}_weights"),
                    &[s.weights.nrows(), s.weights.ncols()],
                    s.weights.iter().copied().collect(),
                );
                c.push_f64(
                    &format!("gappy_{name}_intercept"),
                    &[s.intercept.len()],
                    s.intercept.iter().copied().collect(),
                );
                c.push_f64(
                    &format!("gappy_{name}_meta"),
                    &[3],
                    vec![s.lambda, s.cv_r2, s.active_fraction],
                );
            }
        }
        c.write(path)
    }

    pub fn load(path: &Path) -> Result<LocalRom> {
        let c = Container::read(path)?;
        let cluster = c.u64("cluster")?.1[0] as usize;
        let primal = read_basis(&c, "primal")?;
        let mut duals = Vec::with_capacity(DUAL_NAMES.len());
        for name in DUAL_NAMES {
            duals.push(read_basis(&c, &format!("dual_{name}"))?);
        }
        let quadrature = ReducedQuadrature {
            indices: c.usizes("rid_indices")?,
            weights: c.f64("rid_weights")?.1.to_vec(),
            residual: c.scalar("rid_residual")?,
            converged: c.u64("rid_converged")?.1[0] != 0,
        };
        let mut gappy = Vec::with_capacity(DUAL_NAMES.len());
        for name in DUAL_NAMES {
            let key = format!("gappy_{name}_weights");
            if c.f64(&key).is_ok() {
                let (shape, flat) = c.f64(&key)?;
                // Stored in nalgebra's native column-major order.
                let weights = DMatrix::from_iterator(shape[0], shape[1], flat.iter().copied());
                let (_, intercept) = c.f64(&format!("gappy_{name}_intercept"))?;
                let (_, meta) = c.f64(&format!("gappy_{name}_meta"))?;
                gappy.push(Some(GappySurrogate {
                    weights,
                    intercept: DVector::from_column_slice(intercept),
                    lambda: meta[0],
                    cv_r2: meta[1],
                    active_fraction: meta[2],
                }));
            } else {
                gappy.push(None);
            }
        }
        Ok(LocalRom {
            cluster,
            primal,
            duals,
            quadrature,
            gappy,
            tolerances: RomTolerances {
                primal_pod: c.scalar("tol_primal")?,
                dual_pod: c.scalar("tol_dual")?,
                ecm: c.scalar("tol_ecm")?,
            },
        })
    }
}
