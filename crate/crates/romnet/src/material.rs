//! Local constitutive integrator for the monocrystal elasto-viscoplastic
//! model: cubic elasticity, 12 octahedral + 6 cubic slip systems with a
//! hyperbolic sine flow rule, kinematic hardening with static recovery and
//! exponential isotropic hardening. The update is a fully implicit backward
//! Euler step solved by a local Newton iteration on the slip increments of
//! the active systems.

use crate::error::{Error, Result};
use crate::tensor::SymTensor;
use serde::{Deserialize, Serialize};

pub const N_OCTAHEDRAL: usize = 12;
pub const N_CUBIC: usize = 6;
pub const N_SYSTEMS: usize = N_OCTAHEDRAL + N_CUBIC;

/// Reference temperature of the stress-free state, in kelvin.
pub const T_REFERENCE: f64 = 293.0;

/// Cap on the argument of sinh in the flow rule; beyond this the flow is so
/// fast that Newton pulls the stress back anyway, and exp would overflow.
pub const SINH_ARG_CAP: f64 = 50.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlipFamily {
    Octahedral,
    Cubic,
}

/// One slip system: unit plane normal, unit slip direction and the
/// orientation tensor `m = sym(l ⊗ n)`.
#[derive(Clone, Debug)]
pub struct SlipSystem {
    pub normal: [f64; 3],
    pub direction: [f64; 3],
    pub orientation: SymTensor,
    pub family: SlipFamily,
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let len = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / len, v[1] / len, v[2] / len]
}

/// Canonical FCC slip system set: 12 octahedral {111}<110> systems and
/// 6 cubic {100}<110> systems, in a fixed deterministic order.
pub fn build_slip_systems() -> Vec<SlipSystem> {
    let mut systems = Vec::with_capacity(N_SYSTEMS);
    let oct_normals: [[f64; 3]; 4] = [
        [1.0, 1.0, 1.0],
        [-1.0, 1.0, 1.0],
        [1.0, -1.0, 1.0],
        [1.0, 1.0, -1.0],
    ];
    // The six <110> directions, one canonical orientation each.
    let dirs: [[f64; 3]; 6] = [
        [1.0, 1.0, 0.0],
        [1.0, -1.0, 0.0],
        [1.0, 0.0, 1.0],
        [1.0, 0.0, -1.0],
        [0.0, 1.0, 1.0],
        [0.0, 1.0, -1.0],
    ];
    for n in &oct_normals {
        for l in &dirs {
            let dot = n[0] * l[0] + n[1] * l[1] + n[2] * l[2];
            if dot == 0.0 {
                let nn = normalize(*n);
                let ll = normalize(*l);
                systems.push(SlipSystem {
                    normal: nn,
                    direction: ll,
                    orientation: SymTensor::sym_dyad(&ll, &nn),
                    family: SlipFamily::Octahedral,
                });
            }
        }
    }
    let cube_normals: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for n in &cube_normals {
        for l in &dirs {
            let dot = n[0] * l[0] + n[1] * l[1] + n[2] * l[2];
            if dot == 0.0 {
                let nn = normalize(*n);
                let ll = normalize(*l);
                systems.push(SlipSystem {
                    normal: nn,
                    direction: ll,
                    orientation: SymTensor::sym_dyad(&ll, &nn),
                    family: SlipFamily::Cubic,
                });
            }
        }
    }
    debug_assert_eq!(systems.len(), N_SYSTEMS);
    systems
}

/// Resolved shear stress by Schmid's law, `τ = σ : m`.
pub fn resolved_shear_stress(stress: &SymTensor, system: &SlipSystem) -> f64 {
    stress.dot(&system.orientation)
}

/// Von Mises equivalent stress `√(3/2 s:s)` with `s` the deviator.
pub fn von_mises(stress: &SymTensor) -> f64 {
    let s = stress.deviator();
    (1.5 * s.dot(&s)).sqrt()
}

/// Temperature-keyed material coefficient: sorted (T, value) pairs with
/// linear interpolation. A single entry means a temperature-independent
/// coefficient.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(from = "TableSpec", into = "TableSpec")]
pub struct TempTable {
    points: Vec<(f64, f64)>,
}

/// Config-facing form: either a bare number or a list of [T, value] pairs.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum TableSpec {
    Constant(f64),
    Table(Vec<(f64, f64)>),
}

impl From<TableSpec> for TempTable {
    fn from(spec: TableSpec) -> Self {
        match spec {
            TableSpec::Constant(v) => TempTable::constant(v),
            TableSpec::Table(mut points) => {
                points.sort_by(|a, b| a.0.total_cmp(&b.0));
                TempTable { points }
            }
        }
    }
}

impl From<TempTable> for TableSpec {
    fn from(t: TempTable) -> Self {
        if t.points.len() == 1 {
            TableSpec::Constant(t.points[0].1)
        } else {
            TableSpec::Table(t.points)
        }
    }
}

impl TempTable {
    pub fn constant(v: f64) -> Self {
        TempTable {
            points: vec![(T_REFERENCE, v)],
        }
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Self {
        TableSpec::Table(pairs.to_vec()).into()
    }

    pub fn value(&self, t: f64) -> Result<f64> {
        match self.points.len() {
            0 => Err(Error::Config("empty temperature table".into())),
            1 => Ok(self.points[0].1),
            _ => {
                let first = self.points.first().unwrap();
                let last = self.points.last().unwrap();
                if t < first.0 - 1e-9 || t > last.0 + 1e-9 {
                    return Err(Error::Config(format!(
                        "temperature {t} K outside table range [{}, {}]",
                        first.0, last.0
                    )));
                }
                let t = t.clamp(first.0, last.0);
                let i = self
                    .points
                    .partition_point(|p| p.0 <= t)
                    .clamp(1, self.points.len() - 1);
                let (t0, v0) = self.points[i - 1];
                let (t1, v1) = self.points[i];
                Ok(v0 + (v1 - v0) * (t - t0) / (t1 - t0))
            }
        }
    }
}

/// Flow and hardening coefficients of one slip family.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowParams {
    pub eps_h: TempTable,
    pub k_h: TempTable,
    pub n_h: TempTable,
    /// Kinematic hardening modulus.
    pub c: TempTable,
    /// Dynamic recovery coefficient.
    pub d: TempTable,
    /// Static recovery stress scale.
    pub big_m: TempTable,
    /// Static recovery exponent.
    pub m_exp: TempTable,
    /// Initial critical resolved shear stress.
    pub r0: TempTable,
    pub q: TempTable,
    pub b: TempTable,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MaterialParams {
    pub c11: TempTable,
    pub c12: TempTable,
    pub c44: TempTable,
    pub alpha: TempTable,
    pub octahedral: FlowParams,
    pub cubic: FlowParams,
}

#[derive(Clone, Copy, Debug)]
pub struct FlowAtT {
    pub eps_h: f64,
    pub k_h: f64,
    pub n_h: f64,
    pub c: f64,
    pub d: f64,
    pub big_m: f64,
    pub m_exp: f64,
    pub r0: f64,
    pub q: f64,
    pub b: f64,
}

impl FlowParams {
    fn at(&self, t: f64) -> Result<FlowAtT> {
        let p = FlowAtT {
            eps_h: self.eps_h.value(t)?,
            k_h: self.k_h.value(t)?,
            n_h: self.n_h.value(t)?,
            c: self.c.value(t)?,
            d: self.d.value(t)?,
            big_m: self.big_m.value(t)?,
            m_exp: self.m_exp.value(t)?,
            r0: self.r0.value(t)?,
            q: self.q.value(t)?,
            b: self.b.value(t)?,
        };
        if p.eps_h <= 0.0 || p.k_h <= 0.0 {
            return Err(Error::Config("eps_h and k_h must be positive".into()));
        }
        if p.n_h < 1.0 {
            return Err(Error::Config("n_h must be >= 1".into()));
        }
        if p.r0 < 0.0 {
            return Err(Error::Config("r0 must be >= 0".into()));
        }
        Ok(p)
    }
}

/// Coefficients resolved at a given temperature.
#[derive(Clone, Debug)]
pub struct ParamsAtT {
    pub stiffness: [[f64; 6]; 6],
    pub alpha: f64,
    pub octahedral: FlowAtT,
    pub cubic: FlowAtT,
}

impl ParamsAtT {
    fn flow(&self, family: SlipFamily) -> &FlowAtT {
        match family {
            SlipFamily::Octahedral => &self.octahedral,
            SlipFamily::Cubic => &self.cubic,
        }
    }
}

impl MaterialParams {
    pub fn at(&self, t: f64) -> Result<ParamsAtT> {
        let c11 = self.c11.value(t)?;
        let c12 = self.c12.value(t)?;
        let c44 = self.c44.value(t)?;
        let mut stiffness = [[0.0; 6]; 6];
        for i in 0..3 {
            for j in 0..3 {
                stiffness[i][j] = if i == j { c11 } else { c12 };
            }
            // Mandel shear-shear block: 2*C44 on the diagonal.
            stiffness[i + 3][i + 3] = 2.0 * c44;
        }
        Ok(ParamsAtT {
            stiffness,
            alpha: self.alpha.value(t)?,
            octahedral: self.octahedral.at(t)?,
            cubic: self.cubic.at(t)?,
        })
    }
}

pub fn apply_stiffness(c: &[[f64; 6]; 6], e: &SymTensor) -> SymTensor {
    let mut out = [0.0; 6];
    for (i, row) in c.iter().enumerate() {
        let mut acc = 0.0;
        for (j, &cij) in row.iter().enumerate() {
            acc += cij * e.0[j];
        }
        out[i] = acc;
    }
    SymTensor(out)
}

/// State carried at one integration point.
#[derive(Clone, Debug, PartialEq)]
pub struct MaterialState {
    pub plastic_strain: SymTensor,
    pub back_stress: [f64; N_SYSTEMS],
    pub cumulated_slip: [f64; N_SYSTEMS],
    pub p_cum_oct: f64,
}

impl Default for MaterialState {
    fn default() -> Self {
        // Initial back stresses and slips are not part of the model inputs;
        // they start at zero.
        MaterialState {
            plastic_strain: SymTensor::ZERO,
            back_stress: [0.0; N_SYSTEMS],
            cumulated_slip: [0.0; N_SYSTEMS],
            p_cum_oct: 0.0,
        }
    }
}

/// Result of one constitutive update.
#[derive(Clone, Debug)]
pub struct PointUpdate {
    pub stress: SymTensor,
    pub state: MaterialState,
    /// Σ_s (τ_s − x_s) Δγ_s, non-negative for a valid update.
    pub dissipation: f64,
    /// Number of times the sinh argument hit the cap.
    pub sinh_caps: u32,
}

/// Positive part.
#[inline]
fn pos(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Viscoplastic slip rate `ε_h · sinh(⟨(|τ−x|−r)/K⟩^n) · sign(τ−x)`.
/// Returns the rate and whether the sinh argument was capped.
pub fn slip_rate(tau: f64, x: f64, r: f64, flow: &FlowAtT) -> (f64, bool) {
    let drive = pos((tau - x).abs() - r);
    if drive == 0.0 {
        return (0.0, false);
    }
    let mut arg = (drive / flow.k_h).powf(flow.n_h);
    let capped = arg > SINH_ARG_CAP;
    if capped {
        arg = SINH_ARG_CAP;
    }
    (flow.eps_h * arg.sinh() * (tau - x).signum(), capped)
}

/// Implicit update of one back stress. Solves
/// `x (1 + d|Δγ|) + dt·c·(|x|/M)^m · sign(x) = x_old + c·Δγ`
/// which is strictly monotone in `x`; the static recovery term drives the
/// back stress toward zero.
fn solve_back_stress(x_old: f64, dgamma: f64, dt: f64, flow: &FlowAtT) -> f64 {
    let rhs = x_old + flow.c * dgamma;
    if rhs == 0.0 {
        return 0.0;
    }
    let denom = 1.0 + flow.d * dgamma.abs();
    let recovery_scale = dt * flow.c / flow.big_m.powf(flow.m_exp);
    // Bracket: g(0) = -rhs, g(rhs/denom) = recovery(rhs/denom) which has the
    // sign of rhs, so the root lies between 0 and rhs/denom.
    let mut hi = rhs / denom;
    let mut lo = 0.0;
    if hi < lo {
        std::mem::swap(&mut hi, &mut lo);
    }
    let g = |x: f64| x * denom + recovery_scale * x.abs().powf(flow.m_exp) * x.signum() - rhs;
    let mut x = rhs / denom;
    for _ in 0..60 {
        let gx = g(x);
        if gx.abs() <= 1e-14 * (rhs.abs() + x.abs() * denom) {
            return x;
        }
        if gx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let gp = denom + recovery_scale * flow.m_exp * x.abs().powf(flow.m_exp - 1.0);
        let newton = x - gx / gp;
        x = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    x
}

struct LocalSystem<'a> {
    systems: &'a [SlipSystem],
    params: &'a ParamsAtT,
    state0: &'a MaterialState,
    eps_new: SymTensor,
    eps_thermal: f64,
    dt: f64,
}

struct LocalEval {
    stress: SymTensor,
    tau: Vec<f64>,
    x_new: Vec<f64>,
    residual: Vec<f64>,
    caps: u32,
}

impl LocalSystem<'_> {
    /// Residual `R_s = Δγ_s − dt·γ̇_s(σ(Δγ), x(Δγ_s), r(Δγ_s))` over the
    /// active set.
    fn eval(&self, active: &[usize], dgamma: &[f64]) -> LocalEval {
        let mut eps_p = self.state0.plastic_strain;
        for (&s, &dg) in active.iter().zip(dgamma) {
            eps_p += self.systems[s].orientation * dg;
        }
        let mut eps_el = self.eps_new - eps_p;
        for k in 0..3 {
            eps_el.0[k] -= self.eps_thermal;
        }
        let stress = apply_stiffness(&self.params.stiffness, &eps_el);

        let mut tau = Vec::with_capacity(active.len());
        let mut x_new = Vec::with_capacity(active.len());
        let mut residual = Vec::with_capacity(active.len());
        let mut caps = 0;
        for (&s, &dg) in active.iter().zip(dgamma) {
            let sys = &self.systems[s];
            let flow = self.params.flow(sys.family);
            let t = stress.dot(&sys.orientation);
            let nu = self.state0.cumulated_slip[s] + dg.abs();
            let r = flow.r0 + flow.q * (1.0 - (-flow.b * nu).exp());
            let x = solve_back_stress(self.state0.back_stress[s], dg, self.dt, flow);
            let (rate, capped) = slip_rate(t, x, r, flow);
            if capped {
                caps += 1;
            }
            tau.push(t);
            x_new.push(x);
            residual.push(dg - self.dt * rate);
        }
        LocalEval {
            stress,
            tau,
            x_new,
            residual,
            caps,
        }
    }

    /// Slip rates of all systems at the converged stress (used to detect
    /// systems that activate during the solve).
    fn rates_all(&self, active: &[usize], dgamma: &[f64]) -> Vec<f64> {
        let eval = self.eval(active, dgamma);
        self.systems
            .iter()
            .enumerate()
            .map(|(s, sys)| {
                let flow = self.params.flow(sys.family);
                let dg = active
                    .iter()
                    .position(|&a| a == s)
                    .map(|k| dgamma[k])
                    .unwrap_or(0.0);
                let nu = self.state0.cumulated_slip[s] + dg.abs();
                let r = flow.r0 + flow.q * (1.0 - (-flow.b * nu).exp());
                let x = solve_back_stress(self.state0.back_stress[s], dg, self.dt, flow);
                slip_rate(eval.stress.dot(&sys.orientation), x, r, flow).0
            })
            .collect()
    }
}

fn infinity_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Backward-Euler constitutive update at one integration point.
///
/// The total strain is ramped linearly from `eps_old` to `eps_new` (and the
/// temperature from `t_old` to `t_new`) if internal sub-stepping becomes
/// necessary. Coefficients are evaluated at the end-of-step temperature.
#[allow(clippy::too_many_arguments)]
pub fn integrate_point(
    state: &MaterialState,
    eps_old: &SymTensor,
    eps_new: &SymTensor,
    t_old: f64,
    t_new: f64,
    dt: f64,
    params: &MaterialParams,
    systems: &[SlipSystem],
) -> Result<PointUpdate> {
    if dt <= 0.0 {
        return Err(Error::InvalidInput("dt must be positive".into()));
    }
    integrate_recursive(state, eps_old, eps_new, t_old, t_new, dt, params, systems, 0)
}

#[allow(clippy::too_many_arguments)]
fn integrate_recursive(
    state: &MaterialState,
    eps_old: &SymTensor,
    eps_new: &SymTensor,
    t_old: f64,
    t_new: f64,
    dt: f64,
    params: &MaterialParams,
    systems: &[SlipSystem],
    depth: u32,
) -> Result<PointUpdate> {
    match integrate_single(state, eps_new, t_new, dt, params, systems) {
        Ok(update) => Ok(update),
        Err(err) => {
            if depth >= 8 {
                return Err(err);
            }
            let eps_mid = (*eps_old + *eps_new) * 0.5;
            let t_mid = 0.5 * (t_old + t_new);
            let first = integrate_recursive(
                state, eps_old, &eps_mid, t_old, t_mid, 0.5 * dt, params, systems, depth + 1,
            )?;
            let second = integrate_recursive(
                &first.state, &eps_mid, eps_new, t_mid, t_new, 0.5 * dt, params, systems, depth + 1,
            )?;
            Ok(PointUpdate {
                stress: second.stress,
                state: second.state,
                dissipation: first.dissipation + second.dissipation,
                sinh_caps: first.sinh_caps + second.sinh_caps,
            })
        }
    }
}

fn integrate_single(
    state: &MaterialState,
    eps_new: &SymTensor,
    t_new: f64,
    dt: f64,
    params: &MaterialParams,
    systems: &[SlipSystem],
) -> Result<PointUpdate> {
    let p = params.at(t_new)?;
    let eps_thermal = p.alpha * (t_new - T_REFERENCE);

    // Elastic trial.
    let mut eps_el = *eps_new - state.plastic_strain;
    for k in 0..3 {
        eps_el.0[k] -= eps_thermal;
    }
    let stress_trial = apply_stiffness(&p.stiffness, &eps_el);

    let mut active: Vec<usize> = Vec::new();
    for (s, sys) in systems.iter().enumerate() {
        let flow = p.flow(sys.family);
        let tau = stress_trial.dot(&sys.orientation);
        let r = flow.r0 + flow.q * (1.0 - (-flow.b * state.cumulated_slip[s]).exp());
        if (tau - state.back_stress[s]).abs() - r > 0.0 {
            active.push(s);
        }
    }
    if active.is_empty() {
        // Inside the elastic domain: exactly zero plastic increments.
        return Ok(PointUpdate {
            stress: stress_trial,
            state: state.clone(),
            dissipation: 0.0,
            sinh_caps: 0,
        });
    }

    let local = LocalSystem {
        systems,
        params: &p,
        state0: state,
        eps_new: *eps_new,
        eps_thermal,
        dt,
    };

    let mut caps_total = 0u32;
    for _activation_round in 0..6 {
        let n = active.len();
        let mut dgamma = vec![0.0; n];
        let mut eval = local.eval(&active, &dgamma);
        let mut converged = false;

        for _iter in 0..40 {
            caps_total += eval.caps;
            let scale = infinity_norm(&dgamma).max(
                eval.residual
                    .iter()
                    .zip(&dgamma)
                    .fold(0.0, |m: f64, (r, dg)| m.max((dg - r).abs())),
            );
            let rnorm = infinity_norm(&eval.residual);
            if rnorm <= (1e-10 * scale).max(1e-16) {
                converged = true;
                break;
            }

            // Forward-difference Jacobian of the local residual.
            let mut jac = nalgebra::DMatrix::<f64>::zeros(n, n);
            for q in 0..n {
                let h = 1e-8 * scale.max(1e-8);
                let mut dg_pert = dgamma.clone();
                dg_pert[q] += h;
                let pert = local.eval(&active, &dg_pert);
                for r in 0..n {
                    jac[(r, q)] = (pert.residual[r] - eval.residual[r]) / h;
                }
            }
            let rhs = nalgebra::DVector::from_iterator(n, eval.residual.iter().map(|r| -r));
            let delta = jac.lu().solve(&rhs).ok_or_else(|| Error::Material {
                ip: usize::MAX,
                message: "singular local Jacobian".into(),
            })?;

            // Damped step: backtrack until the residual norm decreases.
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..8 {
                let trial: Vec<f64> = dgamma
                    .iter()
                    .zip(delta.iter())
                    .map(|(dg, d)| dg + step * d)
                    .collect();
                let trial_eval = local.eval(&active, &trial);
                if infinity_norm(&trial_eval.residual) < rnorm || step < 1.0 / 128.0 {
                    dgamma = trial;
                    eval = trial_eval;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }

        if !converged {
            return Err(Error::Material {
                ip: usize::MAX,
                message: format!(
                    "local Newton stalled with {} active systems (residual {:.3e})",
                    active.len(),
                    infinity_norm(&eval.residual)
                ),
            });
        }

        // Systems that activated during the solve get added and the solve
        // repeats; inactive systems have exactly zero flow by the positive
        // part in the flow rule.
        let rates = local.rates_all(&active, &dgamma);
        let mut grew = false;
        for (s, &rate) in rates.iter().enumerate() {
            if !active.contains(&s) && rate != 0.0 {
                active.push(s);
                grew = true;
            }
        }
        if grew {
            active.sort_unstable();
            continue;
        }

        // Commit.
        let mut new_state = state.clone();
        let mut dissipation = 0.0;
        let mut d_eps_oct = SymTensor::ZERO;
        for (k, &s) in active.iter().enumerate() {
            let dg = dgamma[k];
            new_state.plastic_strain += systems[s].orientation * dg;
            new_state.back_stress[s] = eval.x_new[k];
            new_state.cumulated_slip[s] += dg.abs();
            dissipation += (eval.tau[k] - eval.x_new[k]) * dg;
            if systems[s].family == SlipFamily::Octahedral {
                d_eps_oct += systems[s].orientation * dg;
            }
        }
        // One-step rectangle rule for the accumulated octahedral plastic
        // strain increment.
        new_state.p_cum_oct += (2.0 / 3.0 * d_eps_oct.dot(&d_eps_oct)).sqrt();

        return Ok(PointUpdate {
            stress: eval.stress,
            state: new_state,
            dissipation,
            sinh_caps: caps_total,
        });
    }

    Err(Error::Material {
        ip: usize::MAX,
        message: "active set did not stabilize".into(),
    })
}

/// Forward-difference tangent `dσ/dε` of the constitutive update, holding
/// the committed state fixed. The perturbation is 1e-7 times the strain
/// scale.
#[allow(clippy::too_many_arguments)]
pub fn material_tangent(
    state: &MaterialState,
    eps_old: &SymTensor,
    eps_new: &SymTensor,
    t_old: f64,
    t_new: f64,
    dt: f64,
    params: &MaterialParams,
    systems: &[SlipSystem],
    base: &PointUpdate,
) -> Result<[[f64; 6]; 6]> {
    let scale = eps_new.norm().max(1.0);
    let h = 1e-7 * scale;
    let mut tangent = [[0.0; 6]; 6];
    for j in 0..6 {
        let mut eps_pert = *eps_new;
        eps_pert.0[j] += h;
        let pert = integrate_point(state, eps_old, &eps_pert, t_old, t_new, dt, params, systems)?;
        for i in 0..6 {
            tangent[i][j] = (pert.stress.0[i] - base.stress.0[i]) / h;
        }
    }
    Ok(tangent)
}
