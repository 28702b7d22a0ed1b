//! LWR and ARZ residual construction, pressure and equilibrium-speed
//! functions, and characteristic speeds.
//!
//! Residuals are built over normalized network outputs and de-normalized to
//! physical units (veh/m/s for the mass residual, m/s² for the momentum
//! residual) via the chain-rule factors carried in [`NormScale`], so bound
//! comparisons stay unit-consistent. All functions here are pure over
//! immutable inputs and safe to evaluate in parallel across points.

use crate::diffengine::{ExprId, Graph, VarId, VarSet};
use crate::error::{Error, Result};
use crate::networks::{build_mlp_exprs, FdOutput, ParamVector, PinnArch};

/// Macroscopic model family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ModelFamily {
    Lwr,
    Arz,
}

/// Traffic pressure P(rho). P must be differentiable with P'(rho) > 0 for
/// rho > 0.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum PressureFn {
    /// P(rho) = u_max * rho / rho_max.
    Linear,
    /// P(rho) = c * rho^gamma with c, gamma > 0.
    PowerLaw { c: f64, gamma: f64 },
}

/// Equilibrium speed-density law U_eq(rho).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum EquilibriumFn {
    /// U_eq(rho) = u_max (1 - rho/rho_max).
    Greenshields,
}

/// How the ARZ relaxation time enters training.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum TauMode {
    Trainable,
    Fixed(f64),
}

/// Physical model description shared by residuals, audits, and bounds.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PhysicsSpec {
    pub family: ModelFamily,
    /// Maximum vehicle speed in m/s.
    pub u_max: f64,
    /// Jam density in veh/m.
    pub rho_max: f64,
    pub pressure: PressureFn,
    pub u_eq: EquilibriumFn,
    pub tau_mode: TauMode,
}

impl PhysicsSpec {
    pub fn lwr(rho_max: f64) -> Self {
        PhysicsSpec {
            family: ModelFamily::Lwr,
            u_max: 30.0,
            rho_max,
            pressure: PressureFn::Linear,
            u_eq: EquilibriumFn::Greenshields,
            tau_mode: TauMode::Fixed(1.0),
        }
    }

    pub fn arz(rho_max: f64) -> Self {
        PhysicsSpec {
            family: ModelFamily::Arz,
            u_max: 30.0,
            rho_max,
            pressure: PressureFn::Linear,
            u_eq: EquilibriumFn::Greenshields,
            tau_mode: TauMode::Trainable,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.u_max > 0.0) || !(self.rho_max > 0.0) {
            return Err(Error::config("u_max and rho_max must be positive"));
        }
        if let PressureFn::PowerLaw { c, gamma } = self.pressure {
            if !(c > 0.0) || !(gamma > 0.0) {
                return Err(Error::config("power-law pressure needs c > 0 and gamma > 0"));
            }
        }
        if let TauMode::Fixed(tau) = self.tau_mode {
            if !(tau > 0.0) {
                return Err(Error::config("fixed tau must be positive"));
            }
        }
        Ok(())
    }

    pub fn pressure(&self, rho: f64) -> f64 {
        match self.pressure {
            PressureFn::Linear => self.u_max * rho / self.rho_max,
            PressureFn::PowerLaw { c, gamma } => c * rho.powf(gamma),
        }
    }

    pub fn pressure_deriv(&self, rho: f64) -> f64 {
        match self.pressure {
            PressureFn::Linear => self.u_max / self.rho_max,
            PressureFn::PowerLaw { c, gamma } => c * gamma * rho.powf(gamma - 1.0),
        }
    }

    /// Taylor coefficients of P at `rho0`: `P^{(k)}(rho0)/k!` for k = 0..=5.
    pub fn pressure_taylor(&self, rho0: f64) -> [f64; 6] {
        match self.pressure {
            PressureFn::Linear => {
                [self.pressure(rho0), self.u_max / self.rho_max, 0.0, 0.0, 0.0, 0.0]
            }
            PressureFn::PowerLaw { c, gamma } => {
                let mut out = [0.0; 6];
                let mut falling = 1.0;
                let mut fact = 1.0;
                for (k, slot) in out.iter_mut().enumerate() {
                    if k > 0 {
                        falling *= gamma - (k as f64 - 1.0);
                        fact *= k as f64;
                    }
                    *slot = c * falling / fact * rho0.powf(gamma - k as f64);
                }
                out
            }
        }
    }

    pub fn u_eq(&self, rho: f64) -> f64 {
        match self.u_eq {
            EquilibriumFn::Greenshields => self.u_max * (1.0 - rho / self.rho_max),
        }
    }

    pub fn u_eq_deriv(&self, _rho: f64) -> f64 {
        match self.u_eq {
            EquilibriumFn::Greenshields => -self.u_max / self.rho_max,
        }
    }

    /// Taylor coefficients of U_eq at `rho0`, k = 0..=5.
    pub fn u_eq_taylor(&self, rho0: f64) -> [f64; 6] {
        match self.u_eq {
            EquilibriumFn::Greenshields => {
                [self.u_eq(rho0), -self.u_max / self.rho_max, 0.0, 0.0, 0.0, 0.0]
            }
        }
    }

    /// Equilibrium flux q(rho) = rho U_eq(rho).
    pub fn flux(&self, rho: f64) -> f64 {
        rho * self.u_eq(rho)
    }

    /// q'(rho), the LWR characteristic speed.
    pub fn flux_deriv(&self, rho: f64) -> f64 {
        self.u_eq(rho) + rho * self.u_eq_deriv(rho)
    }

    /// Relaxation time used where a fixed value is required (bounds,
    /// manufactured fields). Trainable mode evaluates at the init value 1.
    pub fn fixed_tau(&self) -> f64 {
        match self.tau_mode {
            TauMode::Fixed(tau) => tau,
            TauMode::Trainable => 1.0,
        }
    }
}

/// Characteristic speeds; `lambda2` is absent for the scalar LWR model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharSpeeds {
    pub lambda1: f64,
    pub lambda2: Option<f64>,
}

/// Characteristic speeds at a state. LWR ignores `u` and uses the
/// closed-form equilibrium law; ARZ uses the given speed.
pub fn characteristic_speeds(spec: &PhysicsSpec, rho: f64, u: f64) -> Result<CharSpeeds> {
    if !(0.0..=spec.rho_max).contains(&rho) {
        return Err(Error::domain(format!(
            "density {rho} outside [0, {}]",
            spec.rho_max
        )));
    }
    Ok(match spec.family {
        ModelFamily::Lwr => CharSpeeds {
            lambda1: spec.flux_deriv(rho),
            lambda2: None,
        },
        ModelFamily::Arz => CharSpeeds {
            lambda1: u,
            lambda2: Some(u - rho * spec.pressure_deriv(rho)),
        },
    })
}

/// Mass and momentum residuals in physical units; `f2` is zero for LWR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualValue {
    pub f1: f64,
    pub f2: f64,
}

/// Chain-rule factors from normalized coordinates to physical units.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NormScale {
    /// Domain span in x, meters.
    pub l_x: f64,
    /// Domain span in t, seconds.
    pub l_t: f64,
    pub rho_max: f64,
    pub u_max: f64,
}

impl NormScale {
    pub fn unit() -> Self {
        NormScale {
            l_x: 1.0,
            l_t: 1.0,
            rho_max: 1.0,
            u_max: 1.0,
        }
    }
}

/// Normalized field expressions over normalized input variables.
#[derive(Debug, Clone, Copy)]
pub struct FieldExprs {
    /// Normalized density as a function of (x, t).
    pub rho: ExprId,
    /// Normalized speed as a function of (x, t).
    pub u: ExprId,
    pub x: VarId,
    pub t: VarId,
}

/// Mass-conservation residual in physical units:
/// f1 = d rho/dt + d (rho u)/dx, with derivatives emitted into the graph.
pub fn lwr_residual_expr(g: &mut Graph, field: &FieldExprs, scale: &NormScale) -> ExprId {
    let flux = g.mul(field.rho, field.u);
    let d_rho_t = g.grad_exprs(field.rho, &[field.t])[0];
    let d_flux_x = g.grad_exprs(flux, &[field.x])[0];
    let a = g.scale(scale.rho_max / scale.l_t, d_rho_t);
    let b = g.scale(scale.rho_max * scale.u_max / scale.l_x, d_flux_x);
    g.add(a, b)
}

/// Momentum residual in physical units:
/// f2 = d(u + P(rho))/dt + u d(u + P(rho))/dx - (U_eq(rho) - u)/tau.
///
/// `log_tau` is the expression holding log tau (a variable when trainable,
/// a constant otherwise); storing the logarithm keeps tau positive.
pub fn arz_momentum_residual_expr(
    g: &mut Graph,
    field: &FieldExprs,
    spec: &PhysicsSpec,
    scale: &NormScale,
    log_tau: ExprId,
) -> ExprId {
    let rho_phys = g.scale(scale.rho_max, field.rho);
    let u_phys = g.scale(scale.u_max, field.u);
    let p = pressure_expr(g, spec, rho_phys);
    let psi = g.add(u_phys, p);
    let d_psi_t = g.grad_exprs(psi, &[field.t])[0];
    let d_psi_x = g.grad_exprs(psi, &[field.x])[0];
    let conv = g.mul(u_phys, d_psi_x);
    let transport_t = g.scale(1.0 / scale.l_t, d_psi_t);
    let transport_x = g.scale(1.0 / scale.l_x, conv);
    let ueq = u_eq_expr(g, spec, rho_phys);
    let dev = g.sub(ueq, u_phys);
    let neg_log_tau = g.neg(log_tau);
    let inv_tau = g.exp(neg_log_tau);
    let relax = g.mul(dev, inv_tau);
    let lhs = g.add(transport_t, transport_x);
    g.sub(lhs, relax)
}

/// P(rho) over a physical-density expression.
pub fn pressure_expr(g: &mut Graph, spec: &PhysicsSpec, rho_phys: ExprId) -> ExprId {
    match spec.pressure {
        PressureFn::Linear => g.scale(spec.u_max / spec.rho_max, rho_phys),
        PressureFn::PowerLaw { c, gamma } => {
            let p = g.pow(rho_phys, gamma);
            g.scale(c, p)
        }
    }
}

/// U_eq(rho) over a physical-density expression.
pub fn u_eq_expr(g: &mut Graph, spec: &PhysicsSpec, rho_phys: ExprId) -> ExprId {
    match spec.u_eq {
        EquilibriumFn::Greenshields => {
            let scaled = g.scale(-spec.u_max / spec.rho_max, rho_phys);
            let c = g.constant(spec.u_max);
            g.add(c, scaled)
        }
    }
}

/// Network-backed field expressions plus the variable layout used by the
/// per-point residual operations and the loss assembly.
pub struct NetworkField {
    pub graph: Graph,
    pub field: FieldExprs,
    pub log_tau_expr: ExprId,
    pub n_params: usize,
}

/// Build PUNN (+ FD learner) outputs at symbolic (x, t) for one
/// architecture. Variable order: theta, omega, log tau, x, t.
pub fn build_network_field(arch: &PinnArch, family: ModelFamily) -> Result<NetworkField> {
    let mut g = Graph::new();
    let theta = g.var_block("theta", arch.punn.param_count())?;
    let omega = g.var_block("omega", arch.fdl.param_count())?;
    let log_tau = g.var("log_tau")?;
    let x = g.var("x")?;
    let t = g.var("t")?;
    let theta_e: Vec<ExprId> = theta.iter().map(|v| g.var_expr(*v)).collect();
    let omega_e: Vec<ExprId> = omega.iter().map(|v| g.var_expr(*v)).collect();
    let inputs = vec![g.var_expr(x), g.var_expr(t)];
    let (rho, u) = match family {
        ModelFamily::Lwr => {
            let rho = build_mlp_exprs(&mut g, &arch.punn, &theta_e, &inputs)[0];
            let fd = build_mlp_exprs(&mut g, &arch.fdl, &omega_e, &[rho])[0];
            let u = match arch.fd_output {
                FdOutput::Speed => fd,
                FdOutput::Flow => {
                    let inv = g.recip(rho);
                    g.mul(fd, inv)
                }
            };
            (rho, u)
        }
        ModelFamily::Arz => {
            let outs = build_mlp_exprs(&mut g, &arch.punn, &theta_e, &inputs);
            (outs[0], outs[1])
        }
    };
    let n_params = arch.param_len();
    let log_tau_expr = g.var_expr(log_tau);
    Ok(NetworkField {
        graph: g,
        field: FieldExprs { rho, u, x, t },
        log_tau_expr,
        n_params,
    })
}

fn residual_vars(params: &ParamVector, x: f64, t: f64) -> VarSet {
    let mut values = params.flatten();
    values.push(x);
    values.push(t);
    VarSet::new(values)
}

/// Mass residual of the network composition at one normalized point,
/// differentiated through the expression graph.
pub fn lwr_residual(
    arch: &PinnArch,
    params: &ParamVector,
    spec: &PhysicsSpec,
    scale: &NormScale,
    point: (f64, f64),
) -> Result<ResidualValue> {
    spec.validate()?;
    let mut net = build_network_field(arch, ModelFamily::Lwr)?;
    let f1 = lwr_residual_expr(&mut net.graph, &net.field, scale);
    let vars = residual_vars(params, point.0, point.1);
    let v = net.graph.eval(f1, &vars)?;
    Ok(ResidualValue { f1: v, f2: 0.0 })
}

/// Both ARZ residuals of the network composition at one normalized point.
pub fn arz_residuals(
    arch: &PinnArch,
    params: &ParamVector,
    spec: &PhysicsSpec,
    scale: &NormScale,
    point: (f64, f64),
) -> Result<ResidualValue> {
    spec.validate()?;
    let mut net = build_network_field(arch, ModelFamily::Arz)?;
    let f1 = lwr_residual_expr(&mut net.graph, &net.field, scale);
    let log_tau = match spec.tau_mode {
        TauMode::Trainable => net.log_tau_expr,
        TauMode::Fixed(tau) => net.graph.constant(tau.ln()),
    };
    let f2 = arz_momentum_residual_expr(&mut net.graph, &net.field, spec, scale, log_tau);
    let vars = residual_vars(params, point.0, point.1);
    let mut ws = crate::diffengine::Workspace::default();
    net.graph.eval_all(&vars, &mut ws)?;
    Ok(ResidualValue {
        f1: ws.values[f1.0 as usize],
        f2: ws.values[f2.0 as usize],
    })
}

/// Quasilinear ARZ Jacobian in (rho, w = u + P(rho)) variables; upper
/// triangular by construction.
pub fn arz_jacobian(spec: &PhysicsSpec, rho: f64, u: f64) -> [[f64; 2]; 2] {
    let w = u + spec.pressure(rho);
    let a11 = w - spec.pressure(rho) - rho * spec.pressure_deriv(rho);
    let a22 = w - spec.pressure(rho);
    [[a11, rho], [0.0, a22]]
}

/// Numeric eigenvalues of a 2x2 matrix via the characteristic polynomial,
/// sorted descending. Errors on complex pairs.
pub fn eig2x2(m: [[f64; 2]; 2]) -> Result<(f64, f64)> {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = tr * tr - 4.0 * det;
    if disc < 0.0 {
        return Err(Error::numeric(format!("complex eigenvalues, disc = {disc}")));
    }
    let s = disc.sqrt();
    Ok((0.5 * (tr + s), 0.5 * (tr - s)))
}
