//! Assembly of the hybrid loss as one expression graph: weighted total plus
//! unweighted data and physics roots at the same parameters, so gradient
//! probes can read all three in one sweep family.
//!
//! Zero-weighted terms are not built at all; a pure-data run carries no
//! residual subgraphs (and vice versa), which also makes the beta = 0 path
//! independent of the physics family.

use super::LossWeights;
use crate::datahub::DetectorDataset;
use crate::diffengine::{ExprId, Graph, VarId, VarSet, Workspace};
use crate::error::{Error, Result};
use crate::networks::{build_mlp_exprs, FdOutput, PinnArch};
use crate::physics::{
    arz_momentum_residual_expr, lwr_residual_expr, FieldExprs, ModelFamily, NormScale,
    PhysicsSpec, TauMode,
};

/// Split observations 80/20 by a deterministic hash of the physical
/// coordinates; returns (train, test) index sets.
pub fn split_observations(dataset: &DetectorDataset) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, o) in dataset.observations.iter().enumerate() {
        if coord_hash(o.x, o.t) % 5 == 0 {
            test.push(i);
        } else {
            train.push(i);
        }
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::config(
            "dataset too small to hold out a test split (need both parts non-empty)",
        ));
    }
    Ok((train, test))
}

/// FNV-1a over the raw coordinate bits.
fn coord_hash(x: f64, t: f64) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in x.to_bits().to_le_bytes().iter().chain(t.to_bits().to_le_bytes().iter()) {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// The loss expression graph bound to one dataset and weight setting.
pub struct LossGraph {
    graph: Graph,
    total: ExprId,
    data_unweighted: ExprId,
    physics_unweighted: ExprId,
    param_vars: Vec<VarId>,
    /// Fixed collocation coordinate values appended after the parameters.
    fixed_inputs: Vec<f64>,
    ws: Workspace,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub n_train: usize,
    pub n_coll: usize,
}

impl LossGraph {
    pub fn new(
        dataset: &DetectorDataset,
        arch: &PinnArch,
        spec: &PhysicsSpec,
        weights: &LossWeights,
    ) -> Result<Self> {
        dataset.validate()?;
        spec.validate()?;
        weights.validate()?;
        let with_physics = weights.beta1 > 0.0 || weights.beta2 > 0.0;
        if with_physics {
            match spec.family {
                ModelFamily::Lwr if arch.punn.output_dim != 1 => {
                    return Err(Error::config("LWR residuals need a 1-output PUNN"));
                }
                ModelFamily::Arz if arch.punn.output_dim != 2 => {
                    return Err(Error::config("ARZ residuals need a 2-output PUNN"));
                }
                _ => {}
            }
            if dataset.collocation.is_empty() {
                return Err(Error::config(
                    "physics weight is positive but the dataset has no collocation points",
                ));
            }
        }

        let (train_idx, test_idx) = split_observations(dataset)?;
        let obs = dataset.normalized_observations();
        let coll = dataset.normalized_collocation();
        let scale = dataset.scale;

        let mut g = Graph::new();
        let theta = g.var_block("theta", arch.punn.param_count())?;
        let omega = g.var_block("omega", arch.fdl.param_count())?;
        let log_tau = g.var("log_tau")?;
        let theta_e: Vec<ExprId> = theta.iter().map(|v| g.var_expr(*v)).collect();
        let omega_e: Vec<ExprId> = omega.iter().map(|v| g.var_expr(*v)).collect();
        let mut param_vars = theta;
        param_vars.extend_from_slice(&omega);
        param_vars.push(log_tau);

        let joint_output = arch.punn.output_dim == 2;

        // Data misfit over the training observations (constant inputs).
        let mut rho_sq = Vec::with_capacity(train_idx.len());
        let mut u_sq = Vec::with_capacity(train_idx.len());
        let with_data = weights.alpha1 > 0.0 || weights.alpha2 > 0.0;
        if with_data {
            for &i in &train_idx {
                let [x, t, rho_t, u_t] = obs[i];
                let xi = g.constant(x);
                let ti = g.constant(t);
                let outs = build_mlp_exprs(&mut g, &arch.punn, &theta_e, &[xi, ti]);
                let rho_pred = outs[0];
                let u_pred = if joint_output {
                    outs[1]
                } else {
                    let fd = build_mlp_exprs(&mut g, &arch.fdl, &omega_e, &[rho_pred])[0];
                    match arch.fd_output {
                        FdOutput::Speed => fd,
                        FdOutput::Flow => {
                            let inv = g.recip(rho_pred);
                            g.mul(fd, inv)
                        }
                    }
                };
                let rt = g.constant(rho_t);
                let dr = g.sub(rho_pred, rt);
                rho_sq.push(g.pow(dr, 2.0));
                let ut = g.constant(u_t);
                let du = g.sub(u_pred, ut);
                u_sq.push(g.pow(du, 2.0));
            }
        }

        // Physics residuals over the collocation points (variable inputs,
        // so the residual can differentiate through them).
        let mut fixed_inputs = Vec::new();
        let mut f1_sq = Vec::new();
        let mut f2_sq = Vec::new();
        if with_physics {
            let log_tau_expr = match spec.tau_mode {
                TauMode::Trainable => g.var_expr(log_tau),
                TauMode::Fixed(tau) => g.constant(tau.ln()),
            };
            for (j, &(x, t)) in coll.iter().enumerate() {
                let xv = g.var(format!("coll_x[{j}]"))?;
                let tv = g.var(format!("coll_t[{j}]"))?;
                fixed_inputs.push(x);
                fixed_inputs.push(t);
                let inputs = vec![g.var_expr(xv), g.var_expr(tv)];
                let outs = build_mlp_exprs(&mut g, &arch.punn, &theta_e, &inputs);
                let rho_pred = outs[0];
                let u_pred = if joint_output {
                    outs[1]
                } else {
                    let fd = build_mlp_exprs(&mut g, &arch.fdl, &omega_e, &[rho_pred])[0];
                    match arch.fd_output {
                        FdOutput::Speed => fd,
                        FdOutput::Flow => {
                            let inv = g.recip(rho_pred);
                            g.mul(fd, inv)
                        }
                    }
                };
                let field = FieldExprs {
                    rho: rho_pred,
                    u: u_pred,
                    x: xv,
                    t: tv,
                };
                let f1 = lwr_residual_expr(&mut g, &field, &scale);
                f1_sq.push(g.pow(f1, 2.0));
                if matches!(spec.family, ModelFamily::Arz) {
                    let f2 =
                        arz_momentum_residual_expr(&mut g, &field, spec, &scale, log_tau_expr);
                    f2_sq.push(g.pow(f2, 2.0));
                }
            }
        }

        let n_train = train_idx.len();
        let n_coll = coll.len();
        let mse_rho = mean_expr(&mut g, &rho_sq);
        let mse_u = mean_expr(&mut g, &u_sq);
        let p1 = mean_expr(&mut g, &f1_sq);
        let p2 = mean_expr(&mut g, &f2_sq);

        let data_unweighted = g.add(mse_rho, mse_u);
        let physics_unweighted = g.add(p1, p2);
        let wa1 = g.scale(weights.alpha1, mse_rho);
        let wa2 = g.scale(weights.alpha2, mse_u);
        let wb1 = g.scale(weights.beta1, p1);
        let wb2 = g.scale(weights.beta2, p2);
        let total = g.sum(&[wa1, wa2, wb1, wb2]);

        Ok(LossGraph {
            graph: g,
            total,
            data_unweighted,
            physics_unweighted,
            param_vars,
            fixed_inputs,
            ws: Workspace::default(),
            train_idx,
            test_idx,
            n_train,
            n_coll,
        })
    }

    pub fn param_len(&self) -> usize {
        self.param_vars.len()
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn total_root(&self) -> ExprId {
        self.total
    }

    pub fn param_vars(&self) -> &[VarId] {
        &self.param_vars
    }

    /// Full variable assignment for a flat parameter vector.
    pub fn bind(&self, flat: &[f64]) -> VarSet {
        let mut values = Vec::with_capacity(flat.len() + self.fixed_inputs.len());
        values.extend_from_slice(flat);
        values.extend_from_slice(&self.fixed_inputs);
        VarSet::new(values)
    }

    fn eval_roots(&mut self, flat: &[f64]) -> Result<(f64, f64, f64)> {
        if flat.len() != self.param_vars.len() {
            return Err(Error::config(format!(
                "parameter vector length {} does not match graph ({})",
                flat.len(),
                self.param_vars.len()
            )));
        }
        let vars = self.bind(flat);
        self.graph.eval_all(&vars, &mut self.ws)?;
        Ok((
            self.ws.values[self.total.0 as usize],
            self.ws.values[self.data_unweighted.0 as usize],
            self.ws.values[self.physics_unweighted.0 as usize],
        ))
    }

    /// (total, data, physics) loss values at `flat`.
    pub fn losses(&mut self, flat: &[f64]) -> Result<(f64, f64, f64)> {
        self.eval_roots(flat)
    }

    /// Loss values plus the gradient of the weighted total.
    pub fn grad_total(&mut self, flat: &[f64]) -> Result<((f64, f64, f64), Vec<f64>)> {
        let losses = self.eval_roots(flat)?;
        self.graph.backward(self.total, &mut self.ws);
        let grad = self.collect_param_adjoints();
        Ok((losses, grad))
    }

    /// Gradients of (weighted total, unweighted data, unweighted physics)
    /// at the same parameters.
    pub fn grad_triplet(&mut self, flat: &[f64]) -> Result<[Vec<f64>; 3]> {
        self.eval_roots(flat)?;
        self.graph.backward(self.total, &mut self.ws);
        let g_t = self.collect_param_adjoints();
        self.graph.backward(self.data_unweighted, &mut self.ws);
        let g_d = self.collect_param_adjoints();
        self.graph.backward(self.physics_unweighted, &mut self.ws);
        let g_p = self.collect_param_adjoints();
        Ok([g_t, g_d, g_p])
    }

    fn collect_param_adjoints(&self) -> Vec<f64> {
        let adj = self.graph.collect_var_adjoints(&self.ws);
        adj[..self.param_vars.len()].to_vec()
    }
}

/// Mean of a list of expression terms; empty lists contribute zero.
fn mean_expr(g: &mut Graph, terms: &[ExprId]) -> ExprId {
    if terms.is_empty() {
        return g.constant(0.0);
    }
    let s = g.sum(terms);
    g.scale(1.0 / terms.len() as f64, s)
}
