//! PUNN multilayer perceptrons and the fundamental-diagram (FD) learner.
//!
//! Two architectures are wired here: the LWR variant, whose PUNN maps
//! normalized (x, t) to a density estimate and whose FD learner maps that
//! density to a speed, and the ARZ variant, whose PUNN emits (density,
//! speed) jointly while the FD learner supplies the equilibrium speed inside
//! the momentum residual. Networks are all-tanh in the hidden layers, so
//! outputs are smooth in (x, t) to every order the residuals need.
//!
//! A parameter snapshot is immutable and shareable; training mutates a
//! private copy single-threaded.

use crate::diffengine::{ExprId, Graph};
use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// Hidden-layer activation. Only tanh is wired; the residual training path
/// needs smooth second derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Activation {
    Tanh,
}

/// Shape and seed of one multilayer perceptron.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub activation: Activation,
    pub seed: u64,
}

impl MlpConfig {
    /// LWR PUNN preset: 2 inputs, 1 output, 8 hidden layers of 20 nodes.
    pub fn lwr_punn(seed: u64) -> Self {
        MlpConfig {
            input_dim: 2,
            output_dim: 1,
            hidden_layers: 8,
            hidden_width: 20,
            activation: Activation::Tanh,
            seed,
        }
    }

    /// ARZ PUNN preset: 2 inputs, 2 outputs, same hidden shape as LWR.
    pub fn arz_punn(seed: u64) -> Self {
        MlpConfig {
            input_dim: 2,
            output_dim: 2,
            hidden_layers: 8,
            hidden_width: 20,
            activation: Activation::Tanh,
            seed,
        }
    }

    /// FD learner preset: density in, speed out, 2 hidden layers of 20.
    pub fn fd_learner(seed: u64) -> Self {
        MlpConfig {
            input_dim: 1,
            output_dim: 1,
            hidden_layers: 2,
            hidden_width: 20,
            activation: Activation::Tanh,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers < 1 || self.hidden_width < 1 {
            return Err(Error::config(
                "MLP needs hidden_layers >= 1 and hidden_width >= 1",
            ));
        }
        if self.input_dim < 1 || self.output_dim < 1 {
            return Err(Error::config("MLP needs input_dim >= 1 and output_dim >= 1"));
        }
        Ok(())
    }

    /// Layer widths from input to output.
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden_layers + 2);
        dims.push(self.input_dim);
        dims.extend(std::iter::repeat(self.hidden_width).take(self.hidden_layers));
        dims.push(self.output_dim);
        dims
    }

    pub fn param_count(&self) -> usize {
        let dims = self.layer_dims();
        dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// Draw initial weights: zero-mean normal scaled by 1/sqrt(fan_in), biases
/// zero, in flattening order. Reproducible from the config seed.
pub fn init_mlp(cfg: &MlpConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dims = cfg.layer_dims();
    let mut out = Vec::with_capacity(cfg.param_count());
    for w in dims.windows(2) {
        let (n_in, n_out) = (w[0], w[1]);
        let normal = Normal::new(0.0, 1.0 / (n_in as f64).sqrt())
            .map_err(|e| Error::numeric(e.to_string()))?;
        for _ in 0..n_in * n_out {
            out.push(normal.sample(&mut rng));
        }
        out.extend(std::iter::repeat(0.0).take(n_out));
    }
    Ok(out)
}

/// What the FD learner emits for the LWR wiring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum FdOutput {
    /// Speed V(rho) — the default wiring.
    Speed,
    /// Flow Q(rho); speed recovered as Q/rho.
    Flow,
}

/// The PUNN + FD learner pair of one PINN architecture.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PinnArch {
    pub punn: MlpConfig,
    pub fdl: MlpConfig,
    pub fd_output: FdOutput,
}

impl PinnArch {
    pub fn lwr(seed: u64) -> Self {
        PinnArch {
            punn: MlpConfig::lwr_punn(seed),
            fdl: MlpConfig::fd_learner(seed.wrapping_add(1)),
            fd_output: FdOutput::Speed,
        }
    }

    pub fn arz(seed: u64) -> Self {
        PinnArch {
            punn: MlpConfig::arz_punn(seed),
            fdl: MlpConfig::fd_learner(seed.wrapping_add(1)),
            fd_output: FdOutput::Speed,
        }
    }

    /// Fresh parameters; PUNN and FD learner get decorrelated sub-seeds and
    /// the relaxation time starts at tau = 1 (log tau = 0).
    pub fn init_params(&self, seed: u64) -> Result<ParamVector> {
        let mut punn = self.punn.clone();
        punn.seed = seed;
        let mut fdl = self.fdl.clone();
        fdl.seed = seed.wrapping_add(1);
        Ok(ParamVector {
            theta: init_mlp(&punn)?,
            omega: init_mlp(&fdl)?,
            log_tau: 0.0,
        })
    }

    /// Total trainable scalar count: theta + omega + log tau.
    pub fn param_len(&self) -> usize {
        self.punn.param_count() + self.fdl.param_count() + 1
    }
}

/// Flattened trainable parameters: PUNN weights theta, FD-learner weights
/// omega, and the ARZ relaxation time stored as log tau so tau > 0 always
/// holds. Flattening order is theta, omega, log tau.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub theta: Vec<f64>,
    pub omega: Vec<f64>,
    pub log_tau: f64,
}

impl ParamVector {
    pub fn len(&self) -> usize {
        self.theta.len() + self.omega.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tau(&self) -> f64 {
        self.log_tau.exp()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        out.extend_from_slice(&self.theta);
        out.extend_from_slice(&self.omega);
        out.push(self.log_tau);
        out
    }

    pub fn from_flat(arch: &PinnArch, flat: &[f64]) -> Result<Self> {
        let (nt, no) = (arch.punn.param_count(), arch.fdl.param_count());
        if flat.len() != nt + no + 1 {
            return Err(Error::config(format!(
                "flat parameter length {} does not match architecture ({})",
                flat.len(),
                nt + no + 1
            )));
        }
        Ok(ParamVector {
            theta: flat[..nt].to_vec(),
            omega: flat[nt..nt + no].to_vec(),
            log_tau: flat[nt + no],
        })
    }
}

/// Normalized model outputs at one (x, t).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionPair {
    pub rho_hat: f64,
    pub u_hat: f64,
}

/// Direct dense forward pass. Accumulation order matches the graph builder
/// (weighted terms in input order, bias last) so both paths agree bitwise.
pub fn mlp_forward(cfg: &MlpConfig, params: &[f64], input: &[f64]) -> Vec<f64> {
    debug_assert_eq!(params.len(), cfg.param_count());
    debug_assert_eq!(input.len(), cfg.input_dim);
    let dims = cfg.layer_dims();
    let n_layers = dims.len() - 1;
    let mut cur = input.to_vec();
    let mut off = 0;
    for (l, w) in dims.windows(2).enumerate() {
        let (n_in, n_out) = (w[0], w[1]);
        let mut next = vec![0.0; n_out];
        for (j, slot) in next.iter_mut().enumerate() {
            let row = &params[off + j * n_in..off + (j + 1) * n_in];
            let mut acc = 0.0;
            for (wi, xi) in row.iter().zip(cur.iter()) {
                acc += wi * xi;
            }
            acc += params[off + n_out * n_in + j];
            *slot = if l + 1 < n_layers { acc.tanh() } else { acc };
        }
        off += n_out * n_in + n_out;
        cur = next;
    }
    cur
}

/// LWR wiring: density from the PUNN, speed from the FD learner applied to
/// that density.
pub fn forward_lwr(arch: &PinnArch, params: &ParamVector, x: f64, t: f64) -> PredictionPair {
    let rho = mlp_forward(&arch.punn, &params.theta, &[x, t])[0];
    let fd = mlp_forward(&arch.fdl, &params.omega, &[rho])[0];
    let u = match arch.fd_output {
        FdOutput::Speed => fd,
        FdOutput::Flow => fd / rho,
    };
    PredictionPair { rho_hat: rho, u_hat: u }
}

/// ARZ wiring: the PUNN emits (density, speed) jointly.
pub fn forward_arz(arch: &PinnArch, params: &ParamVector, x: f64, t: f64) -> PredictionPair {
    let out = mlp_forward(&arch.punn, &params.theta, &[x, t]);
    PredictionPair {
        rho_hat: out[0],
        u_hat: out[1],
    }
}

/// Emit the forward pass into an expression graph. `params` are the
/// parameter expressions in flattening order; returns one expression per
/// output.
pub fn build_mlp_exprs(
    g: &mut Graph,
    cfg: &MlpConfig,
    params: &[ExprId],
    inputs: &[ExprId],
) -> Vec<ExprId> {
    debug_assert_eq!(params.len(), cfg.param_count());
    debug_assert_eq!(inputs.len(), cfg.input_dim);
    let dims = cfg.layer_dims();
    let n_layers = dims.len() - 1;
    let mut cur = inputs.to_vec();
    let mut off = 0;
    for (l, w) in dims.windows(2).enumerate() {
        let (n_in, n_out) = (w[0], w[1]);
        let mut next = Vec::with_capacity(n_out);
        for j in 0..n_out {
            let mut terms: Vec<ExprId> = params[off + j * n_in..off + (j + 1) * n_in]
                .iter()
                .zip(cur.iter())
                .map(|(&wi, &xi)| g.mul(wi, xi))
                .collect();
            terms.push(params[off + n_out * n_in + j]);
            let z = g.sum(&terms);
            next.push(if l + 1 < n_layers { g.tanh(z) } else { z });
        }
        off += n_out * n_in + n_out;
        cur = next;
    }
    cur
}

/// Sidecar metadata stored next to a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointMeta {
    pub preset: String,
    pub seed: u64,
    pub l_x: f64,
    pub l_t: f64,
    pub rho_max: f64,
    pub u_max: f64,
}

/// Write parameters as one 64-bit real per line in flattening order, plus a
/// `<path>.meta` text header.
pub fn save_checkpoint(path: &Path, params: &ParamVector, meta: &CheckpointMeta) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for v in params.flatten() {
        writeln!(f, "{v:?}")?;
    }
    f.flush()?;
    let meta_path = sidecar_path(path);
    let mut m = std::io::BufWriter::new(std::fs::File::create(meta_path)?);
    writeln!(m, "preset={}", meta.preset)?;
    writeln!(m, "seed={}", meta.seed)?;
    writeln!(m, "l_x={:?}", meta.l_x)?;
    writeln!(m, "l_t={:?}", meta.l_t)?;
    writeln!(m, "rho_max={:?}", meta.rho_max)?;
    writeln!(m, "u_max={:?}", meta.u_max)?;
    m.flush()?;
    Ok(())
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_os_string();
    os.push(".meta");
    std::path::PathBuf::from(os)
}

/// Load a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path, arch: &PinnArch) -> Result<(ParamVector, CheckpointMeta)> {
    let f = BufReader::new(std::fs::File::open(path)?);
    let mut flat = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: f64 = line.trim().parse().map_err(|_| Error::Parse {
            line: i + 1,
            msg: format!("bad real `{line}`"),
        })?;
        flat.push(v);
    }
    let params = ParamVector::from_flat(arch, &flat)?;
    let meta_text = std::fs::read_to_string(sidecar_path(path))?;
    let mut meta = CheckpointMeta {
        preset: String::new(),
        seed: 0,
        l_x: 1.0,
        l_t: 1.0,
        rho_max: 1.0,
        u_max: 1.0,
    };
    for (i, line) in meta_text.lines().enumerate() {
        let Some((k, v)) = line.split_once('=') else {
            continue;
        };
        let bad = |msg: &str| Error::Parse {
            line: i + 1,
            msg: format!("bad {msg} `{v}`"),
        };
        match k {
            "preset" => meta.preset = v.to_string(),
            "seed" => meta.seed = v.parse().map_err(|_| bad("seed"))?,
            "l_x" => meta.l_x = v.parse().map_err(|_| bad("l_x"))?,
            "l_t" => meta.l_t = v.parse().map_err(|_| bad("l_t"))?,
            "rho_max" => meta.rho_max = v.parse().map_err(|_| bad("rho_max"))?,
            "u_max" => meta.u_max = v.parse().map_err(|_| bad("u_max"))?,
            _ => {}
        }
    }
    Ok((params, meta))
}
