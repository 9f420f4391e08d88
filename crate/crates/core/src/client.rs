//! Client-side local training: cross-entropy descent with gradient
//! projection against the memory-loss gradient, plus FedAvg/FedProx
//! baseline modes and the projection-dropout ablation.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::nn::{
    ce_loss_grad, kl_loss_grad, sgd_step, Logits, Mlp, MlpShape, OptimizerState, ParamVector,
};
use crate::rng;

/// Episodic memory: public-set samples paired with server ensemble logits.
/// Labels ride along for the labeled-gradient variant.
#[derive(Clone, Debug)]
pub struct MemoryBuffer {
    inputs: Array2<f64>,
    ensemble_logits: Logits,
    labels: Option<Vec<usize>>,
}

impl MemoryBuffer {
    pub fn new(
        inputs: Array2<f64>,
        ensemble_logits: Logits,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        if inputs.nrows() != ensemble_logits.nrows() {
            return Err(Error::dim(format!(
                "memory: {} input rows vs {} logit rows",
                inputs.nrows(),
                ensemble_logits.nrows()
            )));
        }
        if inputs.nrows() == 0 {
            return Err(Error::invalid("memory: buffer must be nonempty"));
        }
        if let Some(labels) = &labels {
            if labels.len() != inputs.nrows() {
                return Err(Error::dim(format!(
                    "memory: {} labels vs {} rows",
                    labels.len(),
                    inputs.nrows()
                )));
            }
        }
        if inputs.iter().chain(ensemble_logits.iter()).any(|v| !v.is_finite()) {
            return Err(Error::non_finite("memory buffer"));
        }
        Ok(MemoryBuffer {
            inputs,
            ensemble_logits,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn inputs(&self) -> &Array2<f64> {
        &self.inputs
    }

    pub fn ensemble_logits(&self) -> &Logits {
        &self.ensemble_logits
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }
}

/// Which local objective a client runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LocalMethod {
    FedAvg,
    FedProx,
    FedProj,
}

/// Hyperparameters of one client's local run.
#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    /// Stabilizer added to the projection denominator.
    pub epsilon: f64,
    /// Probability of applying projection at a batch step (dropout ablation).
    pub projection_rate: f64,
    pub method: LocalMethod,
    /// Proximal coefficient; fedprox only.
    pub prox_mu: f64,
    /// Temperature of the memory KL loss.
    pub memory_temperature: f64,
    /// Use labeled cross-entropy on the public buffer as the global
    /// gradient instead of KL to the stored ensemble logits.
    pub labeled_public_gradient: bool,
}

impl Default for LocalConfig {
    fn default() -> Self {
        LocalConfig {
            epochs: 5,
            batch_size: 8,
            lr: 1e-3,
            momentum: 0.9,
            epsilon: 1e-8,
            projection_rate: 1.0,
            method: LocalMethod::FedAvg,
            prox_mu: 0.0,
            memory_temperature: 1.0,
            labeled_public_gradient: false,
        }
    }
}

impl LocalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("local.epochs: must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("local.batch_size: must be >= 1"));
        }
        if !(self.lr > 0.0) {
            return Err(Error::invalid(format!(
                "local.lr: must be positive, got {}",
                self.lr
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid(format!(
                "local.momentum: must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::invalid(format!(
                "local.epsilon: must be >= 0, got {}",
                self.epsilon
            )));
        }
        if !(0.0..=1.0).contains(&self.projection_rate) {
            return Err(Error::invalid(format!(
                "local.projection_rate: must be in [0, 1], got {}",
                self.projection_rate
            )));
        }
        if !(self.prox_mu >= 0.0) {
            return Err(Error::invalid(format!(
                "local.prox_mu: must be >= 0, got {}",
                self.prox_mu
            )));
        }
        if !(self.memory_temperature > 0.0) {
            return Err(Error::invalid(format!(
                "local.memory_temperature: must be positive, got {}",
                self.memory_temperature
            )));
        }
        Ok(())
    }
}

/// Per-client bookkeeping surfaced in round metrics.
#[derive(Clone, Debug, Default)]
pub struct LocalDiagnostics {
    /// Mean training loss of each local epoch.
    pub epoch_losses: Vec<f64>,
    /// Memory loss at the received parameters, when a memory was present.
    pub memory_loss_before: Option<f64>,
    /// Memory loss at the returned parameters.
    pub memory_loss_after: Option<f64>,
    /// Batch steps whose constraint was active (projection changed the step).
    pub active_steps: usize,
    /// Batch steps where projection was attempted (dropout said yes).
    pub projected_steps: usize,
    pub total_steps: usize,
}

/// Result of one client's local training.
#[derive(Clone, Debug)]
pub struct ClientUpdate {
    pub params: ParamVector,
    pub sample_count: usize,
    pub diagnostics: LocalDiagnostics,
}

/// Closed-form solution of the projection QP
/// `min ||g_new - g||^2 s.t. <g, g_glob> >= 0`:
/// passes `g_new` through when the inner product is already nonnegative,
/// otherwise removes the conflicting component, with `epsilon` stabilizing
/// the denominator.
pub fn project_gradient(
    g_new: &ParamVector,
    g_glob: &ParamVector,
    epsilon: f64,
) -> Result<ParamVector> {
    Ok(project_gradient_inner(g_new, g_glob, epsilon)?.0)
}

/// As [`project_gradient`], also reporting whether the constraint was active.
pub(crate) fn project_gradient_inner(
    g_new: &ParamVector,
    g_glob: &ParamVector,
    epsilon: f64,
) -> Result<(ParamVector, bool)> {
    g_new.check_same_len(g_glob, "project_gradient")?;
    if !g_new.all_finite() || !g_glob.all_finite() {
        return Err(Error::non_finite("project_gradient input"));
    }
    if !(epsilon >= 0.0) {
        return Err(Error::invalid(format!(
            "epsilon: must be >= 0, got {epsilon}"
        )));
    }
    let inner = g_new.dot(g_glob);
    if inner >= 0.0 {
        return Ok((g_new.clone(), false));
    }
    let norm_sq = g_glob.norm_sq();
    // Vacuous constraint: nothing meaningful to project against.
    if norm_sq < 1e-18 {
        return Ok((g_new.clone(), false));
    }
    let coef = inner / (norm_sq + epsilon);
    Ok((g_new.add_scaled(-coef, g_glob), true))
}

/// Memory loss (temperature-scaled KL against the stored ensemble logits,
/// mean over the buffer) and its exact gradient.
pub fn memory_loss_grad(
    model: &Mlp,
    memory: &MemoryBuffer,
    temperature: f64,
) -> Result<(f64, ParamVector)> {
    kl_loss_grad(
        model,
        &memory.inputs().view(),
        memory.ensemble_logits(),
        temperature,
    )
}

/// The global-knowledge gradient as configured: KL to ensemble logits by
/// default, labeled cross-entropy on the buffer under the labeled variant.
fn global_objective(
    model: &Mlp,
    memory: &MemoryBuffer,
    config: &LocalConfig,
) -> Result<(f64, ParamVector)> {
    if config.labeled_public_gradient {
        let labels = memory.labels().ok_or_else(|| {
            Error::invalid("labeled_public_gradient: memory buffer carries no labels")
        })?;
        ce_loss_grad(model, &memory.inputs().view(), labels)
    } else {
        memory_loss_grad(model, memory, config.memory_temperature)
    }
}

/// Runs one client's local epochs from `start_params` and returns the
/// updated parameters plus diagnostics.
///
/// Mini-batches come from a seeded shuffle (last partial batch kept). In
/// `fedproj` mode with a memory present, each batch step draws from a
/// dedicated dropout stream and, with probability `projection_rate`,
/// projects the batch gradient against the memory-loss gradient. The
/// shuffle stream never sees the dropout draws, so `projection_rate = 0`
/// reproduces `fedavg` bit for bit.
pub fn local_update(
    start_params: &ParamVector,
    shape: &MlpShape,
    data: &crate::data::Dataset,
    memory: Option<&MemoryBuffer>,
    config: &LocalConfig,
    seed: u64,
) -> Result<ClientUpdate> {
    config.validate()?;
    if data.n() == 0 {
        return Err(Error::invalid("local_update: empty client dataset"));
    }
    let mut model = Mlp::unflatten(shape, start_params)?;
    let use_memory = config.method == LocalMethod::FedProj && memory.is_some();
    let memory = if use_memory { memory } else { None };

    let mut diagnostics = LocalDiagnostics::default();
    if let Some(mem) = memory {
        diagnostics.memory_loss_before = Some(global_objective(&model, mem, config)?.0);
    }

    let mut shuffle_rng = rng::stream(seed, &[rng::tag::SHUFFLE]);
    let mut dropout_rng = rng::stream(seed, &[rng::tag::DROPOUT]);
    let mut state = OptimizerState::new(start_params.len(), config.lr, config.momentum)?;
    let mut params = start_params.clone();
    let mut indices: Vec<usize> = (0..data.n()).collect();

    for epoch in 0..config.epochs {
        indices.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for batch in indices.chunks(config.batch_size) {
            let slice = data.subset(batch)?;
            let (loss, mut grad) = ce_loss_grad(&model, &slice.features().view(), slice.labels())?;
            if !loss.is_finite() {
                return Err(Error::non_finite(format!(
                    "local loss at epoch {epoch}"
                )));
            }
            if config.method == LocalMethod::FedProx && config.prox_mu > 0.0 {
                grad = grad.add_scaled(config.prox_mu, &params.sub(start_params));
            }
            if let Some(mem) = memory {
                let u: f64 = dropout_rng.gen();
                if u < config.projection_rate {
                    let (_, g_glob) = global_objective(&model, mem, config)?;
                    let (projected, active) =
                        project_gradient_inner(&grad, &g_glob, config.epsilon)?;
                    grad = projected;
                    diagnostics.projected_steps += 1;
                    if active {
                        diagnostics.active_steps += 1;
                    }
                }
            }
            let (next, next_state) = sgd_step(&params, &grad, state)?;
            params = next;
            state = next_state;
            if !params.all_finite() {
                return Err(Error::non_finite(format!(
                    "parameters at epoch {epoch}"
                )));
            }
            model = Mlp::unflatten(shape, &params)?;
            epoch_loss += loss;
            batches += 1;
            diagnostics.total_steps += 1;
        }
        diagnostics.epoch_losses.push(epoch_loss / batches as f64);
    }

    if let Some(mem) = memory {
        diagnostics.memory_loss_after = Some(global_objective(&model, mem, config)?.0);
    }

    Ok(ClientUpdate {
        params,
        sample_count: data.n(),
        diagnostics,
    })
}

/// One row of the first-order memory-preservation table.
#[derive(Clone, Copy, Debug)]
pub struct MemoryCheckRow {
    pub eta: f64,
    /// Memory-loss change after a step of `-eta * project(g_new, g_glob)`.
    pub delta_projected: f64,
    /// Memory-loss change after the raw step `-eta * g_new`.
    pub delta_unprojected: f64,
}

/// For each learning rate, takes a single projected and unprojected step
/// from `start` against `g_new` and reports how the memory loss moves.
/// The projection eliminates the first-order term, so the projected deltas
/// should vanish quadratically in `eta`.
pub fn first_order_memory_check(
    shape: &MlpShape,
    start: &ParamVector,
    memory: &MemoryBuffer,
    temperature: f64,
    g_new: &ParamVector,
    epsilon: f64,
    etas: &[f64],
) -> Result<Vec<MemoryCheckRow>> {
    let model = Mlp::unflatten(shape, start)?;
    let (loss_before, g_glob) = memory_loss_grad(&model, memory, temperature)?;
    let projected = project_gradient(g_new, &g_glob, epsilon)?;
    let mut rows = Vec::with_capacity(etas.len());
    for &eta in etas {
        let loss_at = |step: &ParamVector| -> Result<f64> {
            let moved = start.add_scaled(-eta, step);
            let m = Mlp::unflatten(shape, &moved)?;
            Ok(memory_loss_grad(&m, memory, temperature)?.0)
        };
        rows.push(MemoryCheckRow {
            eta,
            delta_projected: loss_at(&projected)? - loss_before,
            delta_unprojected: loss_at(g_new)? - loss_before,
        });
    }
    Ok(rows)
}
