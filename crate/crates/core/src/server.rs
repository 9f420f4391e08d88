//! Server-side aggregation and fusion: weighted averaging, ensemble teacher
//! logits, distillation fine-tuning with weight-divergence regularization,
//! and memory-buffer refresh.

use rand::seq::SliceRandom;
use serde::Deserialize;

use crate::client::MemoryBuffer;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{
    kl_loss_grad, l2_sq_dist, sgd_step, Logits, Mlp, OptimizerState, ParamVector,
};
use crate::rng;

/// Server-side distillation hyperparameters.
#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillConfig {
    pub enabled: bool,
    pub epochs: usize,
    pub lr: f64,
    pub temperature: f64,
    /// Weight-divergence coefficient; 0 disables the regularizer.
    pub alpha: f64,
    pub batch_size: usize,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            enabled: true,
            epochs: 2,
            lr: 1e-3,
            temperature: 3.0,
            alpha: 0.0,
            batch_size: 32,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::invalid(format!(
                "distill.lr: must be positive, got {}",
                self.lr
            )));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::invalid(format!(
                "distill.temperature: must be positive, got {}",
                self.temperature
            )));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::invalid(format!(
                "distill.alpha: must be >= 0, got {}",
                self.alpha
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("distill.batch_size: must be >= 1"));
        }
        Ok(())
    }
}

/// What the server carries between rounds.
#[derive(Clone, Debug)]
pub struct ServerState {
    pub global_params: ParamVector,
    pub round: usize,
    pub memory: Option<MemoryBuffer>,
}

impl ServerState {
    pub fn new(global_params: ParamVector) -> Self {
        ServerState {
            global_params,
            round: 0,
            memory: None,
        }
    }
}

/// Sample-count-weighted mean of client parameters. Summation runs in the
/// given order; the orchestrator passes clients in ascending id order for
/// bit-reproducibility.
pub fn fedavg_aggregate(updates: &[(ParamVector, usize)]) -> Result<ParamVector> {
    let (first, _) = updates
        .first()
        .ok_or_else(|| Error::invalid("fedavg_aggregate: empty update list"))?;
    let len = first.len();
    let mut total = 0usize;
    for (params, count) in updates {
        params.check_same_len(first, "fedavg_aggregate")?;
        if *count == 0 {
            return Err(Error::invalid("fedavg_aggregate: sample_count must be >= 1"));
        }
        total += count;
    }
    let mut acc = vec![0.0; len];
    for (params, count) in updates {
        let w = *count as f64 / total as f64;
        for (a, &p) in acc.iter_mut().zip(params.iter()) {
            *a += w * p;
        }
    }
    Ok(ParamVector::new(acc))
}

/// Row-wise arithmetic mean of the clients' logits on `inputs`, reduced in
/// the given (ascending client id) order.
pub fn ensemble_logits(
    client_models: &[Mlp],
    inputs: &ndarray::ArrayView2<f64>,
) -> Result<Logits> {
    let first = client_models
        .first()
        .ok_or_else(|| Error::invalid("ensemble_logits: no client models"))?;
    let mut acc = first.forward(inputs)?;
    for model in &client_models[1..] {
        if model.shape() != first.shape() {
            return Err(Error::dim(format!(
                "ensemble_logits: shapes {:?} vs {:?}",
                model.shape().layer_sizes(),
                first.shape().layer_sizes()
            )));
        }
        acc += &model.forward(inputs)?;
    }
    acc.mapv_inplace(|v| v / client_models.len() as f64);
    Ok(acc)
}

/// Distills the client ensemble into the student starting from the FedAvg
/// result: minimizes `T^2 KL(teacher || student) + alpha ||theta - init||^2`
/// over the public set with plain SGD. Teacher logits are precomputed once.
/// Disabled or zero-epoch configs return `init_params` unchanged.
pub fn distill(
    init_params: &ParamVector,
    client_models: &[Mlp],
    public: &Dataset,
    config: &DistillConfig,
    seed: u64,
) -> Result<ParamVector> {
    config.validate()?;
    if !config.enabled || config.epochs == 0 {
        return Ok(init_params.clone());
    }
    let first = client_models
        .first()
        .ok_or_else(|| Error::invalid("distill: no client models"))?;
    let shape = first.shape().clone();
    if public.n() == 0 {
        return Err(Error::invalid("distill: empty public set"));
    }

    // Clients are frozen during distillation; one teacher pass per round.
    let teacher = ensemble_logits(client_models, &public.features().view())?;

    let mut params = init_params.clone();
    let mut model = Mlp::unflatten(&shape, &params)?;
    let mut state = OptimizerState::new(params.len(), config.lr, 0.0)?;
    let mut rng = rng::stream(seed, &[rng::tag::DISTILL]);
    let mut indices: Vec<usize> = (0..public.n()).collect();

    for epoch in 0..config.epochs {
        indices.shuffle(&mut rng);
        for batch in indices.chunks(config.batch_size) {
            let inputs = public.features().select(ndarray::Axis(0), batch);
            let teacher_batch = teacher.select(ndarray::Axis(0), batch);
            let (kd_loss, mut grad) =
                kl_loss_grad(&model, &inputs.view(), &teacher_batch, config.temperature)?;
            let mut loss = kd_loss;
            if config.alpha > 0.0 {
                let drift = params.sub(init_params);
                loss += config.alpha * drift.norm_sq();
                grad = grad.add_scaled(2.0 * config.alpha, &drift);
            }
            if !loss.is_finite() {
                return Err(Error::non_finite(format!(
                    "distillation loss at epoch {epoch}"
                )));
            }
            let (next, next_state) = sgd_step(&params, &grad, state)?;
            params = next;
            state = next_state;
            if !params.all_finite() {
                return Err(Error::non_finite(format!(
                    "distilled parameters at epoch {epoch}"
                )));
            }
            model = Mlp::unflatten(&shape, &params)?;
        }
    }
    Ok(params)
}

/// Materializes the next round's memory: the selected public rows paired
/// with the current client ensemble's logits (and the rows' labels, for the
/// labeled-gradient variant).
pub fn refresh_memory(
    client_models: &[Mlp],
    public: &Dataset,
    memory_indices: &[usize],
) -> Result<MemoryBuffer> {
    if memory_indices.is_empty() {
        return Err(Error::invalid("refresh_memory: no memory indices"));
    }
    let selected = public.subset(memory_indices)?;
    let logits = ensemble_logits(client_models, &selected.features().view())?;
    MemoryBuffer::new(
        selected.features().clone(),
        logits,
        Some(selected.labels().to_vec()),
    )
}

/// Mean `T^2 KL(ensemble teacher || student)` over the public set; the
/// quantity distillation is meant to reduce.
pub fn student_teacher_kl(
    student: &Mlp,
    client_models: &[Mlp],
    public: &Dataset,
    temperature: f64,
) -> Result<f64> {
    let teacher = ensemble_logits(client_models, &public.features().view())?;
    let student_logits = student.forward(&public.features().view())?;
    crate::nn::kl_from_logits(&teacher, &student_logits, temperature)
}
