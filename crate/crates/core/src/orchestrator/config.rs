//! Declarative experiment specification.

use serde::Deserialize;

use crate::client::{LocalConfig, LocalMethod};
use crate::error::{Error, Result};
use crate::server::DistillConfig;

/// Federated method run by an experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentMethod {
    FedAvg,
    FedProx,
    FedDf,
    FedProj,
}

impl ExperimentMethod {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentMethod::FedAvg => "fedavg",
            ExperimentMethod::FedProx => "fedprox",
            ExperimentMethod::FedDf => "feddf",
            ExperimentMethod::FedProj => "fedproj",
        }
    }

    /// The local objective clients run under this method.
    pub fn local_method(&self) -> LocalMethod {
        match self {
            ExperimentMethod::FedAvg | ExperimentMethod::FedDf => LocalMethod::FedAvg,
            ExperimentMethod::FedProx => LocalMethod::FedProx,
            ExperimentMethod::FedProj => LocalMethod::FedProj,
        }
    }
}

/// Where the experiment's rows come from.
#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum DataSource {
    /// The bundled 150-row Iris table.
    Iris,
    Csv {
        path: String,
        #[serde(default = "default_true")]
        has_header: bool,
    },
    Blobs {
        class_count: usize,
        per_class_n: usize,
        centers: Vec<[f64; 2]>,
        std: f64,
    },
}

fn default_true() -> bool {
    true
}

/// Dataset pipeline: source, optional PCA to 2-D, and how much goes to the
/// evaluation holdout, the public/proxy slice, and the memory buffer.
/// (`deny_unknown_fields` does not combine with `flatten`; unknown dataset
/// keys surface as unrecognized `source` variants instead.)
#[derive(Clone, Debug, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    #[serde(flatten)]
    pub source: DataSource,
    pub pca: bool,
    pub test_fraction: f64,
    pub public_fraction: f64,
    /// Memory buffer size m; 0 means "the whole public set".
    pub memory_size: usize,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            source: DataSource::Iris,
            pca: true,
            test_fraction: 0.2,
            public_fraction: 0.2,
            memory_size: 0,
        }
    }
}

/// How training rows are assigned to clients.
#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PartitionSpec {
    /// Deterministic pilot split: client i dominated by class i.
    Pilot,
    Dirichlet { beta: f64 },
}

/// Full declarative run specification.
#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub method: ExperimentMethod,
    pub rounds: usize,
    pub n_clients: usize,
    /// Fraction of clients sampled each round, in (0, 1].
    pub sample_rate: f64,
    pub master_seed: u64,
    pub dataset: DatasetSpec,
    pub partition: PartitionSpec,
    /// Hidden layer widths; input/output dims come from the data.
    pub hidden_layers: Vec<usize>,
    pub local: LocalConfig,
    pub distill: DistillConfig,
    pub eval_every: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            method: ExperimentMethod::FedAvg,
            rounds: 20,
            n_clients: 3,
            sample_rate: 1.0,
            master_seed: 42,
            dataset: DatasetSpec::default(),
            partition: PartitionSpec::Pilot,
            hidden_layers: vec![16, 16],
            local: LocalConfig::default(),
            distill: DistillConfig::default(),
            eval_every: 1,
        }
    }
}

impl ExperimentConfig {
    /// Type/range validation. Field names in messages match the config file.
    pub fn validate(&self) -> Result<()> {
        if self.n_clients == 0 {
            return Err(Error::invalid("n_clients: must be >= 1"));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate <= 1.0) {
            return Err(Error::invalid(format!(
                "sample_rate: must be in (0, 1], got {}",
                self.sample_rate
            )));
        }
        if !(self.dataset.test_fraction > 0.0 && self.dataset.test_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "dataset.test_fraction: must be in (0, 1), got {}",
                self.dataset.test_fraction
            )));
        }
        if !(self.dataset.public_fraction > 0.0 && self.dataset.public_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "dataset.public_fraction: must be in (0, 1), got {}",
                self.dataset.public_fraction
            )));
        }
        if self.hidden_layers.iter().any(|&h| h == 0) {
            return Err(Error::invalid("hidden_layers: widths must be positive"));
        }
        if self.eval_every == 0 {
            return Err(Error::invalid("eval_every: must be >= 1"));
        }
        if let PartitionSpec::Dirichlet { beta } = self.partition {
            if !(beta > 0.0) {
                return Err(Error::invalid(format!(
                    "partition.beta: must be positive, got {beta}"
                )));
            }
        }
        if let DataSource::Blobs {
            class_count,
            per_class_n,
            centers,
            std,
        } = &self.dataset.source
        {
            if *class_count == 0 || *per_class_n == 0 {
                return Err(Error::invalid(
                    "dataset: blobs class_count and per_class_n must be positive",
                ));
            }
            if centers.len() != *class_count {
                return Err(Error::invalid(format!(
                    "dataset.centers: {} centers for {class_count} classes",
                    centers.len()
                )));
            }
            if !(*std >= 0.0) {
                return Err(Error::invalid(format!(
                    "dataset.std: must be >= 0, got {std}"
                )));
            }
        }
        self.local.validate()?;
        self.distill.validate()?;
        Ok(())
    }

    /// Forces the method's subsystem switches: feddf never projects and
    /// always distills; fedavg/fedprox never distill; fedproj keeps the
    /// configured projection rate and distillation flag. Also aligns the
    /// local method with the experiment method.
    pub fn normalize(&mut self) {
        self.local.method = self.method.local_method();
        match self.method {
            ExperimentMethod::FedAvg | ExperimentMethod::FedProx => {
                self.distill.enabled = false;
                self.local.projection_rate = 0.0;
            }
            ExperimentMethod::FedDf => {
                self.distill.enabled = true;
                self.local.projection_rate = 0.0;
            }
            ExperimentMethod::FedProj => {}
        }
    }

    /// Whether the round loop maintains an episodic memory at all: only
    /// fedproj with a nonzero projection rate can consume one.
    pub fn uses_memory(&self) -> bool {
        self.method == ExperimentMethod::FedProj && self.local.projection_rate > 0.0
    }
}
