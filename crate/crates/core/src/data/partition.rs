//! Non-IID client partitioning: Dirichlet label skew and the deterministic
//! three-way pilot split.

use rand::seq::SliceRandom;
use rand_distr::{Dirichlet, Distribution};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng;

const MAX_RETRIES: usize = 100;

/// Index-based assignment of dataset rows to clients.
#[derive(Clone, Debug, PartialEq)]
pub struct ClientPartition {
    assignments: Vec<Vec<usize>>,
    /// Dirichlet concentration used to draw the partition, if any.
    beta: Option<f64>,
}

impl ClientPartition {
    fn new(mut assignments: Vec<Vec<usize>>, beta: Option<f64>) -> Result<Self> {
        for rows in &mut assignments {
            rows.sort_unstable();
        }
        if assignments.iter().any(|rows| rows.is_empty()) {
            return Err(Error::invalid("partition: every client needs >= 1 sample"));
        }
        Ok(ClientPartition { assignments, beta })
    }

    pub fn n_clients(&self) -> usize {
        self.assignments.len()
    }

    pub fn client_rows(&self, client: usize) -> &[usize] {
        &self.assignments[client]
    }

    pub fn assignments(&self) -> &[Vec<usize>] {
        &self.assignments
    }

    pub fn beta(&self) -> Option<f64> {
        self.beta
    }

    /// Per-client, per-class sample counts (clients x classes).
    pub fn class_count_matrix(&self, data: &Dataset) -> Vec<Vec<usize>> {
        self.assignments
            .iter()
            .map(|rows| {
                let mut counts = vec![0usize; data.class_count()];
                for &r in rows {
                    counts[data.labels()[r]] += 1;
                }
                counts
            })
            .collect()
    }
}

/// Dirichlet label-skew partition: for each class, proportions drawn from
/// `Dir(beta * 1)` split that class's shuffled rows across clients. Redraws
/// (up to 100 times, fresh substream each) until every client is nonempty.
pub fn dirichlet_partition(
    data: &Dataset,
    n_clients: usize,
    beta: f64,
    seed: u64,
) -> Result<ClientPartition> {
    if n_clients == 0 {
        return Err(Error::invalid("n_clients: must be >= 1"));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::invalid(format!(
            "beta: must be a positive real, got {beta}"
        )));
    }
    if n_clients == 1 {
        return ClientPartition::new(vec![(0..data.n()).collect()], Some(beta));
    }
    if n_clients > data.n() {
        return Err(Error::invalid(format!(
            "n_clients: {n_clients} clients for {} samples",
            data.n()
        )));
    }

    let by_class = data.class_indices();
    for attempt in 0..MAX_RETRIES {
        let mut rng = rng::stream(seed, &[rng::tag::DIRICHLET, attempt as u64]);
        let dir = Dirichlet::new_with_size(beta, n_clients).expect("validated above");
        let mut assignments = vec![Vec::new(); n_clients];
        for idxs in &by_class {
            let mut idxs = idxs.clone();
            idxs.shuffle(&mut rng);
            let props = dir.sample(&mut rng);
            let mut cum = 0.0;
            let mut start = 0usize;
            for (k, &p) in props.iter().enumerate() {
                cum += p;
                let end = if k + 1 == n_clients {
                    idxs.len()
                } else {
                    ((cum * idxs.len() as f64).floor() as usize).min(idxs.len())
                };
                let end = end.max(start);
                assignments[k].extend_from_slice(&idxs[start..end]);
                start = end;
            }
        }
        if assignments.iter().all(|rows| !rows.is_empty()) {
            return ClientPartition::new(assignments, Some(beta));
        }
    }
    Err(Error::PartitionRetriesExhausted {
        clients: n_clients,
        samples: data.n(),
        retries: MAX_RETRIES,
    })
}

/// The deterministic pilot split: requires `n_clients == class_count`;
/// client `i` receives ~80% of class `i` and an equal share of the rest of
/// every other class, taking rows in dataset order. Rounding remainders go
/// to client 0.
pub fn pilot_partition(data: &Dataset, n_clients: usize) -> Result<ClientPartition> {
    if n_clients != data.class_count() {
        return Err(Error::invalid(format!(
            "pilot partition: needs n_clients == class_count, got {n_clients} vs {}",
            data.class_count()
        )));
    }
    if n_clients < 2 {
        return Err(Error::invalid("pilot partition: needs >= 2 clients"));
    }
    let minority = 0.2 / (n_clients - 1) as f64;
    let mut assignments = vec![Vec::new(); n_clients];
    for (c, idxs) in data.class_indices().iter().enumerate() {
        let n_c = idxs.len();
        let mut counts: Vec<isize> = (0..n_clients)
            .map(|i| {
                let share = if i == c { 0.8 } else { minority };
                (share * n_c as f64).round() as isize
            })
            .collect();
        let diff = n_c as isize - counts.iter().sum::<isize>();
        counts[0] += diff;
        if counts[0] < 0 {
            counts[c] += counts[0];
            counts[0] = 0;
        }
        let mut start = 0usize;
        for (i, &cnt) in counts.iter().enumerate() {
            let cnt = cnt.max(0) as usize;
            let end = (start + cnt).min(n_c);
            assignments[i].extend_from_slice(&idxs[start..end]);
            start = end;
        }
    }
    ClientPartition::new(assignments, None)
}
