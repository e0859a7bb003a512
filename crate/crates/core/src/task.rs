//! Synthetic classification task and its non-IID partitioning across clients.
//! Features for class c are drawn as center_c + noise_sigma * N(0, I); label
//! skew mixes a uniform label distribution with disjoint per-client dominant
//! label subsets assigned round-robin.

use alloc::vec::Vec;

// Needed only when no crate in the build graph links std; any std build
// (tests, downstream binaries) sees std's inherent f64 methods instead.
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Error;
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub n_features: usize,
    pub n_classes: usize,
    /// Row-major n_classes x n_features.
    class_centers: Vec<f64>,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SyntheticTask {
    pub fn center(&self, class: usize) -> &[f64] {
        let f = self.n_features;
        &self.class_centers[class * f..(class + 1) * f]
    }
}

/// One client's local training data. Features are row-major n x n_features.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientDataset {
    pub client_id: usize,
    pub n_features: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
}

impl ClientDataset {
    pub fn new(
        client_id: usize,
        n_features: usize,
        features: Vec<f64>,
        labels: Vec<usize>,
    ) -> Result<Self, Error> {
        if n_features == 0 || features.len() != labels.len() * n_features {
            return Err(Error::DimensionMismatch {
                expected: labels.len() * n_features.max(1),
                actual: features.len(),
            });
        }
        Ok(ClientDataset { client_id, n_features, features, labels })
    }

    pub fn sample_count(&self) -> usize {
        self.labels.len()
    }

    pub fn feature_row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

/// Draws class centers deterministically from the seed.
pub fn generate_task(
    n_features: usize,
    n_classes: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<SyntheticTask, Error> {
    if n_features < 1 {
        return Err(Error::config("task.n_features must be >= 1"));
    }
    if n_classes < 2 {
        return Err(Error::config("task.n_classes must be >= 2"));
    }
    if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
        return Err(Error::config("task.noise_sigma must be finite and >= 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let class_centers: Vec<f64> =
        (0..n_classes * n_features).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Ok(SyntheticTask { n_features, n_classes, class_centers, noise_sigma, seed })
}

/// Integer sample counts per client: round(samples_total * w_i / sum(w)),
/// with the rounding remainder assigned to the largest-weight client
/// (lowest index on ties).
fn partition_counts(weights: &[f64], samples_total: usize) -> Result<Vec<usize>, Error> {
    let total_w: f64 = weights.iter().sum();
    let mut counts: Vec<i64> = weights
        .iter()
        .map(|w| (samples_total as f64 * w / total_w).round() as i64)
        .collect();
    let assigned: i64 = counts.iter().sum();
    let largest = weights
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| a.partial_cmp(b).unwrap().then(ib.cmp(ia)))
        .map(|(i, _)| i)
        .expect("nonempty weights");
    counts[largest] += samples_total as i64 - assigned;
    counts
        .iter()
        .enumerate()
        .map(|(i, &c)| if c >= 1 { Ok(c as usize) } else { Err(Error::ZeroSampleClient(i)) })
        .collect()
}

/// Labels each client prefers under skew: label l is dominant for client
/// l mod n_clients. Clients beyond n_classes get no dominant set and fall
/// back to the uniform mixture component.
fn dominant_labels(client: usize, n_clients: usize, n_classes: usize) -> Vec<usize> {
    (0..n_classes).filter(|l| l % n_clients == client).collect()
}

/// Splits `samples_total` synthetic samples across clients with weight-
/// proportional counts and label-skewed class mixtures. Deterministic per
/// (task, weights, seed); each client draws from its own derived stream.
pub fn partition_noniid(
    task: &SyntheticTask,
    client_weights: &[f64],
    samples_total: usize,
    skew: f64,
    seed: u64,
) -> Result<Vec<ClientDataset>, Error> {
    if client_weights.is_empty() {
        return Err(Error::config("partition.weights must be nonempty"));
    }
    if client_weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(Error::config("partition.weights must all be positive"));
    }
    if samples_total < client_weights.len() {
        return Err(Error::config("partition.samples_total must cover every client"));
    }
    if !(0.0..=1.0).contains(&skew) {
        return Err(Error::config("partition.skew must lie in [0, 1]"));
    }
    let counts = partition_counts(client_weights, samples_total)?;
    let n_clients = client_weights.len();
    let mut out = Vec::with_capacity(n_clients);
    for (client, &n) in counts.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, &[client as u64]));
        let dominant = dominant_labels(client, n_clients, task.n_classes);
        let mut features = Vec::with_capacity(n * task.n_features);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let use_dominant = !dominant.is_empty() && rng.random::<f64>() < skew;
            let label = if use_dominant {
                dominant[rng.random_range(0..dominant.len())]
            } else {
                rng.random_range(0..task.n_classes)
            };
            let center = task.center(label);
            for f in 0..task.n_features {
                let noise: f64 = rng.sample(StandardNormal);
                features.push(center[f] + task.noise_sigma * noise);
            }
            labels.push(label);
        }
        out.push(ClientDataset::new(client, task.n_features, features, labels)?);
    }
    Ok(out)
}
