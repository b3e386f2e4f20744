//! Toy federated-learning workload: synthetic linear-regression data, local
//! SGD on half mean-squared error, and plaintext FedAvg.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::masking::ModelVector;

#[derive(Debug, Error)]
pub enum FlError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("no updates to average")]
    NoUpdates,
    #[error("total sample count is zero")]
    ZeroCount,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid task parameters: {0}")]
    Invalid(String),
    #[error("dataset csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    /// Writes `x0,..,x{d-1},y` rows with a header.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), FlError> {
        let mut wr = csv::Writer::from_writer(w);
        let d = self.dim();
        let mut header: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
        header.push("y".into());
        wr.write_record(&header)?;
        for (x, y) in self.features.iter().zip(&self.targets) {
            let mut row: Vec<String> = x.iter().map(|v| format!("{v:?}")).collect();
            row.push(format!("{y:?}"));
            wr.write_record(&row)?;
        }
        wr.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, FlError> {
        let mut rd = csv::Reader::from_reader(r);
        let mut features = Vec::new();
        let mut targets = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let vals = rec
                .iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|e| FlError::Invalid(format!("{s:?}: {e}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let (y, x) = vals
                .split_last()
                .ok_or_else(|| FlError::Invalid("empty row".into()))?;
            features.push(x.to_vec());
            targets.push(*y);
        }
        Ok(Self { features, targets })
    }
}

/// How samples are spread across NFs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionLaw {
    /// Every NF gets the same number of samples.
    Iid,
    /// NF `k` gets a share proportional to `(k + 1)^-exponent`.
    SizeSkewed { exponent: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticTask {
    pub true_weights: Vec<f64>,
    pub noise_std: f64,
    pub partition_sizes: Vec<usize>,
    pub seed: u64,
}

fn partition_sizes(total: usize, k: usize, law: PartitionLaw) -> Vec<usize> {
    match law {
        PartitionLaw::Iid => {
            let base = total / k;
            let mut sizes = vec![base; k];
            for s in sizes.iter_mut().take(total % k) {
                *s += 1;
            }
            sizes
        }
        PartitionLaw::SizeSkewed { exponent } => {
            let w: Vec<f64> = (0..k).map(|i| (i as f64 + 1.0).powf(-exponent)).collect();
            let sum: f64 = w.iter().sum();
            let mut sizes: Vec<usize> = w
                .iter()
                .map(|wi| ((total as f64 * wi / sum).floor() as usize).max(1))
                .collect();
            let assigned: usize = sizes.iter().sum();
            if assigned <= total {
                sizes[0] += total - assigned;
            } else {
                // the max(1) floor overshot; take back from the largest share
                sizes[0] -= assigned - total;
            }
            sizes
        }
    }
}

/// Draws `y = x . w* + noise` with standard-normal features and true weights
/// uniform in `[-1, 1]`, split over `k` NFs.
pub fn generate_task(
    seed: u64,
    d: usize,
    k: usize,
    total_samples: usize,
    noise_std: f64,
    law: PartitionLaw,
) -> Result<(SyntheticTask, Vec<Dataset>), FlError> {
    if d == 0 || k == 0 {
        return Err(FlError::Invalid(format!(
            "d={d} and k={k} must be positive"
        )));
    }
    if total_samples < k {
        return Err(FlError::Invalid(format!(
            "{total_samples} samples cannot cover {k} NFs"
        )));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(FlError::Invalid(format!("noise_std={noise_std}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let true_weights: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    let noise = Normal::new(0.0, noise_std).map_err(|e| FlError::Invalid(e.to_string()))?;
    let sizes = partition_sizes(total_samples, k, law);
    let datasets = sizes
        .iter()
        .map(|&n| {
            let mut features = Vec::with_capacity(n);
            let mut targets = Vec::with_capacity(n);
            for _ in 0..n {
                let x: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                let y = dot(&x, &true_weights) + noise.sample(&mut rng);
                features.push(x);
                targets.push(y);
            }
            Dataset { features, targets }
        })
        .collect();
    Ok((
        SyntheticTask {
            true_weights,
            noise_std,
            partition_sizes: sizes,
            seed,
        },
        datasets,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalTrainer {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for LocalTrainer {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            epochs: 2,
            batch_size: 8,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minibatch SGD on `1/2 * mean((x.w - y)^2)` starting from `model`. The
/// returned count is the full local dataset size.
pub fn local_train(
    model: &[f64],
    data: &Dataset,
    trainer: &LocalTrainer,
    seed: u64,
) -> Result<ModelVector, FlError> {
    if data.is_empty() {
        return Err(FlError::EmptyDataset);
    }
    if data.dim() != model.len() {
        return Err(FlError::Dimension {
            expected: model.len(),
            got: data.dim(),
        });
    }
    let mut w = model.to_vec();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch = trainer.batch_size.max(1);
    let mut grad = vec![0.0; w.len()];
    for _ in 0..trainer.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in chunk {
                let x = &data.features[i];
                let r = dot(x, &w) - data.targets[i];
                for (g, xi) in grad.iter_mut().zip(x) {
                    *g += r * xi;
                }
            }
            let step = trainer.learning_rate / chunk.len() as f64;
            for (wi, g) in w.iter_mut().zip(&grad) {
                *wi -= step * g;
            }
        }
    }
    Ok(ModelVector {
        weights: w,
        n: data.len() as u64,
    })
}

/// `sum(n_k * w_k) / sum(n_k)` in floating point.
pub fn plaintext_fedavg(updates: &[ModelVector]) -> Result<Vec<f64>, FlError> {
    let first = updates.first().ok_or(FlError::NoUpdates)?;
    let d = first.weights.len();
    let total: u64 = updates.iter().map(|u| u.n).sum();
    if total == 0 {
        return Err(FlError::ZeroCount);
    }
    let mut acc = vec![0.0; d];
    for u in updates {
        if u.weights.len() != d {
            return Err(FlError::Dimension {
                expected: d,
                got: u.weights.len(),
            });
        }
        for (a, w) in acc.iter_mut().zip(&u.weights) {
            *a += u.n as f64 * w;
        }
    }
    Ok(acc.into_iter().map(|a| a / total as f64).collect())
}
