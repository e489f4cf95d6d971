//! Downstream evaluation: clustering, few-shot classification and retrieval.

pub mod kmeans;
pub mod logreg;
pub mod metrics;
pub mod retrieval;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{invalid, shape_err, Result};
use crate::linalg::Matrix;
use crate::par::Execution;
use crate::synthgen::derive_seed;

pub use kmeans::{kmeans, KMeansResult};
pub use logreg::{LogRegConfig, LogisticModel};
pub use metrics::{acc, ari, nmi};
pub use retrieval::{relevance_from_labels, retrieval_map, RetrievalReport};

/// Ground-truth class ids, one per embedding row. Ids need not be contiguous.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LabelVector(pub Vec<usize>);

impl LabelVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn distinct(&self) -> usize {
        let mut v = self.0.clone();
        v.sort_unstable();
        v.dedup();
        v.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClusterScore {
    pub nmi: f64,
    pub acc: f64,
    pub ari: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterMetrics {
    pub seeds: Vec<u64>,
    pub per_seed: Vec<ClusterScore>,
    pub mean: ClusterScore,
    /// Population standard deviation across seeds.
    pub std: ClusterScore,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// k-means with seeds `0..n_seeds`, scored against `labels`.
pub fn cluster_protocol(
    x: &Matrix,
    labels: &[usize],
    k: usize,
    n_seeds: usize,
    max_iter: usize,
    exec: Execution,
) -> Result<ClusterMetrics> {
    if labels.len() != x.rows() {
        return shape_err(format!("{} rows but {} labels", x.rows(), labels.len()));
    }
    if n_seeds == 0 {
        return invalid("need at least one seed");
    }
    let runs: Vec<Result<ClusterScore>> = exec.map(n_seeds, |s| {
        let r = kmeans(x, k, s as u64, max_iter)?;
        Ok(ClusterScore {
            nmi: nmi(&r.labels, labels)?,
            acc: acc(&r.labels, labels)?,
            ari: ari(&r.labels, labels)?,
        })
    });
    let per_seed = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let pick = |f: fn(&ClusterScore) -> f64| mean_std(&per_seed.iter().map(f).collect::<Vec<_>>());
    let (nmi_m, nmi_s) = pick(|s| s.nmi);
    let (acc_m, acc_s) = pick(|s| s.acc);
    let (ari_m, ari_s) = pick(|s| s.ari);
    Ok(ClusterMetrics {
        seeds: (0..n_seeds as u64).collect(),
        per_seed,
        mean: ClusterScore { nmi: nmi_m, acc: acc_m, ari: ari_m },
        std: ClusterScore { nmi: nmi_s, acc: acc_s, ari: ari_s },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FewShotConfig {
    pub shots: Vec<usize>,
    pub repeats: usize,
    pub seed: u64,
    pub logreg: LogRegConfig,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for FewShotConfig {
    fn default() -> Self {
        FewShotConfig {
            shots: vec![1, 5, 10],
            repeats: 20,
            seed: 0,
            logreg: LogRegConfig::default(),
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShotResult {
    pub shots: usize,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FewShotReport {
    pub classes: usize,
    pub results: Vec<ShotResult>,
}

/// Repeated few-shot evaluation: per repeat, `shots` training samples per
/// class drawn without replacement, the rest used for testing.
pub fn few_shot_classify(x: &Matrix, labels: &[usize], cfg: &FewShotConfig) -> Result<FewShotReport> {
    if labels.len() != x.rows() {
        return shape_err(format!("{} rows but {} labels", x.rows(), labels.len()));
    }
    if cfg.repeats == 0 || cfg.shots.is_empty() {
        return invalid("need at least one repeat and one shot count");
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    if by_class.len() < 2 {
        return invalid("few-shot classification needs at least two classes");
    }
    let max_shots = cfg.shots.iter().copied().max().unwrap_or(0);
    if max_shots == 0 {
        return invalid("shot counts must be positive");
    }
    for (class, members) in &by_class {
        if members.len() <= max_shots {
            return invalid(format!(
                "class {class} has {} samples, needs more than {max_shots}",
                members.len()
            ));
        }
    }
    let class_ids: Vec<usize> = by_class.keys().copied().collect();
    let dense: BTreeMap<usize, usize> = class_ids.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let y: Vec<usize> = labels.iter().map(|l| dense[l]).collect();
    let members: Vec<&Vec<usize>> = by_class.values().collect();

    let mut results = Vec::with_capacity(cfg.shots.len());
    for &shots in &cfg.shots {
        let runs: Vec<Result<f64>> = cfg.execution.map(cfg.repeats, |r| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, ((shots as u64) << 32) | r as u64));
            let mut train = Vec::new();
            for m in &members {
                for pick in rand::seq::index::sample(&mut rng, m.len(), shots) {
                    train.push(m[pick]);
                }
            }
            let mut is_train = vec![false; x.rows()];
            train.iter().for_each(|&i| is_train[i] = true);
            let test: Vec<usize> = (0..x.rows()).filter(|&i| !is_train[i]).collect();
            let xt = x.select_rows(&train)?;
            let yt: Vec<usize> = train.iter().map(|&i| y[i]).collect();
            let model = LogisticModel::fit(&xt, &yt, class_ids.len(), &cfg.logreg)?;
            let pred = model.predict(&x.select_rows(&test)?)?;
            let correct = pred.iter().zip(&test).filter(|(p, &i)| **p == y[i]).count();
            Ok(correct as f64 / test.len() as f64)
        });
        let accuracies = runs.into_iter().collect::<Result<Vec<_>>>()?;
        let (mean, std) = mean_std(&accuracies);
        results.push(ShotResult { shots, accuracies, mean, std });
    }
    Ok(FewShotReport {
        classes: class_ids.len(),
        results,
    })
}
