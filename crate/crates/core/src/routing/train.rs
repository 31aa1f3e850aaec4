use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{backward, ksu_forward, route, Objective, RoutingConfig, RoutingParams, WEATHER_TAGS};
use crate::error::Result;
use crate::imaging::SeededRng;
use crate::weather::WeatherEffect;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainBatch {
    pub features: DMatrix<f64>,
    /// Multi-hot weather tags, T x 4.
    pub tags: DMatrix<f64>,
}

impl TrainBatch {
    /// Gaussian clusters, one per entry of `cluster_tags`, `per_cluster`
    /// tokens each. Returns the batch and the centers (one row per cluster).
    pub fn clusters(
        cluster_tags: &[[f64; WEATHER_TAGS]],
        per_cluster: usize,
        dim: usize,
        spread: f64,
        rng: &mut SeededRng,
    ) -> (Self, DMatrix<f64>) {
        let centers = DMatrix::from_fn(cluster_tags.len(), dim, |_, _| 2.0 * rng.normal());
        let t = cluster_tags.len() * per_cluster;
        let features = DMatrix::from_fn(t, dim, |r, c| centers[(r / per_cluster, c)] + spread * rng.normal());
        let tags = DMatrix::from_fn(t, WEATHER_TAGS, |r, c| cluster_tags[r / per_cluster][c]);
        (Self { features, tags }, centers)
    }
}

/// One SGD step on `lambda_bce * bce + lambda_lb * lb`. Returns the
/// objective before the update.
pub fn train_step(
    params: &mut RoutingParams,
    config: &RoutingConfig,
    batch: &TrainBatch,
    lr: f64,
    lambda_bce: f64,
    lambda_lb: f64,
) -> Result<f64> {
    let obj = Objective {
        upstream: DMatrix::zeros(batch.features.nrows(), config.dim),
        tags: batch.tags.clone(),
        lambda_bce,
        lambda_lb,
    };
    let (value, grads) = backward(&batch.features, params, config, &obj)?;
    params.axpy(-lr, &grads.params);
    Ok(value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoReport {
    pub config: RoutingConfig,
    pub seed: u64,
    pub steps: usize,
    pub tokens_per_tag: usize,
    pub initial_objective: f64,
    pub final_objective: f64,
    /// Selection counts per unit for tokens of each single-weather tag.
    pub histograms: BTreeMap<String, Vec<usize>>,
}

pub const DEMO_TOKENS_PER_TAG: usize = 32;

/// Trains on four single-tag feature clusters and reports how often each
/// unit is selected per tag.
pub fn demo(config: &RoutingConfig, seed: u64, steps: usize) -> Result<DemoReport> {
    config.validate()?;
    let mut rng = SeededRng::new(seed, "routing/demo");
    let mut params = RoutingParams::random(config, &mut rng);
    let one_hot: Vec<[f64; WEATHER_TAGS]> = (0..WEATHER_TAGS)
        .map(|i| {
            let mut t = [0.0; WEATHER_TAGS];
            t[i] = 1.0;
            t
        })
        .collect();
    let (batch, _) = TrainBatch::clusters(&one_hot, DEMO_TOKENS_PER_TAG, config.dim, 0.3, &mut rng);

    let mut initial = f64::NAN;
    let mut last = f64::NAN;
    for s in 0..steps {
        last = train_step(&mut params, config, &batch, 0.5, 1.0, 0.1)?;
        if s == 0 {
            initial = last;
        }
    }

    let fbar = ksu_forward(&batch.features, &params)?;
    let (_, sel) = route(&fbar, &params, config)?;
    let mut histograms = BTreeMap::new();
    for (tag, effect) in WeatherEffect::ALL.iter().enumerate() {
        let mut counts = vec![0usize; config.units];
        for row in &sel.indices[tag * DEMO_TOKENS_PER_TAG..(tag + 1) * DEMO_TOKENS_PER_TAG] {
            for &k in row {
                counts[k] += 1;
            }
        }
        histograms.insert(effect.tag().to_owned(), counts);
    }
    Ok(DemoReport {
        config: *config,
        seed,
        steps,
        tokens_per_tag: DEMO_TOKENS_PER_TAG,
        initial_objective: initial,
        final_objective: last,
        histograms,
    })
}
