//! Cascade training from image sets.

use rand::seq::SliceRandom;
use vjamp_core::train::{
    enumerate_features, train_cascade_with, CascadeOptions, CascadeTraining, NegativeSource, NoRefill, Sample,
    SceneNegatives, StageTargets, TrainError,
};
use vjamp_core::{GrayImage, HaarFeature};

use crate::synth::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub stages: usize,
    pub d_min: f64,
    pub f_max: f64,
    pub stride: usize,
    pub size_step: usize,
    /// Random feature subset of this size, 0 for the whole grid.
    pub max_features: usize,
    pub seed: u64,
    pub weak_budget: usize,
    pub schedule: Option<Vec<usize>>,
    /// Negative pool size kept topped up from the backgrounds.
    pub neg_pool: usize,
    pub mine_step: usize,
    pub mine_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            stages: 5,
            d_min: 0.995,
            f_max: 0.5,
            stride: 2,
            size_step: 2,
            max_features: 0,
            seed: 1,
            weak_budget: 100,
            schedule: None,
            neg_pool: 0,
            mine_step: 4,
            mine_scale: 1.25,
        }
    }
}

/// Feature pool for a window: the strided grid, optionally subsampled.
pub fn feature_pool(window: (usize, usize), cfg: &TrainConfig) -> Result<Vec<HaarFeature>, TrainError> {
    let mut f = enumerate_features(window, cfg.stride, cfg.size_step)?;
    if cfg.max_features > 0 && cfg.max_features < f.len() {
        let mut idx: Vec<usize> = (0..f.len()).collect();
        idx.shuffle(&mut rng(cfg.seed));
        idx.truncate(cfg.max_features);
        idx.sort_unstable();
        f = idx.into_iter().map(|i| f[i]).collect();
    }
    Ok(f)
}

pub fn train_from_images(
    pos: &[GrayImage],
    neg: &[GrayImage],
    backgrounds: &[GrayImage],
    cfg: &TrainConfig,
) -> Result<CascadeTraining, TrainError> {
    let window = pos.first().ok_or(TrainError::NeedBothLabels)?.dims();
    let pos: Vec<Sample> = pos.iter().map(|i| Sample::new(i, true)).collect();
    let neg: Vec<Sample> = neg.iter().map(|i| Sample::new(i, false)).collect();
    let features = feature_pool(window, cfg)?;
    let opts = CascadeOptions {
        targets: StageTargets {
            d_min: cfg.d_min,
            f_max: cfg.f_max,
            max_stages: cfg.stages,
        },
        weak_budget: cfg.weak_budget,
        schedule: cfg.schedule.clone(),
        neg_pool: if backgrounds.is_empty() { 0 } else { cfg.neg_pool },
    };
    let mut source: Box<dyn NegativeSource> = if backgrounds.is_empty() {
        Box::new(NoRefill)
    } else {
        Box::new(SceneNegatives::new(backgrounds, window, cfg.mine_scale, cfg.mine_step))
    };
    train_cascade_with(&pos, &neg, &features, &opts, source.as_mut())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsample_is_seeded_and_ordered() {
        let cfg = TrainConfig {
            max_features: 50,
            ..TrainConfig::default()
        };
        let a = feature_pool((24, 24), &cfg).unwrap();
        assert_eq!(a.len(), 50);
        assert_eq!(a, feature_pool((24, 24), &cfg).unwrap());
        let other = feature_pool((24, 24), &TrainConfig { seed: 2, ..cfg.clone() }).unwrap();
        assert_ne!(a, other);
        let full = feature_pool((24, 24), &TrainConfig::default()).unwrap();
        let pos: Vec<usize> = a.iter().map(|f| full.iter().position(|g| g == f).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
    }
}
