//! AdaBoost stump selection, strong-classifier boosting and cascade assembly.
//!
//! Sample weights are `f64` during training. Threshold search runs on
//! weights quantized to 2^-60 so that split errors are exact integers and
//! ties resolve the same way regardless of summation order. Each sample's
//! feature value is turned into an integer cutoff `c` such that the
//! weak-classifier test `value * 2^12 < theta * sigma_n` holds exactly for
//! every `theta >= c`; sorting by cutoff makes one pass per feature enough.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Reverse;

use crate::cascade::{is_below, Cascade, HaarFeature, ModelError, Stage, WeakClassifier, WeightedRect};
use crate::detect::candidate_offsets;
use crate::image::{build_pyramid, GrayImage, IntegralPair, Rect};
use crate::{FIXED_ONE, FIXED_SHIFT};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("no features to choose from")]
    NoFeatures,
    #[error("no training samples")]
    NoSamples,
    #[error("training needs at least one positive and one negative sample")]
    NeedBothLabels,
    #[error("sample window is {got:?}, expected {expected:?}")]
    WindowMismatch {
        got: (usize, usize),
        expected: (usize, usize),
    },
    #[error("{weights} weights for {samples} samples")]
    WeightCount { weights: usize, samples: usize },
    #[error("stride and size step must be >= 1")]
    BadGrid,
    #[error("at least one boosting round is required")]
    NoRounds,
    #[error("invalid stage targets: {0}")]
    BadTargets(&'static str),
    #[error("no weak learner better than chance (round {round}, error {error})")]
    NoBetterThanChance { round: usize, error: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A labelled training window with its integral images and `N * sigma`.
#[derive(Debug, Clone)]
pub struct Sample {
    pub integral: IntegralPair,
    pub sigma_n: u64,
    pub positive: bool,
}

impl Sample {
    pub fn new(window: &GrayImage, positive: bool) -> Self {
        let integral = IntegralPair::new(window);
        let sigma_n = integral.window_stddev_unchecked(Rect::new(0, 0, window.width(), window.height()));
        Sample {
            integral,
            sigma_n,
            positive,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.integral.width(), self.integral.height())
    }

    pub fn feature_value(&self, f: &HaarFeature) -> i64 {
        f.eval_unchecked(&self.integral, (0, 0))
    }
}

/// Template shapes in units of their smallest cell.
const TEMPLATES: [(usize, usize); 5] = [(2, 1), (1, 2), (3, 1), (1, 3), (2, 2)];

fn template_feature(kind: usize, x: usize, y: usize, w: usize, h: usize) -> HaarFeature {
    match kind {
        0 => {
            let u = w / 2;
            HaarFeature::two(WeightedRect::new(x, y, u, h, -1), WeightedRect::new(x + u, y, u, h, 1))
        }
        1 => {
            let u = h / 2;
            HaarFeature::two(WeightedRect::new(x, y, w, u, -1), WeightedRect::new(x, y + u, w, u, 1))
        }
        2 => {
            let u = w / 3;
            HaarFeature::three(
                WeightedRect::new(x, y, u, h, -1),
                WeightedRect::new(x + u, y, u, h, 2),
                WeightedRect::new(x + 2 * u, y, u, h, -1),
            )
        }
        3 => {
            let u = h / 3;
            HaarFeature::three(
                WeightedRect::new(x, y, w, u, -1),
                WeightedRect::new(x, y + u, w, u, 2),
                WeightedRect::new(x, y + 2 * u, w, u, -1),
            )
        }
        _ => {
            let (uw, uh) = (w / 2, h / 2);
            HaarFeature::three(
                WeightedRect::new(x, y, w, h, -1),
                WeightedRect::new(x + uw, y, uw, uh, 2),
                WeightedRect::new(x, y + uh, uw, uh, 2),
            )
        }
    }
}

/// The five two/three/four-rectangle templates at every position on a
/// `stride` grid and every size whose cell is `1, 1 + size_step, ...`.
/// Ordered by template, cell width, cell height, x, y.
pub fn enumerate_features(
    window: (usize, usize),
    stride: usize,
    size_step: usize,
) -> Result<Vec<HaarFeature>, TrainError> {
    if stride == 0 || size_step == 0 {
        return Err(TrainError::BadGrid);
    }
    let (ww, wh) = window;
    let mut out = Vec::new();
    for (kind, &(bw, bh)) in TEMPLATES.iter().enumerate() {
        for cw in (1..=ww / bw).step_by(size_step) {
            for ch in (1..=wh / bh).step_by(size_step) {
                let (w, h) = (cw * bw, ch * bh);
                for x in (0..=ww - w).step_by(stride) {
                    for y in (0..=wh - h).step_by(stride) {
                        out.push(template_feature(kind, x, y, w, h));
                    }
                }
            }
        }
    }
    Ok(out)
}

const NEVER_BELOW: i64 = i64::MAX;
const ALWAYS_BELOW: i64 = i64::MIN;

/// Smallest `theta` (as i32) with `is_below(value, theta, sigma_n)`, or a
/// sentinel when no i32 threshold separates it.
pub fn below_cutoff(value: i64, sigma_n: u64) -> i64 {
    if sigma_n == 0 {
        return if value < 0 { ALWAYS_BELOW } else { NEVER_BELOW };
    }
    let c = i128::from(value << FIXED_SHIFT).div_euclid(i128::from(sigma_n)) + 1;
    if c <= i128::from(i32::MIN) {
        ALWAYS_BELOW
    } else if c > i128::from(i32::MAX) {
        NEVER_BELOW
    } else {
        c as i64
    }
}

const WEIGHT_SCALE: f64 = (1u64 << 60) as f64;

fn quantize(weights: &[f64]) -> Vec<u64> {
    weights.iter().map(|&w| libm::round(w * WEIGHT_SCALE) as u64).collect()
}

/// Best stump found for one weight vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakChoice {
    pub feature_index: usize,
    pub threshold: i32,
    /// `true` when windows below the threshold are predicted positive.
    pub below_is_positive: bool,
    /// Weighted error with the quantized weights, in units of 2^-60.
    pub error_q: u64,
}

impl WeakChoice {
    pub fn predicts_positive(&self, value: i64, sigma_n: u64) -> bool {
        is_below(value, self.threshold, sigma_n) == self.below_is_positive
    }

    /// The stump as a weak classifier voting `alpha_q` for positive.
    pub fn classifier(&self, feature: HaarFeature, alpha_q: i32) -> WeakClassifier {
        let (left, right) = if self.below_is_positive { (alpha_q, 0) } else { (0, alpha_q) };
        WeakClassifier {
            feature,
            threshold: self.threshold,
            left,
            right,
        }
    }
}

/// Per-feature sample cutoffs, sorted once per sample pool.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    n_samples: usize,
    n_features: usize,
    cutoffs: Vec<i64>,
    order: Vec<u32>,
    positive: Vec<bool>,
}

impl FeatureTable {
    pub fn new(features: &[HaarFeature], samples: &[Sample]) -> Result<Self, TrainError> {
        if features.is_empty() {
            return Err(TrainError::NoFeatures);
        }
        let Some(first) = samples.first() else {
            return Err(TrainError::NoSamples);
        };
        let dims = first.dims();
        if let Some(s) = samples.iter().find(|s| s.dims() != dims) {
            return Err(TrainError::WindowMismatch {
                got: s.dims(),
                expected: dims,
            });
        }
        for f in features {
            f.validate(dims.0, dims.1)?;
        }
        let n = samples.len();
        let mut cutoffs = Vec::with_capacity(features.len() * n);
        let mut order = Vec::with_capacity(features.len() * n);
        let mut pairs: Vec<(i64, u32)> = Vec::with_capacity(n);
        for f in features {
            pairs.clear();
            pairs.extend(
                samples
                    .iter()
                    .enumerate()
                    .map(|(i, s)| (below_cutoff(s.feature_value(f), s.sigma_n), i as u32)),
            );
            pairs.sort_unstable();
            cutoffs.extend(pairs.iter().map(|p| p.0));
            order.extend(pairs.iter().map(|p| p.1));
        }
        Ok(FeatureTable {
            n_samples: n,
            n_features: features.len(),
            cutoffs,
            order,
            positive: samples.iter().map(|s| s.positive).collect(),
        })
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Exact minimum-error stump. Ties go to the lowest feature index, then
    /// the lowest threshold, then `below_is_positive`.
    pub fn best(&self, weights: &[f64]) -> Result<WeakChoice, TrainError> {
        if weights.len() != self.n_samples {
            return Err(TrainError::WeightCount {
                weights: weights.len(),
                samples: self.n_samples,
            });
        }
        let wq = quantize(weights);
        let (mut t_pos, mut t_neg) = (0u64, 0u64);
        for (w, &p) in wq.iter().zip(&self.positive) {
            if p {
                t_pos += w;
            } else {
                t_neg += w;
            }
        }
        let mut best: Option<WeakChoice> = None;
        let n = self.n_samples;
        for fi in 0..self.n_features {
            let cut = &self.cutoffs[fi * n..(fi + 1) * n];
            let ord = &self.order[fi * n..(fi + 1) * n];
            let (mut s_pos, mut s_neg) = (0u64, 0u64);
            let mut i = 0;
            // partition j: samples with cutoff <= v_j are below; j = 0 is "none below"
            let mut lo = i64::from(i32::MIN);
            loop {
                let next = if i < n { cut[i] } else { NEVER_BELOW };
                let hi = next.saturating_sub(1).min(i64::from(i32::MAX));
                if lo <= hi {
                    let theta = if i == 0 {
                        hi
                    } else if i == n {
                        (lo + i64::from(FIXED_ONE)).min(hi)
                    } else {
                        lo + (hi - lo) / 2
                    };
                    let e_plus = (t_pos - s_pos) + s_neg;
                    let e_minus = s_pos + (t_neg - s_neg);
                    for (err, below_is_positive) in [(e_plus, true), (e_minus, false)] {
                        if best.is_none_or(|b| err < b.error_q) {
                            best = Some(WeakChoice {
                                feature_index: fi,
                                threshold: theta as i32,
                                below_is_positive,
                                error_q: err,
                            });
                        }
                    }
                }
                if i == n {
                    break;
                }
                let v = cut[i];
                while i < n && cut[i] == v {
                    let s = ord[i] as usize;
                    if self.positive[s] {
                        s_pos += wq[s];
                    } else {
                        s_neg += wq[s];
                    }
                    i += 1;
                }
                lo = v.max(i64::from(i32::MIN));
            }
        }
        Ok(best.expect("at least one partition is always realizable"))
    }
}

/// One-shot stump search; builds a [`FeatureTable`] internally.
pub fn best_weak(features: &[HaarFeature], samples: &[Sample], weights: &[f64]) -> Result<(WeakChoice, f64), TrainError> {
    let choice = FeatureTable::new(features, samples)?.best(weights)?;
    let f = &features[choice.feature_index];
    let err = samples
        .iter()
        .zip(weights)
        .filter(|(s, _)| choice.predicts_positive(s.feature_value(f), s.sigma_n) != s.positive)
        .map(|(_, w)| w)
        .sum();
    Ok((choice, err))
}

/// Weight given to a round whose stump makes no error.
pub const PERFECT_ROUND_BETA: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct BoostRound {
    pub choice: WeakChoice,
    pub weak: WeakClassifier,
    pub error: f64,
    pub beta: f64,
    pub alpha: f64,
    /// Sum of the weights after this round's normalisation.
    pub normalized_sum: f64,
    pub perfect: bool,
}

/// Incremental AdaBoost over a fixed sample pool.
pub struct Booster<'a> {
    features: &'a [HaarFeature],
    samples: &'a [Sample],
    table: FeatureTable,
    weights: Vec<f64>,
    rounds: Vec<BoostRound>,
}

impl<'a> Booster<'a> {
    pub fn new(features: &'a [HaarFeature], samples: &'a [Sample]) -> Result<Self, TrainError> {
        let l = samples.iter().filter(|s| s.positive).count();
        let m = samples.len() - l;
        if l == 0 || m == 0 {
            return Err(if samples.is_empty() { TrainError::NoSamples } else { TrainError::NeedBothLabels });
        }
        let table = FeatureTable::new(features, samples)?;
        let weights = samples
            .iter()
            .map(|s| if s.positive { 0.5 / l as f64 } else { 0.5 / m as f64 })
            .collect();
        Ok(Booster {
            features,
            samples,
            table,
            weights,
            rounds: Vec::new(),
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn rounds(&self) -> &[BoostRound] {
        &self.rounds
    }

    /// Normalise, pick the best stump, reweight. A perfect stump gets
    /// [`PERFECT_ROUND_BETA`]; the caller decides whether to stop.
    pub fn step(&mut self) -> Result<&BoostRound, TrainError> {
        let total: f64 = self.weights.iter().sum();
        for w in &mut self.weights {
            *w /= total;
        }
        let normalized_sum = self.weights.iter().sum();
        let choice = self.table.best(&self.weights)?;
        let f = self.features[choice.feature_index];
        let correct: Vec<bool> = self
            .samples
            .iter()
            .map(|s| choice.predicts_positive(s.feature_value(&f), s.sigma_n) == s.positive)
            .collect();
        let error: f64 = self.weights.iter().zip(&correct).filter(|(_, &c)| !c).map(|(w, _)| w).sum();
        if error >= 0.5 {
            return Err(TrainError::NoBetterThanChance {
                round: self.rounds.len(),
                error,
            });
        }
        let perfect = error == 0.0;
        let beta = if perfect { PERFECT_ROUND_BETA } else { error / (1.0 - error) };
        let alpha = libm::log(1.0 / beta);
        for (w, &c) in self.weights.iter_mut().zip(&correct) {
            if c {
                *w *= beta;
            }
        }
        let alpha_q = (libm::round(alpha * f64::from(FIXED_ONE)) as i32).max(1);
        self.rounds.push(BoostRound {
            choice,
            weak: choice.classifier(f, alpha_q),
            error,
            beta,
            alpha,
            normalized_sum,
            perfect,
        });
        Ok(self.rounds.last().unwrap())
    }
}

/// `ceil(sum / 2)`: the integer form of `sum_votes >= sum_alpha / 2`.
pub fn half_alpha_threshold(weak: &[WeakClassifier]) -> i32 {
    let sum: i64 = weak.iter().map(|w| i64::from(w.left.max(w.right))).sum();
    (sum + 1).div_euclid(2) as i32
}

#[derive(Debug, Clone)]
pub struct BoostOutcome {
    pub stage: Stage,
    pub rounds: Vec<BoostRound>,
}

/// Up to `rounds` AdaBoost rounds; stops early after a perfect stump.
pub fn adaboost_train(samples: &[Sample], features: &[HaarFeature], rounds: usize) -> Result<BoostOutcome, TrainError> {
    if rounds == 0 {
        return Err(TrainError::NoRounds);
    }
    let mut b = Booster::new(features, samples)?;
    for _ in 0..rounds {
        if b.step()?.perfect {
            break;
        }
    }
    let weak: Vec<_> = b.rounds.iter().map(|r| r.weak).collect();
    let threshold = half_alpha_threshold(&weak);
    Ok(BoostOutcome {
        stage: Stage { weak, threshold },
        rounds: b.rounds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageTargets {
    pub d_min: f64,
    pub f_max: f64,
    pub max_stages: usize,
}

impl StageTargets {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.d_min > 0.0 && self.d_min <= 1.0) {
            return Err(TrainError::BadTargets("d_min must lie in (0, 1]"));
        }
        if !(self.f_max > 0.0 && self.f_max < 1.0) {
            return Err(TrainError::BadTargets("f_max must lie in (0, 1)"));
        }
        if self.max_stages == 0 {
            return Err(TrainError::BadTargets("max_stages must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeOptions {
    pub targets: StageTargets,
    /// Weak classifiers allowed per stage when growing against `f_max`.
    pub weak_budget: usize,
    /// Exact weak counts per stage; overrides `f_max` and `weak_budget`.
    pub schedule: Option<Vec<usize>>,
    /// Negative pool size to top up to from the [`NegativeSource`] before
    /// each stage; 0 disables refills.
    pub neg_pool: usize,
}

impl CascadeOptions {
    pub fn new(targets: StageTargets) -> Self {
        CascadeOptions {
            targets,
            weak_budget: 200,
            schedule: None,
            neg_pool: 0,
        }
    }
}

/// Supplies fresh negatives between stages.
pub trait NegativeSource {
    /// Up to `want` negative windows, preferably ones `cascade` still accepts.
    fn refill(&mut self, cascade: Option<&Cascade>, want: usize) -> Vec<Sample>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoRefill;

impl NegativeSource for NoRefill {
    fn refill(&mut self, _cascade: Option<&Cascade>, _want: usize) -> Vec<Sample> {
        Vec::new()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainWarning {
    NegativesExhausted { before_stage: usize },
    PositivesExhausted { before_stage: usize },
    WeakBudgetHit { stage: usize, fpr: f64 },
    /// Boosting found nothing better than chance; the stage was closed early.
    ChanceLevel { stage: usize, weak: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageRecord {
    pub weak: usize,
    pub threshold: i32,
    pub pos_pool: usize,
    pub neg_pool: usize,
    /// Training-pool pass rates after threshold adjustment.
    pub detection_rate: f64,
    pub false_positive_rate: f64,
    pub rounds: Vec<BoostRound>,
}

#[derive(Debug, Clone)]
pub struct CascadeTraining {
    pub cascade: Option<Cascade>,
    pub stages: Vec<StageRecord>,
    pub warnings: Vec<TrainWarning>,
}

pub fn train_cascade(
    pos: &[Sample],
    neg: &[Sample],
    targets: &StageTargets,
    features: &[HaarFeature],
) -> Result<CascadeTraining, TrainError> {
    train_cascade_with(pos, neg, features, &CascadeOptions::new(*targets), &mut NoRefill)
}

/// `k`-th largest of `sums` with `k = ceil(d_min * len)`, so at least a
/// `d_min` fraction of values is `>=` the result.
fn threshold_for_rate(sums: &[i64], d_min: f64) -> i64 {
    let mut sorted = sums.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let k = (libm::ceil(d_min * sorted.len() as f64 - 1e-9) as usize).clamp(1, sorted.len());
    sorted[k - 1]
}

/// Trains stages on the survivors of all earlier stages.
pub fn train_cascade_with(
    pos: &[Sample],
    neg: &[Sample],
    features: &[HaarFeature],
    opts: &CascadeOptions,
    source: &mut dyn NegativeSource,
) -> Result<CascadeTraining, TrainError> {
    opts.targets.validate()?;
    if pos.is_empty() || (neg.is_empty() && opts.neg_pool == 0) {
        return Err(TrainError::NeedBothLabels);
    }
    let dims = pos[0].dims();
    let n_stages = match &opts.schedule {
        Some(s) => s.len().min(opts.targets.max_stages),
        None => opts.targets.max_stages,
    };
    let mut pos_pool: Vec<Sample> = pos.to_vec();
    let mut neg_pool: Vec<Sample> = neg.iter().filter(|s| !s.positive).cloned().collect();
    let mut stages: Vec<Stage> = Vec::new();
    let mut records = Vec::new();
    let mut warnings = Vec::new();

    for si in 0..n_stages {
        let partial = (!stages.is_empty()).then(|| Cascade::new(dims.0, dims.1, stages.clone())).transpose()?;
        if opts.neg_pool > neg_pool.len() {
            let fresh = source.refill(partial.as_ref(), opts.neg_pool - neg_pool.len());
            neg_pool.extend(fresh.into_iter().filter(|s| s.dims() == dims));
        }
        if neg_pool.is_empty() {
            warnings.push(TrainWarning::NegativesExhausted { before_stage: si });
            break;
        }
        if pos_pool.is_empty() {
            warnings.push(TrainWarning::PositivesExhausted { before_stage: si });
            break;
        }
        for s in &mut neg_pool {
            s.positive = false;
        }
        let n_pos = pos_pool.len();
        let pool: Vec<Sample> = pos_pool.iter().chain(neg_pool.iter()).cloned().collect();
        let mut booster = Booster::new(features, &pool)?;
        let mut sums = alloc::vec![0i64; pool.len()];
        let mut threshold = 0i64;
        let mut fpr = 1.0;
        let mut dr = 1.0;
        loop {
            let step = booster.step().cloned();
            let round = match step {
                Ok(r) => r,
                Err(TrainError::NoBetterThanChance { .. }) if !booster.rounds().is_empty() => {
                    warnings.push(TrainWarning::ChanceLevel {
                        stage: si,
                        weak: booster.rounds().len(),
                    });
                    break;
                }
                Err(e) => return Err(e),
            };
            for (sum, s) in sums.iter_mut().zip(&pool) {
                *sum += i64::from(round.weak.vote(s.feature_value(&round.weak.feature), s.sigma_n));
            }
            threshold = threshold_for_rate(&sums[..n_pos], opts.targets.d_min);
            let passed = |range: &[i64]| range.iter().filter(|&&v| v >= threshold).count();
            dr = passed(&sums[..n_pos]) as f64 / n_pos as f64;
            fpr = passed(&sums[n_pos..]) as f64 / (pool.len() - n_pos) as f64;
            let t = booster.rounds().len();
            let done = match &opts.schedule {
                Some(s) => t >= s[si],
                None => {
                    if fpr > opts.targets.f_max && t >= opts.weak_budget {
                        warnings.push(TrainWarning::WeakBudgetHit { stage: si, fpr });
                    }
                    fpr <= opts.targets.f_max || t >= opts.weak_budget || round.perfect
                }
            };
            if done {
                break;
            }
        }
        let weak: Vec<_> = booster.rounds().iter().map(|r| r.weak).collect();
        let stage = Stage {
            weak,
            threshold: threshold.clamp(i64::from(i32::MIN), i64::from(i32::MAX)) as i32,
        };
        records.push(StageRecord {
            weak: stage.weak.len(),
            threshold: stage.threshold,
            pos_pool: n_pos,
            neg_pool: pool.len() - n_pos,
            detection_rate: dr,
            false_positive_rate: fpr,
            rounds: booster.rounds().to_vec(),
        });
        let keep = |s: &Sample| stage_passes(&stage, s);
        pos_pool.retain(keep);
        neg_pool.retain(keep);
        stages.push(stage);
    }
    let cascade = (!stages.is_empty()).then(|| Cascade::new(dims.0, dims.1, stages)).transpose()?;
    Ok(CascadeTraining {
        cascade,
        stages: records,
        warnings,
    })
}

fn stage_passes(stage: &Stage, s: &Sample) -> bool {
    let sum: i64 = stage
        .weak
        .iter()
        .map(|w| i64::from(w.vote(s.feature_value(&w.feature), s.sigma_n)))
        .sum();
    sum >= i64::from(stage.threshold)
}

/// Stages passed before the first rejection, and the margin at that stage
/// (`stage_sum - threshold`, negative on rejection).
pub fn cascade_depth(c: &Cascade, s: &Sample) -> (usize, i64) {
    for (i, stage) in c.stages.iter().enumerate() {
        let sum: i64 = stage
            .weak
            .iter()
            .map(|w| i64::from(w.vote(s.feature_value(&w.feature), s.sigma_n)))
            .sum();
        let margin = sum - i64::from(stage.threshold);
        if margin < 0 {
            return (i, margin);
        }
    }
    (c.stages.len(), 0)
}

/// `passed / seen` kept as integers so products stay exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageRate {
    pub passed: u64,
    pub seen: u64,
}

impl StageRate {
    pub fn value(&self) -> Option<f64> {
        (self.seen > 0).then(|| self.passed as f64 / self.seen as f64)
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Exact product of rates as a reduced fraction. Stages that saw no
/// samples are skipped: an empty set is neither passed nor rejected.
pub fn rate_product(rates: &[StageRate]) -> (u64, u64) {
    let (mut num, mut den) = (1u64, 1u64);
    for r in rates.iter().filter(|r| r.seen > 0) {
        let (p, s) = reduce(r.passed, r.seen);
        let g1 = gcd(num, s).max(1);
        let g2 = gcd(p, den).max(1);
        num = (num / g1) * (p / g2);
        den = (den / g2) * (s / g1);
        if num == 0 {
            den = 1;
        }
    }
    (num, den)
}

pub fn reduce(num: u64, den: u64) -> (u64, u64) {
    if num == 0 {
        return (0, 1);
    }
    let g = gcd(num, den);
    (num / g, den / g)
}

/// Floating-point product of per-stage rates.
pub fn product_of(rates: &[f64]) -> f64 {
    rates.iter().product()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeRates {
    pub detection_rate: f64,
    pub false_positive_rate: f64,
    pub accepted_pos: StageRate,
    pub accepted_neg: StageRate,
    /// Conditional `(d_i, f_i)` measured on survivors of the earlier stages.
    pub per_stage: Vec<(StageRate, StageRate)>,
}

impl CascadeRates {
    /// Exact products of the per-stage conditional rates.
    pub fn products(&self) -> ((u64, u64), (u64, u64)) {
        let d: Vec<_> = self.per_stage.iter().map(|r| r.0).collect();
        let f: Vec<_> = self.per_stage.iter().map(|r| r.1).collect();
        (rate_product(&d), rate_product(&f))
    }

    /// Whether the products equal the whole-cascade rates as fractions.
    pub fn products_match(&self) -> bool {
        let ((dn, dd), (fn_, fd)) = self.products();
        (dn, dd) == reduce(self.accepted_pos.passed, self.accepted_pos.seen)
            && (fn_, fd) == reduce(self.accepted_neg.passed, self.accepted_neg.seen)
    }
}

pub fn cascade_rates(c: &Cascade, pos: &[Sample], neg: &[Sample]) -> CascadeRates {
    let depth = |set: &[Sample]| -> Vec<usize> { set.iter().map(|s| cascade_depth(c, s).0).collect() };
    let (dp, dn) = (depth(pos), depth(neg));
    let n = c.stages.len();
    let per = |d: &[usize], i: usize| StageRate {
        passed: d.iter().filter(|&&k| k > i).count() as u64,
        seen: d.iter().filter(|&&k| k >= i).count() as u64,
    };
    let per_stage = (0..n).map(|i| (per(&dp, i), per(&dn, i))).collect();
    let all = |d: &[usize]| StageRate {
        passed: d.iter().filter(|&&k| k == n).count() as u64,
        seen: d.len() as u64,
    };
    let (accepted_pos, accepted_neg) = (all(&dp), all(&dn));
    CascadeRates {
        detection_rate: accepted_pos.value().unwrap_or(0.0),
        false_positive_rate: accepted_neg.value().unwrap_or(0.0),
        accepted_pos,
        accepted_neg,
        per_stage,
    }
}

/// Negative windows mined from face-free scenes.
///
/// Candidates are every window of every pyramid level, visited in a fixed
/// rotating order. A refill returns windows the current cascade accepts;
/// when a full pass finds too few, it tops up with the rejected windows
/// that got deepest into the cascade.
pub struct SceneNegatives {
    levels: Vec<GrayImage>,
    candidates: Vec<(u32, u32, u32)>,
    window: (usize, usize),
    cursor: usize,
}

impl SceneNegatives {
    pub fn new(scenes: &[GrayImage], window: (usize, usize), scale_factor: f64, step: usize) -> Self {
        let mut levels = Vec::new();
        let mut candidates = Vec::new();
        let step = step.max(1);
        for scene in scenes {
            let Ok(pyr) = build_pyramid(scene, scale_factor, window.0, window.1) else {
                continue;
            };
            for l in pyr {
                let id = levels.len() as u32;
                let rows = candidate_offsets(l.image.height(), window.1, step);
                for ci in candidate_offsets(l.image.width(), window.0, step) {
                    for ri in rows.clone() {
                        candidates.push((id, (ci * step) as u32, (ri * step) as u32));
                    }
                }
                levels.push(l.image);
            }
        }
        SceneNegatives {
            levels,
            candidates,
            window,
            cursor: 0,
        }
    }

    pub fn candidate_count(&self) -> usize {
        self.candidates.len()
    }

    fn sample_at(&self, idx: usize) -> Sample {
        let (l, x, y) = self.candidates[idx];
        let r = Rect::new(x as usize, y as usize, self.window.0, self.window.1);
        Sample::new(&self.levels[l as usize].crop(r).expect("candidate inside level"), false)
    }
}

impl NegativeSource for SceneNegatives {
    fn refill(&mut self, cascade: Option<&Cascade>, want: usize) -> Vec<Sample> {
        let total = self.candidates.len();
        if total == 0 || want == 0 {
            return Vec::new();
        }
        let mut out = Vec::new();
        // min-heap of the hardest rejects: (depth, margin, earliest visit)
        let mut hardest: BinaryHeap<Reverse<(usize, i64, Reverse<usize>)>> = BinaryHeap::new();
        let mut visited = 0;
        while visited < total && out.len() < want {
            let idx = (self.cursor + visited) % total;
            visited += 1;
            let s = self.sample_at(idx);
            match cascade {
                None => out.push(s),
                Some(c) => {
                    let (depth, margin) = cascade_depth(c, &s);
                    if depth == c.stages.len() {
                        out.push(s);
                    } else {
                        hardest.push(Reverse((depth, margin, Reverse(idx))));
                        if hardest.len() > want {
                            hardest.pop();
                        }
                    }
                }
            }
        }
        self.cursor = (self.cursor + visited) % total;
        if out.len() < want {
            let mut rest: Vec<_> = hardest.into_iter().map(|Reverse(k)| k).collect();
            rest.sort_unstable_by(|a, b| b.cmp(a));
            out.extend(rest.into_iter().take(want - out.len()).map(|(_, _, Reverse(i))| self.sample_at(i)));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::testutil::random_feature;
    use alloc::vec;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn count_oracle(ww: usize, wh: usize) -> usize {
        let mut n = 0;
        for &(bw, bh) in &TEMPLATES {
            for x in 0..ww {
                for y in 0..wh {
                    for w in 1..=ww - x {
                        for h in 1..=wh - y {
                            if w % bw == 0 && h % bh == 0 {
                                n += 1;
                            }
                        }
                    }
                }
            }
        }
        n
    }

    #[test]
    fn exhaustive_enumeration_matches_brute_force_count() {
        for (w, h) in [(4, 4), (5, 3), (6, 6)] {
            assert_eq!(enumerate_features((w, h), 1, 1).unwrap().len(), count_oracle(w, h));
        }
    }

    #[test]
    fn features_fit_and_are_zero_mean() {
        for (stride, step) in [(1, 1), (2, 3), (4, 2)] {
            for f in enumerate_features((24, 24), stride, step).unwrap() {
                f.validate(24, 24).unwrap();
                assert_eq!(f.weighted_area(), 0);
            }
        }
        assert_eq!(enumerate_features((24, 24), 0, 1), Err(TrainError::BadGrid));
    }

    #[test]
    fn cutoff_agrees_with_weak_test() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20_000 {
            let value = rng.gen_range(-300_000i64..300_000);
            let sn = if rng.gen_bool(0.05) { 0 } else { rng.gen_range(1u64..200_000) };
            let c = below_cutoff(value, sn);
            for theta in [-5, 0, 7, 4096, -4096, 100_000, i32::MIN, i32::MAX] {
                let theta = theta as i64;
                let expect = is_below(value, theta as i32, sn);
                assert_eq!(theta >= c, expect, "v={value} sn={sn} theta={theta} c={c}");
            }
            if c != ALWAYS_BELOW && c != NEVER_BELOW {
                assert!(is_below(value, c as i32, sn));
                assert!(c == i64::from(i32::MIN) || !is_below(value, (c - 1) as i32, sn));
            }
        }
    }

    /// 3x1 window `[100, 100 + v, 200]`; the bright third pixel keeps the
    /// deviation nearly constant so normalised values keep their order.
    fn line_sample(v: i64, positive: bool) -> Sample {
        let img = GrayImage::from_fn(3, 1, |x, _| [100, (100 + v) as u8, 200][x]);
        Sample::new(&img, positive)
    }

    fn line_feature() -> HaarFeature {
        HaarFeature::two(WeightedRect::new(0, 0, 1, 1, -1), WeightedRect::new(1, 0, 1, 1, 1))
    }

    #[test]
    fn separable_single_feature() {
        let samples = vec![
            line_sample(1, false),
            line_sample(2, false),
            line_sample(10, true),
            line_sample(11, true),
        ];
        let w = vec![0.25; 4];
        let (c, err) = best_weak(&[line_feature()], &samples, &w).unwrap();
        assert_eq!(err, 0.0);
        assert!(!c.below_is_positive);
        for s in &samples {
            assert_eq!(c.predicts_positive(s.feature_value(&line_feature()), s.sigma_n), s.positive);
        }
    }

    #[test]
    fn all_weight_on_one_sample_ties_to_first_feature() {
        // with all weight on one sample every feature has a zero-error stump
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let samples: Vec<Sample> = (0..6)
            .map(|i| Sample::new(&GrayImage::from_fn(4, 4, |_, _| rng.gen()), i == 0))
            .collect();
        let feats: Vec<_> = (0..5).map(|_| random_feature(&mut rng, 4, 4)).collect();
        let mut w = vec![0.0; 6];
        w[0] = 1.0;
        let (c, err) = best_weak(&feats, &samples, &w).unwrap();
        assert_eq!(c.feature_index, 0);
        assert_eq!(err, 0.0);
    }

    #[test]
    fn degenerate_weight_on_misclassified_sample() {
        // identical windows with opposite labels: no stump separates them
        let img = GrayImage::from_fn(3, 1, |x, _| x as u8 * 50);
        let samples = vec![Sample::new(&img, true), Sample::new(&img, false), line_sample(3, false)];
        let feats = vec![line_feature(), line_feature()];
        let w = vec![0.0, 1.0, 0.0];
        let (c, err) = best_weak(&feats, &samples, &w).unwrap();
        // either sample 1 is right or sample 0 is; all weight on sample 1 means error 0
        assert_eq!(err, 0.0);
        assert_eq!(c.feature_index, 0);
        let w = vec![0.5, 0.5, 0.0];
        let (c, err) = best_weak(&feats, &samples, &w).unwrap();
        assert_eq!(err, 0.5);
        assert_eq!(c.feature_index, 0);
    }

    #[test]
    fn argument_errors() {
        let s = vec![line_sample(1, true)];
        assert_eq!(best_weak(&[], &s, &[1.0]).unwrap_err(), TrainError::NoFeatures);
        assert_eq!(best_weak(&[line_feature()], &[], &[]).unwrap_err(), TrainError::NoSamples);
        assert_eq!(adaboost_train(&s, &[line_feature()], 1).unwrap_err(), TrainError::NeedBothLabels);
    }

    /// Exhaustive search: every threshold near every sample's boundary,
    /// both polarities, error summed directly over samples.
    fn exhaustive_best(features: &[HaarFeature], samples: &[Sample], weights: &[f64]) -> (usize, u64, Vec<bool>) {
        let wq = quantize(weights);
        let mut best: Option<(u64, usize, i64, bool)> = None;
        for (fi, f) in features.iter().enumerate() {
            let mut thetas = vec![i64::from(i32::MIN), i64::from(i32::MAX)];
            for s in samples {
                let v = s.feature_value(f);
                if s.sigma_n > 0 {
                    let q = libm::floor(v as f64 * 4096.0 / s.sigma_n as f64) as i64;
                    thetas.extend((q - 1)..=(q + 2));
                }
            }
            thetas.retain(|t| *t >= i64::from(i32::MIN) && *t <= i64::from(i32::MAX));
            thetas.sort_unstable();
            thetas.dedup();
            for &t in &thetas {
                for pol in [true, false] {
                    let err: u64 = samples
                        .iter()
                        .zip(&wq)
                        .filter(|(s, _)| (is_below(s.feature_value(f), t as i32, s.sigma_n) == pol) != s.positive)
                        .map(|(_, w)| *w)
                        .sum();
                    let key = (err, fi, t, !pol);
                    if best.is_none_or(|b| (key.0, key.1, key.2, key.3) < (b.0, b.1, b.2, !b.3)) {
                        best = Some((err, fi, t, pol));
                    }
                }
            }
        }
        let (err, fi, t, pol) = best.unwrap();
        let preds = samples
            .iter()
            .map(|s| is_below(s.feature_value(&features[fi]), t as i32, s.sigma_n) == pol)
            .collect();
        (fi, err, preds)
    }

    fn random_instance(rng: &mut ChaCha8Rng, n: usize, nf: usize) -> (Vec<HaarFeature>, Vec<Sample>, Vec<f64>) {
        let feats: Vec<_> = (0..nf).map(|_| random_feature(rng, 6, 6)).collect();
        let samples: Vec<_> = (0..n)
            .map(|_| {
                let flat = rng.gen_bool(0.05);
                let base: u8 = rng.gen();
                let img = GrayImage::from_fn(6, 6, |_, _| if flat { base } else { rng.gen_range(0..=255) });
                Sample::new(&img, rng.gen_bool(0.5))
            })
            .collect();
        let mut w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
        let t: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= t);
        (feats, samples, w)
    }

    #[test]
    fn best_weak_matches_exhaustive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..50 {
            let (feats, samples, w) = random_instance(&mut rng, 20, 30);
            let (c, _) = best_weak(&feats, &samples, &w).unwrap();
            let (fi, err, preds) = exhaustive_best(&feats, &samples, &w);
            assert_eq!(c.error_q, err);
            assert_eq!(c.feature_index, fi);
            let ours: Vec<bool> = samples
                .iter()
                .map(|s| c.predicts_positive(s.feature_value(&feats[fi]), s.sigma_n))
                .collect();
            assert_eq!(ours, preds);
        }
    }

    #[test]
    fn one_round_separates_four_samples() {
        let samples = vec![
            line_sample(1, false),
            line_sample(2, false),
            line_sample(10, true),
            line_sample(11, true),
        ];
        let out = adaboost_train(&samples, &[line_feature()], 1).unwrap();
        assert_eq!(out.rounds.len(), 1);
        assert!(out.rounds[0].perfect);
        assert!((out.rounds[0].alpha - libm::log(1e12)).abs() < 1e-9);
        for s in &samples {
            assert_eq!(stage_passes(&out.stage, s), s.positive);
        }
    }

    #[test]
    fn chance_level_aborts() {
        let a = GrayImage::from_fn(3, 1, |x, _| x as u8 * 30);
        let samples = vec![Sample::new(&a, true), Sample::new(&a, false)];
        assert!(matches!(
            adaboost_train(&samples, &[line_feature()], 2),
            Err(TrainError::NoBetterThanChance { round: 0, .. })
        ));
    }

    fn training_error(stage: &Stage, samples: &[Sample]) -> f64 {
        samples.iter().filter(|s| stage_passes(stage, s) != s.positive).count() as f64 / samples.len() as f64
    }

    fn blob_samples(rng: &mut ChaCha8Rng, n: usize) -> Vec<Sample> {
        (0..n)
            .map(|i| {
                let positive = i % 2 == 0;
                let img = GrayImage::from_fn(8, 8, |x, y| {
                    let base: i32 = if positive && x < 4 && y < 5 { 60 } else { 120 };
                    (base + rng.gen_range(-50..50)).clamp(0, 255) as u8
                });
                Sample::new(&img, positive)
            })
            .collect()
    }

    #[test]
    fn boosting_beats_each_weak_learner() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let samples = blob_samples(&mut rng, 40);
        let feats = enumerate_features((8, 8), 2, 2).unwrap();
        let out = adaboost_train(&samples, &feats, 3).unwrap();
        let strong = training_error(&out.stage, &samples);
        for r in &out.rounds {
            let single = samples
                .iter()
                .filter(|s| r.choice.predicts_positive(s.feature_value(&r.weak.feature), s.sigma_n) != s.positive)
                .count() as f64
                / samples.len() as f64;
            assert!(strong <= single, "strong {strong} vs weak {single}");
        }
    }

    #[test]
    fn round_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let samples = blob_samples(&mut rng, 60);
        let feats = enumerate_features((8, 8), 1, 2).unwrap();
        let mut b = Booster::new(&feats, &samples).unwrap();
        for _ in 0..10 {
            let before: Vec<f64> = {
                let t: f64 = b.weights().iter().sum();
                b.weights().iter().map(|w| w / t).collect()
            };
            let r = b.step().unwrap().clone();
            assert!((r.normalized_sum - 1.0).abs() < 1e-12);
            assert!(r.error < 0.5 && r.beta > 0.0 && r.beta < 1.0 && r.alpha > 0.0);
            for ((s, w0), w1) in samples.iter().zip(&before).zip(b.weights()) {
                let correct = r.choice.predicts_positive(s.feature_value(&r.weak.feature), s.sigma_n) == s.positive;
                if correct {
                    assert!(*w1 <= *w0);
                } else {
                    assert_eq!(w1, w0);
                }
            }
        }
    }

    #[test]
    fn training_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let samples = blob_samples(&mut rng, 40);
        let feats = enumerate_features((8, 8), 2, 1).unwrap();
        let a = adaboost_train(&samples, &feats, 4).unwrap();
        let b = adaboost_train(&samples, &feats, 4).unwrap();
        assert_eq!(a.stage, b.stage);
    }

    #[test]
    fn loose_targets_give_one_stage() {
        let samples = vec![
            line_sample(1, false),
            line_sample(2, false),
            line_sample(10, true),
            line_sample(11, true),
        ];
        let (pos, neg): (Vec<_>, Vec<_>) = samples.into_iter().partition(|s| s.positive);
        let t = StageTargets { d_min: 1.0, f_max: 0.99, max_stages: 1 };
        let out = train_cascade(&pos, &neg, &t, &[line_feature()]).unwrap();
        let c = out.cascade.unwrap();
        assert_eq!(c.stages.len(), 1);
        assert_eq!(cascade_rates(&c, &pos, &neg).detection_rate, 1.0);
    }

    #[test]
    fn rejected_negatives_end_training_with_warning() {
        let pos = vec![line_sample(10, true), line_sample(11, true)];
        let neg = vec![line_sample(1, false), line_sample(2, false)];
        let t = StageTargets { d_min: 1.0, f_max: 0.5, max_stages: 4 };
        let out = train_cascade(&pos, &neg, &t, &[line_feature()]).unwrap();
        assert_eq!(out.stages.len(), 1);
        assert_eq!(out.warnings, vec![TrainWarning::NegativesExhausted { before_stage: 1 }]);
    }

    #[test]
    fn schedule_sets_exact_weak_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let samples = blob_samples(&mut rng, 80);
        let (pos, _): (Vec<_>, Vec<_>) = samples.into_iter().partition(|s| s.positive);
        let scenes: Vec<_> = (0..3).map(|_| GrayImage::from_fn(20, 16, |_, _| rng.gen_range(60..180))).collect();
        let mut src = SceneNegatives::new(&scenes, (8, 8), 1.25, 2);
        let feats = enumerate_features((8, 8), 2, 2).unwrap();
        let mut opts = CascadeOptions::new(StageTargets { d_min: 0.95, f_max: 0.5, max_stages: 3 });
        opts.schedule = Some(vec![1, 2, 3]);
        opts.neg_pool = 30;
        let out = train_cascade_with(&pos, &[], &feats, &opts, &mut src).unwrap();
        let c = out.cascade.unwrap();
        assert_eq!(c.stages.iter().map(|s| s.weak.len()).collect::<Vec<_>>(), vec![1, 2, 3]);
        for r in &out.stages {
            assert!(r.detection_rate >= 0.95);
            assert_eq!(r.neg_pool, 30);
        }
    }

    #[test]
    fn scene_refill_prefers_accepted_then_hardest() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let scenes = vec![GrayImage::from_fn(12, 12, |_, _| rng.gen())];
        let mut src = SceneNegatives::new(&scenes, (8, 8), 2.0, 1);
        assert_eq!(src.candidate_count(), 25);
        assert_eq!(src.refill(None, 30).len(), 25);
        // a stage that rejects everything falls back to the hardest rejects
        let reject = Stage {
            weak: vec![WeakClassifier { feature: line_feature(), threshold: 0, left: 0, right: 0 }],
            threshold: 1,
        };
        let c = Cascade::new(8, 8, vec![reject]).unwrap();
        assert_eq!(src.refill(Some(&c), 5).len(), 5);
    }

    #[test]
    fn rate_products() {
        let d = product_of(&[0.998; 25]);
        assert!((d - 0.951).abs() < 5e-4, "{d}");
        assert!((product_of(&[0.99; 10]) - 0.904).abs() < 5e-4);
        assert!((product_of(&[0.5; 10]) - 9.77e-4).abs() < 1e-6);
        let r = [StageRate { passed: 8, seen: 10 }, StageRate { passed: 4, seen: 8 }, StageRate { passed: 0, seen: 0 }];
        assert_eq!(rate_product(&r), (2, 5));
    }

    #[test]
    fn accept_all_rates() {
        let pos = vec![line_sample(3, true)];
        let neg = vec![line_sample(4, false), line_sample(5, false)];
        let always = Stage {
            weak: vec![WeakClassifier { feature: line_feature(), threshold: 0, left: 1, right: 1 }],
            threshold: 1,
        };
        let c = Cascade::new(3, 1, vec![always]).unwrap();
        let r = cascade_rates(&c, &pos, &neg);
        assert_eq!((r.detection_rate, r.false_positive_rate), (1.0, 1.0));
        assert!(r.products_match());
    }

    proptest! {
        #[test]
        fn conditional_rates_multiply_to_cascade_rates(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = crate::cascade::testutil::random_cascade(&mut rng, 6, 6);
            let mk = |rng: &mut ChaCha8Rng, p| Sample::new(&GrayImage::from_fn(6, 6, |_, _| rng.gen()), p);
            let pos: Vec<_> = (0..rng.gen_range(1..40)).map(|_| mk(&mut rng, true)).collect();
            let neg: Vec<_> = (0..rng.gen_range(1..40)).map(|_| mk(&mut rng, false)).collect();
            let r = cascade_rates(&c, &pos, &neg);
            prop_assert!(r.products_match());
        }
    }
}
