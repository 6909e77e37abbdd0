//! Haar features, weak and strong classifiers, and cascade evaluation.
//!
//! Thresholds and contributions are signed fixed point with
//! [`FIXED_SHIFT`](crate::FIXED_SHIFT) fractional bits. A weak classifier
//! compares the raw feature sum against `threshold * sigma_n`, where
//! `sigma_n` is the window's `N * sigma`, so variance normalisation never
//! needs a division.

use alloc::vec::Vec;
use core::ops::AddAssign;

use crate::image::{BoundsError, IntegralPair, Rect};
use crate::FIXED_SHIFT;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("feature needs at least two rectangles")]
    TooFewRects,
    #[error("rectangle {rect:?} does not fit the {window_w}x{window_h} window")]
    RectOutsideWindow {
        rect: Rect,
        window_w: usize,
        window_h: usize,
    },
    #[error("stage {0} has no weak classifiers")]
    EmptyStage(usize),
    #[error("cascade has no stages")]
    NoStages,
    #[error("window must be at least 1x1")]
    EmptyWindow,
}

/// One rectangle of a feature with its integer weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WeightedRect {
    pub rect: Rect,
    pub weight: i32,
}

impl WeightedRect {
    pub const fn new(x: usize, y: usize, w: usize, h: usize, weight: i32) -> Self {
        WeightedRect {
            rect: Rect::new(x, y, w, h),
            weight,
        }
    }
}

/// Weighted sum of up to three rectangle sums.
///
/// Two-rectangle features leave the third slot empty. The four-rectangle
/// checkerboard is expressed with overlap: the whole block at weight -1 and
/// two diagonal quadrants at weight +2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HaarFeature {
    pub rects: [Option<WeightedRect>; 3],
}

impl HaarFeature {
    pub fn two(a: WeightedRect, b: WeightedRect) -> Self {
        HaarFeature {
            rects: [Some(a), Some(b), None],
        }
    }

    pub fn three(a: WeightedRect, b: WeightedRect, c: WeightedRect) -> Self {
        HaarFeature {
            rects: [Some(a), Some(b), Some(c)],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &WeightedRect> {
        self.rects.iter().flatten()
    }

    pub fn validate(&self, window_w: usize, window_h: usize) -> Result<(), ModelError> {
        if self.iter().count() < 2 {
            return Err(ModelError::TooFewRects);
        }
        match self.iter().find(|r| !r.rect.fits(window_w, window_h)) {
            Some(r) => Err(ModelError::RectOutsideWindow {
                rect: r.rect,
                window_w,
                window_h,
            }),
            None => Ok(()),
        }
    }

    /// `sum(weight_i * area_i)`; zero for features insensitive to a constant offset.
    pub fn weighted_area(&self) -> i64 {
        self.iter()
            .map(|r| i64::from(r.weight) * r.rect.area() as i64)
            .sum()
    }

    /// Bounding box of all rectangles.
    pub fn extent(&self) -> (usize, usize) {
        self.iter().fold((0, 0), |(w, h), r| {
            (w.max(r.rect.right()), h.max(r.rect.bottom()))
        })
    }

    /// Feature value with the window's top-left at `origin`.
    pub fn eval(&self, ip: &IntegralPair, origin: (usize, usize)) -> Result<i64, BoundsError> {
        let mut acc = 0i64;
        for r in self.iter() {
            let sum = ip.rect_sum(r.rect.translate(origin.0, origin.1), false)?;
            acc += i64::from(r.weight) * sum as i64;
        }
        Ok(acc)
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, ip: &IntegralPair, origin: (usize, usize)) -> i64 {
        let mut acc = 0i64;
        for r in self.iter() {
            acc += i64::from(r.weight) * ip.sum_unchecked(r.rect.translate(origin.0, origin.1)) as i64;
        }
        acc
    }
}

/// Single-feature threshold test returning one of two fixed-point votes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WeakClassifier {
    pub feature: HaarFeature,
    pub threshold: i32,
    pub left: i32,
    pub right: i32,
}

impl WeakClassifier {
    /// `left` when `value < threshold * sigma_n` (in fixed point), else `right`.
    #[inline]
    pub fn vote(&self, value: i64, sigma_n: u64) -> i32 {
        if is_below(value, self.threshold, sigma_n) {
            self.left
        } else {
            self.right
        }
    }

    /// The same decision with threshold and feature weights negated and the
    /// votes swapped. Equal votes on every input except exact ties, where
    /// `<` becomes `<=`.
    pub fn inverted(&self) -> WeakClassifier {
        let mut feature = self.feature;
        for r in feature.rects.iter_mut().flatten() {
            r.weight = -r.weight;
        }
        WeakClassifier {
            feature,
            threshold: -self.threshold,
            left: self.right,
            right: self.left,
        }
    }
}

/// `value < threshold * sigma_n / 2^FIXED_SHIFT`, exactly.
#[inline]
pub fn is_below(value: i64, threshold: i32, sigma_n: u64) -> bool {
    i128::from(value) << FIXED_SHIFT < i128::from(threshold) * i128::from(sigma_n)
}

/// Strong classifier: sum the votes and compare once.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Stage {
    pub weak: Vec<WeakClassifier>,
    pub threshold: i32,
}

/// Ordered stages over a fixed detection window.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Cascade {
    pub window_w: usize,
    pub window_h: usize,
    pub stages: Vec<Stage>,
}

/// Per-worker evaluation tally; merged with `+=` after a parallel region.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalCounters {
    pub windows: u64,
    pub stages: u64,
    pub weak_evals: u64,
    pub accepted: u64,
}

impl AddAssign for EvalCounters {
    fn add_assign(&mut self, rhs: Self) {
        self.windows += rhs.windows;
        self.stages += rhs.stages;
        self.weak_evals += rhs.weak_evals;
        self.accepted += rhs.accepted;
    }
}

impl Cascade {
    pub fn new(window_w: usize, window_h: usize, stages: Vec<Stage>) -> Result<Self, ModelError> {
        let c = Cascade {
            window_w,
            window_h,
            stages,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.window_w == 0 || self.window_h == 0 {
            return Err(ModelError::EmptyWindow);
        }
        if self.stages.is_empty() {
            return Err(ModelError::NoStages);
        }
        for (i, s) in self.stages.iter().enumerate() {
            if s.weak.is_empty() {
                return Err(ModelError::EmptyStage(i));
            }
            for wc in &s.weak {
                wc.feature.validate(self.window_w, self.window_h)?;
            }
        }
        Ok(())
    }

    pub fn weak_count(&self) -> usize {
        self.stages.iter().map(|s| s.weak.len()).sum()
    }

    pub fn window_area(&self) -> usize {
        self.window_w * self.window_h
    }

    /// Indices of stages that hold more weak classifiers than a later stage.
    /// Trained cascades usually grow monotonically; this is a lint, not an error.
    pub fn non_monotone_stages(&self) -> Vec<usize> {
        let sizes: Vec<usize> = self.stages.iter().map(|s| s.weak.len()).collect();
        (0..sizes.len())
            .filter(|&i| sizes[i + 1..].iter().any(|&later| later < sizes[i]))
            .collect()
    }

    fn window_rect(&self, origin: (usize, usize)) -> Rect {
        Rect::new(origin.0, origin.1, self.window_w, self.window_h)
    }

    pub fn check_window(&self, ip: &IntegralPair, origin: (usize, usize)) -> Result<(), BoundsError> {
        let r = self.window_rect(origin);
        if r.fits(ip.width(), ip.height()) {
            Ok(())
        } else {
            Err(BoundsError {
                x: r.x,
                y: r.y,
                w: r.w,
                h: r.h,
                width: ip.width(),
                height: ip.height(),
            })
        }
    }

    /// `N * sigma` of the window at `origin`.
    pub fn sigma_n(&self, ip: &IntegralPair, origin: (usize, usize)) -> Result<u64, BoundsError> {
        self.check_window(ip, origin)?;
        Ok(ip.window_stddev_unchecked(self.window_rect(origin)))
    }

    /// Early-exit evaluation; stops at the first failing stage.
    pub fn run(
        &self,
        ip: &IntegralPair,
        origin: (usize, usize),
        counters: Option<&mut EvalCounters>,
    ) -> Result<bool, BoundsError> {
        self.check_window(ip, origin)?;
        let mut local = EvalCounters::default();
        let accepted = self.run_unchecked(ip, origin, &mut local);
        if let Some(c) = counters {
            *c += local;
        }
        Ok(accepted)
    }

    /// Caller guarantees the window at `origin` lies inside `ip`.
    #[inline]
    pub(crate) fn run_unchecked(
        &self,
        ip: &IntegralPair,
        origin: (usize, usize),
        counters: &mut EvalCounters,
    ) -> bool {
        counters.windows += 1;
        let sigma_n = ip.window_stddev_unchecked(self.window_rect(origin));
        for stage in &self.stages {
            counters.stages += 1;
            counters.weak_evals += stage.weak.len() as u64;
            let mut stage_sum = 0i64;
            for wc in &stage.weak {
                let value = wc.feature.eval_unchecked(ip, origin);
                stage_sum += i64::from(wc.vote(value, sigma_n));
            }
            if stage_sum < i64::from(stage.threshold) {
                return false;
            }
        }
        counters.accepted += 1;
        true
    }

    /// Evaluates every stage without early exit; returns each stage's
    /// `(stage_sum, passed)`.
    pub fn run_all_stages(
        &self,
        ip: &IntegralPair,
        origin: (usize, usize),
    ) -> Result<Vec<(i64, bool)>, BoundsError> {
        let sigma_n = self.sigma_n(ip, origin)?;
        self.stages
            .iter()
            .map(|s| eval_stage(s, ip, origin, sigma_n))
            .collect()
    }
}

pub fn eval_feature(f: &HaarFeature, ip: &IntegralPair, origin: (usize, usize)) -> Result<i64, BoundsError> {
    f.eval(ip, origin)
}

pub fn eval_weak(
    wc: &WeakClassifier,
    ip: &IntegralPair,
    origin: (usize, usize),
    sigma_n: u64,
) -> Result<i32, BoundsError> {
    Ok(wc.vote(wc.feature.eval(ip, origin)?, sigma_n))
}

/// `(stage_sum, stage_sum >= threshold)`.
pub fn eval_stage(
    s: &Stage,
    ip: &IntegralPair,
    origin: (usize, usize),
    sigma_n: u64,
) -> Result<(i64, bool), BoundsError> {
    let mut sum = 0i64;
    for wc in &s.weak {
        sum += i64::from(eval_weak(wc, ip, origin, sigma_n)?);
    }
    Ok((sum, sum >= i64::from(s.threshold)))
}

pub fn run_cascade(
    c: &Cascade,
    ip: &IntegralPair,
    origin: (usize, usize),
    counters: Option<&mut EvalCounters>,
) -> Result<bool, BoundsError> {
    c.run(ip, origin, counters)
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use rand::Rng;

    /// Random feature with 2 or 3 rectangles inside a `w x h` window.
    pub fn random_feature(rng: &mut impl Rng, w: usize, h: usize) -> HaarFeature {
        let rect = |rng: &mut dyn rand::RngCore| {
            let x = rng.gen_range(0..w);
            let y = rng.gen_range(0..h);
            WeightedRect::new(
                x,
                y,
                rng.gen_range(1..=w - x),
                rng.gen_range(1..=h - y),
                rng.gen_range(-3..=3),
            )
        };
        let a = rect(rng);
        let b = rect(rng);
        if rng.gen_bool(0.5) {
            HaarFeature::two(a, b)
        } else {
            let c = rect(rng);
            HaarFeature::three(a, b, c)
        }
    }

    pub fn random_weak(rng: &mut impl Rng, w: usize, h: usize) -> WeakClassifier {
        WeakClassifier {
            feature: random_feature(rng, w, h),
            threshold: rng.gen_range(-4 * 4096..4 * 4096),
            left: rng.gen_range(-4096..4096),
            right: rng.gen_range(-4096..4096),
        }
    }

    pub fn random_cascade(rng: &mut impl Rng, w: usize, h: usize) -> Cascade {
        let n_stages = rng.gen_range(1..6);
        let stages = (0..n_stages)
            .map(|_| {
                let weak: Vec<_> = (0..rng.gen_range(1..6)).map(|_| random_weak(rng, w, h)).collect();
                // thresholds spread around the reachable range so both outcomes occur
                let threshold = rng.gen_range(-4096 * weak.len() as i32..=4096 * weak.len() as i32) / 2;
                Stage { weak, threshold }
            })
            .collect();
        Cascade::new(w, h, stages).unwrap()
    }
}
