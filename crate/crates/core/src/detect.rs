//! Multi-scale sliding-window detection.
//!
//! The image is reduced level by level while the detection window stays at
//! the cascade's native size. Each level's candidate columns are split into
//! contiguous blocks, one per worker, so a parallel executor only has to run
//! independent [`ScanJob`]s and hand the results back in job order.

use alloc::vec::Vec;
use core::ops::Range;

use crate::cascade::{Cascade, EvalCounters};
use crate::image::{build_pyramid, pyramid_shape, GrayImage, ImageError, IntegralPair, Rect};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DetectError {
    #[error("scale factor must be > 1, got {0}")]
    ScaleFactor(f64),
    #[error("step must be >= 1")]
    Step,
    #[error("minimum window {got} is below the 24 pixel base window")]
    MinWindow { got: usize },
    #[error("group overlap must lie in (0, 1], got {0}")]
    Overlap(f64),
    #[error("at least one worker is required")]
    Workers,
    #[error("RIT is undefined for an image without faces")]
    NoFaces,
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectParams {
    pub scale_factor: f64,
    pub step: usize,
    pub min_window: usize,
    pub group_min_neighbors: usize,
    pub group_overlap: f64,
}

impl Default for DetectParams {
    fn default() -> Self {
        DetectParams {
            scale_factor: 1.2,
            step: 1,
            min_window: 24,
            group_min_neighbors: 2,
            group_overlap: 0.4,
        }
    }
}

impl DetectParams {
    pub fn validate(&self) -> Result<(), DetectError> {
        if !(self.scale_factor.is_finite() && self.scale_factor > 1.0) {
            return Err(DetectError::ScaleFactor(self.scale_factor));
        }
        if self.step == 0 {
            return Err(DetectError::Step);
        }
        if self.min_window < 24 {
            return Err(DetectError::MinWindow {
                got: self.min_window,
            });
        }
        if !(self.group_overlap > 0.0 && self.group_overlap <= 1.0) {
            return Err(DetectError::Overlap(self.group_overlap));
        }
        Ok(())
    }

    /// Pyramid stops once a level is smaller than this in either axis.
    fn min_dims(&self, c: &Cascade) -> (usize, usize) {
        (self.min_window.max(c.window_w), self.min_window.max(c.window_h))
    }
}

/// A window in original-image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Detection {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    pub scale_level: usize,
    /// Number of merged raw windows; 0 for a raw detection.
    pub score: usize,
}

impl Detection {
    pub fn rect(&self) -> Rect {
        Rect::new(self.x, self.y, self.w, self.h)
    }
}

/// Candidate origins along one axis: `0, step, 2*step, ..` up to `extent - window`.
pub fn candidate_offsets(extent: usize, window: usize, step: usize) -> Range<usize> {
    if extent < window || step == 0 {
        0..0
    } else {
        0..(extent - window) / step + 1
    }
}

/// Splits `n` candidates into `parts` contiguous blocks whose sizes differ by
/// at most one. Empty blocks are kept so block `i` always belongs to worker `i`.
pub fn partition(n: usize, parts: usize) -> Vec<Range<usize>> {
    let parts = parts.max(1);
    let base = n / parts;
    let extra = n % parts;
    let mut start = 0;
    (0..parts)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// All origins where the cascade accepts, x outer and y inner.
pub fn scan_scale(c: &Cascade, ip: &IntegralPair, step: usize) -> Vec<(usize, usize)> {
    let cols = candidate_offsets(ip.width(), c.window_w, step);
    scan_columns(c, ip, step, cols, &mut EvalCounters::default())
}

/// Scans candidate columns `cols` (indices, not pixels) of one level.
pub fn scan_columns(
    c: &Cascade,
    ip: &IntegralPair,
    step: usize,
    cols: Range<usize>,
    counters: &mut EvalCounters,
) -> Vec<(usize, usize)> {
    let rows = candidate_offsets(ip.height(), c.window_h, step);
    let mut hits = Vec::new();
    for ci in cols {
        let x = ci * step;
        for ri in rows.clone() {
            let y = ri * step;
            if c.run_unchecked(ip, (x, y), counters) {
                hits.push((x, y));
            }
        }
    }
    hits
}

/// Every origin visited at `step`, accepted or not.
pub fn scanned_origins(width: usize, height: usize, window: (usize, usize), step: usize) -> Vec<(usize, usize)> {
    let rows = candidate_offsets(height, window.1, step);
    candidate_offsets(width, window.0, step)
        .flat_map(|ci| rows.clone().map(move |ri| (ci * step, ri * step)))
        .collect()
}

/// One pyramid level, ready to scan.
#[derive(Debug, Clone)]
pub struct PreparedLevel {
    pub scale: f64,
    pub integral: IntegralPair,
}

/// A contiguous block of candidate columns of one level, owned by one worker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanJob {
    pub level: usize,
    pub worker: usize,
    pub cols: Range<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BlockScan {
    pub origins: Vec<(usize, usize)>,
    pub counters: EvalCounters,
}

/// Runs scan jobs and returns their results in job order.
pub trait ScanExecutor {
    fn execute(
        &self,
        workers: usize,
        jobs: &[ScanJob],
        run: &(dyn Fn(&ScanJob) -> BlockScan + Sync),
    ) -> Vec<BlockScan>;
}

/// Runs every job on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl ScanExecutor for Sequential {
    fn execute(
        &self,
        _workers: usize,
        jobs: &[ScanJob],
        run: &(dyn Fn(&ScanJob) -> BlockScan + Sync),
    ) -> Vec<BlockScan> {
        jobs.iter().map(run).collect()
    }
}

/// Pyramid plus integral images for one image; the sequential prologue of
/// every detection run.
#[derive(Debug, Clone)]
pub struct ScanPlan {
    pub width: usize,
    pub height: usize,
    pub levels: Vec<PreparedLevel>,
    pub integral_value: u64,
}

impl ScanPlan {
    pub fn new(img: &GrayImage, c: &Cascade, p: &DetectParams) -> Result<Self, DetectError> {
        p.validate()?;
        let (min_w, min_h) = p.min_dims(c);
        let levels = build_pyramid(img, p.scale_factor, min_w, min_h)?
            .into_iter()
            .map(|l| PreparedLevel {
                scale: l.scale,
                integral: IntegralPair::new(&l.image),
            })
            .collect::<Vec<_>>();
        let integral_value = match levels.first() {
            Some(l0) => l0.integral.integral_value(),
            None => IntegralPair::new(img).integral_value(),
        };
        Ok(ScanPlan {
            width: img.width(),
            height: img.height(),
            levels,
            integral_value,
        })
    }

    /// Static schedule: each level's columns split into `workers` blocks.
    pub fn jobs(&self, c: &Cascade, step: usize, workers: usize) -> Vec<ScanJob> {
        let mut jobs = Vec::new();
        for (level, l) in self.levels.iter().enumerate() {
            let n = candidate_offsets(l.integral.width(), c.window_w, step).len();
            for (worker, cols) in partition(n, workers).into_iter().enumerate() {
                jobs.push(ScanJob { level, worker, cols });
            }
        }
        jobs
    }

    pub fn run_job(&self, c: &Cascade, step: usize, job: &ScanJob) -> BlockScan {
        let mut counters = EvalCounters::default();
        let origins = scan_columns(c, &self.levels[job.level].integral, step, job.cols.clone(), &mut counters);
        BlockScan { origins, counters }
    }

    /// Maps a level origin back to the original image, clamped in-bounds.
    pub fn to_original(&self, c: &Cascade, level: usize, origin: (usize, usize)) -> Detection {
        let s = self.levels[level].scale;
        let w = (libm::round(c.window_w as f64 * s) as usize).clamp(1, self.width);
        let h = (libm::round(c.window_h as f64 * s) as usize).clamp(1, self.height);
        let x = (libm::round(origin.0 as f64 * s) as usize).min(self.width - w);
        let y = (libm::round(origin.1 as f64 * s) as usize).min(self.height - h);
        Detection {
            x,
            y,
            w,
            h,
            scale_level: level,
            score: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectOutcome {
    pub detections: Vec<Detection>,
    pub raw: Vec<Detection>,
    pub integral_value: u64,
    pub windows_scanned: u64,
    pub weak_evals: u64,
    pub levels: usize,
}

/// Full detection through an executor. `workers == 1` with [`Sequential`]
/// is the reference path; any executor and worker count yields the same
/// detections.
pub fn detect_with(
    img: &GrayImage,
    c: &Cascade,
    p: &DetectParams,
    workers: usize,
    exec: &dyn ScanExecutor,
) -> Result<DetectOutcome, DetectError> {
    if workers == 0 {
        return Err(DetectError::Workers);
    }
    let plan = ScanPlan::new(img, c, p)?;
    let jobs = plan.jobs(c, p.step, workers);
    let results = exec.execute(workers, &jobs, &|job: &ScanJob| plan.run_job(c, p.step, job));
    let mut counters = EvalCounters::default();
    let mut raw = Vec::new();
    for (job, block) in jobs.iter().zip(results) {
        counters += block.counters;
        raw.extend(block.origins.iter().map(|&o| plan.to_original(c, job.level, o)));
    }
    let detections = group_detections(&raw, p.group_min_neighbors, p.group_overlap);
    Ok(DetectOutcome {
        detections,
        raw,
        integral_value: plan.integral_value,
        windows_scanned: counters.windows,
        weak_evals: counters.weak_evals,
        levels: plan.levels.len(),
    })
}

pub fn detect(img: &GrayImage, c: &Cascade, p: &DetectParams) -> Result<DetectOutcome, DetectError> {
    detect_with(img, c, p, 1, &Sequential)
}

/// Number of windows a detection run visits, without running the cascade.
pub fn count_windows(width: usize, height: usize, c: &Cascade, p: &DetectParams) -> Result<u64, DetectError> {
    p.validate()?;
    let (min_w, min_h) = p.min_dims(c);
    Ok(pyramid_shape(width, height, p.scale_factor, min_w, min_h)?
        .iter()
        .map(|&(w, h, _)| {
            (candidate_offsets(w, c.window_w, p.step).len() * candidate_offsets(h, c.window_h, p.step).len()) as u64
        })
        .sum())
}

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller index stays root so class order follows first member
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Merges boxes into classes by transitive `IoU >= overlap`, drops classes
/// smaller than `min_neighbors`, and replaces each class by its mean box
/// (floor of the mean corners) scored with the class size. Output follows
/// each class's first member.
pub fn group_detections(raw: &[Detection], min_neighbors: usize, overlap: f64) -> Vec<Detection> {
    let n = raw.len();
    let mut sets = DisjointSets::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if raw[i].rect().iou(&raw[j].rect()) >= overlap {
                sets.union(i, j);
            }
        }
    }
    let mut members: Vec<Vec<usize>> = alloc::vec![Vec::new(); n];
    for i in 0..n {
        let r = sets.find(i);
        members[r].push(i);
    }
    members
        .into_iter()
        .filter(|m| !m.is_empty() && m.len() >= min_neighbors)
        .map(|m| {
            let k = m.len();
            let mean = |f: &dyn Fn(&Detection) -> usize| m.iter().map(|&i| f(&raw[i])).sum::<usize>() / k;
            let x0 = mean(&|d| d.x);
            let y0 = mean(&|d| d.y);
            let x1 = mean(&|d| d.x + d.w);
            let y1 = mean(&|d| d.y + d.h);
            let level = raw[m[0]].scale_level;
            Detection {
                x: x0,
                y: y0,
                w: (x1 - x0).max(1),
                h: (y1 - y0).max(1),
                scale_level: level,
                score: k,
            }
        })
        .collect()
}

/// `elapsed * integral_value / faces`.
pub fn rit(elapsed_s: f64, integral_value: u64, n_faces: usize) -> Result<f64, DetectError> {
    if n_faces == 0 {
        return Err(DetectError::NoFaces);
    }
    Ok(elapsed_s * integral_value as f64 / n_faces as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::testutil::random_cascade;
    use crate::cascade::{HaarFeature, Stage, WeakClassifier, WeightedRect};
    use alloc::vec;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn accept_all() -> Cascade {
        let f = HaarFeature::two(WeightedRect::new(0, 0, 12, 24, -1), WeightedRect::new(12, 0, 12, 24, 1));
        Cascade::new(
            24,
            24,
            vec![Stage {
                weak: vec![WeakClassifier {
                    feature: f,
                    threshold: 0,
                    left: 1,
                    right: 1,
                }],
                threshold: 0,
            }],
        )
        .unwrap()
    }

    /// Executor that runs jobs in reverse to prove the merge is order-independent.
    struct Reversed;

    impl ScanExecutor for Reversed {
        fn execute(
            &self,
            _workers: usize,
            jobs: &[ScanJob],
            run: &(dyn Fn(&ScanJob) -> BlockScan + Sync),
        ) -> Vec<BlockScan> {
            let mut out: Vec<_> = jobs.iter().rev().map(run).collect();
            out.reverse();
            out
        }
    }

    #[test]
    fn window_sized_image_has_one_origin() {
        let ip = IntegralPair::new(&GrayImage::filled(24, 24, 9));
        assert_eq!(scan_scale(&accept_all(), &ip, 1), vec![(0, 0)]);
    }

    #[test]
    fn origin_counts_follow_stride() {
        let ip = IntegralPair::new(&GrayImage::filled(26, 26, 9));
        assert_eq!(scan_scale(&accept_all(), &ip, 1).len(), 9);
        assert_eq!(scan_scale(&accept_all(), &ip, 2), vec![(0, 0), (0, 2), (2, 0), (2, 2)]);
    }

    #[test]
    fn scan_order_is_x_outer() {
        let ip = IntegralPair::new(&GrayImage::filled(25, 26, 9));
        assert_eq!(
            scan_scale(&accept_all(), &ip, 1),
            vec![(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2)]
        );
    }

    #[test]
    fn partition_is_contiguous_and_balanced() {
        let parts = partition(10, 4);
        assert_eq!(parts, vec![0..3, 3..6, 6..8, 8..10]);
        assert_eq!(partition(2, 4), vec![0..1, 1..2, 2..2, 2..2]);
    }

    #[test]
    fn blank_image_with_accept_all_groups_into_one_box() {
        let img = GrayImage::filled(30, 30, 0);
        let out = detect(&img, &accept_all(), &DetectParams::default()).unwrap();
        // 30x30 then 25x25 (floor(30/1.2)); the next level is below 24
        assert_eq!(out.levels, 2);
        assert_eq!(out.windows_scanned, 49 + 4);
        assert_eq!(out.detections.len(), 1);
        assert_eq!(out.detections[0].score, 53);
    }

    #[test]
    fn small_image_gives_empty_report() {
        let out = detect(&GrayImage::filled(20, 40, 0), &accept_all(), &DetectParams::default()).unwrap();
        assert!(out.detections.is_empty());
        assert_eq!(out.windows_scanned, 0);
        assert_eq!(out.levels, 0);
    }

    #[test]
    fn invalid_params() {
        let img = GrayImage::filled(30, 30, 0);
        let c = accept_all();
        let bad = [
            DetectParams { scale_factor: 1.0, ..Default::default() },
            DetectParams { step: 0, ..Default::default() },
            DetectParams { min_window: 20, ..Default::default() },
            DetectParams { group_overlap: 0.0, ..Default::default() },
        ];
        for p in bad {
            assert!(detect(&img, &c, &p).is_err());
        }
        assert_eq!(
            detect_with(&img, &c, &DetectParams::default(), 0, &Sequential).unwrap_err(),
            DetectError::Workers
        );
    }

    #[test]
    fn level_origins_map_back_inside_image() {
        let img = GrayImage::filled(50, 37, 0);
        let c = accept_all();
        let plan = ScanPlan::new(&img, &c, &DetectParams::default()).unwrap();
        for (level, l) in plan.levels.iter().enumerate() {
            for o in scanned_origins(l.integral.width(), l.integral.height(), (24, 24), 1) {
                let d = plan.to_original(&c, level, o);
                assert!(d.rect().fits(50, 37));
                assert_eq!(d.w, libm::round(24.0 * l.scale) as usize);
                assert_eq!(d.w, d.h);
            }
        }
    }

    #[test]
    fn group_empty_and_identical() {
        assert!(group_detections(&[], 2, 0.4).is_empty());
        let d = Detection { x: 3, y: 4, w: 24, h: 24, scale_level: 0, score: 0 };
        let g = group_detections(&[d, d, d], 2, 0.4);
        assert_eq!(g, vec![Detection { score: 3, ..d }]);
        assert!(group_detections(&[d], 2, 0.4).is_empty());
    }

    fn union_find_oracle(raw: &[Detection], overlap: f64) -> Vec<Vec<usize>> {
        // repeated relaxation of class labels until fixpoint
        let n = raw.len();
        let mut label: Vec<usize> = (0..n).collect();
        loop {
            let mut changed = false;
            for i in 0..n {
                for j in 0..n {
                    if raw[i].rect().iou(&raw[j].rect()) >= overlap && label[j] < label[i] {
                        label[i] = label[j];
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let mut classes: Vec<Vec<usize>> = Vec::new();
        for i in 0..n {
            if label[i] == i {
                classes.push((0..n).filter(|&j| label[j] == i).collect());
            }
        }
        classes
    }

    #[test]
    fn grouping_matches_transitive_closure_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.gen_range(0..25);
            let raw: Vec<Detection> = (0..n)
                .map(|_| {
                    let s = rng.gen_range(20..40);
                    Detection { x: rng.gen_range(0..60), y: rng.gen_range(0..60), w: s, h: s, scale_level: 0, score: 0 }
                })
                .collect();
            let min_n = rng.gen_range(1..4);
            let got = group_detections(&raw, min_n, 0.4);
            let expected: Vec<Detection> = union_find_oracle(&raw, 0.4)
                .into_iter()
                .filter(|c| c.len() >= min_n)
                .map(|c| {
                    let k = c.len();
                    let x0 = c.iter().map(|&i| raw[i].x).sum::<usize>() / k;
                    let y0 = c.iter().map(|&i| raw[i].y).sum::<usize>() / k;
                    let x1 = c.iter().map(|&i| raw[i].x + raw[i].w).sum::<usize>() / k;
                    let y1 = c.iter().map(|&i| raw[i].y + raw[i].h).sum::<usize>() / k;
                    Detection { x: x0, y: y0, w: x1 - x0, h: y1 - y0, scale_level: 0, score: k }
                })
                .collect();
            assert_eq!(got, expected);
        }
    }

    #[test]
    fn rit_formula() {
        assert_eq!(rit(2.0, 1000, 1).unwrap(), 2000.0);
        assert_eq!(rit(2.0, 1000, 2).unwrap(), 1000.0);
        assert_eq!(rit(2.0, 2000, 1).unwrap(), 2.0 * rit(2.0, 1000, 1).unwrap());
        assert_eq!(rit(1.0, 5, 0), Err(DetectError::NoFaces));
    }

    proptest! {
        #[test]
        fn worker_count_never_changes_detections(seed in any::<u64>(), workers in 2usize..9) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = random_cascade(&mut rng, 24, 24);
            let (w, h) = (rng.gen_range(24..60), rng.gen_range(24..60));
            let img = GrayImage::from_fn(w, h, |_, _| rng.gen());
            let p = DetectParams { step: rng.gen_range(1..4), group_min_neighbors: 1, ..Default::default() };
            let reference = detect(&img, &c, &p).unwrap();
            let other = detect_with(&img, &c, &p, workers, &Reversed).unwrap();
            prop_assert_eq!(&reference, &other);
            prop_assert!(reference.windows_scanned >= reference.raw.len() as u64);
            for d in &reference.detections {
                prop_assert!(d.rect().fits(w, h));
            }
        }

        #[test]
        fn coarser_step_scans_a_subset(w in 24usize..80, h in 24usize..80) {
            let fine = scanned_origins(w, h, (24, 24), 1);
            let coarse = scanned_origins(w, h, (24, 24), 2);
            prop_assert!(coarse.iter().all(|o| fine.contains(o)));
        }

        #[test]
        fn work_is_monotone_in_step_and_scale(w in 24usize..200, h in 24usize..200) {
            let c = accept_all();
            let count = |step, scale_factor| {
                count_windows(w, h, &c, &DetectParams { step, scale_factor, ..Default::default() }).unwrap()
            };
            prop_assert!(count(1, 1.2) >= count(2, 1.2));
            prop_assert!(count(2, 1.2) >= count(3, 1.2));
            prop_assert!(count(1, 1.1) >= count(1, 1.3));
        }
    }
}
