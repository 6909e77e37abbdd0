//! Threaded scanning and timed detection.

use std::time::Instant;

use vjamp_core::detect::{detect_with, BlockScan, DetectError, DetectOutcome, ScanExecutor, ScanJob, Sequential};
use vjamp_core::{Cascade, DetectParams, GrayImage};

/// One scoped thread per worker; worker `k` runs its jobs in order.
#[derive(Debug, Clone, Copy, Default)]
pub struct Threaded;

impl ScanExecutor for Threaded {
    fn execute(
        &self,
        workers: usize,
        jobs: &[ScanJob],
        run: &(dyn Fn(&ScanJob) -> BlockScan + Sync),
    ) -> Vec<BlockScan> {
        if workers <= 1 {
            return Sequential.execute(workers, jobs, run);
        }
        let per_worker: Vec<Vec<(usize, BlockScan)>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    s.spawn(move || {
                        jobs.iter()
                            .enumerate()
                            .filter(|(_, j)| j.worker == w)
                            .map(|(i, j)| (i, run(j)))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("scan worker panicked")).collect()
        });
        let mut slots: Vec<Option<BlockScan>> = vec![None; jobs.len()];
        for (i, b) in per_worker.into_iter().flatten() {
            slots[i] = Some(b);
        }
        slots.into_iter().map(|b| b.expect("every job has a worker")).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectReport {
    pub outcome: DetectOutcome,
    pub workers: usize,
    /// Wall time of the whole call.
    pub elapsed_s: f64,
}

pub fn detect_timed(img: &GrayImage, c: &Cascade, p: &DetectParams, workers: usize) -> Result<DetectReport, DetectError> {
    let t0 = Instant::now();
    let outcome = detect_with(img, c, p, workers, &Threaded)?;
    Ok(DetectReport {
        outcome,
        workers,
        elapsed_s: t0.elapsed().as_secs_f64(),
    })
}

/// `VJ_THREADS` if set to a positive integer, else the hardware thread count.
pub fn default_workers() -> usize {
    std::env::var("VJ_THREADS")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or_else(hardware_threads)
}

pub fn hardware_threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Real execution path: `platform_workers` cores mapped onto at most as
/// many threads as the host offers (0 means all of them).
pub fn parallel_detect_bridge(
    img: &GrayImage,
    c: &Cascade,
    p: &DetectParams,
    platform_workers: usize,
) -> Result<DetectReport, DetectError> {
    let hw = hardware_threads();
    let workers = if platform_workers == 0 { hw } else { platform_workers.min(hw) };
    detect_timed(img, c, p, workers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use vjamp_core::detect::detect;
    use vjamp_core::{HaarFeature, Stage, WeakClassifier, WeightedRect};

    fn edge_cascade() -> Cascade {
        let f = HaarFeature::two(WeightedRect::new(0, 0, 12, 24, -1), WeightedRect::new(12, 0, 12, 24, 1));
        Cascade::new(
            24,
            24,
            vec![Stage {
                weak: vec![WeakClassifier {
                    feature: f,
                    threshold: 100,
                    left: 0,
                    right: 1,
                }],
                threshold: 1,
            }],
        )
        .unwrap()
    }

    #[test]
    fn threaded_matches_sequential() {
        let img = crate::synth::background(&mut crate::synth::rng(11), 90, 70);
        let c = edge_cascade();
        let p = DetectParams::default();
        let reference = detect(&img, &c, &p).unwrap();
        assert!(!reference.raw.is_empty());
        for workers in [1, 2, 3, 4, 8, 13] {
            let r = detect_timed(&img, &c, &p, workers).unwrap();
            assert_eq!(r.outcome, reference, "workers={workers}");
        }
    }

    #[test]
    fn bridge_with_one_worker_is_sequential() {
        let img = crate::synth::background(&mut crate::synth::rng(12), 60, 50);
        let c = edge_cascade();
        let p = DetectParams::default();
        let r = parallel_detect_bridge(&img, &c, &p, 1).unwrap();
        assert_eq!(r.workers, 1);
        assert_eq!(r.outcome, detect(&img, &c, &p).unwrap());
    }
}
