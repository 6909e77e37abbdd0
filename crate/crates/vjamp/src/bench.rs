//! Corpus evaluation and (step, scale, frequency) sweeps.

use serde::Serialize;
use vjamp_core::amp::{build_detection_dag, energy_of, simulate, AmpError, DagCosts, PlatformModel, Policy};
use vjamp_core::detect::DetectError;
use vjamp_core::metrics::{match_detections, precision_recall, EvalCounts};
use vjamp_core::{Cascade, DetectParams, Rect};

use crate::manifest::LabeledImage;
use crate::parallel::detect_timed;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Amp(#[from] AmpError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageEval {
    pub counts: EvalCounts,
    pub detections: Vec<Rect>,
    pub windows_scanned: u64,
    pub weak_evals: u64,
    pub integral_value: u64,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorpusEval {
    pub counts: EvalCounts,
    pub windows_scanned: u64,
    pub weak_evals: u64,
    pub elapsed_s: f64,
    pub per_image: Vec<ImageEval>,
}

pub fn evaluate_corpus(
    c: &Cascade,
    corpus: &[LabeledImage],
    p: &DetectParams,
    workers: usize,
    iou_min: f64,
) -> Result<CorpusEval, DetectError> {
    let mut total = CorpusEval::default();
    for item in corpus {
        let r = detect_timed(&item.image, c, p, workers)?;
        let dets: Vec<Rect> = r.outcome.detections.iter().map(|d| d.rect()).collect();
        let counts = match_detections(&dets, &item.faces, iou_min);
        total.counts += counts;
        total.windows_scanned += r.outcome.windows_scanned;
        total.weak_evals += r.outcome.weak_evals;
        total.elapsed_s += r.elapsed_s;
        total.per_image.push(ImageEval {
            counts,
            detections: dets,
            windows_scanned: r.outcome.windows_scanned,
            weak_evals: r.outcome.weak_evals,
            integral_value: r.outcome.integral_value,
            elapsed_s: r.elapsed_s,
        });
    }
    Ok(total)
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{:.2}%", v * 100.0))
}

/// Text summary with the columns of a precision/recall table.
pub fn eval_table(name: &str, e: &CorpusEval) -> String {
    let (p, r) = precision_recall(&e.counts);
    format!(
        "{:<14} {:>7} {:>7} {:>6} {:>6} {:>6} {:>10} {:>10} {:>11} {:>10}\n{:<14} {:>7} {:>7} {:>6} {:>6} {:>6} {:>10} {:>10} {:>11} {:>10.3}\n",
        "corpus", "images", "faces", "TP", "FP", "FN", "precision", "recall", "total_error", "time_s",
        name,
        e.per_image.len(),
        e.counts.total_faces,
        e.counts.tp,
        e.counts.fp,
        e.counts.fn_,
        pct(p),
        pct(r),
        e.counts.total_error(),
        e.elapsed_s,
    )
}

/// One sweep cell, written with the header
/// `policy,big_mhz,little_mhz,step,scale,makespan_s,joules,avg_w,total_error`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRecord {
    pub policy: String,
    pub big_mhz: u32,
    pub little_mhz: u32,
    pub step: usize,
    pub scale: f64,
    pub makespan_s: f64,
    pub joules: f64,
    pub avg_w: f64,
    pub total_error: usize,
}

/// A sweep cell with the measured columns alongside the simulated ones.
/// The first nine columns are those of [`SweepRecord`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepDetail {
    pub policy: String,
    pub big_mhz: u32,
    pub little_mhz: u32,
    pub step: usize,
    pub scale: f64,
    pub makespan_s: f64,
    pub joules: f64,
    pub avg_w: f64,
    pub total_error: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub windows_scanned: u64,
    pub weak_evals: u64,
    pub workers: usize,
    pub elapsed_s: f64,
    /// Simulated makespan over measured wall time; reported, not checked.
    pub sim_over_measured: f64,
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub steps: Vec<usize>,
    pub scales: Vec<f64>,
    pub big_freqs: Vec<u32>,
    pub little_mhz: u32,
    pub policies: Vec<Policy>,
    pub platform: PlatformModel,
    pub base: DetectParams,
    pub workers: usize,
    pub iou_min: f64,
    pub block: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            steps: vec![1, 2, 3, 4],
            scales: vec![1.1, 1.2, 1.3, 1.4, 1.5],
            big_freqs: vec![2000],
            little_mhz: 1400,
            policies: vec![Policy::Botlev { little_steals: false }],
            platform: PlatformModel::default(),
            base: DetectParams::default(),
            workers: 1,
            iou_min: 0.4,
            block: 8,
        }
    }
}

/// Simulated time and energy of detecting every corpus image, with scan
/// costs taken from the measured weak evaluations per window.
fn simulate_corpus(
    corpus: &[LabeledImage],
    eval: &CorpusEval,
    p: &DetectParams,
    platform: &PlatformModel,
    policy: Policy,
    block: usize,
) -> Result<(f64, f64), AmpError> {
    let mut makespan = 0.0;
    let mut joules = 0.0;
    for (item, e) in corpus.iter().zip(&eval.per_image) {
        let mut costs = DagCosts::default();
        if e.windows_scanned > 0 {
            costs.weak_evals_per_window = e.weak_evals as f64 / e.windows_scanned as f64;
        }
        let g = build_detection_dag(item.image.width(), item.image.height(), p, block, &costs)?;
        let s = simulate(&g, platform, policy)?;
        makespan += s.makespan;
        joules += energy_of(&s, platform)?.total_j;
    }
    Ok((makespan, joules))
}

impl SweepDetail {
    pub fn record(&self) -> SweepRecord {
        SweepRecord {
            policy: self.policy.clone(),
            big_mhz: self.big_mhz,
            little_mhz: self.little_mhz,
            step: self.step,
            scale: self.scale,
            makespan_s: self.makespan_s,
            joules: self.joules,
            avg_w: self.avg_w,
            total_error: self.total_error,
        }
    }
}

/// Cells run one after another, steps outermost.
pub fn run_sweep(c: &Cascade, corpus: &[LabeledImage], cfg: &SweepConfig) -> Result<Vec<SweepDetail>, BenchError> {
    let platforms = cfg
        .big_freqs
        .iter()
        .map(|&f| cfg.platform.at(f, cfg.little_mhz))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = Vec::new();
    for &step in &cfg.steps {
        for &scale in &cfg.scales {
            let p = DetectParams {
                step,
                scale_factor: scale,
                ..cfg.base
            };
            let eval = evaluate_corpus(c, corpus, &p, cfg.workers, cfg.iou_min)?;
            for platform in &platforms {
                for &policy in &cfg.policies {
                    let (makespan, joules) = simulate_corpus(corpus, &eval, &p, platform, policy, cfg.block)?;
                    out.push(SweepDetail {
                        policy: policy.name().to_string(),
                        big_mhz: platform.big_mhz,
                        little_mhz: platform.little_mhz,
                        step,
                        scale,
                        makespan_s: makespan,
                        joules,
                        avg_w: if makespan > 0.0 { joules / makespan } else { 0.0 },
                        total_error: eval.counts.total_error(),
                        fp: eval.counts.fp,
                        fn_: eval.counts.fn_,
                        windows_scanned: eval.windows_scanned,
                        weak_evals: eval.weak_evals,
                        workers: cfg.workers,
                        elapsed_s: eval.elapsed_s,
                        sim_over_measured: if eval.elapsed_s > 0.0 { makespan / eval.elapsed_s } else { 0.0 },
                    });
                }
            }
        }
    }
    Ok(out)
}
