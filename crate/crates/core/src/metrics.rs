//! Detection matching and precision/recall.

use alloc::vec::Vec;

use crate::image::Rect;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub total_faces: usize,
}

impl EvalCounts {
    /// Builds counts from the false positive/negative figures of a face set.
    pub fn from_errors(fp: usize, fn_: usize, total_faces: usize) -> Self {
        EvalCounts {
            tp: total_faces.saturating_sub(fn_),
            fp,
            fn_,
            total_faces,
        }
    }

    pub fn total_error(&self) -> usize {
        self.fp + self.fn_
    }
}

impl core::ops::AddAssign for EvalCounts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.total_faces += o.total_faces;
    }
}

/// Greedy one-to-one matching by descending IoU. Pairs with IoU at least
/// `iou_min` are true positives; ties go to the lower detection index, then
/// the lower truth index.
pub fn match_detections(dets: &[Rect], truth: &[Rect], iou_min: f64) -> EvalCounts {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, d) in dets.iter().enumerate() {
        for (j, t) in truth.iter().enumerate() {
            let iou = d.iou(t);
            if iou >= iou_min {
                pairs.push((iou, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut det_used = alloc::vec![false; dets.len()];
    let mut truth_used = alloc::vec![false; truth.len()];
    let mut tp = 0;
    for (_, i, j) in pairs {
        if !det_used[i] && !truth_used[j] {
            det_used[i] = true;
            truth_used[j] = true;
            tp += 1;
        }
    }
    EvalCounts {
        tp,
        fp: dets.len() - tp,
        fn_: truth.len() - tp,
        total_faces: truth.len(),
    }
}

/// Precision and recall as fractions; `None` where the denominator is zero.
pub fn precision_recall(c: &EvalCounts) -> (Option<f64>, Option<f64>) {
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    (ratio(c.tp, c.tp + c.fp), ratio(c.tp, c.tp + c.fn_))
}
