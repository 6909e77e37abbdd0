//! JSON, CSV, DOT, SVG and annotated-image output.

use std::fmt::Write;

use serde::Serialize;
use vjamp_core::amp::{EnergyReport, ScheduleResult, TaskGraph, TaskKind};
use vjamp_core::{Detection, GrayImage, Rect};

use crate::parallel::DetectReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct DetectionJson {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    pub score: usize,
}

impl From<&Detection> for DetectionJson {
    fn from(d: &Detection) -> Self {
        DetectionJson {
            x: d.x,
            y: d.y,
            w: d.w,
            h: d.h,
            score: d.score,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DetectReportJson {
    pub width: usize,
    pub height: usize,
    pub step: usize,
    pub scale_factor: f64,
    pub levels: usize,
    pub windows_scanned: u64,
    pub weak_evals: u64,
    pub integral_value: u64,
    pub raw_detections: usize,
    pub elapsed_s: f64,
    pub detections: Vec<DetectionJson>,
}

impl DetectReportJson {
    pub fn new(r: &DetectReport, dims: (usize, usize), step: usize, scale_factor: f64) -> Self {
        let o = &r.outcome;
        DetectReportJson {
            width: dims.0,
            height: dims.1,
            step,
            scale_factor,
            levels: o.levels,
            windows_scanned: o.windows_scanned,
            weak_evals: o.weak_evals,
            integral_value: o.integral_value,
            raw_detections: o.raw.len(),
            elapsed_s: r.elapsed_s,
            detections: o.detections.iter().map(DetectionJson::from).collect(),
        }
    }
}

/// One `{"x":..,"y":..,"w":..,"h":..,"score":..}` object per line.
pub fn detections_jsonl(dets: &[Detection]) -> String {
    let mut out = String::new();
    for d in dets {
        out.push_str(&serde_json::to_string(&DetectionJson::from(d)).expect("plain struct"));
        out.push('\n');
    }
    out
}

/// Gray image as RGB with 1-pixel box outlines at intensity 255.
pub fn annotate(img: &GrayImage, boxes: &[Rect]) -> Vec<u8> {
    let (w, h) = img.dims();
    let mut rgb: Vec<u8> = img.as_raw().iter().flat_map(|&p| [p, p, p]).collect();
    let mut put = |x: usize, y: usize| {
        if x < w && y < h {
            rgb[(y * w + x) * 3..][..3].copy_from_slice(&[255, 255, 255]);
        }
    };
    for r in boxes {
        if r.w == 0 || r.h == 0 {
            continue;
        }
        for x in r.x..r.right() {
            put(x, r.y);
            put(x, r.bottom() - 1);
        }
        for y in r.y..r.bottom() {
            put(r.x, y);
            put(r.right() - 1, y);
        }
    }
    rgb
}

pub fn dag_dot(g: &TaskGraph) -> String {
    let mut out = String::from("digraph detection {\n  rankdir=TB;\n");
    for n in g.nodes() {
        let (label, shape) = match n.kind {
            TaskKind::Downscale => ("downscale", "box"),
            TaskKind::Integral => ("integral", "box"),
            TaskKind::ScanBlock => ("scan", "ellipse"),
            TaskKind::Reduce => ("reduce", "doubleoctagon"),
        };
        writeln!(
            out,
            "  t{} [label=\"{} {} L{}\\nwork={:.0}\", shape={}];",
            n.id, label, n.id, n.level, n.work, shape
        )
        .unwrap();
    }
    for n in g.nodes() {
        for d in &n.deps {
            writeln!(out, "  t{} -> t{};", d, n.id).unwrap();
        }
    }
    out.push_str("}\n");
    out
}

/// Per-task schedule rows.
pub fn schedule_csv(s: &ScheduleResult) -> Result<String, csv::Error> {
    #[derive(Serialize)]
    struct Row {
        task: usize,
        core: usize,
        start_s: f64,
        finish_s: f64,
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for t in 0..s.assignment.len() {
        w.serialize(Row {
            task: t,
            core: s.assignment[t],
            start_s: s.start[t],
            finish_s: s.finish[t],
        })?;
    }
    Ok(String::from_utf8(w.into_inner().expect("vec writer")).expect("utf8 csv"))
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyRow {
    pub policy: String,
    pub big_mhz: u32,
    pub little_mhz: u32,
    pub makespan_s: f64,
    pub joules: f64,
    pub avg_w: f64,
    pub big_busy_s: f64,
    pub big_spin_s: f64,
    pub big_idle_s: f64,
    pub little_busy_s: f64,
    pub little_spin_s: f64,
    pub little_idle_s: f64,
}

impl EnergyRow {
    pub fn new(policy: &str, s: &ScheduleResult, e: &EnergyReport) -> Self {
        EnergyRow {
            policy: policy.to_string(),
            big_mhz: s.big_mhz,
            little_mhz: s.little_mhz,
            makespan_s: e.makespan,
            joules: e.total_j,
            avg_w: e.avg_w,
            big_busy_s: e.big.busy_s,
            big_spin_s: e.big.spin_s,
            big_idle_s: e.big.idle_s,
            little_busy_s: e.little.busy_s,
            little_spin_s: e.little.spin_s,
            little_idle_s: e.little.idle_s,
        }
    }
}

pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner().expect("vec writer")).expect("utf8 csv"))
}

/// A labelled point for [`scatter_svg`].
#[derive(Debug, Clone)]
pub struct ScatterPoint {
    pub x: f64,
    pub y: f64,
    pub label: String,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Minimal scatter plot with axes, tick values and a label per point.
pub fn scatter_svg(title: &str, x_label: &str, y_label: &str, points: &[ScatterPoint]) -> String {
    let (width, height, margin) = (640.0, 480.0, 60.0);
    let span = |vals: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo < 1e-12 {
            (lo - 0.5, hi + 0.5)
        } else {
            let pad = (hi - lo) * 0.05;
            (lo - pad, hi + pad)
        }
    };
    let (x0, x1) = span(&mut points.iter().map(|p| p.x));
    let (y0, y1) = span(&mut points.iter().map(|p| p.y));
    let px = |x: f64| margin + (x - x0) / (x1 - x0) * (width - 2.0 * margin);
    let py = |y: f64| height - margin - (y - y0) / (y1 - y0) * (height - 2.0 * margin);

    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(out, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, width / 2.0, escape(title)).unwrap();
    let (l, r, t, b) = (margin, width - margin, margin, height - margin);
    writeln!(out, r#"<line x1="{l}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/>"#).unwrap();
    writeln!(out, r#"<line x1="{l}" y1="{t}" x2="{l}" y2="{b}" stroke="black"/>"#).unwrap();
    for i in 0..=4 {
        let f = f64::from(i) / 4.0;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        writeln!(out, r#"<text x="{:.1}" y="{}" text-anchor="middle">{:.3}</text>"#, px(xv), b + 16.0, xv).unwrap();
        writeln!(out, r#"<text x="{}" y="{:.1}" text-anchor="end">{:.3}</text>"#, l - 4.0, py(yv) + 4.0, yv).unwrap();
    }
    writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, width / 2.0, height - 15.0, escape(x_label)).unwrap();
    writeln!(
        out,
        r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">{}</text>"#,
        height / 2.0,
        height / 2.0,
        escape(y_label)
    )
    .unwrap();
    for p in points {
        let (cx, cy) = (px(p.x), py(p.y));
        writeln!(out, r#"<circle cx="{cx:.1}" cy="{cy:.1}" r="3" fill="steelblue"/>"#).unwrap();
        writeln!(out, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, cx + 5.0, cy - 5.0, escape(&p.label)).unwrap();
    }
    out.push_str("</svg>\n");
    out
}
