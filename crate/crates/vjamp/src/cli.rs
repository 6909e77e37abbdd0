//! `vjamp` command line.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 internal invariant
//! failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use vjamp_core::amp::{build_detection_dag, dvfs_sweep, energy_of, simulate, DagCosts, PlatformModel, Policy};
use vjamp_core::{Cascade, DetectParams, GrayImage};

use crate::bench::{eval_table, evaluate_corpus, run_sweep, SweepConfig};
use crate::manifest::{load_corpus, load_dir, load_labeled_windows, serialize_ground_truth};
use crate::netpbm::{encode_ppm, load_image, save_pgm};
use crate::parallel::{default_workers, detect_timed};
use crate::platform::parse_platform;
use crate::report::{
    annotate, dag_dot, detections_jsonl, scatter_svg, schedule_csv, to_csv, DetectReportJson, EnergyRow, ScatterPoint,
};
use crate::training::{train_from_images, TrainConfig};
use crate::vjc::{parse_cascade, serialize_cascade};

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "error: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

fn input<E: std::fmt::Display>(ctx: impl std::fmt::Display) -> impl FnOnce(E) -> CliError {
    move |e| CliError::Input(format!("{ctx}: {e}"))
}

#[derive(Parser, Debug)]
#[command(name = "vjamp", version, about = "Cascade face detection and big.LITTLE schedule/energy modelling")]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Detect faces in one image.
    Detect(DetectArgs),
    /// Train a cascade from 24x24 windows.
    Train(TrainArgs),
    /// Precision/recall of a cascade over a corpus with ground truth.
    Eval(EvalArgs),
    /// Step x scale x frequency grid over a corpus.
    Sweep(SweepArgs),
    /// Simulate the detection task graph on a platform model.
    Sim(SimArgs),
    /// Write a seeded synthetic corpus.
    GenCorpus(GenArgs),
}

#[derive(Args, Debug, Clone)]
pub struct ScanArgs {
    #[arg(long, default_value_t = 1)]
    pub step: usize,
    #[arg(long, default_value_t = 1.2)]
    pub scale: f64,
    /// Defaults to VJ_THREADS, else the hardware thread count.
    #[arg(long, env = "VJ_THREADS")]
    pub workers: Option<usize>,
    #[arg(long, default_value_t = 2)]
    pub min_neighbors: usize,
    #[arg(long, default_value_t = 0.4)]
    pub overlap: f64,
}

impl ScanArgs {
    fn params(&self) -> DetectParams {
        DetectParams {
            scale_factor: self.scale,
            step: self.step,
            group_min_neighbors: self.min_neighbors,
            group_overlap: self.overlap,
            ..DetectParams::default()
        }
    }

    fn workers(&self) -> usize {
        self.workers.filter(|&w| w > 0).unwrap_or_else(default_workers)
    }
}

#[derive(Args, Debug)]
pub struct DetectArgs {
    #[arg(long)]
    pub cascade: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    #[command(flatten)]
    pub scan: ScanArgs,
    /// Report JSON; printed to stdout when absent.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Detections as JSON lines.
    #[arg(long)]
    pub jsonl: Option<PathBuf>,
    /// P6 copy of the image with detection outlines.
    #[arg(long)]
    pub annotate: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Directory of positive windows.
    #[arg(long, required_unless_present = "manifest")]
    pub pos: Option<PathBuf>,
    /// Directory of negative windows.
    #[arg(long, required_unless_present = "manifest")]
    pub neg: Option<PathBuf>,
    /// `path pos|neg` manifest instead of the two directories.
    #[arg(long, conflicts_with_all = ["pos", "neg"])]
    pub manifest: Option<PathBuf>,
    /// Face-free scenes to mine fresh negatives from between stages.
    #[arg(long)]
    pub backgrounds: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub stages: usize,
    #[arg(long, default_value_t = 0.995)]
    pub dmin: f64,
    #[arg(long, default_value_t = 0.5)]
    pub fmax: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 2)]
    pub stride: usize,
    #[arg(long, default_value_t = 2)]
    pub size_step: usize,
    #[arg(long, default_value_t = 0)]
    pub max_features: usize,
    #[arg(long, default_value_t = 100)]
    pub weak_budget: usize,
    /// Exact weak counts per stage, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub schedule: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0)]
    pub neg_pool: usize,
    #[arg(short = 'o', long)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub cascade: PathBuf,
    /// Directory the manifest paths are relative to; defaults to the
    /// manifest's own directory.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 0.4)]
    pub iou: f64,
    #[command(flatten)]
    pub scan: ScanArgs,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub cascade: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
    pub steps: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1.1,1.2,1.3,1.4,1.5")]
    pub scales: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "2000")]
    pub freqs: Vec<u32>,
    #[arg(long, default_value_t = 1400)]
    pub little_mhz: u32,
    #[arg(long, value_delimiter = ',', default_value = "botlev")]
    pub policies: Vec<String>,
    #[arg(long)]
    pub platform: Option<PathBuf>,
    #[arg(long, env = "VJ_THREADS")]
    pub workers: Option<usize>,
    #[arg(long, default_value_t = 0.4)]
    pub iou: f64,
    #[arg(long, default_value_t = 8)]
    pub block: usize,
    /// SweepRecord CSV; printed to stdout when absent.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// CSV with measured columns (fp, fn, windows, elapsed) added.
    #[arg(long)]
    pub detail: Option<PathBuf>,
    /// Joules vs seconds scatter labelled with total error.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimArgs {
    /// Platform file, or the presets `odroid-xu4` / `rpi3`.
    #[arg(long, default_value = "odroid-xu4")]
    pub platform: String,
    #[arg(long, default_value = "640x480", value_parser = parse_dims)]
    pub image_dims: (usize, usize),
    #[arg(long, value_delimiter = ',', default_value = "big_only_sequential,fifo_asym,all_cores_fifo,botlev")]
    pub policy: Vec<String>,
    /// Big-cluster frequencies; the platform's active one when absent.
    #[arg(long, value_delimiter = ',')]
    pub freqs: Option<Vec<u32>>,
    #[arg(long)]
    pub little_mhz: Option<u32>,
    #[arg(long, default_value_t = 1)]
    pub step: usize,
    #[arg(long, default_value_t = 1.2)]
    pub scale: f64,
    #[arg(long, default_value_t = 8)]
    pub block: usize,
    #[arg(long, default_value_t = 20.0)]
    pub weak_evals_per_window: f64,
    /// Makespan slack for the minimum-energy selection.
    #[arg(long, default_value_t = 1.25)]
    pub slack: f64,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub dot: Option<PathBuf>,
    /// Per-task start/finish of the first policy at the first frequency.
    #[arg(long)]
    pub schedule: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 600)]
    pub n_pos: usize,
    #[arg(long, default_value_t = 900)]
    pub n_neg: usize,
    #[arg(long, default_value_t = 30)]
    pub n_backgrounds: usize,
    #[arg(long, default_value_t = 200)]
    pub n_heldout: usize,
    #[arg(long, default_value_t = 24)]
    pub n_scenes: usize,
    #[arg(long, default_value = "320x240", value_parser = parse_dims)]
    pub scene_dims: (usize, usize),
}

fn parse_dims(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WxH")?;
    let w: usize = w.parse().map_err(|_| "bad width")?;
    let h: usize = h.parse().map_err(|_| "bad height")?;
    if w == 0 || h == 0 {
        return Err("dimensions must be positive".into());
    }
    Ok((w, h))
}

fn write(path: &Path, data: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(input(dir.display()))?;
    }
    fs::write(path, data).map_err(input(path.display()))
}

/// Stdout output; a closed pipe (`| head`) is not an error.
fn emit(text: &str) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Input(format!("stdout: {e}"))),
        _ => Ok(()),
    }
}

fn load_cascade(path: &Path) -> Result<Cascade, CliError> {
    let text = fs::read_to_string(path).map_err(input(path.display()))?;
    parse_cascade(&text).map_err(input(path.display()))
}

fn policies(names: &[String]) -> Result<Vec<Policy>, CliError> {
    names
        .iter()
        .map(|n| Policy::from_name(n).ok_or_else(|| CliError::Input(format!("unknown policy `{n}`"))))
        .collect()
}

fn load_platform(spec: &str) -> Result<PlatformModel, CliError> {
    match spec {
        "odroid-xu4" => Ok(PlatformModel::odroid_xu4()),
        "rpi3" => Ok(PlatformModel::rpi3()),
        path => {
            let text = fs::read_to_string(path).map_err(input(path))?;
            parse_platform(&text).map_err(input(path))
        }
    }
}

pub fn cmd_detect(a: &DetectArgs) -> Result<(), CliError> {
    let c = load_cascade(&a.cascade)?;
    let img = load_image(&a.image).map_err(input(a.image.display()))?;
    let p = a.scan.params();
    let r = detect_timed(&img, &c, &p, a.scan.workers()).map_err(input("detect"))?;
    let body = DetectReportJson::new(&r, img.dims(), p.step, p.scale_factor);
    let json = serde_json::to_string_pretty(&body).map_err(|e| CliError::Internal(e.to_string()))?;
    match &a.json {
        Some(path) => write(path, json + "\n")?,
        None => emit(&(json + "\n"))?,
    }
    if let Some(path) = &a.jsonl {
        write(path, detections_jsonl(&r.outcome.detections))?;
    }
    if let Some(path) = &a.annotate {
        let boxes: Vec<_> = r.outcome.detections.iter().map(|d| d.rect()).collect();
        write(path, encode_ppm(img.width(), img.height(), &annotate(&img, &boxes)))?;
    }
    Ok(())
}

pub fn cmd_train(a: &TrainArgs) -> Result<(), CliError> {
    let (pos, neg): (Vec<GrayImage>, Vec<GrayImage>) = match &a.manifest {
        Some(m) => {
            let all = load_labeled_windows(m).map_err(input("manifest"))?;
            let (p, n): (Vec<_>, Vec<_>) = all.into_iter().partition(|(_, positive)| *positive);
            (p.into_iter().map(|x| x.0).collect(), n.into_iter().map(|x| x.0).collect())
        }
        None => {
            let dir = |d: &Option<PathBuf>| load_dir(d.as_deref().expect("clap requires the directory"));
            (dir(&a.pos).map_err(input("pos"))?, dir(&a.neg).map_err(input("neg"))?)
        }
    };
    let backgrounds = match &a.backgrounds {
        Some(d) => load_dir(d).map_err(input("backgrounds"))?,
        None => Vec::new(),
    };
    let cfg = TrainConfig {
        stages: a.schedule.as_ref().map_or(a.stages, |s| s.len()),
        d_min: a.dmin,
        f_max: a.fmax,
        stride: a.stride,
        size_step: a.size_step,
        max_features: a.max_features,
        seed: a.seed,
        weak_budget: a.weak_budget,
        schedule: a.schedule.clone(),
        neg_pool: a.neg_pool,
        ..TrainConfig::default()
    };
    let t = train_from_images(&pos, &neg, &backgrounds, &cfg).map_err(input("train"))?;
    for w in &t.warnings {
        eprintln!("warning: {w:?}");
    }
    for (i, s) in t.stages.iter().enumerate() {
        eprintln!(
            "stage {i:>2}: {:>4} weak  pos {:>4} neg {:>4}  dr {:.4} fpr {:.4}",
            s.weak, s.pos_pool, s.neg_pool, s.detection_rate, s.false_positive_rate
        );
    }
    let c = t
        .cascade
        .ok_or_else(|| CliError::Input("no stage could be trained".into()))?;
    c.validate().map_err(|e| CliError::Internal(e.to_string()))?;
    write(&a.output, serialize_cascade(&c))
}

pub fn cmd_eval(a: &EvalArgs) -> Result<(), CliError> {
    let c = load_cascade(&a.cascade)?;
    let manifest = match &a.corpus {
        Some(dir) => {
            let m = dir.join(&a.manifest);
            if m.exists() {
                m
            } else {
                a.manifest.clone()
            }
        }
        None => a.manifest.clone(),
    };
    let corpus = load_corpus(&manifest).map_err(input("corpus"))?;
    let e = evaluate_corpus(&c, &corpus, &a.scan.params(), a.scan.workers(), a.iou).map_err(input("detect"))?;
    let name = manifest
        .parent()
        .and_then(|p| p.file_name())
        .map_or("corpus".into(), |n| n.to_string_lossy().into_owned());
    emit(&eval_table(&name, &e))?;
    Ok(())
}

pub fn cmd_sweep(a: &SweepArgs) -> Result<(), CliError> {
    let c = load_cascade(&a.cascade)?;
    let corpus = load_corpus(&a.manifest).map_err(input("corpus"))?;
    let platform = match &a.platform {
        Some(p) => load_platform(&p.to_string_lossy())?,
        None => PlatformModel::default(),
    };
    let cfg = SweepConfig {
        steps: a.steps.clone(),
        scales: a.scales.clone(),
        big_freqs: a.freqs.clone(),
        little_mhz: a.little_mhz,
        policies: policies(&a.policies)?,
        platform,
        workers: a.workers.filter(|&w| w > 0).unwrap_or_else(default_workers),
        iou_min: a.iou,
        block: a.block,
        ..SweepConfig::default()
    };
    let rows = run_sweep(&c, &corpus, &cfg).map_err(input("sweep"))?;
    if rows.iter().any(|r| r.total_error != r.fp + r.fn_) {
        return Err(CliError::Internal("total_error != fp + fn".into()));
    }
    let records: Vec<_> = rows.iter().map(|r| r.record()).collect();
    let csv = to_csv(&records).map_err(|e| CliError::Internal(e.to_string()))?;
    match &a.csv {
        Some(p) => write(p, csv)?,
        None => emit(&csv)?,
    }
    if let Some(p) = &a.detail {
        write(p, to_csv(&rows).map_err(|e| CliError::Internal(e.to_string()))?)?;
    }
    if let Some(p) = &a.svg {
        let pts: Vec<_> = rows
            .iter()
            .map(|r| ScatterPoint {
                x: r.makespan_s,
                y: r.joules,
                label: format!("s{} x{} {}MHz e={}", r.step, r.scale, r.big_mhz, r.total_error),
            })
            .collect();
        write(p, scatter_svg("energy vs time per configuration", "simulated seconds", "joules", &pts))?;
    }
    Ok(())
}

pub fn cmd_sim(a: &SimArgs) -> Result<(), CliError> {
    let platform = load_platform(&a.platform)?;
    let pols = policies(&a.policy)?;
    let p = DetectParams {
        step: a.step,
        scale_factor: a.scale,
        ..DetectParams::default()
    };
    let costs = DagCosts {
        weak_evals_per_window: a.weak_evals_per_window,
        ..DagCosts::default()
    };
    let (w, h) = a.image_dims;
    let g = build_detection_dag(w, h, &p, a.block, &costs).map_err(input("graph"))?;
    let freqs = a.freqs.clone().unwrap_or_else(|| vec![platform.big_mhz]);
    let little = a.little_mhz.unwrap_or(platform.little_mhz);
    let sweep = dvfs_sweep(&g, &platform, &freqs, little, &pols, a.slack).map_err(input("sim"))?;
    let mut rows = Vec::new();
    for r in &sweep.records {
        let pf = platform.at(r.big_mhz, r.little_mhz).map_err(input("platform"))?;
        let s = simulate(&g, &pf, r.policy).map_err(input("sim"))?;
        s.check(&g).map_err(|e| CliError::Internal(format!("{}: {e}", r.policy.name())))?;
        let e = energy_of(&s, &pf).map_err(input("energy"))?;
        rows.push(EnergyRow::new(r.policy.name(), &s, &e));
    }
    let csv = to_csv(&rows).map_err(|e| CliError::Internal(e.to_string()))?;
    match &a.csv {
        Some(path) => write(path, csv)?,
        None => emit(&csv)?,
    }
    if let Some(i) = sweep.selected {
        let r = &sweep.records[i];
        eprintln!(
            "selected: {} big={} MHz ({:.4} s, {:.4} J)",
            r.policy.name(),
            r.big_mhz,
            r.makespan,
            r.joules
        );
    }
    if let Some(path) = &a.dot {
        write(path, dag_dot(&g))?;
    }
    if let Some(path) = &a.schedule {
        let pf = platform.at(freqs[0], little).map_err(input("platform"))?;
        let s = simulate(&g, &pf, pols[0]).map_err(input("sim"))?;
        write(path, schedule_csv(&s).map_err(|e| CliError::Internal(e.to_string()))?)?;
    }
    Ok(())
}

pub fn cmd_gen_corpus(a: &GenArgs) -> Result<(), CliError> {
    use crate::synth::{background, face_scene, face_window, negative_windows, rng};
    let out = &a.out;
    let save = |img: &GrayImage, rel: &str| -> Result<(), CliError> {
        let path = out.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(input(dir.display()))?;
        }
        save_pgm(img, &path).map_err(input(path.display()))
    };
    let labelled = |pos: &[GrayImage], neg: &[GrayImage], dir: &str| -> Result<(), CliError> {
        let mut manifest = String::new();
        for (i, img) in pos.iter().enumerate() {
            let rel = format!("pos/{i:04}.pgm");
            save(img, &format!("{dir}/{rel}"))?;
            manifest.push_str(&format!("{rel} pos\n"));
        }
        for (i, img) in neg.iter().enumerate() {
            let rel = format!("neg/{i:04}.pgm");
            save(img, &format!("{dir}/{rel}"))?;
            manifest.push_str(&format!("{rel} neg\n"));
        }
        write(&out.join(dir).join("manifest.txt"), manifest)
    };

    let mut r = rng(a.seed);
    let pos: Vec<_> = (0..a.n_pos).map(|_| face_window(&mut r, 24)).collect();
    let neg = negative_windows(&mut r, a.n_neg, 24);
    labelled(&pos, &neg, "train")?;
    for i in 0..a.n_backgrounds {
        save(&background(&mut r, 160, 120), &format!("backgrounds/{i:04}.pgm"))?;
    }

    let mut r = rng(a.seed ^ 0x5eed_0001);
    let pos: Vec<_> = (0..a.n_heldout).map(|_| face_window(&mut r, 24)).collect();
    let neg = negative_windows(&mut r, a.n_heldout, 24);
    labelled(&pos, &neg, "heldout")?;

    let mut r = rng(a.seed ^ 0x5eed_0002);
    let (w, h) = a.scene_dims;
    let mut entries = Vec::new();
    for i in 0..a.n_scenes {
        let (img, face) = face_scene(&mut r, w, h, 32, h.min(w) * 2 / 3);
        let rel = format!("{i:04}.pgm");
        save(&img, &format!("corpus/{rel}"))?;
        entries.push((rel, vec![face]));
    }
    write(&out.join("corpus/manifest.txt"), serialize_ground_truth(&entries))
}

pub fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.cmd {
        Command::Detect(a) => cmd_detect(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Sim(a) => cmd_sim(a),
        Command::GenCorpus(a) => cmd_gen_corpus(a),
    }
}

/// Parses `args` (program name first) and runs the command; returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
