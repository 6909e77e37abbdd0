//! Asymmetric big.LITTLE platform model, detection task graphs, list
//! scheduling simulation and energy accounting.
//!
//! Cores are numbered big first: `0..big.cores` are big, the rest little.
//! Frequencies are per cluster; a simulation runs at one frequency pair.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::detect::{candidate_offsets, DetectParams};
use crate::image::pyramid_shape;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AmpError {
    #[error("task graph has a cycle")]
    Cycle,
    #[error("task {task} has id {id}; ids must equal positions")]
    BadId { task: usize, id: usize },
    #[error("task {task} depends on unknown task {dep}")]
    UnknownDep { task: usize, dep: usize },
    #[error("task {0} has negative or non-finite work")]
    BadWork(usize),
    #[error("block must be >= 1 column")]
    BadBlock,
    #[error("{cluster:?} cluster has no {mhz} MHz operating point")]
    UnknownFrequency { cluster: Cluster, mhz: u32 },
    #[error("policy needs at least one {0:?} core")]
    NoCores(Cluster),
    #[error("invalid platform: {0}")]
    Platform(&'static str),
    #[error("schedule replay stalled: a scripted task can never become ready")]
    ReplayStalled,
    #[error(transparent)]
    Detect(#[from] crate::detect::DetectError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskKind {
    Downscale,
    Integral,
    ScanBlock,
    Reduce,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskNode {
    pub id: usize,
    pub kind: TaskKind,
    /// Pyramid level, or 0 for the reduce node.
    pub level: usize,
    pub work: f64,
    pub deps: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskGraph {
    nodes: Vec<TaskNode>,
}

impl TaskGraph {
    pub fn new(nodes: Vec<TaskNode>) -> Result<Self, AmpError> {
        for (i, n) in nodes.iter().enumerate() {
            if n.id != i {
                return Err(AmpError::BadId { task: i, id: n.id });
            }
            if !(n.work.is_finite() && n.work >= 0.0) {
                return Err(AmpError::BadWork(i));
            }
            if let Some(&d) = n.deps.iter().find(|&&d| d >= nodes.len()) {
                return Err(AmpError::UnknownDep { task: i, dep: d });
            }
        }
        let g = TaskGraph { nodes };
        g.topo_order()?;
        Ok(g)
    }

    pub fn nodes(&self) -> &[TaskNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.nodes.iter().map(|n| n.deps.len()).sum()
    }

    pub fn successors(&self) -> Vec<Vec<usize>> {
        let mut succ = alloc::vec![Vec::new(); self.nodes.len()];
        for n in &self.nodes {
            for &d in &n.deps {
                succ[d].push(n.id);
            }
        }
        succ
    }

    /// Kahn's algorithm, always releasing the lowest ready id first.
    pub fn topo_order(&self) -> Result<Vec<usize>, AmpError> {
        let succ = self.successors();
        let mut indeg: Vec<usize> = self.nodes.iter().map(|n| n.deps.len()).collect();
        let mut ready: alloc::collections::BTreeSet<usize> = (0..self.nodes.len()).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(t) = ready.pop_first() {
            order.push(t);
            for &s in &succ[t] {
                indeg[s] -= 1;
                if indeg[s] == 0 {
                    ready.insert(s);
                }
            }
        }
        if order.len() == self.nodes.len() {
            Ok(order)
        } else {
            Err(AmpError::Cycle)
        }
    }
}

/// Work-unit costs used when building a detection graph. One unit is one
/// weak-classifier evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DagCosts {
    pub downscale_per_pixel: f64,
    pub integral_per_pixel: f64,
    pub weak_evals_per_window: f64,
    /// Expected raw detections per scanned window.
    pub raw_detection_rate: f64,
    pub reduce_per_detection: f64,
}

impl Default for DagCosts {
    fn default() -> Self {
        DagCosts {
            downscale_per_pixel: 0.5,
            integral_per_pixel: 1.0,
            weak_evals_per_window: 20.0,
            raw_detection_rate: 1e-3,
            reduce_per_detection: 50.0,
        }
    }
}

/// Task graph of one detection run: per level a downscale, an integral and
/// `ceil(columns / block)` scan blocks, then one reduce over all blocks.
/// Level 0 is the input itself, so its downscale carries no work. Ids run
/// level by level in that order, the reduce last.
pub fn build_detection_dag(
    width: usize,
    height: usize,
    p: &DetectParams,
    block: usize,
    costs: &DagCosts,
) -> Result<TaskGraph, AmpError> {
    if block == 0 {
        return Err(AmpError::BadBlock);
    }
    p.validate()?;
    let window = p.min_window.max(24);
    let levels = pyramid_shape(width, height, p.scale_factor, window, window).map_err(crate::detect::DetectError::from)?;
    let mut nodes: Vec<TaskNode> = Vec::new();
    let mut scans = Vec::new();
    let mut windows_total = 0.0;
    for (level, &(w, h, _)) in levels.iter().enumerate() {
        let pixels = (w * h) as f64;
        let ds = nodes.len();
        nodes.push(TaskNode {
            id: ds,
            kind: TaskKind::Downscale,
            level,
            work: if level == 0 { 0.0 } else { pixels * costs.downscale_per_pixel },
            deps: Vec::new(),
        });
        let ii = nodes.len();
        nodes.push(TaskNode {
            id: ii,
            kind: TaskKind::Integral,
            level,
            work: pixels * costs.integral_per_pixel,
            deps: alloc::vec![ds],
        });
        let cols = candidate_offsets(w, 24, p.step).len();
        let rows = candidate_offsets(h, 24, p.step).len();
        let mut start = 0;
        while start < cols {
            let n = block.min(cols - start);
            let windows = (n * rows) as f64;
            windows_total += windows;
            let id = nodes.len();
            nodes.push(TaskNode {
                id,
                kind: TaskKind::ScanBlock,
                level,
                work: windows * costs.weak_evals_per_window,
                deps: alloc::vec![ii],
            });
            scans.push(id);
            start += n;
        }
    }
    let id = nodes.len();
    nodes.push(TaskNode {
        id,
        kind: TaskKind::Reduce,
        level: 0,
        work: (windows_total * costs.raw_detection_rate).max(1.0) * costs.reduce_per_detection,
        deps: scans,
    });
    TaskGraph::new(nodes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cluster {
    Big,
    Little,
}

/// Per-core power at one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub mhz: u32,
    pub busy_w: f64,
    pub idle_w: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSpec {
    pub cores: usize,
    /// Work units per second per MHz.
    pub speed_per_mhz: f64,
    /// Ascending by frequency.
    pub points: Vec<OperatingPoint>,
}

impl ClusterSpec {
    pub fn point(&self, mhz: u32) -> Option<&OperatingPoint> {
        self.points.iter().find(|p| p.mhz == mhz)
    }

    pub fn freqs(&self) -> Vec<u32> {
        self.points.iter().map(|p| p.mhz).collect()
    }

    /// Points at `(mhz, volts)` with busy power scaled as `f * V^2` from
    /// the first entry's reference and idle power a fixed fraction of busy.
    pub fn scaled(cores: usize, speed_per_mhz: f64, reference_busy_w: f64, idle_ratio: f64, fv: &[(u32, f64)]) -> Self {
        let (f0, v0) = fv[0];
        let mut points: Vec<OperatingPoint> = fv
            .iter()
            .map(|&(mhz, v)| {
                let busy_w = reference_busy_w * (f64::from(mhz) / f64::from(f0)) * (v / v0) * (v / v0);
                OperatingPoint {
                    mhz,
                    busy_w,
                    idle_w: busy_w * idle_ratio,
                }
            })
            .collect();
        points.sort_by_key(|p| p.mhz);
        ClusterSpec {
            cores,
            speed_per_mhz,
            points,
        }
    }
}

/// Cluster frequencies and power tables.
#[derive(Debug, Clone, PartialEq)]
pub struct PlatformModel {
    pub big: ClusterSpec,
    pub little: ClusterSpec,
    pub big_mhz: u32,
    pub little_mhz: u32,
}

/// One big core busy and three idle at 2000 MHz dissipate 3.0 W.
pub const BIG_SEQUENTIAL_W: f64 = 3.0;
/// Every core busy at full frequency dissipates 6.85 W.
pub const ALL_CORES_W: f64 = 6.85;
pub const IDLE_RATIO: f64 = 0.3;

impl Default for PlatformModel {
    fn default() -> Self {
        Self::odroid_xu4()
    }
}

impl PlatformModel {
    /// 4 big cores (2000/1500/1000/800 MHz) and 4 little (1400/1000/600 MHz).
    pub fn odroid_xu4() -> Self {
        let big_busy = BIG_SEQUENTIAL_W / (1.0 + 3.0 * IDLE_RATIO);
        let little_busy = (ALL_CORES_W - 4.0 * big_busy) / 4.0;
        let big = ClusterSpec::scaled(
            4,
            2.4e4,
            big_busy,
            IDLE_RATIO,
            &[(2000, 1.30), (1500, 1.10), (1000, 0.95), (800, 0.90)],
        );
        let little = ClusterSpec::scaled(4, 1.0e4, little_busy, IDLE_RATIO, &[(1400, 1.20), (1000, 1.00), (600, 0.90)]);
        PlatformModel {
            big,
            little,
            big_mhz: 2000,
            little_mhz: 1400,
        }
    }

    /// Four identical cores at 1400 MHz with no little cluster. One busy
    /// core plus three idle draws 2.5 W; all four busy draw 5.5 W.
    pub fn rpi3() -> Self {
        let busy_w = 5.5 / 4.0;
        let idle_w = (2.5 - busy_w) / 3.0;
        PlatformModel {
            big: ClusterSpec {
                cores: 4,
                speed_per_mhz: 1.2e4,
                points: alloc::vec![OperatingPoint { mhz: 1400, busy_w, idle_w }],
            },
            little: ClusterSpec {
                cores: 0,
                speed_per_mhz: 1.0e4,
                points: alloc::vec![OperatingPoint { mhz: 1400, busy_w: 0.0, idle_w: 0.0 }],
            },
            big_mhz: 1400,
            little_mhz: 1400,
        }
    }

    pub fn validate(&self) -> Result<(), AmpError> {
        for (c, spec) in [(Cluster::Big, &self.big), (Cluster::Little, &self.little)] {
            if !(spec.speed_per_mhz > 0.0) {
                return Err(AmpError::Platform("speed must be positive"));
            }
            if spec.points.windows(2).any(|w| w[0].mhz >= w[1].mhz) {
                return Err(AmpError::Platform("operating points must be strictly ascending"));
            }
            if spec.points.iter().any(|p| !(p.busy_w >= p.idle_w && p.idle_w >= 0.0)) {
                return Err(AmpError::Platform("power table needs busy >= idle >= 0"));
            }
            self.point(c)?;
        }
        if self.big.cores + self.little.cores == 0 {
            return Err(AmpError::Platform("no cores"));
        }
        Ok(())
    }

    pub fn cluster(&self, c: Cluster) -> &ClusterSpec {
        match c {
            Cluster::Big => &self.big,
            Cluster::Little => &self.little,
        }
    }

    pub fn mhz(&self, c: Cluster) -> u32 {
        match c {
            Cluster::Big => self.big_mhz,
            Cluster::Little => self.little_mhz,
        }
    }

    pub fn point(&self, c: Cluster) -> Result<&OperatingPoint, AmpError> {
        let mhz = self.mhz(c);
        self.cluster(c).point(mhz).ok_or(AmpError::UnknownFrequency { cluster: c, mhz })
    }

    /// The same platform at another frequency pair.
    pub fn at(&self, big_mhz: u32, little_mhz: u32) -> Result<Self, AmpError> {
        let p = PlatformModel {
            big_mhz,
            little_mhz,
            ..self.clone()
        };
        p.point(Cluster::Big)?;
        p.point(Cluster::Little)?;
        Ok(p)
    }

    pub fn n_cores(&self) -> usize {
        self.big.cores + self.little.cores
    }

    pub fn core_cluster(&self, core: usize) -> Cluster {
        if core < self.big.cores {
            Cluster::Big
        } else {
            Cluster::Little
        }
    }

    pub fn speed(&self, c: Cluster) -> f64 {
        self.cluster(c).speed_per_mhz * f64::from(self.mhz(c))
    }

    pub fn exec_time(&self, work: f64, c: Cluster) -> f64 {
        work / self.speed(c)
    }
}

/// Longest path to the exit, with every task timed on a big core at
/// `reference_mhz`.
pub fn bottom_levels(g: &TaskGraph, platform: &PlatformModel, reference_mhz: u32) -> Result<Vec<f64>, AmpError> {
    platform
        .big
        .point(reference_mhz)
        .ok_or(AmpError::UnknownFrequency { cluster: Cluster::Big, mhz: reference_mhz })?;
    let speed = platform.big.speed_per_mhz * f64::from(reference_mhz);
    let order = g.topo_order()?;
    let succ = g.successors();
    let mut bl = alloc::vec![0.0; g.len()];
    for &t in order.iter().rev() {
        let down = succ[t].iter().map(|&s| bl[s]).fold(0.0, f64::max);
        bl[t] = g.nodes[t].work / speed + down;
    }
    Ok(bl)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Policy {
    /// Every task on core 0, in ready order.
    BigOnlySequential,
    /// One shared queue in ready order; idle cores served big first.
    FifoAsym,
    /// Static split mirroring a fork-join loop: scan blocks of each level
    /// divided into equal contiguous runs over all cores, everything else
    /// on core 0, each core working through its list in id order. The loop
    /// joins before core 0 moves on, so non-scan tasks also wait for every
    /// scan block with a lower id.
    AllCoresFifo,
    /// Critical tasks (maximal bottom level when they become ready) go to
    /// big cores; little cores take only non-critical ones unless stealing.
    Botlev { little_steals: bool },
}

impl Policy {
    pub const ALL: [Policy; 4] = [
        Policy::BigOnlySequential,
        Policy::FifoAsym,
        Policy::AllCoresFifo,
        Policy::Botlev { little_steals: false },
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Policy::BigOnlySequential => "big_only_sequential",
            Policy::FifoAsym => "fifo_asym",
            Policy::AllCoresFifo => "all_cores_fifo",
            Policy::Botlev { little_steals: false } => "botlev",
            Policy::Botlev { little_steals: true } => "botlev_steal",
        }
    }

    pub fn from_name(s: &str) -> Option<Policy> {
        match s {
            "big_only_sequential" => Some(Policy::BigOnlySequential),
            "fifo_asym" => Some(Policy::FifoAsym),
            "all_cores_fifo" => Some(Policy::AllCoresFifo),
            "botlev" => Some(Policy::Botlev { little_steals: false }),
            "botlev_steal" => Some(Policy::Botlev { little_steals: true }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TraceEvent {
    Ready { time: f64, task: usize },
    Start { time: f64, task: usize, core: usize },
    Finish { time: f64, task: usize, core: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleResult {
    pub policy: Option<Policy>,
    pub big_mhz: u32,
    pub little_mhz: u32,
    pub assignment: Vec<usize>,
    pub start: Vec<f64>,
    pub finish: Vec<f64>,
    pub makespan: f64,
    pub trace: Vec<TraceEvent>,
    /// Cores owned by the runtime for the whole run; they spin when idle.
    pub workers: Vec<bool>,
}

impl ScheduleResult {
    /// Task ids each core started, in start order.
    pub fn core_sequences(&self) -> Vec<Vec<usize>> {
        let mut seq = alloc::vec![Vec::new(); self.workers.len()];
        for e in &self.trace {
            if let TraceEvent::Start { task, core, .. } = *e {
                seq[core].push(task);
            }
        }
        seq
    }

    /// Dependency and exclusivity checks; returns the first violation.
    pub fn check(&self, g: &TaskGraph) -> Result<(), &'static str> {
        if self.start.len() != g.len() {
            return Err("task count mismatch");
        }
        for n in g.nodes() {
            if !(self.finish[n.id] >= self.start[n.id]) {
                return Err("task finishes before it starts");
            }
            if n.deps.iter().any(|&d| self.finish[d] > self.start[n.id]) {
                return Err("task starts before a dependency finishes");
            }
        }
        for seq in self.core_sequences() {
            let mut sorted = seq.clone();
            sorted.sort_by(|&a, &b| self.start[a].total_cmp(&self.start[b]).then(a.cmp(&b)));
            if sorted.windows(2).any(|w| self.finish[w[0]] > self.start[w[1]]) {
                return Err("core runs two tasks at once");
            }
        }
        Ok(())
    }
}

enum Dispatch {
    Fifo {
        queue: VecDeque<usize>,
        cores: usize,
    },
    Botlev {
        bl: Vec<f64>,
        critical: Vec<usize>,
        normal: Vec<usize>,
        little_steals: bool,
    },
    Scripted {
        scripts: Vec<VecDeque<usize>>,
        ready: Vec<bool>,
    },
}

fn pop_highest(queue: &mut Vec<usize>, bl: &[f64]) -> Option<usize> {
    let (pos, _) = queue
        .iter()
        .enumerate()
        .max_by(|(_, &a), (_, &b)| bl[a].total_cmp(&bl[b]).then(b.cmp(&a)))?;
    Some(queue.swap_remove(pos))
}

impl Dispatch {
    fn on_ready(&mut self, batch: &[usize]) {
        match self {
            Dispatch::Fifo { queue, .. } => queue.extend(batch),
            Dispatch::Botlev { bl, critical, normal, .. } => {
                let max = critical
                    .iter()
                    .chain(normal.iter())
                    .chain(batch)
                    .map(|&t| bl[t])
                    .fold(f64::NEG_INFINITY, f64::max);
                let tol = 1e-12 * max.abs().max(1e-300);
                for &t in batch {
                    if bl[t] >= max - tol {
                        critical.push(t);
                    } else {
                        normal.push(t);
                    }
                }
            }
            Dispatch::Scripted { ready, .. } => {
                for &t in batch {
                    ready[t] = true;
                }
            }
        }
    }

    fn pick(&mut self, core: usize, cluster: Cluster) -> Option<usize> {
        match self {
            Dispatch::Fifo { queue, cores } => {
                if core < *cores {
                    queue.pop_front()
                } else {
                    None
                }
            }
            Dispatch::Botlev {
                bl,
                critical,
                normal,
                little_steals,
            } => match cluster {
                Cluster::Big => pop_highest(critical, bl).or_else(|| pop_highest(normal, bl)),
                Cluster::Little => {
                    pop_highest(normal, bl).or_else(|| if *little_steals { pop_highest(critical, bl) } else { None })
                }
            },
            Dispatch::Scripted { scripts, ready } => {
                let next = *scripts[core].front()?;
                if ready[next] {
                    scripts[core].pop_front();
                    Some(next)
                } else {
                    None
                }
            }
        }
    }
}

fn run_engine(
    g: &TaskGraph,
    platform: &PlatformModel,
    mut dispatch: Dispatch,
    workers: Vec<bool>,
    policy: Option<Policy>,
) -> Result<ScheduleResult, AmpError> {
    let n = g.len();
    let n_cores = platform.n_cores();
    let succ = g.successors();
    let mut remaining: Vec<usize> = g.nodes().iter().map(|t| t.deps.len()).collect();
    let mut start = alloc::vec![0.0; n];
    let mut finish = alloc::vec![0.0; n];
    let mut assignment = alloc::vec![usize::MAX; n];
    let mut running: Vec<Option<usize>> = alloc::vec![None; n_cores];
    let mut trace = Vec::new();
    let mut time = 0.0;
    let mut done = 0;

    let batch: Vec<usize> = (0..n).filter(|&t| remaining[t] == 0).collect();
    for &t in &batch {
        trace.push(TraceEvent::Ready { time, task: t });
    }
    dispatch.on_ready(&batch);

    while done < n {
        for core in 0..n_cores {
            if running[core].is_none() {
                if let Some(t) = dispatch.pick(core, platform.core_cluster(core)) {
                    start[t] = time;
                    finish[t] = time + platform.exec_time(g.nodes()[t].work, platform.core_cluster(core));
                    assignment[t] = core;
                    running[core] = Some(t);
                    trace.push(TraceEvent::Start { time, task: t, core });
                }
            }
        }
        let Some(next) = running.iter().flatten().map(|&t| finish[t]).min_by(f64::total_cmp) else {
            return Err(AmpError::ReplayStalled);
        };
        time = next;
        let mut finished: Vec<(usize, usize)> = running
            .iter()
            .enumerate()
            .filter_map(|(c, t)| t.filter(|&t| finish[t] == time).map(|t| (t, c)))
            .collect();
        finished.sort_unstable();
        let mut batch = Vec::new();
        for (t, c) in finished {
            running[c] = None;
            done += 1;
            trace.push(TraceEvent::Finish { time, task: t, core: c });
            for &s in &succ[t] {
                remaining[s] -= 1;
                if remaining[s] == 0 {
                    batch.push(s);
                }
            }
        }
        batch.sort_unstable();
        for &t in &batch {
            trace.push(TraceEvent::Ready { time, task: t });
        }
        dispatch.on_ready(&batch);
    }
    let makespan = finish.iter().copied().fold(0.0, f64::max);
    Ok(ScheduleResult {
        policy,
        big_mhz: platform.big_mhz,
        little_mhz: platform.little_mhz,
        assignment,
        start,
        finish,
        makespan,
        trace,
        workers,
    })
}

/// `g` plus the join edges of a fork-join execution in id order.
fn with_joins(g: &TaskGraph) -> TaskGraph {
    let mut nodes = g.nodes().to_vec();
    let mut scans_so_far = Vec::new();
    for n in &mut nodes {
        if n.kind == TaskKind::ScanBlock {
            scans_so_far.push(n.id);
        } else {
            for &s in &scans_so_far {
                if !n.deps.contains(&s) {
                    n.deps.push(s);
                }
            }
        }
    }
    TaskGraph { nodes }
}

/// Graph whose edges a policy actually waits on.
fn effective_graph(g: &TaskGraph, policy: Option<Policy>) -> alloc::borrow::Cow<'_, TaskGraph> {
    match policy {
        Some(Policy::AllCoresFifo) => alloc::borrow::Cow::Owned(with_joins(g)),
        _ => alloc::borrow::Cow::Borrowed(g),
    }
}

fn static_scripts(g: &TaskGraph, n_cores: usize) -> Vec<VecDeque<usize>> {
    let mut scripts = alloc::vec![VecDeque::new(); n_cores];
    let mut owner = alloc::vec![0usize; g.len()];
    let mut i = 0;
    let nodes = g.nodes();
    while i < nodes.len() {
        if nodes[i].kind == TaskKind::ScanBlock {
            // one run of consecutive scan blocks of the same level
            let level = nodes[i].level;
            let mut j = i;
            while j < nodes.len() && nodes[j].kind == TaskKind::ScanBlock && nodes[j].level == level {
                j += 1;
            }
            let parts = crate::detect::partition(j - i, n_cores);
            for (core, r) in parts.into_iter().enumerate() {
                for k in r {
                    owner[i + k] = core;
                }
            }
            i = j;
        } else {
            i += 1;
        }
    }
    for t in g.topo_order().unwrap_or_default() {
        scripts[owner[t]].push_back(t);
    }
    scripts
}

/// Deterministic discrete-event simulation of `policy` on `platform`.
pub fn simulate(g: &TaskGraph, platform: &PlatformModel, policy: Policy) -> Result<ScheduleResult, AmpError> {
    platform.validate()?;
    let n_cores = platform.n_cores();
    if platform.big.cores == 0 {
        return Err(AmpError::NoCores(Cluster::Big));
    }
    let (dispatch, workers) = match policy {
        Policy::BigOnlySequential => (
            Dispatch::Fifo {
                queue: VecDeque::new(),
                cores: 1,
            },
            (0..n_cores).map(|c| c == 0).collect(),
        ),
        Policy::FifoAsym => (
            Dispatch::Fifo {
                queue: VecDeque::new(),
                cores: n_cores,
            },
            alloc::vec![true; n_cores],
        ),
        Policy::AllCoresFifo => (
            Dispatch::Scripted {
                scripts: static_scripts(g, n_cores),
                ready: alloc::vec![false; g.len()],
            },
            alloc::vec![true; n_cores],
        ),
        Policy::Botlev { little_steals } => {
            if platform.little.cores == 0 {
                return Err(AmpError::NoCores(Cluster::Little));
            }
            (
                Dispatch::Botlev {
                    bl: bottom_levels(g, platform, platform.big_mhz)?,
                    critical: Vec::new(),
                    normal: Vec::new(),
                    little_steals,
                },
                alloc::vec![true; n_cores],
            )
        }
    };
    run_engine(&effective_graph(g, Some(policy)), platform, dispatch, workers, Some(policy))
}

/// Re-runs a recorded schedule by feeding every core its recorded task
/// sequence; tasks start as soon as their core is free and they are ready.
pub fn replay(g: &TaskGraph, platform: &PlatformModel, recorded: &ScheduleResult) -> Result<ScheduleResult, AmpError> {
    let scripts = recorded.core_sequences().into_iter().map(VecDeque::from).collect();
    let mut out = run_engine(
        &effective_graph(g, recorded.policy),
        platform,
        Dispatch::Scripted {
            scripts,
            ready: alloc::vec![false; g.len()],
        },
        recorded.workers.clone(),
        recorded.policy,
    )?;
    out.policy = recorded.policy;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClusterEnergy {
    pub busy_s: f64,
    /// Time runtime-owned cores spent waiting for work, charged at busy power.
    pub spin_s: f64,
    pub idle_s: f64,
    pub joules: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    pub big: ClusterEnergy,
    pub little: ClusterEnergy,
    pub total_j: f64,
    pub avg_w: f64,
    pub makespan: f64,
}

/// Per-core busy time at busy power; the rest of the makespan at busy power
/// for runtime-owned cores (spinning) or idle power otherwise.
pub fn energy_of(s: &ScheduleResult, platform: &PlatformModel) -> Result<EnergyReport, AmpError> {
    let platform = platform.at(s.big_mhz, s.little_mhz)?;
    let mut busy = alloc::vec![0.0; platform.n_cores()];
    for (t, &core) in s.assignment.iter().enumerate() {
        if core < busy.len() {
            busy[core] += s.finish[t] - s.start[t];
        }
    }
    let mut big = ClusterEnergy::default();
    let mut little = ClusterEnergy::default();
    for (core, &b) in busy.iter().enumerate() {
        let cluster = platform.core_cluster(core);
        let op = platform.point(cluster)?;
        let rest = (s.makespan - b).max(0.0);
        let worker = s.workers.get(core).copied().unwrap_or(false);
        let acc = if cluster == Cluster::Big { &mut big } else { &mut little };
        acc.busy_s += b;
        if worker {
            acc.spin_s += rest;
            acc.joules += (b + rest) * op.busy_w;
        } else {
            acc.idle_s += rest;
            acc.joules += b * op.busy_w + rest * op.idle_w;
        }
    }
    let total_j = big.joules + little.joules;
    Ok(EnergyReport {
        big,
        little,
        total_j,
        avg_w: if s.makespan > 0.0 { total_j / s.makespan } else { 0.0 },
        makespan: s.makespan,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub policy: Policy,
    pub big_mhz: u32,
    pub little_mhz: u32,
    pub makespan: f64,
    pub joules: f64,
    pub avg_w: f64,
    /// Not dominated in both makespan and joules by another record.
    pub pareto: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DvfsSweep {
    pub records: Vec<SweepPoint>,
    pub best_makespan: f64,
    /// Minimum-energy record with `makespan <= slack * best_makespan`.
    pub selected: Option<usize>,
}

impl DvfsSweep {
    /// Fractional energy saving of `idx` against the same policy at
    /// `baseline_mhz` on the big cluster.
    pub fn reduction_vs(&self, idx: usize, baseline_mhz: u32) -> Option<f64> {
        let r = &self.records[idx];
        let base = self
            .records
            .iter()
            .find(|b| b.policy == r.policy && b.big_mhz == baseline_mhz && b.little_mhz == r.little_mhz)?;
        Some(1.0 - r.joules / base.joules)
    }
}

pub fn dvfs_sweep(
    g: &TaskGraph,
    platform: &PlatformModel,
    big_freqs: &[u32],
    little_mhz: u32,
    policies: &[Policy],
    slack: f64,
) -> Result<DvfsSweep, AmpError> {
    let mut records = Vec::new();
    for &f in big_freqs {
        let p = platform.at(f, little_mhz)?;
        for &policy in policies {
            let s = simulate(g, &p, policy)?;
            let e = energy_of(&s, &p)?;
            records.push(SweepPoint {
                policy,
                big_mhz: f,
                little_mhz,
                makespan: s.makespan,
                joules: e.total_j,
                avg_w: e.avg_w,
                pareto: false,
            });
        }
    }
    let snapshot: Vec<(f64, f64)> = records.iter().map(|r| (r.makespan, r.joules)).collect();
    for (i, r) in records.iter_mut().enumerate() {
        r.pareto = !snapshot.iter().enumerate().any(|(j, &(m, e))| {
            j != i && m <= snapshot[i].0 && e <= snapshot[i].1 && (m < snapshot[i].0 || e < snapshot[i].1)
        });
    }
    let best_makespan = records.iter().map(|r| r.makespan).fold(f64::INFINITY, f64::min);
    let selected = records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.makespan <= slack * best_makespan)
        .min_by(|a, b| a.1.joules.total_cmp(&b.1.joules))
        .map(|(i, _)| i);
    Ok(DvfsSweep {
        records,
        best_makespan,
        selected,
    })
}
