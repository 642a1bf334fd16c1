//! Benchmark drivers for the two kernels, wired to the tuner.
//!
//! A run executes one driver with every kernel call going through a
//! [`Dispatcher`]. With the native backend the tuner runs on its own thread
//! against the wall clock. With the synthetic backend it runs inline on a
//! simulated clock whose costs come from a [`CostSurface`], while the real
//! variants it picks are still installed so driver outputs stay meaningful.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{Clock, MonotonicClock, SimClock};
use crate::dispatcher::Dispatcher;
use crate::evaluator::{self, DistanceTraining, LintraTraining, MeasureConfig, TrainingData};
use crate::explorer::{write_trace_csv, Defaults, ExploreError, Mode, PhasePlan, TraceRecord};
use crate::governor::{OverheadLedger, Policy, PolicyError};
use crate::image::Image;
use crate::reporting::{best_parameter_averages, nanos, ParameterAverages, ReportError};
use crate::space::{KernelKind, ParameterDomain, SpaceError, TuningPoint, TuningSpace};
use crate::synthetic::{CostSurface, SurfaceConfig};
use crate::tuner::{
    NativeBackend, SimulatedRun, SwapRecord, SyntheticBackend, Tuner, TunerConfig, TuningBackend,
};
use crate::variantgen::{DistanceGenerator, DistanceKernel, KernelGenerator, LintraGenerator, LintraKernel};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("config file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("config serialization: {0}")]
    TomlSer(#[from] toml::ser::Error),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Explore(#[from] ExploreError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Native,
    Synthetic,
}

/// Everything a run needs. Every field has a default, so a config file
/// only lists what it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub kernel: KernelKind,
    pub mode: Mode,
    pub backend: BackendKind,

    pub dim: usize,
    pub points: usize,
    pub centers: usize,
    /// Driver passes; distance defaults to 100, lintra to 1.
    pub passes: Option<usize>,

    pub bands: usize,
    pub width: usize,
    pub rows: usize,
    /// Per-band factors; cycled when shorter than `bands`.
    pub mul: Vec<f32>,
    pub add: Vec<f32>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,

    pub budget_pct: f64,
    pub invest_pct: f64,
    pub wake_ms: f64,
    pub exploration_limit: usize,
    pub defaults: Defaults,
    pub defaults_from: Option<PathBuf>,
    /// Replaces the default domain of each listed parameter.
    pub domains: Vec<ParameterDomain>,
    pub trial_len: usize,
    pub measure: MeasureConfig,

    pub surface: SurfaceConfig,
    pub generation_cost_us: f64,

    pub seed: u64,
    pub disable_tuner: bool,
    pub repeat: usize,
    pub report: Option<PathBuf>,
    pub trace: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            kernel: KernelKind::Distance,
            mode: Mode::Both,
            backend: BackendKind::Native,
            dim: 32,
            points: 4096,
            centers: 64,
            passes: None,
            bands: 3,
            width: 1600,
            rows: 1200,
            mul: vec![1.25, 0.5, 2.0],
            add: vec![3.0, -1.5, 0.25],
            input: None,
            output: None,
            budget_pct: 1.0,
            invest_pct: 10.0,
            wake_ms: 10.0,
            exploration_limit: TunerConfig::default().limit,
            defaults: Defaults::default(),
            defaults_from: None,
            domains: Vec::new(),
            trial_len: 32,
            measure: MeasureConfig::default(),
            surface: SurfaceConfig::default(),
            generation_cost_us: 100.0,
            seed: 1,
            disable_tuner: false,
            repeat: 1,
            report: None,
            trace: None,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DefaultsFile {
    defaults: Defaults,
}

/// Reads the `[defaults]` table of a TOML file.
pub fn load_defaults(path: &Path) -> Result<Defaults, HarnessError> {
    Ok(toml::from_str::<DefaultsFile>(&std::fs::read_to_string(path)?)?.defaults)
}

pub fn save_defaults(path: &Path, defaults: Defaults) -> Result<(), HarnessError> {
    std::fs::write(path, toml::to_string(&DefaultsFile { defaults })?)?;
    Ok(())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Ok(toml::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn passes(&self) -> usize {
        self.passes.unwrap_or(match self.kernel {
            KernelKind::Distance => 100,
            KernelKind::Lintra => 1,
        })
    }

    pub fn space(&self) -> Result<TuningSpace, HarnessError> {
        let mut space = TuningSpace::reference_ranges();
        for d in &self.domains {
            space = space.with_domain(d.clone());
        }
        Ok(space)
    }

    pub fn policy(&self) -> Result<Policy, HarnessError> {
        if !(self.wake_ms > 0.0 && self.wake_ms.is_finite()) {
            return Err(PolicyError::WakePeriod.into());
        }
        Ok(Policy::new(
            self.budget_pct / 100.0,
            self.invest_pct / 100.0,
            Duration::from_secs_f64(self.wake_ms / 1000.0),
        )?)
    }

    /// Explicit defaults, overridden by a pre-profiling file when given.
    pub fn effective_defaults(&self) -> Result<Defaults, HarnessError> {
        match &self.defaults_from {
            Some(p) => load_defaults(p),
            None => Ok(self.defaults),
        }
    }

    pub fn tuner_config(&self) -> Result<TunerConfig, HarnessError> {
        Ok(TunerConfig {
            policy: self.policy()?,
            limit: self.exploration_limit,
            mode: self.mode,
            defaults: self.effective_defaults()?,
            ..TunerConfig::default()
        })
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        match self.kernel {
            KernelKind::Distance => {
                if self.dim == 0 || self.points == 0 || self.centers == 0 {
                    return bad("dim, points and centers must be positive");
                }
                if self.centers > self.points {
                    return bad("centers cannot exceed points");
                }
            }
            KernelKind::Lintra => {
                if self.input.is_none() && (self.bands == 0 || self.width == 0 || self.rows == 0) {
                    return bad("bands, width and rows must be positive");
                }
                if self.mul.is_empty() || self.add.is_empty() {
                    return bad("mul and add need at least one factor");
                }
            }
        }
        if self.passes() == 0 || self.repeat == 0 {
            return bad("passes and repeat must be positive");
        }
        if self.exploration_limit == 0 {
            return bad("exploration_limit must be positive");
        }
        if self.measure.reps < self.measure.group_size * self.measure.group_count {
            return bad("measure.reps must cover group_size * group_count");
        }
        if self.measure.calls_per_sample == 0 {
            return bad("measure.calls_per_sample must be positive");
        }
        self.space()?;
        self.tuner_config()?;
        Ok(())
    }
}

/// Hook called by drivers after every kernel call.
pub struct Ticker<'a> {
    sim: Option<&'a mut dyn FnMut()>,
}

impl Ticker<'_> {
    pub fn none() -> Ticker<'static> {
        Ticker { sim: None }
    }

    #[inline]
    pub fn tick(&mut self) {
        if let Some(f) = self.sim.as_mut() {
            f()
        }
    }
}

/// Points and centers for the distance driver.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceData {
    pub dim: usize,
    pub points: Vec<f32>,
    pub centers: Vec<f32>,
}

impl DistanceData {
    /// Uniform points in the unit cube; the first `centers` points are the
    /// centers.
    pub fn generate(dim: usize, points: usize, centers: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points: Vec<f32> = (0..dim * points).map(|_| rng.gen::<f32>()).collect();
        let centers = points[..dim * centers].to_vec();
        Self { dim, points, centers }
    }

    pub fn point(&self, i: usize) -> &[f32] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn center(&self, j: usize) -> &[f32] {
        &self.centers[j * self.dim..(j + 1) * self.dim]
    }

    pub fn point_count(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn center_count(&self) -> usize {
        self.centers.len() / self.dim
    }
}

/// Assigns every point to its nearest center, `passes` times, with
/// `dist` doing the distance computations. Returns the last assignment.
#[inline]
pub fn assign_nearest(data: &DistanceData, passes: usize, mut dist: impl FnMut(&[f32], &[f32]) -> f32) -> Vec<u32> {
    let mut assignment = vec![0u32; data.point_count()];
    for _ in 0..passes {
        for (i, slot) in assignment.iter_mut().enumerate() {
            let p = data.point(i);
            let mut best = (f32::INFINITY, 0u32);
            for j in 0..data.center_count() {
                let d = dist(p, data.center(j));
                if d < best.0 {
                    best = (d, j as u32);
                }
            }
            *slot = best.1;
        }
    }
    assignment
}

pub fn distance_driver(data: &DistanceData, passes: usize, d: &Dispatcher<DistanceKernel>, ticker: &mut Ticker) -> Vec<u32> {
    assign_nearest(data, passes, |a, b| {
        let r = d.invoke(|k| k.eval(a, b));
        ticker.tick();
        r
    })
}

/// True when the assignments agree, or every disagreement is a tie within
/// `rel_tol` of the squared distances.
pub fn assignments_match(data: &DistanceData, a: &[u32], b: &[u32], rel_tol: f64) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let exact = |p: &[f32], c: &[f32]| -> f64 {
        p.iter().zip(c).map(|(x, y)| (*x as f64 - *y as f64).powi(2)).sum()
    };
    a.iter().zip(b).enumerate().all(|(i, (&x, &y))| {
        if x == y {
            return true;
        }
        let p = data.point(i);
        let (dx, dy) = (exact(p, data.center(x as usize)), exact(p, data.center(y as usize)));
        (dx - dy).abs() <= rel_tol * dx.max(dy).max(f64::MIN_POSITIVE)
    })
}

/// Expands per-band factors by cycling.
pub fn band_factors(values: &[f32], bands: usize) -> Vec<f32> {
    (0..bands).map(|b| values[b % values.len()]).collect()
}

/// One kernel call per row, `passes` times over the image.
pub fn lintra_driver(
    input: &Image,
    mul: &[f32],
    add: &[f32],
    passes: usize,
    d: &Dispatcher<LintraKernel>,
    ticker: &mut Ticker,
) -> Image {
    let mut out = Image::zeros(input.width, input.height, input.bands);
    for _ in 0..passes {
        for y in 0..input.height {
            let row = input.row(y);
            d.invoke(|k| k.apply(row, mul, add, out.row_mut(y)));
            ticker.tick();
        }
    }
    out
}

/// Naive per-sample transform.
pub fn lintra_oracle(input: &Image, mul: &[f32], add: &[f32]) -> Image {
    let mut out = Image::zeros(input.width, input.height, input.bands);
    for (i, (o, v)) in out.data.iter_mut().zip(&input.data).enumerate() {
        let b = i % input.bands;
        *o = v * mul[b] + add[b];
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub enum DriverOutput {
    Assignments(Vec<u32>),
    Image(Image),
}

/// Statistics of one run. Durations are integer nanoseconds in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub kernel: KernelKind,
    pub backend: BackendKind,
    pub mode: Mode,
    pub tuner_enabled: bool,
    /// Feasible points of the space admitted by `mode`.
    pub explorable_versions: usize,
    pub exploration_limit: usize,
    pub explored: usize,
    #[serde(rename = "overhead_generation_ns", with = "nanos")]
    pub overhead_generation: Duration,
    #[serde(rename = "overhead_evaluation_ns", with = "nanos")]
    pub overhead_evaluation: Duration,
    #[serde(rename = "overhead_total_ns", with = "nanos")]
    pub overhead_total: Duration,
    /// `overhead_total / run_time * 100`.
    pub overhead_pct: f64,
    #[serde(rename = "run_time_ns", with = "nanos")]
    pub run_time: Duration,
    pub kernel_calls: u64,
    /// From the start of the run until exploration finished, or the whole
    /// run if it never did.
    #[serde(rename = "tuning_window_ns", with = "nanos")]
    pub tuning_window: Duration,
    /// `tuning_window / run_time`.
    pub duration_to_kernel_life: f64,
    pub swaps: Vec<SwapRecord>,
    /// Point serving calls at exit; `None` is the reference kernel.
    pub final_point: Option<TuningPoint>,
    /// Best point the explorer scored.
    pub best_point: Option<TuningPoint>,
    pub reference_per_call_ns: Option<u64>,
    pub final_per_call_ns: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub runs: Vec<RunReport>,
    /// Mean final point over runs that replaced the reference kernel.
    pub best_parameter_averages: Option<ParameterAverages>,
    /// The same means scaled to `[0, 1]` over each domain.
    pub normalized_averages: Option<ParameterAverages>,
}

impl Report {
    pub fn from_runs(runs: Vec<RunReport>, space: &TuningSpace) -> Self {
        let finals: Vec<TuningPoint> = runs.iter().filter_map(|r| r.final_point).collect();
        let avg = best_parameter_averages(&finals).ok();
        Self {
            normalized_averages: avg.map(|a| a.normalized(space)),
            best_parameter_averages: avg,
            runs,
        }
    }

    pub fn write_json(&self, path: &Path) -> Result<(), HarnessError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub trace: Vec<TraceRecord>,
    pub output: DriverOutput,
    /// Final gains ledger state, when the tuner ran.
    pub overhead: OverheadLedger,
}

pub fn explorable_versions<G: KernelGenerator>(space: &TuningSpace, generator: &G, mode: Mode) -> usize {
    space
        .points()
        .filter(|p| match mode {
            Mode::SisdOnly => !p.vectorize,
            Mode::SimdOnly => p.vectorize,
            Mode::Both => true,
        })
        .filter(|p| generator.is_feasible(p))
        .count()
}

struct TunerStats {
    explored: usize,
    trace: Vec<TraceRecord>,
    overhead: OverheadLedger,
    swaps: Vec<SwapRecord>,
    finished_at: Option<Duration>,
    best: Option<TuningPoint>,
    final_point: Option<TuningPoint>,
    reference: Option<Duration>,
    final_score: Option<Duration>,
}

impl TunerStats {
    fn of<B: TuningBackend>(t: &Tuner<B>) -> Self {
        let (final_point, final_score) = t.active();
        Self {
            explored: t.explorer().explored(),
            trace: t.explorer().trace().to_vec(),
            overhead: t.overhead(),
            swaps: t.swaps().to_vec(),
            finished_at: t.finished_at(),
            best: t.explorer().best().map(|b| b.0),
            final_point,
            reference: t.reference_score().map(|s| s.per_call),
            final_score: final_score.map(|s| s.per_call),
        }
    }
}

struct Execution<O> {
    output: O,
    run_time: Duration,
    calls: u64,
    stats: Option<TunerStats>,
}

fn execute_native<G, T, O>(
    cfg: &RunConfig,
    space: &TuningSpace,
    generator: G,
    training: T,
    app: impl FnOnce(&Dispatcher<G::Kernel>, &mut Ticker) -> O,
) -> Result<Execution<O>, HarnessError>
where
    G: KernelGenerator,
    T: TrainingData<G::Kernel>,
{
    let clock: Arc<dyn Clock> = Arc::new(MonotonicClock::new());
    let dispatcher = Arc::new(Dispatcher::new(generator.reference(), clock.clone()));
    let done = Arc::new(AtomicBool::new(false));
    let tcfg = cfg.tuner_config()?;
    let period = tcfg.policy.wake_period;
    let mut tuner = if cfg.disable_tuner {
        None
    } else {
        let backend = NativeBackend::new(
            generator,
            training,
            dispatcher.clone(),
            clock.clone(),
            cfg.measure,
            cfg.trial_len,
            done.clone(),
        );
        Some((Tuner::new(space, tcfg, clock.now())?, backend))
    };
    let (output, run_time) = std::thread::scope(|s| {
        if let Some((t, b)) = tuner.as_mut() {
            let done = &done;
            s.spawn(move || {
                while !done.load(Ordering::Acquire) && !t.is_done() {
                    std::thread::sleep(period);
                    if !done.load(Ordering::Acquire) {
                        t.wake(b);
                    }
                }
            });
        }
        let t0 = clock.now();
        let output = app(&dispatcher, &mut Ticker::none());
        let run_time = clock.now().saturating_sub(t0);
        done.store(true, Ordering::Release);
        (output, run_time)
    });
    Ok(Execution {
        output,
        run_time,
        calls: dispatcher.call_count(),
        stats: tuner.as_ref().map(|(t, _)| TunerStats::of(t)),
    })
}

fn execute_synthetic<G, O>(
    cfg: &RunConfig,
    space: &TuningSpace,
    generator: G,
    surface: CostSurface,
    app: impl FnOnce(&Dispatcher<G::Kernel>, &mut Ticker) -> O,
) -> Result<Execution<O>, HarnessError>
where
    G: KernelGenerator + Clone + 'static,
{
    let clock = Arc::new(SimClock::new());
    let dispatcher = Arc::new(Dispatcher::new(generator.reference(), clock.clone() as Arc<dyn Clock>));
    let leftover = generator.clone();
    let installer = generator.clone();
    let slot = dispatcher.clone();
    let mut backend = SyntheticBackend::new(surface, clock.clone(), move |p| leftover.leftover_of(p)).on_install(
        move |p| {
            let kernel = match p {
                Some(p) => installer.generate(&p).expect("surface and generator agree on holes").kernel,
                None => installer.reference(),
            };
            slot.install(kernel);
        },
    );
    backend.measure = cfg.measure;
    backend.trial_len = cfg.trial_len;
    backend.generation_cost = Duration::from_secs_f64(cfg.generation_cost_us / 1e6);
    let mut run = SimulatedRun::new(space, cfg.tuner_config()?, backend)?;
    let enabled = !cfg.disable_tuner;
    let mut pending = 0u64;
    let mut due = run.calls_until_wake().max(1);
    let mut on_call = || {
        pending += 1;
        if pending >= due {
            if enabled {
                run.served(pending);
            } else {
                let per = run.backend.active_cost();
                run.backend.clock.advance(crate::tuner::times(per, pending));
                run.backend.record_calls(pending);
            }
            pending = 0;
            due = run.calls_until_wake().max(1);
        }
    };
    let output = app(&dispatcher, &mut Ticker { sim: Some(&mut on_call) });
    if pending > 0 {
        let per = run.backend.active_cost();
        run.backend.clock.advance(crate::tuner::times(per, pending));
        run.backend.record_calls(pending);
    }
    Ok(Execution {
        output,
        run_time: run.elapsed(),
        calls: dispatcher.call_count(),
        stats: enabled.then(|| TunerStats::of(&run.tuner)),
    })
}

fn execute<G, T, O>(
    cfg: &RunConfig,
    space: &TuningSpace,
    generator: G,
    training: T,
    app: impl FnOnce(&Dispatcher<G::Kernel>, &mut Ticker) -> O,
) -> Result<Execution<O>, HarnessError>
where
    G: KernelGenerator + Clone + 'static,
    T: TrainingData<G::Kernel>,
{
    match cfg.backend {
        BackendKind::Native => execute_native(cfg, space, generator, training, app),
        BackendKind::Synthetic => {
            let surface = cfg.surface.build(space, generator.budget());
            execute_synthetic(cfg, space, generator, surface, app)
        }
    }
}

fn finish<G: KernelGenerator, O>(
    cfg: &RunConfig,
    space: &TuningSpace,
    generator: &G,
    exec: Execution<O>,
    output: impl FnOnce(O) -> DriverOutput,
) -> RunOutcome {
    let stats = exec.stats;
    let run_time = exec.run_time.max(Duration::from_nanos(1));
    let overhead = stats.as_ref().map(|s| s.overhead).unwrap_or_default();
    let tuning_window = stats
        .as_ref()
        .map(|s| s.finished_at.unwrap_or(run_time).min(run_time))
        .unwrap_or_default();
    let ns = |d: Duration| d.as_nanos() as u64;
    let report = RunReport {
        kernel: cfg.kernel,
        backend: cfg.backend,
        mode: cfg.mode,
        tuner_enabled: stats.is_some(),
        explorable_versions: explorable_versions(space, generator, cfg.mode),
        exploration_limit: cfg.exploration_limit,
        explored: stats.as_ref().map_or(0, |s| s.explored),
        overhead_generation: overhead.spent_generation,
        overhead_evaluation: overhead.spent_evaluation,
        overhead_total: overhead.total(),
        overhead_pct: overhead.total().as_secs_f64() / run_time.as_secs_f64() * 100.0,
        run_time,
        kernel_calls: exec.calls,
        tuning_window,
        duration_to_kernel_life: tuning_window.as_secs_f64() / run_time.as_secs_f64(),
        swaps: stats.as_ref().map(|s| s.swaps.clone()).unwrap_or_default(),
        final_point: stats.as_ref().and_then(|s| s.final_point),
        best_point: stats.as_ref().and_then(|s| s.best),
        reference_per_call_ns: stats.as_ref().and_then(|s| s.reference.map(ns)),
        final_per_call_ns: stats.as_ref().and_then(|s| s.final_score.map(ns)),
    };
    RunOutcome {
        report,
        trace: stats.map(|s| s.trace).unwrap_or_default(),
        output: output(exec.output),
        overhead,
    }
}

pub fn run_distance_driver(cfg: &RunConfig) -> Result<RunOutcome, HarnessError> {
    cfg.validate()?;
    let space = cfg.space()?;
    let data = DistanceData::generate(cfg.dim, cfg.points, cfg.centers, cfg.seed);
    let generator = DistanceGenerator::new(cfg.dim);
    let passes = cfg.passes();
    let exec = execute(cfg, &space, generator.clone(), DistanceTraining::new(cfg.dim), |d, t| {
        distance_driver(&data, passes, d, t)
    })?;
    Ok(finish(cfg, &space, &generator, exec, DriverOutput::Assignments))
}

/// The input image: loaded from `cfg.input`, or random from `cfg.seed`.
pub fn lintra_input(cfg: &RunConfig) -> Result<Image, HarnessError> {
    match &cfg.input {
        Some(p) => Ok(Image::load(p)?),
        None => Ok(Image::random(cfg.width, cfg.rows, cfg.bands, cfg.seed)),
    }
}

pub fn run_lintra_driver(cfg: &RunConfig) -> Result<RunOutcome, HarnessError> {
    cfg.validate()?;
    let space = cfg.space()?;
    let input = lintra_input(cfg)?;
    let (bands, width) = (input.bands, input.width);
    let mul = band_factors(&cfg.mul, bands);
    let add = band_factors(&cfg.add, bands);
    let generator = LintraGenerator::new(bands, width);
    let passes = cfg.passes();
    let exec = execute(cfg, &space, generator.clone(), LintraTraining::new(bands, width), |d, t| {
        lintra_driver(&input, &mul, &add, passes, d, t)
    })?;
    let outcome = finish(cfg, &space, &generator, exec, DriverOutput::Image);
    if let (Some(path), DriverOutput::Image(img)) = (&cfg.output, &outcome.output) {
        img.save(path)?;
    }
    Ok(outcome)
}

pub fn run_once(cfg: &RunConfig) -> Result<RunOutcome, HarnessError> {
    match cfg.kernel {
        KernelKind::Distance => run_distance_driver(cfg),
        KernelKind::Lintra => run_lintra_driver(cfg),
    }
}

/// Path of run `i` of `n`: unchanged for a single run, `name.run{i}.ext`
/// otherwise.
pub fn per_run_path(path: &Path, i: usize, n: usize) -> PathBuf {
    if n == 1 {
        return path.to_path_buf();
    }
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.run{i}.{}", ext.to_string_lossy()),
        None => format!("{stem}.run{i}"),
    };
    path.with_file_name(name)
}

/// Runs `cfg.repeat` times and writes the report and traces it asks for.
pub fn run(cfg: &RunConfig) -> Result<(Report, Vec<RunOutcome>), HarnessError> {
    cfg.validate()?;
    let space = cfg.space()?;
    let mut outcomes = Vec::with_capacity(cfg.repeat);
    for i in 0..cfg.repeat {
        let outcome = run_once(cfg)?;
        if let Some(p) = &cfg.trace {
            let f = std::fs::File::create(per_run_path(p, i, cfg.repeat))?;
            write_trace_csv(std::io::BufWriter::new(f), &outcome.trace)?;
        }
        outcomes.push(outcome);
    }
    let report = Report::from_runs(outcomes.iter().map(|o| o.report.clone()).collect(), &space);
    if let Some(p) = &cfg.report {
        report.write_json(p)?;
    }
    Ok((report, outcomes))
}

/// Offline sweep of the phase-two options at a fixed structure on training
/// data; the fastest combination becomes the phase-one defaults.
pub fn preprofile(cfg: &RunConfig) -> Result<Defaults, HarnessError> {
    cfg.validate()?;
    match cfg.kernel {
        KernelKind::Distance => preprofile_with(cfg, DistanceGenerator::new(cfg.dim), DistanceTraining::new(cfg.dim)),
        KernelKind::Lintra => {
            let input = lintra_input(cfg)?;
            preprofile_with(
                cfg,
                LintraGenerator::new(input.bands, input.width),
                LintraTraining::new(input.bands, input.width),
            )
        }
    }
}

fn preprofile_with<G: KernelGenerator, T: TrainingData<G::Kernel>>(
    cfg: &RunConfig,
    generator: G,
    mut training: T,
) -> Result<Defaults, HarnessError> {
    let space = cfg.space()?;
    let plan = PhasePlan::new(&space, cfg.defaults);
    let clock = MonotonicClock::new();
    let base = TuningPoint {
        vectorize: cfg.mode == Mode::SimdOnly,
        ..space.min_point()
    };
    let mut best: Option<(Defaults, Duration)> = None;
    for &(pld_stride, stack_min, sched_instr) in &plan.phase2_combos {
        let combo = Defaults {
            sched_instr,
            stack_min,
            pld_stride,
        };
        let point = combo.apply(base);
        let Ok(v) = generator.generate(&point) else { continue };
        let Ok(score) = evaluator::measure_training(&*v.kernel, &mut training, &clock, &cfg.measure) else {
            continue;
        };
        if best.is_none_or(|(_, s)| score.per_call < s) {
            best = Some((combo, score.per_call));
        }
    }
    best.map(|b| b.0)
        .ok_or_else(|| HarnessError::Config("no phase-two combination could be measured".into()))
}

/// Share of driver time spent in kernel calls, dispatch included:
/// `1 - t_rest / t_total`, where `t_rest` reruns the driver with a constant
/// in place of the kernel.
pub fn distance_kernel_share(cfg: &RunConfig) -> f64 {
    let data = DistanceData::generate(cfg.dim, cfg.points, cfg.centers, cfg.seed);
    let d = Dispatcher::new(
        DistanceGenerator::new(cfg.dim).reference(),
        Arc::new(MonotonicClock::new()) as Arc<dyn Clock>,
    );
    let passes = cfg.passes();
    let time = |f: &mut dyn FnMut() -> Vec<u32>| {
        let t0 = std::time::Instant::now();
        std::hint::black_box(f());
        t0.elapsed()
    };
    let total = time(&mut || distance_driver(&data, passes, &d, &mut Ticker::none()));
    let mut k = 0u32;
    let rest = time(&mut || {
        assign_nearest(&data, passes, |a, _| {
            k = k.wrapping_add(1);
            std::hint::black_box(a[0] + (k & 7) as f32)
        })
    });
    1.0 - rest.as_secs_f64() / total.as_secs_f64()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_distance() -> RunConfig {
        RunConfig {
            dim: 16,
            points: 256,
            centers: 8,
            passes: Some(4),
            ..RunConfig::default()
        }
    }

    #[test]
    fn config_toml_round_trip_and_partial_files() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(toml::from_str::<RunConfig>(&text).unwrap(), cfg);
        let partial: RunConfig = toml::from_str("kernel = \"lintra\"\nbudget_pct = 2.0\n").unwrap();
        assert_eq!(partial.kernel, KernelKind::Lintra);
        assert_eq!(partial.budget_pct, 2.0);
        assert_eq!(partial.passes(), 1);
        assert!(toml::from_str::<RunConfig>("nonsense = 1").is_err());
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let bad = [
            RunConfig { points: 0, ..small_distance() },
            RunConfig { centers: 300, ..small_distance() },
            RunConfig { budget_pct: 150.0, ..small_distance() },
            RunConfig { wake_ms: 0.0, ..small_distance() },
            RunConfig { exploration_limit: 0, ..small_distance() },
            RunConfig { repeat: 0, ..small_distance() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn assign_nearest_finds_centers_themselves() {
        let data = DistanceData::generate(8, 50, 5, 3);
        let exact = |a: &[f32], b: &[f32]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        let a = assign_nearest(&data, 1, exact);
        assert_eq!(&a[..5], &[0, 1, 2, 3, 4]);
    }

    #[test]
    fn tie_tolerant_comparison() {
        let data = DistanceData {
            dim: 1,
            points: vec![0.5],
            centers: vec![0.0, 1.0, 0.9],
        };
        assert!(assignments_match(&data, &[0], &[1], 1e-5));
        assert!(!assignments_match(&data, &[0], &[2], 1e-5));
    }

    #[test]
    fn lintra_identity_factors_copy_input() {
        let img = Image::random(5, 4, 3, 2);
        let d = Dispatcher::new(
            Arc::new(LintraKernel::reference(3, 5)),
            Arc::new(MonotonicClock::new()) as Arc<dyn Clock>,
        );
        let out = lintra_driver(&img, &[1.0; 3], &[0.0; 3], 1, &d, &mut Ticker::none());
        assert_eq!(out, img);
        assert_eq!(d.call_count(), 4);
    }

    #[test]
    fn synthetic_distance_run_reaches_argmin_with_generous_limit() {
        let cfg = RunConfig {
            backend: BackendKind::Synthetic,
            exploration_limit: 100_000,
            passes: Some(6000),
            domains: vec![ParameterDomain::range(crate::space::Param::ColdUf, 1, 8).unwrap()],
            ..small_distance()
        };
        let out = run_distance_driver(&cfg).unwrap();
        let surface = cfg.surface.build(&cfg.space().unwrap(), DistanceGenerator::new(16).budget());
        assert!(out.report.duration_to_kernel_life < 1.0, "{:?}", out.report);
        assert_eq!(out.report.final_point, surface.optimum);
        assert_eq!(out.report.explored, out.trace.len());
    }

    #[test]
    fn per_run_paths() {
        assert_eq!(per_run_path(Path::new("/t/trace.csv"), 0, 1), PathBuf::from("/t/trace.csv"));
        assert_eq!(per_run_path(Path::new("/t/trace.csv"), 2, 3), PathBuf::from("/t/trace.run2.csv"));
    }
}
