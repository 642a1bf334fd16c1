//! The tuning side loop: wake, consult the governor, try one candidate,
//! install it if it beats the active kernel.
//!
//! [`Tuner`] is generic over a [`TuningBackend`] so the same decision logic
//! drives real kernels ([`NativeBackend`]) and cost surfaces on a simulated
//! clock ([`SyntheticBackend`], [`simulate`]).

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::clock::{Clock, SimClock};
use crate::dispatcher::Dispatcher;
use crate::evaluator::{self, EvalError, MeasureConfig, Protocol, Score, TrainingData};
use crate::explorer::{
    CandidateResult, Defaults, ExplorationState, ExploreError, Mode, Next, Outcome, Phase,
};
use crate::governor::{
    estimate_gains, record_overhead, should_regenerate, CostPredictor, GainsLedger, OverheadKind,
    OverheadLedger, Policy,
};
use crate::space::{TuningPoint, TuningSpace};
use crate::synthetic::CostSurface;
use crate::variantgen::{GenerationError, KernelGenerator};

/// A value plus the tuner time it took to obtain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Measured<T> {
    pub value: T,
    pub cost: Duration,
}

/// What the tuner needs from the world.
pub trait TuningBackend {
    type Candidate: Clone;

    /// Handle to the kernel active before tuning.
    fn reference(&mut self) -> Self::Candidate;
    fn generate(&mut self, point: &TuningPoint) -> Measured<Result<Self::Candidate, GenerationError>>;
    fn measure_training(&mut self, candidate: &Self::Candidate) -> Measured<Result<Score, EvalError>>;
    /// Times real application calls on `candidate`. The charged cost is
    /// what the trial added on top of running the active kernel.
    fn measure_real(
        &mut self,
        candidate: &Self::Candidate,
        active_per_call: Duration,
    ) -> Measured<Result<Score, EvalError>>;
    fn install(&mut self, candidate: &Self::Candidate) -> u64;
    fn call_count(&self) -> u64;
    fn now(&self) -> Duration;
    fn is_feasible(&self, point: &TuningPoint) -> bool;
    fn leftover_of(&self, point: &TuningPoint) -> usize;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunerConfig {
    pub policy: Policy,
    pub limit: usize,
    pub mode: Mode,
    pub defaults: Defaults,
    /// Expected cost of the first candidate, before any was observed.
    #[serde(with = "crate::reporting::nanos")]
    pub cost_prior: Duration,
}

impl Default for TunerConfig {
    fn default() -> Self {
        Self {
            policy: Policy::default(),
            limit: 80,
            mode: Mode::Both,
            defaults: Defaults::default(),
            cost_prior: Duration::from_micros(200),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwapRecord {
    pub epoch: u64,
    pub point: TuningPoint,
    pub score: Score,
    #[serde(with = "crate::reporting::nanos")]
    pub at: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WakeOutcome {
    /// Reference kernel measured; tuning starts on the next wake.
    Initialized,
    /// Governor declined.
    Skipped,
    Explored(Outcome),
    Transitioned,
    Done,
}

pub struct Tuner<B: TuningBackend> {
    cfg: TunerConfig,
    explorer: ExplorationState,
    gains: Option<GainsLedger>,
    overhead: OverheadLedger,
    predictor: CostPredictor,
    reference_score: Option<Score>,
    active_point: Option<TuningPoint>,
    active_score: Option<Score>,
    active_candidate: Option<B::Candidate>,
    best_candidate: Option<B::Candidate>,
    swaps: Vec<SwapRecord>,
    start: Duration,
    finished_at: Option<Duration>,
    max_step_cost: Duration,
}

impl<B: TuningBackend> Tuner<B> {
    pub fn new(space: &TuningSpace, cfg: TunerConfig, start: Duration) -> Result<Self, ExploreError> {
        let explorer = ExplorationState::init(space, cfg.defaults, cfg.limit, cfg.mode)?;
        Ok(Self {
            predictor: CostPredictor::new(cfg.cost_prior),
            cfg,
            explorer,
            gains: None,
            overhead: OverheadLedger::default(),
            reference_score: None,
            active_point: None,
            active_score: None,
            active_candidate: None,
            best_candidate: None,
            swaps: Vec::new(),
            start,
            finished_at: None,
            max_step_cost: Duration::ZERO,
        })
    }

    pub fn is_done(&self) -> bool {
        self.finished_at.is_some()
    }

    pub fn explorer(&self) -> &ExplorationState {
        &self.explorer
    }

    pub fn overhead(&self) -> OverheadLedger {
        self.overhead
    }

    pub fn gains(&self) -> Option<&GainsLedger> {
        self.gains.as_ref()
    }

    pub fn reference_score(&self) -> Option<Score> {
        self.reference_score
    }

    pub fn active(&self) -> (Option<TuningPoint>, Option<Score>) {
        (self.active_point, self.active_score)
    }

    pub fn swaps(&self) -> &[SwapRecord] {
        &self.swaps
    }

    /// Largest tuner cost of a single wake.
    pub fn max_step_cost(&self) -> Duration {
        self.max_step_cost
    }

    /// When exploration finished, relative to the start of the run.
    pub fn finished_at(&self) -> Option<Duration> {
        self.finished_at.map(|t| t.saturating_sub(self.start))
    }

    pub fn config(&self) -> &TunerConfig {
        &self.cfg
    }

    fn charge(&mut self, kind: OverheadKind, cost: Duration) {
        record_overhead(&mut self.overhead, kind, cost);
    }

    fn finish(&mut self, b: &B) -> WakeOutcome {
        if let Some(g) = self.gains.as_mut() {
            g.observe(b.call_count());
        }
        self.finished_at.get_or_insert(b.now());
        WakeOutcome::Done
    }

    /// One wake of the side loop.
    pub fn wake(&mut self, b: &mut B) -> WakeOutcome {
        if self.finished_at.is_some() {
            return WakeOutcome::Done;
        }
        if self.gains.is_none() {
            let elapsed = b.now().saturating_sub(self.start);
            let expected = self.predictor.expected();
            if !should_regenerate(&self.cfg.policy, &self.overhead, Duration::ZERO, elapsed, expected) {
                return WakeOutcome::Skipped;
            }
            let reference = b.reference();
            let m = b.measure_training(&reference);
            self.charge(OverheadKind::Evaluation, m.cost);
            self.predictor.observe(m.cost);
            self.max_step_cost = self.max_step_cost.max(m.cost);
            let Ok(score) = m.value else {
                return self.finish(b);
            };
            self.reference_score = Some(score);
            self.active_score = Some(score);
            self.active_candidate = Some(reference);
            self.gains = Some(GainsLedger::new(score.per_call, b.call_count()));
            return WakeOutcome::Initialized;
        }
        if self.explorer.is_done() {
            return self.finish(b);
        }
        let gains = {
            let g = self.gains.as_mut().expect("initialized");
            g.observe(b.call_count());
            estimate_gains(g)
        };
        let elapsed = b.now().saturating_sub(self.start);
        if !should_regenerate(&self.cfg.policy, &self.overhead, gains, elapsed, self.predictor.expected()) {
            return WakeOutcome::Skipped;
        }
        let next = {
            let feasible = |p: &TuningPoint| b.is_feasible(p);
            let leftover = |p: &TuningPoint| b.leftover_of(p);
            self.explorer.next_candidate(&feasible, &leftover)
        };
        match next {
            Next::Done => self.finish(b),
            Next::PhaseTransition => {
                let cost = self.rebase(b);
                self.predictor.observe(cost);
                self.max_step_cost = self.max_step_cost.max(cost);
                WakeOutcome::Transitioned
            }
            Next::Candidate(p) => {
                let (outcome, cost) = self.try_candidate(b, p);
                self.predictor.observe(cost);
                self.max_step_cost = self.max_step_cost.max(cost);
                WakeOutcome::Explored(outcome)
            }
        }
    }

    /// Re-measures the phase-one winner and the active kernel with real
    /// data so phase-two comparisons use a single protocol.
    fn rebase(&mut self, b: &mut B) -> Duration {
        let mut cost = Duration::ZERO;
        let active_per_call = self.active_score.map(|s| s.per_call).unwrap_or_default();
        let best_point = self.explorer.best().map(|(p, _)| p);
        let mut best_real = None;
        if let Some(c) = self.best_candidate.clone() {
            let m = b.measure_real(&c, active_per_call);
            cost += m.cost;
            if let Ok(s) = m.value {
                self.explorer.rebase_best(s);
                best_real = Some(s);
            }
        }
        let active_real = if best_point.is_some() && best_point == self.active_point {
            best_real
        } else if let Some(c) = self.active_candidate.clone() {
            let m = b.measure_real(&c, active_per_call);
            cost += m.cost;
            m.value.ok()
        } else {
            None
        };
        self.charge(OverheadKind::Evaluation, cost);
        if let Some(s) = active_real {
            self.active_score = Some(s);
            self.gains
                .as_mut()
                .expect("initialized")
                .switch(s.per_call, b.call_count());
        }
        cost
    }

    fn try_candidate(&mut self, b: &mut B, p: TuningPoint) -> (Outcome, Duration) {
        let g = b.generate(&p);
        self.charge(OverheadKind::Generation, g.cost);
        let candidate = match g.value {
            Ok(c) => c,
            Err(_) => {
                self.explorer
                    .notify_result(&p, CandidateResult::GenerationFailed)
                    .expect("pending");
                return (Outcome::GenerationFailed, g.cost);
            }
        };
        let active = self.active_score.expect("initialized");
        let m = match self.explorer.phase() {
            Phase::One => b.measure_training(&candidate),
            _ => b.measure_real(&candidate, active.per_call),
        };
        self.charge(OverheadKind::Evaluation, m.cost);
        let cost = g.cost + m.cost;
        let score = match m.value {
            Ok(s) => s,
            Err(_) => {
                self.explorer
                    .notify_result(&p, CandidateResult::EvaluationFailed)
                    .expect("pending");
                return (Outcome::EvaluationFailed, cost);
            }
        };
        if self.explorer.best().is_none_or(|(_, s)| score.per_call < s.per_call) {
            self.best_candidate = Some(candidate.clone());
        }
        let install = evaluator::better(&score, &active);
        if install {
            let epoch = b.install(&candidate);
            let at = b.now().saturating_sub(self.start);
            self.gains
                .as_mut()
                .expect("initialized")
                .switch(score.per_call, b.call_count());
            self.active_point = Some(p);
            self.active_score = Some(score);
            self.active_candidate = Some(candidate.clone());
            self.swaps.push(SwapRecord {
                epoch,
                point: p,
                score,
                at,
            });
        }
        self.explorer
            .notify_with_outcome(&p, CandidateResult::Scored(score), Some(install))
            .expect("pending");
        let outcome = if install {
            Outcome::Installed
        } else {
            Outcome::Rejected
        };
        (outcome, cost)
    }
}

/// Real kernels, timed on the tuner thread and through dispatcher trials.
pub struct NativeBackend<G: KernelGenerator, T> {
    pub generator: G,
    pub training: T,
    pub dispatcher: Arc<Dispatcher<G::Kernel>>,
    pub clock: Arc<dyn Clock>,
    pub measure: MeasureConfig,
    pub trial_len: usize,
    /// Set by the application when it stops issuing calls.
    pub app_done: Arc<AtomicBool>,
    timing_cost: Duration,
    reference: Arc<G::Kernel>,
}

impl<G: KernelGenerator, T: TrainingData<G::Kernel>> NativeBackend<G, T> {
    pub fn new(
        generator: G,
        training: T,
        dispatcher: Arc<Dispatcher<G::Kernel>>,
        clock: Arc<dyn Clock>,
        measure: MeasureConfig,
        trial_len: usize,
        app_done: Arc<AtomicBool>,
    ) -> Self {
        // Two clock reads per timed trial call.
        let t0 = clock.now();
        for _ in 0..1000 {
            std::hint::black_box(clock.now());
        }
        let timing_cost = clock.now().saturating_sub(t0) / 500;
        let reference = dispatcher.active();
        Self {
            generator,
            training,
            dispatcher,
            clock,
            measure,
            trial_len,
            app_done,
            timing_cost,
            reference,
        }
    }
}

impl<G: KernelGenerator, T: TrainingData<G::Kernel>> TuningBackend for NativeBackend<G, T> {
    type Candidate = Arc<G::Kernel>;

    fn reference(&mut self) -> Arc<G::Kernel> {
        Arc::clone(&self.reference)
    }

    fn generate(&mut self, point: &TuningPoint) -> Measured<Result<Arc<G::Kernel>, GenerationError>> {
        let t0 = self.clock.now();
        let value = self.generator.generate(point).map(|v| v.kernel);
        Measured {
            value,
            cost: self.clock.now().saturating_sub(t0),
        }
    }

    fn measure_training(&mut self, candidate: &Arc<G::Kernel>) -> Measured<Result<Score, EvalError>> {
        let t0 = self.clock.now();
        let value = evaluator::measure_training(&**candidate, &mut self.training, &*self.clock, &self.measure);
        Measured {
            value,
            cost: self.clock.now().saturating_sub(t0),
        }
    }

    fn measure_real(
        &mut self,
        candidate: &Arc<G::Kernel>,
        active_per_call: Duration,
    ) -> Measured<Result<Score, EvalError>> {
        let n = self.trial_len;
        let aborted = |completed| Measured {
            value: Err(EvalError::TrialAborted {
                completed,
                requested: n,
            }),
            cost: Duration::ZERO,
        };
        if self.dispatcher.begin_trial(Arc::clone(candidate), n).is_err() {
            self.dispatcher.cancel_trial();
            if self.dispatcher.begin_trial(Arc::clone(candidate), n).is_err() {
                return aborted(0);
            }
        }
        loop {
            let progress = self.dispatcher.trial_progress().expect("trial started");
            if progress.is_complete() {
                break;
            }
            if self.app_done.load(Ordering::Acquire) {
                let done = self.dispatcher.cancel_trial().len();
                return aborted(done);
            }
            std::thread::sleep(Duration::from_micros(50));
        }
        let timings = self.dispatcher.finish_trial().unwrap_or_default();
        let value = evaluator::measure_real(&timings);
        let extra = value
            .as_ref()
            .map(|s| s.per_call.saturating_sub(active_per_call))
            .unwrap_or_default();
        Measured {
            value,
            cost: (extra + self.timing_cost) * n as u32,
        }
    }

    fn install(&mut self, candidate: &Arc<G::Kernel>) -> u64 {
        self.dispatcher.install(Arc::clone(candidate))
    }

    fn call_count(&self) -> u64 {
        self.dispatcher.call_count()
    }

    fn now(&self) -> Duration {
        self.clock.now()
    }

    fn is_feasible(&self, point: &TuningPoint) -> bool {
        self.generator.is_feasible(point)
    }

    fn leftover_of(&self, point: &TuningPoint) -> usize {
        self.generator.leftover_of(point)
    }
}

type InstallHook = Box<dyn FnMut(Option<TuningPoint>) + Send>;

/// Cost-surface backend on a simulated clock. Candidates are points;
/// `None` is the reference kernel.
pub struct SyntheticBackend {
    pub surface: CostSurface,
    pub clock: Arc<SimClock>,
    pub measure: MeasureConfig,
    pub trial_len: usize,
    pub generation_cost: Duration,
    leftover: Box<dyn Fn(&TuningPoint) -> usize + Send>,
    calls: u64,
    active: Option<TuningPoint>,
    epoch: u64,
    on_install: Option<InstallHook>,
}

impl SyntheticBackend {
    pub fn new(
        surface: CostSurface,
        clock: Arc<SimClock>,
        leftover: impl Fn(&TuningPoint) -> usize + Send + 'static,
    ) -> Self {
        Self {
            surface,
            clock,
            measure: MeasureConfig::default(),
            trial_len: 32,
            generation_cost: Duration::from_micros(100),
            leftover: Box::new(leftover),
            calls: 0,
            active: None,
            epoch: 0,
            on_install: None,
        }
    }

    /// Called with the point of every installed candidate.
    pub fn on_install(mut self, hook: impl FnMut(Option<TuningPoint>) + Send + 'static) -> Self {
        self.on_install = Some(Box::new(hook));
        self
    }

    pub fn cost_of(&self, candidate: &Option<TuningPoint>) -> Result<Duration, GenerationError> {
        match candidate {
            None => Ok(self.surface.reference),
            Some(p) => self.surface.cost(p),
        }
    }

    /// Per-call cost of the active kernel.
    pub fn active_cost(&self) -> Duration {
        self.cost_of(&self.active).expect("installed points are never holes")
    }

    pub fn active_point(&self) -> Option<TuningPoint> {
        self.active
    }

    /// Application calls served on the simulated timeline.
    pub fn record_calls(&mut self, n: u64) {
        self.calls += n;
    }
}

impl TuningBackend for SyntheticBackend {
    type Candidate = Option<TuningPoint>;

    fn reference(&mut self) -> Option<TuningPoint> {
        None
    }

    fn generate(&mut self, point: &TuningPoint) -> Measured<Result<Option<TuningPoint>, GenerationError>> {
        self.clock.advance(self.generation_cost);
        Measured {
            value: self.surface.cost(point).map(|_| Some(*point)),
            cost: self.generation_cost,
        }
    }

    fn measure_training(&mut self, candidate: &Option<TuningPoint>) -> Measured<Result<Score, EvalError>> {
        let per_call = self.cost_of(candidate).expect("generated candidates have a cost");
        let cost = times(per_call, self.measure.invocations());
        self.clock.advance(cost);
        Measured {
            value: Ok(Score::new(per_call, Protocol::Synthetic, self.measure.reps)),
            cost,
        }
    }

    fn measure_real(
        &mut self,
        candidate: &Option<TuningPoint>,
        active_per_call: Duration,
    ) -> Measured<Result<Score, EvalError>> {
        let per_call = self.cost_of(candidate).expect("generated candidates have a cost");
        let n = self.trial_len as u32;
        // The trial calls are application work; only the slowdown is overhead.
        self.clock.advance(per_call * n);
        self.calls += n as u64;
        Measured {
            value: if n == 0 {
                Err(EvalError::EmptyTrial)
            } else {
                Ok(Score::new(per_call, Protocol::Synthetic, n as usize))
            },
            cost: per_call.saturating_sub(active_per_call) * n,
        }
    }

    fn install(&mut self, candidate: &Option<TuningPoint>) -> u64 {
        self.active = *candidate;
        self.epoch += 1;
        if let Some(hook) = self.on_install.as_mut() {
            hook(*candidate);
        }
        self.epoch
    }

    fn call_count(&self) -> u64 {
        self.calls
    }

    fn now(&self) -> Duration {
        self.clock.now()
    }

    fn is_feasible(&self, point: &TuningPoint) -> bool {
        !self.surface.is_hole(point)
    }

    fn leftover_of(&self, point: &TuningPoint) -> usize {
        (self.leftover)(point)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    /// Simulated wall time, tuning included.
    #[serde(with = "crate::reporting::nanos")]
    pub elapsed: Duration,
    /// Time the same workload takes on the reference kernel alone.
    #[serde(with = "crate::reporting::nanos")]
    pub reference_elapsed: Duration,
    pub calls: u64,
    pub overhead: OverheadLedger,
    #[serde(with = "crate::reporting::nanos")]
    pub max_step_cost: Duration,
    pub swaps: Vec<SwapRecord>,
    pub best: Option<TuningPoint>,
    pub active: Option<TuningPoint>,
    pub explored: usize,
}

/// `d * n` saturating at `u64::MAX` nanoseconds.
pub fn times(d: Duration, n: u64) -> Duration {
    Duration::from_nanos((d.as_nanos() * n as u128).min(u64::MAX as u128) as u64)
}

/// Drives a tuner from inside an application loop on a simulated clock.
/// Tuning time is serialized with the application, as on a single core.
pub struct SimulatedRun {
    pub tuner: Tuner<SyntheticBackend>,
    pub backend: SyntheticBackend,
    start: Duration,
    next_wake: Duration,
    period: Duration,
}

impl SimulatedRun {
    pub fn new(space: &TuningSpace, cfg: TunerConfig, backend: SyntheticBackend) -> Result<Self, ExploreError> {
        let start = backend.now();
        let period = cfg.policy.wake_period;
        Ok(Self {
            tuner: Tuner::new(space, cfg, start)?,
            backend,
            start,
            next_wake: start + period,
            period,
        })
    }

    /// Application calls the active kernel serves before the next wake.
    pub fn calls_until_wake(&self) -> u64 {
        let gap = self.next_wake.saturating_sub(self.backend.now());
        gap.as_nanos().div_ceil(self.backend.active_cost().as_nanos().max(1)) as u64
    }

    /// Accounts for `n` application calls, then wakes the tuner if due.
    pub fn served(&mut self, n: u64) -> Option<WakeOutcome> {
        let per_call = self.backend.active_cost();
        self.backend.clock.advance(times(per_call, n));
        self.backend.record_calls(n);
        if self.backend.now() < self.next_wake {
            return None;
        }
        let out = self.tuner.wake(&mut self.backend);
        self.next_wake = (self.next_wake + self.period).max(self.backend.now());
        Some(out)
    }

    pub fn elapsed(&self) -> Duration {
        self.backend.now().saturating_sub(self.start)
    }

    pub fn result(&self, workload: u64) -> SimulationResult {
        SimulationResult {
            elapsed: self.elapsed(),
            reference_elapsed: times(self.backend.surface.reference, workload),
            calls: self.backend.call_count(),
            overhead: self.tuner.overhead(),
            max_step_cost: self.tuner.max_step_cost(),
            swaps: self.tuner.swaps().to_vec(),
            best: self.tuner.explorer().best().map(|b| b.0),
            active: self.backend.active_point(),
            explored: self.tuner.explorer().explored(),
        }
    }
}

/// Runs `workload` application calls, waking the tuner every
/// `policy.wake_period` of simulated time.
pub fn simulate(
    space: &TuningSpace,
    cfg: TunerConfig,
    backend: SyntheticBackend,
    workload: u64,
) -> Result<(SimulationResult, Tuner<SyntheticBackend>), ExploreError> {
    let mut run = SimulatedRun::new(space, cfg, backend)?;
    while run.backend.call_count() < workload {
        let remaining = workload - run.backend.call_count();
        let n = if run.tuner.is_done() {
            remaining
        } else {
            run.calls_until_wake().clamp(1, remaining)
        };
        run.served(n);
    }
    let result = run.result(workload);
    Ok((result, run.tuner))
}
