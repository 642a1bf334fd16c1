//! Two-phase enumerative search.
//!
//! Phase one sweeps the structure parameters (hotUF outermost, then coldUF,
//! vectLen, and VE innermost) with IS, SM and pldStride held at their
//! pre-profiled defaults. Candidates without leftover come first; the
//! restriction is then relaxed one leftover size at a time, smallest first.
//! Phase two freezes the best structure and sweeps pldStride (outermost),
//! SM and IS (innermost).

use std::io::Write;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluator::Score;
use crate::space::{Param, TuningPoint, TuningSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    SisdOnly,
    SimdOnly,
    #[default]
    Both,
}

impl Mode {
    fn admits(self, vectorize: bool) -> bool {
        match self {
            Mode::SisdOnly => !vectorize,
            Mode::SimdOnly => vectorize,
            Mode::Both => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    One,
    Two,
    Done,
}

/// Values of the phase-two options used throughout phase one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct Defaults {
    pub sched_instr: bool,
    pub stack_min: bool,
    pub pld_stride: u32,
}

impl Default for Defaults {
    fn default() -> Self {
        Self {
            sched_instr: true,
            stack_min: false,
            pld_stride: 0,
        }
    }
}

impl Defaults {
    pub fn apply(&self, mut p: TuningPoint) -> TuningPoint {
        p.sched_instr = self.sched_instr;
        p.stack_min = self.stack_min;
        p.pld_stride = self.pld_stride;
        p
    }

    pub fn of(p: &TuningPoint) -> Self {
        Self {
            sched_instr: p.sched_instr,
            stack_min: p.stack_min,
            pld_stride: p.pld_stride,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhasePlan {
    pub phase1_order: [Param; 4],
    /// (pldStride, SM, IS) in sweep order.
    pub phase2_combos: Vec<(u32, bool, bool)>,
    pub defaults: Defaults,
}

impl PhasePlan {
    pub fn new(space: &TuningSpace, defaults: Defaults) -> Self {
        let flag = |p| space.domain(p).values().iter().map(|&v| v != 0).collect::<Vec<_>>();
        let mut combos = Vec::new();
        for &pld in space.domain(Param::PldStride).values() {
            for &sm in &flag(Param::StackMin) {
                for &is in &flag(Param::SchedInstr) {
                    combos.push((pld, sm, is));
                }
            }
        }
        Self {
            phase1_order: [Param::HotUf, Param::ColdUf, Param::VectLen, Param::Vectorize],
            phase2_combos: combos,
            defaults,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExploreError {
    #[error("default {param}={value} is outside its domain")]
    InvalidDefaults { param: Param, value: u32 },
    #[error("exploration limit must be positive")]
    ZeroLimit,
    #[error("{0} was not the pending candidate")]
    UnknownPoint(TuningPoint),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Next {
    Candidate(TuningPoint),
    PhaseTransition,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateResult {
    Scored(Score),
    GenerationFailed,
    EvaluationFailed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// Scored and published as the active kernel.
    Installed,
    /// Scored, not faster than the active kernel.
    Rejected,
    GenerationFailed,
    EvaluationFailed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub index: usize,
    pub phase: Phase,
    pub point: TuningPoint,
    pub leftover: usize,
    pub tier: usize,
    pub outcome: Outcome,
    pub score: Option<Score>,
}

#[derive(Debug, Clone)]
pub struct ExplorationState {
    space: TuningSpace,
    plan: PhasePlan,
    mode: Mode,
    phase: Phase,
    limit: usize,
    phase1_limit: usize,
    tiers: Option<Vec<(usize, Vec<TuningPoint>)>>,
    tier: usize,
    cursor: usize,
    phase2: Vec<TuningPoint>,
    best: Option<(TuningPoint, Score)>,
    explored: usize,
    pending: Option<(TuningPoint, usize, usize)>,
    trace: Vec<TraceRecord>,
}

impl ExplorationState {
    /// Phase one, leftover tier 0.
    pub fn init(space: &TuningSpace, defaults: Defaults, limit: usize, mode: Mode) -> Result<Self, ExploreError> {
        if limit == 0 {
            return Err(ExploreError::ZeroLimit);
        }
        let probe = defaults.apply(space.min_point());
        for p in [Param::SchedInstr, Param::StackMin, Param::PldStride] {
            let value = probe.get(p);
            if !space.domain(p).contains(value) {
                return Err(ExploreError::InvalidDefaults { param: p, value });
            }
        }
        let plan = PhasePlan::new(space, defaults);
        let reserve = plan.phase2_combos.len().saturating_sub(1);
        Ok(Self {
            space: space.clone(),
            mode,
            phase: Phase::One,
            limit,
            phase1_limit: limit.saturating_sub(reserve).max(1),
            tiers: None,
            tier: 0,
            cursor: 0,
            phase2: Vec::new(),
            best: None,
            explored: 0,
            pending: None,
            trace: Vec::new(),
            plan,
        })
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn relaxation_tier(&self) -> usize {
        self.tier
    }

    pub fn explored(&self) -> usize {
        self.explored
    }

    pub fn limit(&self) -> usize {
        self.limit
    }

    pub fn plan(&self) -> &PhasePlan {
        &self.plan
    }

    pub fn best(&self) -> Option<(TuningPoint, Score)> {
        self.best
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn is_done(&self) -> bool {
        self.phase == Phase::Done
    }

    /// Feasible phase-one points grouped by leftover, ascending; the first
    /// group is always the leftover-free one, possibly empty.
    fn build_tiers(
        &self,
        feasible: &dyn Fn(&TuningPoint) -> bool,
        leftover_of: &dyn Fn(&TuningPoint) -> usize,
    ) -> Vec<(usize, Vec<TuningPoint>)> {
        let mut tiers: Vec<(usize, Vec<TuningPoint>)> = vec![(0, Vec::new())];
        let base = self.plan.defaults.apply(self.space.min_point());
        let dom = |p| self.space.domain(p).values();
        for &hot in dom(Param::HotUf) {
            for &cold in dom(Param::ColdUf) {
                for &vlen in dom(Param::VectLen) {
                    for &ve in dom(Param::Vectorize) {
                        let p = TuningPoint {
                            hot_uf: hot,
                            cold_uf: cold,
                            vect_len: vlen,
                            vectorize: ve != 0,
                            ..base
                        };
                        if !self.mode.admits(p.vectorize) || !feasible(&p) {
                            continue;
                        }
                        let lo = leftover_of(&p);
                        match tiers.binary_search_by_key(&lo, |t| t.0) {
                            Ok(i) => tiers[i].1.push(p),
                            Err(i) => tiers.insert(i, (lo, vec![p])),
                        }
                    }
                }
            }
        }
        tiers
    }

    /// Number of feasible phase-one candidates across all tiers.
    pub fn phase1_candidates(
        &mut self,
        feasible: &dyn Fn(&TuningPoint) -> bool,
        leftover_of: &dyn Fn(&TuningPoint) -> usize,
    ) -> usize {
        if self.tiers.is_none() {
            self.tiers = Some(self.build_tiers(feasible, leftover_of));
        }
        self.tiers.as_ref().unwrap().iter().map(|t| t.1.len()).sum()
    }

    pub fn next_candidate(
        &mut self,
        feasible: &dyn Fn(&TuningPoint) -> bool,
        leftover_of: &dyn Fn(&TuningPoint) -> usize,
    ) -> Next {
        if let Some((p, _, _)) = self.pending {
            return Next::Candidate(p);
        }
        match self.phase {
            Phase::Done => Next::Done,
            Phase::One => {
                if self.tiers.is_none() {
                    self.tiers = Some(self.build_tiers(feasible, leftover_of));
                }
                let tiers = self.tiers.as_ref().unwrap();
                if self.explored < self.phase1_limit {
                    while self.tier < tiers.len() {
                        let (lo, pts) = &tiers[self.tier];
                        if let Some(&p) = pts.get(self.cursor) {
                            self.cursor += 1;
                            self.pending = Some((p, *lo, self.tier));
                            return Next::Candidate(p);
                        }
                        self.tier += 1;
                        self.cursor = 0;
                    }
                }
                self.enter_phase_two();
                if self.phase == Phase::Done {
                    Next::Done
                } else {
                    Next::PhaseTransition
                }
            }
            Phase::Two => {
                if self.explored >= self.limit || self.cursor >= self.phase2.len() {
                    self.phase = Phase::Done;
                    return Next::Done;
                }
                let p = self.phase2[self.cursor];
                self.cursor += 1;
                self.pending = Some((p, leftover_of(&p), self.tier));
                Next::Candidate(p)
            }
        }
    }

    fn enter_phase_two(&mut self) {
        let Some((best, _)) = self.best else {
            self.phase = Phase::Done;
            return;
        };
        self.phase2 = self
            .plan
            .phase2_combos
            .iter()
            .map(|&(pld, sm, is)| TuningPoint {
                pld_stride: pld,
                stack_min: sm,
                sched_instr: is,
                ..best
            })
            .filter(|p| *p != best)
            .collect();
        self.cursor = 0;
        self.phase = Phase::Two;
    }

    /// Records the outcome of the pending candidate. Failures count toward
    /// the limit but never become best; ties keep the incumbent.
    pub fn notify_result(&mut self, point: &TuningPoint, result: CandidateResult) -> Result<(), ExploreError> {
        self.notify_with_outcome(point, result, None)
    }

    /// As [`notify_result`](Self::notify_result), with the install decision
    /// recorded in the trace.
    pub fn notify_with_outcome(
        &mut self,
        point: &TuningPoint,
        result: CandidateResult,
        installed: Option<bool>,
    ) -> Result<(), ExploreError> {
        match self.pending {
            Some((p, lo, tier)) if p == *point => {
                self.pending = None;
                self.explored += 1;
                let (outcome, score) = match result {
                    CandidateResult::Scored(s) => {
                        if self.best.is_none_or(|(_, b)| s.per_call < b.per_call) {
                            self.best = Some((p, s));
                        }
                        let o = if installed == Some(true) {
                            Outcome::Installed
                        } else {
                            Outcome::Rejected
                        };
                        (o, Some(s))
                    }
                    CandidateResult::GenerationFailed => (Outcome::GenerationFailed, None),
                    CandidateResult::EvaluationFailed => (Outcome::EvaluationFailed, None),
                };
                self.trace.push(TraceRecord {
                    index: self.trace.len(),
                    phase: self.phase,
                    point: p,
                    leftover: lo,
                    tier,
                    outcome,
                    score,
                });
                Ok(())
            }
            _ => Err(ExploreError::UnknownPoint(*point)),
        }
    }

    /// Replaces the best score with a re-measurement of the same point,
    /// used when switching to the real-data protocol.
    pub fn rebase_best(&mut self, score: Score) {
        if let Some((_, s)) = self.best.as_mut() {
            *s = score;
        }
    }
}

#[derive(Debug, Serialize)]
struct TraceRow {
    index: usize,
    phase: &'static str,
    #[serde(rename = "hotUF")]
    hot_uf: u32,
    #[serde(rename = "coldUF")]
    cold_uf: u32,
    #[serde(rename = "vectLen")]
    vect_len: u32,
    #[serde(rename = "VE")]
    vectorize: u8,
    #[serde(rename = "pldStride")]
    pld_stride: u32,
    #[serde(rename = "SM")]
    stack_min: u8,
    #[serde(rename = "IS")]
    sched_instr: u8,
    leftover: usize,
    tier: usize,
    outcome: Outcome,
    score_ns: Option<u64>,
}

/// One CSV row per explored candidate.
pub fn write_trace_csv<W: Write>(out: W, trace: &[TraceRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in trace {
        w.serialize(TraceRow {
            index: r.index,
            phase: match r.phase {
                Phase::One => "one",
                Phase::Two => "two",
                Phase::Done => "done",
            },
            hot_uf: r.point.hot_uf,
            cold_uf: r.point.cold_uf,
            vect_len: r.point.vect_len,
            vectorize: r.point.vectorize as u8,
            pld_stride: r.point.pld_stride,
            stack_min: r.point.stack_min as u8,
            sched_instr: r.point.sched_instr as u8,
            leftover: r.leftover,
            tier: r.tier,
            outcome: r.outcome,
            score_ns: r.score.map(|s| s.per_call.as_nanos() as u64),
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Scores every candidate with `cost` until done; returns the final state.
/// Used by tests and examples that need the search without a tuner.
pub fn run_to_completion(
    mut state: ExplorationState,
    feasible: &dyn Fn(&TuningPoint) -> bool,
    leftover_of: &dyn Fn(&TuningPoint) -> usize,
    cost: &dyn Fn(&TuningPoint) -> Option<Duration>,
) -> ExplorationState {
    loop {
        match state.next_candidate(feasible, leftover_of) {
            Next::Done => return state,
            Next::PhaseTransition => {}
            Next::Candidate(p) => {
                let r = match cost(&p) {
                    Some(c) => CandidateResult::Scored(Score::new(c, crate::evaluator::Protocol::Synthetic, 1)),
                    None => CandidateResult::GenerationFailed,
                };
                state.notify_result(&p, r).expect("pending candidate");
            }
        }
    }
}
