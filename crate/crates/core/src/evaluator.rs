//! Scoring of kernel variants.
//!
//! Two protocols: training-data measurement on the tuner thread, filtered
//! to reject interference, and plain averaging of timed real calls routed
//! through the dispatcher.

use std::hint::black_box;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Clock;
use crate::variantgen::{DistanceKernel, LintraKernel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    TrainingFiltered,
    RealMean,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Score {
    #[serde(with = "crate::reporting::nanos")]
    pub per_call: Duration,
    pub protocol: Protocol,
    pub samples: usize,
}

impl Score {
    pub fn new(per_call: Duration, protocol: Protocol, samples: usize) -> Self {
        Self {
            // A zero cost is below clock resolution; clamp to keep scores positive.
            per_call: per_call.max(Duration::from_nanos(1)),
            protocol,
            samples: samples.max(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("need at least {needed} measurements, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("real-data trial produced no timed calls")]
    EmptyTrial,
    #[error("real-data trial aborted after {completed} of {requested} calls")]
    TrialAborted { completed: usize, requested: usize },
}

pub const GROUP_SIZE: usize = 5;
pub const GROUP_COUNT: usize = 3;

/// Worst of the per-group bests: split the first `group_size * group_count`
/// measurements into consecutive groups, take each group's minimum and
/// return the largest of those minima.
pub fn filtered_score(
    measurements: &[Duration],
    group_size: usize,
    group_count: usize,
) -> Result<Duration, EvalError> {
    let needed = group_size * group_count;
    if needed == 0 || measurements.len() < needed {
        return Err(EvalError::InsufficientSamples {
            needed: needed.max(1),
            got: measurements.len(),
        });
    }
    Ok(measurements[..needed]
        .chunks_exact(group_size)
        .map(|g| *g.iter().min().expect("non-empty group"))
        .max()
        .expect("non-empty"))
}

/// Mean of the per-call durations of a real-data trial.
pub fn measure_real(trial: &[Duration]) -> Result<Score, EvalError> {
    if trial.is_empty() {
        return Err(EvalError::EmptyTrial);
    }
    let total: Duration = trial.iter().sum();
    Ok(Score::new(
        total / trial.len() as u32,
        Protocol::RealMean,
        trial.len(),
    ))
}

/// Strictly faster.
pub fn better(candidate: &Score, incumbent: &Score) -> bool {
    candidate.per_call < incumbent.per_call
}

/// Fixed inputs a kernel can be run on without touching application data.
pub trait TrainingData<K: ?Sized>: Send {
    fn invoke(&mut self, kernel: &K);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasureConfig {
    pub warmup: usize,
    pub group_size: usize,
    pub group_count: usize,
    /// Measurements taken; at least `group_size * group_count`.
    pub reps: usize,
    /// Kernel invocations folded into one measurement.
    pub calls_per_sample: u32,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        Self {
            warmup: 2,
            group_size: GROUP_SIZE,
            group_count: GROUP_COUNT,
            reps: GROUP_SIZE * GROUP_COUNT,
            calls_per_sample: 16,
        }
    }
}

impl MeasureConfig {
    /// Kernel invocations one training measurement performs.
    pub fn invocations(&self) -> u64 {
        (self.warmup as u64 + self.reps as u64) * self.calls_per_sample as u64
    }
}

/// Warm up, then time `cfg.reps` samples and reduce them with
/// [`filtered_score`].
pub fn measure_training<K: ?Sized, T: TrainingData<K> + ?Sized>(
    kernel: &K,
    training: &mut T,
    clock: &dyn Clock,
    cfg: &MeasureConfig,
) -> Result<Score, EvalError> {
    let needed = cfg.group_size * cfg.group_count;
    if cfg.reps < needed || needed == 0 {
        return Err(EvalError::InsufficientSamples {
            needed: needed.max(1),
            got: cfg.reps,
        });
    }
    let calls = cfg.calls_per_sample.max(1);
    for _ in 0..cfg.warmup * calls as usize {
        training.invoke(kernel);
    }
    let mut samples = Vec::with_capacity(cfg.reps);
    for _ in 0..cfg.reps {
        let t0 = clock.now();
        for _ in 0..calls {
            training.invoke(kernel);
        }
        samples.push(clock.now().saturating_sub(t0));
    }
    let filtered = filtered_score(&samples, cfg.group_size, cfg.group_count)?;
    Ok(Score::new(
        filtered / calls,
        Protocol::TrainingFiltered,
        cfg.reps,
    ))
}

/// Two fixed points of the kernel's dimension.
#[derive(Debug, Clone)]
pub struct DistanceTraining {
    pub a: Vec<f32>,
    pub b: Vec<f32>,
}

impl DistanceTraining {
    pub fn new(dimension: usize) -> Self {
        Self {
            a: (0..dimension).map(|i| (i as f32 * 0.7).sin()).collect(),
            b: (0..dimension).map(|i| (i as f32 * 0.3).cos()).collect(),
        }
    }
}

impl TrainingData<DistanceKernel> for DistanceTraining {
    #[inline]
    fn invoke(&mut self, kernel: &DistanceKernel) {
        black_box(kernel.eval(black_box(&self.a), black_box(&self.b)));
    }
}

/// One synthetic row; output goes to a tuner-owned scratch row.
#[derive(Debug, Clone)]
pub struct LintraTraining {
    pub input: Vec<f32>,
    pub mul: Vec<f32>,
    pub add: Vec<f32>,
    pub scratch: Vec<f32>,
}

impl LintraTraining {
    pub fn new(bands: usize, width: usize) -> Self {
        let n = bands * width;
        Self {
            input: (0..n).map(|i| (i % 251) as f32).collect(),
            mul: (0..bands).map(|b| 1.0 + b as f32 * 0.125).collect(),
            add: (0..bands).map(|b| b as f32 - 1.0).collect(),
            scratch: vec![0.0; n],
        }
    }
}

impl TrainingData<LintraKernel> for LintraTraining {
    #[inline]
    fn invoke(&mut self, kernel: &LintraKernel) {
        kernel.apply(black_box(&self.input), &self.mul, &self.add, &mut self.scratch);
        black_box(&mut self.scratch);
    }
}
