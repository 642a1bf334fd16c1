//! Regeneration decision: how much tuning the run can currently afford.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    /// Share of elapsed time always available for tuning.
    pub budget_fraction: f64,
    /// Share of estimated gains re-invested into tuning.
    pub invest_fraction: f64,
    #[serde(with = "crate::reporting::nanos")]
    pub wake_period: Duration,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("budget fraction {0} outside [0, 1)")]
    Budget(f64),
    #[error("investment fraction {0} outside [0, 1)")]
    Invest(f64),
    #[error("wake period must be positive")]
    WakePeriod,
}

impl Default for Policy {
    fn default() -> Self {
        Self {
            budget_fraction: 0.01,
            invest_fraction: 0.10,
            wake_period: Duration::from_millis(10),
        }
    }
}

impl Policy {
    pub fn new(budget_fraction: f64, invest_fraction: f64, wake_period: Duration) -> Result<Self, PolicyError> {
        let p = Self {
            budget_fraction,
            invest_fraction,
            wake_period,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let ok = |f: f64| (0.0..1.0).contains(&f);
        if !ok(self.budget_fraction) {
            return Err(PolicyError::Budget(self.budget_fraction));
        }
        if !ok(self.invest_fraction) {
            return Err(PolicyError::Invest(self.invest_fraction));
        }
        if self.wake_period.is_zero() {
            return Err(PolicyError::WakePeriod);
        }
        Ok(())
    }

    /// Tuning time the run may have consumed by `elapsed`.
    pub fn allowance(&self, elapsed: Duration, gains: Duration) -> Duration {
        elapsed.mul_f64(self.budget_fraction) + gains.mul_f64(self.invest_fraction)
    }
}

/// One active kernel's lifetime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Epoch {
    #[serde(with = "crate::reporting::nanos")]
    pub per_call: Duration,
    pub calls: u64,
}

/// Calls served per epoch, priced against the reference kernel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GainsLedger {
    #[serde(with = "crate::reporting::nanos")]
    pub reference_per_call: Duration,
    pub epochs: Vec<Epoch>,
    open_since: u64,
}

impl GainsLedger {
    /// Starts with the reference kernel active.
    pub fn new(reference_per_call: Duration, call_count: u64) -> Self {
        Self {
            reference_per_call,
            epochs: vec![Epoch {
                per_call: reference_per_call,
                calls: 0,
            }],
            open_since: call_count,
        }
    }

    /// Brings the open epoch up to the current call counter.
    pub fn observe(&mut self, call_count: u64) {
        let open = self.epochs.last_mut().expect("always one epoch");
        open.calls = open.calls.max(call_count.saturating_sub(self.open_since));
    }

    /// Closes the open epoch at `call_count` and opens one for a kernel
    /// costing `per_call`.
    pub fn switch(&mut self, per_call: Duration, call_count: u64) {
        self.observe(call_count);
        self.open_since = call_count.max(self.open_since);
        self.epochs.push(Epoch { per_call, calls: 0 });
    }

    pub fn total_calls(&self) -> u64 {
        self.epochs.iter().map(|e| e.calls).sum()
    }
}

/// Time saved so far: calls times the per-call saving, per epoch, with
/// epochs slower than the reference counted as zero.
pub fn estimate_gains(ledger: &GainsLedger) -> Duration {
    let reference = ledger.reference_per_call.as_nanos();
    let total: u128 = ledger
        .epochs
        .iter()
        .map(|e| e.calls as u128 * reference.saturating_sub(e.per_call.as_nanos()))
        .sum();
    Duration::from_nanos(total.min(u64::MAX as u128) as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverheadKind {
    Generation,
    Evaluation,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverheadLedger {
    #[serde(with = "crate::reporting::nanos")]
    pub spent_generation: Duration,
    #[serde(with = "crate::reporting::nanos")]
    pub spent_evaluation: Duration,
}

impl OverheadLedger {
    pub fn total(&self) -> Duration {
        self.spent_generation + self.spent_evaluation
    }
}

pub fn record_overhead(ledger: &mut OverheadLedger, kind: OverheadKind, amount: Duration) {
    match kind {
        OverheadKind::Generation => ledger.spent_generation += amount,
        OverheadKind::Evaluation => ledger.spent_evaluation += amount,
    }
}

/// True iff one more candidate of cost `expected_next` keeps the total
/// within the allowance.
pub fn should_regenerate(
    policy: &Policy,
    overhead: &OverheadLedger,
    gains: Duration,
    elapsed: Duration,
    expected_next: Duration,
) -> bool {
    overhead.total() + expected_next <= policy.allowance(elapsed, gains)
}

/// Running mean of observed candidate costs, seeded with a prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostPredictor {
    prior: Duration,
    sum: Duration,
    count: u32,
}

impl CostPredictor {
    pub fn new(prior: Duration) -> Self {
        Self {
            prior,
            sum: Duration::ZERO,
            count: 0,
        }
    }

    pub fn observe(&mut self, cost: Duration) {
        self.sum += cost;
        self.count += 1;
    }

    pub fn expected(&self) -> Duration {
        if self.count == 0 {
            self.prior
        } else {
            self.sum / self.count
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MS: fn(u64) -> Duration = Duration::from_millis;
    const US: fn(u64) -> Duration = Duration::from_micros;

    fn spent(ms: u64) -> OverheadLedger {
        OverheadLedger {
            spent_generation: MS(ms),
            spent_evaluation: Duration::ZERO,
        }
    }

    #[test]
    fn gains_examples() {
        let mut l = GainsLedger::new(US(10), 0);
        l.switch(US(8), 0);
        l.observe(1000);
        assert_eq!(estimate_gains(&l), MS(2));

        let mut same = GainsLedger::new(US(10), 0);
        same.observe(5000);
        assert_eq!(estimate_gains(&same), Duration::ZERO);

        let mut slow = GainsLedger::new(US(10), 0);
        slow.switch(US(12), 0);
        slow.observe(1000);
        assert_eq!(estimate_gains(&slow), Duration::ZERO);
    }

    #[test]
    fn epochs_split_the_counter() {
        let mut l = GainsLedger::new(US(10), 100);
        l.observe(600);
        l.switch(US(9), 600);
        l.observe(1600);
        l.switch(US(5), 1600);
        l.observe(1700);
        let calls: Vec<u64> = l.epochs.iter().map(|e| e.calls).collect();
        assert_eq!(calls, [500, 1000, 100]);
        assert_eq!(estimate_gains(&l), US(1000 + 500));
    }

    #[test]
    fn regenerate_examples() {
        let p = Policy::default();
        assert!(should_regenerate(&p, &spent(50), MS(2), Duration::from_secs(10), MS(1)));
        assert!(!should_regenerate(&p, &spent(100), MS(2), Duration::from_secs(10), MS(1)));
        let zero = Policy::new(0.0, 0.1, MS(10)).unwrap();
        assert!(!should_regenerate(&zero, &spent(0), Duration::ZERO, Duration::from_secs(10), US(1)));
    }

    #[test]
    fn overhead_recording() {
        let mut l = OverheadLedger::default();
        record_overhead(&mut l, OverheadKind::Generation, MS(3));
        assert_eq!(l.spent_generation, MS(3));
        record_overhead(&mut l, OverheadKind::Generation, Duration::ZERO);
        assert_eq!(l.spent_generation, MS(3));
        record_overhead(&mut l, OverheadKind::Evaluation, MS(2));
        record_overhead(&mut l, OverheadKind::Evaluation, MS(5));
        assert_eq!(l.spent_evaluation, MS(7));
        assert_eq!(l.total(), MS(10));
    }

    #[test]
    fn policy_validation() {
        assert!(Policy::new(1.0, 0.1, MS(1)).is_err());
        assert!(Policy::new(0.01, -0.1, MS(1)).is_err());
        assert!(Policy::new(0.01, 0.1, Duration::ZERO).is_err());
        Policy::default().validate().unwrap();
    }

    #[test]
    fn predictor_uses_prior_then_mean() {
        let mut p = CostPredictor::new(MS(1));
        assert_eq!(p.expected(), MS(1));
        p.observe(MS(2));
        p.observe(MS(4));
        assert_eq!(p.expected(), MS(3));
    }

    proptest! {
        #[test]
        fn monotone_in_gains(
            spent_us in 0u64..200_000,
            elapsed_ms in 1u64..100_000,
            next_us in 0u64..10_000,
            g1 in 0u64..1_000_000,
            dg in 0u64..1_000_000,
        ) {
            let p = Policy::default();
            let o = OverheadLedger { spent_generation: US(spent_us), spent_evaluation: Duration::ZERO };
            let e = MS(elapsed_ms);
            let lo = should_regenerate(&p, &o, US(g1), e, US(next_us));
            let hi = should_regenerate(&p, &o, US(g1 + dg), e, US(next_us));
            prop_assert!(!lo || hi);
        }

        // Replaying a constant-cost timeline reproduces the closed form.
        #[test]
        fn gains_exact_on_constant_timeline(
            reference in 100u64..1000,
            costs in prop::collection::vec((1u64..1000, 0u64..10_000), 1..8),
        ) {
            let mut l = GainsLedger::new(Duration::from_nanos(reference), 0);
            let mut count = 0u64;
            let mut expect = 0u64;
            for &(cost, calls) in &costs {
                l.switch(Duration::from_nanos(cost), count);
                count += calls;
                l.observe(count);
                expect += calls * reference.saturating_sub(cost);
            }
            prop_assert_eq!(estimate_gains(&l), Duration::from_nanos(expect));
        }
    }
}
