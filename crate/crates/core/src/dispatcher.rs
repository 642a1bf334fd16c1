//! The active-kernel slot.
//!
//! Application threads call [`Dispatcher::invoke`]; the tuner publishes new
//! kernels with [`Dispatcher::install`] and borrows a bounded number of real
//! calls with [`Dispatcher::begin_trial`]. A replaced kernel is dropped once
//! the last in-flight call holding it returns.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use arc_swap::ArcSwap;
use thiserror::Error;

use crate::clock::Clock;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DispatchError {
    #[error("a trial is already in flight")]
    TrialActive,
    #[error("no trial has been started")]
    NoTrial,
    #[error("trial still running: {completed} of {requested} calls timed")]
    TrialIncomplete { completed: usize, requested: usize },
}

struct Trial<K> {
    candidate: Arc<K>,
    requested: usize,
    remaining: usize,
    timings: Vec<Duration>,
}

impl<K> Trial<K> {
    fn complete(&self) -> bool {
        self.timings.len() == self.requested
    }
}

/// Progress of the current trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialProgress {
    pub completed: usize,
    pub requested: usize,
}

impl TrialProgress {
    pub fn is_complete(&self) -> bool {
        self.completed == self.requested
    }
}

pub struct Dispatcher<K> {
    active: ArcSwap<K>,
    calls: AtomicU64,
    epoch: AtomicU64,
    trial_live: AtomicBool,
    trial: Mutex<Option<Trial<K>>>,
    clock: Arc<dyn Clock>,
}

impl<K> std::fmt::Debug for Dispatcher<K> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dispatcher")
            .field("calls", &self.call_count())
            .field("epoch", &self.epoch())
            .finish_non_exhaustive()
    }
}

impl<K> Dispatcher<K> {
    /// `initial` serves every call until the first install.
    pub fn new(initial: Arc<K>, clock: Arc<dyn Clock>) -> Self {
        Self {
            active: ArcSwap::new(initial),
            calls: AtomicU64::new(0),
            epoch: AtomicU64::new(0),
            trial_live: AtomicBool::new(false),
            trial: Mutex::new(None),
            clock,
        }
    }

    fn trial_lock(&self) -> MutexGuard<'_, Option<Trial<K>>> {
        self.trial.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Runs `call` on the active kernel, or on the trial candidate while a
    /// trial still has calls to claim.
    #[inline]
    pub fn invoke<R>(&self, call: impl FnOnce(&K) -> R) -> R {
        self.calls.fetch_add(1, Ordering::Relaxed);
        if self.trial_live.load(Ordering::Acquire) {
            if let Some(candidate) = self.claim_trial_call() {
                let t0 = self.clock.now();
                let r = call(&candidate);
                let dt = self.clock.now().saturating_sub(t0);
                if let Some(t) = self.trial_lock().as_mut() {
                    t.timings.push(dt);
                }
                return r;
            }
        }
        let active = self.active.load();
        call(&active)
    }

    fn claim_trial_call(&self) -> Option<Arc<K>> {
        let mut guard = self.trial_lock();
        let t = guard.as_mut()?;
        if t.remaining == 0 {
            return None;
        }
        t.remaining -= 1;
        if t.remaining == 0 {
            self.trial_live.store(false, Ordering::Release);
        }
        Some(Arc::clone(&t.candidate))
    }

    /// Publishes `kernel`; later calls use it. Returns the new epoch id.
    pub fn install(&self, kernel: Arc<K>) -> u64 {
        self.active.store(kernel);
        self.epoch.fetch_add(1, Ordering::AcqRel) + 1
    }

    pub fn active(&self) -> Arc<K> {
        self.active.load_full()
    }

    pub fn epoch(&self) -> u64 {
        self.epoch.load(Ordering::Acquire)
    }

    /// Invocations so far, trial calls included.
    pub fn call_count(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    /// Routes the next `n` calls to `candidate`, timing each one.
    pub fn begin_trial(&self, candidate: Arc<K>, n: usize) -> Result<(), DispatchError> {
        let mut guard = self.trial_lock();
        if let Some(t) = guard.as_ref() {
            if !t.complete() {
                return Err(DispatchError::TrialActive);
            }
        }
        *guard = Some(Trial {
            candidate,
            requested: n,
            remaining: n,
            timings: Vec::with_capacity(n),
        });
        self.trial_live.store(n > 0, Ordering::Release);
        Ok(())
    }

    pub fn trial_progress(&self) -> Option<TrialProgress> {
        self.trial_lock().as_ref().map(|t| TrialProgress {
            completed: t.timings.len(),
            requested: t.requested,
        })
    }

    /// Takes the timings of a completed trial.
    pub fn finish_trial(&self) -> Result<Vec<Duration>, DispatchError> {
        let mut guard = self.trial_lock();
        match guard.as_ref() {
            None => Err(DispatchError::NoTrial),
            Some(t) if !t.complete() => Err(DispatchError::TrialIncomplete {
                completed: t.timings.len(),
                requested: t.requested,
            }),
            Some(_) => Ok(guard.take().map(|t| t.timings).unwrap_or_default()),
        }
    }

    /// Stops routing and returns whatever was timed. Calls already claimed
    /// but still running finish on the candidate and are not recorded.
    pub fn cancel_trial(&self) -> Vec<Duration> {
        let mut guard = self.trial_lock();
        self.trial_live.store(false, Ordering::Release);
        guard.take().map(|t| t.timings).unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::{MonotonicClock, SimClock};
    use std::sync::atomic::AtomicUsize;

    struct Tagged(u32);

    fn slot(tag: u32) -> Dispatcher<Tagged> {
        Dispatcher::new(Arc::new(Tagged(tag)), Arc::new(MonotonicClock::new()))
    }

    #[test]
    fn reference_serves_until_install() {
        let d = slot(1);
        assert_eq!(d.invoke(|k| k.0), 1);
        assert_eq!(d.install(Arc::new(Tagged(2))), 1);
        assert_eq!(d.invoke(|k| k.0), 2);
        assert_eq!(d.install(Arc::new(Tagged(3))), 2);
        assert_eq!(d.call_count(), 2);
    }

    #[test]
    fn trial_routes_exactly_n_calls() {
        let d = slot(1);
        d.begin_trial(Arc::new(Tagged(9)), 32).unwrap();
        assert_eq!(d.begin_trial(Arc::new(Tagged(8)), 1), Err(DispatchError::TrialActive));
        assert!(matches!(d.finish_trial(), Err(DispatchError::TrialIncomplete { completed: 0, .. })));
        let served: Vec<u32> = (0..40).map(|_| d.invoke(|k| k.0)).collect();
        assert!(served[..32].iter().all(|&t| t == 9));
        assert!(served[32..].iter().all(|&t| t == 1));
        assert_eq!(d.finish_trial().unwrap().len(), 32);
        assert_eq!(d.finish_trial(), Err(DispatchError::NoTrial));
    }

    #[test]
    fn empty_trial_completes_immediately() {
        let d = slot(1);
        d.begin_trial(Arc::new(Tagged(9)), 0).unwrap();
        assert!(d.trial_progress().unwrap().is_complete());
        assert_eq!(d.invoke(|k| k.0), 1);
        assert!(d.finish_trial().unwrap().is_empty());
    }

    #[test]
    fn trial_timings_come_from_the_clock() {
        let clock = Arc::new(SimClock::new());
        let d = Dispatcher::new(Arc::new(Tagged(0)), clock.clone());
        d.begin_trial(Arc::new(Tagged(1)), 3).unwrap();
        for _ in 0..3 {
            d.invoke(|_| clock.advance(Duration::from_micros(7)));
        }
        assert_eq!(d.finish_trial().unwrap(), vec![Duration::from_micros(7); 3]);
    }

    #[test]
    fn cancel_returns_partial_timings() {
        let d = slot(1);
        d.begin_trial(Arc::new(Tagged(9)), 10).unwrap();
        d.invoke(|_| ());
        assert_eq!(d.cancel_trial().len(), 1);
        assert_eq!(d.invoke(|k| k.0), 1);
    }

    #[test]
    fn old_kernel_dropped_after_last_call() {
        struct Probe(Arc<AtomicUsize>);
        impl Drop for Probe {
            fn drop(&mut self) {
                self.0.fetch_add(1, Ordering::SeqCst);
            }
        }
        let drops = Arc::new(AtomicUsize::new(0));
        let d = Dispatcher::new(Arc::new(Probe(drops.clone())), Arc::new(MonotonicClock::new()));
        d.invoke(|_| {
            d.install(Arc::new(Probe(drops.clone())));
            assert_eq!(drops.load(Ordering::SeqCst), 0);
        });
        assert_eq!(drops.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn concurrent_swaps_never_tear() {
        // Each kernel maps x to x * tag; any observed value must be one of
        // the installed tags times x.
        let d = Arc::new(slot(1));
        std::thread::scope(|s| {
            let app = s.spawn(|| {
                for x in 1..200_000u64 {
                    let y = d.invoke(|k| x * k.0 as u64);
                    assert_eq!(y % x, 0);
                    assert!((1..=50).contains(&(y / x)));
                }
            });
            for tag in 2..=50 {
                d.install(Arc::new(Tagged(tag)));
                if tag % 10 == 0 {
                    d.begin_trial(Arc::new(Tagged(tag)), 16).ok();
                }
                std::thread::yield_now();
            }
            app.join().unwrap();
        });
        assert_eq!(d.epoch(), 49);
        assert!(d.call_count() >= 199_999);
    }
}
