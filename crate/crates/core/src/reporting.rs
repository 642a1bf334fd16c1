//! Aggregation across runs: speedups, best-parameter averages and
//! convergence curves, written as plot-ready CSV.

use std::io::Write;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::space::{Param, TuningPoint, TuningSpace};

/// Serializes a `Duration` as integer nanoseconds.
pub mod nanos {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_nanos().min(u64::MAX as u128) as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_nanos(u64::deserialize(d)?))
    }
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no runs to aggregate")]
    Empty,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// End-to-end speedup, overheads included in `tuned`.
pub fn speedup(reference: Duration, tuned: Duration) -> f64 {
    reference.as_secs_f64() / tuned.as_secs_f64()
}

/// Per-parameter means; flags average to frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterAverages {
    #[serde(rename = "hotUF")]
    pub hot_uf: f64,
    #[serde(rename = "coldUF")]
    pub cold_uf: f64,
    #[serde(rename = "vectLen")]
    pub vect_len: f64,
    #[serde(rename = "pldStride")]
    pub pld_stride: f64,
    #[serde(rename = "IS")]
    pub sched_instr: f64,
    #[serde(rename = "SM")]
    pub stack_min: f64,
    #[serde(rename = "VE")]
    pub vectorize: f64,
}

impl ParameterAverages {
    pub fn get(&self, param: Param) -> f64 {
        match param {
            Param::HotUf => self.hot_uf,
            Param::ColdUf => self.cold_uf,
            Param::VectLen => self.vect_len,
            Param::PldStride => self.pld_stride,
            Param::SchedInstr => self.sched_instr,
            Param::StackMin => self.stack_min,
            Param::Vectorize => self.vectorize,
        }
    }

    fn from_fn(mut f: impl FnMut(Param) -> f64) -> Self {
        Self {
            hot_uf: f(Param::HotUf),
            cold_uf: f(Param::ColdUf),
            vect_len: f(Param::VectLen),
            pld_stride: f(Param::PldStride),
            sched_instr: f(Param::SchedInstr),
            stack_min: f(Param::StackMin),
            vectorize: f(Param::Vectorize),
        }
    }

    /// Maps each mean to `(v - min) / (max - min)` of its domain; singleton
    /// domains map to 0.
    pub fn normalized(&self, space: &TuningSpace) -> Self {
        Self::from_fn(|p| {
            let d = space.domain(p);
            let (lo, hi) = (d.min() as f64, d.max() as f64);
            if hi > lo {
                (self.get(p) - lo) / (hi - lo)
            } else {
                0.0
            }
        })
    }
}

pub fn best_parameter_averages(runs: &[TuningPoint]) -> Result<ParameterAverages, ReportError> {
    if runs.is_empty() {
        return Err(ReportError::Empty);
    }
    let n = runs.len() as f64;
    Ok(ParameterAverages::from_fn(|p| {
        runs.iter().map(|r| r.get(p) as f64).sum::<f64>() / n
    }))
}

/// Best score seen after each candidate; `None` until the first success.
pub fn convergence(scores: &[Option<Duration>]) -> Vec<Option<Duration>> {
    let mut best: Option<Duration> = None;
    scores
        .iter()
        .map(|s| {
            if let Some(s) = *s {
                best = Some(best.map_or(s, |b| b.min(s)));
            }
            best
        })
        .collect()
}

/// One row per label with the normalized averages in [0, 1].
pub fn write_normalized_csv<W: Write>(
    out: W,
    space: &TuningSpace,
    rows: &[(String, ParameterAverages)],
) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["label"];
    header.extend(Param::ALL.iter().map(|p| p.name()));
    w.write_record(&header)?;
    for (label, avg) in rows {
        let norm = avg.normalized(space);
        let mut rec = vec![label.clone()];
        rec.extend(Param::ALL.iter().map(|&p| format!("{:.4}", norm.get(p))));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns: run, candidate, best_ns (empty before the first success).
pub fn write_convergence_csv<W: Write>(
    out: W,
    runs: &[Vec<Option<Duration>>],
) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["run", "candidate", "best_ns"])?;
    for (run, scores) in runs.iter().enumerate() {
        for (i, best) in convergence(scores).into_iter().enumerate() {
            let ns = best.map(|b| b.as_nanos().to_string()).unwrap_or_default();
            w.write_record([run.to_string(), i.to_string(), ns])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn speedup_examples() {
        assert_eq!(speedup(Duration::from_secs(10), Duration::from_secs(8)), 1.25);
        assert_eq!(speedup(Duration::from_secs(3), Duration::from_secs(3)), 1.0);
        let s = speedup(Duration::from_secs_f64(14.8), Duration::from_secs_f64(12.0));
        assert_eq!((s * 100.0).round() / 100.0, 1.23);
    }

    #[test]
    fn averages_examples() {
        let p = TuningPoint {
            hot_uf: 3,
            cold_uf: 17,
            ..TuningPoint::SCALAR
        };
        let a = best_parameter_averages(&[p]).unwrap();
        assert_eq!((a.hot_uf, a.cold_uf, a.vectorize), (3.0, 17.0, 0.0));

        let q = TuningPoint { hot_uf: 1, ..p };
        let r = TuningPoint { hot_uf: 2, ..p };
        assert_eq!(best_parameter_averages(&[q, r]).unwrap().hot_uf, 1.5);

        let on = TuningPoint { stack_min: true, ..p };
        let f = best_parameter_averages(&[on, on, p]).unwrap().stack_min;
        assert_eq!((f * 100.0).round() / 100.0, 0.67);

        assert!(matches!(best_parameter_averages(&[]), Err(ReportError::Empty)));
    }

    #[test]
    fn convergence_is_running_min() {
        let s = |n| Some(Duration::from_nanos(n));
        assert_eq!(
            convergence(&[None, s(5), s(7), None, s(3)]),
            vec![None, s(5), s(5), s(5), s(3)]
        );
    }

    #[test]
    fn csv_outputs() {
        let space = TuningSpace::reference_ranges();
        let a = best_parameter_averages(&[TuningPoint::SCALAR]).unwrap();
        let mut buf = Vec::new();
        write_normalized_csv(&mut buf, &space, &[("run".into(), a)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "label,hotUF,coldUF,vectLen,pldStride,IS,SM,VE");
        assert_eq!(text.lines().nth(1).unwrap(), "run,0.0000,0.0000,0.0000,0.0000,0.0000,0.0000,0.0000");

        let mut buf = Vec::new();
        write_convergence_csv(&mut buf, &[vec![None, Some(Duration::from_nanos(4))]]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "run,candidate,best_ns\n0,0,\n0,1,4\n");
    }

    fn point_in(space: &TuningSpace) -> impl Strategy<Value = TuningPoint> {
        let pick = |p: Param| prop::sample::select(space.domain(p).values().to_vec());
        (
            pick(Param::HotUf),
            pick(Param::ColdUf),
            pick(Param::VectLen),
            pick(Param::PldStride),
            any::<[bool; 3]>(),
        )
            .prop_map(|(h, c, v, s, f)| TuningPoint {
                hot_uf: h,
                cold_uf: c,
                vect_len: v,
                pld_stride: s,
                sched_instr: f[0],
                stack_min: f[1],
                vectorize: f[2],
            })
    }

    proptest! {
        #[test]
        fn means_stay_in_domain_hull(
            runs in prop::collection::vec(point_in(&TuningSpace::reference_ranges()), 1..20)
        ) {
            let space = TuningSpace::reference_ranges();
            let avg = best_parameter_averages(&runs).unwrap();
            let norm = avg.normalized(&space);
            for p in Param::ALL {
                let d = space.domain(p);
                prop_assert!(avg.get(p) >= d.min() as f64 - 1e-9 && avg.get(p) <= d.max() as f64 + 1e-9);
                prop_assert!((0.0..=1.0 + 1e-12).contains(&norm.get(p)));
            }
        }
    }
}
