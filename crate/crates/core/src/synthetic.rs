//! Deterministic cost surfaces standing in for generation plus timing, so
//! search and budget policies can be checked without measurement noise.

use std::collections::HashSet;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::space::{Param, TuningPoint, TuningSpace};
use crate::variantgen::{is_feasible, GenerationError, GenerationFailure, RegisterBudget};

/// Convex term `weight * ((i - argmin) / (len - 1))^2` over a parameter's
/// value index `i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamTerm {
    pub param: Param,
    pub weight_ns: f64,
    pub argmin: usize,
    pub len: usize,
}

impl ParamTerm {
    fn unit(&self, index: usize) -> f64 {
        if self.len > 1 {
            index as f64 / (self.len - 1) as f64
        } else {
            0.0
        }
    }

    fn eval(&self, index: usize) -> f64 {
        let d = self.unit(index) - self.unit(self.argmin);
        self.weight_ns * d * d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Holes {
    None,
    Registers(RegisterBudget),
    Points(HashSet<TuningPoint>),
}

impl Holes {
    pub fn contains(&self, point: &TuningPoint) -> bool {
        match self {
            Holes::None => false,
            Holes::Registers(b) => !is_feasible(point, b),
            Holes::Points(set) => set.contains(point),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSurface {
    pub space: TuningSpace,
    pub base_ns: f64,
    pub terms: Vec<ParamTerm>,
    /// Couples coldUF with pldStride, which the two search phases sweep
    /// separately.
    pub cross_weight_ns: f64,
    pub holes: Holes,
    pub seed: u64,
    /// Per-call cost of the kernel active before tuning.
    #[serde(with = "crate::reporting::nanos")]
    pub reference: Duration,
    pub optimum: Option<TuningPoint>,
}

impl CostSurface {
    fn raw_ns(&self, point: &TuningPoint) -> Option<f64> {
        let mut total = self.base_ns;
        for t in &self.terms {
            total += t.eval(self.space.domain(t.param).position(point.get(t.param))?);
        }
        if self.cross_weight_ns != 0.0 {
            let u = |p: Param| {
                let d = self.space.domain(p);
                let i = d.position(point.get(p)).unwrap_or(0);
                if d.len() > 1 {
                    i as f64 / (d.len() - 1) as f64
                } else {
                    0.0
                }
            };
            let d = u(Param::ColdUf) - u(Param::PldStride);
            total += self.cross_weight_ns * d * d;
        }
        Some(total)
    }

    pub fn cost(&self, point: &TuningPoint) -> Result<Duration, GenerationError> {
        synth_cost(self, point)
    }

    pub fn is_hole(&self, point: &TuningPoint) -> bool {
        self.holes.contains(point) || !self.space.contains(point)
    }

    /// Exhaustive argmin over all non-hole points; first minimum in
    /// enumeration order.
    pub fn scan_optimum(&self) -> Option<(TuningPoint, Duration)> {
        let mut best: Option<(TuningPoint, Duration)> = None;
        for p in self.space.points() {
            if let Ok(c) = self.cost(&p) {
                if best.is_none_or(|(_, b)| c < b) {
                    best = Some((p, c));
                }
            }
        }
        best
    }

    pub fn optimum_cost(&self) -> Option<Duration> {
        self.optimum.and_then(|p| self.cost(&p).ok())
    }

    pub fn with_holes(mut self, holes: Holes) -> Self {
        self.holes = holes;
        self.optimum = self.scan_optimum().map(|(p, _)| p);
        self
    }

    pub fn with_cross_term(mut self, weight_ns: f64) -> Self {
        self.cross_weight_ns = weight_ns;
        self.optimum = self.scan_optimum().map(|(p, _)| p);
        self
    }

    pub fn with_reference(mut self, reference: Duration) -> Self {
        self.reference = reference;
        self
    }

    /// Reference faster than every point, so no candidate can ever win.
    pub fn without_improvement(self) -> Self {
        let floor = self.optimum_cost().unwrap_or(Duration::from_nanos(self.base_ns as u64));
        let reference = floor.mul_f64(0.8).max(Duration::from_nanos(1));
        self.with_reference(reference)
    }
}

pub fn synth_cost(surface: &CostSurface, point: &TuningPoint) -> Result<Duration, GenerationError> {
    if surface.holes.contains(point) {
        return Err(GenerationError {
            reason: GenerationFailure::Hole,
            point: *point,
        });
    }
    let ns = surface.raw_ns(point).ok_or(GenerationError {
        reason: GenerationFailure::Hole,
        point: *point,
    })?;
    Ok(Duration::from_nanos(ns.round().max(1.0) as u64))
}

pub const DEFAULT_BASE_NS: f64 = 50_000.0;
pub const DEFAULT_WEIGHTS: (f64, f64) = (0.05, 0.4);

/// Sum of per-parameter convex terms with seeded minima and weights.
pub fn make_separable_surface(seed: u64, space: &TuningSpace) -> CostSurface {
    make_surface(seed, space, DEFAULT_BASE_NS, DEFAULT_WEIGHTS)
}

pub fn make_surface(seed: u64, space: &TuningSpace, base_ns: f64, weights: (f64, f64)) -> CostSurface {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terms = Param::ALL
        .iter()
        .map(|&param| {
            let len = space.domain(param).len();
            ParamTerm {
                param,
                weight_ns: base_ns * rng.gen_range(weights.0..=weights.1),
                argmin: rng.gen_range(0..len),
                len,
            }
        })
        .collect();
    let mut s = CostSurface {
        space: space.clone(),
        base_ns,
        terms,
        cross_weight_ns: 0.0,
        holes: Holes::None,
        seed,
        reference: Duration::ZERO,
        optimum: None,
    };
    s.optimum = s.scan_optimum().map(|(p, _)| p);
    s.reference = s.cost(&space.min_point()).unwrap_or(Duration::from_nanos(base_ns as u64));
    s
}

/// Surface settings as they appear in a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurfaceConfig {
    pub seed: u64,
    pub base_ns: f64,
    pub weight_lo: f64,
    pub weight_hi: f64,
    pub cross_weight_ns: f64,
    /// Mirror the register-budget holes of the real generator.
    pub register_holes: bool,
    pub no_improvement: bool,
    pub reference_ns: Option<u64>,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            base_ns: DEFAULT_BASE_NS,
            weight_lo: DEFAULT_WEIGHTS.0,
            weight_hi: DEFAULT_WEIGHTS.1,
            cross_weight_ns: 0.0,
            register_holes: true,
            no_improvement: false,
            reference_ns: None,
        }
    }
}

impl SurfaceConfig {
    pub fn build(&self, space: &TuningSpace, budget: RegisterBudget) -> CostSurface {
        let mut s = make_surface(self.seed, space, self.base_ns, (self.weight_lo, self.weight_hi));
        if self.cross_weight_ns != 0.0 {
            s = s.with_cross_term(self.cross_weight_ns);
        }
        if self.register_holes {
            s = s.with_holes(Holes::Registers(budget));
        }
        if let Some(ns) = self.reference_ns {
            s = s.with_reference(Duration::from_nanos(ns));
        }
        if self.no_improvement {
            s = s.without_improvement();
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{KernelKind, ParameterDomain};

    fn small_space() -> TuningSpace {
        TuningSpace::reference_ranges()
            .with_domain(ParameterDomain::range(Param::ColdUf, 1, 8).unwrap())
    }

    #[test]
    fn optimum_is_exhaustive_argmin() {
        let s = make_separable_surface(7, &TuningSpace::reference_ranges());
        let opt = s.optimum.unwrap();
        let best = s.cost(&opt).unwrap();
        assert!(TuningSpace::reference_ranges().points().all(|p| s.cost(&p).unwrap() >= best));
    }

    #[test]
    fn separable_argmin_is_per_parameter_argmin() {
        for seed in 0..20 {
            let space = small_space();
            let s = make_separable_surface(seed, &space);
            let mut composed = TuningPoint::SCALAR;
            for t in &s.terms {
                composed.set(t.param, space.domain(t.param).values()[t.argmin]);
            }
            assert_eq!(s.optimum, Some(composed), "seed {seed}");
        }
    }

    #[test]
    fn holes_and_determinism() {
        let budget = RegisterBudget::for_kind(KernelKind::Distance);
        let s = make_separable_surface(3, &small_space()).with_holes(Holes::Registers(budget));
        let hole = TuningPoint {
            hot_uf: 4,
            vect_len: 4,
            ..TuningPoint::SCALAR
        };
        assert_eq!(s.cost(&hole).unwrap_err().reason, GenerationFailure::Hole);
        let p = TuningPoint::SCALAR;
        assert_eq!(s.cost(&p), s.cost(&p));
        assert!(!s.holes.contains(&s.optimum.unwrap()));
    }

    #[test]
    fn singleton_space_has_single_optimum() {
        let space = TuningSpace::new(
            Param::ALL
                .iter()
                .map(|&p| ParameterDomain::new(p, vec![if p.is_flag() || p == Param::PldStride { 0 } else { 1 }]).unwrap())
                .collect(),
        )
        .unwrap();
        let s = make_separable_surface(1, &space);
        assert_eq!(s.optimum, Some(TuningPoint::SCALAR));
    }

    #[test]
    fn seeds_differ() {
        let space = small_space();
        let a = make_separable_surface(1, &space);
        let b = make_separable_surface(2, &space);
        assert!(space.points().any(|p| a.cost(&p) != b.cost(&p)));
    }

    #[test]
    fn no_improvement_reference_beats_everything() {
        let s = make_separable_surface(4, &small_space()).without_improvement();
        assert!(small_space().points().all(|p| s.cost(&p).unwrap() > s.reference));
    }

    #[test]
    fn config_round_trip() {
        let cfg = SurfaceConfig {
            cross_weight_ns: 5000.0,
            ..SurfaceConfig::default()
        };
        let text = toml::to_string(&cfg).unwrap();
        let back: SurfaceConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let s = back.build(&small_space(), RegisterBudget::for_kind(KernelKind::Distance));
        assert_eq!(s.optimum, s.scan_optimum().map(|(p, _)| p));
    }
}
