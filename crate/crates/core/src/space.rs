//! Discrete tuning space and the loop-structure arithmetic shared by the
//! generator, the explorer and the reports.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lanes per SIMD register for the provided kernels.
pub const SIMD_WIDTH: u32 = 4;

/// One of the seven code-generation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    /// Unrolling with a distinct register set per replicated instance.
    HotUf,
    /// Unrolling by pattern replication, reusing registers.
    ColdUf,
    /// Vector length in units of the SIMD width.
    VectLen,
    /// Byte stride of the prefetch hint; 0 disables it.
    PldStride,
    SchedInstr,
    StackMin,
    Vectorize,
}

impl Param {
    pub const ALL: [Param; 7] = [
        Param::HotUf,
        Param::ColdUf,
        Param::VectLen,
        Param::PldStride,
        Param::SchedInstr,
        Param::StackMin,
        Param::Vectorize,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Param::HotUf => "hotUF",
            Param::ColdUf => "coldUF",
            Param::VectLen => "vectLen",
            Param::PldStride => "pldStride",
            Param::SchedInstr => "IS",
            Param::StackMin => "SM",
            Param::Vectorize => "VE",
        }
    }

    pub fn is_flag(self) -> bool {
        matches!(self, Param::SchedInstr | Param::StackMin | Param::Vectorize)
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpaceError {
    #[error("domain for {0} is empty")]
    EmptyDomain(Param),
    #[error("domain for {0} is not strictly increasing")]
    Unordered(Param),
    #[error("flag {0} only admits the values 0 and 1")]
    BadFlag(Param),
    #[error("pldStride only admits 0, 32 and 64 bytes, got {0}")]
    BadStride(u32),
    #[error("{0} must be positive")]
    NonPositive(Param),
    #[error("expected one domain per parameter, missing {0}")]
    MissingDomain(Param),
    #[error("duplicate domain for {0}")]
    DuplicateDomain(Param),
    #[error("value {value} of {param} lies outside its domain")]
    OutOfDomain { param: Param, value: u32 },
}

/// Ordered set of admissible values for one parameter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterDomain {
    param: Param,
    values: Vec<u32>,
}

impl ParameterDomain {
    pub fn new(param: Param, values: Vec<u32>) -> Result<Self, SpaceError> {
        if values.is_empty() {
            return Err(SpaceError::EmptyDomain(param));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SpaceError::Unordered(param));
        }
        match param {
            p if p.is_flag() => {
                if values.iter().any(|&v| v > 1) {
                    return Err(SpaceError::BadFlag(p));
                }
            }
            Param::PldStride => {
                if let Some(&v) = values.iter().find(|v| ![0, 32, 64].contains(*v)) {
                    return Err(SpaceError::BadStride(v));
                }
            }
            p => {
                if values[0] == 0 {
                    return Err(SpaceError::NonPositive(p));
                }
            }
        }
        Ok(Self { param, values })
    }

    pub fn range(param: Param, lo: u32, hi: u32) -> Result<Self, SpaceError> {
        Self::new(param, (lo..=hi).collect())
    }

    pub fn param(&self) -> Param {
        self.param
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    /// RangeSize of the parameter.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> u32 {
        self.values[0]
    }

    pub fn max(&self) -> u32 {
        self.values[self.values.len() - 1]
    }

    pub fn contains(&self, v: u32) -> bool {
        self.values.binary_search(&v).is_ok()
    }

    pub fn position(&self, v: u32) -> Option<usize> {
        self.values.binary_search(&v).ok()
    }
}

/// One assignment of all seven tuning parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TuningPoint {
    pub hot_uf: u32,
    pub cold_uf: u32,
    pub vect_len: u32,
    pub pld_stride: u32,
    pub sched_instr: bool,
    pub stack_min: bool,
    pub vectorize: bool,
}

impl TuningPoint {
    /// Scalar point: no unrolling, no vectors, no prefetch, no options.
    pub const SCALAR: TuningPoint = TuningPoint {
        hot_uf: 1,
        cold_uf: 1,
        vect_len: 1,
        pld_stride: 0,
        sched_instr: false,
        stack_min: false,
        vectorize: false,
    };

    pub fn get(&self, param: Param) -> u32 {
        match param {
            Param::HotUf => self.hot_uf,
            Param::ColdUf => self.cold_uf,
            Param::VectLen => self.vect_len,
            Param::PldStride => self.pld_stride,
            Param::SchedInstr => self.sched_instr as u32,
            Param::StackMin => self.stack_min as u32,
            Param::Vectorize => self.vectorize as u32,
        }
    }

    pub fn set(&mut self, param: Param, value: u32) {
        match param {
            Param::HotUf => self.hot_uf = value,
            Param::ColdUf => self.cold_uf = value,
            Param::VectLen => self.vect_len = value,
            Param::PldStride => self.pld_stride = value,
            Param::SchedInstr => self.sched_instr = value != 0,
            Param::StackMin => self.stack_min = value != 0,
            Param::Vectorize => self.vectorize = value != 0,
        }
    }

    pub fn with(mut self, param: Param, value: u32) -> Self {
        self.set(param, value);
        self
    }

    /// Same (hotUF, coldUF, vectLen, VE) structure.
    pub fn same_structure(&self, other: &TuningPoint) -> bool {
        self.hot_uf == other.hot_uf
            && self.cold_uf == other.cold_uf
            && self.vect_len == other.vect_len
            && self.vectorize == other.vectorize
    }
}

impl fmt::Display for TuningPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "hot={} cold={} vlen={} pld={} IS={} SM={} VE={}",
            self.hot_uf,
            self.cold_uf,
            self.vect_len,
            self.pld_stride,
            self.sched_instr as u8,
            self.stack_min as u8,
            self.vectorize as u8
        )
    }
}

/// Cross product of seven parameter domains.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ParameterDomain>", into = "Vec<ParameterDomain>")]
pub struct TuningSpace {
    domains: Vec<ParameterDomain>,
}

impl TryFrom<Vec<ParameterDomain>> for TuningSpace {
    type Error = SpaceError;

    fn try_from(domains: Vec<ParameterDomain>) -> Result<Self, SpaceError> {
        TuningSpace::new(domains)
    }
}

impl From<TuningSpace> for Vec<ParameterDomain> {
    fn from(space: TuningSpace) -> Self {
        space.domains
    }
}

impl Default for TuningSpace {
    fn default() -> Self {
        Self::reference_ranges()
    }
}

impl TuningSpace {
    /// Builds a space from exactly one domain per parameter, in any order.
    pub fn new(domains: Vec<ParameterDomain>) -> Result<Self, SpaceError> {
        let mut slots: Vec<Option<ParameterDomain>> = vec![None; Param::ALL.len()];
        for d in domains {
            let i = d.param.index();
            if slots[i].is_some() {
                return Err(SpaceError::DuplicateDomain(d.param));
            }
            slots[i] = Some(d);
        }
        let domains = slots
            .into_iter()
            .zip(Param::ALL)
            .map(|(d, p)| d.ok_or(SpaceError::MissingDomain(p)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { domains })
    }

    /// hotUF 1-4, coldUF 1-64, vectLen 1-4, pldStride {0,32,64}, binary flags.
    pub fn reference_ranges() -> Self {
        let d = |p, v: Vec<u32>| ParameterDomain::new(p, v).expect("static domain");
        Self {
            domains: vec![
                d(Param::HotUf, (1..=4).collect()),
                d(Param::ColdUf, (1..=64).collect()),
                d(Param::VectLen, (1..=4).collect()),
                d(Param::PldStride, vec![0, 32, 64]),
                d(Param::SchedInstr, vec![0, 1]),
                d(Param::StackMin, vec![0, 1]),
                d(Param::Vectorize, vec![0, 1]),
            ],
        }
    }

    pub fn domain(&self, param: Param) -> &ParameterDomain {
        &self.domains[param.index()]
    }

    pub fn domains(&self) -> &[ParameterDomain] {
        &self.domains
    }

    /// Replaces one domain, keeping the others.
    pub fn with_domain(mut self, domain: ParameterDomain) -> Self {
        let i = domain.param.index();
        self.domains[i] = domain;
        self
    }

    pub fn contains(&self, point: &TuningPoint) -> bool {
        self.check(point).is_ok()
    }

    pub fn check(&self, point: &TuningPoint) -> Result<(), SpaceError> {
        for d in &self.domains {
            let value = point.get(d.param);
            if !d.contains(value) {
                return Err(SpaceError::OutOfDomain { param: d.param, value });
            }
        }
        Ok(())
    }

    /// Number of raw code variants, holes included.
    pub fn size(&self) -> u64 {
        space_size(self)
    }

    /// Every point of the cross product; the last parameter varies fastest.
    pub fn points(&self) -> impl Iterator<Item = TuningPoint> + '_ {
        let mut idx = vec![0usize; self.domains.len()];
        let mut exhausted = false;
        std::iter::from_fn(move || {
            if exhausted {
                return None;
            }
            let mut p = TuningPoint::SCALAR;
            for (d, &i) in self.domains.iter().zip(&idx) {
                p.set(d.param, d.values[i]);
            }
            let mut k = idx.len();
            loop {
                if k == 0 {
                    exhausted = true;
                    break;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < self.domains[k].len() {
                    break;
                }
                idx[k] = 0;
            }
            Some(p)
        })
    }

    /// Smallest value of every domain.
    pub fn min_point(&self) -> TuningPoint {
        let mut p = TuningPoint::SCALAR;
        for d in &self.domains {
            p.set(d.param, d.min());
        }
        p
    }
}

/// Product of all RangeSizes.
pub fn space_size(space: &TuningSpace) -> u64 {
    space.domains.iter().map(|d| d.len() as u64).product()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Distance,
    Lintra,
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelKind::Distance => "distance",
            KernelKind::Lintra => "lintra",
        })
    }
}

/// Run-time constants a variant is specialized on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Specialization {
    Distance { dimension: usize },
    Lintra { bands: usize, width: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KernelShape {
    pub spec: Specialization,
    pub simd_width: u32,
}

impl KernelShape {
    pub fn distance(dimension: usize) -> Self {
        Self {
            spec: Specialization::Distance { dimension },
            simd_width: SIMD_WIDTH,
        }
    }

    pub fn lintra(bands: usize, width: usize) -> Self {
        Self {
            spec: Specialization::Lintra { bands, width },
            simd_width: SIMD_WIDTH,
        }
    }

    pub fn kind(&self) -> KernelKind {
        match self.spec {
            Specialization::Distance { .. } => KernelKind::Distance,
            Specialization::Lintra { .. } => KernelKind::Lintra,
        }
    }

    /// Elements processed by one kernel call: the dimension, or one row of
    /// `bands * width` samples.
    pub fn total_elements(&self) -> usize {
        match self.spec {
            Specialization::Distance { dimension } => dimension,
            Specialization::Lintra { bands, width } => bands * width,
        }
    }
}

/// Lanes covered by one vector operand: `vectLen` times the SIMD width when
/// vectorizing, `vectLen` scalars otherwise.
pub fn lanes(point: &TuningPoint, shape: &KernelShape) -> usize {
    let w = if point.vectorize { shape.simd_width } else { 1 };
    (point.vect_len * w) as usize
}

/// Elements consumed by one pass over the emitted loop body.
pub fn elements_per_iteration(point: &TuningPoint, shape: &KernelShape) -> usize {
    lanes(point, shape) * point.hot_uf as usize * point.cold_uf as usize
}

/// Elements left for the scalar tail.
pub fn leftover_count(point: &TuningPoint, shape: &KernelShape) -> usize {
    shape.total_elements() % elements_per_iteration(point, shape)
}

/// Number of main-loop passes.
pub fn trip_count(point: &TuningPoint, shape: &KernelShape) -> usize {
    shape.total_elements() / elements_per_iteration(point, shape)
}

/// What the loop emitter produces for a (point, shape) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructuralCase {
    /// The body is wider than the data; only the tail runs.
    NoMainLoop,
    /// Exactly one pass, no backward branch.
    FullyUnrolled,
    /// Several passes around a backward branch.
    PartiallyUnrolledLoop,
}

pub fn structural_case(point: &TuningPoint, shape: &KernelShape) -> StructuralCase {
    match trip_count(point, shape) {
        0 => StructuralCase::NoMainLoop,
        1 => StructuralCase::FullyUnrolled,
        _ => StructuralCase::PartiallyUnrolledLoop,
    }
}
