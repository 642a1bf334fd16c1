//! Parametrizable kernel generator.
//!
//! Each [`TuningPoint`] selects a body from a family of monomorphized loop
//! nests: `hotUF` independent accumulator sets of `lanes` elements each,
//! replicated `coldUF` times per pass over the same accumulators, followed
//! by a scalar tail for the leftover. `IS` picks a lane-major interleaving of
//! the hot instances, `SM=0` spills the accumulators to the stack after each
//! pass, and a non-zero `pldStride` emits a prefetch hint past the last load
//! of every pass. Shapes outside the monomorphized table fall back to a body
//! with runtime loop bounds and identical accumulation order.

use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::space::{
    self, KernelKind, KernelShape, Specialization, StructuralCase, TuningPoint,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterBudget {
    pub total_slots: u32,
    pub live_vars_per_unroll_instance: u32,
    pub fixed_slots: u32,
}

impl RegisterBudget {
    pub const DEFAULT_TOTAL: u32 = 32;

    /// Operand/accumulator model of the provided kernels: three live vector
    /// registers per unrolled instance plus two fixed slots.
    pub fn for_kind(kind: KernelKind) -> Self {
        let live = match kind {
            KernelKind::Distance => 3,
            KernelKind::Lintra => 3,
        };
        Self {
            total_slots: Self::DEFAULT_TOTAL,
            live_vars_per_unroll_instance: live,
            fixed_slots: 2,
        }
    }

    pub fn new(total_slots: u32, live: u32, fixed_slots: u32) -> Option<Self> {
        (total_slots > fixed_slots && live > 0).then_some(Self {
            total_slots,
            live_vars_per_unroll_instance: live,
            fixed_slots,
        })
    }

    pub fn slots_used(&self, point: &TuningPoint) -> u32 {
        point.vect_len * point.hot_uf * self.live_vars_per_unroll_instance + self.fixed_slots
    }
}

pub fn is_feasible(point: &TuningPoint, budget: &RegisterBudget) -> bool {
    budget.slots_used(point) <= budget.total_slots
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationFailure {
    RegisterOverflow,
    DegenerateShape,
    /// Point excluded by a synthetic cost surface.
    Hole,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot generate {point}: {reason:?}")]
pub struct GenerationError {
    pub reason: GenerationFailure,
    pub point: TuningPoint,
}

/// Prefetch hint placement recorded on every variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Prefetch {
    None,
    /// Hint at the address of the last load of a pass plus `stride_bytes`.
    AfterLastLoad { stride_bytes: u32 },
}

pub fn prefetch_effect(point: &TuningPoint) -> Prefetch {
    match point.pld_stride {
        0 => Prefetch::None,
        s => Prefetch::AfterLastLoad { stride_bytes: s },
    }
}

/// How the body was realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyKind {
    Reference,
    Specialized,
    Generic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantMeta {
    pub point: TuningPoint,
    pub shape: KernelShape,
    pub elements_per_iteration: usize,
    pub trip_count: usize,
    pub leftover: usize,
    pub case: StructuralCase,
    pub register_slots_used: u32,
    pub prefetch: Prefetch,
    pub body: BodyKind,
}

/// A generated kernel plus its structural description.
#[derive(Debug, Clone)]
pub struct KernelVariant<K> {
    pub kernel: Arc<K>,
    pub meta: VariantMeta,
    pub generation_time: Duration,
}

/// Loop parameters baked into a variant at generation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Plan {
    n: usize,
    bands: usize,
    hot: usize,
    lanes: usize,
    trips: usize,
    block: usize,
    prefetch_bytes: usize,
}

impl Plan {
    fn new(point: &TuningPoint, shape: &KernelShape) -> Self {
        let bands = match shape.spec {
            Specialization::Lintra { bands, .. } => bands,
            Specialization::Distance { .. } => 1,
        };
        Self {
            n: shape.total_elements(),
            bands,
            hot: point.hot_uf as usize,
            lanes: space::lanes(point, shape),
            trips: space::trip_count(point, shape),
            block: space::elements_per_iteration(point, shape),
            prefetch_bytes: point.pld_stride as usize,
        }
    }

    fn main_len(&self) -> usize {
        self.trips * self.block
    }
}

type DistanceFn = fn(&Plan, &[f32], &[f32]) -> f32;
type LintraFn = fn(&Plan, &[f32], &[f32], &[f32], &mut [f32]);

#[inline(always)]
#[allow(unused_variables)]
fn prefetch_after(last_load: *const f32, stride_bytes: usize) {
    #[cfg(target_arch = "x86_64")]
    #[allow(unused_unsafe)]
    // SAFETY: prefetch is a hint and never faults, whatever the address.
    unsafe {
        use std::arch::x86_64::{_mm_prefetch, _MM_HINT_T0};
        _mm_prefetch::<_MM_HINT_T0>((last_load as *const i8).wrapping_add(stride_bytes));
    }
}

fn distance_reference(plan: &Plan, a: &[f32], b: &[f32]) -> f32 {
    let mut sum = 0.0f32;
    for i in 0..plan.n {
        let d = a[i] - b[i];
        sum += d * d;
    }
    sum
}

fn distance_body<const H: usize, const L: usize, const VE: bool, const IS: bool, const SM: bool>(
    plan: &Plan,
    a: &[f32],
    b: &[f32],
) -> f32 {
    let (a, b) = (&a[..plan.n], &b[..plan.n]);
    let main = plan.main_len();
    let mut acc = [[0.0f32; L]; H];
    if main > 0 {
        for (pa, pb) in a[..main]
            .chunks_exact(plan.block)
            .zip(b[..main].chunks_exact(plan.block))
        {
            for (ra, rb) in pa.chunks_exact(H * L).zip(pb.chunks_exact(H * L)) {
                if IS {
                    for l in 0..L {
                        for h in 0..H {
                            let d = ra[h * L + l] - rb[h * L + l];
                            acc[h][l] += d * d;
                        }
                    }
                } else {
                    for h in 0..H {
                        for l in 0..L {
                            let d = ra[h * L + l] - rb[h * L + l];
                            acc[h][l] += d * d;
                        }
                    }
                }
            }
            if plan.prefetch_bytes != 0 {
                prefetch_after(&pa[plan.block - 1], plan.prefetch_bytes);
                prefetch_after(&pb[plan.block - 1], plan.prefetch_bytes);
            }
            if !SM {
                acc = std::hint::black_box(acc);
            }
        }
    }
    let mut sum = 0.0f32;
    for row in &acc {
        for &v in row {
            sum += v;
        }
    }
    for i in main..plan.n {
        let d = a[i] - b[i];
        sum += d * d;
    }
    sum
}

fn distance_generic(plan: &Plan, a: &[f32], b: &[f32]) -> f32 {
    let (a, b) = (&a[..plan.n], &b[..plan.n]);
    let (hot, lanes) = (plan.hot, plan.lanes);
    let main = plan.main_len();
    let mut acc = vec![0.0f32; hot * lanes];
    if main > 0 {
        for (pa, pb) in a[..main]
            .chunks_exact(plan.block)
            .zip(b[..main].chunks_exact(plan.block))
        {
            for (ra, rb) in pa.chunks_exact(hot * lanes).zip(pb.chunks_exact(hot * lanes)) {
                for ((acc, x), y) in acc.iter_mut().zip(ra).zip(rb) {
                    let d = x - y;
                    *acc += d * d;
                }
            }
            if plan.prefetch_bytes != 0 {
                prefetch_after(&pa[plan.block - 1], plan.prefetch_bytes);
                prefetch_after(&pb[plan.block - 1], plan.prefetch_bytes);
            }
        }
    }
    let mut sum = 0.0f32;
    for v in acc {
        sum += v;
    }
    for i in main..plan.n {
        let d = a[i] - b[i];
        sum += d * d;
    }
    sum
}

fn lintra_reference(plan: &Plan, input: &[f32], mul: &[f32], add: &[f32], out: &mut [f32]) {
    for i in 0..plan.n {
        let b = i % plan.bands;
        out[i] = input[i] * mul[b] + add[b];
    }
}

/// Per-phase coefficient rows: row `r` holds the factors for a block whose
/// first element sits in band `r`.
fn lintra_tables(plan: &Plan, mul: &[f32], add: &[f32]) -> (Vec<f32>, Vec<f32>) {
    let (bands, lanes) = (plan.bands, plan.lanes);
    let mut tm = Vec::with_capacity(bands * lanes);
    let mut ta = Vec::with_capacity(bands * lanes);
    for r in 0..bands {
        for l in 0..lanes {
            tm.push(mul[(r + l) % bands]);
            ta.push(add[(r + l) % bands]);
        }
    }
    (tm, ta)
}

#[inline(always)]
fn next_phase(r: usize, step: usize, bands: usize) -> usize {
    let r = r + step;
    if r >= bands {
        r - bands
    } else {
        r
    }
}

fn lintra_tail(plan: &Plan, input: &[f32], mul: &[f32], add: &[f32], out: &mut [f32]) {
    for i in plan.main_len()..plan.n {
        let b = i % plan.bands;
        out[i] = input[i] * mul[b] + add[b];
    }
}

fn lintra_body<const H: usize, const L: usize, const VE: bool, const IS: bool, const SM: bool>(
    plan: &Plan,
    input: &[f32],
    mul: &[f32],
    add: &[f32],
    out: &mut [f32],
) {
    let main = plan.main_len();
    let bands = plan.bands;
    let step = L % bands;
    let (tm, ta) = lintra_tables(plan, mul, add);
    let mut r = 0usize;
    if main > 0 {
        for (pi, po) in input[..main]
            .chunks_exact(plan.block)
            .zip(out[..main].chunks_exact_mut(plan.block))
        {
            for (ri, ro) in pi.chunks_exact(H * L).zip(po.chunks_exact_mut(H * L)) {
                let mut phase = [0usize; H];
                for p in phase.iter_mut() {
                    *p = r;
                    r = next_phase(r, step, bands);
                }
                if IS {
                    for l in 0..L {
                        for h in 0..H {
                            let c = phase[h] * L + l;
                            ro[h * L + l] = ri[h * L + l] * tm[c] + ta[c];
                        }
                    }
                } else {
                    for h in 0..H {
                        let (m, a) = if SM {
                            let mut m = [0.0f32; L];
                            let mut a = [0.0f32; L];
                            m.copy_from_slice(&tm[phase[h] * L..][..L]);
                            a.copy_from_slice(&ta[phase[h] * L..][..L]);
                            (m, a)
                        } else {
                            std::hint::black_box((
                                tm[phase[h] * L..][..L].try_into().unwrap(),
                                ta[phase[h] * L..][..L].try_into().unwrap(),
                            ))
                        };
                        for l in 0..L {
                            ro[h * L + l] = ri[h * L + l] * m[l] + a[l];
                        }
                    }
                }
            }
            if plan.prefetch_bytes != 0 {
                prefetch_after(&pi[plan.block - 1], plan.prefetch_bytes);
            }
        }
    }
    lintra_tail(plan, input, mul, add, out);
}

fn lintra_generic(plan: &Plan, input: &[f32], mul: &[f32], add: &[f32], out: &mut [f32]) {
    let main = plan.main_len();
    let (bands, lanes) = (plan.bands, plan.lanes);
    let step = lanes % bands;
    let (tm, ta) = lintra_tables(plan, mul, add);
    let mut r = 0usize;
    if main > 0 {
        for (pi, po) in input[..main]
            .chunks_exact(plan.block)
            .zip(out[..main].chunks_exact_mut(plan.block))
        {
            for (ri, ro) in pi.chunks_exact(lanes).zip(po.chunks_exact_mut(lanes)) {
                let (m, a) = (&tm[r * lanes..][..lanes], &ta[r * lanes..][..lanes]);
                for l in 0..lanes {
                    ro[l] = ri[l] * m[l] + a[l];
                }
                r = next_phase(r, step, bands);
            }
            if plan.prefetch_bytes != 0 {
                prefetch_after(&pi[plan.block - 1], plan.prefetch_bytes);
            }
        }
    }
    lintra_tail(plan, input, mul, add, out);
}

fn with_options<const H: usize, const L: usize, const VE: bool>(
    is: bool,
    sm: bool,
) -> (DistanceFn, LintraFn) {
    match (is, sm) {
        (false, false) => (
            distance_body::<H, L, VE, false, false>,
            lintra_body::<H, L, VE, false, false>,
        ),
        (false, true) => (
            distance_body::<H, L, VE, false, true>,
            lintra_body::<H, L, VE, false, true>,
        ),
        (true, false) => (
            distance_body::<H, L, VE, true, false>,
            lintra_body::<H, L, VE, true, false>,
        ),
        (true, true) => (
            distance_body::<H, L, VE, true, true>,
            lintra_body::<H, L, VE, true, true>,
        ),
    }
}

fn with_lanes<const H: usize>(
    lanes: usize,
    ve: bool,
    is: bool,
    sm: bool,
) -> Option<(DistanceFn, LintraFn)> {
    Some(match (ve, lanes) {
        (false, 1) => with_options::<H, 1, false>(is, sm),
        (false, 2) => with_options::<H, 2, false>(is, sm),
        (false, 3) => with_options::<H, 3, false>(is, sm),
        (false, 4) => with_options::<H, 4, false>(is, sm),
        (true, 4) => with_options::<H, 4, true>(is, sm),
        (true, 8) => with_options::<H, 8, true>(is, sm),
        (true, 12) => with_options::<H, 12, true>(is, sm),
        (true, 16) => with_options::<H, 16, true>(is, sm),
        _ => return None,
    })
}

fn select_bodies(point: &TuningPoint, shape: &KernelShape) -> Option<(DistanceFn, LintraFn)> {
    let lanes = space::lanes(point, shape);
    let (ve, is, sm) = (point.vectorize, point.sched_instr, point.stack_min);
    match point.hot_uf {
        1 => with_lanes::<1>(lanes, ve, is, sm),
        2 => with_lanes::<2>(lanes, ve, is, sm),
        3 => with_lanes::<3>(lanes, ve, is, sm),
        4 => with_lanes::<4>(lanes, ve, is, sm),
        _ => None,
    }
}

/// Squared euclidean distance specialized on its dimension.
#[derive(Clone, Copy)]
pub struct DistanceKernel {
    plan: Plan,
    body: DistanceFn,
}

impl std::fmt::Debug for DistanceKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DistanceKernel").field("plan", &self.plan).finish()
    }
}

impl DistanceKernel {
    /// Plain scalar loop in index order.
    pub fn reference(dimension: usize) -> Self {
        let shape = KernelShape::distance(dimension);
        Self {
            plan: Plan::new(&TuningPoint::SCALAR, &shape),
            body: distance_reference,
        }
    }

    pub fn dimension(&self) -> usize {
        self.plan.n
    }

    /// Panics if either slice is shorter than the specialized dimension.
    #[inline]
    pub fn eval(&self, a: &[f32], b: &[f32]) -> f32 {
        assert!(a.len() >= self.plan.n && b.len() >= self.plan.n, "operand shorter than dimension");
        (self.body)(&self.plan, a, b)
    }
}

/// Per-band linear transform of one image row, specialized on bands and width.
#[derive(Clone, Copy)]
pub struct LintraKernel {
    plan: Plan,
    body: LintraFn,
}

impl std::fmt::Debug for LintraKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LintraKernel").field("plan", &self.plan).finish()
    }
}

impl LintraKernel {
    pub fn reference(bands: usize, width: usize) -> Self {
        let shape = KernelShape::lintra(bands, width);
        Self {
            plan: Plan::new(&TuningPoint::SCALAR, &shape),
            body: lintra_reference,
        }
    }

    pub fn bands(&self) -> usize {
        self.plan.bands
    }

    pub fn row_len(&self) -> usize {
        self.plan.n
    }

    /// `out[x*bands+b] = input[x*bands+b] * mul[b] + add[b]` over one row.
    #[inline]
    pub fn apply(&self, input: &[f32], mul: &[f32], add: &[f32], out: &mut [f32]) {
        let p = &self.plan;
        assert!(input.len() >= p.n && out.len() >= p.n, "row shorter than bands * width");
        assert!(mul.len() >= p.bands && add.len() >= p.bands, "factor vectors shorter than bands");
        (self.body)(p, input, mul, add, out)
    }
}

fn prepare(
    point: &TuningPoint,
    shape: &KernelShape,
    budget: &RegisterBudget,
) -> Result<(VariantMeta, Option<(DistanceFn, LintraFn)>), GenerationError> {
    let fail = |reason| GenerationError {
        reason,
        point: *point,
    };
    let degenerate = match shape.spec {
        Specialization::Distance { dimension } => dimension == 0,
        Specialization::Lintra { bands, width } => bands == 0 || width == 0,
    };
    if degenerate || point.hot_uf == 0 || point.cold_uf == 0 || point.vect_len == 0 {
        return Err(fail(GenerationFailure::DegenerateShape));
    }
    if !is_feasible(point, budget) {
        return Err(fail(GenerationFailure::RegisterOverflow));
    }
    let bodies = select_bodies(point, shape);
    let meta = VariantMeta {
        point: *point,
        shape: *shape,
        elements_per_iteration: space::elements_per_iteration(point, shape),
        trip_count: space::trip_count(point, shape),
        leftover: space::leftover_count(point, shape),
        case: space::structural_case(point, shape),
        register_slots_used: budget.slots_used(point),
        prefetch: prefetch_effect(point),
        body: if bodies.is_some() {
            BodyKind::Specialized
        } else {
            BodyKind::Generic
        },
    };
    Ok((meta, bodies))
}

pub fn generate_distance(
    shape: &KernelShape,
    point: &TuningPoint,
    budget: &RegisterBudget,
) -> Result<KernelVariant<DistanceKernel>, GenerationError> {
    let started = Instant::now();
    if shape.kind() != KernelKind::Distance {
        return Err(GenerationError {
            reason: GenerationFailure::DegenerateShape,
            point: *point,
        });
    }
    let (meta, bodies) = prepare(point, shape, budget)?;
    let kernel = DistanceKernel {
        plan: Plan::new(point, shape),
        body: bodies.map_or(distance_generic as DistanceFn, |b| b.0),
    };
    Ok(KernelVariant {
        kernel: Arc::new(kernel),
        meta,
        generation_time: started.elapsed(),
    })
}

pub fn generate_lintra(
    shape: &KernelShape,
    point: &TuningPoint,
    budget: &RegisterBudget,
) -> Result<KernelVariant<LintraKernel>, GenerationError> {
    let started = Instant::now();
    if shape.kind() != KernelKind::Lintra {
        return Err(GenerationError {
            reason: GenerationFailure::DegenerateShape,
            point: *point,
        });
    }
    let (meta, bodies) = prepare(point, shape, budget)?;
    let kernel = LintraKernel {
        plan: Plan::new(point, shape),
        body: bodies.map_or(lintra_generic as LintraFn, |b| b.1),
    };
    Ok(KernelVariant {
        kernel: Arc::new(kernel),
        meta,
        generation_time: started.elapsed(),
    })
}

/// A kernel family the tuner can instantiate at arbitrary points.
pub trait KernelGenerator: Send {
    type Kernel: Send + Sync + 'static;

    fn shape(&self) -> KernelShape;
    fn budget(&self) -> RegisterBudget;
    fn generate(&self, point: &TuningPoint) -> Result<KernelVariant<Self::Kernel>, GenerationError>;
    /// The kernel installed before any tuning happens.
    fn reference(&self) -> Arc<Self::Kernel>;

    fn is_feasible(&self, point: &TuningPoint) -> bool {
        is_feasible(point, &self.budget())
    }

    fn leftover_of(&self, point: &TuningPoint) -> usize {
        space::leftover_count(point, &self.shape())
    }
}

#[derive(Debug, Clone)]
pub struct DistanceGenerator {
    pub dimension: usize,
    pub budget: RegisterBudget,
}

impl DistanceGenerator {
    pub fn new(dimension: usize) -> Self {
        Self {
            dimension,
            budget: RegisterBudget::for_kind(KernelKind::Distance),
        }
    }
}

impl KernelGenerator for DistanceGenerator {
    type Kernel = DistanceKernel;

    fn shape(&self) -> KernelShape {
        KernelShape::distance(self.dimension)
    }

    fn budget(&self) -> RegisterBudget {
        self.budget
    }

    fn generate(&self, point: &TuningPoint) -> Result<KernelVariant<DistanceKernel>, GenerationError> {
        generate_distance(&self.shape(), point, &self.budget)
    }

    fn reference(&self) -> Arc<DistanceKernel> {
        Arc::new(DistanceKernel::reference(self.dimension))
    }
}

#[derive(Debug, Clone)]
pub struct LintraGenerator {
    pub bands: usize,
    pub width: usize,
    pub budget: RegisterBudget,
}

impl LintraGenerator {
    pub fn new(bands: usize, width: usize) -> Self {
        Self {
            bands,
            width,
            budget: RegisterBudget::for_kind(KernelKind::Lintra),
        }
    }
}

impl KernelGenerator for LintraGenerator {
    type Kernel = LintraKernel;

    fn shape(&self) -> KernelShape {
        KernelShape::lintra(self.bands, self.width)
    }

    fn budget(&self) -> RegisterBudget {
        self.budget
    }

    fn generate(&self, point: &TuningPoint) -> Result<KernelVariant<LintraKernel>, GenerationError> {
        generate_lintra(&self.shape(), point, &self.budget)
    }

    fn reference(&self) -> Arc<LintraKernel> {
        Arc::new(LintraKernel::reference(self.bands, self.width))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::TuningSpace;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn budget() -> RegisterBudget {
        RegisterBudget::for_kind(KernelKind::Distance)
    }

    fn point(vect_len: u32, hot_uf: u32) -> TuningPoint {
        TuningPoint {
            vect_len,
            hot_uf,
            ..TuningPoint::SCALAR
        }
    }

    // Oracle: index-order scalar loop in f64.
    fn oracle_distance(a: &[f32], b: &[f32]) -> f64 {
        a.iter().zip(b).map(|(x, y)| ((x - y) as f64).powi(2)).sum()
    }

    fn oracle_lintra(input: &[f32], bands: usize, mul: &[f32], add: &[f32]) -> Vec<f32> {
        let mut out = vec![0.0; input.len()];
        for x in 0..input.len() / bands {
            for b in 0..bands {
                out[x * bands + b] = input[x * bands + b] * mul[b] + add[b];
            }
        }
        out
    }

    #[test]
    fn feasibility_examples() {
        let b = RegisterBudget::new(32, 3, 2).unwrap();
        assert!(!is_feasible(&point(4, 4), &b));
        assert!(is_feasible(&point(1, 1), &b));
        assert!(is_feasible(&point(2, 4), &b));
        assert_eq!(b.slots_used(&point(4, 4)), 50);
        assert_eq!(b.slots_used(&point(2, 4)), 26);
        assert!(RegisterBudget::new(2, 3, 2).is_none());
    }

    #[test]
    fn distance_hand_examples() {
        let s = KernelShape::distance(4);
        for p in TuningSpace::reference_ranges().points().step_by(7) {
            match generate_distance(&s, &p, &budget()) {
                Ok(v) => {
                    assert_eq!(v.kernel.eval(&[1., 2., 3., 4.], &[0.; 4]), 30.0);
                    assert_eq!(v.kernel.eval(&[1., 2., 3., 4.], &[1., 2., 3., 4.]), 0.0);
                }
                Err(e) => assert_eq!(e.reason, GenerationFailure::RegisterOverflow),
            }
        }
    }

    #[test]
    fn distance_matches_oracle_dim128() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = KernelShape::distance(128);
        let a: Vec<f32> = (0..128).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f32> = (0..128).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let want = oracle_distance(&a, &b);
        for p in TuningSpace::reference_ranges().points() {
            if let Ok(v) = generate_distance(&s, &p, &budget()) {
                let got = v.kernel.eval(&a, &b) as f64;
                assert!(((got - want) / want).abs() <= 1e-5, "{p}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn lintra_examples() {
        let s = KernelShape::lintra(1, 3);
        let v = generate_lintra(&s, &point(1, 1), &budget()).unwrap();
        let mut out = [0.0; 3];
        v.kernel.apply(&[1., 2., 3.], &[2.], &[10.], &mut out);
        assert_eq!(out, [12., 14., 16.]);
    }

    #[test]
    fn lintra_bit_exact_all_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = KernelShape::lintra(3, 64);
        let input: Vec<f32> = (0..192).map(|_| rng.gen_range(0.0..255.0)).collect();
        let mul: Vec<f32> = (0..3).map(|_| rng.gen_range(0.5..2.0)).collect();
        let add: Vec<f32> = (0..3).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let want = oracle_lintra(&input, 3, &mul, &add);
        let mut out = vec![0.0; 192];
        for p in TuningSpace::reference_ranges().points() {
            if let Ok(v) = generate_lintra(&s, &p, &budget()) {
                out.fill(f32::NAN);
                v.kernel.apply(&input, &mul, &add, &mut out);
                assert!(out.iter().zip(&want).all(|(a, b)| a.to_bits() == b.to_bits()), "{p}");
            }
        }
        let ident = generate_lintra(&s, &point(2, 2), &budget()).unwrap();
        ident.kernel.apply(&input, &[1.; 3], &[0.; 3], &mut out);
        assert_eq!(out, input);
    }

    #[test]
    fn generic_fallback_agrees() {
        let big = RegisterBudget::new(1024, 3, 2).unwrap();
        let p = TuningPoint {
            hot_uf: 6,
            cold_uf: 3,
            vect_len: 5,
            vectorize: true,
            pld_stride: 64,
            ..TuningPoint::SCALAR
        };
        let s = KernelShape::distance(1000);
        let v = generate_distance(&s, &p, &big).unwrap();
        assert_eq!(v.meta.body, BodyKind::Generic);
        let a: Vec<f32> = (0..1000).map(|i| (i as f32).sin()).collect();
        let b: Vec<f32> = (0..1000).map(|i| (i as f32).cos()).collect();
        let want = oracle_distance(&a, &b);
        assert!(((v.kernel.eval(&a, &b) as f64 - want) / want).abs() < 1e-5);

        let s = KernelShape::lintra(7, 123);
        let v = generate_lintra(&s, &p, &big).unwrap();
        let input: Vec<f32> = (0..861).map(|i| i as f32 * 0.25).collect();
        let mul: Vec<f32> = (1..=7).map(|i| i as f32 * 0.5).collect();
        let add: Vec<f32> = (1..=7).map(|i| i as f32 - 3.0).collect();
        let mut out = vec![0.0; 861];
        v.kernel.apply(&input, &mul, &add, &mut out);
        assert_eq!(out, oracle_lintra(&input, 7, &mul, &add));
    }

    #[test]
    fn errors() {
        let e = generate_distance(&KernelShape::distance(32), &point(4, 4), &budget()).unwrap_err();
        assert_eq!(e.reason, GenerationFailure::RegisterOverflow);
        assert_eq!(e.point, point(4, 4));
        let e = generate_distance(&KernelShape::distance(0), &point(1, 1), &budget()).unwrap_err();
        assert_eq!(e.reason, GenerationFailure::DegenerateShape);
        for s in [KernelShape::lintra(0, 4), KernelShape::lintra(3, 0)] {
            let e = generate_lintra(&s, &point(1, 1), &budget()).unwrap_err();
            assert_eq!(e.reason, GenerationFailure::DegenerateShape);
        }
    }

    #[test]
    fn prefetch_annotation() {
        assert_eq!(prefetch_effect(&TuningPoint::SCALAR), Prefetch::None);
        for s in [32, 64] {
            let p = TuningPoint::SCALAR.with(crate::space::Param::PldStride, s);
            assert_eq!(prefetch_effect(&p), Prefetch::AfterLastLoad { stride_bytes: s });
            let v = generate_distance(&KernelShape::distance(16), &p, &budget()).unwrap();
            assert_eq!(v.meta.prefetch, Prefetch::AfterLastLoad { stride_bytes: s });
        }
    }

    #[test]
    fn generation_is_deterministic_and_options_preserve_order() {
        let s = KernelShape::distance(64);
        let base = TuningPoint {
            hot_uf: 2,
            vect_len: 2,
            cold_uf: 2,
            vectorize: true,
            ..TuningPoint::SCALAR
        };
        let a = generate_distance(&s, &base, &budget()).unwrap();
        let b = generate_distance(&s, &base, &budget()).unwrap();
        assert_eq!(a.meta, b.meta);
        assert!(a.kernel.body as usize == b.kernel.body as usize);
        // IS and SM reorder and spill but never change accumulation order.
        let x: Vec<f32> = (0..64).map(|i| (i as f32 * 0.37).sin()).collect();
        let y: Vec<f32> = (0..64).map(|i| (i as f32 * 0.11).cos()).collect();
        let want = a.kernel.eval(&x, &y).to_bits();
        for (is, sm) in [(false, true), (true, false), (true, true)] {
            let p = TuningPoint {
                sched_instr: is,
                stack_min: sm,
                ..base
            };
            let v = generate_distance(&s, &p, &budget()).unwrap();
            assert_ne!(v.meta, a.meta);
            assert_eq!(v.kernel.eval(&x, &y).to_bits(), want);
        }
    }
}
