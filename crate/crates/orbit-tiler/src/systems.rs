//! Concrete measure-preserving Z-actions and finite orbit windows.
//!
//! Three families are supported:
//!
//! * **finite-exact** — a permutation of finitely many weighted points given
//!   by its cycle decomposition, with all arithmetic in exact rationals;
//! * **rotation** — an irrational circle rotation with a step-function
//!   observable (plus optional trigonometric terms), tracked in 128-bit
//!   fixed point so orbits do not drift;
//! * **bernoulli** — an i.i.d. 0/1 coordinate shift materialized from a
//!   counter-based generator, so the shift action is literally index
//!   shifting.
//!
//! A window is a contiguous orbit segment `x, Tx, ..., T^(W-1)x` together
//! with its observable values and an interior margin: constructions that
//! need `L` steps of context are only evaluated at indices with at least
//! `margin >= L` points of room on each side.

use num_rational::BigRational;
use num_traits::{One, Signed};
use thiserror::Error;

use crate::fixed::{continued_fraction_value, UnitFixed, UnitInterval};
use crate::rng;
use crate::value::Scalar;

/// Hard cap on window width, to keep a typo from allocating the machine.
pub const MAX_WINDOW_WIDTH: usize = 1 << 27;

/// Decimal alphas must carry at least this many significant digits.
pub const MIN_ALPHA_DIGITS: usize = 30;

#[derive(Debug, Error)]
pub enum SystemError {
    #[error("cycle {0} is empty")]
    EmptyCycle(usize),
    #[error("cycles must partition 0..{expected}: point {point} {problem}")]
    NotAPartition {
        expected: usize,
        point: usize,
        problem: &'static str,
    },
    #[error("weights must be positive (point {0})")]
    NonPositiveWeight(usize),
    #[error("weights sum to {got}, expected 1")]
    WeightsDoNotSumToOne { got: BigRational },
    #[error(
        "not measure-preserving: cycle {cycle} carries non-constant weights \
         (mu(T^-1 p) != mu(p) for some p on it)"
    )]
    NotMeasurePreserving { cycle: usize },
    #[error("observable has {got} values for {expected} points")]
    ObservableLength { got: usize, expected: usize },
    #[error("alpha must lie strictly inside (0, 1)")]
    AlphaOutOfRange,
    #[error("alpha given to {got} significant digits; need at least {need} or a continued fraction")]
    AlphaTooImprecise { got: usize, need: usize },
    #[error("malformed decimal alpha: {0}")]
    BadDecimal(String),
    #[error("continued fraction must be nonempty with all quotients >= 1")]
    BadContinuedFraction,
    #[error("step interval must satisfy 0 <= lo < hi <= 1")]
    BadStepInterval,
    #[error("bernoulli probability must lie in [0, 1], got {0}")]
    ProbabilityOutOfRange(f64),
    #[error("start point {0} out of range")]
    StartOutOfRange(usize),
    #[error("window width must be >= 1")]
    ZeroWidth,
    #[error("window width {0} exceeds the memory budget {MAX_WINDOW_WIDTH}")]
    WidthOverBudget(usize),
    #[error("margin {margin} exceeds width/2 = {half}")]
    MarginTooLarge { margin: usize, half: usize },
    #[error("operation requires a finite-exact system")]
    NotFinite,
    #[error("interval [{lo}, {hi}) out of bounds for width {width}")]
    IntervalOutOfBounds { lo: usize, hi: usize, width: usize },
}

// ---------------------------------------------------------------------------
// Specs (config-facing descriptions)
// ---------------------------------------------------------------------------

/// How the rotation angle is specified.
#[derive(Clone, Debug)]
pub enum AlphaSpec {
    /// `"0.dddd..."` with at least [`MIN_ALPHA_DIGITS`] significant digits.
    Decimal(String),
    /// Partial quotients `a1, a2, ...` of `[0; a1, a2, ...]`.
    ContinuedFraction(Vec<u64>),
}

/// Per-point weights of a finite-exact system.
#[derive(Clone, Debug)]
pub enum WeightSpec {
    Uniform,
    Explicit(Vec<BigRational>),
}

/// A validated-on-build description of a system.
#[derive(Clone, Debug)]
pub enum SystemSpec {
    Finite {
        cycles: Vec<Vec<usize>>,
        weights: WeightSpec,
        fvals: Vec<BigRational>,
    },
    Rotation {
        alpha: AlphaSpec,
        /// `(lo, hi, coeff)` step terms: `coeff * indicator([lo, hi))`.
        steps: Vec<(BigRational, BigRational, f64)>,
        /// `(k, cos_coeff, sin_coeff)` terms: `c*cos(2 pi k x) + s*sin(2 pi k x)`.
        trig: Vec<(u32, f64, f64)>,
    },
    Bernoulli { p: f64 },
}

// ---------------------------------------------------------------------------
// Finite-exact systems
// ---------------------------------------------------------------------------

/// A permutation of points `0..n` given by cycles, with rational weights
/// summing to 1 and a rational observable. Weights are forced to be constant
/// along each cycle; otherwise the cyclic shift would not preserve them.
#[derive(Clone, Debug)]
pub struct FiniteSystem {
    cycles: Vec<Vec<usize>>,
    /// point -> (cycle index, position within cycle)
    locate: Vec<(usize, usize)>,
    weights: Vec<BigRational>,
    fvals: Vec<BigRational>,
}

impl FiniteSystem {
    pub fn new(
        cycles: Vec<Vec<usize>>,
        weights: WeightSpec,
        fvals: Vec<BigRational>,
    ) -> Result<Self, SystemError> {
        let n: usize = cycles.iter().map(|c| c.len()).sum();
        if n == 0 {
            return Err(SystemError::EmptyCycle(0));
        }
        let mut locate = vec![(usize::MAX, usize::MAX); n];
        for (ci, cycle) in cycles.iter().enumerate() {
            if cycle.is_empty() {
                return Err(SystemError::EmptyCycle(ci));
            }
            for (pos, &p) in cycle.iter().enumerate() {
                if p >= n {
                    return Err(SystemError::NotAPartition {
                        expected: n,
                        point: p,
                        problem: "out of range",
                    });
                }
                if locate[p].0 != usize::MAX {
                    return Err(SystemError::NotAPartition {
                        expected: n,
                        point: p,
                        problem: "appears twice",
                    });
                }
                locate[p] = (ci, pos);
            }
        }
        // every id seen exactly once since counts match and no duplicates
        let weights = match weights {
            WeightSpec::Uniform => vec![BigRational::ratio(1, n); n],
            WeightSpec::Explicit(w) => w,
        };
        if weights.len() != n {
            return Err(SystemError::ObservableLength {
                got: weights.len(),
                expected: n,
            });
        }
        for (p, w) in weights.iter().enumerate() {
            if !w.is_positive() {
                return Err(SystemError::NonPositiveWeight(p));
            }
        }
        let total: BigRational = weights.iter().cloned().sum();
        if !total.is_one() {
            return Err(SystemError::WeightsDoNotSumToOne { got: total });
        }
        for (ci, cycle) in cycles.iter().enumerate() {
            let w0 = &weights[cycle[0]];
            if cycle.iter().any(|&p| &weights[p] != w0) {
                return Err(SystemError::NotMeasurePreserving { cycle: ci });
            }
        }
        if fvals.len() != n {
            return Err(SystemError::ObservableLength {
                got: fvals.len(),
                expected: n,
            });
        }
        Ok(FiniteSystem {
            cycles,
            locate,
            weights,
            fvals,
        })
    }

    pub fn point_count(&self) -> usize {
        self.locate.len()
    }

    pub fn cycles(&self) -> &[Vec<usize>] {
        &self.cycles
    }

    pub fn cycle_index_of(&self, point: usize) -> usize {
        self.locate[point].0
    }

    pub fn weight(&self, point: usize) -> &BigRational {
        &self.weights[point]
    }

    pub fn fval(&self, point: usize) -> &BigRational {
        &self.fvals[point]
    }

    /// T: advance one step along the containing cycle.
    pub fn apply(&self, point: usize) -> usize {
        let (ci, pos) = self.locate[point];
        let cycle = &self.cycles[ci];
        cycle[(pos + 1) % cycle.len()]
    }

    /// T^-1.
    pub fn apply_inverse(&self, point: usize) -> usize {
        let (ci, pos) = self.locate[point];
        let cycle = &self.cycles[ci];
        cycle[(pos + cycle.len() - 1) % cycle.len()]
    }

    /// Orbit point `T^i start`.
    pub fn point_at(&self, start: usize, i: usize) -> usize {
        let (ci, pos) = self.locate[start];
        let cycle = &self.cycles[ci];
        cycle[(pos + i % cycle.len()) % cycle.len()]
    }

    pub fn period_of(&self, point: usize) -> usize {
        self.cycles[self.locate[point].0].len()
    }

    /// mu(A) for a point set.
    pub fn measure_of(&self, points: &[usize]) -> BigRational {
        points.iter().map(|&p| self.weights[p].clone()).sum()
    }

    /// Integral of the observable over the whole space.
    pub fn integral(&self) -> BigRational {
        (0..self.point_count())
            .map(|p| self.weights[p].clone() * self.fvals[p].clone())
            .sum()
    }

    /// Exact orbit window starting at `start`, wrapping its cycle.
    pub fn window(
        &self,
        start: usize,
        width: usize,
        margin: usize,
    ) -> Result<OrbitWindow<BigRational>, SystemError> {
        if start >= self.point_count() {
            return Err(SystemError::StartOutOfRange(start));
        }
        check_window_shape(width, margin)?;
        let (ci, pos) = self.locate[start];
        let cycle = &self.cycles[ci];
        let fvals = (0..width)
            .map(|i| self.fvals[cycle[(pos + i % cycle.len()) % cycle.len()]].clone())
            .collect();
        Ok(OrbitWindow {
            fvals,
            margin,
            meta: WindowMeta {
                system: format!("finite[{} pts]", self.point_count()),
                start: format!("point {start}"),
                seed: None,
            },
        })
    }

    /// Same orbit window with values converted to binary64.
    pub fn window_f64(
        &self,
        start: usize,
        width: usize,
        margin: usize,
    ) -> Result<OrbitWindow<f64>, SystemError> {
        Ok(self.window(start, width, margin)?.map(|v| v.to_f64()))
    }
}

// ---------------------------------------------------------------------------
// Rotations
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct TrigTerm {
    pub freq: u32,
    pub cos_coeff: f64,
    pub sin_coeff: f64,
}

/// Rotation by an irrational angle with a step-function observable.
#[derive(Clone, Debug)]
pub struct RotationSystem {
    alpha_fp: UnitFixed,
    alpha: BigRational,
    steps: Vec<(UnitInterval, f64)>,
    trig: Vec<TrigTerm>,
}

impl RotationSystem {
    pub fn new(
        alpha: &AlphaSpec,
        steps: &[(BigRational, BigRational, f64)],
        trig: &[(u32, f64, f64)],
    ) -> Result<Self, SystemError> {
        let alpha_rat = match alpha {
            AlphaSpec::Decimal(text) => {
                let (value, digits) = parse_decimal_alpha(text)?;
                if digits < MIN_ALPHA_DIGITS {
                    return Err(SystemError::AlphaTooImprecise {
                        got: digits,
                        need: MIN_ALPHA_DIGITS,
                    });
                }
                value
            }
            AlphaSpec::ContinuedFraction(quotients) => {
                continued_fraction_value(quotients).ok_or(SystemError::BadContinuedFraction)?
            }
        };
        if !alpha_rat.is_positive() || alpha_rat >= BigRational::from_integer(1.into()) {
            return Err(SystemError::AlphaOutOfRange);
        }
        let alpha_fp = UnitFixed::from_rational(&alpha_rat).ok_or(SystemError::AlphaOutOfRange)?;
        let mut fixed_steps = Vec::with_capacity(steps.len());
        for (lo, hi, coeff) in steps {
            let iv = UnitInterval::from_rationals(lo, hi).ok_or(SystemError::BadStepInterval)?;
            fixed_steps.push((iv, *coeff));
        }
        Ok(RotationSystem {
            alpha_fp,
            alpha: alpha_rat,
            steps: fixed_steps,
            trig: trig
                .iter()
                .map(|&(freq, c, s)| TrigTerm {
                    freq,
                    cos_coeff: c,
                    sin_coeff: s,
                })
                .collect(),
        })
    }

    pub fn alpha(&self) -> &BigRational {
        &self.alpha
    }

    pub fn alpha_fixed(&self) -> UnitFixed {
        self.alpha_fp
    }

    /// Orbit point `T^i x0 = x0 + i*alpha mod 1`.
    pub fn point_at(&self, start: UnitFixed, i: usize) -> UnitFixed {
        start.rotate_n(self.alpha_fp, i as u128)
    }

    /// Observable at a point.
    pub fn eval(&self, pos: UnitFixed) -> f64 {
        let mut v = 0.0;
        for (iv, coeff) in &self.steps {
            if iv.contains(pos) {
                v += coeff;
            }
        }
        if !self.trig.is_empty() {
            let x = pos.to_f64();
            for t in &self.trig {
                let angle = std::f64::consts::TAU * t.freq as f64 * x;
                v += t.cos_coeff * angle.cos() + t.sin_coeff * angle.sin();
            }
        }
        v
    }

    /// Space average of the observable (trig terms integrate to zero).
    pub fn integral(&self) -> f64 {
        self.steps
            .iter()
            .map(|(iv, coeff)| coeff * Scalar::to_f64(&iv.length()))
            .sum()
    }

    pub fn window(
        &self,
        start: UnitFixed,
        width: usize,
        margin: usize,
    ) -> Result<OrbitWindow<f64>, SystemError> {
        check_window_shape(width, margin)?;
        let mut fvals = Vec::with_capacity(width);
        let mut pos = start;
        for _ in 0..width {
            fvals.push(self.eval(pos));
            pos = pos.rotate(self.alpha_fp);
        }
        Ok(OrbitWindow {
            fvals,
            margin,
            meta: WindowMeta {
                system: "rotation".to_string(),
                start: format!("{:032x}", start.0),
                seed: None,
            },
        })
    }
}

/// Parse `"0.ddd..."`; returns the exact rational and the count of
/// significant digits supplied.
fn parse_decimal_alpha(text: &str) -> Result<(BigRational, usize), SystemError> {
    let bad = || SystemError::BadDecimal(text.to_string());
    let rest = text.strip_prefix("0.").ok_or_else(bad)?;
    if rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let digits = rest.trim_start_matches('0').len();
    let numer: num_bigint::BigInt = rest.parse().map_err(|_| bad())?;
    let denom = num_bigint::BigInt::from(10u8).pow(rest.len() as u32);
    Ok((BigRational::new(numer, denom), digits))
}

// ---------------------------------------------------------------------------
// Bernoulli shifts
// ---------------------------------------------------------------------------

/// The 0/1 coordinate shift with success probability `p`. The bi-infinite
/// coordinate sequence of a point is a pure function of (seed, coordinate
/// index), so shifting the point shifts the index — the action is
/// shift-invariant by construction.
#[derive(Clone, Copy, Debug)]
pub struct BernoulliSystem {
    p: f64,
}

impl BernoulliSystem {
    pub fn new(p: f64) -> Result<Self, SystemError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(SystemError::ProbabilityOutOfRange(p));
        }
        Ok(BernoulliSystem { p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Coordinate `index` of the point identified by `seed`.
    pub fn coordinate(&self, seed: u64, index: u64) -> f64 {
        if rng::unit_f64(seed, index) < self.p {
            1.0
        } else {
            0.0
        }
    }

    pub fn integral(&self) -> f64 {
        self.p
    }

    /// Window of the orbit of point `seed`, starting at coordinate `offset`.
    pub fn window(
        &self,
        seed: u64,
        offset: u64,
        width: usize,
        margin: usize,
    ) -> Result<OrbitWindow<f64>, SystemError> {
        check_window_shape(width, margin)?;
        let fvals = (0..width as u64)
            .map(|i| self.coordinate(seed, offset + i))
            .collect();
        Ok(OrbitWindow {
            fvals,
            margin,
            meta: WindowMeta {
                system: format!("bernoulli(p={})", self.p),
                start: format!("offset {offset}"),
                seed: Some(seed),
            },
        })
    }
}

// ---------------------------------------------------------------------------
// The model wrapper
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub enum SystemModel {
    Finite(FiniteSystem),
    Rotation(RotationSystem),
    Bernoulli(BernoulliSystem),
}

/// Validate a spec into a model.
pub fn build_system(spec: &SystemSpec) -> Result<SystemModel, SystemError> {
    match spec {
        SystemSpec::Finite {
            cycles,
            weights,
            fvals,
        } => Ok(SystemModel::Finite(FiniteSystem::new(
            cycles.clone(),
            weights.clone(),
            fvals.clone(),
        )?)),
        SystemSpec::Rotation { alpha, steps, trig } => Ok(SystemModel::Rotation(
            RotationSystem::new(alpha, steps, trig)?,
        )),
        SystemSpec::Bernoulli { p } => Ok(SystemModel::Bernoulli(BernoulliSystem::new(*p)?)),
    }
}

impl SystemModel {
    pub fn kind(&self) -> &'static str {
        match self {
            SystemModel::Finite(_) => "finite",
            SystemModel::Rotation(_) => "rotation",
            SystemModel::Bernoulli(_) => "bernoulli",
        }
    }

    pub fn as_finite(&self) -> Result<&FiniteSystem, SystemError> {
        match self {
            SystemModel::Finite(s) => Ok(s),
            _ => Err(SystemError::NotFinite),
        }
    }

    /// Space average of the observable, as binary64.
    pub fn integral_f64(&self) -> f64 {
        match self {
            SystemModel::Finite(s) => s.integral().to_f64(),
            SystemModel::Rotation(s) => s.integral(),
            SystemModel::Bernoulli(s) => s.integral(),
        }
    }
}

/// Where a sampled window starts.
#[derive(Clone, Debug)]
pub enum WindowStart {
    /// Finite systems: a point id.
    Point(usize),
    /// Rotations: an angle in [0, 1).
    Angle(BigRational),
    /// Bernoulli: the orbit of `seed`, read from coordinate `offset`.
    Stream { seed: u64, offset: u64 },
}

impl SystemModel {
    /// Build a binary64 window; dispatches on the model family.
    pub fn sampled_window(
        &self,
        start: &WindowStart,
        width: usize,
        margin: usize,
    ) -> Result<OrbitWindow<f64>, SystemError> {
        match (self, start) {
            (SystemModel::Finite(s), WindowStart::Point(p)) => s.window_f64(*p, width, margin),
            (SystemModel::Rotation(s), WindowStart::Angle(a)) => {
                let fp = UnitFixed::from_rational(a).ok_or(SystemError::AlphaOutOfRange)?;
                s.window(fp, width, margin)
            }
            (SystemModel::Bernoulli(s), WindowStart::Stream { seed, offset }) => {
                s.window(*seed, *offset, width, margin)
            }
            _ => Err(SystemError::StartOutOfRange(usize::MAX)),
        }
    }

    /// A deterministic pseudo-random start for the `index`-th run.
    pub fn random_start(&self, seed: u64, index: u64) -> WindowStart {
        match self {
            SystemModel::Finite(s) => {
                let n = s.point_count() as u64;
                WindowStart::Point((rng::draw(rng::derive(seed, index), 0) % n) as usize)
            }
            SystemModel::Rotation(_) => {
                let child = rng::derive(seed, index);
                let hi = rng::draw(child, 0) as u128;
                let lo = rng::draw(child, 1) as u128;
                let fp = UnitFixed((hi << 64) | lo);
                WindowStart::Angle(fp.to_rational())
            }
            SystemModel::Bernoulli(_) => WindowStart::Stream {
                seed: rng::derive(seed, index),
                offset: 0,
            },
        }
    }
}

// ---------------------------------------------------------------------------
// Windows and index intervals
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WindowMeta {
    pub system: String,
    pub start: String,
    pub seed: Option<u64>,
}

/// A finite contiguous orbit segment with observable values.
///
/// Index `i` represents the orbit point `T^i x0`. Indices in
/// `[margin, width - margin)` are *interior*: they have `margin` steps of
/// context on each side inside the window.
#[derive(Clone, Debug)]
pub struct OrbitWindow<V> {
    fvals: Vec<V>,
    margin: usize,
    meta: WindowMeta,
}

impl<V: Scalar> OrbitWindow<V> {
    pub fn width(&self) -> usize {
        self.fvals.len()
    }

    pub fn margin(&self) -> usize {
        self.margin
    }

    pub fn meta(&self) -> &WindowMeta {
        &self.meta
    }

    pub fn fvals(&self) -> &[V] {
        &self.fvals
    }

    pub fn fval(&self, i: usize) -> &V {
        &self.fvals[i]
    }

    /// Indices with `margin` steps of context on both sides.
    pub fn interior(&self) -> std::ops::Range<usize> {
        self.margin..self.width() - self.margin
    }

    /// Same window with a different margin (bookkeeping only; the orbit
    /// segment and values are unchanged).
    pub fn with_margin(&self, margin: usize) -> Result<OrbitWindow<V>, SystemError> {
        check_window_shape(self.width(), margin)?;
        Ok(OrbitWindow {
            fvals: self.fvals.clone(),
            margin,
            meta: self.meta.clone(),
        })
    }

    /// Value-mapped copy (used for exact -> float conversion).
    pub fn map<W: Scalar>(&self, f: impl Fn(&V) -> W) -> OrbitWindow<W> {
        OrbitWindow {
            fvals: self.fvals.iter().map(f).collect(),
            margin: self.margin,
            meta: self.meta.clone(),
        }
    }

    /// The sign-flipped window used by the mirrored (lower-threshold) chain.
    pub fn negated(&self) -> OrbitWindow<V> {
        self.map(|v| -v.clone())
    }

    /// CSV dump, `index,fval`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,fval\n");
        for (i, v) in self.fvals.iter().enumerate() {
            out.push_str(&format!("{i},{v}\n"));
        }
        out
    }

    /// Assemble a window from raw parts (tests and plan oracles).
    pub fn from_values(fvals: Vec<V>, margin: usize) -> Result<OrbitWindow<V>, SystemError> {
        check_window_shape(fvals.len(), margin)?;
        Ok(OrbitWindow {
            fvals,
            margin,
            meta: WindowMeta {
                system: "raw".to_string(),
                start: "0".to_string(),
                seed: None,
            },
        })
    }
}

fn check_window_shape(width: usize, margin: usize) -> Result<(), SystemError> {
    if width == 0 {
        return Err(SystemError::ZeroWidth);
    }
    if width > MAX_WINDOW_WIDTH {
        return Err(SystemError::WidthOverBudget(width));
    }
    if margin > width / 2 {
        return Err(SystemError::MarginTooLarge {
            margin,
            half: width / 2,
        });
    }
    Ok(())
}

/// Half-open index interval `[lo, hi)` within a window; stands for the
/// orbit segment `[T^lo x0, T^hi x0)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IntervalRef {
    pub lo: usize,
    pub hi: usize,
}

impl IntervalRef {
    pub fn new(lo: usize, hi: usize, width: usize) -> Result<Self, SystemError> {
        if lo > hi || hi > width {
            return Err(SystemError::IntervalOutOfBounds { lo, hi, width });
        }
        Ok(IntervalRef { lo, hi })
    }

    pub fn len(&self) -> usize {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.lo == self.hi
    }

    pub fn indices(&self) -> std::ops::Range<usize> {
        self.lo..self.hi
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn four_cycle() -> FiniteSystem {
        FiniteSystem::new(
            vec![vec![0, 1, 2, 3]],
            WeightSpec::Uniform,
            vec![rat(1, 1), rat(0, 1), rat(0, 1), rat(0, 1)],
        )
        .unwrap()
    }

    fn golden() -> RotationSystem {
        RotationSystem::new(
            &AlphaSpec::ContinuedFraction(vec![1; 64]),
            &[(rat(0, 1), rat(1, 2), 1.0)],
            &[],
        )
        .unwrap()
    }

    #[test]
    fn uniform_four_cycle_measure() {
        let s = four_cycle();
        for p in 0..4 {
            assert_eq!(*s.weight(p), rat(1, 4));
        }
        assert_eq!(s.integral(), rat(1, 4));
    }

    #[test]
    fn golden_rotation_spec_is_valid() {
        let s = golden();
        let a = s.alpha().to_f64();
        assert!((a - 0.6180339887498949).abs() < 1e-15);
    }

    #[test]
    fn nonconstant_cycle_weights_rejected() {
        // mu(T^-1 {p}) = mu({p}) fails on a 3-cycle with weights 1/2,1/4,1/4
        let err = FiniteSystem::new(
            vec![vec![0, 1, 2]],
            WeightSpec::Explicit(vec![rat(1, 2), rat(1, 4), rat(1, 4)]),
            vec![rat(0, 1); 3],
        )
        .unwrap_err();
        assert!(matches!(err, SystemError::NotMeasurePreserving { cycle: 0 }));
    }

    #[test]
    fn weights_must_sum_to_one() {
        let err = FiniteSystem::new(
            vec![vec![0, 1]],
            WeightSpec::Explicit(vec![rat(1, 2), rat(1, 4)]),
            vec![rat(0, 1); 2],
        )
        .unwrap_err();
        assert!(matches!(err, SystemError::WeightsDoNotSumToOne { .. }));
    }

    #[test]
    fn empty_cycle_rejected() {
        let err = FiniteSystem::new(
            vec![vec![0, 1], vec![]],
            WeightSpec::Uniform,
            vec![rat(0, 1); 2],
        )
        .unwrap_err();
        assert!(matches!(err, SystemError::EmptyCycle(1)));
    }

    #[test]
    fn four_cycle_window_repeats_with_period_four() {
        let s = four_cycle();
        let w = s.window(0, 8, 0).unwrap();
        let got: Vec<i64> = w
            .fvals()
            .iter()
            .map(|v| if v.is_one() { 1 } else { 0 })
            .collect();
        assert_eq!(got, vec![1, 0, 0, 0, 1, 0, 0, 0]);
    }

    #[test]
    fn golden_first_five_values() {
        // orbit points approx 0, .618, .236, .854, .472 against [0, 1/2)
        let s = golden();
        let w = s.window(UnitFixed::ZERO, 5, 0).unwrap();
        assert_eq!(w.fvals(), &[1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn degenerate_coin_is_all_ones() {
        let s = BernoulliSystem::new(1.0).unwrap();
        let w = s.window(12345, 0, 6, 0).unwrap();
        assert_eq!(w.fvals(), &[1.0; 6]);
    }

    #[test]
    fn shifting_the_start_shifts_the_window() {
        // suffix of a window equals the window of the shifted start
        let s = four_cycle();
        let w = s.window(1, 9, 0).unwrap();
        for k in 0..9usize {
            let shifted = s.window(s.point_at(1, k), 9 - k, 0).unwrap();
            assert_eq!(&w.fvals()[k..], shifted.fvals());
        }

        let r = golden();
        let x0 = UnitFixed::from_rational(&rat(1, 3)).unwrap();
        let w = r.window(x0, 50, 0).unwrap();
        for k in [1usize, 7, 49] {
            let shifted = r.window(r.point_at(x0, k), 50 - k, 0).unwrap();
            assert_eq!(&w.fvals()[k..], shifted.fvals());
        }

        let b = BernoulliSystem::new(0.4).unwrap();
        let w = b.window(99, 0, 40, 0).unwrap();
        for k in [1u64, 13, 39] {
            let shifted = b.window(99, k, 40 - k as usize, 0).unwrap();
            assert_eq!(&w.fvals()[k as usize..], shifted.fvals());
        }
    }

    #[test]
    fn preimage_measure_equals_measure_on_singletons() {
        // exact measure preservation: mu(T^-1 {p}) = mu({p}) for every point
        let s = FiniteSystem::new(
            vec![vec![0, 2, 4], vec![1, 3]],
            WeightSpec::Explicit(vec![
                rat(1, 6),
                rat(1, 4),
                rat(1, 6),
                rat(1, 4),
                rat(1, 6),
            ]),
            vec![rat(0, 1); 5],
        )
        .unwrap();
        for p in 0..5 {
            let pre = s.apply_inverse(p);
            assert_eq!(s.weight(pre), s.weight(p));
            assert_eq!(s.apply(pre), p);
        }
    }

    #[test]
    fn alpha_precision_is_enforced() {
        let short = RotationSystem::new(
            &AlphaSpec::Decimal("0.618".into()),
            &[(rat(0, 1), rat(1, 2), 1.0)],
            &[],
        );
        assert!(matches!(
            short.unwrap_err(),
            SystemError::AlphaTooImprecise { got: 3, .. }
        ));
        let ok = RotationSystem::new(
            &AlphaSpec::Decimal("0.618033988749894848204586834366".into()),
            &[(rat(0, 1), rat(1, 2), 1.0)],
            &[],
        );
        assert!(ok.is_ok());
    }

    #[test]
    fn window_determinism_is_byte_exact() {
        let s = golden();
        let a = s.window(UnitFixed::ZERO, 64, 8).unwrap().to_csv();
        let b = s.window(UnitFixed::ZERO, 64, 8).unwrap().to_csv();
        assert_eq!(a, b);
    }

    #[test]
    fn margin_over_half_width_rejected() {
        let s = four_cycle();
        assert!(matches!(
            s.window(0, 8, 5).unwrap_err(),
            SystemError::MarginTooLarge { .. }
        ));
    }
}
