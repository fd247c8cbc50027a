//! Tile-length plans, greedy interval tilings, and the partial finite
//! equivalence relation they generate over a marker section.
//!
//! Each interior index `i` gets a tile length: the *largest* `n <= horizon`
//! whose segment average meets the threshold, or 1 (with the index flagged
//! as failing) when no such `n` exists. An interval is *tiled* when the
//! greedy walk that repeatedly lays down the tile of its left endpoint
//! lands exactly on the right endpoint; such a partition is the only one
//! possible, because any partition into tiles of this shape must use the
//! tile of the leftmost uncovered point at every step.
//!
//! Classes of the partial equivalence are the tiles `[z, z + len(z))` of
//! witnesses `z` that are outside the section's lead-in set and whose
//! stretch back to the nearest left marker is tiled. Witnesses in the
//! lead-in are skipped, which is exactly what keeps classes from different
//! marker segments disjoint: a tile that would reach past the next marker
//! has its witness within `horizon` of that marker.

use thiserror::Error;

use crate::averages::FiniteEquivalence;
use crate::sections::SectionSet;
use crate::systems::{IntervalRef, OrbitWindow};
use crate::value::{meets_threshold, sum_values, Scalar};

/// Exhaustive tiling enumeration is bounded to intervals of this length.
pub const ORACLE_MAX_LEN: usize = 20;

#[derive(Debug, Error)]
pub enum TilingError {
    #[error("horizon must be >= 1")]
    HorizonZero,
    #[error("horizon {horizon} exceeds window margin {margin}")]
    HorizonOverMargin { horizon: usize, margin: usize },
    #[error("index {0} is outside the window interior")]
    OutsideInterior(usize),
    #[error("exhaustive enumeration limited to length {ORACLE_MAX_LEN}, got {0}")]
    IntervalTooLong(usize),
    #[error("plan horizon {plan} does not match section horizon {section}")]
    HorizonMismatch { plan: usize, section: usize },
    #[error("plan width {plan} does not match section width {section}")]
    WidthMismatch { plan: usize, section: usize },
    #[error("classes {a:?} and {b:?} overlap without being equal")]
    OverlappingClasses { a: IntervalRef, b: IntervalRef },
}

// ---------------------------------------------------------------------------
// Tile-length plans
// ---------------------------------------------------------------------------

/// Tile lengths and the threshold-fail set for one window.
#[derive(Clone, Debug)]
pub struct TilingPlan<V> {
    horizon: usize,
    threshold: V,
    /// length per index; 0 outside the interior
    lengths: Vec<u32>,
    /// true where no segment length up to the horizon meets the threshold
    fail: Vec<bool>,
    interior: std::ops::Range<usize>,
}

impl<V: Scalar> TilingPlan<V> {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn threshold(&self) -> &V {
        &self.threshold
    }

    pub fn interior(&self) -> std::ops::Range<usize> {
        self.interior.clone()
    }

    /// Tile length at an interior index.
    pub fn tile_len(&self, i: usize) -> Option<usize> {
        if self.interior.contains(&i) {
            Some(self.lengths[i] as usize)
        } else {
            None
        }
    }

    /// Whether `i` is in the threshold-fail set.
    pub fn is_fail(&self, i: usize) -> bool {
        self.interior.contains(&i) && self.fail[i]
    }

    pub fn fail_count(&self) -> usize {
        self.interior.clone().filter(|&i| self.fail[i]).count()
    }

    /// Assemble a plan from raw lengths (oracle and property tests).
    pub fn from_lengths(
        lengths: Vec<u32>,
        horizon: usize,
        interior: std::ops::Range<usize>,
        threshold: V,
    ) -> Result<Self, TilingError> {
        if horizon == 0 {
            return Err(TilingError::HorizonZero);
        }
        for i in interior.clone() {
            let l = lengths[i] as usize;
            if l < 1 || l > horizon {
                return Err(TilingError::OutsideInterior(i));
            }
        }
        let fail = vec![false; lengths.len()];
        Ok(TilingPlan {
            horizon,
            threshold,
            lengths,
            fail,
            interior,
        })
    }
}

/// Compute the tile length at every interior index: the largest segment
/// length up to `horizon` whose average meets `threshold` (the canonical
/// comparison of [`meets_threshold`]), with fallback length 1 at failing
/// indices.
pub fn build_tiling_plan<V: Scalar>(
    window: &OrbitWindow<V>,
    horizon: usize,
    threshold: V,
) -> Result<TilingPlan<V>, TilingError> {
    if horizon == 0 {
        return Err(TilingError::HorizonZero);
    }
    if horizon > window.margin() {
        return Err(TilingError::HorizonOverMargin {
            horizon,
            margin: window.margin(),
        });
    }
    let width = window.width();
    let fvals = window.fvals();
    let mut lengths = vec![0u32; width];
    let mut fail = vec![false; width];
    for i in window.interior() {
        // running left-to-right sum: identical to meets_threshold at each n
        let mut sum = V::zero();
        let mut best = 0usize;
        for n in 1..=horizon {
            sum = sum + fvals[i + n - 1].clone();
            if sum >= threshold.clone() * V::from_usize(n) {
                best = n;
            }
        }
        if best == 0 {
            lengths[i] = 1;
            fail[i] = true;
        } else {
            lengths[i] = best as u32;
        }
    }
    Ok(TilingPlan {
        horizon,
        threshold,
        lengths,
        fail,
        interior: window.interior(),
    })
}

// ---------------------------------------------------------------------------
// Greedy tilings
// ---------------------------------------------------------------------------

/// A partition of an interval into plan tiles, in orbit order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tiling {
    pub interval: IntervalRef,
    pub tiles: Vec<IntervalRef>,
}

impl Tiling {
    /// CSV rows `status,lo,hi,witness`; an untileable interval serializes
    /// as a single `not_tiled` row.
    pub fn to_csv(outcome: &GreedyOutcome) -> String {
        let mut out = String::from("status,lo,hi,witness\n");
        match outcome {
            GreedyOutcome::Tiled(t) => {
                for tile in &t.tiles {
                    out.push_str(&format!("tile,{},{},{}\n", tile.lo, tile.hi, tile.lo));
                }
            }
            GreedyOutcome::NotTiled => out.push_str("not_tiled,0,0,0\n"),
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GreedyOutcome {
    Tiled(Tiling),
    NotTiled,
}

impl GreedyOutcome {
    pub fn is_tiled(&self) -> bool {
        matches!(self, GreedyOutcome::Tiled(_))
    }
}

/// Walk tiles from the left endpoint; the interval is tiled iff the walk
/// lands exactly on the right endpoint. The empty interval is tiled by the
/// empty partition.
pub fn greedy_tile<V: Scalar>(
    plan: &TilingPlan<V>,
    interval: IntervalRef,
) -> Result<GreedyOutcome, TilingError> {
    let mut tiles = Vec::new();
    let mut pos = interval.lo;
    while pos < interval.hi {
        let len = plan.tile_len(pos).ok_or(TilingError::OutsideInterior(pos))?;
        if pos + len > interval.hi {
            return Ok(GreedyOutcome::NotTiled);
        }
        tiles.push(IntervalRef {
            lo: pos,
            hi: pos + len,
        });
        pos += len;
    }
    Ok(GreedyOutcome::Tiled(Tiling { interval, tiles }))
}

/// Enumerate *all* partitions of `interval` into plan tiles by backtracking
/// over every admissible tile at the leftmost uncovered position. Serves as
/// the independent check that the greedy result is the only one.
pub fn tiling_uniqueness_oracle<V: Scalar>(
    plan: &TilingPlan<V>,
    interval: IntervalRef,
) -> Result<Vec<Tiling>, TilingError> {
    if interval.len() > ORACLE_MAX_LEN {
        return Err(TilingError::IntervalTooLong(interval.len()));
    }
    for i in interval.indices() {
        if plan.tile_len(i).is_none() {
            return Err(TilingError::OutsideInterior(i));
        }
    }
    let mut covered = vec![false; interval.len()];
    let mut chosen: Vec<IntervalRef> = Vec::new();
    let mut found: Vec<Tiling> = Vec::new();

    fn recurse<V: Scalar>(
        plan: &TilingPlan<V>,
        interval: IntervalRef,
        covered: &mut Vec<bool>,
        chosen: &mut Vec<IntervalRef>,
        found: &mut Vec<Tiling>,
    ) {
        let first_uncovered = match covered.iter().position(|&c| !c) {
            None => {
                let mut tiles = chosen.clone();
                tiles.sort();
                found.push(Tiling { interval, tiles });
                return;
            }
            Some(off) => interval.lo + off,
        };
        // any tile of the plan's shape that contains the point and fits
        for x in interval.lo..interval.hi {
            let len = plan.tile_len(x).expect("checked interior");
            let tile = IntervalRef { lo: x, hi: x + len };
            if !(tile.lo <= first_uncovered && first_uncovered < tile.hi) {
                continue;
            }
            if tile.hi > interval.hi {
                continue;
            }
            if tile.indices().any(|j| covered[j - interval.lo]) {
                continue;
            }
            for j in tile.indices() {
                covered[j - interval.lo] = true;
            }
            chosen.push(tile);
            recurse(plan, interval, covered, chosen, found);
            chosen.pop();
            for j in tile.indices() {
                covered[j - interval.lo] = false;
            }
        }
    }

    recurse(plan, interval, &mut covered, &mut chosen, &mut found);
    Ok(found)
}

// ---------------------------------------------------------------------------
// The partial finite equivalence relation
// ---------------------------------------------------------------------------

/// Which witnesses generate classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WitnessPolicy {
    /// Witnesses outside the lead-in set (threshold-fail witnesses allowed;
    /// their classes are unit tiles).
    OutsideLeadIn,
    /// Additionally exclude threshold-fail witnesses, so every class
    /// average meets the threshold. The verification chain uses this.
    OutsideLeadInAndFail,
}

/// The relation as a list of disjoint classes (tiles) with their witnesses.
#[derive(Clone, Debug)]
pub struct PartialEquivalence {
    classes: Vec<IntervalRef>,
    witnesses: Vec<usize>,
    fail_witness: Vec<bool>,
    in_domain: Vec<bool>,
    domain_size: usize,
    working: std::ops::Range<usize>,
}

impl PartialEquivalence {
    pub fn classes(&self) -> &[IntervalRef] {
        &self.classes
    }

    pub fn witnesses(&self) -> &[usize] {
        &self.witnesses
    }

    /// True when the class's witness is in the threshold-fail set.
    pub fn is_fail_witness(&self, class_idx: usize) -> bool {
        self.fail_witness[class_idx]
    }

    /// The working region: indices with a marker at or to their left and
    /// full tile context to their right.
    pub fn working(&self) -> std::ops::Range<usize> {
        self.working.clone()
    }

    pub fn working_size(&self) -> usize {
        self.working.len()
    }

    #[inline]
    pub fn in_domain(&self, x: usize) -> bool {
        self.in_domain[x]
    }

    pub fn domain_size(&self) -> usize {
        self.domain_size
    }

    /// Expand into an explicit equivalence relation on window indices.
    pub fn to_finite_equivalence(&self) -> FiniteEquivalence {
        FiniteEquivalence::new(
            self.classes
                .iter()
                .map(|c| c.indices().collect())
                .collect(),
        )
        .expect("classes are disjoint")
    }

    /// CSV rows `lo,hi,witness`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lo,hi,witness\n");
        for (c, w) in self.classes.iter().zip(&self.witnesses) {
            out.push_str(&format!("{},{},{w}\n", c.lo, c.hi));
        }
        out
    }
}

/// Build the relation over `section`: walk tiles from each marker to the
/// next; every walk point outside the lead-in set (and, per policy, outside
/// the fail set) generates its tile as a class. Walk points are exactly the
/// indices `z` whose stretch `[left_marker(z), z)` is tiled, so this agrees
/// with testing `greedy_tile` per candidate, at linear cost.
pub fn build_partial_equivalence<V: Scalar>(
    window: &OrbitWindow<V>,
    plan: &TilingPlan<V>,
    section: &SectionSet,
    policy: WitnessPolicy,
) -> Result<PartialEquivalence, TilingError> {
    if plan.horizon() != section.horizon() {
        return Err(TilingError::HorizonMismatch {
            plan: plan.horizon(),
            section: section.horizon(),
        });
    }
    if window.width() != section.width() {
        return Err(TilingError::WidthMismatch {
            plan: window.width(),
            section: section.width(),
        });
    }
    let width = window.width();
    let interior_end = window.width() - window.margin();
    let working_end = interior_end.saturating_sub(plan.horizon());
    let working = match section.first_marker() {
        Some(first) if first < working_end => first..working_end,
        _ => 0..0,
    };

    let mut classes = Vec::new();
    let mut witnesses = Vec::new();
    let mut fail_witness = Vec::new();
    if !working.is_empty() {
        let markers = section.markers();
        for (k, &marker) in markers.iter().enumerate() {
            if marker >= working.end {
                break;
            }
            let segment_end = markers
                .get(k + 1)
                .copied()
                .unwrap_or(working.end)
                .min(working.end);
            let mut pos = marker;
            while pos < segment_end {
                let len = plan.tile_len(pos).ok_or(TilingError::OutsideInterior(pos))?;
                let keep = !section.in_lead_in(pos)
                    && (policy == WitnessPolicy::OutsideLeadIn || !plan.is_fail(pos));
                if keep {
                    classes.push(IntervalRef {
                        lo: pos,
                        hi: pos + len,
                    });
                    witnesses.push(pos);
                    fail_witness.push(plan.is_fail(pos));
                }
                pos += len;
            }
        }
    }

    // distinct witnesses must generate non-overlapping classes
    let mut in_domain = vec![false; width];
    let mut domain_size = 0;
    for (ci, class) in classes.iter().enumerate() {
        if ci > 0 && classes[ci - 1].hi > class.lo {
            return Err(TilingError::OverlappingClasses {
                a: classes[ci - 1],
                b: *class,
            });
        }
        for x in class.indices() {
            in_domain[x] = true;
            domain_size += 1;
        }
    }

    Ok(PartialEquivalence {
        classes,
        witnesses,
        fail_witness,
        in_domain,
        domain_size,
        working,
    })
}

// ---------------------------------------------------------------------------
// Coverage and class-average checks
// ---------------------------------------------------------------------------

/// Outcome of the coverage inclusion `domain >= working \ (lead-in, fail)`,
/// with the empirical masses of everything excluded.
#[derive(Clone, Debug)]
pub struct CoverageReport {
    pub holds: bool,
    pub working_size: usize,
    pub uncovered_count: usize,
    /// sample of uncovered indices (capped)
    pub uncovered_sample: Vec<usize>,
    pub lead_in_count: usize,
    pub fail_count: usize,
    /// width of the right-context exclusion zone beyond the working region
    pub boundary_count: usize,
    pub domain_size: usize,
    /// |working \ domain| / |working|
    pub excluded_mass: f64,
    /// sum of |f| over working \ domain, divided by |working|
    pub excluded_fmass: f64,
}

/// Assert the coverage inclusion and measure what is excluded.
pub fn coverage_check<V: Scalar>(
    relation: &PartialEquivalence,
    plan: &TilingPlan<V>,
    section: &SectionSet,
    window: &OrbitWindow<V>,
) -> CoverageReport {
    let working = relation.working();
    let working_size = working.len();
    let mut uncovered_count = 0;
    let mut uncovered_sample = Vec::new();
    let mut lead_in_count = 0;
    let mut fail_count = 0;
    let mut excluded = 0usize;
    let mut excluded_fsum = 0.0f64;
    for x in working.clone() {
        if section.in_lead_in(x) {
            lead_in_count += 1;
        }
        if plan.is_fail(x) {
            fail_count += 1;
        }
        if !relation.in_domain(x) {
            excluded += 1;
            excluded_fsum += window.fval(x).to_f64().abs();
            if !section.in_lead_in(x) && !plan.is_fail(x) {
                uncovered_count += 1;
                if uncovered_sample.len() < 16 {
                    uncovered_sample.push(x);
                }
            }
        }
    }
    let denom = working_size.max(1) as f64;
    CoverageReport {
        holds: uncovered_count == 0,
        working_size,
        uncovered_count,
        uncovered_sample,
        lead_in_count,
        fail_count,
        boundary_count: if working_size > 0 { plan.horizon() } else { 0 },
        domain_size: relation.domain_size(),
        excluded_mass: excluded as f64 / denom,
        excluded_fmass: excluded_fsum / denom,
    }
}

/// Minimum class average over classes whose witness is outside the fail
/// set, asserted against the threshold with the canonical comparison.
#[derive(Clone, Debug)]
pub struct ClassBound<V> {
    pub min_average: Option<V>,
    pub argmin: Option<IntervalRef>,
    pub asserted_classes: usize,
    pub skipped_fail_witnesses: usize,
    /// True when every asserted class meets the threshold; vacuously true
    /// when there is nothing to assert.
    pub holds: bool,
}

pub fn class_average_bound<V: Scalar>(
    relation: &PartialEquivalence,
    window: &OrbitWindow<V>,
    threshold: &V,
) -> ClassBound<V> {
    let fvals = window.fvals();
    let mut min_average: Option<V> = None;
    let mut argmin = None;
    let mut asserted = 0usize;
    let mut skipped = 0usize;
    let mut holds = true;
    for (ci, class) in relation.classes().iter().enumerate() {
        if relation.is_fail_witness(ci) {
            skipped += 1;
            continue;
        }
        asserted += 1;
        if !meets_threshold(fvals, class.lo, class.len(), threshold) {
            holds = false;
        }
        let avg = sum_values(&fvals[class.lo..class.hi]).div_by(class.len());
        let smaller = match &min_average {
            None => true,
            Some(m) => avg < *m,
        };
        if smaller {
            min_average = Some(avg);
            argmin = Some(*class);
        }
    }
    ClassBound {
        min_average,
        argmin,
        asserted_classes: asserted,
        skipped_fail_witnesses: skipped,
        holds,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::averages::birkhoff_average;
    use crate::rng::SplitMix64;
    use crate::sections::{generate_candidate_section, sparsify, left_marker};
    use crate::systems::{FiniteSystem, OrbitWindow, WeightSpec};
    use num_rational::BigRational;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn const_window(value: f64, width: usize, margin: usize) -> OrbitWindow<f64> {
        OrbitWindow::from_values(vec![value; width], margin).unwrap()
    }

    fn uniform_plan(len: u32, horizon: usize, width: usize, margin: usize) -> TilingPlan<f64> {
        TilingPlan::from_lengths(
            vec![len; width],
            horizon,
            margin..width - margin,
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn constant_at_threshold_gives_max_lengths_everywhere() {
        let w = const_window(0.5, 64, 8);
        let plan = build_tiling_plan(&w, 8, 0.5).unwrap();
        for i in w.interior() {
            assert_eq!(plan.tile_len(i), Some(8));
            assert!(!plan.is_fail(i));
        }
    }

    #[test]
    fn constant_below_threshold_fails_everywhere() {
        let w = const_window(-0.5, 64, 8);
        let plan = build_tiling_plan(&w, 8, 0.5).unwrap();
        for i in w.interior() {
            assert_eq!(plan.tile_len(i), Some(1));
            assert!(plan.is_fail(i));
        }
        assert_eq!(plan.fail_count(), w.interior().len());
    }

    #[test]
    fn six_cycle_prefix_averages_pick_largest() {
        // values 1,0,1,0,0,0 around a 6-cycle; at the cycle start the
        // prefix averages are 1, 1/2, 2/3 for n = 1..3
        let s = FiniteSystem::new(
            vec![vec![0, 1, 2, 3, 4, 5]],
            WeightSpec::Uniform,
            vec![
                rat(1, 1),
                rat(0, 1),
                rat(1, 1),
                rat(0, 1),
                rat(0, 1),
                rat(0, 1),
            ],
        )
        .unwrap();
        let w = s.window(0, 18, 3).unwrap();
        let plan = build_tiling_plan(&w, 3, rat(1, 2)).unwrap();
        // index 6 is the cycle start within the interior
        assert_eq!(birkhoff_average(&w, 6, 2).unwrap(), rat(1, 2));
        assert_eq!(birkhoff_average(&w, 6, 3).unwrap(), rat(2, 3));
        assert_eq!(plan.tile_len(6), Some(3));
        assert!(!plan.is_fail(6));
    }

    #[test]
    fn length_maximality_against_direct_averages() {
        let mut rng = SplitMix64::new(5);
        for _ in 0..50 {
            let width = 40;
            let margin = 5;
            let fvals: Vec<f64> = (0..width).map(|_| rng.next_f64()).collect();
            let w = OrbitWindow::from_values(fvals, margin).unwrap();
            let b = 0.5 + (rng.next_f64() - 0.5) * 0.2;
            let plan = build_tiling_plan(&w, 5, b).unwrap();
            for i in w.interior() {
                let l = plan.tile_len(i).unwrap();
                if plan.is_fail(i) {
                    assert_eq!(l, 1);
                    for n in 1..=5 {
                        assert!(!meets_threshold(w.fvals(), i, n, &b));
                    }
                } else {
                    assert!(meets_threshold(w.fvals(), i, l, &b));
                    for n in l + 1..=5 {
                        assert!(!meets_threshold(w.fvals(), i, n, &b));
                    }
                }
            }
        }
    }

    #[test]
    fn greedy_walks_match_expected_lengths() {
        let plan = uniform_plan(3, 3, 30, 3);
        let empty = IntervalRef { lo: 10, hi: 10 };
        assert_eq!(
            greedy_tile(&plan, empty).unwrap(),
            GreedyOutcome::Tiled(Tiling {
                interval: empty,
                tiles: vec![]
            })
        );

        let six = IntervalRef { lo: 6, hi: 12 };
        match greedy_tile(&plan, six).unwrap() {
            GreedyOutcome::Tiled(t) => {
                assert_eq!(
                    t.tiles,
                    vec![IntervalRef { lo: 6, hi: 9 }, IntervalRef { lo: 9, hi: 12 }]
                );
            }
            GreedyOutcome::NotTiled => panic!("length 6 should tile with unit-3 tiles"),
        }

        let seven = IntervalRef { lo: 6, hi: 13 };
        assert_eq!(greedy_tile(&plan, seven).unwrap(), GreedyOutcome::NotTiled);
    }

    #[test]
    fn oracle_finds_exactly_the_greedy_tiling() {
        let plan = uniform_plan(3, 3, 30, 3);
        let empty = IntervalRef { lo: 8, hi: 8 };
        assert_eq!(tiling_uniqueness_oracle(&plan, empty).unwrap().len(), 1);
        let seven = IntervalRef { lo: 6, hi: 13 };
        assert!(tiling_uniqueness_oracle(&plan, seven).unwrap().is_empty());
        let six = IntervalRef { lo: 6, hi: 12 };
        let all = tiling_uniqueness_oracle(&plan, six).unwrap();
        assert_eq!(all.len(), 1);
        match greedy_tile(&plan, six).unwrap() {
            GreedyOutcome::Tiled(t) => assert_eq!(all[0], t),
            GreedyOutcome::NotTiled => unreachable!(),
        }
    }

    #[test]
    fn oracle_agrees_with_greedy_on_random_plans() {
        let mut rng = SplitMix64::new(99);
        for _ in 0..300 {
            let width = 26;
            let margin = 3;
            let lengths: Vec<u32> = (0..width)
                .map(|_| 1 + rng.next_below(3) as u32)
                .collect();
            let plan =
                TilingPlan::from_lengths(lengths, 3, margin..width - margin, 0.0).unwrap();
            let lo = margin + rng.next_below(8) as usize;
            let len = rng.next_below(13) as usize;
            let interval = IntervalRef { lo, hi: lo + len };
            let all = tiling_uniqueness_oracle(&plan, interval).unwrap();
            assert!(all.len() <= 1, "tilings are unique");
            match greedy_tile(&plan, interval).unwrap() {
                GreedyOutcome::Tiled(t) => assert_eq!(all, vec![t]),
                GreedyOutcome::NotTiled => assert!(all.is_empty()),
            }
        }
    }

    #[test]
    fn greedy_prefixes_are_tiled() {
        let mut rng = SplitMix64::new(4);
        for _ in 0..100 {
            let width = 40;
            let margin = 4;
            let lengths: Vec<u32> = (0..width)
                .map(|_| 1 + rng.next_below(4) as u32)
                .collect();
            let plan =
                TilingPlan::from_lengths(lengths, 4, margin..width - margin, 0.0).unwrap();
            let lo = margin + rng.next_below(6) as usize;
            let hi = lo + rng.next_below(16) as usize;
            if let GreedyOutcome::Tiled(t) = greedy_tile(&plan, IntervalRef { lo, hi }).unwrap()
            {
                for tile in &t.tiles {
                    let prefix = IntervalRef { lo, hi: tile.lo };
                    assert!(greedy_tile(&plan, prefix).unwrap().is_tiled());
                }
            }
        }
    }

    // naive reference: test z by literally tiling [left_marker(z), z)
    fn naive_relation_witnesses<V: Scalar>(
        window: &OrbitWindow<V>,
        plan: &TilingPlan<V>,
        section: &SectionSet,
        policy: WitnessPolicy,
    ) -> Vec<usize> {
        let interior_end = window.width() - window.margin();
        let working_end = interior_end.saturating_sub(plan.horizon());
        let mut out = Vec::new();
        for z in 0..working_end {
            let Ok(s) = left_marker(section, z) else {
                continue;
            };
            if section.in_lead_in(z) {
                continue;
            }
            if policy == WitnessPolicy::OutsideLeadInAndFail && plan.is_fail(z) {
                continue;
            }
            let stretch = IntervalRef { lo: s, hi: z };
            if greedy_tile(plan, stretch).unwrap().is_tiled() {
                out.push(z);
            }
        }
        out
    }

    #[test]
    fn walk_builder_matches_naive_definition() {
        let mut rng = SplitMix64::new(31);
        for round in 0..40 {
            let width = 300;
            let margin = 8;
            let horizon = 4;
            let fvals: Vec<f64> = (0..width)
                .map(|_| if rng.next_f64() < 0.5 { 1.0 } else { 0.0 })
                .collect();
            let w = OrbitWindow::from_values(fvals, margin).unwrap();
            let plan = build_tiling_plan(&w, horizon, 0.45).unwrap();
            let s0 = generate_candidate_section(&w, 0.12, round).unwrap();
            let section = sparsify(&s0, horizon, width).unwrap();
            if section.is_empty() {
                continue;
            }
            for policy in [WitnessPolicy::OutsideLeadIn, WitnessPolicy::OutsideLeadInAndFail] {
                let pe = build_partial_equivalence(&w, &plan, &section, policy).unwrap();
                let naive = naive_relation_witnesses(&w, &plan, &section, policy);
                assert_eq!(pe.witnesses(), naive.as_slice(), "round {round}");
            }
        }
    }

    #[test]
    fn markers_always_witness_their_own_tile() {
        // the stretch [left_marker(z), z) at z = marker is empty, hence tiled
        let w = const_window(0.5, 120, 10);
        let plan = build_tiling_plan(&w, 5, 0.5).unwrap();
        let section = SectionSet::from_markers(vec![20, 40, 80], 5, 120).unwrap();
        let pe =
            build_partial_equivalence(&w, &plan, &section, WitnessPolicy::OutsideLeadIn).unwrap();
        for &m in section.markers() {
            assert!(pe.witnesses().contains(&m));
        }
    }

    #[test]
    fn negative_control_unit_tiles_cover_everything_outside_lead_in() {
        // constant below threshold: every index fails, tiles are unit,
        // every non-lead-in index in the working region is a witness
        let w = const_window(0.0, 200, 10);
        let plan = build_tiling_plan(&w, 5, 1.0).unwrap();
        let section = SectionSet::from_markers(vec![15, 60, 130], 5, 200).unwrap();
        let pe =
            build_partial_equivalence(&w, &plan, &section, WitnessPolicy::OutsideLeadIn).unwrap();
        let working = pe.working();
        for z in working.clone() {
            let expected = !section.in_lead_in(z);
            assert_eq!(pe.in_domain(z), expected, "index {z}");
        }
        // and the class bound has nothing to assert
        let bound = class_average_bound(&pe, &w, &1.0);
        assert!(bound.holds);
        assert_eq!(bound.asserted_classes, 0);
        assert!(bound.skipped_fail_witnesses > 0);
        // classes are singletons
        assert!(pe.classes().iter().all(|c| c.len() == 1));
    }

    #[test]
    fn constant_at_threshold_with_marker_gaps_multiple_of_horizon() {
        // tile length is the horizon everywhere; walks from markers land on
        // every multiple of the horizon, so the domain is exactly the
        // working region minus the lead-in set
        let horizon = 4;
        let w = const_window(0.5, 160, 8);
        let plan = build_tiling_plan(&w, horizon, 0.5).unwrap();
        let section = SectionSet::from_markers(vec![16, 32, 48, 72], horizon, 160).unwrap();
        let pe =
            build_partial_equivalence(&w, &plan, &section, WitnessPolicy::OutsideLeadIn).unwrap();
        for z in pe.working() {
            assert_eq!(pe.in_domain(z), !section.in_lead_in(z), "index {z}");
        }
        let cov = coverage_check(&pe, &plan, &section, &w);
        assert!(cov.holds);
        assert_eq!(cov.fail_count, 0);
    }

    #[test]
    fn coverage_holds_on_random_windows() {
        let mut rng = SplitMix64::new(77);
        for round in 0..30 {
            let width = 600;
            let margin = 10;
            let horizon = 5;
            let fvals: Vec<f64> = (0..width)
                .map(|_| if rng.next_f64() < 0.6 { 1.0 } else { 0.0 })
                .collect();
            let w = OrbitWindow::from_values(fvals, margin).unwrap();
            let plan = build_tiling_plan(&w, horizon, 0.45).unwrap();
            let s0 = generate_candidate_section(&w, 0.05, 1000 + round).unwrap();
            let section = sparsify(&s0, horizon, width).unwrap();
            for policy in [WitnessPolicy::OutsideLeadIn, WitnessPolicy::OutsideLeadInAndFail] {
                let pe = build_partial_equivalence(&w, &plan, &section, policy).unwrap();
                let cov = coverage_check(&pe, &plan, &section, &w);
                assert!(cov.holds, "round {round}: {:?}", cov.uncovered_sample);
            }
        }
    }

    #[test]
    fn class_averages_meet_threshold() {
        let mut rng = SplitMix64::new(13);
        for round in 0..30 {
            let width = 500;
            let margin = 10;
            let horizon = 6;
            let fvals: Vec<f64> = (0..width)
                .map(|_| if rng.next_f64() < 0.55 { 1.0 } else { 0.0 })
                .collect();
            let w = OrbitWindow::from_values(fvals, margin).unwrap();
            let b = 0.45;
            let plan = build_tiling_plan(&w, horizon, b).unwrap();
            let s0 = generate_candidate_section(&w, 0.06, 500 + round).unwrap();
            let section = sparsify(&s0, horizon, width).unwrap();
            let pe = build_partial_equivalence(&w, &plan, &section, WitnessPolicy::OutsideLeadIn)
                .unwrap();
            let bound = class_average_bound(&pe, &w, &b);
            assert!(bound.holds);
            if let Some(min) = &bound.min_average {
                assert!(*min >= b - 1e-12);
            }
        }
    }

    #[test]
    fn classes_are_pairwise_disjoint() {
        let mut rng = SplitMix64::new(8);
        for round in 0..40 {
            let width = 400;
            let margin = 8;
            let horizon = 4;
            let fvals: Vec<f64> = (0..width).map(|_| rng.next_f64()).collect();
            let w = OrbitWindow::from_values(fvals, margin).unwrap();
            let plan = build_tiling_plan(&w, horizon, 0.5).unwrap();
            let s0 = generate_candidate_section(&w, 0.1, 900 + round).unwrap();
            let section = sparsify(&s0, horizon, width).unwrap();
            let pe = build_partial_equivalence(&w, &plan, &section, WitnessPolicy::OutsideLeadIn)
                .unwrap();
            let classes = pe.classes();
            for k in 1..classes.len() {
                assert!(classes[k - 1].hi <= classes[k].lo);
            }
            // and the domain bitmap agrees with the expansion
            let total: usize = classes.iter().map(|c| c.len()).sum();
            assert_eq!(total, pe.domain_size());
        }
    }

    #[test]
    fn horizon_must_fit_margin() {
        let w = const_window(0.0, 40, 3);
        assert!(matches!(
            build_tiling_plan(&w, 4, 0.0).unwrap_err(),
            TilingError::HorizonOverMargin { .. }
        ));
    }
}
