//! Set averages, orbit-segment (Birkhoff) averages, class averages over
//! finite equivalence relations, and the exact finite-averaging identity
//! `integral(f) = integral(classwise mean of f)` on finite-exact systems.

use std::collections::{BTreeMap, BTreeSet};

use num_rational::BigRational;
use thiserror::Error;

use crate::rng::SplitMix64;
use crate::systems::{FiniteSystem, OrbitWindow};
use crate::value::{sum_values, Scalar};

#[derive(Debug, Error)]
pub enum AveragesError {
    #[error("mean over an empty set")]
    EmptySet,
    #[error("point {0} out of range")]
    PointOutOfRange(usize),
    #[error("class {0} is empty")]
    EmptyClass(usize),
    #[error("classes are not disjoint: point {0} appears twice")]
    NotDisjoint(usize),
    #[error("orbit segment [{i}, {i}+{n}) exceeds window width {width}")]
    SegmentOutOfWindow { i: usize, n: usize, width: usize },
    #[error("segment length must be >= 1")]
    ZeroLength,
}

/// A finite equivalence relation, stored as its partition into classes.
/// The domain may be any subset of the ambient point set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteEquivalence {
    classes: Vec<Vec<usize>>,
    domain: Vec<usize>,
}

impl FiniteEquivalence {
    /// Validates disjointness and non-emptiness; classes and their members
    /// are stored sorted so downstream artifacts are deterministic.
    pub fn new(classes: Vec<Vec<usize>>) -> Result<Self, AveragesError> {
        let mut classes: Vec<Vec<usize>> = classes
            .into_iter()
            .map(|mut c| {
                c.sort_unstable();
                c
            })
            .collect();
        classes.sort();
        let mut seen = BTreeSet::new();
        for (ci, class) in classes.iter().enumerate() {
            if class.is_empty() {
                return Err(AveragesError::EmptyClass(ci));
            }
            for &p in class {
                if !seen.insert(p) {
                    return Err(AveragesError::NotDisjoint(p));
                }
            }
        }
        let domain = seen.into_iter().collect();
        Ok(FiniteEquivalence { classes, domain })
    }

    /// The identity relation on `points` (all classes singletons).
    pub fn identity(points: impl IntoIterator<Item = usize>) -> Self {
        FiniteEquivalence::new(points.into_iter().map(|p| vec![p]).collect())
            .expect("identity relation")
    }

    pub fn classes(&self) -> &[Vec<usize>] {
        &self.classes
    }

    /// Sorted domain (union of all classes).
    pub fn domain(&self) -> &[usize] {
        &self.domain
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }
}

/// Unweighted arithmetic mean of `fvals` over the point set `set`.
pub fn mean_over_set<V: Scalar>(fvals: &[V], set: &[usize]) -> Result<V, AveragesError> {
    if set.is_empty() {
        return Err(AveragesError::EmptySet);
    }
    let mut acc = V::zero();
    for &p in set {
        let v = fvals.get(p).ok_or(AveragesError::PointOutOfRange(p))?;
        acc = acc + v.clone();
    }
    Ok(acc.div_by(set.len()))
}

/// Mean of the observable over the orbit segment `T^i x0 .. T^(i+n-1) x0`.
pub fn birkhoff_average<V: Scalar>(
    window: &OrbitWindow<V>,
    i: usize,
    n: usize,
) -> Result<V, AveragesError> {
    if n == 0 {
        return Err(AveragesError::ZeroLength);
    }
    if i + n > window.width() {
        return Err(AveragesError::SegmentOutOfWindow {
            i,
            n,
            width: window.width(),
        });
    }
    Ok(sum_values(&window.fvals()[i..i + n]).div_by(n))
}

/// Map every point of the domain to the mean of its class. Constant on
/// classes by construction.
pub fn class_average_map<V: Scalar>(
    fvals: &[V],
    relation: &FiniteEquivalence,
) -> Result<BTreeMap<usize, V>, AveragesError> {
    let mut out = BTreeMap::new();
    for class in relation.classes() {
        let avg = mean_over_set(fvals, class)?;
        for &p in class {
            out.insert(p, avg.clone());
        }
    }
    Ok(out)
}

/// One size-part of the finite-averaging identity: the restriction to the
/// union of all classes of a given cardinality.
#[derive(Clone, Debug)]
pub struct SizePart {
    pub class_size: usize,
    pub lhs: BigRational,
    pub rhs: BigRational,
    pub equal: bool,
}

/// Both sides of the finite-averaging identity, evaluated exactly.
#[derive(Clone, Debug)]
pub struct AverageReport {
    /// integral of f over the domain
    pub lhs: BigRational,
    /// integral of the classwise mean over the domain
    pub rhs: BigRational,
    pub equal: bool,
    /// The identity restricted to classes of each size separately.
    pub by_class_size: Vec<SizePart>,
    /// Whether the measure is constant on every class — the executable
    /// criterion under which equality is guaranteed.
    pub weights_class_constant: bool,
}

impl AverageReport {
    /// One-line CSV record: `system-id,relation-id,lhs,rhs,equal`.
    pub fn csv_row(&self, system_id: &str, relation_id: &str) -> String {
        format!(
            "{system_id},{relation_id},{},{},{}\n",
            self.lhs, self.rhs, self.equal
        )
    }
}

/// Evaluate `integral(f) = integral(classwise mean)` over the domain of
/// `relation`, in exact rational arithmetic, overall and per class size.
pub fn verify_finite_averages(
    system: &FiniteSystem,
    relation: &FiniteEquivalence,
) -> Result<AverageReport, AveragesError> {
    let n = system.point_count();
    if let Some(&p) = relation.domain().iter().find(|&&p| p >= n) {
        return Err(AveragesError::PointOutOfRange(p));
    }
    let fvals: Vec<BigRational> = (0..n).map(|p| system.fval(p).clone()).collect();
    let class_means = class_average_map(&fvals, relation)?;

    let mut by_size: BTreeMap<usize, (BigRational, BigRational)> = BTreeMap::new();
    let mut weights_class_constant = true;
    for class in relation.classes() {
        let entry = by_size
            .entry(class.len())
            .or_insert_with(|| (BigRational::zero(), BigRational::zero()));
        for &p in class {
            let w = system.weight(p).clone();
            entry.0 += w.clone() * system.fval(p).clone();
            entry.1 += w * class_means[&p].clone();
        }
        let w0 = system.weight(class[0]);
        if class.iter().any(|&p| system.weight(p) != w0) {
            weights_class_constant = false;
        }
    }

    let mut lhs = BigRational::zero();
    let mut rhs = BigRational::zero();
    let by_class_size = by_size
        .into_iter()
        .map(|(class_size, (l, r))| {
            lhs += l.clone();
            rhs += r.clone();
            SizePart {
                class_size,
                equal: l == r,
                lhs: l,
                rhs: r,
            }
        })
        .collect();
    Ok(AverageReport {
        equal: lhs == rhs,
        lhs,
        rhs,
        by_class_size,
        weights_class_constant,
    })
}

/// Projection of the observable onto the algebra of invariant sets: every
/// point maps to the weighted mean of f over its cycle. Weights are
/// constant per cycle, so this is the plain cycle mean.
pub fn conditional_expectation(system: &FiniteSystem) -> Vec<BigRational> {
    let mut out = vec![BigRational::zero(); system.point_count()];
    for cycle in system.cycles() {
        let fvals: Vec<BigRational> = cycle.iter().map(|&p| system.fval(p).clone()).collect();
        let mean = sum_values(&fvals).div_by(fvals.len());
        for &p in cycle {
            out[p] = mean.clone();
        }
    }
    out
}

/// Concrete witnesses that a finite equivalence relation is induced by an
/// automorphism with a transversal: the transversal takes the least point
/// of each class, and the automorphism cycles each class in id order.
#[derive(Clone, Debug)]
pub struct ClassCycleWitness {
    pub transversal: Vec<usize>,
    pub successor: BTreeMap<usize, usize>,
}

impl ClassCycleWitness {
    pub fn build(relation: &FiniteEquivalence) -> Self {
        let mut transversal = Vec::with_capacity(relation.class_count());
        let mut successor = BTreeMap::new();
        for class in relation.classes() {
            transversal.push(class[0]);
            for (k, &p) in class.iter().enumerate() {
                successor.insert(p, class[(k + 1) % class.len()]);
            }
        }
        ClassCycleWitness {
            transversal,
            successor,
        }
    }

    /// Check that the successor map's orbits are exactly the classes and
    /// the transversal meets each class once.
    pub fn induces(&self, relation: &FiniteEquivalence) -> bool {
        for (ci, class) in relation.classes().iter().enumerate() {
            let start = self.transversal[ci];
            let mut orbit = Vec::with_capacity(class.len());
            let mut p = start;
            for _ in 0..class.len() {
                orbit.push(p);
                p = match self.successor.get(&p) {
                    Some(&q) => q,
                    None => return false,
                };
            }
            if p != start {
                return false;
            }
            orbit.sort_unstable();
            if &orbit != class {
                return false;
            }
        }
        true
    }
}

/// A seeded random rational in [0, 1] with denominator <= `max_den`.
pub fn random_rational(rng: &mut SplitMix64, max_den: u64) -> BigRational {
    let den = 1 + rng.next_below(max_den);
    let num = rng.next_below(den + 1);
    BigRational::new(num.into(), den.into())
}

/// A seeded random partition of `points` into classes of size <= `max_class`.
pub fn random_equivalence(
    points: &[usize],
    max_class: usize,
    rng: &mut SplitMix64,
) -> FiniteEquivalence {
    let mut shuffled = points.to_vec();
    rng.shuffle(&mut shuffled);
    let mut classes = Vec::new();
    let mut rest = shuffled.as_slice();
    while !rest.is_empty() {
        let take = (1 + rng.next_below(max_class as u64) as usize).min(rest.len());
        classes.push(rest[..take].to_vec());
        rest = &rest[take..];
    }
    FiniteEquivalence::new(classes).expect("random partition is a partition")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::WeightSpec;

    fn rat(n: i64, d: i64) -> BigRational {
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

    #[test]
    fn singleton_and_constant_means() {
        let f = vec![rat(3, 7), rat(5, 7)];
        assert_eq!(mean_over_set(&f, &[1]).unwrap(), rat(5, 7));
        let c = vec![rat(2, 3); 7];
        assert_eq!(
            mean_over_set(&c, &[0, 1, 2, 3, 4, 5, 6]).unwrap(),
            rat(2, 3)
        );
    }

    #[test]
    fn four_cycle_full_mean_is_quarter() {
        let s = four_cycle();
        let f: Vec<BigRational> = (0..4).map(|p| s.fval(p).clone()).collect();
        assert_eq!(mean_over_set(&f, &[0, 1, 2, 3]).unwrap(), rat(1, 4));
    }

    #[test]
    fn empty_set_mean_is_an_error() {
        let f = vec![rat(1, 1)];
        assert!(matches!(
            mean_over_set(&f, &[]).unwrap_err(),
            AveragesError::EmptySet
        ));
    }

    #[test]
    fn birkhoff_basics() {
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
        let w = s.window(0, 12, 0).unwrap();
        assert_eq!(birkhoff_average(&w, 0, 1).unwrap(), rat(1, 1));
        assert_eq!(birkhoff_average(&w, 0, 3).unwrap(), rat(2, 3));
        assert!(birkhoff_average(&w, 10, 3).is_err());
    }

    #[test]
    fn class_average_map_identity_and_two_classes() {
        let f = vec![rat(1, 1), rat(0, 1), rat(0, 1), rat(0, 1)];
        let id = FiniteEquivalence::identity(0..4);
        let m = class_average_map(&f, &id).unwrap();
        for p in 0..4 {
            assert_eq!(m[&p], f[p]);
        }

        let whole = FiniteEquivalence::new(vec![vec![0, 1, 2, 3]]).unwrap();
        let m = class_average_map(&f, &whole).unwrap();
        for p in 0..4 {
            assert_eq!(m[&p], rat(1, 4));
        }

        let evens_odds = FiniteEquivalence::new(vec![vec![0, 2], vec![1, 3]]).unwrap();
        let m = class_average_map(&f, &evens_odds).unwrap();
        assert_eq!(m[&0], rat(1, 2));
        assert_eq!(m[&1], rat(0, 1));
        assert_eq!(m[&2], rat(1, 2));
        assert_eq!(m[&3], rat(0, 1));
    }

    #[test]
    fn class_average_map_is_idempotent_and_class_constant() {
        let mut rng = SplitMix64::new(7);
        for _ in 0..20 {
            let n = 2 + rng.next_below(30) as usize;
            let points: Vec<usize> = (0..n).collect();
            let rel = random_equivalence(&points, 5, &mut rng);
            let f: Vec<BigRational> = (0..n).map(|_| random_rational(&mut rng, 50)).collect();
            let m = class_average_map(&f, &rel).unwrap();
            let as_vec: Vec<BigRational> = (0..n).map(|p| m[&p].clone()).collect();
            let m2 = class_average_map(&as_vec, &rel).unwrap();
            assert_eq!(m, m2, "projection applied twice must be itself");
            for class in rel.classes() {
                assert!(class.iter().all(|p| m[p] == m[&class[0]]));
            }
            // tower consistency: overall means agree on the domain
            let lhs = mean_over_set(&f, rel.domain()).unwrap();
            let rhs = mean_over_set(&as_vec, rel.domain()).unwrap();
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn finite_averages_identity_on_four_cycle() {
        let s = four_cycle();
        let rel = FiniteEquivalence::new(vec![vec![0, 2], vec![1, 3]]).unwrap();
        let rep = verify_finite_averages(&s, &rel).unwrap();
        assert_eq!(rep.lhs, rat(1, 4));
        assert_eq!(rep.rhs, rat(1, 4));
        assert!(rep.equal);
        assert!(rep.weights_class_constant);
    }

    #[test]
    fn identity_relation_is_trivially_equal() {
        let s = four_cycle();
        let rel = FiniteEquivalence::identity(0..4);
        let rep = verify_finite_averages(&s, &rel).unwrap();
        assert!(rep.equal);
        assert_eq!(rep.lhs, rep.rhs);
    }

    #[test]
    fn randomized_observables_stay_equal_on_uniform_systems() {
        let mut rng = SplitMix64::new(2024);
        for _ in 0..100 {
            let len = 6;
            let f: Vec<BigRational> = (0..len).map(|_| random_rational(&mut rng, 40)).collect();
            let s =
                FiniteSystem::new(vec![(0..len).collect()], WeightSpec::Uniform, f).unwrap();
            // tiles of the cycle: {0,1},{2,3},{4,5}
            let rel =
                FiniteEquivalence::new(vec![vec![0, 1], vec![2, 3], vec![4, 5]]).unwrap();
            let rep = verify_finite_averages(&s, &rel).unwrap();
            assert!(rep.equal, "lhs={} rhs={}", rep.lhs, rep.rhs);
            for part in &rep.by_class_size {
                assert!(part.equal);
            }
        }
    }

    #[test]
    fn conditional_expectation_per_cycle() {
        // 3-cycle of ones and 5-cycle of zeros, uniform 1/8 weights
        let s = FiniteSystem::new(
            vec![vec![0, 1, 2], vec![3, 4, 5, 6, 7]],
            WeightSpec::Uniform,
            vec![
                rat(1, 1),
                rat(1, 1),
                rat(1, 1),
                rat(0, 1),
                rat(0, 1),
                rat(0, 1),
                rat(0, 1),
                rat(0, 1),
            ],
        )
        .unwrap();
        let ce = conditional_expectation(&s);
        for p in 0..3 {
            assert_eq!(ce[p], rat(1, 1));
        }
        for p in 3..8 {
            assert_eq!(ce[p], rat(0, 1));
        }
    }

    #[test]
    fn projection_fixes_invariant_observables() {
        // f constant on cycles -> conditional expectation equals f
        let s = FiniteSystem::new(
            vec![vec![0, 1], vec![2, 3, 4]],
            WeightSpec::Uniform,
            vec![rat(2, 5), rat(2, 5), rat(7, 9), rat(7, 9), rat(7, 9)],
        )
        .unwrap();
        let ce = conditional_expectation(&s);
        for p in 0..5 {
            assert_eq!(&ce[p], s.fval(p));
        }
    }

    #[test]
    fn class_cycle_witness_induces_relation() {
        let mut rng = SplitMix64::new(11);
        for _ in 0..50 {
            let n = 3 + rng.next_below(20) as usize;
            let points: Vec<usize> = (0..n).collect();
            let rel = random_equivalence(&points, 6, &mut rng);
            let w = ClassCycleWitness::build(&rel);
            assert!(w.induces(&rel));
            assert_eq!(w.transversal.len(), rel.class_count());
        }
    }

    #[test]
    fn overlapping_classes_rejected() {
        assert!(matches!(
            FiniteEquivalence::new(vec![vec![0, 1], vec![1, 2]]).unwrap_err(),
            AveragesError::NotDisjoint(1)
        ));
    }
}
