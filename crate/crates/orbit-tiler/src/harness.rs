//! End-to-end verification of the quantitative skeleton: epsilon/horizon
//! budgeting, the inequality chain over the tiling relation, the inverted
//! two-threshold contradiction probe, orbit-average convergence experiments,
//! and the exact conditional-expectation identification on finite systems.
//!
//! Empirical masses over a window stand in for integrals: for a set `A` of
//! indices, `mass(A) = |A ∩ working| / |working|` and the f-weighted mass
//! sums `|f|` instead of counting. For ergodic models these are themselves
//! orbit averages; on finite-exact windows they are exact rationals.

use num_rational::BigRational;
use num_traits::Signed;
use thiserror::Error;

use crate::averages::{birkhoff_average, conditional_expectation, AveragesError};
use crate::sections::{generate_candidate_section, sparsify, SectionError, SectionSet};
use crate::systems::{FiniteSystem, OrbitWindow, SystemError, SystemModel, WindowStart};
use crate::tiling::{
    build_partial_equivalence, build_tiling_plan, class_average_bound, coverage_check,
    TilingError, WitnessPolicy,
};
use crate::value::{sum_values, Scalar};

/// Default cap for the horizon search; `ORBIT_TILER_CAP` overrides it.
pub const DEFAULT_CAP: usize = 1 << 16;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("epsilon must be positive")]
    NonPositiveEpsilon,
    #[error("delta must be positive")]
    NonPositiveDelta,
    #[error("budget violated: need (b - a) * mass > 2*eps*(|a| + |b| + 2), got {lhs} <= {rhs}")]
    BudgetViolated { lhs: String, rhs: String },
    #[error("thresholds must satisfy a < b")]
    ThresholdsOutOfOrder,
    #[error("window has no markers: the section misses this orbit segment")]
    UnsaturatedWindow,
    #[error("working region is empty (markers too close to the right edge)")]
    EmptyWorkingRegion,
    #[error(transparent)]
    Tiling(#[from] TilingError),
    #[error(transparent)]
    Section(#[from] SectionError),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Averages(#[from] AveragesError),
}

// ---------------------------------------------------------------------------
// Budgets
// ---------------------------------------------------------------------------

/// Threshold and budget parameters for a chain run.
#[derive(Clone, Debug)]
pub struct BudgetParams<V> {
    /// Lower threshold `a` (two-sided probes only).
    pub lower: Option<V>,
    /// Upper threshold `b`.
    pub threshold: V,
    pub epsilon: V,
    /// Set for ergodic-style runs; forces `epsilon = min(delta, 1) / 8`.
    pub delta: Option<V>,
    /// Horizon search cap.
    pub cap: usize,
}

impl<V: Scalar> BudgetParams<V> {
    pub fn one_sided(threshold: V, epsilon: V, cap: usize) -> Result<Self, HarnessError> {
        if epsilon <= V::zero() {
            return Err(HarnessError::NonPositiveEpsilon);
        }
        Ok(BudgetParams {
            lower: None,
            threshold,
            epsilon,
            delta: None,
            cap,
        })
    }

    /// Two-sided parameters; enforces the budget
    /// `(b - a) * mass > 2 * eps * (|a| + |b| + 2)` with total mass 1.
    pub fn general(lower: V, threshold: V, epsilon: V, cap: usize) -> Result<Self, HarnessError> {
        if epsilon <= V::zero() {
            return Err(HarnessError::NonPositiveEpsilon);
        }
        if lower >= threshold {
            return Err(HarnessError::ThresholdsOutOfOrder);
        }
        let two = V::from_usize(2);
        let lhs = threshold.clone() - lower.clone();
        let rhs = two.clone()
            * epsilon.clone()
            * (lower.clone().abs_val() + threshold.clone().abs_val() + two);
        if lhs <= rhs {
            return Err(HarnessError::BudgetViolated {
                lhs: format!("{lhs}"),
                rhs: format!("{rhs}"),
            });
        }
        Ok(BudgetParams {
            lower: Some(lower),
            threshold,
            epsilon,
            delta: None,
            cap,
        })
    }

    /// Ergodic-style parameters: threshold `delta` with
    /// `epsilon = min(delta, 1) / 8`.
    pub fn ergodic(delta: V, cap: usize) -> Result<Self, HarnessError> {
        if delta <= V::zero() {
            return Err(HarnessError::NonPositiveDelta);
        }
        let epsilon = delta.clone().min_with(V::one()).div_by(8);
        Ok(BudgetParams {
            lower: None,
            threshold: delta.clone(),
            epsilon,
            delta: Some(delta),
            cap,
        })
    }
}

// ---------------------------------------------------------------------------
// Horizon selection
// ---------------------------------------------------------------------------

/// One rung of the doubling ladder.
#[derive(Clone, Debug)]
pub struct LadderStep<V> {
    pub horizon: usize,
    pub fail_count: usize,
    pub fail_mass: V,
    pub fail_fmass: V,
}

/// Result of the horizon search.
#[derive(Clone, Debug)]
pub enum ChooseOutcome<V> {
    Chosen {
        horizon: usize,
        fail_mass: V,
        fail_fmass: V,
        ladder: Vec<LadderStep<V>>,
    },
    CapReached {
        cap: usize,
        /// True when the window margin, not the configured cap, stopped
        /// the search.
        margin_limited: bool,
        ladder: Vec<LadderStep<V>>,
    },
}

impl<V> ChooseOutcome<V> {
    pub fn chosen_horizon(&self) -> Option<usize> {
        match self {
            ChooseOutcome::Chosen { horizon, .. } => Some(*horizon),
            ChooseOutcome::CapReached { .. } => None,
        }
    }
}

/// Double the horizon from 1 until the threshold-fail set supports less
/// than `epsilon` of the masses of 1 and |f| over the window interior.
///
/// Per interior index the *first* passing segment length is found once with
/// the canonical comparison; an index fails at horizon `L` exactly when
/// that length exceeds `L`, so every rung of the ladder reuses one scan and
/// agrees bit-for-bit with the plan built afterwards.
pub fn choose_horizon<V: Scalar>(
    window: &OrbitWindow<V>,
    threshold: &V,
    epsilon: &V,
    cap: usize,
) -> Result<ChooseOutcome<V>, HarnessError> {
    if *epsilon <= V::zero() {
        return Err(HarnessError::NonPositiveEpsilon);
    }
    let margin = window.margin();
    let cap_effective = cap.min(margin.max(1));
    let margin_limited = margin < cap && margin >= 1;
    let interior = window.interior();
    let interior_len = interior.len().max(1);
    let fvals = window.fvals();

    // first qualifying segment length per interior index, capped
    let mut first_pass: Vec<usize> = Vec::with_capacity(interior.len());
    for i in interior.clone() {
        let mut sum = V::zero();
        let mut hit = usize::MAX;
        for n in 1..=cap_effective.min(window.width() - i) {
            sum = sum + fvals[i + n - 1].clone();
            if sum >= threshold.clone() * V::from_usize(n) {
                hit = n;
                break;
            }
        }
        first_pass.push(hit);
    }

    let mut ladder = Vec::new();
    let mut horizon = 1usize;
    loop {
        let mut fail_count = 0usize;
        let mut fail_fsum = V::zero();
        for (k, i) in interior.clone().enumerate() {
            if first_pass[k] > horizon {
                fail_count += 1;
                fail_fsum = fail_fsum + fvals[i].clone().abs_val();
            }
        }
        let fail_mass = V::ratio(fail_count, interior_len);
        let fail_fmass = fail_fsum.div_by(interior_len);
        ladder.push(LadderStep {
            horizon,
            fail_count,
            fail_mass: fail_mass.clone(),
            fail_fmass: fail_fmass.clone(),
        });
        if fail_mass.clone() + fail_fmass.clone() < *epsilon {
            return Ok(ChooseOutcome::Chosen {
                horizon,
                fail_mass,
                fail_fmass,
                ladder,
            });
        }
        if horizon >= cap_effective {
            return Ok(ChooseOutcome::CapReached {
                cap: cap_effective,
                margin_limited,
                ladder,
            });
        }
        horizon = (horizon * 2).min(cap_effective);
    }
}

/// A section density small enough that the lead-in set plausibly stays
/// within the epsilon budget: `epsilon / (4 * (horizon + 1))`, damped by
/// the sup of |f|. The chain re-measures the actual masses either way.
pub fn pick_density(horizon: usize, epsilon: f64, sup_f: f64) -> f64 {
    (epsilon / (4.0 * (horizon as f64 + 1.0) * sup_f.max(1.0))).clamp(1e-9, 0.5)
}

// ---------------------------------------------------------------------------
// The inequality chain
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LinkRelation {
    Ge,
    Eq,
    Lt,
}

impl LinkRelation {
    pub fn symbol(&self) -> &'static str {
        match self {
            LinkRelation::Ge => ">=",
            LinkRelation::Eq => "==",
            LinkRelation::Lt => "<",
        }
    }
}

/// One evaluated inequality, with both sides recorded.
#[derive(Clone, Debug)]
pub struct ChainLink<V> {
    pub name: &'static str,
    pub lhs: V,
    pub relation: LinkRelation,
    pub rhs: V,
    pub rel_tol: f64,
    pub pass: bool,
}

impl<V: Scalar> ChainLink<V> {
    fn evaluate(name: &'static str, lhs: V, relation: LinkRelation, rhs: V, rel_tol: f64) -> Self {
        let pass = match relation {
            LinkRelation::Ge => lhs.ge_with_slack(&rhs, rel_tol),
            LinkRelation::Eq => lhs.approx_eq(&rhs, rel_tol),
            LinkRelation::Lt => lhs < rhs,
        };
        ChainLink {
            name,
            lhs,
            relation,
            rhs,
            rel_tol,
            pass,
        }
    }
}

/// Every raw quantity the chain links are computed from. Serializing these
/// and re-deriving the links reproduces the report exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainQuantities<V> {
    pub threshold: V,
    pub epsilon: V,
    pub delta: Option<V>,
    /// integral of f over the working region (normalized by its size)
    pub int_f_working: V,
    /// integral of f over the relation domain
    pub int_f_domain: V,
    /// integral of the classwise average over the domain
    pub int_classavg_domain: V,
    /// |domain| / |working|
    pub mass_domain: V,
    pub lead_in_mass: V,
    pub lead_in_fmass: V,
    pub fail_mass: V,
    pub fail_fmass: V,
    pub uncovered_mass: V,
    pub uncovered_fmass: V,
    pub boundary_mass: V,
}

/// Tolerance for the regrouping identity (exact for rationals).
pub const EQ_LINK_TOL: f64 = 1e-9;
/// Slack for the inequality links in float mode (zero effect for rationals).
pub const GE_LINK_TOL: f64 = 1e-12;

/// Derive the four displayed links plus supporting checks from the raw
/// quantities. Used both when building a report and when re-verifying a
/// serialized one.
pub fn links_from_quantities<V: Scalar>(
    q: &ChainQuantities<V>,
) -> (Vec<ChainLink<V>>, Vec<ChainLink<V>>) {
    let two = V::from_usize(2);
    let two_eps = two.clone() * q.epsilon.clone();
    let b = q.threshold.clone();
    let budget_term = two_eps.clone() * (b.clone().abs_val() + V::one());

    let links = vec![
        ChainLink::evaluate(
            "int_f_working >= int_f_domain - 2*eps",
            q.int_f_working.clone(),
            LinkRelation::Ge,
            q.int_f_domain.clone() - two_eps.clone(),
            GE_LINK_TOL,
        ),
        ChainLink::evaluate(
            "int_f_domain == int_classavg_domain",
            q.int_f_domain.clone(),
            LinkRelation::Eq,
            q.int_classavg_domain.clone(),
            EQ_LINK_TOL,
        ),
        ChainLink::evaluate(
            "int_classavg_domain >= threshold * mass_domain",
            q.int_classavg_domain.clone(),
            LinkRelation::Ge,
            b.clone() * q.mass_domain.clone(),
            GE_LINK_TOL,
        ),
        ChainLink::evaluate(
            "threshold * mass_domain >= threshold - 2*eps*(|threshold|+1)",
            b.clone() * q.mass_domain.clone(),
            LinkRelation::Ge,
            b.clone() - budget_term.clone(),
            GE_LINK_TOL,
        ),
    ];

    let mut supporting = vec![
        ChainLink::evaluate(
            "conclusion: int_f_working >= threshold - 2*eps*(|threshold|+1)",
            q.int_f_working.clone(),
            LinkRelation::Ge,
            b.clone() - budget_term,
            GE_LINK_TOL,
        ),
        ChainLink::evaluate(
            "lead-in budget: mass + fmass < eps",
            q.lead_in_mass.clone() + q.lead_in_fmass.clone(),
            LinkRelation::Lt,
            q.epsilon.clone(),
            0.0,
        ),
        ChainLink::evaluate(
            "fail budget: mass + fmass < eps",
            q.fail_mass.clone() + q.fail_fmass.clone(),
            LinkRelation::Lt,
            q.epsilon.clone(),
            0.0,
        ),
        ChainLink::evaluate(
            "excluded budget: uncovered mass + fmass < 2*eps",
            q.uncovered_mass.clone() + q.uncovered_fmass.clone(),
            LinkRelation::Lt,
            two_eps,
            0.0,
        ),
    ];

    if let Some(delta) = &q.delta {
        // epsilon = min(delta, 1)/8 makes the conclusion at least delta/2
        supporting.push(ChainLink::evaluate(
            "ergodic epsilon: eps == min(delta,1)/8",
            q.epsilon.clone(),
            LinkRelation::Eq,
            delta.clone().min_with(V::one()).div_by(8),
            0.0,
        ));
        let two = V::from_usize(2);
        let conclusion = delta.clone() * (V::one() - two.clone() * q.epsilon.clone())
            - two * q.epsilon.clone();
        supporting.push(ChainLink::evaluate(
            "ergodic conclusion: delta*(1-2*eps) - 2*eps >= delta/2",
            conclusion,
            LinkRelation::Ge,
            delta.clone().div_by(2),
            GE_LINK_TOL,
        ));
    }

    (links, supporting)
}

/// The full record of one chain run.
#[derive(Clone, Debug)]
pub struct ChainReport<V> {
    pub horizon: usize,
    pub working_size: usize,
    pub domain_size: usize,
    pub class_count: usize,
    pub quantities: ChainQuantities<V>,
    /// The four displayed links, in order.
    pub links: Vec<ChainLink<V>>,
    /// Conclusion, budget, and ergodic-mode checks.
    pub supporting: Vec<ChainLink<V>>,
    pub coverage_holds: bool,
    pub class_bound_holds: bool,
    pub all_links_pass: bool,
}

impl<V: Scalar> ChainReport<V> {
    /// Re-derive every link from the stored quantities; a faithful report
    /// reproduces itself.
    pub fn recompute_links(&self) -> (Vec<ChainLink<V>>, Vec<ChainLink<V>>) {
        links_from_quantities(&self.quantities)
    }
}

/// Evaluate the inequality chain over one window and section. The plan is
/// built at the section's horizon; the relation takes witnesses outside
/// both the lead-in and fail sets, so every class average meets the
/// threshold pointwise.
pub fn verify_chain<V: Scalar>(
    window: &OrbitWindow<V>,
    section: &SectionSet,
    params: &BudgetParams<V>,
) -> Result<ChainReport<V>, HarnessError> {
    if section.is_empty() {
        return Err(HarnessError::UnsaturatedWindow);
    }
    let horizon = section.horizon();
    let plan = build_tiling_plan(window, horizon, params.threshold.clone())?;
    let relation =
        build_partial_equivalence(window, &plan, section, WitnessPolicy::OutsideLeadInAndFail)?;
    let working = relation.working();
    if working.is_empty() {
        return Err(HarnessError::EmptyWorkingRegion);
    }
    let wsize = working.len();
    let fvals = window.fvals();

    let int_f_working = sum_values(&fvals[working.clone()]).div_by(wsize);

    let mut domain_fsum = V::zero();
    let mut classavg_sum = V::zero();
    for class in relation.classes() {
        let class_sum = sum_values(&fvals[class.lo..class.hi]);
        domain_fsum = domain_fsum + class_sum.clone();
        let avg = class_sum.div_by(class.len());
        classavg_sum = classavg_sum + avg * V::from_usize(class.len());
    }
    let int_f_domain = domain_fsum.div_by(wsize);
    let int_classavg_domain = classavg_sum.div_by(wsize);
    let mass_domain = V::ratio(relation.domain_size(), wsize);

    let mut lead_in_count = 0usize;
    let mut lead_in_fsum = V::zero();
    let mut fail_count = 0usize;
    let mut fail_fsum = V::zero();
    let mut uncovered_count = 0usize;
    let mut uncovered_fsum = V::zero();
    for x in working.clone() {
        let fx = fvals[x].clone().abs_val();
        if section.in_lead_in(x) {
            lead_in_count += 1;
            lead_in_fsum = lead_in_fsum + fx.clone();
        }
        if plan.is_fail(x) {
            fail_count += 1;
            fail_fsum = fail_fsum + fx.clone();
        }
        if !relation.in_domain(x) {
            uncovered_count += 1;
            uncovered_fsum = uncovered_fsum + fx;
        }
    }

    let coverage = coverage_check(&relation, &plan, section, window);
    let bound = class_average_bound(&relation, window, &params.threshold);

    let quantities = ChainQuantities {
        threshold: params.threshold.clone(),
        epsilon: params.epsilon.clone(),
        delta: params.delta.clone(),
        int_f_working,
        int_f_domain,
        int_classavg_domain,
        mass_domain,
        lead_in_mass: V::ratio(lead_in_count, wsize),
        lead_in_fmass: lead_in_fsum.div_by(wsize),
        fail_mass: V::ratio(fail_count, wsize),
        fail_fmass: fail_fsum.div_by(wsize),
        uncovered_mass: V::ratio(uncovered_count, wsize),
        uncovered_fmass: uncovered_fsum.div_by(wsize),
        boundary_mass: V::ratio(coverage.boundary_count, wsize),
    };
    let (links, supporting) = links_from_quantities(&quantities);
    let all_links_pass = links.iter().all(|l| l.pass);

    Ok(ChainReport {
        horizon,
        working_size: wsize,
        domain_size: relation.domain_size(),
        class_count: relation.classes().len(),
        quantities,
        links,
        supporting,
        coverage_holds: coverage.holds,
        class_bound_holds: bound.holds,
        all_links_pass,
    })
}

// ---------------------------------------------------------------------------
// Two-sided contradiction probe
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct ProbeConfig {
    pub width: usize,
    pub margin: usize,
    pub cap: usize,
    /// Section density; derived from the chosen horizon when absent.
    pub density: Option<f64>,
    pub seed: u64,
}

/// What happened on one side of the probe.
#[derive(Clone, Debug)]
pub enum SideOutcome {
    /// The horizon search succeeded and the chain ran.
    Completed {
        choose: ChooseOutcome<f64>,
        report: Box<ChainReport<f64>>,
    },
    /// The horizon search hit the cap: this side's threshold sits beyond
    /// what long segment averages attain.
    CappedOut { choose: ChooseOutcome<f64> },
    /// The horizon was found but the sampled section missed the window.
    Unsaturated { choose: ChooseOutcome<f64> },
}

impl SideOutcome {
    pub fn succeeded(&self) -> bool {
        matches!(self, SideOutcome::Completed { .. } | SideOutcome::Unsaturated { .. })
    }
}

#[derive(Clone, Debug)]
pub struct ProbeReport {
    pub upper_threshold: f64,
    pub lower_threshold: f64,
    pub upper: SideOutcome,
    pub lower: SideOutcome,
    /// Both horizon searches succeeded — the two completed chains would
    /// bound the integral into an empty interval.
    pub dual_success: bool,
}

/// Run the chain machinery for the upper threshold `b`, and for the lower
/// threshold `a` mirrored through `f -> -f, a -> -a`, on one window of the
/// model. On real systems the searches cannot both succeed once the
/// thresholds straddle the limit of the orbit averages.
pub fn two_sided_contradiction_probe(
    model: &SystemModel,
    lower: f64,
    upper: f64,
    epsilon: f64,
    cfg: &ProbeConfig,
) -> Result<ProbeReport, HarnessError> {
    let params = BudgetParams::general(lower, upper, epsilon, cfg.cap)?;
    let start = model.random_start(cfg.seed, 0);
    let window = model.sampled_window(&start, cfg.width, cfg.margin)?;

    let upper_side = run_side(&window, upper, &params, cfg, 1)?;
    let mirrored = window.negated();
    let lower_side = run_side(&mirrored, -lower, &params, cfg, 2)?;

    let dual_success = upper_side.succeeded() && lower_side.succeeded();
    Ok(ProbeReport {
        upper_threshold: upper,
        lower_threshold: lower,
        upper: upper_side,
        lower: lower_side,
        dual_success,
    })
}

fn run_side(
    window: &OrbitWindow<f64>,
    threshold: f64,
    params: &BudgetParams<f64>,
    cfg: &ProbeConfig,
    stream: u64,
) -> Result<SideOutcome, HarnessError> {
    let choose = choose_horizon(window, &threshold, &params.epsilon, cfg.cap)?;
    let horizon = match choose.chosen_horizon() {
        None => return Ok(SideOutcome::CappedOut { choose }),
        Some(h) => h,
    };
    let sup_f = window
        .fvals()
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let density = cfg
        .density
        .unwrap_or_else(|| pick_density(horizon, params.epsilon, sup_f));
    let seed = crate::rng::derive(cfg.seed, stream);
    let candidates = generate_candidate_section(window, density, seed)?;
    let section = sparsify(&candidates, horizon, window.width())?;
    if section.is_empty() {
        return Ok(SideOutcome::Unsaturated { choose });
    }
    let side_params = BudgetParams {
        lower: None,
        threshold,
        epsilon: params.epsilon,
        delta: None,
        cap: cfg.cap,
    };
    let report = verify_chain(window, &section, &side_params)?;
    Ok(SideOutcome::Completed {
        choose,
        report: Box::new(report),
    })
}

// ---------------------------------------------------------------------------
// Convergence experiments
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct ConvergenceRow {
    pub start_label: String,
    pub n: usize,
    pub average: f64,
    pub reference: f64,
    pub deviation: f64,
}

#[derive(Clone, Debug)]
pub struct ConvergenceRecord {
    pub rows: Vec<ConvergenceRow>,
    pub max_deviation: f64,
    /// Every recorded average is bounded by the sup of |f| on its segment.
    pub bounded_by_sup: bool,
}

/// Segment averages on an ascending grid of lengths, per start, against the
/// model's exact space average (finite systems: the conditional expectation
/// of the start's cycle, computed exactly so full-period deviations vanish).
pub fn convergence_experiment(
    model: &SystemModel,
    starts: &[WindowStart],
    n_grid: &[usize],
) -> Result<ConvergenceRecord, HarnessError> {
    let mut rows = Vec::new();
    let mut max_deviation = 0.0f64;
    let mut bounded = true;
    let n_max = n_grid.iter().copied().max().unwrap_or(1);
    for (si, start) in starts.iter().enumerate() {
        match (model, start) {
            (SystemModel::Finite(sys), WindowStart::Point(p)) => {
                let window = sys.window(*p, n_max, 0)?;
                let reference = conditional_expectation(sys)[*p].clone();
                for &n in n_grid {
                    let avg = birkhoff_average(&window, 0, n)?;
                    let deviation = (avg.clone() - reference.clone()).abs();
                    let row = ConvergenceRow {
                        start_label: format!("point{p}"),
                        n,
                        average: avg.to_f64(),
                        reference: reference.to_f64(),
                        deviation: deviation.to_f64(),
                    };
                    max_deviation = max_deviation.max(row.deviation);
                    rows.push(row);
                }
            }
            _ => {
                let window = model.sampled_window(start, n_max, 0)?;
                let reference = model.integral_f64();
                let sup = window.fvals().iter().fold(0.0f64, |m, v| m.max(v.abs()));
                for &n in n_grid {
                    let avg = birkhoff_average(&window, 0, n)?;
                    if avg.abs() > sup + 1e-12 {
                        bounded = false;
                    }
                    let row = ConvergenceRow {
                        start_label: format!("start{si}"),
                        n,
                        average: avg,
                        reference,
                        deviation: (avg - reference).abs(),
                    };
                    max_deviation = max_deviation.max(row.deviation);
                    rows.push(row);
                }
            }
        }
    }
    Ok(ConvergenceRecord {
        rows,
        max_deviation,
        bounded_by_sup: bounded,
    })
}

// ---------------------------------------------------------------------------
// Conditional expectation on finite systems
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct CondExpPointRow {
    pub point: usize,
    pub cycle: usize,
    pub cond_exp: BigRational,
    /// Segment averages over 1x, 2x, 3x the cycle period all equal the
    /// conditional expectation exactly.
    pub periods_equal: bool,
}

#[derive(Clone, Debug)]
pub struct InvariantSetRow {
    /// Cycle indices forming the invariant set.
    pub cycles: Vec<usize>,
    pub int_f: BigRational,
    pub int_cond_exp: BigRational,
    pub equal: bool,
}

#[derive(Clone, Debug)]
pub struct CondExpReport {
    pub points: Vec<CondExpPointRow>,
    pub pointwise_exact: bool,
    pub sets: Vec<InvariantSetRow>,
    pub sets_exact: bool,
}

/// Exact identification of full-period orbit averages with the projection
/// onto invariant sets, plus the integral identity over every invariant
/// union of cycles (all unions when there are at most 12 cycles, otherwise
/// singles, complements, and seeded random unions).
pub fn limit_vs_conditional_expectation(
    system: &FiniteSystem,
) -> Result<CondExpReport, HarnessError> {
    let ce = conditional_expectation(system);
    let mut points = Vec::new();
    let mut pointwise_exact = true;
    for p in 0..system.point_count() {
        let period = system.period_of(p);
        let window = system.window(p, 3 * period, 0)?;
        let mut ok = true;
        for k in 1..=3usize {
            let avg = birkhoff_average(&window, 0, k * period)?;
            if avg != ce[p] {
                ok = false;
            }
        }
        pointwise_exact &= ok;
        points.push(CondExpPointRow {
            point: p,
            cycle: system.cycle_index_of(p),
            cond_exp: ce[p].clone(),
            periods_equal: ok,
        });
    }

    let cycle_count = system.cycles().len();
    let mut unions: Vec<Vec<usize>> = Vec::new();
    if cycle_count <= 12 {
        for mask in 1u32..(1u32 << cycle_count) {
            unions.push((0..cycle_count).filter(|c| mask >> c & 1 == 1).collect());
        }
    } else {
        for c in 0..cycle_count {
            unions.push(vec![c]);
            unions.push((0..cycle_count).filter(|&d| d != c).collect());
        }
        let mut rng = crate::rng::SplitMix64::new(cycle_count as u64);
        for _ in 0..64 {
            let picked: Vec<usize> = (0..cycle_count)
                .filter(|_| rng.next_f64() < 0.5)
                .collect();
            if !picked.is_empty() {
                unions.push(picked);
            }
        }
    }

    let mut sets = Vec::new();
    let mut sets_exact = true;
    for cycles in unions {
        let mut int_f = BigRational::zero();
        let mut int_ce = BigRational::zero();
        for &c in &cycles {
            for &p in &system.cycles()[c] {
                int_f += system.weight(p).clone() * system.fval(p).clone();
                int_ce += system.weight(p).clone() * ce[p].clone();
            }
        }
        let equal = int_f == int_ce;
        sets_exact &= equal;
        sets.push(InvariantSetRow {
            cycles,
            int_f,
            int_cond_exp: int_ce,
            equal,
        });
    }

    Ok(CondExpReport {
        points,
        pointwise_exact,
        sets,
        sets_exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{build_system, AlphaSpec, SystemSpec, WeightSpec};

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn golden_half() -> SystemModel {
        build_system(&SystemSpec::Rotation {
            alpha: AlphaSpec::ContinuedFraction(vec![1; 64]),
            steps: vec![(rat(0, 1), rat(1, 2), 1.0)],
            trig: vec![],
        })
        .unwrap()
    }

    #[test]
    fn trivially_low_threshold_chooses_horizon_one() {
        // f >= 0 and threshold -1: every 1-step average qualifies
        let model = golden_half();
        let w = model
            .sampled_window(&model.random_start(3, 0), 4096, 256)
            .unwrap();
        match choose_horizon(&w, &-1.0, &0.01, DEFAULT_CAP).unwrap() {
            ChooseOutcome::Chosen {
                horizon, fail_mass, ..
            } => {
                assert_eq!(horizon, 1);
                assert_eq!(fail_mass, 0.0);
            }
            ChooseOutcome::CapReached { .. } => panic!("must succeed at horizon 1"),
        }
    }

    #[test]
    fn threshold_below_mean_terminates_with_small_fail_mass() {
        let model = golden_half();
        let w = model
            .sampled_window(&model.random_start(3, 1), 65_536, 1024)
            .unwrap();
        match choose_horizon(&w, &0.45, &0.01, DEFAULT_CAP).unwrap() {
            ChooseOutcome::Chosen {
                fail_mass,
                fail_fmass,
                ..
            } => assert!(fail_mass + fail_fmass < 0.01),
            ChooseOutcome::CapReached { .. } => panic!("0.45 < 0.5 must terminate"),
        }
    }

    #[test]
    fn threshold_above_mean_hits_the_cap() {
        let model = golden_half();
        let w = model
            .sampled_window(&model.random_start(3, 2), 32_768, 4096)
            .unwrap();
        match choose_horizon(&w, &0.55, &0.01, DEFAULT_CAP).unwrap() {
            ChooseOutcome::CapReached { ladder, .. } => {
                // fail mass plateaus well above epsilon
                let last = ladder.last().unwrap();
                assert!(last.fail_mass > 0.05);
            }
            ChooseOutcome::Chosen { horizon, .. } => {
                panic!("0.55 > 0.5 must cap out, chose {horizon}")
            }
        }
    }

    #[test]
    fn fail_mass_is_monotone_in_horizon() {
        let model = golden_half();
        let w = model
            .sampled_window(&model.random_start(9, 0), 16_384, 2048)
            .unwrap();
        match choose_horizon(&w, &0.55, &1e-9, 2048).unwrap() {
            ChooseOutcome::CapReached { ladder, .. } | ChooseOutcome::Chosen { ladder, .. } => {
                for pair in ladder.windows(2) {
                    assert!(pair[1].fail_count <= pair[0].fail_count);
                }
            }
        }
    }

    #[test]
    fn chain_all_links_pass_on_golden_rotation() {
        let model = golden_half();
        let w = model
            .sampled_window(&model.random_start(17, 0), 100_000, 256)
            .unwrap();
        let params = BudgetParams::one_sided(0.45, 0.01, DEFAULT_CAP).unwrap();
        let horizon = choose_horizon(&w, &0.45, &0.01, 256)
            .unwrap()
            .chosen_horizon()
            .expect("must find a horizon");
        let density = pick_density(horizon, 0.01, 1.0);
        let s0 = generate_candidate_section(&w, density, 5).unwrap();
        let section = sparsify(&s0, horizon, w.width()).unwrap();
        let report = verify_chain(&w, &section, &params).unwrap();
        assert!(report.coverage_holds);
        assert!(report.class_bound_holds);
        for link in &report.links {
            assert!(link.pass, "failed: {}", link.name);
        }
        for link in &report.supporting {
            assert!(link.pass, "failed: {}", link.name);
        }
    }

    #[test]
    fn chain_is_exact_on_finite_windows() {
        // twelve-cycle with rational values; threshold below the cycle mean
        let sys = FiniteSystem::new(
            vec![(0..12).collect()],
            WeightSpec::Uniform,
            vec![
                rat(1, 1),
                rat(1, 2),
                rat(0, 1),
                rat(1, 1),
                rat(1, 3),
                rat(1, 1),
                rat(0, 1),
                rat(1, 1),
                rat(2, 3),
                rat(1, 1),
                rat(1, 2),
                rat(1, 1),
            ],
        )
        .unwrap();
        let w = sys.window(0, 240, 8).unwrap();
        let params =
            BudgetParams::one_sided(rat(1, 3), rat(1, 20), DEFAULT_CAP).unwrap();
        let horizon = choose_horizon(&w, &rat(1, 3), &rat(1, 20), 8)
            .unwrap()
            .chosen_horizon()
            .expect("low threshold must succeed");
        let markers: Vec<usize> = (0..240)
            .filter(|i| i % 24 == 8 && i + horizon < 240)
            .collect();
        let section = SectionSet::from_markers(markers, horizon, 240).unwrap();
        let report = verify_chain(&w, &section, &params).unwrap();
        for link in &report.links {
            assert!(link.pass, "failed: {}", link.name);
        }
        // the regrouping identity holds with exact equality
        assert_eq!(
            report.quantities.int_f_domain,
            report.quantities.int_classavg_domain
        );
    }

    #[test]
    fn chain_with_constant_observable_gives_equalities() {
        let sys = FiniteSystem::new(
            vec![(0..10).collect()],
            WeightSpec::Uniform,
            vec![rat(2, 5); 10],
        )
        .unwrap();
        let w = sys.window(0, 200, 6).unwrap();
        let params = BudgetParams::one_sided(rat(2, 5), rat(1, 50), 1 << 10).unwrap();
        let section = SectionSet::from_markers(vec![20, 60, 110], 6, 200).unwrap();
        let report = verify_chain(&w, &section, &params).unwrap();
        for link in &report.links {
            assert!(link.pass, "failed: {}", link.name);
        }
        assert_eq!(
            report.quantities.int_f_domain,
            report.quantities.int_classavg_domain
        );
        // every class average equals the constant, so link (iii) is equality
        assert_eq!(
            report.quantities.int_classavg_domain,
            report.quantities.threshold.clone() * report.quantities.mass_domain.clone()
        );
    }

    #[test]
    fn report_reproduces_itself_from_quantities() {
        let model = golden_half();
        let w = model
            .sampled_window(&model.random_start(23, 0), 50_000, 128)
            .unwrap();
        let params = BudgetParams::one_sided(0.45, 0.01, DEFAULT_CAP).unwrap();
        let s0 = generate_candidate_section(&w, 3e-5, 6).unwrap();
        let section = sparsify(&s0, 64, w.width()).unwrap();
        let report = verify_chain(&w, &section, &params).unwrap();
        let (links, supporting) = report.recompute_links();
        for (a, b) in report.links.iter().zip(&links) {
            assert_eq!(a.pass, b.pass);
            assert_eq!(a.lhs, b.lhs);
            assert_eq!(a.rhs, b.rhs);
        }
        for (a, b) in report.supporting.iter().zip(&supporting) {
            assert_eq!(a.pass, b.pass);
        }
    }

    #[test]
    fn budget_validation_rejects_tight_epsilon() {
        // (b - a) = 0.1 but 2*eps*(|a|+|b|+2) = 0.29
        assert!(matches!(
            BudgetParams::general(0.45, 0.55, 0.05, DEFAULT_CAP).unwrap_err(),
            HarnessError::BudgetViolated { .. }
        ));
        assert!(BudgetParams::general(0.3, 0.45, 0.01, DEFAULT_CAP).is_ok());
    }

    #[test]
    fn ergodic_epsilon_rule() {
        let p = BudgetParams::ergodic(rat(1, 2), DEFAULT_CAP).unwrap();
        assert_eq!(p.epsilon, rat(1, 16));
        let p = BudgetParams::ergodic(rat(3, 1), DEFAULT_CAP).unwrap();
        assert_eq!(p.epsilon, rat(1, 8));
    }

    #[test]
    fn probe_straddling_thresholds_caps_both_sides() {
        let model = golden_half();
        let cfg = ProbeConfig {
            width: 20_000,
            margin: 4096,
            cap: 4096,
            density: None,
            seed: 11,
        };
        let report = two_sided_contradiction_probe(&model, 0.45, 0.55, 0.005, &cfg).unwrap();
        assert!(!report.dual_success);
        assert!(matches!(report.upper, SideOutcome::CappedOut { .. }));
        assert!(matches!(report.lower, SideOutcome::CappedOut { .. }));
    }

    #[test]
    fn probe_below_limit_succeeds_only_on_the_upper_side() {
        let model = golden_half();
        let cfg = ProbeConfig {
            width: 40_000,
            margin: 2048,
            cap: 2048,
            density: None,
            seed: 12,
        };
        let report = two_sided_contradiction_probe(&model, 0.3, 0.45, 0.01, &cfg).unwrap();
        assert!(!report.dual_success);
        assert!(report.upper.succeeded(), "0.45 < 0.5 side must complete");
        assert!(matches!(report.lower, SideOutcome::CappedOut { .. }));
    }

    #[test]
    fn probe_on_constant_observable_caps_immediately() {
        let sys = FiniteSystem::new(
            vec![(0..4).collect()],
            WeightSpec::Uniform,
            vec![rat(1, 2); 4],
        )
        .unwrap();
        let model = SystemModel::Finite(sys);
        let cfg = ProbeConfig {
            width: 4096,
            margin: 512,
            cap: 512,
            density: None,
            seed: 1,
        };
        // c = 0.5; a = c - 1, b = c + 1
        let report = two_sided_contradiction_probe(&model, -0.5, 1.5, 0.05, &cfg).unwrap();
        assert!(matches!(report.upper, SideOutcome::CappedOut { .. }));
        assert!(!report.dual_success);
    }

    #[test]
    fn convergence_on_four_cycle_is_exact_at_full_periods() {
        let sys = FiniteSystem::new(
            vec![vec![0, 1, 2, 3]],
            WeightSpec::Uniform,
            vec![rat(1, 1), rat(0, 1), rat(0, 1), rat(0, 1)],
        )
        .unwrap();
        let model = SystemModel::Finite(sys);
        let record = convergence_experiment(
            &model,
            &[WindowStart::Point(0), WindowStart::Point(2)],
            &[4, 8, 12, 40],
        )
        .unwrap();
        for row in &record.rows {
            assert_eq!(row.deviation, 0.0, "n={} start={}", row.n, row.start_label);
            assert_eq!(row.reference, 0.25);
        }
    }

    #[test]
    fn convergence_on_golden_rotation() {
        let model = golden_half();
        let starts: Vec<WindowStart> = (0..5).map(|i| model.random_start(100, i)).collect();
        let record = convergence_experiment(&model, &starts, &[100_000]).unwrap();
        assert!(record.max_deviation <= 1e-3, "dev {}", record.max_deviation);
        assert!(record.bounded_by_sup);
    }

    #[test]
    fn cond_exp_identification_on_two_cycles() {
        let sys = FiniteSystem::new(
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
        let report = limit_vs_conditional_expectation(&sys).unwrap();
        assert!(report.pointwise_exact);
        assert!(report.sets_exact);
        // the 3-cycle alone: int_A f = 3 * (1/8) * 1 = 3/8
        let row = report
            .sets
            .iter()
            .find(|r| r.cycles == vec![0])
            .expect("singleton union present");
        assert_eq!(row.int_f, rat(3, 8));
        assert_eq!(row.int_cond_exp, rat(3, 8));
    }

    #[test]
    fn invariant_observable_is_its_own_projection() {
        let sys = FiniteSystem::new(
            vec![vec![0, 1], vec![2, 3, 4]],
            WeightSpec::Uniform,
            vec![rat(1, 3), rat(1, 3), rat(5, 7), rat(5, 7), rat(5, 7)],
        )
        .unwrap();
        let report = limit_vs_conditional_expectation(&sys).unwrap();
        assert!(report.pointwise_exact);
        for p in 0..5 {
            assert_eq!(&report.points[p].cond_exp, sys.fval(p));
        }
    }
}
