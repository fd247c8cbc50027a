//! Sparse marker sections on orbit windows.
//!
//! A candidate set is drawn by i.i.d. thinning of the window interior and
//! then *sparsified*: a candidate survives only if none of the next
//! `horizon` positions is also a candidate. Surviving markers are therefore
//! pairwise more than `horizon` apart, i.e. the set is disjoint from all of
//! its first `horizon` preimage shifts, while still meeting long windows
//! with overwhelming probability.

use thiserror::Error;

use crate::rng;
use crate::systems::OrbitWindow;
use crate::value::Scalar;

#[derive(Debug, Error)]
pub enum SectionError {
    #[error("density must lie in [0, 1], got {0}")]
    DensityOutOfRange(f64),
    #[error("horizon must be >= 1")]
    HorizonZero,
    #[error("marker {marker} violates {rule}")]
    InvalidMarkers { marker: usize, rule: &'static str },
    #[error("gap statistics need at least two markers, got {0}")]
    TooFewMarkers(usize),
    #[error("no marker at or to the left of index {x} (first marker is {first:?})")]
    NoMarkerToTheLeft { x: usize, first: Option<usize> },
    #[error("saturation over an empty window collection")]
    EmptyCollection,
}

/// A sparsified marker set over one window, together with its lead-in set
/// (the union of the `horizon` preimage shifts, truncated at the window).
#[derive(Clone, Debug)]
pub struct SectionSet {
    markers: Vec<usize>,
    horizon: usize,
    width: usize,
    lead_in: Vec<usize>,
    in_marker: Vec<bool>,
    in_lead_in: Vec<bool>,
}

impl SectionSet {
    /// Build from explicit markers, enforcing every invariant: markers are
    /// sorted, keep `horizon` steps of right context inside the window, and
    /// consecutive markers differ by more than `horizon`.
    pub fn from_markers(
        markers: Vec<usize>,
        horizon: usize,
        width: usize,
    ) -> Result<Self, SectionError> {
        if horizon == 0 {
            return Err(SectionError::HorizonZero);
        }
        for (k, &m) in markers.iter().enumerate() {
            if m + horizon >= width {
                return Err(SectionError::InvalidMarkers {
                    marker: m,
                    rule: "the right-context requirement (marker + horizon < width)",
                });
            }
            if k > 0 {
                let prev = markers[k - 1];
                if m <= prev + horizon {
                    return Err(SectionError::InvalidMarkers {
                        marker: m,
                        rule: "the gap requirement (consecutive markers differ by > horizon)",
                    });
                }
            }
        }
        let mut in_marker = vec![false; width];
        let mut in_lead_in = vec![false; width];
        for &m in &markers {
            in_marker[m] = true;
            for i in 1..=horizon {
                if m >= i {
                    in_lead_in[m - i] = true;
                }
            }
        }
        let lead_in = (0..width).filter(|&x| in_lead_in[x]).collect();
        let set = SectionSet {
            markers,
            horizon,
            width,
            lead_in,
            in_marker,
            in_lead_in,
        };
        debug_assert!(set.markers.iter().all(|&m| !set.in_lead_in[m]));
        Ok(set)
    }

    pub fn markers(&self) -> &[usize] {
        &self.markers
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Sorted indices of the lead-in set (positions strictly within
    /// `horizon` steps before some marker).
    pub fn lead_in(&self) -> &[usize] {
        &self.lead_in
    }

    #[inline]
    pub fn is_marker(&self, x: usize) -> bool {
        self.in_marker[x]
    }

    #[inline]
    pub fn in_lead_in(&self, x: usize) -> bool {
        self.in_lead_in[x]
    }

    /// |S| / W.
    pub fn density(&self) -> f64 {
        self.markers.len() as f64 / self.width as f64
    }

    pub fn is_empty(&self) -> bool {
        self.markers.is_empty()
    }

    /// First marker position, if any.
    pub fn first_marker(&self) -> Option<usize> {
        self.markers.first().copied()
    }

    /// CSV dump of the sorted marker list.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index\n");
        for m in &self.markers {
            out.push_str(&format!("{m}\n"));
        }
        out
    }
}

/// i.i.d. thinning of the window interior: each interior index is included
/// independently with probability `density`, deterministically per seed.
pub fn generate_candidate_section<V: Scalar>(
    window: &OrbitWindow<V>,
    density: f64,
    seed: u64,
) -> Result<Vec<usize>, SectionError> {
    if !(0.0..=1.0).contains(&density) {
        return Err(SectionError::DensityOutOfRange(density));
    }
    Ok(window
        .interior()
        .filter(|&i| rng::unit_f64(seed, i as u64) < density)
        .collect())
}

/// Drop every candidate that has another candidate within `horizon` steps
/// to its right (or lacks `horizon` steps of right context in the window).
pub fn sparsify(
    candidates: &[usize],
    horizon: usize,
    width: usize,
) -> Result<SectionSet, SectionError> {
    if horizon == 0 {
        return Err(SectionError::HorizonZero);
    }
    let mut in_candidate = vec![false; width];
    for &x in candidates {
        if x >= width {
            return Err(SectionError::InvalidMarkers {
                marker: x,
                rule: "the window bound",
            });
        }
        in_candidate[x] = true;
    }
    let mut markers = Vec::new();
    for &x in candidates {
        if x + horizon >= width {
            continue;
        }
        if (x + 1..=x + horizon).all(|y| !in_candidate[y]) {
            markers.push(x);
        }
    }
    markers.sort_unstable();
    markers.dedup();
    SectionSet::from_markers(markers, horizon, width)
}

/// Distances between consecutive markers.
#[derive(Clone, Debug)]
pub struct GapStats {
    pub gaps: Vec<usize>,
    pub min_gap: usize,
    pub max_gap: usize,
    /// Some pair of consecutive markers is at least `horizon` apart.
    pub has_gap_bigger_than_horizon: bool,
}

impl GapStats {
    pub fn mean_gap(&self) -> f64 {
        self.gaps.iter().sum::<usize>() as f64 / self.gaps.len() as f64
    }

    /// Histogram CSV, `gap,count`, sorted by gap.
    pub fn histogram_csv(&self) -> String {
        let mut counts = std::collections::BTreeMap::new();
        for &g in &self.gaps {
            *counts.entry(g).or_insert(0usize) += 1;
        }
        let mut out = String::from("gap,count\n");
        for (gap, count) in counts {
            out.push_str(&format!("{gap},{count}\n"));
        }
        out
    }
}

pub fn gap_statistics(section: &SectionSet) -> Result<GapStats, SectionError> {
    let markers = section.markers();
    if markers.len() < 2 {
        return Err(SectionError::TooFewMarkers(markers.len()));
    }
    let gaps: Vec<usize> = markers.windows(2).map(|w| w[1] - w[0]).collect();
    let min_gap = *gaps.iter().min().unwrap();
    let max_gap = *gaps.iter().max().unwrap();
    Ok(GapStats {
        has_gap_bigger_than_horizon: max_gap >= section.horizon(),
        gaps,
        min_gap,
        max_gap,
    })
}

/// The closest marker at or to the left of `x`.
pub fn left_marker(section: &SectionSet, x: usize) -> Result<usize, SectionError> {
    let markers = section.markers();
    let idx = markers.partition_point(|&m| m <= x);
    if idx == 0 {
        return Err(SectionError::NoMarkerToTheLeft {
            x,
            first: markers.first().copied(),
        });
    }
    Ok(markers[idx - 1])
}

/// Fraction of windows whose marker set is nonempty — the empirical
/// stand-in for the measure of the saturation of the section.
pub fn saturation_mass(sections: &[SectionSet]) -> Result<f64, SectionError> {
    if sections.is_empty() {
        return Err(SectionError::EmptyCollection);
    }
    let hit = sections.iter().filter(|s| !s.is_empty()).count();
    Ok(hit as f64 / sections.len() as f64)
}
