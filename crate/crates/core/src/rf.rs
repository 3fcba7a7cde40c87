//! One-dimensional reachability analysis of dilated 3×3 cascades.
//!
//! A 3×3 kernel is separable for reachability, so the 2-D influence set is
//! the Cartesian product of the 1-D one computed here. Influence sets are
//! found by pushing unit impulses through all-ones kernels; no closed form is
//! involved except in [`closed_form_extent`], which exists to be checked
//! against the brute force.

use std::fmt;

use crate::error::{Error, Result};
use crate::graph::ArchitectureSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    /// 3-tap convolution with the given dilation, SAME padding.
    Conv(usize),
    /// 2-wide, stride-2 max pooling.
    Pool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RateSchedule {
    stages: Vec<Stage>,
}

impl RateSchedule {
    pub fn new(stages: Vec<Stage>) -> Result<Self> {
        if stages.contains(&Stage::Conv(0)) {
            return Err(Error::Analysis("atrous rates must be at least 1".into()));
        }
        Ok(RateSchedule { stages })
    }

    /// A pool-free cascade.
    pub fn from_rates(rates: &[usize]) -> Result<Self> {
        Self::new(rates.iter().map(|&r| Stage::Conv(r)).collect())
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn rates(&self) -> Vec<usize> {
        self.stages
            .iter()
            .filter_map(|s| match s {
                Stage::Conv(r) => Some(*r),
                Stage::Pool => None,
            })
            .collect()
    }

    pub fn stride(&self) -> usize {
        1 << self.stages.iter().filter(|s| **s == Stage::Pool).count()
    }
}

impl fmt::Display for RateSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .stages
            .iter()
            .map(|s| match s {
                Stage::Conv(r) => r.to_string(),
                Stage::Pool => "pool".into(),
            })
            .collect();
        write!(f, "({})", parts.join(", "))
    }
}

/// Input positions that can change one output neuron.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InfluenceSet {
    /// Sorted offsets relative to the neuron's projection onto the input.
    pub offsets: Vec<i64>,
}

impl InfluenceSet {
    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Width of the bounding interval.
    pub fn extent(&self) -> usize {
        match (self.offsets.first(), self.offsets.last()) {
            (Some(a), Some(b)) => (b - a + 1) as usize,
            _ => 0,
        }
    }

    /// No missing position strictly between the extremes.
    pub fn is_dense(&self) -> bool {
        self.len() == self.extent()
    }

    pub fn holes(&self) -> Vec<i64> {
        self.offsets
            .windows(2)
            .flat_map(|w| w[0] + 1..w[1])
            .collect()
    }
}

fn propagate(schedule: &RateSchedule, mut signal: Vec<u64>) -> Vec<u64> {
    for stage in schedule.stages() {
        signal = match *stage {
            Stage::Conv(r) => {
                let n = signal.len();
                (0..n)
                    .map(|i| {
                        let mut acc = signal[i];
                        if i >= r {
                            acc += signal[i - r];
                        }
                        if i + r < n {
                            acc += signal[i + r];
                        }
                        acc
                    })
                    .collect()
            }
            Stage::Pool => signal.chunks_exact(2).map(|w| w[0].max(w[1])).collect(),
        };
    }
    signal
}

/// Upper bound on how far any input influencing an output neuron can lie
/// from that neuron's projected input window. Used only to size domains.
fn reach_bound(schedule: &RateSchedule) -> usize {
    let (mut reach, mut jump) = (0, 1);
    for s in schedule.stages() {
        match *s {
            Stage::Conv(r) => reach += r * jump,
            Stage::Pool => {
                reach += jump;
                jump *= 2;
            }
        }
    }
    reach
}

/// Exact influence set of output neuron `output_index` on an input line of
/// `domain` positions, by propagating every basis impulse forward.
pub fn influence_set(schedule: &RateSchedule, output_index: usize, domain: usize) -> Result<InfluenceSet> {
    let stride = schedule.stride();
    if !domain.is_multiple_of(stride) || output_index >= domain / stride {
        return Err(Error::Analysis(format!(
            "output {output_index} does not exist on a domain of {domain} with stride {stride}"
        )));
    }
    let reach = reach_bound(schedule);
    let anchor = output_index * stride;
    if anchor < reach || anchor + stride + reach > domain {
        let need = 2 * (reach + stride) + 1;
        return Err(Error::Analysis(format!(
            "influence of output {output_index} may be clipped by a {domain}-wide domain; \
             try a domain of at least {need} with the output near its centre"
        )));
    }
    let mut hit = Vec::new();
    for j in 0..domain {
        let mut impulse = vec![0u64; domain];
        impulse[j] = 1;
        if propagate(schedule, impulse)[output_index] > 0 {
            hit.push(j);
        }
    }
    Ok(InfluenceSet {
        offsets: hit.into_iter().map(|j| j as i64 - anchor as i64).collect(),
    })
}

/// Influence sets of two adjacent neurons in the middle of a domain wide
/// enough that neither can be clipped.
fn central_pair(schedule: &RateSchedule) -> (InfluenceSet, InfluenceSet) {
    let stride = schedule.stride();
    let half = reach_bound(schedule).div_ceil(stride) + 2;
    let domain = 2 * half * stride;
    let a = influence_set(schedule, half - 1, domain).expect("domain sized from the reach bound");
    let b = influence_set(schedule, half, domain).expect("domain sized from the reach bound");
    (a, b)
}

pub fn central_influence(schedule: &RateSchedule) -> InfluenceSet {
    central_pair(schedule).0
}

pub fn has_gridding(schedule: &RateSchedule) -> bool {
    !central_influence(schedule).is_dense()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Overlap {
    /// Input positions in both influence sets.
    pub exact: usize,
    /// Length of the intersection of the bounding intervals.
    pub interval: usize,
}

/// Overlap between the influence sets of neighbouring output neurons.
pub fn adjacent_overlap(schedule: &RateSchedule) -> Overlap {
    let (a, b) = central_pair(schedule);
    // Express both in input coordinates of the first neuron.
    let shift = schedule.stride() as i64;
    let b: Vec<i64> = b.offsets.iter().map(|o| o + shift).collect();
    let exact = a.offsets.iter().filter(|o| b.binary_search(o).is_ok()).count();
    let lo = a.offsets[0].max(b[0]);
    let hi = a.offsets[a.len() - 1].min(b[b.len() - 1]);
    Overlap {
        exact,
        interval: (hi - lo + 1).max(0) as usize,
    }
}

/// Extent predicted by stride multiplication: each conv adds `2·r·j` and each
/// pool adds `j`, where `j` is the product of strides below it.
pub fn closed_form_extent(schedule: &RateSchedule) -> usize {
    let (mut extent, mut jump) = (1, 1);
    for s in schedule.stages() {
        match *s {
            Stage::Conv(r) => extent += 2 * r * jump,
            Stage::Pool => {
                extent += jump;
                jump *= 2;
            }
        }
    }
    extent
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RfRow {
    /// 1-based encoder sequence number.
    pub sequence: usize,
    pub rates: Vec<usize>,
    /// Extent of the sequence on its own input.
    pub extent: usize,
    pub dense: bool,
    pub adjacent_overlap: usize,
    pub interval_overlap: usize,
    /// Extent on the network input, through every earlier sequence and pool.
    pub cumulative_extent: usize,
    pub cumulative_dense: bool,
}

/// One row per encoder sequence. The 3×3 expand branch dominates a fire
/// module's reachability, so each module counts as one dilated conv.
pub fn rf_report(arch: &ArchitectureSpec) -> Result<Vec<RfRow>> {
    arch.validate()?;
    let mut prefix: Vec<Stage> = Vec::new();
    let mut rows = Vec::new();
    for (k, rates) in arch.encoder_rate_schedule.iter().enumerate() {
        if k > 0 {
            prefix.push(Stage::Pool);
        }
        let local = RateSchedule::from_rates(rates)?;
        prefix.extend(local.stages().iter().copied());
        let cumulative = central_influence(&RateSchedule::new(prefix.clone())?);
        let inf = central_influence(&local);
        let ov = adjacent_overlap(&local);
        rows.push(RfRow {
            sequence: k + 1,
            rates: rates.clone(),
            extent: inf.extent(),
            dense: inf.is_dense(),
            adjacent_overlap: ov.exact,
            interval_overlap: ov.interval,
            cumulative_extent: cumulative.extent(),
            cumulative_dense: cumulative.is_dense(),
        });
    }
    Ok(rows)
}

pub const RF_CSV_HEADER: &str = "sequence,rates,extent,dense,adjacent_overlap";

/// Rates are space-separated inside their field.
pub fn render_rf_csv(rows: &[RfRow]) -> String {
    let mut out = format!("{RF_CSV_HEADER}\n");
    for r in rows {
        let rates: Vec<String> = r.rates.iter().map(usize::to_string).collect();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.sequence,
            rates.join(" "),
            r.extent,
            r.dense,
            r.adjacent_overlap
        ));
    }
    out
}
