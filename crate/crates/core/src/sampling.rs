//! Per-row edge sampling plans.
//!
//! A row with more nonzeros than the buffer width `W` is reduced to at most
//! `W` sampled elements. The adaptive strategy picks the window length `N`
//! and window count `sample_cnt` from the ratio `R = row_nnz / W`:
//!
//! | R              | N          | sample_cnt |
//! |----------------|------------|------------|
//! | R <= 1         | row_nnz    | 1          |
//! | 1 < R <= 2     | W / 4      | 4          |
//! | 2 < R <= 36    | W / 8      | 8          |
//! | 36 < R <= 54   | W / 16     | 16         |
//! | R > 54         | W / 32     | 32         |
//!
//! Divisions are integer floor; afterwards `N` is raised to at least 1 and
//! `sample_cnt` lowered to at most `W`. Window starts come from
//! [`hash_start`]. Two fixed baselines are provided for comparison: evenly
//! spaced single elements ([`Strategy::Afs`]) and one leading window
//! ([`Strategy::Sfs`]).

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::graph::{CsrMatrix, RowStats};

/// Multiplier of the window-start hash.
pub const HASH_PRIME: u64 = 1429;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SamplingError {
    #[error("buffer width must be at least 1")]
    ZeroWidth,
    #[error("unknown sampling strategy {0:?}")]
    UnknownStrategy(String),
}

/// Which row of the strategy table a row fell into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Branch {
    /// Empty row; nothing is sampled.
    Empty,
    /// `R <= 1`: the whole row fits.
    Whole,
    /// `1 < R <= 2`
    Quarter,
    /// `2 < R <= 36`
    Eighth,
    /// `36 < R <= 54`
    Sixteenth,
    /// `R > 54`
    ThirtySecond,
}

impl Branch {
    /// The five table branches, in table order.
    pub const TABLE: [Branch; 5] =
        [Branch::Whole, Branch::Quarter, Branch::Eighth, Branch::Sixteenth, Branch::ThirtySecond];

    /// Position in [`Branch::TABLE`], `None` for empty rows.
    pub fn table_index(self) -> Option<usize> {
        Branch::TABLE.iter().position(|&b| b == self)
    }
}

/// Window length and window count chosen for one row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StrategyParams {
    /// Buffer width the row was planned against.
    pub width: usize,
    /// Consecutive elements per window (`N`).
    pub granularity: usize,
    /// Number of windows.
    pub sample_cnt: usize,
    pub branch: Branch,
}

impl StrategyParams {
    /// Buffer slots filled by the plan, `sample_cnt * N`.
    pub fn slots(&self) -> usize {
        self.sample_cnt * self.granularity
    }

    const fn empty(width: usize) -> Self {
        Self { width, granularity: 0, sample_cnt: 0, branch: Branch::Empty }
    }
}

/// Looks up the adaptive strategy for a row of `row_nnz` nonzeros and a
/// buffer of `width` slots.
pub fn select_strategy(row_nnz: usize, width: usize) -> Result<StrategyParams, SamplingError> {
    if width == 0 {
        return Err(SamplingError::ZeroWidth);
    }
    if row_nnz == 0 {
        return Ok(StrategyParams::empty(width));
    }
    if row_nnz <= width {
        return Ok(StrategyParams {
            width,
            granularity: row_nnz,
            sample_cnt: 1,
            branch: Branch::Whole,
        });
    }
    // R compared against the table bounds without leaving integers:
    // R <= k  <=>  row_nnz <= k * W
    let (divisor, branch) = if row_nnz <= 2 * width {
        (4, Branch::Quarter)
    } else if row_nnz <= 36 * width {
        (8, Branch::Eighth)
    } else if row_nnz <= 54 * width {
        (16, Branch::Sixteenth)
    } else {
        (32, Branch::ThirtySecond)
    };
    Ok(StrategyParams {
        width,
        granularity: (width / divisor).max(1),
        sample_cnt: divisor.min(width),
        branch,
    })
}

/// Start offset of window `current_ind` inside a row:
/// `(current_ind * 1429) mod (row_nnz - N + 1)`.
///
/// The caller guarantees `N <= row_nnz`.
#[inline]
pub fn hash_start(current_ind: usize, row_nnz: usize, granularity: usize) -> usize {
    debug_assert!(granularity <= row_nnz, "window longer than the row");
    let modulus = (row_nnz - granularity + 1) as u64;
    ((current_ind as u64 * HASH_PRIME) % modulus) as usize
}

/// How a [`SamplePlanSet`] was built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// Table-driven windows with hashed starts.
    Adaptive,
    /// Accuracy-first baseline: `min(W, row_nnz)` evenly spaced single
    /// elements.
    Afs,
    /// Speed-first baseline: the first `min(W, row_nnz)` elements.
    Sfs,
    /// Every element of every row, independent of `W`.
    Full,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Adaptive, Strategy::Afs, Strategy::Sfs, Strategy::Full];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Adaptive => "adaptive",
            Strategy::Afs => "afs",
            Strategy::Sfs => "sfs",
            Strategy::Full => "full",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = SamplingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "adaptive" => Ok(Strategy::Adaptive),
            "afs" => Ok(Strategy::Afs),
            "sfs" => Ok(Strategy::Sfs),
            "full" => Ok(Strategy::Full),
            other => Err(SamplingError::UnknownStrategy(other.to_string())),
        }
    }
}

/// Sampling decision for one row.
///
/// Window `s` covers row offsets `starts[s] .. starts[s] + N`. Element `j` of
/// window `s` is written to buffer slot `s + j * sample_cnt`, so the buffer
/// interleaves windows.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RowSamplePlan {
    pub row_id: usize,
    pub row_nnz: usize,
    pub params: StrategyParams,
    pub starts: Vec<u32>,
}

impl RowSamplePlan {
    pub fn is_empty(&self) -> bool {
        self.params.sample_cnt == 0
    }

    /// Buffer slots filled, `sample_cnt * N`.
    pub fn slots(&self) -> usize {
        self.params.slots()
    }

    /// In-row offset stored in buffer slot `slot`.
    #[inline]
    pub fn offset_of_slot(&self, slot: usize) -> usize {
        let cnt = self.params.sample_cnt;
        self.starts[slot % cnt] as usize + slot / cnt
    }

    /// In-row offsets in buffer-slot order.
    pub fn slot_offsets(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.slots()).map(move |k| self.offset_of_slot(k))
    }

    /// Number of distinct row offsets touched by the plan.
    pub fn unique_offsets(&self) -> usize {
        let mut seen = vec![false; self.row_nnz];
        let mut count = 0;
        for off in self.slot_offsets() {
            if !std::mem::replace(&mut seen[off], true) {
                count += 1;
            }
        }
        count
    }
}

/// Builds the plan of a single row.
pub fn build_plan(
    row_id: usize,
    row_nnz: usize,
    width: usize,
    strategy: Strategy,
) -> Result<RowSamplePlan, SamplingError> {
    if width == 0 {
        return Err(SamplingError::ZeroWidth);
    }
    let (params, starts): (StrategyParams, Vec<u32>) = if row_nnz == 0 {
        (StrategyParams::empty(width), Vec::new())
    } else {
        match strategy {
            Strategy::Adaptive => {
                let params = select_strategy(row_nnz, width)?;
                let starts = if params.branch == Branch::Whole {
                    vec![0]
                } else {
                    (0..params.sample_cnt)
                        .map(|s| hash_start(s, row_nnz, params.granularity) as u32)
                        .collect()
                };
                (params, starts)
            }
            Strategy::Afs => {
                let cnt = width.min(row_nnz);
                let starts = (0..cnt).map(|s| (s * row_nnz / cnt) as u32).collect();
                let params = StrategyParams {
                    width,
                    granularity: 1,
                    sample_cnt: cnt,
                    branch: fixed_branch(row_nnz, width),
                };
                (params, starts)
            }
            Strategy::Sfs => {
                let params = StrategyParams {
                    width,
                    granularity: width.min(row_nnz),
                    sample_cnt: 1,
                    branch: fixed_branch(row_nnz, width),
                };
                (params, vec![0])
            }
            Strategy::Full => {
                let params = StrategyParams {
                    width,
                    granularity: row_nnz,
                    sample_cnt: 1,
                    branch: Branch::Whole,
                };
                (params, vec![0])
            }
        }
    };
    Ok(RowSamplePlan { row_id, row_nnz, params, starts })
}

// Baselines do not use the table, but tagging rows by it keeps branch
// histograms comparable across strategies.
fn fixed_branch(row_nnz: usize, width: usize) -> Branch {
    select_strategy(row_nnz, width).map(|p| p.branch).unwrap_or(Branch::Empty)
}

/// One plan per matrix row.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SamplePlanSet {
    pub width: usize,
    pub strategy: Strategy,
    pub plans: Vec<RowSamplePlan>,
}

impl SamplePlanSet {
    pub fn n_rows(&self) -> usize {
        self.plans.len()
    }

    /// Total buffer slots over all rows.
    pub fn total_slots(&self) -> usize {
        self.plans.iter().map(RowSamplePlan::slots).sum()
    }

    /// Row counts per table branch, in [`Branch::TABLE`] order.
    pub fn branch_histogram(&self) -> [usize; 5] {
        let mut hist = [0usize; 5];
        for p in &self.plans {
            if let Some(i) = p.params.branch.table_index() {
                hist[i] += 1;
            }
        }
        hist
    }

    /// True when every row is planned to be read completely, once, in order.
    pub fn covers_all_in_order(&self) -> bool {
        self.plans.iter().all(|p| {
            p.is_empty()
                || (p.params.sample_cnt == 1
                    && p.params.granularity == p.row_nnz
                    && p.starts == [0])
        })
    }
}

/// Plans every row of `m`. Rows are planned independently in parallel; the
/// result does not depend on the thread count.
pub fn build_plan_set(
    m: &CsrMatrix,
    width: usize,
    strategy: Strategy,
) -> Result<SamplePlanSet, SamplingError> {
    if width == 0 {
        return Err(SamplingError::ZeroWidth);
    }
    let plans = (0..m.n_rows())
        .into_par_iter()
        .map(|i| build_plan(i, m.row_nnz(i), width, strategy))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SamplePlanSet { width, strategy, plans })
}

/// Fraction of each row's nonzeros that end up in buffer slots.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingRates {
    /// Slots filled over row nonzeros. Hash collisions count once per slot.
    pub per_row: Vec<f64>,
    /// Distinct offsets covered over row nonzeros.
    pub unique_per_row: Vec<f64>,
    /// Total slots over total nonzeros.
    pub aggregate: f64,
    /// Total distinct offsets over total nonzeros.
    pub unique_aggregate: f64,
}

/// Per-row and aggregate sampling rates. Empty rows report 1.0.
pub fn sampling_rate(plans: &SamplePlanSet, stats: &RowStats) -> SamplingRates {
    assert_eq!(plans.n_rows(), stats.row_nnz.len(), "plans and stats describe different matrices");
    let (mut slots, mut unique, mut nnz) = (0usize, 0usize, 0usize);
    let mut per_row = Vec::with_capacity(plans.n_rows());
    let mut unique_per_row = Vec::with_capacity(plans.n_rows());
    for (p, &row_nnz) in plans.plans.iter().zip(&stats.row_nnz) {
        debug_assert_eq!(p.row_nnz, row_nnz);
        if row_nnz == 0 {
            per_row.push(1.0);
            unique_per_row.push(1.0);
            continue;
        }
        let u = p.unique_offsets();
        slots += p.slots();
        unique += u;
        nnz += row_nnz;
        per_row.push(p.slots() as f64 / row_nnz as f64);
        unique_per_row.push(u as f64 / row_nnz as f64);
    }
    let ratio = |x: usize| if nnz == 0 { 1.0 } else { x as f64 / nnz as f64 };
    SamplingRates {
        per_row,
        unique_per_row,
        aggregate: ratio(slots),
        unique_aggregate: ratio(unique),
    }
}
