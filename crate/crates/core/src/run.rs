//! Per-run 2x2 count tables and their alignment to design rows.

use serde::{Deserialize, Serialize};

use crate::design::Design;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Observed `2 x 2` table of one run: rows are the true input state `M`,
/// columns the judged output `y`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunTable {
    /// Level (1 or 2) of each factor, base factors or all factors.
    pub levels: Vec<u8>,
    pub n11: u64,
    pub n12: u64,
    pub n21: u64,
    pub n22: u64,
}

impl RunTable {
    pub fn new(levels: Vec<u8>, n11: u64, n12: u64, n21: u64, n22: u64) -> Self {
        Self {
            levels,
            n11,
            n12,
            n21,
            n22,
        }
    }

    pub fn cells(&self) -> [[u64; 2]; 2] {
        [[self.n11, self.n12], [self.n21, self.n22]]
    }

    /// `n_{1.}` and `n_{2.}`, the known input group sizes.
    pub fn row_totals(&self) -> [u64; 2] {
        [self.n11 + self.n12, self.n21 + self.n22]
    }

    pub fn col_totals(&self) -> [u64; 2] {
        [self.n11 + self.n21, self.n12 + self.n22]
    }

    pub fn total(&self) -> u64 {
        self.n11 + self.n12 + self.n21 + self.n22
    }

    pub fn cells_as<T: Real>(&self) -> [[T; 2]; 2] {
        self.cells().map(|r| r.map(T::count))
    }

    /// Same levels, every count multiplied by `c`.
    pub fn scaled(&self, c: u64) -> Self {
        Self::new(
            self.levels.clone(),
            self.n11 * c,
            self.n12 * c,
            self.n21 * c,
            self.n22 * c,
        )
    }
}

/// Reorders `runs` into design row order, matching each run by its levels.
///
/// Every design row must appear exactly once.
pub fn align_runs(design: &Design, runs: &[RunTable]) -> Result<Vec<RunTable>> {
    if runs.is_empty() {
        return Err(Error::Alignment("no runs".into()));
    }
    let mut slots: Vec<Option<RunTable>> = vec![None; design.runs()];
    for run in runs {
        let row = design.row_for_levels(&run.levels)?;
        if slots[row].is_some() {
            return Err(Error::Alignment(format!(
                "duplicate run for levels {:?}",
                design.levels(row)
            )));
        }
        let mut r = run.clone();
        r.levels = design.levels(row);
        slots[row] = Some(r);
    }
    let missing: Vec<String> = slots
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_none())
        .map(|(k, _)| format!("{:?}", design.levels(k)))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Alignment(format!(
            "missing runs for level combinations {}",
            missing.join(", ")
        )));
    }
    Ok(slots.into_iter().map(|s| s.expect("checked")).collect())
}

/// Checks that `runs` is already aligned to `design` (same length, same levels).
pub(crate) fn check_aligned(design: &Design, runs: &[RunTable]) -> Result<()> {
    if runs.len() != design.runs() {
        return Err(Error::Alignment(format!(
            "design has {} runs but {} tables were given",
            design.runs(),
            runs.len()
        )));
    }
    for (k, r) in runs.iter().enumerate() {
        if design.row_for_levels(&r.levels)? != k {
            return Err(Error::Alignment(format!(
                "run {} has levels {:?}; expected {:?} (use align_runs)",
                k + 1,
                r.levels,
                design.levels(k)
            )));
        }
    }
    Ok(())
}
