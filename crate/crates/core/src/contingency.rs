//! Experiment data as a `2^(p+2)` contingency table, marginal tables,
//! iterative proportional fitting and the marginal-reconstruction identities.

use num_traits::Num;
use serde::{Deserialize, Serialize};

use crate::design::Design;
use crate::error::{Error, Result};
use crate::glm::GlmFit;
use crate::model::{LoglinearModel, AXIS_M, AXIS_Y};
use crate::numeric::Tolerance;
use crate::run::{check_aligned, RunTable};
use crate::scalar::Real;

/// Largest table the dense representation will allocate (`2^22` cells).
pub const MAX_AXES: usize = 22;

/// Dense table over axes `(M, y, factor_1, ..., factor_p)`, each of size 2.
///
/// Axis 0 varies slowest. Index value 0 is level 1. Cells for factor
/// combinations outside a fractional design are structural zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContingencyTable<T> {
    pub axes: Vec<String>,
    pub cells: Vec<T>,
    pub structural_zero: Vec<bool>,
}

/// Sums of a table over every axis outside `axes`, in `axes` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marginal<T> {
    pub axes: Vec<usize>,
    pub cells: Vec<T>,
}

impl<T: Copy> Marginal<T> {
    /// Cell at the given 0/1 indices, one per marginal axis.
    pub fn get(&self, index: &[usize]) -> T {
        let pos = index.iter().fold(0, |acc, &b| (acc << 1) | b);
        self.cells[pos]
    }
}

impl<T: Real> ContingencyTable<T> {
    pub fn num_axes(&self) -> usize {
        self.axes.len()
    }

    pub fn axis(&self, label: &str) -> Result<usize> {
        self.axes
            .iter()
            .position(|a| a == label)
            .or_else(|| self.axes.iter().position(|a| a.eq_ignore_ascii_case(label)))
            .ok_or_else(|| Error::UnknownFactor(label.to_string()))
    }

    /// Flat position of a cell given one 0/1 index per axis.
    pub fn position(&self, index: &[usize]) -> usize {
        index.iter().fold(0, |acc, &b| (acc << 1) | b)
    }

    pub fn get(&self, index: &[usize]) -> T {
        self.cells[self.position(index)]
    }

    fn bit(&self, pos: usize, axis: usize) -> usize {
        (pos >> (self.num_axes() - 1 - axis)) & 1
    }

    /// Marginal table over the axis indices `axes` (any order, no repeats).
    pub fn marginal_axes(&self, axes: &[usize]) -> Result<Marginal<T>> {
        for (i, &a) in axes.iter().enumerate() {
            if a >= self.num_axes() || axes[..i].contains(&a) {
                return Err(Error::UnknownFactor(format!("axis {a}")));
            }
        }
        let mut cells = vec![T::zero(); 1 << axes.len()];
        for (pos, &v) in self.cells.iter().enumerate() {
            let m = axes.iter().fold(0, |acc, &a| (acc << 1) | self.bit(pos, a));
            cells[m] = cells[m] + v;
        }
        Ok(Marginal {
            axes: axes.to_vec(),
            cells,
        })
    }

    /// Marginal over labelled axes, e.g. `["M", "y", "A"]` for `{n_{ija..}}`.
    pub fn marginal(&self, labels: &[&str]) -> Result<Marginal<T>> {
        let axes = labels
            .iter()
            .map(|l| self.axis(l))
            .collect::<Result<Vec<_>>>()?;
        self.marginal_axes(&axes)
    }

    /// Marginal over an axis bitmask (bit `a` is axis `a`).
    pub fn marginal_set(&self, set: u64) -> Result<Marginal<T>> {
        let axes: Vec<usize> = (0..self.num_axes())
            .filter(|&a| set & (1 << a) != 0)
            .collect();
        self.marginal_axes(&axes)
    }

    pub fn total(&self) -> T {
        self.cells.iter().copied().sum()
    }
}

fn axis_labels(design: &Design) -> Vec<String> {
    let mut axes = vec!["M".to_string(), "y".to_string()];
    axes.extend(design.factors().iter().cloned());
    axes
}

/// Lays out aligned run tables as `n_{i j a_1 ... a_p}`.
pub fn to_table<T: Real>(design: &Design, data: &[RunTable]) -> Result<ContingencyTable<T>> {
    check_aligned(design, data)?;
    let cells: Vec<[[T; 2]; 2]> = data.iter().map(RunTable::cells_as::<T>).collect();
    build_table(design, &cells)
}

/// Same layout for real-valued per-run tables, e.g. GLM fitted values.
pub fn table_from_cells<T: Real>(
    design: &Design,
    cells: &[[[T; 2]; 2]],
) -> Result<ContingencyTable<T>> {
    if cells.len() != design.runs() {
        return Err(Error::Alignment(format!(
            "{} tables for a {}-run design",
            cells.len(),
            design.runs()
        )));
    }
    build_table(design, cells)
}

pub fn fitted_table<T: Real>(design: &Design, fit: &GlmFit<T>) -> Result<ContingencyTable<T>> {
    table_from_cells(design, &fit.fitted)
}

fn build_table<T: Real>(design: &Design, cells: &[[[T; 2]; 2]]) -> Result<ContingencyTable<T>> {
    let axes = axis_labels(design);
    let d = axes.len();
    if d > MAX_AXES {
        return Err(Error::InvalidDesign(format!(
            "{} axes exceed the dense table limit of {MAX_AXES}",
            d
        )));
    }
    let mut out = vec![T::zero(); 1 << d];
    let mut realized = vec![false; 1 << d];
    let p = design.num_factors();
    for (k, run) in cells.iter().enumerate() {
        let levels = design.levels(k);
        let factor_pos = levels
            .iter()
            .fold(0usize, |acc, &l| (acc << 1) | usize::from(l == 2));
        for i in 0..2 {
            for j in 0..2 {
                let pos = (((i << 1) | j) << p) | factor_pos;
                out[pos] = run[i][j];
                realized[pos] = true;
            }
        }
    }
    Ok(ContingencyTable {
        axes,
        cells: out,
        structural_zero: realized.into_iter().map(|r| !r).collect(),
    })
}

/// Fitted table plus convergence diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpfFit<T> {
    pub table: ContingencyTable<T>,
    pub cycles: usize,
    /// Largest absolute gap between fitted and observed generating margins.
    pub max_margin_error: T,
}

/// Iterative proportional fitting in the model's declaration order.
pub fn ipf_fit<T: Real>(
    table: &ContingencyTable<T>,
    model: &LoglinearModel,
    tol: &Tolerance,
) -> Result<IpfFit<T>> {
    ipf_fit_ordered(table, &model.generating_sets, tol)
}

/// Iterative proportional fitting cycling over `sets` in the given order.
///
/// Starts from 1 on every realized cell. A cell whose target margin is 0
/// stays at 0.
pub fn ipf_fit_ordered<T: Real>(
    table: &ContingencyTable<T>,
    sets: &[u64],
    tol: &Tolerance,
) -> Result<IpfFit<T>> {
    let d = table.num_axes();
    if sets.is_empty() {
        return Err(Error::Inconsistent(
            "log-linear model has no generating sets".into(),
        ));
    }
    for &s in sets {
        if s >> d != 0 {
            return Err(Error::UnknownFactor(format!(
                "generating set {s:#b} beyond {d} axes"
            )));
        }
    }
    let targets = sets
        .iter()
        .map(|&s| table.marginal_set(s))
        .collect::<Result<Vec<_>>>()?;
    let positions: Vec<Vec<usize>> = targets
        .iter()
        .map(|m| {
            (0..table.cells.len())
                .map(|pos| {
                    m.axes
                        .iter()
                        .fold(0, |acc, &a| (acc << 1) | table.bit(pos, a))
                })
                .collect()
        })
        .collect();

    let mut fitted = table.clone();
    for (c, &z) in fitted.cells.iter_mut().zip(&table.structural_zero) {
        *c = if z { T::zero() } else { T::one() };
    }
    let abs = T::lit(tol.abs).max(T::epsilon() * T::lit(64.0) * table.total());
    let mut max_err;
    for cycle in 1..=tol.max_iter {
        for (target, pos) in targets.iter().zip(&positions) {
            let mut current = vec![T::zero(); target.cells.len()];
            for (cell, &m) in fitted.cells.iter().zip(pos) {
                current[m] = current[m] + *cell;
            }
            for (cell, &m) in fitted.cells.iter_mut().zip(pos) {
                *cell = if current[m] > T::zero() {
                    *cell * target.cells[m] / current[m]
                } else {
                    T::zero()
                };
            }
        }
        max_err = T::zero();
        for (target, pos) in targets.iter().zip(&positions) {
            let mut current = vec![T::zero(); target.cells.len()];
            for (cell, &m) in fitted.cells.iter().zip(pos) {
                current[m] = current[m] + *cell;
            }
            for (c, t) in current.iter().zip(&target.cells) {
                max_err = max_err.max((*c - *t).abs());
            }
        }
        if max_err <= abs {
            return Ok(IpfFit {
                table: fitted,
                cycles: cycle,
                max_margin_error: max_err,
            });
        }
    }
    Err(Error::IterationLimit {
        what: "iterative proportional fitting",
        iterations: tol.max_iter,
    })
}

/// Axis bitmask helper: `{M, y}` plus the given factor indices.
pub fn my_with_factors(factors: &[usize]) -> u64 {
    factors
        .iter()
        .fold((1 << AXIS_M) | (1 << AXIS_Y), |acc, &f| {
            acc | (1 << (f + 2))
        })
}

fn two<T: Num + Copy>() -> T {
    T::one() + T::one()
}

/// Recovers the two-way table `{n_ab}` of one `(i, j)` slice from its
/// one-way margins and the two defining-contrast sums
/// `same = n_11 + n_22`, `diff = n_12 + n_21`:
/// `n_ab = (n_a. + n_.b - (n_ab* + n_a*b)) / 2`, where the bracketed pair
/// is `diff` when `a = b` and `same` otherwise.
pub fn reconstruct_pair<T: Num + Copy + PartialOrd>(
    margin_a: [T; 2],
    margin_b: [T; 2],
    same: T,
    diff: T,
) -> Result<[[T; 2]; 2]> {
    let total = margin_a[0] + margin_a[1];
    if !nearly(total, margin_b[0] + margin_b[1]) || !nearly(total, same + diff) {
        return Err(Error::Inconsistent(
            "margins and contrast sums disagree on the total".into(),
        ));
    }
    let mut out = [[T::zero(); 2]; 2];
    for (a, row) in out.iter_mut().enumerate() {
        for (b, cell) in row.iter_mut().enumerate() {
            let opposite = if a == b { diff } else { same };
            *cell = (margin_a[a] + margin_b[b] - opposite) / two();
            if *cell < T::zero() && !nearly(*cell, T::zero()) {
                return Err(Error::Inconsistent(
                    "reconstruction produced a negative cell".into(),
                ));
            }
        }
    }
    Ok(out)
}

fn nearly<T: Num + Copy + PartialOrd>(a: T, b: T) -> bool {
    if a == b {
        return true;
    }
    // exact number types never reach here with equal values; for floats allow
    // rounding relative to the operands
    let d = if a > b { a - b } else { b - a };
    let scale = {
        let abs_a = if a < T::zero() { T::zero() - a } else { a };
        let abs_b = if b < T::zero() { T::zero() - b } else { b };
        abs_a + abs_b + T::one()
    };
    let mut eps = T::one();
    // 2^-30 relative slack, reached by repeated halving so exact types with
    // coarse values (integers) end at zero and demand equality
    for _ in 0..30 {
        eps = eps / two();
    }
    d <= eps * scale
}

/// `{n_{ijab.}}` from `{n_{ija..}}`, `{n_{ij.b.}}` and per-`(i, j)` contrast
/// sums `(n_{ij11.} + n_{ij22.}, n_{ij12.} + n_{ij21.})`.
///
/// Arrays are indexed `[i][j][a]`, `[i][j][b]` and `[i][j]`; the result `[i][j][a][b]`.
#[allow(clippy::type_complexity)]
pub fn reconstruct_two_way<T: Num + Copy + PartialOrd>(
    margins_a: &[[[T; 2]; 2]; 2],
    margins_b: &[[[T; 2]; 2]; 2],
    contrast_sums: &[[(T, T); 2]; 2],
) -> Result<[[[[T; 2]; 2]; 2]; 2]> {
    let mut out = [[[[T::zero(); 2]; 2]; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let (same, diff) = contrast_sums[i][j];
            out[i][j] = reconstruct_pair(margins_a[i][j], margins_b[i][j], same, diff)?;
        }
    }
    Ok(out)
}

/// Two-way margins of a `2 x 2 x 2` table: `{n_ab.}`, `{n_a.c}`, `{n_.bc}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoWayMargins<T> {
    pub ab: [[T; 2]; 2],
    pub ac: [[T; 2]; 2],
    pub bc: [[T; 2]; 2],
}

impl<T: Num + Copy> TwoWayMargins<T> {
    pub fn of(table: &[[[T; 2]; 2]; 2]) -> Self {
        let mut m = Self {
            ab: [[T::zero(); 2]; 2],
            ac: [[T::zero(); 2]; 2],
            bc: [[T::zero(); 2]; 2],
        };
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    let v = table[a][b][c];
                    m.ab[a][b] = m.ab[a][b] + v;
                    m.ac[a][c] = m.ac[a][c] + v;
                    m.bc[b][c] = m.bc[b][c] + v;
                }
            }
        }
        m
    }
}

/// Sums over cells with an even and an odd number of level-2 indices,
/// `(n_111 + n_122 + n_212 + n_221, n_112 + n_121 + n_211 + n_222)`.
pub fn three_way_contrast_sums<T: Num + Copy>(table: &[[[T; 2]; 2]; 2]) -> (T, T) {
    let mut even = T::zero();
    let mut odd = T::zero();
    for a in 0..2 {
        for b in 0..2 {
            for c in 0..2 {
                if (a + b + c) % 2 == 0 {
                    even = even + table[a][b][c];
                } else {
                    odd = odd + table[a][b][c];
                }
            }
        }
    }
    (even, odd)
}

/// Recovers a `2 x 2 x 2` table from its three two-way margins and the
/// even/odd contrast sums.
///
/// Every Walsh coefficient of the table is available: the grand total,
/// main effects and two-way interactions from the margins, the three-way
/// interaction as `even - odd`. Inverting the `8 x 8` Hadamard transform
/// gives each cell as one eighth of a signed sum of these coefficients.
pub fn reconstruct_three_way<T: Num + Copy + PartialOrd>(
    margins: &TwoWayMargins<T>,
    contrast_sums: (T, T),
) -> Result<[[[T; 2]; 2]; 2]> {
    let sum2 = |m: &[[T; 2]; 2]| m[0][0] + m[0][1] + m[1][0] + m[1][1];
    let total = sum2(&margins.ab);
    let (even, odd) = contrast_sums;
    if !nearly(total, sum2(&margins.ac))
        || !nearly(total, sum2(&margins.bc))
        || !nearly(total, even + odd)
    {
        return Err(Error::Inconsistent(
            "margins and contrast sums disagree on the total".into(),
        ));
    }
    let sign = |x: usize| {
        if x == 0 {
            T::one()
        } else {
            T::zero() - T::one()
        }
    };
    // contrast of a 2x2 margin against the sign pattern (s_r, s_c) per index
    let contrast = |m: &[[T; 2]; 2], rows: bool, cols: bool| {
        let mut acc = T::zero();
        for r in 0..2 {
            for c in 0..2 {
                let mut s = T::one();
                if rows {
                    s = s * sign(r);
                }
                if cols {
                    s = s * sign(c);
                }
                acc = acc + s * m[r][c];
            }
        }
        acc
    };
    let h_a = contrast(&margins.ab, true, false);
    let h_b = contrast(&margins.ab, false, true);
    let h_c = contrast(&margins.ac, false, true);
    let h_ab = contrast(&margins.ab, true, true);
    let h_ac = contrast(&margins.ac, true, true);
    let h_bc = contrast(&margins.bc, true, true);
    let h_abc = even - odd;
    let eight = two::<T>() * two::<T>() * two::<T>();
    let mut out = [[[T::zero(); 2]; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            for c in 0..2 {
                let (sa, sb, sc) = (sign(a), sign(b), sign(c));
                let v = total
                    + sa * h_a
                    + sb * h_b
                    + sc * h_c
                    + sa * sb * h_ab
                    + sa * sc * h_ac
                    + sb * sc * h_bc
                    + sa * sb * sc * h_abc;
                let v = v / eight;
                if v < T::zero() && !nearly(v, T::zero()) {
                    return Err(Error::Inconsistent(
                        "reconstruction produced a negative cell".into(),
                    ));
                }
                out[a][b][c] = v;
            }
        }
    }
    Ok(out)
}
