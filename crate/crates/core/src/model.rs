//! Hierarchical model formulas over controllable factors.
//!
//! A formula such as `AC/B` lists maximal effect terms; its expansion is the
//! hierarchical closure (`A`, `B`, `C`, `A×C`). The covariate matrix is the
//! intercept followed by one `±1` contrast column per expansion term.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::design::{Design, EffectTerm};
use crate::error::{Error, Result};
use crate::run::{check_aligned, RunTable};

/// A hierarchical model: generators plus their subset closure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelFormula {
    factor_names: Vec<String>,
    /// Maximal terms in canonical order (order descending, then lexicographic).
    pub generators: Vec<EffectTerm>,
    /// Every nonempty subset of every generator, sorted by (order, lexicographic).
    pub expansion: Vec<EffectTerm>,
    /// Generators dropped because another generator contains them.
    pub dropped: Vec<EffectTerm>,
}

fn generator_cmp(a: &EffectTerm, b: &EffectTerm) -> std::cmp::Ordering {
    b.order()
        .cmp(&a.order())
        .then_with(|| a.indices().cmp(&b.indices()))
}

impl ModelFormula {
    /// Builds the hierarchical closure of `terms`; contained terms are dropped.
    pub fn from_terms(design: &Design, terms: &[EffectTerm]) -> Self {
        let mut uniq: Vec<EffectTerm> = Vec::new();
        for &t in terms {
            if !t.is_identity() && !uniq.contains(&t) {
                uniq.push(t);
            }
        }
        let (generators, dropped): (Vec<EffectTerm>, Vec<EffectTerm>) = uniq
            .iter()
            .partition(|t| !uniq.iter().any(|o| o != *t && o.contains(**t)));
        let mut generators = generators;
        generators.sort_by(generator_cmp);
        let set: BTreeSet<u64> = generators
            .iter()
            .flat_map(|g| g.subsets().map(|s| s.0))
            .collect();
        let mut expansion: Vec<EffectTerm> = set.into_iter().map(EffectTerm).collect();
        expansion.sort_by(|a, b| a.canonical_cmp(b));
        Self {
            factor_names: design.factors().to_vec(),
            generators,
            expansion,
            dropped,
        }
    }

    /// Intercept-only model.
    pub fn intercept_only(design: &Design) -> Self {
        Self::from_terms(design, &[])
    }

    /// Saturated model: every interaction of the base factors.
    pub fn saturated(design: &Design) -> Self {
        let all = EffectTerm::from_indices(design.base_factors().iter().copied());
        Self::from_terms(design, &[all])
    }

    /// Number of covariate columns including the intercept.
    pub fn num_params(&self) -> usize {
        self.expansion.len() + 1
    }

    fn token(&self, i: usize) -> String {
        let n = &self.factor_names[i];
        if n.chars().count() == 1 {
            n.clone()
        } else {
            format!("[{n}]")
        }
    }

    fn word(&self, t: EffectTerm) -> String {
        t.indices().into_iter().map(|i| self.token(i)).collect()
    }

    /// Hierarchy-principle check: every subset of an expansion term is present.
    pub fn is_hierarchical(&self) -> bool {
        self.expansion
            .iter()
            .all(|t| t.subsets().all(|s| self.expansion.contains(&s)))
    }
}

impl fmt::Display for ModelFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.generators.is_empty() {
            return f.write_str("1");
        }
        let parts: Vec<String> = self.generators.iter().map(|&g| self.word(g)).collect();
        f.write_str(&parts.join("/"))
    }
}

/// Parses slash notation (`A/B/C`, `AC/B`, `[Temp]B/C`). `1` is the
/// intercept-only model and `saturated` (or `*`) the saturated one.
pub fn parse_formula(text: &str, design: &Design) -> Result<ModelFormula> {
    let trimmed: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    if trimmed.is_empty() {
        return Err(Error::Syntax {
            input: text.to_string(),
            message: "empty formula".into(),
        });
    }
    if trimmed == "1" {
        return Ok(ModelFormula::intercept_only(design));
    }
    if trimmed == "*" || trimmed.eq_ignore_ascii_case("saturated") {
        return Ok(ModelFormula::saturated(design));
    }
    let mut terms = Vec::new();
    for part in trimmed.split('/') {
        if part.is_empty() {
            return Err(Error::Syntax {
                input: text.to_string(),
                message: "empty term between `/`".into(),
            });
        }
        terms.push(design.parse_term(part)?);
    }
    Ok(ModelFormula::from_terms(design, &terms))
}

/// Intercept column followed by one contrast column per expansion term.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CovariateMatrix {
    pub column_labels: Vec<String>,
    /// `None` for the intercept.
    pub terms: Vec<Option<EffectTerm>>,
    /// Column-major, each of length `K`.
    pub columns: Vec<Vec<i8>>,
}

impl CovariateMatrix {
    pub fn nrows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    pub fn get(&self, run: usize, col: usize) -> i8 {
        self.columns[col][run]
    }

    pub fn row(&self, run: usize) -> Vec<i8> {
        self.columns.iter().map(|c| c[run]).collect()
    }

    /// `X'X` as integers.
    pub fn gram(&self) -> Vec<Vec<i64>> {
        self.columns
            .iter()
            .map(|a| {
                self.columns
                    .iter()
                    .map(|b| {
                        a.iter()
                            .zip(b)
                            .map(|(&x, &y)| (x as i64) * (y as i64))
                            .sum()
                    })
                    .collect()
            })
            .collect()
    }

    /// `X'v` for an integer vector.
    pub fn transpose_mul(&self, v: &[i64]) -> Vec<i64> {
        self.columns
            .iter()
            .map(|c| c.iter().zip(v).map(|(&x, &y)| x as i64 * y).sum())
            .collect()
    }
}

/// Columns that are linearly dependent on earlier ones (Gaussian elimination).
fn dependent_columns(columns: &[Vec<i8>]) -> Vec<usize> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut pivots: Vec<usize> = Vec::new();
    let mut dependent = Vec::new();
    for (j, col) in columns.iter().enumerate() {
        let mut v: Vec<f64> = col.iter().map(|&x| x as f64).collect();
        for (b, &p) in basis.iter().zip(&pivots) {
            let f = v[p] / b[p];
            if f != 0.0 {
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= f * bi;
                }
            }
        }
        match v
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        {
            Some((p, &m)) if m.abs() > 1e-9 => {
                basis.push(v);
                pivots.push(p);
            }
            _ => dependent.push(j),
        }
    }
    dependent
}

/// Builds `X` for `formula`, rejecting terms confounded in a fractional design.
pub fn covariate_matrix(formula: &ModelFormula, design: &Design) -> Result<CovariateMatrix> {
    let mut seen: Vec<(EffectTerm, EffectTerm)> =
        vec![(EffectTerm::IDENTITY, EffectTerm::IDENTITY)];
    for &t in &formula.expansion {
        let key = design.base_reduce(t);
        if let Some((other, _)) = seen.iter().find(|(_, k)| *k == key) {
            return Err(Error::Confounded {
                first: design.term_label(*other),
                second: design.term_label(t),
            });
        }
        seen.push((t, key));
    }
    let mut columns = vec![vec![1i8; design.runs()]];
    let mut labels = vec!["(Intercept)".to_string()];
    let mut terms = vec![None];
    for &t in &formula.expansion {
        columns.push(design.column_product(t)?);
        labels.push(design.term_label(t));
        terms.push(Some(t));
    }
    let dependent = dependent_columns(&columns);
    if !dependent.is_empty() {
        return Err(Error::RankDeficient(
            dependent.into_iter().map(|j| labels[j].clone()).collect(),
        ));
    }
    Ok(CovariateMatrix {
        column_labels: labels,
        terms,
        columns,
    })
}

/// Base-factor keys of the covariate columns, intercept (`0`) first.
///
/// Two formulas span the same column space iff their key sets agree.
pub fn column_keys(formula: &ModelFormula, design: &Design) -> Vec<EffectTerm> {
    std::iter::once(EffectTerm::IDENTITY)
        .chain(formula.expansion.iter().map(|&t| design.base_reduce(t)))
        .collect()
}

/// Run margins plus `X0'n`, the conditioning statistic of the nuisance model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SufficientStatistic {
    /// `n_{1.k}, n_{2.k}` per run.
    pub row_totals: Vec<[u64; 2]>,
    /// `n_{.1k}, n_{.2k}` per run.
    pub col_totals: Vec<[u64; 2]>,
    pub labels: Vec<String>,
    /// `X0'n` with `n = (n_{111}, ..., n_{11K})'`.
    pub linear_stats: Vec<i64>,
}

pub fn sufficient_statistic(
    formula: &ModelFormula,
    design: &Design,
    data: &[RunTable],
) -> Result<SufficientStatistic> {
    check_aligned(design, data)?;
    let x = covariate_matrix(formula, design)?;
    let n: Vec<i64> = data.iter().map(|r| r.n11 as i64).collect();
    Ok(SufficientStatistic {
        row_totals: data.iter().map(RunTable::row_totals).collect(),
        col_totals: data.iter().map(RunTable::col_totals).collect(),
        labels: x.column_labels.clone(),
        linear_stats: x.transpose_mul(&n),
    })
}

/// Axis index of the input-signal axis `M` in contingency tables.
pub const AXIS_M: usize = 0;
/// Axis index of the output axis `y`.
pub const AXIS_Y: usize = 1;

/// Hierarchical log-linear model of the `2^(p+2)` table with axes
/// `(M, y, factor_1, ..., factor_p)`. Axis sets are bitmasks; factor `j`
/// is bit `j + 2`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoglinearModel {
    pub axis_names: Vec<String>,
    pub generating_sets: Vec<u64>,
}

impl LoglinearModel {
    pub fn axes_of(&self, set: u64) -> Vec<usize> {
        (0..self.axis_names.len())
            .filter(|&a| set & (1 << a) != 0)
            .collect()
    }

    fn set_word(&self, set: u64) -> String {
        self.axes_of(set)
            .into_iter()
            .map(|a| {
                let n = &self.axis_names[a];
                if n.chars().count() == 1 {
                    n.clone()
                } else {
                    format!("[{n}]")
                }
            })
            .collect()
    }
}

impl fmt::Display for LoglinearModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .generating_sets
            .iter()
            .map(|&s| self.set_word(s))
            .collect();
        f.write_str(&parts.join("/"))
    }
}

/// Result of mapping a factor model onto the contingency table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Correspondence {
    Loglinear(LoglinearModel),
    /// The model's sufficient statistic is not a set of marginal tables.
    NoCorrespondence {
        reason: String,
    },
}

impl Correspondence {
    pub fn model(&self) -> Option<&LoglinearModel> {
        match self {
            Correspondence::Loglinear(m) => Some(m),
            Correspondence::NoCorrespondence { .. } => None,
        }
    }
}

fn axis_names(design: &Design) -> Vec<String> {
    let mut names = vec!["M".to_string(), "y".to_string()];
    names.extend(design.factors().iter().cloned());
    names
}

fn factor_axes(term: EffectTerm) -> u64 {
    term.0 << 2
}

/// Maps a factor model to a hierarchical log-linear model when one exists.
///
/// Each covariate column, rewritten over the base factors, is a contrast of
/// a base-factor interaction. The statistics `{d'n}` become marginal tables
/// exactly when those base interactions form a hierarchical family; the
/// log-linear generators are then its maximal members joined with `M` and `y`.
pub fn to_loglinear(formula: &ModelFormula, design: &Design) -> Correspondence {
    let mut family: Vec<EffectTerm> = vec![EffectTerm::IDENTITY];
    for &t in &formula.expansion {
        let key = design.base_reduce(t);
        if key.is_identity() {
            return Correspondence::NoCorrespondence {
                reason: format!("{} is confounded with the intercept", design.term_label(t)),
            };
        }
        if family.contains(&key) {
            return Correspondence::NoCorrespondence {
                reason: format!(
                    "{} is confounded with another model term",
                    design.term_label(t)
                ),
            };
        }
        family.push(key);
    }
    let mut missing = Vec::new();
    for (&t, &key) in formula.expansion.iter().zip(family.iter().skip(1)) {
        for i in key.indices() {
            let sub = key.product(EffectTerm::single(i));
            if !family.contains(&sub) {
                missing.push(format!(
                    "{} is the {} contrast but the {} margin is not in the model",
                    design.term_label(t),
                    design.term_label(key),
                    if sub.is_identity() {
                        "grand".to_string()
                    } else {
                        design.term_label(sub)
                    },
                ));
            }
        }
    }
    if !missing.is_empty() {
        missing.dedup();
        return Correspondence::NoCorrespondence {
            reason: missing.join("; "),
        };
    }
    let mut maximal: Vec<EffectTerm> = family
        .iter()
        .copied()
        .filter(|s| !family.iter().any(|o| o != s && o.contains(*s)))
        .collect();
    maximal.sort_by(generator_cmp);

    let base = EffectTerm::from_indices(design.base_factors().iter().copied());
    let m = 1u64 << AXIS_M;
    let y = 1u64 << AXIS_Y;
    let mut sets = vec![m | factor_axes(base), y | factor_axes(base)];
    sets.extend(maximal.into_iter().map(|t| m | y | factor_axes(t)));
    Correspondence::Loglinear(LoglinearModel {
        axis_names: axis_names(design),
        generating_sets: sets,
    })
}

/// Non-isomorphic hierarchical models over the base factors, excluding the
/// intercept-only and saturated models, one representative per class.
///
/// Ordered by number of factors involved, then number of parameters.
pub fn hierarchical_model_classes(design: &Design) -> Result<Vec<ModelFormula>> {
    let base = design.base_factors().to_vec();
    let p = base.len();
    if p > 4 {
        return Err(Error::InvalidDesign(format!(
            "model enumeration supports at most 4 base factors (got {p})"
        )));
    }
    let full = (1u64 << p) - 1;
    let candidates: Vec<u64> = (1..full).collect();
    let perms = permutations(p);
    let remap = |local: u64, perm: &[usize]| -> u64 {
        (0..p)
            .filter(|&i| local & (1 << i) != 0)
            .fold(0, |acc, i| acc | (1 << perm[i]))
    };
    let to_design = |local: u64| -> EffectTerm {
        EffectTerm::from_indices((0..p).filter(|&i| local & (1 << i) != 0).map(|i| base[i]))
    };
    let mut seen: BTreeSet<Vec<u64>> = BTreeSet::new();
    let mut out: Vec<(usize, usize, String, ModelFormula)> = Vec::new();
    for fam in 1u64..(1 << candidates.len()) {
        let chosen: Vec<u64> = candidates
            .iter()
            .enumerate()
            .filter(|(i, _)| fam & (1 << i) != 0)
            .map(|(_, &c)| c)
            .collect();
        let antichain = chosen
            .iter()
            .all(|&a| chosen.iter().all(|&b| a == b || a & b != a));
        if !antichain {
            continue;
        }
        let mut best: Option<(String, ModelFormula)> = None;
        let mut signature: Option<Vec<u64>> = None;
        for perm in &perms {
            let mut key: Vec<u64> = chosen.iter().map(|&c| remap(c, perm)).collect();
            key.sort_unstable();
            if signature.as_ref().is_none_or(|s| key < *s) {
                signature = Some(key.clone());
            }
            let terms: Vec<EffectTerm> = key.iter().map(|&c| to_design(c)).collect();
            let f = ModelFormula::from_terms(design, &terms);
            let text = f.to_string();
            if best.as_ref().is_none_or(|(b, _)| text < *b) {
                best = Some((text, f));
            }
        }
        let signature = signature.expect("at least one permutation");
        if seen.insert(signature) {
            let (text, f) = best.expect("at least one permutation");
            let involved = f.generators.iter().fold(0u64, |a, g| a | g.0).count_ones() as usize;
            out.push((involved, f.num_params(), text, f));
        }
    }
    out.sort_by(|a, b| (a.0, a.1, &a.2).cmp(&(b.0, b.1, &b.2)));
    Ok(out.into_iter().map(|x| x.3).collect())
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for rest in permutations(n - 1) {
        for pos in 0..=rest.len() {
            let mut p = rest.clone();
            p.insert(pos, n - 1);
            out.push(p);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abc() -> Design {
        Design::full_factorial(&["A", "B", "C"]).unwrap()
    }

    fn words(design: &Design, terms: &[EffectTerm]) -> Vec<String> {
        terms.iter().map(|&t| design.word(t)).collect()
    }

    #[test]
    fn parse_ac_slash_b() {
        let d = abc();
        let f = parse_formula("AC/B", &d).unwrap();
        assert_eq!(words(&d, &f.generators), vec!["AC", "B"]);
        assert_eq!(words(&d, &f.expansion), vec!["A", "B", "C", "AC"]);
        assert_eq!(f.to_string(), "AC/B");
        assert!(f.is_hierarchical());
    }

    #[test]
    fn parse_single_and_two_way() {
        let d = abc();
        let f = parse_formula("A", &d).unwrap();
        assert_eq!(words(&d, &f.expansion), vec!["A"]);
        let f = parse_formula(" AB / AC / BC ", &d).unwrap();
        assert_eq!(f.expansion.len(), 6);
        assert_eq!(f.to_string(), "AB/AC/BC");
    }

    #[test]
    fn redundant_generators_are_normalized() {
        let d = abc();
        let f = parse_formula("A/AC/B", &d).unwrap();
        assert_eq!(f.to_string(), "AC/B");
        assert_eq!(words(&d, &f.dropped), vec!["A"]);
    }

    #[test]
    fn formula_errors() {
        let d = abc();
        assert!(matches!(
            parse_formula("A//B", &d),
            Err(Error::Syntax { .. })
        ));
        assert!(matches!(parse_formula("", &d), Err(Error::Syntax { .. })));
        assert!(matches!(
            parse_formula("AQ", &d),
            Err(Error::UnknownFactor(_))
        ));
    }

    #[test]
    fn special_formulas() {
        let d = abc();
        let one = parse_formula("1", &d).unwrap();
        assert_eq!(one.num_params(), 1);
        assert_eq!(one.to_string(), "1");
        let sat = parse_formula("saturated", &d).unwrap();
        assert_eq!(sat.num_params(), 8);
        assert_eq!(sat.to_string(), "ABC");
    }

    #[test]
    fn saturated_matrix_is_hadamard() {
        let d = abc();
        let x = covariate_matrix(&ModelFormula::saturated(&d), &d).unwrap();
        let g = x.gram();
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(g[i][j], if i == j { 8 } else { 0 });
            }
        }
        assert_eq!(
            x.column_labels,
            vec!["(Intercept)", "A", "B", "C", "A×B", "A×C", "B×C", "A×B×C"]
        );
    }

    #[test]
    fn main_effects_matrix_is_one_and_design() {
        let d = abc();
        let x = covariate_matrix(&parse_formula("A/B/C", &d).unwrap(), &d).unwrap();
        assert_eq!(x.ncols(), 4);
        for k in 0..8 {
            let row = x.row(k);
            assert_eq!(row[0], 1);
            assert_eq!(&row[1..], d.matrix()[k].as_slice());
        }
    }

    #[test]
    fn confounded_terms_rejected() {
        let d = Design::fractional_factorial(&["A", "B", "C"], &["D=AC"]).unwrap();
        let err = covariate_matrix(&parse_formula("AC/D", &d).unwrap(), &d).unwrap_err();
        match err {
            Error::Confounded { first, second } => {
                assert_eq!((first.as_str(), second.as_str()), ("D", "A×C"));
            }
            e => panic!("unexpected {e:?}"),
        }
        // B/AB/BC does not involve D, so it stays estimable on this fraction
        assert!(covariate_matrix(&parse_formula("B/AB/BC", &d).unwrap(), &d).is_ok());
    }

    #[test]
    fn correspondence_rows() {
        let d = abc();
        let rows = [
            ("A", "MABC/yABC/MyA"),
            ("A/B", "MABC/yABC/MyA/MyB"),
            ("AB", "MABC/yABC/MyAB"),
            ("A/B/C", "MABC/yABC/MyA/MyB/MyC"),
            ("AB/C", "MABC/yABC/MyAB/MyC"),
            ("AB/AC", "MABC/yABC/MyAB/MyAC"),
            ("AB/AC/BC", "MABC/yABC/MyAB/MyAC/MyBC"),
        ];
        for (f, ll) in rows {
            let c = to_loglinear(&parse_formula(f, &d).unwrap(), &d);
            assert_eq!(c.model().unwrap().to_string(), ll, "{f}");
        }
        let c = to_loglinear(&parse_formula("AC/B", &d).unwrap(), &d);
        assert_eq!(c.model().unwrap().to_string(), "MABC/yABC/MyAC/MyB");
        let c = to_loglinear(&parse_formula("1", &d).unwrap(), &d);
        assert_eq!(c.model().unwrap().to_string(), "MABC/yABC/My");
    }

    #[test]
    fn fractional_correspondences() {
        let d4 = Design::fractional_factorial(&["A", "B", "C"], &["D=ABC"]).unwrap();
        for f in ["A/B/C/D", "AB/C/D"] {
            assert!(to_loglinear(&parse_formula(f, &d4).unwrap(), &d4)
                .model()
                .is_none());
        }
        let sat = to_loglinear(&parse_formula("AB/AC/BC/D", &d4).unwrap(), &d4);
        assert_eq!(sat.model().unwrap().to_string(), "MABC/yABC/MyABC");

        let d5 = Design::fractional_factorial(&["A", "B", "C"], &["D=AB", "E=AC"]).unwrap();
        let c = to_loglinear(&parse_formula("A/B/C/D/E", &d5).unwrap(), &d5);
        assert_eq!(c.model().unwrap().to_string(), "MABC/yABC/MyAB/MyAC");
        let c = to_loglinear(&parse_formula("A/BC/D/E", &d5).unwrap(), &d5);
        assert_eq!(c.model().unwrap().to_string(), "MABC/yABC/MyAB/MyAC/MyBC");
        let c = to_loglinear(&parse_formula("A/BE/C/D", &d5).unwrap(), &d5);
        assert!(c.model().is_none());

        let d6 = Design::fractional_factorial(&["A", "B", "C"], &["D=AB", "E=AC", "F=BC"]).unwrap();
        let c = to_loglinear(&parse_formula("A/B/C/D/E/F", &d6).unwrap(), &d6);
        assert_eq!(c.model().unwrap().to_string(), "MABC/yABC/MyAB/MyAC/MyBC");
    }

    #[test]
    fn model_classes_match_correspondence_list() {
        let d = abc();
        let classes: Vec<String> = hierarchical_model_classes(&d)
            .unwrap()
            .iter()
            .map(|f| f.to_string())
            .collect();
        assert_eq!(
            classes,
            vec!["A", "A/B", "AB", "A/B/C", "AB/C", "AB/AC", "AB/AC/BC"]
        );
    }

    #[test]
    fn sufficient_statistic_zero_data() {
        let d = abc();
        let data: Vec<RunTable> = (0..8)
            .map(|k| RunTable::new(d.levels(k), 0, 0, 0, 0))
            .collect();
        let s = sufficient_statistic(&parse_formula("A/B/C", &d).unwrap(), &d, &data).unwrap();
        assert!(s.linear_stats.iter().all(|&v| v == 0));
        assert_eq!(s.linear_stats.len(), 4);
    }
}
