//! Two-level full and regular fractional factorial designs.
//!
//! Level 1 is coded `+1` and level 2 is coded `-1`. Runs are in standard
//! order: the first run has every base factor at level 1, the leftmost
//! factor varies slowest.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of base (independently varied) factors.
pub const MAX_BASE_FACTORS: usize = 16;
/// Largest total number of factors, base plus generated.
pub const MAX_FACTORS: usize = 63;

/// A set of factors, stored as a bitmask over a design's factor indices.
///
/// A singleton is a main effect, a pair a two-factor interaction and so on.
/// The empty set stands for the intercept / identity word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct EffectTerm(pub u64);

impl EffectTerm {
    pub const IDENTITY: EffectTerm = EffectTerm(0);

    pub fn single(index: usize) -> Self {
        EffectTerm(1 << index)
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Self {
        EffectTerm(indices.into_iter().fold(0, |acc, i| acc | (1u64 << i)))
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn is_identity(self) -> bool {
        self.0 == 0
    }

    pub fn order(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn contains(self, other: EffectTerm) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn has(self, index: usize) -> bool {
        self.0 & (1 << index) != 0
    }

    /// Product of two contrast columns: the symmetric difference of the sets.
    pub fn product(self, other: EffectTerm) -> EffectTerm {
        EffectTerm(self.0 ^ other.0)
    }

    pub fn indices(self) -> Vec<usize> {
        (0..64).filter(|&i| self.has(i)).collect()
    }

    /// All nonempty subsets, including the term itself.
    pub fn subsets(self) -> impl Iterator<Item = EffectTerm> {
        let full = self.0;
        let mut sub = full;
        let mut done = full == 0;
        std::iter::from_fn(move || {
            if done {
                return None;
            }
            let out = sub;
            if sub == 0 {
                done = true;
                return None;
            }
            sub = (sub - 1) & full;
            Some(EffectTerm(out))
        })
    }

    /// Ordering by (order, factor indices lexicographically).
    pub fn canonical_cmp(&self, other: &EffectTerm) -> Ordering {
        self.order()
            .cmp(&other.order())
            .then_with(|| self.indices().cmp(&other.indices()))
    }
}

/// `D = ABC`: a generated factor and the base word it equals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Generator {
    pub factor: usize,
    pub word: EffectTerm,
}

/// Resolution of a design; full factorials have no defining words.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Resolution {
    Full,
    Finite(usize),
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Resolution::Full => f.write_str("full"),
            Resolution::Finite(r) => f.write_str(&roman(*r)),
        }
    }
}

fn roman(mut n: usize) -> String {
    const TABLE: [(usize, &str); 9] = [
        (100, "C"),
        (90, "XC"),
        (50, "L"),
        (40, "XL"),
        (10, "X"),
        (9, "IX"),
        (5, "V"),
        (4, "IV"),
        (1, "I"),
    ];
    let mut out = String::new();
    for &(v, s) in &TABLE {
        while n >= v {
            out.push_str(s);
            n -= v;
        }
    }
    out
}

/// One class of mutually confounded effects.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AliasClass {
    pub terms: Vec<EffectTerm>,
    /// The class is confounded with the grand mean.
    pub with_intercept: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AliasStructure {
    /// Generator words, e.g. `ABCD` for `D = ABC`.
    pub defining_contrasts: Vec<EffectTerm>,
    /// Every non-identity element of the defining relation group.
    pub defining_group: Vec<EffectTerm>,
    pub alias_classes: Vec<AliasClass>,
    pub resolution: Resolution,
    pub max_order: usize,
}

/// JSON design specification: factor names plus optional generators.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DesignSpec {
    pub factors: Vec<String>,
    #[serde(default)]
    pub generators: Vec<String>,
}

/// A `K x p` design with entries in `{-1, +1}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Design {
    factors: Vec<String>,
    base: Vec<usize>,
    generators: Vec<Generator>,
    /// Row-major `K x p`.
    matrix: Vec<Vec<i8>>,
}

fn validate_name(name: &str) -> Result<()> {
    if name.is_empty() {
        return Err(Error::InvalidDesign("empty factor name".into()));
    }
    if name
        .chars()
        .any(|c| c.is_whitespace() || "/=[],*:×·-+".contains(c))
    {
        return Err(Error::InvalidDesign(format!(
            "factor name `{name}` contains a reserved character"
        )));
    }
    if matches!(name, "M" | "y" | "m" | "Y") {
        return Err(Error::InvalidDesign(format!(
            "factor name `{name}` collides with the signal/output axes M and y"
        )));
    }
    Ok(())
}

fn check_unique(names: &[String]) -> Result<()> {
    for (i, a) in names.iter().enumerate() {
        if names[..i].iter().any(|b| b.eq_ignore_ascii_case(a)) {
            return Err(Error::InvalidDesign(format!("duplicate factor name `{a}`")));
        }
    }
    Ok(())
}

/// Splits a word such as `ABC` or `[Temp][Speed]C` into factor tokens.
fn word_tokens(input: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    let mut chars = input.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            c if c.is_whitespace() => {}
            '×' | '*' | ':' | '·' => {}
            '[' => {
                let mut name = String::new();
                loop {
                    match chars.next() {
                        Some(']') => break,
                        Some(ch) => name.push(ch),
                        None => {
                            return Err(Error::Syntax {
                                input: input.to_string(),
                                message: "unterminated `[`".into(),
                            })
                        }
                    }
                }
                let name = name.trim().to_string();
                if name.is_empty() {
                    return Err(Error::Syntax {
                        input: input.to_string(),
                        message: "empty bracketed name".into(),
                    });
                }
                out.push(name);
            }
            ']' | '/' | '=' | ',' => {
                return Err(Error::Syntax {
                    input: input.to_string(),
                    message: format!("unexpected `{c}`"),
                })
            }
            c => out.push(c.to_string()),
        }
    }
    Ok(out)
}

impl Design {
    /// Full `2^p` factorial in standard order.
    pub fn full_factorial<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        Self::fractional_factorial(names, &[] as &[&str])
    }

    /// Regular `2^(p-g)` fraction: base factors in full factorial, each
    /// generator (`"D=ABC"`) appends a factor equal to a product of base columns.
    pub fn fractional_factorial<S: AsRef<str>, G: AsRef<str>>(
        base_names: &[S],
        generators: &[G],
    ) -> Result<Self> {
        let base: Vec<String> = base_names
            .iter()
            .map(|s| s.as_ref().trim().to_string())
            .collect();
        if base.is_empty() || base.len() > MAX_BASE_FACTORS {
            return Err(Error::InvalidDesign(format!(
                "number of base factors must be in 1..={MAX_BASE_FACTORS} (got {})",
                base.len()
            )));
        }
        for n in &base {
            validate_name(n)?;
        }
        check_unique(&base)?;

        let mut factors = base.clone();
        let mut gens = Vec::new();
        for g in generators {
            let g = g.as_ref();
            let (lhs, rhs) = g.split_once('=').ok_or_else(|| Error::Syntax {
                input: g.to_string(),
                message: "generator must look like `D=ABC`".into(),
            })?;
            let lhs = lhs
                .trim()
                .trim_start_matches('[')
                .trim_end_matches(']')
                .trim();
            validate_name(lhs)?;
            if factors.iter().any(|f| f.eq_ignore_ascii_case(lhs)) {
                return Err(Error::InvalidDesign(format!(
                    "duplicate factor name `{lhs}`"
                )));
            }
            let mut word = 0u64;
            for tok in word_tokens(rhs)? {
                let idx = base
                    .iter()
                    .position(|b| b.eq_ignore_ascii_case(&tok))
                    .ok_or_else(|| {
                        if factors.iter().any(|f| f.eq_ignore_ascii_case(&tok)) {
                            Error::InvalidDesign(format!(
                                "generator `{g}` references generated factor `{tok}`"
                            ))
                        } else {
                            Error::UnknownFactor(tok.clone())
                        }
                    })?;
                word ^= 1 << idx;
            }
            let word = EffectTerm(word);
            if word.order() < 2 {
                return Err(Error::InvalidDesign(format!(
                    "generator `{g}` must equal an interaction of at least two base factors"
                )));
            }
            if gens.iter().any(|x: &Generator| x.word == word) {
                return Err(Error::InvalidDesign(format!(
                    "generator `{g}` duplicates an earlier generator word"
                )));
            }
            gens.push(Generator {
                factor: factors.len(),
                word,
            });
            factors.push(lhs.to_string());
        }
        if factors.len() > MAX_FACTORS {
            return Err(Error::InvalidDesign(format!(
                "at most {MAX_FACTORS} factors supported"
            )));
        }

        let nb = base.len();
        let runs = 1usize << nb;
        let matrix = (0..runs)
            .map(|r| {
                let mut row: Vec<i8> = (0..nb)
                    .map(|j| if (r >> (nb - 1 - j)) & 1 == 0 { 1 } else { -1 })
                    .collect();
                for g in &gens {
                    let v = g.word.indices().iter().map(|&j| row[j]).product();
                    row.push(v);
                }
                row
            })
            .collect();

        Ok(Self {
            factors,
            base: (0..nb).collect(),
            generators: gens,
            matrix,
        })
    }

    /// Builds a design from a JSON spec. Factors defined by a generator may
    /// or may not be listed in `factors`; the rest are base factors.
    pub fn from_spec(spec: &DesignSpec) -> Result<Self> {
        let lhs: Vec<String> = spec
            .generators
            .iter()
            .filter_map(|g| g.split_once('=').map(|(l, _)| l.trim().to_string()))
            .collect();
        let base: Vec<&String> = spec
            .factors
            .iter()
            .filter(|f| !lhs.iter().any(|l| l.eq_ignore_ascii_case(f)))
            .collect();
        let design = Self::fractional_factorial(&base, &spec.generators)?;
        // keep the caller's factor order when every factor is listed
        if spec.factors.len() == design.factors.len() {
            let mut order = Vec::with_capacity(spec.factors.len());
            for f in &spec.factors {
                order.push(design.factor_index(f)?);
            }
            return design.permute_factors(&order);
        }
        Ok(design)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: DesignSpec = serde_json::from_str(text)
            .map_err(|e| Error::InvalidDesign(format!("design JSON: {e}")))?;
        Self::from_spec(&spec)
    }

    pub fn to_spec(&self) -> DesignSpec {
        DesignSpec {
            factors: self.factors.clone(),
            generators: self
                .generators
                .iter()
                .map(|g| format!("{}={}", self.factors[g.factor], self.word(g.word)))
                .collect(),
        }
    }

    /// Reorders factors; `order[new] = old`.
    fn permute_factors(&self, order: &[usize]) -> Result<Self> {
        let mut inverse = vec![0; order.len()];
        for (new, &old) in order.iter().enumerate() {
            inverse[old] = new;
        }
        let remap =
            |t: EffectTerm| EffectTerm::from_indices(t.indices().into_iter().map(|i| inverse[i]));
        Ok(Self {
            factors: order.iter().map(|&o| self.factors[o].clone()).collect(),
            base: {
                let mut b: Vec<usize> = self.base.iter().map(|&i| inverse[i]).collect();
                b.sort_unstable();
                b
            },
            generators: self
                .generators
                .iter()
                .map(|g| Generator {
                    factor: inverse[g.factor],
                    word: remap(g.word),
                })
                .collect(),
            matrix: self
                .matrix
                .iter()
                .map(|row| order.iter().map(|&o| row[o]).collect())
                .collect(),
        })
    }

    pub fn runs(&self) -> usize {
        self.matrix.len()
    }

    pub fn num_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn factors(&self) -> &[String] {
        &self.factors
    }

    pub fn base_factors(&self) -> &[usize] {
        &self.base
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn is_full(&self) -> bool {
        self.generators.is_empty()
    }

    pub fn matrix(&self) -> &[Vec<i8>] {
        &self.matrix
    }

    pub fn entry(&self, run: usize, factor: usize) -> i8 {
        self.matrix[run][factor]
    }

    /// Column `d_j`.
    pub fn column(&self, factor: usize) -> Vec<i8> {
        self.matrix.iter().map(|r| r[factor]).collect()
    }

    /// Level (1 or 2) of every factor in a run.
    pub fn levels(&self, run: usize) -> Vec<u8> {
        self.matrix[run]
            .iter()
            .map(|&v| if v == 1 { 1 } else { 2 })
            .collect()
    }

    /// Case-insensitive lookup; exact matches win.
    pub fn factor_index(&self, name: &str) -> Result<usize> {
        let name = name.trim();
        self.factors
            .iter()
            .position(|f| f == name)
            .or_else(|| {
                self.factors
                    .iter()
                    .position(|f| f.eq_ignore_ascii_case(name))
            })
            .ok_or_else(|| Error::UnknownFactor(name.to_string()))
    }

    /// Parses a word like `AC`, `A×C` or `[Temp]C` into a term.
    pub fn parse_term(&self, text: &str) -> Result<EffectTerm> {
        let tokens = word_tokens(text)?;
        if tokens.is_empty() {
            return Err(Error::Syntax {
                input: text.to_string(),
                message: "empty term".into(),
            });
        }
        let mut bits = 0u64;
        for t in tokens {
            let i = self.factor_index(&t)?;
            if bits & (1 << i) != 0 {
                return Err(Error::Syntax {
                    input: text.to_string(),
                    message: format!("factor `{}` repeated", self.factors[i]),
                });
            }
            bits |= 1 << i;
        }
        Ok(EffectTerm(bits))
    }

    fn name_token(&self, i: usize) -> String {
        let n = &self.factors[i];
        if n.chars().count() == 1 {
            n.clone()
        } else {
            format!("[{n}]")
        }
    }

    /// Concatenated word, e.g. `AC`; `I` for the identity.
    pub fn word(&self, term: EffectTerm) -> String {
        if term.is_identity() {
            return "I".into();
        }
        term.indices()
            .into_iter()
            .map(|i| self.name_token(i))
            .collect()
    }

    /// Display label, e.g. `A×C`; `(Intercept)` for the identity.
    pub fn term_label(&self, term: EffectTerm) -> String {
        if term.is_identity() {
            return "(Intercept)".into();
        }
        term.indices()
            .into_iter()
            .map(|i| self.factors[i].as_str())
            .collect::<Vec<_>>()
            .join("×")
    }

    /// Elementwise product of the named columns (`d_st`, `d_stu`, ...).
    pub fn column_product(&self, term: EffectTerm) -> Result<Vec<i8>> {
        if term.0 >> self.factors.len() != 0 {
            return Err(Error::UnknownFactor(format!(
                "factor index beyond {} in term",
                self.factors.len()
            )));
        }
        let idx = term.indices();
        Ok(self
            .matrix
            .iter()
            .map(|row| idx.iter().map(|&j| row[j]).product())
            .collect())
    }

    /// Rewrites a term over base factors only, substituting every generated
    /// factor by its word. Two terms are aliased iff their reductions agree.
    pub fn base_reduce(&self, term: EffectTerm) -> EffectTerm {
        let mut out = term;
        for g in &self.generators {
            if out.has(g.factor) {
                out = out.product(EffectTerm::single(g.factor)).product(g.word);
            }
        }
        out
    }

    /// Words `{G} ∪ word(G)` of each generator.
    pub fn defining_contrasts(&self) -> Vec<EffectTerm> {
        self.generators
            .iter()
            .map(|g| g.word.product(EffectTerm::single(g.factor)))
            .collect()
    }

    /// All non-identity words of the defining relation group.
    pub fn defining_group(&self) -> Vec<EffectTerm> {
        let gens = self.defining_contrasts();
        let mut words: Vec<EffectTerm> = (1u64..(1 << gens.len()))
            .map(|mask| {
                gens.iter()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .fold(EffectTerm::IDENTITY, |acc, (_, w)| acc.product(*w))
            })
            .collect();
        words.sort_by(|a, b| a.canonical_cmp(b));
        words
    }

    pub fn resolution(&self) -> Resolution {
        self.defining_group()
            .iter()
            .map(|w| w.order())
            .min()
            .map_or(Resolution::Full, Resolution::Finite)
    }

    /// Alias classes over every effect of order `1..=max_order`.
    pub fn alias_structure(&self, max_order: usize) -> AliasStructure {
        let p = self.factors.len();
        let max_order = max_order.min(p);
        let mut terms = Vec::new();
        for k in 1..=max_order {
            for_each_combination(p, k, &mut |idx| {
                terms.push(EffectTerm::from_indices(idx.iter().copied()))
            });
        }
        // combinations are generated per order in lexicographic order already
        let mut classes: BTreeMap<u64, (usize, AliasClass)> = BTreeMap::new();
        for t in terms {
            let key = self.base_reduce(t).0;
            let next = classes.len();
            let entry = classes.entry(key).or_insert_with(|| {
                (
                    next,
                    AliasClass {
                        terms: Vec::new(),
                        with_intercept: key == 0,
                    },
                )
            });
            entry.1.terms.push(t);
        }
        let mut ordered: Vec<(usize, AliasClass)> = classes.into_values().collect();
        ordered.sort_by_key(|(i, _)| *i);
        AliasStructure {
            defining_contrasts: self.defining_contrasts(),
            defining_group: self.defining_group(),
            alias_classes: ordered.into_iter().map(|(_, c)| c).collect(),
            resolution: self.resolution(),
            max_order,
        }
    }

    /// Row whose levels match. `levels` may cover all factors or only the
    /// base factors (in base order).
    pub fn row_for_levels(&self, levels: &[u8]) -> Result<usize> {
        let nb = self.base.len();
        let base_levels: Vec<u8> = if levels.len() == self.factors.len() {
            self.base.iter().map(|&b| levels[b]).collect()
        } else if levels.len() == nb {
            levels.to_vec()
        } else {
            return Err(Error::Alignment(format!(
                "expected {} or {} levels, got {}",
                self.factors.len(),
                nb,
                levels.len()
            )));
        };
        let mut row = 0usize;
        for (j, &l) in base_levels.iter().enumerate() {
            match l {
                1 => {}
                2 => row |= 1 << (nb - 1 - j),
                _ => {
                    return Err(Error::Alignment(format!(
                        "factor levels must be 1 or 2 (got {l})"
                    )))
                }
            }
        }
        if levels.len() == self.factors.len() {
            let expected = self.levels(row);
            if expected != levels {
                return Err(Error::Alignment(format!(
                    "levels {levels:?} are not a run of this design (generated factors disagree)"
                )));
            }
        }
        Ok(row)
    }
}

/// Calls `f` with every k-subset of `0..n` in lexicographic order.
pub(crate) fn for_each_combination(n: usize, k: usize, f: &mut dyn FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}
