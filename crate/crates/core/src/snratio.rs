//! Taguchi baseline: standardized SN ratios and the orthogonal-contrast ANOVA.

use serde::{Deserialize, Serialize};

use crate::design::{Design, EffectTerm};
use crate::error::{Error, Result};
use crate::numeric::f_sf;
use crate::run::{check_aligned, RunTable};
use crate::scalar::Real;

/// Whether 0.5 is added to every cell before forming the odds ratio.
///
/// Applied to the whole analysis, never run by run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Correction {
    #[default]
    Always,
    Never,
}

impl std::str::FromStr for Correction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "always" => Ok(Correction::Always),
            "never" => Ok(Correction::Never),
            _ => Err(Error::Syntax {
                input: s.to_string(),
                message: "correction must be `always` or `never`".into(),
            }),
        }
    }
}

/// Sample odds ratio `n11 n22 / (n12 n21)`, optionally 0.5-corrected.
pub fn odds_ratio<T: Real>(run: &RunTable, correction: Correction) -> Result<T> {
    let [[a, b], [c, d]] = run.cells_as::<T>();
    match correction {
        Correction::Always => {
            let h = T::lit(0.5);
            Ok(((a + h) * (d + h)) / ((b + h) * (c + h)))
        }
        Correction::Never => {
            if run.n11 == 0 || run.n12 == 0 || run.n21 == 0 || run.n22 == 0 {
                return Err(Error::ZeroCell);
            }
            Ok((a * d) / (b * c))
        }
    }
}

/// Common error rate `p0 = 1 / (1 + sqrt(theta))`.
pub fn common_error_rate<T: Real>(theta: T) -> Result<T> {
    if !(theta > T::zero()) {
        return Err(Error::Domain(format!(
            "odds ratio must be > 0 (got {theta})"
        )));
    }
    Ok(T::one() / (T::one() + theta.sqrt()))
}

/// Standardized SN ratio in decibels, `-10 log10(1/(1-2 p0)^2 - 1)`.
pub fn sn_ratio_db<T: Real>(p0: T) -> Result<T> {
    if !(p0 > T::zero() && p0 < T::one()) {
        return Err(Error::Domain(format!("p0 must lie in (0, 1) (got {p0})")));
    }
    let gap = T::one() - T::lit(2.0) * p0;
    if gap == T::zero() {
        return Err(Error::InfiniteSn);
    }
    let bracket = T::one() / (gap * gap) - T::one();
    Ok(-T::lit(10.0) * bracket.log10())
}

/// Per-run summary: odds ratio, common error rate and SN ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnSummary<T> {
    pub theta_hat: T,
    pub p0_hat: T,
    pub eta_db: T,
}

pub fn summarize<T: Real>(run: &RunTable, correction: Correction) -> Result<SnSummary<T>> {
    let theta_hat = odds_ratio(run, correction)?;
    let p0_hat = common_error_rate(theta_hat)?;
    let eta_db = sn_ratio_db(p0_hat)?;
    Ok(SnSummary {
        theta_hat,
        p0_hat,
        eta_db,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaRow<T> {
    pub term: EffectTerm,
    pub label: String,
    pub df: usize,
    pub sum_sq: T,
    pub mean_sq: T,
    pub f_value: Option<T>,
    pub p_value: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow<T> {
    pub df: usize,
    pub sum_sq: T,
    pub mean_sq: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaTable<T> {
    pub rows: Vec<AnovaRow<T>>,
    pub residual: ResidualRow<T>,
    /// Labels and SS of the explicitly pooled terms.
    pub pooled: Vec<(String, T)>,
    /// `sum (eta_k - mean)^2`.
    pub total_sum_sq: T,
    /// F and p are omitted because the residual has no degrees of freedom.
    pub residual_df_zero: bool,
}

/// `(c'eta)^2 / K` for every base-factor interaction, keyed by its term;
/// the first entry is the identity. Uses the fast Walsh-Hadamard transform
/// when the run order is the standard order of the base factors.
fn contrast_spectrum<T: Real>(design: &Design, eta: &[T]) -> Result<Vec<(EffectTerm, T)>> {
    let k = design.runs();
    let kf = T::count(k as u64);
    let base = design.base_factors();
    let nb = base.len();
    let standard = base.iter().enumerate().all(|(pos, &j)| {
        let bit = nb - 1 - pos;
        (0..k).all(|r| design.entry(r, j) == if (r >> bit) & 1 == 0 { 1 } else { -1 })
    });
    let mut out = Vec::with_capacity(k);
    if standard {
        let mut h = eta.to_vec();
        let mut len = 1;
        while len < k {
            for start in (0..k).step_by(2 * len) {
                for i in start..start + len {
                    let (a, b) = (h[i], h[i + len]);
                    h[i] = a + b;
                    h[i + len] = a - b;
                }
            }
            len *= 2;
        }
        for (mask, &v) in h.iter().enumerate() {
            let term = EffectTerm::from_indices(
                (0..nb)
                    .filter(|pos| mask & (1 << (nb - 1 - pos)) != 0)
                    .map(|pos| base[pos]),
            );
            out.push((term, v * v / kf));
        }
    } else {
        for mask in 0..k {
            let term = EffectTerm::from_indices(
                (0..nb)
                    .filter(|pos| mask & (1 << pos) != 0)
                    .map(|pos| base[pos]),
            );
            let c = design.column_product(term)?;
            let dot: T = c
                .iter()
                .zip(eta)
                .map(|(&ci, &e)| if ci > 0 { e } else { -e })
                .sum();
            out.push((term, dot * dot / kf));
        }
    }
    Ok(out)
}

/// Single-df ANOVA on orthogonal `±1` contrasts.
///
/// Each term's SS is `(c'eta)^2 / K`. The residual collects the pooled terms
/// and any contrast of the design not named in either list.
pub fn taguchi_anova<T: Real>(
    design: &Design,
    eta: &[T],
    model_terms: &[EffectTerm],
    pooled_terms: &[EffectTerm],
) -> Result<AnovaTable<T>> {
    let k = design.runs();
    if eta.len() != k {
        return Err(Error::Alignment(format!(
            "{} SN ratios for a {k}-run design",
            eta.len()
        )));
    }
    let mut keys: Vec<(EffectTerm, EffectTerm)> = Vec::new();
    for &t in model_terms.iter().chain(pooled_terms) {
        if t.is_identity() {
            return Err(Error::Anova("empty term".into()));
        }
        let key = design.base_reduce(t);
        if key.is_identity() {
            return Err(Error::Anova(format!(
                "{} is confounded with the mean",
                design.term_label(t)
            )));
        }
        if let Some((other, _)) = keys.iter().find(|(_, k)| *k == key) {
            return Err(if *other == t {
                Error::Anova(format!("term {} listed twice", design.term_label(t)))
            } else {
                Error::Confounded {
                    first: design.term_label(*other),
                    second: design.term_label(t),
                }
            });
        }
        keys.push((t, key));
    }
    if model_terms.len() > k - 1 {
        return Err(Error::Anova(format!(
            "{} model terms exceed the {} available contrasts",
            model_terms.len(),
            k - 1
        )));
    }

    let kf = T::count(k as u64);
    let spectrum = contrast_spectrum(design, eta)?;
    let total_sum_sq: T = spectrum.iter().skip(1).map(|&(_, ss)| ss).sum();
    let contrast_ss = |t: EffectTerm| -> Result<T> {
        let c = design.column_product(t)?;
        let dot: T = c
            .iter()
            .zip(eta)
            .map(|(&ci, &e)| if ci > 0 { e } else { -e })
            .sum();
        Ok(dot * dot / kf)
    };

    let mut model_ss = Vec::with_capacity(model_terms.len());
    for &t in model_terms {
        model_ss.push(contrast_ss(t)?);
    }
    let mut pooled = Vec::with_capacity(pooled_terms.len());
    for &t in pooled_terms {
        pooled.push((design.term_label(t), contrast_ss(t)?));
    }
    // summing the unused contrasts keeps an exact zero exact
    let residual_ss: T = spectrum
        .iter()
        .skip(1)
        .filter(|(key, _)| !keys[..model_terms.len()].iter().any(|(_, k)| k == key))
        .map(|&(_, ss)| ss)
        .sum();
    let residual_df = k - 1 - model_terms.len();
    let residual_ms = if residual_df > 0 {
        Some(residual_ss / T::count(residual_df as u64))
    } else {
        None
    };

    let mut rows = Vec::with_capacity(model_terms.len());
    for (&t, &ss) in model_terms.iter().zip(&model_ss) {
        let (f_value, p_value) = match residual_ms {
            // a perfect fit leaves nothing to test against
            Some(ms) if ms == T::zero() => (None, None),
            Some(ms) => {
                let f = ss / ms;
                let p = f_sf(f, T::one(), T::count(residual_df as u64))?;
                (Some(f), Some(p))
            }
            None => (None, None),
        };
        rows.push(AnovaRow {
            term: t,
            label: design.term_label(t),
            df: 1,
            sum_sq: ss,
            mean_sq: ss,
            f_value,
            p_value,
        });
    }
    Ok(AnovaTable {
        rows,
        residual: ResidualRow {
            df: residual_df,
            sum_sq: residual_ss,
            mean_sq: residual_ms,
        },
        pooled,
        total_sum_sq,
        residual_df_zero: residual_df == 0,
    })
}

/// SN summaries of aligned runs followed by the ANOVA of their `eta`.
pub fn sn_anova<T: Real>(
    design: &Design,
    data: &[RunTable],
    model_terms: &[EffectTerm],
    pooled_terms: &[EffectTerm],
    correction: Correction,
) -> Result<(Vec<SnSummary<T>>, AnovaTable<T>)> {
    check_aligned(design, data)?;
    let summaries = data
        .iter()
        .map(|r| summarize::<T>(r, correction))
        .collect::<Result<Vec<_>>>()?;
    let eta: Vec<T> = summaries.iter().map(|s| s.eta_db).collect();
    let table = taguchi_anova(design, &eta, model_terms, pooled_terms)?;
    Ok((summaries, table))
}
