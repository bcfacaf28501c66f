//! Product-binomial model with log-linear odds-ratio structure.
//!
//! Run `k` contributes two binomial observations: row `M = 1` with
//! `n_{1.k}` trials and `n_{11k}` successes, row `M = 2` with `n_{2.k}`
//! trials and `n_{21k}` successes. Their logits are `alpha_k + x_k'beta`
//! and `alpha_k`, so the log odds ratio of run `k` is exactly `x_k'beta`
//! and the run baselines `alpha_k` absorb the column margins.
//!
//! The fit is IRLS on those `2K` observations. With the canonical logit
//! link IRLS coincides with Newton-Raphson; the weighted normal equations
//! are solved by eliminating the diagonal `alpha` block, which leaves a
//! `nu x nu` system whose run weights are `w1 w2 / (w1 + w2)`.

use serde::{Deserialize, Serialize};

use crate::design::Design;
use crate::error::{Error, Result};
use crate::model::{column_keys, covariate_matrix, ModelFormula};
use crate::numeric::chi2_sf;
use crate::run::{check_aligned, RunTable};
use crate::scalar::Real;

/// Stopping rules for [`fit_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Converged when no linear predictor moves by more than this.
    pub eta_tol: f64,
    /// Also stop when the deviance changes by less than this; on a boundary
    /// fit this freezes a diverging coefficient.
    pub deviance_tol: f64,
    /// Fitted cells below this flag the run as a boundary run.
    pub boundary_cell: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            eta_tol: 1e-10,
            deviance_tol: 1e-12,
            boundary_cell: 1e-6,
        }
    }
}

/// A fitted odds-ratio model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmFit<T> {
    pub formula: String,
    pub labels: Vec<String>,
    pub beta: Vec<T>,
    /// `alpha_k`, the logit of `p_{21k}`.
    pub run_baselines: Vec<T>,
    /// `x_k'beta`, the fitted log odds ratio of each run.
    pub log_odds_ratio: Vec<T>,
    pub fitted: Vec<[[T; 2]; 2]>,
    pub observed: Vec<[[u64; 2]; 2]>,
    pub deviance_vs_saturated: T,
    pub iterations: usize,
    pub converged: bool,
    pub boundary_flags: Vec<bool>,
    /// Base-factor keys of the covariate columns; used for nesting checks.
    pub column_keys: Vec<u64>,
}

impl<T: Real> GlmFit<T> {
    pub fn num_params(&self) -> usize {
        self.beta.len()
    }

    pub fn any_boundary(&self) -> bool {
        self.boundary_flags.iter().any(|&b| b)
    }
}

/// Likelihood-ratio test between nested formulas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrTestResult<T> {
    pub statistic: T,
    pub df: usize,
    /// 1 when `df == 0`.
    pub p_value: T,
    pub df_zero: bool,
    pub null_fit: GlmFit<T>,
    pub alt_fit: GlmFit<T>,
}

#[inline]
fn sigmoid<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
fn softplus<T: Real>(z: T) -> T {
    z.max(T::zero()) + (-z.abs()).exp().ln_1p()
}

/// Binomial deviance contribution of `y` successes in `n` trials at logit `eta`.
fn binomial_deviance<T: Real>(y: u64, n: u64, eta: T) -> T {
    let two = T::lit(2.0);
    let nf = T::count(n);
    let mut dev = T::zero();
    if y > 0 {
        let yf = T::count(y);
        // y ln(y / (n sigma(eta)))
        dev = dev + yf * ((yf / nf).ln() + softplus(-eta));
    }
    if n > y {
        let rf = T::count(n - y);
        dev = dev + rf * ((rf / nf).ln() + softplus(eta));
    }
    two * dev
}

struct Problem<T> {
    x: Vec<Vec<T>>,
    obs: Vec<[[u64; 2]; 2]>,
}

impl<T: Real> Problem<T> {
    fn eta_pair(&self, k: usize, alpha: &[T], beta: &[T]) -> (T, T) {
        let xb: T = self.x[k].iter().zip(beta).map(|(&a, &b)| a * b).sum();
        (alpha[k] + xb, alpha[k])
    }

    fn deviance(&self, alpha: &[T], beta: &[T]) -> T {
        (0..self.obs.len())
            .map(|k| {
                let (e1, e2) = self.eta_pair(k, alpha, beta);
                let [[a, b], [c, d]] = self.obs[k];
                binomial_deviance(a, a + b, e1) + binomial_deviance(c, c + d, e2)
            })
            .sum()
    }
}

/// Solves `S v = r` for symmetric positive semidefinite `S` by LDL'.
///
/// Pivots that vanish relative to the largest diagonal entry leave their
/// component at zero, so directions with no remaining information do not move.
fn solve_psd<T: Real>(mut s: Vec<Vec<T>>, r: &[T]) -> Vec<T> {
    let n = r.len();
    let max_diag = (0..n).map(|i| s[i][i].abs()).fold(T::zero(), T::max);
    let cutoff = max_diag * T::epsilon() * T::lit(16.0 * n.max(1) as f64);
    let mut active = vec![true; n];
    for j in 0..n {
        let mut d = s[j][j];
        for k in 0..j {
            if active[k] {
                d = d - s[j][k] * s[j][k] * s[k][k];
            }
        }
        if !(d > cutoff) {
            active[j] = false;
            s[j][j] = T::zero();
            continue;
        }
        s[j][j] = d;
        for i in j + 1..n {
            let mut v = s[i][j];
            for k in 0..j {
                if active[k] {
                    v = v - s[i][k] * s[j][k] * s[k][k];
                }
            }
            s[i][j] = v / d;
        }
    }
    // forward: L z = r
    let mut z = r.to_vec();
    for i in 0..n {
        for k in 0..i {
            if active[k] {
                z[i] = z[i] - s[i][k] * z[k];
            }
        }
    }
    for i in 0..n {
        z[i] = if active[i] { z[i] / s[i][i] } else { T::zero() };
    }
    // backward: L' v = z
    for i in (0..n).rev() {
        if !active[i] {
            continue;
        }
        for k in i + 1..n {
            if active[k] {
                z[i] = z[i] - s[k][i] * z[k];
            }
        }
    }
    z
}

/// Fits `formula` with default [`FitOptions`].
pub fn fit<T: Real>(
    design: &Design,
    data: &[RunTable],
    formula: &ModelFormula,
) -> Result<GlmFit<T>> {
    fit_with(design, data, formula, &FitOptions::default())
}

/// Maximum-likelihood fit of `log theta_k = x_k'beta` under independent
/// binomial sampling of the two rows of each run.
pub fn fit_with<T: Real>(
    design: &Design,
    data: &[RunTable],
    formula: &ModelFormula,
    opts: &FitOptions,
) -> Result<GlmFit<T>> {
    check_aligned(design, data)?;
    let xm = covariate_matrix(formula, design)?;
    let runs = design.runs();
    let nu = xm.ncols();
    let problem = Problem {
        x: (0..runs)
            .map(|k| xm.row(k).into_iter().map(|v| T::lit(v as f64)).collect())
            .collect(),
        obs: data.iter().map(RunTable::cells).collect::<Vec<_>>(),
    };
    let half = T::lit(0.5);
    let mut alpha: Vec<T> = problem
        .obs
        .iter()
        .map(|&[[a, b], [c, d]]| ((T::count(a + c) + half) / (T::count(b + d) + half)).ln())
        .collect();
    let mut beta = vec![T::zero(); nu];
    let mut dev = problem.deviance(&alpha, &beta);

    let eta_tol = T::attainable(opts.eta_tol, 64.0);
    let dev_floor = T::attainable(opts.deviance_tol, 0.0);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let mut s_alpha = vec![T::zero(); runs];
        let mut w1 = vec![T::zero(); runs];
        let mut dk = vec![T::zero(); runs];
        let mut schur = vec![vec![T::zero(); nu]; nu];
        let mut rhs = vec![T::zero(); nu];
        for k in 0..runs {
            let (e1, e2) = problem.eta_pair(k, &alpha, &beta);
            let [[a, b], [c, d]] = problem.obs[k];
            let (n1, n2) = (T::count(a + b), T::count(c + d));
            let (p1, p2) = (sigmoid(e1), sigmoid(e2));
            let r1 = T::count(a) - n1 * p1;
            let r2 = T::count(c) - n2 * p2;
            let wa = n1 * p1 * sigmoid(-e1);
            let wb = n2 * p2 * sigmoid(-e2);
            s_alpha[k] = r1 + r2;
            w1[k] = wa;
            dk[k] = wa + wb;
            let (eff_w, eff_r) = if dk[k] > T::zero() {
                (wa * wb / dk[k], r1 - wa / dk[k] * (r1 + r2))
            } else {
                (T::zero(), T::zero())
            };
            let xk = &problem.x[k];
            for i in 0..nu {
                rhs[i] = rhs[i] + eff_r * xk[i];
                for j in 0..=i {
                    schur[i][j] = schur[i][j] + eff_w * xk[i] * xk[j];
                }
            }
        }
        for i in 0..nu {
            for j in 0..i {
                schur[j][i] = schur[i][j];
            }
        }
        let d_beta = solve_psd(schur, &rhs);
        let d_alpha: Vec<T> = (0..runs)
            .map(|k| {
                if dk[k] > T::zero() {
                    let xd: T = problem.x[k].iter().zip(&d_beta).map(|(&a, &b)| a * b).sum();
                    (s_alpha[k] - w1[k] * xd) / dk[k]
                } else {
                    T::zero()
                }
            })
            .collect();

        let mut step = T::one();
        let mut next = None;
        for _ in 0..30 {
            let a_new: Vec<T> = alpha
                .iter()
                .zip(&d_alpha)
                .map(|(&a, &d)| a + step * d)
                .collect();
            let b_new: Vec<T> = beta
                .iter()
                .zip(&d_beta)
                .map(|(&b, &d)| b + step * d)
                .collect();
            let dev_new = problem.deviance(&a_new, &b_new);
            if dev_new <= dev + dev_floor {
                next = Some((a_new, b_new, dev_new));
                break;
            }
            step = step * half;
        }
        let Some((a_new, b_new, dev_new)) = next else {
            // no descent along the Newton direction: numerically stationary
            converged = true;
            break;
        };
        let max_move = (0..runs)
            .map(|k| {
                let xd: T = problem.x[k].iter().zip(&d_beta).map(|(&a, &b)| a * b).sum();
                let da = d_alpha[k].abs();
                da.max((d_alpha[k] + xd).abs()) * step
            })
            .fold(T::zero(), T::max);
        let dev_change = (dev - dev_new).abs();
        alpha = a_new;
        beta = b_new;
        dev = dev_new;
        if max_move < eta_tol || dev_change < dev_floor {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            iterations,
            deviance: dev.as_f64(),
            beta: beta.iter().map(|b| b.as_f64()).collect(),
        });
    }

    let boundary_cell = T::lit(opts.boundary_cell);
    let mut fitted = Vec::with_capacity(runs);
    let mut log_odds_ratio = Vec::with_capacity(runs);
    let mut boundary_flags = Vec::with_capacity(runs);
    for k in 0..runs {
        let (e1, e2) = problem.eta_pair(k, &alpha, &beta);
        let [[a, b], [c, d]] = problem.obs[k];
        let (n1, n2) = (T::count(a + b), T::count(c + d));
        let cells = [
            [n1 * sigmoid(e1), n1 * sigmoid(-e1)],
            [n2 * sigmoid(e2), n2 * sigmoid(-e2)],
        ];
        boundary_flags.push(cells.iter().flatten().any(|&m| m < boundary_cell));
        fitted.push(cells);
        log_odds_ratio.push(e1 - e2);
    }
    Ok(GlmFit {
        formula: formula.to_string(),
        labels: xm.column_labels.clone(),
        beta,
        run_baselines: alpha,
        log_odds_ratio,
        fitted,
        observed: problem.obs,
        deviance_vs_saturated: dev,
        iterations,
        converged,
        boundary_flags,
        column_keys: column_keys(formula, design).iter().map(|t| t.0).collect(),
    })
}

/// `2 sum n log(alt / null)` over all cells; cells with `n = 0` contribute 0.
///
/// A null fitted cell of 0 under a positive count gives `+inf`.
pub fn deviance_between<T: Real>(null_fit: &GlmFit<T>, alt_fit: &GlmFit<T>) -> Result<T> {
    if null_fit.observed != alt_fit.observed {
        return Err(Error::Inconsistent(
            "fits were made on different data".into(),
        ));
    }
    let mut total = T::zero();
    for ((obs, h), t) in null_fit
        .observed
        .iter()
        .zip(&null_fit.fitted)
        .zip(&alt_fit.fitted)
    {
        for i in 0..2 {
            for j in 0..2 {
                let n = obs[i][j];
                if n == 0 {
                    continue;
                }
                if h[i][j] == T::zero() {
                    return Ok(T::infinity());
                }
                total = total + T::count(n) * (t[i][j] / h[i][j]).ln();
            }
        }
    }
    Ok(T::lit(2.0) * total)
}

fn check_nested(null: &[u64], alt: &[u64], null_name: &str, alt_name: &str) -> Result<()> {
    let missing: Vec<u64> = null.iter().copied().filter(|k| !alt.contains(k)).collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::NotNested(format!(
            "`{null_name}` has {} column(s) outside `{alt_name}`",
            missing.len()
        )))
    }
}

/// Likelihood-ratio test of `null` against a larger `alt` formula.
pub fn lr_test<T: Real>(
    design: &Design,
    data: &[RunTable],
    null: &ModelFormula,
    alt: &ModelFormula,
) -> Result<LrTestResult<T>> {
    lr_test_with(design, data, null, alt, &FitOptions::default())
}

pub fn lr_test_with<T: Real>(
    design: &Design,
    data: &[RunTable],
    null: &ModelFormula,
    alt: &ModelFormula,
    opts: &FitOptions,
) -> Result<LrTestResult<T>> {
    let null_keys: Vec<u64> = column_keys(null, design).iter().map(|t| t.0).collect();
    let alt_keys: Vec<u64> = column_keys(alt, design).iter().map(|t| t.0).collect();
    check_nested(&null_keys, &alt_keys, &null.to_string(), &alt.to_string())?;
    let null_fit = fit_with::<T>(design, data, null, opts)?;
    let alt_fit = fit_with::<T>(design, data, alt, opts)?;
    let df = alt_fit.num_params() - null_fit.num_params();
    let statistic = deviance_between(&null_fit, &alt_fit)?;
    let (p_value, df_zero) = if df == 0 {
        (T::one(), true)
    } else {
        (
            chi2_sf(statistic.max(T::zero()), T::count(df as u64))?,
            false,
        )
    };
    Ok(LrTestResult {
        statistic,
        df,
        p_value,
        df_zero,
        null_fit,
        alt_fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_formula;

    fn toy() -> (Design, Vec<RunTable>) {
        let d = Design::full_factorial(&["A", "B"]).unwrap();
        let counts = [
            (12, 8, 5, 15),
            (9, 11, 7, 13),
            (15, 5, 4, 16),
            (10, 10, 9, 11),
        ];
        let runs = counts
            .iter()
            .enumerate()
            .map(|(k, &(a, b, c, e))| RunTable::new(d.levels(k), a, b, c, e))
            .collect();
        (d, runs)
    }

    #[test]
    fn saturated_reproduces_data() {
        let (d, runs) = toy();
        let f = fit::<f64>(&d, &runs, &ModelFormula::saturated(&d)).unwrap();
        assert!(f.deviance_vs_saturated.abs() < 1e-8);
        for (fit, obs) in f.fitted.iter().zip(&f.observed) {
            for i in 0..2 {
                for j in 0..2 {
                    assert!((fit[i][j] - obs[i][j] as f64).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn identical_fits_have_zero_deviance() {
        let (d, runs) = toy();
        let f = fit::<f64>(&d, &runs, &parse_formula("A", &d).unwrap()).unwrap();
        assert_eq!(deviance_between(&f, &f).unwrap(), 0.0);
        let r = lr_test::<f64>(
            &d,
            &runs,
            &parse_formula("A", &d).unwrap(),
            &parse_formula("A", &d).unwrap(),
        )
        .unwrap();
        assert_eq!(r.df, 0);
        assert!(r.df_zero);
        assert_eq!(r.p_value, 1.0);
        assert!(r.statistic.abs() < 1e-12);
    }

    #[test]
    fn non_nested_rejected() {
        let (d, runs) = toy();
        let err = lr_test::<f64>(
            &d,
            &runs,
            &parse_formula("A", &d).unwrap(),
            &parse_formula("B", &d).unwrap(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NotNested(_)));
    }

    #[test]
    fn psd_solver_skips_null_directions() {
        // rank-one matrix: only the (1, 1) direction is informative
        let s = vec![vec![1.0_f64, 1.0], vec![1.0, 1.0]];
        let v = solve_psd(s, &[2.0, 2.0]);
        assert!((v[0] + v[1] - 2.0).abs() < 1e-12);
        let v = solve_psd(vec![vec![4.0_f64, 2.0], vec![2.0, 3.0]], &[2.0, 1.0]);
        assert!((4.0 * v[0] + 2.0 * v[1] - 2.0).abs() < 1e-12);
        assert!((2.0 * v[0] + 3.0 * v[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softplus_and_deviance_edges() {
        assert!((softplus(0.0_f64) - 2f64.ln()).abs() < 1e-15);
        assert!((softplus(800.0_f64) - 800.0).abs() < 1e-12);
        assert!(softplus(-800.0_f64) >= 0.0);
        // all successes: deviance vanishes as eta grows
        assert!(binomial_deviance::<f64>(10, 10, 40.0) < 1e-15);
        assert_eq!(binomial_deviance::<f64>(0, 0, 3.0), 0.0);
    }

    #[test]
    fn single_precision_fit() {
        let (d, runs) = toy();
        let f32_fit = fit::<f32>(&d, &runs, &parse_formula("A/B", &d).unwrap()).unwrap();
        let f64_fit = fit::<f64>(&d, &runs, &parse_formula("A/B", &d).unwrap()).unwrap();
        for (a, b) in f32_fit.beta.iter().zip(&f64_fit.beta) {
            assert!((*a as f64 - b).abs() < 1e-4);
        }
    }
}
