//! Special functions and small numeric kernels.
//!
//! Everything here is a pure function of its arguments. The chi-square and
//! F survival functions back every p-value in the crate; the 2x2 solver is
//! used to cross-check fitted tables against their margins and odds ratio.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Convergence controls for iterative kernels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
    pub max_iter: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            rel: 1e-12,
            abs: 1e-14,
            max_iter: 500,
        }
    }
}

impl Tolerance {
    pub fn new(rel: f64, abs: f64, max_iter: usize) -> Result<Self> {
        if !(rel > 0.0) || !(abs > 0.0) || max_iter == 0 {
            return Err(Error::Domain(format!(
                "tolerance requires rel > 0, abs > 0, max_iter >= 1 (got {rel}, {abs}, {max_iter})"
            )));
        }
        Ok(Self { rel, abs, max_iter })
    }
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma<T: Real>(x: T) -> T {
    let half = T::lit(0.5);
    if x < half {
        // reflection: Γ(x)Γ(1-x) = π / sin(πx)
        let pi = T::lit(std::f64::consts::PI);
        return (pi / (pi * x).sin()).ln() - ln_gamma(T::one() - x);
    }
    let x = x - T::one();
    let mut acc = T::lit(LANCZOS_COEF[0]);
    for (i, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc = acc + T::lit(c) / (x + T::lit(i as f64));
    }
    let t = x + T::lit(LANCZOS_G) + half;
    T::lit(0.5 * (2.0 * std::f64::consts::PI).ln()) + (x + half) * t.ln() - t + acc.ln()
}

fn tiny<T: Real>() -> T {
    T::min_positive_value() / T::epsilon()
}

/// Regularized upper incomplete gamma `Q(k, x) = Γ(k, x) / Γ(k)`.
///
/// Series for `x < k + 1`, Lentz continued fraction otherwise.
pub fn regularized_gamma_upper<T: Real>(k: T, x: T, tol: &Tolerance) -> Result<T> {
    if !(k > T::zero()) || !(x >= T::zero()) {
        return Err(Error::Domain(format!(
            "regularized gamma needs k > 0 and x >= 0 (k = {k}, x = {x})"
        )));
    }
    if x == T::zero() {
        return Ok(T::one());
    }
    if x.is_infinite() {
        return Ok(T::zero());
    }
    let rel = T::attainable(tol.rel, 4.0);
    let log_prefactor = -x + k * x.ln() - ln_gamma(k);
    if x < k + T::one() {
        let mut ap = k;
        let mut term = T::one() / k;
        let mut sum = term;
        for _ in 0..tol.max_iter {
            ap = ap + T::one();
            term = term * x / ap;
            sum = sum + term;
            if term.abs() < sum.abs() * rel {
                let p = sum * log_prefactor.exp();
                return Ok((T::one() - p).max(T::zero()));
            }
        }
        Err(Error::IterationLimit {
            what: "incomplete gamma series",
            iterations: tol.max_iter,
        })
    } else {
        let fpmin = tiny::<T>();
        let two = T::lit(2.0);
        let mut b = x + T::one() - k;
        let mut c = T::one() / fpmin;
        let mut d = T::one() / b;
        let mut h = d;
        for i in 1..=tol.max_iter {
            let fi = T::lit(i as f64);
            let an = -fi * (fi - k);
            b = b + two;
            d = an * d + b;
            if d.abs() < fpmin {
                d = fpmin;
            }
            c = b + an / c;
            if c.abs() < fpmin {
                c = fpmin;
            }
            d = T::one() / d;
            let delta = d * c;
            h = h * delta;
            if (delta - T::one()).abs() < rel {
                return Ok((log_prefactor.exp() * h).min(T::one()));
            }
        }
        Err(Error::IterationLimit {
            what: "incomplete gamma continued fraction",
            iterations: tol.max_iter,
        })
    }
}

/// Chi-square survival function `P(X > t)` for `df` degrees of freedom.
pub fn chi2_sf<T: Real>(t: T, df: T) -> Result<T> {
    if !(t >= T::zero()) {
        return Err(Error::Domain(format!(
            "chi-square statistic must be >= 0 (got {t})"
        )));
    }
    let half = T::lit(0.5);
    regularized_gamma_upper(df * half, t * half, &Tolerance::default())
}

fn beta_continued_fraction<T: Real>(a: T, b: T, x: T, tol: &Tolerance) -> Result<T> {
    let fpmin = tiny::<T>();
    let rel = T::attainable(tol.rel, 4.0);
    let one = T::one();
    let two = T::lit(2.0);
    let qab = a + b;
    let qap = a + one;
    let qam = a - one;
    let mut c = one;
    let mut d = one - qab * x / qap;
    if d.abs() < fpmin {
        d = fpmin;
    }
    d = one / d;
    let mut h = d;
    for m in 1..=tol.max_iter {
        let m = T::lit(m as f64);
        let m2 = two * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = one + aa * d;
        if d.abs() < fpmin {
            d = fpmin;
        }
        c = one + aa / c;
        if c.abs() < fpmin {
            c = fpmin;
        }
        d = one / d;
        h = h * d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = one + aa * d;
        if d.abs() < fpmin {
            d = fpmin;
        }
        c = one + aa / c;
        if c.abs() < fpmin {
            c = fpmin;
        }
        d = one / d;
        let delta = d * c;
        h = h * delta;
        if (delta - one).abs() < rel {
            return Ok(h);
        }
    }
    Err(Error::IterationLimit {
        what: "incomplete beta continued fraction",
        iterations: tol.max_iter,
    })
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn regularized_incomplete_beta<T: Real>(x: T, a: T, b: T, tol: &Tolerance) -> Result<T> {
    if !(a > T::zero()) || !(b > T::zero()) || !(x >= T::zero()) || !(x <= T::one()) {
        return Err(Error::Domain(format!(
            "incomplete beta needs 0 <= x <= 1, a > 0, b > 0 (x = {x}, a = {a}, b = {b})"
        )));
    }
    if x == T::zero() {
        return Ok(T::zero());
    }
    if x == T::one() {
        return Ok(T::one());
    }
    let one = T::one();
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (one - x).ln();
    let front = ln_front.exp();
    // the continued fraction converges fast only below the mean; swap otherwise
    if x < (a + one) / (a + b + T::lit(2.0)) {
        let cf = beta_continued_fraction(a, b, x, tol)?;
        Ok((front * cf / a).max(T::zero()).min(one))
    } else {
        let cf = beta_continued_fraction(b, a, one - x, tol)?;
        Ok((one - front * cf / b).max(T::zero()).min(one))
    }
}

/// F-distribution survival function `P(F > f)` with `(d1, d2)` degrees of freedom.
pub fn f_sf<T: Real>(f: T, d1: T, d2: T) -> Result<T> {
    if !(d1 > T::zero()) || !(d2 > T::zero()) {
        return Err(Error::Domain(format!(
            "F degrees of freedom must be > 0 ({d1}, {d2})"
        )));
    }
    if !(f > T::zero()) {
        if f.is_nan() {
            return Err(Error::Domain("F statistic is NaN".into()));
        }
        return Ok(T::one());
    }
    if f.is_infinite() {
        return Ok(T::zero());
    }
    let half = T::lit(0.5);
    let x = d2 / (d2 + d1 * f);
    regularized_incomplete_beta(x, d2 * half, d1 * half, &Tolerance::default())
}

/// A 2x2 table of real cells, `cells[i][j]` for input `i` and output `j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Table2x2<T> {
    pub cells: [[T; 2]; 2],
}

impl<T: Real> Table2x2<T> {
    pub fn new(m11: T, m12: T, m21: T, m22: T) -> Self {
        Self {
            cells: [[m11, m12], [m21, m22]],
        }
    }

    pub fn row_totals(&self) -> [T; 2] {
        [
            self.cells[0][0] + self.cells[0][1],
            self.cells[1][0] + self.cells[1][1],
        ]
    }

    pub fn col_totals(&self) -> [T; 2] {
        [
            self.cells[0][0] + self.cells[1][0],
            self.cells[0][1] + self.cells[1][1],
        ]
    }

    pub fn odds_ratio(&self) -> T {
        let [[a, b], [c, d]] = self.cells;
        (a * d) / (b * c)
    }
}

/// The unique nonnegative 2x2 table with the given margins and odds ratio.
///
/// With `x = m11` the other cells are `row1 - x`, `col1 - x` and
/// `row2 - col1 + x`, and the odds-ratio condition is the root of
/// `f(x) = x (row2 - col1 + x) - theta (row1 - x)(col1 - x)`. On the feasible
/// interval `[lo, hi]`, `lo = max(0, col1 - row2)`, `hi = min(row1, col1)`:
/// the first product is increasing (both factors nonnegative, one
/// increasing), the second is decreasing, so `f` is strictly increasing.
/// `f(lo) <= 0` because at `lo` either `x = 0` or `m22 = 0`, and
/// `f(hi) >= 0` because at `hi` either `m12 = 0` or `m21 = 0`. Exactly one
/// root of the quadratic lies in `[lo, hi]`, and that is the one returned.
pub fn solve_2x2_given_margins_and_odds<T: Real>(
    row1: T,
    row2: T,
    col1: T,
    theta: T,
) -> Result<Table2x2<T>> {
    let zero = T::zero();
    if !(row1 >= zero) || !(row2 >= zero) || !(col1 >= zero) {
        return Err(Error::Domain(format!(
            "margins must be nonnegative (row1 = {row1}, row2 = {row2}, col1 = {col1})"
        )));
    }
    if !(theta > zero) || theta.is_infinite() {
        return Err(Error::Domain(format!(
            "odds ratio must be finite and > 0 (got {theta})"
        )));
    }
    let lo = zero.max(col1 - row2);
    let hi = row1.min(col1);
    if !(lo < hi) {
        return Err(Error::Infeasible(format!(
            "margins (row1 = {row1}, row2 = {row2}, col1 = {col1}) leave no interior table"
        )));
    }

    let one = T::one();
    let two = T::lit(2.0);
    let a = one - theta;
    let b = row2 - col1 + theta * (row1 + col1);
    let c = -theta * row1 * col1;
    let f = |x: T| x * (row2 - col1 + x) - theta * (row1 - x) * (col1 - x);

    let scale = row1 + row2;
    let mut x = if a.abs() <= T::epsilon() * T::lit(16.0) * (one + theta) {
        -c / b
    } else {
        let disc = (b * b - T::lit(4.0) * a * c).max(zero);
        let q = -(b + b.signum() * disc.sqrt()) / two;
        let r1 = q / a;
        let r2 = if q != zero { c / q } else { r1 };
        let slack = T::epsilon() * T::lit(64.0) * scale.max(one);
        let inside = |r: T| r >= lo - slack && r <= hi + slack;
        match (inside(r1), inside(r2)) {
            (true, false) => r1,
            (false, true) => r2,
            // both within rounding of the interval: pick the smaller residual
            _ => {
                if f(r1).abs() <= f(r2).abs() {
                    r1
                } else {
                    r2
                }
            }
        }
    };
    x = x.max(lo).min(hi);
    // one Newton polish, kept inside the bracket
    let slope = two * a * x + b;
    if slope > zero {
        let polished = x - f(x) / slope;
        if polished >= lo && polished <= hi && f(polished).abs() <= f(x).abs() {
            x = polished;
        }
    }
    Ok(Table2x2::new(
        x,
        row1 - x,
        col1 - x,
        (row2 - col1 + x).max(zero),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi2_sf_at_zero_is_one() {
        assert_eq!(chi2_sf(0.0_f64, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn chi2_sf_matches_reported_p_values() {
        let p1 = chi2_sf(13.06_f64, 1.0).unwrap();
        let p2 = chi2_sf(11.56_f64, 1.0).unwrap();
        // the printed statistics are rounded to 2 decimals
        assert!((p1 - 0.000301).abs() < 5e-6, "{p1}");
        assert!((p2 - 0.000674).abs() < 5e-6, "{p2}");
    }

    #[test]
    fn chi2_sf_closed_forms() {
        // df = 2: exp(-t/2)
        for &t in &[0.3_f64, 1.0, 4.0, 30.0] {
            let v = chi2_sf(t, 2.0).unwrap();
            assert!((v - (-t / 2.0).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn gamma_domain_errors() {
        let tol = Tolerance::default();
        assert!(matches!(
            regularized_gamma_upper(1.0_f64, -1.0, &tol),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            regularized_gamma_upper(0.0_f64, 1.0, &tol),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn incomplete_beta_boundaries() {
        let tol = Tolerance::default();
        assert_eq!(
            regularized_incomplete_beta(0.0_f64, 2.0, 3.0, &tol).unwrap(),
            0.0
        );
        assert_eq!(
            regularized_incomplete_beta(1.0_f64, 2.0, 3.0, &tol).unwrap(),
            1.0
        );
        assert!(regularized_incomplete_beta(1.5_f64, 2.0, 3.0, &tol).is_err());
        assert!(regularized_incomplete_beta(0.5_f64, 0.0, 3.0, &tol).is_err());
        // I_x(1, 1) = x
        let v = regularized_incomplete_beta(0.3_f64, 1.0, 1.0, &tol).unwrap();
        assert!((v - 0.3).abs() < 1e-14);
    }

    #[test]
    fn f_sf_matches_anova_table() {
        let p_a = f_sf(18.3578_f64, 1.0, 3.0).unwrap();
        let p_b = f_sf(1.8263_f64, 1.0, 3.0).unwrap();
        assert!((p_a - 0.02336).abs() < 5e-6, "{p_a}");
        assert!((p_b - 0.26944).abs() < 5e-6, "{p_b}");
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!(ln_gamma(1.0_f64).abs() < 1e-14);
        assert!(ln_gamma(2.0_f64).abs() < 1e-14);
        assert!((ln_gamma(5.0_f64) - 24.0_f64.ln()).abs() < 1e-13);
        assert!((ln_gamma(0.5_f64) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-14);
    }

    #[test]
    fn single_precision_tracks_double() {
        let a = chi2_sf(3.2_f32, 4.0).unwrap() as f64;
        let b = chi2_sf(3.2_f64, 4.0).unwrap();
        assert!((a - b).abs() < 1e-5);
        let a = f_sf(2.5_f32, 2.0, 7.0).unwrap() as f64;
        let b = f_sf(2.5_f64, 2.0, 7.0).unwrap();
        assert!((a - b).abs() < 1e-5);
    }

    #[test]
    fn independence_table_for_unit_odds() {
        let t = solve_2x2_given_margins_and_odds(40.0_f64, 20.0, 38.0, 1.0).unwrap();
        assert!((t.cells[0][0] - 40.0 * 38.0 / 60.0).abs() < 1e-12);
    }

    #[test]
    fn reproduces_printed_fitted_table() {
        let theta: f64 = 27.7 * 9.7 / (12.3 * 10.3);
        let t = solve_2x2_given_margins_and_odds(40.0, 20.0, 38.0, theta).unwrap();
        let expect = [[27.7, 12.3], [10.3, 9.7]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((t.cells[i][j] - expect[i][j]).abs() < 0.05);
            }
        }
    }

    #[test]
    fn extreme_odds_push_to_boundary() {
        let t = solve_2x2_given_margins_and_odds(40.0_f64, 20.0, 52.0, 1e12).unwrap();
        assert!(t.cells[0][1] >= 0.0 && t.cells[0][1] < 1e-6);
        assert!((t.row_totals()[0] - 40.0).abs() < 1e-10);
    }

    #[test]
    fn infeasible_margins_rejected() {
        assert!(matches!(
            solve_2x2_given_margins_and_odds(10.0_f64, 5.0, 20.0, 1.0),
            Err(Error::Infeasible(_))
        ));
        assert!(matches!(
            solve_2x2_given_margins_and_odds(0.0_f64, 5.0, 3.0, 2.0),
            Err(Error::Infeasible(_))
        ));
        assert!(matches!(
            solve_2x2_given_margins_and_odds(10.0_f64, 5.0, 3.0, 0.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn tolerance_validation() {
        assert!(Tolerance::new(0.0, 1e-3, 10).is_err());
        assert!(Tolerance::new(1e-3, 1e-3, 0).is_err());
        let d = Tolerance::default();
        assert_eq!((d.rel, d.abs, d.max_iter), (1e-12, 1e-14, 500));
    }
}
