//! Adaptive Simpson integration of the chi-square and F densities.

/// Gamma at a half-integer `two_k / 2`, by the recurrence from 1/2 or 1.
pub fn gamma_half(two_k: u32) -> f64 {
    let (mut g, mut x) = if two_k.is_multiple_of(2) {
        (1.0, 1.0)
    } else {
        (std::f64::consts::PI.sqrt(), 0.5)
    };
    while 2.0 * x < f64::from(two_k) {
        g *= x;
        x += 1.0;
    }
    g
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    eps: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * eps {
        return left + right + delta / 15.0;
    }
    adaptive(f, a, m, fa, flm, fm, left, eps / 2.0, depth - 1)
        + adaptive(f, m, b, fm, frm, fb, right, eps / 2.0, depth - 1)
}

fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, eps: f64) -> f64 {
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = simpson(a, b, fa, fm, fb);
    adaptive(&f, a, b, fa, fm, fb, whole, eps, 50)
}

/// Upper chi-square tail after `x = u^2`, which removes the `df = 1` singularity.
pub fn chi2_oracle(t: f64, df: u32) -> f64 {
    let k = f64::from(df) / 2.0;
    let norm = 2f64.powf(k) * gamma_half(df);
    let density = |u: f64| {
        if u == 0.0 {
            return if df == 1 { 2.0 / norm } else { 0.0 };
        }
        2.0 * u.powf(2.0 * k - 1.0) * (-u * u / 2.0).exp() / norm
    };
    let lo = t.sqrt();
    integrate(density, lo, lo + 60.0, 1e-14)
}

/// `P(F > f)` as a beta integral over `[0, z]`, `z = d2 / (d2 + d1 f)`,
/// with `t = s^2` to tame the `a = 1/2` endpoint.
pub fn f_oracle(f: f64, d1: u32, d2: u32) -> f64 {
    let (a, b) = (f64::from(d2) / 2.0, f64::from(d1) / 2.0);
    let beta = gamma_half(d2) * gamma_half(d1) / gamma_half(d1 + d2);
    let z = f64::from(d2) / (f64::from(d2) + f64::from(d1) * f);
    let integrand = |s: f64| {
        if s == 0.0 {
            return if d2 == 1 { 2.0 } else { 0.0 };
        }
        2.0 * s.powf(2.0 * a - 1.0) * (1.0 - s * s).powf(b - 1.0)
    };
    integrate(integrand, 0.0, z.sqrt(), 1e-14) / beta
}
