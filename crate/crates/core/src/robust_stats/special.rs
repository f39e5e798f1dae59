//! Gamma and beta function machinery and the F, chi-square and normal
//! distributions built on it.

use std::f64::consts::PI;

use crate::error::{QppError, Result};

const EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;
const MAX_ITER: usize = 100_000;

// Lanczos approximation, g = 7, n = 9.
const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
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

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(QppError::Domain(format!("ln_gamma({x})")));
    }
    Ok(ln_gamma_unchecked(x))
}

fn ln_gamma_unchecked(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection: Γ(x)Γ(1−x) = π / sin(πx)
        return (PI / (PI * x).sin()).ln() - ln_gamma_unchecked(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma_unchecked(a) + ln_gamma_unchecked(b) - ln_gamma_unchecked(a + b)
}

/// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> Result<f64> {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            return Ok(h);
        }
    }
    Err(QppError::NoConvergence(format!(
        "incomplete beta continued fraction at a={a}, b={b}, x={x}"
    )))
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) || !(0.0..=1.0).contains(&x) || !a.is_finite() || !b.is_finite() {
        return Err(QppError::Domain(format!("I_{x}({a}, {b})")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let ln_front = a * x.ln() + b * (1.0 - x).ln() - ln_beta(a, b);
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok((ln_front.exp() * beta_continued_fraction(a, b, x)? / a).clamp(0.0, 1.0))
    } else {
        Ok((1.0 - ln_front.exp() * beta_continued_fraction(b, a, 1.0 - x)? / b).clamp(0.0, 1.0))
    }
}

fn gamma_series(a: f64, x: f64) -> Result<f64> {
    let mut ap = a;
    let mut sum = 1.0 / a;
    let mut del = sum;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * EPS {
            return Ok(sum * (-x + a * x.ln() - ln_gamma_unchecked(a)).exp());
        }
    }
    Err(QppError::NoConvergence(format!(
        "incomplete gamma series at a={a}, x={x}"
    )))
}

fn gamma_continued_fraction(a: f64, x: f64) -> Result<f64> {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            return Ok((-x + a * x.ln() - ln_gamma_unchecked(a)).exp() * h);
        }
    }
    Err(QppError::NoConvergence(format!(
        "incomplete gamma continued fraction at a={a}, x={x}"
    )))
}

fn check_gamma_args(a: f64, x: f64) -> Result<()> {
    if !(a > 0.0) || !(x >= 0.0) || !a.is_finite() || x.is_nan() {
        return Err(QppError::Domain(format!("incomplete gamma({a}, {x})")));
    }
    Ok(())
}

/// Lower regularized incomplete gamma `P(a, x)`.
pub fn regularized_gamma_p(a: f64, x: f64) -> Result<f64> {
    check_gamma_args(a, x)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    if x < a + 1.0 {
        gamma_series(a, x)
    } else {
        Ok(1.0 - gamma_continued_fraction(a, x)?)
    }
}

/// Upper regularized incomplete gamma `Q(a, x) = 1 − P(a, x)`.
pub fn regularized_gamma_q(a: f64, x: f64) -> Result<f64> {
    check_gamma_args(a, x)?;
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    if x < a + 1.0 {
        Ok(1.0 - gamma_series(a, x)?)
    } else {
        gamma_continued_fraction(a, x)
    }
}

/// Standard normal CDF, via `erfc(t) = Q(1/2, t²)`.
pub fn normal_cdf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    let t = z / std::f64::consts::SQRT_2;
    // The incomplete gamma routines only fail on domain errors, which
    // cannot occur for a = 1/2 and finite t².
    let q = regularized_gamma_q(0.5, t * t).unwrap_or(0.0);
    if z < 0.0 {
        0.5 * q
    } else {
        1.0 - 0.5 * q
    }
}

fn check_df(d: f64, what: &str) -> Result<()> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(QppError::Domain(format!("{what} must be positive, got {d}")));
    }
    Ok(())
}

pub fn f_cdf(x: f64, d1: f64, d2: f64) -> Result<f64> {
    check_df(d1, "d1")?;
    check_df(d2, "d2")?;
    if x.is_nan() {
        return Err(QppError::Domain("F cdf at NaN".into()));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    let u = d1 * x;
    // I_{u/(u+d2)}(d1/2, d2/2), using the complementary argument directly to
    // avoid cancellation in 1 − u/(u+d2).
    let z = u / (u + d2);
    let zc = d2 / (u + d2);
    let (a, b) = (d1 / 2.0, d2 / 2.0);
    if z < (a + 1.0) / (a + b + 2.0) {
        regularized_incomplete_beta(a, b, z)
    } else {
        Ok(1.0 - regularized_incomplete_beta(b, a, zc)?)
    }
}

pub fn f_pdf(x: f64, d1: f64, d2: f64) -> Result<f64> {
    check_df(d1, "d1")?;
    check_df(d2, "d2")?;
    if x < 0.0 {
        return Ok(0.0);
    }
    if x == 0.0 {
        return Ok(match d1.partial_cmp(&2.0) {
            Some(std::cmp::Ordering::Less) => f64::INFINITY,
            Some(std::cmp::Ordering::Equal) => 1.0,
            _ => 0.0,
        });
    }
    let ln = 0.5 * d1 * (d1 / d2).ln() + (0.5 * d1 - 1.0) * x.ln()
        - 0.5 * (d1 + d2) * (1.0 + d1 * x / d2).ln()
        - ln_beta(0.5 * d1, 0.5 * d2);
    Ok(ln.exp())
}

pub fn chi_square_cdf(x: f64, df: f64) -> Result<f64> {
    check_df(df, "df")?;
    if x <= 0.0 {
        return Ok(0.0);
    }
    regularized_gamma_p(0.5 * df, 0.5 * x)
}

fn chi_square_pdf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let k = 0.5 * df;
    ((k - 1.0) * x.ln() - 0.5 * x - k * 2f64.ln() - ln_gamma_unchecked(k)).exp()
}

/// Target accuracy on the CDF at the returned quantile.
const QUANTILE_CDF_TOL: f64 = 1e-10;

/// Inverts a continuous CDF on `(0, ∞)`: bracket, bisect to a relative
/// width of 1e-3, then safeguarded Newton.
fn invert_cdf<C, D>(p: f64, cdf: C, pdf: D, what: &str) -> Result<f64>
where
    C: Fn(f64) -> Result<f64>,
    D: Fn(f64) -> f64,
{
    if !(p > 0.0 && p < 1.0) {
        return Err(QppError::Domain(format!("probability must lie in (0, 1), got {p}")));
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut guard = 0;
    while cdf(hi)? < p {
        lo = hi;
        hi *= 2.0;
        guard += 1;
        if guard > 2000 {
            return Err(QppError::NoConvergence(format!("{what}: could not bracket p = {p}")));
        }
    }
    while hi - lo > 1e-3 * hi.max(1e-300) {
        let mid = 0.5 * (lo + hi);
        if cdf(mid)? < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    let mut best = (f64::INFINITY, x);
    for _ in 0..200 {
        let fx = cdf(x)? - p;
        if fx.abs() < best.0 {
            best = (fx.abs(), x);
        }
        if fx == 0.0 {
            break;
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = pdf(x);
        let mut next = if d > 0.0 && d.is_finite() { x - fx / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs() {
            x = next;
            break;
        }
        x = next;
    }
    let fx = (cdf(x)? - p).abs();
    if fx < best.0 {
        best = (fx, x);
    }
    if best.0 > QUANTILE_CDF_TOL {
        return Err(QppError::NoConvergence(format!(
            "{what}: |CDF - p| = {:e} after root finding",
            best.0
        )));
    }
    Ok(best.1)
}

/// Quantile of the F distribution with `d1`, `d2` degrees of freedom.
pub fn f_quantile(d1: u64, d2: u64, p: f64) -> Result<f64> {
    if d1 == 0 || d2 == 0 {
        return Err(QppError::Domain(format!(
            "F({d1}, {d2}) degrees of freedom must be >= 1"
        )));
    }
    let (a, b) = (d1 as f64, d2 as f64);
    invert_cdf(
        p,
        |x| f_cdf(x, a, b),
        |x| f_pdf(x, a, b).unwrap_or(f64::NAN),
        "f_quantile",
    )
}

/// Quantile of the chi-square distribution with `df` degrees of freedom.
pub fn chi_square_quantile(df: u64, p: f64) -> Result<f64> {
    if df == 0 {
        return Err(QppError::Domain("chi-square degrees of freedom must be >= 1".into()));
    }
    let k = df as f64;
    invert_cdf(
        p,
        |x| chi_square_cdf(x, k),
        |x| chi_square_pdf(x, k),
        "chi_square_quantile",
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ln_gamma_factorials() {
        assert_abs_diff_eq!(ln_gamma(1.0).unwrap(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(ln_gamma(2.0).unwrap(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(ln_gamma(5.0).unwrap(), 24f64.ln(), epsilon = 1e-13);
        assert_abs_diff_eq!(ln_gamma(0.5).unwrap(), PI.sqrt().ln(), epsilon = 1e-14);
        assert!(ln_gamma(0.0).is_err());
        assert!(ln_gamma(-1.0).is_err());
    }

    #[test]
    fn incomplete_beta_identities() {
        for x in [0.0, 0.1, 0.37, 0.5, 0.9, 1.0] {
            assert_abs_diff_eq!(regularized_incomplete_beta(1.0, 1.0, x).unwrap(), x, epsilon = 1e-14);
        }
        for a in [0.5, 1.0, 3.0, 12.5, 200.0] {
            assert_abs_diff_eq!(regularized_incomplete_beta(a, a, 0.5).unwrap(), 0.5, epsilon = 1e-12);
        }
        assert!(regularized_incomplete_beta(0.0, 1.0, 0.5).is_err());
        assert!(regularized_incomplete_beta(1.0, 1.0, 1.5).is_err());
    }

    #[test]
    fn normal_cdf_symmetry() {
        assert_eq!(normal_cdf(0.0), 0.5);
        for z in [0.1, 0.5, 1.0, 1.96, 3.0, 6.0] {
            assert_abs_diff_eq!(normal_cdf(z) + normal_cdf(-z), 1.0, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(normal_cdf(1.959_963_984_540_054), 0.975, epsilon = 1e-13);
    }

    #[test]
    fn chi_square_df2_closed_form() {
        for p in [0.01, 0.5, 0.9, 0.95, 0.999] {
            let q = chi_square_quantile(2, p).unwrap();
            assert_abs_diff_eq!(q, -2.0 * (1.0 - p).ln(), epsilon = 1e-8 * q.max(1.0));
        }
    }

    #[test]
    fn f_quantile_inverts_cdf() {
        for (d1, d2) in [(1, 10), (2, 10), (4, 96), (8, 50)] {
            for p in [0.5, 0.95, 0.99] {
                let q = f_quantile(d1, d2, p).unwrap();
                assert!((f_cdf(q, d1 as f64, d2 as f64).unwrap() - p).abs() <= 1e-10);
            }
        }
        assert!(f_quantile(0, 5, 0.5).is_err());
        assert!(f_quantile(2, 5, 1.0).is_err());
        assert!(chi_square_quantile(2, 0.0).is_err());
    }
}
