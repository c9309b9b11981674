//! Closed-form large-deviation functions and the Hoeffding tail bounds for
//! sampling without replacement.
//!
//! All functions are generic over the float type. Logarithms of ratios are
//! written through `ln_1p` so that small margins do not cancel.

use num_traits::Float;

use crate::error::{Error, Result};
use crate::exact::dyadic;

fn f<F: Float>(x: f64) -> F {
    F::from(x).expect("representable constant")
}

/// `g(eps, p) = (p + eps) ln(p / (p + eps)) + (1 - p - eps) ln((1 - p) / (1 - p - eps))`.
///
/// `eps` may be negative; the domain is `0 < p < 1` and `0 < p + eps < 1`.
/// `g(0, p) = 0` and `g` is negative otherwise.
pub fn g<F: Float>(eps: F, p: F) -> Result<F> {
    let zero = F::zero();
    let one = F::one();
    if !(p > zero && p < one && p + eps > zero && p + eps < one) {
        return Err(Error::domain(format!(
            "g(eps, p) needs 0 < p < 1 and 0 < p + eps < 1 (eps = {:?}, p = {:?})",
            eps.to_f64(),
            p.to_f64()
        )));
    }
    if eps == zero {
        return Ok(zero);
    }
    let q = one - p;
    Ok(-(p + eps) * (eps / p).ln_1p() - (q - eps) * (-eps / q).ln_1p())
}

fn check_unit<F: Float>(name: &str, x: F) -> Result<()> {
    if x > F::zero() && x < F::one() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must lie in (0, 1), got {:?}", x.to_f64())))
    }
}

/// `M(z, p) = ln(p / z) + (1 / z - 1) ln((1 - p) / (1 - z))` on `(0,1)^2`.
pub fn script_m<F: Float>(z: F, p: F) -> Result<F> {
    check_unit("z", z)?;
    check_unit("p", p)?;
    let one = F::one();
    Ok(((p - z) / z).ln_1p() + (one / z - one) * ((z - p) / (one - z)).ln_1p())
}

/// `H(z, p) = z M(z, p)`; never positive, zero only at `z = p`.
pub fn script_h<F: Float>(z: F, p: F) -> Result<F> {
    Ok(z * script_m(z, p)?)
}

/// `(1 + x) ln(1 + x) - x`, accurate for small `|x|`. Requires `x > -1`.
pub(crate) fn xlog1p_minus<F: Float>(x: F) -> F {
    if x.abs() < f(1e-2) {
        // sum_{j>=2} (-1)^j x^j / (j (j - 1))
        let mut acc = F::zero();
        let mut pow = x * x;
        for j in 2..40 {
            let jf: F = f(j as f64);
            let term = pow / (jf * (jf - F::one()));
            acc = if j % 2 == 0 { acc + term } else { acc - term };
            pow = pow * x;
            if term.abs() < F::epsilon() * acc.abs() * f(1e-3) {
                break;
            }
        }
        acc
    } else {
        (F::one() + x) * x.ln_1p() - x
    }
}

/// Exponent rates of the two terms of `Q`: `Q(eps, r) = exp(r a) + exp(r b)`.
fn q_rates<F: Float>(eps: F) -> (F, F) {
    let one = F::one();
    // ln[(1 + e)^-1 exp(e / (1 + e))] = -(xlog1p_minus(e)) / (1 + e)
    let a = -xlog1p_minus(eps) / (one + eps);
    let b = -xlog1p_minus(-eps) / (one - eps);
    (a, b)
}

/// `Q(eps, r) = (1 + eps)^-r exp(eps r / (1 + eps)) + (1 - eps)^-r exp(-eps r / (1 - eps))`,
/// the bound on the inverse-sampling relative-error failure probability.
/// Strictly decreasing in `r`, with `Q(eps, 0) = 2`.
pub fn q<F: Float>(eps: F, r: F) -> Result<F> {
    check_unit("eps", eps)?;
    if !(r >= F::zero()) {
        return Err(Error::domain(format!("r must be non-negative, got {:?}", r.to_f64())));
    }
    let (a, b) = q_rates(eps);
    Ok((r * a).exp() + (r * b).exp())
}

fn validate_population(population: u64, successes: u64, draws: u64) -> Result<()> {
    if population == 0 || successes > population || draws == 0 || draws > population {
        return Err(Error::domain(format!(
            "Hoeffding bounds need N >= 1, M <= N and 1 <= n <= N (N = {population}, M = {successes}, n = {draws})"
        )));
    }
    Ok(())
}

/// `exp(n g(eps, p))` with `p = M / N`, bounding `Pr{K/n >= p + eps}`.
/// Defined for `0 < eps < 1 - p`.
pub fn hoeffding_upper<F: Float>(population: u64, successes: u64, draws: u64, eps: F) -> Result<F> {
    validate_population(population, successes, draws)?;
    let e = eps.to_f64().unwrap_or(f64::NAN);
    // 0 < eps < (N - M) / N, decided exactly
    if !(e > 0.0) || dyadic(e) * dyadic(population as f64) >= dyadic((population - successes) as f64) {
        return Err(Error::domain(format!(
            "upper Hoeffding bound needs 0 < eps < 1 - p (eps = {e}, p = {successes}/{population})"
        )));
    }
    let p: F = f(successes as f64 / population as f64);
    let n: F = f(draws as f64);
    Ok((n * g(eps, p)?).exp())
}

/// `exp(n g(-eps, p))` with `p = M / N`, bounding `Pr{K/n <= p - eps}`.
/// Defined for `0 < eps < p`.
pub fn hoeffding_lower<F: Float>(population: u64, successes: u64, draws: u64, eps: F) -> Result<F> {
    validate_population(population, successes, draws)?;
    let e = eps.to_f64().unwrap_or(f64::NAN);
    if !(e > 0.0) || dyadic(e) * dyadic(population as f64) >= dyadic(successes as f64) {
        return Err(Error::domain(format!(
            "lower Hoeffding bound needs 0 < eps < p (eps = {e}, p = {successes}/{population})"
        )));
    }
    let p: F = f(successes as f64 / population as f64);
    let n: F = f(draws as f64);
    Ok((n * g(-eps, p)?).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    // Reference values below were computed with 50-digit arithmetic.

    #[test]
    fn g_examples() {
        assert_eq!(g(0.0, 0.3).unwrap(), 0.0);
        assert!(rel(g(0.1, 0.3).unwrap(), -0.022_582_421_084_357_388) < 1e-13);
        assert!(rel(g(-0.1, 0.3).unwrap(), -0.025_732_092_477_985_222) < 1e-13);
        assert!(g(0.8, 0.3).is_err());
        assert!(g(-0.3, 0.3).is_err());
        assert!(g(0.1, 1.0).is_err());
    }

    #[test]
    fn script_m_and_h_examples() {
        assert_eq!(script_m(0.3, 0.3).unwrap(), 0.0);
        assert!(rel(script_m(0.2, 0.4).unwrap(), -0.457_581_109_247_178_40) < 1e-13);
        assert!(rel(script_m(0.5, 0.25).unwrap(), -0.287_682_072_451_780_93) < 1e-13);
        assert_eq!(script_h(0.3, 0.3).unwrap(), 0.0);
        assert!(rel(script_h(0.2, 0.4).unwrap(), -0.091_516_221_849_435_680) < 1e-13);
        let h = script_h(0.3 + 0.1, 0.3).unwrap();
        assert!(rel(h, g(0.1, 0.3).unwrap()) < 1e-12);
        assert!(script_m(0.0, 0.3).is_err());
        assert!(script_m(0.3, 1.0).is_err());
    }

    #[test]
    fn q_examples() {
        assert_eq!(q(0.1, 0.0).unwrap(), 2.0);
        assert!(rel(q(0.1, 100.0).unwrap(), 1.206_637_659_440_469_9) < 1e-12);
        assert!(rel(q(0.2, 50.0).unwrap(), 0.718_257_306_295_934_67) < 1e-12);
        assert!(q(0.2, 50.0).unwrap() < q(0.2, 49.0).unwrap());
        assert!(q(1.5, 3.0).is_err());
        assert!(q(0.1, -1.0).is_err());
    }

    #[test]
    fn xlog1p_minus_small_arguments() {
        let cases = [
            (-0.0099999f64, 5.016_650_000_503_838_3e-5),
            (-1e-5, 5.000_016_666_750_000_5e-11),
            (1e-7, 4.999_999_833_333_341_7e-15),
            (0.0099999, 4.983_316_667_162_885_5e-5),
            (0.5, 0.108_197_662_162_246_5),
        ];
        for (x, want) in cases {
            assert!(rel(xlog1p_minus(x), want) < 1e-13, "{x}");
        }
    }

    #[test]
    fn hoeffding_examples() {
        let b = hoeffding_upper(100, 50, 20, 0.1).unwrap();
        assert!(rel(b, (20.0 * g(0.1, 0.5).unwrap()).exp()) < 1e-15);
        assert!(rel(b, 0.668_505_756_763_309_74) < 1e-12);
        assert!(hoeffding_upper(100, 100, 20, 0.1f64).is_err());
        assert!(hoeffding_lower(100, 0, 20, 0.1f64).is_err());
        // eps equal to 1 - p exactly in binary is still outside the open domain
        assert!(hoeffding_upper(4, 2, 2, 0.5f64).is_err());
    }
}
