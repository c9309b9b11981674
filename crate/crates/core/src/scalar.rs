use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Sub};

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::exact::{dyadic, ExactRow};
use crate::hypergeom::{logspace, HypergeomParams};

/// Scalar type that probabilities are computed in.
///
/// Floating implementations evaluate hypergeometric terms in log space;
/// the big-rational implementation is exact. Every algorithm in this crate
/// that produces a probability is generic over this trait.
pub trait Probability:
    Clone
    + Debug
    + PartialOrd
    + Send
    + Sync
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
{
    /// The value of `x`, exactly when the type can represent every double.
    fn from_f64(x: f64) -> Self;

    fn from_ratio(num: u64, den: u64) -> Self;

    fn to_f64(&self) -> f64;

    /// pmf at `k`, zero outside the support.
    fn hypergeom_pmf(params: &HypergeomParams, k: u64) -> Self;

    /// pmf over the support, index `i` holding `k = lo + i`.
    fn hypergeom_row(params: &HypergeomParams) -> Vec<Self> {
        let (lo, hi) = params.support();
        (lo..=hi).map(|k| Self::hypergeom_pmf(params, k)).collect()
    }

    /// Probability of the outcomes accepted by `pred`.
    fn hypergeom_mass(params: &HypergeomParams, pred: &mut dyn FnMut(u64) -> bool) -> Self {
        let (lo, _) = params.support();
        let mut acc = Self::zero();
        for (i, v) in Self::hypergeom_row(params).into_iter().enumerate() {
            if pred(lo + i as u64) {
                acc = acc + v;
            }
        }
        acc
    }

    /// `Pr{K >= k}`; one for `k` at or below the support.
    fn upper_tail(params: &HypergeomParams, k: u64) -> Self;

    /// `Pr{K <= k}`; one for `k` at or above the support.
    fn lower_tail(params: &HypergeomParams, k: u64) -> Self;
}

macro_rules! impl_float_probability {
    ($t:ty) => {
        impl Probability for $t {
            fn from_f64(x: f64) -> Self {
                x as $t
            }

            fn from_ratio(num: u64, den: u64) -> Self {
                (num as f64 / den as f64) as $t
            }

            fn to_f64(&self) -> f64 {
                *self as f64
            }

            fn hypergeom_pmf(params: &HypergeomParams, k: u64) -> Self {
                let ln = logspace::ln_pmf::<$t>(params, k);
                if ln < logspace::underflow_cutoff::<$t>() {
                    0.0
                } else {
                    ln.exp()
                }
            }

            fn hypergeom_row(params: &HypergeomParams) -> Vec<Self> {
                logspace::pmf_row::<$t>(params)
            }

            fn upper_tail(params: &HypergeomParams, k: u64) -> Self {
                logspace::upper_tail::<$t>(params, k).value
            }

            fn lower_tail(params: &HypergeomParams, k: u64) -> Self {
                logspace::lower_tail::<$t>(params, k).value
            }
        }
    };
}

impl_float_probability!(f32);
impl_float_probability!(f64);

fn to_rational(num: BigUint, den: &BigUint) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den.clone()))
}

impl Probability for BigRational {
    fn from_f64(x: f64) -> Self {
        dyadic(x)
    }

    fn from_ratio(num: u64, den: u64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn hypergeom_pmf(params: &HypergeomParams, k: u64) -> Self {
        if !params.in_support(k) {
            return BigRational::zero();
        }
        let (big_n, m, n) = (params.population, params.successes, params.draws);
        let num = crate::exact::binomial(m, k) * crate::exact::binomial(big_n - m, n - k);
        to_rational(num, &crate::exact::binomial(big_n, n))
    }

    fn hypergeom_row(params: &HypergeomParams) -> Vec<Self> {
        let row = ExactRow::new(params);
        row.numerators
            .iter()
            .map(|num| to_rational(num.clone(), &row.denominator))
            .collect()
    }

    fn hypergeom_mass(params: &HypergeomParams, pred: &mut dyn FnMut(u64) -> bool) -> Self {
        let row = ExactRow::new(params);
        let num = row.mass_numerator(pred);
        to_rational(num, &row.denominator)
    }

    fn upper_tail(params: &HypergeomParams, k: u64) -> Self {
        Self::hypergeom_mass(params, &mut |i| i >= k)
    }

    fn lower_tail(params: &HypergeomParams, k: u64) -> Self {
        Self::hypergeom_mass(params, &mut |i| i <= k)
    }
}
