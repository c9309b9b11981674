//! Big-integer helpers for the exact evaluation mode.

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::hypergeom::HypergeomParams;

/// `C(n, k)` by the multiplicative formula with running GCD reduction, so no
/// intermediate value exceeds the final coefficient.
pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        // acc = C(n, i); C(n, i + 1) = acc * (n - i) / (i + 1)
        let den = i + 1;
        let g = (&acc % den).to_u64().map_or(1, |rem| rem.gcd(&den));
        acc /= g;
        let factor = (n - i) / (den / g);
        debug_assert_eq!((n - i) % (den / g), 0);
        acc *= factor;
    }
    acc
}

/// `[C(n, 0), ..., C(n, n)]`.
pub fn binomial_row(n: u64) -> Vec<BigUint> {
    let mut row = Vec::with_capacity(n as usize + 1);
    let mut c = BigUint::one();
    for k in 0..=n {
        row.push(c.clone());
        if k < n {
            c = c * (n - k) / (k + 1);
        }
    }
    row
}

/// Pascal's triangle up to a fixed row, for repeated coefficient lookups.
#[derive(Debug, Clone)]
pub struct BinomialTable {
    rows: Vec<Vec<BigUint>>,
}

impl BinomialTable {
    pub fn new(max_n: u64) -> Self {
        let mut rows: Vec<Vec<BigUint>> = Vec::with_capacity(max_n as usize + 1);
        rows.push(vec![BigUint::one()]);
        for n in 1..=max_n as usize {
            let prev = &rows[n - 1];
            let mut row = Vec::with_capacity(n + 1);
            row.push(BigUint::one());
            for k in 1..n {
                row.push(&prev[k - 1] + &prev[k]);
            }
            row.push(BigUint::one());
            rows.push(row);
        }
        BinomialTable { rows }
    }

    pub fn max_n(&self) -> u64 {
        self.rows.len() as u64 - 1
    }

    /// `C(n, k)`, zero when `k > n`. Panics if `n` exceeds the table.
    pub fn get(&self, n: u64, k: u64) -> &BigUint {
        static ZERO: std::sync::OnceLock<BigUint> = std::sync::OnceLock::new();
        if k > n {
            return ZERO.get_or_init(BigUint::zero);
        }
        &self.rows[n as usize][k as usize]
    }
}

/// Hypergeometric probabilities over the support as integer numerators with
/// the shared denominator `C(N, n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactRow {
    /// Smallest `k` in the support; `numerators[i]` belongs to `k = first + i`.
    pub first: u64,
    pub numerators: Vec<BigUint>,
    pub denominator: BigUint,
}

impl ExactRow {
    pub fn new(params: &HypergeomParams) -> Self {
        let (lo, hi) = params.support();
        let (big_n, m, n) = (params.population, params.successes, params.draws);
        let fail = big_n - m;
        // C(M, k) and C(N - M, n - k) advanced in opposite directions.
        let mut c_succ = binomial(m, lo);
        let mut c_fail = binomial(fail, n - lo);
        let mut numerators = Vec::with_capacity((hi - lo + 1) as usize);
        for k in lo..=hi {
            numerators.push(&c_succ * &c_fail);
            if k < hi {
                c_succ = c_succ * (m - k) / (k + 1);
                // C(f, j - 1) = C(f, j) * j / (f - j + 1) with j = n - k
                let j = n - k;
                c_fail = c_fail * j / (fail - j + 1);
            }
        }
        ExactRow {
            first: lo,
            numerators,
            denominator: binomial(big_n, n),
        }
    }

    pub fn from_table(params: &HypergeomParams, table: &BinomialTable) -> Self {
        let (lo, hi) = params.support();
        let (big_n, m, n) = (params.population, params.successes, params.draws);
        let numerators = (lo..=hi)
            .map(|k| table.get(m, k) * table.get(big_n - m, n - k))
            .collect();
        ExactRow {
            first: lo,
            numerators,
            denominator: table.get(big_n, n).clone(),
        }
    }

    pub fn last(&self) -> u64 {
        self.first + self.numerators.len() as u64 - 1
    }

    /// Numerator for outcome `k`, zero outside the support.
    pub fn numerator(&self, k: u64) -> BigUint {
        if k < self.first || k > self.last() {
            BigUint::zero()
        } else {
            self.numerators[(k - self.first) as usize].clone()
        }
    }

    /// Sum of numerators over the `k` accepted by `pred`.
    pub fn mass_numerator(&self, mut pred: impl FnMut(u64) -> bool) -> BigUint {
        let mut acc = BigUint::zero();
        for (i, num) in self.numerators.iter().enumerate() {
            if pred(self.first + i as u64) {
                acc += num;
            }
        }
        acc
    }

    pub fn to_rational(&self, numerator: BigUint) -> BigRational {
        BigRational::new(BigInt::from(numerator), BigInt::from(self.denominator.clone()))
    }
}

/// Exact rational value of a finite `f64` (every finite double is dyadic).
pub fn dyadic(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite float")
}

/// `num / den` rounded to the nearest `f64`.
pub fn ratio_to_f64(num: &BigUint, den: &BigUint) -> f64 {
    if num.is_zero() {
        return 0.0;
    }
    BigRational::new_raw(BigInt::from(num.clone()), BigInt::from(den.clone()))
        .to_f64()
        .unwrap_or(f64::NAN)
}

/// Largest integer `w` with `w <= x` for a non-negative rational `x`.
pub fn floor_u64(x: &BigRational) -> u64 {
    x.floor().to_integer().to_u64().unwrap_or(u64::MAX)
}
