//! Floating-point hypergeometric evaluation.
//!
//! Point probabilities follow Loader's saddle-point decomposition
//! (`stirlerr` + `bd0` deviance terms), which keeps full relative accuracy
//! far into the tails where a plain `lgamma` difference cancels badly. Tail
//! sums are anchored at the largest term inside the requested range and
//! extended outward with the pmf ratio recurrence, re-anchoring periodically
//! to stop error from compounding.

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive};

use super::HypergeomParams;

/// Floating-point scalar usable by the log-space engine.
pub trait LogFloat: Float + FromPrimitive + Debug + Send + Sync + 'static {}

impl LogFloat for f32 {}
impl LogFloat for f64 {}

/// Tails whose natural log falls below this are reported as zero.
pub const UNDERFLOW_LN: f64 = -700.0;

/// Steps between direct re-evaluations inside a ratio recurrence.
const REANCHOR: u64 = 64;

// ln(n!) - (n + 1/2) ln n + n - ln sqrt(2 pi), n = 1..=15
const STIRLERR_SMALL: [f64; 15] = [
    0.081_061_466_795_327_258_22,
    0.041_340_695_955_409_294_094,
    0.027_677_925_684_998_339_149,
    0.020_790_672_103_765_093_112,
    0.016_644_691_189_821_192_163,
    0.013_876_128_823_070_747_999,
    0.011_896_709_945_891_770_095,
    0.010_411_265_261_972_096_497,
    0.009_255_462_182_712_732_917_7,
    0.008_330_563_433_362_871_256_5,
    0.007_573_675_487_951_840_795,
    0.006_942_840_107_209_529_865_7,
    0.006_408_994_188_004_207_068_4,
    0.005_951_370_112_758_847_735_6,
    0.005_554_733_551_962_801_371,
];

#[inline]
fn c<F: LogFloat>(x: f64) -> F {
    F::from_f64(x).expect("representable constant")
}

#[inline]
fn u<F: LogFloat>(x: u64) -> F {
    F::from_u64(x).expect("representable integer")
}

pub(crate) fn underflow_cutoff<F: LogFloat>() -> F {
    c::<F>(UNDERFLOW_LN).max(F::min_positive_value().ln())
}

/// Error of Stirling's approximation to `ln n!`, for `n >= 1`.
fn stirlerr<F: LogFloat>(n: u64) -> F {
    debug_assert!(n >= 1);
    if n <= 15 {
        return c(STIRLERR_SMALL[n as usize - 1]);
    }
    let s0: F = c(1.0 / 12.0);
    let s1: F = c(1.0 / 360.0);
    let s2: F = c(1.0 / 1260.0);
    let s3: F = c(1.0 / 1680.0);
    let s4: F = c(1.0 / 1188.0);
    let nf: F = u(n);
    let nn = nf * nf;
    if n > 500 {
        (s0 - s1 / nn) / nf
    } else if n > 80 {
        (s0 - (s1 - s2 / nn) / nn) / nf
    } else if n > 35 {
        (s0 - (s1 - (s2 - s3 / nn) / nn) / nn) / nf
    } else {
        (s0 - (s1 - (s2 - (s3 - s4 / nn) / nn) / nn) / nn) / nf
    }
}

/// Deviance term `x ln(x / np) + np - x`, evaluated without cancellation
/// when `x` is close to `np`.
fn bd0<F: LogFloat>(x: F, np: F) -> F {
    if (x - np).abs() < c::<F>(0.1) * (x + np) {
        let mut v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        if s.abs() < F::min_positive_value() {
            return s;
        }
        let mut ej = c::<F>(2.0) * x * v;
        v = v * v;
        for j in 1..1000u64 {
            ej = ej * v;
            let s1 = s + ej / u::<F>(2 * j + 1);
            if s1 == s {
                return s1;
            }
            s = s1;
        }
    }
    x * (x / np).ln() + np - x
}

/// `ln` of the binomial probability of `x` successes in `n` trials with
/// success probability `p` and `q = 1 - p` supplied separately.
fn ln_dbinom_raw<F: LogFloat>(x: u64, n: u64, p: F, q: F) -> F {
    if x > n {
        return F::neg_infinity();
    }
    if p.is_zero() {
        return if x == 0 { F::zero() } else { F::neg_infinity() };
    }
    if q.is_zero() {
        return if x == n { F::zero() } else { F::neg_infinity() };
    }
    let nf: F = u(n);
    let small: F = c(0.1);
    if x == 0 {
        if n == 0 {
            return F::zero();
        }
        return if p < small { -bd0(nf, nf * q) - nf * p } else { nf * q.ln() };
    }
    if x == n {
        return if q < small { -bd0(nf, nf * p) - nf * q } else { nf * p.ln() };
    }
    let xf: F = u(x);
    let yf: F = u(n - x);
    let lc = stirlerr::<F>(n) - stirlerr::<F>(x) - stirlerr::<F>(n - x) - bd0(xf, nf * p) - bd0(yf, nf * q);
    let lf = c::<F>(std::f64::consts::TAU.ln()) + xf.ln() + (-xf / nf).ln_1p();
    lc - c::<F>(0.5) * lf
}

/// Natural log of the hypergeometric pmf; `-inf` outside the support.
pub fn ln_pmf<F: LogFloat>(params: &HypergeomParams, k: u64) -> F {
    let (lo, hi) = params.support();
    if k < lo || k > hi {
        return F::neg_infinity();
    }
    if lo == hi {
        return F::zero();
    }
    let (big_n, m, n) = (params.population, params.successes, params.draws);
    let nf: F = u(big_n);
    let p = u::<F>(n) / nf;
    let q = u::<F>(big_n - n) / nf;
    ln_dbinom_raw(k, m, p, q) + ln_dbinom_raw(n - k, big_n - m, p, q) - ln_dbinom_raw(n, big_n, p, q)
}

/// `pmf(k + 1) / pmf(k)`.
#[inline]
fn ratio_up<F: LogFloat>(params: &HypergeomParams, k: u64) -> F {
    let (big_n, m, n) = (params.population, params.successes, params.draws);
    let num = u::<F>(m - k) * u::<F>(n - k);
    let den = u::<F>(k + 1) * u::<F>(big_n + k + 1 - m - n);
    num / den
}

/// `pmf(k - 1) / pmf(k)`.
#[inline]
fn ratio_down<F: LogFloat>(params: &HypergeomParams, k: u64) -> F {
    let (big_n, m, n) = (params.population, params.successes, params.draws);
    let num = u::<F>(k) * u::<F>(big_n + k - m - n);
    let den = u::<F>(m + 1 - k) * u::<F>(n + 1 - k);
    num / den
}

/// Mode of the distribution, clamped to the support.
pub fn mode(params: &HypergeomParams) -> u64 {
    let (lo, hi) = params.support();
    let raw = ((params.draws as u128 + 1) * (params.successes as u128 + 1)
        / (params.population as u128 + 2)) as u64;
    raw.clamp(lo, hi)
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Compensated<F> {
    sum: F,
    comp: F,
}

impl<F: LogFloat> Compensated<F> {
    pub(crate) fn new(init: F) -> Self {
        Compensated { sum: init, comp: F::zero() }
    }

    pub(crate) fn add(&mut self, x: F) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp = self.comp + ((self.sum - t) + x);
        } else {
            self.comp = self.comp + ((x - t) + self.sum);
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> F {
        self.sum + self.comp
    }
}

/// A floating tail probability together with its logarithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailEval<F> {
    pub value: F,
    pub ln_value: F,
    /// The true value is positive but below `exp(-700)` (or the type's
    /// smallest normal) and `value` was flushed to zero.
    pub underflow: bool,
}

impl<F: LogFloat> TailEval<F> {
    fn zero() -> Self {
        TailEval { value: F::zero(), ln_value: F::neg_infinity(), underflow: false }
    }

    fn one() -> Self {
        TailEval { value: F::one(), ln_value: F::zero(), underflow: false }
    }

    fn from_ln(ln_value: F) -> Self {
        let ln_value = ln_value.min(F::zero());
        if ln_value < underflow_cutoff::<F>() {
            TailEval { value: F::zero(), ln_value, underflow: true }
        } else {
            TailEval { value: ln_value.exp(), ln_value, underflow: false }
        }
    }
}

/// Probability that the count lands in `[a, b]`.
pub fn range_mass<F: LogFloat>(params: &HypergeomParams, a: u64, b: u64) -> TailEval<F> {
    let (lo, hi) = params.support();
    let a = a.max(lo);
    let b = b.min(hi);
    if a > b {
        return TailEval::zero();
    }
    if a == lo && b == hi {
        return TailEval::one();
    }
    let peak = mode(params);
    let anchor = peak.clamp(a, b);
    let ln_anchor: F = ln_pmf(params, anchor);
    let tiny = F::epsilon() * c::<F>(1e-2);
    let mut sum = Compensated::new(F::one());

    // Upward from the anchor.
    let mut term = F::one();
    let mut k = anchor;
    while k < b {
        let r: F = ratio_up(params, k);
        k += 1;
        term = if (k - anchor) % REANCHOR == 0 {
            (ln_pmf::<F>(params, k) - ln_anchor).exp()
        } else {
            term * r
        };
        sum.add(term);
        // Past the mode ratios only shrink, so the rest is geometric-bounded.
        if k > peak && r < F::one() && term * r / (F::one() - r) < sum.value() * tiny {
            break;
        }
    }

    // Downward from the anchor.
    let mut term = F::one();
    let mut k = anchor;
    while k > a {
        let r: F = ratio_down(params, k);
        k -= 1;
        term = if (anchor - k) % REANCHOR == 0 {
            (ln_pmf::<F>(params, k) - ln_anchor).exp()
        } else {
            term * r
        };
        sum.add(term);
        if k < peak && r < F::one() && term * r / (F::one() - r) < sum.value() * tiny {
            break;
        }
    }

    TailEval::from_ln(ln_anchor + sum.value().ln())
}

pub fn upper_tail<F: LogFloat>(params: &HypergeomParams, k: u64) -> TailEval<F> {
    range_mass(params, k, params.draws)
}

pub fn lower_tail<F: LogFloat>(params: &HypergeomParams, k: u64) -> TailEval<F> {
    range_mass(params, 0, k)
}

/// Probabilities relative to the mode over the whole support, plus the log
/// of the modal probability.
fn relative_row<F: LogFloat>(params: &HypergeomParams) -> (Vec<F>, F) {
    let (lo, hi) = params.support();
    let peak = mode(params);
    let ln_peak: F = ln_pmf(params, peak);
    let mut rel = vec![F::zero(); (hi - lo + 1) as usize];
    rel[(peak - lo) as usize] = F::one();
    let mut term = F::one();
    for k in peak + 1..=hi {
        term = if (k - peak).is_multiple_of(REANCHOR) {
            (ln_pmf::<F>(params, k) - ln_peak).exp()
        } else {
            term * ratio_up(params, k - 1)
        };
        rel[(k - lo) as usize] = term;
    }
    let mut term = F::one();
    for k in (lo..peak).rev() {
        term = if (peak - k).is_multiple_of(REANCHOR) {
            (ln_pmf::<F>(params, k) - ln_peak).exp()
        } else {
            term * ratio_down(params, k + 1)
        };
        rel[(k - lo) as usize] = term;
    }
    (rel, ln_peak)
}

fn scale_row<F: LogFloat>(rel: impl Iterator<Item = F>, ln_peak: F) -> Vec<F> {
    let peak = ln_peak.exp();
    let floor = underflow_cutoff::<F>().exp();
    rel.map(|r| {
        let v = r * peak;
        if v < floor {
            F::zero()
        } else {
            v.min(F::one())
        }
    })
    .collect()
}

/// pmf over the support `[lo, hi]`, index `i` holding `k = lo + i`.
pub fn pmf_row<F: LogFloat>(params: &HypergeomParams) -> Vec<F> {
    let (rel, ln_peak) = relative_row::<F>(params);
    scale_row(rel.into_iter(), ln_peak)
}

/// `Pr{K >= k}` for every `k` in the support.
pub fn upper_tail_row<F: LogFloat>(params: &HypergeomParams) -> Vec<F> {
    let (rel, ln_peak) = relative_row::<F>(params);
    let mut acc = Compensated::new(F::zero());
    let mut cum: Vec<F> = rel
        .iter()
        .rev()
        .map(|&r| {
            acc.add(r);
            acc.value()
        })
        .collect();
    cum.reverse();
    let mut out = scale_row(cum.into_iter(), ln_peak);
    out[0] = F::one();
    out
}

/// `Pr{K <= k}` for every `k` in the support.
pub fn lower_tail_row<F: LogFloat>(params: &HypergeomParams) -> Vec<F> {
    let (rel, ln_peak) = relative_row::<F>(params);
    let mut acc = Compensated::new(F::zero());
    let cum: Vec<F> = rel
        .iter()
        .map(|&r| {
            acc.add(r);
            acc.value()
        })
        .collect();
    let mut out = scale_row(cum.into_iter(), ln_peak);
    if let Some(last) = out.last_mut() {
        *last = F::one();
    }
    out
}
