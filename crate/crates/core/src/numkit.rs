//! Log-space special functions and combinatorial kernels.
//!
//! Everything here works on logarithms: rising factorials, generalized
//! factorial coefficients and their convolutions overflow `f64` long before
//! the sample sizes the estimators are asked to handle.

use std::f64::consts::PI;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Rising factorials with at most this many factors are evaluated as a direct
/// sum of logarithms.
const DIRECT_RISING_MAX: u64 = 32;

/// Largest `u` accepted by [`gfc_direct`]. The alternating sum is exact (rational
/// arithmetic) but its cost grows quickly and it is only a test oracle.
pub const GFC_DIRECT_MAX: u64 = 20;

/// Largest `u` accepted by [`stirling_signless`].
pub const STIRLING_MAX: u64 = 60;

/// Logs of a nonnegative sequence. `-inf` encodes an exact zero.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LogSeq(Vec<f64>);

impl LogSeq {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::Domain("log-sequence contains NaN".into()));
        }
        Ok(Self(values))
    }

    /// Log-sequence of length `len` holding exact zeros.
    pub fn zeros(len: usize) -> Self {
        Self(vec![f64::NEG_INFINITY; len])
    }

    /// The multiplicative identity for [`log_convolve`]: the sequence `[1]`.
    pub fn unit() -> Self {
        Self(vec![0.0])
    }

    pub fn from_linear(values: &[f64]) -> Result<Self> {
        if values.iter().any(|v| *v < 0.0 || v.is_nan()) {
            return Err(Error::Domain("linear sequence must be nonnegative".into()));
        }
        Ok(Self(values.iter().map(|v| v.ln()).collect()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for LogSeq {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Stirling-series remainder of `ln Γ(z)` after `(z - 1/2) ln z - z + ln √(2π)`.
/// Accurate to ~1e-17 for `z >= 10`.
fn stirling_tail(z: f64) -> f64 {
    let r = 1.0 / z;
    let r2 = r * r;
    r * (1.0 / 12.0
        - r2 * (1.0 / 360.0
            - r2 * (1.0 / 1260.0 - r2 * (1.0 / 1680.0 - r2 * (1.0 / 1188.0)))))
}

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("ln_gamma needs x > 0, got {x}")));
    }
    let mut shift = 0.0;
    let mut z = x;
    while z < 10.0 {
        shift += z.ln();
        z += 1.0;
    }
    Ok((z - 0.5) * z.ln() - z + HALF_LN_2PI + stirling_tail(z) - shift)
}

/// `ln (a)_(u) = ln Π_{i<u} (a + i)` for `a > 0`.
///
/// Short products are summed directly. Longer ones shift `a` past 10 and use
/// the Stirling-series difference written as `(a - 1/2) ln1p(u/a) + u ln(a+u) - u`,
/// which stays accurate when `a` is huge (large θ during fitting).
pub fn log_rising_factorial(a: f64, u: u64) -> Result<f64> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::Domain(format!(
            "rising factorial needs a > 0, got {a}"
        )));
    }
    Ok(log_rising_unchecked(a, u))
}

pub(crate) fn log_rising_unchecked(a: f64, u: u64) -> f64 {
    if u <= DIRECT_RISING_MAX {
        return (0..u).map(|i| (a + i as f64).ln()).sum();
    }
    let mut acc = 0.0;
    let mut a = a;
    let mut u = u;
    while a < 10.0 && u > 0 {
        acc += a.ln();
        a += 1.0;
        u -= 1;
    }
    if u == 0 {
        return acc;
    }
    let uf = u as f64;
    let b = a + uf;
    acc + (a - 0.5) * (uf / a).ln_1p() + uf * b.ln() - uf + stirling_tail(b) - stirling_tail(a)
}

/// `ln C(c, r)` with `r <= c`.
pub(crate) fn log_binomial(c: u64, r: u64) -> f64 {
    debug_assert!(r <= c);
    let r = r.min(c - r);
    log_rising_unchecked((c - r + 1) as f64, r) - log_rising_unchecked(1.0, r)
}

/// `ln` of the multinomial coefficient `n! / Π c_j!`.
pub(crate) fn log_multinomial(counts: &[u64]) -> f64 {
    let mut total = 0u64;
    let mut acc = 0.0;
    for &c in counts {
        total += c;
        acc += log_binomial(total, c);
    }
    acc
}

/// Digamma ψ(x).
///
/// Upward recurrence to `x >= 6`, then the asymptotic series; negative
/// arguments go through the reflection formula.
pub fn digamma(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("digamma of non-finite {x}")));
    }
    if x <= 0.0 {
        let nearest = x.round();
        if (x - nearest).abs() < 1e-12 {
            return Err(Error::Domain(format!("digamma pole at {x}")));
        }
        // ψ(x) = ψ(1 - x) - π cot(πx); reduce the angle first for accuracy
        let frac = x - x.floor();
        let cot = (PI * frac).cos() / (PI * frac).sin();
        return Ok(digamma_positive(1.0 - x) - PI * cot);
    }
    if x < 1e-12 {
        return Err(Error::Domain(format!("digamma pole at {x}")));
    }
    Ok(digamma_positive(x))
}

fn digamma_positive(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 6.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let r = 1.0 / x;
    let r2 = r * r;
    let series = r2
        * (1.0 / 12.0
            - r2 * (1.0 / 120.0
                - r2 * (1.0 / 252.0
                    - r2 * (1.0 / 240.0 - r2 * (1.0 / 132.0 - r2 * (691.0 / 32760.0))))));
    acc + x.ln() - 0.5 * r - series
}

/// One row of generalized factorial coefficients 𝒞(u, ·; α) in log space.
#[derive(Debug, Clone, PartialEq)]
pub struct GfcRow {
    pub u: u64,
    pub alpha: f64,
    /// Entry `v` holds `ln 𝒞(u, v; α)` for `v = 0..=u`.
    pub log_values: Vec<f64>,
}

impl GfcRow {
    pub fn get(&self, v: u64) -> f64 {
        self.log_values
            .get(v as usize)
            .copied()
            .unwrap_or(f64::NEG_INFINITY)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "generalized factorial coefficients need alpha in (0,1), got {alpha}"
        )))
    }
}

/// Sweeps the triangular recursion
/// `𝒞(u+1, v) = (u - vα) 𝒞(u, v) + α 𝒞(u, v-1)`
/// one row at a time, keeping only the current row.
///
/// Both terms are nonnegative (`u - vα > 0` for `1 <= v <= u`), so each step is
/// a two-term log-add-exp with no cancellation.
#[derive(Debug, Clone)]
pub struct GfcSweep {
    alpha: f64,
    ln_alpha: f64,
    u: u64,
    row: Vec<f64>,
    scratch: Vec<f64>,
}

impl GfcSweep {
    pub fn new(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self {
            alpha,
            ln_alpha: alpha.ln(),
            u: 0,
            row: vec![0.0],
            scratch: Vec::new(),
        })
    }

    pub fn u(&self) -> u64 {
        self.u
    }

    pub fn row(&self) -> &[f64] {
        &self.row
    }

    pub fn advance(&mut self) {
        let u = self.u as f64;
        let next_len = self.row.len() + 1;
        self.scratch.clear();
        self.scratch.resize(next_len, f64::NEG_INFINITY);
        for v in 1..next_len {
            let keep = if v < self.row.len() {
                let coef = u - v as f64 * self.alpha;
                if coef > 0.0 {
                    self.row[v] + coef.ln()
                } else {
                    f64::NEG_INFINITY
                }
            } else {
                f64::NEG_INFINITY
            };
            let grow = self.row[v - 1] + self.ln_alpha;
            self.scratch[v] = log_add_exp(keep, grow);
        }
        std::mem::swap(&mut self.row, &mut self.scratch);
        self.u += 1;
    }

    pub fn advance_to(&mut self, u: u64) {
        while self.u < u {
            self.advance();
        }
    }

    pub fn to_row(&self) -> GfcRow {
        GfcRow {
            u: self.u,
            alpha: self.alpha,
            log_values: self.row.clone(),
        }
    }
}

/// Row `u` of the generalized factorial coefficients, in O(u) memory.
pub fn gfc_row(u: u64, alpha: f64) -> Result<GfcRow> {
    let mut sweep = GfcSweep::new(alpha)?;
    sweep.advance_to(u);
    Ok(sweep.to_row())
}

/// Rows for each requested `u`, produced by a single sweep up to the largest.
pub fn gfc_rows(us: &[u64], alpha: f64) -> Result<Vec<GfcRow>> {
    let mut order: Vec<usize> = (0..us.len()).collect();
    order.sort_by_key(|&i| us[i]);
    let mut sweep = GfcSweep::new(alpha)?;
    let mut out = vec![None; us.len()];
    for i in order {
        sweep.advance_to(us[i]);
        out[i] = Some(sweep.to_row());
    }
    Ok(out.into_iter().map(|r| r.expect("every row filled")).collect())
}

fn f64_to_rational(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite float")
}

/// 𝒞(u, v; α) from the explicit alternating sum
/// `(1/v!) Σ_i (-1)^i C(v, i) (-iα)_(u)`, evaluated exactly in rational
/// arithmetic on the binary value of `alpha`, then rounded to `f64`.
pub fn gfc_direct(u: u64, v: u64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if u > GFC_DIRECT_MAX {
        return Err(Error::Domain(format!(
            "gfc_direct refuses u = {u} > {GFC_DIRECT_MAX}"
        )));
    }
    if v > u {
        return Ok(0.0);
    }
    let a = f64_to_rational(alpha);
    let mut sum = BigRational::zero();
    let mut binom = BigInt::one();
    for i in 0..=v {
        let base = -(a.clone() * BigRational::from_integer(BigInt::from(i)));
        let mut rising = BigRational::one();
        for k in 0..u {
            rising *= base.clone() + BigRational::from_integer(BigInt::from(k));
        }
        let term = rising * BigRational::from_integer(binom.clone());
        if i % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
        binom = binom * BigInt::from(v - i) / BigInt::from(i + 1);
    }
    let mut fact = BigInt::one();
    for k in 2..=v {
        fact *= BigInt::from(k);
    }
    let value = sum / BigRational::from_integer(fact);
    Ok(value.to_f64().unwrap_or(f64::NAN))
}

/// Signless Stirling number of the first kind |s(u, v)|, exact.
pub fn stirling_signless(u: u64, v: u64) -> Result<BigUint> {
    if u > STIRLING_MAX {
        return Err(Error::Domain(format!(
            "stirling_signless supports u <= {STIRLING_MAX}, got {u}"
        )));
    }
    Ok(stirling_row(u).into_iter().nth(v as usize).unwrap_or_default())
}

/// Full row |s(u, 0..=u)| via `|s(u+1, v)| = u |s(u, v)| + |s(u, v-1)|`.
pub fn stirling_row(u: u64) -> Vec<BigUint> {
    let mut row = vec![BigUint::one()];
    for k in 0..u {
        let mut next = vec![BigUint::zero(); row.len() + 1];
        for (v, slot) in next.iter_mut().enumerate() {
            let mut acc = BigUint::zero();
            if v < row.len() {
                acc += &row[v] * BigUint::from(k);
            }
            if v > 0 {
                acc += &row[v - 1];
            }
            *slot = acc;
        }
        row = next;
    }
    row
}

/// `ln |s(u, v)|` for `v = 0..=u`, by the same recursion carried in log space.
/// Used where exact integers would be too large (distinct-count law for
/// `n` in the hundreds).
pub fn log_stirling_row(u: u64) -> Vec<f64> {
    let mut row = vec![0.0];
    for k in 0..u {
        let ln_k = (k as f64).ln();
        let mut next = vec![f64::NEG_INFINITY; row.len() + 1];
        for (v, slot) in next.iter_mut().enumerate() {
            let keep = if v < row.len() { row[v] + ln_k } else { f64::NEG_INFINITY };
            let grow = if v > 0 { row[v - 1] } else { f64::NEG_INFINITY };
            *slot = log_add_exp(keep, grow);
        }
        row = next;
    }
    row
}

/// `ln Σ exp(x_i)` (max-shifted); `-inf` for an empty or all-zero input.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

#[inline]
pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Log-space convolution: `out[t] = ln Σ_{i+j=t} exp(a[i] + b[j])`.
pub fn log_convolve(a: &LogSeq, b: &LogSeq) -> LogSeq {
    LogSeq(log_convolve_slices(a.as_slice(), b.as_slice()))
}

pub(crate) fn log_convolve_slices(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    // trim exact zeros at the front and back; they are common (𝒞(u, 0) = 0)
    let (a_lo, a_hi) = support(a);
    let (b_lo, b_hi) = support(b);
    let len = a.len() + b.len() - 1;
    let mut out = vec![f64::NEG_INFINITY; len];
    if a_lo > a_hi || b_lo > b_hi {
        return out;
    }
    let mut terms = Vec::with_capacity(a_hi - a_lo + 1);
    for (t, slot) in out
        .iter_mut()
        .enumerate()
        .take(a_hi + b_hi + 1)
        .skip(a_lo + b_lo)
    {
        let i_lo = a_lo.max(t.saturating_sub(b_hi));
        let i_hi = a_hi.min(t - b_lo);
        terms.clear();
        let mut max = f64::NEG_INFINITY;
        for i in i_lo..=i_hi {
            let x = a[i] + b[t - i];
            if x > max {
                max = x;
            }
            terms.push(x);
        }
        if max == f64::NEG_INFINITY {
            continue;
        }
        let s: f64 = terms.iter().map(|x| (x - max).exp()).sum();
        *slot = max + s.ln();
    }
    out
}

fn support(xs: &[f64]) -> (usize, usize) {
    let lo = xs
        .iter()
        .position(|x| *x > f64::NEG_INFINITY)
        .unwrap_or(xs.len());
    let hi = xs
        .iter()
        .rposition(|x| *x > f64::NEG_INFINITY)
        .unwrap_or(0);
    (lo, hi)
}
