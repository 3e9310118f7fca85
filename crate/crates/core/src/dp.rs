//! Closed-form estimators from a sketch under a Dirichlet-process prior.
//!
//! Under the DP, bucket masses are `Dirichlet(theta/J, …, theta/J)`, so the
//! sketch is Dirichlet-Multinomial and every coverage probability is a finite
//! sum over buckets.

use std::collections::BTreeMap;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::genmodel::PriorParams;
use crate::numkit::{digamma, log_multinomial, log_rising_factorial, log_rising_unchecked};
use crate::report::{EstimateReport, Method, PriorSource};
use crate::sketch::Sketch;

/// Above this bucket count the distinct-count sum switches from the explicit
/// harmonic sum to a digamma difference.
const HARMONIC_MAX: u64 = 1_000_000;

/// Default search interval for the empirical-Bayes `theta`.
pub const DEFAULT_THETA_BOUNDS: (f64, f64) = (1e-3, 1e9);

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("theta must be > 0, got {theta}")))
    }
}

/// Distinct nonzero bucket counts with their multiplicities, ascending.
pub(crate) fn count_groups(counts: &[u64]) -> Vec<(u64, u64)> {
    let mut map = BTreeMap::new();
    for &c in counts {
        if c > 0 {
            *map.entry(c).or_insert(0u64) += 1;
        }
    }
    map.into_iter().collect()
}

/// Log of the Dirichlet-Multinomial probability of the sketch:
/// `ln [ n!/Π c_j! · Π (theta/J)_(c_j) / (theta)_(n) ]`.
pub fn dp_loglik(sketch: &Sketch, theta: f64) -> Result<f64> {
    check_theta(theta)?;
    let a = theta / sketch.width() as f64;
    let mut ll = log_multinomial(sketch.counts()) - log_rising_factorial(theta, sketch.n())?;
    for (c, mult) in count_groups(sketch.counts()) {
        ll += mult as f64 * log_rising_unchecked(a, c);
    }
    Ok(ll)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaFit {
    pub theta: f64,
    pub loglik: f64,
    pub boundary_hit: bool,
}

/// Maximum marginal likelihood `theta` by golden-section search on `ln theta`.
///
/// The Dirichlet-Multinomial likelihood is log-concave in `ln theta`, so the
/// search is over a unimodal function. Tolerance is `1e-6` in `ln theta`.
pub fn dp_fit_theta(sketch: &Sketch, bounds: (f64, f64)) -> Result<ThetaFit> {
    let (lo, hi) = bounds;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::Domain(format!("invalid theta bounds [{lo}, {hi}]")));
    }
    if sketch.n() < 2 {
        return Err(Error::Degenerate(format!(
            "likelihood is flat in theta for n = {}",
            sketch.n()
        )));
    }
    let f = |x: f64| dp_loglik(sketch, x.exp());
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while b - a > 1e-6 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2)?;
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1)?;
        }
    }
    let mid = 0.5 * (a + b);
    let candidates = [(lo.ln(), f(lo.ln())?), (mid, f(mid)?), (hi.ln(), f(hi.ln())?)];
    let (best_x, best_f) = candidates
        .into_iter()
        .fold((f64::NAN, f64::NEG_INFINITY), |acc, c| if c.1 > acc.1 { c } else { acc });
    let boundary_hit = (best_x - lo.ln()).abs() < 1e-5 || (hi.ln() - best_x).abs() < 1e-5;
    let theta = if boundary_hit {
        if (best_x - lo.ln()).abs() < 1e-5 { lo } else { hi }
    } else {
        best_x.exp()
    };
    Ok(ThetaFit {
        theta,
        loglik: best_f,
        boundary_hit,
    })
}

/// Per-theta tables shared by the coverage computations.
struct DpTables {
    ln_a: f64,
    /// `ln (a)_(m)` for `m = 0..=max_c`
    rising: Vec<f64>,
    /// `ln m!` for `m = 0..=max_c`
    ln_fact: Vec<f64>,
}

impl DpTables {
    fn new(a: f64, max_c: u64) -> Self {
        let len = max_c as usize + 1;
        Self {
            ln_a: a.ln(),
            rising: kahan_prefix(len, |i| (a + i as f64).ln()),
            ln_fact: kahan_prefix(len, |i| ((i + 1) as f64).ln()),
        }
    }

    /// `ln [ a r! C(c, r) (a)_(c-r) / (a)_(c) ]`
    fn log_term(&self, c: u64, r: u64) -> f64 {
        let (c, r) = (c as usize, r as usize);
        self.ln_a + self.ln_fact[c] - self.ln_fact[c - r] + self.rising[c - r] - self.rising[c]
    }
}

/// `out[m] = Σ_{i<m} f(i)` with compensated summation.
fn kahan_prefix(len: usize, f: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(len);
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for i in 0..len {
        out.push(sum);
        let y = f(i) - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    out
}

/// `p̃_r` for `r = 0..=r_max`.
pub fn dp_coverage_all(sketch: &Sketch, theta: f64, r_max: u64) -> Result<Vec<f64>> {
    check_theta(theta)?;
    let n = sketch.n();
    let mut out = vec![0.0; r_max as usize + 1];
    out[0] = theta / (theta + n as f64);
    let max_c = sketch.max_count();
    if r_max == 0 || max_c == 0 {
        return Ok(out);
    }
    let tables = DpTables::new(theta / sketch.width() as f64, max_c);
    let ln_denom = (theta + n as f64).ln();
    for (c, mult) in count_groups(sketch.counts()) {
        let ln_mult = (mult as f64).ln();
        for r in 1..=r_max.min(c) {
            out[r as usize] += (ln_mult + tables.log_term(c, r) - ln_denom).exp();
        }
    }
    Ok(out)
}

/// `p̃_r = (a r! / (theta + n)) Σ_j C(c_j, r) (a)_(c_j - r) / (a)_(c_j)`, `a = theta/J`.
pub fn dp_coverage(sketch: &Sketch, theta: f64, r: u64) -> Result<f64> {
    check_theta(theta)?;
    if r > sketch.max_count() {
        return Ok(0.0);
    }
    if r == 0 {
        return Ok(theta / (theta + sketch.n() as f64));
    }
    Ok(dp_coverage_all(sketch, theta, r)?[r as usize])
}

/// `m̃_r = ((theta + n) / r) p̃_r`, `r >= 1`.
pub fn dp_freq_counts(sketch: &Sketch, theta: f64, r: u64) -> Result<f64> {
    if r == 0 {
        return Err(Error::Domain("frequency counts start at r = 1".into()));
    }
    Ok((theta + sketch.n() as f64) / r as f64 * dp_coverage(sketch, theta, r)?)
}

/// `k̃ = Σ_j Σ_{m<c_j} a / (a + m)`.
///
/// Equal to the digamma form `-theta ψ(1 - a) + a Σ_j ψ(1 - a - c_j)` but free
/// of its spurious poles at integer `a`. Very large buckets use
/// `a (ψ(a + c) - ψ(a))`, which is also pole-free for `a > 0`.
pub fn dp_distinct(sketch: &Sketch, theta: f64) -> Result<f64> {
    check_theta(theta)?;
    let a = theta / sketch.width() as f64;
    let mut total = 0.0;
    for (c, mult) in count_groups(sketch.counts()) {
        let per_bucket = if c > HARMONIC_MAX {
            a * (digamma(a + c as f64)? - digamma(a)?)
        } else {
            (0..c).map(|m| a / (a + m as f64)).sum()
        };
        total += mult as f64 * per_bucket;
    }
    Ok(total)
}

/// The literal digamma expression for `k̃`. Undefined when `theta/J` is a
/// positive integer; kept for cross-checking.
pub fn dp_distinct_digamma_form(sketch: &Sketch, theta: f64) -> Result<f64> {
    check_theta(theta)?;
    let a = theta / sketch.width() as f64;
    let mut total = -theta * digamma(1.0 - a)?;
    for &c in sketch.counts() {
        total += a * digamma(1.0 - a - c as f64)?;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThetaSource {
    Given(f64),
    EbMle { lo: f64, hi: f64 },
}

/// Fits `theta` if asked, then fills coverage for `r = 0..=r_max`
/// (default `max_j c_j`), frequency counts and the distinct count.
pub fn dp_report(sketch: &Sketch, source: ThetaSource, r_max: Option<u64>) -> Result<EstimateReport> {
    let start = Instant::now();
    let (theta, prior_source, boundary_hit) = match source {
        ThetaSource::Given(t) => {
            check_theta(t)?;
            (t, PriorSource::Given, None)
        }
        ThetaSource::EbMle { lo, hi } => {
            let fit = dp_fit_theta(sketch, (lo, hi))?;
            (fit.theta, PriorSource::EbMle, Some(fit.boundary_hit))
        }
    };
    let r_max = r_max.unwrap_or_else(|| sketch.max_count());
    let cov = dp_coverage_all(sketch, theta, r_max)?;
    let n = sketch.n() as f64;
    let coverage: BTreeMap<u64, f64> = cov.iter().enumerate().map(|(r, p)| (r as u64, *p)).collect();
    let freq_counts = cov
        .iter()
        .enumerate()
        .skip(1)
        .map(|(r, p)| (r as u64, (theta + n) / r as f64 * p))
        .collect();
    Ok(EstimateReport {
        n: sketch.n(),
        width: sketch.width() as u32,
        prior: PriorParams { alpha: 0.0, theta },
        prior_source,
        method: Method::DpExact,
        boundary_hit,
        coverage,
        freq_counts,
        distinct: Some(dp_distinct(sketch, theta)?),
        mc_stderr: None,
        mc_samples: None,
        qualitative: false,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}
