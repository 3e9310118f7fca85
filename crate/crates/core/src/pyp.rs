//! Estimators from a sketch under a Pitman–Yor prior.
//!
//! The exact estimators involve sums over the Cartesian product of latent
//! block counts `i_s ∈ {0..c_s}`, one per bucket. Every summand has the form
//! `f(|i|) Π_s g_s(i_s)` with `g_s(i) = 𝒞(c_s, i; α) / J^i`, so the sum equals
//! `Σ_t f(t) W[t]`, where `W` is the convolution of the `g_s`. That turns an
//! exponential sum into `O(J n²)` work, and leave-one-bucket-out
//! convolutions give the per-bucket numerators.
//!
//! Beyond the exact-mode cap the Monte Carlo path samples the distinct-count
//! process per bucket instead.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dp::count_groups;
use crate::error::{Error, Result};
use crate::genmodel::{sample_distinct_prefix, sample_urn_symbols, PriorParams};
use crate::numkit::{
    gfc_rows, ln_gamma, log_add_exp, log_binomial, log_convolve_slices, log_multinomial,
    log_rising_unchecked, logsumexp, GfcSweep, LogSeq,
};
use crate::report::{EstimateReport, Method, PriorSource};
use crate::rng::{derive_seed, stream_rng};
use crate::sketch::{HashSpec, Sketch};

pub const DEFAULT_EXACT_CAP: u64 = 2000;

fn check_params(params: &PriorParams) -> Result<()> {
    params.validate_for_estimation()?;
    if params.alpha <= 0.0 {
        return Err(Error::Domain(
            "PYP estimators need alpha in (0, 1); use the DP estimators for alpha = 0".into(),
        ));
    }
    Ok(())
}

/// Convolution machinery for the exact estimators.
///
/// Buckets with equal counts share their sequences, so everything is stored
/// per distinct nonzero count (`groups`), expanded in ascending order for the
/// prefix/suffix products.
#[derive(Debug, Clone)]
pub struct LogBlockWeights {
    pub alpha: f64,
    pub width: u32,
    /// `(count, multiplicity)` for each distinct nonzero count, ascending.
    pub groups: Vec<(u64, u64)>,
    /// `g[i] = ln 𝒞(c, i; α) - i ln J` for each group.
    pub per_group: Vec<LogSeq>,
    /// Convolution of every nonzero bucket's sequence, length `n + 1`.
    pub total: LogSeq,
    /// For each group, the convolution of every nonzero bucket except one
    /// bucket of that group.
    pub leave_one_out: Vec<LogSeq>,
}

impl LogBlockWeights {
    pub fn new(counts: &[u64], alpha: f64, cap: u64) -> Result<Self> {
        let n: u64 = counts.iter().sum();
        if n > cap {
            return Err(Error::ExactCapExceeded { n, cap });
        }
        let width = counts.len() as u32;
        let ln_j = (width as f64).ln();
        let groups = count_groups(counts);
        let us: Vec<u64> = groups.iter().map(|g| g.0).collect();
        let rows = gfc_rows(&us, alpha)?;
        let per_group: Vec<LogSeq> = rows
            .into_iter()
            .map(|row| {
                let v = row
                    .log_values
                    .iter()
                    .enumerate()
                    .map(|(i, x)| x - i as f64 * ln_j)
                    .collect();
                LogSeq::new(v)
            })
            .collect::<Result<_>>()?;

        // expand groups into the ordered bucket list
        let order: Vec<usize> = groups
            .iter()
            .enumerate()
            .flat_map(|(gi, &(_, m))| std::iter::repeat_n(gi, m as usize))
            .collect();
        let b = order.len();
        let mut prefix: Vec<Vec<f64>> = Vec::with_capacity(b + 1);
        prefix.push(vec![0.0]);
        for &gi in &order {
            let next = log_convolve_slices(prefix.last().unwrap(), per_group[gi].as_slice());
            prefix.push(next);
        }
        let mut suffix: Vec<Vec<f64>> = vec![Vec::new(); b + 1];
        suffix[b] = vec![0.0];
        for k in (0..b).rev() {
            suffix[k] = log_convolve_slices(&suffix[k + 1], per_group[order[k]].as_slice());
        }
        let total = LogSeq::new(prefix[b].clone())?;
        let mut leave_one_out = Vec::with_capacity(groups.len());
        let mut pos = 0usize;
        for &(_, m) in &groups {
            let loo = log_convolve_slices(&prefix[pos], &suffix[pos + 1]);
            leave_one_out.push(LogSeq::new(loo)?);
            pos += m as usize;
        }
        Ok(Self {
            alpha,
            width,
            groups,
            per_group,
            total,
            leave_one_out,
        })
    }

    pub fn n(&self) -> u64 {
        self.total.len() as u64 - 1
    }

    pub fn nonzero_buckets(&self) -> u64 {
        self.groups.iter().map(|g| g.1).sum()
    }

    /// `ln Σ_t f(t) exp(W[t])` for a log-weight function `ln f`.
    pub fn weighted_total(&self, ln_f: impl Fn(u64) -> f64) -> f64 {
        let terms: Vec<f64> = self
            .total
            .as_slice()
            .iter()
            .enumerate()
            .map(|(t, w)| w + ln_f(t as u64))
            .collect();
        logsumexp(&terms)
    }
}

/// `ln (x)_(t)` for `t = 0..=len-1`.
fn rising_table(x: f64, len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(len);
    let mut acc = 0.0;
    for t in 0..len {
        out.push(acc);
        acc += (x + t as f64).ln();
    }
    out
}

/// Exact PYP estimator state for one `(sketch, params)` pair.
pub struct PypExact {
    params: PriorParams,
    n: u64,
    width: u32,
    weights: LogBlockWeights,
    /// `ln Σ_t (theta/alpha)_(t) W[t]`
    ln_denominator: f64,
}

impl PypExact {
    pub fn new(sketch: &Sketch, params: PriorParams, cap: u64) -> Result<Self> {
        check_params(&params)?;
        let weights = LogBlockWeights::new(sketch.counts(), params.alpha, cap)?;
        let n = sketch.n();
        let den_table = rising_table(params.theta / params.alpha, n as usize + 1);
        let ln_denominator = weights.weighted_total(|t| den_table[t as usize]);
        Ok(Self {
            params,
            n,
            width: sketch.width() as u32,
            weights,
            ln_denominator,
        })
    }

    pub fn weights(&self) -> &LogBlockWeights {
        &self.weights
    }

    /// `ln Pr[C_n = c]`.
    pub fn loglik(&self, counts: &[u64]) -> f64 {
        log_multinomial(counts) - log_rising_unchecked(self.params.theta, self.n)
            + self.ln_denominator
    }

    /// `p̃_r` for `r = 0..=r_max`.
    ///
    /// For a bucket with count `c` the numerator replaces that bucket's
    /// sequence by the row for `c - r` and weights by `(1 + theta/alpha)_(t)`.
    /// Writing the leave-one-out convolution as `L`, the numerator is
    /// `Σ_i g'_{c-r}[i] h[i]` with `h[i] = Σ_k f(i + k) L[k]`, and `h` does not
    /// depend on `r`; one GFC sweep then serves every `r`.
    pub fn coverage_all(&self, r_max: u64) -> Result<Vec<f64>> {
        let PriorParams { alpha, theta } = self.params;
        let n = self.n;
        let ln_j = (self.width as f64).ln();
        let num_table = rising_table(1.0 + theta / alpha, n as usize + 1);
        let mut out = vec![0.0; r_max as usize + 1];

        // zero-count buckets only contribute at r = 0; their leave-one-out
        // sequence is the full total
        let zero_buckets = self.width as u64 - self.weights.nonzero_buckets();

        struct Group {
            count: u64,
            mult: u64,
            h: Vec<f64>,
        }
        let mut groups: Vec<Group> = Vec::new();
        for (gi, &(c, m)) in self.weights.groups.iter().enumerate() {
            groups.push(Group {
                count: c,
                mult: m,
                h: correlate(self.weights.leave_one_out[gi].as_slice(), &num_table, c as usize),
            });
        }
        if zero_buckets > 0 {
            groups.push(Group {
                count: 0,
                mult: zero_buckets,
                h: correlate(self.weights.total.as_slice(), &num_table, 0),
            });
        }

        // ln Σ_groups mult C(c, r) N_g(r), accumulated over the sweep
        let mut acc = vec![f64::NEG_INFINITY; r_max as usize + 1];
        let max_c = groups.iter().map(|g| g.count).max().unwrap_or(0);
        let mut sweep = GfcSweep::new(alpha)?;
        loop {
            let u = sweep.u();
            for g in &groups {
                if g.count < u {
                    continue;
                }
                let r = g.count - u;
                if r > r_max {
                    continue;
                }
                let row = sweep.row();
                let mut terms = Vec::with_capacity(row.len());
                for (i, x) in row.iter().enumerate() {
                    terms.push(x - i as f64 * ln_j + g.h[i]);
                }
                let ln_num = logsumexp(&terms);
                let term = (g.mult as f64).ln() + log_binomial(g.count, r) + ln_num;
                acc[r as usize] = log_add_exp(acc[r as usize], term);
            }
            if u >= max_c {
                break;
            }
            sweep.advance();
        }

        let ln_prefix = (theta / self.width as f64).ln() - (theta + n as f64).ln();
        for r in 0..=r_max {
            if acc[r as usize] == f64::NEG_INFINITY {
                continue;
            }
            let ln_one_minus_alpha = log_rising_unchecked(1.0 - alpha, r);
            out[r as usize] =
                (ln_prefix + ln_one_minus_alpha + acc[r as usize] - self.ln_denominator).exp();
        }
        Ok(out)
    }

    pub fn coverage(&self, r: u64) -> Result<f64> {
        Ok(self.coverage_all(r)?[r as usize])
    }

    /// `m̃_r = ((theta + n) / (r - alpha)) p̃_r`.
    pub fn freq_count_from(&self, r: u64, coverage_r: f64) -> f64 {
        (self.params.theta + self.n as f64) / (r as f64 - self.params.alpha) * coverage_r
    }

    /// `k̃ = ((theta + n) / alpha) p̃_0 - theta / alpha`.
    pub fn distinct_from(&self, missing_mass: f64) -> f64 {
        let PriorParams { alpha, theta } = self.params;
        (theta + self.n as f64) / alpha * missing_mass - theta / alpha
    }
}

/// `h[i] = ln Σ_k exp(ln_f[i + k] + seq[k])` for `i = 0..=len_out-1`.
fn correlate(seq: &[f64], ln_f: &[f64], last: usize) -> Vec<f64> {
    let mut terms = Vec::with_capacity(seq.len());
    (0..=last)
        .map(|i| {
            terms.clear();
            for (k, s) in seq.iter().enumerate() {
                if *s > f64::NEG_INFINITY {
                    terms.push(s + ln_f[i + k]);
                }
            }
            logsumexp(&terms)
        })
        .collect()
}

pub fn block_weights(counts: &[u64], alpha: f64) -> Result<LogBlockWeights> {
    LogBlockWeights::new(counts, alpha, DEFAULT_EXACT_CAP)
}

pub fn pyp_loglik(sketch: &Sketch, params: PriorParams) -> Result<f64> {
    Ok(PypExact::new(sketch, params, DEFAULT_EXACT_CAP)?.loglik(sketch.counts()))
}

pub fn pyp_coverage_exact(sketch: &Sketch, params: PriorParams, r: u64) -> Result<f64> {
    check_params(&params)?;
    if r > sketch.max_count() {
        return Ok(0.0);
    }
    PypExact::new(sketch, params, DEFAULT_EXACT_CAP)?.coverage(r)
}

pub fn pyp_freq_counts(sketch: &Sketch, params: PriorParams, r: u64) -> Result<f64> {
    if r == 0 {
        return Err(Error::Domain("frequency counts start at r = 1".into()));
    }
    check_params(&params)?;
    if r > sketch.max_count() {
        return Ok(0.0);
    }
    let ex = PypExact::new(sketch, params, DEFAULT_EXACT_CAP)?;
    let p = ex.coverage(r)?;
    Ok(ex.freq_count_from(r, p))
}

pub fn pyp_distinct(sketch: &Sketch, params: PriorParams) -> Result<f64> {
    let ex = PypExact::new(sketch, params, DEFAULT_EXACT_CAP)?;
    let p0 = ex.coverage(0)?;
    Ok(ex.distinct_from(p0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Debias {
    #[default]
    None,
    Tin,
}

/// Streaming accumulator for a ratio of means `E[U] / E[Z]` given samples of
/// `(ln U, ln Z)`. Sums are kept relative to running maxima and rescaled when
/// a maximum moves.
#[derive(Debug, Clone, Copy)]
pub struct RatioAccumulator {
    count: u64,
    shift_u: f64,
    shift_z: f64,
    su: f64,
    sz: f64,
    suu: f64,
    szz: f64,
    suz: f64,
}

impl Default for RatioAccumulator {
    fn default() -> Self {
        Self {
            count: 0,
            shift_u: f64::NEG_INFINITY,
            shift_z: f64::NEG_INFINITY,
            su: 0.0,
            sz: 0.0,
            suu: 0.0,
            szz: 0.0,
            suz: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioEstimate {
    /// `ln` of the estimated ratio (`-inf` when the numerator is identically 0).
    pub ln_ratio: f64,
    /// Delta-method standard error relative to the ratio.
    pub rel_stderr: f64,
}

impl RatioAccumulator {
    fn rescale_u(&mut self, new: f64) {
        if self.shift_u > f64::NEG_INFINITY {
            let f = (self.shift_u - new).exp();
            self.su *= f;
            self.suu *= f * f;
            self.suz *= f;
        }
        self.shift_u = new;
    }

    fn rescale_z(&mut self, new: f64) {
        if self.shift_z > f64::NEG_INFINITY {
            let f = (self.shift_z - new).exp();
            self.sz *= f;
            self.szz *= f * f;
            self.suz *= f;
        }
        self.shift_z = new;
    }

    pub fn push(&mut self, ln_u: f64, ln_z: f64) {
        if ln_u > self.shift_u {
            self.rescale_u(ln_u);
        }
        if ln_z > self.shift_z {
            self.rescale_z(ln_z);
        }
        let u = if ln_u == f64::NEG_INFINITY { 0.0 } else { (ln_u - self.shift_u).exp() };
        let z = (ln_z - self.shift_z).exp();
        self.count += 1;
        self.su += u;
        self.sz += z;
        self.suu += u * u;
        self.szz += z * z;
        self.suz += u * z;
    }

    pub fn merge(&mut self, other: &RatioAccumulator) {
        if other.count == 0 {
            return;
        }
        let mut o = *other;
        let su = self.shift_u.max(o.shift_u);
        let sz = self.shift_z.max(o.shift_z);
        if su > self.shift_u {
            self.rescale_u(su);
        }
        if sz > self.shift_z {
            self.rescale_z(sz);
        }
        if su > o.shift_u {
            o.rescale_u(su);
        }
        if sz > o.shift_z {
            o.rescale_z(sz);
        }
        self.count += o.count;
        self.su += o.su;
        self.sz += o.sz;
        self.suu += o.suu;
        self.szz += o.szz;
        self.suz += o.suz;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn estimate(&self, debias: Debias) -> RatioEstimate {
        let n = self.count as f64;
        if self.count == 0 || self.su == 0.0 {
            return RatioEstimate {
                ln_ratio: f64::NEG_INFINITY,
                rel_stderr: 0.0,
            };
        }
        let mu = self.su / n;
        let mz = self.sz / n;
        let denom = (n - 1.0).max(1.0);
        let var_u = ((self.suu - n * mu * mu) / denom).max(0.0);
        let var_z = ((self.szz - n * mz * mz) / denom).max(0.0);
        let cov = (self.suz - n * mu * mz) / denom;
        let mut ln_ratio = self.shift_u - self.shift_z + (mu / mz).ln();
        if debias == Debias::Tin {
            let factor = 1.0 + cov / (n * mu * mz) - var_z / (n * mz * mz);
            if factor > 0.0 {
                ln_ratio += factor.ln();
            }
        }
        let rel_var = (var_u / (mu * mu) + var_z / (mz * mz) - 2.0 * cov / (mu * mz)) / n;
        RatioEstimate {
            ln_ratio,
            rel_stderr: rel_var.max(0.0).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McCoverage {
    pub coverage: Vec<f64>,
    pub stderr: Vec<f64>,
    pub samples: u64,
}

const MC_BLOCK: u64 = 2048;

/// Monte Carlo coverage for `r = 0..=r_max`.
///
/// Substituting `𝒞(c, k; α) = (theta)_(c) Pr[K_c = k] / (theta/alpha)_(k)` into
/// the exact estimator gives `p̃_r = pre_r Σ_j w_j E[Z_{r,j}] / E[Z']` with
/// independent per-bucket distinct counts `K_{c_s}` and
///
/// - `Z_{r,j} = (1 + theta/alpha)_(T_j) / (J^{T_j} Π_s (theta/alpha)_(K'_s))`,
///   `K'_s = K_{c_s - r δ_{sj}}`, `T_j = Σ_s K'_s`;
/// - `Z' = (theta/alpha)_(T) / (J^T Π_s (theta/alpha)_(K_{c_s}))`, `T = Σ_s K_{c_s}`;
/// - `w_j = C(c_j, r) (theta)_(c_j - r) / (theta)_(c_j)`.
///
/// Both expectations in `Z_{r,j}` use the shifted counts throughout, and `Z'`
/// uses the unshifted counts throughout; that is the reading under which the
/// ratio reproduces the exact estimator. Since `Z'` does not depend on `j`,
/// the sum over buckets is estimated as one ratio `E[Σ_j w_j Z_{r,j}] / E[Z']`.
/// One trajectory per bucket provides both `K_{c_s}` and `K_{c_s - r}`.
pub fn pyp_coverage_mc_all(
    sketch: &Sketch,
    params: PriorParams,
    r_max: u64,
    num_samples: u64,
    seed: u64,
    debias: Debias,
) -> Result<McCoverage> {
    check_params(&params)?;
    if num_samples < 100 {
        return Err(Error::Domain(format!(
            "Monte Carlo needs at least 100 samples, got {num_samples}"
        )));
    }
    let PriorParams { alpha, theta } = params;
    let n = sketch.n();
    let width = sketch.width();
    let ln_j = (width as f64).ln();
    let ratio = theta / alpha;
    let den_tab = rising_table(ratio, n as usize + 1);
    let num_tab = rising_table(1.0 + ratio, n as usize + 1);
    let counts: Vec<u64> = sketch.counts().iter().copied().filter(|c| *c > 0).collect();
    let zero_buckets = (width - counts.len()) as f64;
    let max_c = counts.iter().copied().max().unwrap_or(0);
    let r_top = r_max.min(max_c);

    // ln w_j per nonzero bucket and r
    let ln_w: Vec<Vec<f64>> = counts
        .iter()
        .map(|&c| {
            let theta_c = log_rising_unchecked(theta, c);
            (0..=r_top.min(c))
                .map(|r| log_binomial(c, r) + log_rising_unchecked(theta, c - r) - theta_c)
                .collect()
        })
        .collect();
    let ln_zero = zero_buckets.ln();

    let blocks = num_samples.div_ceil(MC_BLOCK);
    let accs: Vec<Vec<RatioAccumulator>> = (0..blocks)
        .into_par_iter()
        .map(|block| {
            let mut rng = stream_rng(seed, block);
            let take = MC_BLOCK.min(num_samples - block * MC_BLOCK);
            let mut accs = vec![RatioAccumulator::default(); r_top as usize + 1];
            let mut trajectories: Vec<Vec<u32>> = vec![Vec::new(); counts.len()];
            let mut terms: Vec<f64> = Vec::with_capacity(counts.len() + 1);
            for _ in 0..take {
                let mut total = 0usize;
                let mut sum_den = 0.0;
                for (traj, &c) in trajectories.iter_mut().zip(&counts) {
                    *traj = sample_distinct_prefix(c as usize, params, &mut rng);
                    let k = traj[c as usize] as usize;
                    total += k;
                    sum_den += den_tab[k];
                }
                let ln_zp = den_tab[total] - total as f64 * ln_j - sum_den;
                for (r, acc) in accs.iter_mut().enumerate() {
                    terms.clear();
                    for ((traj, &c), w) in trajectories.iter().zip(&counts).zip(&ln_w) {
                        if (c as usize) < r {
                            continue;
                        }
                        let k_full = traj[c as usize] as usize;
                        let k_cut = traj[c as usize - r] as usize;
                        let t = total - k_full + k_cut;
                        terms.push(
                            w[r] + num_tab[t] - t as f64 * ln_j + den_tab[k_full] - den_tab[k_cut],
                        );
                    }
                    if r == 0 && zero_buckets > 0.0 {
                        terms.push(ln_zero + num_tab[total] - total as f64 * ln_j);
                    }
                    let ln_u = logsumexp(&terms) - sum_den;
                    acc.push(ln_u, ln_zp);
                }
            }
            accs
        })
        .collect();
    let mut merged = vec![RatioAccumulator::default(); r_top as usize + 1];
    for block in &accs {
        for (m, a) in merged.iter_mut().zip(block) {
            m.merge(a);
        }
    }

    let ln_prefix = (theta / width as f64).ln() - (theta + n as f64).ln();
    let mut coverage = vec![0.0; r_max as usize + 1];
    let mut stderr = vec![0.0; r_max as usize + 1];
    for (r, acc) in merged.iter().enumerate() {
        let est = acc.estimate(debias);
        let value = (ln_prefix + log_rising_unchecked(1.0 - alpha, r as u64) + est.ln_ratio).exp();
        coverage[r] = value;
        stderr[r] = value * est.rel_stderr;
    }
    Ok(McCoverage {
        coverage,
        stderr,
        samples: num_samples,
    })
}

/// Single-`r` Monte Carlo coverage; returns `(estimate, standard error)`.
pub fn pyp_coverage_mc(
    sketch: &Sketch,
    params: PriorParams,
    r: u64,
    num_samples: u64,
    seed: u64,
    debias: Debias,
) -> Result<(f64, f64)> {
    check_params(&params)?;
    if r > sketch.max_count() {
        return Ok((0.0, 0.0));
    }
    let mc = pyp_coverage_mc_all(sketch, params, r, num_samples, seed, debias)?;
    Ok((mc.coverage[r as usize], mc.stderr[r as usize]))
}

/// Large-`n` approximation of the missing mass with equal bucket counts:
/// `n^(alpha-1) J^(1-alpha) Γ(theta + J alpha - alpha + 1) / Γ(theta + J alpha)`.
/// Qualitative only; no error bound is known.
pub fn pyp_missing_asymptotic(n: u64, width: u32, params: PriorParams) -> Result<f64> {
    check_params(&params)?;
    if n == 0 {
        return Err(Error::Domain("asymptotic approximation needs n >= 1".into()));
    }
    let PriorParams { alpha, theta } = params;
    let j = width as f64;
    let ln = (alpha - 1.0) * (n as f64).ln() + (1.0 - alpha) * j.ln()
        + ln_gamma(theta + j * alpha - alpha + 1.0)?
        - ln_gamma(theta + j * alpha)?;
    Ok(ln.exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PypMethod {
    Exact { cap: u64 },
    MonteCarlo { samples: u64, seed: u64, debias: Debias },
    Asymptotic,
}

/// Coverage for `r = 0..=r_max` (default `max_j c_j`), frequency counts and the
/// distinct count under given PYP parameters.
pub fn pyp_report(
    sketch: &Sketch,
    params: PriorParams,
    prior_source: PriorSource,
    method: &PypMethod,
    r_max: Option<u64>,
) -> Result<EstimateReport> {
    check_params(&params)?;
    let start = Instant::now();
    let r_max = r_max.unwrap_or_else(|| sketch.max_count());
    let n = sketch.n() as f64;
    let PriorParams { alpha, theta } = params;
    let (cov, stderr, samples, report_method, qualitative) = match method {
        PypMethod::Exact { cap } => {
            let ex = PypExact::new(sketch, params, *cap)?;
            (ex.coverage_all(r_max)?, None, None, Method::PypExact, false)
        }
        PypMethod::MonteCarlo {
            samples,
            seed,
            debias,
        } => {
            let mc = pyp_coverage_mc_all(sketch, params, r_max, *samples, *seed, *debias)?;
            (mc.coverage, Some(mc.stderr), Some(*samples), Method::PypMc, false)
        }
        PypMethod::Asymptotic => {
            let p0 = pyp_missing_asymptotic(sketch.n().max(1), sketch.width() as u32, params)?;
            (vec![p0], None, None, Method::PypAsymptotic, true)
        }
    };
    let coverage: BTreeMap<u64, f64> = cov.iter().enumerate().map(|(r, p)| (r as u64, *p)).collect();
    let freq_counts = cov
        .iter()
        .enumerate()
        .skip(1)
        .map(|(r, p)| (r as u64, (theta + n) / (r as f64 - alpha) * p))
        .collect();
    let distinct = (!qualitative).then(|| (theta + n) / alpha * cov[0] - theta / alpha);
    Ok(EstimateReport {
        n: sketch.n(),
        width: sketch.width() as u32,
        prior: params,
        prior_source,
        method: report_method,
        boundary_hit: None,
        coverage,
        freq_counts,
        distinct,
        mc_stderr: stderr.map(|s| s.into_iter().enumerate().map(|(r, v)| (r as u64, v)).collect()),
        mc_samples: samples,
        qualitative,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// Grid and simulation settings for the Wasserstein fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WassersteinConfig {
    pub alphas: Vec<f64>,
    pub thetas: Vec<f64>,
    pub reps: u32,
    /// Simulated sample size `n'`; `None` means `min(n, 10^4)`.
    pub sim_n: Option<u64>,
}

impl Default for WassersteinConfig {
    fn default() -> Self {
        Self {
            alphas: (0..20).map(|i| i as f64 / 20.0).collect(),
            thetas: (0..10).map(|i| 10f64.powf(-1.0 + 6.0 * i as f64 / 9.0)).collect(),
            reps: 5,
            sim_n: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub alpha: f64,
    pub theta: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WassersteinFit {
    pub params: PriorParams,
    pub distance: f64,
    pub sim_n: u64,
    pub surface: Vec<SurfacePoint>,
}

impl WassersteinFit {
    pub fn surface_csv(&self) -> String {
        let mut out = String::from("alpha,theta,distance\n");
        for p in &self.surface {
            out.push_str(&format!("{},{},{:.12e}\n", p.alpha, p.theta, p.distance));
        }
        out
    }
}

/// 1-Wasserstein distance between two equal-size empirical distributions
/// given as sorted vectors: the mean absolute difference.
pub fn wasserstein_sorted(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

pub(crate) fn sorted_counts(counts: &[u64], scale: f64) -> Vec<f64> {
    let mut v: Vec<f64> = counts.iter().map(|c| *c as f64 * scale).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Simulated sketch of `n` draws from the PYP predictive scheme, hashed with
/// `spec`. Symbol ids are salted per call so repeated simulations do not reuse
/// one id-to-bucket assignment.
pub fn simulate_sketch(spec: HashSpec, params: PriorParams, n: u64, seed: u64) -> Result<Sketch> {
    let mut rng = stream_rng(seed, 6);
    let salt: u64 = rand::Rng::random(&mut rng);
    let (_, freqs) = sample_urn_symbols(params, n as usize, &mut rng);
    let mut counts = vec![0u64; spec.width() as usize];
    for (id, f) in freqs.iter().enumerate() {
        counts[spec.bucket(&(id as u64 ^ salt).to_le_bytes())] += f;
    }
    Sketch::from_counts(spec, counts)
}

/// Likelihood-free fit of `(alpha, theta)`: for each grid point, simulate
/// `reps` sketches of size `n'` through the same hash and average the
/// Wasserstein distance between sorted simulated counts and the sorted
/// observed counts scaled by `n'/n`. Ties go to the smallest `(alpha, theta)`.
///
/// Repetition `k` uses the same random stream at every grid point, so
/// differences across the surface are not swamped by simulation noise.
pub fn wasserstein_fit(sketch: &Sketch, config: &WassersteinConfig, seed: u64) -> Result<WassersteinFit> {
    if config.alphas.is_empty() || config.thetas.is_empty() {
        return Err(Error::Config("Wasserstein grid is empty".into()));
    }
    if config.reps == 0 {
        return Err(Error::Config("Wasserstein fit needs reps >= 1".into()));
    }
    let n = sketch.n();
    if n == 0 {
        return Err(Error::Degenerate("cannot fit an empty sketch".into()));
    }
    let sim_n = config.sim_n.unwrap_or(n.min(10_000));
    if sim_n == 0 || sim_n > n {
        return Err(Error::Config(format!("simulated size {sim_n} must lie in [1, {n}]")));
    }
    let target = sorted_counts(sketch.counts(), sim_n as f64 / n as f64);
    let spec = *sketch.spec();
    let mut grid = Vec::new();
    for &a in &config.alphas {
        for &t in &config.thetas {
            grid.push(PriorParams::new(a, t)?);
        }
    }
    let surface: Vec<SurfacePoint> = grid
        .par_iter()
        .map(|params| {
            // every grid point reuses the same per-rep streams
            let mut total = 0.0;
            for rep in 0..config.reps {
                let s = derive_seed(seed, rep as u64);
                let sim = simulate_sketch(spec, *params, sim_n, s)?;
                total += wasserstein_sorted(&sorted_counts(sim.counts(), 1.0), &target);
            }
            Ok(SurfacePoint {
                alpha: params.alpha,
                theta: params.theta,
                distance: total / config.reps as f64,
            })
        })
        .collect::<Result<_>>()?;
    let best = surface
        .iter()
        .min_by(|a, b| {
            a.distance
                .total_cmp(&b.distance)
                .then(a.alpha.total_cmp(&b.alpha))
                .then(a.theta.total_cmp(&b.theta))
        })
        .expect("nonempty grid");
    Ok(WassersteinFit {
        params: PriorParams::new(best.alpha, best.theta)?,
        distance: best.distance,
        sim_n,
        surface,
    })
}
