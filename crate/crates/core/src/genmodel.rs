//! Generative samplers for the Pitman–Yor model and small exact oracles.
//!
//! Four ways of producing data:
//!
//! - [`sample_pyp_sequence`]: lazy stick-breaking with the exact weight of
//!   every instantiated atom, so the true missing mass is known without
//!   truncation error.
//! - [`sample_pyp_urn`]: the predictive (Chinese-restaurant) scheme, followed
//!   by a draw of the atom weights from their exact conditional law given the
//!   partition. Same joint law as stick-breaking, but its cost does not blow up
//!   for heavy tails (large `alpha`).
//! - [`sample_zipf_sequence`]: iid draws from a finite Zipf law.
//! - [`sample_sketch_dirmult`]: DP-prior bucket counts directly, via the Pólya urn.

use rand::Rng as _;
use rand_distr::{Beta, Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{gfc_row, log_rising_unchecked, log_stirling_row};
use crate::rng::{stream_rng, Rng};
use crate::sketch::{HashSpec, Sketch};

/// Discount `alpha` and strength `theta` of a PYP prior; `alpha = 0` is the DP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorParams {
    pub alpha: f64,
    pub theta: f64,
}

impl PriorParams {
    pub fn new(alpha: f64, theta: f64) -> Result<Self> {
        let p = Self { alpha, theta };
        p.validate()?;
        Ok(p)
    }

    pub fn dp(theta: f64) -> Result<Self> {
        Self::new(0.0, theta)
    }

    /// Model constraints: `0 <= alpha < 1`, `theta > -alpha`.
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha < 1.0) {
            return Err(Error::Domain(format!(
                "alpha must lie in [0, 1), got {}",
                self.alpha
            )));
        }
        if !(self.theta > -self.alpha) || !self.theta.is_finite() {
            return Err(Error::Domain(format!(
                "theta must exceed -alpha, got theta={} alpha={}",
                self.theta, self.alpha
            )));
        }
        Ok(())
    }

    /// Estimator constraints: additionally `theta > 0`.
    pub fn validate_for_estimation(&self) -> Result<()> {
        self.validate()?;
        if self.theta <= 0.0 {
            return Err(Error::Domain(format!(
                "estimators require theta > 0, got {}",
                self.theta
            )));
        }
        Ok(())
    }

    /// Probability that observation `i + 1` is a new symbol given `k` distinct
    /// among the first `i`.
    #[inline]
    pub fn new_symbol_prob(&self, k: u64, i: u64) -> f64 {
        (self.theta + self.alpha * k as f64) / (self.theta + i as f64)
    }
}

/// Exact masses for a contiguous range of atom ids, plus the mass of all atoms
/// that were never instantiated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomWeights {
    pub first_id: u64,
    pub masses: Vec<f64>,
    pub tail_mass: f64,
}

impl AtomWeights {
    pub fn mass_of(&self, id: u64) -> Option<f64> {
        id.checked_sub(self.first_id)
            .and_then(|i| self.masses.get(i as usize))
            .copied()
    }

    pub fn instantiated_total(&self) -> f64 {
        self.masses.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorMeta {
    pub model: String,
    pub params: Option<PriorParams>,
    pub exponent: Option<f64>,
    pub vocab: Option<u64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSample {
    pub symbols: Vec<u64>,
    pub weights: Option<AtomWeights>,
    pub meta: GeneratorMeta,
}

impl RawSample {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Sketches the symbol ids (little-endian bytes) through `spec`.
    pub fn sketch(&self, spec: HashSpec) -> Result<Sketch> {
        let mut s = Sketch::new(spec);
        for id in &self.symbols {
            s.insert(&id.to_le_bytes())?;
        }
        Ok(s)
    }
}

fn stick_beta(params: &PriorParams, index: u64) -> Result<Beta<f64>> {
    Beta::new(
        1.0 - params.alpha,
        params.theta + index as f64 * params.alpha,
    )
    .map_err(|e| Error::Domain(format!("stick-breaking beta: {e}")))
}

/// Upper limit on the number of sticks broken by [`sample_pyp_sequence`].
pub const MAX_STICKS: usize = 1 << 24;

/// Lazy stick-breaking sampler.
///
/// Stick `i` (1-based) is `V_i ~ Beta(1 - alpha, theta + i alpha)`; atom `i`
/// has mass `V_i Π_{l<i} (1 - V_l)` and id `i - 1`. Each draw inverts a uniform
/// against the cumulative masses, breaking new sticks until it is covered.
/// The leftover mass shrinks like `i^(-(1 - alpha)/alpha)`, so for large
/// `alpha` this fails with a domain error after [`MAX_STICKS`] sticks;
/// [`sample_pyp_urn`] has the same law and no such limit.
pub fn sample_pyp_sequence(params: PriorParams, n: usize, seed: u64) -> Result<RawSample> {
    params.validate()?;
    if params.theta <= 0.0 && params.alpha == 0.0 {
        return Err(Error::Domain("DP needs theta > 0".into()));
    }
    let mut rng = stream_rng(seed, 1);
    let mut masses: Vec<f64> = Vec::new();
    let mut cumulative: Vec<f64> = Vec::new();
    let mut covered = 0.0;
    let mut remaining = 1.0f64;
    let mut symbols = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random();
        while covered <= u && remaining > 0.0 {
            if masses.len() == MAX_STICKS {
                return Err(Error::Domain(format!(
                    "stick-breaking needs more than {MAX_STICKS} sticks at alpha = {}; \
                     use the urn sampler",
                    params.alpha
                )));
            }
            let v = stick_beta(&params, masses.len() as u64 + 1)?.sample(&mut rng);
            let mass = remaining * v;
            remaining *= 1.0 - v;
            covered += mass;
            masses.push(mass);
            cumulative.push(covered);
        }
        let idx = cumulative.partition_point(|c| *c <= u);
        // rounding can leave u just past the last boundary
        let idx = idx.min(masses.len().saturating_sub(1));
        symbols.push(idx as u64);
    }
    Ok(RawSample {
        symbols,
        weights: Some(AtomWeights {
            first_id: 0,
            masses,
            tail_mass: remaining,
        }),
        meta: GeneratorMeta {
            model: "pyp-stick-breaking".into(),
            params: Some(params),
            exponent: None,
            vocab: None,
            seed,
        },
    })
}

/// Predictive-scheme sampler returning only symbol ids (new ids are
/// consecutive from 0) and their frequencies.
pub fn sample_urn_symbols(params: PriorParams, n: usize, rng: &mut Rng) -> (Vec<u64>, Vec<u64>) {
    let mut symbols: Vec<u64> = Vec::with_capacity(n);
    let mut freqs: Vec<u64> = Vec::new();
    for i in 0..n {
        let k = freqs.len() as u64;
        let new = i == 0
            || rng.random::<f64>() * (params.theta + i as f64) < params.theta + params.alpha * k as f64;
        if new {
            symbols.push(k);
            freqs.push(1);
            continue;
        }
        // pick an existing symbol with probability ∝ n_s - alpha: choose a past
        // draw uniformly (∝ n_s) and accept with probability (n_s - alpha) / n_s
        loop {
            let s = symbols[rng.random_range(0..i)];
            let ns = freqs[s as usize] as f64;
            if params.alpha == 0.0 || rng.random::<f64>() * ns < ns - params.alpha {
                symbols.push(s);
                freqs[s as usize] += 1;
                break;
            }
        }
    }
    (symbols, freqs)
}

/// Predictive-scheme sampler with exact atom weights.
///
/// Given the partition, `(P_1, …, P_k, R) ~ Dirichlet(n_1 - alpha, …, n_k - alpha,
/// theta + k alpha)`, where `R` is the mass of all unseen atoms. Drawing the
/// weights from that law gives the same joint distribution of (sample, true
/// coverage) as stick-breaking.
pub fn sample_pyp_urn(params: PriorParams, n: usize, seed: u64) -> Result<RawSample> {
    params.validate()?;
    if params.theta <= 0.0 && params.alpha == 0.0 {
        return Err(Error::Domain("DP needs theta > 0".into()));
    }
    let mut rng = stream_rng(seed, 2);
    let (symbols, freqs) = sample_urn_symbols(params, n, &mut rng);
    let gamma = |shape: f64, rng: &mut Rng| -> Result<f64> {
        Ok(Gamma::new(shape, 1.0)
            .map_err(|e| Error::Domain(format!("gamma: {e}")))?
            .sample(rng))
    };
    let mut masses = Vec::with_capacity(freqs.len());
    for &f in &freqs {
        masses.push(gamma(f as f64 - params.alpha, &mut rng)?);
    }
    let tail_shape = params.theta + params.alpha * freqs.len() as f64;
    let tail = if tail_shape > 0.0 {
        gamma(tail_shape, &mut rng)?
    } else {
        0.0
    };
    let total: f64 = masses.iter().sum::<f64>() + tail;
    for m in &mut masses {
        *m /= total;
    }
    Ok(RawSample {
        symbols,
        weights: Some(AtomWeights {
            first_id: 0,
            masses,
            tail_mass: if n == 0 { 1.0 } else { tail / total },
        }),
        meta: GeneratorMeta {
            model: "pyp-urn".into(),
            params: Some(params),
            exponent: None,
            vocab: None,
            seed,
        },
    })
}

/// Iid draws from `p_k ∝ k^(-exponent)`, `k = 1..=vocab`.
pub fn sample_zipf_sequence(exponent: f64, vocab: u64, n: usize, seed: u64) -> Result<RawSample> {
    if !(exponent > 0.0) || !exponent.is_finite() {
        return Err(Error::Domain(format!("zipf exponent must be > 0, got {exponent}")));
    }
    if vocab == 0 {
        return Err(Error::Domain("zipf vocabulary must be >= 1".into()));
    }
    let mut masses: Vec<f64> = (1..=vocab).map(|k| (k as f64).powf(-exponent)).collect();
    let norm: f64 = masses.iter().rev().sum();
    let mut cumulative = Vec::with_capacity(masses.len());
    let mut acc = 0.0;
    for m in &mut masses {
        *m /= norm;
        acc += *m;
        cumulative.push(acc);
    }
    let mut rng = stream_rng(seed, 3);
    let last = masses.len() - 1;
    let symbols = (0..n)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * acc;
            cumulative.partition_point(|c| *c <= u).min(last) as u64 + 1
        })
        .collect();
    Ok(RawSample {
        symbols,
        weights: Some(AtomWeights {
            first_id: 1,
            masses,
            tail_mass: 0.0,
        }),
        meta: GeneratorMeta {
            model: "zipf".into(),
            params: None,
            exponent: Some(exponent),
            vocab: Some(vocab),
            seed,
        },
    })
}

/// One trajectory of the distinct-count process: `K[i]` for `i = 0..=c`.
///
/// `K[0] = 0`, `K[1] = 1`, and observation `i` (for `i >= 2`) opens a new block
/// with probability `(theta + alpha K[i-1]) / (theta + i - 1)`. Reading the
/// vector at `c - r` gives every prefix count from one pass.
pub fn sample_distinct_prefix(c: usize, params: PriorParams, rng: &mut Rng) -> Vec<u32> {
    let mut k = Vec::with_capacity(c + 1);
    k.push(0u32);
    if c == 0 {
        return k;
    }
    k.push(1);
    let mut cur = 1u32;
    for i in 2..=c {
        let prev = (i - 1) as f64;
        if rng.random::<f64>() * (params.theta + prev) < params.theta + params.alpha * cur as f64 {
            cur += 1;
        }
        k.push(cur);
    }
    k
}

/// Seeded convenience wrapper around [`sample_distinct_prefix`].
pub fn sample_distinct_prefix_seeded(c: usize, params: PriorParams, seed: u64) -> Vec<u32> {
    sample_distinct_prefix(c, params, &mut stream_rng(seed, 4))
}

/// Exact `E[K_c]` from `e_{i+1} = e_i + (theta + alpha e_i) / (theta + i)`,
/// `e_1 = 1`; exact because the new-block probability is linear in `K`.
pub fn expected_distinct_exact(c: u64, params: PriorParams) -> f64 {
    if c == 0 {
        return 0.0;
    }
    let mut e = 1.0;
    for i in 1..c {
        e += (params.theta + params.alpha * e) / (params.theta + i as f64);
    }
    e
}

/// Pólya-urn draw of DP-prior bucket counts,
/// `C_n ~ Dirichlet-Multinomial(n, theta/J, …, theta/J)`.
pub fn sample_sketch_dirmult(n: usize, spec: HashSpec, theta: f64, seed: u64) -> Result<Sketch> {
    if !(theta > 0.0) {
        return Err(Error::Domain(format!("theta must be > 0, got {theta}")));
    }
    let width = spec.width() as usize;
    let mut rng = stream_rng(seed, 5);
    let mut history: Vec<u32> = Vec::with_capacity(n);
    let mut counts = vec![0u64; width];
    for i in 0..n {
        // bucket j has weight theta/J + c_j: uniform bucket w.p. theta/(theta+i),
        // otherwise the bucket of a uniformly chosen earlier draw
        let j = if rng.random::<f64>() * (theta + i as f64) < theta {
            rng.random_range(0..width) as u32
        } else {
            history[rng.random_range(0..i)]
        };
        history.push(j);
        counts[j as usize] += 1;
    }
    Sketch::from_counts(spec, counts)
}

/// `Pr[K_n = k]` for `k = 0..=n` (entry 0 is zero unless `n = 0`).
pub fn dist_distinct(n: u64, params: PriorParams) -> Result<Vec<f64>> {
    params.validate()?;
    if n > 1000 {
        return Err(Error::Domain(format!("dist_distinct supports n <= 1000, got {n}")));
    }
    if n == 0 {
        return Ok(vec![1.0]);
    }
    let mut out = vec![0.0; n as usize + 1];
    let log_theta_n = log_abs_rising(params.theta, n);
    if params.alpha == 0.0 {
        let stir = log_stirling_row(n);
        let ln_theta = params.theta.ln();
        for k in 1..=n as usize {
            out[k] = (k as f64 * ln_theta + stir[k] - log_theta_n).exp();
        }
    } else {
        let row = gfc_row(n, params.alpha)?;
        let ratio = params.theta / params.alpha;
        for k in 1..=n as usize {
            out[k] = (log_abs_rising(ratio, k as u64) + row.log_values[k] - log_theta_n).exp();
        }
    }
    Ok(out)
}

/// `ln |(x)_(u)|` for `x > -1`; for `x in (-1, 0]` only the first factor is
/// negative (the sign cancels in the ratios where this is used).
fn log_abs_rising(x: f64, u: u64) -> f64 {
    if u == 0 {
        return 0.0;
    }
    if x > 0.0 {
        log_rising_unchecked(x, u)
    } else {
        x.abs().ln() + log_rising_unchecked(x + 1.0, u - 1)
    }
}
