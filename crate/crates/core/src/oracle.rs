//! Ground truth from raw, unsketched samples.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genmodel::{PriorParams, RawSample};

/// Frequency-of-frequencies of a sample: `m[r]` symbols seen exactly `r` times.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionStats {
    pub n: u64,
    pub k: u64,
    /// `m[r]` for `r = 0..=n`; `m[0]` is always 0.
    pub m: Vec<u64>,
}

impl PartitionStats {
    pub fn m(&self, r: u64) -> u64 {
        self.m.get(r as usize).copied().unwrap_or(0)
    }
}

fn frequencies(symbols: &[u64]) -> HashMap<u64, u64> {
    let mut freq = HashMap::new();
    for s in symbols {
        *freq.entry(*s).or_insert(0u64) += 1;
    }
    freq
}

pub fn partition_stats(sample: &RawSample) -> PartitionStats {
    partition_stats_of(&sample.symbols)
}

pub fn partition_stats_of(symbols: &[u64]) -> PartitionStats {
    let n = symbols.len() as u64;
    let freq = frequencies(symbols);
    let mut m = vec![0u64; n as usize + 1];
    for f in freq.values() {
        m[*f as usize] += 1;
    }
    PartitionStats {
        n,
        k: freq.len() as u64,
        m,
    }
}

/// True coverage probabilities `℘_r` for `r = 0..=r_max`.
///
/// `℘_0` sums the masses of every atom not seen (instantiated atoms plus the
/// uninstantiated tail) rather than computing `1 - Σ seen`, which keeps small
/// missing masses accurate.
pub fn true_coverage_all(sample: &RawSample, r_max: u64) -> Result<Vec<f64>> {
    let weights = sample
        .weights
        .as_ref()
        .ok_or_else(|| Error::Domain("true coverage needs atom weights".into()))?;
    let freq = frequencies(&sample.symbols);
    let mut out = vec![0.0; r_max as usize + 1];
    let mut unseen = weights.tail_mass;
    for (i, mass) in weights.masses.iter().enumerate() {
        let id = weights.first_id + i as u64;
        match freq.get(&id) {
            None => unseen += mass,
            Some(&f) if f <= r_max => out[f as usize] += mass,
            Some(_) => {}
        }
    }
    for id in freq.keys() {
        if weights.mass_of(*id).is_none() {
            return Err(Error::Domain(format!("symbol {id} has no recorded weight")));
        }
    }
    out[0] = unseen;
    Ok(out)
}

pub fn true_coverage(sample: &RawSample, r: u64) -> Result<f64> {
    Ok(true_coverage_all(sample, r)?[r as usize])
}

/// Raw-data posterior-mean coverage under a PYP prior:
/// `(theta + k alpha) / (theta + n)` for `r = 0`, `m_r (r - alpha) / (theta + n)` otherwise.
pub fn raw_bnp_coverage(stats: &PartitionStats, params: PriorParams, r: u64) -> f64 {
    let denom = params.theta + stats.n as f64;
    if r == 0 {
        (params.theta + stats.k as f64 * params.alpha) / denom
    } else {
        stats.m(r) as f64 * (r as f64 - params.alpha) / denom
    }
}

/// Classical Good–Turing `(r + 1) m_{r+1} / n`; a comparison column only.
pub fn good_turing(stats: &PartitionStats, r: u64) -> f64 {
    if stats.n == 0 {
        return if r == 0 { 1.0 } else { 0.0 };
    }
    (r + 1) as f64 * stats.m(r + 1) as f64 / stats.n as f64
}
