//! The estimate bundle returned by every estimator entry point.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::genmodel::PriorParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorSource {
    Given,
    EbMle,
    EbWasserstein,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    DpExact,
    PypExact,
    PypMc,
    PypAsymptotic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub n: u64,
    pub width: u32,
    pub prior: PriorParams,
    pub prior_source: PriorSource,
    pub method: Method,
    /// Set when an empirical-Bayes fit stopped at a search bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary_hit: Option<bool>,
    /// `p̃_r` keyed by `r = 0..=r_max`.
    pub coverage: BTreeMap<u64, f64>,
    /// `m̃_r` keyed by `r = 1..=r_max`.
    pub freq_counts: BTreeMap<u64, f64>,
    /// Estimated number of distinct symbols. Absent for the asymptotic method.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distinct: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_stderr: Option<BTreeMap<u64, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_samples: Option<u64>,
    /// The asymptotic approximation carries no error bound.
    #[serde(default)]
    pub qualitative: bool,
    pub wall_time_secs: f64,
}

impl EstimateReport {
    pub fn missing_mass(&self) -> f64 {
        self.coverage.get(&0).copied().unwrap_or(f64::NAN)
    }

    pub fn coverage_total(&self) -> f64 {
        self.coverage.values().sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }

    /// Long-format CSV: one row per `r`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,coverage,freq_count,mc_stderr\n");
        for (r, p) in &self.coverage {
            let m = self
                .freq_counts
                .get(r)
                .map(|v| format!("{v:.12e}"))
                .unwrap_or_default();
            let se = self
                .mc_stderr
                .as_ref()
                .and_then(|s| s.get(r))
                .map(|v| format!("{v:.12e}"))
                .unwrap_or_default();
            out.push_str(&format!("{r},{p:.12e},{m},{se}\n"));
        }
        out
    }
}
