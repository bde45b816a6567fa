//! Cox partial-likelihood models for recurrent events.
//!
//! A recurrent-event Cox model is an ordinary (stratified, counting-process)
//! Cox model fitted to a particular layout of risk intervals. The four
//! layouts differ only in time origin, interval start and stratification:
//!
//! | scheme   | interval                                  | stratum  |
//! |----------|-------------------------------------------|----------|
//! | AG       | (set − origin, last observed − origin]    | 0        |
//! | PWP-TT   | (set − origin, last observed − origin]    | sequence |
//! | PWP-GT   | (0, duration]                             | sequence |
//! | WLW      | (0, last observed − origin]               | sequence |
//!
//! Sequences from [`MAX_STRATUM`] upward share one stratum. Ties are
//! handled with the Breslow approximation.

mod fit;
mod intervals;

pub use fit::{fit_cox, partial_likelihood, wlw_per_stratum, wlw_pooled_fit, Derivatives};
pub use intervals::build_risk_intervals;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::RecordKey;
use crate::error::{Error, Result};

/// Sequences at or above this share a stratum.
pub const MAX_STRATUM: u32 = 12;

/// |β| beyond which the likelihood is declared monotone.
pub const DIVERGENCE_LIMIT: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "AG")]
    AndersenGill,
    #[serde(rename = "PWP_TT")]
    PwpTotalTime,
    #[serde(rename = "PWP_GT")]
    PwpGapTime,
    #[serde(rename = "WLW")]
    Wlw,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [
        Scheme::AndersenGill,
        Scheme::PwpTotalTime,
        Scheme::PwpGapTime,
        Scheme::Wlw,
    ];

    pub fn cli_name(self) -> &'static str {
        match self {
            Scheme::AndersenGill => "ag",
            Scheme::PwpTotalTime => "pwp-tt",
            Scheme::PwpGapTime => "pwp-gt",
            Scheme::Wlw => "wlw",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Scheme::AndersenGill => "Andersen-Gill",
            Scheme::PwpTotalTime => "PWP Elapsed Time",
            Scheme::PwpGapTime => "PWP Gap Time",
            Scheme::Wlw => "WLW Marginal",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.cli_name() == norm)
            .ok_or_else(|| format!("unknown scheme `{s}` (expected ag, pwp-tt, pwp-gt or wlw)"))
    }
}

/// A (start, stop] at-risk interval in counting-process form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskInterval {
    pub unit: RecordKey,
    pub cluster: String,
    pub stratum: u32,
    pub start: f64,
    pub stop: f64,
    pub status: bool,
    pub covariates: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RobustCluster {
    /// Sandwich with each interval as its own cluster.
    None,
    ByClusterKey,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoxOptions {
    pub robust: RobustCluster,
    pub max_iter: usize,
    /// Convergence threshold on the largest absolute score component.
    pub tol: f64,
}

impl Default for CoxOptions {
    fn default() -> Self {
        Self {
            robust: RobustCluster::ByClusterKey,
            max_iter: 100,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefRow {
    pub name: String,
    pub estimate: f64,
    pub model_se: f64,
    pub robust_se: f64,
    /// Wald z on the robust standard error.
    pub z: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxFit {
    pub scheme: Option<Scheme>,
    pub covariate_names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub model_se: Vec<f64>,
    pub robust_se: Vec<f64>,
    pub model_cov: Vec<Vec<f64>>,
    pub robust_cov: Vec<Vec<f64>>,
    /// Score residuals per input interval (rows) and covariate (columns).
    pub score_residuals: Vec<Vec<f64>>,
    pub log_partial_likelihood: f64,
    pub aic: f64,
    pub iterations: usize,
    pub converged: bool,
    pub n_intervals: usize,
    pub n_events: usize,
    pub n_clusters: usize,
}

impl CoxFit {
    pub fn coefficient_table(&self) -> Vec<CoefRow> {
        (0..self.coefficients.len())
            .map(|j| {
                let estimate = self.coefficients[j];
                let z = estimate / self.robust_se[j];
                CoefRow {
                    name: self.covariate_names[j].clone(),
                    estimate,
                    model_se: self.model_se[j],
                    robust_se: self.robust_se[j],
                    z,
                    p: two_sided_p(z),
                }
            })
            .collect()
    }

    /// Wald p-value for coefficient `j`, on the robust or model-based SE.
    pub fn wald_p(&self, j: usize, robust: bool) -> f64 {
        let se = if robust {
            self.robust_se[j]
        } else {
            self.model_se[j]
        };
        two_sided_p(self.coefficients[j] / se)
    }
}

pub(crate) fn two_sided_p(z: f64) -> f64 {
    if !z.is_finite() {
        return if z.is_nan() { f64::NAN } else { 0.0 };
    }
    let n = Normal::standard();
    (2.0 * n.sf(z.abs())).clamp(0.0, 1.0)
}

/// Hazard of `xi` relative to `xj` under the fitted coefficients.
pub fn hazard_ratio(fit: &CoxFit, xi: &[f64], xj: &[f64]) -> Result<f64> {
    let p = fit.coefficients.len();
    if xi.len() != p || xj.len() != p {
        return Err(Error::InvalidInput(format!(
            "covariate vectors of length {} and {} do not match {p} coefficients",
            xi.len(),
            xj.len()
        )));
    }
    let lin: f64 = fit
        .coefficients
        .iter()
        .zip(xi.iter().zip(xj))
        .map(|(b, (a, c))| b * (a - c))
        .sum();
    Ok(lin.exp())
}
