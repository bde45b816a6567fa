//! Conditional break probabilities and expected record counts for a future Games.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nonparametric::{EstimatorTag, SurvivalCurve};

/// Years between consecutive modern Games.
pub const DEFAULT_HORIZON: f64 = 4.0;

/// `P(T ≤ t + horizon | T > t) = (S(t) − S(t + horizon)) / S(t)`, with `S(0) = 1`.
pub fn conditional_break_probability(curve: &SurvivalCurve, t: f64, horizon: f64) -> Result<f64> {
    if t.is_nan() || t < 0.0 || horizon.is_nan() || horizon <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "need t ≥ 0 and horizon > 0 (got t = {t}, horizon = {horizon})"
        )));
    }
    let last = curve.last_time().unwrap_or(0.0);
    if t + horizon > last {
        return Err(Error::InvalidInput(format!(
            "t + horizon = {} lies beyond the curve's support (last time {last})",
            t + horizon
        )));
    }
    let s_t = curve.survival_at(t);
    if s_t <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "S({t}) = 0; the conditional probability is undefined"
        )));
    }
    let s_h = curve.survival_at(t + horizon);
    Ok(((s_t - s_h) / s_t).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortPrediction {
    pub year_set: i32,
    pub at_risk_count: u32,
    pub survived_years: f64,
    pub conditional_probability: f64,
    pub expected_breaks: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedCohort {
    pub year_set: i32,
    pub count: u32,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionTable {
    pub estimator: EstimatorTag,
    pub games_year: i32,
    /// Most recent cohort first.
    pub cohorts: Vec<CohortPrediction>,
    pub excluded: Vec<ExcludedCohort>,
    pub total: f64,
}

impl PredictionTable {
    pub fn warnings(&self) -> Vec<String> {
        self.excluded
            .iter()
            .map(|e| {
                format!(
                    "{}: cohort {} ({} records) excluded: {}",
                    self.estimator.label(),
                    e.year_set,
                    e.count,
                    e.reason
                )
            })
            .collect()
    }
}

/// Expected breaks at `games_year` per estimator. Each cohort of records set
/// in `year_set` has survived `t = games_year − 4 − year_set` years.
pub fn predict_counts(
    curves: &BTreeMap<EstimatorTag, SurvivalCurve>,
    cohorts: &BTreeMap<i32, u32>,
    games_year: i32,
) -> Result<BTreeMap<EstimatorTag, PredictionTable>> {
    let mut out = BTreeMap::new();
    for (&tag, curve) in curves {
        let mut rows = Vec::new();
        let mut excluded = Vec::new();
        for (&year_set, &count) in cohorts.iter().rev() {
            let t = f64::from(games_year) - DEFAULT_HORIZON - f64::from(year_set);
            match conditional_break_probability(curve, t, DEFAULT_HORIZON) {
                Ok(p) => rows.push(CohortPrediction {
                    year_set,
                    at_risk_count: count,
                    survived_years: t,
                    conditional_probability: p,
                    expected_breaks: f64::from(count) * p,
                }),
                Err(e) => excluded.push(ExcludedCohort {
                    year_set,
                    count,
                    reason: e.to_string(),
                }),
            }
        }
        let total = rows.iter().map(|r| r.expected_breaks).sum();
        out.insert(
            tag,
            PredictionTable {
                estimator: tag,
                games_year,
                cohorts: rows,
                excluded,
                total,
            },
        );
    }
    Ok(out)
}

/// Rows are estimators, columns cohort years (descending), then `total`.
pub fn write_prediction_csv<W: std::io::Write>(
    tables: &BTreeMap<EstimatorTag, PredictionTable>,
    writer: W,
    format_number: impl Fn(f64) -> String,
) -> Result<()> {
    let mut years: Vec<i32> = tables
        .values()
        .flat_map(|t| t.cohorts.iter().map(|c| c.year_set))
        .collect();
    years.sort_unstable_by(|a, b| b.cmp(a));
    years.dedup();
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["estimator".to_string()];
    header.extend(years.iter().map(|y| y.to_string()));
    header.push("total".into());
    w.write_record(&header)?;
    for table in tables.values() {
        let mut rec = vec![table.estimator.label().to_string()];
        for y in &years {
            rec.push(
                table
                    .cohorts
                    .iter()
                    .find(|c| c.year_set == *y)
                    .map(|c| format_number(c.expected_breaks))
                    .unwrap_or_default(),
            );
        }
        rec.push(format_number(table.total));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
