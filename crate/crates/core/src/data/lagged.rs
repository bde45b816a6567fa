use serde::{Deserialize, Serialize};

use super::{Category, Covariates, Dataset, Status};
use crate::error::{Error, Result};

/// The nth record of an event paired with the length of its (n-k)th record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaggedRow {
    pub event_id: String,
    pub category: Category,
    pub outcome_duration: i32,
    pub outcome_status: Status,
    pub lagged_duration: i32,
    /// Covariates of the nth record.
    pub covariates: Covariates,
}

impl LaggedRow {
    pub fn covariate(&self, name: &str) -> Option<f64> {
        match self.covariates.get(name) {
            Some(v) => *v,
            None if name == super::CATEGORY_COVARIATE => Some(self.category.code()),
            None => None,
        }
    }
}

/// One row per event with at least `n` records.
///
/// Errors when `n <= k`, `k == 0`, or no event has `n` records.
pub fn build_lagged_dataset(dataset: &Dataset, n: u32, k: u32) -> Result<Vec<LaggedRow>> {
    if k == 0 || n <= k {
        return Err(Error::InvalidInput(format!(
            "lagged dataset needs n > k >= 1 (got n={n}, k={k})"
        )));
    }
    let mut rows = Vec::new();
    for (event, spells) in dataset.by_event() {
        let find = |seq: u32| spells.iter().find(|s| s.sequence == seq);
        let (Some(outcome), Some(lagged)) = (find(n), find(n - k)) else {
            continue;
        };
        rows.push(LaggedRow {
            event_id: event.to_string(),
            category: outcome.category,
            outcome_duration: outcome.duration,
            outcome_status: outcome.status,
            lagged_duration: lagged.duration,
            covariates: outcome.covariates.clone(),
        });
    }
    if rows.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no event has a record with sequence {n}"
        )));
    }
    Ok(rows)
}
