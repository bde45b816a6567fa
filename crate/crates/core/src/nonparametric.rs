//! Product-limit survival estimators and the log-rank test.
//!
//! Three estimators share one weighted product-limit kernel:
//!
//! * [`kaplan_meier`] on independent durations,
//! * [`generalized_km`], which pools every gap of every unit and treats them
//!   as i.i.d. (so it coincides with Kaplan-Meier on the pooled gaps),
//! * [`wang_chang`], which down-weights each unit by its number of complete
//!   gaps so that units with many recurrences do not dominate the estimate.
//!
//! At tied times events are counted before censorings: an observation
//! censored at `t` is still in the risk set for events at `t`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{quad_form, spd_inverse};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EstimatorTag {
    KM,
    WangChang,
    GeneralizedKM,
    Frailty,
}

impl EstimatorTag {
    pub fn label(self) -> &'static str {
        match self {
            EstimatorTag::KM => "Kaplan-Meier",
            EstimatorTag::WangChang => "Wang-Chang",
            EstimatorTag::GeneralizedKM => "Generalized KM",
            EstimatorTag::Frailty => "MLE Frailty",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub time: f64,
    pub estimate: f64,
    pub at_risk: f64,
    pub events: f64,
}

/// Right-continuous step function `S(t)`, equal to 1 before the first point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    pub estimator: EstimatorTag,
    pub points: Vec<CurvePoint>,
}

impl SurvivalCurve {
    /// Builds a curve from externally supplied points, checking the step-function invariants.
    pub fn new(estimator: EstimatorTag, points: Vec<CurvePoint>) -> Result<Self> {
        for w in points.windows(2) {
            if w[1].time <= w[0].time {
                return Err(Error::InvalidInput(format!(
                    "curve times must increase ({} then {})",
                    w[0].time, w[1].time
                )));
            }
            if w[1].estimate > w[0].estimate {
                return Err(Error::InvalidInput(format!(
                    "survival estimates must not increase (at t={})",
                    w[1].time
                )));
            }
        }
        for p in &points {
            if !(0.0..=1.0).contains(&p.estimate) || !p.time.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "estimate {} at t={} is outside [0, 1]",
                    p.estimate, p.time
                )));
            }
            if p.at_risk < 0.0 || p.events < 0.0 || p.events > p.at_risk {
                return Err(Error::InvalidInput(format!(
                    "inconsistent counts at t={} (events {}, at risk {})",
                    p.time, p.events, p.at_risk
                )));
            }
        }
        Ok(Self { estimator, points })
    }

    /// Curve from (time, estimate) pairs with unknown counts.
    pub fn from_estimates(estimator: EstimatorTag, pairs: &[(f64, f64)]) -> Result<Self> {
        let points = pairs
            .iter()
            .map(|&(time, estimate)| CurvePoint {
                time,
                estimate,
                at_risk: 0.0,
                events: 0.0,
            })
            .collect();
        Self::new(estimator, points)
    }

    /// Step value of the last support point at or before `t`.
    pub fn survival_at(&self, t: f64) -> f64 {
        let idx = self.points.partition_point(|p| p.time <= t);
        if idx == 0 {
            1.0
        } else {
            self.points[idx - 1].estimate
        }
    }

    pub fn last_time(&self) -> Option<f64> {
        self.points.last().map(|p| p.time)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvObs {
    pub time: f64,
    pub event: bool,
}

impl SurvObs {
    pub fn new(time: f64, event: bool) -> Self {
        Self { time, event }
    }
}

/// One inter-event gap of a unit. `complete` is false when the gap was censored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub length: f64,
    pub complete: bool,
}

impl Gap {
    pub fn event(length: f64) -> Self {
        Self {
            length,
            complete: true,
        }
    }

    pub fn censored(length: f64) -> Self {
        Self {
            length,
            complete: false,
        }
    }
}

pub type History = Vec<Gap>;

/// Gap histories per event, ordered by sequence.
pub fn histories_from_dataset(dataset: &Dataset) -> Vec<History> {
    dataset
        .by_event()
        .into_values()
        .map(|spells| {
            spells
                .into_iter()
                .map(|s| Gap {
                    length: f64::from(s.duration),
                    complete: s.status.is_event(),
                })
                .collect()
        })
        .collect()
}

/// One observation per spell: (duration, broken).
pub fn durations_from_dataset(dataset: &Dataset) -> Vec<SurvObs> {
    dataset
        .spells
        .iter()
        .map(|s| SurvObs::new(f64::from(s.duration), s.status.is_event()))
        .collect()
}

struct Weighted {
    time: f64,
    weight: f64,
    event: bool,
}

/// Weighted product limit: at each distinct event time `d` is the event
/// weight at that time and `r` the weight of observations with time `>= t`.
fn product_limit(mut obs: Vec<Weighted>, estimator: EstimatorTag) -> SurvivalCurve {
    obs.sort_by(|a, b| a.time.total_cmp(&b.time));
    // Suffix sums give the risk weight without accumulating subtraction error.
    let mut at_risk = vec![0.0; obs.len() + 1];
    for i in (0..obs.len()).rev() {
        at_risk[i] = at_risk[i + 1] + obs[i].weight;
    }
    let mut points = Vec::new();
    let mut surv = 1.0;
    let mut i = 0;
    while i < obs.len() {
        let t = obs[i].time;
        let r = at_risk[i];
        let mut d = 0.0;
        let mut j = i;
        while j < obs.len() && obs[j].time == t {
            if obs[j].event {
                d += obs[j].weight;
            }
            j += 1;
        }
        if d > 0.0 {
            surv *= 1.0 - d / r;
            points.push(CurvePoint {
                time: t,
                estimate: surv.max(0.0),
                at_risk: r,
                events: d,
            });
        }
        i = j;
    }
    SurvivalCurve { estimator, points }
}

fn check_times<'a>(times: impl IntoIterator<Item = &'a f64>) -> Result<()> {
    for &t in times {
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::InvalidInput(format!("time {t} is not positive")));
        }
    }
    Ok(())
}

pub fn kaplan_meier(obs: &[SurvObs]) -> Result<SurvivalCurve> {
    if obs.is_empty() {
        return Err(Error::InsufficientData("no observations".into()));
    }
    check_times(obs.iter().map(|o| &o.time))?;
    let weighted = obs
        .iter()
        .map(|o| Weighted {
            time: o.time,
            weight: 1.0,
            event: o.event,
        })
        .collect();
    Ok(product_limit(weighted, EstimatorTag::KM))
}

fn check_histories(histories: &[History]) -> Result<()> {
    if histories.is_empty() || histories.iter().all(|h| h.is_empty()) {
        return Err(Error::InsufficientData("no event histories".into()));
    }
    check_times(histories.iter().flatten().map(|g| &g.length))
}

/// Pools all gaps, complete and censored, into one product-limit estimate.
pub fn generalized_km(histories: &[History]) -> Result<SurvivalCurve> {
    check_histories(histories)?;
    let pooled: Vec<SurvObs> = histories
        .iter()
        .flatten()
        .map(|g| SurvObs::new(g.length, g.complete))
        .collect();
    let mut curve = kaplan_meier(&pooled)?;
    curve.estimator = EstimatorTag::GeneralizedKM;
    Ok(curve)
}

/// Product limit with every gap of unit `i` weighted by `1 / max(K_i, 1)`,
/// `K_i` being the number of complete gaps of that unit.
pub fn wang_chang(histories: &[History]) -> Result<SurvivalCurve> {
    check_histories(histories)?;
    let mut weighted = Vec::new();
    for h in histories {
        let complete = h.iter().filter(|g| g.complete).count();
        let weight = 1.0 / complete.max(1) as f64;
        weighted.extend(h.iter().map(|g| Weighted {
            time: g.length,
            weight,
            event: g.complete,
        }));
    }
    Ok(product_limit(weighted, EstimatorTag::WangChang))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupCounts {
    pub observed: f64,
    pub expected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRankResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub per_group: Vec<GroupCounts>,
}

/// k-sample log-rank test with hypergeometric variance, no continuity correction.
pub fn log_rank(groups: &[Vec<SurvObs>]) -> Result<LogRankResult> {
    if groups.len() < 2 {
        return Err(Error::InvalidInput(
            "log-rank needs at least two groups".into(),
        ));
    }
    if let Some(i) = groups.iter().position(|g| g.is_empty()) {
        return Err(Error::InvalidInput(format!(
            "group {i} has no observations"
        )));
    }
    for g in groups {
        check_times(g.iter().map(|o| &o.time))?;
    }

    let k = groups.len();
    let mut event_times: Vec<f64> = groups
        .iter()
        .flatten()
        .filter(|o| o.event)
        .map(|o| o.time)
        .collect();
    event_times.sort_by(f64::total_cmp);
    event_times.dedup();
    if event_times.is_empty() {
        return Err(Error::InsufficientData(
            "no events in any group; log-rank statistic undefined".into(),
        ));
    }

    let mut observed = vec![0.0; k];
    let mut expected = vec![0.0; k];
    let mut var = DMatrix::<f64>::zeros(k, k);
    for &t in &event_times {
        let r_g: Vec<f64> = groups
            .iter()
            .map(|g| g.iter().filter(|o| o.time >= t).count() as f64)
            .collect();
        let d_g: Vec<f64> = groups
            .iter()
            .map(|g| g.iter().filter(|o| o.event && o.time == t).count() as f64)
            .collect();
        let r: f64 = r_g.iter().sum();
        let d: f64 = d_g.iter().sum();
        for g in 0..k {
            observed[g] += d_g[g];
            expected[g] += d * r_g[g] / r;
        }
        if r > 1.0 {
            let scale = d * (r - d) / (r - 1.0);
            for a in 0..k {
                for b in 0..k {
                    let delta = if a == b { 1.0 } else { 0.0 };
                    var[(a, b)] += scale * (r_g[a] / r) * (delta - r_g[b] / r);
                }
            }
        }
    }

    // The full covariance has rank k-1; drop the last group.
    let diff = DVector::from_iterator(k - 1, (0..k - 1).map(|g| observed[g] - expected[g]));
    let statistic = if diff.iter().all(|v| v.abs() < 1e-12) {
        0.0
    } else {
        let sub = var.view((0, 0), (k - 1, k - 1)).into_owned();
        let inv = spd_inverse(&sub, "log-rank variance")?;
        quad_form(&diff, &inv).max(0.0)
    };
    let df = k - 1;
    let p_value = ChiSquared::new(df as f64)
        .map_err(|e| Error::InvalidInput(e.to_string()))?
        .sf(statistic)
        .clamp(0.0, 1.0);
    Ok(LogRankResult {
        statistic,
        df,
        p_value,
        per_group: observed
            .into_iter()
            .zip(expected)
            .map(|(observed, expected)| GroupCounts { observed, expected })
            .collect(),
    })
}
