use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::{CoxFit, CoxOptions, RiskInterval, RobustCluster, Scheme, DIVERGENCE_LIMIT};
use crate::error::{Error, Result};
use crate::linalg::{improved, spd_inverse};

const NEWTON_STEP_TOL: f64 = 1e-6;
const STALLED_STEP_TOL: f64 = 1e-4;

/// One distinct event time within a stratum.
struct EventTime {
    events: Vec<usize>,
    risk: Vec<usize>,
}

/// Risk sets of every stratum, flattened.
struct RiskSets {
    times: Vec<EventTime>,
}

impl RiskSets {
    fn new(intervals: &[RiskInterval]) -> Self {
        let mut strata: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, iv) in intervals.iter().enumerate() {
            strata.entry(iv.stratum).or_default().push(i);
        }
        let mut times = Vec::new();
        for members in strata.values() {
            let mut stops: Vec<f64> = members
                .iter()
                .filter(|&&i| intervals[i].status)
                .map(|&i| intervals[i].stop)
                .collect();
            stops.sort_by(f64::total_cmp);
            stops.dedup();
            for t in stops {
                let risk: Vec<usize> = members
                    .iter()
                    .copied()
                    .filter(|&i| intervals[i].start < t && t <= intervals[i].stop)
                    .collect();
                let events = risk
                    .iter()
                    .copied()
                    .filter(|&i| intervals[i].status && intervals[i].stop == t)
                    .collect();
                times.push(EventTime { events, risk });
            }
        }
        Self { times }
    }
}

/// Log partial likelihood with its gradient and Hessian.
#[derive(Debug, Clone)]
pub struct Derivatives {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

fn design(intervals: &[RiskInterval]) -> Result<(usize, DMatrix<f64>)> {
    let p = intervals.first().map_or(0, |i| i.covariates.len());
    if let Some(bad) = intervals.iter().find(|i| i.covariates.len() != p) {
        return Err(Error::InvalidInput(format!(
            "interval {} has {} covariates, expected {p}",
            bad.unit,
            bad.covariates.len()
        )));
    }
    for iv in intervals {
        if iv.start.partial_cmp(&iv.stop) != Some(std::cmp::Ordering::Less) {
            return Err(Error::InvalidInput(format!(
                "interval {} is empty ({}, {}]",
                iv.unit, iv.start, iv.stop
            )));
        }
        if iv.covariates.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "interval {} has a non-finite covariate",
                iv.unit
            )));
        }
    }
    let x = DMatrix::from_fn(intervals.len(), p, |r, c| intervals[r].covariates[c]);
    Ok((p, x))
}

fn evaluate(sets: &RiskSets, x: &DMatrix<f64>, beta: &DVector<f64>) -> Derivatives {
    let p = beta.len();
    let eta = x * beta;
    let mut value = 0.0;
    let mut gradient = DVector::zeros(p);
    let mut info = DMatrix::zeros(p, p);
    for et in &sets.times {
        let d = et.events.len() as f64;
        let shift = et
            .risk
            .iter()
            .map(|&i| eta[i])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut s0 = 0.0;
        let mut s1 = DVector::zeros(p);
        for &i in &et.risk {
            let w = (eta[i] - shift).exp();
            s0 += w;
            s1 += x.row(i).transpose() * w;
        }
        let mean = s1 / s0;
        for &i in &et.risk {
            let w = (eta[i] - shift).exp() / s0;
            let c = x.row(i).transpose() - &mean;
            info += &c * c.transpose() * (w * d);
        }
        for &i in &et.events {
            value += eta[i];
            gradient += x.row(i).transpose() - &mean;
        }
        value -= d * (s0.ln() + shift);
    }
    Derivatives {
        value,
        gradient,
        hessian: -info,
    }
}

/// Breslow log partial likelihood and derivatives at `beta`.
pub fn partial_likelihood(intervals: &[RiskInterval], beta: &[f64]) -> Result<Derivatives> {
    let (p, x) = design(intervals)?;
    if beta.len() != p {
        return Err(Error::InvalidInput(format!(
            "beta has length {}, expected {p}",
            beta.len()
        )));
    }
    let sets = RiskSets::new(intervals);
    Ok(evaluate(&sets, &x, &DVector::from_column_slice(beta)))
}

/// A covariate is estimable only if it varies inside some stratum.
fn check_contrast(intervals: &[RiskInterval], names: &[String]) -> Result<()> {
    let mut strata: BTreeMap<u32, Vec<&RiskInterval>> = BTreeMap::new();
    for iv in intervals {
        strata.entry(iv.stratum).or_default().push(iv);
    }
    for (j, name) in names.iter().enumerate() {
        let varies = strata.values().any(|ivs| {
            let first = ivs[0].covariates[j];
            ivs.iter().any(|iv| iv.covariates[j] != first)
        });
        if !varies {
            return Err(Error::Singular(format!(
                "covariate `{name}` has no contrast within any stratum"
            )));
        }
    }
    Ok(())
}

fn divergence(beta: &DVector<f64>, names: &[String]) -> Option<Error> {
    beta.iter()
        .enumerate()
        .find(|(_, b)| b.abs() > DIVERGENCE_LIMIT || !b.is_finite())
        .map(|(j, b)| Error::Divergence {
            name: names[j].clone(),
            value: b.abs(),
            limit: DIVERGENCE_LIMIT,
        })
}

/// Stratified Cox fit by Newton-Raphson with step halving.
pub fn fit_cox(
    intervals: &[RiskInterval],
    covariate_names: &[String],
    options: &CoxOptions,
) -> Result<CoxFit> {
    let (p, x) = design(intervals)?;
    if p == 0 {
        return Err(Error::InvalidInput(
            "Cox model needs at least one covariate".into(),
        ));
    }
    if covariate_names.len() != p {
        return Err(Error::InvalidInput(format!(
            "{} covariate names for {p} covariates",
            covariate_names.len()
        )));
    }
    let n_events = intervals.iter().filter(|i| i.status).count();
    if n_events == 0 {
        return Err(Error::InsufficientData("no event intervals".into()));
    }
    check_contrast(intervals, covariate_names)?;

    let sets = RiskSets::new(intervals);
    let mut beta = DVector::zeros(p);
    let mut cur = evaluate(&sets, &x, &beta);
    let mut iterations = 0;
    let mut converged = false;
    let mut last_norm;

    loop {
        last_norm = cur.gradient.amax();
        let inv = match spd_inverse(&(-&cur.hessian), "Cox information") {
            Ok(m) => m,
            Err(e) => {
                // A flattening likelihood with large coefficients is separation, not collinearity.
                if beta.amax() > 5.0 {
                    let j = beta.iamax();
                    return Err(Error::Divergence {
                        name: covariate_names[j].clone(),
                        value: beta[j].abs(),
                        limit: DIVERGENCE_LIMIT,
                    });
                }
                return Err(e);
            }
        };
        let step = &inv * &cur.gradient;
        // Under monotone likelihood the score vanishes but the Newton step does not.
        if last_norm < options.tol && step.amax() < NEWTON_STEP_TOL {
            converged = true;
            break;
        }
        if iterations >= options.max_iter {
            break;
        }
        iterations += 1;
        let mut scale = 1.0;
        let mut next_beta = &beta + &step;
        let mut next = evaluate(&sets, &x, &next_beta);
        let mut halvings = 0;
        while !improved(next.value, cur.value) && halvings < 40 {
            scale *= 0.5;
            halvings += 1;
            next_beta = &beta + &step * scale;
            next = evaluate(&sets, &x, &next_beta);
        }
        if let Some(err) = divergence(&next_beta, covariate_names) {
            return Err(err);
        }
        let stalled = (next.value - cur.value).abs() <= 1e-15 * cur.value.abs().max(1.0);
        beta = next_beta;
        cur = next;
        if stalled {
            if step.amax() < STALLED_STEP_TOL {
                // Score is at its floating-point floor.
                converged = true;
                break;
            }
            if beta.amax() > 5.0 {
                let j = step.iamax();
                return Err(Error::Divergence {
                    name: covariate_names[j].clone(),
                    value: beta[j].abs(),
                    limit: DIVERGENCE_LIMIT,
                });
            }
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            iterations,
            last_norm,
        });
    }

    let model_cov = spd_inverse(&(-&cur.hessian), "Cox information")?;
    let residuals = score_residuals(&sets, &x, &beta, intervals.len());
    let (meat, n_clusters) = match options.robust {
        RobustCluster::None => (&residuals.transpose() * &residuals, intervals.len()),
        RobustCluster::ByClusterKey => {
            let mut clusters: BTreeMap<&str, DVector<f64>> = BTreeMap::new();
            for (i, iv) in intervals.iter().enumerate() {
                *clusters
                    .entry(iv.cluster.as_str())
                    .or_insert_with(|| DVector::zeros(p)) += residuals.row(i).transpose();
            }
            let mut meat = DMatrix::zeros(p, p);
            for u in clusters.values() {
                meat += u * u.transpose();
            }
            (meat, clusters.len())
        }
    };
    let robust_cov = &model_cov * meat * &model_cov;
    let robust_cov = (&robust_cov + robust_cov.transpose()) * 0.5;

    let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
        m.row_iter().map(|r| r.iter().copied().collect()).collect()
    };
    let log_partial_likelihood = cur.value;
    Ok(CoxFit {
        scheme: None,
        covariate_names: covariate_names.to_vec(),
        coefficients: beta.iter().copied().collect(),
        model_se: model_cov.diagonal().iter().map(|v| v.sqrt()).collect(),
        robust_se: robust_cov
            .diagonal()
            .iter()
            .map(|v| v.max(0.0).sqrt())
            .collect(),
        model_cov: rows(&model_cov),
        robust_cov: rows(&robust_cov),
        score_residuals: rows(&residuals),
        log_partial_likelihood,
        aic: -2.0 * log_partial_likelihood + 2.0 * p as f64,
        iterations,
        converged,
        n_intervals: intervals.len(),
        n_events,
        n_clusters,
    })
}

/// Breslow score residuals in counting-process form, one row per interval.
fn score_residuals(
    sets: &RiskSets,
    x: &DMatrix<f64>,
    beta: &DVector<f64>,
    n: usize,
) -> DMatrix<f64> {
    let p = beta.len();
    let eta = x * beta;
    let mut out = DMatrix::zeros(n, p);
    for et in &sets.times {
        let d = et.events.len() as f64;
        let shift = et
            .risk
            .iter()
            .map(|&i| eta[i])
            .fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = et.risk.iter().map(|&i| (eta[i] - shift).exp()).collect();
        let s0: f64 = weights.iter().sum();
        let mut mean = DVector::zeros(p);
        for (&i, w) in et.risk.iter().zip(&weights) {
            mean += x.row(i).transpose() * *w;
        }
        mean /= s0;
        for &i in &et.events {
            let c = x.row(i).transpose() - &mean;
            for j in 0..p {
                out[(i, j)] += c[j];
            }
        }
        for (&i, w) in et.risk.iter().zip(&weights) {
            let c = (x.row(i).transpose() - &mean) * (d * w / s0);
            for j in 0..p {
                out[(i, j)] -= c[j];
            }
        }
    }
    out
}

/// WLW with one coefficient vector shared across strata and event-clustered variance.
pub fn wlw_pooled_fit(
    intervals: &[RiskInterval],
    covariate_names: &[String],
    options: &CoxOptions,
) -> Result<CoxFit> {
    let opts = CoxOptions {
        robust: RobustCluster::ByClusterKey,
        ..*options
    };
    let mut fit = fit_cox(intervals, covariate_names, &opts)?;
    fit.scheme = Some(Scheme::Wlw);
    Ok(fit)
}

/// Stratum-specific WLW coefficients: each stratum fitted on its own.
pub fn wlw_per_stratum(
    intervals: &[RiskInterval],
    covariate_names: &[String],
    options: &CoxOptions,
) -> Vec<(u32, Result<CoxFit>)> {
    let mut strata: BTreeMap<u32, Vec<RiskInterval>> = BTreeMap::new();
    for iv in intervals {
        strata.entry(iv.stratum).or_default().push(iv.clone());
    }
    strata
        .into_iter()
        .map(|(s, ivs)| {
            let fit = wlw_pooled_fit(&ivs, covariate_names, options);
            (s, fit)
        })
        .collect()
}
