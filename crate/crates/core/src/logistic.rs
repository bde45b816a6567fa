//! Discrete-time hazard model: logistic regression on person-period rows.
//!
//! Each row is one Games at which a record was at risk; `term` marks the
//! Games at which it fell. The log-odds of falling is an intercept plus a
//! linear predictor, optionally with `Time` and `Time2` (years since set and
//! its square) so the hazard can bend with record age.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use crate::cox::Derivatives;
use crate::cox::{two_sided_p, DIVERGENCE_LIMIT};
use crate::data::{Category, PersonPeriodRow, RecordKey, TIME, TIME_SQ};
use crate::error::{Error, Result};
use crate::linalg::{improved, spd_inverse};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogitOptions {
    pub max_iter: usize,
    /// Convergence threshold on the largest absolute score component.
    pub tol: f64,
}

impl Default for LogitOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    /// Regressors after the intercept, in coefficient order.
    pub covariate_names: Vec<String>,
    pub intercept: f64,
    pub intercept_se: f64,
    pub coefficients: Vec<f64>,
    pub se: Vec<f64>,
    pub log_likelihood: f64,
    pub aic: f64,
    pub iterations: usize,
    pub converged: bool,
    /// P̂ for each row that entered the fit.
    pub fitted_probabilities: Vec<f64>,
    /// Indices of the input rows that entered the fit (complete cases).
    pub used_rows: Vec<usize>,
    pub n_events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitCoefRow {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub z: f64,
    pub p: f64,
}

impl LogisticFit {
    pub fn n_parameters(&self) -> usize {
        1 + self.coefficients.len()
    }

    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(x)
                .map(|(b, v)| b * v)
                .sum::<f64>()
    }

    /// Intercept first, then one row per regressor.
    pub fn coefficient_table(&self) -> Vec<LogitCoefRow> {
        std::iter::once(("Intercept".to_string(), self.intercept, self.intercept_se))
            .chain(
                self.covariate_names
                    .iter()
                    .cloned()
                    .zip(self.coefficients.iter().copied())
                    .zip(self.se.iter().copied())
                    .map(|((n, b), s)| (n, b, s)),
            )
            .map(|(name, estimate, se)| {
                let z = estimate / se;
                LogitCoefRow {
                    name,
                    estimate,
                    se,
                    z,
                    p: two_sided_p(z),
                }
            })
            .collect()
    }
}

pub fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^x) without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn evaluate(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>) -> Derivatives {
    let p = beta.len();
    let eta = x * beta;
    let mut value = 0.0;
    let mut gradient = DVector::zeros(p);
    let mut info = DMatrix::zeros(p, p);
    for i in 0..x.nrows() {
        let e = eta[i];
        value += y[i] * e - softplus(e);
        let pr = logistic(e);
        let row = x.row(i).transpose();
        gradient += &row * (y[i] - pr);
        info += &row * row.transpose() * (pr * (1.0 - pr));
    }
    Derivatives {
        value,
        gradient,
        hessian: -info,
    }
}

/// Bernoulli log-likelihood and derivatives for a design whose rows
/// already include any intercept column.
pub fn logit_likelihood(design: &[Vec<f64>], y: &[f64], beta: &[f64]) -> Result<Derivatives> {
    let p = beta.len();
    if design.len() != y.len() || design.iter().any(|r| r.len() != p) {
        return Err(Error::InvalidInput(
            "design, response and beta disagree in shape".into(),
        ));
    }
    let x = DMatrix::from_fn(design.len(), p, |r, c| design[r][c]);
    Ok(evaluate(&x, y, &DVector::from_column_slice(beta)))
}

fn regressor_names(covariate_names: &[String], include_time_terms: bool) -> Vec<String> {
    let mut names = covariate_names.to_vec();
    if include_time_terms {
        names.push(TIME.to_string());
        names.push(TIME_SQ.to_string());
    }
    names
}

fn regressors(row: &PersonPeriodRow, names: &[String]) -> Option<Vec<f64>> {
    names.iter().map(|n| row.regressor(n)).collect()
}

pub fn fit_logit(
    rows: &[PersonPeriodRow],
    covariate_names: &[String],
    include_time_terms: bool,
) -> Result<LogisticFit> {
    fit_logit_with(
        rows,
        covariate_names,
        include_time_terms,
        &LogitOptions::default(),
    )
}

/// Newton-Raphson maximum likelihood with step halving. Rows missing any
/// requested covariate are dropped.
pub fn fit_logit_with(
    rows: &[PersonPeriodRow],
    covariate_names: &[String],
    include_time_terms: bool,
    options: &LogitOptions,
) -> Result<LogisticFit> {
    let names = regressor_names(covariate_names, include_time_terms);
    let mut used_rows = Vec::new();
    let mut data = Vec::new();
    let mut y = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        if let Some(x) = regressors(r, &names) {
            used_rows.push(i);
            data.push(x);
            y.push(f64::from(r.term));
        }
    }
    let n_events = y.iter().filter(|v| **v == 1.0).count();
    if n_events == 0 || n_events == y.len() {
        return Err(Error::InsufficientData(format!(
            "logistic fit needs both outcomes; {n_events} of {} complete rows have term = 1",
            y.len()
        )));
    }

    let (n, k) = (data.len(), names.len());
    let p = k + 1;
    // Standardised columns keep Time² from wrecking the conditioning.
    let mut centre = vec![0.0; k];
    let mut scale = vec![1.0; k];
    for j in 0..k {
        let mean = data.iter().map(|r| r[j]).sum::<f64>() / n as f64;
        let var = data.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n as f64;
        if var.sqrt() <= 1e-12 * mean.abs().max(1.0) {
            return Err(Error::Singular(format!(
                "regressor `{}` is constant; the design is rank deficient",
                names[j]
            )));
        }
        centre[j] = mean;
        scale[j] = var.sqrt();
    }
    let z = DMatrix::from_fn(n, p, |r, c| {
        if c == 0 {
            1.0
        } else {
            (data[r][c - 1] - centre[c - 1]) / scale[c - 1]
        }
    });
    // theta_original = t * theta_scaled
    let mut t = DMatrix::<f64>::identity(p, p);
    for j in 0..k {
        t[(0, j + 1)] = -centre[j] / scale[j];
        t[(j + 1, j + 1)] = 1.0 / scale[j];
    }

    let mut theta = DVector::zeros(p);
    let events = n_events as f64;
    theta[0] = (events / (n as f64 - events)).ln();
    let mut cur = evaluate(&z, &y, &theta);
    let mut iterations = 0;
    let mut converged = false;
    let mut last_norm;
    loop {
        last_norm = cur.gradient.amax();
        let inv = spd_inverse(&(-&cur.hessian), "logistic information")?;
        let step = &inv * &cur.gradient;
        if last_norm < options.tol && step.amax() < 1e-6 {
            converged = true;
            break;
        }
        if iterations >= options.max_iter {
            break;
        }
        iterations += 1;
        let mut next_theta = &theta + &step;
        let mut next = evaluate(&z, &y, &next_theta);
        let mut s = 1.0;
        let mut halvings = 0;
        while !improved(next.value, cur.value) && halvings < 40 {
            s *= 0.5;
            halvings += 1;
            next_theta = &theta + &step * s;
            next = evaluate(&z, &y, &next_theta);
        }
        let original = &t * &next_theta;
        if let Some(j) =
            (1..p).find(|&j| original[j].abs() > DIVERGENCE_LIMIT || !original[j].is_finite())
        {
            return Err(Error::Divergence {
                name: names[j - 1].clone(),
                value: original[j].abs(),
                limit: DIVERGENCE_LIMIT,
            });
        }
        let stalled = (next.value - cur.value).abs() <= 1e-15 * cur.value.abs().max(1.0);
        theta = next_theta;
        cur = next;
        if stalled && step.amax() < 1e-4 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            iterations,
            last_norm,
        });
    }

    let cov_scaled = spd_inverse(&(-&cur.hessian), "logistic information")?;
    let cov = &t * cov_scaled * t.transpose();
    let beta = &t * &theta;
    let se: Vec<f64> = cov.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect();
    let eta = &z * &theta;
    let fitted_probabilities: Vec<f64> = eta.iter().map(|&e| logistic(e)).collect();
    let log_likelihood = cur.value;
    Ok(LogisticFit {
        covariate_names: names,
        intercept: beta[0],
        intercept_se: se[0],
        coefficients: beta.iter().skip(1).copied().collect(),
        se: se[1..].to_vec(),
        log_likelihood,
        aic: -2.0 * log_likelihood + 2.0 * p as f64,
        iterations,
        converged,
        fitted_probabilities,
        used_rows,
        n_events,
    })
}

/// P̂ for a record of age `time` with the given covariate values.
pub fn predict_break_probability(
    fit: &LogisticFit,
    covariates: &BTreeMap<String, f64>,
    time: f64,
) -> Result<f64> {
    let x = fit
        .covariate_names
        .iter()
        .map(|name| match name.as_str() {
            TIME => Ok(time),
            TIME_SQ => Ok(time * time),
            other => covariates
                .get(other)
                .copied()
                .ok_or_else(|| Error::InvalidInput(format!("missing covariate `{other}`"))),
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(logistic(fit.linear_predictor(&x)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub record_key: RecordKey,
    pub category: Category,
    pub time: i32,
    pub fitted: f64,
    pub pearson: f64,
}

/// Pearson residuals `(term − P̂) / sqrt(P̂(1 − P̂))` for the complete-case rows.
pub fn residuals(fit: &LogisticFit, rows: &[PersonPeriodRow]) -> Vec<Residual> {
    rows.iter()
        .filter_map(|r| {
            let x = regressors(r, &fit.covariate_names)?;
            let p = logistic(fit.linear_predictor(&x));
            Some(Residual {
                record_key: r.record_key.clone(),
                category: r.category,
                time: r.time,
                fitted: p,
                pearson: pearson(f64::from(r.term), p),
            })
        })
        .collect()
}

pub fn pearson(observed: f64, fitted: f64) -> f64 {
    (observed - fitted) / (fitted * (1.0 - fitted)).sqrt()
}
