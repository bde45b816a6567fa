//! Gamma-frailty marginal survival for recurrent gap times.
//!
//! Unit `i` carries an unobserved frailty `w_i ~ Gamma(shape α, rate α)` and
//! its gaps have hazard `w_i · λ₀(s)` on the gap-time clock. The baseline is
//! a set of hazard masses on the distinct complete gap times. Integrating the
//! frailty out gives, per unit,
//!
//! ```text
//! ℓ_i = Σ_events ln h(s) + α ln α − lnΓ(α) + lnΓ(α + N_i) − (α + N_i) ln(α + H_i)
//! ```
//!
//! with `N_i` the unit's complete gaps and `H_i` the summed cumulative
//! baseline hazard over all its gaps. The baseline is fitted by EM and `α`
//! by a one-dimensional search on `ln α` after each EM step. The marginal
//! survival of a fresh gap is `[α / (α + Λ₀(t))]^α`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::nonparametric::{CurvePoint, EstimatorTag, History, SurvivalCurve};

pub const ALPHA_MIN: f64 = 1e-3;
pub const ALPHA_MAX: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrailtyOptions {
    /// Hold α at this value and estimate only the baseline.
    pub alpha_fixed: Option<f64>,
    pub max_iter: usize,
    /// Relative change in log-likelihood that counts as converged.
    pub tol: f64,
}

impl Default for FrailtyOptions {
    fn default() -> Self {
        Self {
            alpha_fixed: None,
            max_iter: 500,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HazardStep {
    pub time: f64,
    /// Baseline hazard mass at `time`.
    pub hazard: f64,
    /// Cumulative baseline hazard Λ₀(time).
    pub cumulative: f64,
    pub events: f64,
    pub at_risk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrailtyFit {
    pub alpha: f64,
    pub cum_hazard: Vec<HazardStep>,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Marginal log-likelihood after initialisation and after every outer iteration.
    pub log_likelihood_trace: Vec<f64>,
}

impl FrailtyFit {
    /// Λ₀ as a right-continuous step function.
    pub fn cumulative_hazard_at(&self, t: f64) -> f64 {
        let idx = self.cum_hazard.partition_point(|s| s.time <= t);
        if idx == 0 {
            0.0
        } else {
            self.cum_hazard[idx - 1].cumulative
        }
    }

    pub fn to_curve(&self) -> SurvivalCurve {
        let points = self
            .cum_hazard
            .iter()
            .map(|s| CurvePoint {
                time: s.time,
                estimate: frailty_survival(self.alpha, s.cumulative),
                at_risk: s.at_risk,
                events: s.events,
            })
            .collect();
        SurvivalCurve {
            estimator: EstimatorTag::Frailty,
            points,
        }
    }
}

/// `[α / (α + Λ)]^α`, evaluated stably for large α.
pub fn frailty_survival(alpha: f64, cum_hazard: f64) -> f64 {
    (-alpha * (cum_hazard / alpha).ln_1p()).exp()
}

pub fn survival_at(fit: &FrailtyFit, t: f64) -> Result<f64> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::InvalidInput(format!("time {t} is negative")));
    }
    Ok(frailty_survival(fit.alpha, fit.cumulative_hazard_at(t)))
}

/// Precomputed layout of the gaps shared by every likelihood evaluation.
struct Problem {
    /// Distinct complete gap times, ascending.
    times: Vec<f64>,
    /// Complete gaps at each support time.
    events: Vec<f64>,
    /// Units: (complete gap count, index of each gap's last support point ≤ its length).
    units: Vec<(f64, Vec<Option<usize>>)>,
    /// All gaps sorted by length: (length, unit index).
    sorted_gaps: Vec<(f64, usize)>,
}

impl Problem {
    fn new(histories: &[History]) -> Result<Self> {
        let units: Vec<&History> = histories.iter().filter(|h| !h.is_empty()).collect();
        if units.len() < 2 {
            return Err(Error::InsufficientData(
                "frailty fit needs at least two units with gaps".into(),
            ));
        }
        for g in units.iter().flat_map(|h| h.iter()) {
            if !(g.length.is_finite() && g.length > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "gap {} is not positive",
                    g.length
                )));
            }
        }
        let mut times: Vec<f64> = units
            .iter()
            .flat_map(|h| h.iter())
            .filter(|g| g.complete)
            .map(|g| g.length)
            .collect();
        if times.is_empty() {
            return Err(Error::InsufficientData(
                "frailty fit needs at least one complete gap".into(),
            ));
        }
        times.sort_by(f64::total_cmp);
        times.dedup();

        let mut events = vec![0.0; times.len()];
        let mut unit_layout = Vec::with_capacity(units.len());
        let mut sorted_gaps = Vec::new();
        for (u, h) in units.iter().enumerate() {
            let mut n = 0.0;
            let mut idx = Vec::with_capacity(h.len());
            for g in h.iter() {
                let pos = times.partition_point(|&s| s <= g.length);
                idx.push(pos.checked_sub(1));
                if g.complete {
                    n += 1.0;
                    events[pos - 1] += 1.0;
                }
                sorted_gaps.push((g.length, u));
            }
            unit_layout.push((n, idx));
        }
        sorted_gaps.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self {
            times,
            events,
            units: unit_layout,
            sorted_gaps,
        })
    }

    fn cumulative(hazard: &[f64]) -> Vec<f64> {
        hazard
            .iter()
            .scan(0.0, |acc, h| {
                *acc += h;
                Some(*acc)
            })
            .collect()
    }

    fn exposures(&self, cum: &[f64]) -> Vec<f64> {
        self.units
            .iter()
            .map(|(_, idx)| idx.iter().map(|i| i.map_or(0.0, |k| cum[k])).sum())
            .collect()
    }

    /// Marginal log-likelihood at (α, h).
    fn log_likelihood(&self, alpha: f64, hazard: &[f64], exposures: &[f64]) -> f64 {
        let event_part: f64 = self
            .events
            .iter()
            .zip(hazard)
            .filter(|(d, _)| **d > 0.0)
            .map(|(d, h)| d * h.ln())
            .sum();
        let lg_alpha = ln_gamma(alpha);
        let frailty_part: f64 = self
            .units
            .iter()
            .zip(exposures)
            .map(|((n, _), &big_h)| {
                // α ln α − (α+N) ln(α+H) rewritten to avoid cancellation at large α.
                -alpha * (big_h / alpha).ln_1p() - n * (alpha + big_h).ln() + ln_gamma(alpha + n)
                    - lg_alpha
            })
            .sum();
        event_part + frailty_part
    }

    /// Risk weight Σ_i weight_i · #{gaps of i with length ≥ s_k} at each support time.
    fn weighted_risk(&self, unit_weight: &[f64]) -> Vec<f64> {
        let n = self.sorted_gaps.len();
        let mut suffix = vec![0.0; n + 1];
        for i in (0..n).rev() {
            suffix[i] = suffix[i + 1] + unit_weight[self.sorted_gaps[i].1];
        }
        self.times
            .iter()
            .map(|&s| suffix[self.sorted_gaps.partition_point(|g| g.0 < s)])
            .collect()
    }

    fn nelson_aalen(&self) -> (Vec<f64>, Vec<f64>) {
        let ones = vec![1.0; self.units.len()];
        let risk = self.weighted_risk(&ones);
        let hazard = self.events.iter().zip(&risk).map(|(d, r)| d / r).collect();
        (hazard, risk)
    }

    /// One EM update of the baseline at fixed α.
    fn em_step(&self, alpha: f64, exposures: &[f64]) -> Vec<f64> {
        let posterior_mean: Vec<f64> = self
            .units
            .iter()
            .zip(exposures)
            .map(|((n, _), h)| (alpha + n) / (alpha + h))
            .collect();
        let risk = self.weighted_risk(&posterior_mean);
        self.events.iter().zip(&risk).map(|(d, r)| d / r).collect()
    }

    /// Maximises the marginal log-likelihood over ln α for a fixed baseline.
    fn search_alpha(&self, hazard: &[f64], exposures: &[f64]) -> (f64, f64) {
        let f = |x: f64| self.log_likelihood(x.exp(), hazard, exposures);
        let (lo, hi) = (ALPHA_MIN.ln(), ALPHA_MAX.ln());
        const GRID: usize = 48;
        let step = (hi - lo) / GRID as f64;
        let grid: Vec<(f64, f64)> = (0..=GRID)
            .map(|i| {
                let x = lo + step * i as f64;
                (x, f(x))
            })
            .collect();
        let best = grid
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
            .map_or(0, |(i, _)| i);
        let mut a = grid[best.saturating_sub(1)].0;
        let mut b = grid[(best + 1).min(GRID)].0;

        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = b - inv_phi * (b - a);
        let mut d = a + inv_phi * (b - a);
        let (mut fc, mut fd) = (f(c), f(d));
        while b - a > 1e-9 {
            if fc > fd {
                b = d;
                d = c;
                fd = fc;
                c = b - inv_phi * (b - a);
                fc = f(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + inv_phi * (b - a);
                fd = f(d);
            }
        }
        let x = 0.5 * (a + b);
        let mut out = (x, f(x));
        for &(gx, gf) in &grid[best..=best] {
            if gf > out.1 {
                out = (gx, gf);
            }
        }
        (out.0.exp(), out.1)
    }
}

pub fn fit_frailty(histories: &[History], options: &FrailtyOptions) -> Result<FrailtyFit> {
    if let Some(a) = options.alpha_fixed {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::InvalidInput(format!(
                "alpha_fixed {a} must be positive"
            )));
        }
    }
    let problem = Problem::new(histories)?;
    let (mut hazard, pooled_risk) = problem.nelson_aalen();
    let mut alpha = options.alpha_fixed.unwrap_or(1.0);
    let mut exposures = problem.exposures(&Problem::cumulative(&hazard));
    let mut ll = problem.log_likelihood(alpha, &hazard, &exposures);
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < options.max_iter {
        iterations += 1;
        hazard = problem.em_step(alpha, &exposures);
        exposures = problem.exposures(&Problem::cumulative(&hazard));
        let mut next = problem.log_likelihood(alpha, &hazard, &exposures);
        if options.alpha_fixed.is_none() {
            let (cand, cand_ll) = problem.search_alpha(&hazard, &exposures);
            if cand_ll > next {
                alpha = cand;
                next = cand_ll;
            }
        }
        trace.push(next);
        let change = (next - ll).abs() / ll.abs().max(1e-300);
        ll = next;
        if change < options.tol {
            converged = true;
            break;
        }
    }

    let cumulative = Problem::cumulative(&hazard);
    let cum_hazard = problem
        .times
        .iter()
        .enumerate()
        .map(|(k, &time)| HazardStep {
            time,
            hazard: hazard[k],
            cumulative: cumulative[k],
            events: problem.events[k],
            at_risk: pooled_risk[k],
        })
        .collect();
    Ok(FrailtyFit {
        alpha,
        cum_hazard,
        log_likelihood: ll,
        iterations,
        converged,
        log_likelihood_trace: trace,
    })
}
