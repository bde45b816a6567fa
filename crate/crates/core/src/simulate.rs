//! Seeded synthetic recurrent-event data on the Games calendar.
//!
//! Each cluster (event) gets a gamma frailty `w` with mean 1 and variance
//! `1/α`. Successive records last an exponential time with rate
//! `w · baseline_rate · exp(β·x)`, rounded up to the next Games. Every
//! cluster draws from its own ChaCha stream, so output does not depend on
//! generation order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma};
use serde::{Deserialize, Serialize};

use crate::data::{Category, Covariates, Dataset, GamesCalendar, RecordSpell, Status};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_events: usize,
    /// Gamma frailty shape; `None` means independent gaps.
    pub frailty_alpha: Option<f64>,
    /// Breaks per year for a unit with `w = 1` and `x = 0`.
    pub baseline_rate: f64,
    /// Binary covariates, drawn Bernoulli(1/2) per spell.
    pub covariate_names: Vec<String>,
    pub covariate_effects: Vec<f64>,
    /// Games at which every cluster sets its first record.
    pub start_year: Option<i32>,
    pub censoring_year: i32,
    /// Mark spells that span a cancelled Games as censored.
    pub censor_war_gaps: bool,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_events: 60,
            frailty_alpha: None,
            baseline_rate: 0.125,
            covariate_names: Vec::new(),
            covariate_effects: Vec::new(),
            start_year: None,
            censoring_year: 2008,
            censor_war_gaps: false,
            seed: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self, calendar: &GamesCalendar) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.n_events == 0 {
            return bad("n_events must be positive".into());
        }
        if !(self.baseline_rate > 0.0 && self.baseline_rate.is_finite()) {
            return bad(format!(
                "baseline_rate must be positive (got {})",
                self.baseline_rate
            ));
        }
        if let Some(a) = self.frailty_alpha {
            if !(a > 0.0 && a.is_finite()) {
                return bad(format!("frailty_alpha must be positive and finite (got {a}); use null for independence"));
            }
        }
        if self.covariate_names.len() != self.covariate_effects.len() {
            return bad(format!(
                "{} covariate names but {} effects",
                self.covariate_names.len(),
                self.covariate_effects.len()
            ));
        }
        if self.covariate_effects.iter().any(|b| !b.is_finite()) {
            return bad("covariate effects must be finite".into());
        }
        if !calendar.contains(self.censoring_year) {
            return bad(format!(
                "censoring_year {} is not a Games year",
                self.censoring_year
            ));
        }
        let start = self.start_year.unwrap_or(calendar.origin());
        if !calendar.contains(start) || start >= self.censoring_year {
            return bad(format!(
                "start_year {start} must be a Games year before censoring_year {}",
                self.censoring_year
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimCluster {
    pub event_id: String,
    pub frailty: f64,
    /// Continuous gap lengths before rounding, one per generated spell.
    pub gaps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulated {
    pub dataset: Dataset,
    pub clusters: Vec<SimCluster>,
}

const CATEGORIES: [Category; 5] = [
    Category::Track,
    Category::Field,
    Category::Canoeing,
    Category::Cycling,
    Category::Swimming,
];

pub fn generate(config: &SimConfig, calendar: &GamesCalendar) -> Result<Dataset> {
    generate_detailed(config, calendar).map(|s| s.dataset)
}

/// As [`generate`], also returning frailties and unrounded gaps.
pub fn generate_detailed(config: &SimConfig, calendar: &GamesCalendar) -> Result<Simulated> {
    config.validate(calendar)?;
    let width = config.n_events.to_string().len().max(3);
    let mut spells = Vec::new();
    let mut clusters = Vec::with_capacity(config.n_events);
    for c in 0..config.n_events {
        let event_id = format!("S{c:0width$}");
        let category = CATEGORIES[c % CATEGORIES.len()];
        let (cluster, mut s) = generate_cluster(config, calendar, c as u64, event_id, category)?;
        clusters.push(cluster);
        spells.append(&mut s);
    }
    let dataset = Dataset::new(config.covariate_names.clone(), spells, calendar)?;
    Ok(Simulated { dataset, clusters })
}

fn generate_cluster(
    config: &SimConfig,
    calendar: &GamesCalendar,
    stream: u64,
    event_id: String,
    category: Category,
) -> Result<(SimCluster, Vec<RecordSpell>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(stream);
    let frailty = match config.frailty_alpha {
        Some(a) => Gamma::new(a, 1.0 / a)
            .map_err(|e| Error::InvalidInput(format!("frailty distribution: {e}")))?
            .sample(&mut rng),
        None => 1.0,
    };
    let cancelled = calendar.cancelled_years();
    let last_games = config.censoring_year;
    let mut year_set = config.start_year.unwrap_or(calendar.origin());
    let mut gaps = Vec::new();
    let mut spells = Vec::new();
    let mut sequence = 1;
    while year_set < last_games {
        let mut covariates = Covariates::new();
        let mut lin = 0.0;
        for (name, beta) in config.covariate_names.iter().zip(&config.covariate_effects) {
            let x = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
            lin += beta * x;
            covariates.insert(name.clone(), Some(x));
        }
        let rate = frailty * config.baseline_rate * f64::exp(lin);
        let gap = Exp::new(rate)
            .map_err(|e| Error::InvalidInput(format!("gap distribution: {e}")))?
            .sample(&mut rng);
        gaps.push(gap);
        let broken_at = calendar
            .first_games_from(year_set, f64::from(year_set) + gap)
            .filter(|&g| g <= last_games);
        let (year_end, status, duration) = match broken_at {
            Some(end) => {
                let war =
                    config.censor_war_gaps && cancelled.iter().any(|&y| y > year_set && y < end);
                let status = if war {
                    Status::Censored
                } else {
                    Status::Broken
                };
                (Some(end), status, end - year_set)
            }
            None if last_games == calendar.last() => {
                (None, Status::Censored, last_games - year_set)
            }
            None => (Some(last_games), Status::Censored, last_games - year_set),
        };
        spells.push(RecordSpell {
            event_id: event_id.clone(),
            category,
            sequence,
            year_set,
            year_end,
            status,
            duration,
            covariates,
        });
        match broken_at {
            Some(end) if end < last_games => year_set = end,
            _ => break,
        }
        sequence += 1;
    }
    Ok((
        SimCluster {
            event_id,
            frailty,
            gaps,
        },
        spells,
    ))
}
