//! Record-spell data model.
//!
//! A *spell* is the life of one Olympic record inside one event: the Games at
//! which it was set, the Games at which it was broken (or the censoring
//! horizon), and the covariates observed when it was set. Successive records
//! in an event form a recurrent-event history.

mod calendar;
mod csv_io;
mod dichotomize;
mod lagged;
mod person_period;

pub use calendar::GamesCalendar;
pub use csv_io::{ingest_csv, read_csv, write_csv};
pub use dichotomize::{dichotomize, Dichotomized};
pub use lagged::{build_lagged_dataset, LaggedRow};
pub use person_period::{expand_person_period, PersonPeriodRow, TIME, TIME_SQ};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name under which the sport category is exposed as a numeric model covariate.
pub const CATEGORY_COVARIATE: &str = "Category";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    Track,
    Field,
    Canoeing,
    Cycling,
    Swimming,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Track,
        Category::Field,
        Category::Canoeing,
        Category::Cycling,
        Category::Swimming,
    ];

    /// Numeric code used when the category enters a regression as a single covariate.
    pub fn code(self) -> f64 {
        match self {
            Category::Track => 1.0,
            Category::Field => 2.0,
            Category::Canoeing => 3.0,
            Category::Cycling => 4.0,
            Category::Swimming => 5.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Track => "Track",
            Category::Field => "Field",
            Category::Canoeing => "Canoeing",
            Category::Cycling => "Cycling",
            Category::Swimming => "Swimming",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        Category::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown category `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Broken,
    Censored,
}

impl Status {
    pub fn is_event(self) -> bool {
        self == Status::Broken
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Broken => "Broken",
            Status::Censored => "Censored",
        }
    }
}

impl FromStr for Status {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "broken" | "1" => Ok(Status::Broken),
            "censored" | "0" => Ok(Status::Censored),
            other => Err(format!(
                "unknown status `{other}` (expected Broken or Censored)"
            )),
        }
    }
}

/// Identifies one record: the event it belongs to and its position in that event.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RecordKey {
    pub event_id: String,
    pub sequence: u32,
}

impl fmt::Display for RecordKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.event_id, self.sequence)
    }
}

pub type Covariates = BTreeMap<String, Option<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordSpell {
    pub event_id: String,
    pub category: Category,
    pub sequence: u32,
    pub year_set: i32,
    /// `None` for a record still standing at the end of observation.
    pub year_end: Option<i32>,
    pub status: Status,
    /// Years survived; for open spells this runs to the last calendar Games.
    pub duration: i32,
    pub covariates: Covariates,
}

impl RecordSpell {
    pub fn key(&self) -> RecordKey {
        RecordKey {
            event_id: self.event_id.clone(),
            sequence: self.sequence,
        }
    }

    /// Last Games at which the record was observed at risk.
    pub fn last_observed(&self) -> i32 {
        self.year_set + self.duration
    }

    /// Covariate lookup; `Category` resolves to the numeric category code.
    pub fn covariate(&self, name: &str) -> Option<f64> {
        match self.covariates.get(name) {
            Some(v) => *v,
            None if name == CATEGORY_COVARIATE => Some(self.category.code()),
            None => None,
        }
    }

    /// Values for `names` in order, or `None` if any is missing.
    pub fn covariate_vector(&self, names: &[String]) -> Option<Vec<f64>> {
        names.iter().map(|n| self.covariate(n)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CovariateKind {
    Binary,
    Quantitative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    pub kind: CovariateKind,
    /// Mean split point; only meaningful for quantitative covariates.
    pub dichotomize_threshold: Option<f64>,
}

impl CovariateSpec {
    pub fn binary(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: CovariateKind::Binary,
            dichotomize_threshold: None,
        }
    }

    pub fn quantitative(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: CovariateKind::Quantitative,
            dichotomize_threshold: None,
        }
    }
}

/// A validated, immutable collection of spells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub covariate_names: Vec<String>,
    pub spells: Vec<RecordSpell>,
    pub missing_counts: BTreeMap<String, usize>,
}

impl Dataset {
    /// Validates `spells` against `calendar` and the cross-spell invariants.
    pub fn new(
        covariate_names: Vec<String>,
        spells: Vec<RecordSpell>,
        calendar: &GamesCalendar,
    ) -> Result<Self> {
        validate(&spells, calendar, None)?;
        Ok(Self::assemble(covariate_names, spells))
    }

    pub(crate) fn assemble(covariate_names: Vec<String>, spells: Vec<RecordSpell>) -> Self {
        let missing_counts = covariate_names
            .iter()
            .map(|name| {
                let missing = spells
                    .iter()
                    .filter(|s| s.covariates.get(name).copied().flatten().is_none())
                    .count();
                (name.clone(), missing)
            })
            .collect();
        Self {
            covariate_names,
            spells,
            missing_counts,
        }
    }

    pub fn len(&self) -> usize {
        self.spells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spells.is_empty()
    }

    pub fn n_censored(&self) -> usize {
        self.spells
            .iter()
            .filter(|s| s.status == Status::Censored)
            .count()
    }

    /// Spells grouped by event, each group ordered by sequence.
    pub fn by_event(&self) -> BTreeMap<&str, Vec<&RecordSpell>> {
        let mut groups: BTreeMap<&str, Vec<&RecordSpell>> = BTreeMap::new();
        for s in &self.spells {
            groups.entry(s.event_id.as_str()).or_default().push(s);
        }
        for g in groups.values_mut() {
            g.sort_by_key(|s| s.sequence);
        }
        groups
    }

    /// Sub-dataset of spells whose category passes `keep`. Sequences are left untouched.
    pub fn filter_categories(&self, keep: impl Fn(Category) -> bool) -> Dataset {
        let spells = self
            .spells
            .iter()
            .filter(|s| keep(s.category))
            .cloned()
            .collect();
        Dataset::assemble(self.covariate_names.clone(), spells)
    }

    /// Infers covariate kinds: a column whose observed values are all 0 or 1 is binary.
    pub fn covariate_specs(&self) -> Vec<CovariateSpec> {
        self.covariate_names
            .iter()
            .map(|name| {
                let binary = self
                    .spells
                    .iter()
                    .filter_map(|s| s.covariates.get(name).copied().flatten())
                    .all(|v| v == 0.0 || v == 1.0);
                if binary {
                    CovariateSpec::binary(name.clone())
                } else {
                    CovariateSpec::quantitative(name.clone())
                }
            })
            .collect()
    }
}

/// Per-spell and cross-spell checks. `lines` maps spell index to its CSV line.
pub(crate) fn validate(
    spells: &[RecordSpell],
    calendar: &GamesCalendar,
    lines: Option<&[usize]>,
) -> Result<()> {
    let fail = |idx: usize, msg: String| match lines {
        Some(l) => Error::row(l[idx], msg),
        None => Error::Validation(format!("spell {}: {msg}", idx + 1)),
    };

    for (i, s) in spells.iter().enumerate() {
        check_spell(s, calendar).map_err(|m| fail(i, m))?;
    }

    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in spells.iter().enumerate() {
        groups.entry(s.event_id.as_str()).or_default().push(i);
    }
    for (event, mut idx) in groups {
        idx.sort_by_key(|&i| spells[i].sequence);
        for pair in idx.windows(2) {
            let (a, b) = (&spells[pair[0]], &spells[pair[1]]);
            if b.sequence != a.sequence + 1 {
                return Err(fail(
                    pair[1],
                    format!(
                        "event `{event}`: sequence {} follows {} (sequences must be consecutive)",
                        b.sequence, a.sequence
                    ),
                ));
            }
            if b.category != a.category {
                return Err(fail(
                    pair[1],
                    format!("event `{event}`: category changes between sequences"),
                ));
            }
            if a.year_end.is_none() {
                return Err(fail(
                    pair[0],
                    format!(
                        "event `{event}`: open-ended spell {} is not the last in its event",
                        a.sequence
                    ),
                ));
            }
            if b.year_set < a.last_observed() {
                return Err(fail(
                    pair[1],
                    format!(
                        "event `{event}`: spell {} set in {} overlaps spell {} ({}..{})",
                        b.sequence,
                        b.year_set,
                        a.sequence,
                        a.year_set,
                        a.last_observed()
                    ),
                ));
            }
        }
    }
    Ok(())
}

fn check_spell(s: &RecordSpell, calendar: &GamesCalendar) -> std::result::Result<(), String> {
    if s.sequence == 0 {
        return Err("sequence must be a positive integer".into());
    }
    if !calendar.contains(s.year_set) {
        return Err(format!("year_set {} is not a Games year", s.year_set));
    }
    match (s.year_end, s.status) {
        (Some(end), _) if !calendar.contains(end) => {
            return Err(format!("year_end {end} is not a Games year"));
        }
        (None, Status::Broken) => return Err("a broken record needs a year_end".into()),
        _ => {}
    }
    if s.duration <= 0 {
        return Err(format!(
            "duration {} is not positive (records cannot be set and broken at the same Games)",
            s.duration
        ));
    }
    if let Some(end) = s.year_end {
        if end - s.year_set != s.duration {
            return Err(format!(
                "duration {} disagrees with {}..{}",
                s.duration, s.year_set, end
            ));
        }
    }
    Ok(())
}
