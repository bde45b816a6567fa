use serde::{Deserialize, Serialize};

use super::{Category, Covariates, Dataset, GamesCalendar, RecordKey, Status};

/// One Games at which a record was at risk of being broken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonPeriodRow {
    pub record_key: RecordKey,
    pub category: Category,
    /// 1-based index of the Games within the record's life.
    pub period_index: u32,
    /// Years since the record was set.
    pub time: i32,
    pub time_sq: i32,
    /// 1 iff the record was broken at this Games.
    pub term: u8,
    pub covariates: Covariates,
}

impl PersonPeriodRow {
    /// Value of a named regressor. `Time` and `Time2` resolve to the exposure clock.
    pub fn regressor(&self, name: &str) -> Option<f64> {
        match name {
            TIME => Some(f64::from(self.time)),
            TIME_SQ => Some(f64::from(self.time_sq)),
            super::CATEGORY_COVARIATE => self
                .covariates
                .get(name)
                .copied()
                .unwrap_or(Some(self.category.code())),
            _ => self.covariates.get(name).copied().flatten(),
        }
    }
}

pub const TIME: &str = "Time";
pub const TIME_SQ: &str = "Time2";

/// One row per Games in `(year_set, last observed Games]`. Years with no
/// Games produce no rows, so `time` follows the calendar's gaps.
pub fn expand_person_period(dataset: &Dataset, calendar: &GamesCalendar) -> Vec<PersonPeriodRow> {
    let mut rows = Vec::new();
    for spell in &dataset.spells {
        let end = spell.last_observed();
        let key = spell.key();
        for (i, games) in calendar.games_between(spell.year_set, end).enumerate() {
            let time = games - spell.year_set;
            let term = u8::from(spell.status == Status::Broken && games == end);
            rows.push(PersonPeriodRow {
                record_key: key.clone(),
                category: spell.category,
                period_index: i as u32 + 1,
                time,
                time_sq: time * time,
                term,
                covariates: spell.covariates.clone(),
            });
        }
    }
    rows
}
