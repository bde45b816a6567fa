use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered list of the years in which Summer Games were actually held.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GamesCalendar {
    years: Vec<i32>,
}

impl Default for GamesCalendar {
    /// 1896 through 2008: quadrennial, with the 1906 intercalated Games and
    /// without the cancelled 1916, 1940 and 1944 Games.
    fn default() -> Self {
        let mut years = vec![1896, 1900, 1904, 1906, 1908, 1912];
        years.extend((1920..=1936).step_by(4));
        years.extend((1948..=2008).step_by(4));
        Self { years }
    }
}

impl GamesCalendar {
    pub fn new(years: Vec<i32>) -> Result<Self> {
        if years.is_empty() {
            return Err(Error::InvalidInput("calendar has no Games".into()));
        }
        if years.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(
                "calendar years must be strictly increasing".into(),
            ));
        }
        Ok(Self { years })
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn contains(&self, year: i32) -> bool {
        self.years.binary_search(&year).is_ok()
    }

    /// Common time origin of the calendar-time models.
    pub fn origin(&self) -> i32 {
        self.years[0]
    }

    pub fn last(&self) -> i32 {
        *self.years.last().expect("calendar is non-empty")
    }

    /// Games held in `(after, up_to]`.
    pub fn games_between(&self, after: i32, up_to: i32) -> impl Iterator<Item = i32> + '_ {
        let start = self.years.partition_point(|&y| y <= after);
        self.years[start..]
            .iter()
            .copied()
            .take_while(move |&y| y <= up_to)
    }

    /// First Games strictly after `year` whose date is at or beyond `at_least`.
    pub fn first_games_from(&self, year: i32, at_least: f64) -> Option<i32> {
        self.years
            .iter()
            .copied()
            .find(|&y| y > year && f64::from(y) >= at_least)
    }

    /// Quadrennial slots inside the calendar's span with no Games held.
    pub fn cancelled_years(&self) -> Vec<i32> {
        let first = self.origin();
        (first..=self.last())
            .step_by(4)
            .filter(|y| !self.contains(*y))
            .collect()
    }
}
