use super::{RiskInterval, Scheme, MAX_STRATUM};
use crate::data::{Dataset, GamesCalendar};
use crate::error::{Error, Result};

/// Lays spells out as risk intervals for `scheme`. Spells missing any of
/// `covariates` are dropped (complete-case analysis).
pub fn build_risk_intervals(
    dataset: &Dataset,
    scheme: Scheme,
    calendar: &GamesCalendar,
    covariates: &[String],
) -> Result<Vec<RiskInterval>> {
    let origin = f64::from(calendar.origin());
    let mut out = Vec::with_capacity(dataset.len());
    for (event, spells) in dataset.by_event() {
        if let Some(first) = spells.first() {
            if first.sequence != 1 {
                return Err(Error::Validation(format!(
                    "event `{event}` starts at sequence {}; its predecessor records are missing",
                    first.sequence
                )));
            }
        }
        for s in spells {
            if f64::from(s.year_set) < origin {
                return Err(Error::Validation(format!(
                    "record {} set in {} before the calendar origin {origin}",
                    s.key(),
                    s.year_set
                )));
            }
            let Some(x) = s.covariate_vector(covariates) else {
                continue;
            };
            let set = f64::from(s.year_set) - origin;
            let end = f64::from(s.last_observed()) - origin;
            let seq_stratum = s.sequence.min(MAX_STRATUM);
            let (start, stop, stratum) = match scheme {
                Scheme::AndersenGill => (set, end, 0),
                Scheme::PwpTotalTime => (set, end, seq_stratum),
                Scheme::PwpGapTime => (0.0, f64::from(s.duration), seq_stratum),
                Scheme::Wlw => (0.0, end, seq_stratum),
            };
            out.push(RiskInterval {
                unit: s.key(),
                cluster: s.event_id.clone(),
                stratum,
                start,
                stop,
                status: s.status.is_event(),
                covariates: x,
            });
        }
    }
    Ok(out)
}
