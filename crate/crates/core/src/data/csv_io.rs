use std::io::{Read, Write};
use std::path::Path;

use super::{validate, Category, Covariates, Dataset, GamesCalendar, RecordSpell, Status};
use crate::error::{Error, Result};

const REQUIRED: [&str; 6] = [
    "event_id", "category", "sequence", "year_set", "year_end", "status",
];

/// Reads and validates a spell CSV file. Any column beyond the six required
/// ones is a covariate; empty cells are missing values.
pub fn ingest_csv(path: impl AsRef<Path>, calendar: &GamesCalendar) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_csv(file, calendar)
}

pub fn read_csv<R: Read>(reader: R, calendar: &GamesCalendar) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();

    let mut col = [0usize; 6];
    for (slot, name) in col.iter_mut().zip(REQUIRED) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::row(1, format!("missing required column `{name}`")))?;
    }
    let covariate_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| !REQUIRED.contains(h))
        .map(|(i, h)| (i, h.to_string()))
        .collect();

    let mut spells = Vec::new();
    let mut lines = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::row(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| rec.get(col[i]).unwrap_or("");

        let event_id = field(0).to_string();
        if event_id.is_empty() {
            return Err(Error::row(line, "empty event_id"));
        }
        let category: Category = field(1).parse().map_err(|m| Error::row(line, m))?;
        let sequence: u32 = parse_num(field(2), "sequence", line)?;
        let year_set: i32 = parse_num(field(3), "year_set", line)?;
        let year_end: Option<i32> = match field(4) {
            "" => None,
            s => Some(parse_num(s, "year_end", line)?),
        };
        let status: Status = field(5).parse().map_err(|m| Error::row(line, m))?;

        let mut covariates = Covariates::new();
        for (i, name) in &covariate_cols {
            let value = match rec.get(*i).unwrap_or("") {
                "" | "NA" | "." => None,
                s => Some(parse_num::<f64>(s, name, line)?),
            };
            covariates.insert(name.clone(), value);
        }

        let duration = year_end.unwrap_or_else(|| calendar.last()) - year_set;
        spells.push(RecordSpell {
            event_id,
            category,
            sequence,
            year_set,
            year_end,
            status,
            duration,
            covariates,
        });
        lines.push(line);
    }

    validate(&spells, calendar, Some(&lines))?;
    let names = covariate_cols.into_iter().map(|(_, n)| n).collect();
    Ok(Dataset::assemble(names, spells))
}

fn parse_num<T: std::str::FromStr>(s: &str, what: &str, line: usize) -> Result<T> {
    s.parse()
        .map_err(|_| Error::row(line, format!("cannot parse {what} value `{s}`")))
}

/// Writes the dataset in the ingestion schema (duration is derived, not written).
pub fn write_csv<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = REQUIRED.to_vec();
    header.extend(dataset.covariate_names.iter().map(String::as_str));
    w.write_record(&header)?;
    for s in &dataset.spells {
        let mut row = vec![
            s.event_id.clone(),
            s.category.to_string(),
            s.sequence.to_string(),
            s.year_set.to_string(),
            s.year_end.map(|y| y.to_string()).unwrap_or_default(),
            s.status.as_str().to_string(),
        ];
        for name in &dataset.covariate_names {
            row.push(
                s.covariates
                    .get(name)
                    .copied()
                    .flatten()
                    .map(|v| v.to_string())
                    .unwrap_or_default(),
            );
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
