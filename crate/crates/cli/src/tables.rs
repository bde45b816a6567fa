//! Plain-text renderings of screening and model-comparison results.

use std::collections::BTreeMap;
use std::fmt::Write;

use recsurv::workflow::{AicEntry, ModelResult, ScreeningReport};

use crate::output::fmt6;

fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.10 {
        "*"
    } else {
        ""
    }
}

fn render(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let rule: String = widths
        .iter()
        .map(|w| "-".repeat(w + 2))
        .collect::<Vec<_>>()
        .join("+");
    let mut out = String::new();
    for (i, r) in rows.iter().enumerate() {
        let line: Vec<String> = (0..cols)
            .map(|c| {
                let s = r.get(c).map(String::as_str).unwrap_or("");
                format!(" {s:<w$} ", w = widths[c])
            })
            .collect();
        let _ = writeln!(out, "{}", line.join("|").trim_end());
        if i == 0 {
            let _ = writeln!(out, "{rule}");
        }
    }
    out
}

/// Covariate, log-rank p-value and decision, one row per covariate.
pub fn screening_table(report: &ScreeningReport) -> String {
    let mut rows = vec![vec![
        "Covariate".to_string(),
        "Log-Rank p-value".to_string(),
        "Decision".to_string(),
    ]];
    for r in &report.rows {
        let p = match r.p_value {
            Some(p) if p < 1e-4 => "<.0001".to_string(),
            Some(p) => fmt6(p),
            None => "-".to_string(),
        };
        let decision = format!("{:?}", r.decision).to_lowercase();
        rows.push(vec![r.name.clone(), p, decision]);
    }
    render(&rows)
}

/// Covariates down, models across; each estimate is followed by its
/// standard error in parentheses, "-" marks a covariate not in the model.
pub fn model_table(results: &[ModelResult], ranking: &[AicEntry]) -> String {
    let mut header = vec!["Variable".to_string()];
    header.extend(results.iter().map(|r| r.model.label().to_string()));
    let mut names: Vec<String> = Vec::new();
    for r in results {
        for c in r.initial_covariates.iter().chain(&r.covariates) {
            if !names.contains(c) {
                names.push(c.clone());
            }
        }
    }
    let estimates: Vec<BTreeMap<String, (f64, f64, f64)>> = results
        .iter()
        .map(|r| match &r.fit {
            Ok(f) => f
                .estimates()
                .into_iter()
                .map(|(n, b, se, p)| (n, (b, se, p)))
                .collect(),
            Err(_) => BTreeMap::new(),
        })
        .collect();
    for r in results {
        if let Ok(f) = &r.fit {
            for (n, ..) in f.estimates() {
                if !names.contains(&n) {
                    names.push(n);
                }
            }
        }
    }

    let mut rows = vec![header];
    for name in &names {
        let mut est = vec![name.clone()];
        let mut se = vec![String::new()];
        for e in &estimates {
            match e.get(name) {
                Some(&(b, s, p)) => {
                    est.push(format!("{}{}", fmt6(b), stars(p)));
                    se.push(format!("({})", fmt6(s)));
                }
                None => {
                    est.push("-".into());
                    se.push(String::new());
                }
            }
        }
        rows.push(est);
        rows.push(se);
    }
    let mut aic = vec!["AIC".to_string()];
    aic.extend(results.iter().map(|r| match (&r.fit, r.aic()) {
        (_, Some(a)) => fmt6(a),
        (Err(e), None) if e.numerical => "failed (numerical)".into(),
        _ => "failed".into(),
    }));
    rows.push(aic);

    let mut out = render(&rows);
    let _ = writeln!(out, "\n*, **, *** denote significance at 10, 5 and 1 percent; robust standard errors for Cox models.");
    for r in results {
        if let Err(e) = &r.fit {
            let _ = writeln!(out, "{}: {}", r.model.label(), e.message);
        }
    }
    if !ranking.is_empty() {
        let _ = writeln!(out, "\nAIC ranking:");
        for (i, e) in ranking.iter().enumerate() {
            let _ = writeln!(out, "{:>2}. {:<18} {}", i + 1, e.label, fmt6(e.aic));
        }
    }
    out
}
