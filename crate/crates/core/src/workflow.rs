//! The analysis pipeline: log-rank screening, lagged-duration dependence
//! checks, fitting all five models with one backward-elimination pass, and
//! AIC ranking.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cox::{
    build_risk_intervals, fit_cox, wlw_pooled_fit, CoxFit, CoxOptions, RiskInterval, Scheme,
};
use crate::data::{
    dichotomize, expand_person_period, Category, CovariateKind, CovariateSpec, Dataset,
    GamesCalendar, RecordKey, CATEGORY_COVARIATE,
};
use crate::error::{Error, Result};
use crate::logistic::{fit_logit, LogisticFit};
use crate::nonparametric::{log_rank, SurvObs};

/// Log-rank level for keeping a covariate.
pub const SCREEN_LEVEL: f64 = 0.05;
/// Wald level a covariate must meet to survive backward elimination.
pub const ELIMINATION_LEVEL: f64 = 0.10;
/// Fewest qualifying events for a dependence cell.
pub const MIN_LAGGED_EVENTS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Keep,
    Exclude,
    Untestable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningRow {
    pub name: String,
    pub kind: CovariateKind,
    /// Split point used for a quantitative covariate.
    pub threshold: Option<f64>,
    pub groups: usize,
    pub statistic: Option<f64>,
    pub df: Option<usize>,
    pub p_value: Option<f64>,
    pub decision: Decision,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningReport {
    pub rows: Vec<ScreeningRow>,
}

impl ScreeningReport {
    pub fn kept(&self) -> Vec<String> {
        self.rows
            .iter()
            .filter(|r| r.decision == Decision::Keep)
            .map(|r| r.name.clone())
            .collect()
    }
}

/// Specs for every covariate column plus `Category`.
pub fn default_screening_specs(dataset: &Dataset) -> Vec<CovariateSpec> {
    let mut specs = vec![CovariateSpec {
        name: CATEGORY_COVARIATE.into(),
        kind: CovariateKind::Binary,
        dichotomize_threshold: None,
    }];
    specs.extend(dataset.covariate_specs());
    specs
}

/// Log-rank test of record duration across the levels of each covariate.
/// `Category` is split into its five sports, binary covariates by value and
/// quantitative ones at their mean (or the spec's threshold).
pub fn screen_covariates(dataset: &Dataset, specs: &[CovariateSpec]) -> Result<ScreeningReport> {
    let mut rows = Vec::with_capacity(specs.len());
    for spec in specs {
        let GroupedDurations { groups, threshold } = group_durations(dataset, spec)?;
        let mut row = ScreeningRow {
            name: spec.name.clone(),
            kind: spec.kind,
            threshold,
            groups: groups.len(),
            statistic: None,
            df: None,
            p_value: None,
            decision: Decision::Untestable,
            note: None,
        };
        if groups.len() < 2 {
            row.note = Some(format!(
                "{} observed level(s); nothing to compare",
                groups.len()
            ));
        } else {
            let groups: Vec<Vec<SurvObs>> = groups.into_values().collect();
            match log_rank(&groups) {
                Ok(lr) => {
                    row.statistic = Some(lr.statistic);
                    row.df = Some(lr.df);
                    row.p_value = Some(lr.p_value);
                    row.decision = if lr.p_value < SCREEN_LEVEL {
                        Decision::Keep
                    } else {
                        Decision::Exclude
                    };
                }
                Err(e) => row.note = Some(e.to_string()),
            }
        }
        rows.push(row);
    }
    Ok(ScreeningReport { rows })
}

/// Durations split into the levels a covariate is screened on, keyed by
/// level (Category code, 0/1 value, or 0/1 side of the split point).
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedDurations {
    pub groups: BTreeMap<i64, Vec<SurvObs>>,
    pub threshold: Option<f64>,
}

pub fn group_durations(dataset: &Dataset, spec: &CovariateSpec) -> Result<GroupedDurations> {
    let (labels, threshold) = group_labels(dataset, spec)?;
    let mut groups: BTreeMap<i64, Vec<SurvObs>> = BTreeMap::new();
    for (s, label) in dataset.spells.iter().zip(&labels) {
        if let Some(l) = label {
            groups
                .entry(*l)
                .or_default()
                .push(SurvObs::new(f64::from(s.duration), s.status.is_event()));
        }
    }
    Ok(GroupedDurations { groups, threshold })
}

fn group_labels(
    dataset: &Dataset,
    spec: &CovariateSpec,
) -> Result<(Vec<Option<i64>>, Option<f64>)> {
    if spec.name == CATEGORY_COVARIATE {
        let labels = dataset
            .spells
            .iter()
            .map(|s| Some(s.category.code() as i64))
            .collect();
        return Ok((labels, None));
    }
    let values: Vec<Option<f64>> = dataset
        .spells
        .iter()
        .map(|s| s.covariate(&spec.name))
        .collect();
    match spec.kind {
        CovariateKind::Binary => {
            if let Some(v) = values.iter().flatten().find(|v| **v != 0.0 && **v != 1.0) {
                return Err(Error::Validation(format!(
                    "covariate `{}` is declared binary but takes the value {v}",
                    spec.name
                )));
            }
            Ok((values.iter().map(|v| v.map(|x| x as i64)).collect(), None))
        }
        CovariateKind::Quantitative => {
            if values.iter().all(Option::is_none) {
                return Ok((vec![None; values.len()], None));
            }
            let (labels, threshold) = match spec.dichotomize_threshold {
                Some(t) => (
                    values.iter().map(|v| v.map(|x| u8::from(x >= t))).collect(),
                    t,
                ),
                None => {
                    let d = dichotomize(&values)?;
                    (d.values, d.threshold)
                }
            };
            Ok((
                labels.into_iter().map(|v| v.map(i64::from)).collect(),
                Some(threshold),
            ))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    All,
    TrackField,
    Swimming,
}

impl Subset {
    pub fn includes(self, c: Category) -> bool {
        match self {
            Subset::All => true,
            Subset::TrackField => matches!(c, Category::Track | Category::Field),
            Subset::Swimming => c == Category::Swimming,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Subset::All => "all",
            Subset::TrackField => "track_field",
            Subset::Swimming => "swimming",
        }
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Subset {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "all" => Ok(Subset::All),
            "track_field" => Ok(Subset::TrackField),
            "swimming" => Ok(Subset::Swimming),
            _ => Err(format!(
                "unknown subset `{s}` (expected all, track_field or swimming)"
            )),
        }
    }
}

pub const LAG_COVARIATE: &str = "LaggedDuration";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependenceRow {
    pub n: u32,
    pub k: u32,
    pub n_rows: usize,
    pub n_events: usize,
    /// Regressors that entered the fit, lagged duration first.
    pub covariates: Vec<String>,
    pub beta: Option<f64>,
    /// Sandwich standard error; the Wald test uses this one.
    pub se: Option<f64>,
    pub model_se: Option<f64>,
    pub p_value: Option<f64>,
    /// Why the cell is missing, or which covariates were dropped for lack of contrast.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependenceReport {
    pub k: u32,
    pub subset: Subset,
    pub rows: Vec<DependenceRow>,
}

impl DependenceReport {
    pub fn min_p_value(&self) -> Option<f64> {
        self.rows.iter().filter_map(|r| r.p_value).reduce(f64::min)
    }
}

/// For each `n`, fits an unstratified Cox model of the nth record's duration
/// on the (n−k)th record's duration plus `covariates`, and reports the Wald
/// p-value of the lag coefficient on its sandwich standard error. Cells that
/// cannot be fitted carry a note instead of a p-value.
pub fn dependence_check(
    dataset: &Dataset,
    n_range: impl IntoIterator<Item = u32>,
    k: u32,
    subset: Subset,
    covariates: &[String],
) -> Result<DependenceReport> {
    if !(1..=2).contains(&k) {
        return Err(Error::InvalidInput(format!(
            "lag k must be 1 or 2 (got {k})"
        )));
    }
    let data = dataset.filter_categories(|c| subset.includes(c));
    let rows = n_range
        .into_iter()
        .map(|n| dependence_cell(&data, n, k, covariates))
        .collect::<Result<Vec<_>>>()?;
    Ok(DependenceReport { k, subset, rows })
}

fn dependence_cell(data: &Dataset, n: u32, k: u32, covariates: &[String]) -> Result<DependenceRow> {
    let mut row = DependenceRow {
        n,
        k,
        n_rows: 0,
        n_events: 0,
        covariates: vec![],
        beta: None,
        se: None,
        model_se: None,
        p_value: None,
        note: None,
    };
    let lagged = match crate::data::build_lagged_dataset(data, n, k) {
        Ok(l) => l,
        Err(Error::InsufficientData(m)) => {
            row.note = Some(m);
            return Ok(row);
        }
        Err(e) => return Err(e),
    };
    let mut intervals = Vec::new();
    for r in &lagged {
        let x: Option<Vec<f64>> = std::iter::once(Some(f64::from(r.lagged_duration)))
            .chain(covariates.iter().map(|c| r.covariate(c)))
            .collect();
        if let Some(x) = x {
            intervals.push(RiskInterval {
                unit: RecordKey {
                    event_id: r.event_id.clone(),
                    sequence: n,
                },
                cluster: r.event_id.clone(),
                stratum: 0,
                start: 0.0,
                stop: f64::from(r.outcome_duration),
                status: r.outcome_status.is_event(),
                covariates: x,
            });
        }
    }
    row.n_rows = intervals.len();
    row.n_events = intervals.iter().filter(|i| i.status).count();
    if row.n_rows < MIN_LAGGED_EVENTS {
        row.note = Some(format!(
            "{} qualifying event(s) with complete covariates; at least {MIN_LAGGED_EVENTS} needed",
            row.n_rows
        ));
        return Ok(row);
    }
    if row.n_events == 0 {
        row.note = Some("no broken outcome records".into());
        return Ok(row);
    }

    let mut names = vec![LAG_COVARIATE.to_string()];
    names.extend(covariates.iter().cloned());
    let varies = |j: usize| {
        let first = intervals[0].covariates[j];
        intervals.iter().any(|i| i.covariates[j] != first)
    };
    if !varies(0) {
        row.note = Some("lagged duration is constant; no contrast".into());
        return Ok(row);
    }
    let keep: Vec<usize> = (0..names.len()).filter(|&j| varies(j)).collect();
    let dropped: Vec<&str> = (0..names.len())
        .filter(|j| !keep.contains(j))
        .map(|j| names[j].as_str())
        .collect();
    if !dropped.is_empty() {
        row.note = Some(format!("constant, left out: {}", dropped.join(", ")));
    }
    for iv in &mut intervals {
        iv.covariates = keep.iter().map(|&j| iv.covariates[j]).collect();
    }
    row.covariates = keep.iter().map(|&j| names[j].clone()).collect();
    match fit_cox(&intervals, &row.covariates, &CoxOptions::default()) {
        Ok(fit) => {
            row.beta = Some(fit.coefficients[0]);
            row.se = Some(fit.robust_se[0]);
            row.model_se = Some(fit.model_se[0]);
            row.p_value = Some(fit.wald_p(0, true));
        }
        Err(e) => {
            let msg = e.to_string();
            row.note = Some(match row.note.take() {
                Some(prev) => format!("{prev}; {msg}"),
                None => msg,
            });
        }
    }
    Ok(row)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    AndersenGill,
    PwpTotalTime,
    PwpGapTime,
    Wlw,
    Logistic,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::AndersenGill,
        ModelKind::PwpTotalTime,
        ModelKind::PwpGapTime,
        ModelKind::Wlw,
        ModelKind::Logistic,
    ];

    pub fn scheme(self) -> Option<Scheme> {
        match self {
            ModelKind::AndersenGill => Some(Scheme::AndersenGill),
            ModelKind::PwpTotalTime => Some(Scheme::PwpTotalTime),
            ModelKind::PwpGapTime => Some(Scheme::PwpGapTime),
            ModelKind::Wlw => Some(Scheme::Wlw),
            ModelKind::Logistic => None,
        }
    }

    pub fn label(self) -> &'static str {
        self.scheme().map_or("Logistic", Scheme::label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedModel {
    Cox(CoxFit),
    Logistic(LogisticFit),
}

impl FittedModel {
    pub fn aic(&self) -> f64 {
        match self {
            FittedModel::Cox(f) => f.aic,
            FittedModel::Logistic(f) => f.aic,
        }
    }

    /// (name, estimate, SE, p) for each regressor except the intercept.
    /// Cox rows use robust SEs.
    pub fn estimates(&self) -> Vec<(String, f64, f64, f64)> {
        match self {
            FittedModel::Cox(f) => f
                .coefficient_table()
                .into_iter()
                .map(|r| (r.name, r.estimate, r.robust_se, r.p))
                .collect(),
            FittedModel::Logistic(f) => f
                .coefficient_table()
                .into_iter()
                .skip(1)
                .map(|r| (r.name, r.estimate, r.se, r.p))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFailure {
    pub message: String,
    /// Singularity, divergence or non-convergence rather than bad input.
    pub numerical: bool,
}

impl From<&Error> for ModelFailure {
    fn from(e: &Error) -> Self {
        Self {
            message: e.to_string(),
            numerical: e.is_numerical(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub model: ModelKind,
    pub initial_covariates: Vec<String>,
    /// Covariates in the final fit.
    pub covariates: Vec<String>,
    pub eliminated: Vec<String>,
    pub fit: std::result::Result<FittedModel, ModelFailure>,
}

impl ModelResult {
    pub fn aic(&self) -> Option<f64> {
        self.fit.as_ref().ok().map(FittedModel::aic)
    }
}

fn fit_model(
    model: ModelKind,
    dataset: &Dataset,
    calendar: &GamesCalendar,
    covariates: &[String],
) -> Result<FittedModel> {
    match model.scheme() {
        Some(scheme) => {
            let intervals = build_risk_intervals(dataset, scheme, calendar, covariates)?;
            let opts = CoxOptions::default();
            let mut fit = if scheme == Scheme::Wlw {
                wlw_pooled_fit(&intervals, covariates, &opts)?
            } else {
                fit_cox(&intervals, covariates, &opts)?
            };
            fit.scheme = Some(scheme);
            Ok(FittedModel::Cox(fit))
        }
        None => {
            let rows = expand_person_period(dataset, calendar);
            Ok(FittedModel::Logistic(fit_logit(&rows, covariates, true)?))
        }
    }
}

fn estimate_one(
    model: ModelKind,
    dataset: &Dataset,
    calendar: &GamesCalendar,
    kept: &[String],
) -> ModelResult {
    let mut result = ModelResult {
        model,
        initial_covariates: kept.to_vec(),
        covariates: kept.to_vec(),
        eliminated: vec![],
        fit: Err(ModelFailure {
            message: String::new(),
            numerical: false,
        }),
    };
    let initial = match fit_model(model, dataset, calendar, kept) {
        Ok(f) => f,
        Err(e) => {
            result.fit = Err((&e).into());
            return result;
        }
    };
    let p_values: BTreeMap<String, f64> = initial
        .estimates()
        .into_iter()
        .map(|(name, _, _, p)| (name, p))
        .collect();
    let (retained, eliminated): (Vec<String>, Vec<String>) = kept
        .iter()
        .cloned()
        .partition(|c| p_values.get(c).is_some_and(|p| *p < ELIMINATION_LEVEL));
    result.fit = if eliminated.is_empty() {
        Ok(initial)
    } else if retained.is_empty() && model.scheme().is_some() {
        Err(ModelFailure {
            message: format!(
                "no covariate kept significance at the {}% level; a Cox model needs at least one",
                ELIMINATION_LEVEL * 100.0
            ),
            numerical: false,
        })
    } else {
        fit_model(model, dataset, calendar, &retained).map_err(|e| (&e).into())
    };
    result.covariates = retained;
    result.eliminated = eliminated;
    result
}

/// Fits AG, PWP-TT, PWP-GT, WLW and the logistic model on `kept`, drops
/// covariates whose Wald p-value is at least 10% (robust SEs for the Cox
/// models), and refits once. Models are fitted concurrently; a failure in
/// one does not affect the others.
pub fn estimate_all_models(
    dataset: &Dataset,
    kept: &[String],
    calendar: &GamesCalendar,
) -> Vec<ModelResult> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = ModelKind::ALL
            .iter()
            .map(|&m| scope.spawn(move || estimate_one(m, dataset, calendar, kept)))
            .collect();
        handles
            .into_iter()
            .zip(ModelKind::ALL)
            .map(|(h, m)| {
                h.join().unwrap_or_else(|_| ModelResult {
                    model: m,
                    initial_covariates: kept.to_vec(),
                    covariates: vec![],
                    eliminated: vec![],
                    fit: Err(ModelFailure {
                        message: "fit panicked".into(),
                        numerical: true,
                    }),
                })
            })
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AicEntry {
    pub model: ModelKind,
    pub label: String,
    pub aic: f64,
}

/// Successful fits by ascending AIC; equal values are ordered by model label.
pub fn compare_aic(results: &[ModelResult]) -> Vec<AicEntry> {
    let mut v: Vec<AicEntry> = results
        .iter()
        .filter_map(|r| {
            r.aic().map(|aic| AicEntry {
                model: r.model,
                label: r.model.label().to_string(),
                aic,
            })
        })
        .collect();
    v.sort_by(|a, b| a.aic.total_cmp(&b.aic).then_with(|| a.label.cmp(&b.label)));
    v
}
