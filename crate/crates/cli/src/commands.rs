use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

use recsurv::cox::{
    build_risk_intervals, fit_cox, wlw_pooled_fit, CoxOptions, RobustCluster, Scheme,
};
use recsurv::data::{
    expand_person_period, ingest_csv, write_csv, CovariateSpec, Dataset, GamesCalendar,
    CATEGORY_COVARIATE,
};
use recsurv::frailty::{fit_frailty, FrailtyOptions};
use recsurv::logistic::{fit_logit, residuals};
use recsurv::nonparametric::{
    durations_from_dataset, generalized_km, histories_from_dataset, kaplan_meier, wang_chang,
    EstimatorTag, SurvivalCurve,
};
use recsurv::prediction::{predict_counts, write_prediction_csv};
use recsurv::simulate::{generate_detailed, SimConfig};
use recsurv::workflow::{
    compare_aic, default_screening_specs, dependence_check, estimate_all_models, group_durations,
    screen_covariates, ScreeningReport,
};

use crate::output::{fmt6, Cell, Format, Manifest, Output, Table};
use crate::plot::{scatter_plot, step_plot, Series};
use crate::tables::{model_table, screening_table};
use crate::{
    Cli, Command, CovariateSelection, CoxfitArgs, DepcheckArgs, EstimatorArg, KmArgs, LogitArgs,
    LogrankArgs, ModelsArgs, PredictArgs, RobustArg, SimulateArgs, SurvfitArgs, UsageError,
};

/// Inputs read and the seed actually used, for the manifest.
struct RunInfo {
    inputs: Vec<PathBuf>,
    seed: Option<u64>,
}

impl RunInfo {
    fn inputs(paths: &[&Path]) -> Self {
        Self {
            inputs: paths.iter().map(|p| p.to_path_buf()).collect(),
            seed: None,
        }
    }
}

pub fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Ingest(_) => "ingest",
        Command::Km(_) => "km",
        Command::Survfit(_) => "survfit",
        Command::Logrank(_) => "logrank",
        Command::Depcheck(_) => "depcheck",
        Command::Coxfit(_) => "coxfit",
        Command::Logit(_) => "logit",
        Command::Models(_) => "models",
        Command::Predict(_) => "predict",
        Command::Simulate(_) => "simulate",
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let cal = GamesCalendar::default();
    let mut out = Output::new(&cli.output, cli.format)?;
    let info = match &cli.command {
        Command::Ingest(a) => ingest(&a.input, &cal, &mut out)?,
        Command::Km(a) => km(a, &cal, &mut out)?,
        Command::Survfit(a) => survfit(a, &cal, &mut out)?,
        Command::Logrank(a) => logrank(a, &cal, &mut out)?,
        Command::Depcheck(a) => depcheck(a, &cal, &mut out)?,
        Command::Coxfit(a) => coxfit(a, &cal, &mut out)?,
        Command::Logit(a) => logit(a, &cal, &mut out)?,
        Command::Models(a) => models(a, &cal, &mut out)?,
        Command::Predict(a) => predict(a, &cal, &mut out)?,
        Command::Simulate(a) => simulate(a, cli.seed, &cal, &mut out)?,
    };
    let manifest = Manifest {
        command: command_name(&cli.command),
        inputs: info
            .inputs
            .iter()
            .map(|p| p.display().to_string())
            .collect(),
        options: serde_json::to_value(&cli.command)?,
        seed: info.seed.or(cli.seed),
        format: cli.format,
        tool_version: env!("CARGO_PKG_VERSION"),
        outputs: out.artifacts().to_vec(),
    };
    out.write_json("manifest.json", &manifest)?;
    Ok(())
}

pub fn write_diagnostic(cli: &Cli, err: &anyhow::Error) -> Result<()> {
    let mut out = Output::new(&cli.output, cli.format)?;
    let kind = err
        .chain()
        .find_map(|e| e.downcast_ref::<recsurv::Error>())
        .map(|e| match e {
            recsurv::Error::Singular(_) => "singular",
            recsurv::Error::Divergence { .. } => "divergence",
            recsurv::Error::NonConvergence { .. } => "non_convergence",
            _ => "other",
        })
        .unwrap_or("other");
    let diag = json!({
        "command": command_name(&cli.command),
        "exit_code": 3,
        "kind": kind,
        "message": format!("{err:#}"),
        "options": serde_json::to_value(&cli.command)?,
    });
    out.write_json("diagnostic.json", &diag)?;
    Ok(())
}

fn load(path: &Path, cal: &GamesCalendar) -> Result<Dataset> {
    ingest_csv(path, cal).with_context(|| format!("reading {}", path.display()))
}

fn short_name(tag: EstimatorTag) -> &'static str {
    match tag {
        EstimatorTag::KM => "km",
        EstimatorTag::WangChang => "wc",
        EstimatorTag::GeneralizedKM => "gkm",
        EstimatorTag::Frailty => "frailty",
    }
}

fn parse_estimator(s: &str) -> Option<EstimatorTag> {
    let norm = s.trim().to_ascii_lowercase();
    [
        EstimatorTag::KM,
        EstimatorTag::WangChang,
        EstimatorTag::GeneralizedKM,
        EstimatorTag::Frailty,
    ]
    .into_iter()
    .find(|t| short_name(*t) == norm || t.label().to_ascii_lowercase() == norm)
}

fn tag(e: EstimatorArg) -> EstimatorTag {
    match e {
        EstimatorArg::Km => EstimatorTag::KM,
        EstimatorArg::Wc => EstimatorTag::WangChang,
        EstimatorArg::Gkm => EstimatorTag::GeneralizedKM,
        EstimatorArg::Frailty => EstimatorTag::Frailty,
    }
}

fn curve_table(curves: &[SurvivalCurve]) -> Table {
    let mut t = Table::new(vec!["estimator", "time", "estimate", "at_risk", "events"]);
    for c in curves {
        for p in &c.points {
            t.push(vec![
                short_name(c.estimator).into(),
                p.time.into(),
                p.estimate.into(),
                p.at_risk.into(),
                p.events.into(),
            ]);
        }
    }
    t
}

fn series(curve: &SurvivalCurve, label: String) -> Series {
    Series {
        label,
        points: curve.points.iter().map(|p| (p.time, p.estimate)).collect(),
    }
}

fn ingest(path: &Path, cal: &GamesCalendar, out: &mut Output) -> Result<RunInfo> {
    let ds = load(path, cal)?;
    let mut buf = Vec::new();
    write_csv(&ds, &mut buf)?;
    out.write_bytes("dataset.csv", &buf)?;
    let events = ds.by_event();
    let summary = json!({
        "spells": ds.len(),
        "events": events.len(),
        "broken": ds.len() - ds.n_censored(),
        "censored": ds.n_censored(),
        "max_sequence": ds.spells.iter().map(|s| s.sequence).max(),
        "covariates": ds.covariate_specs(),
        "missing_counts": ds.missing_counts,
    });
    out.write_json("summary.json", &summary)?;
    println!(
        "{} spells in {} events ({} censored)",
        ds.len(),
        events.len(),
        ds.n_censored()
    );
    Ok(RunInfo::inputs(&[path]))
}

fn km(a: &KmArgs, cal: &GamesCalendar, out: &mut Output) -> Result<RunInfo> {
    let ds = load(&a.input.input, cal)?;
    let curve = kaplan_meier(&durations_from_dataset(&ds))?;
    out.write_table("km", &curve_table(std::slice::from_ref(&curve)))?;
    if a.svg {
        let svg = step_plot("Kaplan-Meier", &[series(&curve, "Kaplan-Meier".into())]);
        out.write_bytes("km.svg", svg.as_bytes())?;
    }
    Ok(RunInfo::inputs(&[&a.input.input]))
}

fn survfit(a: &SurvfitArgs, cal: &GamesCalendar, out: &mut Output) -> Result<RunInfo> {
    let ds = load(&a.input.input, cal)?;
    let histories = histories_from_dataset(&ds);
    let mut estimators = a.estimator.clone();
    estimators.dedup();
    let mut curves = Vec::new();
    for e in estimators {
        let curve = match e {
            EstimatorArg::Km => kaplan_meier(&durations_from_dataset(&ds))?,
            EstimatorArg::Wc => wang_chang(&histories)?,
            EstimatorArg::Gkm => generalized_km(&histories)?,
            EstimatorArg::Frailty => {
                let opts = FrailtyOptions {
                    alpha_fixed: a.alpha,
                    ..FrailtyOptions::default()
                };
                let fit = fit_frailty(&histories, &opts)?;
                out.write_json(
                    "frailty.json",
                    &json!({
                        "alpha": fit.alpha,
                        "log_likelihood": fit.log_likelihood,
                        "iterations": fit.iterations,
                        "converged": fit.converged,
                        "cumulative_hazard": fit.cum_hazard,
                    }),
                )?;
                fit.to_curve()
            }
        };
        curves.push(curve);
    }
    out.write_table("survival_curves", &curve_table(&curves))?;
    if a.svg {
        let s: Vec<Series> = curves
            .iter()
            .map(|c| series(c, c.estimator.label().to_string()))
            .collect();
        out.write_bytes(
            "survival_curves.svg",
            step_plot("Survival estimates", &s).as_bytes(),
        )?;
    }
    Ok(RunInfo::inputs(&[&a.input.input]))
}

fn specs_for(ds: &Dataset, names: &[String]) -> Result<Vec<CovariateSpec>> {
    let all = default_screening_specs(ds);
    if names.is_empty() {
        return Ok(all);
    }
    names
        .iter()
        .map(|n| {
            all.iter()
                .find(|s| &s.name == n)
                .cloned()
                .ok_or_else(|| anyhow!(UsageError(format!("unknown covariate `{n}`"))))
        })
        .collect()
}

fn screening_rows(report: &ScreeningReport) -> Table {
    let mut t = Table::new(vec![
        "covariate",
        "kind",
        "threshold",
        "groups",
        "statistic",
        "df",
        "p_value",
        "decision",
        "note",
    ]);
    for r in &report.rows {
        t.push(vec![
            r.name.clone().into(),
            format!("{:?}", r.kind).to_lowercase().into(),
            r.threshold.into(),
            r.groups.into(),
            r.statistic.into(),
            r.df.map_or(Cell::Missing, Cell::from),
            r.p_value.into(),
            format!("{:?}", r.decision).to_lowercase().into(),
            r.note.clone().into(),
        ]);
    }
    t
}

fn logrank(a: &LogrankArgs, cal: &GamesCalendar, out: &mut Output) -> Result<RunInfo> {
    let ds = load(&a.input.input, cal)?;
    let specs = specs_for(&ds, &a.covariate)?;
    let report = screen_covariates(&ds, &specs)?;
    out.write_table("screening", &screening_rows(&report))?;
    print!("{}", screening_table(&report));
    if a.svg {
        for spec in &specs {
            let grouped = group_durations(&ds, spec)?;
            let mut s = Vec::new();
            for (level, obs) in &grouped.groups {
                let curve = kaplan_meier(obs)?;
                let label = if spec.name == CATEGORY_COVARIATE {
                    ds.spells
                        .iter()
                        .find(|sp| sp.category.code() as i64 == *level)
                        .map_or(level.to_string(), |sp| sp.category.to_string())
                } else {
                    format!("{} = {level}", spec.name)
                };
                s.push(series(&curve, label));
            }
            let svg = step_plot(&format!("Kaplan-Meier by {}", spec.name), &s);
            out.write_bytes(&format!("logrank_{}.svg", spec.name), svg.as_bytes())?;
        }
    }
    Ok(RunInfo::inputs(&[&a.input.input]))
}

/// Explicit covariates, none, or the log-rank survivors.
fn select_covariates(
    ds: &Dataset,
    sel: &CovariateSelection,
) -> Result<(Vec<String>, Option<ScreeningReport>)> {
    if sel.no_covariates {
        return Ok((vec![], None));
    }
    if !sel.covariate.is_empty() {
        specs_for(ds, &sel.covariate)?;
        return Ok((sel.covariate.clone(), None));
    }
    let report = screen_covariates(ds, &default_screening_specs(ds))?;
    Ok((report.kept(), Some(report)))
}

fn depcheck(a: &DepcheckArgs, cal: &GamesCalendar, out: &mut Output) -> Result<RunInfo> {
    let ds = load(&a.input.input, cal)?;
    let (covariates, _) = select_covariates(&ds, &a.covariates)?;
    let n_min = a.n_min.unwrap_or(a.lag + 1);
    let n_max = a.n_max.unwrap_or_else(|| {
        ds.spells
            .iter()
            .filter(|s| a.subset.includes(s.category))
            .map(|s| s.sequence)
            .max()
            .unwrap_or(0)
    });
    if n_min <= a.lag {
        return Err(anyhow!(UsageError(format!(
            "--n-min must exceed the lag ({} <= {})",
            n_min, a.lag
        ))));
    }
    let report = dependence_check(&ds, n_min..=n_max, a.lag, a.subset, &covariates)?;
    let mut t = Table::new(vec![
        "n",
        "k",
        "subset",
        "rows",
        "events",
        "covariates",
        "beta",
        "robust_se",
        "model_se",
        "p_value",
        "note",
    ]);
    for r in &report.rows {
        t.push(vec![
            r.n.into(),
            r.k.into(),
            a.subset.name().into(),
            r.n_rows.into(),
            r.n_events.into(),
            r.covariates.join(";").into(),
            r.beta.into(),
            r.se.into(),
            r.model_se.into(),
            r.p_value.into(),
            r.note.clone().into(),
        ]);
    }
    out.write_table("dependence", &t)?;
    match report.min_p_value() {
        Some(p) => println!("smallest lag p-value: {}", fmt6(p)),
        None => println!("no testable cells"),
    }
    Ok(RunInfo::inputs(&[&a.input.input]))
}

fn coxfit(a: &CoxfitArgs, cal: &GamesCalendar, out: &mut Output) -> Result<RunInfo> {
    let ds = load(&a.input.input, cal)?;
    let (covariates, _) = select_covariates(&ds, &a.covariates)?;
    let intervals = build_risk_intervals(&ds, a.scheme, cal, &covariates)?;
    let opts = CoxOptions {
        robust: match a.robust {
            RobustArg::Cluster => RobustCluster::ByClusterKey,
            RobustArg::None => RobustCluster::None,
        },
        ..CoxOptions::default()
    };
    let mut fit = if a.scheme == Scheme::Wlw {
        wlw_pooled_fit(&intervals, &covariates, &opts)?
    } else {
        fit_cox(&intervals, &covariates, &opts)?
    };
    fit.scheme = Some(a.scheme);
    let table = fit.coefficient_table();
    let hazard_ratios: BTreeMap<&str, f64> = table
        .iter()
        .map(|r| (r.name.as_str(), r.estimate.exp()))
        .collect();
    out.write_json(
        &format!("coxfit_{}.json", a.scheme.cli_name()),
        &json!({
            "model": a.scheme.label(),
            "coefficients": table,
            "hazard_ratios": hazard_ratios,
            "fit": fit,
        }),
    )?;
    for r in &table {
        println!(
            "{:<16} {:>12} (robust SE {}, p {})",
            r.name,
            fmt6(r.estimate),
            fmt6(r.robust_se),
            fmt6(r.p)
        );
    }
    println!("AIC {}", fmt6(fit.aic));
    Ok(RunInfo::inputs(&[&a.input.input]))
}

fn logit(a: &LogitArgs, cal: &GamesCalendar, out: &mut Output) -> Result<RunInfo> {
    let ds = load(&a.input.input, cal)?;
    let (covariates, _) = select_covariates(&ds, &a.covariates)?;
    let rows = expand_person_period(&ds, cal);
    let fit = fit_logit(&rows, &covariates, !a.no_time_terms)?;
    let table = fit.coefficient_table();
    out.write_json("logit.json", &json!({ "coefficients": table, "fit": fit }))?;
    let res = residuals(&fit, &rows);
    let mut t = Table::new(vec![
        "event_id", "sequence", "category", "time", "fitted", "pearson",
    ]);
    for r in &res {
        t.push(vec![
            r.record_key.event_id.clone().into(),
            r.record_key.sequence.into(),
            r.category.to_string().into(),
            r.time.into(),
            r.fitted.into(),
            r.pearson.into(),
        ]);
    }
    out.write_table("logit_residuals", &t)?;
    if a.svg {
        let pts: Vec<(f64, f64)> = res.iter().map(|r| (f64::from(r.time), r.pearson)).collect();
        let svg = scatter_plot(
            "Pearson residuals",
            "Years since record set",
            "Residual",
            &pts,
        );
        out.write_bytes("logit_residuals.svg", svg.as_bytes())?;
    }
    for r in &table {
        println!(
            "{:<16} {:>12} (SE {}, p {})",
            r.name,
            fmt6(r.estimate),
            fmt6(r.se),
            fmt6(r.p)
        );
    }
    println!("AIC {}", fmt6(fit.aic));
    Ok(RunInfo::inputs(&[&a.input.input]))
}

fn models(a: &ModelsArgs, cal: &GamesCalendar, out: &mut Output) -> Result<RunInfo> {
    let ds = load(&a.input.input, cal)?;
    let (covariates, screening) = select_covariates(&ds, &a.covariates)?;
    let results = estimate_all_models(&ds, &covariates, cal);
    let ranking = compare_aic(&results);
    out.write_json(
        "models.json",
        &json!({
            "covariates": covariates,
            "screening": screening,
            "results": results,
            "ranking": ranking,
        }),
    )?;
    let mut t = Table::new(vec!["rank", "model", "aic"]);
    for (i, e) in ranking.iter().enumerate() {
        t.push(vec![(i + 1).into(), e.label.clone().into(), e.aic.into()]);
    }
    out.write_table("aic_ranking", &t)?;
    let text = model_table(&results, &ranking);
    out.write_bytes("models.txt", text.as_bytes())?;
    print!("{text}");
    Ok(RunInfo::inputs(&[&a.input.input]))
}

#[derive(Debug, Deserialize)]
struct CurveRow {
    estimator: String,
    time: f64,
    estimate: f64,
}

fn read_curves(path: &Path) -> Result<BTreeMap<EstimatorTag, SurvivalCurve>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut pairs: BTreeMap<EstimatorTag, Vec<(f64, f64)>> = BTreeMap::new();
    for (i, row) in rdr.deserialize::<CurveRow>().enumerate() {
        let row = row.with_context(|| format!("{}: row {}", path.display(), i + 2))?;
        let tag = parse_estimator(&row.estimator).ok_or_else(|| {
            recsurv::Error::Validation(format!(
                "{}: unknown estimator `{}` on line {}",
                path.display(),
                row.estimator,
                i + 2
            ))
        })?;
        pairs.entry(tag).or_default().push((row.time, row.estimate));
    }
    pairs
        .into_iter()
        .map(|(tag, p)| {
            SurvivalCurve::from_estimates(tag, &p)
                .map(|c| (tag, c))
                .with_context(|| format!("{}: curve `{}`", path.display(), short_name(tag)))
        })
        .collect()
}

#[derive(Debug, Deserialize)]
struct CohortRow {
    year_set: i32,
    count: u32,
}

fn read_cohorts(path: &Path) -> Result<BTreeMap<i32, u32>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut cohorts = BTreeMap::new();
    for (i, row) in rdr.deserialize::<CohortRow>().enumerate() {
        let row = row.with_context(|| format!("{}: row {}", path.display(), i + 2))?;
        *cohorts.entry(row.year_set).or_insert(0) += row.count;
    }
    Ok(cohorts)
}

fn predict(a: &PredictArgs, cal: &GamesCalendar, out: &mut Output) -> Result<RunInfo> {
    let mut inputs: Vec<&Path> = Vec::new();
    let wanted: Vec<EstimatorTag> = a.estimator.iter().map(|e| tag(*e)).collect();
    let dataset = match &a.input {
        Some(p) => {
            inputs.push(p);
            Some(load(p, cal)?)
        }
        None => None,
    };
    let mut curves = match (&a.curves, &dataset) {
        (Some(path), _) => {
            inputs.push(path);
            read_curves(path)?
        }
        (None, Some(ds)) => {
            let histories = histories_from_dataset(ds);
            let mut m = BTreeMap::new();
            for t in &wanted {
                let c = match t {
                    EstimatorTag::KM => kaplan_meier(&durations_from_dataset(ds))?,
                    EstimatorTag::WangChang => wang_chang(&histories)?,
                    EstimatorTag::GeneralizedKM => generalized_km(&histories)?,
                    EstimatorTag::Frailty => {
                        fit_frailty(&histories, &FrailtyOptions::default())?.to_curve()
                    }
                };
                m.insert(*t, c);
            }
            m
        }
        (None, None) => {
            return Err(anyhow!(UsageError(
                "predict needs --curves or --input".into()
            )))
        }
    };
    curves.retain(|t, _| wanted.contains(t));
    if curves.is_empty() {
        return Err(anyhow!(UsageError(
            "none of the requested estimators is present in the curves file".into()
        )));
    }
    let cohorts = match (&a.cohorts, &dataset) {
        (Some(path), _) => {
            inputs.push(path);
            read_cohorts(path)?
        }
        (None, Some(ds)) => {
            let mut m = BTreeMap::new();
            for s in ds.spells.iter().filter(|s| s.year_end.is_none()) {
                *m.entry(s.year_set).or_insert(0) += 1;
            }
            m
        }
        (None, None) => {
            return Err(anyhow!(UsageError(
                "predict needs --cohorts when curves come from a file".into()
            )))
        }
    };
    let tables = predict_counts(&curves, &cohorts, a.year)?;
    for t in tables.values() {
        for w in t.warnings() {
            eprintln!("warning: {w}");
        }
    }
    match out.format {
        Format::Csv => {
            let mut buf = Vec::new();
            write_prediction_csv(&tables, &mut buf, fmt6)?;
            print!("{}", String::from_utf8_lossy(&buf));
            out.write_bytes("predictions.csv", &buf)?;
        }
        Format::Json => {
            let v: Vec<_> = tables.values().collect();
            out.write_json("predictions.json", &v)?;
        }
    }
    Ok(RunInfo::inputs(&inputs))
}

#[derive(Serialize)]
struct ClusterTruth<'a> {
    event_id: &'a str,
    frailty: f64,
    gaps: &'a [f64],
}

fn simulate(
    a: &SimulateArgs,
    seed: Option<u64>,
    cal: &GamesCalendar,
    out: &mut Output,
) -> Result<RunInfo> {
    let text = std::fs::read_to_string(&a.config)
        .with_context(|| format!("reading {}", a.config.display()))?;
    let mut config: SimConfig =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", a.config.display()))?;
    if let Some(s) = seed {
        config.seed = s;
    }
    let sim = generate_detailed(&config, cal)?;
    let mut buf = Vec::new();
    write_csv(&sim.dataset, &mut buf)?;
    out.write_bytes("simulated.csv", &buf)?;
    let truth: Vec<ClusterTruth> = sim
        .clusters
        .iter()
        .map(|c| ClusterTruth {
            event_id: &c.event_id,
            frailty: c.frailty,
            gaps: &c.gaps,
        })
        .collect();
    out.write_json(
        "simulation_truth.json",
        &json!({ "config": config, "clusters": truth }),
    )?;
    println!(
        "{} spells in {} events ({} censored)",
        sim.dataset.len(),
        config.n_events,
        sim.dataset.n_censored()
    );
    Ok(RunInfo {
        inputs: vec![a.config.clone()],
        seed: Some(config.seed),
    })
}
