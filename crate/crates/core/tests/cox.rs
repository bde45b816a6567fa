#![allow(clippy::needless_range_loop)]

use approx::assert_relative_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use recsurv::cox::{
    build_risk_intervals, fit_cox, hazard_ratio, partial_likelihood, wlw_per_stratum,
    wlw_pooled_fit, CoxOptions, RiskInterval, RobustCluster, Scheme,
};
use recsurv::data::{read_csv, GamesCalendar, RecordKey};
use recsurv::Error;

fn interval(
    cluster: usize,
    stratum: u32,
    start: f64,
    stop: f64,
    status: bool,
    x: Vec<f64>,
) -> RiskInterval {
    RiskInterval {
        unit: RecordKey {
            event_id: format!("C{cluster}"),
            sequence: stratum,
        },
        cluster: format!("C{cluster}"),
        stratum,
        start,
        stop,
        status,
        covariates: x,
    }
}

/// Clustered counting-process data with integer (tied) stop times.
fn random_intervals(
    rng: &mut ChaCha8Rng,
    clusters: usize,
    p: usize,
    beta: &[f64],
) -> Vec<RiskInterval> {
    let mut out = Vec::new();
    for c in 0..clusters {
        let mut start = 0.0;
        for seq in 1..=rng.random_range(1..=4u32) {
            let x: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
            let eta: f64 = x.iter().zip(beta).map(|(a, b)| a * b).sum();
            let len = (rng.random_range(0.0..6.0) / eta.exp()).ceil().max(1.0);
            let status = rng.random_bool(0.8);
            out.push(interval(c, seq.min(2), start, start + len, status, x));
            start += len;
        }
    }
    out
}

struct Oracle {
    value: f64,
    gradient: Vec<f64>,
    hessian: Vec<Vec<f64>>,
    /// Lin-Wei score residuals per interval.
    residuals: Vec<Vec<f64>>,
}

/// Breslow log partial likelihood and derivatives by direct summation over risk sets.
fn oracle(ivs: &[RiskInterval], beta: &[f64]) -> Oracle {
    let p = beta.len();
    let w: Vec<f64> = ivs
        .iter()
        .map(|iv| {
            iv.covariates
                .iter()
                .zip(beta)
                .map(|(x, b)| x * b)
                .sum::<f64>()
                .exp()
        })
        .collect();
    let mut value = 0.0;
    let mut gradient = vec![0.0; p];
    let mut hessian = vec![vec![0.0; p]; p];
    let mut residuals = vec![vec![0.0; p]; ivs.len()];
    let mut keys: Vec<(u32, f64)> = ivs
        .iter()
        .filter(|iv| iv.status)
        .map(|iv| (iv.stratum, iv.stop))
        .collect();
    keys.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    keys.dedup();
    for (s, t) in keys {
        let risk: Vec<usize> = (0..ivs.len())
            .filter(|&i| ivs[i].stratum == s && ivs[i].start < t && t <= ivs[i].stop)
            .collect();
        let dead: Vec<usize> = risk
            .iter()
            .copied()
            .filter(|&i| ivs[i].status && ivs[i].stop == t)
            .collect();
        let d = dead.len() as f64;
        let s0: f64 = risk.iter().map(|&i| w[i]).sum();
        let s1: Vec<f64> = (0..p)
            .map(|j| risk.iter().map(|&i| w[i] * ivs[i].covariates[j]).sum())
            .collect();
        let xbar: Vec<f64> = s1.iter().map(|v| v / s0).collect();
        for &i in &dead {
            value += beta
                .iter()
                .zip(&ivs[i].covariates)
                .map(|(b, x)| b * x)
                .sum::<f64>();
            for j in 0..p {
                gradient[j] += ivs[i].covariates[j] - xbar[j];
                residuals[i][j] += ivs[i].covariates[j] - xbar[j];
            }
        }
        value -= d * s0.ln();
        for j in 0..p {
            for k in 0..p {
                let s2: f64 = risk
                    .iter()
                    .map(|&i| w[i] * ivs[i].covariates[j] * ivs[i].covariates[k])
                    .sum();
                hessian[j][k] -= d * (s2 / s0 - xbar[j] * xbar[k]);
            }
        }
        for &i in &risk {
            for j in 0..p {
                residuals[i][j] -= d * w[i] / s0 * (ivs[i].covariates[j] - xbar[j]);
            }
        }
    }
    Oracle {
        value,
        gradient,
        hessian,
        residuals,
    }
}

fn invert(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
            .unwrap();
        a.swap(c, p);
        let piv = a[c][c];
        a[c].iter_mut().for_each(|x| *x /= piv);
        for r in 0..n {
            if r != c {
                let f = a[r][c];
                let pr = a[c].clone();
                a[r].iter_mut().zip(pr).for_each(|(x, y)| *x -= f * y);
            }
        }
    }
    a.into_iter().map(|r| r[n..].to_vec()).collect()
}

fn names(p: usize) -> Vec<String> {
    (0..p).map(|j| format!("x{j}")).collect()
}

#[test]
fn partial_likelihood_matches_direct_summation() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..30 {
        let p = rng.random_range(1..=3);
        let ivs = random_intervals(&mut rng, 25, p, &vec![0.0; p]);
        let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got = partial_likelihood(&ivs, &beta).unwrap();
        let want = oracle(&ivs, &beta);
        assert_relative_eq!(got.value, want.value, max_relative = 1e-11);
        for j in 0..p {
            assert_relative_eq!(
                got.gradient[j],
                want.gradient[j],
                epsilon = 1e-10,
                max_relative = 1e-10
            );
            for k in 0..p {
                assert_relative_eq!(
                    got.hessian[(j, k)],
                    want.hessian[j][k],
                    epsilon = 1e-10,
                    max_relative = 1e-10
                );
            }
        }
    }
}

#[test]
fn fit_zeroes_the_score_and_reports_both_variances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let truth = [0.8, -0.5];
    let ivs = random_intervals(&mut rng, 300, 2, &truth);
    for robust in [RobustCluster::ByClusterKey, RobustCluster::None] {
        let opts = CoxOptions {
            robust,
            ..CoxOptions::default()
        };
        let fit = fit_cox(&ivs, &names(2), &opts).unwrap();
        assert!(fit.converged);
        let o = oracle(&ivs, &fit.coefficients);
        assert!(
            o.gradient.iter().all(|g| g.abs() < 1e-7),
            "score {:?}",
            o.gradient
        );
        assert_relative_eq!(fit.log_partial_likelihood, o.value, max_relative = 1e-12);
        assert_relative_eq!(fit.aic, -2.0 * o.value + 4.0, max_relative = 1e-12);

        let info: Vec<Vec<f64>> = o
            .hessian
            .iter()
            .map(|r| r.iter().map(|v| -v).collect())
            .collect();
        let inv = invert(&info);
        for j in 0..2 {
            assert_relative_eq!(fit.model_se[j], inv[j][j].sqrt(), max_relative = 1e-8);
        }

        // Sandwich on cluster-summed (or per-interval) score residuals.
        let mut groups: Vec<Vec<f64>> = Vec::new();
        let mut index = std::collections::BTreeMap::new();
        for (i, iv) in ivs.iter().enumerate() {
            let key = match robust {
                RobustCluster::ByClusterKey => iv.cluster.clone(),
                RobustCluster::None => i.to_string(),
            };
            let g = *index.entry(key).or_insert_with(|| {
                groups.push(vec![0.0; 2]);
                groups.len() - 1
            });
            for j in 0..2 {
                groups[g][j] += o.residuals[i][j];
            }
        }
        let mut meat = vec![vec![0.0; 2]; 2];
        for u in &groups {
            for j in 0..2 {
                for k in 0..2 {
                    meat[j][k] += u[j] * u[k];
                }
            }
        }
        for j in 0..2 {
            let v: f64 = (0..2)
                .flat_map(|a| (0..2).map(move |b| (a, b)))
                .map(|(a, b)| inv[j][a] * meat[a][b] * inv[b][j])
                .sum();
            assert_relative_eq!(fit.robust_se[j], v.sqrt(), max_relative = 1e-6);
        }
        for (i, r) in fit.score_residuals.iter().enumerate() {
            for j in 0..2 {
                assert_relative_eq!(r[j], o.residuals[i][j], epsilon = 1e-9);
            }
        }
    }
}

#[test]
fn recovers_planted_coefficients() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let truth = [0.7, -0.4];
    let ivs = random_intervals(&mut rng, 1500, 2, &truth);
    let fit = fit_cox(&ivs, &names(2), &CoxOptions::default()).unwrap();
    for j in 0..2 {
        let z = (fit.coefficients[j] - truth[j]) / fit.robust_se[j];
        assert!(
            z.abs() < 4.0,
            "coefficient {j}: {} vs {}",
            fit.coefficients[j],
            truth[j]
        );
    }
    assert!(fit.wald_p(0, true) < 1e-6);
}

#[test]
fn fit_is_invariant_to_interval_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let ivs = random_intervals(&mut rng, 60, 1, &[0.5]);
    let a = fit_cox(&ivs, &names(1), &CoxOptions::default()).unwrap();
    let mut shuffled = ivs.clone();
    shuffled.reverse();
    shuffled.rotate_left(17);
    let b = fit_cox(&shuffled, &names(1), &CoxOptions::default()).unwrap();
    assert_relative_eq!(a.coefficients[0], b.coefficients[0], max_relative = 1e-10);
    assert_relative_eq!(a.robust_se[0], b.robust_se[0], max_relative = 1e-8);
}

#[test]
fn numerical_failures_are_classified() {
    // Every event has the larger covariate in its risk set: monotone likelihood.
    let separated: Vec<RiskInterval> = (0..6)
        .map(|i| {
            interval(
                i,
                1,
                0.0,
                f64::from(i as u32 + 1),
                i % 2 == 0,
                vec![if i % 2 == 0 { 1.0 } else { 0.0 }],
            )
        })
        .chain(
            (0..6).map(|i| interval(10 + i, 1, 0.0, 10.0 + f64::from(i as u32), false, vec![0.0])),
        )
        .collect();
    let err = fit_cox(&separated, &names(1), &CoxOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Divergence { .. }), "{err}");
    assert!(err.is_numerical());

    let constant: Vec<RiskInterval> = (0..8)
        .map(|i| interval(i, 1, 0.0, f64::from(i as u32 + 1), true, vec![2.0]))
        .collect();
    let err = fit_cox(&constant, &names(1), &CoxOptions::default()).unwrap_err();
    assert!(err.is_numerical(), "{err}");

    assert!(fit_cox(&[], &names(1), &CoxOptions::default()).is_err());
}

#[test]
fn hazard_ratio_uses_coefficient_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let ivs = random_intervals(&mut rng, 80, 2, &[0.3, 0.3]);
    let fit = fit_cox(&ivs, &names(2), &CoxOptions::default()).unwrap();
    let hr = hazard_ratio(&fit, &[1.0, 2.0], &[0.0, 1.0]).unwrap();
    assert_relative_eq!(
        hr,
        (fit.coefficients[0] + fit.coefficients[1]).exp(),
        max_relative = 1e-12
    );
    assert_eq!(hazard_ratio(&fit, &[1.0, 2.0], &[1.0, 2.0]).unwrap(), 1.0);
    assert!(hazard_ratio(&fit, &[1.0], &[0.0]).is_err());
}

const LAYOUT: &str = "\
event_id,category,sequence,year_set,year_end,status,X
A,Track,1,1896,1908,Broken,1
A,Track,2,1908,1936,Broken,0
A,Track,3,1936,1956,Censored,1
B,Swimming,1,1948,1960,Broken,0
B,Swimming,2,1960,,Censored,1
";

#[test]
fn risk_interval_layouts() {
    let cal = GamesCalendar::default();
    let ds = read_csv(LAYOUT.as_bytes(), &cal).unwrap();
    let x = vec!["X".to_string()];
    let get = |scheme| {
        build_risk_intervals(&ds, scheme, &cal, &x)
            .unwrap()
            .into_iter()
            .map(|iv| (iv.cluster.clone(), iv.stratum, iv.start, iv.stop, iv.status))
            .collect::<Vec<_>>()
    };
    let s = |c: &str, st, a, b, d| (c.to_string(), st, a, b, d);
    assert_eq!(
        get(Scheme::AndersenGill),
        [
            s("A", 0, 0.0, 12.0, true),
            s("A", 0, 12.0, 40.0, true),
            s("A", 0, 40.0, 60.0, false),
            s("B", 0, 52.0, 64.0, true),
            s("B", 0, 64.0, 112.0, false),
        ]
    );
    assert_eq!(
        get(Scheme::PwpTotalTime),
        [
            s("A", 1, 0.0, 12.0, true),
            s("A", 2, 12.0, 40.0, true),
            s("A", 3, 40.0, 60.0, false),
            s("B", 1, 52.0, 64.0, true),
            s("B", 2, 64.0, 112.0, false),
        ]
    );
    assert_eq!(
        get(Scheme::PwpGapTime),
        [
            s("A", 1, 0.0, 12.0, true),
            s("A", 2, 0.0, 28.0, true),
            s("A", 3, 0.0, 20.0, false),
            s("B", 1, 0.0, 12.0, true),
            s("B", 2, 0.0, 48.0, false),
        ]
    );
    assert_eq!(
        get(Scheme::Wlw),
        [
            s("A", 1, 0.0, 12.0, true),
            s("A", 2, 0.0, 40.0, true),
            s("A", 3, 0.0, 60.0, false),
            s("B", 1, 0.0, 64.0, true),
            s("B", 2, 0.0, 112.0, false),
        ]
    );
    for scheme in Scheme::ALL {
        assert_eq!(scheme.cli_name().parse::<Scheme>().unwrap(), scheme);
        let ivs = build_risk_intervals(&ds, scheme, &cal, &x).unwrap();
        assert!(ivs
            .iter()
            .all(|iv| iv.start < iv.stop && iv.covariates.len() == 1));
    }
}

#[test]
fn wlw_pooled_and_per_stratum() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let ivs = random_intervals(&mut rng, 200, 1, &[0.6]);
    let opts = CoxOptions {
        robust: RobustCluster::None,
        ..CoxOptions::default()
    };
    let pooled = wlw_pooled_fit(&ivs, &names(1), &opts).unwrap();
    assert_eq!(pooled.scheme, Some(Scheme::Wlw));
    let clustered = fit_cox(&ivs, &names(1), &CoxOptions::default()).unwrap();
    assert_relative_eq!(
        pooled.robust_se[0],
        clustered.robust_se[0],
        max_relative = 1e-12
    );

    let per = wlw_per_stratum(&ivs, &names(1), &opts);
    assert_eq!(per.iter().map(|(s, _)| *s).collect::<Vec<_>>(), [1, 2]);
    for (s, fit) in per {
        let subset: Vec<RiskInterval> = ivs.iter().filter(|iv| iv.stratum == s).cloned().collect();
        let direct = fit_cox(&subset, &names(1), &CoxOptions::default()).unwrap();
        assert_relative_eq!(
            fit.unwrap().coefficients[0],
            direct.coefficients[0],
            max_relative = 1e-12
        );
    }
}
