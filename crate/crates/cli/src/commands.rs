//! Subcommand implementations. Every document echoes its resolved
//! configuration; stdout carries data only.

use std::path::PathBuf;

use anyhow::anyhow;
use gamlasso::data::{load_csv, load_triplets};
use gamlasso::sim::{self, MaskMode, Selector, SimConfig};
use gamlasso::verify::{l0_exhaustive, l0_nested, run_suite, Suite, SuiteConfig, SuiteReport};
use gamlasso::{fit_path, information_criteria, Dataset, Family, Gamma, Path, PathConfig, PathSegment};
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::{json, Value};

use crate::{emit, CvArgs, DataArgs, Failure, FitArgs, OracleArgs, PathArgs, SimArgs, Status, VerifyArgs};

fn input<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Input(e.into())
}

fn to_json<T: Serialize>(v: &T) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct DataEcho {
    #[serde(skip_serializing_if = "Option::is_none")]
    data: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    response: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    triplets: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    y: Option<PathBuf>,
    n: usize,
    p: usize,
    family: Family,
    free: Vec<String>,
}

fn load(args: &DataArgs) -> Result<(Dataset, Family, DataEcho), Failure> {
    let family: Family = args.family.parse().map_err(input)?;
    let d = match (&args.data, &args.triplets) {
        (Some(path), None) => {
            let response = args.response.as_deref().ok_or_else(|| input(anyhow!("--data needs --response")))?;
            load_csv(path, response, family, &args.free).map_err(input)?
        }
        (None, Some(path)) => {
            let free = args
                .free
                .iter()
                .map(|s| s.parse::<usize>().map_err(|_| input(anyhow!("--free expects column indices with --triplets, got {s:?}"))))
                .collect::<Result<Vec<_>, _>>()?;
            let (y, n, p) = match (&args.y, args.n, args.p) {
                (Some(y), Some(n), Some(p)) => (y, n, p),
                _ => return Err(input(anyhow!("--triplets needs --y, --n and --p"))),
            };
            load_triplets(path, n, p, y, family, &free).map_err(input)?
        }
        _ => return Err(input(anyhow!("one of --data or --triplets is required"))),
    };
    let echo = DataEcho {
        data: args.data.clone(),
        response: args.response.clone(),
        triplets: args.triplets.clone(),
        y: args.y.clone(),
        n: d.n(),
        p: d.p(),
        family,
        free: args.free.clone(),
    };
    Ok((d, family, echo))
}

fn path_config(args: &PathArgs) -> Result<PathConfig, Failure> {
    let gamma: Gamma = args.gamma.parse().map_err(input)?;
    let cfg = PathConfig {
        gamma,
        n_segments: args.nlambda,
        lambda_min_ratio: args.lambda_min_ratio,
        standardize: args.standardize,
        accelerate: args.accelerate,
        thresh: args.thresh,
        penalty_multipliers: None,
    };
    cfg.validate().map_err(input)?;
    Ok(cfg)
}

fn segment_json(s: &PathSegment) -> Value {
    json!({
        "lambda": s.lambda,
        "alpha": s.alpha,
        "beta": s.beta,
        "df": s.df,
        "deviance": s.deviance,
        "support": s.support,
        "converged": s.converged,
    })
}

fn status(path: &Path) -> Status {
    if path.truncated {
        Status::Truncated
    } else {
        Status::Ok
    }
}

pub fn fit(args: &FitArgs) -> Result<Status, Failure> {
    let (d, family, data) = load(&args.data)?;
    let cfg = path_config(&args.path)?;
    let path = fit_path(&d, family, &cfg).map_err(input)?;
    let ic = information_criteria(&path);
    let doc = json!({
        "config": {"data": data, "path": cfg, "seed": args.seed},
        "lambda": path.segments.iter().map(|s| s.lambda).collect::<Vec<_>>(),
        "segments": path.segments.iter().map(segment_json).collect::<Vec<_>>(),
        "nullDeviance": path.null_deviance,
        "truncated": path.truncated,
        "ic": {
            "aic": ic.aic,
            "aicc": ic.aicc,
            "bic": ic.bic,
            "selected": {
                "aic": ic.selected_aic.map(|s| s.index),
                "aicc": ic.selected_aicc.map(|s| s.index),
                "bic": ic.selected_bic.map(|s| s.index),
            },
        },
    });
    emit(args.out.as_ref(), &to_json(&doc)?)?;
    Ok(status(&path))
}

pub fn cv(args: &CvArgs) -> Result<Status, Failure> {
    let (d, family, data) = load(&args.data)?;
    let cfg = path_config(&args.path)?;
    if !(2..=d.n()).contains(&args.folds) {
        return Err(input(anyhow!("--folds must lie in [2, {}], got {}", d.n(), args.folds)));
    }
    let full = fit_path(&d, family, &cfg).map_err(input)?;
    let rep = gamlasso::selection::cross_validate_path(&d, &full, args.folds, args.seed).map_err(input)?;
    let mut sizes = vec![0usize; args.folds];
    for &f in &rep.folds {
        sizes[f] += 1;
    }
    let doc = json!({
        "config": {"data": data, "path": cfg, "folds": args.folds, "seed": args.seed},
        "lambda": rep.lambda,
        "mean": rep.mean,
        "se": rep.se,
        "idxMin": rep.idx_min,
        "idx1se": rep.idx_1se,
        "foldSizes": sizes,
        "refit": {
            "atMin": segment_json(&full.segments[rep.idx_min]),
            "at1se": segment_json(&full.segments[rep.idx_1se]),
        },
    });
    emit(args.out.as_ref(), &to_json(&doc)?)?;
    Ok(status(&full))
}

pub fn simulate(args: &SimArgs) -> Result<Status, Failure> {
    if let Some(name) = &args.fixture {
        if name != "fig3" {
            return Err(input(anyhow!("unknown fixture {name:?} (available: fig3)")));
        }
        let d = sim::correlated_trio(args.n, args.seed).map_err(input)?;
        match &args.out {
            Some(path) => sim::write_fixture(&d, path)?,
            None => return Err(input(anyhow!("--fixture needs --out"))),
        }
        return Ok(Status::Ok);
    }
    let gammas = args
        .gammas
        .iter()
        .map(|g| g.parse::<Gamma>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(input)?;
    let selectors = args
        .selectors
        .iter()
        .map(|s| s.parse::<Selector>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(input)?;
    let mask = match args.mask.as_str() {
        "element" => MaskMode::Element,
        "column" => MaskMode::Column,
        other => return Err(input(anyhow!("unknown mask {other:?} (element or column)"))),
    };
    let cfg = SimConfig {
        n: args.n,
        p: args.p,
        rho: args.rho,
        snr: args.snr,
        reps: args.reps,
        seed: args.seed,
        gammas,
        marginal: !args.no_marginal,
        selectors,
        folds: args.folds,
        n_segments: args.nlambda,
        lambda_min_ratio: args.lambda_min_ratio,
        mask,
        timings: args.timings,
    };
    cfg.validate().map_err(input)?;
    let result = sim::run_experiment(&cfg)?;
    let mut buf = Vec::new();
    sim::write_rows_csv(&result.rows, &mut buf)?;
    emit(args.out.as_ref(), std::str::from_utf8(&buf)?)?;
    if let Some(path) = &args.summary {
        let doc = json!({
            "config": result.config,
            "aggregates": result.aggregates,
            "failedReps": result.failed_reps,
            "oracleSupportMean": result.oracle_support_mean,
        });
        emit(Some(path), &to_json(&doc)?)?;
    }
    if !result.failed_reps.is_empty() {
        log::warn!("{} replicate(s) failed and were excluded", result.failed_reps.len());
    }
    Ok(Status::Ok)
}

fn suite_json(r: &SuiteReport, details: bool) -> Value {
    let mut v = json!({
        "suite": r.suite,
        "instances": r.records.len(),
        "confirmed": r.confirmed,
        "inconclusive": r.inconclusive,
        "violated": r.violated,
        "notApplicable": r.not_applicable,
        "inconclusiveRate": r.inconclusive_rate(),
        "literalConditionFailures": r.literal_condition_failures,
        "passed": r.passed(),
    });
    if details {
        v["records"] = json!(r.records);
    }
    v
}

pub fn verify(args: &VerifyArgs) -> Result<Status, Failure> {
    let suites: Vec<Suite> = if args.suite == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![args.suite.parse().map_err(input)?]
    };
    let mut out = Vec::new();
    let mut violated = false;
    for s in suites {
        let cfg = SuiteConfig {
            instances: args.instances.unwrap_or(s.default_instances()),
            seed: args.seed,
            restarts: args.restarts,
        };
        let r = run_suite(s, &cfg)?;
        violated |= !r.passed();
        out.push(suite_json(&r, args.details));
    }
    let doc = json!({
        "config": {"seed": args.seed, "restarts": args.restarts, "instances": args.instances},
        "suites": out,
    });
    emit(args.out.as_ref(), &to_json(&doc)?)?;
    Ok(if violated { Status::Violation } else { Status::Ok })
}

pub fn oracle(args: &OracleArgs) -> Result<Status, Failure> {
    if args.nested == args.exhaustive {
        return Err(input(anyhow!("choose one of --nested or --exhaustive")));
    }
    let (d, _, data) = load(&args.data)?;
    let (n, p) = (d.n(), d.p());
    let mut x = DMatrix::zeros(n, p);
    for j in 0..p {
        for (i, v) in d.column(j).entries() {
            x[(i, j)] = v;
        }
    }
    let mut y = d.y().to_vec();
    if args.center {
        for mut c in x.column_iter_mut() {
            let m = c.mean();
            c.add_scalar_mut(-m);
        }
        let m = y.iter().sum::<f64>() / n as f64;
        y.iter_mut().for_each(|v| *v -= m);
    }
    let (method, sol) = if args.nested {
        ("nested", l0_nested(&x, &y, args.sigma2.expect("required by clap")).map_err(input)?)
    } else {
        ("exhaustive", l0_exhaustive(&x, &y, args.nu.expect("required by clap")).map_err(input)?)
    };
    let beta: Vec<(usize, f64)> = sol.beta.iter().copied().enumerate().filter(|(_, v)| *v != 0.0).collect();
    let doc = json!({
        "config": {"data": data, "method": method, "sigma2": args.sigma2, "nu": args.nu, "center": args.center},
        "support": sol.support,
        "size": sol.support.len(),
        "beta": beta,
        "rss": sol.rss,
        "objective": sol.objective,
        "penalty": sol.penalty,
        "rankLimit": sol.rank_limit,
    });
    emit(args.out.as_ref(), &to_json(&doc)?)?;
    Ok(Status::Ok)
}
