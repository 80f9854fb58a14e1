//! Information criteria and K-fold cross-validation over a fitted path.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::family::Family;
use crate::path::{fit_path, fit_path_on_grid, Path, PathConfig};
use crate::seed;

/// `-2 log f` at a segment. Gaussian includes the normalizing constant
/// with the plug-in variance `deviance / n`.
pub fn neg2_loglik(family: Family, deviance: f64, n: usize) -> f64 {
    match family {
        Family::Gaussian => {
            let nf = n as f64;
            let s2 = deviance / nf;
            nf * (2.0 * std::f64::consts::PI * s2).ln() + nf
        }
        Family::Binomial => deviance,
    }
}

pub fn aic(neg2ll: f64, df: f64) -> f64 {
    neg2ll + 2.0 * df
}

/// Corrected AIC; infinite when `df >= n - 1`.
pub fn aicc(neg2ll: f64, df: f64, n: usize) -> f64 {
    let nf = n as f64;
    if df >= nf - 1.0 {
        f64::INFINITY
    } else {
        neg2ll + 2.0 * df * nf / (nf - df - 1.0)
    }
}

pub fn bic(neg2ll: f64, df: f64, n: usize) -> f64 {
    neg2ll + (n as f64).ln() * df
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selected {
    pub index: usize,
    pub lambda: f64,
    pub support: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub aic: Vec<f64>,
    /// Infinite entries mark segments with `df >= n - 1`.
    pub aicc: Vec<f64>,
    pub bic: Vec<f64>,
    pub selected_aic: Option<Selected>,
    pub selected_aicc: Option<Selected>,
    pub selected_bic: Option<Selected>,
}

fn argmin_converged(values: &[f64], path: &Path) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (t, &v) in values.iter().enumerate() {
        if !path.segments[t].converged || !v.is_finite() {
            continue;
        }
        if best.is_none_or(|b| v < values[b]) {
            best = Some(t);
        }
    }
    best
}

fn selected(path: &Path, idx: Option<usize>) -> Option<Selected> {
    idx.map(|t| Selected {
        index: t,
        lambda: path.segments[t].lambda,
        support: path.support(t),
    })
}

pub fn information_criteria(path: &Path) -> SelectionReport {
    let n = path.n;
    let m2: Vec<f64> = path
        .segments
        .iter()
        .map(|s| neg2_loglik(path.family, s.deviance, n))
        .collect();
    let df: Vec<f64> = path.segments.iter().map(|s| s.df).collect();
    let aic_v: Vec<f64> = m2.iter().zip(&df).map(|(m, d)| aic(*m, *d)).collect();
    let aicc_v: Vec<f64> = m2.iter().zip(&df).map(|(m, d)| aicc(*m, *d, n)).collect();
    let bic_v: Vec<f64> = m2.iter().zip(&df).map(|(m, d)| bic(*m, *d, n)).collect();
    let (ia, ic, ib) = (
        argmin_converged(&aic_v, path),
        argmin_converged(&aicc_v, path),
        argmin_converged(&bic_v, path),
    );
    SelectionReport {
        selected_aic: selected(path, ia),
        selected_aicc: selected(path, ic),
        selected_bic: selected(path, ib),
        aic: aic_v,
        aicc: aicc_v,
        bic: bic_v,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub seed: u64,
    /// Fold id of every observation.
    pub folds: Vec<usize>,
    pub lambda: Vec<f64>,
    /// Mean held-out deviance per observation; NaN where some fold lacks
    /// the segment.
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
    /// `fold_values[k][t]`, NaN for segments a fold did not reach.
    pub fold_values: Vec<Vec<f64>>,
    pub idx_min: usize,
    pub idx_1se: usize,
}

/// Seeded balanced fold assignment: a uniform shuffle dealt round-robin.
pub fn assign_folds(n: usize, k: usize, seed_value: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    if k > n {
        return Err(Error::Config(format!("{k} folds for {n} observations")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut seed::rng(seed_value, "folds", 0));
    let mut folds = vec![0; n];
    for (i, &row) in perm.iter().enumerate() {
        folds[row] = i % k;
    }
    Ok(folds)
}

/// Fits the full path and cross-validates it.
pub fn cross_validate(d: &Dataset, family: Family, config: &PathConfig, k: usize, seed_value: u64) -> Result<CvReport> {
    let full = fit_path(d, family, config)?;
    cross_validate_path(d, &full, k, seed_value)
}

/// Cross-validates an already fitted full-data path on its own grid.
pub fn cross_validate_path(d: &Dataset, full: &Path, k: usize, seed_value: u64) -> Result<CvReport> {
    let folds = assign_folds(d.n(), k, seed_value)?;
    let mut rep = cross_validate_with_folds(d, full, &folds, k)?;
    rep.seed = seed_value;
    Ok(rep)
}

/// Cross-validation with an explicit fold assignment.
pub fn cross_validate_with_folds(d: &Dataset, full: &Path, folds: &[usize], k: usize) -> Result<CvReport> {
    if folds.len() != d.n() {
        return Err(Error::LengthMismatch {
            expected: d.n(),
            got: folds.len(),
        });
    }
    if k < 2 || folds.iter().any(|&f| f >= k) {
        return Err(Error::Config("fold ids must lie in 0..k with k >= 2".into()));
    }
    let grid: Vec<f64> = full.segments.iter().map(|s| s.lambda).collect();
    let family = full.family;
    let config = &full.config;

    let fold_values: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|f| -> Result<Vec<f64>> {
            let train: Vec<usize> = (0..d.n()).filter(|&i| folds[i] != f).collect();
            let test: Vec<usize> = (0..d.n()).filter(|&i| folds[i] == f).collect();
            if test.is_empty() {
                return Err(Error::Config(format!("fold {f} is empty")));
            }
            let td = d.subset_rows(&train)?;
            let path = fit_path_on_grid(&td, family, config, &grid)?;
            let y_test: Vec<f64> = test.iter().map(|&i| d.y()[i]).collect();
            let mut out = vec![f64::NAN; grid.len()];
            for (t, seg) in path.segments.iter().enumerate() {
                let beta = seg.beta_dense(d.p());
                let eta: Vec<f64> = test
                    .iter()
                    .map(|&i| {
                        seg.alpha
                            + seg
                                .beta
                                .iter()
                                .map(|&(j, _)| beta[j] * column_value(d, j, i))
                                .sum::<f64>()
                    })
                    .collect();
                out[t] = family.deviance(&eta, &y_test) / test.len() as f64;
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;

    let t_len = grid.len();
    let kf = k as f64;
    let mut mean = vec![f64::NAN; t_len];
    let mut se = vec![f64::NAN; t_len];
    for t in 0..t_len {
        let vals: Vec<f64> = fold_values.iter().map(|v| v[t]).collect();
        if vals.iter().any(|v| v.is_nan()) {
            continue;
        }
        let m = vals.iter().sum::<f64>() / kf;
        let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (kf - 1.0);
        mean[t] = m;
        se[t] = (var / kf).sqrt();
    }
    let excluded = mean.iter().filter(|m| m.is_nan()).count();
    if excluded > 0 {
        log::warn!("{excluded} segments missing from some fold are excluded from selection");
    }
    let idx_min = (0..t_len)
        .filter(|&t| !mean[t].is_nan())
        .min_by(|&a, &b| mean[a].total_cmp(&mean[b]))
        .ok_or_else(|| Error::Config("no segment was fit in every fold".into()))?;
    let bound = mean[idx_min] + se[idx_min];
    let idx_1se = (0..t_len)
        .find(|&t| !mean[t].is_nan() && mean[t] <= bound)
        .unwrap_or(idx_min);

    Ok(CvReport {
        k,
        seed: 0,
        folds: folds.to_vec(),
        lambda: grid,
        mean,
        se,
        fold_values,
        idx_min,
        idx_1se,
    })
}

fn column_value(d: &Dataset, j: usize, i: usize) -> f64 {
    match d.column(j) {
        crate::data::Column::Dense(v) => v[i],
        crate::data::Column::Sparse { rows, vals } => match rows.binary_search(&i) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        },
    }
}
