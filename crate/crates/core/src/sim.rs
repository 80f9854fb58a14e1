//! Simulation harness: AR(1) masked-Gaussian designs with decaying
//! coefficients, estimator-by-selector grids and scoring against a
//! nested-prefix L0 oracle.

use std::fmt;
use std::io::Write;
use std::path::Path as FsPath;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{mean_sd, Dataset};
use crate::error::{Error, Result};
use crate::family::Family;
use crate::path::{fit_path, Gamma, Path, PathConfig};
use crate::selection::{cross_validate_path, information_criteria};
use crate::seed;
use crate::verify::l0::l0_nested;

/// Cap on marginal adaptive-lasso multipliers for near-zero correlations.
pub const MAX_MULTIPLIER: f64 = 1e8;
const MAX_REGENERATE: u64 = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Selector {
    #[serde(rename = "CV.min")]
    CvMin,
    #[serde(rename = "CV.1se")]
    Cv1se,
    #[serde(rename = "AICc")]
    Aicc,
    #[serde(rename = "AIC")]
    Aic,
    #[serde(rename = "BIC")]
    Bic,
}

impl Selector {
    pub const ALL: [Selector; 5] = [Selector::CvMin, Selector::Cv1se, Selector::Aicc, Selector::Aic, Selector::Bic];

    pub fn name(self) -> &'static str {
        match self {
            Selector::CvMin => "CV.min",
            Selector::Cv1se => "CV.1se",
            Selector::Aicc => "AICc",
            Selector::Aic => "AIC",
            Selector::Bic => "BIC",
        }
    }

    fn needs_cv(self) -> bool {
        matches!(self, Selector::CvMin | Selector::Cv1se)
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Selector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Selector::ALL
            .into_iter()
            .find(|x| x.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown selector {s:?}")))
    }
}

/// How the Bernoulli mask on the latent Gaussian design is drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskMode {
    /// One draw per design entry.
    #[default]
    Element,
    /// One draw per column, shared by every row.
    Column,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub snr: f64,
    pub reps: usize,
    pub seed: u64,
    pub gammas: Vec<Gamma>,
    /// Also fit the marginal adaptive lasso comparator.
    pub marginal: bool,
    pub selectors: Vec<Selector>,
    pub folds: usize,
    pub n_segments: usize,
    pub lambda_min_ratio: f64,
    pub mask: MaskMode,
    /// Record wall-clock seconds; off keeps output reproducible.
    pub timings: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            p: 1000,
            rho: 0.5,
            snr: 2.0,
            reps: 20,
            seed: 1,
            gammas: vec![Gamma::Finite(0.0), Gamma::Finite(2.0), Gamma::Finite(10.0)],
            marginal: true,
            selectors: Selector::ALL.to_vec(),
            folds: 5,
            n_segments: 100,
            lambda_min_ratio: 0.01,
            mask: MaskMode::Element,
            timings: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::Config(format!("rho must lie in [0, 1), got {}", self.rho)));
        }
        if !(self.snr > 0.0 && self.snr.is_finite()) {
            return Err(Error::Config(format!("snr must be positive, got {}", self.snr)));
        }
        if self.n < 2 || self.p < 1 {
            return Err(Error::Config("need n >= 2 and p >= 1".into()));
        }
        if self.selectors.iter().any(|s| s.needs_cv()) && !(2..=self.n).contains(&self.folds) {
            return Err(Error::Config(format!("folds must lie in [2, n], got {}", self.folds)));
        }
        self.path_config(Gamma::lasso()).validate()
    }

    fn path_config(&self, gamma: Gamma) -> PathConfig {
        PathConfig {
            gamma,
            n_segments: self.n_segments,
            lambda_min_ratio: self.lambda_min_ratio,
            ..PathConfig::default()
        }
    }
}

/// `beta_j = (1/j) exp(-j/50)` with `j` counted from one.
pub fn true_coefficients(p: usize) -> Vec<f64> {
    (1..=p).map(|j| (-(j as f64) / 50.0).exp() / j as f64).collect()
}

#[derive(Clone, Debug)]
pub struct Instance {
    /// Design columns.
    pub x: Vec<Vec<f64>>,
    pub beta: Vec<f64>,
    pub eta: Vec<f64>,
    pub y: Vec<f64>,
    /// Independent response at the same design, for scoring.
    pub y_tilde: Vec<f64>,
    pub sigma: f64,
}

fn draw_instance(config: &SimConfig, rng: &mut ChaCha8Rng) -> Instance {
    let (n, p, rho) = (config.n, config.p, config.rho);
    let tail = (1.0 - rho * rho).sqrt();
    let mut x = vec![vec![0.0; n]; p];
    let col_mask: Vec<bool> = match config.mask {
        MaskMode::Column => (0..p).map(|_| rng.random::<bool>()).collect(),
        MaskMode::Element => Vec::new(),
    };
    for i in 0..n {
        let mut u = 0.0;
        for j in 0..p {
            let e: f64 = rng.sample(StandardNormal);
            u = if j == 0 { e } else { rho * u + tail * e };
            let keep = match config.mask {
                MaskMode::Element => rng.random::<bool>(),
                MaskMode::Column => col_mask[j],
            };
            x[j][i] = if keep { u } else { 0.0 };
        }
    }
    let beta = true_coefficients(p);
    let mut eta = vec![0.0; n];
    for (col, b) in x.iter().zip(&beta) {
        for (e, v) in eta.iter_mut().zip(col) {
            *e += b * v;
        }
    }
    let (_, sd) = mean_sd(&eta);
    let sigma = sd / config.snr;
    let y = eta.iter().map(|e| e + sigma * rng.sample::<f64, _>(StandardNormal)).collect();
    let y_tilde = eta.iter().map(|e| e + sigma * rng.sample::<f64, _>(StandardNormal)).collect();
    Instance {
        x,
        beta,
        eta,
        y,
        y_tilde,
        sigma,
    }
}

/// Draws replicate `rep`. A degenerate linear predictor triggers a redraw
/// from a salted generator.
pub fn gen_instance(config: &SimConfig, rep: usize) -> Result<Instance> {
    let mut rng = seed::rng(config.seed, "rep", rep as u64);
    for salt in 0..=MAX_REGENERATE {
        if salt > 0 {
            log::warn!("replicate {rep}: linear predictor has zero spread, redrawing (salt {salt})");
            rng = seed::rng(seed::derive(config.seed, "rep", rep as u64), "salt", salt);
        }
        let inst = draw_instance(config, &mut rng);
        if inst.sigma > 0.0 {
            return Ok(inst);
        }
    }
    Err(Error::Config(format!("replicate {rep}: linear predictor is constant after redraws")))
}

/// Multipliers `1 / |cor(x_j, y)|`, capped at [`MAX_MULTIPLIER`].
pub fn marginal_multipliers(d: &Dataset) -> Vec<f64> {
    let n = d.n() as f64;
    let (ybar, ysd) = mean_sd(d.y());
    (0..d.p())
        .map(|j| {
            let sd = d.col_sd()[j];
            let cov = d.column(j).dot(d.y()) / n - d.col_mean()[j] * ybar;
            let cor = if sd > 0.0 && ysd > 0.0 { cov / (sd * ysd) } else { 0.0 };
            if cor == 0.0 {
                MAX_MULTIPLIER
            } else {
                (1.0 / cor.abs()).min(MAX_MULTIPLIER)
            }
        })
        .collect()
}

/// Weighted-L1 path with fixed marginal-correlation weights.
pub fn marginal_adaptive_lasso(d: &Dataset, config: &PathConfig) -> Result<Path> {
    let cfg = PathConfig {
        gamma: Gamma::lasso(),
        penalty_multipliers: Some(marginal_multipliers(d)),
        ..config.clone()
    };
    fit_path(d, Family::Gaussian, &cfg)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub r2: f64,
    pub fdr: f64,
    pub sensitivity: f64,
    pub support: usize,
}

/// Out-of-sample R2 against `y_tilde` and selection accuracy against the
/// oracle coefficients.
pub fn metrics(beta_hat: &[f64], beta_star: &[f64], eta_hat: &[f64], y_tilde: &[f64]) -> Metrics {
    let resid: Vec<f64> = y_tilde.iter().zip(eta_hat).map(|(y, e)| y - e).collect();
    let (_, sd_r) = mean_sd(&resid);
    let (_, sd_y) = mean_sd(y_tilde);
    let r2 = 1.0 - (sd_r * sd_r) / (sd_y * sd_y);
    let mut selected = 0usize;
    let mut false_pos = 0usize;
    let mut true_pos = 0usize;
    let mut oracle = 0usize;
    for (b, s) in beta_hat.iter().zip(beta_star) {
        let (hit, truth) = (*b != 0.0, *s != 0.0);
        selected += hit as usize;
        oracle += truth as usize;
        false_pos += (hit && !truth) as usize;
        true_pos += (hit && truth) as usize;
    }
    Metrics {
        r2,
        fdr: if selected == 0 { 0.0 } else { false_pos as f64 / selected as f64 },
        sensitivity: if oracle == 0 { 1.0 } else { true_pos as f64 / oracle as f64 },
        support: selected,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimRow {
    pub rep: usize,
    /// `gamma` value, or `mal` for the marginal adaptive lasso.
    pub gamma: String,
    pub selector: Selector,
    pub r2: f64,
    pub fdr: f64,
    pub sensitivity: f64,
    pub support: usize,
    /// Seconds spent on the full-data path, when timings are recorded.
    pub seconds: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Aggregate {
    pub gamma: String,
    pub selector: Selector,
    pub reps: usize,
    pub r2_mean: f64,
    pub r2_se: f64,
    pub fdr_mean: f64,
    pub fdr_se: f64,
    pub sensitivity_mean: f64,
    pub sensitivity_se: f64,
    pub support_mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SimResult {
    pub config: SimConfig,
    pub rows: Vec<SimRow>,
    pub aggregates: Vec<Aggregate>,
    pub failed_reps: Vec<usize>,
    /// Mean oracle support size over successful replicates.
    pub oracle_support_mean: f64,
}

impl SimResult {
    pub fn aggregate(&self, gamma: &str, selector: Selector) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.gamma == gamma && a.selector == selector)
    }
}

/// Label used in tables for a gamma value.
pub fn gamma_label(g: Gamma) -> String {
    g.to_string()
}

pub const MARGINAL_LABEL: &str = "mal";

struct RepOutcome {
    rows: Vec<SimRow>,
    oracle_support: usize,
}

fn run_rep(config: &SimConfig, rep: usize) -> Result<RepOutcome> {
    let inst = gen_instance(config, rep)?;
    let (n, p) = (config.n, config.p);

    // oracle on centered data with the true noise variance
    let xm = DMatrix::from_fn(n, p, |i, j| inst.x[j][i]);
    let mut xc = xm;
    for mut c in xc.column_iter_mut() {
        let m = c.mean();
        c.add_scalar_mut(-m);
    }
    let (ym, _) = mean_sd(&inst.y);
    let yc: Vec<f64> = inst.y.iter().map(|v| v - ym).collect();
    let oracle = l0_nested(&xc, &yc, inst.sigma * inst.sigma)?;
    drop(xc);

    let d = Dataset::from_dense_columns(inst.x, inst.y, &[])?;
    let cv_seed = seed::derive(config.seed, "cv", rep as u64);
    let mut methods: Vec<(String, Option<Gamma>)> = config.gammas.iter().map(|&g| (gamma_label(g), Some(g))).collect();
    if config.marginal {
        methods.push((MARGINAL_LABEL.to_string(), None));
    }
    let needs_cv = config.selectors.iter().any(|s| s.needs_cv());

    let mut rows = Vec::new();
    for (label, gamma) in methods {
        let start = Instant::now();
        let path = match gamma {
            Some(g) => fit_path(&d, Family::Gaussian, &config.path_config(g))?,
            None => marginal_adaptive_lasso(&d, &config.path_config(Gamma::lasso()))?,
        };
        let seconds = config.timings.then(|| start.elapsed().as_secs_f64());
        let ic = information_criteria(&path);
        let cv = if needs_cv { Some(cross_validate_path(&d, &path, config.folds, cv_seed)?) } else { None };
        for &sel in &config.selectors {
            let idx = match sel {
                Selector::CvMin => cv.as_ref().map(|c| c.idx_min),
                Selector::Cv1se => cv.as_ref().map(|c| c.idx_1se),
                Selector::Aicc => ic.selected_aicc.as_ref().map(|s| s.index),
                Selector::Aic => ic.selected_aic.as_ref().map(|s| s.index),
                Selector::Bic => ic.selected_bic.as_ref().map(|s| s.index),
            };
            let Some(t) = idx else {
                log::warn!("replicate {rep}: {label} has no segment for {sel}");
                continue;
            };
            let seg = &path.segments[t];
            let beta = seg.beta_dense(p);
            let eta_hat = d.linear_predictor(seg.alpha, &beta);
            let m = metrics(&beta, &oracle.beta, &eta_hat, &inst.y_tilde);
            rows.push(SimRow {
                rep,
                gamma: label.clone(),
                selector: sel,
                r2: m.r2,
                fdr: m.fdr,
                sensitivity: m.sensitivity,
                support: m.support,
                seconds,
            });
        }
    }
    Ok(RepOutcome {
        rows,
        oracle_support: oracle.support.len(),
    })
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let k = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / k;
    if v.len() < 2 {
        return (m, f64::NAN);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (k - 1.0);
    (m, (var / k).sqrt())
}

fn aggregate(rows: &[SimRow]) -> Vec<Aggregate> {
    let mut keys: Vec<(String, Selector)> = Vec::new();
    for r in rows {
        if !keys.iter().any(|(g, s)| *g == r.gamma && *s == r.selector) {
            keys.push((r.gamma.clone(), r.selector));
        }
    }
    keys.into_iter()
        .map(|(gamma, selector)| {
            let sub: Vec<&SimRow> = rows.iter().filter(|r| r.gamma == gamma && r.selector == selector).collect();
            let col = |f: fn(&SimRow) -> f64| sub.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let (r2_mean, r2_se) = mean_se(&col(|r| r.r2));
            let (fdr_mean, fdr_se) = mean_se(&col(|r| r.fdr));
            let (sensitivity_mean, sensitivity_se) = mean_se(&col(|r| r.sensitivity));
            let (support_mean, _) = mean_se(&col(|r| r.support as f64));
            Aggregate {
                gamma,
                selector,
                reps: sub.len(),
                r2_mean,
                r2_se,
                fdr_mean,
                fdr_se,
                sensitivity_mean,
                sensitivity_se,
                support_mean,
            }
        })
        .collect()
}

/// Runs every replicate (in parallel) and aggregates by method and selector.
pub fn run_experiment(config: &SimConfig) -> Result<SimResult> {
    config.validate()?;
    let outcomes: Vec<Result<RepOutcome>> = (0..config.reps).into_par_iter().map(|rep| run_rep(config, rep)).collect();
    let mut rows = Vec::new();
    let mut failed_reps = Vec::new();
    let mut oracle_sizes = Vec::new();
    for (rep, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(o) => {
                rows.extend(o.rows);
                oracle_sizes.push(o.oracle_support as f64);
            }
            Err(e) => {
                log::warn!("replicate {rep} failed: {e}");
                failed_reps.push(rep);
            }
        }
    }
    Ok(SimResult {
        config: config.clone(),
        aggregates: aggregate(&rows),
        rows,
        failed_reps,
        oracle_support_mean: mean_se(&oracle_sizes).0,
    })
}

/// Writes the per-replicate table as CSV.
pub fn write_rows_csv<W: Write>(rows: &[SimRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(["rep", "gamma", "selector", "r2", "fdr", "sensitivity", "support", "seconds"])
        .map_err(io)?;
    for r in rows {
        w.write_record([
            r.rep.to_string(),
            r.gamma.clone(),
            r.selector.to_string(),
            r.r2.to_string(),
            r.fdr.to_string(),
            r.sensitivity.to_string(),
            r.support.to_string(),
            r.seconds.map_or_else(|| "NA".to_string(), |s| s.to_string()),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(())
}

/// Three correlated standard normal covariates (pairwise correlation 0.9)
/// with `y = 4 + 3 x1 - x2 + e`; the third covariate is spurious.
pub fn correlated_trio(n: usize, seed_value: u64) -> Result<Dataset> {
    let mut rng = seed::rng(seed_value, "fixture", 0);
    let mut cols = vec![vec![0.0; n]; 3];
    let mut y = vec![0.0; n];
    let (a, b) = (0.9f64.sqrt(), 0.1f64.sqrt());
    for i in 0..n {
        let w: f64 = rng.sample(StandardNormal);
        for col in cols.iter_mut() {
            col[i] = a * w + b * rng.sample::<f64, _>(StandardNormal);
        }
        y[i] = 4.0 + 3.0 * cols[0][i] - cols[1][i] + rng.sample::<f64, _>(StandardNormal);
    }
    Dataset::new(
        cols.into_iter().map(crate::data::Column::Dense).collect(),
        y,
        &[],
        Some(vec!["x1".into(), "x2".into(), "x3".into()]),
    )
}

/// Writes a dataset produced by [`correlated_trio`] to CSV with response `y`.
pub fn write_fixture(d: &Dataset, path: impl AsRef<FsPath>) -> Result<()> {
    crate::data::write_csv(d, "y", path)
}
