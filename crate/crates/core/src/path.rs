//! Regularization paths: the decreasing lambda grid, the gamma-lasso weight
//! recursion, warm-started segment solves and the degrees-of-freedom
//! estimate.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use statrs::function::gamma::gamma_lr;

use crate::data::{penalty_scales, Dataset, PenaltyScales};
use crate::error::{Error, Result};
use crate::family::{null_model, Family, NullModel};
use crate::solver::{solve_segment, SegmentProblem, SolverOptions};

/// Default convergence threshold relative to the null deviance.
pub const DEFAULT_REL_THRESH: f64 = 1e-7;

/// Penalty concavity. `Infinite` is the subset-selection limit: a
/// coefficient is unpenalized from the segment after it first moves.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Gamma {
    Finite(f64),
    Infinite,
}

impl Gamma {
    pub fn lasso() -> Self {
        Gamma::Finite(0.0)
    }

    pub fn is_lasso(self) -> bool {
        self == Gamma::Finite(0.0)
    }
}

impl Default for Gamma {
    fn default() -> Self {
        Gamma::lasso()
    }
}

impl fmt::Display for Gamma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gamma::Finite(g) => write!(f, "{g}"),
            Gamma::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for Gamma {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if matches!(s.to_ascii_lowercase().as_str(), "inf" | "infinity" | "+inf") {
            return Ok(Gamma::Infinite);
        }
        let g: f64 = s
            .parse()
            .map_err(|_| Error::Config(format!("gamma must be a number or 'inf', got '{s}'")))?;
        if g.is_infinite() && g > 0.0 {
            Ok(Gamma::Infinite)
        } else if g >= 0.0 {
            Ok(Gamma::Finite(g))
        } else {
            Err(Error::Config(format!("gamma must be nonnegative, got {g}")))
        }
    }
}

impl Serialize for Gamma {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Gamma::Finite(g) => s.serialize_f64(*g),
            Gamma::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Gamma {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(g) => Ok(Gamma::Finite(g)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PathConfig {
    pub gamma: Gamma,
    pub n_segments: usize,
    pub lambda_min_ratio: f64,
    pub standardize: bool,
    pub accelerate: bool,
    /// Replaces the default threshold factor applied to the null deviance.
    pub thresh: Option<f64>,
    /// Fixed per-column multipliers on the penalty scales (adaptive-lasso
    /// style weights). When set, the weights do not adapt along the path.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub penalty_multipliers: Option<Vec<f64>>,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            gamma: Gamma::lasso(),
            n_segments: 100,
            lambda_min_ratio: 0.01,
            standardize: true,
            accelerate: false,
            thresh: None,
            penalty_multipliers: None,
        }
    }
}

impl PathConfig {
    pub fn with_gamma(gamma: Gamma) -> Self {
        Self {
            gamma,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_segments < 1 {
            return Err(Error::Config("number of segments must be at least 1".into()));
        }
        if !(self.lambda_min_ratio > 0.0 && self.lambda_min_ratio < 1.0) {
            return Err(Error::Config(format!(
                "lambda-min-ratio must lie in (0, 1), got {}",
                self.lambda_min_ratio
            )));
        }
        if let Gamma::Finite(g) = self.gamma {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(Error::Config(format!("gamma must be nonnegative, got {g}")));
            }
        }
        if let Some(t) = self.thresh {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("thresh must be positive, got {t}")));
            }
        }
        if let Some(m) = &self.penalty_multipliers {
            if m.iter().any(|v| !(*v > 0.0) || v.is_nan()) {
                return Err(Error::Config("penalty multipliers must be positive".into()));
            }
        }
        Ok(())
    }

    fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            accelerate: self.accelerate,
            ..SolverOptions::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathSegment {
    pub t: usize,
    pub lambda: f64,
    pub alpha: f64,
    /// Nonzero coefficients as `(column, value)`, including free columns.
    pub beta: Vec<(usize, f64)>,
    pub omega: Vec<f64>,
    pub df: f64,
    pub deviance: f64,
    /// Number of nonzero penalized coefficients.
    pub support: usize,
    pub converged: bool,
    pub cd_passes: usize,
    pub irls_iterations: usize,
}

impl PathSegment {
    pub fn beta_dense(&self, p: usize) -> Vec<f64> {
        let mut b = vec![0.0; p];
        for &(j, v) in &self.beta {
            b[j] = v;
        }
        b
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub config: PathConfig,
    pub family: Family,
    pub n: usize,
    pub p: usize,
    pub free: Vec<usize>,
    pub null_deviance: f64,
    pub lambda: Vec<f64>,
    pub segments: Vec<PathSegment>,
    /// A segment diverged and the remaining grid was not fit.
    pub truncated: bool,
}

impl Path {
    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    pub fn segment_beta(&self, t: usize) -> Vec<f64> {
        self.segments[t].beta_dense(self.p)
    }

    /// Penalized columns with a nonzero coefficient at segment `t`.
    pub fn support(&self, t: usize) -> Vec<usize> {
        self.segments[t]
            .beta
            .iter()
            .map(|&(j, _)| j)
            .filter(|j| !self.free.contains(j))
            .collect()
    }
}

/// Smallest lambda at which every penalized coefficient is zero:
/// `max_j |g_j| / (n s_j)` over penalized columns.
pub fn lambda_start(d: &Dataset, null: &NullModel, scales: &[f64]) -> Result<f64> {
    let n = d.n() as f64;
    let mut best: f64 = 0.0;
    for j in 0..d.p() {
        if d.is_free(j) {
            continue;
        }
        best = best.max(null.gradients[j].abs() / (n * scales[j]));
    }
    if best > 0.0 && best.is_finite() {
        Ok(best)
    } else if d.p() == d.n_free() {
        Err(Error::Config("no penalized columns".into()))
    } else {
        Err(Error::OrthogonalResponse)
    }
}

/// Geometric grid from `lambda1` down to exactly `lambda1 * ratio`.
pub fn make_grid(lambda1: f64, n_segments: usize, ratio: f64) -> Result<Vec<f64>> {
    if !(lambda1 > 0.0 && lambda1.is_finite()) {
        return Err(Error::Config(format!("lambda1 must be positive, got {lambda1}")));
    }
    if n_segments == 0 {
        return Err(Error::Config("number of segments must be at least 1".into()));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("lambda-min-ratio must lie in (0, 1), got {ratio}")));
    }
    if n_segments == 1 {
        return Ok(vec![lambda1]);
    }
    let last = n_segments - 1;
    Ok((0..n_segments)
        .map(|t| {
            if t == last {
                lambda1 * ratio
            } else {
                lambda1 * ratio.powf(t as f64 / last as f64)
            }
        })
        .collect())
}

/// Gamma-lasso weights from the previous segment's coefficients.
pub fn update_weights(beta_prev: &[f64], gamma: Gamma, scales: &[f64]) -> Vec<f64> {
    beta_prev
        .iter()
        .zip(scales)
        .map(|(&b, &s)| {
            if s == 0.0 {
                0.0
            } else {
                match gamma {
                    Gamma::Finite(g) => s / (1.0 + g * b.abs()),
                    Gamma::Infinite => {
                        if b == 0.0 {
                            s
                        } else {
                            0.0
                        }
                    }
                }
            }
        })
        .collect()
}

/// Degrees of freedom at one segment: intercept, free columns, and for each
/// penalized column the prior probability that its penalty falls below the
/// recorded absolute gradient.
///
/// `scales[j]` is the per-column penalty scale (0 for free columns) and
/// `phi` the dispersion. Gradients are put on the `loss / phi` scale.
pub fn df_estimate(
    n: usize,
    lambda: f64,
    gamma: Gamma,
    phi: f64,
    last_zero_gradient: &[f64],
    scales: &[f64],
    free_count: usize,
) -> f64 {
    let mut df = (free_count + 1) as f64;
    for (&g, &s) in last_zero_gradient.iter().zip(scales) {
        if s == 0.0 {
            continue;
        }
        df += match gamma {
            Gamma::Infinite => 1.0,
            Gamma::Finite(gm) if gm == 0.0 => {
                if g.abs() > n as f64 * lambda * s {
                    1.0
                } else {
                    0.0
                }
            }
            Gamma::Finite(gm) => {
                let shape = n as f64 * lambda * s / (gm * phi);
                let x = g.abs() / (phi * gm);
                if x <= 0.0 {
                    0.0
                } else if shape < 1e-300 {
                    1.0
                } else {
                    gamma_lr(shape, x)
                }
            }
        };
    }
    df
}

/// Effective penalty scales: standardization scales times any fixed
/// multipliers.
fn effective_scales(d: &Dataset, config: &PathConfig) -> Result<PenaltyScales> {
    let mut s = penalty_scales(d, config.standardize);
    if let Some(m) = &config.penalty_multipliers {
        if m.len() != d.p() {
            return Err(Error::LengthMismatch {
                expected: d.p(),
                got: m.len(),
            });
        }
        for (sj, mj) in s.0.iter_mut().zip(m) {
            *sj *= mj;
        }
    }
    Ok(s)
}

/// Fits the full path on a grid starting at the data's own `lambda1`.
pub fn fit_path(d: &Dataset, family: Family, config: &PathConfig) -> Result<Path> {
    config.validate()?;
    d.check_family(family)?;
    let null = null_model(d, family)?;
    let scales = effective_scales(d, config)?;
    let lambda1 = lambda_start(d, &null, scales.as_slice())?;
    let grid = make_grid(lambda1, config.n_segments, config.lambda_min_ratio)?;
    run_path(d, family, config, &null, &scales, grid, true)
}

/// Fits a path on a supplied grid (used for cross-validation folds, where
/// the grid comes from the full data).
pub fn fit_path_on_grid(d: &Dataset, family: Family, config: &PathConfig, grid: &[f64]) -> Result<Path> {
    config.validate()?;
    d.check_family(family)?;
    if grid.is_empty() || grid.iter().any(|l| !(*l >= 0.0)) {
        return Err(Error::Config("lambda grid must be nonempty and nonnegative".into()));
    }
    let null = null_model(d, family)?;
    let scales = effective_scales(d, config)?;
    run_path(d, family, config, &null, &scales, grid.to_vec(), false)
}

fn run_path(
    d: &Dataset,
    family: Family,
    config: &PathConfig,
    null: &NullModel,
    scales: &PenaltyScales,
    grid: Vec<f64>,
    clamp_first: bool,
) -> Result<Path> {
    let n = d.n();
    let free = d.free_indices();
    let opts = config.solver_options();
    let thresh = config.thresh.unwrap_or(DEFAULT_REL_THRESH) * null.deviance;
    // A zero null deviance means a perfect fit already; any positive
    // threshold stops at once.
    let thresh = if thresh > 0.0 { thresh } else { f64::MIN_POSITIVE };
    let adaptive = config.penalty_multipliers.is_none();

    let mut alpha = null.alpha;
    let mut beta = null.beta.clone();
    let mut last_zero = null.gradients.clone();
    let mut segments = Vec::with_capacity(grid.len());
    let mut truncated = false;

    for (t, &lambda) in grid.iter().enumerate() {
        let omega = if adaptive {
            update_weights(&beta, config.gamma, scales.as_slice())
        } else {
            scales.0.clone()
        };
        let clamped: Vec<f64>;
        let solve_omega = if t == 0 && clamp_first {
            clamped = omega
                .iter()
                .enumerate()
                .map(|(j, &w)| if d.is_free(j) { w } else { f64::INFINITY })
                .collect();
            &clamped
        } else {
            &omega
        };
        let sol = solve_segment(
            &SegmentProblem {
                data: d,
                family,
                lambda,
                omega: solve_omega,
                alpha,
                beta: &beta,
                thresh,
                last_zero_gradient: &last_zero,
            },
            &opts,
        );
        if sol.diverged {
            log::warn!(
                "segment {} (lambda = {lambda:e}) diverged; path truncated after {} segments",
                t + 1,
                segments.len()
            );
            truncated = true;
            break;
        }
        if !sol.converged {
            log::warn!("segment {} (lambda = {lambda:e}) did not converge", t + 1);
        }
        let deviance = family.deviance(&sol.eta, d.y());
        let phi = family.dispersion(deviance, n);
        let df_gamma = if adaptive { config.gamma } else { Gamma::lasso() };
        let support = sol.support.iter().filter(|&&j| !d.is_free(j)).count();
        // At gamma = 0 the indicator rule counts the active set once the
        // segment satisfies KKT; counting it directly avoids rounding ties,
        // such as the leading column at lambda1.
        let df = if df_gamma.is_lasso() && sol.converged {
            (support + free.len() + 1) as f64
        } else {
            df_estimate(n, lambda, df_gamma, phi, &sol.last_zero_gradient, scales.as_slice(), free.len())
        };
        segments.push(PathSegment {
            t: t + 1,
            lambda,
            alpha: sol.alpha,
            beta: sol.support.iter().map(|&j| (j, sol.beta[j])).collect(),
            omega,
            df,
            deviance,
            support,
            converged: sol.converged,
            cd_passes: sol.cd_passes,
            irls_iterations: sol.irls_iterations,
        });
        alpha = sol.alpha;
        beta = sol.beta;
        last_zero = sol.last_zero_gradient;
    }

    Ok(Path {
        config: config.clone(),
        family,
        n,
        p: d.p(),
        free,
        null_deviance: null.deviance,
        lambda: grid,
        segments,
        truncated,
    })
}
