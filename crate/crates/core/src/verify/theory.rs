//! Finite-sample checks of the prediction bound, the false-discovery
//! conditions, the stagewise regression lemma and the joint/log objective
//! equivalence.
//!
//! Everything here uses squared-error loss `0.5 ||X b - y||^2` with no
//! intercept, a per-nonzero L0 penalty `n nu`, and columns scaled so that
//! `||x_j||^2 = n`.

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::family::Family;
use crate::solver::{solve_segment, SegmentProblem, SolverOptions};

use super::l0::{l0_exhaustive, L0Solution};
use super::re::{min_eigen, restricted_eigenvalue_gram};

/// Relative slack used when comparing two sides of an inequality.
const COMPARE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// The inequality holds with a conservative estimate.
    Confirmed,
    /// The conservative estimate cannot decide either way.
    Inconclusive,
    /// The inequality fails even with a provably safe bound.
    Violated,
    /// The preconditions do not hold; nothing was checked.
    NotApplicable,
}

/// Outcome of the weighted-L1 versus L0 prediction bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BoundCheck {
    pub lhs: f64,
    /// `4 lambda^2 ||omega_S||^2 / re_estimate`.
    pub rhs: f64,
    /// Same bound with the smallest Gram eigenvalue, a lower bound on the
    /// restricted eigenvalue. Exceeding it is a genuine violation.
    pub rhs_safe: f64,
    pub l: f64,
    pub re_estimate: f64,
    pub precondition_holds: bool,
    pub conclusive: bool,
    pub outcome: Outcome,
    pub support: Vec<usize>,
}

/// Shared ingredients of the bound checks.
#[derive(Clone, Debug)]
pub struct TheoryFit {
    pub oracle: L0Solution,
    pub beta_hat: Vec<f64>,
    pub converged: bool,
    pub precondition_holds: bool,
    /// Smallest penalty weight off the oracle support (infinite if none).
    pub omega_min_off: f64,
    pub omega_s_norm: f64,
}

/// Rescales every column to `||x_j||^2 = n`.
pub fn normalize_columns(x: &mut DMatrix<f64>) {
    let n = x.nrows() as f64;
    for mut c in x.column_iter_mut() {
        let norm = c.norm();
        if norm > 0.0 {
            c *= n.sqrt() / norm;
        }
    }
}

fn check_shapes(x: &DMatrix<f64>, y: &[f64], omega: &[f64]) -> Result<()> {
    if y.len() != x.nrows() {
        return Err(Error::LengthMismatch { expected: x.nrows(), got: y.len() });
    }
    if omega.len() != x.ncols() {
        return Err(Error::LengthMismatch { expected: x.ncols(), got: omega.len() });
    }
    Ok(())
}

/// Minimizer of `0.5 ||y - X b||^2 + n lambda sum omega_j |b_j|` without an
/// intercept, solved to a tight KKT tolerance.
pub fn weighted_l1_fit(x: &DMatrix<f64>, y: &[f64], lambda: f64, omega: &[f64]) -> Result<(Vec<f64>, bool)> {
    check_shapes(x, y, omega)?;
    let cols: Vec<Vec<f64>> = x.column_iter().map(|c| c.iter().copied().collect()).collect();
    let d = Dataset::from_dense_columns(cols, y.to_vec(), &[])?;
    let p = x.ncols();
    let yy: f64 = y.iter().map(|v| v * v).sum();
    let beta0 = vec![0.0; p];
    let lzg = vec![0.0; p];
    let problem = SegmentProblem {
        data: &d,
        family: Family::Gaussian,
        lambda,
        omega,
        alpha: 0.0,
        beta: &beta0,
        thresh: 1e-16 * yy.max(f64::MIN_POSITIVE),
        last_zero_gradient: &lzg,
    };
    let opts = SolverOptions {
        intercept: false,
        kkt_tol: 1e-9,
        max_tighten: 8,
        ..SolverOptions::default()
    };
    let sol = solve_segment(&problem, &opts);
    Ok((sol.beta, sol.converged))
}

/// Computes the L0 oracle, the weighted-L1 fit and the shared quantities.
pub fn theory_fit(x: &DMatrix<f64>, y: &[f64], nu: f64, lambda: f64, omega: &[f64]) -> Result<TheoryFit> {
    check_shapes(x, y, omega)?;
    let oracle = l0_exhaustive(x, y, nu)?;
    let (beta_hat, converged) = weighted_l1_fit(x, y, lambda, omega)?;
    let in_s = membership(x.ncols(), &oracle.support);
    let omega_min_off = (0..x.ncols()).filter(|&j| !in_s[j]).map(|j| omega[j]).fold(f64::INFINITY, f64::min);
    let omega_s_norm = oracle.support.iter().map(|&j| omega[j] * omega[j]).sum::<f64>().sqrt();
    Ok(TheoryFit {
        precondition_holds: omega_min_off * lambda > (2.0 * nu).sqrt(),
        oracle,
        beta_hat,
        converged,
        omega_min_off,
        omega_s_norm,
    })
}

fn membership(p: usize, support: &[usize]) -> Vec<bool> {
    let mut m = vec![false; p];
    for &j in support {
        m[j] = true;
    }
    m
}

fn gram(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.transpose() * x / x.nrows() as f64
}

/// Cone width `L` for the prediction bound.
pub fn cone_width(fit: &TheoryFit, nu: f64, lambda: f64) -> f64 {
    let s = fit.oracle.support.len() as f64;
    (fit.omega_s_norm / s.sqrt()) / (fit.omega_min_off - (2.0 * nu).sqrt() / lambda)
}

/// Checks `||X (b_hat - b_nu)||^2 / n <= 4 lambda^2 ||omega_S||^2 / phi^2(L, S)`.
///
/// The restricted eigenvalue is estimated from above, so `lhs <= rhs`
/// confirms the bound. A failure against the estimate is only reported as a
/// violation when it also fails against the smallest Gram eigenvalue.
pub fn theorem1_check(
    x: &DMatrix<f64>,
    y: &[f64],
    nu: f64,
    lambda: f64,
    omega: &[f64],
    restarts: usize,
    rng: &mut ChaCha8Rng,
) -> Result<BoundCheck> {
    let fit = theory_fit(x, y, nu, lambda, omega)?;
    Ok(theorem1_from_fit(x, &fit, nu, lambda, restarts, rng))
}

pub fn theorem1_from_fit(x: &DMatrix<f64>, fit: &TheoryFit, nu: f64, lambda: f64, restarts: usize, rng: &mut ChaCha8Rng) -> BoundCheck {
    let n = x.nrows() as f64;
    let support = fit.oracle.support.clone();
    let diff = DVector::from_iterator(x.ncols(), fit.beta_hat.iter().zip(&fit.oracle.beta).map(|(a, b)| a - b));
    let lhs = (x * diff).norm_squared() / n;
    let yy: f64 = fit.oracle.rss.max(0.0) + (x * DVector::from_column_slice(&fit.oracle.beta)).norm_squared();
    let slack = COMPARE_TOL * (yy / n).max(f64::MIN_POSITIVE);

    let mut out = BoundCheck {
        lhs,
        rhs: f64::NAN,
        rhs_safe: f64::NAN,
        l: f64::NAN,
        re_estimate: f64::NAN,
        precondition_holds: fit.precondition_holds,
        conclusive: false,
        outcome: Outcome::NotApplicable,
        support,
    };
    if !fit.precondition_holds || !fit.converged {
        out.precondition_holds &= fit.converged;
        return out;
    }
    let g = gram(x);
    let (lmin, _) = min_eigen(&g);
    if out.support.is_empty() {
        out.rhs = 0.0;
        out.rhs_safe = 0.0;
        out.l = 0.0;
    } else {
        let l = cone_width(fit, nu, lambda);
        let re = restricted_eigenvalue_gram(&g, &out.support, l, restarts, rng);
        out.l = l;
        out.re_estimate = re;
        if !(re > 0.0) {
            out.precondition_holds = false;
            return out;
        }
        let top = 4.0 * lambda * lambda * fit.omega_s_norm * fit.omega_s_norm;
        out.rhs = top / re;
        out.rhs_safe = if lmin > 0.0 { top / lmin } else { f64::INFINITY };
    }
    out.outcome = if out.lhs <= out.rhs + slack {
        Outcome::Confirmed
    } else if out.lhs > out.rhs_safe + slack {
        Outcome::Violated
    } else {
        Outcome::Inconclusive
    };
    out.conclusive = out.outcome != Outcome::Inconclusive;
    out
}

/// Sign and support recovery conditions and what the fit did.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SignRecoveryReport {
    pub precondition_holds: bool,
    /// Largest `|x_j' X_S (X_S'X_S)^{-1} omega_S| - (1 - sqrt(2 nu) / (lambda omega_j))`
    /// over off-support `j`, as literally stated. Nonpositive means it holds.
    pub literal_margin: f64,
    pub literal_beta_min: bool,
    /// Off-support condition that bounds every sign pattern of the
    /// on-support subgradient: `sum_k |c_jk| omega_k < omega_j - sqrt(2 nu) / lambda`.
    pub no_false_positive_condition: bool,
    /// Per-coordinate `|b_nu_k| > n lambda sum_l |M_kl| omega_l`.
    pub beta_min_condition: bool,
    pub false_positives: Vec<usize>,
    pub signs_match: bool,
    pub outcome: Outcome,
}

/// Evaluates the no-false-positive and sign-agreement conditions and tests
/// the fit against whichever of them hold.
pub fn sign_recovery_check(x: &DMatrix<f64>, y: &[f64], nu: f64, lambda: f64, omega: &[f64]) -> Result<SignRecoveryReport> {
    let fit = theory_fit(x, y, nu, lambda, omega)?;
    sign_recovery_from_fit(x, &fit, nu, lambda, omega)
}

pub fn sign_recovery_from_fit(x: &DMatrix<f64>, fit: &TheoryFit, nu: f64, lambda: f64, omega: &[f64]) -> Result<SignRecoveryReport> {
    let (n, p) = x.shape();
    let s = &fit.oracle.support;
    let in_s = membership(p, s);
    let margin_term = (2.0 * nu).sqrt() / lambda;
    let false_positives: Vec<usize> = (0..p).filter(|&j| !in_s[j] && fit.beta_hat[j] != 0.0).collect();
    let signs_match = (0..p).all(|j| fit.beta_hat[j].signum() * (fit.beta_hat[j] != 0.0) as i32 as f64 == fit.oracle.beta[j].signum() * (fit.oracle.beta[j] != 0.0) as i32 as f64);

    let mut rep = SignRecoveryReport {
        precondition_holds: fit.precondition_holds && fit.converged,
        literal_margin: f64::NAN,
        literal_beta_min: false,
        no_false_positive_condition: false,
        beta_min_condition: false,
        false_positives,
        signs_match,
        outcome: Outcome::NotApplicable,
    };
    if !rep.precondition_holds {
        return Ok(rep);
    }

    let omega_s = DVector::from_iterator(s.len(), s.iter().map(|&j| omega[j]));
    let (coef, m) = if s.is_empty() {
        (DMatrix::zeros(0, p), DMatrix::zeros(0, 0))
    } else {
        let xs = x.select_columns(s.iter());
        let gss = xs.transpose() * &xs;
        let ch = gss.cholesky().ok_or_else(|| Error::Singular("oracle support is rank deficient".into()))?;
        // column j holds the least-squares coefficients of x_j on X_S
        (ch.solve(&(xs.transpose() * x)), ch.inverse())
    };

    let mut literal: f64 = f64::NEG_INFINITY;
    let mut robust = true;
    for j in (0..p).filter(|&j| !in_s[j]) {
        let c = coef.column(j);
        let proj = c.dot(&omega_s).abs();
        literal = literal.max(proj - (1.0 - margin_term / omega[j]));
        let bound: f64 = c.iter().zip(omega_s.iter()).map(|(a, w)| a.abs() * w).sum();
        let cap = omega[j] - margin_term;
        if !(bound < cap - COMPARE_TOL * cap.abs().max(1.0)) {
            robust = false;
        }
    }
    rep.literal_margin = if literal.is_finite() { literal } else { 0.0 };
    rep.no_false_positive_condition = robust;

    let scale = n as f64 * lambda;
    let mut literal_lhs: f64 = 0.0;
    let mut literal_rhs: f64 = 0.0;
    let mut beta_min = true;
    for (a, &k) in s.iter().enumerate() {
        let row = m.row(a);
        let signed: f64 = row.iter().zip(omega_s.iter()).map(|(mk, w)| mk * w).sum();
        let absolute: f64 = row.iter().zip(omega_s.iter()).map(|(mk, w)| mk.abs() * w).sum();
        literal_lhs = literal_lhs.max(fit.oracle.beta[k].abs());
        literal_rhs = literal_rhs.max(scale * signed.abs());
        if !(fit.oracle.beta[k].abs() > scale * absolute * (1.0 + COMPARE_TOL)) {
            beta_min = false;
        }
    }
    rep.literal_beta_min = literal_lhs > literal_rhs;
    rep.beta_min_condition = robust && beta_min;

    rep.outcome = if !robust {
        Outcome::NotApplicable
    } else if !rep.false_positives.is_empty() || (rep.beta_min_condition && !rep.signs_match) {
        Outcome::Violated
    } else {
        Outcome::Confirmed
    };
    Ok(rep)
}

/// The off-support selection count against its bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FalseDiscoveryCheck {
    pub count: usize,
    /// Bound with the estimated restricted eigenvalue.
    pub bound: f64,
    /// Bound with the smallest Gram eigenvalue in its place.
    pub bound_safe: f64,
    pub re_estimate: f64,
    pub outcome: Outcome,
}

/// Counts off-support selections and compares with
/// `sum_{j in S^c, selected} 1/omega_j * (2 ||omega_S|| / phi + sqrt(2 nu) / lambda)`.
pub fn false_discovery_bound(
    x: &DMatrix<f64>,
    y: &[f64],
    nu: f64,
    lambda: f64,
    omega: &[f64],
    restarts: usize,
    rng: &mut ChaCha8Rng,
) -> Result<FalseDiscoveryCheck> {
    let fit = theory_fit(x, y, nu, lambda, omega)?;
    Ok(false_discovery_from_fit(x, &fit, nu, lambda, omega, restarts, rng))
}

pub fn false_discovery_from_fit(
    x: &DMatrix<f64>,
    fit: &TheoryFit,
    nu: f64,
    lambda: f64,
    omega: &[f64],
    restarts: usize,
    rng: &mut ChaCha8Rng,
) -> FalseDiscoveryCheck {
    let p = x.ncols();
    let in_s = membership(p, &fit.oracle.support);
    let spurious: Vec<usize> = (0..p).filter(|&j| !in_s[j] && fit.beta_hat[j] != 0.0).collect();
    let inv_sum: f64 = spurious.iter().map(|&j| 1.0 / omega[j]).sum();
    let mut out = FalseDiscoveryCheck {
        count: spurious.len(),
        bound: f64::NAN,
        bound_safe: f64::NAN,
        re_estimate: f64::NAN,
        outcome: Outcome::NotApplicable,
    };
    if !fit.precondition_holds || !fit.converged {
        return out;
    }
    let tail = (2.0 * nu).sqrt() / lambda;
    let g = gram(x);
    let (lmin, _) = min_eigen(&g);
    if fit.oracle.support.is_empty() {
        out.bound = inv_sum * tail;
        out.bound_safe = out.bound;
    } else {
        let re = restricted_eigenvalue_gram(&g, &fit.oracle.support, cone_width(fit, nu, lambda), restarts, rng);
        out.re_estimate = re;
        if !(re > 0.0) {
            return out;
        }
        out.bound = inv_sum * (2.0 * fit.omega_s_norm / re.sqrt() + tail);
        out.bound_safe = if lmin > 0.0 { inv_sum * (2.0 * fit.omega_s_norm / lmin.sqrt() + tail) } else { f64::INFINITY };
    }
    let c = out.count as f64;
    out.outcome = if c <= out.bound * (1.0 + COMPARE_TOL) {
        Outcome::Confirmed
    } else if c > out.bound_safe * (1.0 + COMPARE_TOL) {
        Outcome::Violated
    } else {
        Outcome::Inconclusive
    };
    out
}

/// Both sides of the stagewise regression inequality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StagewiseReport {
    /// `(x_j' e_S / n)^2`.
    pub cov_sq: f64,
    /// `MSE_S - MSE_{S + j}`.
    pub mse_drop: f64,
    pub holds: bool,
}

fn ols_residual(x: &DMatrix<f64>, y: &DVector<f64>, support: &[usize]) -> Result<DVector<f64>> {
    if support.is_empty() {
        return Ok(y.clone());
    }
    let xs = x.select_columns(support.iter());
    let ch = (xs.transpose() * &xs)
        .cholesky()
        .ok_or_else(|| Error::Singular("subset design is rank deficient".into()))?;
    let coef = ch.solve(&(xs.transpose() * y));
    Ok(y - xs * coef)
}

/// Checks `cov^2(x_j, e_S) <= MSE_S - MSE_{S + j}` with `1e-10` slack.
/// Columns are expected to satisfy `||x_j||^2 = n`.
pub fn lemma1_check(x: &DMatrix<f64>, y: &[f64], support: &[usize], j: usize) -> Result<StagewiseReport> {
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: y.len() });
    }
    if j >= x.ncols() || support.iter().any(|&k| k >= x.ncols()) {
        return Err(Error::IndexOutOfRange(format!("column {j} of {}", x.ncols())));
    }
    let yv = DVector::from_column_slice(y);
    let e_s = ols_residual(x, &yv, support)?;
    let mut with_j = support.to_vec();
    if !with_j.contains(&j) {
        with_j.push(j);
    }
    let e_sj = ols_residual(x, &yv, &with_j)?;
    let nf = n as f64;
    let cov = x.column(j).dot(&e_s) / nf;
    let cov_sq = cov * cov;
    let mse_drop = (e_s.norm_squared() - e_sj.norm_squared()) / nf;
    Ok(StagewiseReport {
        cov_sq,
        mse_drop,
        holds: cov_sq <= mse_drop + 1e-10,
    })
}

/// Joint and profiled objectives at one coefficient vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct JointObjectiveReport {
    pub tau: Vec<f64>,
    pub joint: f64,
    pub log_objective: f64,
    /// `joint - log_objective`.
    pub difference: f64,
    /// `sum_j shape (1 - log(gamma shape))`, the value the difference must take.
    pub constant: f64,
}

/// Conditional mode of each penalty rate given its coefficient.
pub fn tau_hat(beta: &[f64], gamma: f64, shape: f64) -> Vec<f64> {
    beta.iter().map(|b| gamma * shape / (1.0 + gamma * b.abs())).collect()
}

/// `loss / phi + sum_j [tau_j (1/gamma + |b_j|) - shape log tau_j]`.
pub fn joint_objective(beta: &[f64], tau: &[f64], gamma: f64, shape: f64, phi: f64, loss: f64) -> f64 {
    loss / phi
        + beta
            .iter()
            .zip(tau)
            .map(|(b, t)| t * (1.0 / gamma + b.abs()) - shape * t.ln())
            .sum::<f64>()
}

/// `loss / phi + sum_j shape log(1 + gamma |b_j|)`.
pub fn log_objective(beta: &[f64], gamma: f64, shape: f64, phi: f64, loss: f64) -> f64 {
    loss / phi + beta.iter().map(|b| shape * (gamma * b.abs()).ln_1p()).sum::<f64>()
}

/// Evaluates both objectives with the penalty rates at their conditional
/// mode.
pub fn prop1_equivalence(beta: &[f64], gamma: f64, shape: f64, phi: f64, loss: f64) -> Result<JointObjectiveReport> {
    if !(gamma > 0.0 && shape > 0.0 && phi > 0.0) {
        return Err(Error::Config("gamma, shape and phi must be positive".into()));
    }
    let tau = tau_hat(beta, gamma, shape);
    let joint = joint_objective(beta, &tau, gamma, shape, phi, loss);
    let log_objective = log_objective(beta, gamma, shape, phi, loss);
    Ok(JointObjectiveReport {
        constant: beta.len() as f64 * shape * (1.0 - (gamma * shape).ln()),
        tau,
        joint,
        log_objective,
        difference: joint - log_objective,
    })
}
