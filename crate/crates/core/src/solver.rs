//! Weighted-L1 penalized (weighted) least squares by coordinate descent,
//! wrapped in IRLS for the logistic family.
//!
//! The penalty on coordinate `j` is `n * lambda * omega[j] * |beta_j|`. An
//! infinite `omega[j]` pins the coordinate at zero. The intercept is never
//! penalized and is kept at its conditional optimum after every update.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::family::{gradients, Family};

/// Linear predictors beyond this magnitude indicate separation.
const SEPARATION_ETA: f64 = 30.0;
const MAX_HALVINGS: usize = 30;
/// Each failed KKT verification divides the threshold by this factor.
const TIGHTEN_FACTOR: f64 = 100.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_passes: usize,
    pub max_irls: usize,
    pub accelerate: bool,
    /// Relative KKT tolerance verified after threshold convergence.
    pub kkt_tol: f64,
    /// How many times the threshold may be tightened to meet `kkt_tol`.
    pub max_tighten: usize,
    /// Fit an unpenalized intercept (always on for path fits).
    pub intercept: bool,
    /// Record the least-squares objective after every pass.
    pub trace_objective: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_passes: 100_000,
            max_irls: 500,
            accelerate: false,
            kkt_tol: 1e-4,
            max_tighten: 6,
            intercept: true,
            trace_objective: false,
        }
    }
}

/// One penalized problem at a fixed `lambda` and weight vector.
#[derive(Clone, Debug)]
pub struct SegmentProblem<'a> {
    pub data: &'a Dataset,
    pub family: Family,
    pub lambda: f64,
    pub omega: &'a [f64],
    pub alpha: f64,
    pub beta: &'a [f64],
    /// Absolute threshold on `max_j vh_j * delta_j^2` over a full pass.
    pub thresh: f64,
    /// Gradient record carried over from earlier solves.
    pub last_zero_gradient: &'a [f64],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentSolution {
    pub alpha: f64,
    pub beta: Vec<f64>,
    pub support: Vec<usize>,
    pub cd_passes: usize,
    pub irls_iterations: usize,
    pub converged: bool,
    /// Logistic fit ran away (separation or failed step control).
    pub diverged: bool,
    /// Most recent gradient seen for each coordinate while it was zero.
    pub last_zero_gradient: Vec<f64>,
    /// Penalized objective `loss + n lambda sum omega |beta|`.
    pub objective: f64,
    pub eta: Vec<f64>,
    /// Least-squares objective after each pass (only when traced).
    pub objective_trace: Vec<f64>,
    /// Largest drift between the incrementally maintained and the
    /// recomputed linear predictor (Gaussian solves).
    pub eta_drift: f64,
}

/// Per-coordinate optimality slack at a candidate solution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub slack: Vec<f64>,
    /// Slack divided by `n lambda omega_j` (infinite when that is zero and
    /// the slack is not).
    pub relative: Vec<f64>,
    pub worst_active: f64,
    pub worst_inactive: f64,
    pub worst_relative: f64,
    /// `|sum_i (y_i - mu_i)|` for the intercept.
    pub intercept_slack: f64,
    pub offenders: Vec<usize>,
}

impl KktReport {
    /// All penalized coordinates within `tol * n lambda omega_j`.
    pub fn passes(&self, tol: f64) -> bool {
        self.worst_relative < tol
    }
}

/// Minimizer step for `0.5 vh b^2 + vg b + pen |b|` around `beta`, in terms
/// of the gradient `vg` and curvature `vh` at `beta`.
#[inline]
pub fn coordinate_delta(vg: f64, vh: f64, beta: f64, pen: f64) -> f64 {
    let ghb = vg - vh * beta;
    if ghb.abs() < pen {
        -beta
    } else {
        -(vg - ghb.signum() * pen) / vh
    }
}

/// Secant extrapolation of three successive iterates. Coordinates with no
/// contraction, no movement, or a current value of zero pass through.
pub fn qn_proposal(theta0: &[f64], theta_m1: &[f64], theta_m2: &[f64]) -> Vec<f64> {
    theta0
        .iter()
        .zip(theta_m1)
        .zip(theta_m2)
        .map(|((&t0, &t1), &t2)| {
            let u = t1 - t2;
            let v = t0 - t1;
            if u == v || u == 0.0 || t0 == 0.0 {
                t0
            } else {
                let w = u / (u - v);
                (1.0 - w) * t1 + w * t0
            }
        })
        .collect()
}

/// Returns the extrapolated point when it strictly lowers `objective`.
pub fn qn_accelerate(
    theta0: &[f64],
    theta_m1: &[f64],
    theta_m2: &[f64],
    objective: impl Fn(&[f64]) -> f64,
) -> Option<Vec<f64>> {
    let prop = qn_proposal(theta0, theta_m1, theta_m2);
    if prop == theta0 || prop.iter().any(|v| !v.is_finite()) {
        return None;
    }
    (objective(&prop) < objective(theta0)).then_some(prop)
}

fn penalty_term(n: usize, lambda: f64, omega: &[f64], beta: &[f64]) -> f64 {
    beta.iter()
        .zip(omega)
        .filter(|(b, _)| **b != 0.0)
        .map(|(b, w)| n as f64 * lambda * w * b.abs())
        .sum()
}

/// `loss + n lambda sum omega |beta|` at `(alpha, beta)`.
pub fn penalized_objective(
    d: &Dataset,
    family: Family,
    lambda: f64,
    omega: &[f64],
    alpha: f64,
    beta: &[f64],
) -> f64 {
    let eta = d.linear_predictor(alpha, beta);
    family.loss_unchecked(&eta, d.y()) + penalty_term(d.n(), lambda, omega, beta)
}

fn effective_pen(n: usize, lambda: f64, omega: &[f64]) -> Vec<f64> {
    omega
        .iter()
        .map(|&w| if w.is_infinite() { f64::INFINITY } else { n as f64 * lambda * w })
        .collect()
}

/// Optimality slack of `(alpha, beta)` for the true likelihood.
pub fn kkt_check(
    d: &Dataset,
    family: Family,
    alpha: f64,
    beta: &[f64],
    lambda: f64,
    omega: &[f64],
) -> KktReport {
    let eta = d.linear_predictor(alpha, beta);
    let g = gradients(d, &eta, family);
    let r = family.residuals(&eta, d.y());
    let mut rep = slack_report(&g, beta, &effective_pen(d.n(), lambda, omega));
    rep.intercept_slack = r.iter().sum::<f64>().abs();
    rep
}

fn slack_report(g: &[f64], beta: &[f64], pen: &[f64]) -> KktReport {
    let p = g.len();
    let mut slack = vec![0.0; p];
    let mut relative = vec![0.0; p];
    let mut worst_active: f64 = 0.0;
    let mut worst_inactive: f64 = 0.0;
    let mut worst_relative: f64 = 0.0;
    let mut offenders = Vec::new();
    for j in 0..p {
        let pj = pen[j];
        let s = if beta[j] != 0.0 {
            let s = if pj.is_infinite() { f64::INFINITY } else { (g[j] + pj * beta[j].signum()).abs() };
            worst_active = worst_active.max(s);
            s
        } else {
            let s = (g[j].abs() - pj).max(0.0);
            worst_inactive = worst_inactive.max(s);
            s
        };
        slack[j] = s;
        if pj > 0.0 {
            let rel = if pj.is_infinite() {
                if s > 0.0 { f64::INFINITY } else { 0.0 }
            } else {
                s / pj
            };
            relative[j] = rel;
            worst_relative = worst_relative.max(rel);
        } else {
            relative[j] = if s > 0.0 { f64::INFINITY } else { 0.0 };
        }
        if s > 0.0 && pj > 0.0 {
            offenders.push(j);
        }
    }
    offenders.sort_by(|&a, &b| relative[b].total_cmp(&relative[a]));
    KktReport {
        slack,
        relative,
        worst_active,
        worst_inactive,
        worst_relative,
        intercept_slack: 0.0,
        offenders,
    }
}

/// Mutable state for one least-squares solve.
struct Wls<'a> {
    d: &'a Dataset,
    opts: &'a SolverOptions,
    pen: Vec<f64>,
    v: Vec<f64>,
    z: Vec<f64>,
    sum_v: f64,
    vx: Vec<f64>,
    vh: Vec<f64>,
    alpha: f64,
    beta: Vec<f64>,
    /// `z - X beta`
    wres: Vec<f64>,
    last_zero: Vec<f64>,
    passes: usize,
    trace: Vec<f64>,
    history: Vec<Vec<f64>>,
}

enum WlsStatus {
    Converged,
    PassCap,
    KktFailed,
}

impl<'a> Wls<'a> {
    #[allow(clippy::too_many_arguments)]
    fn new(
        d: &'a Dataset,
        opts: &'a SolverOptions,
        pen: Vec<f64>,
        v: Vec<f64>,
        z: Vec<f64>,
        beta: Vec<f64>,
        last_zero: Vec<f64>,
        passes: usize,
    ) -> Self {
        let sum_v: f64 = v.iter().sum();
        let mut vx = Vec::with_capacity(d.p());
        let mut vh = Vec::with_capacity(d.p());
        for col in d.columns() {
            let sx = col.dot(&v);
            let sxx = col.weighted_sum_sq(&v);
            vx.push(sx);
            vh.push(if opts.intercept {
                (sxx - sx * sx / sum_v).max(0.0)
            } else {
                sxx
            });
        }
        let mut wres = z.clone();
        for (col, &b) in d.columns().iter().zip(&beta) {
            if b != 0.0 {
                col.axpy(-b, &mut wres);
            }
        }
        let mut w = Self {
            d,
            opts,
            pen,
            v,
            z,
            sum_v,
            vx,
            vh,
            alpha: 0.0,
            beta,
            wres,
            last_zero,
            passes,
            trace: Vec::new(),
            history: Vec::new(),
        };
        w.alpha = w.optimal_alpha();
        w
    }

    fn optimal_alpha(&self) -> f64 {
        if !self.opts.intercept {
            return 0.0;
        }
        self.v.iter().zip(&self.wres).map(|(v, r)| v * r).sum::<f64>() / self.sum_v
    }

    fn set_alpha(&mut self, alpha: f64) {
        if self.opts.intercept {
            self.alpha = alpha;
        }
    }

    #[inline]
    fn vg(&self, j: usize) -> f64 {
        -(self.d.column(j).weighted_dot(&self.v, &self.wres) - self.alpha * self.vx[j])
    }

    fn objective(&self) -> f64 {
        let rss: f64 = self
            .v
            .iter()
            .zip(&self.wres)
            .map(|(v, r)| v * (r - self.alpha) * (r - self.alpha))
            .sum();
        0.5 * rss + self.pen_sum(&self.beta)
    }

    fn pen_sum(&self, beta: &[f64]) -> f64 {
        beta.iter()
            .zip(&self.pen)
            .filter(|(b, _)| **b != 0.0)
            .map(|(b, p)| p * b.abs())
            .sum()
    }

    /// One sweep over `cols`; returns `max vh * delta^2`.
    fn sweep(&mut self, cols: &[usize]) -> f64 {
        let mut worst: f64 = 0.0;
        for &j in cols {
            let vh = self.vh[j];
            if vh <= 0.0 {
                continue;
            }
            let b = self.beta[j];
            let vg = self.vg(j);
            let delta = coordinate_delta(vg, vh, b, self.pen[j]);
            if b == 0.0 || b + delta == 0.0 {
                self.last_zero[j] = vg - vh * b;
            }
            if delta != 0.0 {
                let nb = if delta == -b { 0.0 } else { b + delta };
                let delta = nb - b;
                self.beta[j] = nb;
                self.d.column(j).axpy(-delta, &mut self.wres);
                if self.opts.intercept {
                    self.alpha -= self.vx[j] / self.sum_v * delta;
                }
                worst = worst.max(vh * delta * delta);
            }
        }
        self.passes += 1;
        if self.opts.trace_objective {
            self.trace.push(self.objective());
        }
        if self.opts.accelerate {
            self.try_accelerate();
        }
        worst
    }

    fn try_accelerate(&mut self) {
        let mut theta = Vec::with_capacity(self.beta.len() + 1);
        theta.push(self.alpha);
        theta.extend_from_slice(&self.beta);
        self.history.push(theta);
        if self.history.len() < 3 {
            return;
        }
        let h = std::mem::take(&mut self.history);
        let (t2, t1, t0) = (&h[0], &h[1], &h[2]);
        let eval = |th: &[f64]| self.objective_at(th);
        if let Some(prop) = qn_accelerate(t0, t1, t2, eval) {
            for j in 0..self.beta.len() {
                let delta = prop[j + 1] - self.beta[j];
                if delta != 0.0 {
                    self.d.column(j).axpy(-delta, &mut self.wres);
                    self.beta[j] = prop[j + 1];
                }
            }
            self.set_alpha(prop[0]);
            let a = self.optimal_alpha();
            self.set_alpha(a);
            if self.opts.trace_objective {
                self.trace.push(self.objective());
            }
        } else {
            // keep the two most recent snapshots
            self.history = h.into_iter().skip(1).collect();
        }
    }

    fn objective_at(&self, theta: &[f64]) -> f64 {
        let alpha = if self.opts.intercept { theta[0] } else { 0.0 };
        let beta = &theta[1..];
        let mut wres = self.wres.clone();
        for j in 0..beta.len() {
            let delta = beta[j] - self.beta[j];
            if delta != 0.0 {
                self.d.column(j).axpy(-delta, &mut wres);
            }
        }
        let rss: f64 = self
            .v
            .iter()
            .zip(&wres)
            .map(|(v, r)| v * (r - alpha) * (r - alpha))
            .sum();
        0.5 * rss + self.pen_sum(beta)
    }

    fn wls_kkt_ok(&self) -> bool {
        let g: Vec<f64> = (0..self.beta.len()).map(|j| self.vg(j)).collect();
        slack_report(&g, &self.beta, &self.pen).passes(self.opts.kkt_tol)
    }

    /// Full pass, then active-set passes, until a full pass moves less
    /// than `thresh`. Returns the first full pass's movement as well.
    fn run(&mut self, mut thresh: f64, verify_kkt: bool, all: &[usize]) -> (WlsStatus, f64) {
        let mut first_full = None;
        let mut tightened = 0;
        loop {
            if self.passes >= self.opts.max_passes {
                return (WlsStatus::PassCap, first_full.unwrap_or(f64::INFINITY));
            }
            let full = self.sweep(all);
            let first = *first_full.get_or_insert(full);
            if full < thresh {
                if !verify_kkt || self.wls_kkt_ok() {
                    return (WlsStatus::Converged, first);
                }
                if tightened >= self.opts.max_tighten {
                    return (WlsStatus::KktFailed, first);
                }
                tightened += 1;
                thresh /= TIGHTEN_FACTOR;
                continue;
            }
            loop {
                if self.passes >= self.opts.max_passes {
                    return (WlsStatus::PassCap, first);
                }
                let active: Vec<usize> = all
                    .iter()
                    .copied()
                    .filter(|&j| self.beta[j] != 0.0 || self.pen[j] == 0.0)
                    .collect();
                if self.sweep(&active) < thresh {
                    break;
                }
            }
        }
    }
}

/// Coordinate descent for fixed working weights `v` and response `z`.
pub fn solve_wls(problem: &SegmentProblem<'_>, v: &[f64], z: &[f64], opts: &SolverOptions) -> SegmentSolution {
    let d = problem.data;
    let pen = effective_pen(d.n(), problem.lambda, problem.omega);
    let mut w = Wls::new(
        d,
        opts,
        pen,
        v.to_vec(),
        z.to_vec(),
        problem.beta.to_vec(),
        problem.last_zero_gradient.to_vec(),
        0,
    );
    let all: Vec<usize> = (0..d.p()).collect();
    let (status, _) = w.run(problem.thresh, true, &all);
    finish(problem, w, matches!(status, WlsStatus::Converged), false, 0)
}

fn finish(problem: &SegmentProblem<'_>, w: Wls<'_>, converged: bool, diverged: bool, irls: usize) -> SegmentSolution {
    let d = problem.data;
    let eta = d.linear_predictor(w.alpha, &w.beta);
    let eta_drift = eta
        .iter()
        .zip(&w.z)
        .zip(&w.wres)
        .map(|((e, z), r)| (e - (w.alpha + z - r)).abs())
        .fold(0.0, f64::max);
    let objective = problem.family.loss_unchecked(&eta, d.y()) + penalty_term(d.n(), problem.lambda, problem.omega, &w.beta);
    let support = (0..d.p()).filter(|&j| w.beta[j] != 0.0).collect();
    SegmentSolution {
        alpha: w.alpha,
        beta: w.beta,
        support,
        cd_passes: w.passes,
        irls_iterations: irls,
        converged,
        diverged,
        last_zero_gradient: w.last_zero,
        objective,
        eta,
        objective_trace: w.trace,
        eta_drift: if problem.family == Family::Gaussian { eta_drift } else { 0.0 },
    }
}

/// Solves one path segment: a single least-squares solve for the Gaussian
/// family, IRLS with step control for the logistic family.
pub fn solve_segment(problem: &SegmentProblem<'_>, opts: &SolverOptions) -> SegmentSolution {
    let d = problem.data;
    match problem.family {
        Family::Gaussian => {
            let v = vec![1.0; d.n()];
            solve_wls(problem, &v, d.y(), opts)
        }
        Family::Binomial => solve_logistic(problem, opts),
    }
}

fn solve_logistic(problem: &SegmentProblem<'_>, opts: &SolverOptions) -> SegmentSolution {
    let d = problem.data;
    let family = problem.family;
    let n = d.n();
    let all: Vec<usize> = (0..d.p()).collect();
    let pen = effective_pen(n, problem.lambda, problem.omega);
    let obj = |alpha: f64, beta: &[f64]| penalized_objective(d, family, problem.lambda, problem.omega, alpha, beta);

    let mut alpha = if opts.intercept { problem.alpha } else { 0.0 };
    let mut beta = problem.beta.to_vec();
    let mut last_zero = problem.last_zero_gradient.to_vec();
    let mut f_old = obj(alpha, &beta);
    let mut passes = 0;
    let mut thresh = problem.thresh;
    let mut tightened = 0;
    let mut trace = Vec::new();

    let mut irls = 0;
    let mut diverged = false;
    let mut converged = false;
    while irls < opts.max_irls {
        irls += 1;
        let eta = d.linear_predictor(alpha, &beta);
        let (v, z) = family.irls_working(&eta, d.y());
        let mut w = Wls::new(d, opts, pen.clone(), v, z, beta.clone(), last_zero.clone(), passes);
        let alpha_move = w.sum_v * (w.alpha - alpha).powi(2);
        let (status, first_full) = w.run(thresh, false, &all);
        passes = w.passes;
        last_zero.clone_from(&w.last_zero);
        trace.extend_from_slice(&w.trace);

        // Step control on the true penalized objective.
        let (mut a_new, mut b_new) = (w.alpha, w.beta.clone());
        let mut f_new = obj(a_new, &b_new);
        let tol = 1e-12 * f_old.abs().max(1.0);
        let mut halvings = 0;
        while !(f_new <= f_old + tol) {
            if halvings == MAX_HALVINGS {
                diverged = true;
                break;
            }
            halvings += 1;
            a_new = 0.5 * (alpha + a_new);
            for (bn, bo) in b_new.iter_mut().zip(&beta) {
                *bn = 0.5 * (*bo + *bn);
            }
            f_new = obj(a_new, &b_new);
        }
        if diverged {
            break;
        }
        alpha = a_new;
        beta = b_new;
        f_old = f_new;

        let eta = d.linear_predictor(alpha, &beta);
        if eta.iter().any(|e| e.abs() >= SEPARATION_ETA) {
            log::warn!("linear predictor exceeds {SEPARATION_ETA}: treating fit as separated");
            diverged = true;
            break;
        }
        if matches!(status, WlsStatus::PassCap) {
            break;
        }
        if first_full.max(alpha_move) < thresh && halvings == 0 {
            if kkt_check(d, family, alpha, &beta, problem.lambda, problem.omega).passes(opts.kkt_tol) {
                converged = true;
                break;
            }
            if tightened >= opts.max_tighten {
                break;
            }
            tightened += 1;
            thresh /= TIGHTEN_FACTOR;
        }
    }

    let eta = d.linear_predictor(alpha, &beta);
    let objective = family.loss_unchecked(&eta, d.y()) + penalty_term(n, problem.lambda, problem.omega, &beta);
    let support = (0..d.p()).filter(|&j| beta[j] != 0.0).collect();
    SegmentSolution {
        alpha,
        beta,
        support,
        cd_passes: passes,
        irls_iterations: irls,
        converged: converged && !diverged,
        diverged,
        last_zero_gradient: last_zero,
        objective,
        eta,
        objective_trace: trace,
        eta_drift: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::null_model;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_dataset(n: usize, p: usize, seed: u64, binomial: bool) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols: Vec<Vec<f64>> = (0..p)
            .map(|_| (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let eta = cols[0][i] - 0.5 * cols[1 % p][i] + 0.3;
                if binomial {
                    let q = 1.0 / (1.0 + (-eta).exp());
                    if rng.random::<f64>() < q { 1.0 } else { 0.0 }
                } else {
                    eta + rng.sample::<f64, _>(StandardNormal)
                }
            })
            .collect();
        Dataset::from_dense_columns(cols, y, &[]).unwrap()
    }

    fn problem<'a>(d: &'a Dataset, family: Family, lambda: f64, omega: &'a [f64], beta: &'a [f64], lz: &'a [f64], thresh: f64) -> SegmentProblem<'a> {
        SegmentProblem {
            data: d,
            family,
            lambda,
            omega,
            alpha: 0.0,
            beta,
            thresh,
            last_zero_gradient: lz,
        }
    }

    /// Brute-force minimizer of the univariate objective on a fine grid.
    fn grid_argmin(vg: f64, vh: f64, beta: f64, pen: f64) -> f64 {
        let f = |b: f64| 0.5 * vh * (b - beta).powi(2) + vg * (b - beta) + pen * b.abs();
        let mut best = (f64::INFINITY, 0.0);
        for k in -400_000..=400_000 {
            let b = k as f64 * 1e-5;
            let v = f(b);
            if v < best.0 {
                best = (v, b);
            }
        }
        best.1 - beta
    }

    #[test]
    fn coordinate_delta_cases() {
        assert_eq!(coordinate_delta(0.1, 1.0, 0.7, 5.0), -0.7);
        assert_relative_eq!(coordinate_delta(-2.0, 4.0, 0.0, 1.0), 0.25, epsilon = 1e-15);
        assert_relative_eq!(grid_argmin(-2.0, 4.0, 0.0, 1.0), 0.25, epsilon = 1e-5);
        assert_relative_eq!(coordinate_delta(3.0, 2.0, 0.4, 0.0), -1.5, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn coordinate_delta_matches_grid_search(vg in -1.5f64..1.5, vh in 0.5f64..3.0, beta in -0.5f64..0.5, pen in 0.0f64..1.0) {
            let d = coordinate_delta(vg, vh, beta, pen);
            prop_assert!((d - grid_argmin(vg, vh, beta, pen)).abs() < 2e-5);
        }
    }

    #[test]
    fn orthogonal_design_is_soft_thresholding() {
        // Columns are centered, mutually orthogonal with sum x^2 = n.
        let n = 8;
        let h = [
            [1.0, 1.0, 1.0],
            [-1.0, 1.0, 1.0],
            [1.0, -1.0, 1.0],
            [-1.0, -1.0, 1.0],
            [1.0, 1.0, -1.0],
            [-1.0, 1.0, -1.0],
            [1.0, -1.0, -1.0],
            [-1.0, -1.0, -1.0],
        ];
        let cols: Vec<Vec<f64>> = (0..3).map(|j| (0..n).map(|i| h[i][j]).collect()).collect();
        let y = vec![3.0, -1.0, 2.5, 0.5, 1.0, -2.0, 0.7, 4.0];
        let d = Dataset::from_dense_columns(cols.clone(), y.clone(), &[]).unwrap();
        let lambda = 0.4;
        let omega = [1.0, 0.5, 2.0];
        let beta0 = [0.0; 3];
        let lz = [0.0; 3];
        let sol = solve_segment(&problem(&d, Family::Gaussian, lambda, &omega, &beta0, &lz, 1e-20), &SolverOptions::default());
        assert!(sol.converged);
        for j in 0..3 {
            let b = cols[j].iter().zip(&y).map(|(x, y)| x * y).sum::<f64>() / n as f64;
            let expect = b.signum() * (b.abs() - lambda * omega[j]).max(0.0);
            assert_relative_eq!(sol.beta[j], expect, epsilon = 1e-12);
        }
        let mean_y = y.iter().sum::<f64>() / n as f64;
        assert_relative_eq!(sol.alpha, mean_y, epsilon = 1e-12);
        let kkt = kkt_check(&d, Family::Gaussian, sol.alpha, &sol.beta, lambda, &omega);
        assert!(kkt.worst_active < 1e-10 && kkt.worst_inactive < 1e-10);
    }

    #[test]
    fn unpenalized_gaussian_matches_ols() {
        let d = random_dataset(100, 2, 3, false);
        let omega = [1.0, 1.0];
        let beta0 = [0.0; 2];
        let lz = [0.0; 2];
        let sol = solve_segment(&problem(&d, Family::Gaussian, 0.0, &omega, &beta0, &lz, 1e-24), &SolverOptions::default());
        let mut x = DMatrix::from_element(100, 3, 1.0);
        for j in 0..2 {
            x.set_column(j + 1, &DVector::from_vec(d.column(j).to_dense(100)));
        }
        let ols = (x.transpose() * &x).cholesky().unwrap().solve(&(x.transpose() * DVector::from_column_slice(d.y())));
        assert!((sol.alpha - ols[0]).abs() < 1e-8);
        for j in 0..2 {
            assert!((sol.beta[j] - ols[j + 1]).abs() < 1e-8);
        }
    }

    #[test]
    fn large_lambda_gives_null_model() {
        for binomial in [false, true] {
            let family = if binomial { Family::Binomial } else { Family::Gaussian };
            let d = random_dataset(60, 4, 9, binomial);
            let null = null_model(&d, family).unwrap();
            let lam1 = null.gradients.iter().map(|g| g.abs()).fold(0.0, f64::max) / 60.0;
            let omega = [1.0; 4];
            let beta0 = [0.0; 4];
            let sol = solve_segment(
                &SegmentProblem { alpha: null.alpha, ..problem(&d, family, lam1 * 1.0001, &omega, &beta0, &null.gradients, 1e-7 * null.deviance) },
                &SolverOptions::default(),
            );
            assert!(sol.support.is_empty());
            assert_relative_eq!(sol.alpha, null.alpha, epsilon = 1e-9);
            let kkt = kkt_check(&d, family, sol.alpha, &sol.beta, lam1, &omega);
            assert!(kkt.worst_inactive <= 1e-10);
        }
    }

    #[test]
    fn converged_segments_pass_kkt_and_objective_is_monotone() {
        for (seed, binomial) in [(1, false), (2, true), (3, false), (4, true)] {
            let family = if binomial { Family::Binomial } else { Family::Gaussian };
            let d = random_dataset(80, 10, seed, binomial);
            let null = null_model(&d, family).unwrap();
            let lam1 = null.gradients.iter().map(|g| g.abs()).fold(0.0, f64::max) / 80.0;
            let omega: Vec<f64> = (0..10).map(|j| 0.5 + 0.1 * j as f64).collect();
            let beta0 = vec![0.0; 10];
            let opts = SolverOptions { trace_objective: true, ..Default::default() };
            let sol = solve_segment(
                &SegmentProblem { alpha: null.alpha, ..problem(&d, family, lam1 * 0.2, &omega, &beta0, &null.gradients, 1e-7 * null.deviance) },
                &opts,
            );
            assert!(sol.converged, "seed {seed}");
            assert!(!sol.support.is_empty());
            let kkt = kkt_check(&d, family, sol.alpha, &sol.beta, lam1 * 0.2, &omega);
            assert!(kkt.passes(1e-4), "seed {seed}: {}", kkt.worst_relative);
            if !binomial {
                for w in sol.objective_trace.windows(2) {
                    assert!(w[1] <= w[0] + 1e-9 * w[0].abs(), "{w:?}");
                }
                assert!(sol.eta_drift < 1e-9 * (1.0 + sol.eta.iter().fold(0.0f64, |m, e| m.max(e.abs()))));
            }
        }
    }

    #[test]
    fn warm_start_at_solution_is_a_fixed_point() {
        let d = random_dataset(50, 5, 11, false);
        let omega = [1.0; 5];
        let beta0 = [0.0; 5];
        let lz = [0.0; 5];
        let pr = problem(&d, Family::Gaussian, 0.05, &omega, &beta0, &lz, 1e-22);
        let first = solve_segment(&pr, &SolverOptions::default());
        let again = solve_segment(&SegmentProblem { alpha: first.alpha, beta: &first.beta, ..pr }, &SolverOptions::default());
        assert!(again.converged);
        assert_eq!(again.cd_passes, 1);
        for j in 0..5 {
            assert!((again.beta[j] - first.beta[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn acceleration_does_not_change_the_answer() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100;
        let w: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let cols: Vec<Vec<f64>> = (0..8)
            .map(|_| w.iter().map(|wi| 0.95 * wi + 0.3 * rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let y: Vec<f64> = (0..n).map(|i| cols[0][i] - cols[3][i] + rng.sample::<f64, _>(StandardNormal)).collect();
        let d = Dataset::from_dense_columns(cols, y, &[]).unwrap();
        let omega = [1.0, 0.2, 1.0, 0.1, 1.0, 1.0, 0.5, 1.0];
        let beta0 = [0.0; 8];
        let lz = [0.0; 8];
        let pr = problem(&d, Family::Gaussian, 0.01, &omega, &beta0, &lz, 1e-14);
        let plain = solve_segment(&pr, &SolverOptions::default());
        let fast = solve_segment(&pr, &SolverOptions { accelerate: true, trace_objective: true, ..Default::default() });
        assert!(plain.converged && fast.converged);
        for j in 0..8 {
            assert!((plain.beta[j] - fast.beta[j]).abs() < 1e-6);
        }
        for win in fast.objective_trace.windows(2) {
            assert!(win[1] <= win[0] + 1e-9 * win[0].abs());
        }
    }

    #[test]
    fn qn_lands_on_geometric_limit() {
        let limit = [2.0f64, -1.0];
        let rate = [0.5f64, 0.8];
        let c = [1.0, 3.0];
        let it = |k: i32| -> Vec<f64> { (0..2).map(|l| limit[l] + c[l] * rate[l].powi(k)).collect() };
        let prop = qn_proposal(&it(3), &it(2), &it(1));
        for l in 0..2 {
            assert_relative_eq!(prop[l], limit[l], epsilon = 1e-12);
        }
        // no contraction: passed through
        assert_eq!(qn_proposal(&[3.0], &[2.0], &[1.0]), vec![3.0]);
        // increase in objective: rejected
        assert!(qn_accelerate(&it(3), &it(2), &it(1), |t| -(t[0] - 2.0).abs()).is_none());
    }

    #[test]
    fn kkt_detects_perturbation() {
        let d = random_dataset(100, 4, 21, false);
        let omega = [1.0; 4];
        let beta0 = [0.0; 4];
        let lz = [0.0; 4];
        let lambda = 0.05;
        let sol = solve_segment(&problem(&d, Family::Gaussian, lambda, &omega, &beta0, &lz, 1e-22), &SolverOptions::default());
        let j = sol.support[0];
        let mut b = sol.beta.clone();
        b[j] += 0.01;
        let rep = kkt_check(&d, Family::Gaussian, sol.alpha, &b, lambda, &omega);
        // With the intercept held fixed the gradient moves by 0.01 * sum x_j^2.
        let h: f64 = d.column(j).sum_sq();
        let expect = 0.01 * h;
        assert_relative_eq!(rep.slack[j], expect, max_relative = 1e-6);
    }

    #[test]
    fn separation_is_flagged() {
        let x = vec![-3.0, -2.0, -1.0, 1.0, 2.0, 3.0];
        let y = vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let d = Dataset::from_dense_columns(vec![x], y, &[0]).unwrap();
        let omega = [0.0];
        let beta0 = [0.0];
        let lz = [0.0];
        let sol = solve_segment(&problem(&d, Family::Binomial, 0.0, &omega, &beta0, &lz, 1e-8), &SolverOptions::default());
        assert!(sol.diverged && !sol.converged);
    }

    #[test]
    fn sparse_and_dense_storage_give_identical_fits() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 60;
        let cols: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..n).map(|_| if rng.random::<f64>() < 0.7 { 0.0 } else { rng.sample(StandardNormal) }).collect())
            .collect();
        let y: Vec<f64> = (0..n).map(|i| cols[0][i] + rng.sample::<f64, _>(StandardNormal)).collect();
        let sparse = Dataset::from_dense_columns(cols.clone(), y.clone(), &[]).unwrap();
        assert!(sparse.column(0).is_sparse());
        let dense = Dataset::new(cols.into_iter().map(crate::data::Column::Dense).collect(), y, &[], None).unwrap();
        let omega = [1.0; 5];
        let beta0 = [0.0; 5];
        let lz = [0.0; 5];
        let a = solve_segment(&problem(&sparse, Family::Gaussian, 0.02, &omega, &beta0, &lz, 1e-12), &SolverOptions::default());
        let b = solve_segment(&problem(&dense, Family::Gaussian, 0.02, &omega, &beta0, &lz, 1e-12), &SolverOptions::default());
        assert_eq!(a.beta, b.beta);
        assert_eq!(a.alpha.to_bits(), b.alpha.to_bits());
    }
}
