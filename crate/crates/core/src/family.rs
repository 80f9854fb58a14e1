//! Likelihood machinery for Gaussian and logistic regression.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Lower bound on binomial IRLS weights.
pub const WEIGHT_FLOOR: f64 = 1e-10;

const NULL_MAX_ITER: usize = 50;
const NULL_REL_TOL: f64 = 1e-9;
const NULL_MAX_HALVINGS: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Binomial,
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(Family::Gaussian),
            "binomial" | "logistic" => Ok(Family::Binomial),
            other => Err(Error::Config(format!("unknown family '{other}'"))),
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Family::Gaussian => "gaussian",
            Family::Binomial => "binomial",
        })
    }
}

/// Logistic mean `1 / (1 + e^{-eta})`.
#[inline]
pub fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^eta) - y * eta` without overflow.
#[inline]
fn logistic_term(eta: f64, y: f64) -> f64 {
    if eta > 0.0 {
        (1.0 - y) * eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p() - y * eta
    }
}

impl Family {
    /// Mean function.
    #[inline]
    pub fn mean(self, eta: f64) -> f64 {
        match self {
            Family::Gaussian => eta,
            Family::Binomial => sigmoid(eta),
        }
    }

    /// Negative log likelihood (½ squared error for Gaussian).
    pub fn loss(self, eta: &[f64], y: &[f64]) -> Result<f64> {
        if eta.len() != y.len() {
            return Err(Error::LengthMismatch {
                expected: y.len(),
                got: eta.len(),
            });
        }
        if eta.iter().any(|e| !e.is_finite()) {
            return Err(Error::NonFinite("linear predictor".into()));
        }
        Ok(self.loss_unchecked(eta, y))
    }

    pub(crate) fn loss_unchecked(self, eta: &[f64], y: &[f64]) -> f64 {
        match self {
            Family::Gaussian => 0.5 * eta.iter().zip(y).map(|(e, y)| (y - e) * (y - e)).sum::<f64>(),
            Family::Binomial => eta.iter().zip(y).map(|(&e, &y)| logistic_term(e, y)).sum(),
        }
    }

    /// Gaussian: residual sum of squares. Binomial: twice the loss, which
    /// is the usual deviance for 0/1 responses (no saturated term is
    /// subtracted for fractional responses).
    pub fn deviance(self, eta: &[f64], y: &[f64]) -> f64 {
        2.0 * self.loss_unchecked(eta, y)
    }

    /// IRLS weights and working response at `eta`.
    pub fn irls_working(self, eta: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        match self {
            Family::Gaussian => (vec![1.0; y.len()], y.to_vec()),
            Family::Binomial => eta
                .iter()
                .zip(y)
                .map(|(&e, &y)| {
                    let q = sigmoid(e);
                    let v = (q * (1.0 - q)).max(WEIGHT_FLOOR);
                    (v, e + (y - q) / v)
                })
                .unzip(),
        }
    }

    /// Per-observation curvature of the loss in `eta` (unfloored).
    #[inline]
    pub fn variance(self, eta: f64) -> f64 {
        match self {
            Family::Gaussian => 1.0,
            Family::Binomial => {
                let q = sigmoid(eta);
                q * (1.0 - q)
            }
        }
    }

    /// Dispersion used by the degrees-of-freedom estimate.
    pub fn dispersion(self, deviance: f64, n: usize) -> f64 {
        match self {
            Family::Gaussian => (deviance / n as f64).max(f64::MIN_POSITIVE),
            Family::Binomial => 1.0,
        }
    }

    /// `y - mean(eta)` for every observation.
    pub fn residuals(self, eta: &[f64], y: &[f64]) -> Vec<f64> {
        eta.iter().zip(y).map(|(&e, &y)| y - self.mean(e)).collect()
    }
}

/// Loss gradient and curvature for column `j` at linear predictor `eta`.
pub fn gradient_curvature(d: &Dataset, j: usize, eta: &[f64], family: Family) -> (f64, f64) {
    let col = d.column(j);
    let r = family.residuals(eta, d.y());
    let v: Vec<f64> = eta.iter().map(|&e| family.variance(e)).collect();
    (-col.dot(&r), col.weighted_sum_sq(&v))
}

/// Loss gradients for every column at `eta`.
pub fn gradients(d: &Dataset, eta: &[f64], family: Family) -> Vec<f64> {
    let r = family.residuals(eta, d.y());
    d.columns().iter().map(|c| -c.dot(&r)).collect()
}

/// Unpenalized fit of the intercept and free columns.
#[derive(Clone, Debug)]
pub struct NullModel {
    pub alpha: f64,
    /// Length-p coefficients; nonzero only on free columns.
    pub beta: Vec<f64>,
    pub eta: Vec<f64>,
    pub deviance: f64,
    /// Loss gradient for every column at the null fit.
    pub gradients: Vec<f64>,
    pub iterations: usize,
}

/// Fits the intercept plus free columns by Newton's method.
pub fn null_model(d: &Dataset, family: Family) -> Result<NullModel> {
    d.check_family(family)?;
    let n = d.n();
    let free = d.free_indices();
    let k = free.len() + 1;
    let y = d.y();

    if family == Family::Binomial {
        let ybar = y.iter().sum::<f64>() / n as f64;
        if ybar <= 0.0 || ybar >= 1.0 {
            return Err(Error::Separation(format!(
                "response mean is {ybar}; intercept is infinite"
            )));
        }
    }

    // Dense design of intercept + free columns.
    let mut z = DMatrix::<f64>::from_element(n, k, 1.0);
    for (c, &j) in free.iter().enumerate() {
        let col = d.column(j).to_dense(n);
        z.set_column(c + 1, &DVector::from_vec(col));
    }

    let mut theta = DVector::<f64>::zeros(k);
    let mut iterations = 0;
    match family {
        Family::Gaussian => {
            let gram = z.transpose() * &z;
            let rhs = z.transpose() * DVector::from_column_slice(y);
            theta = solve_spd(gram, rhs)?;
            iterations = 1;
        }
        Family::Binomial => {
            let ybar = y.iter().sum::<f64>() / n as f64;
            theta[0] = (ybar / (1.0 - ybar)).ln();
            let mut eta: Vec<f64> = (&z * &theta).iter().copied().collect();
            let mut loss = family.loss_unchecked(&eta, y);
            let mut trace = vec![loss];
            let mut last_rel = f64::INFINITY;
            loop {
                let r = DVector::from_vec(family.residuals(&eta, y));
                let grad = -(z.transpose() * r);
                let g_scaled = grad.amax() / n as f64;
                if g_scaled < 1e-12 || (last_rel < NULL_REL_TOL && g_scaled < 1e-9) {
                    break;
                }
                if iterations >= NULL_MAX_ITER {
                    return Err(Error::NullModel(format!(
                        "Newton did not converge in {NULL_MAX_ITER} iterations; loss trace {trace:?}"
                    )));
                }
                iterations += 1;
                let mut zw = z.clone();
                for (i, mut row) in zw.row_iter_mut().enumerate() {
                    row *= family.variance(eta[i]);
                }
                let hess = z.transpose() * zw;
                let step = solve_spd(hess, -grad)?;

                let mut t = 1.0;
                let mut improved = None;
                for _ in 0..=NULL_MAX_HALVINGS {
                    let cand = &theta + &step * t;
                    let cand_eta: Vec<f64> = (&z * &cand).iter().copied().collect();
                    let cand_loss = family.loss_unchecked(&cand_eta, y);
                    if cand_loss.is_finite() && cand_loss <= loss {
                        improved = Some((cand, cand_eta, cand_loss));
                        break;
                    }
                    t *= 0.5;
                }
                // No descent available: stationary to working precision.
                let Some((cand, cand_eta, cand_loss)) = improved else { break };
                let rel = (loss - cand_loss) / loss.abs().max(1e-300);
                theta = cand;
                eta = cand_eta;
                loss = cand_loss;
                trace.push(loss);
                if eta.iter().any(|e| e.abs() > 30.0) {
                    return Err(Error::Separation("free columns separate the response".into()));
                }
                last_rel = rel;
            }
        }
    }

    let eta: Vec<f64> = (&z * &theta).iter().copied().collect();
    let mut beta = vec![0.0; d.p()];
    for (c, &j) in free.iter().enumerate() {
        beta[j] = theta[c + 1];
    }
    let deviance = family.deviance(&eta, y);
    let grads = gradients(d, &eta, family);
    Ok(NullModel {
        alpha: theta[0],
        beta,
        eta,
        deviance,
        gradients: grads,
        iterations,
    })
}

fn solve_spd(a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Ok(ch.solve(&b));
    }
    a.lu()
        .solve(&b)
        .ok_or_else(|| Error::Singular("unpenalized design is rank deficient".into()))
}
