//! L0-penalized least-squares oracles: exhaustive search for small `p` and
//! nested-prefix search for designs with a natural column order.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest `p` accepted by [`l0_exhaustive`].
pub const MAX_EXHAUSTIVE_P: usize = 18;
/// Squared pivot (relative to the column's squared norm) below which a
/// column counts as linearly dependent on the ones before it.
const RANK_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct L0Solution {
    pub support: Vec<usize>,
    /// Least-squares coefficients on the support, zero elsewhere.
    pub beta: Vec<f64>,
    pub rss: f64,
    /// Penalized objective value at the optimum.
    pub objective: f64,
    /// Per-nonzero penalty on the objective's own scale.
    pub penalty: f64,
    /// Prefix searches stop here when a column is dependent on earlier ones.
    pub rank_limit: Option<usize>,
}

fn gram(x: &DMatrix<f64>, y: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    (x.transpose() * x, x.transpose() * y)
}

/// Restricted least squares on `support` through the Gram matrix. Returns
/// `None` when the subset is numerically rank deficient.
pub(crate) fn subset_ls(g: &DMatrix<f64>, b: &DVector<f64>, yy: f64, support: &[usize]) -> Option<(DVector<f64>, f64)> {
    let s = support.len();
    if s == 0 {
        return Some((DVector::zeros(0), yy));
    }
    let gs = DMatrix::from_fn(s, s, |a, c| g[(support[a], support[c])]);
    let bs = DVector::from_fn(s, |a, _| b[support[a]]);
    let ch = gs.clone().cholesky()?;
    let l = ch.l();
    for a in 0..s {
        if l[(a, a)] * l[(a, a)] <= RANK_TOL * gs[(a, a)] {
            return None;
        }
    }
    let coef = ch.solve(&bs);
    let rss = (yy - bs.dot(&coef)).max(0.0);
    Some((coef, rss))
}

/// Global minimizer of `0.5 ||y - X b||^2 + n nu |supp(b)|` by enumerating
/// every support (no intercept).
pub fn l0_exhaustive(x: &DMatrix<f64>, y: &[f64], nu: f64) -> Result<L0Solution> {
    let (n, p) = x.shape();
    if p > MAX_EXHAUSTIVE_P {
        return Err(Error::TooLarge { p, max: MAX_EXHAUSTIVE_P });
    }
    if y.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: y.len() });
    }
    let yv = DVector::from_column_slice(y);
    let (g, b) = gram(x, &yv);
    let yy = yv.dot(&yv);
    let pen = n as f64 * nu;

    let mut best: Option<(f64, Vec<usize>, DVector<f64>, f64)> = None;
    for mask in 0u32..(1u32 << p) {
        let support: Vec<usize> = (0..p).filter(|j| mask >> j & 1 == 1).collect();
        let Some((coef, rss)) = subset_ls(&g, &b, yy, &support) else { continue };
        let obj = 0.5 * rss + pen * support.len() as f64;
        if best.as_ref().is_none_or(|(o, ..)| obj < *o) {
            best = Some((obj, support, coef, rss));
        }
    }
    let (objective, support, coef, rss) = best.expect("empty support is always feasible");
    let mut beta = vec![0.0; p];
    for (a, &j) in support.iter().enumerate() {
        beta[j] = coef[a];
    }
    Ok(L0Solution {
        support,
        beta,
        rss,
        objective,
        penalty: pen,
        rank_limit: None,
    })
}

/// Minimizes `||y - X b||^2 + 2 sigma2 k` over prefix supports `{0..k}`.
///
/// Prefix fits use modified Gram-Schmidt with re-orthogonalization. A
/// column that is numerically dependent on the earlier ones ends the search
/// (every longer prefix contains it) and is logged.
pub fn l0_nested(x: &DMatrix<f64>, y: &[f64], sigma2: f64) -> Result<L0Solution> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: y.len() });
    }
    let mut r = y.to_vec();
    let mut q: Vec<Vec<f64>> = Vec::new();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
    let mut rss_k = vec![dot(&r, &r)];
    let mut rank_limit = None;

    for j in 0..p {
        let mut v: Vec<f64> = x.column(j).iter().copied().collect();
        let norm0 = dot(&v, &v);
        for _ in 0..2 {
            for qk in &q {
                let c = dot(qk, &v);
                for (vi, qi) in v.iter_mut().zip(qk) {
                    *vi -= c * qi;
                }
            }
        }
        let norm = dot(&v, &v);
        if !(norm > RANK_TOL * norm0) {
            log::warn!("prefix of {} columns is rank deficient; longer prefixes skipped", j + 1);
            rank_limit = Some(j);
            break;
        }
        let inv = 1.0 / norm.sqrt();
        v.iter_mut().for_each(|vi| *vi *= inv);
        let c = dot(&v, &r);
        for (ri, vi) in r.iter_mut().zip(&v) {
            *ri -= c * vi;
        }
        rss_k.push(dot(&r, &r));
        q.push(v);
    }

    let (k, objective) = rss_k
        .iter()
        .enumerate()
        .map(|(k, rss)| (k, rss + 2.0 * sigma2 * k as f64))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("prefix 0 always present");

    let support: Vec<usize> = (0..k).collect();
    let mut beta = vec![0.0; p];
    if k > 0 {
        let xs = x.columns(0, k).into_owned();
        let coef = xs
            .clone()
            .svd(true, true)
            .solve(&DVector::from_column_slice(y), 1e-12)
            .map_err(|e| Error::Singular(e.to_string()))?;
        for j in 0..k {
            beta[j] = coef[j];
        }
    }
    Ok(L0Solution {
        support,
        beta,
        rss: rss_k[k],
        objective,
        penalty: 2.0 * sigma2,
        rank_limit,
    })
}

/// Objective of [`l0_nested`] for every prefix length that was reachable.
pub fn nested_objectives(x: &DMatrix<f64>, y: &[f64], sigma2: f64) -> Vec<f64> {
    let yv = DVector::from_column_slice(y);
    let (g, b) = gram(x, &yv);
    let yy = yv.dot(&yv);
    let mut out = Vec::new();
    for k in 0..=x.ncols() {
        let support: Vec<usize> = (0..k).collect();
        match subset_ls(&g, &b, yy, &support) {
            Some((_, rss)) => out.push(rss + 2.0 * sigma2 * k as f64),
            None => break,
        }
    }
    out
}
