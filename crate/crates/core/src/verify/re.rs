//! Restricted eigenvalues and irrepresentability on the Gram matrix.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

const LOCAL_ITERS: usize = 400;

/// Smallest eigenvalue of a symmetric matrix, with its eigenvector.
pub fn min_eigen(g: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let eig = SymmetricEigen::new(g.clone());
    let (k, val) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, v)| (k, *v))
        .expect("nonempty matrix");
    (val, eig.eigenvectors.column(k).into_owned())
}

/// Projects `v` onto `{ |v_S^c|_1 <= L sqrt(s) ||v_S|| }` by shrinking the
/// off-support block onto the L1 ball set by the on-support block, then
/// rescales to unit length.
fn to_cone(v: &mut DVector<f64>, in_s: &[bool], radius_factor: f64) -> bool {
    let on: f64 = v.iter().zip(in_s).filter(|(_, s)| **s).map(|(x, _)| x * x).sum::<f64>().sqrt();
    if on == 0.0 {
        return false;
    }
    let radius = radius_factor * on;
    let off: Vec<usize> = (0..v.len()).filter(|&j| !in_s[j]).collect();
    let l1: f64 = off.iter().map(|&j| v[j].abs()).sum();
    if l1 > radius {
        // Euclidean projection onto the L1 ball (sort-based threshold).
        let mut mags: Vec<f64> = off.iter().map(|&j| v[j].abs()).collect();
        mags.sort_by(|a, b| b.total_cmp(a));
        let mut cum = 0.0;
        let mut theta = 0.0;
        for (k, m) in mags.iter().enumerate() {
            cum += m;
            let t = (cum - radius) / (k + 1) as f64;
            if t < *m {
                theta = t;
            }
        }
        for &j in &off {
            v[j] = v[j].signum() * (v[j].abs() - theta).max(0.0);
        }
    }
    let norm = v.norm();
    if norm == 0.0 {
        return false;
    }
    *v /= norm;
    true
}

fn in_cone(v: &DVector<f64>, in_s: &[bool], radius_factor: f64) -> bool {
    let on: f64 = v.iter().zip(in_s).filter(|(_, s)| **s).map(|(x, _)| x * x).sum::<f64>().sqrt();
    let off: f64 = v.iter().zip(in_s).filter(|(_, s)| !**s).map(|(x, _)| x.abs()).sum();
    off <= radius_factor * on * (1.0 + 1e-12)
}

fn rayleigh(g: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    (v.transpose() * g * v)[(0, 0)] / v.norm_squared()
}

/// Projected gradient descent on the Rayleigh quotient inside the cone.
fn local_search(g: &DMatrix<f64>, mut v: DVector<f64>, in_s: &[bool], radius_factor: f64) -> f64 {
    if !to_cone(&mut v, in_s, radius_factor) {
        return f64::INFINITY;
    }
    let mut val = rayleigh(g, &v);
    let mut step = 0.5;
    for _ in 0..LOCAL_ITERS {
        let grad = 2.0 * (g * &v - &v * val);
        if grad.norm() < 1e-12 {
            break;
        }
        let mut improved = false;
        while step > 1e-10 {
            let mut cand = &v - &grad * step;
            if to_cone(&mut cand, in_s, radius_factor) {
                let cv = rayleigh(g, &cand);
                if cv < val - 1e-15 {
                    v = cand;
                    val = cv;
                    improved = true;
                    step *= 1.5;
                    break;
                }
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    debug_assert!(in_cone(&v, in_s, radius_factor));
    val
}

/// Estimates `min ||X v||^2 / (n ||v||^2)` over the cone
/// `|v_S^c|_1 <= L sqrt(s) ||v_S||` by multi-start local search.
///
/// Every evaluated point is feasible, so the result is an upper bound on
/// the true restricted eigenvalue. `L = 0` and `S = everything` are solved
/// exactly as eigenvalue problems.
pub fn restricted_eigenvalue(x: &DMatrix<f64>, support: &[usize], l: f64, restarts: usize, rng: &mut ChaCha8Rng) -> f64 {
    let n = x.nrows();
    let g = x.transpose() * x / n as f64;
    restricted_eigenvalue_gram(&g, support, l, restarts, rng)
}

/// As [`restricted_eigenvalue`] but from a precomputed `X'X / n`.
pub fn restricted_eigenvalue_gram(g: &DMatrix<f64>, support: &[usize], l: f64, restarts: usize, rng: &mut ChaCha8Rng) -> f64 {
    let p = g.nrows();
    let s = support.len();
    assert!(s > 0, "restricted eigenvalue needs a nonempty support");
    let mut in_s = vec![false; p];
    for &j in support {
        in_s[j] = true;
    }
    if s == p {
        return min_eigen(g).0;
    }
    let gss = DMatrix::from_fn(s, s, |a, b| g[(support[a], support[b])]);
    let (exact_inner, vs) = min_eigen(&gss);
    if l == 0.0 {
        return exact_inner;
    }
    let radius_factor = l * (s as f64).sqrt();
    let mut best = exact_inner;

    let mut starts: Vec<DVector<f64>> = Vec::new();
    // global minimum eigenvector mapped into the cone
    starts.push(min_eigen(g).1);
    // minimum eigenvector of the on-support block, padded
    let mut pad = DVector::zeros(p);
    for (a, &j) in support.iter().enumerate() {
        pad[j] = vs[a];
    }
    starts.push(pad);
    // sign patterns on the support, with the off-support block pointing
    // against the correlation
    if s <= 4 {
        for mask in 0..(1u32 << s) {
            let mut v = DVector::zeros(p);
            for (a, &j) in support.iter().enumerate() {
                v[j] = if mask >> a & 1 == 1 { -1.0 } else { 1.0 };
            }
            let push = g * &v;
            for j in 0..p {
                if !in_s[j] {
                    v[j] = -push[j];
                }
            }
            starts.push(v);
        }
    }
    for _ in 0..restarts {
        let mut v = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
        // random mix of on- and off-support mass
        let scale: f64 = rng.random::<f64>() * 2.0;
        for j in 0..p {
            if !in_s[j] {
                v[j] *= scale;
            }
        }
        starts.push(v);
    }
    for v in starts {
        best = best.min(local_search(g, v, &in_s, radius_factor));
    }
    best
}

/// `max_{j not in S} |x_j' X_S (X_S'X_S)^{-1} v|` and the attaining column.
pub fn irrepresentability(x: &DMatrix<f64>, support: &[usize], v: &[f64]) -> Result<(f64, Option<usize>)> {
    let p = x.ncols();
    if v.len() != support.len() {
        return Err(Error::LengthMismatch {
            expected: support.len(),
            got: v.len(),
        });
    }
    let xs = x.select_columns(support.iter());
    let ch = (xs.transpose() * &xs)
        .cholesky()
        .ok_or_else(|| Error::Singular("X_S'X_S is not positive definite".into()))?;
    let u = &xs * ch.solve(&DVector::from_column_slice(v));
    let mut best = (0.0, None);
    for j in 0..p {
        if support.contains(&j) {
            continue;
        }
        let val = x.column(j).dot(&u).abs();
        if best.1.is_none() || val > best.0 {
            best = (val, Some(j));
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(1)
    }

    #[test]
    fn isometry_has_unit_re() {
        let x = DMatrix::<f64>::identity(4, 4) * 2.0; // X'X / n = I
        for l in [0.0, 0.5, 3.0] {
            let v = restricted_eigenvalue(&x, &[0, 2], l, 5, &mut rng());
            assert!((v - 1.0).abs() < 1e-10, "{v}");
        }
    }

    #[test]
    fn single_column() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 2.0]);
        assert!((restricted_eigenvalue(&x, &[0], 1.0, 3, &mut rng()) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn matches_angular_grid_in_two_dimensions() {
        for (rho, l) in [(0.5, 1.0), (0.5, 0.3), (-0.7, 0.5), (0.9, 2.0)] {
            let g = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
            let est = restricted_eigenvalue_gram(&g, &[0], l, 10, &mut rng());
            let mut grid = f64::INFINITY;
            // fine grid plus the cone's edge directions
            let edge = l.atan().to_degrees();
            let angles = (0..36_000).map(|k| k as f64 / 100.0).chain([edge, -edge, 180.0 - edge, 180.0 + edge]);
            for deg in angles {
                let a = deg.to_radians();
                let (c, s) = (a.cos(), a.sin());
                if s.abs() <= l * c.abs() * (1.0 + 1e-12) {
                    grid = grid.min(c * c + 2.0 * rho * c * s + s * s);
                }
            }
            assert!((est - grid).abs() < 1e-4, "rho {rho} L {l}: {est} vs {grid}");
        }
    }

    #[test]
    fn monotone_in_cone_size() {
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let x = DMatrix::from_fn(30, 6, |_, _| r.sample::<f64, _>(StandardNormal));
        let mut prev = f64::INFINITY;
        for l in [0.0, 0.25, 0.5, 1.0, 2.0, 8.0] {
            let v = restricted_eigenvalue(&x, &[0, 1], l, 20, &mut rng());
            assert!(v <= prev + 1e-9, "L {l}: {v} > {prev}");
            prev = v;
        }
        let (lmin, _) = min_eigen(&(x.transpose() * &x / 30.0));
        assert!(prev >= lmin - 1e-9);
    }

    #[test]
    fn irrepresentability_cases() {
        let x = DMatrix::<f64>::identity(3, 3);
        assert_eq!(irrepresentability(&x, &[0], &[1.0]).unwrap().0, 0.0);
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, -1.0, -1.0]);
        let (v, j) = irrepresentability(&x, &[0], &[1.0]).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        assert_eq!(j, Some(1));
    }

    #[test]
    fn irrepresentability_matches_regression_form_and_is_homogeneous() {
        let mut r = ChaCha8Rng::seed_from_u64(4);
        let x = DMatrix::from_fn(25, 5, |_, _| r.sample::<f64, _>(StandardNormal));
        let s = [1, 3];
        let v = [0.4, -1.3];
        let (val, _) = irrepresentability(&x, &s, &v).unwrap();
        // regress x_j on X_S, dot the coefficients with v
        let xs = x.select_columns(s.iter());
        let mut best: f64 = 0.0;
        for j in [0, 2, 4] {
            let coef = xs.clone().svd(true, true).solve(&x.column(j).into_owned(), 1e-14).unwrap();
            best = best.max((coef[0] * v[0] + coef[1] * v[1]).abs());
        }
        assert!((val - best).abs() < 1e-10);
        let (scaled, _) = irrepresentability(&x, &s, &[2.5 * v[0], 2.5 * v[1]]).unwrap();
        assert!((scaled - 2.5 * val).abs() < 1e-10);
    }
}
