//! Thresholding and proximal operators.
//!
//! Covers plain soft thresholding, the row-grouped mixed l1,2 threshold,
//! singular value thresholding, and the reference-based reweighted l1-l1
//! proximal operator together with a brute-force verification oracle.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::svd::{svd, SvdFactors};

/// Scalar parameters of the reweighted l1-l1 operator.
///
/// The operator maps `x` to the minimizer of
/// `a2*|q*u| + a3*|q*(u - s_p)| + (u - x)^2 / 2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProxParams {
    pub a2: f64,
    pub a3: f64,
    pub q: f64,
    pub s_p: f64,
}

impl ProxParams {
    pub fn new(a2: f64, a3: f64, q: f64, s_p: f64) -> Result<Self> {
        if !(a2.is_finite() && a3.is_finite() && q.is_finite() && s_p.is_finite()) {
            return Err(Error::NonFinite("prox parameters".into()));
        }
        if a2 < 0.0 || a3 < 0.0 {
            return Err(Error::param(format!(
                "prox thresholds must be nonnegative, got a2={a2}, a3={a3}"
            )));
        }
        Ok(ProxParams { a2, a3, q, s_p })
    }

    /// Effective thresholds `(a2*|q|, a3*|q|)`.
    pub fn thresholds(&self) -> (f64, f64) {
        (self.a2 * self.q.abs(), self.a3 * self.q.abs())
    }
}

/// Which linear piece of the reweighted operator produced the output.
/// `Mid` is the segment between the two plateaus; its expression depends on
/// the sign of `s_p`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum ProxBranch {
    Upper = 0,
    RefPlateau = 1,
    Mid = 2,
    ZeroPlateau = 3,
    Lower = 4,
}

impl ProxBranch {
    pub fn from_u8(tag: u8) -> Result<Self> {
        Ok(match tag {
            0 => ProxBranch::Upper,
            1 => ProxBranch::RefPlateau,
            2 => ProxBranch::Mid,
            3 => ProxBranch::ZeroPlateau,
            4 => ProxBranch::Lower,
            _ => return Err(Error::param(format!("unknown prox branch tag {tag}"))),
        })
    }
}

/// Scalar soft threshold `sign(x) * max(|x| - tau, 0)`.
pub fn soft_threshold(x: f64, tau: f64) -> Result<f64> {
    if tau < 0.0 || !tau.is_finite() {
        return Err(Error::param(format!("soft threshold needs tau >= 0, got {tau}")));
    }
    Ok(soft_threshold_raw(x, tau))
}

#[inline]
pub(crate) fn soft_threshold_raw(x: f64, tau: f64) -> f64 {
    x.signum() * (x.abs() - tau).max(0.0)
}

/// Row-grouped threshold: each row `s` maps to `s * max(1 - tau/||s||, 0)`.
pub fn mixed_l12_threshold(x: &Array2<f64>, tau: f64) -> Result<Array2<f64>> {
    if tau < 0.0 || !tau.is_finite() {
        return Err(Error::param(format!("mixed l1,2 threshold needs tau >= 0, got {tau}")));
    }
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        let factor = if norm > 0.0 { (1.0 - tau / norm).max(0.0) } else { 0.0 };
        row.mapv_inplace(|v| v * factor);
    }
    Ok(out)
}

/// Sum over rows of row l2 norms (the mixed l1,2 norm).
pub fn mixed_l12_norm(x: &Array2<f64>) -> f64 {
    x.rows()
        .into_iter()
        .map(|row| row.iter().map(|v| v * v).sum::<f64>().sqrt())
        .sum()
}

/// Singular value thresholding: soft-thresholds the singular values of `x`.
pub fn svt(x: &Array2<f64>, tau: f64) -> Result<Array2<f64>> {
    Ok(svt_with_factors(x, tau)?.0)
}

/// As [`svt`], also returning the SVD of the input (reused by callers that
/// need the spectrum, e.g. for backprop or nuclear-norm bookkeeping).
pub fn svt_with_factors(x: &Array2<f64>, tau: f64) -> Result<(Array2<f64>, SvdFactors)> {
    if tau < 0.0 || !tau.is_finite() {
        return Err(Error::param(format!("svt needs tau >= 0, got {tau}")));
    }
    let factors = svd(x)?;
    let shrunk = factors.sigma.mapv(|s| (s - tau).max(0.0));
    let scaled = &factors.u * &shrunk;
    Ok((scaled.dot(&factors.v.t()), factors))
}

/// Closed-form reweighted l1-l1 operator, also reporting the active branch.
///
/// The five pieces are evaluated in their printed order for `s_p >= 0` and
/// `s_p < 0`; adjacent pieces agree at the breakpoints, so boundary ties
/// cannot change the value.
pub fn reweighted_l1l1_prox_branch(x: f64, p: &ProxParams) -> (f64, ProxBranch) {
    let (t2, t3) = p.thresholds();
    let s_p = p.s_p;
    if s_p >= 0.0 {
        if x > s_p + t2 + t3 {
            (x - t2 - t3, ProxBranch::Upper)
        } else if x >= s_p + t2 - t3 {
            (s_p, ProxBranch::RefPlateau)
        } else if x > t2 - t3 {
            (x - t2 + t3, ProxBranch::Mid)
        } else if x >= -t2 - t3 {
            (0.0, ProxBranch::ZeroPlateau)
        } else {
            (x + t2 + t3, ProxBranch::Lower)
        }
    } else if x > t2 + t3 {
        (x - t2 - t3, ProxBranch::Upper)
    } else if x >= -t2 + t3 {
        (0.0, ProxBranch::ZeroPlateau)
    } else if x > s_p - t2 + t3 {
        (x + t2 - t3, ProxBranch::Mid)
    } else if x >= s_p - t2 - t3 {
        (s_p, ProxBranch::RefPlateau)
    } else {
        (x + t2 + t3, ProxBranch::Lower)
    }
}

/// Closed-form reweighted l1-l1 proximal operator.
pub fn reweighted_l1l1_prox(x: f64, p: &ProxParams) -> f64 {
    reweighted_l1l1_prox_branch(x, p).0
}

/// Re-evaluates the operator output from a recorded branch tag.
pub fn prox_branch_value(x: f64, p: &ProxParams, branch: ProxBranch) -> f64 {
    let (t2, t3) = p.thresholds();
    match branch {
        ProxBranch::Upper => x - t2 - t3,
        ProxBranch::RefPlateau => p.s_p,
        ProxBranch::Mid => {
            if p.s_p >= 0.0 {
                x - t2 + t3
            } else {
                x + t2 - t3
            }
        }
        ProxBranch::ZeroPlateau => 0.0,
        ProxBranch::Lower => x + t2 + t3,
    }
}

/// Partial derivatives of the operator output on a fixed branch.
#[derive(Clone, Copy, Debug, Default)]
pub struct ProxPartials {
    pub dx: f64,
    pub da2: f64,
    pub da3: f64,
    pub dq: f64,
    pub ds_p: f64,
}

/// Per-branch partials of the output with respect to `(x, a2, a3, q, s_p)`.
/// `|q|` contributes through `sign(q)`, taken as 0 at `q = 0`.
pub fn prox_branch_partials(p: &ProxParams, branch: ProxBranch) -> ProxPartials {
    let qa = p.q.abs();
    let qs = if p.q > 0.0 {
        1.0
    } else if p.q < 0.0 {
        -1.0
    } else {
        0.0
    };
    match branch {
        ProxBranch::Upper => ProxPartials {
            dx: 1.0,
            da2: -qa,
            da3: -qa,
            dq: -(p.a2 + p.a3) * qs,
            ds_p: 0.0,
        },
        ProxBranch::RefPlateau => ProxPartials {
            ds_p: 1.0,
            ..Default::default()
        },
        ProxBranch::Mid => {
            let sign = if p.s_p >= 0.0 { -1.0 } else { 1.0 };
            ProxPartials {
                dx: 1.0,
                da2: sign * qa,
                da3: -sign * qa,
                dq: sign * (p.a2 - p.a3) * qs,
                ds_p: 0.0,
            }
        }
        ProxBranch::ZeroPlateau => ProxPartials::default(),
        ProxBranch::Lower => ProxPartials {
            dx: 1.0,
            da2: qa,
            da3: qa,
            dq: (p.a2 + p.a3) * qs,
            ds_p: 0.0,
        },
    }
}

fn check_prox_matrix_shapes(
    x: &Array2<f64>,
    a2: f64,
    a3: f64,
    q: &Array1<f64>,
    s_p: &Array2<f64>,
) -> Result<()> {
    if a2 < 0.0 || a3 < 0.0 || !a2.is_finite() || !a3.is_finite() {
        return Err(Error::param(format!(
            "prox thresholds must be finite and nonnegative, got a2={a2}, a3={a3}"
        )));
    }
    if x.dim() != s_p.dim() {
        return Err(Error::shape(format!(
            "prox input {:?} vs reference {:?}",
            x.dim(),
            s_p.dim()
        )));
    }
    if q.len() != x.nrows() {
        return Err(Error::shape(format!(
            "weight vector length {} vs {} rows",
            q.len(),
            x.nrows()
        )));
    }
    Ok(())
}

/// Entry-wise reweighted operator: entry `(i, j)` uses weight `q[i]` and
/// reference `s_p[(i, j)]`.
pub fn reweighted_l1l1_prox_matrix(
    x: &Array2<f64>,
    a2: f64,
    a3: f64,
    q: &Array1<f64>,
    s_p: &Array2<f64>,
) -> Result<Array2<f64>> {
    Ok(reweighted_l1l1_prox_matrix_branches(x, a2, a3, q, s_p)?.0)
}

/// As [`reweighted_l1l1_prox_matrix`], also returning the branch tag of
/// every entry for exact replay during backpropagation.
pub fn reweighted_l1l1_prox_matrix_branches(
    x: &Array2<f64>,
    a2: f64,
    a3: f64,
    q: &Array1<f64>,
    s_p: &Array2<f64>,
) -> Result<(Array2<f64>, Array2<u8>)> {
    check_prox_matrix_shapes(x, a2, a3, q, s_p)?;
    let (n, m) = x.dim();
    let mut out = Array2::zeros((n, m));
    let mut tags = Array2::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            let p = ProxParams {
                a2,
                a3,
                q: q[i],
                s_p: s_p[[i, j]],
            };
            let (value, branch) = reweighted_l1l1_prox_branch(x[[i, j]], &p);
            out[[i, j]] = value;
            tags[[i, j]] = branch as u8;
        }
    }
    Ok((out, tags))
}

/// The scalar objective the operator minimizes.
pub fn prox_objective(u: f64, x: f64, p: &ProxParams) -> f64 {
    let (t2, t3) = p.thresholds();
    t2 * u.abs() + t3 * (u - p.s_p).abs() + 0.5 * (u - x) * (u - x)
}

/// Brute-force minimizer of the operator objective: multilevel grid search
/// over `[-grid_halfwidth, grid_halfwidth]` refined `refinement_levels`
/// times, cross-checked against the analytic candidate set
/// `{0, s_p, x +- (a2 +- a3)|q|}`. Independent of the closed form above.
pub fn prox_brute_oracle(
    x: f64,
    p: &ProxParams,
    grid_halfwidth: f64,
    refinement_levels: u32,
) -> f64 {
    const POINTS: usize = 17;
    let mut lo = -grid_halfwidth;
    let mut hi = grid_halfwidth;
    let mut best_u = 0.0;
    for _ in 0..refinement_levels {
        let step = (hi - lo) / (POINTS - 1) as f64;
        let mut arg = 0;
        let mut level_best = f64::INFINITY;
        for idx in 0..POINTS {
            let u = lo + step * idx as f64;
            let f = prox_objective(u, x, p);
            if f < level_best {
                level_best = f;
                arg = idx;
            }
        }
        best_u = lo + step * arg as f64;
        // Convexity: the minimizer lies in the cells adjacent to the argmin.
        let new_lo = lo + step * arg.saturating_sub(1) as f64;
        let new_hi = lo + step * (arg + 1).min(POINTS - 1) as f64;
        lo = new_lo;
        hi = new_hi;
        if hi - lo < 1e-15 {
            break;
        }
    }
    // The minimizer of a piecewise-linear-plus-quadratic objective is always
    // a kink or a shifted-quadratic vertex; checking those analytically makes
    // the oracle exact up to roundoff.
    let (t2, t3) = p.thresholds();
    let candidates = [
        best_u,
        0.0,
        p.s_p,
        x - t2 - t3,
        x - t2 + t3,
        x + t2 - t3,
        x + t2 + t3,
    ];
    // `<=` so an analytic candidate beats a grid point that ties at f64
    // resolution (the objective is strictly convex: ties mean same point).
    let mut out = best_u;
    let mut out_f = prox_objective(best_u, x, p);
    for &u in &candidates {
        let f = prox_objective(u, x, p);
        if f <= out_f {
            out_f = f;
            out = u;
        }
    }
    out
}

/// Distance from zero to the subdifferential of the objective at `u`.
/// Zero (up to tolerance) certifies that `u` minimizes the objective.
pub fn subgradient_residual(u: f64, x: f64, p: &ProxParams) -> f64 {
    let (t2, t3) = p.thresholds();
    let interval = |z: f64, t: f64| -> (f64, f64) {
        if z > 0.0 {
            (t, t)
        } else if z < 0.0 {
            (-t, -t)
        } else {
            (-t, t)
        }
    };
    let (lo1, hi1) = interval(u, t2);
    let (lo2, hi2) = interval(u - p.s_p, t3);
    let lo = (u - x) + lo1 + lo2;
    let hi = (u - x) + hi1 + hi2;
    if lo <= 0.0 && 0.0 <= hi {
        0.0
    } else {
        lo.abs().min(hi.abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::frobenius_norm;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_params(rng: &mut ChaCha8Rng) -> ProxParams {
        ProxParams {
            a2: rng.random::<f64>() * 1.5,
            a3: rng.random::<f64>() * 1.5,
            q: rng.random::<f64>() * 4.0 - 2.0,
            s_p: rng.random::<f64>() * 4.0 - 2.0,
        }
    }

    fn oracle_halfwidth(x: f64, p: &ProxParams) -> f64 {
        x.abs() + p.s_p.abs() + (p.a2 + p.a3) * p.q.abs() + 1.0
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(0.5, 0.2).unwrap(), 0.3);
        assert_eq!(soft_threshold(-0.1, 0.2).unwrap(), 0.0);
        assert_eq!(soft_threshold(0.0, 7.0).unwrap(), 0.0);
        assert!(soft_threshold(1.0, -0.1).is_err());
    }

    #[test]
    fn mixed_l12_examples() {
        let x = array![[3.0, 4.0]];
        let dead = mixed_l12_threshold(&x, 5.0).unwrap();
        assert_eq!(dead, array![[0.0, 0.0]]);
        let id = mixed_l12_threshold(&x, 0.0).unwrap();
        assert_eq!(id, x);
        let half = mixed_l12_threshold(&x, 2.5).unwrap();
        assert!((half[[0, 0]] - 1.5).abs() < 1e-15);
        assert!((half[[0, 1]] - 2.0).abs() < 1e-15);
        // Zero rows stay zero.
        let z = mixed_l12_threshold(&Array2::zeros((3, 2)), 1.0).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mixed_l12_matches_2d_numerical_minimization() {
        // min_u tau*||u|| + 0.5*||u - x||^2 over a fine polar grid.
        let x = [3.0, 4.0];
        let tau = 2.5;
        let mut best = (f64::INFINITY, [0.0, 0.0]);
        for ir in 0..=6000 {
            let r = ir as f64 * 1e-3;
            // The minimizer is colinear with x; still scan a few angles.
            for ia in -50..=50 {
                let theta = (4.0_f64).atan2(3.0) + ia as f64 * 1e-4;
                let u = [r * theta.cos(), r * theta.sin()];
                let f = tau * r
                    + 0.5 * ((u[0] - x[0]).powi(2) + (u[1] - x[1]).powi(2));
                if f < best.0 {
                    best = (f, u);
                }
            }
        }
        assert!((best.1[0] - 1.5).abs() < 2e-3);
        assert!((best.1[1] - 2.0).abs() < 2e-3);
    }

    #[test]
    fn svt_examples() {
        let x = array![[3.0, 0.0], [0.0, 1.0]];
        let y = svt(&x, 2.0).unwrap();
        assert!(frobenius_norm(&(&y - &array![[1.0, 0.0], [0.0, 0.0]])) < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Array2::from_shape_fn((5, 4), |_| rng.random::<f64>() - 0.5);
        let y = svt(&x, 0.0).unwrap();
        assert!(frobenius_norm(&(&y - &x)) < 1e-12 * frobenius_norm(&x).max(1.0));
    }

    #[test]
    fn svt_matches_gram_matrix_oracle() {
        // Independent route: eigen-decompose x^T x by brute solving the
        // characteristic problem via our jacobi on the symmetric matrix is
        // circular, so instead confirm svt singular values against
        // soft-thresholded singular values computed from sqrt of gram
        // eigenvalues obtained by power iteration with deflation.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Array2::from_shape_fn((6, 4), |_| rng.random::<f64>() - 0.5);
        let tau = 0.5;
        let y = svt(&x, tau).unwrap();

        // Power iteration with deflation on g = x^T x.
        let mut g = x.t().dot(&x);
        let mut eigs = Vec::new();
        for _ in 0..4 {
            let mut v = Array1::from_elem(4, 1.0_f64);
            let mut lambda = 0.0;
            for _ in 0..20_000 {
                let gv = g.dot(&v);
                let norm = gv.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm < 1e-300 {
                    lambda = 0.0;
                    break;
                }
                v = gv / norm;
                lambda = v.dot(&g.dot(&v));
            }
            eigs.push(lambda.max(0.0));
            let outer = Array2::from_shape_fn((4, 4), |(i, j)| v[i] * v[j]);
            g = &g - &(lambda * &outer);
        }
        eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let expected: Vec<f64> = eigs.iter().map(|e| (e.sqrt() - tau).max(0.0)).collect();

        let got = svd(&y).unwrap();
        for (k, &e) in expected.iter().enumerate() {
            assert!(
                (got.sigma[k] - e).abs() < 1e-8,
                "singular value {k}: {} vs oracle {}",
                got.sigma[k],
                e
            );
        }
    }

    #[test]
    fn svt_singular_values_are_soft_thresholded() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Array2::from_shape_fn((8, 6), |_| rng.random::<f64>() * 2.0 - 1.0);
        let tau = 0.4;
        let before = svd(&x).unwrap();
        let after = svd(&svt(&x, tau).unwrap()).unwrap();
        for k in 0..6 {
            let expected = soft_threshold_raw(before.sigma[k], tau);
            assert!((after.sigma[k] - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn prox_paper_plateau_example() {
        // s_p + a2 - a3 = 1.1 <= 1.2 <= 1.3 = s_p + a2 + a3: reference plateau.
        let p = ProxParams::new(0.2, 0.1, 1.0, 1.0).unwrap();
        let (v, b) = reweighted_l1l1_prox_branch(1.2, &p);
        assert_eq!(v, 1.0);
        assert_eq!(b, ProxBranch::RefPlateau);
    }

    #[test]
    fn prox_zero_plateau_contains_zero() {
        for &(a2, a3) in &[(0.3, 0.1), (0.5, 0.5), (0.2, 0.0)] {
            let p = ProxParams::new(a2, a3, 1.0, 1.0).unwrap();
            assert_eq!(reweighted_l1l1_prox(0.0, &p), 0.0);
        }
    }

    #[test]
    fn prox_shifted_linear_example() {
        let p = ProxParams::new(0.2, 0.1, 1.0, 1.0).unwrap();
        let v = reweighted_l1l1_prox(2.0, &p);
        assert!((v - 1.7).abs() < 1e-15);
        let oracle = prox_brute_oracle(2.0, &p, oracle_halfwidth(2.0, &p), 60);
        assert!((v - oracle).abs() < 1e-6);
    }

    #[test]
    fn prox_reduces_to_soft_threshold_when_a3_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let x = rng.random::<f64>() * 8.0 - 4.0;
            let a2 = rng.random::<f64>();
            let s_p = rng.random::<f64>() * 4.0 - 2.0;
            let p = ProxParams::new(a2, 0.0, 1.0, s_p).unwrap();
            assert_eq!(reweighted_l1l1_prox(x, &p), soft_threshold_raw(x, a2));
        }
    }

    #[test]
    fn prox_reduces_to_soft_threshold_when_reference_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let x = rng.random::<f64>() * 8.0 - 4.0;
            let a2 = rng.random::<f64>();
            let a3 = rng.random::<f64>();
            let q = rng.random::<f64>() * 4.0 - 2.0;
            let p = ProxParams::new(a2, a3, q, 0.0).unwrap();
            let expected = soft_threshold_raw(x, (a2 + a3) * q.abs());
            assert!((reweighted_l1l1_prox(x, &p) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn prox_matches_brute_oracle_both_regimes() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for trial in 0..2000 {
            let p = random_params(&mut rng);
            let x = rng.random::<f64>() * 12.0 - 6.0;
            let closed = reweighted_l1l1_prox(x, &p);
            let oracle = prox_brute_oracle(x, &p, oracle_halfwidth(x, &p), 60);
            assert!(
                (closed - oracle).abs() < 1e-6,
                "trial {trial}: closed {closed} vs oracle {oracle} at x={x}, p={p:?}"
            );
        }
    }

    #[test]
    fn prox_optimality_certificate() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..2000 {
            let p = random_params(&mut rng);
            let x = rng.random::<f64>() * 12.0 - 6.0;
            let u = reweighted_l1l1_prox(x, &p);
            assert!(subgradient_residual(u, x, &p) < 1e-9);
        }
    }

    #[test]
    fn prox_continuous_at_breakpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..500 {
            let p = random_params(&mut rng);
            let (t2, t3) = p.thresholds();
            let breakpoints = if p.s_p >= 0.0 {
                [p.s_p + t2 + t3, p.s_p + t2 - t3, t2 - t3, -t2 - t3]
            } else {
                [t2 + t3, -t2 + t3, p.s_p - t2 + t3, p.s_p - t2 - t3]
            };
            for &b in &breakpoints {
                let left = reweighted_l1l1_prox(b - 1e-9, &p);
                let right = reweighted_l1l1_prox(b + 1e-9, &p);
                assert!(
                    (left - right).abs() < 1e-8,
                    "discontinuity at breakpoint {b} for {p:?}"
                );
            }
        }
    }

    #[test]
    fn prox_monotone_and_nonexpansive() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let p = random_params(&mut rng);
            let x = rng.random::<f64>() * 10.0 - 5.0;
            let y = rng.random::<f64>() * 10.0 - 5.0;
            let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
            let plo = reweighted_l1l1_prox(lo, &p);
            let phi = reweighted_l1l1_prox(hi, &p);
            assert!(plo <= phi + 1e-15, "monotonicity violated for {p:?}");
            assert!(
                (phi - plo).abs() <= (hi - lo) + 1e-12,
                "expansiveness violated for {p:?}"
            );
        }
    }

    #[test]
    fn prox_plateau_fixed_points_are_exact() {
        let p = ProxParams::new(0.4, 0.2, 1.5, 0.8).unwrap();
        let (t2, _t3) = p.thresholds();
        // Anywhere strictly inside the reference plateau returns s_p itself.
        let x = p.s_p + t2; // center of [s_p + t2 - t3, s_p + t2 + t3]
        assert_eq!(reweighted_l1l1_prox(x, &p), p.s_p);
        // And inside the zero plateau returns exactly zero.
        assert_eq!(reweighted_l1l1_prox(0.0, &p), 0.0);
    }

    #[test]
    fn prox_oracle_trivial_cases() {
        let p = ProxParams::new(0.0, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(prox_brute_oracle(0.0, &p, 1.0, 40), 0.0);
        let p = ProxParams::new(0.0, 0.0, 1.0, 0.5).unwrap();
        let x = 1.234;
        assert!((prox_brute_oracle(x, &p, oracle_halfwidth(x, &p), 60) - x).abs() < 1e-9);
    }

    #[test]
    fn prox_matrix_elementwise_equivalence() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = Array2::from_shape_fn((8, 3), |_| rng.random::<f64>() * 4.0 - 2.0);
        let s_p = Array2::from_shape_fn((8, 3), |_| rng.random::<f64>() * 2.0 - 1.0);
        let q = Array1::from_shape_fn(8, |_| rng.random::<f64>() * 2.0 - 1.0);
        let (a2, a3) = (0.3, 0.2);
        let out = reweighted_l1l1_prox_matrix(&x, a2, a3, &q, &s_p).unwrap();
        for i in 0..8 {
            for j in 0..3 {
                let p = ProxParams::new(a2, a3, q[i], s_p[[i, j]]).unwrap();
                assert_eq!(out[[i, j]], reweighted_l1l1_prox(x[[i, j]], &p));
            }
        }
    }

    #[test]
    fn prox_matrix_of_own_reference_with_a2_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Array2::from_shape_fn((6, 4), |_| rng.random::<f64>() * 2.0 - 1.0);
        let q = Array1::ones(6);
        let out = reweighted_l1l1_prox_matrix(&x, 0.0, 0.7, &q, &x).unwrap();
        assert_eq!(out, x);
        let z = Array2::zeros((6, 4));
        let out = reweighted_l1l1_prox_matrix(&z, 0.5, 0.7, &q, &z).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn prox_matrix_shape_errors() {
        let x = Array2::zeros((4, 2));
        let q = Array1::ones(3);
        let s_p = Array2::zeros((4, 2));
        assert!(reweighted_l1l1_prox_matrix(&x, 0.1, 0.1, &q, &s_p).is_err());
        let q = Array1::ones(4);
        let s_p = Array2::zeros((4, 3));
        assert!(reweighted_l1l1_prox_matrix(&x, 0.1, 0.1, &q, &s_p).is_err());
    }

    #[test]
    fn branch_replay_reproduces_forward_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..500 {
            let p = random_params(&mut rng);
            let x = rng.random::<f64>() * 10.0 - 5.0;
            let (v, b) = reweighted_l1l1_prox_branch(x, &p);
            assert_eq!(prox_branch_value(x, &p, b), v);
        }
    }

    #[test]
    fn svt_is_nonexpansive() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let x = Array2::from_shape_fn((6, 5), |_| rng.random::<f64>() - 0.5);
            let y = Array2::from_shape_fn((6, 5), |_| rng.random::<f64>() - 0.5);
            let tau = rng.random::<f64>();
            let dx = frobenius_norm(&(&svt(&x, tau).unwrap() - &svt(&y, tau).unwrap()));
            let dxy = frobenius_norm(&(&x - &y));
            assert!(dx <= dxy + 1e-10);
        }
    }

    #[test]
    fn scalar_operators_nonexpansive() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..1000 {
            let x = rng.random::<f64>() * 10.0 - 5.0;
            let y = rng.random::<f64>() * 10.0 - 5.0;
            let tau = rng.random::<f64>() * 2.0;
            let d = (soft_threshold_raw(x, tau) - soft_threshold_raw(y, tau)).abs();
            assert!(d <= (x - y).abs() + 1e-15);
        }
    }
}
