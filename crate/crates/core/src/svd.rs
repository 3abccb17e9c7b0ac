//! Thin singular value decomposition via one-sided Jacobi rotations.
//!
//! Self-contained and deterministic: no BLAS/LAPACK, fixed sweep order, and
//! a fixed sign convention (the largest-magnitude entry of every left
//! singular vector is nonnegative).

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::tensor::ensure_finite;

const MAX_SWEEPS: usize = 60;
const ORTHO_TOL: f64 = 1e-15;

/// Thin SVD factors `x = u * diag(sigma) * v^T` with `p = min(n, m)`.
///
/// `u` is `n x p` and `v` is `m x p`, both with orthonormal columns;
/// `sigma` is nonnegative and non-increasing.
#[derive(Clone, Debug)]
pub struct SvdFactors {
    pub u: Array2<f64>,
    pub sigma: Array1<f64>,
    pub v: Array2<f64>,
}

impl SvdFactors {
    pub fn reconstruct(&self) -> Array2<f64> {
        let scaled = &self.u * &self.sigma; // broadcasts sigma over rows
        scaled.dot(&self.v.t())
    }

    pub fn nuclear_norm(&self) -> f64 {
        self.sigma.sum()
    }
}

/// Computes the thin SVD of `x`.
///
/// Errors with [`Error::Numerical`] if the Jacobi sweeps do not converge
/// within the fixed budget.
pub fn svd(x: &Array2<f64>) -> Result<SvdFactors> {
    ensure_finite(x, "svd input")?;
    let (n, m) = x.dim();
    if n == 0 || m == 0 {
        return Err(Error::shape("svd of an empty matrix"));
    }
    if n >= m {
        let (u, sigma, v) = jacobi_tall(x.clone())?;
        Ok(fix_signs(SvdFactors { u, sigma, v }))
    } else {
        // Factor the transpose and swap the roles of u and v.
        let (u, sigma, v) = jacobi_tall(x.t().to_owned())?;
        Ok(fix_signs(SvdFactors { u: v, sigma, v: u }))
    }
}

/// One-sided Jacobi on a tall matrix `a` (n >= p). Orthogonalizes the
/// columns of `a` in place while accumulating the rotations into `v`; at
/// convergence the column norms are the singular values.
fn jacobi_tall(mut a: Array2<f64>) -> Result<(Array2<f64>, Array1<f64>, Array2<f64>)> {
    let (n, p) = a.dim();
    let mut v: Array2<f64> = Array2::eye(p);

    let mut converged = false;
    for _sweep in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..p {
            for j in (i + 1)..p {
                let mut aii = 0.0;
                let mut ajj = 0.0;
                let mut aij = 0.0;
                for r in 0..n {
                    let (ci, cj) = (a[[r, i]], a[[r, j]]);
                    aii += ci * ci;
                    ajj += cj * cj;
                    aij += ci * cj;
                }
                if aii == 0.0 || ajj == 0.0 {
                    continue;
                }
                if aij.abs() <= ORTHO_TOL * (aii * ajj).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (ajj - aii) / (2.0 * aij);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..n {
                    let (ci, cj) = (a[[r, i]], a[[r, j]]);
                    a[[r, i]] = c * ci - s * cj;
                    a[[r, j]] = s * ci + c * cj;
                }
                for r in 0..p {
                    let (vi, vj) = (v[[r, i]], v[[r, j]]);
                    v[[r, i]] = c * vi - s * vj;
                    v[[r, j]] = s * vi + c * vj;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::numerical(format!(
            "one-sided jacobi svd did not converge within {MAX_SWEEPS} sweeps"
        )));
    }

    let mut norms: Vec<f64> = (0..p)
        .map(|j| a.column(j).iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();

    // Sort singular values descending, stable in the original column order.
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap());
    let a_sorted = {
        let mut out = Array2::zeros((n, p));
        for (dst, &src) in order.iter().enumerate() {
            out.column_mut(dst).assign(&a.column(src));
        }
        out
    };
    let v_sorted = {
        let mut out = Array2::zeros((p, p));
        for (dst, &src) in order.iter().enumerate() {
            out.column_mut(dst).assign(&v.column(src));
        }
        out
    };
    norms = order.iter().map(|&i| norms[i]).collect();

    // Normalize the nonnegligible columns into u; fill the rank-deficient
    // tail with an orthonormal completion so u always has p columns.
    let sigma = Array1::from(norms.clone());
    let cutoff = norms.first().copied().unwrap_or(0.0) * 1e-14;
    let mut u = Array2::zeros((n, p));
    let mut good = 0;
    for j in 0..p {
        if norms[j] > cutoff {
            let col = a_sorted.column(j).mapv(|x| x / norms[j]);
            u.column_mut(j).assign(&col);
            good = j + 1;
        }
    }
    if good < p {
        complete_orthonormal(&mut u, good);
    }

    Ok((u, sigma, v_sorted))
}

/// Fills columns `good..` of `u` with unit vectors orthogonal to the first
/// `good` columns, picking the canonical basis vector with the largest
/// residual at each step (deterministic).
fn complete_orthonormal(u: &mut Array2<f64>, good: usize) {
    let (n, p) = u.dim();
    let mut used = vec![false; n];
    for j in good..p {
        let mut best: Option<(usize, Vec<f64>, f64)> = None;
        for cand in 0..n {
            if used[cand] {
                continue;
            }
            let mut vec = vec![0.0; n];
            vec[cand] = 1.0;
            // Two rounds of Gram-Schmidt against the columns filled so far.
            for _ in 0..2 {
                for col in 0..j {
                    let dot: f64 = (0..n).map(|r| vec[r] * u[[r, col]]).sum();
                    for r in 0..n {
                        vec[r] -= dot * u[[r, col]];
                    }
                }
            }
            let norm = vec.iter().map(|x| x * x).sum::<f64>().sqrt();
            if best.as_ref().map_or(true, |(_, _, bn)| norm > *bn) {
                best = Some((cand, vec, norm));
            }
        }
        let (cand, vec, norm) = best.expect("candidate basis exhausted");
        used[cand] = true;
        for r in 0..n {
            u[[r, j]] = vec[r] / norm;
        }
    }
}

/// Sign convention: the largest-magnitude entry of each column of `u` is
/// made nonnegative, flipping the matching column of `v` to preserve the
/// product.
fn fix_signs(mut f: SvdFactors) -> SvdFactors {
    let p = f.sigma.len();
    for j in 0..p {
        let col = f.u.column(j);
        let mut arg = 0;
        let mut best = f64::NEG_INFINITY;
        for (i, &x) in col.iter().enumerate() {
            if x.abs() > best {
                best = x.abs();
                arg = i;
            }
        }
        if f.u[[arg, j]] < 0.0 {
            f.u.column_mut(j).mapv_inplace(|x| -x);
            f.v.column_mut(j).mapv_inplace(|x| -x);
        }
    }
    f
}
