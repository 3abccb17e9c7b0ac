//! Reverse-mode gradients through the recorded forward pass: convolution
//! adjoints, SVT through the SVD, the multi-threshold activation via its
//! recorded branches, and the reference construction.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::net::forward::{clamp_threshold, LayerTape, Tape};
use crate::net::params::{LayerGrads, LayerParams, NetworkGrads, NetworkParams, Variant};
use crate::prox::{prox_branch_partials, ProxBranch, ProxParams};
use crate::solvers::SparsityThreshold;
use crate::svd::SvdFactors;
use crate::tensor::{conv_frames_adjoint, conv_kernel_grad, Geometry};

/// Guard for the spectral denominators in [`svd_backward`].
pub const SVD_BACKWARD_EPS: f64 = 1e-9;

#[inline]
fn guard(x: f64, eps: f64) -> f64 {
    if x.abs() < eps {
        if x < 0.0 {
            -eps
        } else {
            eps
        }
    } else {
        x
    }
}

/// Reverse-mode SVD: pulls cotangents on `(u, sigma, v)` back to the
/// decomposed matrix. Denominators `sigma_j^2 - sigma_i^2` and `sigma_i`
/// smaller than `eps` in magnitude are replaced by `sign * eps`, so the
/// output is always finite.
pub fn svd_backward(
    factors: &SvdFactors,
    du: &Array2<f64>,
    dsigma: &Array1<f64>,
    dv: &Array2<f64>,
    eps: f64,
) -> Array2<f64> {
    let u = &factors.u;
    let v = &factors.v;
    let sigma = &factors.sigma;
    let (n, p) = u.dim();
    let m = v.nrows();

    let utdu = u.t().dot(du); // p x p
    let vtdv = v.t().dot(dv); // p x p

    let mut inner = Array2::zeros((p, p));
    for i in 0..p {
        for j in 0..p {
            if i == j {
                inner[[i, j]] = dsigma[i];
            } else {
                let f = 1.0 / guard(sigma[j] * sigma[j] - sigma[i] * sigma[i], eps);
                let a = f * (utdu[[i, j]] - utdu[[j, i]]) * sigma[j];
                let b = f * sigma[i] * (vtdv[[i, j]] - vtdv[[j, i]]);
                inner[[i, j]] = a + b;
            }
        }
    }
    let mut dx = u.dot(&inner).dot(&v.t());

    let sigma_inv: Array1<f64> = sigma.mapv(|s| 1.0 / guard(s, eps));
    if n > p {
        // (i - u u^T) du sigma^-1 v^T
        let residual = du - &u.dot(&utdu);
        let scaled = &residual * &sigma_inv; // scales columns
        dx = dx + scaled.dot(&v.t());
    }
    if m > p {
        // u sigma^-1 dv^T (i - v v^T)
        let residual = dv - &v.dot(&vtdv);
        let scaled = u * &sigma_inv;
        dx = dx + scaled.dot(&residual.t());
    }
    dx
}

/// Backward through `y = svt(x, tau)` given the SVD of `x`: returns the
/// cotangent on `x` and on `tau`. Singular values at or below the threshold
/// contribute nothing through the sigma path (subgradient 0 at the kink).
pub fn svt_backward(
    factors: &SvdFactors,
    tau: f64,
    g: &Array2<f64>,
    eps: f64,
) -> (Array2<f64>, f64) {
    let shrunk = factors.sigma.mapv(|s| (s - tau).max(0.0));
    let gv = g.dot(&factors.v); // n x p
    let gtu = g.t().dot(&factors.u); // m x p
    let du = &gv * &shrunk;
    let dv = &gtu * &shrunk;
    let p = factors.sigma.len();
    let mut dsigma = Array1::zeros(p);
    let mut dtau = 0.0;
    for i in 0..p {
        if factors.sigma[i] > tau {
            // Diagonal cotangent (u^T g v)_ii.
            let diag = factors.u.column(i).dot(&gv.column(i));
            dsigma[i] = diag;
            dtau -= diag;
        }
    }
    (svd_backward(factors, &du, &dsigma, &dv, eps), dtau)
}

/// Derivative of the threshold clamp `tau = max(lambda, 0)`.
#[inline]
fn clamp_grad(lambda: f64) -> f64 {
    if lambda >= 0.0 {
        1.0
    } else {
        0.0
    }
}

struct LayerCotangents {
    d_l_in: Array2<f64>,
    d_s_in: Array2<f64>,
    d_m: Array2<f64>,
}

fn layer_backward(
    m: &Array2<f64>,
    layer: &LayerParams,
    tape: &LayerTape,
    geometry: Geometry,
    variant: Variant,
    corona_threshold: SparsityThreshold,
    detach_reference: bool,
    d_l_out: &Array2<f64>,
    d_s_out: &Array2<f64>,
    grads: &mut LayerGrads,
) -> Result<LayerCotangents> {
    let (h, w) = (geometry.height, geometry.width);
    let k = layer.kernels[0].size();

    // Low-rank path: svt threshold then its pre-activation.
    let tau1 = clamp_threshold(layer.lambda1);
    let (d_l_pre, dtau1) = svt_backward(&tape.svd, tau1, d_l_out, SVD_BACKWARD_EPS);
    grads.lambda1 += dtau1 * clamp_grad(layer.lambda1);

    // Sparse path: activation backward produces the pre-activation
    // cotangent plus parameter pieces.
    let tau2 = clamp_threshold(layer.lambda2);
    let mut d_s_pre = Array2::zeros(d_s_out.dim());
    let mut d_reference: Option<Array2<f64>> = None;
    match variant {
        Variant::RefRpca => {
            let tau3 = clamp_threshold(layer.lambda3);
            let branches = tape
                .branches
                .as_ref()
                .ok_or_else(|| Error::numerical("tape missing prox branches"))?;
            let reference = tape
                .reference
                .as_ref()
                .ok_or_else(|| Error::numerical("tape missing reference"))?;
            let mut d_ref = Array2::zeros(d_s_out.dim());
            let mut da2 = 0.0;
            let mut da3 = 0.0;
            for ((i, j), &tag) in branches.indexed_iter() {
                let g = d_s_out[[i, j]];
                if g == 0.0 {
                    continue;
                }
                let p = ProxParams {
                    a2: tau2,
                    a3: tau3,
                    q: layer.q[i],
                    s_p: reference[[i, j]],
                };
                let partials = prox_branch_partials(&p, ProxBranch::from_u8(tag)?);
                d_s_pre[[i, j]] = g * partials.dx;
                da2 += g * partials.da2;
                da3 += g * partials.da3;
                grads.q[i] += g * partials.dq;
                d_ref[[i, j]] = g * partials.ds_p;
            }
            grads.lambda2 += da2 * clamp_grad(layer.lambda2);
            grads.lambda3 += da3 * clamp_grad(layer.lambda3);
            d_reference = Some(d_ref);
        }
        Variant::Corona => match corona_threshold {
            SparsityThreshold::Scalar => {
                let mut dtau2 = 0.0;
                for ((i, j), &x) in tape.s_pre.indexed_iter() {
                    let g = d_s_out[[i, j]];
                    if x.abs() > tau2 {
                        d_s_pre[[i, j]] = g;
                        dtau2 -= x.signum() * g;
                    }
                }
                grads.lambda2 += dtau2 * clamp_grad(layer.lambda2);
            }
            SparsityThreshold::RowL2 => {
                let norms = tape
                    .row_norms
                    .as_ref()
                    .ok_or_else(|| Error::numerical("tape missing row norms"))?;
                let mut dtau2 = 0.0;
                for (i, &norm) in norms.iter().enumerate() {
                    if norm <= tau2 || norm == 0.0 {
                        continue;
                    }
                    let row = tape.s_pre.row(i);
                    let grow = d_s_out.row(i);
                    let dot = row.dot(&grow);
                    let shrink = 1.0 - tau2 / norm;
                    for j in 0..row.len() {
                        d_s_pre[[i, j]] =
                            shrink * grow[j] + tau2 * dot * row[j] / (norm * norm * norm);
                    }
                    dtau2 -= dot / norm;
                }
                grads.lambda2 += dtau2 * clamp_grad(layer.lambda2);
            }
        },
    }

    // Reference construction backward: column 0 copies s_in, column t >= 1
    // is projection * s_in[:, t-1].
    let mut d_s_in_ref = Array2::zeros(d_s_out.dim());
    if let Some(d_ref) = &d_reference {
        let frames = d_ref.ncols();
        if frames > 1 {
            let d_tail = d_ref.slice(ndarray::s![.., 1..]);
            let prev = tape.s_in.slice(ndarray::s![.., ..frames - 1]);
            grads.projection += &d_tail.dot(&prev.t());
            if !detach_reference {
                let back = layer.projection.t().dot(&d_tail);
                d_s_in_ref.slice_mut(ndarray::s![.., ..frames - 1]).assign(&back);
            }
        }
        if !detach_reference {
            let col0 = d_ref.column(0).to_owned() + d_s_in_ref.column(0);
            d_s_in_ref.column_mut(0).assign(&col0);
        }
    }

    // Convolution backward for both pre-activations.
    let d_m = conv_frames_adjoint(&d_l_pre, h, w, layer.kernels[0].weights())
        + conv_frames_adjoint(&d_s_pre, h, w, layer.kernels[1].weights());
    let d_s_in = conv_frames_adjoint(&d_l_pre, h, w, layer.kernels[2].weights())
        + conv_frames_adjoint(&d_s_pre, h, w, layer.kernels[3].weights())
        + d_s_in_ref;
    let d_l_in = conv_frames_adjoint(&d_l_pre, h, w, layer.kernels[4].weights())
        + conv_frames_adjoint(&d_s_pre, h, w, layer.kernels[5].weights());

    grads.kernels[0] += &conv_kernel_grad(m, &d_l_pre, h, w, k);
    grads.kernels[1] += &conv_kernel_grad(m, &d_s_pre, h, w, k);
    grads.kernels[2] += &conv_kernel_grad(&tape.s_in, &d_l_pre, h, w, k);
    grads.kernels[3] += &conv_kernel_grad(&tape.s_in, &d_s_pre, h, w, k);
    grads.kernels[4] += &conv_kernel_grad(&tape.l_in, &d_l_pre, h, w, k);
    grads.kernels[5] += &conv_kernel_grad(&tape.l_in, &d_s_pre, h, w, k);

    Ok(LayerCotangents { d_l_in, d_s_in, d_m })
}

/// Exact reverse-mode gradients of the recorded forward computation.
/// Returns the gradients of every learnable parameter plus the cotangent of
/// the network input.
pub fn network_backward(
    params: &NetworkParams,
    tape: &Tape,
    d_l_hat: &Array2<f64>,
    d_s_hat: &Array2<f64>,
) -> Result<(NetworkGrads, Array2<f64>)> {
    if tape.layers.len() != params.depth() {
        return Err(Error::shape(format!(
            "tape has {} layers, network {}",
            tape.layers.len(),
            params.depth()
        )));
    }
    let dims = (params.geometry.pixels(), params.geometry.frames);
    if d_l_hat.dim() != dims || d_s_hat.dim() != dims {
        return Err(Error::shape("cotangent shapes do not match geometry"));
    }

    let mut grads = NetworkGrads::zeros_like(params);
    let mut d_l = d_l_hat.clone();
    let mut d_s = d_s_hat.clone();
    let mut d_m = Array2::zeros(dims);
    for idx in (0..params.depth()).rev() {
        let cot = layer_backward(
            &tape.input,
            &params.layers[idx],
            &tape.layers[idx],
            params.geometry,
            params.variant,
            params.corona_threshold,
            params.detach_reference,
            &d_l,
            &d_s,
            &mut grads.layers[idx],
        )?;
        d_l = cot.d_l_in;
        d_s = cot.d_s_in;
        d_m += &cot.d_m;
    }
    Ok((grads, d_m))
}
