//! Finite-difference verification of the network gradients.
//!
//! Central differences on every flattened parameter coordinate against the
//! reverse-mode gradients, for the quadratic tracking loss
//! `0.5 ||l_hat - t_l||^2 + 0.5 ||s_hat - t_s||^2`. Points too close to a
//! non-differentiable kink (prox breakpoint, SVT threshold, spectral gap,
//! clamp or |q| corner) are rejected up front via [`min_kink_margin`].

use ndarray::Array2;

use crate::error::Result;
use crate::net::forward::{clamp_threshold, network_forward, Tape};
use crate::net::params::{NetworkParams, Variant};
use crate::solvers::SparsityThreshold;
use crate::tensor::inner;

/// Outcome of a finite-difference sweep.
#[derive(Clone, Copy, Debug)]
pub struct GradCheckReport {
    /// Worst normalized error over all checked coordinates.
    pub worst_rel_err: f64,
    /// Number of scalar coordinates checked.
    pub checked: usize,
    /// Distance from the evaluation point to the nearest kink.
    pub kink_margin: f64,
}

/// Smallest distance from the recorded forward pass to any point of
/// non-differentiability.
pub fn min_kink_margin(params: &NetworkParams, tape: &Tape) -> f64 {
    let mut margin = f64::INFINITY;
    for (layer, seg) in params.layers.iter().zip(&tape.layers) {
        let tau1 = clamp_threshold(layer.lambda1);
        let sigma = &seg.svd.sigma;
        for (i, &s) in sigma.iter().enumerate() {
            margin = margin.min((s - tau1).abs());
            if i + 1 < sigma.len() {
                margin = margin.min(sigma[i] - sigma[i + 1]);
            }
        }
        // Clamp corners of the learned thresholds.
        margin = margin.min(layer.lambda1.abs());
        margin = margin.min(layer.lambda2.abs());
        let tau2 = clamp_threshold(layer.lambda2);
        match params.variant {
            Variant::RefRpca => {
                margin = margin.min(layer.lambda3.abs());
                let tau3 = clamp_threshold(layer.lambda3);
                let reference = seg.reference.as_ref().expect("reweighted tape");
                for ((i, j), &x) in seg.s_pre.indexed_iter() {
                    let qa = layer.q[i].abs();
                    margin = margin.min(qa); // |q| corner
                    let (t2, t3) = (tau2 * qa, tau3 * qa);
                    let s_p = reference[[i, j]];
                    // Regime boundary: an exactly-zero reference is
                    // structurally zero (built from a plateau output or the
                    // zero initial state) and stays zero under perturbation,
                    // so only nonzero references count.
                    if s_p != 0.0 {
                        margin = margin.min(s_p.abs());
                    }
                    let breakpoints = if s_p >= 0.0 {
                        [s_p + t2 + t3, s_p + t2 - t3, t2 - t3, -t2 - t3]
                    } else {
                        [t2 + t3, -t2 + t3, s_p - t2 + t3, s_p - t2 - t3]
                    };
                    for b in breakpoints {
                        margin = margin.min((x - b).abs());
                    }
                }
            }
            Variant::Corona => match params.corona_threshold {
                SparsityThreshold::Scalar => {
                    for &x in seg.s_pre.iter() {
                        margin = margin.min((x.abs() - tau2).abs());
                    }
                }
                SparsityThreshold::RowL2 => {
                    let norms = seg.row_norms.as_ref().expect("row-grouped tape");
                    for &n in norms.iter() {
                        margin = margin.min((n - tau2).abs());
                    }
                }
            },
        }
    }
    margin
}

fn tracking_loss(
    m: &Array2<f64>,
    params: &NetworkParams,
    t_l: &Array2<f64>,
    t_s: &Array2<f64>,
) -> Result<f64> {
    let (l, s, _) = network_forward(m, params)?;
    let dl = &l - t_l;
    let ds = &s - t_s;
    Ok(0.5 * inner(&dl, &dl) + 0.5 * inner(&ds, &ds))
}

/// Runs central differences with step `fd_step` over every parameter
/// coordinate; errors are normalized by `max(|analytic|, |fd|, 1e-3)` so a
/// vanishing-gradient coordinate cannot mask an absolute error above
/// `1e-7`-ish. Fails fast if the evaluation point sits within
/// `kink_margin` of a kink.
pub fn check_network_gradients(
    params: &NetworkParams,
    m: &Array2<f64>,
    t_l: &Array2<f64>,
    t_s: &Array2<f64>,
    fd_step: f64,
    kink_margin: f64,
) -> Result<GradCheckReport> {
    let (l, s, tape) = network_forward(m, params)?;
    let margin = min_kink_margin(params, &tape);
    if margin <= kink_margin {
        return Err(crate::error::Error::numerical(format!(
            "evaluation point too close to a kink: margin {margin:.3e} <= {kink_margin:.3e}; \
             pick a different seed"
        )));
    }

    let d_l = &l - t_l;
    let d_s = &s - t_s;
    let (grads, _) = crate::net::network_backward(params, &tape, &d_l, &d_s)?;
    let analytic = grads.to_flat();

    let base = params.to_flat();
    let mut probe = params.clone();
    let mut worst = 0.0_f64;
    for idx in 0..base.len() {
        let mut flat = base.clone();
        flat[idx] = base[idx] + fd_step;
        probe.assign_from_flat(&flat)?;
        let fp = tracking_loss(m, &probe, t_l, t_s)?;
        flat[idx] = base[idx] - fd_step;
        probe.assign_from_flat(&flat)?;
        let fm = tracking_loss(m, &probe, t_l, t_s)?;
        let fd = (fp - fm) / (2.0 * fd_step);
        let an = analytic[idx];
        let denom = an.abs().max(fd.abs()).max(1e-3);
        worst = worst.max((an - fd).abs() / denom);
    }
    Ok(GradCheckReport {
        worst_rel_err: worst,
        checked: base.len(),
        kink_margin: margin,
    })
}
