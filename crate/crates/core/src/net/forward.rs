//! Forward pass of the unrolled networks, recording a tape for exact
//! reverse-mode differentiation.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::net::params::{LayerParams, NetworkParams, Variant};
use crate::prox::{
    mixed_l12_threshold, reweighted_l1l1_prox_matrix_branches, soft_threshold_raw,
    svt_with_factors,
};
use crate::solvers::{build_reference, SparsityThreshold};
use crate::svd::SvdFactors;
use crate::tensor::{conv_frames, ensure_finite, Geometry};

/// Network-level context a single layer needs.
#[derive(Clone, Copy, Debug)]
pub struct LayerContext {
    pub geometry: Geometry,
    pub variant: Variant,
    pub corona_threshold: SparsityThreshold,
}

impl LayerContext {
    pub fn of(params: &NetworkParams) -> Self {
        LayerContext {
            geometry: params.geometry,
            variant: params.variant,
            corona_threshold: params.corona_threshold,
        }
    }
}

/// Everything one layer's backward pass needs, recorded during forward.
#[derive(Clone, Debug)]
pub struct LayerTape {
    pub l_in: Array2<f64>,
    pub s_in: Array2<f64>,
    /// Pre-activation of the sparse path (input to the threshold).
    pub s_pre: Array2<f64>,
    /// SVD of the low-rank pre-activation (input to SVT).
    pub svd: SvdFactors,
    /// Reference matrix, reweighted variant only.
    pub reference: Option<Array2<f64>>,
    /// Active prox branch per entry, reweighted variant only.
    pub branches: Option<Array2<u8>>,
    /// Row norms of `s_pre`, row-grouped baseline threshold only.
    pub row_norms: Option<Array1<f64>>,
    pub l_out: Array2<f64>,
    pub s_out: Array2<f64>,
}

/// Recorded forward pass: the input plus one segment per layer.
#[derive(Clone, Debug)]
pub struct Tape {
    pub input: Array2<f64>,
    pub layers: Vec<LayerTape>,
}

impl Tape {
    pub fn output(&self) -> (&Array2<f64>, &Array2<f64>) {
        let last = self.layers.last().expect("tape has at least one layer");
        (&last.l_out, &last.s_out)
    }
}

/// Thresholds are clamped at zero before use so learned values may go
/// negative without breaking the operators.
#[inline]
pub(crate) fn clamp_threshold(lambda: f64) -> f64 {
    lambda.max(0.0)
}

/// One layer: `l_out = svt(w1*m + w3*s_in + w5*l_in, lambda1)` and the
/// variant-specific sparse update on `w2*m + w4*s_in + w6*l_in`.
pub fn layer_forward(
    m: &Array2<f64>,
    l_in: &Array2<f64>,
    s_in: &Array2<f64>,
    layer: &LayerParams,
    ctx: &LayerContext,
) -> Result<(Array2<f64>, Array2<f64>, LayerTape)> {
    let g = ctx.geometry;
    let (h, w) = (g.height, g.width);
    if m.dim() != (g.pixels(), g.frames) || l_in.dim() != m.dim() || s_in.dim() != m.dim() {
        return Err(Error::shape(format!(
            "layer inputs {:?}/{:?}/{:?} vs geometry {}x{}x{}",
            m.dim(),
            l_in.dim(),
            s_in.dim(),
            g.height,
            g.width,
            g.frames
        )));
    }

    let l_pre = conv_frames(m, h, w, layer.kernels[0].weights())
        + conv_frames(s_in, h, w, layer.kernels[2].weights())
        + conv_frames(l_in, h, w, layer.kernels[4].weights());
    let s_pre = conv_frames(m, h, w, layer.kernels[1].weights())
        + conv_frames(s_in, h, w, layer.kernels[3].weights())
        + conv_frames(l_in, h, w, layer.kernels[5].weights());

    let tau1 = clamp_threshold(layer.lambda1);
    let (l_out, svd) = svt_with_factors(&l_pre, tau1)?;

    let tau2 = clamp_threshold(layer.lambda2);
    let (s_out, reference, branches, row_norms) = match ctx.variant {
        Variant::RefRpca => {
            let tau3 = clamp_threshold(layer.lambda3);
            let reference = build_reference(s_in, &layer.projection)?;
            let (s_out, tags) =
                reweighted_l1l1_prox_matrix_branches(&s_pre, tau2, tau3, &layer.q, &reference)?;
            (s_out, Some(reference), Some(tags), None)
        }
        Variant::Corona => match ctx.corona_threshold {
            SparsityThreshold::Scalar => {
                let s_out = s_pre.mapv(|x| soft_threshold_raw(x, tau2));
                (s_out, None, None, None)
            }
            SparsityThreshold::RowL2 => {
                let norms = Array1::from_shape_fn(s_pre.nrows(), |i| {
                    s_pre.row(i).iter().map(|v| v * v).sum::<f64>().sqrt()
                });
                let s_out = mixed_l12_threshold(&s_pre, tau2)?;
                (s_out, None, None, Some(norms))
            }
        },
    };

    let tape = LayerTape {
        l_in: l_in.clone(),
        s_in: s_in.clone(),
        s_pre,
        svd,
        reference,
        branches,
        row_norms,
        l_out: l_out.clone(),
        s_out: s_out.clone(),
    };
    Ok((l_out, s_out, tape))
}

/// Runs all layers from the zero state, returning the final estimates and
/// the full tape.
pub fn network_forward(
    m: &Array2<f64>,
    params: &NetworkParams,
) -> Result<(Array2<f64>, Array2<f64>, Tape)> {
    ensure_finite(m, "network input")?;
    let ctx = LayerContext::of(params);
    let (n, frames) = (params.geometry.pixels(), params.geometry.frames);
    if m.dim() != (n, frames) {
        return Err(Error::shape(format!(
            "network input {:?} vs geometry {n}x{frames}",
            m.dim()
        )));
    }
    let mut l = Array2::zeros((n, frames));
    let mut s = Array2::zeros((n, frames));
    let mut layers = Vec::with_capacity(params.depth());
    for (idx, layer) in params.layers.iter().enumerate() {
        let (l_next, s_next, tape) = layer_forward(m, &l, &s, layer, &ctx)
            .map_err(|e| Error::numerical(format!("layer {idx}: {e}")))?;
        layers.push(tape);
        l = l_next;
        s = s_next;
    }
    Ok((
        l,
        s,
        Tape {
            input: m.clone(),
            layers,
        },
    ))
}
