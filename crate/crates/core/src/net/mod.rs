//! Unrolled networks: the reference-based reweighted design and the
//! convolutional baseline, with forward passes recorded on a tape and
//! differentiated exactly in reverse mode.

mod backward;
mod forward;
pub mod gradcheck;
mod params;

pub use backward::{network_backward, svd_backward, svt_backward, SVD_BACKWARD_EPS};
pub use forward::{layer_forward, network_forward, LayerContext, LayerTape, Tape};
pub use params::{
    init_params, init_params_with, LayerGrads, LayerParams, NetworkGrads, NetworkParams, Variant,
};
