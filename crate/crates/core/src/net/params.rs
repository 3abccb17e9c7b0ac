//! Unrolled-network parameters, initialization, and flat views for the
//! optimizer.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::solvers::SparsityThreshold;
use crate::tensor::{ConvKernel, Geometry};

/// Which unrolled iteration a network implements.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Variant {
    /// Reference-based reweighted l1-l1 activation with learned per-pixel
    /// weights and temporal projection.
    RefRpca,
    /// Convolutional baseline with a plain (scalar or row-grouped)
    /// threshold activation.
    Corona,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::RefRpca => "refrpca",
            Variant::Corona => "corona",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "refrpca" => Ok(Variant::RefRpca),
            "corona" => Ok(Variant::Corona),
            other => Err(Error::param(format!("unknown variant '{other}'"))),
        }
    }
}

/// One layer's learnables: six convolution kernels, three thresholds, the
/// per-pixel weight vector, and the temporal projection matrix.
#[derive(Clone, Debug)]
pub struct LayerParams {
    /// `kernels[0..6]` feed, in order: data->L, data->S, S->L, S->S, L->L,
    /// L->S (i.e. w1..w6).
    pub kernels: [ConvKernel; 6],
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    /// Length-n weight vector; entry i reweights pixel i in every frame.
    pub q: Array1<f64>,
    /// n x n projection predicting a frame's foreground from its
    /// predecessor.
    pub projection: Array2<f64>,
}

/// Full parameter set of an unrolled network.
#[derive(Clone, Debug)]
pub struct NetworkParams {
    pub layers: Vec<LayerParams>,
    pub variant: Variant,
    /// Sparse activation used by the baseline variant.
    pub corona_threshold: SparsityThreshold,
    pub geometry: Geometry,
    /// When true, backpropagation does not flow from the reference back
    /// into the previous sparse iterate (the projection still learns).
    pub detach_reference: bool,
}

impl NetworkParams {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn kernel_size(&self) -> usize {
        self.layers[0].kernels[0].size()
    }

    /// Number of scalars the optimizer sees (variant-aware: the baseline
    /// has no q, projection, or third threshold).
    pub fn flat_len(&self) -> usize {
        let g = self.geometry;
        let k2 = self.kernel_size() * self.kernel_size();
        let per_layer = match self.variant {
            Variant::RefRpca => 6 * k2 + 3 + g.pixels() + g.pixels() * g.pixels(),
            Variant::Corona => 6 * k2 + 2,
        };
        per_layer * self.layers.len()
    }

    /// Flattens all learnable scalars in a fixed order: per layer, kernels
    /// w1..w6 row-major, then lambda1, lambda2, and for the reweighted
    /// variant lambda3, q, and the projection row-major.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.flat_len());
        for layer in &self.layers {
            for kernel in &layer.kernels {
                out.extend(kernel.weights().iter());
            }
            out.push(layer.lambda1);
            out.push(layer.lambda2);
            if self.variant == Variant::RefRpca {
                out.push(layer.lambda3);
                out.extend(layer.q.iter());
                out.extend(layer.projection.iter());
            }
        }
        out
    }

    /// Writes a flat vector (same layout as [`Self::to_flat`]) back into the
    /// structured parameters.
    pub fn assign_from_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.flat_len() {
            return Err(Error::shape(format!(
                "flat parameter vector has {} entries, expected {}",
                flat.len(),
                self.flat_len()
            )));
        }
        let variant = self.variant;
        let mut cursor = 0usize;
        for layer in &mut self.layers {
            for kernel in &mut layer.kernels {
                let k = kernel.size();
                let weights = Array2::from_shape_vec(
                    (k, k),
                    flat[cursor..cursor + k * k].to_vec(),
                )
                .expect("kernel shape");
                *kernel = ConvKernel::new(weights)?;
                cursor += k * k;
            }
            layer.lambda1 = flat[cursor];
            layer.lambda2 = flat[cursor + 1];
            cursor += 2;
            if variant == Variant::RefRpca {
                layer.lambda3 = flat[cursor];
                cursor += 1;
                let n = layer.q.len();
                layer.q = Array1::from(flat[cursor..cursor + n].to_vec());
                cursor += n;
                layer.projection =
                    Array2::from_shape_vec((n, n), flat[cursor..cursor + n * n].to_vec())
                        .expect("projection shape");
                cursor += n * n;
            }
        }
        debug_assert_eq!(cursor, flat.len());
        Ok(())
    }
}

/// Deterministic initialization: the first layer approximates one literal
/// iteration of the classical algorithm with step constant 2 (delta
/// kernels scaled [1, 1, -1, 0.5, 0.5, -1]), small thresholds
/// (0.1, 0.1, 0.05), unit weights, and an identity projection. Kernels
/// w3..w6 get zero-mean noise of standard deviation 1e-3 to break symmetry.
pub fn init_params(
    depth: usize,
    geometry: Geometry,
    variant: Variant,
    seed: u64,
) -> Result<NetworkParams> {
    init_params_with(depth, geometry, variant, 5, seed)
}

/// As [`init_params`] with an explicit kernel size.
pub fn init_params_with(
    depth: usize,
    geometry: Geometry,
    variant: Variant,
    kernel_size: usize,
    seed: u64,
) -> Result<NetworkParams> {
    if depth == 0 {
        return Err(Error::param("network depth must be at least 1"));
    }
    if kernel_size % 2 == 0 || kernel_size > geometry.height.min(geometry.width) {
        return Err(Error::param(format!(
            "kernel size {kernel_size} invalid for {}x{} frames",
            geometry.height, geometry.width
        )));
    }
    let n = geometry.pixels();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scales = [1.0, 1.0, -1.0, 0.5, 0.5, -1.0];
    let mut layers = Vec::with_capacity(depth);
    for _ in 0..depth {
        let kernels: [ConvKernel; 6] = std::array::from_fn(|idx| {
            let mut weights = ConvKernel::delta(kernel_size, scales[idx]).weights().clone();
            if idx >= 2 {
                weights.mapv_inplace(|w| {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    w + 1e-3 * noise
                });
            }
            ConvKernel::new(weights).expect("odd square kernel")
        });
        layers.push(LayerParams {
            kernels,
            lambda1: 0.1,
            lambda2: 0.1,
            lambda3: 0.05,
            q: Array1::ones(n),
            projection: Array2::eye(n),
        });
    }
    Ok(NetworkParams {
        layers,
        variant,
        corona_threshold: SparsityThreshold::Scalar,
        geometry,
        detach_reference: false,
    })
}

/// Per-layer gradient accumulators, mirroring [`LayerParams`].
#[derive(Clone, Debug)]
pub struct LayerGrads {
    pub kernels: [Array2<f64>; 6],
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub q: Array1<f64>,
    pub projection: Array2<f64>,
}

/// Gradients for a whole network, in the same layout as the parameters.
#[derive(Clone, Debug)]
pub struct NetworkGrads {
    pub layers: Vec<LayerGrads>,
    variant: Variant,
}

impl NetworkGrads {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        let k = params.kernel_size();
        let n = params.geometry.pixels();
        let layers = params
            .layers
            .iter()
            .map(|_| LayerGrads {
                kernels: std::array::from_fn(|_| Array2::zeros((k, k))),
                lambda1: 0.0,
                lambda2: 0.0,
                lambda3: 0.0,
                q: Array1::zeros(n),
                projection: Array2::zeros((n, n)),
            })
            .collect();
        NetworkGrads {
            layers,
            variant: params.variant,
        }
    }

    pub fn add_assign(&mut self, other: &NetworkGrads) {
        assert_eq!(self.layers.len(), other.layers.len());
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (ka, kb) in a.kernels.iter_mut().zip(&b.kernels) {
                *ka += kb;
            }
            a.lambda1 += b.lambda1;
            a.lambda2 += b.lambda2;
            a.lambda3 += b.lambda3;
            a.q += &b.q;
            a.projection += &b.projection;
        }
    }

    /// Same layout as [`NetworkParams::to_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.layers {
            for kernel in &layer.kernels {
                out.extend(kernel.iter());
            }
            out.push(layer.lambda1);
            out.push(layer.lambda2);
            if self.variant == Variant::RefRpca {
                out.push(layer.lambda3);
                out.extend(layer.q.iter());
                out.extend(layer.projection.iter());
            }
        }
        out
    }

    pub fn global_norm(&self) -> f64 {
        self.to_flat().iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}
