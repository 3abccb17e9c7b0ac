//! Dense video matrices, per-frame 2D convolution, and basic norms.
//!
//! A video is stored as an `n x m` matrix whose column `t` is frame `t`
//! vectorized row-major: pixel `(y, x)` of an `h x w` frame sits at row
//! `y * w + x`, and `n = h * w`.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Frame geometry of a video matrix: `h x w` pixels over `m` frames.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Geometry {
    pub height: usize,
    pub width: usize,
    pub frames: usize,
}

impl Geometry {
    pub fn new(height: usize, width: usize, frames: usize) -> Result<Self> {
        if height == 0 || width == 0 || frames == 0 {
            return Err(Error::param("geometry dimensions must be positive"));
        }
        Ok(Geometry { height, width, frames })
    }

    /// Pixels per frame (`n`).
    pub fn pixels(&self) -> usize {
        self.height * self.width
    }
}

/// An `n x m` matrix of vectorized frames with its frame geometry.
///
/// Invariants: `n = height * width` and every entry is finite.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoMatrix {
    data: Array2<f64>,
    geometry: Geometry,
}

impl VideoMatrix {
    pub fn new(data: Array2<f64>, height: usize, width: usize) -> Result<Self> {
        let geometry = Geometry::new(height, width, data.ncols().max(1))?;
        if data.nrows() != geometry.pixels() {
            return Err(Error::shape(format!(
                "video matrix has {} rows, geometry {}x{} needs {}",
                data.nrows(),
                height,
                width,
                geometry.pixels()
            )));
        }
        if data.ncols() == 0 {
            return Err(Error::shape("video matrix needs at least one frame"));
        }
        ensure_finite(&data, "video matrix")?;
        Ok(VideoMatrix { data, geometry })
    }

    pub fn zeros(geometry: Geometry) -> Self {
        VideoMatrix {
            data: Array2::zeros((geometry.pixels(), geometry.frames)),
            geometry,
        }
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    /// Frame `t` as an owned `h x w` image.
    pub fn frame(&self, t: usize) -> Array2<f64> {
        let (h, w) = (self.geometry.height, self.geometry.width);
        let col = self.data.column(t);
        Array2::from_shape_fn((h, w), |(y, x)| col[y * w + x])
    }
}

/// A square odd-sized convolution kernel (cross-correlation convention).
#[derive(Clone, Debug, PartialEq)]
pub struct ConvKernel {
    weights: Array2<f64>,
}

impl ConvKernel {
    pub fn new(weights: Array2<f64>) -> Result<Self> {
        let (kh, kw) = weights.dim();
        if kh != kw {
            return Err(Error::shape(format!("kernel must be square, got {kh}x{kw}")));
        }
        if kh % 2 == 0 {
            return Err(Error::param(format!(
                "kernel size must be odd so same padding is centered, got {kh}"
            )));
        }
        ensure_finite(&weights, "kernel")?;
        Ok(ConvKernel { weights })
    }

    /// Centered delta kernel times `scale`; the identity when `scale = 1`.
    pub fn delta(size: usize, scale: f64) -> Self {
        assert!(size % 2 == 1, "kernel size must be odd");
        let mut weights = Array2::zeros((size, size));
        weights[[size / 2, size / 2]] = scale;
        ConvKernel { weights }
    }

    pub fn zeros(size: usize) -> Self {
        assert!(size % 2 == 1, "kernel size must be odd");
        ConvKernel {
            weights: Array2::zeros((size, size)),
        }
    }

    pub fn size(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }
}

pub(crate) fn ensure_finite(x: &Array2<f64>, what: &str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("{what} contains NaN or infinity")))
    }
}

/// "Same" 2D cross-correlation of every frame with `kernel`, zero padded.
pub fn conv2d_same(video: &VideoMatrix, kernel: &ConvKernel) -> Result<VideoMatrix> {
    let g = video.geometry();
    if kernel.size() > g.height.min(g.width) {
        return Err(Error::shape(format!(
            "kernel size {} exceeds frame {}x{}",
            kernel.size(),
            g.height,
            g.width
        )));
    }
    let out = conv_frames(video.data(), g.height, g.width, kernel.weights());
    VideoMatrix::new(out, g.height, g.width)
}

/// Cross-correlates every column of `x` (an `h*w x m` frame matrix) with
/// `kernel` under zero padding. Internal unchecked kernel of [`conv2d_same`].
pub fn conv_frames(x: &Array2<f64>, h: usize, w: usize, kernel: &Array2<f64>) -> Array2<f64> {
    let k = kernel.nrows();
    let r = (k / 2) as isize;
    let m = x.ncols();
    let mut out = Array2::zeros((h * w, m));
    let mut frame = vec![0.0; h * w];
    for t in 0..m {
        for (dst, src) in frame.iter_mut().zip(x.column(t).iter()) {
            *dst = *src;
        }
        for y in 0..h as isize {
            for xp in 0..w as isize {
                let mut acc = 0.0;
                for dy in 0..k as isize {
                    let sy = y + dy - r;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for dx in 0..k as isize {
                        let sx = xp + dx - r;
                        if sx < 0 || sx >= w as isize {
                            continue;
                        }
                        acc += kernel[[dy as usize, dx as usize]]
                            * frame[(sy * w as isize + sx) as usize];
                    }
                }
                out[[(y * w as isize + xp) as usize, t]] = acc;
            }
        }
    }
    out
}

/// Adjoint of [`conv_frames`] in the Frobenius inner product:
/// `<conv(a, k), b> = <a, conv_adjoint(b, k)>`. Equals correlation with the
/// kernel flipped in both axes.
pub fn conv_frames_adjoint(g: &Array2<f64>, h: usize, w: usize, kernel: &Array2<f64>) -> Array2<f64> {
    let k = kernel.nrows();
    let flipped = Array2::from_shape_fn((k, k), |(i, j)| kernel[[k - 1 - i, k - 1 - j]]);
    conv_frames(g, h, w, &flipped)
}

/// Gradient of `sum(g * conv(x, kernel))` with respect to the kernel.
pub fn conv_kernel_grad(
    x: &Array2<f64>,
    g: &Array2<f64>,
    h: usize,
    w: usize,
    kernel_size: usize,
) -> Array2<f64> {
    let k = kernel_size;
    let r = (k / 2) as isize;
    let m = x.ncols();
    let mut grad = Array2::zeros((k, k));
    for t in 0..m {
        let xc = x.column(t);
        let gc = g.column(t);
        for dy in 0..k as isize {
            for dx in 0..k as isize {
                let mut acc = 0.0;
                for y in 0..h as isize {
                    let sy = y + dy - r;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for xp in 0..w as isize {
                        let sx = xp + dx - r;
                        if sx < 0 || sx >= w as isize {
                            continue;
                        }
                        acc += gc[(y * w as isize + xp) as usize]
                            * xc[(sy * w as isize + sx) as usize];
                    }
                }
                grad[[dy as usize, dx as usize]] += acc;
            }
        }
    }
    grad
}

pub fn frobenius_norm(x: &Array2<f64>) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Frobenius inner product `sum(a * b)`.
pub fn inner(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn matmul(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>> {
    if a.ncols() != b.nrows() {
        return Err(Error::shape(format!(
            "matmul {}x{} by {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    Ok(a.dot(b))
}

pub fn elementwise_mul(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>> {
    if a.dim() != b.dim() {
        return Err(Error::shape(format!(
            "elementwise_mul {:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(a * b)
}

/// Sum of absolute entries weighted per row: `sum_ij |q_i * x_ij|`.
pub fn weighted_l1(x: &Array2<f64>, q: &Array1<f64>) -> Result<f64> {
    if q.len() != x.nrows() {
        return Err(Error::shape(format!(
            "weight vector length {} vs {} rows",
            q.len(),
            x.nrows()
        )));
    }
    let mut acc = 0.0;
    for (i, row) in x.rows().into_iter().enumerate() {
        let qi = q[i].abs();
        acc += qi * row.iter().map(|v| v.abs()).sum::<f64>();
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_video(h: usize, w: usize, m: usize, seed: u64) -> VideoMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = Array2::from_shape_fn((h * w, m), |_| rng.random::<f64>() * 2.0 - 1.0);
        VideoMatrix::new(data, h, w).unwrap()
    }

    #[test]
    fn video_matrix_rejects_bad_shape() {
        let err = VideoMatrix::new(Array2::zeros((5, 2)), 2, 2).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch(_)));
    }

    #[test]
    fn video_matrix_rejects_nan() {
        let mut data = Array2::zeros((4, 2));
        data[[1, 0]] = f64::NAN;
        let err = VideoMatrix::new(data, 2, 2).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn kernel_must_be_odd_and_square() {
        assert!(ConvKernel::new(Array2::zeros((2, 2))).is_err());
        assert!(ConvKernel::new(Array2::zeros((3, 5))).is_err());
        assert!(ConvKernel::new(Array2::zeros((3, 3))).is_ok());
    }

    #[test]
    fn delta_kernel_is_identity() {
        let v = random_video(4, 5, 3, 7);
        let out = conv2d_same(&v, &ConvKernel::delta(3, 1.0)).unwrap();
        for (a, b) in v.data().iter().zip(out.data().iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn zero_kernel_annihilates() {
        let v = random_video(4, 4, 2, 9);
        let out = conv2d_same(&v, &ConvKernel::zeros(3)).unwrap();
        assert!(out.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn ones_kernel_on_constant_frame_counts_neighbors() {
        // 4x4 frame of ones, 3x3 all-ones kernel: corners see 4 taps,
        // edges 6, interior 9.
        let v = VideoMatrix::new(Array2::ones((16, 1)), 4, 4).unwrap();
        let k = ConvKernel::new(Array2::ones((3, 3))).unwrap();
        let out = conv2d_same(&v, &k).unwrap();
        let f = out.frame(0);
        let expected = array![
            [4.0, 6.0, 6.0, 4.0],
            [6.0, 9.0, 9.0, 6.0],
            [6.0, 9.0, 9.0, 6.0],
            [4.0, 6.0, 6.0, 4.0]
        ];
        assert_eq!(f, expected);
    }

    #[test]
    fn kernel_larger_than_frame_errors() {
        let v = random_video(3, 3, 1, 1);
        let err = conv2d_same(&v, &ConvKernel::zeros(5)).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch(_)));
    }

    #[test]
    fn convolution_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = Array2::from_shape_fn((20, 3), |_| rng.random::<f64>() - 0.5);
        let b = Array2::from_shape_fn((20, 3), |_| rng.random::<f64>() - 0.5);
        let k = Array2::from_shape_fn((3, 3), |_| rng.random::<f64>() - 0.5);
        let (alpha, beta) = (0.7, -1.3);
        let lhs = conv_frames(&(alpha * &a + beta * &b), 4, 5, &k);
        let rhs = alpha * &conv_frames(&a, 4, 5, &k) + beta * &conv_frames(&b, 4, 5, &k);
        for (x, y) in lhs.iter().zip(rhs.iter()) {
            assert!((x - y).abs() < 1e-12, "linearity violated: {x} vs {y}");
        }
    }

    #[test]
    fn convolution_adjoint_is_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for trial in 0..10 {
            let (h, w, m) = (5, 4, 2);
            let a = Array2::from_shape_fn((h * w, m), |_| rng.random::<f64>() - 0.5);
            let b = Array2::from_shape_fn((h * w, m), |_| rng.random::<f64>() - 0.5);
            let k = Array2::from_shape_fn((3, 3), |_| rng.random::<f64>() - 0.5);
            let lhs = inner(&conv_frames(&a, h, w, &k), &b);
            let rhs = inner(&a, &conv_frames_adjoint(&b, h, w, &k));
            assert!(
                (lhs - rhs).abs() < 1e-10,
                "adjoint mismatch on trial {trial}: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn kernel_grad_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (h, w, m) = (4, 4, 2);
        let x = Array2::from_shape_fn((h * w, m), |_| rng.random::<f64>() - 0.5);
        let g = Array2::from_shape_fn((h * w, m), |_| rng.random::<f64>() - 0.5);
        let k0 = Array2::from_shape_fn((3, 3), |_| rng.random::<f64>() - 0.5);
        let grad = conv_kernel_grad(&x, &g, h, w, 3);
        let eps = 1e-6;
        for i in 0..3 {
            for j in 0..3 {
                let mut kp = k0.clone();
                kp[[i, j]] += eps;
                let mut km = k0.clone();
                km[[i, j]] -= eps;
                let fp = inner(&conv_frames(&x, h, w, &kp), &g);
                let fm = inner(&conv_frames(&x, h, w, &km), &g);
                let fd = (fp - fm) / (2.0 * eps);
                assert!(
                    (grad[[i, j]] - fd).abs() < 1e-6,
                    "kernel grad [{i},{j}]: {} vs fd {}",
                    grad[[i, j]],
                    fd
                );
            }
        }
    }

    #[test]
    fn frobenius_of_345() {
        let x = array![[3.0, 0.0], [0.0, 4.0]];
        assert_eq!(frobenius_norm(&x), 5.0);
        assert_eq!(frobenius_norm(&Array2::zeros((3, 3))), 0.0);
    }

    #[test]
    fn matmul_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Array2::from_shape_fn((4, 3), |_| rng.random::<f64>());
        let id = Array2::eye(4);
        assert_eq!(matmul(&id, &x).unwrap(), x);
        assert!(matmul(&x, &id).is_err());
    }

    #[test]
    fn elementwise_mul_requires_same_shape() {
        let a = Array2::<f64>::ones((2, 3));
        let b = Array2::<f64>::ones((3, 2));
        assert!(elementwise_mul(&a, &b).is_err());
        let c = elementwise_mul(&a, &(2.0 * &a)).unwrap();
        assert!(c.iter().all(|&v| v == 2.0));
    }
}
