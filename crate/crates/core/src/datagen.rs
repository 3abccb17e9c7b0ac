//! Synthetic video samples: rank-r Gaussian backgrounds plus moving-sprite
//! or moving-digit foregrounds, composed and normalized so every sample
//! satisfies `mixed = background + foreground` exactly.

use std::io::Read;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::io::{ContainerReader, ContainerWriter};
use crate::par;
use crate::tensor::{Geometry, VideoMatrix};

/// Deterministic per-stream seed derivation (splitmix-style finalizer over
/// `master ^ stream * golden`); distinct streams give distinct seeds.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One training sample: the observed video, its ground-truth background and
/// foreground, and the normalization divisor that brought the raw
/// composition to unit range.
#[derive(Clone, Debug)]
pub struct DataSample {
    pub mixed: VideoMatrix,
    pub background: VideoMatrix,
    pub foreground: VideoMatrix,
    pub scale: f64,
}

/// Where foregrounds come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Sprites,
    Mnist,
}

/// Foreground generator selection for [`generate`].
#[derive(Clone, Debug)]
pub enum ForegroundSource {
    Sprites,
    MnistDigits(Vec<DigitImage>),
}

impl ForegroundSource {
    fn kind(&self) -> SourceKind {
        match self {
            ForegroundSource::Sprites => SourceKind::Sprites,
            ForegroundSource::MnistDigits(_) => SourceKind::Mnist,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DataGenConfig {
    pub geometry: Geometry,
    pub rank: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub seed: u64,
    pub source: ForegroundSource,
}

impl DataGenConfig {
    /// Desk-scale sprite defaults: 800/100/100 sequences of 20 frames at
    /// 32x32 with a rank-5 background.
    pub fn desk(seed: u64) -> Self {
        DataGenConfig {
            geometry: Geometry::new(32, 32, 20).expect("static geometry"),
            rank: 5,
            n_train: 800,
            n_val: 100,
            n_test: 100,
            seed,
            source: ForegroundSource::Sprites,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.geometry.pixels().min(self.geometry.frames);
        if self.rank > p {
            return Err(Error::param(format!(
                "background rank {} exceeds min(n, m) = {p}",
                self.rank
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub geometry: Geometry,
    pub rank: usize,
    pub seed: u64,
    pub source: SourceKind,
    pub train: Vec<DataSample>,
    pub val: Vec<DataSample>,
    pub test: Vec<DataSample>,
}

/// Rank-`r` background `u v^T` with i.i.d. standard normal factors.
pub fn gen_low_rank_background(n: usize, m: usize, rank: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let u = Array2::from_shape_fn((n, rank), |_| normal());
    let v = Array2::from_shape_fn((m, rank), |_| normal());
    u.dot(&v.t())
}

// ---------------------------------------------------------------------------
// Bouncing bodies and sprites
// ---------------------------------------------------------------------------

/// Integer top-left position with wall reflection; velocities are small
/// integers so rasterized centroids move by exactly the velocity away from
/// walls.
#[derive(Clone, Copy, Debug)]
struct BouncingBody {
    x: i64,
    y: i64,
    vx: i64,
    vy: i64,
    max_x: i64,
    max_y: i64,
}

impl BouncingBody {
    fn step(&mut self) {
        self.x += self.vx;
        self.y += self.vy;
        if self.x < 0 {
            self.x = -self.x;
            self.vx = -self.vx;
        } else if self.x > self.max_x {
            self.x = 2 * self.max_x - self.x;
            self.vx = -self.vx;
        }
        if self.y < 0 {
            self.y = -self.y;
            self.vy = -self.vy;
        } else if self.y > self.max_y {
            self.y = 2 * self.max_y - self.y;
            self.vy = -self.vy;
        }
    }
}

fn random_velocity(rng: &mut ChaCha8Rng) -> i64 {
    *[-2i64, -1, 1, 2].get(rng.random_range(0..4)).unwrap()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum SpriteShape {
    Rect,
    Ellipse,
}

#[derive(Clone, Debug)]
struct Sprite {
    shape: SpriteShape,
    width: i64,
    height: i64,
    intensity: f64,
    /// Top-left position per frame.
    positions: Vec<(i64, i64)>,
}

impl Sprite {
    fn paint(&self, frame: &mut [f64], fw: i64, fh: i64, t: usize) {
        let (x0, y0) = self.positions[t];
        let (cx, cy) = (
            x0 as f64 + (self.width - 1) as f64 / 2.0,
            y0 as f64 + (self.height - 1) as f64 / 2.0,
        );
        let (rx, ry) = (self.width as f64 / 2.0, self.height as f64 / 2.0);
        for dy in 0..self.height {
            for dx in 0..self.width {
                let (px, py) = (x0 + dx, y0 + dy);
                if px < 0 || px >= fw || py < 0 || py >= fh {
                    continue;
                }
                let inside = match self.shape {
                    SpriteShape::Rect => true,
                    SpriteShape::Ellipse => {
                        let nx = (px as f64 - cx) / rx;
                        let ny = (py as f64 - cy) / ry;
                        nx * nx + ny * ny <= 1.0
                    }
                };
                if inside {
                    let idx = (py * fw + px) as usize;
                    frame[idx] = frame[idx].max(self.intensity);
                }
            }
        }
    }
}

struct SpriteScene {
    sprites: Vec<Sprite>,
    height: usize,
    width: usize,
    frames: usize,
}

impl SpriteScene {
    fn sample(height: usize, width: usize, frames: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = (height * width) as f64;
        // Cap each sprite's bounding box at n/8 pixels so two sprites stay
        // under the 25% per-frame sparsity budget.
        let cap = ((n / 8.0).sqrt().floor() as i64)
            .min(height.min(width) as i64 - 1)
            .max(1);
        let lo = (cap / 2).max(1);
        let count = 1 + rng.random_range(0..2usize);
        let sprites = (0..count)
            .map(|_| {
                let shape = if rng.random::<f64>() < 0.5 {
                    SpriteShape::Rect
                } else {
                    SpriteShape::Ellipse
                };
                let odd = |v: i64| if v % 2 == 0 { (v - 1).max(1) } else { v };
                let mut w = rng.random_range(lo..=cap);
                let mut h = rng.random_range(lo..=cap);
                if shape == SpriteShape::Ellipse {
                    // Odd extents keep the rasterized mask symmetric, so the
                    // centroid equals the geometric center exactly.
                    w = odd(w);
                    h = odd(h);
                }
                let max_x = width as i64 - w;
                let max_y = height as i64 - h;
                let mut body = BouncingBody {
                    x: rng.random_range(0..=max_x),
                    y: rng.random_range(0..=max_y),
                    vx: random_velocity(&mut rng),
                    vy: random_velocity(&mut rng),
                    max_x,
                    max_y,
                };
                let mut positions = Vec::with_capacity(frames);
                for t in 0..frames {
                    if t > 0 {
                        body.step();
                    }
                    positions.push((body.x, body.y));
                }
                Sprite {
                    shape,
                    width: w,
                    height: h,
                    intensity: 0.4 + 0.6 * rng.random::<f64>(),
                    positions,
                }
            })
            .collect();
        SpriteScene {
            sprites,
            height,
            width,
            frames,
        }
    }

    fn render(&self) -> VideoMatrix {
        let (h, w) = (self.height as i64, self.width as i64);
        let n = self.height * self.width;
        let mut data = Array2::zeros((n, self.frames));
        let mut frame = vec![0.0; n];
        for t in 0..self.frames {
            frame.iter_mut().for_each(|v| *v = 0.0);
            for sprite in &self.sprites {
                sprite.paint(&mut frame, w, h, t);
            }
            for (i, &v) in frame.iter().enumerate() {
                data[[i, t]] = v;
            }
        }
        VideoMatrix::new(data, self.height, self.width).expect("rendered scene is finite")
    }
}

/// One or two rigid sprites bouncing off the frame walls; background pixels
/// are exactly zero and at most a quarter of each frame is covered.
pub fn gen_moving_sprites(height: usize, width: usize, frames: usize, seed: u64) -> VideoMatrix {
    SpriteScene::sample(height, width, frames, seed).render()
}

// ---------------------------------------------------------------------------
// IDX ingestion and moving digits
// ---------------------------------------------------------------------------

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// A grayscale source digit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DigitImage {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

fn read_u32_be(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::IdxTruncated {
            expected: at + 4,
            found: bytes.len(),
        })
        .map_err(|e| {
            let _ = path;
            e
        })
}

/// Parses a big-endian IDX image file (magic 0x00000803).
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<Vec<DigitImage>> {
    let magic = read_u32_be(bytes, 0, path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::IdxMagic {
            expected: IDX_IMAGES_MAGIC,
            found: magic,
        });
    }
    let count = read_u32_be(bytes, 4, path)? as usize;
    let rows = read_u32_be(bytes, 8, path)? as usize;
    let cols = read_u32_be(bytes, 12, path)? as usize;
    let expected = 16 + count * rows * cols;
    if bytes.len() < expected {
        return Err(Error::IdxTruncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::Format {
            path: path.display().to_string(),
            reason: format!("{} trailing bytes after image payload", bytes.len() - expected),
        });
    }
    Ok((0..count)
        .map(|i| {
            let at = 16 + i * rows * cols;
            DigitImage {
                rows,
                cols,
                pixels: bytes[at..at + rows * cols].to_vec(),
            }
        })
        .collect())
}

/// Parses a big-endian IDX label file (magic 0x00000801).
pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    let magic = read_u32_be(bytes, 0, path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::IdxMagic {
            expected: IDX_LABELS_MAGIC,
            found: magic,
        });
    }
    let count = read_u32_be(bytes, 4, path)? as usize;
    let expected = 8 + count;
    if bytes.len() < expected {
        return Err(Error::IdxTruncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::Format {
            path: path.display().to_string(),
            reason: format!("{} trailing bytes after label payload", bytes.len() - expected),
        });
    }
    Ok(bytes[8..8 + count].to_vec())
}

/// Loads an MNIST-style image/label pair from disk.
pub fn ingest_mnist_idx(
    images_path: &Path,
    labels_path: &Path,
) -> Result<(Vec<DigitImage>, Vec<u8>)> {
    let mut images_bytes = Vec::new();
    std::fs::File::open(images_path)?.read_to_end(&mut images_bytes)?;
    let mut labels_bytes = Vec::new();
    std::fs::File::open(labels_path)?.read_to_end(&mut labels_bytes)?;
    let images = parse_idx_images(&images_bytes, images_path)?;
    let labels = parse_idx_labels(&labels_bytes, labels_path)?;
    if images.len() != labels.len() {
        return Err(Error::IdxCountMismatch {
            images: images.len(),
            labels: labels.len(),
        });
    }
    Ok((images, labels))
}

/// Nearest-neighbor resample of a digit to `side x side`, intensities
/// scaled to [0, 1].
fn resample_digit(digit: &DigitImage, side: usize) -> Array2<f64> {
    Array2::from_shape_fn((side, side), |(y, x)| {
        let sy = y * digit.rows / side;
        let sx = x * digit.cols / side;
        digit.pixels[sy * digit.cols + sx] as f64 / 255.0
    })
}

/// Two seeded digits scaled to fit, bouncing with wall reflection and
/// composited with a per-pixel max.
pub fn gen_moving_mnist(
    digits: &[DigitImage],
    height: usize,
    width: usize,
    frames: usize,
    seed: u64,
) -> Result<VideoMatrix> {
    if digits.is_empty() {
        return Err(Error::param("digit collection is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = ((height.min(width) as f64 * 0.44).round() as usize)
        .clamp(4, height.min(width));
    let n = height * width;
    let mut data = Array2::zeros((n, frames));
    for _ in 0..2 {
        let digit = &digits[rng.random_range(0..digits.len())];
        let image = resample_digit(digit, side);
        let max_x = (width - side) as i64;
        let max_y = (height - side) as i64;
        let mut body = BouncingBody {
            x: rng.random_range(0..=max_x),
            y: rng.random_range(0..=max_y),
            vx: random_velocity(&mut rng),
            vy: random_velocity(&mut rng),
            max_x,
            max_y,
        };
        for t in 0..frames {
            if t > 0 {
                body.step();
            }
            for dy in 0..side {
                for dx in 0..side {
                    let px = body.x + dx as i64;
                    let py = body.y + dy as i64;
                    if px < 0 || px >= width as i64 || py < 0 || py >= height as i64 {
                        continue;
                    }
                    let idx = (py as usize) * width + px as usize;
                    let v = image[[dy, dx]];
                    if v > data[[idx, t]] {
                        data[[idx, t]] = v;
                    }
                }
            }
        }
    }
    VideoMatrix::new(data, height, width)
}

// ---------------------------------------------------------------------------
// Composition and dataset assembly
// ---------------------------------------------------------------------------

/// Composes a sample and normalizes to unit range: one shared affine map,
/// with the offset absorbed into the background (raising its rank by at
/// most one); `mixed` is defined as the sum of the normalized parts, so
/// additivity holds to rounding error and the range slack is at most a few
/// ulps.
pub fn compose_sample(foreground: VideoMatrix, background: Array2<f64>) -> Result<DataSample> {
    let g = foreground.geometry();
    if background.dim() != foreground.data().dim() {
        return Err(Error::shape(format!(
            "background {:?} vs foreground {:?}",
            background.dim(),
            foreground.data().dim()
        )));
    }
    let raw = &background + foreground.data();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in raw.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let scale = (hi - lo).max(1e-12);
    let bg = background.mapv(|v| (v - lo) / scale);
    let fg = foreground.data().mapv(|v| v / scale);
    let mixed = &bg + &fg;
    Ok(DataSample {
        mixed: VideoMatrix::new(mixed, g.height, g.width)?,
        background: VideoMatrix::new(bg, g.height, g.width)?,
        foreground: VideoMatrix::new(fg, g.height, g.width)?,
        scale,
    })
}

fn generate_one(config: &DataGenConfig, index: u64) -> Result<DataSample> {
    let g = config.geometry;
    let sample_seed = derive_seed(config.seed, index);
    let bg_seed = derive_seed(sample_seed, 1);
    let fg_seed = derive_seed(sample_seed, 2);
    let background = gen_low_rank_background(g.pixels(), g.frames, config.rank, bg_seed);
    let foreground = match &config.source {
        ForegroundSource::Sprites => gen_moving_sprites(g.height, g.width, g.frames, fg_seed),
        ForegroundSource::MnistDigits(digits) => {
            gen_moving_mnist(digits, g.height, g.width, g.frames, fg_seed)?
        }
    };
    compose_sample(foreground, background)
}

/// Generates the full train/val/test dataset; per-sample seeds are derived
/// from the master seed by global index, so splits never reuse a sequence
/// and generation order (or parallelism) cannot change the data.
pub fn generate(config: &DataGenConfig) -> Result<Dataset> {
    config.validate()?;
    let total = config.n_train + config.n_val + config.n_test;
    let samples: Vec<Result<DataSample>> =
        par::map_range(total, |i| generate_one(config, i as u64));
    let mut all = Vec::with_capacity(total);
    for s in samples {
        all.push(s?);
    }
    let test = all.split_off(config.n_train + config.n_val);
    let val = all.split_off(config.n_train);
    Ok(Dataset {
        geometry: config.geometry,
        rank: config.rank,
        seed: config.seed,
        source: config.source.kind(),
        train: all,
        val,
        test,
    })
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

#[derive(serde::Serialize, serde::Deserialize)]
struct DatasetManifest {
    kind: String,
    geometry: Geometry,
    rank: usize,
    seed: u64,
    source: SourceKind,
    counts: [usize; 3],
    normalization: String,
    scales: Vec<f64>,
}

/// Writes the dataset as a single container: manifest, then per sample the
/// background and foreground matrices (the mixed matrix is their exact sum
/// and is rebuilt on load).
pub fn save_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    let manifest = DatasetManifest {
        kind: "dataset".into(),
        geometry: dataset.geometry,
        rank: dataset.rank,
        seed: dataset.seed,
        source: dataset.source,
        counts: [dataset.train.len(), dataset.val.len(), dataset.test.len()],
        normalization: "per-sequence".into(),
        scales: dataset
            .train
            .iter()
            .chain(&dataset.val)
            .chain(&dataset.test)
            .map(|s| s.scale)
            .collect(),
    };
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut writer = ContainerWriter::new(file, &manifest)?;
    for sample in dataset.train.iter().chain(&dataset.val).chain(&dataset.test) {
        writer.tensor2(sample.background.data())?;
        writer.tensor2(sample.foreground.data())?;
    }
    writer.finish()
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut reader = ContainerReader::new(file, path)?;
    let manifest: DatasetManifest = reader.header()?;
    if manifest.kind != "dataset" {
        return Err(Error::Format {
            path: path.display().to_string(),
            reason: format!("container kind '{}' is not a dataset", manifest.kind),
        });
    }
    let total: usize = manifest.counts.iter().sum();
    if manifest.scales.len() != total {
        return Err(Error::Format {
            path: path.display().to_string(),
            reason: format!(
                "manifest count mismatch: {} scales for {total} samples",
                manifest.scales.len()
            ),
        });
    }
    let g = manifest.geometry;
    let mut all = Vec::with_capacity(total);
    for i in 0..total {
        let background = reader.tensor2().map_err(|e| {
            Error::Format {
                path: path.display().to_string(),
                reason: format!("sample {i}: {e} (manifest count mismatch?)"),
            }
        })?;
        let foreground = reader.tensor2()?;
        let mixed = &background + &foreground;
        all.push(DataSample {
            mixed: VideoMatrix::new(mixed, g.height, g.width)?,
            background: VideoMatrix::new(background, g.height, g.width)?,
            foreground: VideoMatrix::new(foreground, g.height, g.width)?,
            scale: manifest.scales[i],
        });
    }
    reader.expect_end()?;
    let test = all.split_off(manifest.counts[0] + manifest.counts[1]);
    let val = all.split_off(manifest.counts[0]);
    Ok(Dataset {
        geometry: g,
        rank: manifest.rank,
        seed: manifest.seed,
        source: manifest.source,
        train: all,
        val,
        test,
    })
}
