//! Training: compound MSE loss, Adam, the epoch loop with best-validation
//! selection, per-component evaluation, and the depth-sweep driver.

use std::time::Instant;

use ndarray::Array2;

use crate::datagen::{derive_seed, DataSample, Dataset};
use crate::error::{Error, Result};
use crate::net::{
    init_params_with, network_backward, network_forward, NetworkGrads, NetworkParams, Variant,
};
use crate::par;
use crate::solvers::{DecompositionState, SparsityThreshold};
use crate::tensor::Geometry;

/// Samples per parallel gradient chunk. Chunks are accumulated internally
/// in index order and then reduced in index order, so batch gradients are
/// bit-identical for any thread count.
const GRAD_CHUNK: usize = 4;

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub depth: usize,
    pub variant: Variant,
    pub corona_threshold: SparsityThreshold,
    pub kernel_size: usize,
    /// Global-norm gradient clip; `None` disables (the default).
    pub grad_clip: Option<f64>,
    pub detach_reference: bool,
}

impl TrainConfig {
    pub fn new(depth: usize, variant: Variant, seed: u64) -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 200,
            epochs: 50,
            seed,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            depth,
            variant,
            corona_threshold: SparsityThreshold::Scalar,
            kernel_size: 5,
            grad_clip: None,
            detach_reference: false,
        }
    }

    fn validate(&self, n_train: usize) -> Result<()> {
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::param("learning rate must be positive"));
        }
        if self.batch_size == 0 || self.batch_size > n_train.max(1) {
            return Err(Error::param(format!(
                "batch size {} invalid for {} training samples",
                self.batch_size, n_train
            )));
        }
        if self.depth == 0 {
            return Err(Error::param("depth must be at least 1"));
        }
        Ok(())
    }
}

/// Adam moment accumulators over the flattened parameter vector.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn zeros(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }
}

/// One Adam update with bias correction.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::shape(format!(
            "adam: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
    }
    Ok(())
}

/// Compound MSE loss over a batch and its cotangents:
/// `loss = (1/2N) sum ||l_i - l_hat_i||^2 + (1/2N) sum ||s_i - s_hat_i||^2`,
/// `d l_hat_i = (l_hat_i - l_i) / N`, `d s_hat_i = (s_hat_i - s_i) / N`.
pub fn compound_mse_loss(
    preds: &[DecompositionState],
    targets: &[&DataSample],
) -> Result<(f64, Vec<(Array2<f64>, Array2<f64>)>)> {
    if preds.is_empty() || preds.len() != targets.len() {
        return Err(Error::param(format!(
            "loss needs a nonempty matching batch, got {} preds vs {} targets",
            preds.len(),
            targets.len()
        )));
    }
    let n = preds.len() as f64;
    let mut loss = 0.0;
    let mut cotangents = Vec::with_capacity(preds.len());
    for (pred, target) in preds.iter().zip(targets) {
        if pred.low_rank.dim() != target.background.data().dim() {
            return Err(Error::shape("prediction/target shape mismatch"));
        }
        let dl = &pred.low_rank - target.background.data();
        let ds = &pred.sparse - target.foreground.data();
        loss += 0.5 / n * dl.iter().map(|v| v * v).sum::<f64>();
        loss += 0.5 / n * ds.iter().map(|v| v * v).sum::<f64>();
        cotangents.push((dl / n, ds / n));
    }
    Ok((loss, cotangents))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// One metrics row; `mse_*` are per-element (divided by n*m) so values are
/// resolution independent. Train rows aggregate the running batch losses of
/// the epoch; val/test rows come from a full evaluation pass.
#[derive(Clone, Copy, Debug)]
pub struct MetricsRow {
    pub epoch: usize,
    pub split: Split,
    pub mse_l: f64,
    pub mse_s: f64,
    pub mse_avg: f64,
    pub seconds: f64,
}

/// Per-component evaluation result.
#[derive(Clone, Copy, Debug)]
pub struct EvalMetrics {
    pub mse_l: f64,
    pub mse_s: f64,
    pub mse_avg: f64,
}

pub const METRICS_CSV_HEADER: &str = "epoch,split,mse_L,mse_S,mse_avg,seconds";

/// Renders metrics as CSV. With `zero_seconds` the wallclock column is
/// written as 0.000 so deterministic reruns are byte-identical.
pub fn metrics_to_csv(rows: &[MetricsRow], zero_seconds: bool) -> String {
    let mut out = String::from(METRICS_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let seconds = if zero_seconds { 0.0 } else { r.seconds };
        out.push_str(&format!(
            "{},{},{},{},{},{seconds:.3}\n",
            r.epoch,
            r.split.as_str(),
            r.mse_l,
            r.mse_s,
            r.mse_avg
        ));
    }
    out
}

struct ChunkOutcome {
    loss: f64,
    sq_err_l: f64,
    sq_err_s: f64,
    grads: NetworkGrads,
}

/// Forward/backward over one batch; gradients and losses are reduced over
/// fixed-size chunks in index order.
fn batch_gradients(
    params: &NetworkParams,
    batch: &[&DataSample],
) -> Result<(f64, f64, f64, NetworkGrads)> {
    let n = batch.len() as f64;
    let chunks: Vec<&[&DataSample]> = batch.chunks(GRAD_CHUNK).collect();
    let outcomes: Vec<Result<ChunkOutcome>> = par::map_slice(&chunks, |chunk| {
        let mut grads = NetworkGrads::zeros_like(params);
        let mut loss = 0.0;
        let mut sq_err_l = 0.0;
        let mut sq_err_s = 0.0;
        for sample in chunk.iter() {
            let (l, s, tape) = network_forward(sample.mixed.data(), params)?;
            let dl = &l - sample.background.data();
            let ds = &s - sample.foreground.data();
            let el = dl.iter().map(|v| v * v).sum::<f64>();
            let es = ds.iter().map(|v| v * v).sum::<f64>();
            loss += 0.5 / n * (el + es);
            sq_err_l += el;
            sq_err_s += es;
            let (g, _) = network_backward(params, &tape, &(&dl / n), &(&ds / n))?;
            grads.add_assign(&g);
        }
        Ok(ChunkOutcome {
            loss,
            sq_err_l,
            sq_err_s,
            grads,
        })
    });
    let mut total = NetworkGrads::zeros_like(params);
    let mut loss = 0.0;
    let mut sq_err_l = 0.0;
    let mut sq_err_s = 0.0;
    for outcome in outcomes {
        let o = outcome?;
        loss += o.loss;
        sq_err_l += o.sq_err_l;
        sq_err_s += o.sq_err_s;
        total.add_assign(&o.grads);
    }
    Ok((loss, sq_err_l, sq_err_s, total))
}

/// Mean per-element squared error of the network over a sample set.
pub fn evaluate(params: &NetworkParams, samples: &[DataSample]) -> Result<EvalMetrics> {
    if samples.is_empty() {
        return Err(Error::param("evaluate needs a nonempty sample set"));
    }
    let elems = (params.geometry.pixels() * params.geometry.frames) as f64;
    let chunks: Vec<&[DataSample]> = samples.chunks(GRAD_CHUNK * 2).collect();
    let partials: Vec<Result<(f64, f64)>> = par::map_slice(&chunks, |chunk| {
        let mut el = 0.0;
        let mut es = 0.0;
        for sample in chunk.iter() {
            let (l, s, _) = network_forward(sample.mixed.data(), params)?;
            el += (&l - sample.background.data())
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                / elems;
            es += (&s - sample.foreground.data())
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                / elems;
        }
        Ok((el, es))
    });
    let mut mse_l = 0.0;
    let mut mse_s = 0.0;
    for p in partials {
        let (el, es) = p?;
        mse_l += el;
        mse_s += es;
    }
    mse_l /= samples.len() as f64;
    mse_s /= samples.len() as f64;
    Ok(EvalMetrics {
        mse_l,
        mse_s,
        mse_avg: 0.5 * (mse_l + mse_s),
    })
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the best-validation epoch.
    pub params: NetworkParams,
    pub metrics: Vec<MetricsRow>,
    pub best_epoch: usize,
    pub best_val: EvalMetrics,
}

/// Trains an unrolled network with Adam and seeded shuffling, returning the
/// parameters of the epoch with the best validation `mse_avg`.
pub fn train(
    train_set: &[DataSample],
    val_set: &[DataSample],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::param("train and validation splits must be nonempty"));
    }
    config.validate(train_set.len())?;
    let geometry: Geometry = train_set[0].mixed.geometry();
    let mut params = init_params_with(
        config.depth,
        geometry,
        config.variant,
        config.kernel_size,
        derive_seed(config.seed, 0xC0),
    )?;
    params.corona_threshold = config.corona_threshold;
    params.detach_reference = config.detach_reference;

    let mut flat = params.to_flat();
    let mut adam = AdamState::zeros(flat.len());
    let elems = (geometry.pixels() * geometry.frames) as f64;

    let mut metrics = Vec::new();
    let mut best_epoch = 0usize;
    let mut best_val = evaluate(&params, val_set)?;
    let mut best_flat = flat.clone();

    for epoch in 1..=config.epochs {
        let start = Instant::now();
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        shuffle(&mut order, derive_seed(config.seed, 0xE0 + epoch as u64));

        let mut epoch_sq_l = 0.0;
        let mut epoch_sq_s = 0.0;
        let mut seen = 0usize;
        for (batch_idx, batch_indices) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&DataSample> = batch_indices.iter().map(|&i| &train_set[i]).collect();
            params.assign_from_flat(&flat)?;
            let (loss, sq_l, sq_s, grads) = batch_gradients(&params, &batch)?;
            if !loss.is_finite() {
                return Err(Error::numerical(format!(
                    "training diverged: loss {loss} at epoch {epoch}, batch {batch_idx} \
                     (lr {}, depth {}, variant {})",
                    config.learning_rate,
                    config.depth,
                    config.variant.as_str()
                )));
            }
            epoch_sq_l += sq_l;
            epoch_sq_s += sq_s;
            seen += batch.len();

            let mut grad_flat = grads.to_flat();
            if let Some(clip) = config.grad_clip {
                let norm = grad_flat.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > clip {
                    let scale = clip / norm;
                    grad_flat.iter_mut().for_each(|g| *g *= scale);
                }
            }
            adam_step(
                &mut flat,
                &grad_flat,
                &mut adam,
                config.learning_rate,
                config.beta1,
                config.beta2,
                config.epsilon,
            )?;
        }

        params.assign_from_flat(&flat)?;
        let val = evaluate(&params, val_set)?;
        let seconds = start.elapsed().as_secs_f64();
        let train_l = epoch_sq_l / (seen as f64 * elems);
        let train_s = epoch_sq_s / (seen as f64 * elems);
        metrics.push(MetricsRow {
            epoch,
            split: Split::Train,
            mse_l: train_l,
            mse_s: train_s,
            mse_avg: 0.5 * (train_l + train_s),
            seconds,
        });
        metrics.push(MetricsRow {
            epoch,
            split: Split::Val,
            mse_l: val.mse_l,
            mse_s: val.mse_s,
            mse_avg: val.mse_avg,
            seconds,
        });
        if val.mse_avg < best_val.mse_avg {
            best_val = val;
            best_epoch = epoch;
            best_flat = flat.clone();
        }
    }

    params.assign_from_flat(&best_flat)?;
    Ok(TrainOutcome {
        params,
        metrics,
        best_epoch,
        best_val,
    })
}

/// Fisher-Yates with a splitmix-derived stream, self-contained so shuffles
/// never depend on rand's distribution internals.
fn shuffle(indices: &mut [usize], seed: u64) {
    let mut state = seed;
    let mut next = || {
        state = derive_seed(state, 0x5EED);
        state
    };
    for i in (1..indices.len()).rev() {
        let j = (next() % (i as u64 + 1)) as usize;
        indices.swap(i, j);
    }
}

/// One sweep cell result; failures carry the error text so the sweep can
/// continue past a broken cell.
#[derive(Clone, Debug)]
pub struct SweepRow {
    pub variant: Variant,
    pub depth: usize,
    pub outcome: std::result::Result<EvalMetrics, String>,
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

pub const SWEEP_CSV_HEADER: &str = "variant,depth,mse_L,mse_S,mse_avg";

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SWEEP_CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            match &row.outcome {
                Ok(m) => out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    row.variant.as_str(),
                    row.depth,
                    m.mse_l,
                    m.mse_s,
                    m.mse_avg
                )),
                Err(_) => out.push_str(&format!(
                    "{},{},NaN,NaN,NaN\n",
                    row.variant.as_str(),
                    row.depth
                )),
            }
        }
        out
    }

    pub fn cell(&self, variant: Variant, depth: usize) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.variant == variant && r.depth == depth)
    }
}

/// Trains every (variant, depth) cell independently with a fresh
/// cell-derived seed and reports validation metrics. Cell seeds depend only
/// on the base seed, variant, and depth, so rows are independent of sweep
/// order.
pub fn depth_sweep(
    dataset: &Dataset,
    depths: &[usize],
    variants: &[Variant],
    config: &TrainConfig,
) -> Result<SweepReport> {
    if depths.is_empty() || variants.is_empty() {
        return Err(Error::param("sweep needs at least one depth and one variant"));
    }
    let mut rows = Vec::new();
    for &variant in variants {
        for &depth in depths {
            let mut cell = config.clone();
            cell.variant = variant;
            cell.depth = depth;
            let tag = (depth as u64) << 8 | matches!(variant, Variant::RefRpca) as u64;
            cell.seed = derive_seed(config.seed, 0x57EE_D000 + tag);
            let outcome = train(&dataset.train, &dataset.val, &cell)
                .map(|o| o.best_val)
                .map_err(|e| e.to_string());
            rows.push(SweepRow {
                variant,
                depth,
                outcome,
            });
        }
    }
    Ok(SweepReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate, DataGenConfig, ForegroundSource};
    use ndarray::Array2;

    fn tiny_dataset(seed: u64) -> Dataset {
        let config = DataGenConfig {
            geometry: Geometry::new(8, 8, 5).unwrap(),
            rank: 2,
            n_train: 12,
            n_val: 4,
            n_test: 4,
            seed,
            source: ForegroundSource::Sprites,
        };
        generate(&config).unwrap()
    }

    fn tiny_config(depth: usize, variant: Variant) -> TrainConfig {
        let mut c = TrainConfig::new(depth, variant, 77);
        c.batch_size = 4;
        c.epochs = 2;
        c.kernel_size = 3;
        c
    }

    #[test]
    fn loss_zero_for_perfect_predictions() {
        let ds = tiny_dataset(1);
        let preds: Vec<DecompositionState> = ds
            .train
            .iter()
            .take(3)
            .map(|s| DecompositionState {
                low_rank: s.background.data().clone(),
                sparse: s.foreground.data().clone(),
            })
            .collect();
        let targets: Vec<&DataSample> = ds.train.iter().take(3).collect();
        let (loss, cots) = compound_mse_loss(&preds, &targets).unwrap();
        assert_eq!(loss, 0.0);
        for (dl, ds_) in cots {
            assert!(dl.iter().all(|&v| v == 0.0));
            assert!(ds_.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn loss_hand_sum() {
        // N = 1, l_hat - l = all-ones 2x2, s_hat = s: loss = 0.5 * 4 = 2.
        let g = Geometry::new(2, 2, 2).unwrap();
        let zero = crate::tensor::VideoMatrix::zeros(g);
        let sample = DataSample {
            mixed: zero.clone(),
            background: zero.clone(),
            foreground: zero.clone(),
            scale: 1.0,
        };
        let pred = DecompositionState {
            low_rank: Array2::ones((4, 2)),
            sparse: Array2::zeros((4, 2)),
        };
        let (loss, cots) = compound_mse_loss(&[pred], &[&sample]).unwrap();
        assert_eq!(loss, 4.0); // 0.5 * 8 entries of 1
        assert!(cots[0].0.iter().all(|&v| v == 1.0));
        // And the documented 2x2 example: 4 entries.
        let g = Geometry::new(2, 2, 1).unwrap();
        let zero = crate::tensor::VideoMatrix::zeros(g);
        let sample = DataSample {
            mixed: zero.clone(),
            background: zero.clone(),
            foreground: zero.clone(),
            scale: 1.0,
        };
        let pred = DecompositionState {
            low_rank: Array2::ones((4, 1)),
            sparse: Array2::zeros((4, 1)),
        };
        let (loss, _) = compound_mse_loss(&[pred], &[&sample]).unwrap();
        assert_eq!(loss, 2.0);
    }

    #[test]
    fn loss_matches_term_by_term_oracle_and_fd() {
        let ds = tiny_dataset(2);
        let targets: Vec<&DataSample> = ds.train.iter().take(4).collect();
        let mut rng_state = 99u64;
        let mut noise = || {
            rng_state = derive_seed(rng_state, 17);
            (rng_state % 1000) as f64 / 1000.0 - 0.5
        };
        let preds: Vec<DecompositionState> = targets
            .iter()
            .map(|s| DecompositionState {
                low_rank: s.background.data().mapv(|v| v + 0.1 * noise()),
                sparse: s.foreground.data().mapv(|v| v + 0.1 * noise()),
            })
            .collect();
        let (loss, cots) = compound_mse_loss(&preds, &targets).unwrap();

        // Term-by-term oracle.
        let n = 4.0;
        let mut expected = 0.0;
        for (p, t) in preds.iter().zip(&targets) {
            expected += (p.low_rank.clone() - t.background.data())
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                / (2.0 * n);
            expected += (p.sparse.clone() - t.foreground.data())
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                / (2.0 * n);
        }
        assert!((loss - expected).abs() < 1e-12 * expected.max(1.0));

        // Cotangent fidelity against finite differences of the scalar loss.
        let eps = 1e-6;
        for (i, j) in [(0usize, 1usize), (2, 3)] {
            let mut bumped = preds.clone();
            bumped[0].low_rank[[i, j]] += eps;
            let (lp, _) = compound_mse_loss(&bumped, &targets).unwrap();
            bumped[0].low_rank[[i, j]] -= 2.0 * eps;
            let (lm, _) = compound_mse_loss(&bumped, &targets).unwrap();
            let fd = (lp - lm) / (2.0 * eps);
            let an = cots[0].0[[i, j]];
            assert!(
                (an - fd).abs() / an.abs().max(fd.abs()).max(1e-9) < 1e-6,
                "cotangent ({i},{j}): {an} vs {fd}"
            );
        }
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut p = vec![1.0, -2.0, 3.0];
        let mut st = AdamState::zeros(3);
        adam_step(&mut p, &[0.0; 3], &mut st, 1e-3, 0.9, 0.999, 1e-8).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn adam_single_step_hand_oracle() {
        // One step from zero moments with g = 1:
        // m_hat = 1, v_hat = 1, delta = -lr / (1 + eps).
        let mut p = vec![0.0];
        let mut st = AdamState::zeros(1);
        adam_step(&mut p, &[1.0], &mut st, 1e-3, 0.9, 0.999, 1e-8).unwrap();
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-18, "{} vs {expected}", p[0]);
    }

    #[test]
    fn adam_constant_gradient_approaches_lr_steps() {
        let mut p = vec![0.0];
        let mut st = AdamState::zeros(1);
        let mut last = 0.0;
        for _ in 0..500 {
            last = p[0];
            adam_step(&mut p, &[2.5], &mut st, 1e-3, 0.9, 0.999, 1e-8).unwrap();
        }
        let step = (p[0] - last).abs();
        assert!((step - 1e-3).abs() < 1e-5, "asymptotic step {step}");
    }

    #[test]
    fn evaluate_perfect_and_zero_predictors() {
        let ds = tiny_dataset(3);
        // An untrained 1-layer net with zero kernels predicts all zeros.
        let mut params = init_params_with(1, ds.geometry, Variant::Corona, 3, 1).unwrap();
        for k in params.layers[0].kernels.iter_mut() {
            *k = crate::tensor::ConvKernel::zeros(3);
        }
        let m = evaluate(&params, &ds.val).unwrap();
        // Zero predictor: mse equals mean squared target magnitude.
        let elems = (ds.geometry.pixels() * ds.geometry.frames) as f64;
        let expect_l = ds
            .val
            .iter()
            .map(|s| s.background.data().iter().map(|v| v * v).sum::<f64>() / elems)
            .sum::<f64>()
            / ds.val.len() as f64;
        assert!((m.mse_l - expect_l).abs() < 1e-12);
        assert!((m.mse_avg - 0.5 * (m.mse_l + m.mse_s)).abs() < 1e-15);
    }

    #[test]
    fn train_descends_and_is_deterministic() {
        let ds = tiny_dataset(4);
        let config = tiny_config(1, Variant::Corona);
        let out1 = train(&ds.train, &ds.val, &config).unwrap();
        // Final train loss below the first epoch's.
        let first = out1.metrics.iter().find(|r| r.split == Split::Train).unwrap();
        let last = out1
            .metrics
            .iter()
            .rev()
            .find(|r| r.split == Split::Train)
            .unwrap();
        assert!(
            last.mse_avg < first.mse_avg,
            "no descent: {} -> {}",
            first.mse_avg,
            last.mse_avg
        );
        let out2 = train(&ds.train, &ds.val, &config).unwrap();
        assert_eq!(
            metrics_to_csv(&out1.metrics, true),
            metrics_to_csv(&out2.metrics, true)
        );
        assert_eq!(out1.params.to_flat(), out2.params.to_flat());
    }

    #[test]
    fn zero_epochs_returns_initial_params() {
        let ds = tiny_dataset(5);
        let mut config = tiny_config(1, Variant::RefRpca);
        config.epochs = 0;
        let out = train(&ds.train, &ds.val, &config).unwrap();
        assert!(out.metrics.is_empty());
        assert_eq!(out.best_epoch, 0);
        let init = init_params_with(
            1,
            ds.geometry,
            Variant::RefRpca,
            3,
            derive_seed(config.seed, 0xC0),
        )
        .unwrap();
        assert_eq!(out.params.to_flat(), init.to_flat());
    }

    #[test]
    fn sweep_emits_one_row_per_cell_and_is_order_independent() {
        let ds = tiny_dataset(6);
        let mut config = tiny_config(1, Variant::Corona);
        config.epochs = 1;
        let report = depth_sweep(&ds, &[1], &[Variant::Corona], &config).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert!(report.rows[0].outcome.is_ok());

        let both = depth_sweep(&ds, &[1, 2], &[Variant::Corona, Variant::RefRpca], &config)
            .unwrap();
        assert_eq!(both.rows.len(), 4);
        // The corona d=1 cell is unchanged by running more cells around it.
        let single = report.cell(Variant::Corona, 1).unwrap();
        let multi = both.cell(Variant::Corona, 1).unwrap();
        let (a, b) = (
            single.outcome.as_ref().unwrap(),
            multi.outcome.as_ref().unwrap(),
        );
        assert_eq!(a.mse_avg, b.mse_avg);
        let csv = both.to_csv();
        assert!(csv.starts_with(SWEEP_CSV_HEADER));
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn shuffle_is_deterministic_and_permutes() {
        let mut a: Vec<usize> = (0..50).collect();
        let mut b: Vec<usize> = (0..50).collect();
        shuffle(&mut a, 9);
        shuffle(&mut b, 9);
        assert_eq!(a, b);
        assert_ne!(a, (0..50).collect::<Vec<_>>());
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
    }
}
