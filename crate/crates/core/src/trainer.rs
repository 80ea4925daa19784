//! Fitting one network to one image.
//!
//! All patches share a single network. Each epoch visits every patch once
//! in a seeded random order, split into minibatches; every minibatch takes
//! one Adam step on the mean per-patch MSE. PSNR/SSIM for the epoch are
//! computed from the outputs the training pass already produced, so no
//! extra forward pass is spent on monitoring.
//!
//! Per-patch gradients inside a minibatch may be computed on several
//! threads; they are summed in `f64` in minibatch order, so results are
//! bit-identical regardless of thread count.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inr_net::{init_weights, NetConfig, Network, Real, Tensor, Weights};
use crate::pixel_io::{stitch, Image, PatchGrid};
use crate::quality_metrics::{self, MetricsReport};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Arithmetic used for the forward/backward passes. Weights are always
/// stored and returned as `f32`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Cosine decay of the learning rate from `lr` to zero over `epochs`.
    pub cosine: bool,
    pub batch_patches: usize,
    pub seed: u64,
    /// Stop as soon as an epoch's PSNR reaches this value.
    pub target_psnr: Option<f64>,
    /// Log progress every this many epochs; 0 disables logging.
    pub log_every: usize,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            lr: 5e-3,
            cosine: true,
            batch_patches: 4,
            seed: 0,
            target_psnr: None,
            log_every: 0,
            precision: Precision::F32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, n_patches: usize) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        if self.batch_patches == 0 || self.batch_patches > n_patches {
            return Err(Error::Config(format!("batch of {} patches outside 1..={n_patches}", self.batch_patches)));
        }
        Ok(())
    }

    fn lr_at(&self, epoch: usize) -> f64 {
        if self.cosine {
            let progress = (epoch - 1) as f64 / self.epochs as f64;
            0.5 * self.lr * (1.0 + (PI * progress).cos())
        } else {
            self.lr
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub psnr_db: f64,
    /// Absent when the image is too small for an SSIM window.
    pub ssim: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    /// First epoch whose PSNR is at least `psnr_db`.
    pub fn epochs_to_reach(&self, psnr_db: f64) -> Option<usize> {
        self.records.iter().find(|r| r.psnr_db >= psnr_db).map(|r| r.epoch)
    }

    /// `epoch,loss,psnr_db,ssim,seconds`, one row per epoch.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,psnr_db,ssim,seconds\n");
        for r in &self.records {
            let ssim = r.ssim.map(|s| format!("{s:.6}")).unwrap_or_default();
            writeln!(out, "{},{:.8e},{:.4},{},{:.3}", r.epoch, r.loss, r.psnr_db, ssim, r.seconds)
                .expect("writing to a String cannot fail");
        }
        out
    }
}

/// Mean over patches of the per-patch mean squared error.
pub fn recon_loss<T: Real>(preds: &[Tensor<T>], targets: &[Tensor<T>]) -> Result<f64> {
    if preds.len() != targets.len() || preds.is_empty() {
        return Err(Error::Shape(format!("{} predictions for {} targets", preds.len(), targets.len())));
    }
    let mut total = 0.0;
    for (p, t) in preds.iter().zip(targets) {
        if p.shape() != t.shape() {
            return Err(Error::Shape(format!("prediction {:?} vs target {:?}", p.shape(), t.shape())));
        }
        let sse: f64 = p.values().iter().zip(t.values()).map(|(&a, &b)| (a - b).f64().powi(2)).sum();
        total += sse / p.len() as f64;
    }
    Ok(total / preds.len() as f64)
}

/// Maps a network output in roughly `[0, 1]` to an 8-bit sample.
#[inline]
pub fn quantize_sample<T: Real>(v: T) -> u8 {
    let v = v.f64();
    if v.is_nan() {
        return 0;
    }
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn check_geometry(grid: &PatchGrid, cfg: &NetConfig) -> Result<()> {
    let (ph, pw) = cfg.patch_dims();
    if (ph, pw) != (grid.patch_h(), grid.patch_w()) || cfg.out_channels != grid.channels() {
        return Err(Error::Shape(format!(
            "network produces {}x{}x{} patches, grid has {}x{}x{}",
            cfg.out_channels,
            ph,
            pw,
            grid.channels(),
            grid.patch_h(),
            grid.patch_w()
        )));
    }
    Ok(())
}

fn patch_targets<T: Real>(grid: &PatchGrid) -> Vec<Vec<T>> {
    grid.patches().iter().map(|p| p.iter().map(|&v| T::of(v as f64 / 255.0)).collect()).collect()
}

fn outputs_to_image<T: Real>(grid: &PatchGrid, outputs: Vec<Vec<T>>) -> Result<Image> {
    let patches = outputs.into_iter().map(|o| o.into_iter().map(quantize_sample).collect()).collect();
    stitch(&grid.with_patches(patches)?)
}

/// Runs every patch through the network and stitches the clamped, 8-bit
/// quantized outputs into an image of the grid's original size.
pub fn reconstruct(w: &Weights, cfg: &NetConfig, grid: &PatchGrid) -> Result<Image> {
    check_geometry(grid, cfg)?;
    let net = Network::new(cfg, w)?;
    let n = grid.len();
    let outputs =
        (1..=n).into_par_iter().map(|i| net.forward(i, n).map(Tensor::into_values)).collect::<Result<Vec<_>>>()?;
    outputs_to_image(grid, outputs)
}

/// Quality of `w` against the image `grid` was built from. The size fields
/// describe raw `f32` weight storage (`4 * total_params` bytes).
pub fn evaluate(w: &Weights, cfg: &NetConfig, grid: &PatchGrid) -> Result<MetricsReport> {
    let original = stitch(grid)?;
    let recon = reconstruct(w, cfg, grid)?;
    MetricsReport::measure(&original, &recon, 4 * w.total_params() as u64)
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step<T: Real>(&mut self, weights: &mut Weights<T>, grad: &[f64], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.t);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.t);
        let mut k = 0;
        for p in weights.params_mut() {
            for w in p.tensor.values_mut() {
                let g = grad[k];
                self.m[k] = ADAM_BETA1 * self.m[k] + (1.0 - ADAM_BETA1) * g;
                self.v[k] = ADAM_BETA2 * self.v[k] + (1.0 - ADAM_BETA2) * g * g;
                let update = lr * (self.m[k] / bc1) / ((self.v[k] / bc2).sqrt() + ADAM_EPS);
                *w = T::of(w.f64() - update);
                k += 1;
            }
        }
    }
}

/// Fits `net_cfg` to `grid`. With `init` the run starts from those weights
/// (warm start); otherwise from [`init_weights`] with `t_cfg.seed`.
pub fn train(
    grid: &PatchGrid,
    net_cfg: &NetConfig,
    t_cfg: &TrainConfig,
    init: Option<&Weights>,
) -> Result<(Weights, TrainHistory)> {
    net_cfg.validate()?;
    t_cfg.validate(grid.len())?;
    check_geometry(grid, net_cfg)?;
    let start = match init {
        Some(w) => {
            w.check(net_cfg)?;
            w.clone()
        }
        None => init_weights(net_cfg, t_cfg.seed)?,
    };
    match t_cfg.precision {
        Precision::F32 => run::<f32>(grid, net_cfg, t_cfg, start.cast()),
        Precision::F64 => run::<f64>(grid, net_cfg, t_cfg, start.cast()),
    }
}

fn run<T: Real>(
    grid: &PatchGrid,
    cfg: &NetConfig,
    t_cfg: &TrainConfig,
    mut weights: Weights<T>,
) -> Result<(Weights, TrainHistory)> {
    let n = grid.len();
    let targets: Vec<Vec<T>> = patch_targets(grid);
    let original = stitch(grid)?;
    let with_ssim = original.width().min(original.height()) >= 11;
    let n_params = weights.total_params();

    let mut adam = Adam::new(n_params);
    // Shuffle stream, independent of weight init.
    let mut rng = ChaCha8Rng::seed_from_u64(t_cfg.seed ^ 0x5eed_ba7c_4e55_0001);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = TrainHistory::default();
    let clock = Instant::now();

    for epoch in 1..=t_cfg.epochs {
        let lr = t_cfg.lr_at(epoch);
        order.shuffle(&mut rng);
        let mut outputs: Vec<Vec<T>> = vec![Vec::new(); n];
        let mut loss_sum = 0.0;

        for batch in order.chunks(t_cfg.batch_patches) {
            let net = Network::new(cfg, &weights)?;
            let results = batch
                .par_iter()
                .map(|&p| {
                    let mut g = Weights::zeros(cfg);
                    net.backward_with_output(p + 1, n, &targets[p], &mut g).map(|(l, out)| (l, out, g))
                })
                .collect::<Result<Vec<_>>>()
                .map_err(|e| match e {
                    Error::NonFinite(_) => Error::Divergence { epoch, loss: f64::NAN },
                    other => other,
                })?;

            let mut grad = vec![0.0f64; n_params];
            for (&p, (loss, out, g)) in batch.iter().zip(results) {
                loss_sum += loss;
                outputs[p] = out;
                for (acc, v) in grad.iter_mut().zip(g.flatten()) {
                    *acc += v.f64();
                }
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            adam.step(&mut weights, &grad, lr);
        }

        let loss = loss_sum / n as f64;
        if !loss.is_finite() || !weights.is_finite() {
            return Err(Error::Divergence { epoch, loss });
        }
        let image = outputs_to_image(grid, outputs)?;
        let psnr_db = quality_metrics::psnr(&original, &image)?;
        let ssim = if with_ssim { Some(quality_metrics::ssim(&original, &image)?) } else { None };
        history.records.push(EpochRecord { epoch, loss, psnr_db, ssim, seconds: clock.elapsed().as_secs_f64() });
        if t_cfg.log_every > 0 && epoch % t_cfg.log_every == 0 {
            log::info!("epoch {epoch}: loss {loss:.3e}, psnr {psnr_db:.2} dB, lr {lr:.2e}");
        }
        if t_cfg.target_psnr.is_some_and(|target| psnr_db >= target) {
            break;
        }
    }
    Ok((weights.cast(), history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inr_net::{Activation, BlockConfig};
    use crate::pixel_io::split_patches;

    fn tiny_cfg() -> NetConfig {
        NetConfig {
            embed_freqs: 3,
            embed_base: 2.0,
            fc_dims: vec![16],
            seed_shape: (4, 2, 2),
            blocks: vec![BlockConfig { out_channels: 4, upscale: 2, kernel: 3 }],
            activation: Activation::Gelu,
            out_channels: 1,
        }
    }

    fn tiny_grid() -> PatchGrid {
        let img = Image::from_fn(12, 12, 1, |x, y, _| (x * 18 + y * 3) as u8).unwrap();
        split_patches(&img, 4, 4).unwrap()
    }

    fn t(shape: Vec<usize>, v: Vec<f64>) -> Tensor<f64> {
        Tensor::new(shape, v).unwrap()
    }

    #[test]
    fn recon_loss_examples() {
        let a = vec![t(vec![1, 2, 2], vec![0.1, 0.2, 0.3, 0.4])];
        assert_eq!(recon_loss(&a, &a).unwrap(), 0.0);
        let zero = vec![t(vec![1, 2, 2], vec![0.0; 4])];
        let half = vec![t(vec![1, 2, 2], vec![0.5; 4])];
        assert_eq!(recon_loss(&half, &zero).unwrap(), 0.25);

        let p = vec![t(vec![2], vec![1.0, 2.0]), t(vec![2], vec![0.0, -1.0])];
        let q = vec![t(vec![2], vec![0.5, 2.0]), t(vec![2], vec![3.0, 1.0])];
        let rev = |v: &[Tensor<f64>]| v.iter().rev().cloned().collect::<Vec<_>>();
        assert_eq!(recon_loss(&p, &q).unwrap(), recon_loss(&rev(&p), &rev(&q)).unwrap());
        assert!(recon_loss(&p, &q[..1]).is_err());
        assert!(recon_loss(&p[..1], &zero).is_err());
    }

    #[test]
    fn epochs_must_be_positive() {
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        assert!(matches!(train(&tiny_grid(), &tiny_cfg(), &cfg, None), Err(Error::Config(_))));
        let cfg = TrainConfig { batch_patches: 10, ..TrainConfig::default() };
        assert!(train(&tiny_grid(), &tiny_cfg(), &cfg, None).is_err());
    }

    #[test]
    fn single_epoch_has_single_record() {
        let cfg = TrainConfig { epochs: 1, batch_patches: 3, ..TrainConfig::default() };
        let (_, hist) = train(&tiny_grid(), &tiny_cfg(), &cfg, None).unwrap();
        assert_eq!(hist.len(), 1);
        assert_eq!(hist.records[0].epoch, 1);
        assert!(hist.records[0].ssim.is_some());
    }

    #[test]
    fn training_is_deterministic_and_learns() {
        let cfg = TrainConfig { epochs: 150, batch_patches: 3, seed: 4, lr: 1e-2, ..TrainConfig::default() };
        let (w1, h1) = train(&tiny_grid(), &tiny_cfg(), &cfg, None).unwrap();
        let (w2, h2) = train(&tiny_grid(), &tiny_cfg(), &cfg, None).unwrap();
        assert_eq!(w1.to_bytes().unwrap(), w2.to_bytes().unwrap());
        let strip = |h: &TrainHistory| h.records.iter().map(|r| (r.loss, r.psnr_db)).collect::<Vec<_>>();
        assert_eq!(strip(&h1), strip(&h2));
        assert!(h1.last().unwrap().loss < h1.records[0].loss / 5.0);
    }

    #[test]
    fn f64_precision_path_runs() {
        let cfg = TrainConfig { epochs: 20, batch_patches: 9, precision: Precision::F64, ..TrainConfig::default() };
        let (w, hist) = train(&tiny_grid(), &tiny_cfg(), &cfg, None).unwrap();
        assert_eq!(hist.len(), 20);
        assert!(w.is_finite());
    }

    #[test]
    fn early_stop_on_target_psnr() {
        let cfg =
            TrainConfig { epochs: 500, batch_patches: 3, target_psnr: Some(15.0), lr: 1e-2, ..TrainConfig::default() };
        let (_, hist) = train(&tiny_grid(), &tiny_cfg(), &cfg, None).unwrap();
        assert!(hist.len() < 500);
        assert!(hist.last().unwrap().psnr_db >= 15.0);
        assert_eq!(hist.epochs_to_reach(15.0), Some(hist.len()));
    }

    #[test]
    fn divergence_is_reported() {
        let cfg = TrainConfig { epochs: 5, batch_patches: 3, ..TrainConfig::default() };
        let mut init = init_weights(&tiny_cfg(), 0).unwrap();
        init.params_mut()[0].tensor.values_mut()[0] = f32::INFINITY;
        let err = train(&tiny_grid(), &tiny_cfg(), &cfg, Some(&init)).unwrap_err();
        assert!(err.is_numeric(), "{err}");
    }

    #[test]
    fn mismatched_geometry_is_rejected() {
        let img = Image::from_fn(12, 12, 1, |_, _, _| 0).unwrap();
        let grid = split_patches(&img, 6, 6).unwrap();
        let cfg = TrainConfig { epochs: 1, batch_patches: 1, ..TrainConfig::default() };
        assert!(matches!(train(&grid, &tiny_cfg(), &cfg, None), Err(Error::Shape(_))));
        let other = NetConfig { fc_dims: vec![8], ..tiny_cfg() };
        let init = init_weights(&other, 0).unwrap();
        assert!(train(&tiny_grid(), &tiny_cfg(), &cfg, Some(&init)).is_err());
    }

    #[test]
    fn evaluate_own_output_is_lossless() {
        let cfg = tiny_cfg();
        let w = init_weights(&cfg, 2).unwrap();
        let grid = tiny_grid();
        let own = reconstruct(&w, &cfg, &grid).unwrap();
        let own_grid = split_patches(&own, 4, 4).unwrap();
        let r = evaluate(&w, &cfg, &own_grid).unwrap();
        assert_eq!(r.psnr_db, 100.0);
        assert!((r.ssim - 1.0).abs() < 1e-12);
        assert_eq!(r.payload_bytes, 4 * cfg.param_count() as u64);
        assert!((r.bpp - 32.0 * cfg.param_count() as f64 / 144.0).abs() < 1e-9);
        assert_eq!(evaluate(&w, &cfg, &grid).unwrap(), evaluate(&w, &cfg, &grid).unwrap());
    }

    #[test]
    fn history_csv_layout() {
        let hist = TrainHistory {
            records: vec![EpochRecord { epoch: 1, loss: 0.5, psnr_db: 12.0, ssim: None, seconds: 0.25 }],
        };
        let csv = hist.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("epoch,loss,psnr_db,ssim,seconds"));
        assert_eq!(lines.next().unwrap().split(',').count(), 5);
    }

    #[test]
    fn quantize_clamps() {
        assert_eq!(quantize_sample(-0.3f32), 0);
        assert_eq!(quantize_sample(1.7f64), 255);
        assert_eq!(quantize_sample(0.5f64), 128);
        assert_eq!(quantize_sample(f64::NAN), 0);
    }
}
