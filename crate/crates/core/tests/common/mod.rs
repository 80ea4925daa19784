//! Independent reference implementations and fixtures shared by the
//! integration tests. Nothing here calls into the code it checks.
#![allow(dead_code)]

use std::f64::consts::PI;

use coli_core::inr_net::{backward, forward, init_weights, Activation, BlockConfig, NetConfig, Tensor, Weights};
use coli_core::pixel_io::Image;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Plain scan over every trajectory index; smallest index wins ties.
pub fn naive_argmin(group: &[f64], k_bits: u32, l2: bool) -> (u32, f64) {
    let dirs: Vec<f64> = (1..=group.len()).map(|n| 1.0 / (PI + n as f64)).collect();
    let mut best_k = 0;
    let mut best_err = f64::INFINITY;
    for k in 0..(1u32 << k_bits) {
        let mut err: f64 = 0.0;
        for (v, a) in group.iter().zip(&dirs) {
            let z = k as f64 * a;
            let d = (v - (z - z.floor())).abs();
            if l2 {
                err += d * d;
            } else if d > err {
                err = d;
            }
        }
        if l2 {
            err = err.sqrt();
        }
        if err < best_err {
            best_err = err;
            best_k = k;
        }
    }
    (best_k, best_err)
}

const C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

fn kernel2d() -> Vec<f64> {
    let mut k = vec![0.0; 121];
    for y in 0..11 {
        for x in 0..11 {
            let (dx, dy) = (x as f64 - 5.0, y as f64 - 5.0);
            k[y * 11 + x] = (-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5)).exp();
        }
    }
    let s: f64 = k.iter().sum();
    k.iter().map(|v| v / s).collect()
}

/// Mean SSIM and mean contrast-structure term with a direct 11x11 window
/// at every valid position.
pub fn ssim_terms(a: &[f64], b: &[f64], w: usize, h: usize) -> (f64, f64) {
    let k = kernel2d();
    let mut s_total = 0.0;
    let mut cs_total = 0.0;
    let mut count = 0.0;
    for y0 in 0..=h - 11 {
        for x0 in 0..=w - 11 {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for dy in 0..11 {
                for dx in 0..11 {
                    let kw = k[dy * 11 + dx];
                    let i = (y0 + dy) * w + x0 + dx;
                    ma += kw * a[i];
                    mb += kw * b[i];
                    saa += kw * a[i] * a[i];
                    sbb += kw * b[i] * b[i];
                    sab += kw * a[i] * b[i];
                }
            }
            let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
            let cs = (2.0 * cov + C2) / (va + vb + C2);
            let l = (2.0 * ma * mb + C1) / (ma * ma + mb * mb + C1);
            s_total += l * cs;
            cs_total += cs;
            count += 1.0;
        }
    }
    (s_total / count, cs_total / count)
}

fn channel(img: &Image, c: usize) -> Vec<f64> {
    img.data().iter().skip(c).step_by(img.channels()).map(|&v| v as f64).collect()
}

pub fn ssim(a: &Image, b: &Image) -> f64 {
    let n = a.channels();
    (0..n).map(|c| ssim_terms(&channel(a, c), &channel(b, c), a.width(), a.height()).0).sum::<f64>() / n as f64
}

fn halve(v: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for y in 0..h / 2 {
        for x in 0..w / 2 {
            let s = v[2 * y * w + 2 * x]
                + v[2 * y * w + 2 * x + 1]
                + v[(2 * y + 1) * w + 2 * x]
                + v[(2 * y + 1) * w + 2 * x + 1];
            out.push(s / 4.0);
        }
    }
    out
}

pub fn ms_ssim(a: &Image, b: &Image) -> f64 {
    let weights = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
    let mut scales = 0;
    while scales < 5 && (a.width().min(a.height()) >> scales) >= 11 {
        scales += 1;
    }
    let norm: f64 = weights[..scales].iter().sum();
    let n = a.channels();
    let mut total = 0.0;
    for c in 0..n {
        let (mut x, mut y) = (channel(a, c), channel(b, c));
        let (mut w, mut h) = (a.width(), a.height());
        let mut score = 1.0;
        for (s, weight) in weights[..scales].iter().enumerate() {
            let (full, cs) = ssim_terms(&x, &y, w, h);
            let term = if s == scales - 1 { full } else { cs };
            score *= term.max(0.0).powf(weight / norm);
            x = halve(&x, w, h);
            y = halve(&y, w, h);
            w /= 2;
            h /= 2;
        }
        total += score;
    }
    total / n as f64
}

/// A textured test image with edges, gradients and fine detail.
pub fn textured(w: usize, h: usize, channels: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase: f64 = rng.random::<f64>() * 6.0;
    let noise: Vec<f64> = (0..w * h * channels).map(|_| rng.random_range(-12.0..12.0)).collect();
    Image::from_fn(w, h, channels, |x, y, c| {
        let (u, v) = (x as f64, y as f64);
        let mut val = 90.0 + 0.4 * u + 0.2 * v + 35.0 * (u * 0.11 + phase + c as f64).sin() * (v * 0.07).cos();
        if (x / 32 + y / 32) % 2 == 0 {
            val += 40.0;
        }
        val += noise[(y * w + x) * channels + c];
        val.clamp(0.0, 255.0).round() as u8
    })
    .unwrap()
}

/// A random small network configuration; all shapes chain by construction.
pub fn random_small_config(rng: &mut ChaCha8Rng) -> NetConfig {
    let n_blocks = rng.random_range(1..=2);
    let blocks: Vec<BlockConfig> = (0..n_blocks)
        .map(|_| BlockConfig {
            out_channels: rng.random_range(2..=3),
            upscale: rng.random_range(1..=2),
            kernel: if rng.random_bool(0.5) { 1 } else { 3 },
        })
        .collect();
    NetConfig {
        embed_freqs: rng.random_range(1..=3),
        embed_base: if rng.random_bool(0.5) { 2.0 } else { 1.5 },
        fc_dims: (0..rng.random_range(1..=2)).map(|_| rng.random_range(3..=8)).collect(),
        seed_shape: (rng.random_range(2..=3), rng.random_range(1..=2), rng.random_range(1..=2)),
        blocks,
        activation: Activation::Gelu,
        out_channels: if rng.random_bool(0.5) { 1 } else { 3 },
    }
}

fn mse(pred: &Tensor<f64>, target: &Tensor<f64>) -> f64 {
    let v = pred.values();
    v.iter().zip(target.values()).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / v.len() as f64
}

pub struct GradCheck {
    pub params: usize,
    pub max_rel_err: f64,
    pub worst: (usize, f64, f64),
}

/// Denominator floor for near-zero gradient components.
pub const REL_FLOOR: f64 = 1e-7;

/// Compares every analytic gradient component with a central difference
/// of step `h`, all in f64.
pub fn gradient_check(cfg: &NetConfig, seed: u64, h: f64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Weights<f64> = init_weights(cfg, seed).unwrap().cast();
    let n_total = 6;
    let index = rng.random_range(1..=n_total);
    let (ph, pw) = cfg.patch_dims();
    let shape = vec![cfg.out_channels, ph, pw];
    let len = shape.iter().product();
    let target = Tensor::new(shape, (0..len).map(|_| rng.random_range(-0.5..1.5)).collect()).unwrap();

    let (_, grads) = backward(&w, cfg, index, n_total, &target).unwrap();
    let analytic = grads.flatten();
    let mut flat = w.flatten();
    let loss_at = |flat: &[f64]| mse(&forward(&w.with_flat(flat).unwrap(), cfg, index, n_total).unwrap(), &target);

    let mut out = GradCheck { params: flat.len(), max_rel_err: 0.0, worst: (0, 0.0, 0.0) };
    for i in 0..flat.len() {
        let orig = flat[i];
        flat[i] = orig + h;
        let up = loss_at(&flat);
        flat[i] = orig - h;
        let down = loss_at(&flat);
        flat[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
        if rel > out.max_rel_err {
            out.max_rel_err = rel;
            out.worst = (i, a, numeric);
        }
    }
    out
}
