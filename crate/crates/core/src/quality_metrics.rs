//! PSNR, SSIM, MS-SSIM and bits-per-pixel on 8-bit images.
//!
//! SSIM uses the usual 11x11 Gaussian window (sigma 1.5), constants
//! `C1 = (0.01 * 255)^2`, `C2 = (0.03 * 255)^2`, and only windows fully
//! inside the image. Multi-channel images are scored per channel and
//! averaged unless [`SsimMode::Luma`] is requested.
//!
//! MS-SSIM uses up to five scales with weights
//! `[0.0448, 0.2856, 0.3001, 0.2363, 0.1333]`, downsampling by 2x2 average
//! pooling (odd trailing rows/columns dropped). Images smaller than 176
//! pixels on a side get as many scales as keep every level at least 11
//! pixels wide, with the leading weights renormalised to sum to one.
//! Negative per-scale terms are clamped to zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pixel_io::Image;

pub const PSNR_CAP_DB: f64 = 100.0;
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
const C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

/// Quality and size of one reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub psnr_db: f64,
    pub ssim: f64,
    pub ms_ssim: f64,
    pub bpp: f64,
    pub payload_bytes: u64,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "psnr_db,ssim,ms_ssim,bpp,payload_bytes";

    /// Compares `reconstruction` to `reference` and attaches the size of the
    /// payload that produced it.
    pub fn measure(reference: &Image, reconstruction: &Image, payload_bytes: u64) -> Result<Self> {
        Ok(Self {
            psnr_db: psnr(reference, reconstruction)?,
            ssim: ssim(reference, reconstruction)?,
            ms_ssim: ms_ssim(reference, reconstruction)?,
            bpp: bpp(payload_bytes, reference.width(), reference.height()),
            payload_bytes,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    pub fn to_csv_row(&self) -> String {
        format!("{:.4},{:.6},{:.6},{:.6},{}", self.psnr_db, self.ssim, self.ms_ssim, self.bpp, self.payload_bytes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SsimMode {
    /// Score each channel and average.
    #[default]
    ChannelMean,
    /// Score the BT.601 luma plane only (identical to `ChannelMean` for
    /// grayscale).
    Luma,
}

fn check_same(a: &Image, b: &Image) -> Result<()> {
    if (a.width(), a.height(), a.channels()) != (b.width(), b.height(), b.channels()) {
        return Err(Error::Shape(format!(
            "images differ: {}x{}x{} vs {}x{}x{}",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        )));
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB over all samples, capped at 100.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    check_same(a, b)?;
    let sse: u64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x.abs_diff(y) as u64;
            d * d
        })
        .sum();
    Ok(psnr_from_mse(sse as f64 / a.data().len() as f64))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        return PSNR_CAP_DB;
    }
    (10.0 * (255.0 * 255.0 / mse).log10()).min(PSNR_CAP_DB)
}

pub fn bpp(payload_bytes: u64, width: usize, height: usize) -> f64 {
    8.0 * payload_bytes as f64 / (width * height) as f64
}

/// A single-channel `f64` plane.
#[derive(Debug, Clone)]
struct Plane {
    w: usize,
    h: usize,
    v: Vec<f64>,
}

impl Plane {
    fn downsample(&self) -> Plane {
        let (w, h) = (self.w / 2, self.h / 2);
        let mut v = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let at = |dx, dy| self.v[(2 * y + dy) * self.w + 2 * x + dx];
                v.push((at(0, 0) + at(1, 0) + at(0, 1) + at(1, 1)) / 4.0);
            }
        }
        Plane { w, h, v }
    }
}

fn planes(img: &Image, mode: SsimMode) -> Vec<Plane> {
    let (w, h) = (img.width(), img.height());
    match (mode, img.channels()) {
        (SsimMode::Luma, 3) => {
            let v = img
                .data()
                .chunks_exact(3)
                .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
                .collect();
            vec![Plane { w, h, v }]
        }
        _ => {
            (0..img.channels()).map(|c| Plane { w, h, v: img.plane(c).into_iter().map(f64::from).collect() }).collect()
        }
    }
}

fn gaussian_window() -> [f64; WINDOW] {
    let mut g = [0.0; WINDOW];
    let c = (WINDOW / 2) as f64;
    for (i, v) in g.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = g.iter().sum();
    g.map(|v| v / s)
}

/// Separable "valid" Gaussian filtering of `v` (a `w x h` plane).
fn blur(v: &[f64], w: usize, h: usize, g: &[f64; WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w + 1 - WINDOW, h + 1 - WINDOW);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        let src = &v[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = g.iter().zip(&src[x..x + WINDOW]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = g.iter().enumerate().map(|(k, gk)| gk * rows[(y + k) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM and mean contrast-structure term over all valid windows.
fn ssim_terms(a: &Plane, b: &Plane) -> (f64, f64) {
    let g = gaussian_window();
    let (w, h) = (a.w, a.h);
    let mu_a = blur(&a.v, w, h, &g);
    let mu_b = blur(&b.v, w, h, &g);
    let sq = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).collect::<Vec<_>>();
    let e_aa = blur(&sq(&a.v, &a.v), w, h, &g);
    let e_bb = blur(&sq(&b.v, &b.v), w, h, &g);
    let e_ab = blur(&sq(&a.v, &b.v), w, h, &g);
    let n = mu_a.len() as f64;
    let (mut s_sum, mut cs_sum) = (0.0, 0.0);
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let var_a = e_aa[i] - ma * ma;
        let var_b = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        let cs = (2.0 * cov + C2) / (var_a + var_b + C2);
        let l = (2.0 * ma * mb + C1) / (ma * ma + mb * mb + C1);
        s_sum += l * cs;
        cs_sum += cs;
    }
    (s_sum / n, cs_sum / n)
}

fn check_window(img: &Image) -> Result<()> {
    if img.width().min(img.height()) < WINDOW {
        return Err(Error::Config(format!(
            "image {}x{} too small for an {WINDOW}x{WINDOW} SSIM window",
            img.width(),
            img.height()
        )));
    }
    Ok(())
}

pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    ssim_with(a, b, SsimMode::default())
}

pub fn ssim_with(a: &Image, b: &Image, mode: SsimMode) -> Result<f64> {
    check_same(a, b)?;
    check_window(a)?;
    let (pa, pb) = (planes(a, mode), planes(b, mode));
    let total: f64 = pa.iter().zip(&pb).map(|(x, y)| ssim_terms(x, y).0).sum();
    Ok(total / pa.len() as f64)
}

/// Number of MS-SSIM scales used for an image whose short side is `min_dim`.
pub fn ms_ssim_scales(min_dim: usize) -> usize {
    (1..=MS_SSIM_WEIGHTS.len()).take_while(|&s| (min_dim >> (s - 1)) >= WINDOW).last().unwrap_or(0)
}

pub fn ms_ssim(a: &Image, b: &Image) -> Result<f64> {
    check_same(a, b)?;
    check_window(a)?;
    let scales = ms_ssim_scales(a.width().min(a.height()));
    let weights = &MS_SSIM_WEIGHTS[..scales];
    let norm: f64 = weights.iter().sum();
    let (pa, pb) = (planes(a, SsimMode::ChannelMean), planes(b, SsimMode::ChannelMean));
    let mut total = 0.0;
    for (mut x, mut y) in pa.into_iter().zip(pb) {
        let mut score = 1.0;
        for (s, &wt) in weights.iter().enumerate() {
            let (full, cs) = ssim_terms(&x, &y);
            let term = if s + 1 == scales { full } else { cs };
            score *= term.max(0.0).powf(wt / norm);
            if s + 1 < scales {
                x = x.downsample();
                y = y.downsample();
            }
        }
        total += score;
    }
    Ok(total / a.channels() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene(w: usize, h: usize, c: usize) -> Image {
        Image::from_fn(w, h, c, |x, y, ch| {
            let v = 128.0
                + 60.0 * ((x as f64) * 0.3 + ch as f64).sin()
                + 40.0 * ((y as f64) * 0.17).cos()
                + ((x * 7 + y * 13) % 11) as f64;
            v.clamp(0.0, 255.0) as u8
        })
        .unwrap()
    }

    fn noisy(img: &Image, amp: i32, seed: u64) -> Image {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data = img.data().iter().map(|&v| (v as i32 + rng.random_range(-amp..=amp)).clamp(0, 255) as u8).collect();
        Image::new(img.width(), img.height(), img.channels(), data).unwrap()
    }

    #[test]
    fn psnr_examples() {
        let a = Image::new(1, 1, 1, vec![0]).unwrap();
        let b = Image::new(1, 1, 1, vec![128]).unwrap();
        // 10 log10(65025 / 16384)
        assert!((psnr(&a, &b).unwrap() - 5.986_604_215_721_735).abs() < 1e-9);
        assert_eq!(psnr(&a, &a).unwrap(), 100.0);
        let img = scene(20, 20, 3);
        let other = noisy(&img, 10, 1);
        assert_eq!(psnr(&img, &other).unwrap(), psnr(&other, &img).unwrap());
    }

    #[test]
    fn psnr_rejects_mismatched_images() {
        let a = scene(12, 12, 1);
        assert!(psnr(&a, &scene(12, 13, 1)).is_err());
        assert!(ssim(&a, &scene(12, 12, 3)).is_err());
    }

    #[test]
    fn psnr_falls_with_noise_amplitude() {
        let img = scene(48, 48, 1);
        let p: Vec<f64> = [4, 16, 64].iter().map(|&a| psnr(&img, &noisy(&img, a, 5)).unwrap()).collect();
        assert!(p[0] > p[1] && p[1] > p[2], "{p:?}");
    }

    #[test]
    fn identical_images_are_perfect() {
        for img in [scene(32, 40, 1), scene(200, 180, 3)] {
            assert_eq!(psnr(&img, &img).unwrap(), 100.0);
            assert!((ssim(&img, &img).unwrap() - 1.0).abs() < 1e-12);
            assert!((ms_ssim(&img, &img).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ssim_needs_an_eleven_pixel_window() {
        let small = scene(10, 30, 1);
        assert!(matches!(ssim(&small, &small), Err(Error::Config(_))));
        assert!(ms_ssim(&small, &small).is_err());
    }

    #[test]
    fn inverted_image_scores_low() {
        let img = scene(32, 32, 1);
        let inv = Image::new(32, 32, 1, img.data().iter().map(|v| 255 - v).collect()).unwrap();
        let s = ssim(&img, &inv).unwrap();
        assert!((-1.0..0.5).contains(&s), "{s}");
    }

    #[test]
    fn luma_mode_matches_channel_mean_on_gray() {
        let a = scene(24, 24, 1);
        let b = noisy(&a, 20, 3);
        assert_eq!(ssim_with(&a, &b, SsimMode::Luma).unwrap(), ssim(&a, &b).unwrap());
        let rgb = scene(24, 24, 3);
        let s = ssim_with(&rgb, &noisy(&rgb, 20, 4), SsimMode::Luma).unwrap();
        assert!((0.0..1.0).contains(&s));
    }

    #[test]
    fn scale_count_follows_image_size() {
        assert_eq!(ms_ssim_scales(176), 5);
        assert_eq!(ms_ssim_scales(175), 4);
        assert_eq!(ms_ssim_scales(64), 3);
        assert_eq!(ms_ssim_scales(11), 1);
        assert_eq!(ms_ssim_scales(10), 0);
    }

    #[test]
    fn bpp_examples() {
        assert!((bpp(1000, 100, 100) - 0.8).abs() < 1e-15);
        assert_eq!(bpp(2000, 100, 100), 2.0 * bpp(1000, 100, 100));
    }

    #[test]
    fn report_serializes() {
        let a = scene(16, 16, 1);
        let r = MetricsReport::measure(&a, &noisy(&a, 8, 2), 123).unwrap();
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        for key in ["psnr_db", "ssim", "ms_ssim", "bpp", "payload_bytes"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        assert_eq!(r.to_csv_row().split(',').count(), MetricsReport::CSV_HEADER.split(',').count());
    }
}
