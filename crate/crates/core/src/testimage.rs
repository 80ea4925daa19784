//! Deterministic synthetic images for tests, examples and benchmarks.

use crate::pixel_io::Image;

/// A smooth gradient with two soft disks and a low-frequency ripple.
///
/// `variant` nudges disk positions, ripple phase and contrast; small
/// values give images similar to `variant = 0`, the way neighbouring
/// slices of a scan resemble each other.
pub fn scene(width: usize, height: usize, channels: usize, variant: f64) -> Image {
    let (w, h) = (width as f64, height as f64);
    Image::from_fn(width, height, channels, |x, y, c| {
        let (u, v) = (x as f64 / w, y as f64 / h);
        let tint = c as f64 * 0.08;
        let mut val = 0.15 + 0.45 * u + 0.25 * v + tint;
        let disk = |cx: f64, cy: f64, r: f64| {
            let d = ((u - cx).powi(2) + (v - cy).powi(2)).sqrt();
            1.0 / (1.0 + ((d - r) * 40.0).exp())
        };
        val += (0.30 + 0.02 * variant) * disk(0.32 + 0.02 * variant, 0.35, 0.18);
        val -= 0.20 * disk(0.70, 0.68 - 0.015 * variant, 0.14);
        val += 0.06 * (2.0 * std::f64::consts::PI * (3.0 * u + 2.0 * v) + 0.3 * variant).sin();
        (val.clamp(0.0, 1.0) * 255.0).round() as u8
    })
    .expect("valid synthetic dimensions")
}

/// A plain horizontal-plus-vertical ramp.
pub fn gradient(width: usize, height: usize) -> Image {
    Image::from_fn(width, height, 1, |x, y, _| {
        ((x * 255 / width.max(2).saturating_sub(1).max(1)) / 2 + (y * 255 / height.max(2).saturating_sub(1).max(1)) / 2)
            as u8
    })
    .expect("valid synthetic dimensions")
}
