//! Slice-level kernels for the fixed layer set: dense, same-padded 2-D
//! convolution, pixel shuffle, and the activations. Feature maps are planar
//! `(channels, height, width)` buffers.

use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// sqrt(2 / pi), the tanh-approximation GELU constant.
const GELU_SCALE: f64 = 0.797_884_560_802_865_4;
const GELU_CUBIC: f64 = 0.044_715;

/// GELU, tanh approximation: `0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))`.
#[inline]
pub fn gelu<T: Real>(x: T) -> T {
    let half = T::of(0.5);
    let u = T::of(GELU_SCALE) * (x + T::of(GELU_CUBIC) * x * x * x);
    half * x * (T::one() + u.tanh())
}

#[inline]
pub fn gelu_grad<T: Real>(x: T) -> T {
    let half = T::of(0.5);
    let x2 = x * x;
    let u = T::of(GELU_SCALE) * (x + T::of(GELU_CUBIC) * x2 * x);
    let t = u.tanh();
    let du = T::of(GELU_SCALE) * (T::one() + T::of(3.0 * GELU_CUBIC) * x2);
    half * (T::one() + t) + half * x * (T::one() - t * t) * du
}

/// `out = W x + b`, `W` stored `(out, in)` row-major.
pub fn dense_forward<T: Real>(weight: &[T], bias: &[T], input: &[T]) -> Vec<T> {
    let n_in = input.len();
    weight
        .chunks_exact(n_in)
        .zip(bias)
        .map(|(row, &b)| row.iter().zip(input).fold(b, |acc, (&w, &x)| acc + w * x))
        .collect()
}

/// Accumulates parameter gradients and returns the input gradient.
pub fn dense_backward<T: Real>(
    weight: &[T],
    input: &[T],
    grad_out: &[T],
    grad_w: &mut [T],
    grad_b: &mut [T],
) -> Vec<T> {
    let n_in = input.len();
    let mut grad_in = vec![T::zero(); n_in];
    for (o, &g) in grad_out.iter().enumerate() {
        grad_b[o] = grad_b[o] + g;
        let w_row = &weight[o * n_in..(o + 1) * n_in];
        let gw_row = &mut grad_w[o * n_in..(o + 1) * n_in];
        for ((gw, gi), (&w, &x)) in gw_row.iter_mut().zip(grad_in.iter_mut()).zip(w_row.iter().zip(input)) {
            *gw = *gw + g * x;
            *gi = *gi + g * w;
        }
    }
    grad_in
}

/// Geometry of a same-padded convolution on an `h x w` map.
#[derive(Debug, Clone, Copy)]
pub struct ConvShape {
    pub in_c: usize,
    pub out_c: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
}

impl ConvShape {
    /// For kernel offset `d` (already shifted by the padding), the output
    /// range `lo..hi` whose input index `o + d` stays in `0..n`.
    #[inline]
    fn valid(n: usize, d: isize) -> (usize, usize) {
        let lo = (-d).max(0) as usize;
        let hi = (n as isize - d).clamp(0, n as isize) as usize;
        (lo, hi.max(lo))
    }

    #[inline]
    fn offset(&self, kk: usize) -> isize {
        kk as isize - (self.k / 2) as isize
    }
}

pub fn conv_forward<T: Real>(s: ConvShape, weight: &[T], bias: &[T], input: &[T]) -> Vec<T> {
    let plane = s.h * s.w;
    let mut out = vec![T::zero(); s.out_c * plane];
    for oc in 0..s.out_c {
        let out_p = &mut out[oc * plane..(oc + 1) * plane];
        out_p.fill(bias[oc]);
        for ic in 0..s.in_c {
            let in_p = &input[ic * plane..(ic + 1) * plane];
            for ky in 0..s.k {
                let dy = s.offset(ky);
                let (y_lo, y_hi) = ConvShape::valid(s.h, dy);
                for kx in 0..s.k {
                    let dx = s.offset(kx);
                    let (x_lo, x_hi) = ConvShape::valid(s.w, dx);
                    let wv = weight[((oc * s.in_c + ic) * s.k + ky) * s.k + kx];
                    for y in y_lo..y_hi {
                        let iy = (y as isize + dy) as usize;
                        let src = &in_p[iy * s.w + (x_lo as isize + dx) as usize..][..x_hi - x_lo];
                        let dst = &mut out_p[y * s.w + x_lo..y * s.w + x_hi];
                        for (o, &i) in dst.iter_mut().zip(src) {
                            *o = *o + wv * i;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates parameter gradients and returns the input gradient.
pub fn conv_backward<T: Real>(
    s: ConvShape,
    weight: &[T],
    input: &[T],
    grad_out: &[T],
    grad_w: &mut [T],
    grad_b: &mut [T],
) -> Vec<T> {
    let plane = s.h * s.w;
    let mut grad_in = vec![T::zero(); s.in_c * plane];
    for oc in 0..s.out_c {
        let go = &grad_out[oc * plane..(oc + 1) * plane];
        grad_b[oc] = grad_b[oc] + go.iter().copied().sum::<T>();
        for ic in 0..s.in_c {
            let in_p = &input[ic * plane..(ic + 1) * plane];
            let gi_p = &mut grad_in[ic * plane..(ic + 1) * plane];
            for ky in 0..s.k {
                let dy = s.offset(ky);
                let (y_lo, y_hi) = ConvShape::valid(s.h, dy);
                for kx in 0..s.k {
                    let dx = s.offset(kx);
                    let (x_lo, x_hi) = ConvShape::valid(s.w, dx);
                    let widx = ((oc * s.in_c + ic) * s.k + ky) * s.k + kx;
                    let wv = weight[widx];
                    let mut gw = T::zero();
                    for y in y_lo..y_hi {
                        let iy = (y as isize + dy) as usize;
                        let start = iy * s.w + (x_lo as isize + dx) as usize;
                        let g_row = &go[y * s.w + x_lo..y * s.w + x_hi];
                        let i_row = &in_p[start..start + (x_hi - x_lo)];
                        gw = g_row.iter().zip(i_row).fold(gw, |acc, (&g, &i)| acc + g * i);
                        for (gi, &g) in gi_p[start..start + (x_hi - x_lo)].iter_mut().zip(g_row) {
                            *gi = *gi + wv * g;
                        }
                    }
                    grad_w[widx] = grad_w[widx] + gw;
                }
            }
        }
    }
    grad_in
}

/// `(C r^2, h, w)` to `(C, h r, w r)`: output `(c, y r + dy, x r + dx)` takes
/// input `(c r^2 + dy r + dx, y, x)`.
pub fn shuffle<T: Copy>(input: &[T], out_c: usize, h: usize, w: usize, r: usize) -> Vec<T> {
    let (oh, ow) = (h * r, w * r);
    let mut out = Vec::with_capacity(input.len());
    for c in 0..out_c {
        for oy in 0..oh {
            let (y, dy) = (oy / r, oy % r);
            for ox in 0..ow {
                let (x, dx) = (ox / r, ox % r);
                out.push(input[((c * r * r + dy * r + dx) * h + y) * w + x]);
            }
        }
    }
    out
}

/// Inverse of [`shuffle`]; `h`, `w` are the low-resolution dims.
pub fn unshuffle<T: Copy>(input: &[T], out_c: usize, h: usize, w: usize, r: usize) -> Vec<T> {
    let (oh, ow) = (h * r, w * r);
    let mut out = Vec::with_capacity(input.len());
    for ch in 0..out_c * r * r {
        let (c, sub) = (ch / (r * r), ch % (r * r));
        let (dy, dx) = (sub / r, sub % r);
        for y in 0..h {
            for x in 0..w {
                out.push(input[(c * oh + y * r + dy) * ow + x * r + dx]);
            }
        }
    }
    out
}

/// Tensor-level pixel shuffle on a `(C r^2, h, w)` tensor.
pub fn pixel_shuffle<T: Real>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let &[c, h, w] = x.shape() else {
        return Err(Error::Shape(format!("pixel shuffle needs rank 3, got {:?}", x.shape())));
    };
    if r == 0 || c % (r * r) != 0 {
        return Err(Error::Shape(format!("{c} channels not divisible by upscale^2 = {}", r * r)));
    }
    let out_c = c / (r * r);
    Tensor::new(vec![out_c, h * r, w * r], shuffle(x.values(), out_c, h, w, r))
}

/// Inverse of [`pixel_shuffle`] on a `(C, h r, w r)` tensor.
pub fn pixel_unshuffle<T: Real>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let &[c, oh, ow] = x.shape() else {
        return Err(Error::Shape(format!("pixel unshuffle needs rank 3, got {:?}", x.shape())));
    };
    if r == 0 || oh % r != 0 || ow % r != 0 {
        return Err(Error::Shape(format!("{oh}x{ow} not divisible by upscale {r}")));
    }
    let (h, w) = (oh / r, ow / r);
    Tensor::new(vec![c * r * r, h, w], unshuffle(x.values(), c, h, w, r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn shuffle_definition_example() {
        let x = Tensor::new(vec![4, 1, 1], vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        let y = pixel_shuffle(&x, 2).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2]);
        assert_eq!(y.values(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn shuffle_by_one_is_identity() {
        let x = Tensor::new(vec![3, 2, 2], (0..12).map(f64::from).collect()).unwrap();
        assert_eq!(pixel_shuffle(&x, 1).unwrap(), x);
    }

    #[test]
    fn shuffle_rejects_indivisible_channels() {
        let x = Tensor::<f32>::zeros(vec![3, 2, 2]);
        assert!(pixel_shuffle(&x, 2).is_err());
    }

    #[test]
    fn gelu_known_values() {
        assert_eq!(gelu(0.0f64), 0.0);
        assert!((gelu(1.0f64) - 0.841_191_990_608_276_8).abs() < 1e-12);
        assert!((gelu(-3.0f64) + 0.003_637_392_081_772_994).abs() < 1e-12);
    }

    #[test]
    fn gelu_grad_matches_central_difference() {
        for &x in &[-3.0f64, -1.2, -0.1, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8, "x = {x}");
        }
    }

    #[test]
    fn conv_1x1_is_channel_mixing() {
        let s = ConvShape { in_c: 2, out_c: 1, h: 1, w: 2, k: 1 };
        let out = conv_forward(s, &[2.0f64, -1.0], &[0.5], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(out, vec![2.0 - 3.0 + 0.5, 4.0 - 4.0 + 0.5]);
    }

    #[test]
    fn conv_3x3_zero_padding() {
        // All-ones kernel on a 3x3 ones map counts in-bounds neighbours.
        let s = ConvShape { in_c: 1, out_c: 1, h: 3, w: 3, k: 3 };
        let out = conv_forward(s, &[1.0f64; 9], &[0.0], &[1.0; 9]);
        assert_eq!(out, vec![4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);
    }

    proptest! {
        #[test]
        fn unshuffle_inverts_shuffle(c in 1usize..4, h in 1usize..5, w in 1usize..5, r in 1usize..4) {
            let n = c * r * r * h * w;
            let x = Tensor::new(vec![c * r * r, h, w], (0..n).map(|v| v as f64).collect()).unwrap();
            let y = pixel_shuffle(&x, r).unwrap();
            prop_assert_eq!(y.len(), x.len());
            prop_assert_eq!(y.shape(), &[c, h * r, w * r][..]);
            prop_assert_eq!(pixel_unshuffle(&y, r).unwrap(), x);
        }
    }
}
