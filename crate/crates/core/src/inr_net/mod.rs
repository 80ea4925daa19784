//! Patch-indexed decoder network.
//!
//! A patch index `i` of `N` is embedded as `t = i / N` into `2L` sinusoids,
//! passed through a GELU MLP whose last layer is reshaped into a small seed
//! feature map, then upsampled by blocks of convolution + pixel shuffle +
//! GELU. A final linear convolution head produces the output channels.
//!
//! Forward and backward passes are written by hand and are generic over
//! [`Real`] so the same code runs in `f32` (training) and `f64` (gradient
//! checks).

mod layers;
mod tensor;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use layers::{gelu, gelu_grad, pixel_shuffle, pixel_unshuffle};
pub use tensor::{Real, Tensor};

use crate::error::{Error, Result};
use crate::wire::{Reader, Writer};
use layers::ConvShape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Gelu,
    Relu,
}

impl Activation {
    #[inline]
    fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Gelu => gelu(x),
            Activation::Relu => x.max(T::zero()),
        }
    }

    #[inline]
    fn grad<T: Real>(self, x: T) -> T {
        match self {
            Activation::Gelu => gelu_grad(x),
            Activation::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Activation::Gelu => 0,
            Activation::Relu => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Activation::Gelu),
            1 => Ok(Activation::Relu),
            t => Err(Error::Malformed(format!("unknown activation tag {t}"))),
        }
    }
}

/// One upsampling block: conv to `out_channels * upscale^2` channels, pixel
/// shuffle by `upscale`, activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockConfig {
    pub out_channels: usize,
    pub upscale: usize,
    pub kernel: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub embed_freqs: usize,
    pub embed_base: f32,
    pub fc_dims: Vec<usize>,
    /// `(channels, height, width)` of the map the MLP output is reshaped into.
    pub seed_shape: (usize, usize, usize),
    pub blocks: Vec<BlockConfig>,
    pub activation: Activation,
    pub out_channels: usize,
}

/// Preset architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    /// Two 2x blocks; 16x16 patches at the default seed size.
    Small,
    /// Three 2x blocks; 32x32 patches at the default seed size.
    Medium,
}

impl Arch {
    pub fn default_patch(self) -> usize {
        match self {
            Arch::Small => 16,
            Arch::Medium => 32,
        }
    }

    /// Preset for square `patch x patch` outputs. The seed map size is
    /// derived from the patch size and must divide evenly.
    pub fn config(self, patch: usize, out_channels: usize) -> Result<NetConfig> {
        let blocks = match self {
            Arch::Small => vec![block(16, 2, 3), block(8, 2, 3)],
            Arch::Medium => vec![block(16, 2, 3), block(16, 2, 3), block(8, 2, 3)],
        };
        let up: usize = blocks.iter().map(|b| b.upscale).product();
        if patch == 0 || !patch.is_multiple_of(up) {
            return Err(Error::Config(format!("patch {patch} not divisible by total upscale {up}")));
        }
        let cfg = NetConfig {
            embed_freqs: 8,
            embed_base: 2.0,
            fc_dims: vec![64, 128],
            seed_shape: (16, patch / up, patch / up),
            blocks,
            activation: Activation::Gelu,
            out_channels,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn block(out_channels: usize, upscale: usize, kernel: usize) -> BlockConfig {
    BlockConfig { out_channels, upscale, kernel }
}

/// Kind of parameterised layer, in evaluation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LayerKind {
    Dense {
        n_in: usize,
        n_out: usize,
    },
    /// Conv on an `h x w` map; `upscale == 1` and `act == false` for the head.
    Conv {
        shape: ConvShapeKey,
        upscale: usize,
        act: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct ConvShapeKey {
    in_c: usize,
    out_c: usize,
    h: usize,
    w: usize,
    k: usize,
}

impl From<ConvShapeKey> for ConvShape {
    fn from(k: ConvShapeKey) -> Self {
        ConvShape { in_c: k.in_c, out_c: k.out_c, h: k.h, w: k.w, k: k.k }
    }
}

#[derive(Debug, Clone)]
struct Layer {
    name: String,
    kind: LayerKind,
}

impl Layer {
    fn weight_shape(&self) -> Vec<usize> {
        match self.kind {
            LayerKind::Dense { n_in, n_out } => vec![n_out, n_in],
            LayerKind::Conv { shape, .. } => vec![shape.out_c, shape.in_c, shape.k, shape.k],
        }
    }

    fn bias_len(&self) -> usize {
        match self.kind {
            LayerKind::Dense { n_out, .. } => n_out,
            LayerKind::Conv { shape, .. } => shape.out_c,
        }
    }

    fn fan_in(&self) -> usize {
        match self.kind {
            LayerKind::Dense { n_in, .. } => n_in,
            LayerKind::Conv { shape, .. } => shape.in_c * shape.k * shape.k,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.embed_freqs == 0 {
            return bad("embed_freqs must be at least 1".into());
        }
        if !(self.embed_base.is_finite() && self.embed_base > 0.0) {
            return bad(format!("embed_base {} must be positive", self.embed_base));
        }
        if self.fc_dims.contains(&0) {
            return bad("zero-width dense layer".into());
        }
        let (c0, h0, w0) = self.seed_shape;
        if c0 == 0 || h0 == 0 || w0 == 0 {
            return bad(format!("empty seed shape {:?}", self.seed_shape));
        }
        for (i, b) in self.blocks.iter().enumerate() {
            if b.out_channels == 0 || b.upscale == 0 {
                return bad(format!("block {i} has zero channels or upscale"));
            }
            if b.kernel != 1 && b.kernel != 3 {
                return bad(format!("block {i} kernel {} not in {{1, 3}}", b.kernel));
            }
        }
        if self.out_channels != 1 && self.out_channels != 3 {
            return bad(format!("out_channels {} must be 1 or 3", self.out_channels));
        }
        Ok(())
    }

    pub fn embed_dim(&self) -> usize {
        2 * self.embed_freqs
    }

    /// Product of all block upscale factors.
    pub fn total_upscale(&self) -> usize {
        self.blocks.iter().map(|b| b.upscale).product()
    }

    /// `(P_H, P_W)` of the produced patches.
    pub fn patch_dims(&self) -> (usize, usize) {
        let up = self.total_upscale();
        (self.seed_shape.1 * up, self.seed_shape.2 * up)
    }

    fn head_kernel(&self) -> usize {
        self.blocks.last().map_or(1, |b| b.kernel)
    }

    fn layers(&self) -> Vec<Layer> {
        let mut layers = Vec::new();
        let (c0, h0, w0) = self.seed_shape;
        let mut n_in = self.embed_dim();
        for (i, &n_out) in self.fc_dims.iter().chain(std::iter::once(&(c0 * h0 * w0))).enumerate() {
            layers.push(Layer { name: format!("fc{i}"), kind: LayerKind::Dense { n_in, n_out } });
            n_in = n_out;
        }
        let (mut c, mut h, mut w) = (c0, h0, w0);
        for (i, b) in self.blocks.iter().enumerate() {
            let r = b.upscale;
            let shape = ConvShapeKey { in_c: c, out_c: b.out_channels * r * r, h, w, k: b.kernel };
            layers.push(Layer { name: format!("block{i}"), kind: LayerKind::Conv { shape, upscale: r, act: true } });
            (c, h, w) = (b.out_channels, h * r, w * r);
        }
        let shape = ConvShapeKey { in_c: c, out_c: self.out_channels, h, w, k: self.head_kernel() };
        layers.push(Layer { name: "head".into(), kind: LayerKind::Conv { shape, upscale: 1, act: false } });
        layers
    }

    /// `(name, shape)` of every parameter tensor, in declaration order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        self.layers()
            .into_iter()
            .flat_map(|l| {
                let w = (format!("{}.weight", l.name), l.weight_shape());
                let b = (format!("{}.bias", l.name), vec![l.bias_len()]);
                [w, b]
            })
            .collect()
    }

    /// Analytic parameter count.
    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|l| l.weight_shape().iter().product::<usize>() + l.bias_len()).sum()
    }

    pub(crate) fn write(&self, w: &mut Writer) -> Result<()> {
        let narrow =
            |v: usize, what: &str| u32::try_from(v).map_err(|_| Error::Config(format!("{what} {v} exceeds u32")));
        let small = |v: usize, what: &str| u8::try_from(v).map_err(|_| Error::Config(format!("{what} {v} exceeds u8")));
        w.u8(small(self.embed_freqs, "embed_freqs")?);
        w.f32(self.embed_base);
        w.u8(small(self.fc_dims.len(), "fc layer count")?);
        for &d in &self.fc_dims {
            w.u32(narrow(d, "fc width")?);
        }
        for v in [self.seed_shape.0, self.seed_shape.1, self.seed_shape.2] {
            w.u32(narrow(v, "seed dim")?);
        }
        w.u8(small(self.blocks.len(), "block count")?);
        for b in &self.blocks {
            w.u32(narrow(b.out_channels, "block channels")?);
            w.u8(small(b.upscale, "upscale")?);
            w.u8(small(b.kernel, "kernel")?);
        }
        w.u8(self.activation.tag());
        w.u8(small(self.out_channels, "out_channels")?);
        Ok(())
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Self> {
        let embed_freqs = r.u8()? as usize;
        let embed_base = r.f32()?;
        let n_fc = r.u8()? as usize;
        let fc_dims = (0..n_fc).map(|_| r.u32().map(|v| v as usize)).collect::<Result<_>>()?;
        let seed_shape = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
        let n_blocks = r.u8()? as usize;
        let blocks = (0..n_blocks)
            .map(|_| {
                Ok(BlockConfig { out_channels: r.u32()? as usize, upscale: r.u8()? as usize, kernel: r.u8()? as usize })
            })
            .collect::<Result<_>>()?;
        let activation = Activation::from_tag(r.u8()?)?;
        let out_channels = r.u8()? as usize;
        let cfg = Self { embed_freqs, embed_base, fc_dims, seed_shape, blocks, activation, out_channels };
        cfg.validate().map_err(|e| Error::Malformed(format!("network config: {e}")))?;
        Ok(cfg)
    }
}

/// A named parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T = f32> {
    pub name: String,
    pub tensor: Tensor<T>,
}

/// Ordered parameter set of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights<T = f32> {
    params: Vec<Param<T>>,
}

impl<T: Real> Weights<T> {
    pub fn new(params: Vec<Param<T>>) -> Self {
        Self { params }
    }

    pub fn zeros(cfg: &NetConfig) -> Self {
        Self::new(
            cfg.param_shapes().into_iter().map(|(name, shape)| Param { name, tensor: Tensor::zeros(shape) }).collect(),
        )
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn total_params(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.tensor)
    }

    /// All values, concatenated in declaration order.
    pub fn flatten(&self) -> Vec<T> {
        self.params.iter().flat_map(|p| p.tensor.values().iter().copied()).collect()
    }

    /// Inverse of [`Weights::flatten`] onto the same shapes.
    pub fn with_flat(&self, flat: &[T]) -> Result<Self> {
        if flat.len() != self.total_params() {
            return Err(Error::Shape(format!("{} values for {} parameters", flat.len(), self.total_params())));
        }
        let mut offset = 0;
        let params = self
            .params
            .iter()
            .map(|p| {
                let n = p.tensor.len();
                let tensor = Tensor::new(p.tensor.shape().to_vec(), flat[offset..offset + n].to_vec());
                offset += n;
                tensor.map(|tensor| Param { name: p.name.clone(), tensor })
            })
            .collect::<Result<_>>()?;
        Ok(Self { params })
    }

    /// Applies `f` to every tensor, keeping names.
    pub fn map_tensors(&self, mut f: impl FnMut(&str, &Tensor<T>) -> Tensor<T>) -> Self {
        Self::new(self.params.iter().map(|p| Param { name: p.name.clone(), tensor: f(&p.name, &p.tensor) }).collect())
    }

    pub fn cast<U: Real>(&self) -> Weights<U> {
        Weights::new(self.params.iter().map(|p| Param { name: p.name.clone(), tensor: p.tensor.cast() }).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.tensor.values().iter().all(|v| v.is_finite()))
    }

    /// Checks names and shapes against `cfg`.
    pub fn check(&self, cfg: &NetConfig) -> Result<()> {
        let shapes = cfg.param_shapes();
        if shapes.len() != self.params.len() {
            return Err(Error::Shape(format!("{} tensors, config expects {}", self.params.len(), shapes.len())));
        }
        for (p, (name, shape)) in self.params.iter().zip(&shapes) {
            if &p.name != name || p.tensor.shape() != shape.as_slice() {
                return Err(Error::Shape(format!(
                    "tensor {} {:?} does not match expected {name} {shape:?}",
                    p.name,
                    p.tensor.shape()
                )));
            }
        }
        Ok(())
    }
}

impl Weights<f32> {
    /// Serialized layout: tensor count (u32), then per tensor the name
    /// (u16 length + UTF-8), rank (u8), dims (u32 each) and the values as
    /// little-endian f32, in declaration order.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::new();
        self.write(&mut w)?;
        Ok(w.into_inner())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let out = Self::read(&mut r)?;
        if r.remaining() != 0 {
            return Err(Error::Malformed(format!("{} trailing bytes after weights", r.remaining())));
        }
        Ok(out)
    }

    pub(crate) fn write(&self, w: &mut Writer) -> Result<()> {
        w.u32(self.params.len() as u32);
        for p in &self.params {
            w.name(&p.name)?;
            write_shape(w, p.tensor.shape())?;
            for &v in p.tensor.values() {
                w.f32(v);
            }
        }
        Ok(())
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Self> {
        let n = r.u32()?;
        let mut params = Vec::new();
        for _ in 0..n {
            let name = r.name()?;
            let shape = read_shape(r)?;
            let len = r.count(shape.iter().product::<usize>() as u64, 4)?;
            let values = (0..len).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
            params.push(Param { name, tensor: Tensor::new(shape, values)? });
        }
        Ok(Self { params })
    }
}

pub(crate) fn write_shape(w: &mut Writer, shape: &[usize]) -> Result<()> {
    let rank = u8::try_from(shape.len()).map_err(|_| Error::Config("tensor rank exceeds u8".into()))?;
    w.u8(rank);
    for &d in shape {
        w.u32(u32::try_from(d).map_err(|_| Error::Config(format!("dim {d} exceeds u32")))?);
    }
    Ok(())
}

pub(crate) fn read_shape(r: &mut Reader<'_>) -> Result<Vec<usize>> {
    let rank = r.u8()? as usize;
    let shape: Vec<usize> = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<_>>()?;
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Malformed(format!("shape {shape:?} overflows")))?;
    Ok(shape)
}

/// Uniform `[-sqrt(6 / fan_in), sqrt(6 / fan_in)]` per tensor, drawn in
/// declaration order from a ChaCha8 stream seeded with `seed`.
pub fn init_weights(cfg: &NetConfig, seed: u64) -> Result<Weights> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Vec::new();
    for layer in cfg.layers() {
        let bound = (6.0 / layer.fan_in() as f64).sqrt() as f32;
        let mut draw = |shape: Vec<usize>| {
            let n: usize = shape.iter().product();
            let values = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
            Tensor::new(shape, values).expect("length matches shape")
        };
        let weight = draw(layer.weight_shape());
        let bias = draw(vec![layer.bias_len()]);
        params.push(Param { name: format!("{}.weight", layer.name), tensor: weight });
        params.push(Param { name: format!("{}.bias", layer.name), tensor: bias });
    }
    Ok(Weights::new(params))
}

/// Sinusoidal embedding of patch `index` (1-based) out of `n_total`:
/// `[sin(b^j pi t), cos(b^j pi t)]` for `j = 0..L`, interleaved, `t = i / N`.
pub fn positional_embed<T: Real>(index: usize, n_total: usize, cfg: &NetConfig) -> Result<Vec<T>> {
    if index == 0 || index > n_total {
        return Err(Error::Config(format!("patch index {index} outside 1..={n_total}")));
    }
    let t = index as f64 / n_total as f64;
    let base = cfg.embed_base as f64;
    Ok((0..cfg.embed_freqs)
        .flat_map(|j| {
            let arg = base.powi(j as i32) * PI * t;
            [T::of(arg.sin()), T::of(arg.cos())]
        })
        .collect())
}

/// Intermediate values kept for the backward pass.
struct Trace<T> {
    /// Input to each layer (post-activation output of the previous one).
    inputs: Vec<Vec<T>>,
    /// Pre-activation output of each activated layer (after shuffle for
    /// conv blocks); empty for the head.
    pre: Vec<Vec<T>>,
    output: Vec<T>,
}

/// Network bound to a validated config; cheap to construct.
pub struct Network<'a, T> {
    cfg: &'a NetConfig,
    layers: Vec<Layer>,
    weights: &'a Weights<T>,
}

impl<'a, T: Real> Network<'a, T> {
    pub fn new(cfg: &'a NetConfig, weights: &'a Weights<T>) -> Result<Self> {
        cfg.validate()?;
        weights.check(cfg)?;
        Ok(Self { cfg, layers: cfg.layers(), weights })
    }

    pub fn output_shape(&self) -> Vec<usize> {
        let (ph, pw) = self.cfg.patch_dims();
        vec![self.cfg.out_channels, ph, pw]
    }

    fn trace(&self, index: usize, n_total: usize) -> Result<Trace<T>> {
        let mut x: Vec<T> = positional_embed(index, n_total, self.cfg)?;
        let params = self.weights.params();
        let act = self.cfg.activation;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        for (li, layer) in self.layers.iter().enumerate() {
            let (w, b) = (params[2 * li].tensor.values(), params[2 * li + 1].tensor.values());
            let z = match layer.kind {
                LayerKind::Dense { .. } => layers::dense_forward(w, b, &x),
                LayerKind::Conv { shape, upscale, act: true } => {
                    let conv = layers::conv_forward(shape.into(), w, b, &x);
                    layers::shuffle(&conv, shape.out_c / (upscale * upscale), shape.h, shape.w, upscale)
                }
                LayerKind::Conv { shape, act: false, .. } => {
                    let out = layers::conv_forward(shape.into(), w, b, &x);
                    inputs.push(x);
                    pre.push(Vec::new());
                    x = out;
                    continue;
                }
            };
            let a = z.iter().map(|&v| act.apply(v)).collect();
            inputs.push(std::mem::replace(&mut x, a));
            pre.push(z);
        }
        Ok(Trace { inputs, pre, output: x })
    }

    pub fn forward(&self, index: usize, n_total: usize) -> Result<Tensor<T>> {
        let trace = self.trace(index, n_total)?;
        Tensor::new(self.output_shape(), trace.output)
    }

    /// Loss (mean squared error over the patch) and its exact gradient with
    /// respect to every parameter.
    pub fn backward(&self, index: usize, n_total: usize, target: &Tensor<T>) -> Result<(f64, Weights<T>)> {
        let mut grads = Weights::zeros(self.cfg);
        let loss = self.backward_into(index, n_total, target.values(), &mut grads)?;
        Ok((loss, grads))
    }

    /// Like [`Network::backward`] but accumulates into `grads`.
    pub fn backward_into(&self, index: usize, n_total: usize, target: &[T], grads: &mut Weights<T>) -> Result<f64> {
        self.backward_with_output(index, n_total, target, grads).map(|(loss, _)| loss)
    }

    /// Like [`Network::backward_into`], also returning the forward output
    /// computed along the way.
    pub fn backward_with_output(
        &self,
        index: usize,
        n_total: usize,
        target: &[T],
        grads: &mut Weights<T>,
    ) -> Result<(f64, Vec<T>)> {
        let shape = self.output_shape();
        let n: usize = shape.iter().product();
        if target.len() != n {
            return Err(Error::Shape(format!("target has {} values, output has {n}", target.len())));
        }
        let trace = self.trace(index, n_total)?;
        let loss = trace.output.iter().zip(target).map(|(&p, &t)| (p - t).f64().powi(2)).sum::<f64>() / n as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("loss for patch {index}")));
        }
        let scale = T::of(2.0 / n as f64);
        let mut g: Vec<T> = trace.output.iter().zip(target).map(|(&p, &t)| scale * (p - t)).collect();

        let params = self.weights.params();
        let act = self.cfg.activation;
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let w = params[2 * li].tensor.values();
            let input = &trace.inputs[li];
            let (gw_slot, gb_slot) = grads.params_mut()[2 * li..2 * li + 2].split_at_mut(1);
            let (gw, gb) = (gw_slot[0].tensor.values_mut(), gb_slot[0].tensor.values_mut());
            g = match layer.kind {
                LayerKind::Dense { .. } => {
                    let gz: Vec<T> = g.iter().zip(&trace.pre[li]).map(|(&ga, &z)| ga * act.grad(z)).collect();
                    layers::dense_backward(w, input, &gz, gw, gb)
                }
                LayerKind::Conv { shape, upscale, act: true } => {
                    let gz: Vec<T> = g.iter().zip(&trace.pre[li]).map(|(&ga, &z)| ga * act.grad(z)).collect();
                    let c = shape.out_c / (upscale * upscale);
                    let gconv = layers::unshuffle(&gz, c, shape.h, shape.w, upscale);
                    layers::conv_backward(shape.into(), w, input, &gconv, gw, gb)
                }
                LayerKind::Conv { shape, act: false, .. } => layers::conv_backward(shape.into(), w, input, &g, gw, gb),
            };
        }
        Ok((loss, trace.output))
    }
}

/// Network output for patch `index` (1-based) of `n_total`.
pub fn forward<T: Real>(w: &Weights<T>, cfg: &NetConfig, index: usize, n_total: usize) -> Result<Tensor<T>> {
    Network::new(cfg, w)?.forward(index, n_total)
}

/// Per-patch MSE loss against `target` and its gradient.
pub fn backward<T: Real>(
    w: &Weights<T>,
    cfg: &NetConfig,
    index: usize,
    n_total: usize,
    target: &Tensor<T>,
) -> Result<(f64, Weights<T>)> {
    let net = Network::new(cfg, w)?;
    if target.shape() != net.output_shape().as_slice() {
        return Err(Error::Shape(format!(
            "target shape {:?} != output shape {:?}",
            target.shape(),
            net.output_shape()
        )));
    }
    net.backward(index, n_total, target)
}
