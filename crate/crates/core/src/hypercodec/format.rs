//! Byte layout of a [`HyperArtifact`], little-endian:
//!
//! ```text
//! group_size u8, k_bits u8, lo f32, hi f32, class_factors 4 x f32, error_norm u8
//! total_params u64, layer_count u32
//! per layer:
//!   name (u16 len + UTF-8), element_count u64, rank u8, dims u32 x rank,
//!   flags u8 (bit 0: constant), min f32, max f32,
//!   records: (k_bits + 2) bits each, k in the low bits then class,
//!            LSB-first, padded to a whole byte,
//!   tail f32 x (element_count % group_size)
//! ```
//!
//! Constant layers carry no records and no tail.

use super::{CodecConfig, ErrorNorm, GroupRecord, HyperArtifact, LayerRecord, CLASS_COUNT};
use crate::error::{Error, Result};
use crate::inr_net::{read_shape, write_shape};
use crate::wire::{Reader, Writer};

const FLAG_CONSTANT: u8 = 1;
const HEADER_BYTES: usize = 1 + 1 + 4 + 4 + 4 * CLASS_COUNT + 1 + 8 + 4;

impl HyperArtifact {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::new();
        self.write(&mut w)?;
        Ok(w.into_inner())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let a = Self::read(&mut r)?;
        if r.remaining() != 0 {
            return Err(Error::Malformed(format!("{} trailing bytes after artifact", r.remaining())));
        }
        Ok(a)
    }

    /// Serialized size, computed from the records without encoding.
    pub fn encoded_len(&self) -> usize {
        HEADER_BYTES
            + self
                .layers
                .iter()
                .map(|l| layer_len(&self.config, l.name.len(), l.shape.len(), l.element_count(), l.constant))
                .sum::<usize>()
    }

    pub(crate) fn write(&self, w: &mut Writer) -> Result<()> {
        let c = &self.config;
        c.validate()?;
        w.u8(c.group_size as u8);
        w.u8(c.k_bits as u8);
        w.f32(c.target_range.0);
        w.f32(c.target_range.1);
        for &f in &c.class_factors {
            w.f32(f);
        }
        w.u8(c.error_norm.tag());
        w.u64(self.total_params);
        w.u32(u32::try_from(self.layers.len()).map_err(|_| Error::Config("too many layers".into()))?);
        for layer in &self.layers {
            write_layer(w, c, layer)?;
        }
        Ok(())
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Self> {
        let group_size = r.u8()? as usize;
        let k_bits = r.u8()? as u32;
        let target_range = (r.f32()?, r.f32()?);
        let mut class_factors = [0f32; CLASS_COUNT];
        for f in &mut class_factors {
            *f = r.f32()?;
        }
        let error_norm = ErrorNorm::from_tag(r.u8()?)?;
        let config = CodecConfig { group_size, k_bits, target_range, class_factors, error_norm };
        config.validate().map_err(|e| Error::Malformed(format!("codec header: {e}")))?;
        let total_params = r.u64()?;
        let n_layers = r.u32()?;
        let mut layers = Vec::new();
        for _ in 0..n_layers {
            layers.push(read_layer(r, &config)?);
        }
        let held: u64 = layers.iter().map(|l| l.element_count() as u64).sum();
        if held != total_params {
            return Err(Error::Malformed(format!("artifact declares {total_params} parameters, layers hold {held}")));
        }
        Ok(Self { config, total_params, layers })
    }
}

/// Serialized size of a whole artifact for tensors of the given names and
/// shapes, none of them constant.
pub fn estimate_len<'a>(cfg: &CodecConfig, tensors: impl IntoIterator<Item = (&'a str, &'a [usize])>) -> usize {
    HEADER_BYTES
        + tensors
            .into_iter()
            .map(|(name, shape)| layer_len(cfg, name.len(), shape.len(), shape.iter().product(), false))
            .sum::<usize>()
}

fn layer_len(cfg: &CodecConfig, name_len: usize, rank: usize, count: usize, constant: bool) -> usize {
    let fixed = 2 + name_len + 8 + 1 + 4 * rank + 1 + 4 + 4;
    if constant {
        return fixed;
    }
    let g = cfg.group_size;
    fixed + (count / g * cfg.record_bits()).div_ceil(8) + 4 * (count % g)
}

fn write_layer(w: &mut Writer, cfg: &CodecConfig, layer: &LayerRecord) -> Result<()> {
    let count = layer.element_count();
    let g = cfg.group_size;
    let (n_groups, n_tail) = if layer.constant { (0, 0) } else { (count / g, count % g) };
    if layer.groups.len() != n_groups || layer.tail.len() != n_tail {
        return Err(Error::Config(format!(
            "layer {}: {} records and {} tail values for {count} elements",
            layer.name,
            layer.groups.len(),
            layer.tail.len()
        )));
    }
    w.name(&layer.name)?;
    w.u64(count as u64);
    write_shape(w, &layer.shape)?;
    w.u8(if layer.constant { FLAG_CONSTANT } else { 0 });
    w.f32(layer.min);
    w.f32(layer.max);
    let mut bits = BitWriter::default();
    for rec in &layer.groups {
        if rec.k > cfg.k_max() || rec.class_id as usize >= CLASS_COUNT {
            return Err(Error::Config(format!("layer {}: record {rec:?} out of range", layer.name)));
        }
        bits.push(rec.k as u64 | (rec.class_id as u64) << cfg.k_bits, cfg.record_bits());
    }
    w.bytes(&bits.finish());
    for &v in &layer.tail {
        w.f32(v);
    }
    Ok(())
}

fn read_layer(r: &mut Reader<'_>, cfg: &CodecConfig) -> Result<LayerRecord> {
    let name = r.name()?;
    let count = r.u64()?;
    let shape = read_shape(r)?;
    let product = shape.iter().try_fold(1u64, |acc, &d| acc.checked_mul(d as u64));
    if product != Some(count) {
        return Err(Error::Malformed(format!("layer {name}: shape {shape:?} does not hold {count} elements")));
    }
    let flags = r.u8()?;
    if flags & !FLAG_CONSTANT != 0 {
        return Err(Error::Malformed(format!("layer {name}: unknown flags {flags:#x}")));
    }
    let constant = flags & FLAG_CONSTANT != 0;
    let (min, max) = (r.f32()?, r.f32()?);
    if !(min.is_finite() && max.is_finite() && min <= max) || (constant && min != max) {
        return Err(Error::Malformed(format!("layer {name}: bad range [{min}, {max}]")));
    }
    let mut layer = LayerRecord { name, shape, min, max, constant, groups: Vec::new(), tail: Vec::new() };
    if constant {
        return Ok(layer);
    }
    let g = cfg.group_size as u64;
    let n_groups = r.count(count / g, 0)?;
    let n_bytes = (count / g)
        .checked_mul(cfg.record_bits() as u64)
        .map(|b| b.div_ceil(8))
        .ok_or_else(|| Error::Malformed("record block too large".into()))?;
    let packed = r.take(r.count(n_bytes, 1)?)?;
    let mut bits = BitReader::new(packed);
    let k_mask = (1u64 << cfg.k_bits) - 1;
    layer.groups = (0..n_groups)
        .map(|_| {
            let v = bits.pull(cfg.record_bits());
            GroupRecord { k: (v & k_mask) as u32, class_id: (v >> cfg.k_bits) as u8 }
        })
        .collect();
    let n_tail = r.count(count % g, 4)?;
    layer.tail = (0..n_tail).map(|_| r.f32()).collect::<Result<_>>()?;
    Ok(layer)
}

#[derive(Default)]
struct BitWriter {
    out: Vec<u8>,
    acc: u64,
    filled: usize,
}

impl BitWriter {
    fn push(&mut self, value: u64, width: usize) {
        self.acc |= value << self.filled;
        self.filled += width;
        while self.filled >= 8 {
            self.out.push(self.acc as u8);
            self.acc >>= 8;
            self.filled -= 8;
        }
    }

    fn finish(mut self) -> Vec<u8> {
        if self.filled > 0 {
            self.out.push(self.acc as u8);
        }
        self.out
    }
}

struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    acc: u64,
    filled: usize,
}

impl<'a> BitReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0, acc: 0, filled: 0 }
    }

    /// Caller guarantees enough bytes remain.
    fn pull(&mut self, width: usize) -> u64 {
        while self.filled < width {
            self.acc |= (self.bytes[self.pos] as u64) << self.filled;
            self.pos += 1;
            self.filled += 8;
        }
        let v = self.acc & ((1u64 << width) - 1);
        self.acc >>= width;
        self.filled -= width;
        v
    }
}
