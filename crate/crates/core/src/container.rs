//! The `.coli` file: one image's network and weights.
//!
//! ```text
//! "COLI" | version u16 | payload kind u8 (0 raw weights, 1 trajectory-coded)
//! width u32 | height u32 | channels u8 | patch_h u32 | patch_w u32 | patch order u8 (0 row-major)
//! network config block | payload length u64 | payload | CRC32 of everything before it (u32)
//! ```
//!
//! All integers are little-endian.

use crate::error::{Error, Result};
use crate::hypercodec::{decompress, HyperArtifact};
use crate::inr_net::{NetConfig, Weights};
use crate::pixel_io::{patch_count, Image, PatchGrid};
use crate::trainer::reconstruct;
use crate::wire::{Reader, Writer};

pub const MAGIC: &[u8; 4] = b"COLI";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadKind {
    RawWeights,
    Hyper,
}

impl PayloadKind {
    fn tag(self) -> u8 {
        match self {
            PayloadKind::RawWeights => 0,
            PayloadKind::Hyper => 1,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(PayloadKind::RawWeights),
            1 => Ok(PayloadKind::Hyper),
            t => Err(Error::Malformed(format!("unknown payload kind {t}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    RawWeights(Weights),
    Hyper(HyperArtifact),
}

impl Payload {
    pub fn kind(&self) -> PayloadKind {
        match self {
            Payload::RawWeights(_) => PayloadKind::RawWeights,
            Payload::Hyper(_) => PayloadKind::Hyper,
        }
    }

    fn to_bytes(&self) -> Result<Vec<u8>> {
        match self {
            Payload::RawWeights(w) => w.to_bytes(),
            Payload::Hyper(a) => a.to_bytes(),
        }
    }

    fn shapes(&self) -> Vec<(String, Vec<usize>)> {
        match self {
            Payload::RawWeights(w) => w.params().iter().map(|p| (p.name.clone(), p.tensor.shape().to_vec())).collect(),
            Payload::Hyper(a) => a.layers.iter().map(|l| (l.name.clone(), l.shape.clone())).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageMeta {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub patch_h: usize,
    pub patch_w: usize,
}

impl ImageMeta {
    pub fn of_grid(grid: &PatchGrid) -> Self {
        Self {
            width: grid.orig_w(),
            height: grid.orig_h(),
            channels: grid.channels(),
            patch_h: grid.patch_h(),
            patch_w: grid.patch_w(),
        }
    }

    /// Number of patches, row-major from the top-left.
    pub fn patch_count(&self) -> usize {
        patch_count(self.height, self.width, self.patch_h, self.patch_w)
    }
}

const ROW_MAJOR: u8 = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct ColiFile {
    pub meta: ImageMeta,
    pub net: NetConfig,
    pub payload: Payload,
}

impl ColiFile {
    /// Checks that image, network and payload agree.
    pub fn validate(&self) -> Result<()> {
        let m = &self.meta;
        if m.width == 0 || m.height == 0 || m.patch_h == 0 || m.patch_w == 0 {
            return Err(Error::Config(format!("empty image or patch size in {m:?}")));
        }
        if m.channels != 1 && m.channels != 3 {
            return Err(Error::Config(format!("{} channels", m.channels)));
        }
        self.net.validate()?;
        if self.net.patch_dims() != (m.patch_h, m.patch_w) || self.net.out_channels != m.channels {
            return Err(Error::Config(format!(
                "network produces {:?} x {} patches, image meta says {}x{} x {}",
                self.net.patch_dims(),
                self.net.out_channels,
                m.patch_h,
                m.patch_w,
                m.channels
            )));
        }
        if self.payload.shapes() != self.net.param_shapes() {
            return Err(Error::Config("payload tensors do not match the network config".into()));
        }
        Ok(())
    }

    /// Decoded network weights.
    pub fn weights(&self) -> Result<Weights> {
        match &self.payload {
            Payload::RawWeights(w) => Ok(w.clone()),
            Payload::Hyper(a) => decompress(a),
        }
    }

    /// Decodes the weights and renders every patch into the stored image size.
    pub fn render(&self) -> Result<Image> {
        let m = &self.meta;
        let blank = vec![vec![0u8; m.patch_h * m.patch_w * m.channels]; m.patch_count()];
        let grid = PatchGrid::from_parts(m.patch_h, m.patch_w, m.width, m.height, m.channels, blank)?;
        reconstruct(&self.weights()?, &self.net, &grid)
    }
}

pub fn encode_file(file: &ColiFile) -> Result<Vec<u8>> {
    file.validate()?;
    let narrow = |v: usize| u32::try_from(v).map_err(|_| Error::DimensionOverflow(format!("{v} exceeds u32")));
    let m = &file.meta;
    let mut w = Writer::new();
    w.bytes(MAGIC);
    w.u16(FORMAT_VERSION);
    w.u8(file.payload.kind().tag());
    w.u32(narrow(m.width)?);
    w.u32(narrow(m.height)?);
    w.u8(m.channels as u8);
    w.u32(narrow(m.patch_h)?);
    w.u32(narrow(m.patch_w)?);
    w.u8(ROW_MAJOR);
    file.net.write(&mut w)?;
    let payload = file.payload.to_bytes()?;
    w.u64(payload.len() as u64);
    w.bytes(&payload);
    let mut bytes = w.into_inner();
    let crc = crc32fast::hash(&bytes);
    bytes.extend_from_slice(&crc.to_le_bytes());
    Ok(bytes)
}

/// Fields up to the payload, parsed without semantic checks.
struct Frame<'a> {
    kind: u8,
    meta: [u32; 4],
    channels: u8,
    order: u8,
    net: Result<NetConfig>,
    payload: &'a [u8],
}

fn read_frame<'a>(r: &mut Reader<'a>) -> Result<Frame<'a>> {
    let kind = r.u8()?;
    let width = r.u32()?;
    let height = r.u32()?;
    let channels = r.u8()?;
    let patch_h = r.u32()?;
    let patch_w = r.u32()?;
    let order = r.u8()?;
    let net = match NetConfig::read(r) {
        Err(Error::UnexpectedEof) => return Err(Error::UnexpectedEof),
        other => other,
    };
    let len = r.u64()?;
    let payload = r.take(r.count(len, 1)?)?;
    Ok(Frame { kind, meta: [width, height, patch_h, patch_w], channels, order, net, payload })
}

pub fn decode_file(bytes: &[u8]) -> Result<ColiFile> {
    let head = &bytes[..bytes.len().min(4)];
    if head != &MAGIC[..head.len()] {
        return Err(Error::BadMagic);
    }
    let mut r = Reader::new(bytes);
    r.take(4)?;
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let frame = read_frame(&mut r)?;
    let body_end = r.position();
    let stored = r.u32()?;
    if r.remaining() != 0 {
        return Err(Error::Malformed(format!("{} bytes after checksum", r.remaining())));
    }
    let computed = crc32fast::hash(&bytes[..body_end]);
    if stored != computed {
        return Err(Error::CrcMismatch { stored, computed });
    }

    let kind = PayloadKind::from_tag(frame.kind)?;
    if frame.order != ROW_MAJOR {
        return Err(Error::Malformed(format!("unknown patch order {}", frame.order)));
    }
    let [width, height, patch_h, patch_w] = frame.meta.map(|v| v as usize);
    let meta = ImageMeta { width, height, channels: frame.channels as usize, patch_h, patch_w };
    let net = frame.net?;
    let payload = match kind {
        PayloadKind::RawWeights => Payload::RawWeights(Weights::from_bytes(frame.payload)?),
        PayloadKind::Hyper => Payload::Hyper(HyperArtifact::from_bytes(frame.payload)?),
    };
    let file = ColiFile { meta, net, payload };
    file.validate().map_err(|e| match e {
        Error::Config(m) => Error::Malformed(m),
        other => other,
    })?;
    Ok(file)
}
