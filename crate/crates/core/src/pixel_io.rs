//! Image I/O (binary PGM/PPM and PNG) and the tiling of an image into the
//! indexed patch grid consumed by the network.
//!
//! [`Image`] stores samples interleaved, row-major (`(y * W + x) * C + c`), as
//! the file formats do. Patches are stored planar (`c, y, x`) so they map
//! directly onto network output tensors.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};

/// Upper bound on decoded sample count; anything larger is rejected as an
/// overflow rather than attempted.
const MAX_SAMPLES: usize = 1 << 32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Config(format!("empty image {width}x{height}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::Config(format!("unsupported channel count {channels}")));
        }
        let expected = sample_count(width, height, channels)?;
        if data.len() != expected {
            return Err(Error::Shape(format!("image data has {} samples, expected {expected}", data.len())));
        }
        Ok(Self { width, height, channels, data })
    }

    /// Image filled by evaluating `f(x, y, c)` per sample.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> u8,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(sample_count(width, height, channels)?);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self::new(width, height, channels, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Single channel as a `height x width` row-major plane.
    pub fn plane(&self, c: usize) -> Vec<u8> {
        self.data.iter().skip(c).step_by(self.channels).copied().collect()
    }
}

fn sample_count(width: usize, height: usize, channels: usize) -> Result<usize> {
    width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .filter(|&n| n <= MAX_SAMPLES)
        .ok_or_else(|| Error::DimensionOverflow(format!("{width}x{height}x{channels}")))
}

/// Loads a binary PGM (P5), binary PPM (P6) or PNG file. The format is
/// detected from the leading bytes, not the extension.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let bytes = fs::read(path)?;
    decode_image(&bytes)
}

pub fn decode_image(bytes: &[u8]) -> Result<Image> {
    if bytes.starts_with(b"P5") || bytes.starts_with(b"P6") {
        decode_pnm(bytes)
    } else if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
        decode_png(bytes)
    } else if bytes.len() < 2 {
        Err(Error::UnexpectedEof)
    } else {
        Err(Error::UnsupportedFormat("expected binary PGM/PPM or PNG".into()))
    }
}

/// Writes `img` as PNG when the path ends in `.png`, otherwise as PGM/PPM
/// depending on the channel count.
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let is_png = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("png"));
    let bytes = if is_png { encode_png(img)? } else { encode_pnm(img) };
    fs::write(path, bytes)?;
    Ok(())
}

pub fn encode_pnm(img: &Image) -> Vec<u8> {
    let magic = if img.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

struct PnmHeader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl PnmHeader<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return if self.pos >= self.bytes.len() {
                Err(Error::UnexpectedEof)
            } else {
                Err(Error::UnsupportedFormat("malformed PNM header".into()))
            };
        }
        // Header numbers are ASCII digits, so this only fails on overflow.
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| Error::DimensionOverflow("PNM header value".into()))
    }
}

fn decode_pnm(bytes: &[u8]) -> Result<Image> {
    let channels = if bytes[1] == b'5' { 1 } else { 3 };
    let mut hdr = PnmHeader { bytes, pos: 2 };
    let width = hdr.number()?;
    let height = hdr.number()?;
    let maxval = hdr.number()?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::UnsupportedFormat(format!("PNM maxval {maxval} (only 8-bit supported)")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if hdr.pos >= bytes.len() {
        return Err(Error::UnexpectedEof);
    }
    if !bytes[hdr.pos].is_ascii_whitespace() {
        return Err(Error::UnsupportedFormat("malformed PNM header".into()));
    }
    let raster = &bytes[hdr.pos + 1..];
    let n = sample_count(width, height, channels)?;
    if raster.len() < n {
        return Err(Error::UnexpectedEof);
    }
    let mut data = raster[..n].to_vec();
    if maxval != 255 {
        for v in &mut data {
            *v = ((*v as usize).min(maxval) * 255 / maxval) as u8;
        }
    }
    Image::new(width, height, channels, data)
}

fn png_error(e: png::DecodingError) -> Error {
    match e {
        png::DecodingError::IoError(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => Error::UnexpectedEof,
        png::DecodingError::IoError(io) => Error::Io(io),
        other => Error::UnsupportedFormat(format!("png: {other}")),
    }
}

fn decode_png(bytes: &[u8]) -> Result<Image> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(png_error)?;
    let size = reader.output_buffer_size().ok_or_else(|| Error::DimensionOverflow("png output buffer".into()))?;
    if size > MAX_SAMPLES {
        return Err(Error::DimensionOverflow(format!("png buffer of {size} bytes")));
    }
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(png_error)?;
    buf.truncate(info.buffer_size());
    let (width, height) = (info.width as usize, info.height as usize);
    let src_channels = info.color_type.samples();
    let channels = match info.color_type {
        png::ColorType::Grayscale | png::ColorType::GrayscaleAlpha => 1,
        png::ColorType::Rgb | png::ColorType::Rgba => 3,
        png::ColorType::Indexed => {
            return Err(Error::UnsupportedFormat("unexpanded indexed png".into()));
        }
    };
    let data = if src_channels == channels {
        buf
    } else {
        // Alpha is dropped.
        buf.chunks_exact(src_channels).flat_map(|px| px[..channels].to_vec()).collect()
    };
    Image::new(width, height, channels, data)
}

pub fn encode_png(img: &Image) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let w = u32::try_from(img.width).map_err(|_| Error::DimensionOverflow("png width".into()))?;
    let h = u32::try_from(img.height).map_err(|_| Error::DimensionOverflow("png height".into()))?;
    let mut enc = png::Encoder::new(&mut out, w, h);
    enc.set_color(if img.channels == 1 { png::ColorType::Grayscale } else { png::ColorType::Rgb });
    enc.set_depth(png::BitDepth::Eight);
    let to_io = |e: png::EncodingError| Error::Io(std::io::Error::other(e));
    let mut writer = enc.write_header().map_err(to_io)?;
    writer.write_image_data(&img.data).map_err(to_io)?;
    writer.finish().map_err(to_io)?;
    Ok(out)
}

/// An image tiled into `rows x cols` equally sized patches.
///
/// Patch indices are 1-based (`1..=len()`), enumerated row-major from the
/// top-left. Boundary patches are padded by edge replication.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchGrid {
    patch_h: usize,
    patch_w: usize,
    rows: usize,
    cols: usize,
    orig_w: usize,
    orig_h: usize,
    channels: usize,
    patches: Vec<Vec<u8>>,
}

impl PatchGrid {
    /// Reassembles a grid from raw parts, validating every invariant.
    pub fn from_parts(
        patch_h: usize,
        patch_w: usize,
        orig_w: usize,
        orig_h: usize,
        channels: usize,
        patches: Vec<Vec<u8>>,
    ) -> Result<Self> {
        if patch_h == 0 || patch_w == 0 {
            return Err(Error::Config("patch size must be at least 1".into()));
        }
        let rows = orig_h.div_ceil(patch_h);
        let cols = orig_w.div_ceil(patch_w);
        if patches.len() != rows * cols {
            return Err(Error::Shape(format!("{} patches for a {rows}x{cols} grid", patches.len())));
        }
        let len = patch_h * patch_w * channels;
        if let Some(bad) = patches.iter().position(|p| p.len() != len) {
            return Err(Error::Shape(format!("patch {} has {} samples, expected {len}", bad + 1, patches[bad].len())));
        }
        Ok(Self { patch_h, patch_w, rows, cols, orig_w, orig_h, channels, patches })
    }

    pub fn patch_h(&self) -> usize {
        self.patch_h
    }

    pub fn patch_w(&self) -> usize {
        self.patch_w
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn orig_w(&self) -> usize {
        self.orig_w
    }

    pub fn orig_h(&self) -> usize {
        self.orig_h
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Patch count `N`.
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    /// Planar samples of patch `index` (1-based).
    pub fn patch(&self, index: usize) -> &[u8] {
        assert!((1..=self.len()).contains(&index), "patch index {index} out of 1..={}", self.len());
        &self.patches[index - 1]
    }

    pub fn patches(&self) -> &[Vec<u8>] {
        &self.patches
    }

    /// Same geometry, different content.
    pub fn with_patches(&self, patches: Vec<Vec<u8>>) -> Result<Self> {
        Self::from_parts(self.patch_h, self.patch_w, self.orig_w, self.orig_h, self.channels, patches)
    }
}

/// Number of patches for an `h x w` image tiled with `p_h x p_w` patches.
pub fn patch_count(h: usize, w: usize, p_h: usize, p_w: usize) -> usize {
    h.div_ceil(p_h) * w.div_ceil(p_w)
}

pub fn split_patches(img: &Image, p_h: usize, p_w: usize) -> Result<PatchGrid> {
    if p_h == 0 || p_w == 0 {
        return Err(Error::Config("patch size must be at least 1".into()));
    }
    let rows = img.height.div_ceil(p_h);
    let cols = img.width.div_ceil(p_w);
    let c_n = img.channels;
    let mut patches = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for q in 0..cols {
            let mut buf = vec![0u8; c_n * p_h * p_w];
            for c in 0..c_n {
                for dy in 0..p_h {
                    let y = (r * p_h + dy).min(img.height - 1);
                    for dx in 0..p_w {
                        let x = (q * p_w + dx).min(img.width - 1);
                        buf[(c * p_h + dy) * p_w + dx] = img.get(x, y, c);
                    }
                }
            }
            patches.push(buf);
        }
    }
    PatchGrid::from_parts(p_h, p_w, img.width, img.height, c_n, patches)
}

pub fn stitch(grid: &PatchGrid) -> Result<Image> {
    if grid.patches.len() != grid.rows * grid.cols {
        return Err(Error::Shape(format!("{} patches for a {}x{} grid", grid.patches.len(), grid.rows, grid.cols)));
    }
    let (p_h, p_w, c_n) = (grid.patch_h, grid.patch_w, grid.channels);
    let mut data = vec![0u8; sample_count(grid.orig_w, grid.orig_h, c_n)?];
    for (idx, patch) in grid.patches.iter().enumerate() {
        let (r, q) = (idx / grid.cols, idx % grid.cols);
        let y_end = ((r + 1) * p_h).min(grid.orig_h);
        let x_end = ((q + 1) * p_w).min(grid.orig_w);
        for y in r * p_h..y_end {
            for x in q * p_w..x_end {
                for c in 0..c_n {
                    data[(y * grid.orig_w + x) * c_n + c] = patch[(c * p_h + (y - r * p_h)) * p_w + (x - q * p_w)];
                }
            }
        }
    }
    Image::new(grid.orig_w, grid.orig_h, c_n, data)
}
