//! File formats: HDT tensors, PFM and 16-bit PNG depth, indexed-PNG index
//! maps, and CSV histograms.
//!
//! HDT layout (all integers little-endian):
//!
//! ```text
//! magic  "HDT1"          4 bytes
//! dtype  u8              0 = f32, 1 = f64, 2 = u8, 3 = u32
//! ndim   u8
//! dims   ndim x u32
//! data   row-major payload, product(dims) elements
//! ```

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Cursor, Read, Write};
use std::path::Path;

use crate::alignment::{IndexMap, PatchVectors};
use crate::distribution::{DepthHistogram, DepthRange, ProjectionHead, QueryEmbedding};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::loss::is_valid_depth;

pub const HDT_MAGIC: &[u8; 4] = b"HDT1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum DType {
    F32 = 0,
    F64 = 1,
    U8 = 2,
    U32 = 3,
}

impl DType {
    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(DType::F32),
            1 => Ok(DType::F64),
            2 => Ok(DType::U8),
            3 => Ok(DType::U32),
            other => Err(Error::UnsupportedDtype(other)),
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 | DType::U32 => 4,
            DType::F64 => 8,
            DType::U8 => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U8(Vec<u8>),
    U32(Vec<u32>),
}

impl TensorData {
    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
            TensorData::U8(_) => DType::U8,
            TensorData::U32(_) => DType::U32,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
            TensorData::U8(v) => v.len(),
            TensorData::U32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HdtTensor {
    dims: Vec<u32>,
    data: TensorData,
}

impl HdtTensor {
    pub fn new(dims: Vec<u32>, data: TensorData) -> Result<Self> {
        if dims.len() > u8::MAX as usize {
            return Err(Error::MalformedFile(format!("{} dimensions", dims.len())));
        }
        let count: usize = dims.iter().map(|&d| d as usize).product();
        if count != data.len() {
            return Err(Error::MalformedFile(format!(
                "dims {dims:?} hold {count} elements, payload has {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> &[u32] {
        &self.dims
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(HDT_MAGIC)?;
        w.write_all(&[self.dtype() as u8, self.dims.len() as u8])?;
        for d in &self.dims {
            w.write_all(&d.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.data.len() * self.dtype().size());
        match &self.data {
            TensorData::F32(v) => v.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes())),
            TensorData::U8(v) => buf.extend_from_slice(v),
            TensorData::U32(v) => v.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes())),
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut head = [0u8; 6];
        r.read_exact(&mut head)
            .map_err(|_| Error::MalformedFile("truncated HDT header".into()))?;
        if &head[..4] != HDT_MAGIC {
            return Err(Error::MalformedFile("bad HDT magic".into()));
        }
        let dtype = DType::from_code(head[4])?;
        let ndim = head[5] as usize;
        let mut dim_bytes = vec![0u8; 4 * ndim];
        r.read_exact(&mut dim_bytes)
            .map_err(|_| Error::MalformedFile("truncated HDT dims".into()))?;
        let dims: Vec<u32> = dim_bytes
            .chunks_exact(4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
            .ok_or_else(|| Error::MalformedFile("HDT dims overflow".into()))?;
        let mut payload = Vec::new();
        r.read_to_end(&mut payload)?;
        if payload.len() != count * dtype.size() {
            return Err(Error::MalformedFile(format!(
                "payload is {} bytes, dims {dims:?} need {}",
                payload.len(),
                count * dtype.size()
            )));
        }
        let data = match dtype {
            DType::F32 => TensorData::F32(
                payload.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect(),
            ),
            DType::F64 => TensorData::F64(
                payload.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect(),
            ),
            DType::U8 => TensorData::U8(payload),
            DType::U32 => TensorData::U32(
                payload.chunks_exact(4).map(|b| u32::from_le_bytes(b.try_into().unwrap())).collect(),
            ),
        };
        Self::new(dims, data)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_from(Cursor::new(bytes))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }

    fn f32_payload(&self, what: &str) -> Result<&[f32]> {
        match &self.data {
            TensorData::F32(v) => Ok(v),
            _ => Err(Error::MalformedFile(format!("{what} must be stored as f32"))),
        }
    }

    fn expect_ndim(&self, ndim: usize, what: &str) -> Result<()> {
        if self.dims.len() != ndim {
            return Err(Error::MalformedFile(format!(
                "{what} needs {ndim} dims, file has {:?}",
                self.dims
            )));
        }
        Ok(())
    }
}

impl From<&Grid> for HdtTensor {
    fn from(g: &Grid) -> Self {
        let (h, w, c) = g.shape();
        HdtTensor {
            dims: vec![h as u32, w as u32, c as u32],
            data: TensorData::F32(g.data().to_vec()),
        }
    }
}

impl TryFrom<&HdtTensor> for Grid {
    type Error = Error;

    fn try_from(t: &HdtTensor) -> Result<Grid> {
        let data = t.f32_payload("grid")?.to_vec();
        match *t.dims() {
            [h, w, c] => Grid::new(h as usize, w as usize, c as usize, data),
            [h, w] => Grid::new(h as usize, w as usize, 1, data),
            _ => Err(Error::MalformedFile(format!("grid needs 2 or 3 dims, got {:?}", t.dims()))),
        }
    }
}

pub fn save_grid_hdt(path: impl AsRef<Path>, g: &Grid) -> Result<()> {
    HdtTensor::from(g).save(path)
}

pub fn load_grid_hdt(path: impl AsRef<Path>) -> Result<Grid> {
    Grid::try_from(&HdtTensor::load(path)?)
}

/// Index maps are stored as `u32` tensors of shape `[h, w]`.
pub fn index_map_to_hdt(m: &IndexMap) -> HdtTensor {
    HdtTensor {
        dims: vec![m.height() as u32, m.width() as u32],
        data: TensorData::U32(m.assignment().to_vec()),
    }
}

pub fn index_map_from_hdt(t: &HdtTensor, patches: usize) -> Result<IndexMap> {
    t.expect_ndim(2, "index map")?;
    let TensorData::U32(labels) = t.data() else {
        return Err(Error::MalformedFile("index map must be stored as u32".into()));
    };
    IndexMap::new(t.dims()[0] as usize, t.dims()[1] as usize, patches, labels.clone())
}

/// `[n, dim]` f32 tensor.
pub fn patch_vectors_from_hdt(t: &HdtTensor) -> Result<PatchVectors> {
    t.expect_ndim(2, "patch vectors")?;
    PatchVectors::new(t.dims()[0] as usize, t.dims()[1] as usize, t.f32_payload("patch vectors")?.to_vec())
}

/// `[c2, c1]` f32 tensor.
pub fn query_from_hdt(t: &HdtTensor) -> Result<QueryEmbedding> {
    t.expect_ndim(2, "query embedding")?;
    QueryEmbedding::new(t.dims()[0] as usize, t.dims()[1] as usize, t.f32_payload("query embedding")?.to_vec())
}

pub fn query_to_hdt(q: &QueryEmbedding) -> HdtTensor {
    HdtTensor {
        dims: vec![q.queries() as u32, q.key_dim() as u32],
        data: TensorData::F32(q.data().to_vec()),
    }
}

/// `[bins, c2 + 1]` f32 tensor; the last column is the bias.
pub fn head_from_hdt(t: &HdtTensor) -> Result<ProjectionHead> {
    t.expect_ndim(2, "projection head")?;
    let (b, cols) = (t.dims()[0] as usize, t.dims()[1] as usize);
    if cols < 2 {
        return Err(Error::MalformedFile("projection head needs at least 2 columns".into()));
    }
    let data = t.f32_payload("projection head")?;
    let mut matrix = Vec::with_capacity(b * (cols - 1));
    let mut bias = Vec::with_capacity(b);
    for row in data.chunks_exact(cols) {
        matrix.extend_from_slice(&row[..cols - 1]);
        bias.push(row[cols - 1]);
    }
    ProjectionHead::new(b, cols - 1, matrix, bias)
}

pub fn head_to_hdt(h: &ProjectionHead) -> HdtTensor {
    let c2 = h.inputs();
    let data = h
        .matrix()
        .chunks_exact(c2)
        .zip(h.bias())
        .flat_map(|(row, &b)| row.iter().copied().chain(std::iter::once(b)))
        .collect();
    HdtTensor {
        dims: vec![h.bins() as u32, c2 as u32 + 1],
        data: TensorData::F32(data),
    }
}

// ---------------------------------------------------------------------------
// PFM

/// Encodes a 1- or 3-channel grid as little-endian PFM (rows bottom-to-top).
pub fn encode_pfm(g: &Grid) -> Result<Vec<u8>> {
    let tag = match g.channels() {
        1 => "Pf",
        3 => "PF",
        c => return Err(Error::DimensionMismatch(format!("PFM holds 1 or 3 channels, got {c}"))),
    };
    let mut out = format!("{tag}\n{} {}\n-1.0\n", g.width(), g.height()).into_bytes();
    let row_len = g.width() * g.channels();
    for row in g.data().chunks_exact(row_len.max(1)).rev() {
        row.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
    }
    Ok(out)
}

pub fn decode_pfm(bytes: &[u8]) -> Result<Grid> {
    let mut pos = 0;
    let mut token = || -> Result<&[u8]> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::MalformedFile("truncated PFM header".into()));
        }
        let tok = &bytes[start..pos];
        // consume the single whitespace byte that terminates the token
        pos += 1;
        Ok(tok)
    };
    let channels = match token()? {
        b"Pf" => 1,
        b"PF" => 3,
        _ => return Err(Error::MalformedFile("bad PFM magic".into())),
    };
    let parse = |t: &[u8]| -> Result<f64> {
        std::str::from_utf8(t)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::MalformedFile("bad PFM header number".into()))
    };
    let width = parse(token()?)? as usize;
    let height = parse(token()?)? as usize;
    let scale = parse(token()?)?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::MalformedFile("PFM scale must be nonzero".into()));
    }
    let little = scale < 0.0;
    let payload = bytes.get(pos..).unwrap_or_default();
    let row_len = width * channels;
    if payload.len() != row_len * height * 4 {
        return Err(Error::MalformedFile(format!(
            "PFM payload is {} bytes, {width}x{height}x{channels} needs {}",
            payload.len(),
            row_len * height * 4
        )));
    }
    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|b| {
            let b: [u8; 4] = b.try_into().unwrap();
            if little {
                f32::from_le_bytes(b)
            } else {
                f32::from_be_bytes(b)
            }
        })
        .collect();
    let mut data = Vec::with_capacity(values.len());
    if row_len > 0 {
        for row in values.chunks_exact(row_len).rev() {
            data.extend_from_slice(row);
        }
    }
    Grid::new(height, width, channels, data)
}

pub fn write_pfm(path: impl AsRef<Path>, g: &Grid) -> Result<()> {
    std::fs::write(path, encode_pfm(g)?)?;
    Ok(())
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<Grid> {
    decode_pfm(&std::fs::read(path)?)
}

// ---------------------------------------------------------------------------
// PNG

fn png_err(e: impl std::fmt::Display) -> Error {
    Error::MalformedFile(format!("png: {e}"))
}

fn encode_png(width: usize, height: usize, color: png::ColorType, depth: png::BitDepth, palette: Option<Vec<u8>>, data: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(depth);
        if let Some(p) = palette {
            enc.set_palette(p);
        }
        let mut w = enc.write_header().map_err(png_err)?;
        w.write_image_data(data).map_err(png_err)?;
        w.finish().map_err(png_err)?;
    }
    Ok(out)
}

struct DecodedPng {
    width: usize,
    height: usize,
    color: png::ColorType,
    depth: png::BitDepth,
    palette: Option<Vec<u8>>,
    data: Vec<u8>,
}

fn decode_png(bytes: &[u8]) -> Result<DecodedPng> {
    let decoder = png::Decoder::new(Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(png_err)?;
    let size = reader.output_buffer_size().ok_or_else(|| png_err("image too large"))?;
    let mut data = vec![0u8; size];
    let frame = reader.next_frame(&mut data).map_err(png_err)?;
    data.truncate(frame.buffer_size());
    let palette = reader.info().palette.as_ref().map(|p| p.to_vec());
    Ok(DecodedPng {
        width: frame.width as usize,
        height: frame.height as usize,
        color: frame.color_type,
        depth: frame.bit_depth,
        palette,
        data,
    })
}

/// Depth quantized to `round(d / scale)` in a 16-bit grayscale PNG; invalid
/// depths are stored as 0.
pub fn encode_png16(g: &Grid, scale: f64) -> Result<Vec<u8>> {
    if !(scale > 0.0) {
        return Err(Error::InvalidArgument(format!("png depth scale must be positive, got {scale}")));
    }
    if g.channels() != 1 {
        return Err(Error::DimensionMismatch("16-bit PNG depth holds one channel".into()));
    }
    let mut data = Vec::with_capacity(g.data().len() * 2);
    for &d in g.data() {
        let d = d as f64;
        let q = if is_valid_depth(d) { (d / scale).round().clamp(0.0, 65535.0) as u16 } else { 0 };
        data.extend_from_slice(&q.to_be_bytes());
    }
    encode_png(g.width(), g.height(), png::ColorType::Grayscale, png::BitDepth::Sixteen, None, &data)
}

pub fn decode_png16(bytes: &[u8], scale: f64) -> Result<Grid> {
    let png = decode_png(bytes)?;
    if png.color != png::ColorType::Grayscale || png.depth != png::BitDepth::Sixteen {
        return Err(Error::MalformedFile("expected a 16-bit grayscale PNG".into()));
    }
    let data = png
        .data
        .chunks_exact(2)
        .map(|b| (u16::from_be_bytes([b[0], b[1]]) as f64 * scale) as f32)
        .collect();
    Grid::new(png.height, png.width, 1, data)
}

pub fn write_png16(path: impl AsRef<Path>, g: &Grid, scale: f64) -> Result<()> {
    std::fs::write(path, encode_png16(g, scale)?)?;
    Ok(())
}

pub fn read_png16(path: impl AsRef<Path>, scale: f64) -> Result<Grid> {
    decode_png16(&std::fs::read(path)?, scale)
}

/// Reads any 8- or 16-bit grayscale/RGB(A) PNG. 16-bit grayscale is treated
/// as depth and multiplied by `depth_scale`; 8-bit data is mapped to `[0, 1]`.
/// Alpha is dropped.
pub fn read_png_image(path: impl AsRef<Path>, depth_scale: f64) -> Result<Grid> {
    let bytes = std::fs::read(path)?;
    let png = decode_png(&bytes)?;
    use png::{BitDepth, ColorType};
    match (png.color, png.depth) {
        (ColorType::Grayscale, BitDepth::Sixteen) => decode_png16(&bytes, depth_scale),
        (color, BitDepth::Eight) => {
            let (stride, keep) = match color {
                ColorType::Grayscale => (1, 1),
                ColorType::GrayscaleAlpha => (2, 1),
                ColorType::Rgb => (3, 3),
                ColorType::Rgba => (4, 3),
                ColorType::Indexed => return Err(Error::MalformedFile("indexed PNG is not an image".into())),
            };
            let data = png
                .data
                .chunks_exact(stride)
                .flat_map(|px| px[..keep].iter().map(|&v| v as f32 / 255.0))
                .collect();
            Grid::new(png.height, png.width, keep, data)
        }
        (c, d) => Err(Error::MalformedFile(format!("unsupported PNG format {c:?}/{d:?}"))),
    }
}

/// Distinct, deterministic palette color for label `k`.
pub fn label_color(k: usize) -> [u8; 3] {
    let hue = (k as f64 * 0.618_033_988_749_895).fract() * 6.0;
    let value = if k.is_multiple_of(2) { 0.95 } else { 0.75 };
    let s = 0.65;
    let i = hue.floor();
    let f = hue - i;
    let (p, q, t) = (value * (1.0 - s), value * (1.0 - s * f), value * (1.0 - s * (1.0 - f)));
    let (r, g, b) = match i as u32 {
        0 => (value, t, p),
        1 => (q, value, p),
        2 => (p, value, t),
        3 => (p, q, value),
        4 => (t, p, value),
        _ => (value, p, q),
    };
    [(r * 255.0).round() as u8, (g * 255.0).round() as u8, (b * 255.0).round() as u8]
}

/// 8-bit indexed PNG with one palette entry per patch.
pub fn encode_index_png(m: &IndexMap) -> Result<Vec<u8>> {
    if m.patch_count() > 256 {
        return Err(Error::InvalidArgument(format!(
            "an 8-bit indexed PNG holds at most 256 labels, got {}",
            m.patch_count()
        )));
    }
    let palette: Vec<u8> = (0..m.patch_count()).flat_map(label_color).collect();
    let data: Vec<u8> = m.assignment().iter().map(|&a| a as u8).collect();
    encode_png(m.width(), m.height(), png::ColorType::Indexed, png::BitDepth::Eight, Some(palette), &data)
}

pub fn decode_index_png(bytes: &[u8]) -> Result<IndexMap> {
    let png = decode_png(bytes)?;
    if png.color != png::ColorType::Indexed || png.depth != png::BitDepth::Eight {
        return Err(Error::MalformedFile("expected an 8-bit indexed PNG".into()));
    }
    let patches = png.palette.as_ref().map_or(0, |p| p.len() / 3);
    IndexMap::new(png.height, png.width, patches, png.data.iter().map(|&v| v as u32).collect())
}

pub fn write_index_png(path: impl AsRef<Path>, m: &IndexMap) -> Result<()> {
    std::fs::write(path, encode_index_png(m)?)?;
    Ok(())
}

/// 8-bit grayscale mask, 255 where `mask` is true.
pub fn write_mask_png(path: impl AsRef<Path>, width: usize, height: usize, mask: impl Iterator<Item = bool>) -> Result<()> {
    let data: Vec<u8> = mask.map(|m| if m { 255 } else { 0 }).collect();
    if data.len() != width * height {
        return Err(Error::DimensionMismatch("mask length does not match image size".into()));
    }
    let bytes = encode_png(width, height, png::ColorType::Grayscale, png::BitDepth::Eight, None, &data)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// CSV

pub const HISTOGRAM_CSV_HEADER: &str = "bin_index,width_m,center_m";

pub fn histogram_csv(h: &DepthHistogram) -> String {
    let mut s = format!("{HISTOGRAM_CSV_HEADER}\n");
    for (i, (w, c)) in h.widths().iter().zip(h.centers()).enumerate() {
        writeln!(s, "{i},{w:.9},{c:.9}").unwrap();
    }
    s
}

/// Parses a histogram CSV; centers are recomputed from the widths and
/// checked against the stored column.
pub fn parse_histogram_csv(text: &str, range: DepthRange) -> Result<DepthHistogram> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next().map(str::trim) != Some(HISTOGRAM_CSV_HEADER) {
        return Err(Error::MalformedFile(format!("histogram CSV must start with '{HISTOGRAM_CSV_HEADER}'")));
    }
    let mut widths = Vec::new();
    let mut centers = Vec::new();
    for (k, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = || Error::MalformedFile(format!("bad histogram row {}: '{line}'", k + 1));
        if f.len() != 3 || f[0].parse::<usize>().ok() != Some(k) {
            return Err(bad());
        }
        widths.push(f[1].parse::<f64>().map_err(|_| bad())?);
        centers.push(f[2].parse::<f64>().map_err(|_| bad())?);
    }
    let h = DepthHistogram::from_widths(range, widths)?;
    if h.centers().iter().zip(&centers).any(|(a, b)| (a - b).abs() > 1e-6 * range.span()) {
        return Err(Error::MalformedFile("histogram centers disagree with widths".into()));
    }
    Ok(h)
}

/// `patch_index,pixel_count,fraction` rows.
pub fn index_frequency_csv(m: &IndexMap) -> String {
    let counts = m.histogram();
    let total = (m.height() * m.width()).max(1) as f64;
    let mut s = String::from("patch_index,pixel_count,fraction\n");
    for (k, c) in counts.iter().enumerate() {
        writeln!(s, "{k},{c},{:.6}", *c as f64 / total).unwrap();
    }
    s
}

/// Reads one number per line from the first CSV column. A non-numeric first
/// line is taken as a header.
pub fn parse_samples_csv(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let field = line.split(',').next().unwrap_or("").trim();
        if field.is_empty() {
            continue;
        }
        match field.parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) if k == 0 => continue,
            Err(_) => return Err(Error::MalformedFile(format!("line {}: '{field}' is not a number", k + 1))),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hdt_round_trip_and_header() {
        let t = HdtTensor::new(vec![7, 5, 3], TensorData::F32((0..105).map(|k| k as f32 * 0.5 - 3.0).collect())).unwrap();
        let bytes = t.to_bytes();
        assert_eq!(&bytes[..4], b"HDT1");
        assert_eq!(bytes[4], 0);
        assert_eq!(bytes[5], 3);
        assert_eq!(&bytes[6..10], &7u32.to_le_bytes());
        assert_eq!(bytes.len(), 6 + 12 + 105 * 4);
        let back = HdtTensor::from_bytes(&bytes).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn hdt_rejects_malformed() {
        let t = HdtTensor::new(vec![2], TensorData::U8(vec![1, 2])).unwrap();
        let mut bytes = t.to_bytes();
        bytes[0] = b'X';
        assert!(matches!(HdtTensor::from_bytes(&bytes), Err(Error::MalformedFile(_))));
        let mut bytes = t.to_bytes();
        bytes[4] = 9;
        assert!(matches!(HdtTensor::from_bytes(&bytes), Err(Error::UnsupportedDtype(9))));
        let mut bytes = t.to_bytes();
        bytes.pop();
        assert!(HdtTensor::from_bytes(&bytes).is_err());
        assert!(HdtTensor::new(vec![3], TensorData::U8(vec![1])).is_err());
    }

    #[test]
    fn pfm_small_map() {
        let g = Grid::new(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let bytes = encode_pfm(&g).unwrap();
        assert!(bytes.starts_with(b"Pf\n2 2\n-1.0\n"));
        // bottom row first
        assert_eq!(&bytes[12..16], &3.0f32.to_le_bytes());
        assert_eq!(decode_pfm(&bytes).unwrap(), g);
    }

    #[test]
    fn pfm_big_endian_and_color() {
        let mut bytes = b"Pf\n1 2\n1.0\n".to_vec();
        bytes.extend_from_slice(&5.0f32.to_be_bytes());
        bytes.extend_from_slice(&6.0f32.to_be_bytes());
        let g = decode_pfm(&bytes).unwrap();
        assert_eq!(g.data(), &[6.0, 5.0]);

        let rgb = Grid::from_fn(3, 2, 3, |r, c, px| px.iter_mut().enumerate().for_each(|(k, v)| *v = (r * 6 + c * 3 + k) as f32));
        assert_eq!(decode_pfm(&encode_pfm(&rgb).unwrap()).unwrap(), rgb);
        assert!(encode_pfm(&Grid::zeros(1, 1, 2)).is_err());
        assert!(decode_pfm(b"P5\n1 1\n-1\n0000").is_err());
    }

    #[test]
    fn png16_quantization() {
        let g = Grid::new(1, 3, 1, vec![3.0005, 0.0, 1.234]).unwrap();
        let back = decode_png16(&encode_png16(&g, 0.001).unwrap(), 0.001).unwrap();
        assert!((back.data()[0] - 3.0005).abs() <= 0.0005 + 1e-6);
        assert!(back.data()[0] == 3.0 || back.data()[0] == 3.001);
        assert_eq!(back.data()[1], 0.0);
    }

    #[test]
    fn index_png_round_trip() {
        let m = IndexMap::new(2, 4, 5, vec![0, 1, 2, 3, 4, 4, 1, 0]).unwrap();
        let back = decode_index_png(&encode_index_png(&m).unwrap()).unwrap();
        assert_eq!(back, m);
        let t = index_map_to_hdt(&m);
        assert_eq!(index_map_from_hdt(&t, 5).unwrap(), m);
        assert_ne!(label_color(0), label_color(1));
    }

    #[test]
    fn histogram_csv_round_trip() {
        let r = DepthRange::new(0.5, 10.0).unwrap();
        let h = DepthHistogram::from_widths(r, vec![1.5, 3.0, 5.0]).unwrap();
        let text = histogram_csv(&h);
        assert!(text.starts_with("bin_index,width_m,center_m\n0,1.5"));
        let back = parse_histogram_csv(&text, r).unwrap();
        for (a, b) in back.centers().iter().zip(h.centers()) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(parse_histogram_csv("nope\n", r).is_err());
    }

    #[test]
    fn tensors_for_heads_and_queries() {
        let head = ProjectionHead::new(2, 3, vec![1., 2., 3., 4., 5., 6.], vec![-1., -2.]).unwrap();
        assert_eq!(head_from_hdt(&head_to_hdt(&head)).unwrap(), head);
        let q = QueryEmbedding::new(2, 2, vec![1., 0., 0., 1.]).unwrap();
        assert_eq!(query_from_hdt(&query_to_hdt(&q)).unwrap(), q);
    }

    #[test]
    fn samples_csv() {
        assert_eq!(parse_samples_csv("depth\n1.5\n2,foo\n\n3e0\n").unwrap(), vec![1.5, 2.0, 3.0]);
        assert!(parse_samples_csv("1\nx\n").is_err());
    }
}
