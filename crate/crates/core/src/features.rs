//! Rotation-invariant uniform LBP and cross-channel color LBP descriptors.
//!
//! `lbp_hist(center, neighbor, P, R)` thresholds `P` bilinearly interpolated
//! samples on a radius-`R` circle of the neighbor channel against the center
//! pixel of the center channel (`neighbor >= center` sets the bit). Patterns
//! with at most two circular 0/1 transitions go to the bin equal to their bit
//! count, all others to bin `P + 1`, giving `P + 2` bins, L1-normalized.
//! Pixels closer than `R` to the border are skipped.
//!
//! The color descriptor runs every ordered channel pair `(i, j)`, `i` outer,
//! `j` inner, over all scales: `K^2 * 54 = 486` values for three channels.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{ColorSpace, Image, ImageError};
use crate::pipeline::{downsample_box, rgb_to_hsv, to_grayscale, PipelineError};

pub const FEATURE_FORMAT_VERSION: u32 = 1;
const FEATURE_MAGIC: &[u8; 8] = b"FPADFEAT";

/// CLBP input size for FTIR frames, width x height.
pub const FTIR_CLBP_DIMS: (usize, usize) = (145, 108);
/// CLBP input size for direct-view frames, width x height.
pub const DIRECT_CLBP_DIMS: (usize, usize) = (145, 96);

const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("channel dimensions differ: center {center:?}, neighbor {neighbor:?}")]
    DimensionMismatch {
        center: (usize, usize),
        neighbor: (usize, usize),
    },
    #[error("image {width}x{height} too small for radius {radius}")]
    TooSmall { width: usize, height: usize, radius: f64 },
    #[error("invalid LBP scale (P={points}, R={radius}): need 4 <= P <= 64 and R >= 1")]
    BadScale { points: usize, radius: f64 },
    #[error("LBP config has no scales")]
    NoScales,
    #[error("expected a {expected}-channel image, got {actual} channels")]
    ChannelCount { expected: usize, actual: usize },
    #[error("feature file {path}: {detail}")]
    BadFile { path: String, detail: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LbpScale {
    /// Neighbor count `P`.
    pub points: usize,
    /// Radius `R` in pixels.
    pub radius: f64,
}

impl LbpScale {
    pub const fn new(points: usize, radius: f64) -> Self {
        Self { points, radius }
    }

    pub fn bins(&self) -> usize {
        self.points + 2
    }

    fn validate(&self) -> Result<(), FeatureError> {
        if self.points < 4 || self.points > 64 || !(self.radius >= 1.0) || !self.radius.is_finite() {
            return Err(FeatureError::BadScale {
                points: self.points,
                radius: self.radius,
            });
        }
        Ok(())
    }

    fn margin(&self) -> usize {
        self.radius.ceil() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LbpConfig {
    pub scales: Vec<LbpScale>,
}

impl Default for LbpConfig {
    fn default() -> Self {
        Self {
            scales: vec![LbpScale::new(8, 1.0), LbpScale::new(16, 2.0), LbpScale::new(24, 3.0)],
        }
    }
}

impl LbpConfig {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.scales.is_empty() {
            return Err(FeatureError::NoScales);
        }
        self.scales.iter().try_for_each(LbpScale::validate)
    }

    /// Length of one multi-scale LBP block, `sum(P + 2)`.
    pub fn block_dim(&self) -> usize {
        self.scales.iter().map(LbpScale::bins).sum()
    }

    fn max_margin(&self) -> usize {
        self.scales.iter().map(LbpScale::margin).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DescriptorKind {
    Lbp,
    Clbp,
    Fused,
}

impl DescriptorKind {
    fn code(self) -> u32 {
        match self {
            DescriptorKind::Lbp => 1,
            DescriptorKind::Clbp => 2,
            DescriptorKind::Fused => 3,
        }
    }

    fn from_code(code: u32) -> Option<Self> {
        match code {
            1 => Some(DescriptorKind::Lbp),
            2 => Some(DescriptorKind::Clbp),
            3 => Some(DescriptorKind::Fused),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub kind: DescriptorKind,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>, kind: DescriptorKind) -> Self {
        Self { values, kind }
    }

    pub fn empty() -> Self {
        Self::new(Vec::new(), DescriptorKind::Fused)
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// L1 norm of each consecutive histogram, following the bin layout of `cfg`
    /// repeated across the whole vector.
    pub fn histogram_norms(&self, cfg: &LbpConfig) -> Vec<f64> {
        let mut norms = Vec::new();
        let mut i = 0;
        'outer: loop {
            for s in &cfg.scales {
                if i + s.bins() > self.values.len() {
                    break 'outer;
                }
                norms.push(self.values[i..i + s.bins()].iter().sum());
                i += s.bins();
            }
        }
        norms
    }
}

/// Bin of `pattern` (low `p` bits) under the riu2 mapping.
#[inline]
pub fn riu2_bin(pattern: u64, p: usize) -> usize {
    let mask = if p == 64 { u64::MAX } else { (1u64 << p) - 1 };
    let pat = pattern & mask;
    let rotated = ((pat >> 1) | ((pat & 1) << (p - 1))) & mask;
    let transitions = (pat ^ rotated).count_ones();
    if transitions <= 2 {
        pat.count_ones() as usize
    } else {
        p + 1
    }
}

/// Circular bit transitions of a `p`-bit pattern.
pub fn transitions(pattern: u64, p: usize) -> u32 {
    (0..p)
        .filter(|&k| ((pattern >> k) & 1) != ((pattern >> ((k + 1) % p)) & 1))
        .count() as u32
}

#[derive(Debug, Clone, Copy)]
struct Tap {
    dx: isize,
    dy: isize,
    fx: f64,
    fy: f64,
}

fn circle_taps(scale: &LbpScale) -> Vec<Tap> {
    let snap = |v: f64| if (v - v.round()).abs() < 1e-9 { v.round() } else { v };
    (0..scale.points)
        .map(|k| {
            let angle = std::f64::consts::TAU * k as f64 / scale.points as f64;
            let x = snap(scale.radius * angle.cos());
            let y = snap(-scale.radius * angle.sin());
            let (x0, y0) = (x.floor(), y.floor());
            Tap {
                dx: x0 as isize,
                dy: y0 as isize,
                fx: x - x0,
                fy: y - y0,
            }
        })
        .collect()
}

/// Interpolated circle samples of one channel at one scale, for every pixel
/// of the valid region.
struct CircleSamples {
    points: usize,
    margin: usize,
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl CircleSamples {
    fn compute(channel: &Image, scale: &LbpScale) -> Self {
        let (w, h) = channel.dims();
        let m = scale.margin();
        let taps = circle_taps(scale);
        let data = channel.data();
        let at = |x: isize, y: isize| data[y as usize * w + x as usize] as f64;
        let mut values = Vec::with_capacity((w - 2 * m) * (h - 2 * m) * scale.points);
        for y in m..h - m {
            for x in m..w - m {
                for t in &taps {
                    let xs = x as isize + t.dx;
                    let ys = y as isize + t.dy;
                    let v00 = at(xs, ys);
                    let mut v = v00;
                    if t.fx > 0.0 {
                        v += t.fx * (at(xs + 1, ys) - v00);
                    }
                    if t.fy > 0.0 {
                        v += t.fy * (at(xs, ys + 1) - v00);
                        if t.fx > 0.0 {
                            v += t.fx * t.fy * (v00 - at(xs + 1, ys) - at(xs, ys + 1) + at(xs + 1, ys + 1));
                        }
                    }
                    values.push(v);
                }
            }
        }
        Self {
            points: scale.points,
            margin: m,
            width: w,
            height: h,
            values,
        }
    }

    fn histogram(&self, center: &Image) -> Vec<f64> {
        let p = self.points;
        let m = self.margin;
        let mut counts = vec![0u64; p + 2];
        let data = center.data();
        let mut idx = 0;
        for y in m..self.height - m {
            for x in m..self.width - m {
                // interpolation rounding must not break exact ties
                let c = data[y * self.width + x] as f64 - TIE_TOLERANCE;
                let mut pattern = 0u64;
                for (k, &v) in self.values[idx..idx + p].iter().enumerate() {
                    pattern |= ((v >= c) as u64) << k;
                }
                idx += p;
                counts[riu2_bin(pattern, p)] += 1;
            }
        }
        let total = counts.iter().sum::<u64>() as f64;
        counts.iter().map(|&c| c as f64 / total).collect()
    }
}

fn check_pair(center: &Image, neighbor: &Image, margin: usize, radius: f64) -> Result<(), FeatureError> {
    if center.dims() != neighbor.dims() {
        return Err(FeatureError::DimensionMismatch {
            center: center.dims(),
            neighbor: neighbor.dims(),
        });
    }
    for img in [center, neighbor] {
        if img.channels() != 1 {
            return Err(FeatureError::ChannelCount {
                expected: 1,
                actual: img.channels(),
            });
        }
    }
    let (w, h) = center.dims();
    if w <= 2 * margin || h <= 2 * margin {
        return Err(FeatureError::TooSmall {
            width: w,
            height: h,
            radius,
        });
    }
    Ok(())
}

/// Normalized riu2 histogram (`P + 2` bins) with centers from `center` and
/// circle samples from `neighbor`.
pub fn lbp_hist(center: &Image, neighbor: &Image, points: usize, radius: f64) -> Result<Vec<f64>, FeatureError> {
    let scale = LbpScale::new(points, radius);
    scale.validate()?;
    check_pair(center, neighbor, scale.margin(), radius)?;
    Ok(CircleSamples::compute(neighbor, &scale).histogram(center))
}

fn check_size(img: &Image, cfg: &LbpConfig) -> Result<(), FeatureError> {
    let m = cfg.max_margin();
    let (w, h) = img.dims();
    if w <= 2 * m || h <= 2 * m {
        return Err(FeatureError::TooSmall {
            width: w,
            height: h,
            radius: m as f64,
        });
    }
    Ok(())
}

/// Multi-scale grayscale LBP: `lbp_hist(img, img, P, R)` for each scale, concatenated.
pub fn lbp_descriptor(img: &Image, cfg: &LbpConfig) -> Result<FeatureVector, FeatureError> {
    cfg.validate()?;
    img.require(ColorSpace::Gray)?;
    check_size(img, cfg)?;
    let mut values = Vec::with_capacity(cfg.block_dim());
    for s in &cfg.scales {
        values.extend(CircleSamples::compute(img, s).histogram(img));
    }
    Ok(FeatureVector::new(values, DescriptorKind::Lbp))
}

/// Color LBP over every ordered channel pair of a multi-channel image.
pub fn clbp_descriptor(img: &Image, cfg: &LbpConfig) -> Result<FeatureVector, FeatureError> {
    cfg.validate()?;
    let k = img.channels();
    if k != 3 {
        return Err(FeatureError::ChannelCount {
            expected: 3,
            actual: k,
        });
    }
    check_size(img, cfg)?;
    let planes = (0..k).map(|c| img.channel(c)).collect::<Result<Vec<_>, _>>()?;
    // samples[j][s]: circle samples of channel j at scale s
    let samples: Vec<Vec<CircleSamples>> = planes
        .iter()
        .map(|p| cfg.scales.iter().map(|s| CircleSamples::compute(p, s)).collect())
        .collect();
    let mut values = Vec::with_capacity(k * k * cfg.block_dim());
    for center in &planes {
        for per_scale in &samples {
            for s in per_scale {
                values.extend(s.histogram(center));
            }
        }
    }
    Ok(FeatureVector::new(values, DescriptorKind::Clbp))
}

/// Feature-level fusion by concatenation in argument order. Fusing with an
/// empty vector returns the other one unchanged.
pub fn fuse_features(a: &FeatureVector, b: &FeatureVector) -> FeatureVector {
    if b.is_empty() {
        return a.clone();
    }
    if a.is_empty() {
        return b.clone();
    }
    let mut values = Vec::with_capacity(a.dim() + b.dim());
    values.extend_from_slice(&a.values);
    values.extend_from_slice(&b.values);
    FeatureVector::new(values, DescriptorKind::Fused)
}

/// Box-downsample an RGB view to `dims`, convert to HSV and extract color LBP.
pub fn clbp_from_view(rgb: &Image, dims: (usize, usize), cfg: &LbpConfig) -> Result<FeatureVector, FeatureError> {
    let small = downsample_box(rgb, dims.0, dims.1)?;
    clbp_descriptor(&rgb_to_hsv(&small)?, cfg)
}

/// Box-downsample an RGB view to `dims`, convert to grayscale and extract LBP.
pub fn lbp_from_view(rgb: &Image, dims: (usize, usize), cfg: &LbpConfig) -> Result<FeatureVector, FeatureError> {
    let small = downsample_box(rgb, dims.0, dims.1)?;
    lbp_descriptor(&to_grayscale(&small)?, cfg)
}

/// Fixed header of the binary feature container.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureHeader {
    pub format_version: u32,
    pub descriptor_kind: DescriptorKind,
    pub dim: u64,
    pub count: u64,
    /// Preprocessing sizes (width, height) the rows were extracted at.
    pub ftir_dims: (u32, u32),
    pub direct_dims: (u32, u32),
}

impl FeatureHeader {
    pub fn new(kind: DescriptorKind, dim: usize, count: usize) -> Self {
        Self {
            format_version: FEATURE_FORMAT_VERSION,
            descriptor_kind: kind,
            dim: dim as u64,
            count: count as u64,
            ftir_dims: (FTIR_CLBP_DIMS.0 as u32, FTIR_CLBP_DIMS.1 as u32),
            direct_dims: (DIRECT_CLBP_DIMS.0 as u32, DIRECT_CLBP_DIMS.1 as u32),
        }
    }
}

/// Writes the container: magic, little-endian header fields, then
/// `count * dim` row-major little-endian f64 values.
pub fn write_features(path: &Path, kind: DescriptorKind, rows: &[FeatureVector]) -> Result<FeatureHeader, FeatureError> {
    let name = path.display().to_string();
    let dim = rows.first().map_or(0, FeatureVector::dim);
    if let Some(bad) = rows.iter().position(|r| r.dim() != dim) {
        return Err(FeatureError::BadFile {
            path: name,
            detail: format!("row {bad} has dim {} but row 0 has {dim}", rows[bad].dim()),
        });
    }
    let header = FeatureHeader::new(kind, dim, rows.len());
    let io = |source| FeatureError::Io {
        path: name.clone(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    let mut buf = Vec::with_capacity(64);
    buf.extend_from_slice(FEATURE_MAGIC);
    buf.extend_from_slice(&header.format_version.to_le_bytes());
    buf.extend_from_slice(&kind.code().to_le_bytes());
    buf.extend_from_slice(&header.dim.to_le_bytes());
    buf.extend_from_slice(&header.count.to_le_bytes());
    for v in [header.ftir_dims.0, header.ftir_dims.1, header.direct_dims.0, header.direct_dims.1] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf).map_err(io)?;
    for row in rows {
        for v in &row.values {
            out.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    out.flush().map_err(io)?;
    Ok(header)
}

pub fn read_features(path: &Path) -> Result<(FeatureHeader, Vec<FeatureVector>), FeatureError> {
    let name = path.display().to_string();
    let io = |source| FeatureError::Io {
        path: name.clone(),
        source,
    };
    let bad = |detail: String| FeatureError::BadFile {
        path: name.clone(),
        detail,
    };
    let mut bytes = Vec::new();
    BufReader::new(File::open(path).map_err(io)?)
        .read_to_end(&mut bytes)
        .map_err(io)?;
    const HEADER_LEN: usize = 8 + 4 + 4 + 8 + 8 + 16;
    if bytes.len() < HEADER_LEN || &bytes[..8] != FEATURE_MAGIC {
        return Err(bad("missing magic or truncated header".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    let version = u32_at(8);
    if version != FEATURE_FORMAT_VERSION {
        return Err(bad(format!("unsupported format version {version}")));
    }
    let kind = DescriptorKind::from_code(u32_at(12)).ok_or_else(|| bad(format!("unknown kind code {}", u32_at(12))))?;
    let (dim, count) = (u64_at(16), u64_at(24));
    let header = FeatureHeader {
        format_version: version,
        descriptor_kind: kind,
        dim,
        count,
        ftir_dims: (u32_at(32), u32_at(36)),
        direct_dims: (u32_at(40), u32_at(44)),
    };
    let expected = HEADER_LEN as u64 + dim * count * 8;
    if bytes.len() as u64 != expected {
        return Err(bad(format!("expected {expected} bytes, found {}", bytes.len())));
    }
    let rows = bytes[HEADER_LEN..]
        .chunks_exact(8 * dim.max(1) as usize)
        .take(count as usize)
        .map(|chunk| {
            let values = chunk
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect();
            FeatureVector::new(values, kind)
        })
        .collect::<Vec<_>>();
    Ok((header, rows))
}
