//! Pixel operations and the raw-FTIR-to-500-ppi processing chain.
//!
//! All arithmetic that produces output samples is done in integers (or in
//! f64 with an explicit rounding rule) so results are bit-exact across
//! platforms.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{apply_perspective, CalibrationError, PerspectiveTransform};
use crate::image::{ColorSpace, Image, ImageError};

/// Resolution expected by fingerprint matchers.
pub const MATCHER_PPI: f64 = 500.0;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("cannot downsample {from_w}x{from_h} to larger {to_w}x{to_h}")]
    Upscale {
        from_w: usize,
        from_h: usize,
        to_w: usize,
        to_h: usize,
    },
    #[error("native resolution must be at least {MATCHER_PPI} ppi, got ({ppi_x}, {ppi_y})")]
    BadResolution { ppi_x: f64, ppi_y: f64 },
    #[error("perspective stage failed: {0}")]
    Calibration(#[from] CalibrationError),
}

/// BT.601 luma, `round(0.299 R + 0.587 G + 0.114 B)` with halves rounded up.
#[inline]
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    ((299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000) as u8
}

pub fn to_grayscale(img: &Image) -> Result<Image, PipelineError> {
    img.require(ColorSpace::Rgb)?;
    let data = img
        .data()
        .chunks_exact(3)
        .map(|p| luma(p[0], p[1], p[2]))
        .collect();
    Ok(Image::new(img.width(), img.height(), ColorSpace::Gray, data)?)
}

/// Global histogram equalization by CDF remapping.
///
/// A constant image is returned unchanged; the textbook formula would divide
/// by zero there.
pub fn hist_equalize(img: &Image) -> Result<Image, PipelineError> {
    img.require(ColorSpace::Gray)?;
    let mut hist = [0u64; 256];
    for &v in img.data() {
        hist[v as usize] += 1;
    }
    let n = img.data().len() as u64;
    let mut cdf = [0u64; 256];
    let mut acc = 0;
    for (c, h) in cdf.iter_mut().zip(hist) {
        acc += h;
        *c = acc;
    }
    let cdf_min = cdf.iter().copied().find(|&c| c > 0).unwrap_or(0);
    if cdf_min == n {
        return Ok(img.clone());
    }
    let den = n - cdf_min;
    let mut lut = [0u8; 256];
    for (v, out) in lut.iter_mut().enumerate() {
        let num = 255 * cdf[v].saturating_sub(cdf_min);
        *out = ((2 * num + den) / (2 * den)) as u8;
    }
    let data = img.data().iter().map(|&v| lut[v as usize]).collect();
    Ok(Image::new(img.width(), img.height(), ColorSpace::Gray, data)?)
}

pub fn negate(img: &Image) -> Result<Image, PipelineError> {
    img.require(ColorSpace::Gray)?;
    let data = img.data().iter().map(|&v| 255 - v).collect();
    Ok(Image::new(img.width(), img.height(), ColorSpace::Gray, data)?)
}

/// Per-axis overlap table for area mapping: for each output index, the source
/// indices it covers with their integer overlap lengths (in units where a
/// source pixel is `dst` long and an output pixel is `src` long).
fn area_weights(src: usize, dst: usize) -> Vec<Vec<(usize, u64)>> {
    (0..dst)
        .map(|j| {
            let lo = j * src;
            let hi = (j + 1) * src;
            let first = lo / dst;
            let last = (hi - 1) / dst;
            (first..=last)
                .map(|i| {
                    let s_lo = (i * dst).max(lo);
                    let s_hi = ((i + 1) * dst).min(hi);
                    (i, (s_hi - s_lo) as u64)
                })
                .collect()
        })
        .collect()
}

/// Box downsampling by exact area mapping. Each output sample is the mean of
/// its source footprint (fractional pixels weighted by coverage), rounded to
/// nearest with halves up. Channels are processed independently.
pub fn downsample_box(img: &Image, target_w: usize, target_h: usize) -> Result<Image, PipelineError> {
    let (w, h) = img.dims();
    if target_w == 0 || target_h == 0 {
        return Err(ImageError::ZeroArea {
            width: target_w,
            height: target_h,
        }
        .into());
    }
    if target_w > w || target_h > h {
        return Err(PipelineError::Upscale {
            from_w: w,
            from_h: h,
            to_w: target_w,
            to_h: target_h,
        });
    }
    let ch = img.channels();
    let wx = area_weights(w, target_w);
    let wy = area_weights(h, target_h);
    let total = (w * h) as u64;
    let src = img.data();
    let mut data = Vec::with_capacity(target_w * target_h * ch);
    // Horizontal pass per source row, kept in scaled integer units.
    let mut rows = vec![0u64; h * target_w * ch];
    for y in 0..h {
        for (j, taps) in wx.iter().enumerate() {
            for c in 0..ch {
                let mut acc = 0u64;
                for &(i, wgt) in taps {
                    acc += wgt * src[(y * w + i) * ch + c] as u64;
                }
                rows[(y * target_w + j) * ch + c] = acc;
            }
        }
    }
    for taps in &wy {
        for j in 0..target_w {
            for c in 0..ch {
                let mut acc = 0u64;
                for &(i, wgt) in taps {
                    acc += wgt * rows[(i * target_w + j) * ch + c];
                }
                data.push(((2 * acc + total) / (2 * total)) as u8);
            }
        }
    }
    Ok(Image::new(target_w, target_h, img.color_space(), data)?)
}

#[inline]
fn round_half_away(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Hexcone RGB to HSV with every channel scaled to `[0, 255]`. Hue is
/// `round(H / 360 * 255)`; achromatic pixels get hue 0.
pub fn hsv_pixel(r: u8, g: u8, b: u8) -> [u8; 3] {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let v = max;
    if max == 0 || max == min {
        return [0, 0, v];
    }
    let delta = (max - min) as f64;
    let s = round_half_away(255.0 * delta / max as f64);
    let (r, g, b) = (r as f64, g as f64, b as f64);
    let mut h = if max as f64 == r {
        60.0 * (g - b) / delta
    } else if max as f64 == g {
        60.0 * (2.0 + (b - r) / delta)
    } else {
        60.0 * (4.0 + (r - g) / delta)
    };
    if h < 0.0 {
        h += 360.0;
    }
    [round_half_away(h / 360.0 * 255.0), s, v]
}

pub fn rgb_to_hsv(img: &Image) -> Result<Image, PipelineError> {
    img.require(ColorSpace::Rgb)?;
    let mut data = Vec::with_capacity(img.data().len());
    for p in img.data().chunks_exact(3) {
        data.extend_from_slice(&hsv_pixel(p[0], p[1], p[2]));
    }
    Ok(Image::new(img.width(), img.height(), ColorSpace::Hsv, data)?)
}

/// Native resolution of a raw frame, in pixels per inch along each axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NativePpi {
    pub x: f64,
    pub y: f64,
}

/// Output size after rescaling `dims` from `ppi` to 500 ppi.
pub fn matcher_dims(dims: (usize, usize), ppi: NativePpi) -> (usize, usize) {
    let w = (dims.0 as f64 * MATCHER_PPI / ppi.x).round().max(1.0) as usize;
    let h = (dims.1 as f64 * MATCHER_PPI / ppi.y).round().max(1.0) as usize;
    (w, h)
}

/// Grayscale fingerprint at matcher resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchReadyImage {
    pub image: Image,
    pub ppi: (f64, f64),
}

/// Raw RGB FTIR frame to a 500 ppi fingerprint with dark ridges on white:
/// grayscale, equalize, negate, frontalize, then box-downsample.
/// Equalization runs before the warp so interpolation cannot change the
/// histogram the equalizer sees.
pub fn process_ftir(
    raw: &Image,
    transform: &PerspectiveTransform,
    native_ppi: NativePpi,
) -> Result<MatchReadyImage, PipelineError> {
    if !(native_ppi.x >= MATCHER_PPI && native_ppi.y >= MATCHER_PPI) {
        return Err(PipelineError::BadResolution {
            ppi_x: native_ppi.x,
            ppi_y: native_ppi.y,
        });
    }
    let gray = to_grayscale(raw)?;
    let equalized = hist_equalize(&gray)?;
    let negated = negate(&equalized)?;
    let frontal = apply_perspective(transform, &negated, raw.width(), raw.height())?;
    let (tw, th) = matcher_dims(raw.dims(), native_ppi);
    let image = downsample_box(&frontal, tw, th)?;
    Ok(MatchReadyImage {
        image,
        ppi: (MATCHER_PPI, MATCHER_PPI),
    })
}
