//! 8-bit raster images and PNG input/output.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("pixel buffer has {actual} bytes, expected {expected} for {width}x{height}x{channels}")]
    BadLength {
        width: usize,
        height: usize,
        channels: usize,
        expected: usize,
        actual: usize,
    },
    #[error("image has zero area ({width}x{height})")]
    ZeroArea { width: usize, height: usize },
    #[error("expected a {expected:?} image, got {actual:?}")]
    WrongColorSpace {
        expected: ColorSpace,
        actual: ColorSpace,
    },
    #[error("channel {channel} out of range for a {channels}-channel image")]
    NoSuchChannel { channel: usize, channels: usize },
    #[error("unsupported PNG layout in {path}: {detail}")]
    UnsupportedPng { path: String, detail: String },
    #[error("PNG decode failed for {path}: {source}")]
    Decode {
        path: String,
        #[source]
        source: png::DecodingError,
    },
    #[error("PNG encode failed for {path}: {source}")]
    Encode {
        path: String,
        #[source]
        source: png::EncodingError,
    },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Color space tag carried by every [`Image`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorSpace {
    Rgb,
    Hsv,
    Gray,
}

impl ColorSpace {
    pub fn channels(self) -> usize {
        match self {
            ColorSpace::Gray => 1,
            ColorSpace::Rgb | ColorSpace::Hsv => 3,
        }
    }
}

/// Row-major, interleaved 8-bit image. The channel count follows from the
/// color space, so `data.len() == width * height * channels` always holds.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Image {
    width: usize,
    height: usize,
    color_space: ColorSpace,
    data: Vec<u8>,
}

impl Image {
    pub fn new(
        width: usize,
        height: usize,
        color_space: ColorSpace,
        data: Vec<u8>,
    ) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::ZeroArea { width, height });
        }
        let channels = color_space.channels();
        let expected = width * height * channels;
        if data.len() != expected {
            return Err(ImageError::BadLength {
                width,
                height,
                channels,
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            color_space,
            data,
        })
    }

    /// Image with every sample set to `value`.
    pub fn filled(
        width: usize,
        height: usize,
        color_space: ColorSpace,
        value: u8,
    ) -> Result<Self, ImageError> {
        let len = width * height * color_space.channels();
        Self::new(width, height, color_space, vec![value; len])
    }

    /// Single-channel image built from a per-pixel function.
    pub fn gray_from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> u8,
    ) -> Result<Self, ImageError> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, ColorSpace::Gray, data)
    }

    /// Three-channel image built from a per-pixel function.
    pub fn rgb_from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Result<Self, ImageError> {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, ColorSpace::Rgb, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn channels(&self) -> usize {
        self.color_space.channels()
    }

    pub fn color_space(&self) -> ColorSpace {
        self.color_space
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels() + c]
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let ch = self.channels();
        let i = (y * self.width + x) * ch;
        &self.data[i..i + ch]
    }

    pub(crate) fn require(&self, expected: ColorSpace) -> Result<(), ImageError> {
        if self.color_space != expected {
            return Err(ImageError::WrongColorSpace {
                expected,
                actual: self.color_space,
            });
        }
        Ok(())
    }

    /// Retags the samples without touching them. Channel counts must agree.
    pub fn with_color_space(self, color_space: ColorSpace) -> Result<Self, ImageError> {
        Self::new(self.width, self.height, color_space, self.data)
    }

    /// Extracts one channel as a grayscale plane.
    pub fn channel(&self, c: usize) -> Result<Image, ImageError> {
        let ch = self.channels();
        if c >= ch {
            return Err(ImageError::NoSuchChannel {
                channel: c,
                channels: ch,
            });
        }
        let data = self.data.iter().skip(c).step_by(ch).copied().collect();
        Image::new(self.width, self.height, ColorSpace::Gray, data)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    /// RGBA buffer for canvas display; HSV is shown as its raw channels.
    pub fn to_rgba(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.width * self.height * 4);
        match self.channels() {
            1 => {
                for &v in &self.data {
                    out.extend_from_slice(&[v, v, v, 255]);
                }
            }
            _ => {
                for px in self.data.chunks_exact(3) {
                    out.extend_from_slice(&[px[0], px[1], px[2], 255]);
                }
            }
        }
        out
    }
}

/// Pixels per metre for a given ppi, as stored in a PNG `pHYs` chunk.
pub fn ppi_to_ppm(ppi: f64) -> u32 {
    (ppi / 0.0254).round() as u32
}

/// Writes an 8-bit gray or RGB PNG. HSV images are refused because PNG has
/// no way to tag them. `ppi` adds a `pHYs` chunk.
pub fn write_png(path: &Path, img: &Image, ppi: Option<(f64, f64)>) -> Result<(), ImageError> {
    let color = match img.color_space() {
        ColorSpace::Gray => png::ColorType::Grayscale,
        ColorSpace::Rgb => png::ColorType::Rgb,
        ColorSpace::Hsv => {
            return Err(ImageError::WrongColorSpace {
                expected: ColorSpace::Rgb,
                actual: ColorSpace::Hsv,
            })
        }
    };
    let name = path.display().to_string();
    let file = File::create(path).map_err(|source| ImageError::Io {
        path: name.clone(),
        source,
    })?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), img.width() as u32, img.height() as u32);
    encoder.set_color(color);
    encoder.set_depth(png::BitDepth::Eight);
    if let Some((px, py)) = ppi {
        encoder.set_pixel_dims(Some(png::PixelDimensions {
            xppu: ppi_to_ppm(px),
            yppu: ppi_to_ppm(py),
            unit: png::Unit::Meter,
        }));
    }
    let enc_err = |source| ImageError::Encode {
        path: name.clone(),
        source,
    };
    let mut writer = encoder.write_header().map_err(enc_err)?;
    writer.write_image_data(img.data()).map_err(enc_err)?;
    writer.finish().map_err(enc_err)?;
    Ok(())
}

/// Reads an 8-bit gray or RGB PNG together with its `pHYs` pixel density, if any.
pub fn read_png_with_density(path: &Path) -> Result<(Image, Option<(u32, u32)>), ImageError> {
    let name = path.display().to_string();
    let file = File::open(path).map_err(|source| ImageError::Io {
        path: name.clone(),
        source,
    })?;
    let decoder = png::Decoder::new(BufReader::new(file));
    let dec_err = |source| ImageError::Decode {
        path: name.clone(),
        source,
    };
    let mut reader = decoder.read_info().map_err(dec_err)?;
    let density = reader.info().pixel_dims.and_then(|d| match d.unit {
        png::Unit::Meter => Some((d.xppu, d.yppu)),
        png::Unit::Unspecified => None,
    });
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| ImageError::UnsupportedPng {
            path: name.clone(),
            detail: "image too large".into(),
        })?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(dec_err)?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(ImageError::UnsupportedPng {
            path: name,
            detail: format!("bit depth {:?}", info.bit_depth),
        });
    }
    let color_space = match info.color_type {
        png::ColorType::Grayscale => ColorSpace::Gray,
        png::ColorType::Rgb => ColorSpace::Rgb,
        other => {
            return Err(ImageError::UnsupportedPng {
                path: name,
                detail: format!("color type {other:?}"),
            })
        }
    };
    buf.truncate(info.buffer_size());
    let img = Image::new(info.width as usize, info.height as usize, color_space, buf)?;
    Ok((img, density))
}

pub fn read_png(path: &Path) -> Result<Image, ImageError> {
    read_png_with_density(path).map(|(img, _)| img)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_length_and_zero_area() {
        assert!(matches!(
            Image::new(2, 2, ColorSpace::Rgb, vec![0; 4]),
            Err(ImageError::BadLength { expected: 12, .. })
        ));
        assert!(matches!(
            Image::new(0, 3, ColorSpace::Gray, vec![]),
            Err(ImageError::ZeroArea { .. })
        ));
    }

    #[test]
    fn channel_extraction() {
        let img = Image::new(2, 1, ColorSpace::Rgb, vec![1, 2, 3, 4, 5, 6]).unwrap();
        assert_eq!(img.channel(1).unwrap().data(), &[2, 5]);
        assert!(img.channel(3).is_err());
    }

    #[test]
    fn png_round_trip_keeps_density() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.png");
        let img = Image::gray_from_fn(5, 3, |x, y| (x * 40 + y) as u8).unwrap();
        write_png(&path, &img, Some((500.0, 500.0))).unwrap();
        let (back, density) = read_png_with_density(&path).unwrap();
        assert_eq!(back, img);
        assert_eq!(density, Some((19685, 19685)));
    }

    #[test]
    fn hsv_cannot_be_written() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::filled(1, 1, ColorSpace::Hsv, 0).unwrap();
        assert!(write_png(&dir.path().join("h.png"), &img, None).is_err());
    }
}
