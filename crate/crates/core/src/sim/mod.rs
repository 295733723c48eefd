//! Synthetic dual-view reader output.
//!
//! A finger is an elliptical ridge phase field warped by a few seeded
//! low-frequency sinusoids. Ridges touch the platen where `cos(phase)` exceeds
//! a pressure-dependent level. The FTIR view shows contact pixels bright on a
//! dark background; the direct view shows the whole finger surface in its
//! own color with faint ridges. Transcendental functions go through `libm` so
//! pixels are identical on every platform.

mod dataset;
mod gate;
mod material;

pub use dataset::{
    generate_dataset, plan_dataset, read_manifest, DatasetConfig, DatasetManifest, Label, ManifestEntry,
    ManifestHeader, MaterialCount, PlannedSample, View, MANIFEST_FILE, MANIFEST_FORMAT_VERSION,
};
pub use gate::{capture_gate, top_decile_mean, GateConfig, GateDecision};
pub use material::{MaterialSpec, REPORT_ORDER};

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{CalibrationError, PerspectiveTransform};
use crate::image::{ColorSpace, Image, ImageError};
use crate::rng::{self, StreamRng};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("render dimensions must be positive, got {width}x{height}")]
    ZeroArea { width: usize, height: usize },
    #[error("pose {0}")]
    BadPose(String),
    #[error("invalid material: {0}")]
    BadMaterial(String),
    #[error("invalid dataset config: {0}")]
    BadConfig(String),
    #[error("{path} already exists; pass force to overwrite")]
    ManifestExists { path: String },
    #[error("manifest {path}: {detail}")]
    BadManifest { path: String, detail: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Identity and appearance of one finger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FingerSpec {
    pub subject_id: u32,
    pub finger_id: u32,
    /// Ridge cycles across the frame width.
    pub ridge_frequency: f64,
    pub ridge_orientation_field_seed: u64,
    pub skin_hue: u8,
    pub skin_saturation: u8,
    pub skin_value: u8,
}

impl FingerSpec {
    /// Skin tone is drawn per subject, the ridge pattern per finger.
    pub fn live(seed: u64, subject: u32, finger: u32) -> Self {
        let skin = rng::stream(seed, "subject", &[subject as u64]);
        let ridge = rng::stream(seed, "finger", &[subject as u64, finger as u64]);
        Self::draw(skin, ridge, subject, finger)
    }

    /// Donor finger of a spoof instance. The donor's skin is also the skin
    /// showing through a transparent spoof.
    pub fn spoof_donor(seed: u64, material: &str, instance: u32) -> Self {
        let key = rng::keyed_hash(seed, "material", material);
        let skin = rng::stream(seed, "spoof_skin", &[key, instance as u64]);
        let ridge = rng::stream(seed, "spoof_ridge", &[key, instance as u64]);
        Self::draw(skin, ridge, u32::MAX, instance)
    }

    fn draw(mut skin: StreamRng, mut ridge: StreamRng, subject_id: u32, finger_id: u32) -> Self {
        Self {
            subject_id,
            finger_id,
            ridge_frequency: ridge.random_range(27.0..33.0),
            ridge_orientation_field_seed: ridge.random(),
            skin_hue: skin.random_range(4..=22),
            skin_saturation: skin.random_range(70..=150),
            skin_value: skin.random_range(120..=225),
        }
    }
}

/// Placement of the finger on the platen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    /// Offset of the finger center as a fraction of frame width and height.
    pub dx: f64,
    pub dy: f64,
    pub rotation_deg: f64,
    /// 1 is nominal; higher flattens more ridge area onto the glass.
    pub pressure: f64,
}

impl Pose {
    pub const CENTERED: Pose = Pose {
        dx: 0.0,
        dy: 0.0,
        rotation_deg: 0.0,
        pressure: 1.0,
    };

    /// Translation within 10% of the frame, rotation within 30 degrees,
    /// pressure in [0.8, 1.2].
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        Self {
            dx: rng.random_range(-0.1..=0.1),
            dy: rng.random_range(-0.1..=0.1),
            rotation_deg: rng.random_range(-30.0..=30.0),
            pressure: rng.random_range(0.8..=1.2),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if ![self.dx, self.dy, self.rotation_deg, self.pressure].iter().all(|v| v.is_finite()) {
            return Err(SimError::BadPose("has non-finite fields".into()));
        }
        if self.dx.abs() > 0.25 || self.dy.abs() > 0.25 {
            return Err(SimError::BadPose(format!(
                "offset ({}, {}) would push over half the ridge area out of frame",
                self.dx, self.dy
            )));
        }
        if !(0.5..=1.5).contains(&self.pressure) {
            return Err(SimError::BadPose(format!("pressure {} outside [0.5, 1.5]", self.pressure)));
        }
        Ok(())
    }

    fn contact_level(&self) -> f64 {
        0.25 - 0.6 * (self.pressure - 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderOptions {
    /// Width x height of each view.
    pub ftir_dims: (usize, usize),
    pub direct_dims: (usize, usize),
    /// Share of the object's own color in FTIR ridge light; the rest is the
    /// white LED.
    pub ftir_color_coupling: f64,
    /// FTIR ridge brightness of a fully reflective finger.
    pub ridge_level: f64,
    /// Frontal-to-raw keystone applied to the FTIR view.
    pub keystone: Option<PerspectiveTransform>,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            ftir_dims: (290, 216),
            direct_dims: (290, 192),
            ftir_color_coupling: 0.3,
            ridge_level: 215.0,
            keystone: None,
        }
    }
}

impl RenderOptions {
    pub fn validate(&self) -> Result<(), SimError> {
        for (w, h) in [self.ftir_dims, self.direct_dims] {
            if w == 0 || h == 0 {
                return Err(SimError::ZeroArea { width: w, height: h });
            }
        }
        if !(0.0..=1.0).contains(&self.ftir_color_coupling) {
            return Err(SimError::BadConfig(format!(
                "ftir_color_coupling {} outside [0, 1]",
                self.ftir_color_coupling
            )));
        }
        if !(0.0..=255.0).contains(&self.ridge_level) {
            return Err(SimError::BadConfig(format!("ridge_level {} outside [0, 255]", self.ridge_level)));
        }
        Ok(())
    }
}

/// Contact class of an FTIR pixel.
pub const MASK_BACKGROUND: u8 = 0;
pub const MASK_VALLEY: u8 = 1;
pub const MASK_RIDGE: u8 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedViews {
    pub ftir: Image,
    pub direct: Image,
    /// Per FTIR pixel: background, valley inside the finger, or ridge contact.
    pub ftir_mask: Vec<u8>,
}

struct RidgeField {
    frequency: f64,
    core: (f64, f64),
    eccentricity: f64,
    // (kx, ky, amplitude, phase)
    terms: [(f64, f64, f64, f64); 4],
}

impl RidgeField {
    fn new(finger: &FingerSpec) -> Self {
        let mut r = rng::stream(finger.ridge_orientation_field_seed, "ridge_field", &[]);
        let mut terms = [(0.0, 0.0, 0.0, 0.0); 4];
        for t in &mut terms {
            let angle = r.random_range(0.0..TAU);
            let k = r.random_range(0.8..2.5);
            *t = (
                k * libm::cos(angle),
                k * libm::sin(angle),
                r.random_range(1.0..4.5),
                r.random_range(0.0..TAU),
            );
        }
        Self {
            frequency: finger.ridge_frequency,
            core: (r.random_range(-0.08..0.08), r.random_range(-0.1..0.1)),
            eccentricity: r.random_range(0.75..0.95),
            terms,
        }
    }

    fn phase(&self, u: f64, v: f64) -> f64 {
        let du = (u - self.core.0) / self.eccentricity;
        let dv = v - self.core.1;
        let mut p = TAU * self.frequency * libm::sqrt(du * du + dv * dv);
        for &(kx, ky, a, ph) in &self.terms {
            p += a * libm::sin(TAU * (kx * u + ky * v) + ph);
        }
        p
    }
}

/// Maps view pixels to finger coordinates, in units of frame width.
struct Placement {
    cos: f64,
    sin: f64,
    cx: f64,
    cy: f64,
    scale: f64,
}

impl Placement {
    fn new(pose: &Pose, dims: (usize, usize)) -> Self {
        let theta = pose.rotation_deg.to_radians();
        let (w, h) = (dims.0 as f64, dims.1 as f64);
        Self {
            cos: libm::cos(theta),
            sin: libm::sin(theta),
            cx: w / 2.0 + pose.dx * w,
            cy: h / 2.0 + pose.dy * h,
            scale: w,
        }
    }

    fn finger_coords(&self, x: f64, y: f64) -> (f64, f64) {
        let qx = (x + 0.5 - self.cx) / self.scale;
        let qy = (y + 0.5 - self.cy) / self.scale;
        (self.cos * qx + self.sin * qy, -self.sin * qx + self.cos * qy)
    }
}

/// Color of the presented surface as (hue on 0..255, saturation, value).
fn object_hsv(finger: &FingerSpec, material: Option<&MaterialSpec>) -> (f64, f64, f64) {
    let (h, s, v) = (
        finger.skin_hue as f64,
        finger.skin_saturation as f64,
        finger.skin_value as f64,
    );
    match material {
        None => (h, s, v),
        Some(m) => {
            let t = m.transparency;
            let hue = (h + m.effective_hue_shift()).rem_euclid(255.0);
            let sat = (s * m.saturation_scale).clamp(0.0, 255.0) * (1.0 - t) + s * t;
            let val = v * (0.2 + 0.8 * m.albedo);
            (hue, sat, val)
        }
    }
}

/// Hexcone HSV (all channels on 0..255) to RGB on 0..255.
fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let s = (s / 255.0).clamp(0.0, 1.0);
    let v = v.clamp(0.0, 255.0);
    let hp = h.rem_euclid(255.0) / 255.0 * 6.0;
    let sector = hp.floor();
    let f = hp - sector;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector as u32 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

#[inline]
fn to_u8(v: f64) -> u8 {
    v.round_ties_even().clamp(0.0, 255.0) as u8
}

const FOOTPRINT_AXES: (f64, f64) = (0.30, 0.34);
const DIRECT_FOOTPRINT_SCALE: f64 = 1.12;
const FTIR_BACKGROUND: f64 = 4.0;
const DIRECT_BACKGROUND: [f64; 3] = [38.0, 38.0, 42.0];
const DIRECT_RIDGE_CONTRAST: f64 = 6.0;

fn inside_footprint(u: f64, v: f64, pose: &Pose, scale: f64) -> bool {
    let k = libm::sqrt(pose.pressure) * scale;
    let (a, b) = (FOOTPRINT_AXES.0 * k, FOOTPRINT_AXES.1 * k);
    (u / a) * (u / a) + (v / b) * (v / b) <= 1.0
}

/// Renders the FTIR and direct views of `finger` (covered by `material` if
/// given) under `pose`. `noise_seed` drives sensor noise only.
pub fn render_views(
    finger: &FingerSpec,
    material: Option<&MaterialSpec>,
    pose: &Pose,
    opts: &RenderOptions,
    noise_seed: u64,
) -> Result<RenderedViews, SimError> {
    opts.validate()?;
    pose.validate()?;
    if let Some(m) = material {
        m.validate().map_err(SimError::BadMaterial)?;
    }
    let field = RidgeField::new(finger);
    let (oh, os, ov) = object_hsv(finger, material);
    let object_rgb = hsv_to_rgb(oh, os, ov);
    let level = pose.contact_level();
    let (ftir, ftir_mask) = render_ftir(&field, material, pose, opts, object_rgb, level, noise_seed)?;
    let direct = render_direct(&field, pose, opts, (oh, os, ov), noise_seed)?;
    Ok(RenderedViews { ftir, direct, ftir_mask })
}

fn render_ftir(
    field: &RidgeField,
    material: Option<&MaterialSpec>,
    pose: &Pose,
    opts: &RenderOptions,
    object_rgb: [f64; 3],
    level: f64,
    noise_seed: u64,
) -> Result<(Image, Vec<u8>), SimError> {
    let (w, h) = opts.ftir_dims;
    let place = Placement::new(pose, opts.ftir_dims);
    let to_frontal = opts.keystone.map(|k| k.inverse()).transpose()?;
    let albedo = material.map_or(1.0, |m| m.albedo);
    let texture = material.map_or(0.0, |m| m.texture_noise_sigma);
    let k = opts.ftir_color_coupling;
    let ridge_rgb = object_rgb.map(|c| opts.ridge_level * albedo * ((1.0 - k) + k * c / 255.0));
    let mut noise = rng::stream(noise_seed, "ftir_noise", &[]);
    let mut data = Vec::with_capacity(w * h * 3);
    let mut mask = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (fx, fy) = match &to_frontal {
                Some(t) => t.map(x as f64, y as f64).unwrap_or((f64::INFINITY, f64::INFINITY)),
                None => (x as f64, y as f64),
            };
            let (u, v) = place.finger_coords(fx, fy);
            let class = if fx.is_finite() && inside_footprint(u, v, pose, 1.0) {
                let c = libm::cos(field.phase(u, v));
                if c > level {
                    let shade = 0.8 + 0.2 * (c - level) / (1.0 - level);
                    let grain = if texture > 0.0 { texture * rng::gaussian(&mut noise) } else { 0.0 };
                    for ch in ridge_rgb {
                        let jitter: f64 = noise.random_range(-3.0..3.0);
                        data.push(to_u8(ch * shade + grain + jitter));
                    }
                    mask.push(MASK_RIDGE);
                    continue;
                }
                MASK_VALLEY
            } else {
                MASK_BACKGROUND
            };
            for _ in 0..3 {
                let jitter: f64 = noise.random_range(0.0..4.0);
                data.push(to_u8(FTIR_BACKGROUND + jitter));
            }
            mask.push(class);
        }
    }
    Ok((Image::new(w, h, ColorSpace::Rgb, data)?, mask))
}

fn render_direct(
    field: &RidgeField,
    pose: &Pose,
    opts: &RenderOptions,
    object_hsv: (f64, f64, f64),
    noise_seed: u64,
) -> Result<Image, SimError> {
    let (w, h) = opts.direct_dims;
    let place = Placement::new(pose, opts.direct_dims);
    let (oh, os, ov) = object_hsv;
    let mut noise = rng::stream(noise_seed, "direct_noise", &[]);
    let mut data = Vec::with_capacity(w * h * 3);
    let k = libm::sqrt(pose.pressure) * DIRECT_FOOTPRINT_SCALE;
    let (a, b) = (FOOTPRINT_AXES.0 * k, FOOTPRINT_AXES.1 * k);
    for y in 0..h {
        for x in 0..w {
            let (u, v) = place.finger_coords(x as f64, y as f64);
            let r2 = (u / a) * (u / a) + (v / b) * (v / b);
            if r2 <= 1.0 {
                let ridge = DIRECT_RIDGE_CONTRAST * libm::cos(field.phase(u, v));
                let value = ov * (0.82 + 0.18 * (1.0 - r2)) + ridge;
                for c in hsv_to_rgb(oh, os, value) {
                    let jitter: f64 = noise.random_range(-2.0..2.0);
                    data.push(to_u8(c + jitter));
                }
            } else {
                for c in DIRECT_BACKGROUND {
                    let jitter: f64 = noise.random_range(-3.0..3.0);
                    data.push(to_u8(c + jitter));
                }
            }
        }
    }
    Ok(Image::new(w, h, ColorSpace::Rgb, data)?)
}
